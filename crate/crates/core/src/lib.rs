//! Crawl scheduling for sources whose content loses value over time.
//!
//! Each source accumulates expected utility between crawls and a crawler with
//! a per-period budget decides which sources to visit. The crate provides:
//!
//! - [`model`]: source parameters and the per-period state dynamics.
//! - [`whittle`]: the closed-form Whittle index and its hitting time.
//! - [`dp_oracle`]: dynamic-programming solvers used to check the closed form.
//! - [`policy`]: Whittle, greedy, round-robin and static crawl schedules.
//! - [`sim`]: deterministic and Poisson-arrival simulation with traces.
//! - [`experiment`]: JSON experiment configs, trace/summary output and the
//!   verification harness behind the `whittle-crawl` binary.

pub mod dp_oracle;
pub mod experiment;
pub mod model;
pub mod policy;
pub mod sim;
pub mod whittle;

pub use model::{FleetParams, ParamError, SourceParams};
pub use whittle::{eta, lattice_index, whittle_index, HittingTime};
