#[allow(dead_code)]
mod index_table {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/index_table.rs"
    ));
}

#[allow(dead_code)]
mod reproduce_reference {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/reproduce_reference.rs"
    ));
}

#[allow(dead_code)]
mod m2_patterns {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/m2_patterns.rs"
    ));
}

#[allow(dead_code)]
mod oracle_agreement {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/oracle_agreement.rs"
    ));
}

#[allow(dead_code)]
mod indexability_sweep {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/indexability_sweep.rs"
    ));
}

#[allow(dead_code)]
mod stochastic_utility {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/stochastic_utility.rs"
    ));
}

#[allow(dead_code)]
mod baselines {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/baselines.rs"
    ));
}

#[allow(dead_code)]
mod config_run {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/config_run.rs"
    ));
}

#[test]
fn index_table_runs() {
    index_table::run_example().expect("index_table example should run");
}

#[test]
fn reproduce_reference_runs() {
    reproduce_reference::run_example().expect("reproduce_reference example should run");
}

#[test]
fn m2_patterns_runs() {
    m2_patterns::run_example().expect("m2_patterns example should run");
}

#[test]
fn oracle_agreement_runs() {
    oracle_agreement::run_example().expect("oracle_agreement example should run");
}

#[test]
fn indexability_sweep_runs() {
    indexability_sweep::run_example().expect("indexability_sweep example should run");
}

#[test]
fn stochastic_utility_runs() {
    stochastic_utility::run_example().expect("stochastic_utility example should run");
}

#[test]
fn baselines_runs() {
    baselines::run_example().expect("baselines example should run");
}

#[test]
fn config_run_runs() {
    config_run::run_example().expect("config_run example should run");
}
