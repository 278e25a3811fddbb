//! Scenario files, the run pipeline and report output.

mod bundled;
mod config;
mod plot;
mod report;
mod runner;

pub use bundled::{bundled_names, bundled_scenario, bundled_scenarios};
pub use config::{
    CanonicalProbes, GsOverrides, OperatorDescription, Overrides, ProbeSetConfig, Scalar,
    ScenarioConfig, SeedVector, Sequence, SumTerm,
};
pub use plot::emit_plot_data;
pub use report::{
    ChainSummary, ClaimedFunctional, InvarianceSummary, ReportBody, RunMeta, RunReport, ToolInfo,
};
pub use runner::{
    load_config, load_config_dir, read_report, run_batch, run_scenario, write_atomic, write_run,
    BatchIndex, IndexEntry, ScenarioStatus, INDEX_FILE, LADDER_FILE, META_FILE, REPORT_FILE,
};
