//! Evaluation harness: scripted session replay plus the rank-based
//! statistics used to compare workflows.

pub mod likert;
pub mod report;
pub mod script;
pub mod stats;

pub use likert::{read_csv, LikertError, LikertTable};
pub use report::{analyze, MeasureReport, PairReport, TestReport};
pub use script::{
    bundled_script, bundled_scripts, run_script, run_script_with, EmbeddedDriver, ReplayScript, ScriptAction,
    ScriptDriver, ScriptError, ScriptEvent, SessionOutcome, TIME_LIMIT_MS,
};
pub use stats::{
    effect_size_r, friedman, kendalls_w, p_from_z, wilcoxon_signed_rank, Alternative, FriedmanResult, StatsError,
    WilcoxonResult,
};
