//! Config-driven sweeps: drift propagation, fairness attacks and
//! mitigation, with CSV/JSON reports.

mod config;
mod report;
mod run;

pub use config::{
    AttackConfig, DatasetConfig, ExperimentConfig, GeneratorConfig, MitigationSweep, TemplateConfig,
};
pub use report::{
    emit_report, read_fits, read_report, AuditEntry, BetaFit, ExperimentReport, ReportFormat, ReportRow,
};
pub use run::{
    beta_fits, recompute_spd_s, run_attack, run_generate, run_mitigation, run_propagation, RunOptions,
    ATTACK_SUCCESS_GAP,
};
