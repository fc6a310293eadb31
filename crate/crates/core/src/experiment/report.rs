use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (grid point, seed[, classifier]) measurement. Missing metrics are
/// empty cells and `flag` says why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub mode: String,
    pub generator: String,
    pub model: String,
    pub mitigation: String,
    pub k: usize,
    pub pi: f64,
    pub seed: u64,
    pub drift_prompt: Option<f64>,
    pub drift_generated: Option<f64>,
    pub prompt_target_prob: Option<f64>,
    pub target_prob: Option<f64>,
    /// `cell=rate` pairs joined by `;`.
    pub cell_rates: String,
    pub spd_s: Option<f64>,
    pub spd_s_std: Option<f64>,
    pub spd_d: Option<f64>,
    pub eo_d: Option<f64>,
    pub eod_d: Option<f64>,
    pub f1_r: Option<f64>,
    pub mdi_protected: Option<f64>,
    pub aligned_mass_target: Option<f64>,
    pub aligned_mass_other: Option<f64>,
    /// Mean examples removed per prompt.
    pub dropped: Option<f64>,
    pub adversarial_dropped: Option<f64>,
    /// Largest in-context |SPD| across the run's prompts.
    pub in_context_spd: Option<f64>,
    pub attack_success: Option<bool>,
    pub flag: String,
}

impl ReportRow {
    pub fn empty(experiment_id: &str, mode: &str, generator: &str, k: usize, pi: f64, seed: u64) -> Self {
        ReportRow {
            experiment_id: experiment_id.into(),
            mode: mode.into(),
            generator: generator.into(),
            model: String::new(),
            mitigation: "none".into(),
            k,
            pi,
            seed,
            drift_prompt: None,
            drift_generated: None,
            prompt_target_prob: None,
            target_prob: None,
            cell_rates: String::new(),
            spd_s: None,
            spd_s_std: None,
            spd_d: None,
            eo_d: None,
            eod_d: None,
            f1_r: None,
            mdi_protected: None,
            aligned_mass_target: None,
            aligned_mass_other: None,
            dropped: None,
            adversarial_dropped: None,
            in_context_spd: None,
            attack_success: None,
            flag: String::new(),
        }
    }

    pub fn add_flag(&mut self, msg: &str) {
        if !self.flag.is_empty() {
            self.flag.push_str("; ");
        }
        self.flag.push_str(msg);
    }

    fn order(&self, other: &Self) -> Ordering {
        self.experiment_id
            .cmp(&other.experiment_id)
            .then(self.k.cmp(&other.k))
            .then(self.pi.total_cmp(&other.pi))
            .then(self.seed.cmp(&other.seed))
            .then(self.mode.cmp(&other.mode))
            .then(self.mitigation.cmp(&other.mitigation))
            .then(self.model.cmp(&other.model))
    }
}

/// OLS of generated drift on prompt drift over the π grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub experiment_id: String,
    pub k: usize,
    /// Empty for the fit pooled over all seeds.
    pub seed: Option<u64>,
    pub beta: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Examples removed from one prompt by a mitigation strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub experiment_id: String,
    pub mitigation: String,
    pub k: usize,
    pub pi: f64,
    pub seed: u64,
    pub prompt: usize,
    pub removed: Vec<usize>,
    pub adversarial_removed: usize,
    pub flag: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub fits: Vec<BetaFit>,
    pub audit: Vec<AuditEntry>,
}

impl ExperimentReport {
    /// Sort rows by (experiment id, k, π, seed) with the remaining key
    /// columns as tie-breakers.
    pub fn sort(&mut self) {
        self.rows.sort_by(ReportRow::order);
        self.fits
            .sort_by(|a, b| a.experiment_id.cmp(&b.experiment_id).then(a.k.cmp(&b.k)).then(a.seed.cmp(&b.seed)));
        self.audit.sort_by(|a, b| {
            a.experiment_id
                .cmp(&b.experiment_id)
                .then(a.k.cmp(&b.k))
                .then(a.pi.total_cmp(&b.pi))
                .then(a.seed.cmp(&b.seed))
                .then(a.mitigation.cmp(&b.mitigation))
                .then(a.prompt.cmp(&b.prompt))
        });
    }

    pub fn merge(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.fits.extend(other.fits);
        self.audit.extend(other.audit);
        self.sort();
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

fn csv_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for it in items {
        w.serialize(it)?;
    }
    w.flush().map_err(|e| Error::io("<buffer>", e))?;
    Ok(w.into_inner().expect("flushed buffer"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Write `report.<ext>`, plus `fits.<ext>` and `audit.jsonl` when present.
/// Returns the written paths.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if report.is_empty() {
        return Err(Error::Empty("report has no rows".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut report = report.clone();
    report.sort();
    let mut written = Vec::new();
    let main = dir.join(format!("report.{}", format.extension()));
    match format {
        ReportFormat::Csv => write_file(&main, &csv_bytes(&report.rows)?)?,
        ReportFormat::Json => write_file(&main, serde_json::to_string_pretty(&report.rows)?.as_bytes())?,
    }
    written.push(main);
    if !report.fits.is_empty() {
        let path = dir.join(format!("fits.{}", format.extension()));
        match format {
            ReportFormat::Csv => write_file(&path, &csv_bytes(&report.fits)?)?,
            ReportFormat::Json => write_file(&path, serde_json::to_string_pretty(&report.fits)?.as_bytes())?,
        }
        written.push(path);
    }
    if !report.audit.is_empty() {
        let path = dir.join("audit.jsonl");
        let mut text = String::new();
        for a in &report.audit {
            text.push_str(&serde_json::to_string(a)?);
            text.push('\n');
        }
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Read the rows of a `report.csv` or `report.json`.
pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Read the β fits written next to a report.
pub fn read_fits(path: impl AsRef<Path>) -> Result<Vec<BetaFit>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
