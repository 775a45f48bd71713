use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::Metrics;

use super::config::ExperimentConfig;
use super::train::EpochRecord;

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub repetition: usize,
    pub seed: u64,
    /// Test metrics of the selected snapshot; absent when the repetition failed.
    pub test: Option<Metrics>,
    pub selected_epoch: Option<usize>,
    pub steps: usize,
    pub trace: Vec<EpochRecord>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub dataset: String,
    pub config: ExperimentConfig,
    pub repetitions: Vec<RepetitionReport>,
    /// Mean over successful repetitions. `NaN` in any of them stays `NaN`.
    pub mean: Option<Metrics>,
    pub wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct Payload<'a> {
    label: &'a str,
    dataset: &'a str,
    repetitions: &'a [RepetitionReport],
    mean: &'a Option<Metrics>,
}

impl RunReport {
    /// Everything except timing, as JSON. Identical configs and seeds give identical bytes.
    pub fn metrics_payload(&self) -> String {
        serde_json::to_string(&Payload {
            label: &self.label,
            dataset: &self.dataset,
            repetitions: &self.repetitions,
            mean: &self.mean,
        })
        .expect("report serializes")
    }

    pub fn succeeded(&self) -> impl Iterator<Item = (&RepetitionReport, &Metrics)> {
        self.repetitions
            .iter()
            .filter_map(|r| r.test.as_ref().map(|m| (r, m)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-repetition rows followed by the mean row.
    pub fn table(&self) -> String {
        let mut out = table_header();
        for r in &self.repetitions {
            let name = format!("{} #{}", self.label, r.repetition);
            match (&r.test, &r.error) {
                (Some(m), _) => out.push_str(&table_row(&name, m)),
                (None, err) => {
                    let _ = writeln!(out, "{name:<24} failed: {}", err.as_deref().unwrap_or("unknown"));
                }
            }
        }
        if let Some(m) = &self.mean {
            out.push_str(&table_row(&format!("{} mean", self.label), m));
        }
        out
    }

    /// Writes `report.json` and `table.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(REPORT_FILE), self.to_json())?;
        fs::write(dir.join(TABLE_FILE), self.table())?;
        Ok(())
    }
}

pub fn table_header() -> String {
    format!("{:<24} {:>6} {:>6} {:>6} {:>6}\n", "model", "acc", "prec", "rec", "f1")
}

pub fn table_row(name: &str, m: &Metrics) -> String {
    let [a, p, r, f] = m.table_cells();
    format!("{name:<24} {a:>6} {p:>6} {r:>6} {f:>6}\n")
}

/// One mean row per report, grouped under a dataset heading.
pub fn merged_table(reports: &[RunReport]) -> String {
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (&a.dataset, &a.label).cmp(&(&b.dataset, &b.label)));
    let mut out = table_header();
    let mut current: Option<&str> = None;
    for r in sorted {
        if current != Some(r.dataset.as_str()) {
            let _ = writeln!(out, "[{}]", r.dataset);
            current = Some(&r.dataset);
        }
        match &r.mean {
            Some(m) => out.push_str(&table_row(&r.label, m)),
            None => {
                let _ = writeln!(out, "{:<24} no successful repetitions", r.label);
            }
        }
    }
    out
}
