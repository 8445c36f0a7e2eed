use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::environment::{metrics, MetricsRecord, Role};
use crate::generator::TemplateBank;
use crate::managers::ManagerKind;
use crate::rollout::{Episode, Transcript};

/// Mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub half_width: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let half_width = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        };
        Some(MetricSummary { mean, half_width })
    }
}

/// One manager against one opponent column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub manager: ManagerKind,
    pub column: String,
    pub populations: Vec<u8>,
    pub dialogs: usize,
    pub deals: usize,
    pub agreement: MetricSummary,
    pub utility: MetricSummary,
    /// Over deals only; absent when there were none.
    pub fairness: Option<MetricSummary>,
    pub length: MetricSummary,
    pub reward: MetricSummary,
    /// Transcript file, relative to the run directory.
    pub transcripts: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub agent_role: Role,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    manager: &'a str,
    column: &'a str,
    dialogs: usize,
    deals: usize,
    ag: f64,
    ag_hw: f64,
    ut: f64,
    ut_hw: f64,
    fa: Option<f64>,
    fa_hw: Option<f64>,
    len: f64,
    len_hw: f64,
    re: f64,
    re_hw: f64,
}

pub fn aggregate(
    manager: ManagerKind,
    column: &str,
    populations: &[u8],
    records: &[MetricsRecord],
    transcripts: &str,
) -> ReportRow {
    let of = |f: &dyn Fn(&MetricsRecord) -> f64| {
        let values: Vec<f64> = records.iter().map(f).collect();
        MetricSummary::of(&values).unwrap_or(MetricSummary {
            mean: 0.0,
            half_width: 0.0,
        })
    };
    let fairness: Vec<f64> = records.iter().filter_map(|r| r.fairness).collect();
    ReportRow {
        manager,
        column: column.to_string(),
        populations: populations.to_vec(),
        dialogs: records.len(),
        deals: records.iter().filter(|r| r.agreement == 1).count(),
        agreement: of(&|r| r.agreement as f64),
        utility: of(&|r| r.utility()),
        fairness: MetricSummary::of(&fairness),
        length: of(&|r| r.length as f64),
        reward: of(&|r| r.reward()),
        transcripts: transcripts.to_string(),
    }
}

impl EvaluationReport {
    pub fn row(&self, manager: ManagerKind, column: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.manager == manager && r.column == column)
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            writer.serialize(CsvRow {
                manager: r.manager.label(),
                column: &r.column,
                dialogs: r.dialogs,
                deals: r.deals,
                ag: r.agreement.mean,
                ag_hw: r.agreement.half_width,
                ut: r.utility.mean,
                ut_hw: r.utility.half_width,
                fa: r.fairness.map(|f| f.mean),
                fa_hw: r.fairness.map(|f| f.half_width),
                len: r.length.mean,
                len_hw: r.length.half_width,
                re: r.reward.mean,
                re_hw: r.reward.half_width,
            })?;
        }
        let bytes = writer.into_inner().map_err(|e| HarnessError::Verify(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `reports/evaluation.json` and `reports/evaluation.csv`.
    pub fn write(&self, run_dir: &Path) -> Result<(), HarnessError> {
        super::write_json(&run_dir.join("reports/evaluation.json"), self)?;
        super::write_file(&run_dir.join("reports/evaluation.csv"), self.to_csv()?)
    }

    pub fn load(run_dir: &Path) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&super::read_file(&run_dir.join("reports/evaluation.json"))?)?)
    }
}

/// One JSON transcript per line.
pub fn write_transcripts(path: &Path, episodes: &[Episode]) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    for (i, ep) in episodes.iter().enumerate() {
        serde_json::to_writer(&mut out, &Transcript::from_episode(i as u64, ep))?;
        out.write_all(b"\n").expect("writing to memory");
    }
    super::write_file(path, out)
}

pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Replays every transcript of a run, recomputes outcomes, metrics and
/// aggregates, and checks them against the stored JSON and CSV reports.
pub fn verify_report(run_dir: &Path, bank: &TemplateBank) -> Result<EvaluationReport, HarnessError> {
    let report = EvaluationReport::load(run_dir)?;
    for row in &report.rows {
        let transcripts = read_transcripts(&run_dir.join(&row.transcripts))?;
        let mut records = Vec::with_capacity(transcripts.len());
        for t in &transcripts {
            let episode = t.to_episode(bank)?;
            let replayed = episode
                .state
                .outcome
                .ok_or_else(|| HarnessError::Verify(format!("{}: dialog {} never ended", row.transcripts, t.episode)))?;
            if replayed != t.outcome {
                return Err(HarnessError::Verify(format!(
                    "{}: dialog {} replays to a different outcome",
                    row.transcripts, t.episode
                )));
            }
            records.push(metrics(&replayed, &episode.state.scenario, episode.agent));
        }
        let recomputed = aggregate(row.manager, &row.column, &row.populations, &records, &row.transcripts);
        if &recomputed != row {
            return Err(HarnessError::Verify(format!(
                "{} / {}: stored {:?}, recomputed {:?}",
                row.manager.label(),
                row.column,
                row,
                recomputed
            )));
        }
    }
    let csv = super::read_file(&run_dir.join("reports/evaluation.csv"))?;
    if csv != report.to_csv()? {
        return Err(HarnessError::Verify("evaluation.csv does not match evaluation.json".into()));
    }
    Ok(report)
}
