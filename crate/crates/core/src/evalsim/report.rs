//! Report rows in the experiment-results table layout.
//!
//! The same CSV layout is read back as a calibration table by the planner.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;

pub const REPORT_COLUMNS: [&str; 9] = [
    "experiment_version",
    "recall",
    "precision",
    "f1",
    "hallucination_rate",
    "incongruent_response_rate",
    "mean_cost",
    "p50_latency_ms",
    "answered_fraction",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_version: String,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub hallucination_rate: f64,
    pub incongruent_response_rate: f64,
    pub mean_cost: Option<f64>,
    pub p50_latency_ms: Option<f64>,
    pub answered_fraction: Option<f64>,
}

impl ReportRow {
    pub fn new(
        experiment_version: impl Into<String>,
        m: &MetricsReport,
        mean_cost: Option<f64>,
        p50_latency_ms: Option<f64>,
    ) -> Self {
        Self {
            experiment_version: experiment_version.into(),
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
            hallucination_rate: m.hallucination_rate,
            incongruent_response_rate: m.incongruent_response_rate,
            mean_cost,
            p50_latency_ms,
            answered_fraction: Some(m.answered_fraction),
        }
    }
}

/// Identifies the configuration and seed that produced an output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Stamped<'a> {
    #[serde(flatten)]
    row: &'a ReportRow,
    config_hash: &'a str,
    seed: u64,
}

/// Writes rows under the report header, plus `config_hash`/`seed` columns
/// when provenance is given.
pub fn write_report_csv(
    rows: &[ReportRow],
    provenance: Option<&Provenance>,
    out: impl Write,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let extra: &[&str] = if provenance.is_some() {
        &["config_hash", "seed"]
    } else {
        &[]
    };
    w.write_record(REPORT_COLUMNS.iter().chain(extra))?;
    for row in rows {
        w.write_record(record_fields(row, provenance))?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_fields(row: &ReportRow, p: Option<&Provenance>) -> Vec<String> {
    let mut f = vec![
        row.experiment_version.clone(),
        row.recall.to_string(),
        row.precision.to_string(),
        row.f1.to_string(),
        row.hallucination_rate.to_string(),
        row.incongruent_response_rate.to_string(),
        opt(row.mean_cost),
        opt(row.p50_latency_ms),
        opt(row.answered_fraction),
    ];
    if let Some(p) = p {
        f.push(p.config_hash.clone());
        f.push(p.seed.to_string());
    }
    f
}

/// Reads report rows; columns beyond the report layout are ignored.
pub fn read_report_csv(input: impl Read) -> csv::Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    r.deserialize().collect()
}

/// JSON form of rows, with provenance, for `--format json`.
pub fn report_json(rows: &[ReportRow], provenance: Option<&Provenance>) -> serde_json::Value {
    let rows: Vec<_> = rows
        .iter()
        .map(|row| match provenance {
            Some(p) => serde_json::to_value(Stamped {
                row,
                config_hash: &p.config_hash,
                seed: p.seed,
            }),
            None => serde_json::to_value(row),
        })
        .collect::<Result<_, _>>()
        .expect("report rows serialise");
    serde_json::json!({ "rows": rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str) -> ReportRow {
        ReportRow {
            experiment_version: name.into(),
            recall: 0.64,
            precision: 0.656,
            f1: 0.648,
            hallucination_rate: 0.239,
            incongruent_response_rate: 0.015,
            mean_cost: Some(1.0),
            p50_latency_ms: None,
            answered_fraction: Some(0.9),
        }
    }

    #[test]
    fn header_and_round_trip() {
        let mut buf = Vec::new();
        write_report_csv(&[row("a"), row("b,c")], None, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "experiment_version,recall,precision,f1,hallucination_rate,incongruent_response_rate,mean_cost,p50_latency_ms,answered_fraction\n"
        ));
        assert_eq!(
            read_report_csv(buf.as_slice()).unwrap(),
            vec![row("a"), row("b,c")]
        );
    }

    #[test]
    fn provenance_columns_are_ignored_on_read() {
        let p = Provenance {
            config_hash: "abc".into(),
            seed: 7,
        };
        let mut buf = Vec::new();
        write_report_csv(&[row("a")], Some(&p), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",config_hash,seed"));
        assert!(text.contains(",abc,7"));
        assert_eq!(read_report_csv(buf.as_slice()).unwrap(), vec![row("a")]);
        assert_eq!(report_json(&[row("a")], Some(&p))["rows"][0]["seed"], 7);
    }
}
