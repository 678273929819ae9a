use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::loader::csv_io;
use crate::error::{KarError, Result};
use crate::evaluation::TrialReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// The JSON document: `{config, summary, curves, failures}`.
pub fn report_json(report: &TrialReport) -> Value {
    let summary: Map<String, Value> = report
        .summary()
        .into_iter()
        .map(|(key, s)| {
            (
                key,
                json!({"median": s.median, "q1": s.q1, "q3": s.q3, "failures": s.failures}),
            )
        })
        .collect();
    let curves: Vec<Value> = report
        .curves
        .x
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut point = Map::new();
            point.insert("x".into(), json!(x));
            for (label, ys) in &report.curves.series {
                point.insert(label.clone(), json!(ys[i]));
            }
            Value::Object(point)
        })
        .filter(|_| !report.curves.series.is_empty())
        .collect();
    json!({
        "config": report.config,
        "summary": summary,
        "curves": curves,
        "failures": report.failures,
    })
}

/// Writes the report; CSV rows carry 17 significant digits so values
/// re-parse exactly.
pub fn emit_report(report: &TrialReport, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
            w.write_record(["method", "trial", "metric", "value"])
                .map_err(|e| csv_io(path, e))?;
            for r in &report.records {
                let trial = r.trial.to_string();
                let value = format!("{:.16e}", r.value);
                w.write_record([r.method.as_str(), trial.as_str(), r.metric.as_str(), value.as_str()])
                    .map_err(|e| csv_io(path, e))?;
            }
            w.flush().map_err(|e| KarError::io(path, e))
        }
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(&report_json(report)).expect("report serializes");
            text.push('\n');
            fs::write(path, text).map_err(|e| KarError::io(path, e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{median, Record};

    fn sample() -> TrialReport {
        let mut r = TrialReport::new(json!({"n": 3}));
        for (t, (a, b)) in [(0.123456789012345678, 2.0 / 3.0), (1e-7, 5.5)].into_iter().enumerate() {
            r.records.push(Record { method: "KAR".into(), trial: t, metric: "mse".into(), value: a });
            r.records.push(Record { method: "OLS".into(), trial: t, metric: "mse".into(), value: b });
        }
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_report(&TrialReport::new(Value::Null), &p, ReportFormat::Csv).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "method,trial,metric,value\n");
    }

    #[test]
    fn csv_round_trip_matches_json_summary() {
        let dir = tempfile::tempdir().unwrap();
        let (pc, pj) = (dir.path().join("r.csv"), dir.path().join("s.json"));
        let r = sample();
        emit_report(&r, &pc, ReportFormat::Csv).unwrap();
        emit_report(&r, &pj, ReportFormat::Json).unwrap();
        let text = fs::read_to_string(&pc).unwrap();
        assert_eq!(text.lines().count(), 5);
        let mut reader = csv::Reader::from_path(&pc).unwrap();
        let rows: Vec<(String, f64)> = reader
            .records()
            .map(|rec| {
                let rec = rec.unwrap();
                (rec[0].to_string(), rec[3].parse().unwrap())
            })
            .collect();
        let parsed: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let original: Vec<f64> = r.records.iter().map(|r| r.value).collect();
        assert_eq!(parsed, original);
        let summary: Value = serde_json::from_str(&fs::read_to_string(&pj).unwrap()).unwrap();
        for m in ["KAR", "OLS"] {
            let logs: Vec<f64> = rows.iter().filter(|r| r.0 == m).map(|r| r.1.log10()).collect();
            assert_eq!(summary["summary"][m]["median"].as_f64().unwrap(), median(&logs));
        }
    }

    #[test]
    fn unwritable_path_reports_path() {
        let err = emit_report(&sample(), Path::new("/nonexistent/dir/r.json"), ReportFormat::Json).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/r.json"));
    }
}
