use serde::{Deserialize, Serialize};

use crate::error::{KarError, Result};

/// Largest tolerated share of failed fits, in percent.
pub const FAILURE_LIMIT_PCT: u32 = 10;

/// One measurement: `metric` of `method` on `trial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: String,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
}

/// A fit or evaluation that failed; the trial is excluded for that method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub trial: usize,
    pub metric: String,
    pub message: String,
}

/// Median and quartiles of `log₁₀(value)` over successful trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub failures: usize,
}

/// Fitted curves of the first trial on the evaluation grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub x: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    /// Resolved configuration, echoed into the JSON output.
    pub config: serde_json::Value,
    /// Ordered trial-major, then by method order.
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
    pub curves: Curves,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

impl TrialReport {
    pub fn new(config: serde_json::Value) -> Self {
        TrialReport {
            config,
            records: Vec::new(),
            failures: Vec::new(),
            curves: Curves::default(),
        }
    }

    fn push_unique(out: &mut Vec<String>, item: &str) {
        if !out.iter().any(|s| s == item) {
            out.push(item.to_string());
        }
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.records {
            Self::push_unique(&mut out, &r.method);
        }
        for f in &self.failures {
            Self::push_unique(&mut out, &f.method);
        }
        out
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.records {
            Self::push_unique(&mut out, &r.metric);
        }
        for f in &self.failures {
            Self::push_unique(&mut out, &f.metric);
        }
        out
    }

    /// Successful values of `(method, metric)` in trial order.
    pub fn values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// Median of the raw values (not the log).
    pub fn median_of(&self, method: &str, metric: &str) -> Option<f64> {
        let v = self.values(method, metric);
        (!v.is_empty()).then(|| median(&v))
    }

    /// Summary per method (keyed `method/metric` when the report carries
    /// several metrics), in method order. Values that are not strictly
    /// positive are left out of the log-scale statistics.
    pub fn summary(&self) -> Vec<(String, Summary)> {
        let metrics = self.metrics();
        let mut out = Vec::new();
        for method in self.methods() {
            for metric in &metrics {
                let mut logs: Vec<f64> = self
                    .values(&method, metric)
                    .into_iter()
                    .filter(|v| *v > 0.0)
                    .map(f64::log10)
                    .collect();
                let failures = self
                    .failures
                    .iter()
                    .filter(|f| f.method == method && &f.metric == metric)
                    .count();
                if logs.is_empty() && failures == 0 {
                    continue;
                }
                logs.sort_by(f64::total_cmp);
                let stat = |p| if logs.is_empty() { f64::NAN } else { quantile_sorted(&logs, p) };
                let key = if metrics.len() == 1 {
                    method.clone()
                } else {
                    format!("{method}/{metric}")
                };
                out.push((
                    key,
                    Summary {
                        median: stat(0.5),
                        q1: stat(0.25),
                        q3: stat(0.75),
                        failures,
                    },
                ));
            }
        }
        out
    }

    /// Fails the campaign when more than [`FAILURE_LIMIT_PCT`] percent of the
    /// attempted fits failed.
    pub fn verdict(&self) -> Result<()> {
        let failed = self.failures.len();
        let attempted = failed + self.records.len();
        if failed * 100 > attempted * FAILURE_LIMIT_PCT as usize {
            return Err(KarError::CampaignFailed {
                failed,
                attempted,
                limit_pct: FAILURE_LIMIT_PCT,
            });
        }
        Ok(())
    }

    pub fn extend(&mut self, other: TrialReport) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
        self.curves.series.extend(other.curves.series);
        if self.curves.x.is_empty() {
            self.curves.x = other.curves.x;
        }
    }
}
