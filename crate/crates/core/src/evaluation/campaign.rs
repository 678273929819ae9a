use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{grid_mse, predict_grid, GridSpec};
use super::methods::{fit_method, FitParams, Method};
use super::report::{median, Curves, Failure, Record, TrialReport};
use crate::data_io::Dataset;
use crate::error::{KarError, Result};
use crate::sem_lab::{generate, DesignTag, GeneratorDesign};
use crate::split::derive_seed;

/// Stream id for split seeds derived from a trial's data seed.
pub(crate) const SPLIT_STREAM: u64 = 1;

/// Candidate `c_α` values for the per-γ regularizer selection.
pub const ALPHA_CONST_GRID: [f64; 8] = [0.01, 0.05, 0.1, 0.5, 0.8, 1.0, 2.0, 3.0];

/// A seeded campaign on one of the synthetic designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub design: DesignTag,
    pub n: usize,
    /// `(n₁, n₂, m)`; two-stage methods merge the first two.
    pub splits: [usize; 3],
    pub methods: Vec<Method>,
    pub gamma: f64,
    pub alpha_const: f64,
    pub xi_const: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub grid: GridSpec,
}

impl TrialConfig {
    /// Main benchmark: `N = 700`, splits 250/250/200, `γ = 2`, constants 1.5.
    pub fn main_benchmark() -> Self {
        TrialConfig {
            design: DesignTag::Main,
            n: 700,
            splits: [250, 250, 200],
            methods: Method::ALL.to_vec(),
            gamma: 2.0,
            alpha_const: 1.5,
            xi_const: 1.5,
            trials: 50,
            base_seed: 0,
            grid: GridSpec::default(),
        }
    }

    /// γ-sweep setting: `N = 1000`, splits 200/200/600, `ξ = m^{-1/2}`.
    pub fn kiv_sweep() -> Self {
        TrialConfig {
            design: DesignTag::Kiv,
            n: 1000,
            splits: [200, 200, 600],
            methods: vec![Method::Kar, Method::Kar2, Method::Kiv],
            xi_const: 1.0,
            ..Self::main_benchmark()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.splits.iter().sum::<usize>() != self.n {
            return Err(KarError::invalid(format!(
                "splits {:?} do not sum to N = {}",
                self.splits, self.n
            )));
        }
        if self.splits.contains(&0) {
            return Err(KarError::invalid("every split must be non-empty"));
        }
        if self.trials == 0 {
            return Err(KarError::invalid("trials must be ≥ 1"));
        }
        if self.methods.is_empty() {
            return Err(KarError::invalid("no methods selected"));
        }
        if !(self.alpha_const > 0.0 && self.xi_const > 0.0) {
            return Err(KarError::invalid("regularizer constants must be positive"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(KarError::invalid(format!("gamma must be finite and ≥ 0, got {}", self.gamma)));
        }
        self.grid.validate()
    }

    pub fn fit_params(&self) -> FitParams {
        FitParams {
            splits: self.splits,
            gamma: self.gamma,
            alpha_const: self.alpha_const,
            xi_const: self.xi_const,
        }
    }

    pub fn data_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    pub fn trial_data(&self, trial: usize) -> Result<Dataset> {
        generate(&GeneratorDesign::from_tag(self.design), self.n, self.data_seed(trial))
    }
}

/// One fit job inside a trial: label, method and the parameters to use.
#[derive(Debug, Clone)]
pub(crate) struct Job {
    pub label: String,
    pub method: Method,
    pub params: FitParams,
}

pub(crate) struct TrialOutput {
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
    pub curves: Vec<(String, Vec<f64>)>,
}

fn run_trial(config: &TrialConfig, jobs: &[Job], trial: usize, grid: &[f64], keep_curves: bool) -> TrialOutput {
    let design = GeneratorDesign::from_tag(config.design);
    let mut out = TrialOutput {
        records: Vec::new(),
        failures: Vec::new(),
        curves: Vec::new(),
    };
    let fail = |label: &str, msg: String| Failure {
        method: label.to_string(),
        trial,
        metric: "mse".into(),
        message: msg,
    };
    let data = match config.trial_data(trial) {
        Ok(d) => d,
        Err(e) => {
            out.failures = jobs.iter().map(|j| fail(&j.label, e.to_string())).collect();
            return out;
        }
    };
    let split_seed = derive_seed(config.data_seed(trial), SPLIT_STREAM);
    for job in jobs {
        let result = fit_method(job.method, &data, &job.params, split_seed).and_then(|model| {
            let mse = grid_mse(model.as_ref(), &design, grid)?;
            let curve = if keep_curves { Some(predict_grid(model.as_ref(), grid)?) } else { None };
            Ok((mse, curve))
        });
        match result {
            Ok((mse, curve)) => {
                out.records.push(Record {
                    method: job.label.clone(),
                    trial,
                    metric: "mse".into(),
                    value: mse,
                });
                out.curves.extend(curve.map(|c| (job.label.clone(), c)));
            }
            Err(e) => out.failures.push(fail(&job.label, e.to_string())),
        }
    }
    out
}

/// Runs `jobs` over every trial (concurrently, merged in trial order).
pub(crate) fn run_jobs(config: &TrialConfig, jobs: &[Job]) -> TrialReport {
    let grid = config.grid.values();
    let outputs: Vec<TrialOutput> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, jobs, t, &grid, t == 0))
        .collect();
    let mut report = TrialReport::new(serde_json::to_value(config).expect("config serializes"));
    report.curves = Curves {
        x: grid,
        series: Vec::new(),
    };
    for out in outputs {
        report.records.extend(out.records);
        report.failures.extend(out.failures);
        report.curves.series.extend(out.curves);
    }
    report
}

/// Grid-MSE benchmark: trial `t` draws data with seed `base_seed + t` and
/// fits every method on it. Failed fits are recorded and excluded; check
/// [`TrialReport::verdict`] for the campaign-level threshold.
pub fn run_benchmark(config: &TrialConfig) -> Result<TrialReport> {
    config.validate()?;
    let params = config.fit_params();
    let jobs: Vec<Job> = config
        .methods
        .iter()
        .map(|&m| Job {
            label: m.name().to_string(),
            method: m,
            params,
        })
        .collect();
    Ok(run_jobs(config, &jobs))
}

/// Options for [`gamma_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub gammas: Vec<f64>,
    /// `c_α` candidates; `None` keeps the configured constant.
    pub alpha_grid: Option<Vec<f64>>,
}

impl SweepOptions {
    pub fn with_selection(gammas: Vec<f64>) -> Self {
        SweepOptions {
            gammas,
            alpha_grid: Some(ALPHA_CONST_GRID.to_vec()),
        }
    }
}

/// Label of a γ-dependent method inside a sweep.
pub fn sweep_label(method: Method, gamma: f64) -> String {
    format!("{}@{gamma}", method.name())
}

/// Runs `jobs` for each `c_α` candidate and keeps the one with the smallest
/// median MSE (ties go to the earlier candidate).
fn select_alpha(config: &TrialConfig, job: &Job, grid: &[f64]) -> (f64, TrialReport) {
    let mut best: Option<(f64, f64, TrialReport)> = None;
    for &c in grid {
        let candidate = Job {
            params: FitParams {
                alpha_const: c,
                ..job.params
            },
            ..job.clone()
        };
        let report = run_jobs(config, std::slice::from_ref(&candidate));
        let values = report.values(&job.label, "mse");
        let score = if values.is_empty() { f64::INFINITY } else { median(&values) };
        if best.as_ref().is_none_or(|(_, s, _)| score < *s) {
            best = Some((c, score, report));
        }
    }
    let (c, _, report) = best.expect("non-empty alpha grid");
    (c, report)
}

/// γ-sweep: every γ-dependent method of `config.methods` is run at each γ
/// (labelled `METHOD@γ`); other methods run once. With an `alpha_grid`, the
/// projection constant `c_α` is selected per (method, γ) by median MSE.
pub fn gamma_sweep(config: &TrialConfig, options: &SweepOptions) -> Result<TrialReport> {
    config.validate()?;
    if options.gammas.is_empty() {
        return Err(KarError::invalid("γ list is empty"));
    }
    for &g in &options.gammas {
        TrialConfig { gamma: g, ..config.clone() }.validate()?;
    }
    if options.alpha_grid.as_ref().is_some_and(|g| g.is_empty() || g.iter().any(|c| *c <= 0.0)) {
        return Err(KarError::invalid("c_α candidates must be positive and non-empty"));
    }
    let mut jobs = Vec::new();
    for &m in &config.methods {
        if m.uses_gamma() {
            for &g in &options.gammas {
                jobs.push(Job {
                    label: sweep_label(m, g),
                    method: m,
                    params: FitParams {
                        gamma: g,
                        ..config.fit_params()
                    },
                });
            }
        } else {
            jobs.push(Job {
                label: m.name().to_string(),
                method: m,
                params: config.fit_params(),
            });
        }
    }

    let mut value = serde_json::to_value(config).expect("config serializes");
    value["gammas"] = serde_json::json!(options.gammas);
    let mut report = TrialReport::new(value);
    let mut selected = serde_json::Map::new();
    for job in &jobs {
        let part = match &options.alpha_grid {
            Some(grid) if job.method.uses_alpha() => {
                let (c, part) = select_alpha(config, job, grid);
                selected.insert(job.label.clone(), serde_json::json!(c));
                part
            }
            _ => run_jobs(config, std::slice::from_ref(job)),
        };
        report.extend(part);
    }
    if !selected.is_empty() {
        report.config["selected_alpha_const"] = serde_json::Value::Object(selected);
    }
    // regroup trial-major so records read like a single benchmark
    report.records.sort_by_key(|r| r.trial);
    report.failures.sort_by_key(|f| f.trial);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> TrialConfig {
        TrialConfig {
            n: 120,
            splits: [40, 40, 40],
            methods,
            trials: 3,
            base_seed: 5,
            ..TrialConfig::main_benchmark()
        }
    }

    #[test]
    fn kreg_equals_kar_at_gamma_one() {
        let cfg = TrialConfig {
            gamma: 1.0,
            trials: 1,
            ..small(vec![Method::Kreg, Method::Kar])
        };
        let r = run_benchmark(&cfg).unwrap();
        let (a, b) = (r.values("KReg", "mse"), r.values("KAR", "mse"));
        assert_eq!(a.len(), 1);
        assert!((a[0] - b[0]).abs() < 1e-10);
    }

    #[test]
    fn deterministic_and_ordered() {
        let cfg = small(Method::ALL.to_vec());
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len() + a.failures.len(), 27);
        assert!(a.records.windows(2).all(|w| w[0].trial <= w[1].trial));
        assert!(a.records.iter().all(|r| r.value.is_finite() && r.value >= 0.0));
        assert_eq!(a.curves.series.len(), 9);
        a.verdict().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(vec![Method::Kar]);
        cfg.splits = [40, 40, 41];
        assert!(run_benchmark(&cfg).is_err());
        let cfg = TrialConfig { trials: 0, ..small(vec![Method::Kar]) };
        assert!(run_benchmark(&cfg).is_err());
        let cfg = small(vec![Method::Kar]);
        let opts = SweepOptions { gammas: vec![], alpha_grid: None };
        assert!(gamma_sweep(&cfg, &opts).is_err());
    }

    #[test]
    fn single_gamma_sweep_matches_benchmark() {
        let cfg = TrialConfig { gamma: 1.0, ..small(vec![Method::Kar, Method::Kar2]) };
        let bench = run_benchmark(&cfg).unwrap();
        let sweep = gamma_sweep(&cfg, &SweepOptions { gammas: vec![1.0], alpha_grid: None }).unwrap();
        for m in [Method::Kar, Method::Kar2] {
            assert_eq!(bench.values(m.name(), "mse"), sweep.values(&sweep_label(m, 1.0), "mse"));
        }
    }

    #[test]
    fn selection_picks_best_candidate() {
        let cfg = small(vec![Method::Kar]);
        let opts = SweepOptions {
            gammas: vec![2.0],
            alpha_grid: Some(vec![0.1, 1.0]),
        };
        let sweep = gamma_sweep(&cfg, &opts).unwrap();
        let chosen = sweep.config["selected_alpha_const"]["KAR@2"].as_f64().unwrap();
        let med = |c: f64| {
            let r = run_benchmark(&TrialConfig { alpha_const: c, ..cfg.clone() }).unwrap();
            median(&r.values("KAR", "mse"))
        };
        let (m01, m1) = (med(0.1), med(1.0));
        assert_eq!(chosen, if m1 < m01 { 1.0 } else { 0.1 });
        assert_eq!(median(&sweep.values("KAR@2", "mse")), m01.min(m1));
    }
}
