use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kernel_anchor::data_io::{emit_report, load_csv, write_csv, ReportFormat};
use kernel_anchor::evaluation::{
    gamma_sweep, group_shift_eval, run_benchmark, shift_eval, GroupShiftConfig, Record, ShiftOptions, SweepOptions,
    TrialConfig, TrialReport,
};
use kernel_anchor::sem_lab::{bias_norms, generate, DesignTag, GeneratorDesign, IdentifiabilityCase, SemDims, SemSpec};
use kernel_anchor::ColumnSchema;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest;

/// Tolerance applied to a user-supplied SemSpec.
const SPEC_TOLERANCE: f64 = 1e-6;
const SPEC_GAMMAS: [f64; 4] = [0.0, 1.0, 2.0, 100.0];

/// A fully resolved invocation; replay runs exactly this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Plan {
    Generate {
        design: DesignTag,
        n: usize,
        seed: u64,
    },
    Benchmark(TrialConfig),
    RealData {
        csv: PathBuf,
        schema: ColumnSchema,
        config: GroupShiftConfig,
    },
    GammaSweep {
        config: TrialConfig,
        options: SweepOptions,
    },
    Shift {
        config: TrialConfig,
        options: ShiftOptions,
    },
    Identifiability(IdentifiabilityPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityPlan {
    pub source: SpecSource,
    pub gammas: Option<Vec<f64>>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecSource {
    Cases(Vec<IdentifiabilityCase>),
    File { path: PathBuf, spec: SemSpec },
}

impl Plan {
    pub fn name(&self) -> &'static str {
        match self {
            Plan::Generate { .. } => "generate",
            Plan::Benchmark(_) | Plan::RealData { .. } => "benchmark",
            Plan::GammaSweep { .. } => "gamma-sweep",
            Plan::Shift { .. } => "shift",
            Plan::Identifiability(_) => "identifiability",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Plan::Generate { seed, .. } => *seed,
            Plan::Benchmark(c) | Plan::GammaSweep { config: c, .. } | Plan::Shift { config: c, .. } => c.base_seed,
            Plan::RealData { config, .. } => config.base_seed,
            Plan::Identifiability(p) => p.seed,
        }
    }
}

pub enum Status {
    Completed,
    /// Outputs were written but the campaign did not meet its acceptance bar.
    Failed,
}

pub fn execute(plan: &Plan, out: &Path, jobs: Option<usize>, argv: &[String]) -> Result<Status> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().context("building the worker pool")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let status = pool.install(|| dispatch(plan, out))?;
    manifest::write(out, plan, argv)?;
    Ok(status)
}

fn dispatch(plan: &Plan, out: &Path) -> Result<Status> {
    match plan {
        Plan::Generate { design, n, seed } => {
            let data = generate(&GeneratorDesign::from_tag(*design), *n, *seed)?;
            let path = out.join("data.csv");
            write_csv(&data, &path)?;
            eprintln!("wrote {} rows to {}", data.len(), path.display());
            Ok(Status::Completed)
        }
        Plan::Benchmark(config) => finish(run_benchmark(config)?, out),
        Plan::RealData { csv, schema, config } => {
            let loaded = load_csv(csv, schema)?;
            if loaded.dropped() > 0 {
                eprintln!(
                    "dropped {} rows ({} missing, {} nonpositive under log)",
                    loaded.dropped(),
                    loaded.dropped_missing,
                    loaded.dropped_nonpositive
                );
            }
            finish(group_shift_eval(&loaded.data, config)?, out)
        }
        Plan::GammaSweep { config, options } => finish(gamma_sweep(config, options)?, out),
        Plan::Shift { config, options } => finish(shift_eval(config, options)?, out),
        Plan::Identifiability(p) => identifiability(p, out),
    }
}

fn write_outputs(report: &TrialReport, out: &Path) -> Result<()> {
    emit_report(report, &out.join("results.csv"), ReportFormat::Csv)?;
    emit_report(report, &out.join("summary.json"), ReportFormat::Json)?;
    Ok(())
}

fn finish(report: TrialReport, out: &Path) -> Result<Status> {
    write_outputs(&report, out)?;
    for (key, s) in report.summary() {
        eprintln!("{key:<24} median log10 {:>8.4}  [{:.4}, {:.4}]  failures {}", s.median, s.q1, s.q3, s.failures);
    }
    match report.verdict() {
        Ok(()) => Ok(Status::Completed),
        Err(e) => {
            eprintln!("campaign failed: {e}");
            Ok(Status::Failed)
        }
    }
}

fn gamma_metric(g: f64) -> String {
    format!("bias@{g}")
}

/// Prints `‖B_YX − H^γ‖_F` per case, spec and γ; an identified case passes
/// when every norm is below its tolerance.
fn identifiability(plan: &IdentifiabilityPlan, out: &Path) -> Result<Status> {
    let mut report = TrialReport::new(serde_json::to_value(plan)?);
    let mut ok = true;
    println!("{:<12} {:>4} {:>12} {:>12} {:>10} verdict", "case", "rep", "gamma", "norm", "tol");
    let row = |label: &str, rep: usize, g: f64, norm: f64, tol: f64, identified: bool, report: &mut TrialReport| {
        let pass = norm < tol;
        let verdict = match (identified, pass) {
            (true, true) => "pass",
            (true, false) => "FAIL",
            (false, true) => "identified (unexpected)",
            (false, false) => "not identified (expected)",
        };
        println!("{label:<12} {rep:>4} {g:>12.3e} {norm:>12.3e} {tol:>10.0e} {verdict}");
        report.records.push(Record {
            method: label.to_string(),
            trial: rep,
            metric: gamma_metric(g),
            value: norm,
        });
        !identified || pass
    };
    match &plan.source {
        SpecSource::File { path, spec } => {
            let gammas = plan.gammas.clone().unwrap_or_else(|| SPEC_GAMMAS.to_vec());
            let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("spec");
            for (&g, norm) in gammas.iter().zip(bias_norms(spec, &gammas)?) {
                row(label, 0, g, norm, SPEC_TOLERANCE, false, &mut report);
            }
        }
        SpecSource::Cases(cases) => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            for &case in cases {
                for rep in 0..plan.replicates {
                    let (spec, own) = case.construct(&mut rng, SemDims::default())?;
                    let gammas = plan.gammas.clone().unwrap_or(own);
                    for (&g, norm) in gammas.iter().zip(bias_norms(&spec, &gammas)?) {
                        ok &= row(case.name(), rep, g, norm, case.tolerance(), case.identified(), &mut report);
                    }
                }
            }
        }
    }
    emit_report(&report, &out.join("results.csv"), ReportFormat::Csv)?;
    if ok {
        Ok(Status::Completed)
    } else {
        eprintln!("an identified case exceeded its tolerance");
        Ok(Status::Failed)
    }
}
