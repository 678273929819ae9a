use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kernel_anchor::evaluation::{
    parse_methods, GroupShiftConfig, ShiftOptions, SweepOptions, TrialConfig, ALPHA_CONST_GRID,
    REFERENCE_SIZE,
};
use kernel_anchor::sem_lab::{DesignTag, IdentifiabilityCase, SemSpec};
use kernel_anchor::ColumnSchema;

use crate::run::{IdentifiabilityPlan, Plan, SpecSource};

#[derive(Debug, Parser)]
#[command(name = "kar", version, about = "Kernel anchor regression campaigns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Grid-MSE benchmark on a synthetic design, or the group-shift protocol on a CSV.
    Benchmark(BenchmarkArgs),
    /// KAR / KAR.2 over a list of γ with per-γ c_α selection.
    GammaSweep(SweepArgs),
    /// Prediction error when training and testing on opposite sides of an anchor threshold.
    Shift(ShiftArgs),
    /// Population bias of the anchor regression operator on linear SEMs.
    Identifiability(IdentifiabilityArgs),
    /// Re-run a campaign from its manifest.json.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Base seed; trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "main")]
    pub design: DesignTag,
    #[arg(long, default_value_t = 700)]
    pub n: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Comma-separated methods (KAR, KAR.2, KIV, KPA, KReg, AR, IV, PA, OLS).
    #[arg(long)]
    pub methods: Option<String>,
    /// Stage sizes n1,n2,m (N is their sum).
    #[arg(long)]
    pub splits: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// c_α in α = c_α·n^{-1/2}.
    #[arg(long)]
    pub alpha_const: Option<f64>,
    /// c_ξ in ξ = c_ξ·m^{-1/2}.
    #[arg(long)]
    pub xi_const: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, conflicts_with = "csv")]
    pub design: Option<DesignTag>,
    /// Observational CSV (requires --schema).
    #[arg(long, requires = "schema")]
    pub csv: Option<PathBuf>,
    /// JSON column schema for --csv.
    #[arg(long, requires = "csv")]
    pub schema: Option<PathBuf>,
    /// Training group value (overrides the schema's train_group).
    #[arg(long)]
    pub train_group: Option<String>,
    /// Rows drawn per trial from the CSV.
    #[arg(long, default_value_t = 1000)]
    pub subsample: usize,
    /// Draw the CSV subsample once instead of per trial.
    #[arg(long)]
    pub fixed_subsample: bool,
    #[command(flatten)]
    pub campaign: CampaignArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "kiv")]
    pub design: DesignTag,
    #[arg(long, default_value = "0,0.5,1,2,5,10,100")]
    pub gammas: String,
    /// Keep --alpha-const instead of selecting c_α per γ.
    #[arg(long)]
    pub fixed_alpha: bool,
    #[command(flatten)]
    pub campaign: CampaignArgs,
}

#[derive(Debug, Args)]
pub struct ShiftArgs {
    #[arg(long, default_value = "main")]
    pub design: DesignTag,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Size of the conditional sample behind the reference fit.
    #[arg(long, default_value_t = REFERENCE_SIZE)]
    pub reference_size: usize,
    #[command(flatten)]
    pub campaign: CampaignArgs,
}

#[derive(Debug, Args)]
pub struct IdentifiabilityArgs {
    /// thm3-i, thm3-ii, thm3-iii, thm3-iv or appendix-iv (default: all).
    #[arg(long, conflicts_with = "spec")]
    pub case: Vec<IdentifiabilityCase>,
    /// SemSpec JSON file to check instead of the built-in cases.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// γ values (default: the case's own; 0,1,2,100 for --spec).
    #[arg(long)]
    pub gammas: Option<String>,
    /// Random specs drawn per case.
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (default: the one recorded in the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(list: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} '{s}': {e}")))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        bail!("empty {what} list");
    }
    Ok(items)
}

fn parse_splits(list: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = parse_list(list, "split size")?;
    match v.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("--splits needs exactly three sizes n1,n2,m, got {}", v.len()),
    }
}

/// Applies campaign flags over a command's defaults.
fn trial_config(base: TrialConfig, args: &CampaignArgs) -> Result<TrialConfig> {
    let mut cfg = base;
    if let Some(m) = &args.methods {
        cfg.methods = parse_methods(m)?;
    }
    if let Some(s) = &args.splits {
        cfg.splits = parse_splits(s)?;
        cfg.n = cfg.splits.iter().sum();
    }
    cfg.gamma = args.gamma.unwrap_or(cfg.gamma);
    cfg.trials = args.trials.unwrap_or(cfg.trials);
    cfg.alpha_const = args.alpha_const.unwrap_or(cfg.alpha_const);
    cfg.xi_const = args.xi_const.unwrap_or(cfg.xi_const);
    cfg.base_seed = args.common.seed;
    cfg.validate()?;
    Ok(cfg)
}

pub type Resolved = (Plan, PathBuf, Option<usize>);

/// Materializes every default into a replayable plan.
pub fn resolve(command: Command) -> Result<Resolved> {
    match command {
        Command::Generate(a) => {
            if a.n == 0 {
                bail!("--n must be ≥ 1");
            }
            Ok((
                Plan::Generate {
                    design: a.design,
                    n: a.n,
                    seed: a.common.seed,
                },
                a.common.out,
                a.common.jobs,
            ))
        }
        Command::Benchmark(a) => {
            let common = &a.campaign.common;
            let (out, jobs) = (common.out.clone(), common.jobs);
            if let (Some(csv), Some(schema_path)) = (&a.csv, &a.schema) {
                let text = fs::read_to_string(schema_path)
                    .with_context(|| format!("reading schema {}", schema_path.display()))?;
                let schema = ColumnSchema::from_json(&text)?;
                schema.validate()?;
                let base = trial_config(TrialConfig::main_benchmark(), &a.campaign)?;
                let train_group = a
                    .train_group
                    .clone()
                    .or_else(|| schema.train_group.clone())
                    .context("real-data benchmark needs --train-group or a schema train_group")?;
                if schema.group.is_none() {
                    bail!("real-data benchmark needs a group column in the schema");
                }
                let config = GroupShiftConfig {
                    train_group,
                    subsample: a.subsample,
                    fixed_subsample: a.fixed_subsample,
                    methods: base.methods,
                    splits: base.splits,
                    gamma: base.gamma,
                    alpha_const: base.alpha_const,
                    xi_const: base.xi_const,
                    trials: base.trials,
                    base_seed: base.base_seed,
                };
                return Ok((
                    Plan::RealData {
                        csv: csv.clone(),
                        schema,
                        config,
                    },
                    out,
                    jobs,
                ));
            }
            let base = TrialConfig {
                design: a.design.unwrap_or(DesignTag::Main),
                ..TrialConfig::main_benchmark()
            };
            Ok((Plan::Benchmark(trial_config(base, &a.campaign)?), out, jobs))
        }
        Command::GammaSweep(a) => {
            let base = TrialConfig {
                design: a.design,
                ..TrialConfig::kiv_sweep()
            };
            let config = trial_config(base, &a.campaign)?;
            let gammas: Vec<f64> = parse_list(&a.gammas, "gamma")?;
            let options = SweepOptions {
                gammas,
                alpha_grid: (!a.fixed_alpha).then(|| ALPHA_CONST_GRID.to_vec()),
            };
            let common = &a.campaign.common;
            Ok((Plan::GammaSweep { config, options }, common.out.clone(), common.jobs))
        }
        Command::Shift(a) => {
            let base = TrialConfig {
                design: a.design,
                ..TrialConfig::main_benchmark()
            };
            let config = trial_config(base, &a.campaign)?;
            let options = ShiftOptions {
                threshold: a.threshold,
                reference_size: a.reference_size,
            };
            let common = &a.campaign.common;
            Ok((Plan::Shift { config, options }, common.out.clone(), common.jobs))
        }
        Command::Identifiability(a) => {
            let gammas = a.gammas.as_deref().map(|g| parse_list::<f64>(g, "gamma")).transpose()?;
            let source = match &a.spec {
                Some(path) => {
                    let text =
                        fs::read_to_string(path).with_context(|| format!("reading SemSpec {}", path.display()))?;
                    let spec = SemSpec::from_json(&text).with_context(|| format!("in {}", path.display()))?;
                    SpecSource::File {
                        path: path.clone(),
                        spec,
                    }
                }
                None if a.case.is_empty() => SpecSource::Cases(IdentifiabilityCase::ALL.to_vec()),
                None => SpecSource::Cases(a.case.clone()),
            };
            if a.replicates == 0 {
                bail!("--replicates must be ≥ 1");
            }
            Ok((
                Plan::Identifiability(IdentifiabilityPlan {
                    source,
                    gammas,
                    replicates: a.replicates,
                    seed: a.common.seed,
                }),
                a.common.out,
                a.common.jobs,
            ))
        }
        Command::Replay(_) => unreachable!("replay is handled by the caller"),
    }
}
