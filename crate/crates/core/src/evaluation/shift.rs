use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::campaign::{TrialConfig, SPLIT_STREAM};
use super::methods::{fit_method, FitParams, Method};
use super::report::{Failure, Record, TrialReport};
use crate::data_io::Dataset;
use crate::error::{KarError, Result};
use crate::kernel::{gram, gram_self, median_heuristic, KernelSpec, RidgeFactor};
use crate::sem_lab::{generate_conditional, GeneratorDesign};
use crate::split::derive_seed;

/// Ridge constant of the reference fit (scaled by the sample size).
pub const REFERENCE_RIDGE: f64 = 1e-3;

/// Default size of the conditional reference sample.
pub const REFERENCE_SIZE: usize = 4000;

/// Gaussian kernel ridge regression of `y` on `x`, used as the "truth" for
/// prediction errors under shift.
#[derive(Debug, Clone)]
pub struct ReferenceFit {
    inputs: DMatrix<f64>,
    dual: DVector<f64>,
    offset: f64,
    kernel: KernelSpec<f64>,
}

impl ReferenceFit {
    /// Median-heuristic bandwidth, `(K + n·λ·I)⁻¹(y − ȳ)` with `λ = 1e-3`.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let kernel = KernelSpec::gaussian(median_heuristic(data.x())?)?;
        let k = gram_self(&kernel, data.x())?;
        let n = data.len() as f64;
        let offset = data.y().mean();
        let centered = data.y().add_scalar(-offset);
        let dual = RidgeFactor::new(&k, n * REFERENCE_RIDGE)?.solve_vec(&centered);
        Ok(ReferenceFit {
            inputs: data.x().clone(),
            dual,
            offset,
            kernel,
        })
    }

    pub fn predict_many(&self, xs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let k = gram(&self.kernel, xs, &self.inputs)?;
        Ok((k * &self.dual).add_scalar(self.offset))
    }
}

/// Mean squared gap between a fitted model and the reference on `xs`.
fn prediction_error(
    model: &dyn crate::estimators::CausalModel<f64>,
    xs: &DMatrix<f64>,
    truth: &DVector<f64>,
) -> Result<f64> {
    let pred = model.predict_many(xs)?;
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(KarError::IllConditioned("non-finite prediction".into()));
    }
    Ok((pred - truth).norm_squared() / truth.len() as f64)
}

/// Training side of a shift experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Train on `z < threshold`, test on `z ≥ threshold`.
    TrainBelow,
    TrainAbove,
}

impl Orientation {
    pub fn metric(self) -> &'static str {
        match self {
            Orientation::TrainBelow => "pe_train_below",
            Orientation::TrainAbove => "pe_train_above",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Orientation::TrainBelow => 2,
            Orientation::TrainAbove => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftOptions {
    pub threshold: f64,
    pub reference_size: usize,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            threshold: 0.0,
            reference_size: REFERENCE_SIZE,
        }
    }
}

fn fit_all(
    methods: &[Method],
    params: &FitParams,
    train: &Dataset,
    test_x: &DMatrix<f64>,
    truth: &DVector<f64>,
    split_seed: u64,
    trial: usize,
    metric: &str,
    out: &mut TrialReport,
) {
    for &m in methods {
        let result = fit_method(m, train, params, split_seed)
            .and_then(|model| prediction_error(model.as_ref(), test_x, truth));
        match result {
            Ok(value) => out.records.push(Record {
                method: m.name().into(),
                trial,
                metric: metric.into(),
                value,
            }),
            Err(e) => out.failures.push(Failure {
                method: m.name().into(),
                trial,
                metric: metric.into(),
                message: e.to_string(),
            }),
        }
    }
}

/// Distribution-shift prediction error in both orientations.
///
/// Per orientation, the reference is fitted once on an independent sample
/// from the test-side conditional population. Trial `t` draws `N` samples
/// with seed `base_seed + t`, trains on one side of the threshold (splits
/// rescaled to its size) and scores on the other side's treatment values.
pub fn shift_eval(config: &TrialConfig, options: &ShiftOptions) -> Result<TrialReport> {
    config.validate()?;
    if options.reference_size < 2 {
        return Err(KarError::invalid("reference sample needs at least 2 points"));
    }
    let design = GeneratorDesign::from_tag(config.design);
    let thr = options.threshold;
    let orientations = [Orientation::TrainBelow, Orientation::TrainAbove];
    let references: Vec<ReferenceFit> = orientations
        .iter()
        .map(|o| {
            let seed = derive_seed(config.base_seed, o.stream() << 32);
            let test_side = match o {
                Orientation::TrainBelow => generate_conditional(&design, options.reference_size, seed, |z| z >= thr),
                Orientation::TrainAbove => generate_conditional(&design, options.reference_size, seed, |z| z < thr),
            }?;
            ReferenceFit::fit(&test_side)
        })
        .collect::<Result<_>>()?;

    let parts: Vec<Result<TrialReport>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut part = TrialReport::new(serde_json::Value::Null);
            let data = config.trial_data(t)?;
            let (below, above) = data.split_by_anchor(thr);
            let split_seed = derive_seed(config.data_seed(t), SPLIT_STREAM);
            for (o, reference) in orientations.iter().zip(&references) {
                let (train, test) = match o {
                    Orientation::TrainBelow => (&below, &above),
                    Orientation::TrainAbove => (&above, &below),
                };
                if train.is_empty() || test.is_empty() {
                    return Err(KarError::invalid(format!(
                        "threshold {thr} leaves an empty subpopulation in trial {t}"
                    )));
                }
                let params = config.fit_params().rescaled(train.len());
                let truth = reference.predict_many(test.x())?;
                fit_all(
                    &config.methods,
                    &params,
                    train,
                    test.x(),
                    &truth,
                    split_seed,
                    t,
                    o.metric(),
                    &mut part,
                );
            }
            Ok(part)
        })
        .collect();

    let mut value = serde_json::to_value(config).expect("config serializes");
    value["shift"] = serde_json::to_value(options).expect("options serialize");
    let mut report = TrialReport::new(value);
    for part in parts {
        report.extend(part?);
    }
    Ok(report)
}

/// Subpopulation protocol on an observational table: train on one group,
/// score on the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShiftConfig {
    pub train_group: String,
    /// Rows drawn (without replacement) per trial before splitting by group.
    pub subsample: usize,
    /// Reuse one subsample for every trial instead of redrawing.
    pub fixed_subsample: bool,
    pub methods: Vec<Method>,
    /// Stage proportions `(n₁, n₂, m)`, rescaled to the training group size.
    pub splits: [usize; 3],
    pub gamma: f64,
    pub alpha_const: f64,
    pub xi_const: f64,
    pub trials: usize,
    pub base_seed: u64,
}

/// The reference is a kernel ridge fit on every test-group row of `data`;
/// the prediction error is averaged over the subsample's test-group rows.
pub fn group_shift_eval(data: &Dataset, config: &GroupShiftConfig) -> Result<TrialReport> {
    if config.trials == 0 || config.methods.is_empty() || config.subsample < 2 {
        return Err(KarError::invalid("need ≥ 1 trial, ≥ 1 method and a subsample of ≥ 2"));
    }
    if config.splits.contains(&0) {
        return Err(KarError::invalid("every split proportion must be positive"));
    }
    let (_, test_all) = data.split_by_group(&config.train_group)?;
    if test_all.len() < 2 {
        return Err(KarError::invalid("test group has fewer than 2 rows"));
    }
    let reference = ReferenceFit::fit(&test_all)?;
    let size = config.subsample.min(data.len());
    let params = FitParams {
        splits: config.splits,
        gamma: config.gamma,
        alpha_const: config.alpha_const,
        xi_const: config.xi_const,
    };

    let parts: Vec<Result<TrialReport>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let draw_seed = if config.fixed_subsample {
                config.base_seed
            } else {
                config.base_seed.wrapping_add(t as u64)
            };
            let sub = data.subsample(size, draw_seed)?;
            let (train, test) = sub.split_by_group(&config.train_group)?;
            if train.len() < 3 || test.is_empty() {
                return Err(KarError::invalid(format!("trial {t}: a group is (nearly) empty in the subsample")));
            }
            let truth = reference.predict_many(test.x())?;
            let mut part = TrialReport::new(serde_json::Value::Null);
            let split_seed = derive_seed(config.base_seed.wrapping_add(t as u64), SPLIT_STREAM);
            fit_all(
                &config.methods,
                &params.rescaled(train.len()),
                &train,
                test.x(),
                &truth,
                split_seed,
                t,
                "pe",
                &mut part,
            );
            Ok(part)
        })
        .collect();
    let mut report = TrialReport::new(serde_json::to_value(config).expect("config serializes"));
    for part in parts {
        report.extend(part?);
    }
    Ok(report)
}
