use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KarError, Result};
use crate::estimators::CausalModel;
use crate::sem_lab::{true_do, GeneratorDesign};

/// Equispaced evaluation points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: 0.05,
            hi: 0.95,
            points: 100,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi;
        if !ordered || self.lo < 0.0 || self.hi > 1.0 {
            return Err(KarError::invalid(format!(
                "grid [{}, {}] must lie within [0, 1]",
                self.lo, self.hi
            )));
        }
        if self.points == 0 {
            return Err(KarError::invalid("grid needs at least one point"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }
}

/// Predictions on a 1-d grid; a non-finite prediction is an error.
pub fn predict_grid(model: &dyn CausalModel<f64>, grid: &[f64]) -> Result<Vec<f64>> {
    let xs = DMatrix::from_column_slice(grid.len(), 1, grid);
    let pred = model.predict_many(&xs)?;
    if let Some(i) = pred.iter().position(|v| !v.is_finite()) {
        return Err(KarError::IllConditioned(format!("non-finite prediction at x = {}", grid[i])));
    }
    Ok(pred.as_slice().to_vec())
}

/// Mean squared deviation from the design's do-response over the grid.
pub fn grid_mse(model: &dyn CausalModel<f64>, design: &GeneratorDesign, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(KarError::invalid("empty evaluation grid"));
    }
    let pred = predict_grid(model, grid)?;
    let sse: f64 = grid
        .iter()
        .zip(&pred)
        .map(|(&x, p)| (p - true_do(design, x)).powi(2))
        .sum();
    Ok(sse / grid.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fn1<F>(F);

    impl<F: Fn(f64) -> f64 + Send + Sync> CausalModel<f64> for Fn1<F> {
        fn x_dim(&self) -> usize {
            1
        }
        fn predict(&self, x: &[f64]) -> f64 {
            (self.0)(x[0])
        }
    }

    #[test]
    fn grid_values() {
        let g = GridSpec::default().values();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.05);
        assert!((g[99] - 0.95).abs() < 1e-15);
        assert!(GridSpec { lo: -0.1, hi: 0.5, points: 3 }.validate().is_err());
        assert!(GridSpec { lo: 0.1, hi: 0.5, points: 0 }.validate().is_err());
    }

    #[test]
    fn truth_has_zero_error() {
        let d = GeneratorDesign::variant();
        let g = GridSpec::default().values();
        let truth = Fn1(move |x| true_do(&GeneratorDesign::variant(), x));
        assert_eq!(grid_mse(&truth, &d, &g).unwrap(), 0.0);
    }

    #[test]
    fn zero_predictor_and_constant_shift() {
        let d = GeneratorDesign::main();
        let g = GridSpec::default().values();
        let direct: f64 = g
            .iter()
            .map(|&x| {
                let t = (16.0 * x - 8.0).abs().ln_1p() * (x - 0.5).signum() * if x == 0.5 { 0.0 } else { 1.0 };
                t * t
            })
            .sum::<f64>()
            / 100.0;
        let zero = grid_mse(&Fn1(|_| 0.0), &d, &g).unwrap();
        assert!((zero - direct).abs() < 1e-12);

        let base = |x: f64| 0.3 * x - 0.1;
        let m0 = grid_mse(&Fn1(base), &d, &g).unwrap();
        let c = 0.7;
        let m1 = grid_mse(&Fn1(move |x| base(x) + c), &d, &g).unwrap();
        let mean_resid = g.iter().map(|&x| base(x) - true_do(&d, x)).sum::<f64>() / 100.0;
        assert!((m1 - m0 - (c * c + 2.0 * c * mean_resid)).abs() < 1e-12);
    }

    #[test]
    fn nan_prediction_is_an_error() {
        let d = GeneratorDesign::main();
        assert!(grid_mse(&Fn1(|_| f64::NAN), &d, &[0.5]).is_err());
        assert!(grid_mse(&Fn1(|_| 0.0), &d, &[]).is_err());
    }
}
