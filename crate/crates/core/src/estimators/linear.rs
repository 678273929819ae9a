//! Linear baselines: OLS, 2SLS, partialling out and anchor regression.
//!
//! All methods include an intercept. Columns are centered first, which is
//! the same as carrying a constant column in both the regressors and the
//! anchor block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{mean, CausalModel};
use crate::data_io::Dataset;
use crate::error::{KarError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LinearMethod {
    Ols,
    Iv2sls,
    /// Partialling out, `γ = 0`.
    Pa,
    Anchor { gamma: f64 },
}

#[derive(Debug, Clone)]
pub struct LinearModel<T: Scalar> {
    intercept: T,
    coefficients: DVector<T>,
    method: LinearMethod,
}

impl<T: Scalar> LinearModel<T> {
    pub fn intercept(&self) -> T {
        self.intercept
    }

    pub fn coefficients(&self) -> &DVector<T> {
        &self.coefficients
    }

    pub fn method(&self) -> LinearMethod {
        self.method
    }
}

impl<T: Scalar> CausalModel<T> for LinearModel<T> {
    fn x_dim(&self) -> usize {
        self.coefficients.len()
    }

    fn predict(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.x_dim(), "query dimension mismatch");
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (b, v)| acc + *b * *v)
    }
}

fn centered<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let n = T::from_usize_lossy(m.nrows());
    let means = DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n);
    let out = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j]);
    (out, means)
}

fn factor<T: Scalar>(gram: DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    Cholesky::new(gram).ok_or_else(|| KarError::IllConditioned(format!("{what} is rank deficient")))
}

/// Projection of the columns of `a` onto the column span of `zc`.
fn project<T: Scalar>(zc: &DMatrix<T>, zz: &Cholesky<T, Dyn>, a: &DMatrix<T>) -> DMatrix<T> {
    zc * zz.solve(&(zc.transpose() * a))
}

pub fn fit_linear<T: Scalar>(data: &Dataset<T>, method: LinearMethod) -> Result<LinearModel<T>> {
    let n = data.len();
    let d = data.x_dim();
    if n <= d + 1 {
        return Err(KarError::invalid(format!(
            "linear fit needs more than {} samples, got {n}",
            d + 1
        )));
    }
    let (xc, x_means) = centered(data.x());
    let y_mean = mean(data.y());
    let yc = DMatrix::from_fn(n, 1, |i, _| data.y()[i] - y_mean);

    let gamma = match method {
        LinearMethod::Ols => 1.0,
        LinearMethod::Pa => 0.0,
        LinearMethod::Anchor { gamma } => gamma,
        LinearMethod::Iv2sls => f64::INFINITY,
    };
    if gamma.is_nan() || gamma < 0.0 {
        return Err(KarError::invalid(format!("gamma must be ≥ 0, got {gamma}")));
    }

    let beta = if gamma.is_infinite() {
        let (zc, _) = centered(data.z());
        if zc.ncols() < d {
            return Err(KarError::invalid(format!(
                "2SLS is under-identified: {} anchors for {d} regressors",
                zc.ncols()
            )));
        }
        let zz = factor(zc.transpose() * &zc, "anchor cross-product")?;
        let x_hat = project(&zc, &zz, &xc);
        let normal = factor(x_hat.transpose() * &x_hat, "first-stage fitted regressors")?;
        normal.solve(&(x_hat.transpose() * &yc))
    } else {
        let shift = T::c(gamma.sqrt() - 1.0);
        let (xt, yt) = if shift == T::zero() {
            (xc, yc)
        } else {
            let (zc, _) = centered(data.z());
            let zz = factor(zc.transpose() * &zc, "anchor cross-product")?;
            let px = project(&zc, &zz, &xc);
            let py = project(&zc, &zz, &yc);
            (xc + px * shift, yc + py * shift)
        };
        let normal = factor(xt.transpose() * &xt, "transformed regressors")?;
        normal.solve(&(xt.transpose() * &yt))
    };

    let coefficients = DVector::from_fn(d, |j, _| beta[(j, 0)]);
    if coefficients.iter().any(|v| !v.is_finite_value()) {
        return Err(KarError::IllConditioned("non-finite linear coefficients".into()));
    }
    let intercept = y_mean - coefficients.dot(&x_means);
    Ok(LinearModel {
        intercept,
        coefficients,
        method,
    })
}
