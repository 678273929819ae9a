//! Kernels, bandwidth selection, Gram matrices and the shared ridge solve.
//!
//! Point sets are stored as `n × d` matrices, one point per row.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{KarError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-‖x − x′‖² / (2σ²))`
    Gaussian,
    /// `⟨x, x′⟩`
    Linear,
}

/// A kernel family together with its bandwidth.
///
/// The bandwidth is only meaningful for the Gaussian family; for the linear
/// kernel it is carried along but never read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T: Scalar> {
    pub family: KernelFamily,
    pub bandwidth: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn gaussian(bandwidth: T) -> Result<Self> {
        if !(bandwidth.is_finite_value() && bandwidth > T::zero()) {
            return Err(KarError::invalid(format!(
                "gaussian bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth,
        })
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: T::one(),
        }
    }

    #[inline]
    fn eval_unchecked<'a>(&self, a: impl Iterator<Item = &'a T>, b: impl Iterator<Item = &'a T>) -> T {
        match self.family {
            KernelFamily::Gaussian => {
                let mut sq = T::zero();
                for (u, v) in a.zip(b) {
                    let d = *u - *v;
                    sq += d * d;
                }
                let two = T::c(2.0);
                (-sq / (two * self.bandwidth * self.bandwidth)).exp()
            }
            KernelFamily::Linear => {
                let mut dot = T::zero();
                for (u, v) in a.zip(b) {
                    dot += *u * *v;
                }
                dot
            }
        }
    }
}

/// Evaluates `k(x, x′)` for two points of equal dimension.
pub fn kernel_eval<T: Scalar>(spec: &KernelSpec<T>, x: &[T], x_prime: &[T]) -> Result<T> {
    if x.len() != x_prime.len() {
        return Err(KarError::invalid(format!(
            "point dimensions differ: {} vs {}",
            x.len(),
            x_prime.len()
        )));
    }
    if spec.family == KernelFamily::Gaussian && !(spec.bandwidth > T::zero()) {
        return Err(KarError::invalid("gaussian bandwidth must be positive"));
    }
    Ok(spec.eval_unchecked(x.iter(), x_prime.iter()))
}

/// Median of the pairwise Euclidean distances over all unordered pairs.
///
/// For an even number of pairs the lower median is returned.
pub fn median_heuristic<T: Scalar>(points: &DMatrix<T>) -> Result<T> {
    let n = points.nrows();
    if n < 2 {
        return Err(KarError::invalid(format!(
            "median heuristic needs at least 2 points, got {n}"
        )));
    }
    let d = points.ncols();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = T::zero();
            for k in 0..d {
                let diff = points[(i, k)] - points[(j, k)];
                sq += diff * diff;
            }
            dists.push(sq);
        }
    }
    // squared distances order the same way as distances
    let mid = (dists.len() - 1) / 2;
    let (_, median_sq, _) = dists.select_nth_unstable_by(mid, |a, b| {
        a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
    });
    let median = median_sq.sqrt();
    if !(median > T::zero()) {
        return Err(KarError::DegenerateBandwidth);
    }
    Ok(median)
}

/// Gram matrix with entry `(i, j) = k(a_i, b_j)`.
pub fn gram<T: Scalar>(spec: &KernelSpec<T>, a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_dims(a, b)?;
    Ok(gram_unchecked(spec, a, b))
}

/// Symmetric Gram matrix of one point set; the upper triangle is mirrored so
/// the result is exactly symmetric.
pub fn gram_self<T: Scalar>(spec: &KernelSpec<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() == 0 {
        return Err(KarError::invalid("empty point set"));
    }
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_unchecked(a.row(i).iter(), a.row(j).iter());
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

pub(crate) fn gram_unchecked<T: Scalar>(spec: &KernelSpec<T>, a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (n, m) = (a.nrows(), b.nrows());
    let rows_a: Vec<Vec<T>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
    let rows_b: Vec<Vec<T>> = (0..m).map(|j| b.row(j).iter().copied().collect()).collect();
    DMatrix::from_fn(n, m, |i, j| spec.eval_unchecked(rows_a[i].iter(), rows_b[j].iter()))
}

/// Column `k(A, x)` for a single query point.
pub(crate) fn kernel_column<T: Scalar>(spec: &KernelSpec<T>, a: &DMatrix<T>, x: &[T]) -> DVector<T> {
    DVector::from_fn(a.nrows(), |i, _| spec.eval_unchecked(a.row(i).iter(), x.iter()))
}

fn check_dims<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(KarError::invalid("empty point set"));
    }
    if a.ncols() != b.ncols() {
        return Err(KarError::invalid(format!(
            "point dimensions differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

const JITTER_FACTOR: f64 = 1e-10;
const MAX_ESCALATIONS: usize = 3;

/// Cholesky factor of `K + s·I`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct RidgeFactor<T: Scalar> {
    chol: Cholesky<T, Dyn>,
    /// Diagonal shift actually applied (requested scale plus any jitter).
    pub applied_scale: T,
}

impl<T: Scalar> RidgeFactor<T> {
    /// Factors `K + scale·I`. If the factorization fails, the shift is
    /// increased by `1e-10·trace(K)/n`, then ×10, at most three times.
    pub fn new(k: &DMatrix<T>, scale: T) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n {
            return Err(KarError::invalid(format!(
                "ridge system must be square and nonempty, got {}×{}",
                k.nrows(),
                k.ncols()
            )));
        }
        if !(scale >= T::zero()) || !scale.is_finite_value() {
            return Err(KarError::invalid(format!("ridge scale must be ≥ 0, got {scale}")));
        }
        if k.iter().any(|v| !v.is_finite_value()) {
            return Err(KarError::invalid("ridge system contains non-finite entries"));
        }
        let max_abs = k.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let sym_tol = T::c(1e-8) * (max_abs + T::one());
        for j in 0..n {
            for i in 0..j {
                if (k[(i, j)] - k[(j, i)]).abs() > sym_tol {
                    return Err(KarError::invalid("ridge system is not symmetric"));
                }
            }
        }

        let base_jitter = T::c(JITTER_FACTOR) * k.trace().abs() / T::from_usize_lossy(n);
        let mut shift = scale;
        let mut jitter = base_jitter;
        for attempt in 0..=MAX_ESCALATIONS {
            if attempt > 0 {
                shift = scale + jitter;
                jitter *= T::c(10.0);
            }
            let mut shifted = k.clone();
            for i in 0..n {
                shifted[(i, i)] += shift;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self {
                    chol,
                    applied_scale: shift,
                });
            }
        }
        Err(KarError::IllConditioned(format!(
            "Cholesky of {n}×{n} ridge system failed after {MAX_ESCALATIONS} jitter escalations"
        )))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<T>) -> DVector<T> {
        self.chol.solve(rhs)
    }

    /// Explicit inverse of the shifted system.
    pub fn inverse(&self) -> DMatrix<T> {
        self.chol.inverse()
    }
}

/// Solves `(K + scale·I)·S = rhs` by Cholesky with jitter escalation.
pub fn ridge_solve<T: Scalar>(k: &DMatrix<T>, scale: T, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    if rhs.nrows() != k.nrows() {
        return Err(KarError::invalid(format!(
            "rhs has {} rows, system has {}",
            rhs.nrows(),
            k.nrows()
        )));
    }
    Ok(RidgeFactor::new(k, scale)?.solve(rhs))
}
