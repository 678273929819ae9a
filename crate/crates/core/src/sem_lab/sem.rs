//! Linear (identity-feature) instantiation of the structural model
//!
//! ```text
//! C    = B_CZ·φ(Z)                        + ε_C
//! ψ(X) = B_XZ·φ(Z) + B_XC·C               + ε_X
//! Y    = B_YZ·φ(Z) + B_YC·C + B_YX·ψ(X)   + ε_Y
//! ```
//!
//! with `φ(Z) ~ N(0, Σ_Z)` and independent noises. Only the strictly lower
//! blocks exist, so the system is acyclic by construction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{KarError, Result};

/// Operator blocks and noise covariances; serialized as nested row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    #[serde(with = "rows")]
    pub b_cz: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_xz: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_xc: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_yz: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_yc: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_yx: DMatrix<f64>,
    #[serde(with = "rows")]
    pub sigma_z: DMatrix<f64>,
    #[serde(with = "rows")]
    pub sigma_c: DMatrix<f64>,
    #[serde(with = "rows")]
    pub sigma_x: DMatrix<f64>,
    #[serde(with = "rows")]
    pub sigma_y: DMatrix<f64>,
}

/// Generated SEM samples with the latent confounder kept alongside.
#[derive(Debug, Clone)]
pub struct SemSample {
    pub data: Dataset,
    pub latent: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub z: usize,
    pub c: usize,
    pub x: usize,
    pub y: usize,
}

fn shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(KarError::invalid(format!(
            "{name} is {}×{}, expected {rows}×{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(KarError::invalid(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let tol = 1e-12 * (1.0 + m.amax());
    if (m - m.transpose()).amax() > tol {
        return Err(KarError::invalid(format!("{name} is not symmetric")));
    }
    Ok(())
}

impl SemSpec {
    /// Checks conformance of every block; `Σ_Z, Σ_C, Σ_X` must be SPD and
    /// `Σ_Y` PSD (a zero outcome noise is allowed).
    pub(crate) fn dims(&self) -> Result<Dims> {
        let d = Dims {
            z: self.b_cz.ncols(),
            c: self.b_cz.nrows(),
            x: self.b_xz.nrows(),
            y: self.b_yx.nrows(),
        };
        if d.z == 0 || d.c == 0 || d.x == 0 || d.y == 0 {
            return Err(KarError::invalid("every SEM block needs positive dimensions"));
        }
        shape("b_cz", &self.b_cz, d.c, d.z)?;
        shape("b_xz", &self.b_xz, d.x, d.z)?;
        shape("b_xc", &self.b_xc, d.x, d.c)?;
        shape("b_yz", &self.b_yz, d.y, d.z)?;
        shape("b_yc", &self.b_yc, d.y, d.c)?;
        shape("b_yx", &self.b_yx, d.y, d.x)?;
        shape("sigma_z", &self.sigma_z, d.z, d.z)?;
        shape("sigma_c", &self.sigma_c, d.c, d.c)?;
        shape("sigma_x", &self.sigma_x, d.x, d.x)?;
        shape("sigma_y", &self.sigma_y, d.y, d.y)?;
        for (name, m) in [
            ("sigma_z", &self.sigma_z),
            ("sigma_c", &self.sigma_c),
            ("sigma_x", &self.sigma_x),
            ("sigma_y", &self.sigma_y),
        ] {
            symmetric(name, m)?;
        }
        for (name, m) in [("sigma_z", &self.sigma_z), ("sigma_c", &self.sigma_c), ("sigma_x", &self.sigma_x)] {
            if Cholesky::new(m.clone()).is_none() {
                return Err(KarError::invalid(format!("{name} is not positive definite")));
            }
        }
        let min_eig = self.sigma_y.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * (1.0 + self.sigma_y.amax()) {
            return Err(KarError::invalid("sigma_y is not positive semidefinite"));
        }
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().map(|_| ())
    }

    /// `E_X = B_XZ + B_XC·B_CZ`: the reduced-form map from `φ(Z)` to `ψ(X)`.
    pub fn anchor_to_treatment(&self) -> DMatrix<f64> {
        &self.b_xz + &self.b_xc * &self.b_cz
    }

    /// `E_Y = B_YZ + B_YC·B_CZ + B_YX·E_X`.
    pub fn anchor_to_outcome(&self) -> DMatrix<f64> {
        &self.b_yz + &self.b_yc * &self.b_cz + &self.b_yx * self.anchor_to_treatment()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SemSpec = serde_json::from_str(text).map_err(|e| KarError::Parse {
            what: "SEM specification",
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrices serialize")
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn noise(rng: &mut ChaCha8Rng, root: &DMatrix<f64>) -> DVector<f64> {
    let e = DVector::from_fn(root.ncols(), |_, _| rng.sample(StandardNormal));
    root * e
}

/// Forward simulation of the structural equations.
///
/// The outcome must be scalar; `x` and `z` carry the feature vectors.
pub fn generate_sem(spec: &SemSpec, n: usize, seed: u64) -> Result<SemSample> {
    let d = spec.dims()?;
    if d.y != 1 {
        return Err(KarError::invalid(format!("generate_sem needs a scalar outcome, got {}", d.y)));
    }
    if n == 0 {
        return Err(KarError::invalid("sample size must be ≥ 1"));
    }
    let roots = [
        psd_sqrt(&spec.sigma_z),
        psd_sqrt(&spec.sigma_c),
        psd_sqrt(&spec.sigma_x),
        psd_sqrt(&spec.sigma_y),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, d.x);
    let mut z = DMatrix::zeros(n, d.z);
    let mut c = DMatrix::zeros(n, d.c);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let zi = noise(&mut rng, &roots[0]);
        let ci = &spec.b_cz * &zi + noise(&mut rng, &roots[1]);
        let xi = &spec.b_xz * &zi + &spec.b_xc * &ci + noise(&mut rng, &roots[2]);
        let yi = &spec.b_yz * &zi + &spec.b_yc * &ci + &spec.b_yx * &xi + noise(&mut rng, &roots[3]);
        x.row_mut(i).copy_from(&xi.transpose());
        z.row_mut(i).copy_from(&zi.transpose());
        c.row_mut(i).copy_from(&ci.transpose());
        y[i] = yi[0];
    }
    Ok(SemSample {
        data: Dataset::new(x, y, z)?,
        latent: c,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(KarError::invalid(format!("gamma must be finite and ≥ 0, got {gamma}")));
    }
    Ok(())
}

/// `E[ψ_γ ⊗ ψ_γ] = B_XC Σ_C B_CX + Σ_X + γ·E_X Σ_Z E_Xᵀ`.
fn transformed_input_cov(spec: &SemSpec, gamma: f64) -> DMatrix<f64> {
    let ex = spec.anchor_to_treatment();
    &spec.b_xc * &spec.sigma_c * spec.b_xc.transpose() + &spec.sigma_x + &ex * &spec.sigma_z * ex.transpose() * gamma
}

fn right_solve(numerator: &DMatrix<f64>, denominator: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(denominator)
        .ok_or_else(|| KarError::IllConditioned("transformed input covariance is singular".into()))?;
    // H·D = N  ⇔  D·Hᵀ = Nᵀ (D symmetric)
    Ok(chol.solve(&numerator.transpose()).transpose())
}

/// Population anchor-regression operator
/// `H^γ = E[Y_γ ψ_γ(X)ᵀ]·(E[ψ_γ ψ_γᵀ])⁻¹` in closed form.
pub fn population_h_gamma(spec: &SemSpec, gamma: f64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_gamma(gamma)?;
    let ex = spec.anchor_to_treatment();
    let ey = spec.anchor_to_outcome();
    let cross = (&spec.b_yc + &spec.b_yx * &spec.b_xc) * &spec.sigma_c * spec.b_xc.transpose()
        + &spec.b_yx * &spec.sigma_x
        + ey * &spec.sigma_z * ex.transpose() * gamma;
    right_solve(&cross, transformed_input_cov(spec, gamma))
}

/// `(Σ_YX^⊥, Σ_YX^∥)`: residual and anchor-explained covariance between `Y`
/// and `ψ(X)` net of the causal path.
pub fn covariance_split(spec: &SemSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let ex = spec.anchor_to_treatment();
    let perp = &spec.b_yc * &spec.sigma_c * spec.b_xc.transpose();
    let par = (&spec.b_yz + &spec.b_yc * &spec.b_cz) * &spec.sigma_z * ex.transpose();
    (perp, par)
}

/// `H^γ − B_YX = (Σ^⊥ + γ·Σ^∥)·(E[ψ_γ ψ_γᵀ])⁻¹`, computed without forming `H^γ`.
pub fn bias_operator(spec: &SemSpec, gamma: f64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_gamma(gamma)?;
    let (perp, par) = covariance_split(spec);
    right_solve(&(perp + par * gamma), transformed_input_cov(spec, gamma))
}

mod rows {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows have unequal lengths"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_linear, CausalModel, LinearMethod};
    use crate::sem_lab::cases::{random_spec, SemDims};

    fn scalar_spec(vals: [f64; 10]) -> SemSpec {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        SemSpec {
            b_cz: s(vals[0]),
            b_xz: s(vals[1]),
            b_xc: s(vals[2]),
            b_yz: s(vals[3]),
            b_yc: s(vals[4]),
            b_yx: s(vals[5]),
            sigma_z: s(vals[6]),
            sigma_c: s(vals[7]),
            sigma_x: s(vals[8]),
            sigma_y: s(vals[9]),
        }
    }

    #[test]
    fn json_round_trip_and_errors() {
        let spec = scalar_spec([0.5, 1.0, 0.7, -0.2, 0.9, 2.0, 1.0, 1.0, 0.5, 0.1]);
        assert_eq!(SemSpec::from_json(&spec.to_json()).unwrap(), spec);
        let err = SemSpec::from_json("{\"b_cz\": [[1.0]], ").unwrap_err();
        assert!(matches!(err, KarError::Parse { .. }), "{err}");
        let ragged = spec.to_json().replacen("[\n    [\n      0.5\n    ]\n  ]", "[[0.5],[1.0, 2.0]]", 1);
        assert!(SemSpec::from_json(&ragged).is_err());
        let mut bad = spec.clone();
        bad.b_yx = DMatrix::zeros(1, 2);
        assert!(bad.validate().is_err());
        let mut bad = spec;
        bad.sigma_x = DMatrix::from_element(1, 1, -1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_operators_give_independent_noises() {
        let spec = scalar_spec([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let s = generate_sem(&spec, 100_000, 1).unwrap();
        let (x, y, z) = (s.data.x().column(0), s.data.y(), s.data.z().column(0));
        let c = s.latent.column(0);
        let cov = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n
        };
        // unit-variance independent pairs: sd of sample covariance ≈ 1/√n ≈ 0.0032
        for (a, b) in [(x.as_slice(), y.as_slice()), (x.as_slice(), z.as_slice()), (y.as_slice(), c.as_slice())] {
            assert!(cov(a, b).abs() < 0.0032 * 4.0);
        }
    }

    #[test]
    fn causal_coefficient_recovered_without_confounding() {
        let spec = scalar_spec([0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 1.0, 1e-6]);
        let s = generate_sem(&spec, 10_000, 2).unwrap();
        let fit = fit_linear(&s.data, LinearMethod::Ols).unwrap();
        assert!((fit.coefficients()[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn reduced_form_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = SemDims { z: 2, c: 1, x: 2, y: 1 };
        let spec = random_spec(&mut rng, dims);
        let n = 200_000;
        let s = generate_sem(&spec, n, 6).unwrap();
        let expected = spec.anchor_to_treatment() * &spec.sigma_z;
        let (x, z) = (s.data.x(), s.data.z());
        let mut sample = DMatrix::zeros(2, 2);
        for i in 0..n {
            for a in 0..2 {
                for b in 0..2 {
                    sample[(a, b)] += x[(i, a)] * z[(i, b)] / n as f64;
                }
            }
        }
        assert!((sample - expected).amax() < 0.03);
    }

    #[test]
    fn bias_is_h_gamma_minus_causal_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..25 {
            let dims = SemDims {
                z: rng.random_range(1..4),
                c: rng.random_range(1..3),
                x: 1,
                y: rng.random_range(1..3),
            };
            let spec = random_spec(&mut rng, dims);
            for gamma in [0.0, 0.5, 1.0, 2.0, 30.0] {
                let via_h = population_h_gamma(&spec, gamma).unwrap() - &spec.b_yx;
                let direct = bias_operator(&spec, gamma).unwrap();
                assert!((via_h - direct).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_spec_except_causal_has_no_bias() {
        let spec = scalar_spec([0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 1.0, 2.0, 0.5, 1.0]);
        for gamma in [0.0, 1.0, 7.0] {
            assert_eq!(bias_operator(&spec, gamma).unwrap()[(0, 0)], 0.0);
        }
        assert!(bias_operator(&spec, -1.0).is_err());
        assert!(bias_operator(&spec, f64::INFINITY).is_err());
    }

    #[test]
    fn gamma_one_bias_matches_monte_carlo_ols() {
        let spec = scalar_spec([0.6, 0.8, 0.7, -0.4, 0.9, 1.5, 1.0, 1.0, 0.6, 0.3]);
        let bias = bias_operator(&spec, 1.0).unwrap()[(0, 0)];
        let s = generate_sem(&spec, 1_000_000, 7).unwrap();
        let ols = fit_linear(&s.data, LinearMethod::Ols).unwrap();
        let mc_bias = ols.coefficients()[0] - 1.5;
        // OLS slope sd here is well under 2e-3 at n = 10⁶
        assert!((mc_bias - bias).abs() < 5e-3, "mc {mc_bias} vs {bias}");
        assert!(ols.predict(&[0.0]).is_finite());
    }
}
