//! Random SEM constructors for the four identifiability scenarios
//! (plus the γ = ∞ reading of the last one, which is *not* identified).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::sem::{bias_operator, covariance_split, SemSpec};
use crate::error::{KarError, Result};

/// Dimensions of `(φ(Z), C, ψ(X), Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemDims {
    pub z: usize,
    pub c: usize,
    pub x: usize,
    pub y: usize,
}

impl Default for SemDims {
    fn default() -> Self {
        SemDims { z: 3, c: 2, x: 2, y: 1 }
    }
}

/// Stand-in for the infinite anchor strength.
pub const GAMMA_LARGE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdentifiabilityCase {
    /// No latent confounding, partialling out (`γ = 0`).
    NoConfounder,
    /// Valid instrument: anchor-explained covariance vanishes, `γ → ∞`.
    ValidInstrument,
    /// No confounding and no direct anchor effect: any `γ`.
    Unconfounded,
    /// `Σ^∥ = −a·Σ^⊥`, `γ = 1/a`.
    Balanced,
    /// `Σ^∥ = +a·Σ^⊥` with `γ → ∞`. Kept to show the bias does not vanish.
    BalancedInfinite,
}

impl IdentifiabilityCase {
    pub const ALL: [IdentifiabilityCase; 5] = [
        IdentifiabilityCase::NoConfounder,
        IdentifiabilityCase::ValidInstrument,
        IdentifiabilityCase::Unconfounded,
        IdentifiabilityCase::Balanced,
        IdentifiabilityCase::BalancedInfinite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentifiabilityCase::NoConfounder => "thm3-i",
            IdentifiabilityCase::ValidInstrument => "thm3-ii",
            IdentifiabilityCase::Unconfounded => "thm3-iii",
            IdentifiabilityCase::Balanced => "thm3-iv",
            IdentifiabilityCase::BalancedInfinite => "appendix-iv",
        }
    }

    /// Whether the bias is expected to vanish at [`Self::gammas`].
    pub fn identified(self) -> bool {
        self != IdentifiabilityCase::BalancedInfinite
    }

    /// Acceptance threshold on the bias norm.
    pub fn tolerance(self) -> f64 {
        match self {
            IdentifiabilityCase::ValidInstrument | IdentifiabilityCase::BalancedInfinite => 1e-6,
            _ => 1e-10,
        }
    }

    /// Draws a random conforming spec satisfying the case's hypotheses and
    /// returns it with the γ values at which identification is claimed.
    pub fn construct<R: Rng + ?Sized>(self, rng: &mut R, dims: SemDims) -> Result<(SemSpec, Vec<f64>)> {
        let a = rng_a(rng);
        self.construct_with(rng, dims, a)
    }

    /// As [`Self::construct`] with an explicit balance constant `a > 0`
    /// (ignored by the first three cases).
    pub fn construct_with<R: Rng + ?Sized>(self, rng: &mut R, dims: SemDims, a: f64) -> Result<(SemSpec, Vec<f64>)> {
        if dims.z < dims.x {
            return Err(KarError::invalid("anchor dimension must be at least the treatment dimension"));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(KarError::invalid(format!("balance constant must be positive, got {a}")));
        }
        let mut spec = random_spec(rng, dims);
        let gammas = match self {
            IdentifiabilityCase::NoConfounder => {
                spec.b_yc.fill(0.0);
                vec![0.0]
            }
            IdentifiabilityCase::ValidInstrument => {
                spec.b_yz = -(&spec.b_yc * &spec.b_cz);
                vec![GAMMA_LARGE]
            }
            IdentifiabilityCase::Unconfounded => {
                spec.b_yc.fill(0.0);
                spec.b_yz.fill(0.0);
                vec![0.0, 1.0, 2.0, 100.0]
            }
            IdentifiabilityCase::Balanced => {
                balance(&mut spec, -a)?;
                vec![1.0 / a]
            }
            IdentifiabilityCase::BalancedInfinite => {
                balance(&mut spec, a)?;
                vec![GAMMA_LARGE]
            }
        };
        Ok((spec, gammas))
    }
}

fn rng_a<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.25..4.0)
}

/// Sets `B_YZ` so that `Σ^∥ = ratio·Σ^⊥`.
///
/// `Σ^∥ = u·M` with `u = B_YZ + B_YC·B_CZ` and `M = Σ_Z·E_Xᵀ`; `M` has full
/// column rank so `u = ratio·Σ^⊥·(MᵀM)⁻¹Mᵀ` solves it exactly.
fn balance(spec: &mut SemSpec, ratio: f64) -> Result<()> {
    let (perp, _) = covariance_split(spec);
    let m = &spec.sigma_z * spec.anchor_to_treatment().transpose();
    let gram = m.transpose() * &m;
    let chol = gram
        .cholesky()
        .ok_or_else(|| KarError::IllConditioned("anchor reduced form is rank deficient".into()))?;
    let u = chol.solve(&(perp * ratio).transpose()).transpose() * m.transpose();
    spec.b_yz = u - &spec.b_yc * &spec.b_cz;
    Ok(())
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn spd<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let l = gaussian(rng, d, d) * (1.0 / (d as f64).sqrt());
    &l * l.transpose() + DMatrix::identity(d, d) * 0.5
}

/// Random spec with a well-conditioned anchor → treatment reduced form.
///
/// Needs `dims.z ≥ dims.x`; otherwise the reduced form cannot have full
/// row rank and the resampling loop would run forever, so the anchor block
/// is simply left as drawn.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, dims: SemDims) -> SemSpec {
    let SemDims { z, c, x, y } = dims;
    loop {
        let b_cz = gaussian(rng, c, z) * 0.5;
        let b_xc = gaussian(rng, x, c) * 0.5;
        let mut b_xz = gaussian(rng, x, z) * 0.3;
        for i in 0..x.min(z) {
            b_xz[(i, i)] += 1.0;
        }
        let spec = SemSpec {
            b_cz,
            b_xz,
            b_xc,
            b_yz: gaussian(rng, y, z) * 0.5,
            b_yc: gaussian(rng, y, c),
            b_yx: gaussian(rng, y, x),
            sigma_z: spd(rng, z),
            sigma_c: spd(rng, c),
            sigma_x: spd(rng, x),
            sigma_y: spd(rng, y),
        };
        if z < x {
            return spec;
        }
        let sv = spec.anchor_to_treatment().singular_values();
        if sv.min() >= 0.2 {
            return spec;
        }
    }
}

/// Frobenius norm of the bias operator at each γ.
pub fn bias_norms(spec: &SemSpec, gammas: &[f64]) -> Result<Vec<f64>> {
    gammas
        .iter()
        .map(|&g| bias_operator(spec, g).map(|b| b.norm()))
        .collect()
}

impl fmt::Display for IdentifiabilityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentifiabilityCase {
    type Err = KarError;

    fn from_str(s: &str) -> Result<Self> {
        IdentifiabilityCase::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| KarError::invalid(format!("unknown identifiability case '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem_lab::sem::population_h_gamma;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identified_cases_have_vanishing_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in IdentifiabilityCase::ALL.into_iter().filter(|c| c.identified()) {
            for _ in 0..20 {
                let (spec, gammas) = case.construct(&mut rng, SemDims::default()).unwrap();
                for (g, norm) in gammas.iter().zip(bias_norms(&spec, &gammas).unwrap()) {
                    assert!(norm < case.tolerance(), "{case} γ={g}: {norm:e}");
                }
            }
        }
    }

    #[test]
    fn balanced_example_with_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (spec, gammas) = IdentifiabilityCase::Balanced
            .construct_with(&mut rng, SemDims::default(), 0.5)
            .unwrap();
        assert_eq!(gammas, vec![2.0]);
        let h = population_h_gamma(&spec, 2.0).unwrap();
        assert!((h - &spec.b_yx).amax() < 1e-10);
        // away from 1/a the bias is generically non-zero
        assert!(bias_operator(&spec, 1.0).unwrap().norm() > 1e-4);
    }

    #[test]
    fn infinite_reading_is_not_identified() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let (spec, gammas) = IdentifiabilityCase::BalancedInfinite
                .construct(&mut rng, SemDims::default())
                .unwrap();
            let norm = bias_norms(&spec, &gammas).unwrap()[0];
            assert!(norm > 1e-3, "unexpectedly identified: {norm:e}");
        }
    }

    #[test]
    fn confounded_spec_is_biased() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let spec = random_spec(&mut rng, SemDims::default());
        assert!(bias_operator(&spec, 1.0).unwrap().norm() > 1e-3);
    }

    #[test]
    fn names_round_trip() {
        for case in IdentifiabilityCase::ALL {
            assert_eq!(case.name().parse::<IdentifiabilityCase>().unwrap(), case);
        }
        assert!("thm3-v".parse::<IdentifiabilityCase>().is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = SemDims { z: 1, c: 1, x: 2, y: 1 };
        assert!(IdentifiabilityCase::Balanced.construct(&mut rng, dims).is_err());
    }
}
