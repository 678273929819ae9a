use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{KarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignTag {
    /// `X = F((W+V)/√2)`, `Z = F(W) − 0.5`.
    Main,
    /// Valid-instrument setting: `Z = F(W)`, `Y = C + g(X)`.
    Kiv,
    /// Less smooth variant: `X = F((|W|+V)/√2)`, `Z = F(|W|) − 0.5`.
    Variant,
}

impl std::str::FromStr for DesignTag {
    type Err = KarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "main" | "main_synthetic" => Ok(DesignTag::Main),
            "kiv" | "kiv_setting" => Ok(DesignTag::Kiv),
            "variant" => Ok(DesignTag::Variant),
            other => Err(KarError::invalid(format!("unknown design '{other}'"))),
        }
    }
}

impl std::fmt::Display for DesignTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignTag::Main => "main",
            DesignTag::Kiv => "kiv",
            DesignTag::Variant => "variant",
        })
    }
}

/// Scalar nonlinear generator `Y = c_C·C + c_Z·Z + g(X)` with
/// `(C, V, W) ~ N(0, Σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorDesign {
    pub tag: DesignTag,
    pub noise_cov: Matrix3<f64>,
    pub coef_c: f64,
    pub coef_z: f64,
}

impl GeneratorDesign {
    pub fn main() -> Self {
        Self {
            tag: DesignTag::Main,
            noise_cov: Matrix3::new(1.0, 0.3, 0.2, 0.3, 1.0, 0.0, 0.2, 0.0, 1.0),
            coef_c: 0.75,
            coef_z: -0.25,
        }
    }

    pub fn kiv() -> Self {
        Self {
            tag: DesignTag::Kiv,
            noise_cov: Matrix3::new(1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0),
            coef_c: 1.0,
            coef_z: 0.0,
        }
    }

    pub fn variant() -> Self {
        Self {
            tag: DesignTag::Variant,
            ..Self::main()
        }
    }

    pub fn from_tag(tag: DesignTag) -> Self {
        match tag {
            DesignTag::Main => Self::main(),
            DesignTag::Kiv => Self::kiv(),
            DesignTag::Variant => Self::variant(),
        }
    }

    /// `E[Z]` under the observational law.
    pub fn anchor_mean(&self) -> f64 {
        match self.tag {
            // F(W) is uniform on (0, 1)
            DesignTag::Main => 0.0,
            DesignTag::Kiv => 0.5,
            // F(|W|) is uniform on (1/2, 1)
            DesignTag::Variant => 0.25,
        }
    }

    fn treatment_and_anchor(&self, v: f64, w: f64) -> (f64, f64) {
        match self.tag {
            DesignTag::Main => (normal_cdf((w + v) / std::f64::consts::SQRT_2), normal_cdf(w) - 0.5),
            DesignTag::Kiv => (normal_cdf((w + v) / std::f64::consts::SQRT_2), normal_cdf(w)),
            DesignTag::Variant => (
                normal_cdf((w.abs() + v) / std::f64::consts::SQRT_2),
                normal_cdf(w.abs()) - 0.5,
            ),
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// `g(x) = ln(|16x − 8| + 1)·sgn(x − 0.5)` with `sgn(0) = 0`.
pub fn structural_response(x: f64) -> f64 {
    let s = x - 0.5;
    let sign = if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    };
    ((16.0 * x - 8.0).abs() + 1.0).ln() * sign
}

/// `E[Y | do(X = x)]`, averaging `C` and `Z` over their observational law.
pub fn true_do(design: &GeneratorDesign, x: f64) -> f64 {
    // E[C] = 0
    structural_response(x) + design.coef_z * design.anchor_mean()
}

struct Draw {
    x: f64,
    y: f64,
    z: f64,
}

struct Sampler {
    chol: Matrix3<f64>,
    design: GeneratorDesign,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(design: &GeneratorDesign, seed: u64) -> Result<Self> {
        let chol = design
            .noise_cov
            .cholesky()
            .ok_or_else(|| KarError::invalid("design noise covariance is not SPD"))?
            .l();
        Ok(Self {
            chol,
            design: *design,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn draw(&mut self) -> Draw {
        let e = Vector3::new(
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
        );
        let cvw = self.chol * e;
        let (x, z) = self.design.treatment_and_anchor(cvw[1], cvw[2]);
        let y = self.design.coef_c * cvw[0] + self.design.coef_z * z + structural_response(x);
        Draw { x, y, z }
    }
}

fn assemble(draws: &[Draw]) -> Result<Dataset> {
    let n = draws.len();
    Dataset::new(
        DMatrix::from_iterator(n, 1, draws.iter().map(|d| d.x)),
        DVector::from_iterator(n, draws.iter().map(|d| d.y)),
        DMatrix::from_iterator(n, 1, draws.iter().map(|d| d.z)),
    )
}

/// `n` i.i.d. samples `(x, y, z)` from the design.
pub fn generate(design: &GeneratorDesign, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(KarError::invalid("sample size must be ≥ 1"));
    }
    let mut sampler = Sampler::new(design, seed)?;
    let draws: Vec<Draw> = (0..n).map(|_| sampler.draw()).collect();
    assemble(&draws)
}

/// `n` samples from the conditional population `{keep(z)}`, by rejection.
pub fn generate_conditional(
    design: &GeneratorDesign,
    n: usize,
    seed: u64,
    keep: impl Fn(f64) -> bool,
) -> Result<Dataset> {
    if n == 0 {
        return Err(KarError::invalid("sample size must be ≥ 1"));
    }
    let mut sampler = Sampler::new(design, seed)?;
    let mut draws = Vec::with_capacity(n);
    let budget = n.saturating_mul(10_000).max(1_000_000);
    let mut tries = 0usize;
    while draws.len() < n {
        if tries == budget {
            return Err(KarError::invalid("conditional population is (nearly) empty"));
        }
        tries += 1;
        let d = sampler.draw();
        if keep(d.z) {
            draws.push(d);
        }
    }
    assemble(&draws)
}
