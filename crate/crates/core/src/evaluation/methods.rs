use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{KarError, Result};
use crate::estimators::{
    fit_kar, fit_kar2, fit_kiv, fit_kpa, fit_kreg, fit_linear, CausalModel, Kar2Config, KarConfig, KernelPolicies,
    KivConfig, LinearMethod, SplitPlan,
};

/// Every estimator the harness knows how to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "KAR")]
    Kar,
    #[serde(rename = "KAR.2")]
    Kar2,
    #[serde(rename = "KIV")]
    Kiv,
    #[serde(rename = "KPA")]
    Kpa,
    #[serde(rename = "KReg")]
    Kreg,
    #[serde(rename = "AR")]
    Ar,
    #[serde(rename = "IV")]
    Iv,
    #[serde(rename = "PA")]
    Pa,
    #[serde(rename = "OLS")]
    Ols,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Kar,
        Method::Kar2,
        Method::Kiv,
        Method::Kpa,
        Method::Kreg,
        Method::Ar,
        Method::Iv,
        Method::Pa,
        Method::Ols,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kar => "KAR",
            Method::Kar2 => "KAR.2",
            Method::Kiv => "KIV",
            Method::Kpa => "KPA",
            Method::Kreg => "KReg",
            Method::Ar => "AR",
            Method::Iv => "IV",
            Method::Pa => "PA",
            Method::Ols => "OLS",
        }
    }

    /// Whether the fit depends on the anchor strength γ.
    pub fn uses_gamma(self) -> bool {
        matches!(self, Method::Kar | Method::Kar2 | Method::Ar)
    }

    /// Whether the fit has a projection-stage regularizer.
    pub fn uses_alpha(self) -> bool {
        matches!(self, Method::Kar | Method::Kar2 | Method::Kiv | Method::Kpa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = KarError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "kar2" | "kar-2" | "kar_2" => "kar.2",
            "2sls" => "iv",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(alias))
            .ok_or_else(|| KarError::invalid(format!("unknown method '{s}'")))
    }
}

/// Everything a single fit needs besides the data.
///
/// Regularizers follow `α₁ = c_α·n₁^{-1/2}`, `α₂ = c_α·n₂^{-1/2}`,
/// `α = c_α·(n₁+n₂)^{-1/2}` and `ξ = c_ξ·m^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub splits: [usize; 3],
    pub gamma: f64,
    pub alpha_const: f64,
    pub xi_const: f64,
}

impl FitParams {
    /// Split sizes rescaled to a sample of `n`: the two projection sets keep
    /// their share (rounded down), the regression set takes the rest.
    pub fn rescaled(&self, n: usize) -> FitParams {
        let total: usize = self.splits.iter().sum();
        let share = |k: usize| k * n / total;
        let (n1, n2) = (share(self.splits[0]), share(self.splits[1]));
        FitParams {
            splits: [n1, n2, n - n1 - n2],
            ..*self
        }
    }

    fn rate(c: f64, n: usize) -> f64 {
        c / (n as f64).sqrt()
    }

    pub fn kar_config(&self) -> KarConfig<f64> {
        let [n1, n2, m] = self.splits;
        KarConfig {
            split: SplitPlan::ThreeWay { n1, n2, m },
            gamma: self.gamma,
            alpha_x: Self::rate(self.alpha_const, n1),
            alpha_y: Self::rate(self.alpha_const, n2),
            xi: Self::rate(self.xi_const, m),
            kernels: KernelPolicies::gaussian_median(),
        }
    }

    pub fn kar2_config(&self) -> Kar2Config<f64> {
        let [n1, n2, m] = self.splits;
        Kar2Config {
            split: SplitPlan::TwoWay { n: n1 + n2, m },
            gamma: self.gamma,
            alpha: Self::rate(self.alpha_const, n1 + n2),
            xi: Self::rate(self.xi_const, m),
            kernels: KernelPolicies::gaussian_median(),
        }
    }

    pub fn kiv_config(&self) -> KivConfig<f64> {
        let [n1, n2, m] = self.splits;
        KivConfig {
            split: SplitPlan::TwoWay { n: n1 + n2, m },
            alpha: Self::rate(self.alpha_const, n1 + n2),
            xi: Self::rate(self.xi_const, m),
            kernels: KernelPolicies::gaussian_median(),
        }
    }
}

/// Fits `method` on `data`. Kernel methods draw their sample partition from
/// `split_seed`; linear methods use every sample.
pub fn fit_method(
    method: Method,
    data: &Dataset,
    params: &FitParams,
    split_seed: u64,
) -> Result<Box<dyn CausalModel<f64>>> {
    let model: Box<dyn CausalModel<f64>> = match method {
        Method::Kar => Box::new(fit_kar(data, &params.kar_config(), split_seed)?),
        Method::Kar2 => Box::new(fit_kar2(data, &params.kar2_config(), split_seed)?),
        Method::Kiv => Box::new(fit_kiv(data, &params.kiv_config(), split_seed)?),
        Method::Kpa => Box::new(fit_kpa(data, &params.kar_config(), split_seed)?),
        Method::Kreg => Box::new(fit_kreg(data, &params.kar_config(), split_seed)?),
        Method::Ar => Box::new(fit_linear(data, LinearMethod::Anchor { gamma: params.gamma })?),
        Method::Iv => Box::new(fit_linear(data, LinearMethod::Iv2sls)?),
        Method::Pa => Box::new(fit_linear(data, LinearMethod::Pa)?),
        Method::Ols => Box::new(fit_linear(data, LinearMethod::Ols)?),
    };
    Ok(model)
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(KarError::invalid("empty method list"));
    }
    Ok(methods)
}
