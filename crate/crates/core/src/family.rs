//! Exponential-family responses with canonical links.
//!
//! A response density is `exp((y·θ − b(θ))/φ + c(y, φ))`. Only canonical links
//! are supported, so the natural parameter θ coincides with the linear
//! predictor η everywhere in the crate.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    BernoulliLogit,
    GaussianIdentity,
    PoissonLog,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::BernoulliLogit => "binomial",
            FamilyKind::GaussianIdentity => "gaussian",
            FamilyKind::PoissonLog => "poisson",
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binomial" | "bernoulli" | "logistic" => Ok(FamilyKind::BernoulliLogit),
            "gaussian" | "normal" => Ok(FamilyKind::GaussianIdentity),
            "poisson" => Ok(FamilyKind::PoissonLog),
            other => Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}

/// A family together with its (known, fixed) dispersion φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub dispersion: f64,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, dispersion: f64) -> Result<Self> {
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(Error::InvalidArgument(format!("dispersion must be positive and finite, got {dispersion}")));
        }
        if kind != FamilyKind::GaussianIdentity && dispersion != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "{} family requires dispersion 1, got {dispersion}",
                kind.name()
            )));
        }
        Ok(FamilySpec { kind, dispersion })
    }

    pub fn bernoulli() -> Self {
        FamilySpec { kind: FamilyKind::BernoulliLogit, dispersion: 1.0 }
    }

    pub fn gaussian(dispersion: f64) -> Result<Self> {
        Self::new(FamilyKind::GaussianIdentity, dispersion)
    }

    pub fn poisson() -> Self {
        FamilySpec { kind: FamilyKind::PoissonLog, dispersion: 1.0 }
    }

    /// Cumulant function b(θ).
    pub fn cumulant(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("non-finite natural parameter {theta}")));
        }
        Ok(self.b(theta))
    }

    /// Unchecked b(θ) for inner loops.
    #[inline]
    pub fn b(&self, theta: f64) -> f64 {
        match self.kind {
            // max-shift identity keeps large |θ| finite
            FamilyKind::BernoulliLogit => theta.max(0.0) + (-theta.abs()).exp().ln_1p(),
            FamilyKind::GaussianIdentity => 0.5 * theta * theta,
            FamilyKind::PoissonLog => theta.exp(),
        }
    }

    /// Mean b′(θ).
    #[inline]
    pub fn mean(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::BernoulliLogit => {
                if theta >= 0.0 {
                    1.0 / (1.0 + (-theta).exp())
                } else {
                    let e = theta.exp();
                    e / (1.0 + e)
                }
            }
            FamilyKind::GaussianIdentity => theta,
            FamilyKind::PoissonLog => theta.exp(),
        }
    }

    /// Variance function b″(θ).
    #[inline]
    pub fn variance(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::BernoulliLogit => {
                let e = (-theta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            FamilyKind::GaussianIdentity => 1.0,
            FamilyKind::PoissonLog => theta.exp(),
        }
    }

    pub fn check_support(&self, y: f64) -> Result<()> {
        let ok = match self.kind {
            FamilyKind::BernoulliLogit => y == 0.0 || y == 1.0,
            FamilyKind::GaussianIdentity => y.is_finite(),
            FamilyKind::PoissonLog => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("response {y} outside the support of the {} family", self.kind.name())))
        }
    }

    /// c(y, φ). Assumes `y` is in the support.
    #[inline]
    pub fn log_normalizer(&self, y: f64) -> f64 {
        match self.kind {
            FamilyKind::BernoulliLogit => 0.0,
            FamilyKind::GaussianIdentity => -0.5 * y * y / self.dispersion - 0.5 * (2.0 * PI * self.dispersion).ln(),
            FamilyKind::PoissonLog => -libm::lgamma(y + 1.0),
        }
    }

    /// log f(y | η) with the canonical link.
    pub fn log_density(&self, y: f64, eta: f64) -> Result<f64> {
        self.check_support(y)?;
        if !eta.is_finite() {
            return Err(Error::Domain(format!("non-finite linear predictor {eta}")));
        }
        Ok(self.log_density_unchecked(y, eta))
    }

    #[inline]
    pub fn log_density_unchecked(&self, y: f64, eta: f64) -> f64 {
        (y * eta - self.b(eta)) / self.dispersion + self.log_normalizer(y)
    }

    /// Σ log f(yᵢ | ηᵢ) without support checks.
    pub fn loglik(&self, y: &[f64], eta: &[f64]) -> f64 {
        y.iter().zip(eta).map(|(&yi, &ei)| self.log_density_unchecked(yi, ei)).sum()
    }
}
