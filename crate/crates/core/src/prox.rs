//! Proximal operators applied to feature maps after each gradient step.

use crate::error::{ensure, Error, Result};
use crate::tensor::{Features, Tensor};

/// `x ↦ argmin_z ½‖z − x‖² + θ·g(z)` for some regularizer `g`.
///
/// Implementations must be non-expansive so the solver keeps its descent
/// behaviour; a learned operator can be slotted in through this trait.
pub trait Prox: Sync {
    fn apply(&self, x: &Tensor, theta: f64) -> Result<Tensor>;

    fn apply_features(&self, x: &Features, theta: f64) -> Result<Features> {
        let levels = x
            .levels()
            .iter()
            .map(|t| self.apply(t, theta))
            .collect::<Result<_>>()?;
        Features::new(levels)
    }
}

/// Prox of `θ‖·‖₁`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SoftThreshold;

/// Prox of the zero regularizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Prox for SoftThreshold {
    fn apply(&self, x: &Tensor, theta: f64) -> Result<Tensor> {
        soft_threshold(x, theta)
    }
}

impl Prox for Identity {
    fn apply(&self, x: &Tensor, _theta: f64) -> Result<Tensor> {
        Ok(x.clone())
    }
}

/// Built-in prox choices selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProxKind {
    #[default]
    SoftThreshold,
    Identity,
}

impl ProxKind {
    pub fn operator(self) -> &'static dyn Prox {
        match self {
            ProxKind::SoftThreshold => &SoftThreshold,
            ProxKind::Identity => &Identity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProxKind::SoftThreshold => "soft",
            ProxKind::Identity => "identity",
        }
    }
}

impl core::str::FromStr for ProxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" | "soft_threshold" => Ok(ProxKind::SoftThreshold),
            "identity" | "none" => Ok(ProxKind::Identity),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unknown prox {other:?}"
            ))),
        }
    }
}

#[inline]
pub fn shrink(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Elementwise `sign(x)·max(|x| − θ, 0)`.
pub fn soft_threshold(x: &Tensor, theta: f64) -> Result<Tensor> {
    ensure!(
        theta >= 0.0 && theta.is_finite(),
        Error::InvalidParameter(alloc::format!("threshold must be >= 0, got {theta}"))
    );
    Ok(x.map(|v| shrink(v, theta)))
}
