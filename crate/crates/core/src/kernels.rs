//! Symmetric probability kernels and their moment constants.
//!
//! The Epanechnikov kernel is stored on `[-1/2, 1/2]` as `(3/2){1 - (2u)^2}`;
//! any other scaling is absorbed into the bandwidth.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
}

/// A kernel `K` together with the half-width of its support in `u` units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub support_radius: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

/// Second moment `k2 = ∫u²K` and roughness `R(K) = ∫K²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub k2: f64,
    pub roughness: f64,
}

impl KernelConstants {
    /// The kernel-dependent factor `k2^{2/5} R(K)^{4/5}` of the minimal AMISE.
    pub fn amise_efficiency(&self) -> f64 {
        self.k2.powf(0.4) * self.roughness.powf(0.8)
    }
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        KernelSpec {
            kind: KernelKind::Gaussian,
            support_radius: f64::INFINITY,
        }
    }

    pub fn epanechnikov() -> Self {
        KernelSpec {
            kind: KernelKind::Epanechnikov,
            support_radius: 0.5,
        }
    }

    pub fn new(kind: KernelKind) -> Self {
        match kind {
            KernelKind::Gaussian => Self::gaussian(),
            KernelKind::Epanechnikov => Self::epanechnikov(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.support_radius.is_finite()
    }

    /// `K(u)`, zero outside the support.
    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelKind::Epanechnikov => {
                if u.abs() <= 0.5 {
                    1.5 * (1.0 - 4.0 * u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// `K'(u)`. The Epanechnikov kernel has one-sided derivatives at `±1/2`;
    /// the value returned there is the inner one.
    pub fn derivative(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => -u * FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelKind::Epanechnikov => {
                if u.abs() <= 0.5 {
                    -12.0 * u
                } else {
                    0.0
                }
            }
        }
    }

    /// `K''(u)`, used by estimators that need the curvature of the kernel estimate.
    pub fn second_derivative(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (u * u - 1.0) * FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelKind::Epanechnikov => {
                if u.abs() < 0.5 {
                    -12.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn constants(&self) -> KernelConstants {
        match self.kind {
            KernelKind::Gaussian => KernelConstants {
                k2: 1.0,
                roughness: 1.0 / (2.0 * PI.sqrt()),
            },
            // ∫u²·(3/2)(1-4u²) over [-1/2,1/2] = 1/20, ∫(3/2)²(1-4u²)² = 6/5
            KernelKind::Epanechnikov => KernelConstants {
                k2: 0.05,
                roughness: 1.2,
            },
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Gaussian => f.write_str("gaussian"),
            KernelKind::Epanechnikov => f.write_str("epanechnikov"),
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(KernelKind::Gaussian),
            "epanechnikov" | "yepanechnikov" => Ok(KernelKind::Epanechnikov),
            other => Err(Error::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}
