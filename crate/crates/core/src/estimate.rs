//! The evaluable-density abstraction shared by every estimator, and the
//! method catalog used by the benchmark and the command line.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::competitors;
use crate::error::{Error, Result};
use crate::expfam::{self, CanonicalBasis};
use crate::kde;
use crate::kernels::KernelSpec;
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// the plain kernel estimator
    Kernel,
    /// exponential-family correction with polynomial basis of degree 1..=4
    Et(u8),
    /// variance-corrected kernel estimate on shrunken data
    Jones,
    /// multiplicative correction of a normal start
    Hg,
    /// local level correction of a normal start
    Local1,
    /// local level-and-slope correction of a normal start
    Local2,
}

impl Method {
    /// The seven columns of the benchmark table, in order.
    pub const TABLE: [Method; 7] = [
        Method::Et(2),
        Method::Et(3),
        Method::Et(4),
        Method::Jones,
        Method::Hg,
        Method::Local1,
        Method::Local2,
    ];

    pub const ALL: [Method; 9] = [
        Method::Kernel,
        Method::Et(1),
        Method::Et(2),
        Method::Et(3),
        Method::Et(4),
        Method::Jones,
        Method::Hg,
        Method::Local1,
        Method::Local2,
    ];

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Whether the closed form only exists for the Gaussian kernel.
    pub fn requires_gaussian(&self) -> bool {
        matches!(self, Method::Jones | Method::Hg | Method::Local1 | Method::Local2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Kernel => f.write_str("kernel"),
            Method::Et(p) => write!(f, "et{p}"),
            Method::Jones => f.write_str("jones"),
            Method::Hg => f.write_str("hg"),
            Method::Local1 => f.write_str("local1"),
            Method::Local2 => f.write_str("local2"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Ok(match s.as_str() {
            "kernel" => Method::Kernel,
            "et1" => Method::Et(1),
            "et2" => Method::Et(2),
            "et3" => Method::Et(3),
            "et4" => Method::Et(4),
            "jones" => Method::Jones,
            "hg" => Method::Hg,
            "local1" => Method::Local1,
            "local2" => Method::Local2,
            other => return Err(Error::invalid(format!("unknown method '{other}'"))),
        })
    }
}

/// Value and first derivative of an estimate at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub derivative: f64,
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Breakpoints splitting the interval into pieces no wider than `step`.
    pub fn breaks(&self, step: f64) -> Vec<f64> {
        let k = ((self.width() / step).ceil() as usize).clamp(1, 2000);
        (0..=k)
            .map(|i| {
                if i == k {
                    self.hi
                } else {
                    self.lo + self.width() * i as f64 / k as f64
                }
            })
            .collect()
    }
}

pub trait DensityEstimate: fmt::Debug + Send + Sync {
    fn method(&self) -> Method;

    fn bandwidth(&self) -> f64;

    fn kernel(&self) -> KernelSpec;

    /// The interval outside which the estimate vanishes or is negligible.
    fn support(&self) -> Interval;

    fn evaluate(&self, x: f64) -> Result<Evaluation>;

    /// `f̂(x)`; points where the estimate cannot be formed (its carrier has
    /// underflowed) are reported as zero density.
    fn value(&self, x: f64) -> f64 {
        self.evaluate(x).map(|e| e.value).unwrap_or(0.0)
    }

    /// Points where the estimate has a kink (derivative jump); quadrature
    /// over the estimate places panel boundaries there.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Fitted parameters for the JSON sidecar.
    fn metadata(&self) -> serde_json::Value;
}

/// Breaks covering `domain` in steps of at most `step`, merged with the
/// estimate's kinks that fall strictly inside.
pub fn quadrature_breaks(est: &dyn DensityEstimate, domain: Interval, step: f64) -> Vec<f64> {
    let mut b = domain.breaks(step);
    b.extend(est.breakpoints().into_iter().filter(|&x| domain.lo < x && x < domain.hi));
    b.sort_by(f64::total_cmp);
    let min_gap = 1e-12 * domain.width().max(f64::MIN_POSITIVE);
    let mut out: Vec<f64> = Vec::with_capacity(b.len());
    for x in b {
        match out.last() {
            Some(&last) if x - last <= min_gap => {
                if x == domain.hi {
                    *out.last_mut().unwrap() = x;
                }
            }
            _ => out.push(x),
        }
    }
    out
}

/// Fit `method` to `data` with bandwidth `h`.
pub fn fit(method: Method, data: &Sample, h: f64, kernel: KernelSpec) -> Result<Arc<dyn DensityEstimate>> {
    if method.requires_gaussian() && kernel.kind != crate::kernels::KernelKind::Gaussian {
        return Err(Error::UnsupportedKernel {
            method: method.name(),
        });
    }
    Ok(match method {
        Method::Kernel => Arc::new(kde::kde_fit(data, h, kernel)?),
        Method::Et(p) => {
            let carrier: Arc<dyn DensityEstimate> = Arc::new(kde::kde_fit(data, h, kernel)?);
            let basis = CanonicalBasis::standardized(p as usize, data)?;
            let domain = expfam::choose_domain(carrier.as_ref(), data);
            Arc::new(expfam::fit_beta(carrier, basis, data, domain)?)
        }
        Method::Jones => Arc::new(competitors::jones_fit(data, h, kernel)?),
        Method::Hg => Arc::new(competitors::multiplicative_fit(data, h)?),
        Method::Local1 => Arc::new(competitors::local_level_fit(data, h)?),
        Method::Local2 => Arc::new(competitors::local_linear_fit(data, h)?),
    })
}

/// `∫ f̂` over the estimate's support.
pub fn total_mass(est: &dyn DensityEstimate, tol: f64) -> Result<f64> {
    let s = est.support();
    let step = est.bandwidth().max(s.width() / 2000.0);
    Ok(crate::quadrature::integrate_with_breaks(|x| est.value(x), &quadrature_breaks(est, s, step), tol)?.value)
}

/// An estimate divided by its numerically computed integral.
#[derive(Debug)]
pub struct Renormalized {
    inner: Arc<dyn DensityEstimate>,
    mass: f64,
}

impl Renormalized {
    pub fn new(inner: Arc<dyn DensityEstimate>) -> Result<Self> {
        let mass = total_mass(inner.as_ref(), 1e-10)?;
        if !(mass > 0.0) {
            return Err(Error::invalid(format!("cannot renormalize an estimate with mass {mass}")));
        }
        Ok(Renormalized { inner, mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl DensityEstimate for Renormalized {
    fn method(&self) -> Method {
        self.inner.method()
    }
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth()
    }
    fn kernel(&self) -> KernelSpec {
        self.inner.kernel()
    }
    fn support(&self) -> Interval {
        self.inner.support()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
    fn evaluate(&self, x: f64) -> Result<Evaluation> {
        let e = self.inner.evaluate(x)?;
        Ok(Evaluation {
            value: e.value / self.mass,
            derivative: e.derivative / self.mass,
        })
    }
    fn metadata(&self) -> serde_json::Value {
        let mut m = self.inner.metadata();
        if let Some(obj) = m.as_object_mut() {
            obj.insert("renormalized_by".into(), self.mass.into());
        }
        m
    }
}

// Only used by tests in several modules.
#[cfg(test)]
pub(crate) fn mass_of(est: &dyn DensityEstimate) -> f64 {
    let s = est.support();
    let step = est.bandwidth().max(s.width() / 2000.0);
    crate::quadrature::integrate_with_breaks(|x| est.value(x), &quadrature_breaks(est, s, step), 1e-11)
        .unwrap()
        .value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("et5".parse::<Method>().is_err());
    }

    #[test]
    fn gaussian_only_methods() {
        let s = Sample::new(vec![0.0, 1.0, 2.0]).unwrap();
        let err = fit(Method::Hg, &s, 0.5, KernelSpec::epanechnikov()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedKernel { .. }));
        assert!(fit(Method::Kernel, &s, 0.5, KernelSpec::epanechnikov()).is_ok());
    }

    #[test]
    fn breaks_cover_interval() {
        let b = Interval::new(-1.0, 2.0).breaks(0.7);
        assert_eq!(b.first(), Some(&-1.0));
        assert_eq!(b.last(), Some(&2.0));
        assert!(b.windows(2).all(|w| w[1] - w[0] <= 0.7 + 1e-12));
    }
}
