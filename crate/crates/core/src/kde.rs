//! The classical kernel density estimator and its first-order asymptotics.

use serde_json::json;

use crate::error::{Error, Result};
use crate::estimate::{DensityEstimate, Evaluation, Interval, Method};
use crate::kernels::KernelSpec;
use crate::mixtures::NormalMixture;
pub use crate::sample::Sample;

/// Gaussian kernel terms beyond this many bandwidths underflow to zero.
const GAUSSIAN_CUTOFF: f64 = 40.0;

/// Half-width (in bandwidths) beyond which the kernel estimate is treated as
/// zero when choosing integration domains.
pub const GAUSSIAN_DOMAIN_RADIUS: f64 = 10.0;

/// `f̂₀(x) = n⁻¹ Σ K_h(xᵢ − x)`, evaluated by direct summation.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    points: Vec<f64>,
    h: f64,
    kernel: KernelSpec,
    method: Method,
}

pub fn kde_fit(data: &Sample, h: f64, kernel: KernelSpec) -> Result<KernelEstimate> {
    KernelEstimate::new(data.values().to_vec(), h, kernel, Method::Kernel)
}

impl KernelEstimate {
    pub(crate) fn new(mut points: Vec<f64>, h: f64, kernel: KernelSpec, method: Method) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
        }
        if points.is_empty() {
            return Err(Error::invalid("kernel estimate needs at least one point"));
        }
        points.sort_by(f64::total_cmp);
        Ok(KernelEstimate {
            points,
            h,
            kernel,
            method,
        })
    }

    /// Data points (sorted) the kernel bumps are centred on.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    fn reach(&self) -> f64 {
        if self.kernel.is_bounded() {
            self.kernel.support_radius * self.h
        } else {
            GAUSSIAN_CUTOFF * self.h
        }
    }

    fn window(&self, x: f64) -> &[f64] {
        let r = self.reach();
        let lo = self.points.partition_point(|&p| p < x - r);
        let hi = self.points.partition_point(|&p| p <= x + r);
        &self.points[lo..hi]
    }

    /// `(f̂₀, f̂₀′, f̂₀″)` at `x`.
    pub fn derivatives(&self, x: f64) -> (f64, f64, f64) {
        let h = self.h;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &p in self.window(x) {
            let u = (p - x) / h;
            s0 += self.kernel.eval(u);
            s1 += self.kernel.derivative(u);
            s2 += self.kernel.second_derivative(u);
        }
        let nh = self.points.len() as f64 * h;
        (s0 / nh, -s1 / (nh * h), s2 / (nh * h * h))
    }

    pub fn density(&self, x: f64) -> f64 {
        let mut s0 = 0.0;
        for &p in self.window(x) {
            s0 += self.kernel.eval((p - x) / self.h);
        }
        s0 / (self.points.len() as f64 * self.h)
    }
}

impl DensityEstimate for KernelEstimate {
    fn method(&self) -> Method {
        self.method
    }

    fn bandwidth(&self) -> f64 {
        self.h
    }

    fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    fn support(&self) -> Interval {
        let r = if self.kernel.is_bounded() {
            self.kernel.support_radius * self.h
        } else {
            GAUSSIAN_DOMAIN_RADIUS * self.h
        };
        Interval::new(self.points[0] - r, self.points[self.points.len() - 1] + r)
    }

    fn evaluate(&self, x: f64) -> Result<Evaluation> {
        let (value, derivative, _) = self.derivatives(x);
        Ok(Evaluation { value, derivative })
    }

    fn value(&self, x: f64) -> f64 {
        self.density(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        if !self.kernel.is_bounded() {
            return Vec::new();
        }
        let r = self.kernel.support_radius * self.h;
        let mut b: Vec<f64> = self.points.iter().flat_map(|&p| [p - r, p + r]).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "method": self.method.name(),
            "h": self.h,
            "kernel": self.kernel.kind.to_string(),
            "n": self.points.len(),
        })
    }
}

/// Leading bias `½k₂h²f″(x)` and variance `R(K)f(x)/(nh) − f(x)²/n` of the
/// kernel estimator at `x` when the data come from `m`.
pub fn kde_asymptotics(m: &NormalMixture, k: &KernelSpec, h: f64, n: usize, x: f64) -> (f64, f64) {
    let c = k.constants();
    let f = m.pdf(x);
    let n = n as f64;
    (
        0.5 * c.k2 * h * h * m.pdf_deriv(x, 2),
        c.roughness * f / (n * h) - f * f / n,
    )
}
