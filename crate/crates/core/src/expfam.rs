//! Exponential-family correction of a carrier density: the carrier is tilted by
//! `exp{βᵀt(x)}` with a polynomial `t`, and `β` is fitted by maximum likelihood.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimate::{quadrature_breaks, DensityEstimate, Evaluation, Interval, Method};
use crate::kde::GAUSSIAN_DOMAIN_RADIUS;
use crate::kernels::KernelSpec;
use crate::linalg::{self, Singular};
use crate::quadrature::CachedPanels;
use crate::sample::Sample;

pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;

/// Polynomial statistic `t(x) = (z, z², …, z^p)` with `z = (x − center)/scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalBasis {
    pub p: usize,
    pub center: f64,
    pub scale: f64,
}

impl CanonicalBasis {
    pub fn new(p: usize, center: f64, scale: f64) -> Result<Self> {
        if !(1..=4).contains(&p) {
            return Err(Error::invalid(format!("basis degree must be 1..=4, got {p}")));
        }
        if !(scale > 0.0) || !scale.is_finite() || !center.is_finite() {
            return Err(Error::invalid(format!("bad basis standardization ({center}, {scale})")));
        }
        Ok(CanonicalBasis { p, center, scale })
    }

    /// Standardized by the sample mean and (divisor-n) sd.
    pub fn standardized(p: usize, data: &Sample) -> Result<Self> {
        if data.len() < 2 || !(data.sd() > 0.0) {
            return Err(Error::TooFewDistinctPoints {
                needed: p.max(2),
                found: data.distinct_count(),
            });
        }
        Self::new(p, data.mean(), data.sd())
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    /// Writes `t(x)` into `out[..p]`.
    pub fn fill(&self, x: f64, out: &mut [f64]) {
        let z = self.z(x);
        let mut zp = 1.0;
        for o in out.iter_mut().take(self.p) {
            zp *= z;
            *o = zp;
        }
    }

    pub fn t(&self, x: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.p);
        self.fill(x, v.as_mut_slice());
        v
    }

    pub fn t_prime(&self, x: f64) -> DVector<f64> {
        let z = self.z(x);
        DVector::from_fn(self.p, |i, _| {
            let j = (i + 1) as i32;
            j as f64 * z.powi(j - 1) / self.scale
        })
    }

    pub fn t_second(&self, x: f64) -> DVector<f64> {
        let z = self.z(x);
        let d2 = self.scale * self.scale;
        DVector::from_fn(self.p, |i, _| {
            let j = (i + 1) as i32;
            if j < 2 {
                0.0
            } else {
                (j * (j - 1)) as f64 * z.powi(j - 2) / d2
            }
        })
    }

    /// `βᵀt(x)`.
    pub fn dot(&self, beta: &[f64], x: f64) -> f64 {
        let z = self.z(x);
        // Horner in z, no constant term
        let mut acc = 0.0;
        for b in beta.iter().take(self.p).rev() {
            acc = (acc + b) * z;
        }
        acc
    }

    /// `n⁻¹Σ t(xᵢ)`.
    pub fn mean_statistic(&self, data: &Sample) -> DVector<f64> {
        let mut acc = DVector::zeros(self.p);
        let mut buf = [0.0; 4];
        for &x in data.values() {
            self.fill(x, &mut buf);
            for j in 0..self.p {
                acc[j] += buf[j];
            }
        }
        acc / data.len() as f64
    }
}

/// The integration domain for the tilted carrier: the data range padded by the
/// kernel's support radius (bounded kernels) or ten bandwidths (Gaussian).
pub fn choose_domain(carrier: &dyn DensityEstimate, data: &Sample) -> Interval {
    let k = carrier.kernel();
    let h = carrier.bandwidth();
    let r = if k.is_bounded() {
        k.support_radius * h
    } else {
        GAUSSIAN_DOMAIN_RADIUS * h
    };
    Interval::new(data.min() - r, data.max() + r)
}

struct TiltedMoments {
    log_c: f64,
    mean: DVector<f64>,
    cov: Option<DMatrix<f64>>,
}

/// Integrals of the tilted carrier on a fixed, progressively refined
/// partition of the domain.
struct Tilter<'a> {
    basis: CanonicalBasis,
    panels: CachedPanels<Box<dyn Fn(f64) -> f64 + 'a>>,
}

impl<'a> Tilter<'a> {
    fn new(carrier: &'a dyn DensityEstimate, basis: CanonicalBasis, domain: Interval) -> Result<Self> {
        if !(domain.lo < domain.hi) {
            return Err(Error::invalid(format!("empty domain [{}, {}]", domain.lo, domain.hi)));
        }
        let step = 0.5 * carrier.bandwidth();
        let breaks = quadrature_breaks(carrier, domain, step);
        let base: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |x| carrier.value(x));
        Ok(Tilter {
            basis,
            panels: CachedPanels::new(base, &breaks)?,
        })
    }

    fn shift(&self, beta: &[f64]) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for x in self.panels.nodes() {
            m = m.max(self.basis.dot(beta, x));
        }
        m
    }

    fn log_norm_const(&mut self, beta: &[f64]) -> Result<f64> {
        let basis = self.basis;
        let shift = self.shift(beta);
        let g = |x: f64, c: f64, out: &mut [f64]| out[0] = c * (basis.dot(beta, x) - shift).exp();
        let rough = self.panels.integrate(g, 1, f64::INFINITY)?.values[0];
        if !(rough > 0.0) {
            return Err(Error::NonConvergence {
                what: "normalizing constant",
                detail: "tilted carrier has no mass on the domain".into(),
            });
        }
        let v = self.panels.integrate(g, 1, 1e-13 * rough)?.values[0];
        Ok(shift + v.ln())
    }

    fn moments(&mut self, beta: &[f64], with_cov: bool) -> Result<TiltedMoments> {
        let basis = self.basis;
        let p = basis.p;
        let shift = self.shift(beta);
        let g = |x: f64, c: f64, out: &mut [f64]| {
            let w = c * (basis.dot(beta, x) - shift).exp();
            let z = basis.z(x);
            let mut zp = w;
            out[0] = w;
            for o in out.iter_mut().skip(1) {
                zp *= z;
                *o = zp;
            }
        };
        // first-order moments need z..z^p; the covariance needs up to z^2p
        let dim = if with_cov { 2 * p + 1 } else { p + 1 };
        let rough = self.panels.integrate(g, dim, f64::INFINITY)?;
        let i0 = rough.values[0];
        if !(i0 > 0.0) {
            return Err(Error::NonConvergence {
                what: "tilted moments",
                detail: "tilted carrier has no mass on the domain".into(),
            });
        }
        let biggest = rough.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let head = self.panels.integrate(
            |x, c, out: &mut [f64]| {
                let mut full = [0.0; 9];
                g(x, c, &mut full[..dim]);
                out.copy_from_slice(&full[..p + 1]);
            },
            p + 1,
            (1e-13 * i0).max(1e-12 * rough.values[..=p].iter().fold(0.0f64, |m, v| m.max(v.abs()))),
        )?;
        let i0 = head.values[0];
        let mean = DVector::from_fn(p, |j, _| head.values[j + 1] / i0);
        let cov = if with_cov {
            let all = self.panels.integrate(g, dim, 1e-10 * biggest)?;
            let m: Vec<f64> = all.values.iter().map(|v| v / all.values[0]).collect();
            Some(DMatrix::from_fn(p, p, |a, b| m[a + b + 2] - mean[a] * mean[b]))
        } else {
            None
        };
        Ok(TiltedMoments {
            log_c: shift + i0.ln(),
            mean,
            cov,
        })
    }
}

/// `log ∫_domain carrier(x)·exp{βᵀt(x)} dx`, with the exponent shifted by its
/// maximum over the quadrature nodes to avoid overflow.
pub fn log_norm_const(
    carrier: &dyn DensityEstimate,
    basis: &CanonicalBasis,
    beta: &[f64],
    domain: Interval,
) -> Result<f64> {
    check_beta(basis, beta)?;
    Tilter::new(carrier, *basis, domain)?.log_norm_const(beta)
}

/// `B_n(β) = log ĉ(β) − βᵀt̄`.
pub fn objective(
    carrier: &dyn DensityEstimate,
    basis: &CanonicalBasis,
    data: &Sample,
    beta: &[f64],
    domain: Interval,
) -> Result<f64> {
    let tbar = basis.mean_statistic(data);
    Ok(log_norm_const(carrier, basis, beta, domain)? - dot(beta, tbar.as_slice()))
}

fn check_beta(basis: &CanonicalBasis, beta: &[f64]) -> Result<()> {
    if beta.len() != basis.p || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid(format!(
            "beta must be {} finite numbers, got {beta:?}",
            basis.p
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fitted exponential-family correction of a frozen carrier.
#[derive(Debug, Clone)]
pub struct ExpFamilyModel {
    carrier: Arc<dyn DensityEstimate>,
    basis: CanonicalBasis,
    beta: Vec<f64>,
    log_c: f64,
    domain: Interval,
    iterations: usize,
    gradient_norm: f64,
    trace: Vec<f64>,
}

/// Maximum-likelihood fit of `β` by damped Newton on `B_n`, starting at zero.
pub fn fit_beta(
    carrier: Arc<dyn DensityEstimate>,
    basis: CanonicalBasis,
    data: &Sample,
    domain: Interval,
) -> Result<ExpFamilyModel> {
    let found = data.distinct_count();
    if found < basis.p {
        return Err(Error::TooFewDistinctPoints {
            needed: basis.p,
            found,
        });
    }
    let p = basis.p;
    let tbar = basis.mean_statistic(data);
    let mut tilter = Tilter::new(carrier.as_ref(), basis, domain)?;
    let mut beta = vec![0.0; p];
    let mut state = tilter.moments(&beta, true)?;
    let mut b_val = state.log_c;
    let mut trace = vec![b_val];
    let mut gnorm = f64::INFINITY;

    for iter in 0..=MAX_NEWTON_ITERATIONS {
        let grad = &state.mean - &tbar;
        gnorm = grad.amax();
        if gnorm < GRADIENT_TOL {
            let log_c = state.log_c;
            drop(tilter);
            return Ok(ExpFamilyModel {
                carrier,
                basis,
                beta,
                log_c,
                domain,
                iterations: iter,
                gradient_norm: gnorm,
                trace,
            });
        }
        if iter == MAX_NEWTON_ITERATIONS {
            break;
        }
        let hess = match state.cov.take() {
            Some(h) => h,
            None => tilter.moments(&beta, true)?.cov.expect("covariance requested"),
        };
        let step = linalg::solve_spd(&hess, &(-&grad)).map_err(|(kind, rcond)| match kind {
            Singular::NotPositiveDefinite | Singular::IllConditioned => Error::DegenerateHessian { rcond },
        })?;
        let slack = 1e-14 * (1.0 + b_val.abs());
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + lambda * s).collect();
            let val = tilter.log_norm_const(&cand)? - dot(&cand, tbar.as_slice());
            if val.is_finite() && val <= b_val + slack {
                accepted = Some((cand, val));
                break;
            }
            lambda *= 0.5;
        }
        let Some((cand, val)) = accepted else {
            return Err(Error::NonConvergence {
                what: "Newton line search",
                detail: format!("no decrease after {MAX_HALVINGS} halvings, gradient norm {gnorm:.3e}"),
            });
        };
        beta = cand;
        b_val = val.min(b_val);
        trace.push(val);
        state = tilter.moments(&beta, true)?;
    }
    Err(Error::NonConvergence {
        what: "Newton iteration",
        detail: format!("{MAX_NEWTON_ITERATIONS} iterations, last gradient norm {gnorm:.3e}"),
    })
}

impl ExpFamilyModel {
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn log_c(&self) -> f64 {
        self.log_c
    }

    pub fn basis(&self) -> &CanonicalBasis {
        &self.basis
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn carrier(&self) -> &Arc<dyn DensityEstimate> {
        &self.carrier
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    /// Objective values `B_n` along the accepted Newton iterates.
    pub fn objective_trace(&self) -> &[f64] {
        &self.trace
    }

    /// `ĉ(β̂)⁻¹exp{β̂ᵀt(x)}`.
    pub fn correction(&self, x: f64) -> f64 {
        (self.basis.dot(&self.beta, x) - self.log_c).exp()
    }
}

/// `f̂(x) = carrier(x)·exp{β̂ᵀt(x) − log ĉ(β̂)}` on the domain, 0 outside.
pub fn et_density(model: &ExpFamilyModel, x: f64) -> f64 {
    if !model.domain.contains(x) {
        return 0.0;
    }
    model.carrier.value(x) * model.correction(x)
}

impl DensityEstimate for ExpFamilyModel {
    fn method(&self) -> Method {
        match self.carrier.method() {
            Method::Kernel => Method::Et(self.basis.p as u8),
            // a refit on a non-kernel carrier keeps the carrier's label
            other => other,
        }
    }

    fn bandwidth(&self) -> f64 {
        self.carrier.bandwidth()
    }

    fn kernel(&self) -> KernelSpec {
        self.carrier.kernel()
    }

    fn support(&self) -> Interval {
        self.domain
    }

    fn evaluate(&self, x: f64) -> Result<Evaluation> {
        if !self.domain.contains(x) {
            return Ok(Evaluation {
                value: 0.0,
                derivative: 0.0,
            });
        }
        let c = self.carrier.evaluate(x)?;
        let corr = self.correction(x);
        let slope = dot(&self.beta, self.basis.t_prime(x).as_slice());
        Ok(Evaluation {
            value: c.value * corr,
            derivative: (c.derivative + c.value * slope) * corr,
        })
    }

    fn value(&self, x: f64) -> f64 {
        et_density(self, x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.carrier.breakpoints()
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "method": self.method().name(),
            "h": self.bandwidth(),
            "kernel": self.kernel().kind.to_string(),
            "p": self.basis.p,
            "basis_center": self.basis.center,
            "basis_scale": self.basis.scale,
            "beta": self.beta,
            "log_c": self.log_c,
            "domain": [self.domain.lo, self.domain.hi],
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "carrier": self.carrier.metadata(),
        })
    }
}

/// Small-bandwidth approximation `β̂ ≈ −½k₂h²Σ̂⁻¹t̄″`, in the basis coordinates.
pub fn taylor_beta(data: &Sample, basis: &CanonicalBasis, k: &KernelSpec, h: f64) -> Result<DVector<f64>> {
    let p = basis.p;
    let n = data.len() as f64;
    let tbar = basis.mean_statistic(data);
    let mut sigma = DMatrix::zeros(p, p);
    let mut t2bar = DVector::zeros(p);
    for &x in data.values() {
        let d = basis.t(x) - &tbar;
        sigma += &d * d.transpose();
        t2bar += basis.t_second(x);
    }
    sigma /= n;
    t2bar /= n;
    let solved = linalg::solve_spd(&sigma, &t2bar).map_err(|(_, rcond)| Error::DegenerateHessian { rcond })?;
    Ok(solved * (-0.5 * k.constants().k2 * h * h))
}
