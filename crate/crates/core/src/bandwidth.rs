//! Bandwidth selection: the AMISE-optimal oracle bandwidth against a known
//! mixture, and least-squares cross-validation on data.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::bias_bench::{fmt_float, integrated_squared_bias, Weight};
use crate::error::{Error, Result};
use crate::estimate::{fit, quadrature_breaks, DensityEstimate, Method};
use crate::kernels::{KernelKind, KernelSpec};
use crate::mixtures::NormalMixture;
use crate::quadrature::integrate_with_breaks;
use crate::sample::Sample;

/// `∫wb²` below this fraction of the kernel method's value counts as zero.
const ZERO_BIAS_RATIO: f64 = 1e-12;
const CV_TOL: f64 = 1e-8;
const AMISE_CURVE_POINTS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    AmiseOracle,
    Lscv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthReport {
    pub h_selected: f64,
    pub selector: Selector,
    /// `(h, criterion)` at every grid point that could be evaluated
    pub curve: Vec<(f64, f64)>,
    /// grid points whose criterion failed, with the reason
    pub failed: Vec<(f64, String)>,
}

impl BandwidthReport {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("h,criterion\n");
        for (h, c) in &self.curve {
            let _ = writeln!(s, "{},{}", fmt_float(*h), fmt_float(*c));
        }
        s
    }
}

struct AmiseParts {
    roughness: f64,
    k2: f64,
    mass: f64,
    isb: f64,
}

fn amise_parts(m: &NormalMixture, method: Method, k: &KernelSpec, weight: Weight) -> Result<AmiseParts> {
    if method.requires_gaussian() && k.kind != KernelKind::Gaussian {
        return Err(Error::UnsupportedKernel { method: method.name() });
    }
    let c = k.constants();
    let isb = integrated_squared_bias(method, m, weight)?;
    let reference = integrated_squared_bias(Method::Kernel, m, weight)?;
    if !(isb > ZERO_BIAS_RATIO * reference) {
        return Err(Error::ZeroBias { method: method.name() });
    }
    let mass = weight.integrate(|x| weight.eval(x) * m.pdf(x), m, 1e-10)?;
    Ok(AmiseParts {
        roughness: c.roughness,
        k2: c.k2,
        mass,
        isb,
    })
}

/// `h₀ = {R(K)/k₂² · ∫wf/∫wb²}^{1/5} n^{−1/5}`, with all integrals taken
/// against the true density `m`.
pub fn amise_bandwidth(m: &NormalMixture, method: Method, k: &KernelSpec, n: usize, weight: Weight) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let p = amise_parts(m, method, k, weight)?;
    Ok((p.roughness / (p.k2 * p.k2) * p.mass / p.isb).powf(0.2) * (n as f64).powf(-0.2))
}

/// [`amise_bandwidth`] together with the AMISE curve on a log grid
/// `[h₀/4, 4h₀]` centred on `h₀`.
pub fn amise_report(m: &NormalMixture, method: Method, k: &KernelSpec, n: usize, weight: Weight) -> Result<BandwidthReport> {
    let h0 = amise_bandwidth(m, method, k, n, weight)?;
    let p = amise_parts(m, method, k, weight)?;
    let nf = n as f64;
    let half = (AMISE_CURVE_POINTS / 2) as f64;
    let curve = (0..AMISE_CURVE_POINTS)
        .map(|i| {
            let h = if i as f64 == half { h0 } else { h0 * 4f64.powf((i as f64 - half) / half) };
            let amise = p.roughness * p.mass / (nf * h) + 0.25 * p.k2 * p.k2 * h.powi(4) * p.isb;
            (h, amise)
        })
        .collect();
    Ok(BandwidthReport {
        h_selected: h0,
        selector: Selector::AmiseOracle,
        curve,
        failed: Vec::new(),
    })
}

/// `∫f̂²` over the estimate's support.
fn integrated_square(est: &dyn DensityEstimate) -> Result<f64> {
    let s = est.support();
    let step = (0.5 * est.bandwidth()).max(s.width() / 2000.0);
    Ok(integrate_with_breaks(
        |x| {
            let v = est.value(x);
            v * v
        },
        &quadrature_breaks(est, s, step),
        CV_TOL,
    )?
    .value)
}

/// `CV(h) = ∫f̂² − (2/n)Σᵢ f̂₋ᵢ(xᵢ)`, refitting the whole method for every
/// left-out observation.
pub fn lscv_criterion(data: &Sample, method: Method, k: KernelSpec, h: f64) -> Result<f64> {
    let full = fit(method, data, h, k)?;
    let sq = integrated_square(full.as_ref())?;
    let loo: Vec<Result<f64>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let rest = data.without(i)?;
            Ok(fit(method, &rest, h, k)?.value(data.values()[i]))
        })
        .collect();
    let mut sum = 0.0;
    for v in loo {
        sum += v?;
    }
    let cv = sq - 2.0 * sum / data.len() as f64;
    if !cv.is_finite() {
        return Err(Error::NonConvergence {
            what: "cross-validation",
            detail: format!("criterion is not finite at h = {h}"),
        });
    }
    Ok(cv)
}

/// Grid search of the least-squares cross-validation criterion.
pub fn lscv_select(data: &Sample, method: Method, k: KernelSpec, h_grid: &[f64]) -> Result<BandwidthReport> {
    if h_grid.is_empty() {
        return Err(Error::invalid("bandwidth grid is empty"));
    }
    if h_grid.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::invalid("bandwidth grid values must be positive"));
    }
    if h_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("bandwidth grid must be strictly increasing"));
    }
    if data.len() < 3 {
        return Err(Error::invalid(format!("cross-validation needs n >= 3, got {}", data.len())));
    }
    let results: Vec<Result<f64>> = h_grid.par_iter().map(|&h| lscv_criterion(data, method, k, h)).collect();
    let mut curve = Vec::new();
    let mut failed = Vec::new();
    let mut last_err = None;
    for (&h, r) in h_grid.iter().zip(results) {
        match r {
            Ok(cv) => curve.push((h, cv)),
            Err(e) => {
                failed.push((h, e.to_string()));
                last_err = Some(e);
            }
        }
    }
    let best = curve.iter().cloned().min_by(|a, b| a.1.total_cmp(&b.1));
    match best {
        Some((h, _)) => Ok(BandwidthReport {
            h_selected: h,
            selector: Selector::Lscv,
            curve,
            failed,
        }),
        None => Err(last_err.expect("a failure was recorded for every grid point")),
    }
}

/// `1.0592·s·n^{−1/5}`: the AMISE bandwidth of the Gaussian kernel for normal
/// data with the sample's sd.
pub fn normal_reference(data: &Sample) -> f64 {
    (4.0f64 / 3.0).powf(0.2) * data.sd() * (data.len() as f64).powf(-0.2)
}

/// `k` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp())
        .collect()
}
