//! Leading-order bias factors `b(x)` (bias ≈ ½k₂h²b(x)) of every method
//! against a known normal mixture, their integrated squares, the
//! ratio-to-kernel benchmark table, and a Monte Carlo check of the bias and
//! variance approximations.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{fit, Method};
use crate::kernels::KernelSpec;
use crate::mixtures::{stream_rng, MomentSummary, NormalMixture};
use crate::quadrature::{integrate_whole_line, integrate_with_breaks};

pub const ISB_TOL: f64 = 1e-7;

/// Weight function `w(x)` for integrated criteria.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Weight {
    #[default]
    Unit,
    /// indicator of `[lo, hi]`
    Window { lo: f64, hi: f64 },
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Weight::Unit => 1.0,
            Weight::Window { lo, hi } => {
                if lo <= x && x <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ w·f` for an integrand living on the scale of `m`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, m: &NormalMixture, tol: f64) -> Result<f64> {
        match *self {
            Weight::Unit => Ok(integrate_whole_line(f, m.mean(), m.sd(), tol)?.value),
            Weight::Window { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::invalid(format!("empty weight window [{lo}, {hi}]")));
                }
                let step = 0.25 * m.sds.iter().cloned().fold(f64::INFINITY, f64::min);
                let k = ((hi - lo) / step).ceil().clamp(1.0, 4000.0) as usize;
                let breaks: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
                Ok(integrate_with_breaks(f, &breaks, tol)?.value)
            }
        }
    }
}

/// `g(x) = (E t″)ᵀΣ⁻¹(t(x) − ξ)` for the raw polynomial basis of `summary`.
pub fn g_function(summary: &MomentSummary, x: f64) -> Result<f64> {
    let coef = summary.solve(&summary.e_t2)?;
    Ok(coef.dot(&summary.centered_statistic(x)))
}

#[derive(Debug, Clone)]
enum Shape {
    Kernel,
    /// `Σ⁻¹E t″` and ξ
    Et { coef: DVector<f64>, summary: MomentSummary },
    Jones,
    Hg,
    Local1,
    Local2,
}

/// The bias factor of one method under one mixture.
#[derive(Debug, Clone)]
pub struct BiasProfile {
    pub method: Method,
    pub density: NormalMixture,
    mu: f64,
    var: f64,
    shape: Shape,
}

impl BiasProfile {
    pub fn new(method: Method, density: &NormalMixture) -> Result<Self> {
        let shape = match method {
            Method::Kernel => Shape::Kernel,
            Method::Et(1) => Shape::Kernel,
            Method::Et(p) => {
                let summary = density.moment_summary(p as usize)?;
                Shape::Et {
                    coef: summary.solve(&summary.e_t2)?,
                    summary,
                }
            }
            Method::Jones => Shape::Jones,
            Method::Hg => Shape::Hg,
            Method::Local1 => Shape::Local1,
            Method::Local2 => Shape::Local2,
        };
        Ok(BiasProfile {
            method,
            density: density.clone(),
            mu: density.mean(),
            var: density.variance(),
            shape,
        })
    }

    /// `b(x)`.
    pub fn b(&self, x: f64) -> f64 {
        let m = &self.density;
        let f = m.pdf(x);
        let f1 = m.pdf_deriv(x, 1);
        let f2 = m.pdf_deriv(x, 2);
        let (mu, v) = (self.mu, self.var);
        match &self.shape {
            Shape::Kernel => f2,
            Shape::Et { coef, summary } => f2 - f * coef.dot(&summary.centered_statistic(x)),
            Shape::Jones => f2 + (f + (x - mu) * f1) / v,
            Shape::Local1 => f2 - f * ((x - mu) * (x - mu) / v - 1.0) / v,
            // the remaining two divide by f, which underflows far out; the
            // factor is negligible there anyway
            Shape::Hg if f > 0.0 => {
                let score = f1 / f;
                let r = score + (x - mu) / v;
                f2 - f1 * score + f * (r * r + 1.0 / v)
            }
            Shape::Local2 if f > 0.0 => f2 - f1 * f1 / f + f / v,
            Shape::Hg | Shape::Local2 => f2,
        }
    }
}

/// `b(x)` for `method` under `m`.
pub fn bias_factor(method: Method, m: &NormalMixture, x: f64) -> Result<f64> {
    Ok(BiasProfile::new(method, m)?.b(x))
}

/// `∫ w·b²`.
pub fn integrated_squared_bias(method: Method, m: &NormalMixture, weight: Weight) -> Result<f64> {
    let prof = BiasProfile::new(method, m)?;
    weight.integrate(
        |x| {
            let b = prof.b(x);
            weight.eval(x) * b * b
        },
        m,
        ISB_TOL,
    )
}

/// Root integrated squared bias of each method relative to the kernel method.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub densities: Vec<String>,
    pub methods: Vec<Method>,
    /// `entries[row][col]`
    pub entries: Vec<Vec<f64>>,
}

fn tag(e: Error, density: &str, method: &str) -> Error {
    match e {
        Error::NonConvergence { what, detail } => Error::NonConvergence {
            what,
            detail: format!("{density}, {method}: {detail}"),
        },
        other => other,
    }
}

/// Rows in catalog order, columns in [`Method::TABLE`] order, unit weight.
pub fn benchmark_table(catalog: &[NormalMixture]) -> Result<BenchmarkTable> {
    let rows: Vec<Result<Vec<f64>>> = catalog
        .par_iter()
        .map(|m| {
            let base = integrated_squared_bias(Method::Kernel, m, Weight::Unit)
                .map_err(|e| tag(e, &m.name, "kernel"))?;
            Method::TABLE
                .iter()
                .map(|&method| {
                    integrated_squared_bias(method, m, Weight::Unit)
                        .map(|isb| (isb / base).sqrt())
                        .map_err(|e| tag(e, &m.name, &method.name()))
                })
                .collect()
        })
        .collect();
    Ok(BenchmarkTable {
        densities: catalog.iter().map(|m| m.name.clone()).collect(),
        methods: Method::TABLE.to_vec(),
        entries: rows.into_iter().collect::<Result<_>>()?,
    })
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("density");
        for m in &self.methods {
            s.push(',');
            s.push_str(&m.name());
        }
        s.push('\n');
        for (name, row) in self.densities.iter().zip(&self.entries) {
            s.push_str(&csv_field(name));
            for v in row {
                let _ = write!(s, ",{}", fmt_float(*v));
            }
            s.push('\n');
        }
        s
    }

    /// Aligned text, four decimals.
    pub fn to_text(&self) -> String {
        let w = self.densities.iter().map(|d| d.len()).max().unwrap_or(7).max(7);
        let mut s = format!("{:<w$}", "density");
        for m in &self.methods {
            let _ = write!(s, " {:>7}", m.name());
        }
        s.push('\n');
        for (name, row) in self.densities.iter().zip(&self.entries) {
            let _ = write!(s, "{name:<w$}");
            for v in row {
                let _ = write!(s, " {v:>7.4}");
            }
            s.push('\n');
        }
        s
    }
}

/// Round-trip exact float formatting used in every CSV the crate writes.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A bias factor after one exponential-family correction round.
#[derive(Debug, Clone)]
pub struct CorrectedBias<B> {
    b: B,
    density: NormalMixture,
    summary: MomentSummary,
    coef: DVector<f64>,
    pub d: f64,
    pub gamma: DVector<f64>,
}

impl<B: Fn(f64) -> f64> CorrectedBias<B> {
    /// `b(x) − f(x)·γ(b)ᵀΣ⁻¹(t(x) − ξ)`.
    pub fn eval(&self, x: f64) -> f64 {
        (self.b)(x) - self.density.pdf(x) * self.coef.dot(&self.summary.centered_statistic(x))
    }
}

/// Bias factor of the exponential-family correction applied to a start
/// estimator whose own bias factor is `b`: with `d = ∫b` and
/// `γ(b) = ∫b·t − (2d/k₂)ξ`, the result is `b − f·γᵀΣ⁻¹(t − ξ)`.
pub fn bias_after_et<B: Fn(f64) -> f64>(b: B, m: &NormalMixture, p: usize, k: &KernelSpec) -> Result<CorrectedBias<B>> {
    let summary = m.moment_summary(p)?;
    // tolerances relative to ∫|integrand|, which can be large for wide mixtures
    let tight = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let scale = Weight::Unit.integrate(|x| g(x).abs(), m, 1e-6)?;
        Weight::Unit.integrate(g, m, 1e-11 * scale.max(1e-3))
    };
    let d = tight(&|x| b(x))?;
    let mut gamma = DVector::zeros(p);
    for j in 0..p {
        let mom = tight(&|x| b(x) * x.powi(j as i32 + 1))?;
        gamma[j] = mom - 2.0 * d / k.constants().k2 * summary.xi[j];
    }
    let coef = summary.solve(&gamma)?;
    Ok(CorrectedBias {
        b,
        density: m.clone(),
        summary,
        coef,
        d,
        gamma,
    })
}

/// One grid point of a Monte Carlo bias/variance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub x: f64,
    pub empirical_bias: f64,
    pub predicted_bias: f64,
    pub empirical_var: f64,
    pub predicted_var: f64,
    /// `(empirical − predicted)` bias over its Monte Carlo standard error
    pub z_bias: f64,
    /// `(empirical − predicted)` variance over its Monte Carlo standard error
    pub z_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub density: String,
    pub method: Method,
    pub n: usize,
    pub h: f64,
    pub reps: usize,
    pub seed: u64,
    /// replicates whose fit failed (excluded from the moments)
    pub failures: usize,
    pub first_failure: Option<String>,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,empirical_bias,predicted_bias,empirical_var,predicted_var,z_bias,z_var\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_float(r.x),
                fmt_float(r.empirical_bias),
                fmt_float(r.predicted_bias),
                fmt_float(r.empirical_var),
                fmt_float(r.predicted_var),
                fmt_float(r.z_bias),
                fmt_float(r.z_var)
            );
        }
        s
    }
}

/// Simulate `reps` samples of size `n` from `m`, fit `method` to each and
/// compare the pointwise mean and variance at `x_grid` with
/// `½k₂h²b(x)` and `R(K)f(x)/(nh) − f(x)²/n`.
///
/// Replicate `r` draws from stream `r` of `seed`, so the report does not
/// depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn mc_verify_proposition(
    m: &NormalMixture,
    method: Method,
    kernel: KernelSpec,
    n: usize,
    h: f64,
    reps: usize,
    seed: u64,
    x_grid: &[f64],
) -> Result<McReport> {
    if reps < 2 {
        return Err(Error::invalid("Monte Carlo needs at least two replicates"));
    }
    let prof = BiasProfile::new(method, m)?;
    let runs: Vec<std::result::Result<Vec<f64>, String>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let sample = m.sample_with(n, &mut rng).map_err(|e| e.to_string())?;
            let est = fit(method, &sample, h, kernel).map_err(|e| e.to_string())?;
            Ok(x_grid.iter().map(|&x| est.value(x)).collect())
        })
        .collect();

    let g = x_grid.len();
    let mut ok = 0usize;
    let mut failures = 0usize;
    let mut first_failure = None;
    let mut sum = vec![0.0; g];
    for run in &runs {
        match run {
            Ok(v) => {
                ok += 1;
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
            Err(e) => {
                failures += 1;
                first_failure.get_or_insert_with(|| e.clone());
            }
        }
    }
    if ok < 2 {
        return Err(Error::NonConvergence {
            what: "Monte Carlo",
            detail: format!("only {ok} of {reps} replicates could be fitted: {}", first_failure.unwrap_or_default()),
        });
    }
    let okf = ok as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / okf).collect();
    let mut m2 = vec![0.0; g];
    let mut m4 = vec![0.0; g];
    for v in runs.iter().flatten() {
        for i in 0..g {
            let d = v[i] - mean[i];
            m2[i] += d * d;
            m4[i] += d * d * d * d;
        }
    }
    let c = kernel.constants();
    let rows = x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = m.pdf(x);
            let var = m2[i] / (okf - 1.0);
            let central4 = m4[i] / okf;
            let predicted_bias = 0.5 * c.k2 * h * h * prof.b(x);
            let predicted_var = c.roughness * f / (n as f64 * h) - f * f / n as f64;
            let empirical_bias = mean[i] - f;
            let se_mean = (var / okf).sqrt();
            let se_var = ((central4 - var * var).max(0.0) / okf).sqrt();
            McRow {
                x,
                empirical_bias,
                predicted_bias,
                empirical_var: var,
                predicted_var,
                z_bias: (empirical_bias - predicted_bias) / se_mean,
                z_var: (var - predicted_var) / se_var,
            }
        })
        .collect();
    Ok(McReport {
        density: m.name.clone(),
        method,
        n,
        h,
        reps,
        seed,
        failures,
        first_failure,
        rows,
    })
}
