//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Each panel is integrated with the 15-point Kronrod rule; the embedded
//! 7-point Gauss rule gives the local error estimate. Panels with the largest
//! estimated error are bisected until the summed estimate falls below the
//! requested tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Maximum number of panels before giving up.
pub const MAX_PANELS: usize = 10_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// The 15 abscissae of the Kronrod rule on `[a, b]`, centre last.
fn panel_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let mut x = [0.0; 15];
    for j in 0..7 {
        x[2 * j] = c - hw * XGK[j];
        x[2 * j + 1] = c + hw * XGK[j];
    }
    x[14] = c;
    x
}

/// Kronrod value, error estimate and `∫|f|` from function values laid out as in
/// [`panel_nodes`].
fn panel_rule(fv: &[f64; 15], hw: f64) -> (f64, f64, f64) {
    let fc = fv[14];
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    for j in 0..7 {
        let s = fv[2 * j] + fv[2 * j + 1];
        resk += WGK[j] * s;
        resabs += WGK[j] * (fv[2 * j].abs() + fv[2 * j + 1].abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = resk * hw;
    let resabs = resabs * hw.abs();
    let resasc = resasc * hw.abs();
    let mut err = ((resk - resg) * hw).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err, resabs)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn eval_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let x = panel_nodes(a, b);
    let mut fv = [0.0; 15];
    for (v, &xi) in fv.iter_mut().zip(x.iter()) {
        *v = f(xi);
        if !v.is_finite() {
            return Err(Error::NonConvergence {
                what: "quadrature",
                detail: format!("integrand is not finite at x = {xi}"),
            });
        }
    }
    let (value, error, _) = panel_rule(&fv, 0.5 * (b - a));
    Ok(Panel { a, b, value, error })
}

/// `∫_a^b f` to absolute accuracy `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<IntegrationResult> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Like [`integrate`], but starting from the initial partition given by the
/// sorted breakpoints (first and last entries are the integration limits).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    tol: f64,
) -> Result<IntegrationResult> {
    if breaks.len() < 2 {
        return Err(Error::invalid("integration needs at least two breakpoints"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    for w in breaks.windows(2) {
        if !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite() {
            return Err(Error::invalid(format!(
                "integration limits must be finite and increasing, got [{}, {}]",
                w[0], w[1]
            )));
        }
    }

    let mut heap = BinaryHeap::with_capacity(64);
    let mut error = 0.0;
    for w in breaks.windows(2) {
        let p = eval_panel(&f, w[0], w[1])?;
        error += p.error;
        heap.push(p);
    }

    while error > tol {
        if heap.len() >= MAX_PANELS {
            return Err(Error::NonConvergence {
                what: "quadrature",
                detail: format!(
                    "{MAX_PANELS} panels reached with error estimate {error:.3e} > {tol:.3e}"
                ),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            return Err(Error::NonConvergence {
                what: "quadrature",
                detail: format!("panel [{}, {}] cannot be bisected further", worst.a, worst.b),
            });
        }
        let left = eval_panel(&f, worst.a, mid)?;
        let right = eval_panel(&f, mid, worst.b)?;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Resum periodically so the running error total does not drift.
        if heap.len() % 256 == 0 {
            error = heap.iter().map(|p| p.error).sum();
        }
    }

    let panels = heap.len();
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(IntegrationResult {
        value,
        error_estimate: error,
        evaluations: 15 * (2 * panels - (breaks.len() - 1)),
    })
}

/// Window half-widths (in units of `scale`) tried by [`integrate_whole_line`].
const WHOLE_LINE_FIRST: f64 = 8.0;
const WHOLE_LINE_STEP: f64 = 4.0;
const WHOLE_LINE_EXPANSIONS: usize = 6;

/// `∫_{-∞}^{∞} f` for integrands that decay in both tails.
///
/// Integrates over `[center - m·scale, center + m·scale]` for m = 8, 12, 16, …
/// and stops once the contribution of the newest shell is below `tol`.
pub fn integrate_whole_line<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    scale: f64,
    tol: f64,
) -> Result<IntegrationResult> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let panels_per_unit = 4.0;
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        let k = ((hi - lo) * panels_per_unit).round().max(1.0) as usize;
        (0..=k)
            .map(|i| center + scale * (lo + (hi - lo) * i as f64 / k as f64))
            .collect()
    };

    let mut m = WHOLE_LINE_FIRST;
    let first = integrate_with_breaks(&f, &grid(-m, m), 0.5 * tol)?;
    let mut value = first.value;
    let mut error = first.error_estimate;
    let mut evaluations = first.evaluations;

    for _ in 0..WHOLE_LINE_EXPANSIONS {
        let next = m + WHOLE_LINE_STEP;
        let left = integrate_with_breaks(&f, &grid(-next, -m), 0.25 * tol)?;
        let right = integrate_with_breaks(&f, &grid(m, next), 0.25 * tol)?;
        let increment = left.value + right.value;
        value += increment;
        error += left.error_estimate + right.error_estimate;
        evaluations += left.evaluations + right.evaluations;
        m = next;
        if increment.abs() < tol {
            return Ok(IntegrationResult {
                value,
                error_estimate: error + increment.abs(),
                evaluations,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "whole-line quadrature",
        detail: format!("tail increments still above {tol:.3e} at window half-width {m}·scale"),
    })
}

/// Adaptive quadrature of vector-valued integrands of the form
/// `g(x, base(x))`, where `base` is expensive and fixed.
///
/// The panel partition and the cached values of `base` at every node persist
/// between calls, so a sequence of integrals against the same base function
/// (e.g. the moments of a tilted density inside a Newton iteration) only pays
/// for new nodes when a call needs further refinement.
pub struct CachedPanels<B> {
    base: B,
    panels: Vec<CachedPanel>,
}

struct CachedPanel {
    a: f64,
    b: f64,
    x: [f64; 15],
    base: [f64; 15],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIntegral {
    pub values: Vec<f64>,
    pub error_estimates: Vec<f64>,
    pub panels: usize,
}

impl<B: Fn(f64) -> f64> CachedPanels<B> {
    /// Partition `breaks` into panels and evaluate `base` on their nodes.
    pub fn new(base: B, breaks: &[f64]) -> Result<Self> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("cached quadrature needs increasing breakpoints"));
        }
        let mut out = CachedPanels {
            base,
            panels: Vec::with_capacity(breaks.len()),
        };
        for w in breaks.windows(2) {
            let p = out.make_panel(w[0], w[1]);
            out.panels.push(p);
        }
        Ok(out)
    }

    fn make_panel(&self, a: f64, b: f64) -> CachedPanel {
        let x = panel_nodes(a, b);
        let mut base = [0.0; 15];
        for (v, &xi) in base.iter_mut().zip(x.iter()) {
            *v = (self.base)(xi);
        }
        CachedPanel { a, b, x, base }
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// Largest and smallest node of the current partition.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        self.panels.iter().flat_map(|p| p.x.iter().copied())
    }

    /// Integrate the `dim` components written by `g(x, base(x), out)`, refining
    /// until every component's summed error estimate is below `tol`.
    pub fn integrate<G>(&mut self, g: G, dim: usize, tol: f64) -> Result<VectorIntegral>
    where
        G: Fn(f64, f64, &mut [f64]),
    {
        let mut fv = vec![[0.0f64; 15]; dim];
        let mut out = vec![0.0; dim];
        loop {
            let mut values = vec![0.0; dim];
            let mut errors = vec![0.0; dim];
            let mut panel_err = Vec::with_capacity(self.panels.len());
            for p in &self.panels {
                for j in 0..15 {
                    g(p.x[j], p.base[j], &mut out);
                    for (c, &o) in out.iter().enumerate() {
                        if !o.is_finite() {
                            return Err(Error::NonConvergence {
                                what: "cached quadrature",
                                detail: format!("integrand is not finite at x = {}", p.x[j]),
                            });
                        }
                        fv[c][j] = o;
                    }
                }
                let hw = 0.5 * (p.b - p.a);
                let mut worst = 0.0f64;
                for c in 0..dim {
                    let (v, e, _) = panel_rule(&fv[c], hw);
                    values[c] += v;
                    errors[c] += e;
                    worst = worst.max(e);
                }
                panel_err.push(worst);
            }
            if errors.iter().all(|&e| e <= tol) {
                return Ok(VectorIntegral {
                    values,
                    error_estimates: errors,
                    panels: self.panels.len(),
                });
            }
            let n = self.panels.len();
            if n >= MAX_PANELS {
                let worst = errors.iter().cloned().fold(0.0, f64::max);
                return Err(Error::NonConvergence {
                    what: "cached quadrature",
                    detail: format!("{MAX_PANELS} panels reached with error estimate {worst:.3e}"),
                });
            }
            // Split every panel carrying more than its share of the budget,
            // and always the worst one.
            let share = tol / n as f64;
            let worst_idx = panel_err
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let mut next = Vec::with_capacity(n + n / 2 + 1);
            for (i, p) in std::mem::take(&mut self.panels).into_iter().enumerate() {
                if (panel_err[i] > share || i == worst_idx) && next.len() + 2 <= MAX_PANELS {
                    let mid = 0.5 * (p.a + p.b);
                    if !(p.a < mid && mid < p.b) {
                        return Err(Error::NonConvergence {
                            what: "cached quadrature",
                            detail: format!("panel [{}, {}] cannot be bisected further", p.a, p.b),
                        });
                    }
                    next.push(self.make_panel(p.a, mid));
                    next.push(self.make_panel(mid, p.b));
                } else {
                    next.push(p);
                }
            }
            self.panels = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::FRAC_1_SQRT_2PI;
    use std::f64::consts::PI;

    fn phi(x: f64) -> f64 {
        FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
    }

    #[test]
    fn simple_integrals() {
        let r = integrate(|_| 1.0, 0.0, 1.0, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        let r = integrate(phi, -8.0, 8.0, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        assert!(r.error_estimate <= 1e-10);
        let r = integrate(|x| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn whole_line_examples() {
        let r = integrate_whole_line(phi, 0.0, 1.0, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let d2 = |x: f64| ((x * x - 1.0) * phi(x)).powi(2);
        let r = integrate_whole_line(d2, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 3.0 / (8.0 * PI.sqrt())).abs() < 1e-11);
        let r = integrate_whole_line(|x| x * phi(x), 0.0, 1.0, 1e-10).unwrap();
        assert!(r.value.abs() < 1e-10);
    }

    #[test]
    fn fine_riemann_oracle_for_phi_second_derivative() {
        // midpoint rule with 2e6 cells on [-12, 12]
        let d2 = |x: f64| ((x * x - 1.0) * phi(x)).powi(2);
        let cells = 2_000_000;
        let w = 24.0 / cells as f64;
        let riemann: f64 = (0..cells).map(|i| d2(-12.0 + (i as f64 + 0.5) * w) * w).sum();
        let r = integrate_whole_line(d2, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - riemann).abs() < 1e-10);
    }

    #[test]
    fn narrow_spike_is_resolved() {
        let s = 0.01;
        let f = |x: f64| phi((x - 0.3) / s) / s;
        // a panel has to see the spike before bisection can find it
        let breaks: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
        let r = integrate_with_breaks(f, &breaks, 1e-9).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let f = |x: f64| if x > 0.123_456 { 1.0 } else { 0.0 };
        let err = integrate(f, 0.0, 1.0, 1e-300).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
        let err = integrate_whole_line(|_| 1.0, 0.0, 1.0, 1e-6).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn bad_limits_rejected() {
        assert!(integrate(|x| x, 1.0, 0.0, 1e-8).is_err());
        assert!(integrate(|x| x, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cached_panels_match_scalar() {
        let mut cp = CachedPanels::new(phi, &[-8.0, 0.0, 8.0]).unwrap();
        let r = cp
            .integrate(
                |x, b, out| {
                    out[0] = b;
                    out[1] = x * x * b;
                    out[2] = (x).exp() * b;
                },
                3,
                1e-12,
            )
            .unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-12);
        assert!((r.values[1] - 1.0).abs() < 1e-12);
        assert!((r.values[2] - 0.5f64.exp()).abs() < 1e-11);
        let before = cp.panel_count();
        // a second call at the same accuracy reuses the partition
        cp.integrate(|_, b, out| out[0] = b, 1, 1e-12).unwrap();
        assert_eq!(cp.panel_count(), before);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn poly(c: &[f64], x: f64) -> f64 {
            c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
        }

        proptest! {
            #[test]
            fn additivity(c in prop::collection::vec(-5.0f64..5.0, 1..6), split in 0.05f64..0.95) {
                let tol = 1e-10;
                let f = |x: f64| poly(&c, x).sin() + poly(&c, x);
                let whole = integrate(f, 0.0, 1.0, tol).unwrap().value;
                let a = integrate(f, 0.0, split, tol).unwrap().value;
                let b = integrate(f, split, 1.0, tol).unwrap().value;
                prop_assert!((a + b - whole).abs() <= 2.0 * tol);
            }

            #[test]
            fn linearity(f in prop::collection::vec(-3.0f64..3.0, 1..6),
                         g in prop::collection::vec(-3.0f64..3.0, 1..6),
                         alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
                let tol = 1e-10;
                let lhs = integrate(|x| alpha * poly(&f, x) + beta * poly(&g, x), 0.0, 1.0, tol).unwrap().value;
                let rf = integrate(|x| poly(&f, x), 0.0, 1.0, tol).unwrap().value;
                let rg = integrate(|x| poly(&g, x), 0.0, 1.0, tol).unwrap().value;
                prop_assert!((lhs - alpha * rf - beta * rg).abs() <= tol);
            }
        }
    }
}
