//! Competing bias-corrected estimators built on a globally fitted normal start
//! and the Gaussian kernel.

use serde_json::json;

use crate::error::{Error, Result};
use crate::estimate::{DensityEstimate, Evaluation, Interval, Method};
use crate::kde::{KernelEstimate, GAUSSIAN_DOMAIN_RADIUS};
use crate::kernels::{KernelSpec, FRAC_1_SQRT_2PI};
use crate::sample::Sample;

/// Normal density fitted by the sample mean and divisor-n sd.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalStart {
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

impl NormalStart {
    pub fn fit(data: &Sample) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::invalid(format!(
                "a normal start needs n >= 2 observations, got {}",
                data.len()
            )));
        }
        if !(data.sd() > 0.0) {
            return Err(Error::invalid("a normal start needs a sample with positive spread"));
        }
        Ok(NormalStart {
            mu_hat: data.mean(),
            sigma_hat: data.sd(),
        })
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// Kernel estimate on the data shrunk toward the mean by `s/√(s²+h²)`.
pub fn jones_fit(data: &Sample, h: f64, k: KernelSpec) -> Result<KernelEstimate> {
    check_h(h)?;
    let start = NormalStart::fit(data)?;
    let s = start.sigma_hat;
    let factor = s / (s * s + h * h).sqrt();
    let shrunk = data.values().iter().map(|x| start.mu_hat + (x - start.mu_hat) * factor).collect();
    KernelEstimate::new(shrunk, h, k, Method::Jones)
}

/// `n⁻¹Σ φ_h(xᵢ − x)·exp[½{(xᵢ−μ̂)² − (x−μ̂)²}/σ̂²]`.
#[derive(Debug, Clone)]
pub struct MultiplicativeStart {
    points: Vec<f64>,
    h: f64,
    start: NormalStart,
}

pub fn multiplicative_fit(data: &Sample, h: f64) -> Result<MultiplicativeStart> {
    check_h(h)?;
    Ok(MultiplicativeStart {
        points: data.values().to_vec(),
        h,
        start: NormalStart::fit(data)?,
    })
}

impl DensityEstimate for MultiplicativeStart {
    fn method(&self) -> Method {
        Method::Hg
    }

    fn bandwidth(&self) -> f64 {
        self.h
    }

    fn kernel(&self) -> KernelSpec {
        KernelSpec::gaussian()
    }

    fn support(&self) -> Interval {
        kde_like_support(&self.points, self.h)
    }

    fn evaluate(&self, x: f64) -> Result<Evaluation> {
        let NormalStart { mu_hat: mu, sigma_hat: s } = self.start;
        let h = self.h;
        let s2 = s * s;
        let (mut v, mut d) = (0.0, 0.0);
        for &xi in &self.points {
            let u = (xi - x) / h;
            let e = -0.5 * u * u + 0.5 * ((xi - mu).powi(2) - (x - mu).powi(2)) / s2;
            let term = e.exp();
            v += term;
            // d/dx of the exponent
            d += term * (u / h - (x - mu) / s2);
        }
        let c = FRAC_1_SQRT_2PI / (self.points.len() as f64 * h);
        Ok(Evaluation {
            value: c * v,
            derivative: c * d,
        })
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "method": "hg",
            "h": self.h,
            "kernel": "gaussian",
            "mu_hat": self.start.mu_hat,
            "sigma_hat": self.start.sigma_hat,
            "n": self.points.len(),
        })
    }
}

fn kde_like_support(points: &[f64], h: f64) -> Interval {
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Interval::new(lo - GAUSSIAN_DOMAIN_RADIUS * h, hi + GAUSSIAN_DOMAIN_RADIUS * h)
}

/// The two local-likelihood corrections of the kernel estimate.
#[derive(Debug, Clone)]
pub struct LocalCorrection {
    kde: KernelEstimate,
    start: NormalStart,
    slope: bool,
}

/// `f̂₀(x)(1+h²/σ̂²)^½ exp[−½h²(x−μ̂)²/{σ̂²(σ̂²+h²)}]`.
pub fn local_level_fit(data: &Sample, h: f64) -> Result<LocalCorrection> {
    local_fit(data, h, false)
}

/// `f̂₀(x)(1+h²/σ̂²)^½ exp[−½h²(1+h²/σ̂²){f̂₀′(x)/f̂₀(x)}²]`.
pub fn local_linear_fit(data: &Sample, h: f64) -> Result<LocalCorrection> {
    local_fit(data, h, true)
}

fn local_fit(data: &Sample, h: f64, slope: bool) -> Result<LocalCorrection> {
    check_h(h)?;
    let start = NormalStart::fit(data)?;
    Ok(LocalCorrection {
        kde: crate::kde::kde_fit(data, h, KernelSpec::gaussian())?,
        start,
        slope,
    })
}

impl LocalCorrection {
    /// `(1 + h²/σ̂²)`.
    fn inflation(&self) -> f64 {
        let r = self.kde.bandwidth() / self.start.sigma_hat;
        1.0 + r * r
    }
}

impl DensityEstimate for LocalCorrection {
    fn method(&self) -> Method {
        if self.slope {
            Method::Local2
        } else {
            Method::Local1
        }
    }

    fn bandwidth(&self) -> f64 {
        self.kde.bandwidth()
    }

    fn kernel(&self) -> KernelSpec {
        KernelSpec::gaussian()
    }

    fn support(&self) -> Interval {
        self.kde.support()
    }

    fn evaluate(&self, x: f64) -> Result<Evaluation> {
        let h = self.kde.bandwidth();
        let h2 = h * h;
        let a2 = self.inflation();
        let a = a2.sqrt();
        let (f0, f1, f2) = self.kde.derivatives(x);
        if self.slope {
            if !(f0 > 0.0) {
                return Err(Error::EvaluationOutsideSupport { x });
            }
            let q = f1 / f0;
            let dq = (f2 * f0 - f1 * f1) / (f0 * f0);
            let e = (-0.5 * h2 * a2 * q * q).exp();
            Ok(Evaluation {
                value: f0 * a * e,
                derivative: a * e * (f1 - f0 * h2 * a2 * q * dq),
            })
        } else {
            let NormalStart { mu_hat: mu, sigma_hat: s } = self.start;
            let s2 = s * s;
            let c = h2 / (s2 * (s2 + h2));
            let e = (-0.5 * c * (x - mu) * (x - mu)).exp();
            Ok(Evaluation {
                value: f0 * a * e,
                derivative: a * e * (f1 - f0 * c * (x - mu)),
            })
        }
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "method": self.method().name(),
            "h": self.kde.bandwidth(),
            "kernel": "gaussian",
            "mu_hat": self.start.mu_hat,
            "sigma_hat": self.start.sigma_hat,
            "n": self.kde.points().len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::mass_of;
    use crate::kde::kde_fit;
    use crate::mixtures::NormalMixture;
    use crate::quadrature::integrate_whole_line;
    use std::sync::Arc;

    fn phi(x: f64) -> f64 {
        FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
    }

    fn all(data: &Sample, h: f64) -> Vec<Arc<dyn DensityEstimate>> {
        vec![
            Arc::new(jones_fit(data, h, KernelSpec::gaussian()).unwrap()),
            Arc::new(multiplicative_fit(data, h).unwrap()),
            Arc::new(local_level_fit(data, h).unwrap()),
            Arc::new(local_linear_fit(data, h).unwrap()),
        ]
    }

    #[test]
    fn jones_two_points() {
        let s = Sample::new(vec![-1.0, 1.0]).unwrap();
        let j = jones_fit(&s, 1.0, KernelSpec::gaussian()).unwrap();
        let p = j.points();
        assert!((p[0] + 0.5f64.sqrt()).abs() < 1e-15 && (p[1] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn jones_variance_identity() {
        let s = NormalMixture::normal(1.0, 1.5).sample(300, 41).unwrap();
        let h = 0.5;
        let j = jones_fit(&s, h, KernelSpec::gaussian()).unwrap();
        let sup = j.support();
        let breaks = sup.breaks(0.1);
        let m1 = crate::quadrature::integrate_with_breaks(|x| x * j.value(x), &breaks, 1e-12).unwrap().value;
        let m2 = crate::quadrature::integrate_with_breaks(|x| x * x * j.value(x), &breaks, 1e-12).unwrap().value;
        let s2 = s.sd() * s.sd();
        let expect = s2 * s2 / (s2 + h * h) + h * h;
        assert!((m2 - m1 * m1 - expect).abs() < 1e-8);
        assert!((expect - (s2 + h.powi(4) / (s2 + h * h))).abs() < 1e-12);
    }

    #[test]
    fn hg_two_point_hand_evaluation() {
        let (mu, a, h) = (0.5, 0.8, 0.6);
        let s = Sample::new(vec![mu - a, mu + a]).unwrap();
        let hg = multiplicative_fit(&s, h).unwrap();
        // σ̂ = a for a symmetric pair
        let expect = phi(a / h) / h * (0.5 * a * a / (a * a)).exp();
        assert!((hg.value(mu) - expect).abs() < 1e-14);
    }

    #[test]
    fn hg_flat_start_is_kde() {
        let s = Sample::new(vec![0.0, 1e6]).unwrap();
        let hg = multiplicative_fit(&s, 0.5).unwrap();
        let k = kde_fit(&s, 0.5, KernelSpec::gaussian()).unwrap();
        for x in [-0.5, 0.0, 0.3] {
            assert!((hg.value(x) / k.value(x) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn hg_nearly_normalized() {
        let s = NormalMixture::normal(3.0, 2.0).sample(500, 8).unwrap();
        let hg = multiplicative_fit(&s, 0.4).unwrap();
        assert!((mass_of(&hg) - 1.0).abs() < 0.01);
    }

    #[test]
    fn local_level_at_mean() {
        let s = NormalMixture::standard_normal().sample(60, 1).unwrap();
        let h = 0.4;
        let l = local_level_fit(&s, h).unwrap();
        let k = kde_fit(&s, h, KernelSpec::gaussian()).unwrap();
        let sd = s.sd();
        let expect = k.value(s.mean()) * (1.0 + h * h / (sd * sd)).sqrt();
        assert!((l.value(s.mean()) - expect).abs() < 1e-15);
    }

    #[test]
    fn local_level_matches_integral_definition() {
        let s = NormalMixture::standard_normal().sample(80, 19).unwrap();
        let h = 0.35;
        let l = local_level_fit(&s, h).unwrap();
        let k = kde_fit(&s, h, KernelSpec::gaussian()).unwrap();
        let st = NormalStart::fit(&s).unwrap();
        let start = |t: f64| phi((t - st.mu_hat) / st.sigma_hat) / st.sigma_hat;
        for i in 0..20 {
            let x = -2.5 + 0.25 * i as f64;
            let smoothed = integrate_whole_line(|t| phi((t - x) / h) / h * start(t), x, h, 1e-14)
                .unwrap()
                .value;
            let def = k.value(x) * start(x) / smoothed;
            assert!((l.value(x) - def).abs() < 1e-8, "x={x}: {} vs {def}", l.value(x));
        }
    }

    #[test]
    fn local_linear_at_mode() {
        let s = Sample::new(vec![-0.5, 0.5]).unwrap();
        let h = 0.6;
        let l = local_linear_fit(&s, h).unwrap();
        let k = kde_fit(&s, h, KernelSpec::gaussian()).unwrap();
        let expect = k.value(0.0) * (1.0 + h * h / 0.25).sqrt();
        assert!((l.value(0.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn local_linear_underflow_is_an_error() {
        let s = Sample::new(vec![-0.5, 0.5]).unwrap();
        let l = local_linear_fit(&s, 0.1).unwrap();
        assert!(matches!(l.evaluate(100.0), Err(Error::EvaluationOutsideSupport { .. })));
        assert_eq!(l.value(100.0), 0.0);
    }

    #[test]
    fn single_point_rejected() {
        let s = Sample::new(vec![0.0]).unwrap();
        assert!(local_linear_fit(&s, 1.0).is_err());
        assert!(multiplicative_fit(&s, 1.0).is_err());
        assert!(jones_fit(&s, 1.0, KernelSpec::gaussian()).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        let s = NormalMixture::standard_normal().sample(40, 3).unwrap();
        for est in all(&s, 0.35) {
            let step = 1e-5;
            for i in 0..20 {
                let x = -2.5 + 0.25 * i as f64;
                let fd = (est.value(x + step) - est.value(x - step)) / (2.0 * step);
                let d = est.evaluate(x).unwrap().derivative;
                assert!((fd - d).abs() <= 1e-5 * d.abs().max(1e-3), "{:?} x={x}: {fd} vs {d}", est.method());
            }
        }
    }

    #[test]
    fn nonnegative_and_converge_to_kde() {
        // dense enough that h = 0.05 still spans many observations
        let s = NormalMixture::standard_normal().sample(2000, 12).unwrap();
        let grid: Vec<f64> = (0..41).map(|i| -2.5 + 0.125 * i as f64).collect();
        let mut gaps = vec![Vec::new(); 4];
        for h in [0.4, 0.2, 0.1, 0.05] {
            let k = kde_fit(&s, h, KernelSpec::gaussian()).unwrap();
            for (j, est) in all(&s, h).iter().enumerate() {
                let gap = grid
                    .iter()
                    .map(|&x| {
                        let v = est.value(x);
                        assert!(v >= 0.0);
                        (v - k.value(x)).abs()
                    })
                    .fold(0.0, f64::max);
                gaps[j].push(gap);
            }
        }
        for g in &gaps {
            assert!(g.windows(2).all(|w| w[1] < w[0]), "{g:?}");
        }
    }

    #[test]
    fn mass_defect_is_second_order() {
        let s = NormalMixture::standard_normal().sample(500, 99).unwrap();
        let h = 0.4;
        let j = jones_fit(&s, h, KernelSpec::gaussian()).unwrap();
        assert!((mass_of(&j) - 1.0).abs() < 1e-8);
        // the start reproduces the divisor-n variance, which cancels the h²
        // term of the mass defect for these two: halving h must shrink it
        // at least fourfold (up to a factor 2)
        let pairs: [(Arc<dyn DensityEstimate>, Arc<dyn DensityEstimate>); 2] = [
            (Arc::new(multiplicative_fit(&s, h).unwrap()), Arc::new(multiplicative_fit(&s, h / 2.0).unwrap())),
            (Arc::new(local_level_fit(&s, h).unwrap()), Arc::new(local_level_fit(&s, h / 2.0).unwrap())),
        ];
        for (a, b) in pairs {
            let (d1, d2) = (mass_of(a.as_ref()) - 1.0, mass_of(b.as_ref()) - 1.0);
            assert!(d1.abs() < 0.01 && (d1 / d2).abs() >= 2.0, "{:?}: {d1} {d2}", a.method());
        }
        // for the slope correction the h² term is ½h²(1/σ² − ∫f′²/f), nonzero
        // off normality; sampling noise adds O(1/(nh)), hence a large sample
        let m = NormalMixture::new("sep", vec![0.5, 0.5], vec![-1.5, 1.5], vec![0.5, 0.5]).unwrap();
        let s = m.sample(4000, 5).unwrap();
        let d1 = mass_of(&local_linear_fit(&s, h).unwrap()) - 1.0;
        let d2 = mass_of(&local_linear_fit(&s, h / 2.0).unwrap()) - 1.0;
        assert!((2.0..=8.0).contains(&(d1 / d2)), "local2: {d1} {d2}");
    }

    #[test]
    fn location_equivariance() {
        let s = NormalMixture::standard_normal().sample(50, 21).unwrap();
        let c = 2.75;
        let t = s.shifted(c).unwrap();
        for (a, b) in all(&s, 0.3).iter().zip(all(&t, 0.3)) {
            for i in 0..20 {
                let x = -2.0 + 0.2 * i as f64;
                let (va, vb) = (a.value(x), b.value(x + c));
                assert!((va - vb).abs() < 1e-12 * va.max(1.0), "{:?}", a.method());
            }
        }
    }
}
