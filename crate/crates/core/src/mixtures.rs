//! Finite normal mixtures used as ground-truth test densities.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::FRAC_1_SQRT_2PI;
use crate::linalg::{solve_spd, MIN_RCOND};
use crate::quadrature::integrate_whole_line;
use crate::sample::Sample;

/// The ten-density catalog shipped with the crate.
pub const DEFAULT_CATALOG_JSON: &str = include_str!("../data/marron_wand.json");

/// Path of the shipped catalog relative to the crate root.
pub const DEFAULT_CATALOG_PATH: &str = "crates/core/data/marron_wand.json";

pub const MAX_COMPONENTS: usize = 8;
pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMixture {
    pub name: String,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl NormalMixture {
    pub fn new(name: impl Into<String>, weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let m = NormalMixture {
            name: name.into(),
            weights,
            means,
            sds,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn standard_normal() -> Self {
        Self::normal(0.0, 1.0)
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        NormalMixture {
            name: "normal".into(),
            weights: vec![1.0],
            means: vec![mean],
            sds: vec![sd],
        }
    }

    fn fail(&self, invariant: impl Into<String>) -> Error {
        Error::Validation {
            density: self.name.clone(),
            invariant: invariant.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || k > MAX_COMPONENTS {
            return Err(self.fail(format!("must have 1..={MAX_COMPONENTS} components, has {k}")));
        }
        if self.means.len() != k || self.sds.len() != k {
            return Err(self.fail(format!(
                "weights, means and sds must have equal length (got {}, {}, {})",
                k,
                self.means.len(),
                self.sds.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(self.fail("weights must be positive"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(self.fail("means must be finite"));
        }
        if self.sds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(self.fail("sds must be strictly positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(self.fail(format!("weights sum to {total}, not 1")));
        }
        let mass = integrate_whole_line(|x| self.pdf(x), self.mean(), self.sd(), 1e-10)?.value;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(self.fail(format!("density integrates to {mass}, not 1")));
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// `f`, `f'` or `f''` at `x` (`deriv` ∈ {0, 1, 2}).
    pub fn pdf_deriv(&self, x: f64, deriv: u8) -> f64 {
        assert!(deriv <= 2, "only derivatives up to order 2 are available");
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((&w, &mu), &s)| {
                let z = (x - mu) / s;
                let dens = w * FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / s;
                match deriv {
                    0 => dens,
                    1 => -dens * z / s,
                    _ => dens * (z * z - 1.0) / (s * s),
                }
            })
            .sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.pdf_deriv(x, 0)
    }

    /// `E Xᵏ` via the single-normal recursion
    /// `m_j = μ·m_{j−1} + (j−1)σ²·m_{j−2}`.
    pub fn raw_moment(&self, k: usize) -> f64 {
        assert!(k <= MAX_MOMENT_ORDER, "moments are available up to order 8");
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((&w, &mu), &s)| w * normal_raw_moments(mu, s)[k])
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.raw_moment(2) - mu * mu
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Mean, variance matrix and `E t''(X)` of the polynomial statistic
    /// `t(x) = (x, …, x^p)`.
    pub fn moment_summary(&self, p: usize) -> Result<MomentSummary> {
        if !(2..=4).contains(&p) {
            return Err(Error::invalid(format!("moment summary order must be 2, 3 or 4, got {p}")));
        }
        let m: Vec<f64> = (0..=2 * p).map(|k| self.raw_moment(k)).collect();
        MomentSummary::from_raw_moments(&m, p)
    }

    /// `n` draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let pick = WeightedIndex::new(&self.weights)
            .map_err(|e| self.fail(format!("weights unusable for sampling: {e}")))?;
        let values = (0..n)
            .map(|_| {
                let c = pick.sample(rng);
                let z: f64 = rng.sample(StandardNormal);
                self.means[c] + self.sds[c] * z
            })
            .collect();
        Sample::new(values)
    }
}

/// Independent random stream `stream` derived from a base seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Raw moments `E Xʲ`, j = 0..=8, of N(μ, σ²).
pub fn normal_raw_moments(mu: f64, sd: f64) -> [f64; MAX_MOMENT_ORDER + 1] {
    let mut m = [0.0; MAX_MOMENT_ORDER + 1];
    m[0] = 1.0;
    m[1] = mu;
    let s2 = sd * sd;
    for j in 2..=MAX_MOMENT_ORDER {
        m[j] = mu * m[j - 1] + (j - 1) as f64 * s2 * m[j - 2];
    }
    m
}

/// Moment quantities of `t(X) = (X, …, X^p)` under a density.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub p: usize,
    /// ξ = E t(X)
    pub xi: DVector<f64>,
    /// Σ = Var t(X)
    pub sigma: DMatrix<f64>,
    /// E t''(X) = (0, 2, 6μ, 12 E X²)
    pub e_t2: DVector<f64>,
}

impl MomentSummary {
    /// Build from raw moments `m[0..=2p]`.
    pub fn from_raw_moments(m: &[f64], p: usize) -> Result<Self> {
        if !(1..=4).contains(&p) || m.len() < 2 * p + 1 {
            return Err(Error::invalid("moment summary needs raw moments up to order 2p"));
        }
        let xi = DVector::from_fn(p, |j, _| m[j + 1]);
        let sigma = DMatrix::from_fn(p, p, |j, k| m[j + k + 2] - m[j + 1] * m[k + 1]);
        let full = [0.0, 2.0, 6.0 * m[1], 12.0 * m[2]];
        let e_t2 = DVector::from_fn(p, |j, _| full[j]);
        let s = MomentSummary { p, xi, sigma, e_t2 };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        let rcond = crate::linalg::reciprocal_condition(&self.sigma);
        if rcond < MIN_RCOND {
            return Err(Error::SingularMoments { rcond });
        }
        Ok(())
    }

    /// Σ⁻¹·rhs
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        solve_spd(&self.sigma, rhs).map_err(|(_, rcond)| Error::SingularMoments { rcond })
    }

    /// `t(x) − ξ`
    pub fn centered_statistic(&self, x: f64) -> DVector<f64> {
        let mut xp = 1.0;
        DVector::from_fn(self.p, |j, _| {
            xp *= x;
            xp - self.xi[j]
        })
    }
}

#[derive(Deserialize)]
struct CatalogEntry {
    name: String,
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

/// Parse and validate a catalog in the JSON schema
/// `[{"name": …, "weights": […], "means": […], "sds": […]}, …]`.
pub fn parse_catalog(text: &str, source_name: &str) -> Result<Vec<NormalMixture>> {
    let entries: Vec<CatalogEntry> = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        message: format!("{e}"),
    })?;
    entries
        .into_iter()
        .map(|e| NormalMixture::new(e.name, e.weights, e.means, e.sds))
        .collect()
}

pub fn load_catalog(path: &Path) -> Result<Vec<NormalMixture>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text, &path.display().to_string())
}

pub fn default_catalog() -> Vec<NormalMixture> {
    parse_catalog(DEFAULT_CATALOG_JSON, "built-in catalog").expect("shipped catalog is valid")
}

/// Case-insensitive lookup by name; underscores and hyphens match spaces.
pub fn find<'a>(catalog: &'a [NormalMixture], name: &str) -> Option<&'a NormalMixture> {
    let key = name.to_ascii_lowercase().replace(['_', '-'], " ");
    catalog.iter().find(|m| m.name.to_ascii_lowercase() == key)
}
