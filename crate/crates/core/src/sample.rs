use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// An immutable batch of univariate observations with cached summaries.
///
/// The standard deviation uses divisor `n`, so that a quadratic moment match
/// reproduces exactly the raw empirical variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    values: Vec<f64>,
    mean: f64,
    sd: f64,
    power_means: [f64; 4],
    min: f64,
    max: f64,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample must contain at least one value"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample contains non-finite value {bad}")));
        }
        let n = values.len() as f64;
        let mut power_means = [0.0; 4];
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &x in &values {
            let mut xp = 1.0;
            for pm in power_means.iter_mut() {
                xp *= x;
                *pm += xp;
            }
            min = min.min(x);
            max = max.max(x);
        }
        for pm in power_means.iter_mut() {
            *pm /= n;
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Ok(Sample {
            values,
            mean,
            sd: var.sqrt(),
            power_means,
            min,
            max,
        })
    }

    /// Read one value per line; blank lines and `#` comments are skipped.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message: format!("cannot parse '{line}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: i + 1,
                    message: format!("value '{line}' is not finite"),
                });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 0,
                message: "no data values found".into(),
            });
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard deviation with divisor `n`.
    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `n⁻¹Σxᵢᵏ` for k = 1..=4.
    pub fn power_mean(&self, k: usize) -> f64 {
        assert!((1..=4).contains(&k), "power means are cached for k = 1..4");
        self.power_means[k - 1]
    }

    /// Mean second derivatives of the raw polynomial basis `(x, x², …, x^p)`:
    /// `(0, 2, 6x̄, 12·n⁻¹Σxᵢ²)` truncated to `p` entries.
    pub fn mean_basis_second_derivatives(&self, p: usize) -> Vec<f64> {
        let full = [0.0, 2.0, 6.0 * self.mean, 12.0 * self.power_means[1]];
        full[..p.min(4)].to_vec()
    }

    pub fn distinct_count(&self) -> usize {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    }

    /// Leave-one-out copy without observation `i`.
    pub fn without(&self, i: usize) -> Result<Sample> {
        let mut v = self.values.clone();
        v.remove(i);
        Sample::new(v)
    }

    pub fn shifted(&self, c: f64) -> Result<Sample> {
        Sample::new(self.values.iter().map(|x| x + c).collect())
    }

    pub fn affine(&self, scale: f64, shift: f64) -> Result<Sample> {
        Sample::new(self.values.iter().map(|x| scale * x + shift).collect())
    }
}
