//! Seeded synthetic tensors standing in for weights and activations.
//!
//! Spec strings: `gaussian:RxC:sigma`, `uniform:RxC:sigma` (values in
//! `[-sigma, sigma)`), `gaussian_outlier:RxC:sigma:fraction:scale`, each
//! with an optional trailing `:seed=N`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Gaussian,
    GaussianOutlier,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub shape: Vec<usize>,
    pub sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn gaussian(shape: Vec<usize>, sigma: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::Gaussian,
            shape,
            sigma,
            outlier_fraction: 0.0,
            outlier_scale: 1.0,
            seed,
        }
    }

    pub fn gaussian_outlier(shape: Vec<usize>, sigma: f64, fraction: f64, scale: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::GaussianOutlier,
            outlier_fraction: fraction,
            outlier_scale: scale,
            ..Self::gaussian(shape, sigma, seed)
        }
    }

    pub fn uniform(shape: Vec<usize>, sigma: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::Uniform,
            ..Self::gaussian(shape, sigma, seed)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of entries scaled as outliers, `ceil(fraction * N)`.
    pub fn outlier_count(&self) -> usize {
        if self.kind != SyntheticKind::GaussianOutlier {
            return 0;
        }
        let n: usize = self.shape.iter().product();
        let raw = self.outlier_fraction * n as f64;
        // absorb representation error such as 0.001 * 1e6 = 1000.0000000000001
        let near = raw.round();
        let count = if (raw - near).abs() <= 1e-9 * raw.max(1.0) { near } else { raw.ceil() };
        (count as usize).min(n)
    }

    fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "synthetic shape needs positive extents".into(),
            });
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidParameter(format!(
                "outlier fraction must be in [0, 1], got {}",
                self.outlier_fraction
            )));
        }
        if !self.outlier_scale.is_finite() {
            return Err(Error::InvalidParameter("outlier scale must be finite".into()));
        }
        Ok(())
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidParameter(format!("bad {what} `{s}` in synthetic spec")))
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts: Vec<&str> = s.split(':').collect();
        let mut seed = 0;
        if let Some(last) = parts.last() {
            if let Some(v) = last.strip_prefix("seed=") {
                seed = v
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad seed `{v}`")))?;
                parts.pop();
            }
        }
        let bad = || Error::InvalidParameter(format!("malformed synthetic spec `{s}`"));
        if parts.len() < 3 {
            return Err(bad());
        }
        let shape = parts[1]
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let sigma = parse_f64(parts[2], "sigma")?;
        let spec = match (parts[0], parts.len()) {
            ("gaussian", 3) => Self::gaussian(shape, sigma, seed),
            ("uniform", 3) => Self::uniform(shape, sigma, seed),
            ("gaussian_outlier", 5) => Self::gaussian_outlier(
                shape,
                sigma,
                parse_f64(parts[3], "outlier fraction")?,
                parse_f64(parts[4], "outlier scale")?,
                seed,
            ),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = self.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        match self.kind {
            SyntheticKind::Gaussian => write!(f, "gaussian:{shape}:{}", self.sigma)?,
            SyntheticKind::Uniform => write!(f, "uniform:{shape}:{}", self.sigma)?,
            SyntheticKind::GaussianOutlier => write!(
                f,
                "gaussian_outlier:{shape}:{}:{}:{}",
                self.sigma, self.outlier_fraction, self.outlier_scale
            )?,
        }
        write!(f, ":seed={}", self.seed)
    }
}

/// Deterministic draw from `spec`; all randomness comes from `spec.seed`.
pub fn synth<T: Scalar>(spec: &SyntheticSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    let n: usize = spec.shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data: Vec<f64> = match spec.kind {
        SyntheticKind::Uniform => (0..n).map(|_| rng.gen_range(-spec.sigma..spec.sigma)).collect(),
        SyntheticKind::Gaussian | SyntheticKind::GaussianOutlier => {
            let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
    };
    for i in sample(&mut rng, n, spec.outlier_count()) {
        data[i] *= spec.outlier_scale;
    }
    Tensor::new(spec.shape.clone(), data.into_iter().map(T::of_f64).collect())
        .map(|t| t.with_name(spec.to_string()))
}
