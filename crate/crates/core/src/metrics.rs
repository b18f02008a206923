//! Fidelity metrics and the multi-format comparison harness.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::codec::{Codec, Role};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_same_shape<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "reference {:?} vs reconstruction {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(())
}

fn energies<T: Scalar>(x: &[T], y: &[T]) -> (f64, f64) {
    x.iter().zip(y).fold((0.0, 0.0), |(s, e), (&a, &b)| {
        let (a, b) = (a.as_f64(), b.as_f64());
        (s + a * a, e + (a - b) * (a - b))
    })
}

/// `10 log10(‖x‖² / ‖x − x̂‖²)` in dB; `+inf` for a perfect reconstruction.
pub fn sqnr<T: Scalar>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    check_same_shape(x, x_hat)?;
    let (signal, noise) = energies(x.data(), x_hat.data());
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub sqnr_db: f64,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    pub rel_fro_err: f64,
}

pub fn error_stats<T: Scalar>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<ErrorStats> {
    let sqnr_db = sqnr(x, x_hat)?;
    let (signal, noise) = energies(x.data(), x_hat.data());
    let (max, sum) = x.data().iter().zip(x_hat.data()).fold((0.0f64, 0.0), |(m, s), (&a, &b)| {
        let d = (a.as_f64() - b.as_f64()).abs();
        (m.max(d), s + d)
    });
    Ok(ErrorStats {
        sqnr_db,
        max_abs_err: max,
        mean_abs_err: sum / x.len() as f64,
        rel_fro_err: (noise / signal).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub tensor_name: String,
    pub format_name: String,
    pub granularity: String,
    /// `+inf` when the reconstruction is exact.
    pub sqnr_db: f64,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    pub rel_fro_err: f64,
    pub config: BTreeMap<String, String>,
}

impl FidelityReport {
    pub fn new(
        tensor_name: impl Into<String>,
        codec: &Codec,
        rank: usize,
        role: Role,
        stats: ErrorStats,
    ) -> Self {
        Self {
            tensor_name: tensor_name.into(),
            format_name: codec.to_string(),
            granularity: codec.granularity(rank, role),
            sqnr_db: stats.sqnr_db,
            max_abs_err: stats.max_abs_err,
            mean_abs_err: stats.mean_abs_err,
            rel_fro_err: stats.rel_fro_err,
            config: codec.config(rank, role),
        }
    }
}

/// Fake-quantizes `t` with every codec under the role's granularity. The
/// codecs run in parallel; reports keep the order of `codecs`.
pub fn compare_formats<T: Scalar>(t: &Tensor<T>, codecs: &[Codec], role: Role) -> Result<Vec<FidelityReport>> {
    let name = t.name().unwrap_or("tensor").to_owned();
    codecs
        .par_iter()
        .map(|c| {
            let q = c.fake_quantize(t, role)?;
            Ok(FidelityReport::new(name.clone(), c, t.rank(), role, error_stats(t, &q)?))
        })
        .collect()
}
