//! Integer baselines: symmetric per-group scaling for weights and
//! zero-point (asymmetric) scaling for activations and KV states.
//!
//! A group is one fiber along `axis`. Codes are stored fiber-major.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BlockLayout, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntMode {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone)]
pub struct IntQuantized<T> {
    pub layout: BlockLayout,
    pub bits: u32,
    pub mode: IntMode,
    /// Fiber-major codes.
    pub codes: Vec<i32>,
    pub scales: Vec<T>,
    /// One per group; empty for symmetric.
    pub zero_points: Vec<i32>,
    pub name: Option<String>,
}

impl<T: Scalar> IntQuantized<T> {
    pub fn axis(&self) -> usize {
        self.layout.axis()
    }

    /// Inclusive code range for this mode and bit width.
    pub fn code_range(&self) -> (i32, i32) {
        code_range(self.mode, self.bits)
    }

    /// Codes in row-major order.
    pub fn codes_row_major(&self) -> Vec<i32> {
        self.layout.scatter(&self.codes)
    }
}

fn code_range(mode: IntMode, bits: u32) -> (i32, i32) {
    match mode {
        IntMode::Symmetric => {
            let q = (1 << (bits - 1)) - 1;
            (-q, q)
        }
        IntMode::Asymmetric => (0, (1 << bits) - 1),
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 4 || bits == 8 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("integer bit width must be 4 or 8, got {bits}")))
    }
}

pub fn int_quantize_symmetric<T: Scalar>(t: &Tensor<T>, axis: usize, bits: u32) -> Result<IntQuantized<T>> {
    check_bits(bits)?;
    let layout = BlockLayout::fibers(t.shape(), axis)?;
    let data = layout.gather(t.data());
    let n = layout.block_size();
    let qmax_i = (1 << (bits - 1)) - 1;
    let qmax = T::from_i32(qmax_i).unwrap();
    let mut codes = vec![0i32; data.len()];
    let scales: Vec<T> = codes
        .par_chunks_mut(n)
        .zip(data.par_chunks(n))
        .map(|(out, xs)| {
            let amax = xs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if amax == T::zero() {
                return T::one();
            }
            for (c, &x) in out.iter_mut().zip(xs) {
                let q = (x * qmax / amax).round();
                *c = q.to_i32().unwrap().clamp(-qmax_i, qmax_i);
            }
            amax / qmax
        })
        .collect();
    Ok(IntQuantized {
        layout,
        bits,
        mode: IntMode::Symmetric,
        codes,
        scales,
        zero_points: Vec::new(),
        name: t.name().map(str::to_owned),
    })
}

/// Zero-point quantization. The group range is widened to include 0 so
/// that groups not straddling zero still satisfy the half-step error
/// bound; a constant group `c` uses `scale = |c|` and a single code so it
/// reconstructs exactly.
pub fn int_quantize_asymmetric<T: Scalar>(t: &Tensor<T>, axis: usize, bits: u32) -> Result<IntQuantized<T>> {
    check_bits(bits)?;
    let layout = BlockLayout::fibers(t.shape(), axis)?;
    let data = layout.gather(t.data());
    let n = layout.block_size();
    let levels_i = (1 << bits) - 1;
    let levels = T::from_i32(levels_i).unwrap();
    let mut codes = vec![0i32; data.len()];
    let (scales, zero_points): (Vec<T>, Vec<i32>) = codes
        .par_chunks_mut(n)
        .zip(data.par_chunks(n))
        .map(|(out, xs)| {
            let (lo, hi) = xs
                .iter()
                .fold((xs[0], xs[0]), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if lo == hi {
                let c = lo;
                return if c == T::zero() {
                    (T::one(), 0)
                } else if c < T::zero() {
                    out.fill(0);
                    (-c, 1)
                } else {
                    out.fill(1);
                    (c, 0)
                };
            }
            let (lo, hi) = (lo.min(T::zero()), hi.max(T::zero()));
            let range = hi - lo;
            let zp = (-lo * levels / range).round().to_i32().unwrap().clamp(0, levels_i);
            for (c, &x) in out.iter_mut().zip(xs) {
                let q = (x * levels / range).round().to_i32().unwrap();
                *c = (q + zp).clamp(0, levels_i);
            }
            (range / levels, zp)
        })
        .unzip();
    Ok(IntQuantized {
        layout,
        bits,
        mode: IntMode::Asymmetric,
        codes,
        scales,
        zero_points,
        name: t.name().map(str::to_owned),
    })
}

pub fn int_dequantize<T: Scalar>(q: &IntQuantized<T>) -> Tensor<T> {
    let n = q.layout.block_size();
    let mut out = vec![T::zero(); q.codes.len()];
    out.par_chunks_mut(n)
        .zip(q.codes.par_chunks(n))
        .enumerate()
        .for_each(|(g, (dst, src))| {
            let scale = q.scales[g];
            let zp = q.zero_points.get(g).copied().unwrap_or(0);
            for (d, &c) in dst.iter_mut().zip(src) {
                *d = scale * T::from_i32(c - zp).unwrap();
            }
        });
    Tensor::from_parts(q.layout.shape().to_vec(), q.layout.scatter(&out), q.name.clone())
}
