//! NVFP4: per-tensor scale `s2`, E4M3 scale `s1` per 16-element block,
//! E2M1 elements.

use rayon::prelude::*;

use crate::codebook::{builtin_spec, enumerate, Codebook};
use crate::scalar::Scalar;
use crate::error::Result;
use crate::tensor::{BlockLayout, Tensor};

pub const BLOCK: usize = 16;
/// `448 * 6`: joint range of the E4M3 block scale and the E2M1 element.
pub const V_MAX: f64 = 2688.0;
const ELEM_MAX: f64 = 6.0;

#[derive(Debug, Clone)]
pub struct Nvfp4Quantized<T> {
    pub layout: BlockLayout,
    pub per_tensor_scale: T,
    /// E4M3 values; `0` marks a block whose codes are all zero.
    pub block_scales: Vec<T>,
    /// E2M1 values, block-major.
    pub codes: Vec<T>,
    /// Largest `|x~_i| / s1` seen before clipping to 6.
    pub peak_ratio: T,
    pub name: Option<String>,
}

/// `max|x| / 2688`, nudged up until `max|x| / s2 <= 2688` holds in `T`.
/// A zero tensor gets `s2 = 1`.
pub fn per_tensor_scale<T: Scalar>(amax: T) -> T {
    if amax == T::zero() {
        return T::one();
    }
    let vmax = T::of_f64(V_MAX);
    let mut s2 = amax / vmax;
    while amax / s2 > vmax {
        s2 = s2 + s2 * T::epsilon();
    }
    s2
}

pub fn nvfp4_quantize<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Nvfp4Quantized<T>> {
    nvfp4_quantize_with_scale(t, axis, per_tensor_scale(t.max_abs()))
}

/// Runs the block and element stages under a caller-chosen `s2`.
pub fn nvfp4_quantize_with_scale<T: Scalar>(t: &Tensor<T>, axis: usize, s2: T) -> Result<Nvfp4Quantized<T>> {
    let layout = BlockLayout::new(t.shape(), axis, BLOCK)?;
    let e4m3: Codebook<T> = enumerate(&builtin_spec("E4M3")?);
    let e2m1: Codebook<T> = enumerate(&builtin_spec("E2M1")?);
    let six = T::of_f64(ELEM_MAX);
    let data = layout.gather(t.data());
    let mut codes = vec![T::zero(); data.len()];
    let (block_scales, peaks): (Vec<T>, Vec<T>) = codes
        .par_chunks_mut(BLOCK)
        .zip(data.par_chunks(BLOCK))
        .map(|(out, xs)| {
            let amax = xs.iter().fold(T::zero(), |m, v| m.max(v.abs())) / s2;
            let s1 = e4m3.project(amax / six);
            if s1 == T::zero() {
                return (s1, T::zero());
            }
            let mut peak = T::zero();
            for (c, &x) in out.iter_mut().zip(xs) {
                let r = (x / s2) / s1;
                peak = peak.max(r.abs());
                *c = e2m1.project(r.max(-six).min(six));
            }
            (s1, peak)
        })
        .unzip();
    let peak_ratio = peaks.into_iter().fold(T::zero(), T::max);
    Ok(Nvfp4Quantized {
        layout,
        per_tensor_scale: s2,
        block_scales,
        codes,
        peak_ratio,
        name: t.name().map(str::to_owned),
    })
}

pub fn nvfp4_dequantize<T: Scalar>(q: &Nvfp4Quantized<T>) -> Tensor<T> {
    let s2 = q.per_tensor_scale;
    let mut out = vec![T::zero(); q.codes.len()];
    out.par_chunks_mut(BLOCK)
        .zip(q.codes.par_chunks(BLOCK))
        .zip(q.block_scales.par_iter())
        .for_each(|((dst, src), &s1)| {
            for (d, &c) in dst.iter_mut().zip(src) {
                *d = c * s1 * s2;
            }
        });
    Tensor::from_parts(q.layout.shape().to_vec(), q.layout.scatter(&out), q.name.clone())
}
