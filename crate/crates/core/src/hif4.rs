//! HiF4: three-level scaling over E1M2 elements.
//!
//! Each 64-element block is viewed as `8 x 2 x 4` (sub-block, micro-block,
//! element). The block scale `S1 = M1 * 2^(E1-2)` is unsigned E6M2, the
//! sub-block and micro-block scales `S2 = 2^E2`, `S3 = 2^E3` are one bit
//! each, and elements are `X^ / 4` with `X^` in `0..=7`:
//!
//! ```text
//! x^ = sign * M1 * 2^(E1 + E2 + E3 - 4) * X^
//! ```

use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::{exp2i, floor_log2, round_half_up, Scalar};
use crate::tensor::{BlockLayout, Tensor};

pub const BLOCK: usize = 64;
pub const SUB_BLOCK: usize = 8;
pub const MICRO_BLOCK: usize = 4;
const SUBS: usize = BLOCK / SUB_BLOCK;
const MICROS: usize = BLOCK / MICRO_BLOCK;
/// E6M2 clip bounds of `A1 / 7`.
pub const S1_MIN: f64 = 3.552_713_678_800_501e-15;
pub const S1_MAX: f64 = 49152.0;

/// Decision rule for the one-bit `E2`/`E3` scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Hif4Threshold {
    /// `E2 = floor(clip(A2/S1, 0, 4) / 4)`, `E3 = floor(clip(A3/(S1 S2), 0, 2) / 2)`.
    #[default]
    Literal,
    /// Raise the scale once the ratio reaches half the clip range
    /// (`A2/S1 >= 2`, `A3/(S1 S2) >= 1`).
    Half,
}

#[derive(Debug, Clone)]
pub struct Hif4Quantized<T> {
    pub layout: BlockLayout,
    pub threshold: Hif4Threshold,
    pub e1: Vec<i32>,
    /// In `4..=8`.
    pub m1: Vec<u8>,
    /// Eight per block.
    pub e2: Vec<u8>,
    /// Sixteen per block.
    pub e3: Vec<u8>,
    /// `sign * X^`, block-major.
    pub codes: Vec<i8>,
    pub name: Option<String>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> Hif4Quantized<T> {
    /// `S1 = M1 * 2^(E1 - 2)` of block `h`.
    pub fn s1(&self, h: usize) -> T {
        T::from_u8(self.m1[h]).unwrap() * exp2i::<T>(self.e1[h] - 2)
    }

    /// `S1 * S2 * S3 * X^ / 4` computed with ordinary multiplications.
    pub fn dequantize_by_scales(&self, h: usize, i: usize) -> T {
        let sub = i / SUB_BLOCK;
        let micro = i / MICRO_BLOCK;
        let s2 = exp2i::<T>(self.e2[h * SUBS + sub] as i32);
        let s3 = exp2i::<T>(self.e3[h * MICROS + micro] as i32);
        let x = T::from_i8(self.codes[h * BLOCK + i]).unwrap() / T::of_f64(4.0);
        self.s1(h) * s2 * s3 * x
    }
}

/// `(E1, M1, S1)` of a block with peak magnitude `a1`.
fn block_scale<T: Scalar>(a1: T) -> (i32, u8, T) {
    let a = (a1 / T::of_f64(7.0))
        .max(T::of_f64(S1_MIN))
        .min(T::of_f64(S1_MAX));
    let e1 = floor_log2(a);
    let m1 = round_half_up(a / exp2i::<T>(e1 - 2));
    let m1_u8 = m1.to_u8().unwrap();
    debug_assert!((4..=8).contains(&m1_u8));
    (e1, m1_u8, m1 * exp2i::<T>(e1 - 2))
}

fn quantize_block<T: Scalar>(
    xs: &[T],
    threshold: Hif4Threshold,
    e2: &mut [u8],
    e3: &mut [u8],
    codes: &mut [i8],
) -> (i32, u8) {
    let mut a3 = [T::zero(); MICROS];
    for (m, chunk) in xs.chunks_exact(MICRO_BLOCK).enumerate() {
        a3[m] = chunk.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    }
    let mut a2 = [T::zero(); SUBS];
    for (s, pair) in a3.chunks_exact(2).enumerate() {
        a2[s] = pair[0].max(pair[1]);
    }
    let a1 = a2.iter().fold(T::zero(), |acc, &v| acc.max(v));
    let (e1, m1, s1) = block_scale(a1);

    let (t2, t3) = match threshold {
        Hif4Threshold::Literal => (T::of_f64(4.0), T::of_f64(2.0)),
        Hif4Threshold::Half => (T::of_f64(2.0), T::one()),
    };
    let xmax = T::of_f64(1.75);
    let four = T::of_f64(4.0);
    for s in 0..SUBS {
        let bit2 = u8::from(a2[s] / s1 >= t2);
        e2[s] = bit2;
        let s12 = s1 * exp2i::<T>(bit2 as i32);
        for m in 2 * s..2 * s + 2 {
            let bit3 = u8::from(a3[m] / s12 >= t3);
            e3[m] = bit3;
            let scale = s12 * exp2i::<T>(bit3 as i32);
            for i in m * MICRO_BLOCK..(m + 1) * MICRO_BLOCK {
                let x = xs[i];
                let xt = (x.abs() / scale).min(xmax);
                let xh = round_half_up(xt * four).to_i8().unwrap();
                codes[i] = if x < T::zero() { -xh } else { xh };
            }
        }
    }
    (e1, m1)
}

pub fn hif4_quantize<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Hif4Quantized<T>> {
    hif4_quantize_with(t, axis, Hif4Threshold::Literal)
}

pub fn hif4_quantize_with<T: Scalar>(t: &Tensor<T>, axis: usize, threshold: Hif4Threshold) -> Result<Hif4Quantized<T>> {
    let layout = BlockLayout::new(t.shape(), axis, BLOCK)?;
    let data = layout.gather(t.data());
    let nb = layout.num_blocks();
    let mut e2 = vec![0u8; nb * SUBS];
    let mut e3 = vec![0u8; nb * MICROS];
    let mut codes = vec![0i8; data.len()];
    let (e1, m1): (Vec<i32>, Vec<u8>) = data
        .par_chunks(BLOCK)
        .zip(e2.par_chunks_mut(SUBS))
        .zip(e3.par_chunks_mut(MICROS))
        .zip(codes.par_chunks_mut(BLOCK))
        .map(|(((xs, e2), e3), codes)| quantize_block(xs, threshold, e2, e3, codes))
        .unzip();
    Ok(Hif4Quantized {
        layout,
        threshold,
        e1,
        m1,
        e2,
        e3,
        codes,
        name: t.name().map(str::to_owned),
        _scalar: std::marker::PhantomData,
    })
}

/// Reconstructs through the exponent sum `E1 + E2 + E3 - 4`.
pub fn hif4_dequantize<T: Scalar>(q: &Hif4Quantized<T>) -> Tensor<T> {
    let mut out = vec![T::zero(); q.codes.len()];
    out.par_chunks_mut(BLOCK).enumerate().for_each(|(h, dst)| {
        let m1 = T::from_u8(q.m1[h]).unwrap();
        for (i, d) in dst.iter_mut().enumerate() {
            let e = q.e1[h]
                + q.e2[h * SUBS + i / SUB_BLOCK] as i32
                + q.e3[h * MICROS + i / MICRO_BLOCK] as i32
                - 4;
            *d = m1 * exp2i::<T>(e) * T::from_i8(q.codes[h * BLOCK + i]).unwrap();
        }
    });
    Tensor::from_parts(q.layout.shape().to_vec(), q.layout.scatter(&out), q.name.clone())
}
