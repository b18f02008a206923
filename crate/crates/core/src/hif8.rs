//! HiF8: an 8-bit format whose mantissa width depends on the exponent.
//!
//! | `|e|`     | mantissa bits |
//! |-----------|---------------|
//! | 0..=3     | 3             |
//! | 4..=7     | 2             |
//! | 8..=15    | 1             |
//! | > 15      | 0             |
//!
//! Normals cover `e` in `[-15, 15]` (capped at `2^15`), subnormals are the
//! powers of two `2^-22 ..= 2^-16`.
//!
//! The quantizer reads `e = floor(log2|x|)` straight from the binary
//! exponent. The `eps` term of the reference formula only defines the zero
//! path, so it has no influence on nonzero inputs; [`hif8_quantize_value_eps`]
//! keeps the literal `floor(log2(|x| + eps))` form for comparison.

use rayon::prelude::*;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::scalar::{exp2i, exp2i_f64, floor_log2, round_half_up, Scalar};
use crate::tensor::{BlockLayout, Tensor};

pub const MAX: f64 = 32768.0;
pub const MIN_EXP: i32 = -22;
pub const NORMAL_EXP_MIN: i32 = -15;
pub const NORMAL_EXP_MAX: i32 = 15;
/// Stability constant for FP32 inputs.
pub const EPS: f64 = 2.842_170_943_040_400_7e-14;
/// Stability constant of the scaled variant.
pub const SCALED_EPS: f64 = 1e-12;

/// Mantissa width for binary exponent `e`.
#[inline]
pub fn mantissa_bits(e: i32) -> i32 {
    match e.unsigned_abs() {
        0..=3 => 3,
        4..=7 => 2,
        8..=15 => 1,
        _ => 0,
    }
}

#[inline]
fn quantize_magnitude<T: Scalar>(a: T, e: i32) -> T {
    let max = T::of_f64(MAX);
    if e < MIN_EXP {
        let step = exp2i::<T>(MIN_EXP);
        return round_half_up(a / step) * step;
    }
    let step = exp2i::<T>(e - mantissa_bits(e));
    (round_half_up(a / step) * step).min(max)
}

/// Rounds one value: `sign(x) * floor(|x| / 2^(e-n_m) + 0.5) * 2^(e-n_m)`,
/// saturating at `2^15`; below `2^-22` the step is pinned at `2^-22`.
#[inline]
pub fn hif8_quantize_value<T: Scalar>(x: T) -> T {
    let a = x.abs();
    if a == T::zero() {
        return T::zero();
    }
    let q = quantize_magnitude(a, floor_log2(a));
    if x < T::zero() {
        -q
    } else {
        q
    }
}

/// Literal form with `e = floor(log2(|x| + eps))`.
pub fn hif8_quantize_value_eps<T: Scalar>(x: T, eps: T) -> T {
    let a = x.abs();
    let q = quantize_magnitude(a, floor_log2(a + eps));
    if x < T::zero() {
        -q
    } else {
        q
    }
}

/// Every finite HiF8 value, sorted.
pub fn hif8_enumerate<T: Scalar>() -> Codebook<T> {
    let mut mags = vec![(0.0, true)];
    for e in MIN_EXP..NORMAL_EXP_MIN {
        mags.push((exp2i_f64(e), true));
    }
    for e in NORMAL_EXP_MIN..=NORMAL_EXP_MAX {
        let nm = mantissa_bits(e);
        for xh in (1i64 << nm)..(1i64 << (nm + 1)) {
            let v = xh as f64 * exp2i_f64(e - nm);
            if v <= MAX {
                mags.push((v, xh % 2 == 0));
            }
        }
    }
    Codebook::from_magnitudes("HIF8", None, mags, true)
}

/// Elementwise [`hif8_quantize_value`].
pub fn hif8_quantize<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let data: Vec<T> = t.data().par_iter().map(|&x| hif8_quantize_value(x)).collect();
    Tensor::from_parts(t.shape().to_vec(), data, t.name().map(str::to_owned))
}

#[derive(Debug, Clone)]
pub struct ScaledHif8Quantized<T> {
    pub layout: BlockLayout,
    pub k: T,
    /// `K / (max|x| + eps)` per fiber.
    pub scales: Vec<T>,
    /// HiF8 values of the scaled tensor, fiber-major.
    pub values: Vec<T>,
    pub name: Option<String>,
}

/// Per-fiber rescaling to target maximum `k` followed by HiF8.
pub fn hif8_scaled_quantize<T: Scalar>(t: &Tensor<T>, axis: usize, k: T, eps: T) -> Result<ScaledHif8Quantized<T>> {
    if !(k > T::zero() && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("K must be positive, got {k}")));
    }
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let layout = BlockLayout::fibers(t.shape(), axis)?;
    let n = layout.block_size();
    let mut values = layout.gather(t.data());
    let scales: Vec<T> = values
        .par_chunks_mut(n)
        .map(|xs| {
            let amax = xs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let s = k / (amax + eps);
            for v in xs.iter_mut() {
                *v = hif8_quantize_value(s * *v);
            }
            s
        })
        .collect();
    Ok(ScaledHif8Quantized {
        layout,
        k,
        scales,
        values,
        name: t.name().map(str::to_owned),
    })
}

pub fn hif8_scaled_dequantize<T: Scalar>(q: &ScaledHif8Quantized<T>) -> Tensor<T> {
    let n = q.layout.block_size();
    let mut out = q.values.clone();
    out.par_chunks_mut(n).zip(q.scales.par_iter()).for_each(|(xs, &s)| {
        for v in xs.iter_mut() {
            *v = *v / s;
        }
    });
    Tensor::from_parts(q.layout.shape().to_vec(), q.layout.scatter(&out), q.name.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_values() {
        assert_eq!(hif8_quantize_value(1.0f64), 1.0);
        assert_eq!(hif8_quantize_value(0.3f64), 0.3125);
        assert_eq!(hif8_quantize_value(100.0f64), 96.0);
        assert_eq!(hif8_quantize_value(0.0f64), 0.0);
        assert_eq!(hif8_quantize_value(-0.3f64), -0.3125);
        assert_eq!(hif8_quantize_value(0.3f32), 0.3125);
        // binade carry
        assert_eq!(hif8_quantize_value(15.9f64), 16.0);
        // saturation and underflow
        assert_eq!(hif8_quantize_value(40000.0f64), MAX);
        assert_eq!(hif8_quantize_value(1e30f64), MAX);
        assert_eq!(hif8_quantize_value(exp2i_f64(-23) * 0.99), 0.0);
        assert_eq!(hif8_quantize_value(exp2i_f64(-23)), exp2i_f64(-22));
        assert_eq!(hif8_quantize_value(exp2i_f64(-16) * 1.4), exp2i_f64(-16));
        assert_eq!(hif8_quantize_value(exp2i_f64(-16) * 1.5), exp2i_f64(-15));
    }

    #[test]
    fn literal_eps_variant_agrees_off_boundaries() {
        for x in [0.3, 100.0, 1.0, -7.25, 1e-5] {
            assert_eq!(hif8_quantize_value_eps(x, EPS), hif8_quantize_value(x));
        }
        assert_eq!(hif8_quantize_value_eps(0.0, EPS), 0.0);
        assert_eq!(EPS, exp2i_f64(-45));
    }

    #[test]
    fn codebook_extremes() {
        let cb = hif8_enumerate::<f64>();
        assert_eq!(cb.max(), MAX);
        assert_eq!(cb.min_positive(), Some(exp2i_f64(-22)));
        assert!(cb.contains(0.3125));
        assert!(cb.contains(96.0));
        assert!(!cb.contains(1.5 * MAX));
        // smallest normal and largest subnormal
        assert!(cb.contains(exp2i_f64(-15)));
        assert!(cb.contains(exp2i_f64(-16)));
        assert!(!cb.contains(1.5 * exp2i_f64(-16)));
    }

    #[test]
    fn tensor_examples() {
        let t = Tensor::from_vec(vec![1.0, 0.3, 100.0]).unwrap();
        assert_eq!(hif8_quantize(&t).data(), &[1.0, 0.3125, 96.0]);
        let z = Tensor::<f64>::zeros(vec![3, 2]).unwrap();
        assert_eq!(hif8_quantize(&z), z);

        let cb = hif8_enumerate::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let members: Vec<f64> = (0..200).map(|_| cb.values()[rng.gen_range(0..cb.len())]).collect();
        let t = Tensor::from_vec(members).unwrap();
        assert_eq!(hif8_quantize(&t), t);
    }

    #[test]
    fn scaled_examples() {
        let t = Tensor::from_vec(vec![0.1, 0.02, -0.05]).unwrap();
        let q = hif8_scaled_quantize(&t, 0, 16.0, SCALED_EPS).unwrap();
        assert!((q.scales[0] - 160.0).abs() < 1e-6);
        assert_eq!(q.values, vec![16.0, 3.25, -8.0]);
        let d = hif8_scaled_dequantize(&q);
        for (got, want) in d.data().iter().zip([0.1, 0.0203125, -0.05]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }

        let z = Tensor::<f64>::zeros(vec![4]).unwrap();
        let q = hif8_scaled_quantize(&z, 0, 16.0, SCALED_EPS).unwrap();
        assert_eq!(q.scales[0], 16.0 / SCALED_EPS);
        assert!(hif8_scaled_dequantize(&q).data().iter().all(|&v| v == 0.0));

        assert!(hif8_scaled_quantize(&t, 0, 0.0, SCALED_EPS).is_err());
    }

    #[test]
    fn scaled_at_target_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut xs: Vec<f64> = (0..64).map(|_| rng.gen_range(-4.0..4.0)).collect();
        xs[3] = 4.0;
        let t = Tensor::from_vec(xs).unwrap();
        let scaled = hif8_scaled_dequantize(&hif8_scaled_quantize(&t, 0, 4.0, SCALED_EPS).unwrap());
        let plain = hif8_quantize(&t);
        for (a, b) in scaled.data().iter().zip(plain.data()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn step_is_monotone_away_from_one() {
        let step = |e: i32| exp2i_f64(e - mantissa_bits(e));
        for e in 3..40 {
            assert!(step(e + 1) >= step(e));
            assert!(step(-e - 1) <= step(-e));
        }
    }

    fn nearest_away(cb: &Codebook<f64>, x: f64) -> f64 {
        let mut best = cb.values()[0];
        for &c in cb.values() {
            let (d, db) = ((c - x).abs(), (best - x).abs());
            if d < db || (d == db && c.abs() > best.abs()) {
                best = c;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn closure_and_symmetry(m in -1.0f64..1.0, e in -30i32..20) {
            let cb = hif8_enumerate::<f64>();
            let x = m * exp2i_f64(e);
            let q = hif8_quantize_value(x);
            prop_assert!(cb.contains(q));
            prop_assert_eq!(hif8_quantize_value(-x), -q);
        }

        #[test]
        fn nearest_with_ties_away(m in 0.0f64..1.0, e in -30i32..20) {
            let cb = hif8_enumerate::<f64>();
            let x = m * exp2i_f64(e);
            prop_assert_eq!(hif8_quantize_value(x), nearest_away(&cb, x));
        }
    }
}
