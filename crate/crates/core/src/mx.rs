//! Microscaling: `k` contiguous elements share one power-of-two scale
//! `2^e`, `e` in `[-127, 127]` (E8M0), over an FP or INT8 element grid.

use rayon::prelude::*;

use crate::codebook::{builtin_spec, enumerate, Codebook, FpFormatSpec};
use crate::error::{Error, Result};
use crate::scalar::{exp2i, exp2i_f64, floor_log2, Scalar};
use crate::tensor::{BlockLayout, Tensor};

pub const DEFAULT_BLOCK: usize = 32;
pub const SCALE_EXP_MIN: i32 = -127;
pub const SCALE_EXP_MAX: i32 = 127;

/// Element formats usable inside an MX block.
pub const MX_ELEMENTS: &[&str] = &["E4M3", "E5M2", "E3M2", "E2M3", "E2M1", "INT8"];

#[derive(Debug, Clone)]
pub struct MxQuantized<T> {
    pub element: FpFormatSpec,
    pub layout: BlockLayout,
    /// One shared exponent per block.
    pub exponents: Vec<i32>,
    /// Element codebook values, block-major.
    pub codes: Vec<T>,
    pub name: Option<String>,
}

impl<T> MxQuantized<T> {
    pub fn block_size(&self) -> usize {
        self.layout.block_size()
    }

    pub fn axis(&self) -> usize {
        self.layout.axis()
    }
}

pub fn mx_element(name: &str) -> Result<FpFormatSpec> {
    let spec = builtin_spec(name)?;
    if !MX_ELEMENTS.contains(&spec.name.as_str()) {
        return Err(Error::UnknownFormat(format!("{name} is not an MX element type")));
    }
    Ok(spec)
}

/// Smallest `e` in `[-127, 127]` with `amax <= qmax * 2^e`; `-127` for an
/// all-zero block.
pub fn shared_exponent(amax: f64, qmax: f64) -> i32 {
    if amax == 0.0 {
        return SCALE_EXP_MIN;
    }
    let e0 = floor_log2(amax) - floor_log2(qmax);
    if e0 > SCALE_EXP_MAX {
        return SCALE_EXP_MAX;
    }
    if e0 < SCALE_EXP_MIN - 1 {
        return SCALE_EXP_MIN;
    }
    let e = if amax <= qmax * exp2i_f64(e0) { e0 } else { e0 + 1 };
    e.clamp(SCALE_EXP_MIN, SCALE_EXP_MAX)
}

pub fn mx_quantize<T: Scalar>(
    t: &Tensor<T>,
    axis: usize,
    element: &FpFormatSpec,
    k: usize,
) -> Result<MxQuantized<T>> {
    let layout = BlockLayout::new(t.shape(), axis, k)?;
    let cb: Codebook<T> = enumerate(element);
    let qmax = cb.max();
    let qmax_f = qmax.as_f64();
    let data = layout.gather(t.data());
    let mut codes = vec![T::zero(); data.len()];
    let exponents: Vec<i32> = codes
        .par_chunks_mut(k)
        .zip(data.par_chunks(k))
        .map(|(out, xs)| {
            let amax = xs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let e = shared_exponent(amax.as_f64(), qmax_f);
            if amax == T::zero() {
                return e;
            }
            let s = exp2i::<T>(e);
            debug_assert!(
                e == SCALE_EXP_MIN || e == SCALE_EXP_MAX || amax / s <= qmax,
                "block max {amax} exceeds q_max after scaling by 2^{e}"
            );
            for (c, &x) in out.iter_mut().zip(xs) {
                *c = cb.project((x / s).max(-qmax).min(qmax));
            }
            e
        })
        .collect();
    Ok(MxQuantized {
        element: element.clone(),
        layout,
        exponents,
        codes,
        name: t.name().map(str::to_owned),
    })
}

pub fn mx_dequantize<T: Scalar>(q: &MxQuantized<T>) -> Tensor<T> {
    let k = q.block_size();
    let mut out = vec![T::zero(); q.codes.len()];
    out.par_chunks_mut(k)
        .zip(q.codes.par_chunks(k))
        .zip(q.exponents.par_iter())
        .for_each(|((dst, src), &e)| {
            let s = exp2i::<T>(e);
            for (d, &c) in dst.iter_mut().zip(src) {
                *d = c * s;
            }
        });
    Tensor::from_parts(q.layout.shape().to_vec(), q.layout.scatter(&out), q.name.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e2m1() -> FpFormatSpec {
        builtin_spec("E2M1").unwrap()
    }

    fn block(first: f64) -> Tensor<f64> {
        let mut v = vec![0.0; 32];
        v[0] = first;
        v[5] = -first / 2.0;
        Tensor::from_vec(v).unwrap()
    }

    #[test]
    fn worked_examples() {
        let q = mx_quantize(&block(12.0), 0, &e2m1(), 32).unwrap();
        assert_eq!(q.exponents, vec![1]);
        assert_eq!(q.codes[0], 6.0);
        let d = mx_dequantize(&q);
        assert_eq!(d.data()[0], 12.0);
        assert_eq!(d.data()[5], -6.0);

        let q = mx_quantize(&block(0.0), 0, &e2m1(), 32).unwrap();
        assert_eq!(q.exponents, vec![-127]);
        assert!(q.codes.iter().all(|&c| c == 0.0));
        assert!(mx_dequantize(&q).data().iter().all(|&v| v == 0.0));

        let q = mx_quantize(&block(6.0), 0, &e2m1(), 32).unwrap();
        assert_eq!(q.exponents, vec![0]);
        assert_eq!(mx_dequantize(&q).data()[0], 6.0);
    }

    #[test]
    fn exponent_is_exact_at_powers_of_two() {
        assert_eq!(shared_exponent(12.0, 6.0), 1);
        assert_eq!(shared_exponent(12.000001, 6.0), 2);
        assert_eq!(shared_exponent(6.0, 6.0), 0);
        assert_eq!(shared_exponent(448.0 * 1024.0, 448.0), 10);
        assert_eq!(shared_exponent(1e300, 6.0), 127);
        assert_eq!(shared_exponent(1e-300, 6.0), -127);
        assert_eq!(shared_exponent(127.0 / 64.0, 127.0 / 64.0), 0);
    }

    #[test]
    fn dequantize_by_hand() {
        let layout = BlockLayout::new(&[2], 0, 2).unwrap();
        let mut q = MxQuantized {
            element: e2m1(),
            layout,
            exponents: vec![0],
            codes: vec![1.5, -4.0],
            name: None,
        };
        assert_eq!(mx_dequantize(&q).data(), &[1.5, -4.0]);
        q.exponents = vec![-127];
        q.codes = vec![0.0, 0.0];
        assert_eq!(mx_dequantize(&q).data(), &[0.0, 0.0]);
    }

    #[test]
    fn mxint8_grid() {
        let int8 = mx_element("INT8").unwrap();
        let xs: Vec<f64> = (-16..16).map(|i| i as f64 / 64.0 * 8.0).collect();
        let t = Tensor::from_vec(xs.clone()).unwrap();
        let d = mx_dequantize(&mx_quantize(&t, 0, &int8, 32).unwrap());
        assert_eq!(d.data(), &xs[..]);
        assert!(mx_element("E8M0").is_err());
    }

    #[test]
    fn not_divisible() {
        let t = Tensor::<f64>::zeros(vec![2, 60]).unwrap();
        assert!(matches!(
            mx_quantize(&t, 1, &e2m1(), 32),
            Err(Error::NotDivisible { extent: 60, .. })
        ));
    }

    proptest! {
        #[test]
        fn grid_values_round_trip(
            elem in prop::sample::select(MX_ELEMENTS.to_vec()),
            e in -127i32..=127,
            idx in prop::collection::vec(any::<prop::sample::Index>(), 32),
        ) {
            let spec = mx_element(elem).unwrap();
            let cb: Codebook<f64> = enumerate(&spec);
            let mut xs: Vec<f64> = idx.iter().map(|i| cb.values()[i.index(cb.len())] * exp2i_f64(e)).collect();
            // pin the block max so the shared exponent is exactly e
            xs[0] = cb.max() * exp2i_f64(e);
            let t = Tensor::from_vec(xs.clone()).unwrap();
            let q = mx_quantize(&t, 0, &spec, 32).unwrap();
            prop_assert_eq!(q.exponents[0], e);
            let back = mx_dequantize(&q);
            prop_assert_eq!(back.data(), &xs[..]);
        }

        #[test]
        fn error_within_half_gap(
            elem in prop::sample::select(MX_ELEMENTS.to_vec()),
            xs in prop::collection::vec(-1e4f64..1e4, 32),
        ) {
            let spec = mx_element(elem).unwrap();
            let cb: Codebook<f64> = enumerate(&spec);
            let t = Tensor::from_vec(xs.clone()).unwrap();
            let q = mx_quantize(&t, 0, &spec, 32).unwrap();
            let s = exp2i_f64(q.exponents[0]);
            prop_assert!(t.max_abs() / s <= cb.max());
            for (x, c) in xs.iter().zip(&q.codes) {
                prop_assert!(cb.contains(*c));
                let y = x / s;
                let i = cb.values().partition_point(|&v| v < y).clamp(1, cb.len() - 1);
                let gap = cb.values()[i] - cb.values()[i - 1];
                prop_assert!((c - y).abs() <= gap / 2.0);
            }
        }
    }
}
