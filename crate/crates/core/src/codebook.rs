//! Generic `ExMy` floating-point formats: declarative specs, exhaustive
//! enumeration of the finite value set, and round-to-nearest projection.
//!
//! Conventions for the built-in formats:
//!
//! | name   | bias | inf | NaN codes | subnormals | max finite     |
//! |--------|------|-----|-----------|------------|----------------|
//! | E5M2   | 15   | yes | (exp=31)  | yes        | 1.75 * 2^15    |
//! | E4M3   | 7    | no  | 1         | yes        | 448            |
//! | E3M2   | 3    | no  | 0         | yes        | 28             |
//! | E2M3   | 1    | no  | 0         | yes        | 7.5            |
//! | E2M1   | 1    | no  | 0         | yes        | 6              |
//! | E8M0   | 127  | no  | 1         | no         | 2^127 (unsigned) |
//! | E6M2U  | 48   | no  | 1         | no         | 1.5 * 2^15 (unsigned) |
//! | INT8   | 0    | no  | 0         | (E0M7)     | 127/64         |
//!
//! `INT8` is the MXINT8 element grid: sign-magnitude `k/64`, `|k| <= 127`.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{exp2i_f64, Scalar};
use crate::tensor::Tensor;

/// Declarative description of a sign/exponent/mantissa format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpFormatSpec {
    pub name: String,
    pub exponent_bits: u32,
    pub mantissa_bits: u32,
    pub signed: bool,
    pub bias: i32,
    /// IEEE-style: the all-ones exponent is reserved for Inf/NaN.
    pub has_inf: bool,
    /// Number of magnitude codepoints reserved as NaN at the top of the
    /// encoding space (ignored when `has_inf`).
    pub nan_encodings: u32,
    /// Whether exponent field 0 encodes subnormals (`0.m * 2^(1-bias)`)
    /// rather than the normal binade `1.m * 2^(-bias)`.
    pub has_subnormals: bool,
}

impl FpFormatSpec {
    pub fn magnitude_codes(&self) -> u32 {
        1 << (self.exponent_bits + self.mantissa_bits)
    }

    fn is_reserved(&self, code: u32) -> bool {
        if self.has_inf {
            let exp = code >> self.mantissa_bits;
            self.exponent_bits > 0 && exp == (1 << self.exponent_bits) - 1
        } else {
            code >= self.magnitude_codes() - self.nan_encodings
        }
    }

    /// Value of a magnitude codepoint, or `None` if it is reserved.
    pub fn decode_magnitude(&self, code: u32) -> Option<f64> {
        if code >= self.magnitude_codes() || self.is_reserved(code) {
            return None;
        }
        let y = self.mantissa_bits as i32;
        let exp = (code >> self.mantissa_bits) as i32;
        let man = (code & ((1 << self.mantissa_bits) - 1)) as f64;
        let v = if self.exponent_bits == 0 || (self.has_subnormals && exp == 0) {
            man * exp2i_f64(1 - self.bias - y)
        } else {
            (exp2i_f64(y) + man) * exp2i_f64(exp - self.bias - y)
        };
        Some(v)
    }

    fn finite_magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.magnitude_codes()).filter_map(|c| self.decode_magnitude(c))
    }

    pub fn max_finite(&self) -> f64 {
        self.finite_magnitudes().fold(0.0, f64::max)
    }

    /// Smallest positive normal, `2^(1-bias)` (or `2^-bias` without subnormals).
    pub fn min_normal(&self) -> f64 {
        if self.has_subnormals {
            exp2i_f64(1 - self.bias)
        } else {
            exp2i_f64(-self.bias)
        }
    }

    /// Smallest positive subnormal, if the format has any.
    pub fn min_subnormal(&self) -> Option<f64> {
        self.has_subnormals
            .then(|| exp2i_f64(1 - self.bias - self.mantissa_bits as i32))
    }

    pub fn max_subnormal(&self) -> Option<f64> {
        self.has_subnormals.then(|| {
            ((1u64 << self.mantissa_bits) - 1) as f64
                * exp2i_f64(1 - self.bias - self.mantissa_bits as i32)
        })
    }

    /// Smallest positive representable value.
    pub fn min_positive(&self) -> f64 {
        self.finite_magnitudes()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for FpFormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Built-in format names accepted by [`builtin_spec`].
pub const BUILTIN_FORMATS: &[&str] = &["E5M2", "E4M3", "E3M2", "E2M3", "E2M1", "E8M0", "E6M2U", "INT8"];

pub fn builtin_spec(name: &str) -> Result<FpFormatSpec> {
    let canon = name.to_ascii_uppercase();
    let (x, y, signed, bias, has_inf, nan, subnormals) = match canon.as_str() {
        "E5M2" => (5, 2, true, 15, true, 0, true),
        "E4M3" => (4, 3, true, 7, false, 1, true),
        "E3M2" => (3, 2, true, 3, false, 0, true),
        "E2M3" => (2, 3, true, 1, false, 0, true),
        "E2M1" => (2, 1, true, 1, false, 0, true),
        "E8M0" => (8, 0, false, 127, false, 1, false),
        "E6M2U" => (6, 2, false, 48, false, 1, false),
        "INT8" => (0, 7, true, 0, false, 0, true),
        _ => return Err(Error::UnknownFormat(name.to_owned())),
    };
    Ok(FpFormatSpec {
        name: canon,
        exponent_bits: x,
        mantissa_bits: y,
        signed,
        bias,
        has_inf,
        nan_encodings: nan,
        has_subnormals: subnormals,
    })
}

/// Sorted finite value set of a format, with `+0`/`-0` collapsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    name: String,
    spec: Option<FpFormatSpec>,
    values: Vec<T>,
    /// Tie-break parity: `true` where the codepoint's lowest bit is 0.
    even: Vec<bool>,
}

impl<T: Scalar> Codebook<T> {
    /// Builds a codebook from non-negative magnitudes and their parity,
    /// mirroring them when `signed`.
    pub fn from_magnitudes(
        name: impl Into<String>,
        spec: Option<FpFormatSpec>,
        magnitudes: impl IntoIterator<Item = (f64, bool)>,
        signed: bool,
    ) -> Self {
        let mut pos: Vec<(f64, bool)> = magnitudes.into_iter().collect();
        pos.sort_by(|a, b| a.0.total_cmp(&b.0));
        pos.dedup_by(|a, b| a.0 == b.0);
        let mut entries = Vec::with_capacity(pos.len() * 2);
        if signed {
            entries.extend(pos.iter().rev().filter(|e| e.0 > 0.0).map(|&(v, p)| (-v, p)));
        }
        entries.extend(pos.iter().copied());
        Self {
            name: name.into(),
            spec,
            values: entries.iter().map(|e| T::of_f64(e.0)).collect(),
            even: entries.iter().map(|e| e.1).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> Option<&FpFormatSpec> {
        self.spec.as_ref()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> T {
        *self.values.last().expect("codebook is non-empty")
    }

    pub fn min_positive(&self) -> Option<T> {
        self.values.iter().copied().find(|&v| v > T::zero())
    }

    pub fn contains(&self, x: T) -> bool {
        self.values.binary_search_by(|v| v.partial_cmp(&x).unwrap()).is_ok()
    }

    /// Round-to-nearest onto the codebook; exact ties go to the even
    /// codepoint. Inputs beyond the range clip to the extreme values.
    #[inline]
    pub fn project(&self, x: T) -> T {
        let vals = &self.values;
        let hi = vals.partition_point(|&v| v < x);
        if hi == 0 {
            return vals[0];
        }
        if hi == vals.len() {
            return vals[hi - 1];
        }
        let (a, b) = (vals[hi - 1], vals[hi]);
        let (da, db) = (x - a, b - x);
        if da < db {
            a
        } else if db < da {
            b
        } else if self.even[hi - 1] {
            a
        } else {
            b
        }
    }

    /// Number of codebook values in `[lo, hi]`.
    pub fn density_in_interval(&self, lo: T, hi: T) -> usize {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        let start = self.values.partition_point(|&v| v < lo);
        let end = self.values.partition_point(|&v| v <= hi);
        end.saturating_sub(start)
    }
}

/// Enumerates every finite value of `spec`, sorted ascending.
pub fn enumerate<T: Scalar>(spec: &FpFormatSpec) -> Codebook<T> {
    let mags = (0..spec.magnitude_codes())
        .filter_map(|c| spec.decode_magnitude(c).map(|v| (v, c & 1 == 0)));
    Codebook::from_magnitudes(spec.name.clone(), Some(spec.clone()), mags, spec.signed)
}

/// Empirical distribution of `|x|`.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf<T> {
    sorted_abs: Vec<T>,
}

impl<T: Scalar> EmpiricalCdf<T> {
    pub fn from_values(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let mut sorted_abs: Vec<T> = values.iter().map(|v| v.abs()).collect();
        sorted_abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { sorted_abs })
    }

    /// Fraction of magnitudes `<= m`.
    pub fn at(&self, m: T) -> f64 {
        let n = self.sorted_abs.partition_point(|&v| v <= m);
        n as f64 / self.sorted_abs.len() as f64
    }

    /// `n_points` evenly spaced quantiles as `(magnitude, cumulative fraction)`.
    pub fn sample(&self, n_points: usize) -> Result<Vec<(T, f64)>> {
        if n_points < 2 {
            return Err(Error::InvalidParameter("n_points must be at least 2".into()));
        }
        let last = self.sorted_abs.len() - 1;
        Ok((0..n_points)
            .map(|i| {
                let idx = (i as f64 / (n_points - 1) as f64 * last as f64).round() as usize;
                let m = self.sorted_abs[idx];
                (m, self.at(m))
            })
            .collect())
    }
}

pub fn empirical_cdf<T: Scalar>(t: &Tensor<T>, n_points: usize) -> Result<Vec<(T, f64)>> {
    EmpiricalCdf::from_values(t.data())?.sample(n_points)
}
