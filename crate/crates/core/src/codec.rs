//! One selector grammar over every codec, used for fake quantization
//! (quantize then dequantize) by the PTQ transforms, the comparison
//! harness and the CLI.
//!
//! ```text
//! int8 | int4            [:sym | :asym] [:axis=N]
//! mx:<elem>[:k=N]        elem in e4m3 e5m2 e3m2 e2m3 e2m1 int8
//! mxfp8-e4m3 mxfp8-e5m2 mxfp6-e3m2 mxfp6-e2m3 mxfp4 mxint8   [:k=N]
//! e4m3 | e5m2 | e3m2 | e2m3 | e2m1                  plain element cast
//! nvfp4
//! hif4                   [:threshold=literal|half]
//! hif8
//! hif8-scaled            [:K=<real>] [:eps=<real>]
//! ```
//!
//! Every selector also accepts `:axis=N`. Without it the axis follows the
//! [`Role`]: weights (`[in, out]`, used as `X * W`) group along axis 0 so
//! each group is one output channel; activations and KV states group along
//! the last axis, one group per token.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::codebook::{builtin_spec, enumerate, Codebook};
use crate::error::{Error, Result};
use crate::hif4::{hif4_dequantize, hif4_quantize_with, Hif4Threshold};
use crate::hif8::{hif8_quantize, hif8_scaled_dequantize, hif8_scaled_quantize, SCALED_EPS};
use crate::int::{int_dequantize, int_quantize_asymmetric, int_quantize_symmetric, IntMode};
use crate::mx::{mx_dequantize, mx_element, mx_quantize, DEFAULT_BLOCK};
use crate::nvfp4::{nvfp4_dequantize, nvfp4_quantize};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Weight,
    Activation,
    Kv,
}

impl Role {
    pub fn default_axis(self, rank: usize) -> usize {
        match self {
            Role::Weight => 0,
            Role::Activation | Role::Kv => rank.saturating_sub(1),
        }
    }

    pub fn group_name(self) -> &'static str {
        match self {
            Role::Weight => "per-channel",
            Role::Activation | Role::Kv => "per-token",
        }
    }

    /// Scaled-HiF8 target maximum for this role.
    pub fn default_hif8_k(self) -> f64 {
        match self {
            Role::Weight => 16.0,
            Role::Activation => 4.0,
            Role::Kv => 1.0,
        }
    }

    pub fn default_int_mode(self) -> IntMode {
        match self {
            Role::Weight => IntMode::Symmetric,
            Role::Activation | Role::Kv => IntMode::Asymmetric,
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weight" | "w" => Ok(Role::Weight),
            "activation" | "act" | "a" => Ok(Role::Activation),
            "kv" => Ok(Role::Kv),
            _ => Err(Error::InvalidParameter(format!("unknown role `{s}`"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Weight => "weight",
            Role::Activation => "activation",
            Role::Kv => "kv",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodecKind {
    Int { bits: u32, mode: Option<IntMode> },
    Mx { element: String, k: usize },
    Fp { element: String },
    Nvfp4,
    Hif4 { threshold: Hif4Threshold },
    Hif8,
    Hif8Scaled { k: Option<f64>, eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codec {
    pub kind: CodecKind,
    pub axis: Option<usize>,
}

const MX_ALIASES: &[(&str, &str)] = &[
    ("mxfp8-e4m3", "E4M3"),
    ("mxfp8-e5m2", "E5M2"),
    ("mxfp6-e3m2", "E3M2"),
    ("mxfp6-e2m3", "E2M3"),
    ("mxfp4", "E2M1"),
    ("mxint8", "INT8"),
];

const FP_ELEMENTS: &[&str] = &["E4M3", "E5M2", "E3M2", "E2M3", "E2M1"];

fn parse_num<V: FromStr>(selector: &str, key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::InvalidParameter(format!("`{selector}`: bad value `{v}` for {key}")))
}

impl FromStr for Codec {
    type Err = Error;

    fn from_str(selector: &str) -> Result<Self> {
        let sel = selector.trim();
        let mut parts = sel.split(':');
        let base = parts.next().unwrap_or("").to_ascii_lowercase();
        let mut kind = match base.as_str() {
            "int8" => CodecKind::Int { bits: 8, mode: None },
            "int4" => CodecKind::Int { bits: 4, mode: None },
            "mx" => {
                let elem = parts
                    .next()
                    .ok_or_else(|| Error::UnknownFormat(format!("{sel} (missing MX element)")))?;
                let spec = mx_element(elem).map_err(|_| Error::UnknownFormat(sel.to_owned()))?;
                CodecKind::Mx {
                    element: spec.name,
                    k: DEFAULT_BLOCK,
                }
            }
            "nvfp4" => CodecKind::Nvfp4,
            "hif4" => CodecKind::Hif4 {
                threshold: Hif4Threshold::Literal,
            },
            "hif8" => CodecKind::Hif8,
            "hif8-scaled" => CodecKind::Hif8Scaled { k: None, eps: SCALED_EPS },
            other => {
                if let Some(&(_, elem)) = MX_ALIASES.iter().find(|(a, _)| *a == other) {
                    CodecKind::Mx {
                        element: elem.to_owned(),
                        k: DEFAULT_BLOCK,
                    }
                } else if let Some(&elem) = FP_ELEMENTS.iter().find(|e| e.eq_ignore_ascii_case(other)) {
                    CodecKind::Fp {
                        element: elem.to_owned(),
                    }
                } else {
                    return Err(Error::UnknownFormat(sel.to_owned()));
                }
            }
        };
        let mut axis = None;
        for opt in parts {
            let (key, value) = match opt.split_once('=') {
                Some((k, v)) => (k.trim(), Some(v.trim())),
                None => (opt.trim(), None),
            };
            match (&mut kind, key, value) {
                (_, "axis", Some(v)) => axis = Some(parse_num(sel, key, v)?),
                (CodecKind::Int { mode, .. }, "sym", None) => *mode = Some(IntMode::Symmetric),
                (CodecKind::Int { mode, .. }, "asym", None) => *mode = Some(IntMode::Asymmetric),
                (CodecKind::Mx { k, .. }, "k", Some(v)) => {
                    *k = parse_num(sel, key, v)?;
                    if *k == 0 {
                        return Err(Error::InvalidParameter(format!("`{sel}`: block size must be positive")));
                    }
                }
                (CodecKind::Hif8Scaled { k, .. }, "K" | "k", Some(v)) => {
                    let kv: f64 = parse_num(sel, key, v)?;
                    if !(kv > 0.0 && kv.is_finite()) {
                        return Err(Error::InvalidParameter(format!("`{sel}`: K must be positive")));
                    }
                    *k = Some(kv);
                }
                (CodecKind::Hif8Scaled { eps, .. }, "eps", Some(v)) => {
                    *eps = parse_num(sel, key, v)?;
                    if !(*eps > 0.0) {
                        return Err(Error::InvalidParameter(format!("`{sel}`: eps must be positive")));
                    }
                }
                (CodecKind::Hif4 { threshold }, "threshold", Some(v)) => {
                    *threshold = match v {
                        "literal" => Hif4Threshold::Literal,
                        "half" => Hif4Threshold::Half,
                        _ => return Err(Error::InvalidParameter(format!("`{sel}`: threshold must be literal or half"))),
                    }
                }
                _ => return Err(Error::InvalidParameter(format!("`{sel}`: unsupported option `{opt}`"))),
            }
        }
        Ok(Codec { kind, axis })
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CodecKind::Int { bits, mode } => {
                write!(f, "int{bits}")?;
                match mode {
                    Some(IntMode::Symmetric) => f.write_str(":sym")?,
                    Some(IntMode::Asymmetric) => f.write_str(":asym")?,
                    None => {}
                }
            }
            CodecKind::Mx { element, k } => {
                match MX_ALIASES.iter().find(|(_, e)| e == element) {
                    Some((alias, _)) => f.write_str(alias)?,
                    None => write!(f, "mx:{}", element.to_ascii_lowercase())?,
                }
                if *k != DEFAULT_BLOCK {
                    write!(f, ":k={k}")?;
                }
            }
            CodecKind::Fp { element } => f.write_str(&element.to_ascii_lowercase())?,
            CodecKind::Nvfp4 => f.write_str("nvfp4")?,
            CodecKind::Hif4 { threshold } => {
                f.write_str("hif4")?;
                if *threshold == Hif4Threshold::Half {
                    f.write_str(":threshold=half")?;
                }
            }
            CodecKind::Hif8 => f.write_str("hif8")?,
            CodecKind::Hif8Scaled { k, eps } => {
                f.write_str("hif8-scaled")?;
                if let Some(k) = k {
                    write!(f, ":K={k}")?;
                }
                if *eps != SCALED_EPS {
                    write!(f, ":eps={eps}")?;
                }
            }
        }
        if let Some(a) = self.axis {
            write!(f, ":axis={a}")?;
        }
        Ok(())
    }
}

impl Codec {
    pub fn axis_for(&self, rank: usize, role: Role) -> usize {
        self.axis.unwrap_or_else(|| role.default_axis(rank))
    }

    /// Block length the quantization axis must divide, if any.
    pub fn block_len(&self) -> Option<usize> {
        match &self.kind {
            CodecKind::Mx { k, .. } => Some(*k),
            CodecKind::Nvfp4 => Some(crate::nvfp4::BLOCK),
            CodecKind::Hif4 { .. } => Some(crate::hif4::BLOCK),
            _ => None,
        }
    }

    pub fn int_mode(&self, role: Role) -> Option<IntMode> {
        match &self.kind {
            CodecKind::Int { mode, .. } => Some(mode.unwrap_or_else(|| role.default_int_mode())),
            _ => None,
        }
    }

    pub fn hif8_k(&self, role: Role) -> Option<f64> {
        match &self.kind {
            CodecKind::Hif8Scaled { k, .. } => Some(k.unwrap_or_else(|| role.default_hif8_k())),
            _ => None,
        }
    }

    /// Human-readable grouping, always led by `per-channel` or `per-token`.
    pub fn granularity(&self, rank: usize, role: Role) -> String {
        let axis = self.axis_for(rank, role);
        let group = role.group_name();
        let detail = match &self.kind {
            CodecKind::Int { .. } | CodecKind::Hif8Scaled { .. } => "one scale per group".to_owned(),
            CodecKind::Mx { k, .. } => format!("blocks of {k}"),
            CodecKind::Nvfp4 => "blocks of 16 + per-tensor scale".to_owned(),
            CodecKind::Hif4 { .. } => "blocks of 64/8/4".to_owned(),
            CodecKind::Fp { .. } | CodecKind::Hif8 => "elementwise, unscaled".to_owned(),
        };
        format!("{group} axis={axis} ({detail})")
    }

    /// Parameter echo for reports.
    pub fn config(&self, rank: usize, role: Role) -> BTreeMap<String, String> {
        let mut c = BTreeMap::new();
        c.insert("axis".to_owned(), self.axis_for(rank, role).to_string());
        c.insert("role".to_owned(), role.to_string());
        match &self.kind {
            CodecKind::Int { bits, .. } => {
                c.insert("bits".to_owned(), bits.to_string());
                let mode = match self.int_mode(role) {
                    Some(IntMode::Symmetric) => "sym",
                    _ => "asym",
                };
                c.insert("mode".to_owned(), mode.to_owned());
            }
            CodecKind::Mx { element, k } => {
                c.insert("element".to_owned(), element.clone());
                c.insert("k".to_owned(), k.to_string());
            }
            CodecKind::Fp { element } => {
                c.insert("element".to_owned(), element.clone());
            }
            CodecKind::Nvfp4 => {
                c.insert("k".to_owned(), "16".to_owned());
            }
            CodecKind::Hif4 { threshold } => {
                c.insert("k".to_owned(), "64".to_owned());
                let th = match threshold {
                    Hif4Threshold::Literal => "literal",
                    Hif4Threshold::Half => "half",
                };
                c.insert("threshold".to_owned(), th.to_owned());
            }
            CodecKind::Hif8 => {}
            CodecKind::Hif8Scaled { eps, .. } => {
                c.insert("K".to_owned(), self.hif8_k(role).unwrap().to_string());
                c.insert("eps".to_owned(), eps.to_string());
            }
        }
        c
    }

    /// Quantize then dequantize `t` along the role's axis.
    pub fn fake_quantize<T: Scalar>(&self, t: &Tensor<T>, role: Role) -> Result<Tensor<T>> {
        let axis = self.axis_for(t.rank(), role);
        let out = match &self.kind {
            CodecKind::Int { bits, .. } => {
                let q = match self.int_mode(role).unwrap() {
                    IntMode::Symmetric => int_quantize_symmetric(t, axis, *bits)?,
                    IntMode::Asymmetric => int_quantize_asymmetric(t, axis, *bits)?,
                };
                int_dequantize(&q)
            }
            CodecKind::Mx { element, k } => mx_dequantize(&mx_quantize(t, axis, &mx_element(element)?, *k)?),
            CodecKind::Fp { element } => {
                let cb: Codebook<T> = enumerate(&builtin_spec(element)?);
                t.map(|x| cb.project(x))
            }
            CodecKind::Nvfp4 => nvfp4_dequantize(&nvfp4_quantize(t, axis)?),
            CodecKind::Hif4 { threshold } => hif4_dequantize(&hif4_quantize_with(t, axis, *threshold)?),
            CodecKind::Hif8 => hif8_quantize(t),
            CodecKind::Hif8Scaled { eps, .. } => {
                let k = T::of_f64(self.hif8_k(role).unwrap());
                hif8_scaled_dequantize(&hif8_scaled_quantize(t, axis, k, T::of_f64(*eps))?)
            }
        };
        Ok(out)
    }
}
