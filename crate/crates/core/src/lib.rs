//! Bit-exact emulation of low-bit quantization formats and PTQ transforms.
//!
//! Every codec is generic over [`Scalar`] (`f32` or `f64`); `f64` is the
//! reference precision. Codecs come in quantize/dequantize pairs that keep
//! the full scale hierarchy, and [`Codec`] wraps them behind one selector
//! grammar for fake-quantization (quantize then dequantize).
//!
//! ```
//! use lofiq::{Codec, Role, Tensor64};
//!
//! let w = Tensor64::new(vec![2, 2], vec![1.0, 0.3, -100.0, 0.0]).unwrap();
//! let codec: Codec = "hif8".parse().unwrap();
//! let q = codec.fake_quantize(&w, Role::Weight).unwrap();
//! assert_eq!(q.data(), &[1.0, 0.3125, -96.0, 0.0]);
//! ```

pub mod codebook;
pub mod codec;
pub mod error;
pub mod hif4;
pub mod hif8;
pub mod int;
pub mod metrics;
pub mod mx;
pub mod nvfp4;
pub mod ptq;
pub mod report;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod tensor_file;

pub use codebook::{builtin_spec, empirical_cdf, enumerate, Codebook, EmpiricalCdf, FpFormatSpec};
pub use codec::{Codec, Role};
pub use error::{Error, Result};
pub use hif4::{hif4_dequantize, hif4_quantize, Hif4Quantized, Hif4Threshold};
pub use hif8::{
    hif8_enumerate, hif8_quantize, hif8_quantize_value, hif8_scaled_dequantize, hif8_scaled_quantize,
    ScaledHif8Quantized,
};
pub use int::{int_dequantize, int_quantize_asymmetric, int_quantize_symmetric, IntMode, IntQuantized};
pub use metrics::{compare_formats, error_stats, sqnr, ErrorStats, FidelityReport};
pub use mx::{mx_dequantize, mx_quantize, MxQuantized};
pub use nvfp4::{nvfp4_dequantize, nvfp4_quantize, Nvfp4Quantized};
pub use ptq::{
    apply_smoothing, search_alpha, smooth_scales, svd_split, svdquant_pipeline, LowRankBranch,
    PipelineReport, SmoothingPlan,
};
pub use report::{emit_report, ReportFormat};
pub use scalar::Scalar;
pub use synth::{synth, SyntheticKind, SyntheticSpec};
pub use tensor::{matmul, BlockLayout, BlockView, Tensor};
pub use tensor_file::{load_tensors, save_tensors, Dtype};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Codebook64 = Codebook<f64>;
pub type Codebook32 = Codebook<f32>;
pub type IntQuantized64 = IntQuantized<f64>;
pub type MxQuantized64 = MxQuantized<f64>;
pub type Nvfp4Quantized64 = Nvfp4Quantized<f64>;
pub type Hif4Quantized64 = Hif4Quantized<f64>;
pub type ScaledHif8Quantized64 = ScaledHif8Quantized<f64>;
pub type SmoothingPlan64 = SmoothingPlan<f64>;
pub type LowRankBranch64 = LowRankBranch<f64>;
