//! `lofiq` command-line frontend.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod pad;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use lofiq::codebook::BUILTIN_FORMATS;
use lofiq::ptq::{
    default_alpha_grid, plan_for, quantized_product_error, search_alpha_scored, DEFAULT_RANK,
};
use lofiq::report::render;
use lofiq::tensor::frobenius;
use lofiq::{
    apply_smoothing, builtin_spec, compare_formats, enumerate, error_stats, hif8_enumerate, load_tensors, matmul,
    save_tensors, svdquant_pipeline, synth, Codebook64, Codec, Dtype, FidelityReport, ReportFormat, Role,
    SyntheticSpec, Tensor64,
};

const SELECTOR_HELP: &str = "\
Format selectors:
  int8 | int4            [:sym | :asym]
  mx:<elem>[:k=N]        elem in e4m3 e5m2 e3m2 e2m3 e2m1 int8
  mxfp8-e4m3 | mxfp8-e5m2 | mxfp6-e3m2 | mxfp6-e2m3 | mxfp4 | mxint8   [:k=N]
  e4m3 | e5m2 | e3m2 | e2m3 | e2m1      plain element cast
  nvfp4
  hif4                   [:threshold=literal|half]
  hif8
  hif8-scaled            [:K=<real>] [:eps=<real>]
Every selector also takes :axis=N to override the role's axis.

Synthetic tensors:
  gaussian:RxC:sigma  uniform:RxC:sigma  gaussian_outlier:RxC:sigma:fraction:scale
  each optionally followed by :seed=N

Environment: LOFIQ_THREADS caps the worker pool.";

#[derive(Parser, Debug)]
#[command(name = "lofiq", version, about = "Low-bit quantization format emulator and fidelity harness", after_help = SELECTOR_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List every value a format can represent
    Enumerate(EnumerateArgs),
    /// Fake-quantize the tensors of a file and report fidelity
    Quantize(QuantizeArgs),
    /// Compare formats on the same tensors
    Compare(CompareArgs),
    /// SmoothQuant: RTN vs smoothed product error
    Smooth(PtqArgs),
    /// SVDQuant: RTN vs smoothed vs smoothed plus low-rank product error
    Svdq(SvdqArgs),
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    /// e2m1 e3m2 e2m3 e4m3 e5m2 e8m0 e6m2u int8 hif8
    #[arg(value_parser = parse_codebook_name)]
    format: String,
    /// Only list (and count) values in [LO, HI]
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    interval: Option<Vec<f64>>,
    /// Print the summary without the value listing
    #[arg(long)]
    summary: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportOpts {
    /// Report encoding; defaults to the report path's extension, else JSON
    #[arg(long, value_enum)]
    report_format: Option<ReportKind>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportKind {
    Json,
    Csv,
}

impl From<ReportKind> for ReportFormat {
    fn from(k: ReportKind) -> Self {
        match k {
            ReportKind::Json => ReportFormat::Json,
            ReportKind::Csv => ReportFormat::Csv,
        }
    }
}

impl ReportOpts {
    fn resolve(&self, path: Option<&Path>) -> ReportFormat {
        match (self.report_format, path) {
            (Some(k), _) => k.into(),
            (None, Some(p)) => ReportFormat::from_path(p),
            (None, None) => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    /// Input tensor file
    input: PathBuf,
    #[arg(short, long, value_parser = parse_codec)]
    format: Codec,
    #[arg(long, value_enum, default_value_t = RoleArg::Weight)]
    role: RoleArg,
    /// Zero-pad the quantization axis up to the block size; padding is excluded from statistics
    #[arg(long)]
    pad: bool,
    /// Dequantized tensor file
    #[arg(short, long)]
    output: PathBuf,
    /// Report path; defaults to the output path with a .json extension
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    dtype: DtypeArg,
    #[command(flatten)]
    report_opts: ReportOpts,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Weight,
    Activation,
    Kv,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Weight => Role::Weight,
            RoleArg::Activation => Role::Activation,
            RoleArg::Kv => Role::Kv,
        }
    }
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Input tensor files
    inputs: Vec<PathBuf>,
    /// Synthetic tensor spec, repeatable
    #[arg(long, value_parser = parse_synth)]
    synth: Vec<SyntheticSpec>,
    /// Replaces the seed of every --synth spec
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated format selectors
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_codec)]
    formats: Vec<Codec>,
    #[arg(long, value_enum, default_value_t = RoleArg::Weight)]
    role: RoleArg,
    /// Report path; stdout when absent
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    report_opts: ReportOpts,
}

#[derive(Args, Debug)]
struct PtqArgs {
    /// Activation tensor file (first tensor, [tokens, in])
    #[arg(long, required_unless_present = "x_synth", conflicts_with = "x_synth")]
    x: Option<PathBuf>,
    #[arg(long, value_parser = parse_synth)]
    x_synth: Option<SyntheticSpec>,
    /// Weight tensor file (first tensor, [in, out])
    #[arg(long, required_unless_present = "w_synth", conflicts_with = "w_synth")]
    w: Option<PathBuf>,
    #[arg(long, value_parser = parse_synth)]
    w_synth: Option<SyntheticSpec>,
    #[arg(short, long, value_parser = parse_codec)]
    format: Codec,
    /// Fixed migration strength
    #[arg(long, conflicts_with = "grid")]
    alpha: Option<f64>,
    /// Comma-separated alpha grid; defaults to 0.1..0.9 step 0.1
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Summary path; stdout when absent
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SvdqArgs {
    #[command(flatten)]
    ptq: PtqArgs,
    #[arg(long, default_value_t = DEFAULT_RANK)]
    rank: usize,
    /// Take the low-rank branch from the raw weight
    #[arg(long)]
    no_smoothing: bool,
}

fn parse_codec(s: &str) -> Result<Codec, String> {
    s.parse().map_err(|e: lofiq::Error| e.to_string())
}

fn parse_synth(s: &str) -> Result<SyntheticSpec, String> {
    s.parse().map_err(|e: lofiq::Error| e.to_string())
}

fn parse_codebook_name(s: &str) -> Result<String, String> {
    if s.eq_ignore_ascii_case("hif8") || builtin_spec(s).is_ok() {
        Ok(s.to_ascii_uppercase())
    } else {
        Err(format!(
            "unknown format `{s}` (expected one of {}, HIF8)",
            BUILTIN_FORMATS.join(", ")
        ))
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, msg).exit()
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn pow2_tag(v: f64) -> String {
    if v > 0.0 && v.log2().fract() == 0.0 {
        format!(" (2^{})", v.log2() as i32)
    } else {
        String::new()
    }
}

fn cmd_enumerate(args: &EnumerateArgs) -> anyhow::Result<()> {
    let cb: Codebook64 = if args.format == "HIF8" {
        hif8_enumerate()
    } else {
        enumerate(&builtin_spec(&args.format)?)
    };
    let mut out = String::new();
    let max = cb.max();
    let min_pos = cb.min_positive().unwrap_or(0.0);
    out += &format!("format {}\n", cb.name());
    out += &format!("count {}\n", cb.len());
    out += &format!("max {max}{}\n", pow2_tag(max));
    out += &format!("min_positive {min_pos}{}\n", pow2_tag(min_pos));
    let (lo, hi) = match &args.interval {
        Some(v) => {
            if v[0] > v[1] {
                usage_error(format!("empty interval [{}, {}]", v[0], v[1]));
            }
            out += &format!("in [{}, {}] {}\n", v[0], v[1], cb.density_in_interval(v[0], v[1]));
            (v[0], v[1])
        }
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    if !args.summary {
        for v in cb.values().iter().filter(|&&v| v >= lo && v <= hi) {
            out += &format!("{v}\n");
        }
    }
    write_or_print(args.output.as_deref(), &out)
}

fn cmd_quantize(args: &QuantizeArgs) -> anyhow::Result<()> {
    let tensors = load_tensors(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let role: Role = args.role.into();
    let codec = &args.format;
    let results: Vec<(Tensor64, FidelityReport)> = tensors
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let name = t.name().map(str::to_owned).unwrap_or_else(|| format!("tensor{i}"));
            quantize_one(t, &name, codec, role, args.pad).with_context(|| format!("tensor `{name}`"))
        })
        .collect::<anyhow::Result<_>>()?;
    let (outs, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let dtype = match args.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    save_tensors(&outs, &args.output, dtype).with_context(|| format!("writing {}", args.output.display()))?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let ext = match args.report_opts.report_format {
            Some(ReportKind::Csv) => "csv",
            _ => "json",
        };
        args.output.with_extension(ext)
    });
    let text = render(&reports, args.report_opts.resolve(Some(&report_path)))?;
    write_or_print(Some(&report_path), &text)
}

fn quantize_one(t: &Tensor64, name: &str, codec: &Codec, role: Role, pad: bool) -> anyhow::Result<(Tensor64, FidelityReport)> {
    let axis = codec.axis_for(t.rank(), role);
    let multiple = codec.block_len().filter(|_| pad);
    let (q, padded) = match multiple {
        Some(k) if axis < t.rank() && t.shape()[axis] % k != 0 => {
            let p = pad::pad_axis(t, axis, k);
            let padded = p.shape()[axis];
            let q = codec.fake_quantize(&p, role)?;
            (pad::crop_axis(&q, axis, t.shape()[axis]), Some(padded))
        }
        _ => (codec.fake_quantize(t, role)?, None),
    };
    let stats = error_stats(t, &q)?;
    let mut report = FidelityReport::new(name, codec, t.rank(), role, stats);
    if let Some(p) = padded {
        report.config.insert("padded_extent".into(), p.to_string());
    }
    Ok((q.with_name(name), report))
}

fn cmd_compare(args: &CompareArgs) -> anyhow::Result<()> {
    if args.inputs.is_empty() && args.synth.is_empty() {
        usage_error("compare needs an input file or --synth");
    }
    let mut tensors = Vec::new();
    for path in &args.inputs {
        let ts = load_tensors(path).with_context(|| format!("reading {}", path.display()))?;
        tensors.extend(ts);
    }
    for spec in &args.synth {
        let spec = match args.seed {
            Some(s) => spec.clone().with_seed(s),
            None => spec.clone(),
        };
        tensors.push(synth::<f64>(&spec)?);
    }
    let role: Role = args.role.into();
    let mut reports = Vec::new();
    for (i, t) in tensors.into_iter().enumerate() {
        let t = match t.name() {
            Some(_) => t,
            None => t.with_name(format!("tensor{i}")),
        };
        let rs = compare_formats(&t, &args.formats, role)
            .with_context(|| format!("tensor `{}`", t.name().unwrap_or_default()))?;
        reports.extend(rs);
    }
    let text = render(&reports, args.report_opts.resolve(args.output.as_deref()))?;
    write_or_print(args.output.as_deref(), &text)
}

fn first_tensor(path: Option<&Path>, spec: Option<&SyntheticSpec>) -> anyhow::Result<Tensor64> {
    match (path, spec) {
        (Some(p), _) => load_tensors(p)
            .with_context(|| format!("reading {}", p.display()))?
            .into_iter()
            .next()
            .ok_or_else(|| anyhow!("{} holds no tensors", p.display())),
        (None, Some(s)) => Ok(synth(s)?),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn grid_of(args: &PtqArgs) -> Vec<f64> {
    let grid = match (args.alpha, &args.grid) {
        (Some(a), _) => vec![a],
        (None, Some(g)) => g.clone(),
        (None, None) => default_alpha_grid(),
    };
    if grid.is_empty() || grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        usage_error(format!("alpha values must lie in [0, 1], got {grid:?}"));
    }
    grid
}

#[derive(Serialize)]
struct PtqSummary {
    format: String,
    x_shape: Vec<usize>,
    w_shape: Vec<usize>,
    alpha: f64,
    grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<bool>,
    rtn_error: f64,
    smooth_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    svdq_error: Option<f64>,
}

fn load_pair(args: &PtqArgs) -> anyhow::Result<(Tensor64, Tensor64)> {
    let x = first_tensor(args.x.as_deref(), args.x_synth.as_ref()).context("activation")?;
    let w = first_tensor(args.w.as_deref(), args.w_synth.as_ref()).context("weight")?;
    Ok((x, w))
}

fn cmd_smooth(args: &PtqArgs) -> anyhow::Result<()> {
    let grid = grid_of(args);
    let (x, w) = load_pair(args)?;
    let reference = matmul(&x, &w)?;
    let norm = frobenius(reference.data());
    if norm == 0.0 {
        return Err(lofiq::Error::ZeroSignal.into());
    }
    let rtn = quantized_product_error(&x, &w, &args.format, &reference)?;
    let (alpha, smooth, grid_errors) = if let Some(a) = args.alpha {
        let plan = plan_for(&x, &w, a)?;
        let (xs, ws) = apply_smoothing(&x, &w, &plan)?;
        (a, quantized_product_error(&xs, &ws, &args.format, &reference)?, None)
    } else {
        let (a, _, scored) = search_alpha_scored(&x, &w, &args.format, &grid)?;
        let best = scored.iter().find(|(g, _)| *g == a).map(|s| s.1).unwrap_or(f64::NAN);
        (a, best, Some(scored.iter().map(|(_, e)| e / norm).collect()))
    };
    let summary = PtqSummary {
        format: args.format.to_string(),
        x_shape: x.shape().to_vec(),
        w_shape: w.shape().to_vec(),
        alpha,
        grid,
        grid_errors,
        rank: None,
        smoothing: None,
        rtn_error: rtn / norm,
        smooth_error: smooth / norm,
        svdq_error: None,
    };
    write_or_print(args.output.as_deref(), &serde_json::to_string_pretty(&summary)?)
}

fn cmd_svdq(args: &SvdqArgs) -> anyhow::Result<()> {
    let grid = grid_of(&args.ptq);
    let (x, w) = load_pair(&args.ptq)?;
    let r = svdquant_pipeline(&x, &w, &args.ptq.format, &grid, args.rank, !args.no_smoothing)?;
    let summary = PtqSummary {
        format: args.ptq.format.to_string(),
        x_shape: x.shape().to_vec(),
        w_shape: w.shape().to_vec(),
        alpha: r.alpha,
        grid,
        grid_errors: None,
        rank: Some(r.rank),
        smoothing: Some(r.smoothing),
        rtn_error: r.rtn_error,
        smooth_error: r.smooth_error,
        svdq_error: Some(r.svdq_error),
    };
    write_or_print(args.ptq.output.as_deref(), &serde_json::to_string_pretty(&summary)?)
}

fn init_threads() {
    let Ok(v) = std::env::var("LOFIQ_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            // a second initialization in the same process is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => usage_error(format!("LOFIQ_THREADS must be a positive integer, got `{v}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match &cli.command {
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Quantize(a) => cmd_quantize(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Svdq(a) => cmd_svdq(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
