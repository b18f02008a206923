//! Post-training transforms for a linear layer `Y = X * W`, `X` is
//! `[tokens, d]` and `W` is `[d, n]`.
//!
//! Smoothing moves quantization difficulty from activations to weights
//! with a per-channel scale `s_j = max|X[:,j]|^a / max|W[j,:]|^(1-a)`:
//! `Y = (X diag(s)^-1) (diag(s) W)`. The low-rank split keeps the top-`r`
//! singular subspace of `W` in high precision and quantizes the residual.

use rayon::prelude::*;

use crate::codec::{Codec, Role};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{frobenius, frobenius_diff, matmul, Tensor};

pub const MAX_FLOOR: f64 = 1e-8;
pub const SCALE_MIN: f64 = 1e-5;
pub const SCALE_MAX: f64 = 1e5;
pub const DEFAULT_RANK: usize = 16;
pub const MAX_SWEEPS: usize = 80;

/// `0.1, 0.2, ..., 0.9`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingPlan<T> {
    pub scales: Vec<T>,
    pub alpha: T,
    pub activation_max: Vec<T>,
    pub weight_max: Vec<T>,
}

/// `max|X[:, j]|` for each column of `x`.
pub fn column_abs_max<T: Scalar>(x: &Tensor<T>) -> Result<Vec<T>> {
    let (_, d) = x.matrix_dims()?;
    let mut out = vec![T::zero(); d];
    for row in x.data().chunks_exact(d) {
        for (m, &v) in out.iter_mut().zip(row) {
            *m = m.max(v.abs());
        }
    }
    Ok(out)
}

/// `max|W[j, :]|` for each row of `w`.
pub fn row_abs_max<T: Scalar>(w: &Tensor<T>) -> Result<Vec<T>> {
    let (_, n) = w.matrix_dims()?;
    Ok(w.data()
        .chunks_exact(n)
        .map(|row| row.iter().fold(T::zero(), |m, v| m.max(v.abs())))
        .collect())
}

pub fn smooth_scales<T: Scalar>(x_colmax: &[T], w_rowmax: &[T], alpha: T) -> Result<SmoothingPlan<T>> {
    if x_colmax.len() != w_rowmax.len() {
        return Err(Error::LengthMismatch {
            left: x_colmax.len(),
            right: w_rowmax.len(),
        });
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidParameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let floor = T::of_f64(MAX_FLOOR);
    let (lo, hi) = (T::of_f64(SCALE_MIN), T::of_f64(SCALE_MAX));
    let scales = x_colmax
        .iter()
        .zip(w_rowmax)
        .map(|(&xm, &wm)| {
            let s = xm.max(floor).powf(alpha) / wm.max(floor).powf(T::one() - alpha);
            s.max(lo).min(hi)
        })
        .collect();
    Ok(SmoothingPlan {
        scales,
        alpha,
        activation_max: x_colmax.to_vec(),
        weight_max: w_rowmax.to_vec(),
    })
}

/// Plan for `(x, w)` at a given `alpha`.
pub fn plan_for<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, alpha: T) -> Result<SmoothingPlan<T>> {
    smooth_scales(&column_abs_max(x)?, &row_abs_max(w)?, alpha)
}

/// `(x diag(s)^-1, diag(s) w)`.
pub fn apply_smoothing<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, plan: &SmoothingPlan<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, d) = x.matrix_dims()?;
    let (d2, n) = w.matrix_dims()?;
    if d != d2 || d != plan.scales.len() {
        return Err(Error::ShapeMismatch(format!(
            "x has {d} columns, w has {d2} rows, plan has {} scales",
            plan.scales.len()
        )));
    }
    let s = &plan.scales;
    let mut xd = x.data().to_vec();
    for row in xd.chunks_exact_mut(d) {
        for (v, &sj) in row.iter_mut().zip(s) {
            *v = *v / sj;
        }
    }
    let mut wd = w.data().to_vec();
    for (row, &sj) in wd.chunks_exact_mut(n).zip(s) {
        for v in row.iter_mut() {
            *v = *v * sj;
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), xd, x.name().map(str::to_owned)),
        Tensor::from_parts(w.shape().to_vec(), wd, w.name().map(str::to_owned)),
    ))
}

/// `‖Q(x) Q(w) − reference‖_F` with activation and weight roles.
pub fn quantized_product_error<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    codec: &Codec,
    reference: &Tensor<T>,
) -> Result<T> {
    let qx = codec.fake_quantize(x, Role::Activation)?;
    let qw = codec.fake_quantize(w, Role::Weight)?;
    Ok(frobenius_diff(matmul(&qx, &qw)?.data(), reference.data()))
}

/// Grid point minimizing the smoothed quantized-product error; ties go to
/// the smaller alpha. Returns the objective of every grid point as well.
pub fn search_alpha_scored<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    codec: &Codec,
    grid: &[f64],
) -> Result<(T, SmoothingPlan<T>, Vec<(f64, T)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("alpha grid is empty".into()));
    }
    let reference = matmul(x, w)?;
    let xmax = column_abs_max(x)?;
    let wmax = row_abs_max(w)?;
    let scored: Vec<(f64, T, SmoothingPlan<T>)> = grid
        .par_iter()
        .map(|&a| {
            let plan = smooth_scales(&xmax, &wmax, T::of_f64(a))?;
            let (xs, ws) = apply_smoothing(x, w, &plan)?;
            Ok((a, quantized_product_error(&xs, &ws, codec, &reference)?, plan))
        })
        .collect::<Result<_>>()?;
    let best = scored
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.total_cmp(&b.0)))
        .unwrap();
    let objectives = scored.iter().map(|(a, o, _)| (*a, *o)).collect();
    Ok((best.2.alpha, best.2.clone(), objectives))
}

pub fn search_alpha<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, codec: &Codec, grid: &[f64]) -> Result<(T, SmoothingPlan<T>)> {
    let (a, plan, _) = search_alpha_scored(x, w, codec, grid)?;
    Ok((a, plan))
}

/// Thin SVD `a = u diag(s) vt`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// `m x p`, row-major, `p = min(m, n)`.
    pub u: Tensor<T>,
    pub s: Vec<T>,
    /// `p x n`, row-major.
    pub vt: Tensor<T>,
}

/// One-sided Jacobi on the columns of `a` (`m >= n`). Returns column-major
/// `U * Σ` and `V` plus the column norms.
fn jacobi_columns<T: Scalar>(m: usize, n: usize, a_cols: &mut [Vec<T>]) -> Result<Vec<Vec<T>>> {
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let tol = T::epsilon() * T::from_usize(m).unwrap().sqrt();
    let total: T = a_cols.iter().flatten().map(|&x| x * x).sum();
    // columns at round-off level count as zero
    let negligible = T::epsilon() * T::epsilon() * total;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (left, right) = a_cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&x, &y) in cp.iter().zip(cq.iter()) {
                    alpha = alpha + x * x;
                    beta = beta + y * y;
                    gamma = gamma + x * y;
                }
                if gamma == T::zero() || alpha.min(beta) <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::of_f64(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                let (vl, vr) = v.split_at_mut(q);
                for (x, y) in vl[p].iter_mut().zip(vr[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence { sweeps: MAX_SWEEPS })
}

/// Thin SVD by one-sided Jacobi rotations.
pub fn svd<T: Scalar>(a: &Tensor<T>) -> Result<Svd<T>> {
    let (rows, cols) = a.matrix_dims()?;
    let transposed = rows < cols;
    let (m, n) = if transposed { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| {
        if transposed {
            a.data()[j * cols + i]
        } else {
            a.data()[i * cols + j]
        }
    };
    let mut us: Vec<Vec<T>> = (0..n).map(|j| (0..m).map(|i| at(i, j)).collect()).collect();
    let v = jacobi_columns(m, n, &mut us)?;

    let norms: Vec<T> = us.iter().map(|c| frobenius(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    // left vectors of the (possibly transposed) problem: m x n; right: n x n
    let mut left = vec![T::zero(); m * n];
    let mut right = vec![T::zero(); n * n];
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        for i in 0..m {
            left[i * n + k] = if sigma > T::zero() { us[j][i] / sigma } else { T::zero() };
        }
        for i in 0..n {
            right[k * n + i] = v[j][i];
        }
    }
    let p = n;
    let (u, vt) = if transposed {
        // a^T = L S R^T  =>  a = R S L^T
        let mut u = vec![T::zero(); rows * p];
        for k in 0..p {
            for i in 0..rows {
                u[i * p + k] = right[k * n + i];
            }
        }
        let mut vt = vec![T::zero(); p * cols];
        for k in 0..p {
            for j in 0..cols {
                vt[k * cols + j] = left[j * n + k];
            }
        }
        (u, vt)
    } else {
        (left, right)
    };
    Ok(Svd {
        u: Tensor::from_parts(vec![rows, p], u, None),
        s,
        vt: Tensor::from_parts(vec![p, cols], vt, None),
    })
}

#[derive(Debug, Clone)]
pub struct LowRankBranch<T> {
    /// `d x r`, `U_r Σ_r`.
    pub l1: Tensor<T>,
    /// `r x n`, `V_r^T`.
    pub l2: Tensor<T>,
    pub rank: usize,
    /// `w − l1 l2`.
    pub residual: Tensor<T>,
    /// All singular values of `w`, descending.
    pub singular_values: Vec<T>,
}

impl<T: Scalar> LowRankBranch<T> {
    pub fn product(&self) -> Tensor<T> {
        matmul(&self.l1, &self.l2).expect("factor shapes agree")
    }
}

pub fn svd_split<T: Scalar>(w: &Tensor<T>, rank: usize) -> Result<LowRankBranch<T>> {
    let (d, n) = w.matrix_dims()?;
    let max = d.min(n);
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    let Svd { u, s, vt } = svd(w)?;
    let p = s.len();
    let mut l1 = vec![T::zero(); d * rank];
    for i in 0..d {
        for k in 0..rank {
            l1[i * rank + k] = u.data()[i * p + k] * s[k];
        }
    }
    let l2 = vt.data()[..rank * n].to_vec();
    let l1 = Tensor::from_parts(vec![d, rank], l1, None);
    let l2 = Tensor::from_parts(vec![rank, n], l2, None);
    let low = matmul(&l1, &l2)?;
    let residual: Vec<T> = w.data().iter().zip(low.data()).map(|(&a, &b)| a - b).collect();
    Ok(LowRankBranch {
        l1,
        l2,
        rank,
        residual: Tensor::from_parts(vec![d, n], residual, None),
        singular_values: s,
    })
}

/// Relative product errors `‖Ŷ − XW‖_F / ‖XW‖_F` of three pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub alpha: f64,
    pub rank: usize,
    pub smoothing: bool,
    pub rtn_error: f64,
    pub smooth_error: f64,
    pub svdq_error: f64,
}

/// Runs RTN, smoothing and smoothing plus low-rank on one layer.
///
/// The low-rank branch is taken from the smoothed weight (or the raw
/// weight when `smoothing` is false) and kept unquantized, as is the
/// activation it multiplies; only the residual and the activation fed to
/// it are quantized.
pub fn svdquant_pipeline<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    codec: &Codec,
    grid: &[f64],
    rank: usize,
    smoothing: bool,
) -> Result<PipelineReport> {
    let (d, n) = w.matrix_dims()?;
    if rank == 0 || rank > d.min(n) {
        return Err(Error::RankOutOfRange { rank, max: d.min(n) });
    }
    let reference = matmul(x, w)?;
    let norm = frobenius(reference.data());
    if norm == T::zero() {
        return Err(Error::ZeroSignal);
    }
    let rel = |e: T| (e / norm).as_f64();

    let rtn = quantized_product_error(x, w, codec, &reference)?;
    let (alpha, plan, scored) = search_alpha_scored(x, w, codec, grid)?;
    let smooth = scored.iter().find(|(a, _)| T::of_f64(*a) == alpha).unwrap().1;

    let (xs, ws) = if smoothing {
        apply_smoothing(x, w, &plan)?
    } else {
        (x.clone(), w.clone())
    };
    let branch = svd_split(&ws, rank)?;
    let low = matmul(&xs, &branch.product())?;
    let qx = codec.fake_quantize(&xs, Role::Activation)?;
    let qr = codec.fake_quantize(&branch.residual, Role::Weight)?;
    let high = matmul(&qx, &qr)?;
    let approx: Vec<T> = low.data().iter().zip(high.data()).map(|(&a, &b)| a + b).collect();
    let svdq = frobenius_diff(&approx, reference.data());

    Ok(PipelineReport {
        alpha: alpha.as_f64(),
        rank,
        smoothing,
        rtn_error: rel(rtn),
        smooth_error: rel(smooth),
        svdq_error: rel(svdq),
    })
}
