//! Dense row-major tensors and the axis/block partitioning used by every
//! block-scaled codec.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Immutable once constructed; every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    name: Option<String>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, rejecting bad shapes and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} elements, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                tensor: String::new(),
                index,
            });
        }
        Ok(Self {
            shape,
            data,
            name: None,
        })
    }

    /// One-dimensional tensor over `data`.
    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![T::zero(); n],
            name: None,
        })
    }

    /// Internal constructor for codec outputs, whose shape and finiteness
    /// are guaranteed by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>, name: Option<String>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data, name }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: extents are positive.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Elementwise map that keeps shape and name.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
            self.name.clone(),
        )
    }

    pub fn block_view(&self, axis: usize, block_size: usize) -> Result<BlockView<'_, T>> {
        Ok(BlockView {
            tensor: self,
            layout: BlockLayout::new(&self.shape, axis, block_size)?,
        })
    }

    /// Converts the element type, rounding to nearest when narrowing.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            self.name.clone(),
        )
    }

    /// 2-D row-major view dimensions, or an error for other ranks.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be at least 1".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    Ok(())
}

/// Partition of one tensor axis into equal contiguous blocks.
///
/// The tensor is viewed as `outer x extent x inner`, where `extent` is the
/// size of the blocked axis. A *fiber* fixes the outer and inner indices and
/// runs along the axis; each fiber holds `block_count` blocks of
/// `block_size` elements. Blocks are numbered fiber-major:
/// `id = (o * inner + i) * block_count + b`. Codecs store their per-element
/// payload in this block-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    shape: Vec<usize>,
    axis: usize,
    block_size: usize,
    block_count: usize,
    outer: usize,
    extent: usize,
    inner: usize,
}

impl BlockLayout {
    pub fn new(shape: &[usize], axis: usize, block_size: usize) -> Result<Self> {
        check_shape(shape)?;
        if axis >= shape.len() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: shape.len(),
            });
        }
        let extent = shape[axis];
        if block_size == 0 || extent % block_size != 0 {
            return Err(Error::NotDivisible { extent, block_size });
        }
        Ok(Self {
            shape: shape.to_vec(),
            axis,
            block_size,
            block_count: extent / block_size,
            outer: shape[..axis].iter().product(),
            extent,
            inner: shape[axis + 1..].iter().product(),
        })
    }

    /// One block per fiber: the whole axis is a single group.
    pub fn fibers(shape: &[usize], axis: usize) -> Result<Self> {
        let extent = *shape.get(axis).ok_or(Error::AxisOutOfRange {
            axis,
            rank: shape.len(),
        })?;
        Self::new(shape, axis, extent)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Blocks per fiber.
    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn num_blocks(&self) -> usize {
        self.outer * self.inner * self.block_count
    }

    pub fn len(&self) -> usize {
        self.outer * self.extent * self.inner
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat row-major index of element `j` of block `id`.
    #[inline]
    pub fn flat_index(&self, id: usize, j: usize) -> usize {
        let b = id % self.block_count;
        let fiber = id / self.block_count;
        let (o, i) = (fiber / self.inner, fiber % self.inner);
        (o * self.extent + b * self.block_size + j) * self.inner + i
    }

    pub fn block_indices(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.block_size).map(move |j| self.flat_index(id, j))
    }

    /// Reorders row-major data into block-major order.
    pub fn gather<T: Copy>(&self, data: &[T]) -> Vec<T> {
        assert_eq!(data.len(), self.len());
        if self.inner == 1 {
            return data.to_vec();
        }
        let mut out = Vec::with_capacity(data.len());
        for o in 0..self.outer {
            let slab = &data[o * self.extent * self.inner..(o + 1) * self.extent * self.inner];
            for i in 0..self.inner {
                out.extend(slab[i..].iter().step_by(self.inner).copied());
            }
        }
        out
    }

    /// Inverse of [`gather`](Self::gather).
    pub fn scatter<T: Copy + Default>(&self, block_major: &[T]) -> Vec<T> {
        assert_eq!(block_major.len(), self.len());
        if self.inner == 1 {
            return block_major.to_vec();
        }
        let mut out = vec![T::default(); block_major.len()];
        let fiber_len = self.extent;
        for o in 0..self.outer {
            let base = o * self.extent * self.inner;
            for i in 0..self.inner {
                let src = &block_major[(o * self.inner + i) * fiber_len..][..fiber_len];
                for (j, &v) in src.iter().enumerate() {
                    out[base + j * self.inner + i] = v;
                }
            }
        }
        out
    }
}

/// A [`BlockLayout`] bound to a tensor.
#[derive(Debug, Clone)]
pub struct BlockView<'a, T> {
    tensor: &'a Tensor<T>,
    layout: BlockLayout,
}

impl<'a, T: Scalar> BlockView<'a, T> {
    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn into_layout(self) -> BlockLayout {
        self.layout
    }

    pub fn block_count(&self) -> usize {
        self.layout.block_count
    }

    pub fn block_size(&self) -> usize {
        self.layout.block_size
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.num_blocks()
    }

    pub fn block(&self, id: usize) -> impl Iterator<Item = T> + '_ {
        self.layout
            .block_indices(id)
            .map(move |k| self.tensor.data[k])
    }

    /// All elements in block-major order.
    pub fn gather(&self) -> Vec<T> {
        self.layout.gather(&self.tensor.data)
    }
}

/// `a (m x k) * b (k x n)`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    use rayon::prelude::*;

    let (m, k) = a.matrix_dims()?;
    let (k2, n) = b.matrix_dims()?;
    if k != k2 {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply {m}x{k} by {k2}x{n}"
        )));
    }
    let mut out = vec![T::zero(); m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
        for (p, &av) in a.data[r * k..(r + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    });
    Ok(Tensor::from_parts(vec![m, n], out, None))
}

/// Frobenius norm of `a - b`.
pub fn frobenius_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |s, v| s + v)
        .sqrt()
}

pub fn frobenius<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |s, &v| s + v * v).sqrt()
}
