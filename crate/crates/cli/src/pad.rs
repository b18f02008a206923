//! Zero padding along one axis.

use lofiq::Tensor64;

fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn resize(t: &Tensor64, axis: usize, extent: usize) -> Tensor64 {
    let (outer, old, inner) = split(t.shape(), axis);
    let keep = old.min(extent);
    let mut data = vec![0.0; outer * extent * inner];
    for o in 0..outer {
        let src = &t.data()[o * old * inner..][..keep * inner];
        data[o * extent * inner..][..keep * inner].copy_from_slice(src);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = extent;
    let out = Tensor64::new(shape, data).expect("resized shape matches data");
    match t.name() {
        Some(n) => out.with_name(n),
        None => out,
    }
}

/// Grows `axis` with zeros to the next multiple of `multiple`.
pub fn pad_axis(t: &Tensor64, axis: usize, multiple: usize) -> Tensor64 {
    let extent = t.shape()[axis].div_ceil(multiple) * multiple;
    resize(t, axis, extent)
}

pub fn crop_axis(t: &Tensor64, axis: usize, extent: usize) -> Tensor64 {
    resize(t, axis, extent)
}
