//! Rank-4 tensors in batch/height/width/channel layout and the forward
//! (plus matching backward) kernels used by the network.

mod conv;
mod ops;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub use conv::{
    conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward, pad_same,
    pad_same_backward, pointwise_conv2d, pointwise_conv2d_backward, separable_conv,
};
pub use ops::{
    add, concat_channels, concat_channels_backward, dense, dense_backward, global_avg_pool,
    global_avg_pool_backward, max_pool2d, max_pool2d_backward, max_pool2d_with_indices, relu,
    relu_backward, softmax, softmax_backward,
};

/// Storage element. Kernels accumulate in `f64` regardless of the storage type.
pub trait Element:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Element for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Extents of a [`Tensor4`]: batch, height, width, channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub const fn new(n: usize, h: usize, w: usize, c: usize) -> Self {
        Dims { n, h, w, c }
    }

    pub const fn len(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item.
    pub const fn sample_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.h, self.w, self.c)
    }
}

/// Dense rank-4 array, row-major over (n, h, w, c).
///
/// Convolution weights reuse the type with dims `[f, f, c_in, c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Element> Tensor4<T> {
    pub fn new(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.len() {
            return Err(Error::shape(
                "Tensor4::new",
                format!("{} elements for dims {}", data.len(), dims),
            ));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::ZERO)
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Self {
        let dims = dims.into();
        Tensor4 {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for y in 0..dims.h {
                for x in 0..dims.w {
                    for c in 0..dims.c {
                        data.push(f([n, y, x, c]));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    /// A `[1, 1, 1, len]` tensor holding `values`.
    pub fn vector(values: Vec<T>) -> Self {
        Tensor4 {
            dims: Dims::new(1, 1, 1, values.len()),
            data: values,
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::vector(vec![value])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.dims.h + y) * self.dims.w + x) * self.dims.c + c
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> T {
        self.data[self.offset(n, y, x, c)]
    }

    /// Contiguous data of batch item `n`.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.dims.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts storage precision through `f64`.
    pub fn cast<U: Element>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn reshape(self, dims: impl Into<Dims>) -> Result<Self> {
        Tensor4::new(dims, self.data)
    }

    /// Stacks batch items of equal per-sample dims.
    pub fn stack(items: &[&Tensor4<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("stack", "no tensors"))?
            .dims;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            if (t.dims.h, t.dims.w, t.dims.c) != (first.h, first.w, first.c) {
                return Err(Error::shape("stack", format!("{} vs {}", t.dims, first)));
            }
            data.extend_from_slice(&t.data);
            n += t.dims.n;
        }
        Ok(Tensor4 {
            dims: Dims::new(n, first.h, first.w, first.c),
            data,
        })
    }

    /// Batch items `range` as a new tensor.
    pub fn slice_batch(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.dims.n || range.start > range.end {
            return Err(Error::shape(
                "slice_batch",
                format!("{range:?} of batch {}", self.dims.n),
            ));
        }
        let len = self.dims.sample_len();
        Ok(Tensor4 {
            dims: Dims::new(range.len(), self.dims.h, self.dims.w, self.dims.c),
            data: self.data[range.start * len..range.end * len].to_vec(),
        })
    }

    /// Mirrors every image left to right.
    pub fn flip_horizontal(&self) -> Self {
        let d = self.dims;
        Tensor4::from_fn(d, |[n, y, x, c]| self.at(n, y, d.w - 1 - x, c))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.to_f64().is_finite())
    }
}

/// Border handling for a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Only placements fully inside the input.
    Valid,
    /// Symmetric zero padding of `(f - 1) / 2`; odd `f` and stride 1 only.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub const fn valid(kernel: usize, stride: usize) -> Self {
        ConvSpec {
            kernel,
            stride,
            padding: Padding::Valid,
        }
    }

    pub const fn same(kernel: usize) -> Self {
        ConvSpec {
            kernel,
            stride: 1,
            padding: Padding::Same,
        }
    }

    /// Output spatial extents for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Geometry(format!(
                "kernel {} and stride {} must be positive",
                self.kernel, self.stride
            )));
        }
        match self.padding {
            Padding::Valid => Ok((
                out_extent(h, self.kernel, self.stride)?,
                out_extent(w, self.kernel, self.stride)?,
            )),
            Padding::Same => {
                if self.stride != 1 || self.kernel % 2 == 0 {
                    return Err(Error::Geometry(format!(
                        "same padding needs odd kernel and stride 1 (kernel {}, stride {})",
                        self.kernel, self.stride
                    )));
                }
                Ok((h, w))
            }
        }
    }
}

/// Number of valid kernel placements along one axis:
/// `floor((n_in - f) / s) + 1`.
pub fn out_extent(n_in: usize, f: usize, s: usize) -> Result<usize> {
    if f == 0 || s == 0 {
        return Err(Error::Geometry(format!(
            "kernel {f} and stride {s} must be positive"
        )));
    }
    if n_in < f {
        return Err(Error::Geometry(format!(
            "kernel {f} larger than input extent {n_in}"
        )));
    }
    Ok((n_in - f) / s + 1)
}

/// Feature-map element count `out_h * out_w * channels` for a valid convolution.
pub fn feature_map_size(dims: Dims, f: usize, s: usize) -> Result<usize> {
    Ok(out_extent(dims.h, f, s)? * out_extent(dims.w, f, s)? * dims.c)
}

/// Worker count for kernel parallelism, from `DUALSCOPE_THREADS` (unset or
/// invalid means "let rayon decide").
pub fn threads_from_env() -> Option<usize> {
    std::env::var("DUALSCOPE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
