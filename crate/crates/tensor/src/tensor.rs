use serde::{Deserialize, Serialize};
use std::fmt;

/// Four-dimensional NCHW shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one `h × w` plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub const fn with_c(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub const fn with_hw(self, h: usize, w: usize) -> Self {
        Self { h, w, ..self }
    }

    /// Numpy-style broadcast where every axis is equal or one of them is 1.
    pub fn broadcast(self, other: Shape) -> Option<Shape> {
        let a = self.dims();
        let b = other.dims();
        let mut out = [0; 4];
        for i in 0..4 {
            out[i] = match (a[i], b[i]) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => return None,
            };
        }
        Some(Shape::new(out[0], out[1], out[2], out[3]))
    }

    /// Row-major strides with zero stride on axes of extent 1, for reading
    /// this shape broadcast up to a larger one.
    pub(crate) fn broadcast_strides(&self) -> [usize; 4] {
        let d = self.dims();
        let full = [d[1] * d[2] * d[3], d[2] * d[3], d[3], 1];
        let mut s = [0; 4];
        for i in 0..4 {
            s[i] = if d[i] == 1 { 0 } else { full[i] };
        }
        s
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major NCHW tensor of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(Shape::scalar(), value)
    }

    /// Panics if `data.len()` does not match the shape.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.len(),
            data.len(),
            "tensor data length {} does not match shape {}",
            data.len(),
            shape
        );
        Self { shape, data }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = value;
    }

    /// The `h × w` plane at batch `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Reinterpret with a new shape of the same length.
    pub fn reshape(mut self, shape: Shape) -> Self {
        assert_eq!(shape.len(), self.data.len(), "reshape {} -> {}", self.shape, shape);
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors with identical shapes.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reduce a broadcast gradient back down to `target`, summing over every
    /// axis where `target` has extent 1.
    pub fn sum_to(&self, target: Shape) -> Tensor {
        if self.shape == target {
            return self.clone();
        }
        let s = self.shape;
        let ts = target.broadcast_strides();
        let mut out = Tensor::zeros(target);
        let mut i = 0;
        for n in 0..s.n {
            for c in 0..s.c {
                for y in 0..s.h {
                    let row = n * ts[0] + c * ts[1] + y * ts[2];
                    for x in 0..s.w {
                        out.data[row + x * ts[3]] += self.data[i];
                        i += 1;
                    }
                }
            }
        }
        out
    }

    /// Stack tensors along the batch axis. All inputs must share `c, h, w`.
    pub fn stack(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "stack of zero tensors");
        let first = parts[0].shape;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        let mut n = 0;
        for p in parts {
            assert_eq!(
                (p.shape.c, p.shape.h, p.shape.w),
                (first.c, first.h, first.w),
                "stack shape mismatch"
            );
            n += p.shape.n;
            data.extend_from_slice(&p.data);
        }
        Tensor::from_vec(Shape::new(n, first.c, first.h, first.w), data)
    }

    /// Batch element `n` as a tensor with batch extent 1.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let s = self.shape;
        let len = s.c * s.plane();
        Tensor::from_vec(
            Shape::new(1, s.c, s.h, s.w),
            self.data[n * len..(n + 1) * len].to_vec(),
        )
    }
}
