//! Single-channel 2-D maps used for saliency predictions and ground truth.

use crate::tensor::{kernels, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayMap {
    /// Row-major `data`; `None` if the length does not match.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == height * width).then_some(GrayMap { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        GrayMap { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        GrayMap { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayMap {
        GrayMap { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Half-pixel bilinear resize (align-corners = false).
    pub fn resize_bilinear(&self, height: usize, width: usize) -> GrayMap {
        if (height, width) == self.dims() {
            return self.clone();
        }
        let out = kernels::resize_bilinear(&self.to_tensor(), height, width);
        GrayMap { height, width, data: out.into_data() }
    }

    /// Nearest-neighbour resize with half-pixel centres; keeps binary maps
    /// binary.
    pub fn resize_nearest(&self, height: usize, width: usize) -> GrayMap {
        let src = |dst: usize, out: usize, inp: usize| (((dst as f64 + 0.5) * inp as f64 / out as f64) as usize).min(inp - 1);
        GrayMap::from_fn(height, width, |y, x| self.get(src(y, height, self.height), src(x, width, self.width)))
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 1, self.height, self.width], self.data.clone()).expect("map length matches dims")
    }

    /// Plane `(n, c)` of a tensor.
    pub fn from_tensor_plane(t: &Tensor, n: usize, c: usize) -> GrayMap {
        let [_, _, h, w] = t.shape();
        let start = t.offset(n, c, 0, 0);
        GrayMap { height: h, width: w, data: t.data()[start..start + h * w].to_vec() }
    }
}
