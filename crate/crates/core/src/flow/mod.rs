//! Dense TV-L1 optical flow between grayscale frames and the optical strain
//! derived from it.

mod strain;
mod tvl1;

pub use strain::{optical_strain, StrainField};
pub use tvl1::{tvl1_flow, tvl1_flow_with_diagnostics, FlowDiagnostics, TvL1Params, MIN_LEVEL_SIZE};

use crate::error::{Error, Result};
use crate::imgproc::Plane;

/// Grayscale frame with luminance in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("empty frame {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidFrame(format!("{} samples for a {width}x{height} frame", data.len())));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidFrame(format!("luminance {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// 8-bit luminance, divided by 255.
    pub fn from_u8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width) {
            data.extend(row.iter().rev());
        }
        Self { width: self.width, height: self.height, data }
    }

    pub(crate) fn to_plane(&self) -> Plane {
        Plane::new(self.width, self.height, self.data.iter().map(|&v| v as f64).collect())
    }

    /// Builds a frame from a plane, clamping samples into `[0, 1]`.
    pub(crate) fn from_plane(p: &Plane) -> Self {
        Self { width: p.width, height: p.height, data: p.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect() }
    }
}

/// Per-pixel displacement `(u, v)` in pixels mapping one frame toward another.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "flow components of length {}/{} for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|v| v * s).collect(),
            v: self.v.iter().map(|v| v * s).collect(),
        }
    }

    pub(crate) fn u_plane(&self) -> Plane {
        Plane::new(self.width, self.height, self.u.clone())
    }

    pub(crate) fn v_plane(&self) -> Plane {
        Plane::new(self.width, self.height, self.v.clone())
    }
}
