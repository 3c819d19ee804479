use super::FlowField;
use crate::error::{Error, Result};

/// Infinitesimal strain tensor of a flow field.
///
/// The tensor is symmetric, so the shear component `exy` stands for both
/// off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainField {
    pub width: usize,
    pub height: usize,
    pub exx: Vec<f64>,
    pub eyy: Vec<f64>,
    pub exy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl StrainField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, exx: vec![0.0; n], eyy: vec![0.0; n], exy: vec![0.0; n], magnitude: vec![0.0; n] }
    }

    /// Builds a field whose only non-zero content is a given magnitude plane.
    pub fn from_magnitude(width: usize, height: usize, magnitude: Vec<f64>) -> Result<Self> {
        if magnitude.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "strain magnitude of length {} for {width}x{height}",
                magnitude.len()
            )));
        }
        if magnitude.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidParameter("strain magnitude must be finite and non-negative".into()));
        }
        let n = width * height;
        Ok(Self { width, height, exx: vec![0.0; n], eyy: vec![0.0; n], exy: vec![0.0; n], magnitude })
    }

    #[inline]
    pub fn magnitude_at(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }
}

/// Derivative of `f` along a line of `n` samples spaced `stride` apart.
#[inline]
fn diff(f: &[f64], i: usize, pos: usize, n: usize, stride: usize) -> f64 {
    if n == 1 {
        0.0
    } else if pos == 0 {
        f[i + stride] - f[i]
    } else if pos == n - 1 {
        f[i] - f[i - stride]
    } else {
        0.5 * (f[i + stride] - f[i - stride])
    }
}

/// Strain components and magnitude `sqrt(exx² + eyy² + 2·exy²)`.
///
/// Spatial derivatives are central differences inside the field and one-sided
/// differences on the border, which is exact for linear flow.
pub fn optical_strain(flow: &FlowField) -> Result<StrainField> {
    if !flow.is_finite() {
        return Err(Error::NonFinite("flow passed to optical_strain"));
    }
    let (w, h) = (flow.width, flow.height);
    let mut s = StrainField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ux = diff(&flow.u, i, x, w, 1);
            let uy = diff(&flow.u, i, y, h, w);
            let vx = diff(&flow.v, i, x, w, 1);
            let vy = diff(&flow.v, i, y, h, w);
            let exy = 0.5 * (uy + vx);
            s.exx[i] = ux;
            s.eyy[i] = vy;
            s.exy[i] = exy;
            s.magnitude[i] = (ux * ux + vy * vy + 2.0 * exy * exy).sqrt();
        }
    }
    Ok(s)
}
