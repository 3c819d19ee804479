//! Coarse-to-fine TV-L1 optical flow solved with the primal-dual scheme of
//! Zach, Pock and Bischof, following the structure and defaults of the IPOL
//! reference implementation (Sánchez, Meinhardt-Llopis, Facciolo 2013).
//!
//! The total-variation term is discretized anisotropically (`|∂x u| + |∂y u|`
//! on a staggered grid). With that choice every step of the solver maps onto
//! itself under a horizontal mirror, so mirrored inputs produce mirrored flow
//! to rounding accuracy.

use serde::{Deserialize, Serialize};

use super::{FlowField, GrayFrame};
use crate::error::{Error, Result};
use crate::imgproc::{gaussian_blur, resize_bicubic, sample_bicubic, sample_bicubic_many, Plane};

/// Smallest side length allowed for any pyramid level.
pub const MIN_LEVEL_SIZE: usize = 16;

const PRESMOOTHING_SIGMA: f64 = 0.8;
const ZOOM_SIGMA_ZERO: f64 = 0.6;
const GRAD_IS_ZERO: f64 = 1e-10;

/// TV-L1 solver settings. Defaults are the IPOL reference defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvL1Params {
    /// Weight of the L1 data term.
    pub lambda: f64,
    /// Coupling between the primal variable and its auxiliary copy.
    pub theta: f64,
    /// Dual time step.
    pub tau: f64,
    /// Warps (re-linearizations) per pyramid level.
    pub warps: usize,
    /// Upper bound on pyramid levels; reduced automatically so that the
    /// coarsest level stays at least [`MIN_LEVEL_SIZE`] pixels.
    pub scales: usize,
    /// Downsampling factor between consecutive levels.
    pub zoom: f64,
    pub max_iterations: usize,
    /// Stop when the RMS primal update falls below this value.
    pub stop_epsilon: f64,
    /// 3x3 median filter on the flow after every warp.
    pub median_filter: bool,
}

impl Default for TvL1Params {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.25,
            warps: 5,
            scales: 5,
            zoom: 0.5,
            max_iterations: 300,
            stop_epsilon: 0.01,
            median_filter: false,
        }
    }
}

impl TvL1Params {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [("lambda", self.lambda), ("theta", self.theta), ("tau", self.tau), ("stop_epsilon", self.stop_epsilon)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.zoom > 0.0 && self.zoom < 1.0) {
            return Err(Error::InvalidParameter(format!("zoom must lie in (0, 1), got {}", self.zoom)));
        }
        if self.warps == 0 || self.scales == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidParameter("warps, scales and max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-run solver record at the finest pyramid level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowDiagnostics {
    /// Energy before the first warp, then after each warp.
    pub energy: Vec<f64>,
    /// Inner iterations spent in each warp.
    pub iterations: Vec<usize>,
    /// Pyramid levels actually used.
    pub scales: usize,
}

/// Dense flow from `prev` toward `next`.
pub fn tvl1_flow(prev: &GrayFrame, next: &GrayFrame, params: &TvL1Params) -> Result<FlowField> {
    solve(prev, next, params, false).map(|(flow, _)| flow)
}

/// Same as [`tvl1_flow`] but also returns the finest-level energy trace.
pub fn tvl1_flow_with_diagnostics(
    prev: &GrayFrame,
    next: &GrayFrame,
    params: &TvL1Params,
) -> Result<(FlowField, FlowDiagnostics)> {
    solve(prev, next, params, true)
}

fn solve(
    prev: &GrayFrame,
    next: &GrayFrame,
    params: &TvL1Params,
    record: bool,
) -> Result<(FlowField, FlowDiagnostics)> {
    params.validate()?;
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(Error::DimensionMismatch {
            expected_width: prev.width(),
            expected_height: prev.height(),
            found_width: next.width(),
            found_height: next.height(),
        });
    }
    let (w, h) = (prev.width(), prev.height());
    if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
        return Err(Error::FrameTooSmall { width: w, height: h, min: MIN_LEVEL_SIZE });
    }

    let (i0, i1) = normalize_pair(prev.to_plane(), next.to_plane());
    let i0 = gaussian_blur(&i0, PRESMOOTHING_SIGMA);
    let i1 = gaussian_blur(&i1, PRESMOOTHING_SIGMA);

    let mut pyramid = vec![(i0, i1)];
    let sigma = ZOOM_SIGMA_ZERO * (1.0 / (params.zoom * params.zoom) - 1.0).sqrt();
    while pyramid.len() < params.scales {
        let (a, b) = pyramid.last().expect("non-empty");
        let nw = (a.width as f64 * params.zoom + 0.5) as usize;
        let nh = (a.height as f64 * params.zoom + 0.5) as usize;
        if nw < MIN_LEVEL_SIZE || nh < MIN_LEVEL_SIZE {
            break;
        }
        let a = resize_bicubic(&gaussian_blur(a, sigma), nw, nh);
        let b = resize_bicubic(&gaussian_blur(b, sigma), nw, nh);
        pyramid.push((a, b));
    }

    let mut diagnostics = FlowDiagnostics { scales: pyramid.len(), ..Default::default() };
    let coarsest = pyramid.last().expect("non-empty");
    let mut u1 = Plane::zeros(coarsest.0.width, coarsest.0.height);
    let mut u2 = u1.clone();

    for level in (0..pyramid.len()).rev() {
        let (l0, l1) = &pyramid[level];
        if u1.width != l0.width || u1.height != l0.height {
            let sx = l0.width as f64 / u1.width as f64;
            let sy = l0.height as f64 / u1.height as f64;
            u1 = resize_bicubic(&u1, l0.width, l0.height).map(|v| v * sx);
            u2 = resize_bicubic(&u2, l0.width, l0.height).map(|v| v * sy);
        }
        let diag = if level == 0 && record { Some(&mut diagnostics) } else { None };
        solve_level(l0, l1, &mut u1, &mut u2, params, diag);
    }

    let flow = FlowField::new(w, h, u1.data, u2.data)?;
    if !flow.is_finite() {
        return Err(Error::NonFinite("optical flow"));
    }
    Ok((flow, diagnostics))
}

/// Maps both images jointly onto `[0, 255]`, the intensity range the
/// default `lambda` is tuned for.
fn normalize_pair(a: Plane, b: Plane) -> (Plane, Plane) {
    let (lo, hi) =
        a.data.iter().chain(&b.data).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        let s = 255.0 / (hi - lo);
        (a.map(|v| (v - lo) * s), b.map(|v| (v - lo) * s))
    } else {
        (a.map(|_| 0.0), b.map(|_| 0.0))
    }
}

/// Central differences inside, one-sided at the borders.
fn centered_gradient(p: &Plane) -> (Plane, Plane) {
    let (w, h) = (p.width, p.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x == 0 {
                p.data[i + 1] - p.data[i]
            } else if x == w - 1 {
                p.data[i] - p.data[i - 1]
            } else {
                0.5 * (p.data[i + 1] - p.data[i - 1])
            };
            gy[i] = if y == 0 {
                p.data[i + w] - p.data[i]
            } else if y == h - 1 {
                p.data[i] - p.data[i - w]
            } else {
                0.5 * (p.data[i + w] - p.data[i - w])
            };
        }
    }
    (Plane::new(w, h, gx), Plane::new(w, h, gy))
}

fn warp(p: &Plane, u1: &Plane, u2: &Plane, out: &mut [f64]) {
    let w = p.width;
    for (i, o) in out.iter_mut().enumerate() {
        let x = (i % w) as f64 + u1.data[i];
        let y = (i / w) as f64 + u2.data[i];
        *o = sample_bicubic(p, x, y);
    }
}

/// Total variation (anisotropic) plus weighted L1 residual of the warped image.
fn energy(i0: &Plane, i1: &Plane, u1: &Plane, u2: &Plane, lambda: f64) -> f64 {
    let (w, h) = (i0.width, i0.height);
    let mut warped = vec![0.0; w * h];
    warp(i1, u1, u2, &mut warped);
    let mut tv = 0.0;
    let mut data = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                tv += (u1.data[i + 1] - u1.data[i]).abs() + (u2.data[i + 1] - u2.data[i]).abs();
            }
            if y + 1 < h {
                tv += (u1.data[i + w] - u1.data[i]).abs() + (u2.data[i + w] - u2.data[i]).abs();
            }
            data += (warped[i] - i0.data[i]).abs();
        }
    }
    tv + lambda * data
}

fn solve_level(
    i0: &Plane,
    i1: &Plane,
    u1p: &mut Plane,
    u2p: &mut Plane,
    params: &TvL1Params,
    mut diagnostics: Option<&mut FlowDiagnostics>,
) {
    let (w, h) = (i0.width, i0.height);
    let n = w * h;
    let (i1x, i1y) = centered_gradient(i1);
    let l_t = params.lambda * params.theta;
    let taut = params.tau / params.theta;
    let theta = params.theta;
    let eps2 = params.stop_epsilon * params.stop_epsilon;

    let mut p11 = vec![0.0; n];
    let mut p12 = vec![0.0; n];
    let mut p21 = vec![0.0; n];
    let mut p22 = vec![0.0; n];
    let mut i1w = vec![0.0; n];
    let mut i1wx = vec![0.0; n];
    let mut i1wy = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut rho_c = vec![0.0; n];
    let zeros = vec![0.0; w];

    if let Some(d) = diagnostics.as_deref_mut() {
        d.energy.push(energy(i0, i1, u1p, u2p, params.lambda));
    }

    for _ in 0..params.warps {
        {
            let (u1, u2) = (&u1p.data, &u2p.data);
            for i in 0..n {
                let x = (i % w) as f64 + u1[i];
                let y = (i / w) as f64 + u2[i];
                [i1w[i], i1wx[i], i1wy[i]] = sample_bicubic_many([i1, &i1x, &i1y], x, y);
                grad[i] = i1wx[i] * i1wx[i] + i1wy[i] * i1wy[i];
                rho_c[i] = i1w[i] - i1wx[i] * u1[i] - i1wy[i] * u2[i] - i0.data[i];
            }
        }

        let u1 = &mut u1p.data;
        let u2 = &mut u2p.data;
        let mut iterations = 0;
        let mut error = f64::INFINITY;
        while error > eps2 && iterations < params.max_iterations {
            iterations += 1;
            error = 0.0;

            // Thresholding of the data term followed by the primal update.
            for y in 0..h {
                let row = y * w..(y + 1) * w;
                let (gx_r, gy_r, g_r, rc_r) =
                    (&i1wx[row.clone()], &i1wy[row.clone()], &grad[row.clone()], &rho_c[row.clone()]);
                let (p11_r, p12_r, p21_r, p22_r) =
                    (&p11[row.clone()], &p12[row.clone()], &p21[row.clone()], &p22[row.clone()]);
                let (up12, up22) = if y > 0 {
                    (&p12[row.start - w..row.start], &p22[row.start - w..row.start])
                } else {
                    (&zeros[..], &zeros[..])
                };
                let (u1_r, u2_r) = (&mut u1[row.clone()], &mut u2[row]);
                for x in 0..w {
                    let (gx, gy, g) = (gx_r[x], gy_r[x], g_r[x]);
                    let rho = rc_r[x] + gx * u1_r[x] + gy * u2_r[x];
                    let (d1, d2) = if rho < -l_t * g {
                        (l_t * gx, l_t * gy)
                    } else if rho > l_t * g {
                        (-l_t * gx, -l_t * gy)
                    } else if g < GRAD_IS_ZERO {
                        (0.0, 0.0)
                    } else {
                        let f = -rho / g;
                        (f * gx, f * gy)
                    };
                    let (left1, left2) = if x > 0 { (p11_r[x - 1], p21_r[x - 1]) } else { (0.0, 0.0) };
                    let div1 = ((p11_r[x] - left1) + p12_r[x]) - up12[x];
                    let div2 = ((p21_r[x] - left2) + p22_r[x]) - up22[x];
                    let nu1 = (u1_r[x] + d1) + theta * div1;
                    let nu2 = (u2_r[x] + d2) + theta * div2;
                    error += (nu1 - u1_r[x]) * (nu1 - u1_r[x]) + (nu2 - u2_r[x]) * (nu2 - u2_r[x]);
                    u1_r[x] = nu1;
                    u2_r[x] = nu2;
                }
            }
            error /= n as f64;

            // Dual ascent with per-component projection.
            for y in 0..h {
                let row = y * w..(y + 1) * w;
                let (u1_r, u2_r) = (&u1[row.clone()], &u2[row.clone()]);
                {
                    let (p11_r, p21_r) = (&mut p11[row.clone()], &mut p21[row.clone()]);
                    for x in 0..w - 1 {
                        let a = u1_r[x + 1] - u1_r[x];
                        let b = u2_r[x + 1] - u2_r[x];
                        p11_r[x] = (p11_r[x] + taut * a) / (1.0 + taut * a.abs());
                        p21_r[x] = (p21_r[x] + taut * b) / (1.0 + taut * b.abs());
                    }
                }
                if y + 1 < h {
                    let (u1_d, u2_d) = (&u1[row.end..row.end + w], &u2[row.end..row.end + w]);
                    let (p12_r, p22_r) = (&mut p12[row.clone()], &mut p22[row]);
                    for x in 0..w {
                        let a = u1_d[x] - u1_r[x];
                        let b = u2_d[x] - u2_r[x];
                        p12_r[x] = (p12_r[x] + taut * a) / (1.0 + taut * a.abs());
                        p22_r[x] = (p22_r[x] + taut * b) / (1.0 + taut * b.abs());
                    }
                }
            }
        }

        if params.median_filter {
            *u1p = median3(u1p);
            *u2p = median3(u2p);
        }
        if let Some(d) = diagnostics.as_deref_mut() {
            d.iterations.push(iterations);
            d.energy.push(energy(i0, i1, u1p, u2p, params.lambda));
        }
    }
}

fn median3(p: &Plane) -> Plane {
    let (w, h) = (p.width as isize, p.height as isize);
    Plane::from_fn(p.width, p.height, |x, y| {
        let mut v = [0.0; 9];
        let mut k = 0;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let xx = (x as isize + dx).clamp(0, w - 1) as usize;
                let yy = (y as isize + dy).clamp(0, h - 1) as usize;
                v[k] = p.at(xx, yy);
                k += 1;
            }
        }
        v.sort_by(f64::total_cmp);
        v[4]
    })
}
