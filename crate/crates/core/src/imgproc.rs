//! Planar image kernels shared by the flow solver, preprocessing and augmentation.
//!
//! Resampling uses the pixel-centre convention (`src = (dst + 0.5) * scale - 0.5`)
//! so that every operation here commutes exactly with a horizontal mirror.

/// Row-major single-channel plane of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self { width, height, data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Plane {
        let mut out = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width) {
            out.extend(row.iter().rev());
        }
        Plane::new(self.width, self.height, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Reflects an out-of-range index back into `0..n` without repeating the edge sample.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i >= 0 && (i as usize) < n {
        return i as usize;
    }
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Normalized 1-D Gaussian kernel of length `2 * radius + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with a symmetric kernel and mirrored borders.
pub fn convolve_separable(p: &Plane, kernel: &[f64]) -> Plane {
    let r = kernel.len() / 2;
    let (w, h) = (p.width, p.height);
    let centre = kernel[r];
    let mut tmp = vec![0.0; w * h];
    let mut padded = vec![0.0; w + 2 * r];
    for (src, dst) in p.data.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        for (j, v) in padded.iter_mut().enumerate() {
            *v = src[reflect(j as isize - r as isize, w)];
        }
        for (x, o) in dst.iter_mut().enumerate() {
            let c = x + r;
            let mut acc = centre * padded[c];
            // Pair symmetric taps so the sum is mirror-exact.
            for t in 1..=r {
                acc += kernel[r + t] * (padded[c - t] + padded[c + t]);
            }
            *o = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        let row = |dy: isize| {
            let yy = reflect(y as isize + dy, h);
            &tmp[yy * w..(yy + 1) * w]
        };
        let mid = row(0);
        for (o, &c) in dst.iter_mut().zip(mid) {
            *o = centre * c;
        }
        for t in 1..=r {
            let (a, b) = (row(-(t as isize)), row(t as isize));
            let k = kernel[r + t];
            for ((o, &av), &bv) in dst.iter_mut().zip(a).zip(b) {
                *o += k * (av + bv);
            }
        }
    }
    Plane::new(w, h, out)
}

pub fn gaussian_blur(p: &Plane, sigma: f64) -> Plane {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    convolve_separable(p, &gaussian_kernel(sigma, radius))
}

/// `x.floor()` without the libm call; exact for |x| < 2^52.
#[inline]
fn fast_floor(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

/// Keys cubic convolution weights (a = -0.5) for taps at offsets -1, 0, 1, 2.
#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let far = |d: f64| ((A * d - 5.0 * A) * d + 8.0 * A) * d - 4.0 * A;
    let near = |d: f64| ((A + 2.0) * d - (A + 3.0)) * d * d + 1.0;
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

/// Bicubic sample with clamped (replicated) borders.
#[inline]
pub fn sample_bicubic(p: &Plane, x: f64, y: f64) -> f64 {
    let fx = fast_floor(x);
    let fy = fast_floor(y);
    let wx = cubic_weights(x - fx);
    let wy = cubic_weights(y - fy);
    let (ix, iy) = (fx as isize, fy as isize);
    let mut rows = [0.0; 4];
    for (j, row) in rows.iter_mut().enumerate() {
        let yy = iy - 1 + j as isize;
        let v = [p.at_clamped(ix - 1, yy), p.at_clamped(ix, yy), p.at_clamped(ix + 1, yy), p.at_clamped(ix + 2, yy)];
        *row = (wx[0] * v[0] + wx[3] * v[3]) + (wx[1] * v[1] + wx[2] * v[2]);
    }
    (wy[0] * rows[0] + wy[3] * rows[3]) + (wy[1] * rows[1] + wy[2] * rows[2])
}

/// Bicubic samples of several same-sized planes at one position, sharing the
/// weight and index computation. Each result equals [`sample_bicubic`].
#[inline]
pub fn sample_bicubic_many<const N: usize>(planes: [&Plane; N], x: f64, y: f64) -> [f64; N] {
    let (w, h) = (planes[0].width as isize, planes[0].height as isize);
    let fx = fast_floor(x);
    let fy = fast_floor(y);
    let wx = cubic_weights(x - fx);
    let wy = cubic_weights(y - fy);
    let (ix, iy) = (fx as isize, fy as isize);
    let mut cols = [0usize; 4];
    let mut rows = [0usize; 4];
    for j in 0..4 {
        cols[j] = (ix - 1 + j as isize).clamp(0, w - 1) as usize;
        rows[j] = (iy - 1 + j as isize).clamp(0, h - 1) as usize * w as usize;
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(planes) {
        let d = &p.data;
        let mut r = [0.0; 4];
        for (rv, &base) in r.iter_mut().zip(&rows) {
            let v = [d[base + cols[0]], d[base + cols[1]], d[base + cols[2]], d[base + cols[3]]];
            *rv = (wx[0] * v[0] + wx[3] * v[3]) + (wx[1] * v[1] + wx[2] * v[2]);
        }
        *o = (wy[0] * r[0] + wy[3] * r[3]) + (wy[1] * r[1] + wy[2] * r[2]);
    }
    out
}

/// Bilinear sample with clamped borders.
#[inline]
pub fn sample_bilinear(p: &Plane, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (p.width - 1) as f64);
    let y = y.clamp(0.0, (p.height - 1) as f64);
    let x0 = x as usize;
    let y0 = y as usize;
    let x1 = (x0 + 1).min(p.width - 1);
    let y1 = (y0 + 1).min(p.height - 1);
    let ax = x - x0 as f64;
    let ay = y - y0 as f64;
    let top = p.at(x0, y0) * (1.0 - ax) + p.at(x1, y0) * ax;
    let bottom = p.at(x0, y1) * (1.0 - ax) + p.at(x1, y1) * ax;
    top * (1.0 - ay) + bottom * ay
}

/// Integer pixel rectangle, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Bilinearly resamples `rect` of `p` onto an `out_w` x `out_h` grid.
///
/// A rectangle whose size equals the output size is copied exactly.
pub fn resample_rect(p: &Plane, rect: PixelRect, out_w: usize, out_h: usize) -> Plane {
    let sx = rect.width() as f64 / out_w as f64;
    let sy = rect.height() as f64 / out_h as f64;
    let (lo_x, hi_x) = (rect.x0 as f64, rect.x1 as f64);
    let (lo_y, hi_y) = (rect.y0 as f64, rect.y1 as f64);
    Plane::from_fn(out_w, out_h, |x, y| {
        let src_x = (rect.x0 as f64 + (x as f64 + 0.5) * sx - 0.5).clamp(lo_x, hi_x);
        let src_y = (rect.y0 as f64 + (y as f64 + 0.5) * sy - 0.5).clamp(lo_y, hi_y);
        sample_bilinear(p, src_x, src_y)
    })
}

/// Bicubic resize of the whole plane (pixel-centre aligned).
pub fn resize_bicubic(p: &Plane, out_w: usize, out_h: usize) -> Plane {
    let sx = p.width as f64 / out_w as f64;
    let sy = p.height as f64 / out_h as f64;
    Plane::from_fn(out_w, out_h, |x, y| sample_bicubic(p, (x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5))
}

/// Bilinear resize of the whole plane (pixel-centre aligned).
pub fn resize_bilinear(p: &Plane, out_w: usize, out_h: usize) -> Plane {
    resample_rect(p, PixelRect { x0: 0, y0: 0, x1: p.width - 1, y1: p.height - 1 }, out_w, out_h)
}
