//! Landmark-driven geometry: face cropping, head-motion compensation, eye
//! masking, and assembly of the 42x42 three-channel network input.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{optical_strain, tvl1_flow, FlowField, GrayFrame, StrainField, TvL1Params};
use crate::imgproc::{resample_rect, PixelRect, Plane};

/// Side length of the cropped face.
pub const CROP_SIZE: usize = 128;
/// Side length of the network input.
pub const INPUT_SIZE: usize = 42;
/// Side length of the two upper regions; the mouth region is `ROI_SIZE x INPUT_SIZE`.
pub const ROI_SIZE: usize = 21;

pub const LANDMARK_COUNT: usize = 68;
pub const JAW: std::ops::RangeInclusive<usize> = 0..=16;
pub const LEFT_BROW: std::ops::RangeInclusive<usize> = 17..=21;
pub const RIGHT_BROW: std::ops::RangeInclusive<usize> = 22..=26;
pub const NOSE: std::ops::RangeInclusive<usize> = 27..=35;
pub const LEFT_EYE: std::ops::RangeInclusive<usize> = 36..=41;
pub const RIGHT_EYE: std::ops::RangeInclusive<usize> = 42..=47;
pub const MOUTH: std::ops::RangeInclusive<usize> = 48..=67;

pub const NOSE_MARGIN: f64 = 5.0;
pub const EYE_MARGIN: f64 = 15.0;
pub const ROI_MARGIN: f64 = 12.0;

/// 68 facial landmarks in pixel coordinates of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    points: Vec<(f64, f64)>,
    frame_width: usize,
    frame_height: usize,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>, frame_width: usize, frame_height: usize) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::InvalidParameter(format!("expected {LANDMARK_COUNT} landmarks, got {}", points.len())));
        }
        let (wmax, hmax) = (frame_width as f64 - 1.0, frame_height as f64 - 1.0);
        for (i, &(x, y)) in points.iter().enumerate() {
            if !(x.is_finite() && y.is_finite() && (0.0..=wmax).contains(&x) && (0.0..=hmax).contains(&y)) {
                return Err(Error::InvalidParameter(format!(
                    "landmark {i} at ({x}, {y}) lies outside the {frame_width}x{frame_height} frame"
                )));
            }
        }
        Ok(Self { points, frame_width, frame_height })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn frame_width(&self) -> usize {
        self.frame_width
    }

    pub fn frame_height(&self) -> usize {
        self.frame_height
    }

    /// Pixel box around the selected points grown by `margin` on every side,
    /// clipped to the frame. Pixels whose centres lie on the boundary count as
    /// inside. `None` when nothing remains.
    pub fn region(&self, indices: impl IntoIterator<Item = usize>, margin: f64) -> Option<PixelRect> {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in indices {
            let (x, y) = self.points[i];
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return None;
        }
        let lo_x = (x0 - margin).ceil().max(0.0);
        let lo_y = (y0 - margin).ceil().max(0.0);
        let hi_x = (x1 + margin).floor().min(self.frame_width as f64 - 1.0);
        let hi_y = (y1 + margin).floor().min(self.frame_height as f64 - 1.0);
        if lo_x > hi_x || lo_y > hi_y {
            return None;
        }
        Some(PixelRect { x0: lo_x as usize, y0: lo_y as usize, x1: hi_x as usize, y1: hi_y as usize })
    }
}

/// Face box from the reference-frame landmarks, reused for every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceCrop {
    pub rect: PixelRect,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl FaceCrop {
    /// Tight integer box around all landmarks.
    pub fn from_landmarks(lm: &LandmarkSet) -> Result<Self> {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
        for &(x, y) in lm.points() {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let rect = PixelRect {
            x0: x0.floor() as usize,
            y0: y0.floor() as usize,
            x1: (x1.ceil() as usize).min(lm.frame_width - 1),
            y1: (y1.ceil() as usize).min(lm.frame_height - 1),
        };
        if rect.x1 <= rect.x0 || rect.y1 <= rect.y0 {
            return Err(Error::DegenerateRegion(format!(
                "face box [{}, {}]-[{}, {}]",
                rect.x0, rect.y0, rect.x1, rect.y1
            )));
        }
        Ok(Self { rect, frame_width: lm.frame_width, frame_height: lm.frame_height })
    }

    /// Crops and bilinearly resizes a frame to `CROP_SIZE x CROP_SIZE`.
    pub fn apply(&self, frame: &GrayFrame) -> Result<GrayFrame> {
        if frame.width() != self.frame_width || frame.height() != self.frame_height {
            return Err(Error::DimensionMismatch {
                expected_width: self.frame_width,
                expected_height: self.frame_height,
                found_width: frame.width(),
                found_height: frame.height(),
            });
        }
        let out = resample_rect(&frame.to_plane(), self.rect, CROP_SIZE, CROP_SIZE);
        Ok(GrayFrame::from_plane(&out))
    }

    /// Landmarks expressed in crop coordinates.
    pub fn map_landmarks(&self, lm: &LandmarkSet) -> Result<LandmarkSet> {
        let sx = CROP_SIZE as f64 / self.rect.width() as f64;
        let sy = CROP_SIZE as f64 / self.rect.height() as f64;
        let max = (CROP_SIZE - 1) as f64;
        let points = lm
            .points()
            .iter()
            .map(|&(x, y)| {
                let cx = (x - self.rect.x0 as f64 + 0.5) * sx - 0.5;
                let cy = (y - self.rect.y0 as f64 + 0.5) * sy - 0.5;
                (cx.clamp(0.0, max), cy.clamp(0.0, max))
            })
            .collect();
        LandmarkSet::new(points, CROP_SIZE, CROP_SIZE)
    }
}

/// Crops `frame` to the landmark box and resizes it to 128x128.
pub fn crop_face(frame: &GrayFrame, landmarks: &LandmarkSet) -> Result<GrayFrame> {
    FaceCrop::from_landmarks(landmarks)?.apply(frame)
}

fn check_flow_frame(flow: &FlowField, lm: &LandmarkSet) -> Result<()> {
    if flow.width != lm.frame_width || flow.height != lm.frame_height {
        return Err(Error::DimensionMismatch {
            expected_width: lm.frame_width,
            expected_height: lm.frame_height,
            found_width: flow.width,
            found_height: flow.height,
        });
    }
    Ok(())
}

/// Subtracts the mean flow of the nose box (points 27-35 plus 5 px).
pub fn remove_global_motion(flow: &FlowField, landmarks: &LandmarkSet) -> Result<FlowField> {
    check_flow_frame(flow, landmarks)?;
    let rect =
        landmarks.region(NOSE, NOSE_MARGIN).ok_or_else(|| Error::DegenerateRegion("nose box is empty".into()))?;
    let (mut su, mut sv) = (0.0, 0.0);
    for y in rect.y0..=rect.y1 {
        for x in rect.x0..=rect.x1 {
            let (u, v) = flow.at(x, y);
            su += u;
            sv += v;
        }
    }
    let n = (rect.width() * rect.height()) as f64;
    let (mu, mv) = (su / n, sv / n);
    Ok(FlowField {
        width: flow.width,
        height: flow.height,
        u: flow.u.iter().map(|u| u - mu).collect(),
        v: flow.v.iter().map(|v| v - mv).collect(),
    })
}

/// The two eye boxes (points 36-41 and 42-47 plus 15 px), clipped.
pub fn eye_boxes(landmarks: &LandmarkSet) -> Vec<PixelRect> {
    [LEFT_EYE, RIGHT_EYE].into_iter().filter_map(|r| landmarks.region(r, EYE_MARGIN)).collect()
}

/// Zeroes the flow inside both eye boxes.
pub fn mask_eyes(flow: &FlowField, landmarks: &LandmarkSet) -> Result<FlowField> {
    check_flow_frame(flow, landmarks)?;
    let mut out = flow.clone();
    for rect in eye_boxes(landmarks) {
        for y in rect.y0..=rect.y1 {
            for x in rect.x0..=rect.x1 {
                let i = y * out.width + x;
                out.u[i] = 0.0;
                out.v[i] = 0.0;
            }
        }
    }
    Ok(out)
}

/// The three regions of interest in output order: left upper, right upper, mouth.
pub fn roi_boxes(landmarks: &LandmarkSet) -> Result<[PixelRect; 3]> {
    let region = |ids: Vec<usize>, name: &str| {
        landmarks.region(ids, ROI_MARGIN).ok_or_else(|| Error::DegenerateRegion(format!("{name} region is empty")))
    };
    let a = region(LEFT_BROW.chain(LEFT_EYE).collect(), "brow/eye")?;
    let b = region(RIGHT_BROW.chain(RIGHT_EYE).collect(), "brow/eye")?;
    let mouth = region(MOUTH.collect(), "mouth")?;
    // Image order: the box further left comes first.
    let (first, second) = if a.x0 + a.x1 <= b.x0 + b.x1 { (a, b) } else { (b, a) };
    Ok([first, second, mouth])
}

/// Network input for one frame pair: three 42x42 channels (u, v, strain).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionInput {
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub strain: Vec<f32>,
    pub source_frame_index: usize,
}

impl MotionInput {
    pub const PLANE_LEN: usize = INPUT_SIZE * INPUT_SIZE;

    pub fn new(u: Vec<f32>, v: Vec<f32>, strain: Vec<f32>, source_frame_index: usize) -> Result<Self> {
        for (name, c) in [("u", &u), ("v", &v), ("strain", &strain)] {
            if c.len() != Self::PLANE_LEN {
                return Err(Error::ShapeMismatch(format!(
                    "{name} channel has {} values, expected {}",
                    c.len(),
                    Self::PLANE_LEN
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("motion input"));
            }
        }
        if strain.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidParameter("strain channel must be non-negative".into()));
        }
        Ok(Self { u, v, strain, source_frame_index })
    }

    pub fn zeros(source_frame_index: usize) -> Self {
        let z = vec![0.0; Self::PLANE_LEN];
        Self { u: z.clone(), v: z.clone(), strain: z, source_frame_index }
    }

    pub fn channels(&self) -> [&[f32]; 3] {
        [&self.u, &self.v, &self.strain]
    }

    pub fn max_abs(&self) -> f32 {
        self.channels().iter().flat_map(|c| c.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn compose_plane(p: &Plane, rois: &[PixelRect; 3]) -> Vec<f32> {
    let left = resample_rect(p, rois[0], ROI_SIZE, ROI_SIZE);
    let right = resample_rect(p, rois[1], ROI_SIZE, ROI_SIZE);
    let mouth = resample_rect(p, rois[2], INPUT_SIZE, ROI_SIZE);
    let mut out = Vec::with_capacity(INPUT_SIZE * INPUT_SIZE);
    for y in 0..ROI_SIZE {
        out.extend(left.data[y * ROI_SIZE..(y + 1) * ROI_SIZE].iter().map(|&v| v as f32));
        out.extend(right.data[y * ROI_SIZE..(y + 1) * ROI_SIZE].iter().map(|&v| v as f32));
    }
    out.extend(mouth.data.iter().map(|&v| v as f32));
    out
}

/// Resamples the three regions of every channel into one 42x42 input.
pub fn compose_roi_input(
    flow: &FlowField,
    strain: &StrainField,
    landmarks: &LandmarkSet,
    source_frame_index: usize,
) -> Result<MotionInput> {
    check_flow_frame(flow, landmarks)?;
    if strain.width != flow.width || strain.height != flow.height {
        return Err(Error::ShapeMismatch("strain and flow sizes differ".into()));
    }
    let rois = roi_boxes(landmarks)?;
    let u = compose_plane(&flow.u_plane(), &rois);
    let v = compose_plane(&flow.v_plane(), &rois);
    let s = compose_plane(&Plane::new(strain.width, strain.height, strain.magnitude.clone()), &rois);
    MotionInput::new(u, v, s, source_frame_index)
}

/// Motion input for the pair `(frames[i], frames[i + k])`, for every `i`.
///
/// Pairs are processed in parallel; the output is ordered by `i`.
pub fn extract_video_features(
    frames: &[GrayFrame],
    landmarks: &LandmarkSet,
    k: usize,
    params: &TvL1Params,
) -> Result<Vec<MotionInput>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if frames.len() < k + 1 {
        return Err(Error::SequenceTooShort { length: frames.len(), required: k + 1 });
    }
    let crop = FaceCrop::from_landmarks(landmarks)?;
    let crop_lm = crop.map_landmarks(landmarks)?;
    let crops = frames.par_iter().map(|f| crop.apply(f)).collect::<Result<Vec<_>>>()?;
    (0..frames.len() - k)
        .into_par_iter()
        .map(|i| pair_features(&crops[i], &crops[i + k], &crop_lm, params, i))
        .collect()
}

/// One step of feature extraction on already-cropped frames.
pub fn pair_features(
    a: &GrayFrame,
    b: &GrayFrame,
    crop_landmarks: &LandmarkSet,
    params: &TvL1Params,
    source_frame_index: usize,
) -> Result<MotionInput> {
    let flow = tvl1_flow(a, b, params)?;
    let flow = remove_global_motion(&flow, crop_landmarks)?;
    let flow = mask_eyes(&flow, crop_landmarks)?;
    let strain = optical_strain(&flow)?;
    compose_roi_input(&flow, &strain, crop_landmarks, source_frame_index)
}

/// A fixed 68-point face layout spanning a `CROP_SIZE` square exactly,
/// shifted by `offset` in both directions. Eyes are centred at (34, 40) and
/// (94, 40), the mouth at (64, 96).
pub fn canonical_landmarks(offset: f64) -> Vec<(f64, f64)> {
    let mut p = Vec::with_capacity(68);
    for i in 0..17 {
        let t = std::f64::consts::PI - std::f64::consts::PI * i as f64 / 16.0;
        p.push((63.5 + 63.5 * t.cos(), 40.0 + 87.0 * t.sin()));
    }
    for (x0, _) in [(16.0, 0), (75.0, 1)] {
        for (j, y) in [6.0, 2.0, 0.0, 2.0, 6.0].into_iter().enumerate() {
            p.push((x0 + 9.0 * j as f64, y));
        }
    }
    for j in 0..4 {
        p.push((64.0, 34.0 + 8.0 * j as f64));
    }
    for (j, y) in [66.0, 68.0, 69.0, 68.0, 66.0].into_iter().enumerate() {
        p.push((54.0 + 5.0 * j as f64, y));
    }
    for cx in [34.0, 94.0] {
        for (dx, dy) in [(-10.0, 0.0), (-5.0, -4.0), (5.0, -4.0), (10.0, 0.0), (5.0, 4.0), (-5.0, 4.0)] {
            p.push((cx + dx, 40.0 + dy));
        }
    }
    for j in 0..12 {
        let t = std::f64::consts::TAU * j as f64 / 12.0;
        p.push((64.0 - 22.0 * t.cos(), 96.0 - 9.0 * t.sin()));
    }
    for j in 0..8 {
        let t = std::f64::consts::TAU * j as f64 / 8.0;
        p.push((64.0 - 14.0 * t.cos(), 96.0 - 4.0 * t.sin()));
    }
    p.into_iter().map(|(x, y)| (x + offset, y + offset)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> LandmarkSet {
        LandmarkSet::new(canonical_landmarks(0.0), CROP_SIZE, CROP_SIZE).unwrap()
    }

    fn ramp(w: usize, h: usize) -> GrayFrame {
        GrayFrame::new(w, h, (0..w * h).map(|i| ((i * 37) % 251) as f32 / 250.0).collect()).unwrap()
    }

    #[test]
    fn landmark_validation() {
        assert!(LandmarkSet::new(vec![(1.0, 1.0); 67], 10, 10).is_err());
        let mut pts = vec![(1.0, 1.0); 68];
        pts[5] = (10.0, 1.0);
        assert!(LandmarkSet::new(pts, 10, 10).is_err());
    }

    #[test]
    fn region_bounds_are_inclusive_and_clipped() {
        let mut pts = vec![(50.0, 50.0); 68];
        pts[27] = (40.0, 30.0);
        pts[35] = (44.5, 33.0);
        let lm = LandmarkSet::new(pts, 100, 100).unwrap();
        let r = lm.region([27, 35], 5.0).unwrap();
        assert_eq!(r, PixelRect { x0: 35, y0: 25, x1: 49, y1: 38 });
        let r = lm.region([27], 45.0).unwrap();
        assert_eq!((r.x0, r.y0), (0, 0));
    }

    #[test]
    fn identity_crop() {
        let lm = canonical();
        let f = ramp(128, 128);
        assert_eq!(crop_face(&f, &lm).unwrap(), f);
    }

    #[test]
    fn unit_scale_crop_of_a_larger_frame() {
        let lm = LandmarkSet::new(canonical_landmarks(64.0), 256, 256).unwrap();
        let crop = FaceCrop::from_landmarks(&lm).unwrap();
        assert_eq!(crop.rect, PixelRect { x0: 64, y0: 64, x1: 191, y1: 191 });
        let f = ramp(256, 256);
        let out = crop.apply(&f).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                assert_eq!(out.get(x, y), f.get(x + 64, y + 64));
            }
        }
        let mapped = crop.map_landmarks(&lm).unwrap();
        for (a, b) in mapped.points().iter().zip(canonical().points()) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_frame_crops_to_constant() {
        let lm = LandmarkSet::new(canonical_landmarks(10.0), 200, 180).unwrap();
        let out = crop_face(&GrayFrame::constant(200, 180, 0.25).unwrap(), &lm).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
        assert!(matches!(
            crop_face(&GrayFrame::constant(100, 100, 0.2).unwrap(), &lm),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_face_box_is_rejected() {
        let lm = LandmarkSet::new(vec![(5.0, 5.0); 68], 10, 10).unwrap();
        assert!(matches!(FaceCrop::from_landmarks(&lm), Err(Error::DegenerateRegion(_))));
    }

    #[test]
    fn global_motion_removal() {
        let lm = canonical();
        let c = FlowField::from_fn(128, 128, |_, _| (1.5, -0.75));
        let out = remove_global_motion(&c, &lm).unwrap();
        assert!(out.max_abs() == 0.0);
        let z = FlowField::zeros(128, 128);
        assert_eq!(remove_global_motion(&z, &lm).unwrap(), z);

        let nose = lm.region(NOSE, NOSE_MARGIN).unwrap();
        let blob = |x: usize, y: usize| {
            let d2 = (x as f64 - 100.0).powi(2) + (y as f64 - 110.0).powi(2);
            2.0 * (-d2 / 20.0).exp()
        };
        // The blob is negligible over the nose box, so the nose mean is (1, 0).
        let f = FlowField::from_fn(128, 128, |x, y| (1.0 + blob(x, y), 0.0));
        let out = remove_global_motion(&f, &lm).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                let (u, v) = out.at(x, y);
                assert!(v == 0.0);
                assert!((u - blob(x, y)).abs() < 1e-9);
                if nose.contains(x, y) {
                    assert!(u.abs() < 1e-9);
                }
            }
        }
        let twice = remove_global_motion(&out, &lm).unwrap();
        for (a, b) in twice.u.iter().zip(&out.u) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eye_masking_matches_a_box_membership_oracle() {
        let lm = canonical();
        let f = FlowField::from_fn(128, 128, |_, _| (0.5, 0.25));
        let out = mask_eyes(&f, &lm).unwrap();
        let inside = |x: usize, y: usize| {
            [LEFT_EYE, RIGHT_EYE].into_iter().any(|r| {
                let pts: Vec<_> = r.map(|i| lm.points()[i]).collect();
                let xmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - EYE_MARGIN;
                let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + EYE_MARGIN;
                let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - EYE_MARGIN;
                let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + EYE_MARGIN;
                let (x, y) = (x as f64, y as f64);
                x >= xmin && x <= xmax && y >= ymin && y <= ymax
            })
        };
        for y in 0..128 {
            for x in 0..128 {
                let expected = if inside(x, y) { (0.0, 0.0) } else { (0.5, 0.25) };
                assert_eq!(out.at(x, y), expected, "pixel ({x}, {y})");
            }
        }
        // Left eye spans x 24..44, y 36..44: corner (9, 21) is on the boundary.
        assert_eq!(out.at(9, 21), (0.0, 0.0));
        assert_eq!(out.at(8, 21), (0.5, 0.25));
        assert_eq!(mask_eyes(&out, &lm).unwrap(), out);
        let z = FlowField::zeros(128, 128);
        assert_eq!(mask_eyes(&z, &lm).unwrap(), z);
    }

    #[test]
    fn roi_composition_traces_each_quadrant() {
        let lm = canonical();
        let rois = roi_boxes(&lm).unwrap();
        assert!(rois[0].x1 < rois[1].x1);
        // Sentinels: each region carries its own constant in every channel.
        let sentinel = |x: usize, y: usize| {
            if rois[0].contains(x, y) {
                1.0
            } else if rois[1].contains(x, y) {
                2.0
            } else if rois[2].contains(x, y) {
                3.0
            } else {
                0.0
            }
        };
        let flow = FlowField::from_fn(128, 128, |x, y| (sentinel(x, y), -sentinel(x, y)));
        let strain = StrainField::from_magnitude(128, 128, flow.u.clone()).unwrap();
        let m = compose_roi_input(&flow, &strain, &lm, 7).unwrap();
        assert_eq!(m.source_frame_index, 7);
        let at = |c: &[f32], x: usize, y: usize| c[y * INPUT_SIZE + x];
        for c in [&m.u, &m.strain] {
            assert_eq!(at(c, 0, 0), 1.0);
            assert_eq!(at(c, 41, 0), 2.0);
            assert_eq!(at(c, 0, 41), 3.0);
        }
        assert_eq!(at(&m.v, 41, 0), -2.0);

        let zero = compose_roi_input(&FlowField::zeros(128, 128), &StrainField::zeros(128, 128), &lm, 0).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let half = StrainField::from_magnitude(128, 128, vec![0.5; 128 * 128]).unwrap();
        let m = compose_roi_input(&FlowField::zeros(128, 128), &half, &lm, 0).unwrap();
        assert!(m.strain.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn feature_counts_and_static_video() {
        let lm = canonical();
        let f = ramp(128, 128);
        let frames = vec![f; 8];
        let params = TvL1Params::default();
        let out = extract_video_features(&frames, &lm, 7, &params).unwrap();
        assert_eq!(out.len(), 1);
        let out = extract_video_features(&frames, &lm, 3, &params).unwrap();
        assert_eq!(out.iter().map(|m| m.source_frame_index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert!(out.iter().all(|m| m.max_abs() < 1e-3));
        assert!(matches!(extract_video_features(&frames, &lm, 8, &params), Err(Error::SequenceTooShort { .. })));
    }

    #[test]
    fn motion_input_validation() {
        assert!(MotionInput::new(vec![0.0; 10], vec![0.0; 1764], vec![0.0; 1764], 0).is_err());
        let mut s = vec![0.0; 1764];
        s[3] = -0.1;
        assert!(MotionInput::new(vec![0.0; 1764], vec![0.0; 1764], s, 0).is_err());
        let mut u = vec![0.0; 1764];
        u[0] = f32::NAN;
        assert!(MotionInput::new(u, vec![0.0; 1764], vec![0.0; 1764], 0).is_err());
    }
}
