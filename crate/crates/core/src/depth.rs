//! Depth rendering, region-of-interest extraction and the image feature.
//!
//! Pixels are addressed as `(row, col)` and stored row-major. Image-plane
//! vectors are `(x, y) = (col, row)` in pixels.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::geometry::Lumen;
use crate::math;
use crate::plant::CameraPose;
use crate::{Error, Result, Vec2, Vec3};

/// Share of the deepest pixels that seed the region of interest.
pub const ROI_FRACTION: f64 = 0.05;

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Camera with a 90° horizontal field of view and centred principal point.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            focal: width as f64 / 2.0,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn with_focal(self, focal: f64) -> Self {
        Self { focal, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.focal > 0.0) || !self.focal.is_finite() || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config("focal length must be positive and the principal point finite".into()));
        }
        Ok(())
    }

    /// Principal point as an image-plane vector.
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }

    /// Unit ray through pixel `(row, col)` in the camera frame.
    pub fn ray(&self, row: usize, col: usize) -> Vec3 {
        Vec3::new((col as f64 - self.cx) / self.focal, (row as f64 - self.cy) / self.focal, 1.0).normalize()
    }

    /// Metric length at range `depth` spanned by `px` pixels near the axis.
    pub fn px_to_mm(&self, px: f64, depth: f64) -> f64 {
        px * depth / self.focal
    }
}

/// Per-pixel range in mm along each pixel ray.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    intrinsics: Intrinsics,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(intrinsics: Intrinsics, data: Vec<f32>) -> Result<Self> {
        intrinsics.validate()?;
        let n = intrinsics.width * intrinsics.height;
        if data.len() != n {
            return Err(Error::InvalidInput(format!(
                "depth raster has {} values, expected {n}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidInput(format!("depth at index {i} is not positive and finite")));
        }
        Ok(Self { intrinsics, data })
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.intrinsics.width + col]
    }
}

/// Renders the lumen seen from `pose` by casting one ray per pixel.
pub fn render_depth(pose: &CameraPose, lumen: &Lumen, intrinsics: &Intrinsics) -> Result<DepthMap> {
    intrinsics.validate()?;
    if lumen.signed_distance(&pose.position) >= 0.0 {
        return Err(Error::Render("camera is outside the lumen".into()));
    }
    let mut data = Vec::with_capacity(intrinsics.width * intrinsics.height);
    for row in 0..intrinsics.height {
        for col in 0..intrinsics.width {
            let dir = pose.rotation * intrinsics.ray(row, col);
            let t = lumen.cast_ray(&pose.position, &dir)?;
            // A ray starting on the clearance margin can hit immediately.
            data.push((t as f32).max(f32::MIN_POSITIVE));
        }
    }
    DepthMap::new(*intrinsics, data)
}

/// Region of interest: the largest 4-connected component of the deepest
/// pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    area: usize,
    center: Vec2,
    threshold: f32,
    mean_depth: f64,
}

impl Roi {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major membership mask.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    /// Pixel count.
    pub fn area(&self) -> usize {
        self.area
    }

    /// Unweighted centroid `(x, y) = (col, row)`.
    pub fn center(&self) -> Vec2 {
        self.center
    }

    /// Depth at or above which pixels were candidates.
    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    /// Mean depth over the region in mm.
    pub fn mean_depth(&self) -> f64 {
        self.mean_depth
    }
}

/// Number of pixels in the deepest fraction of an `n`-pixel image.
pub fn roi_quota(n: usize) -> usize {
    (math::ceil(ROI_FRACTION * n as f64) as usize).clamp(1, n)
}

/// Extracts the region of interest.
///
/// The threshold is the `⌈0.05 N⌉`-th largest depth and every pixel at or
/// above it is a candidate, so ties may push the candidate set beyond 5 %.
/// Among the 4-connected candidate components the largest wins; equal areas
/// go to the component holding the smallest row-major index.
pub fn extract_roi(depth: &DepthMap) -> Roi {
    let (w, h) = (depth.width(), depth.height());
    let n = w * h;
    let k = roi_quota(n);
    let mut sorted = depth.data().to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let threshold = *kth;
    let candidate: Vec<bool> = depth.data().iter().map(|d| *d >= threshold).collect();

    // Components are discovered in row-major order of their first pixel, so
    // keeping the first maximum implements the tie-break.
    let mut label = alloc::vec![u32::MAX; n];
    let mut best: Option<(u32, usize)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for start in 0..n {
        if !candidate[start] || label[start] != u32::MAX {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = id;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if candidate[j] && label[j] == u32::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let (id, area) = best.expect("the quota guarantees at least one candidate");
    let mask: Vec<bool> = label.iter().map(|l| *l == id).collect();
    let (mut sx, mut sy, mut sd) = (0.0, 0.0, 0.0);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        sx += (i % w) as f64;
        sy += (i / w) as f64;
        sd += depth.data()[i] as f64;
    }
    let a = area as f64;
    Roi { width: w, height: h, mask, area, center: Vec2::new(sx / a, sy / a), threshold, mean_depth: sd / a }
}

/// Tracked image feature and its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageFeature {
    /// Smoothed ROI centre in pixels.
    pub y: Vec2,
    /// Desired feature position in pixels.
    pub desired: Vec2,
}

impl ImageFeature {
    pub fn new(y: Vec2, desired: Vec2) -> Self {
        Self { y, desired }
    }

    /// Tracking error `e = y - y_d`.
    pub fn error(&self) -> Vec2 {
        self.y - self.desired
    }
}

/// Exponential smoothing of the ROI centre: `y = α p + (1 - α) y_prev`.
pub fn image_feature(roi: &Roi, previous: &ImageFeature, alpha: f64) -> Result<ImageFeature> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("smoothing factor must lie in (0, 1], got {alpha}")));
    }
    Ok(ImageFeature {
        y: roi.center() * alpha + previous.y * (1.0 - alpha),
        desired: previous.desired,
    })
}
