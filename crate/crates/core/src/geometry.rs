//! Ray parameterizations and bin-boundary grids.
//!
//! A ray is reduced to a segment `(A, B)` that does not depend on where along
//! the line its origin was placed. Two forms are supported: the constant-length
//! segment centred on the line's closest point to the scene centre, and the
//! chord cut by the bounding sphere. Bin boundaries are then placed along the
//! segment, either equidistantly or densest around the segment midpoint.

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Default constant segment length, in scene units.
pub const DEFAULT_SEGMENT_LENGTH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`. Panics on a zero or non-finite direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        let direction = direction
            .try_normalize()
            .expect("ray direction must be non-zero and finite");
        Self { origin, direction }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Distance of `p` along the ray, measured from the origin.
    pub fn z_of(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.direction)
    }

    /// Closest point of the (infinite) line to `center`.
    ///
    /// Computed from the component of `origin - center` perpendicular to the
    /// direction, so any origin on the same line gives the same point up to
    /// rounding.
    pub fn closest_point_to(&self, center: Vec3) -> Vec3 {
        let rel = self.origin - center;
        center + (rel - self.direction * rel.dot(self.direction))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBounds {
    pub center: Vec3,
    pub radius: f64,
    pub segment_length: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self {
            center: Vec3::ZERO,
            radius: 2.0,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            near: 2.0,
            far: 6.0,
        }
    }
}

impl SceneBounds {
    pub fn new(center: Vec3, radius: f64, segment_length: f64, near: f64, far: f64) -> Result<Self> {
        let b = Self {
            center,
            radius,
            segment_length,
            near,
            far,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("bounds radius must be positive, got {}", self.radius)));
        }
        if !(self.segment_length > 0.0 && self.segment_length.is_finite()) {
            return Err(Error::Config(format!(
                "segment length must be positive, got {}",
                self.segment_length
            )));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::Config("bounds center must be finite".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (p - self.center).length_squared() <= self.radius * self.radius
    }

    /// Perpendicular distance from the bounds centre to the ray's line.
    pub fn impact_distance(&self, ray: &Ray) -> f64 {
        (ray.closest_point_to(self.center) - self.center).length()
    }

    /// True when the line passes strictly inside the bounds sphere in front
    /// of the ray origin.
    pub fn ray_hits(&self, ray: &Ray) -> bool {
        self.impact_distance(ray) < self.radius && ray.z_of(self.center) > 0.0
    }

    fn check_ray(&self, ray: &Ray) -> Result<Vec3> {
        if self.contains(ray.origin) {
            return Err(Error::OriginInsideBounds);
        }
        let mid = ray.closest_point_to(self.center);
        let distance = (mid - self.center).length();
        // Tangent rays are rejected as well: they give a zero-length chord.
        // With the origin outside, a sphere behind it is missed entirely.
        if distance >= self.radius || ray.z_of(self.center) <= 0.0 {
            return Err(Error::RayMissesScene {
                distance,
                radius: self.radius,
            });
        }
        Ok(mid)
    }
}

/// Origin-free two-point description of a ray. `b - a` points along the ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParam {
    pub a: Vec3,
    pub b: Vec3,
}

impl SegmentParam {
    pub fn length(&self) -> f64 {
        (self.b - self.a).length()
    }

    pub fn midpoint(&self) -> Vec3 {
        (self.a + self.b) * 0.5
    }

    pub fn lerp(&self, s: f64) -> Vec3 {
        self.a + (self.b - self.a) * s
    }
}

/// Which origin-free segment a ray is reduced to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    /// Fixed-length segment centred on the closest point to the scene centre.
    ConstantSegment,
    /// Chord between the two bounding-sphere intersections.
    SphereChord,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::ConstantSegment => "segment",
            Representation::SphereChord => "sphere",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "segment" => Some(Representation::ConstantSegment),
            "sphere" => Some(Representation::SphereChord),
            _ => None,
        }
    }

    pub fn parameterize(self, ray: &Ray, bounds: &SceneBounds) -> Result<SegmentParam> {
        match self {
            Representation::ConstantSegment => canonicalize_segment(ray, bounds),
            Representation::SphereChord => sphere_intersect_segment(ray, bounds),
        }
    }
}

/// Constant-length segment whose midpoint is the line's closest point to the
/// bounds centre.
pub fn canonicalize_segment(ray: &Ray, bounds: &SceneBounds) -> Result<SegmentParam> {
    let mid = bounds.check_ray(ray)?;
    let half = ray.direction * (0.5 * bounds.segment_length);
    Ok(SegmentParam {
        a: mid - half,
        b: mid + half,
    })
}

/// Chord between the entry and exit points of the bounds sphere.
pub fn sphere_intersect_segment(ray: &Ray, bounds: &SceneBounds) -> Result<SegmentParam> {
    let mid = bounds.check_ray(ray)?;
    let d2 = (mid - bounds.center).length_squared();
    let half = (bounds.radius * bounds.radius - d2).sqrt();
    let offset = ray.direction * half;
    Ok(SegmentParam {
        a: mid - offset,
        b: mid + offset,
    })
}

/// Boundary fractions along a segment, densest around the midpoint.
///
/// Returns `n_points - 1` strictly increasing values from 0 to 1: the lower
/// half is `1 - 2^((1-i)/(N/2-1))` for `i = 1..N/2-1` and the upper half
/// `2^((j-N/2)/(N/2-1))` for `j = 1..N/2`.
pub fn centered_log_fractions(n_points: usize) -> Result<Vec<f64>> {
    if n_points < 4 || n_points % 2 != 0 {
        return Err(Error::InvalidCount {
            count: n_points,
            reason: "centred-log sampling needs an even point count >= 4",
        });
    }
    let half = n_points / 2;
    let denom = (half - 1) as f64;
    let upper: Vec<f64> = (1..=half)
        .map(|j| (2f64).powf((j as f64 - half as f64) / denom))
        .collect();
    // l_i = 1 - u_{half+1-i}; 1 - u is exact for u in [0.5, 1], so the two
    // halves are mirror images bit-for-bit.
    let mut out: Vec<f64> = (1..half).map(|i| 1.0 - upper[half - i]).collect();
    out.extend_from_slice(&upper);
    Ok(out)
}

/// Equidistant fractions `k / (n - 1)`, `k = 0..n`.
pub fn equidistant_fractions(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidCount {
            count: n,
            reason: "need at least two equidistant fractions",
        });
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(|k| k as f64 / last).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinMode {
    CenteredLog,
    Equidistant,
}

impl BinMode {
    pub fn name(self) -> &'static str {
        match self {
            BinMode::CenteredLog => "centered_log",
            BinMode::Equidistant => "equidistant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "centered_log" | "log" => Some(BinMode::CenteredLog),
            "equidistant" | "uniform" => Some(BinMode::Equidistant),
            _ => None,
        }
    }

    /// Fractions for a grid of `n_bins` finite boundaries.
    pub fn fractions(self, n_bins: usize) -> Result<Vec<f64>> {
        if n_bins < 3 {
            return Err(Error::InvalidCount {
                count: n_bins,
                reason: "a bin grid needs at least 3 bins",
            });
        }
        match self {
            BinMode::CenteredLog => centered_log_fractions(n_bins + 1),
            BinMode::Equidistant => equidistant_fractions(n_bins),
        }
    }
}

/// Ordered bin boundaries along a ray (distances from the ray origin).
///
/// With `open_ended`, boundary `k` starts bin `k` and the last bin runs to
/// infinity, so there are as many bins as boundaries. Without it, the grid
/// has one bin fewer than boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    boundaries: Vec<f64>,
    open_ended: bool,
}

impl BinGrid {
    pub fn new(boundaries: Vec<f64>, open_ended: bool) -> Result<Self> {
        let min_len = if open_ended { 1 } else { 2 };
        if boundaries.len() < min_len {
            return Err(Error::InvalidCount {
                count: boundaries.len(),
                reason: "too few bin boundaries",
            });
        }
        if boundaries.iter().any(|z| !z.is_finite()) {
            return Err(Error::Format("bin boundaries must be finite".into()));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("bin boundaries must be strictly increasing".into()));
        }
        Ok(Self {
            boundaries,
            open_ended,
        })
    }

    /// `n` equal cells covering `[near, far]`; the open last bin is the final
    /// cell once truncated at `far`.
    pub fn uniform_cells(near: f64, far: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidCount {
                count: n,
                reason: "need at least one cell",
            });
        }
        let step = (far - near) / n as f64;
        Self::new((0..n).map(|k| near + step * k as f64).collect(), true)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn open_ended(&self) -> bool {
        self.open_ended
    }

    pub fn n_bins(&self) -> usize {
        if self.open_ended {
            self.boundaries.len()
        } else {
            self.boundaries.len() - 1
        }
    }

    pub fn first(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn last(&self) -> f64 {
        *self.boundaries.last().expect("non-empty grid")
    }

    /// Extent of bin `j`, with the open last bin truncated at `far`.
    pub fn bin_extent(&self, j: usize, far: f64) -> (f64, f64) {
        let lo = self.boundaries[j];
        let hi = match self.boundaries.get(j + 1) {
            Some(&hi) => hi,
            None => far.max(lo),
        };
        (lo, hi)
    }
}

/// Bin boundaries placed along `seg`, measured from `ray.origin`.
pub fn make_bin_grid(seg: &SegmentParam, ray: &Ray, mode: BinMode, n_bins: usize) -> Result<BinGrid> {
    let fractions = mode.fractions(n_bins)?;
    let z_a = ray.z_of(seg.a);
    let z_b = ray.z_of(seg.b);
    if z_a < 0.0 {
        return Err(Error::Format(format!(
            "segment starts behind the ray origin (z_A = {z_a})"
        )));
    }
    let span = z_b - z_a;
    BinGrid::new(fractions.iter().map(|s| z_a + s * span).collect(), true)
}
