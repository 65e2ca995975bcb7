//! Analytic density/colour volumes used as ground truth.
//!
//! A scene is a list of primitives inside a bounding sphere. Densities of
//! overlapping primitives add; the colour at a point is the density-weighted
//! mean of the primitive colours.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BinGrid, Ray, SceneBounds};
use crate::math::Vec3;
use crate::render::volume::{transmittance_weights, WeightDistribution};

/// Shell thickness (Gaussian standard deviation) relative to the shell radius.
pub const SHELL_RELATIVE_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample {
    pub color: Vec3,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Density `peak * exp(-(|x-c| - r)^2 / (2 w^2))` with `r = scale`,
    /// `w = SHELL_RELATIVE_WIDTH * scale`.
    GaussianShell,
    /// Constant density inside a ball of radius `scale`.
    SolidBall,
    /// Constant density inside an axis-aligned cube of half-size `scale`.
    Box,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::GaussianShell => "gaussian_shell",
            Shape::SolidBall => "solid_ball",
            Shape::Box => "box",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian_shell" => Some(Shape::GaussianShell),
            "solid_ball" => Some(Shape::SolidBall),
            "box" => Some(Shape::Box),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: Vec3,
    pub scale: f64,
    pub peak: f64,
    pub color: Vec3,
    /// Modulate colour by `0.5 + 0.5 max(0, d . n)`.
    pub tint: bool,
}

impl Primitive {
    pub fn density(&self, x: Vec3) -> f64 {
        let rel = x - self.center;
        match self.shape {
            Shape::GaussianShell => {
                let width = SHELL_RELATIVE_WIDTH * self.scale;
                let r = rel.length() - self.scale;
                self.peak * (-0.5 * (r / width) * (r / width)).exp()
            }
            Shape::SolidBall => {
                if rel.length_squared() <= self.scale * self.scale {
                    self.peak
                } else {
                    0.0
                }
            }
            Shape::Box => {
                if rel.max_abs_component() <= self.scale {
                    self.peak
                } else {
                    0.0
                }
            }
        }
    }

    fn normal(&self, x: Vec3) -> Vec3 {
        let rel = x - self.center;
        match self.shape {
            Shape::GaussianShell | Shape::SolidBall => rel.try_normalize().unwrap_or(Vec3::ZERO),
            Shape::Box => {
                let a = rel.abs();
                if a.x >= a.y && a.x >= a.z {
                    Vec3::new(rel.x.signum(), 0.0, 0.0)
                } else if a.y >= a.z {
                    Vec3::new(0.0, rel.y.signum(), 0.0)
                } else {
                    Vec3::new(0.0, 0.0, rel.z.signum())
                }
            }
        }
    }

    pub fn color_at(&self, x: Vec3, d: Vec3) -> Vec3 {
        if self.tint {
            self.color * (0.5 + 0.5 * d.dot(self.normal(x)).max(0.0))
        } else {
            self.color
        }
    }

    /// Radius around `center` that must fit inside the scene bounds (three
    /// standard deviations past the radius for shells).
    pub fn support_radius(&self) -> f64 {
        match self.shape {
            Shape::GaussianShell => self.scale * (1.0 + 3.0 * SHELL_RELATIVE_WIDTH),
            Shape::SolidBall => self.scale,
            Shape::Box => self.scale * 3f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
    pub bounds: SceneBounds,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>, bounds: SceneBounds) -> Result<Self> {
        bounds.validate()?;
        for (i, p) in primitives.iter().enumerate() {
            if !(p.peak.is_finite() && p.peak >= 0.0) {
                return Err(Error::Config(format!("primitive {i}: density must be finite and >= 0")));
            }
            if !(p.scale > 0.0 && p.scale.is_finite()) {
                return Err(Error::Config(format!("primitive {i}: scale must be positive")));
            }
            let reach = (p.center - bounds.center).length() + p.support_radius();
            if reach > bounds.radius + 1e-9 {
                return Err(Error::Config(format!(
                    "primitive {i} ({}) extends outside the bounds sphere",
                    p.shape.name()
                )));
            }
        }
        Ok(Self { primitives, bounds })
    }

    pub fn empty(bounds: SceneBounds) -> Self {
        Self {
            primitives: Vec::new(),
            bounds,
        }
    }

    /// Density and colour at `x` seen along direction `d`.
    pub fn eval(&self, x: Vec3, d: Vec3) -> FieldSample {
        if !self.bounds.contains(x) {
            return FieldSample::default();
        }
        let mut sigma = 0.0;
        let mut color = Vec3::ZERO;
        for p in &self.primitives {
            let s = p.density(x);
            if s > 0.0 {
                sigma += s;
                color += p.color_at(x, d) * s;
            }
        }
        if sigma > 0.0 {
            color = color / sigma;
        }
        FieldSample { color, sigma }
    }

    /// Same geometry with every primitive's base colour replaced by `f(old)`.
    pub fn recolored(&self, f: impl Fn(usize, Vec3) -> Vec3) -> Self {
        let mut out = self.clone();
        for (i, p) in out.primitives.iter_mut().enumerate() {
            p.color = f(i, p.color);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let b = &self.bounds;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            b.center.x, b.center.y, b.center.z, b.radius, b.segment_length, b.near, b.far
        );
        for p in &self.primitives {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {}",
                p.shape.name(),
                p.center.x,
                p.center.y,
                p.center.z,
                p.scale,
                p.peak,
                p.color.x,
                p.color.y,
                p.color.z,
                u8::from(p.tint)
            );
        }
        s
    }

    /// Parses the line-oriented scene format.
    ///
    /// ```text
    /// # comment
    /// cx cy cz radius ell near far
    /// shape cx cy cz scale peak r g b tint_flag
    /// ```
    ///
    /// `shape` is one of `gaussian_shell`, `solid_ball`, `box`; `tint_flag` is
    /// `0` or `1`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bounds = None;
        let mut prims = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if bounds.is_none() {
                let v = parse_floats(&fields, 7, line_no, "bounds header")?;
                let b = SceneBounds::new(Vec3::new(v[0], v[1], v[2]), v[3], v[4], v[5], v[6])
                    .map_err(|e| Error::parse(line_no, e.to_string()))?;
                bounds = Some(b);
                continue;
            }
            let shape = Shape::parse(fields[0])
                .ok_or_else(|| Error::parse(line_no, format!("unknown shape `{}`", fields[0])))?;
            if fields.len() != 10 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 10 fields for a primitive, found {}", fields.len()),
                ));
            }
            let v = parse_floats(&fields[1..9], 8, line_no, "primitive")?;
            let tint = match fields[9] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(line_no, format!("tint flag must be 0 or 1, got `{other}`"))),
            };
            prims.push(Primitive {
                shape,
                center: Vec3::new(v[0], v[1], v[2]),
                scale: v[3],
                peak: v[4],
                color: Vec3::new(v[5], v[6], v[7]),
                tint,
            });
        }
        let bounds = bounds.ok_or_else(|| Error::parse(0, "missing bounds header"))?;
        Self::new(prims, bounds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_floats(fields: &[&str], n: usize, line: usize, what: &str) -> Result<Vec<f64>> {
    if fields.len() != n {
        return Err(Error::parse(line, format!("{what}: expected {n} numbers, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("{what}: invalid number `{f}`")))
        })
        .collect()
}

/// Ground-truth termination weights along `ray` by left-edge quadrature of
/// the analytic density over `grid`.
pub fn oracle_weights(scene: &AnalyticScene, ray: &Ray, grid: &BinGrid) -> WeightDistribution {
    let far = scene.bounds.far;
    let n = grid.n_bins();
    let mut z = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    for j in 0..n {
        let (lo, hi) = grid.bin_extent(j, far);
        z.push(lo);
        sigmas.push(scene.eval(ray.at(lo), ray.direction).sigma);
        deltas.push(hi - lo);
    }
    let w = transmittance_weights(&sigmas, &deltas).expect("analytic densities are non-negative");
    WeightDistribution { z, w }
}

/// Ready-made desk-scale scenes.
pub mod presets {
    use super::*;

    fn prim(shape: Shape, center: Vec3, scale: f64, peak: f64, color: Vec3, tint: bool) -> Primitive {
        Primitive {
            shape,
            center,
            scale,
            peak,
            color,
            tint,
        }
    }

    /// Semi-transparent outer shell around a dense inner shell.
    pub fn two_shell() -> AnalyticScene {
        AnalyticScene::new(
            vec![
                prim(Shape::GaussianShell, Vec3::ZERO, 1.0, 3.0, Vec3::new(0.2, 0.45, 0.95), false),
                prim(Shape::GaussianShell, Vec3::ZERO, 0.5, 40.0, Vec3::new(0.95, 0.3, 0.1), true),
            ],
            SceneBounds::default(),
        )
        .expect("preset is valid")
    }

    pub fn red_ball() -> AnalyticScene {
        AnalyticScene::new(
            vec![prim(Shape::SolidBall, Vec3::ZERO, 0.8, 40.0, Vec3::new(0.9, 0.1, 0.1), true)],
            SceneBounds::default(),
        )
        .expect("preset is valid")
    }

    /// Thin opaque slab facing the +z cameras.
    pub fn wall() -> AnalyticScene {
        AnalyticScene::new(
            vec![prim(Shape::Box, Vec3::ZERO, 0.6, 200.0, Vec3::new(0.1, 0.7, 0.2), false)],
            SceneBounds::default(),
        )
        .expect("preset is valid")
    }

    /// Mixed opaque primitives placed off-centre.
    pub fn blocks() -> AnalyticScene {
        AnalyticScene::new(
            vec![
                prim(Shape::SolidBall, Vec3::new(-0.45, 0.1, 0.2), 0.45, 40.0, Vec3::new(0.9, 0.15, 0.1), true),
                prim(Shape::Box, Vec3::new(0.5, -0.2, -0.3), 0.35, 40.0, Vec3::new(0.15, 0.35, 0.9), true),
                prim(Shape::SolidBall, Vec3::new(0.3, 0.55, 0.5), 0.25, 40.0, Vec3::new(0.95, 0.85, 0.2), false),
            ],
            SceneBounds::default(),
        )
        .expect("preset is valid")
    }

    pub fn by_name(name: &str) -> Option<AnalyticScene> {
        match name {
            "two_shell" => Some(two_shell()),
            "red_ball" => Some(red_ball()),
            "wall" => Some(wall()),
            "blocks" => Some(blocks()),
            "empty" => Some(AnalyticScene::empty(SceneBounds::default())),
            _ => None,
        }
    }

    pub const NAMES: &[&str] = &["two_shell", "red_ball", "wall", "blocks", "empty"];
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn unit_bounds() -> SceneBounds {
        SceneBounds::default()
    }

    #[test]
    fn vacuum() {
        let s = AnalyticScene::empty(unit_bounds());
        let f = s.eval(Vec3::new(0.3, 0.1, 0.0), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(f.sigma, 0.0);
        assert_eq!(f.color, Vec3::ZERO);
    }

    #[test]
    fn ball_interior() {
        let s = AnalyticScene::new(
            vec![Primitive {
                shape: Shape::SolidBall,
                center: Vec3::ZERO,
                scale: 1.0,
                peak: 5.0,
                color: Vec3::new(1.0, 0.0, 0.0),
                tint: false,
            }],
            unit_bounds(),
        )
        .unwrap();
        let f = s.eval(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(f.sigma, 5.0);
        assert_eq!(f.color, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(s.eval(Vec3::new(1.2, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)).sigma, 0.0);
    }

    #[test]
    fn shell_peak_on_radius() {
        let p = Primitive {
            shape: Shape::GaussianShell,
            center: Vec3::ZERO,
            scale: 1.0,
            peak: 10.0,
            color: Vec3::ONE,
            tint: false,
        };
        assert_eq!(p.density(Vec3::new(0.0, 1.0, 0.0)), 10.0);
        let one_sigma = p.density(Vec3::new(0.0, 1.1, 0.0));
        assert!((one_sigma - 10.0 * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn tint_depends_on_direction() {
        let p = Primitive {
            shape: Shape::SolidBall,
            center: Vec3::ZERO,
            scale: 1.0,
            peak: 1.0,
            color: Vec3::ONE,
            tint: true,
        };
        let x = Vec3::new(0.0, 0.0, 0.9);
        assert_eq!(p.color_at(x, Vec3::new(0.0, 0.0, 1.0)), Vec3::ONE);
        assert_eq!(p.color_at(x, Vec3::new(0.0, 0.0, -1.0)), Vec3::splat(0.5));
    }

    #[test]
    fn colors_blend_by_density() {
        let mk = |peak, color| Primitive {
            shape: Shape::SolidBall,
            center: Vec3::ZERO,
            scale: 1.0,
            peak,
            color,
            tint: false,
        };
        let s = AnalyticScene::new(
            vec![mk(1.0, Vec3::new(1.0, 0.0, 0.0)), mk(3.0, Vec3::new(0.0, 0.0, 1.0))],
            unit_bounds(),
        )
        .unwrap();
        let f = s.eval(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(f.sigma, 4.0);
        assert!((f.color - Vec3::new(0.25, 0.0, 0.75)).length() < 1e-12);
    }

    #[test]
    fn oracle_vacuum_and_wall() {
        let ray = Ray::new(Vec3::new(0.0, 0.0, 4.0), Vec3::new(0.0, 0.0, -1.0));
        let grid = BinGrid::uniform_cells(2.0, 6.0, 512).unwrap();
        let vac = oracle_weights(&AnalyticScene::empty(unit_bounds()), &ray, &grid);
        assert_eq!(vac.len(), 512);
        assert!(vac.w.iter().all(|&w| w == 0.0));

        let mut wall = presets::wall();
        wall.primitives[0].peak = 1e5;
        let d = oracle_weights(&wall, &ray, &grid);
        let (imax, wmax) = d
            .w
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc });
        assert!(wmax > 0.99);
        assert!((d.z[imax] - 3.4).abs() < 4.0 / 512.0 + 1e-9);
        assert!(d.w[imax + 1..].iter().sum::<f64>() < 1e-6);
    }

    #[test]
    fn oracle_two_half_walls() {
        // two tiny cubes, each containing exactly one quadrature point and
        // giving optical depth ln 2 over its cell
        let cell = 0.01;
        let bounds = unit_bounds();
        let slab = |z: f64| Primitive {
            shape: Shape::Box,
            center: Vec3::new(0.0, 0.0, z),
            scale: 0.004,
            peak: LN_2 / cell,
            color: Vec3::ONE,
            tint: false,
        };
        let s = AnalyticScene::new(vec![slab(0.5), slab(-0.5)], bounds).unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, 4.0), Vec3::new(0.0, 0.0, -1.0));
        let grid = BinGrid::uniform_cells(2.0, 6.0, 400).unwrap();
        let d = oracle_weights(&s, &ray, &grid);
        let mut nz: Vec<(f64, f64)> = d.z.iter().zip(&d.w).filter(|(_, &w)| w > 0.0).map(|(&z, &w)| (z, w)).collect();
        nz.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(nz.len(), 2);
        assert!((nz[0].1 - 0.5).abs() < 1e-12);
        assert!((nz[1].1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn scene_text_round_trip() {
        let s = presets::two_shell();
        let back = AnalyticScene::parse(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "0 0 0 1.5 4 2 6\n# c\nsolid_ball 0 0 0 0.5 10 1 0 0 0\ncone 0 0 0 1 1 1 1 1 0\n";
        match AnalyticScene::parse(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("cone"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            AnalyticScene::parse("0 0 0 1.5 4 2 6\nsolid_ball 0 0 0 0.5 10 1 0 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            AnalyticScene::parse("0 0 0 1.5 4 2 6\nbox 0 0 0 0.5 10 1 0 0 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(AnalyticScene::parse("0 0 0 -1 4 2 6\n"), Err(Error::Parse { line: 1, .. })));
    }
}
