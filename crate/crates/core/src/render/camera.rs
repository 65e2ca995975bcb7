//! Pinhole cameras and the camera manifest format.
//!
//! Cameras follow the usual synthetic-dataset convention: the camera looks
//! down its local `-z` axis with `+y` up, and `c2w` maps camera to world
//! coordinates.
//!
//! Manifest grammar (one directive per line, `#` starts a comment):
//!
//! ```text
//! camera_angle_x <horizontal fov, radians>
//! resolution <width> <height>
//! frame <16 numbers: row-major camera-to-world matrix>
//! ```
//!
//! `camera_angle_x` and `resolution` must precede the first `frame`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::math::Vec3;

/// Horizontal field of view used by the generated camera sets.
pub const DEFAULT_FOV_X: f64 = 0.6911112070083618;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// Row-major camera-to-world transform.
    pub c2w: [f64; 16],
    pub fov_x: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(c2w: [f64; 16], fov_x: f64, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("camera resolution {width}x{height} is empty")));
        }
        if !(fov_x > 0.0 && fov_x < std::f64::consts::PI) {
            return Err(Error::Config(format!("field of view {fov_x} outside (0, pi)")));
        }
        if c2w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("camera matrix has non-finite entries".into()));
        }
        Ok(Self {
            c2w,
            fov_x,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize()
            .ok_or_else(|| Error::Config("camera eye coincides with target".into()))?;
        let right = forward
            .cross(up)
            .try_normalize()
            .or_else(|| forward.cross(Vec3::new(1.0, 0.0, 0.0)).try_normalize())
            .expect("forward is a unit vector");
        let true_up = right.cross(forward);
        let back = -forward;
        #[rustfmt::skip]
        let c2w = [
            right.x, true_up.x, back.x, eye.x,
            right.y, true_up.y, back.y, eye.y,
            right.z, true_up.z, back.z, eye.z,
            0.0, 0.0, 0.0, 1.0,
        ];
        Self::new(c2w, fov_x, width, height)
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_x).tan()
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.c2w[3], self.c2w[7], self.c2w[11])
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the centre of pixel `(px, py)`; `py = 0` is the top row.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let f = self.focal();
        let u = (px as f64 + 0.5 - 0.5 * self.width as f64) / f;
        let v = -(py as f64 + 0.5 - 0.5 * self.height as f64) / f;
        let m = &self.c2w;
        let d = Vec3::new(
            m[0] * u + m[1] * v - m[2],
            m[4] * u + m[5] * v - m[6],
            m[8] * u + m[9] * v - m[10],
        );
        Ray::new(self.origin(), d)
    }

    /// Rays for every pixel in row-major order.
    pub fn rays(&self) -> Vec<Ray> {
        let mut out = Vec::with_capacity(self.n_pixels());
        for py in 0..self.height {
            for px in 0..self.width {
                out.push(self.ray(px, py));
            }
        }
        out
    }
}

/// A list of camera poses sharing intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSet {
    pub fov_x: f64,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<[f64; 16]>,
}

impl CameraSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn camera(&self, i: usize) -> Camera {
        Camera {
            c2w: self.frames[i],
            fov_x: self.fov_x,
            width: self.width,
            height: self.height,
        }
    }

    pub fn cameras(&self) -> impl Iterator<Item = Camera> + '_ {
        (0..self.len()).map(|i| self.camera(i))
    }

    pub fn subset(&self, indices: &[usize]) -> CameraSet {
        CameraSet {
            frames: indices.iter().map(|&i| self.frames[i]).collect(),
            ..self.clone()
        }
    }

    /// `n` cameras evenly spaced in azimuth at a fixed elevation, all looking
    /// at `target`.
    pub fn orbit(n: usize, radius: f64, elevation: f64, target: Vec3, width: usize, height: usize) -> Result<Self> {
        let mut frames = Vec::with_capacity(n);
        for k in 0..n {
            let az = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let eye = target
                + Vec3::new(
                    radius * elevation.cos() * az.cos(),
                    radius * elevation.cos() * az.sin(),
                    radius * elevation.sin(),
                );
            frames.push(Camera::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0), DEFAULT_FOV_X, width, height)?.c2w);
        }
        Ok(Self {
            fov_x: DEFAULT_FOV_X,
            width,
            height,
            frames,
        })
    }

    /// `n` cameras at uniformly random positions on a sphere around `target`.
    pub fn random_sphere<R: Rng + ?Sized>(
        n: usize,
        radius: f64,
        target: Vec3,
        width: usize,
        height: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut frames = Vec::with_capacity(n);
        while frames.len() < n {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let l2 = v.length_squared();
            if !(1e-6..=1.0).contains(&l2) {
                continue;
            }
            let eye = target + v * (radius / l2.sqrt());
            frames.push(Camera::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0), DEFAULT_FOV_X, width, height)?.c2w);
        }
        Ok(Self {
            fov_x: DEFAULT_FOV_X,
            width,
            height,
            frames,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "camera_angle_x {}", self.fov_x);
        let _ = writeln!(s, "resolution {} {}", self.width, self.height);
        for f in &self.frames {
            let nums: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "frame {}", nums.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fov = None;
        let mut res = None;
        let mut frames = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().expect("non-empty line");
            let rest: Vec<&str> = parts.collect();
            match key {
                "camera_angle_x" => {
                    if rest.len() != 1 {
                        return Err(Error::parse(line_no, "camera_angle_x takes one number"));
                    }
                    fov = Some(parse_num::<f64>(rest[0], line_no)?);
                }
                "resolution" => {
                    if rest.len() != 2 {
                        return Err(Error::parse(line_no, "resolution takes width and height"));
                    }
                    res = Some((parse_num::<usize>(rest[0], line_no)?, parse_num::<usize>(rest[1], line_no)?));
                }
                "frame" => {
                    let (Some(fov), Some((w, h))) = (fov, res) else {
                        return Err(Error::parse(line_no, "frame before camera_angle_x/resolution"));
                    };
                    if rest.len() != 16 {
                        return Err(Error::parse(line_no, format!("frame needs 16 numbers, found {}", rest.len())));
                    }
                    let mut m = [0.0; 16];
                    for (v, s) in m.iter_mut().zip(&rest) {
                        *v = parse_num(s, line_no)?;
                    }
                    Camera::new(m, fov, w, h).map_err(|e| Error::parse(line_no, e.to_string()))?;
                    frames.push(m);
                }
                other => return Err(Error::parse(line_no, format!("unknown directive `{other}`"))),
            }
        }
        let fov_x = fov.ok_or_else(|| Error::parse(0, "missing camera_angle_x"))?;
        let (width, height) = res.ok_or_else(|| Error::parse(0, "missing resolution"))?;
        Ok(Self {
            fov_x,
            width,
            height,
            frames,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::parse(line, format!("invalid number `{s}`")))
}
