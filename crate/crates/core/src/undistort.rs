//! Rectification of fisheye whole-sky captures by ray tracing.
//!
//! World frame: x east, y north, z up, origin at the camera. A virtual pinhole
//! camera at the origin looks along `direction`; its image plane sits
//! `plane_altitude` meters away along that axis. Each target pixel defines a
//! ray through the plane, the ray meets the unit hemisphere, and the fisheye
//! model maps the hit direction back to source pixel coordinates.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RgbImage;

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// `r = f * theta`
    #[default]
    Equidistant,
    /// `r = 2 f sin(theta / 2)`
    Equisolid,
}

impl std::str::FromStr for Projection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equidistant" => Ok(Projection::Equidistant),
            "equisolid" => Ok(Projection::Equisolid),
            other => Err(Error::InvalidParams(format!("unknown projection '{other}'"))),
        }
    }
}

impl Projection {
    /// Radial distance for incidence angle `theta`, scaled so that 90 degrees
    /// lands on `radius`.
    fn radial(self, theta: f64, radius: f64) -> f64 {
        match self {
            Projection::Equidistant => radius * theta / FRAC_PI_2,
            Projection::Equisolid => radius * (theta / 2.0).sin() / (FRAC_PI_2 / 2.0).sin(),
        }
    }

    fn incidence(self, r: f64, radius: f64) -> f64 {
        match self {
            Projection::Equidistant => r / radius * FRAC_PI_2,
            Projection::Equisolid => 2.0 * (r / radius * (FRAC_PI_2 / 2.0).sin()).clamp(-1.0, 1.0).asin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisheyeModel {
    /// Projection center in source pixels.
    pub center: (f64, f64),
    /// Source-pixel radius of the 90 degree incidence circle.
    pub radius: f64,
    pub projection: Projection,
    /// Rotation taking camera axes to world axes (row-major). Identity means
    /// the lens looks at the zenith with image +x east and image +y north.
    pub orientation: [[f64; 3]; 3],
}

pub const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl FisheyeModel {
    pub fn new(center: (f64, f64), radius: f64, projection: Projection) -> Self {
        Self {
            center,
            radius,
            projection,
            orientation: IDENTITY,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidModel(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        let (cx, cy) = self.center;
        if !(cx >= 0.0 && cy >= 0.0 && cx <= (width - 1) as f64 && cy <= (height - 1) as f64) {
            return Err(Error::InvalidModel(format!(
                "center ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        let r = self.orientation;
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(r[i], r[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-6 {
                    return Err(Error::InvalidModel("orientation is not a rotation".into()));
                }
            }
        }
        Ok(())
    }

    fn to_camera(&self, world: Vec3) -> Vec3 {
        // transpose of camera->world
        let r = self.orientation;
        [
            r[0][0] * world[0] + r[1][0] * world[1] + r[2][0] * world[2],
            r[0][1] * world[0] + r[1][1] * world[1] + r[2][1] * world[2],
            r[0][2] * world[0] + r[1][2] * world[1] + r[2][2] * world[2],
        ]
    }

    fn to_world(&self, cam: Vec3) -> Vec3 {
        self.orientation.map(|row| dot(row, cam))
    }

    /// Source pixel seen along world direction `dir`, or `None` when the
    /// direction lies beyond the lens field (incidence over 90 degrees).
    pub fn project(&self, dir: Vec3) -> Option<(f64, f64)> {
        let c = normalize(self.to_camera(dir));
        let theta = c[2].clamp(-1.0, 1.0).acos();
        if theta > FRAC_PI_2 {
            return None;
        }
        let r = self.projection.radial(theta, self.radius);
        let phi = c[1].atan2(c[0]);
        Some((self.center.0 + r * phi.cos(), self.center.1 + r * phi.sin()))
    }

    /// Unit world direction imaged at source pixel `(x, y)`.
    pub fn unproject(&self, x: f64, y: f64) -> Vec3 {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let r = dx.hypot(dy);
        let theta = self.projection.incidence(r, self.radius);
        let phi = dy.atan2(dx);
        let s = theta.sin();
        self.to_world([s * phi.cos(), s * phi.sin(), theta.cos()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualCamera {
    /// Unit view direction in world coordinates.
    pub direction: Vec3,
    pub plane_altitude: f64,
    pub out_size: usize,
    /// Half-width of the imaged plane patch, in the same unit as the altitude.
    pub half_extent: f64,
}

impl Default for VirtualCamera {
    fn default() -> Self {
        Self {
            direction: [0.0, 0.0, 1.0],
            plane_altitude: 150.0,
            out_size: 500,
            half_extent: 150.0,
        }
    }
}

impl VirtualCamera {
    /// Direction from azimuth (degrees clockwise from north) and elevation
    /// (degrees above the horizon).
    pub fn from_angles(azimuth_deg: f64, elevation_deg: f64) -> Self {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        Self {
            direction: [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (norm(self.direction) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams("view direction must be a unit vector".into()));
        }
        if self.direction[2] <= 0.0 {
            return Err(Error::ViewBelowHorizon);
        }
        if self.out_size < 2 {
            return Err(Error::InvalidParams("output size must be at least 2".into()));
        }
        if !(self.plane_altitude.is_finite() && self.plane_altitude > 0.0) {
            return Err(Error::InvalidParams("plane altitude must be positive".into()));
        }
        if !(self.half_extent.is_finite() && self.half_extent > 0.0) {
            return Err(Error::InvalidParams("half extent must be positive".into()));
        }
        Ok(())
    }

    /// `(right, down)` unit vectors spanning the image plane.
    fn plane_axes(&self) -> (Vec3, Vec3) {
        let d = self.direction;
        let right = if d[0].hypot(d[1]) < 1e-12 {
            [1.0, 0.0, 0.0]
        } else {
            normalize([d[1], -d[0], 0.0])
        };
        (right, cross(d, right))
    }

    /// World ray through target pixel `(u, v)`; pixel centers are integers and
    /// pixels 0 and `out_size - 1` sit on the plane edges.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        let (right, down) = self.plane_axes();
        let c = (self.out_size - 1) as f64 / 2.0;
        let a = (u - c) / c * self.half_extent;
        let b = (v - c) / c * self.half_extent;
        let d = self.direction;
        normalize([0, 1, 2].map(|i| self.plane_altitude * d[i] + a * right[i] + b * down[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trace {
    Source(f64, f64),
    OutOfField,
}

/// Source coordinates seen by target pixel `(u, v)`.
pub fn trace_pixel(u: f64, v: f64, model: &FisheyeModel, cam: &VirtualCamera) -> Trace {
    let ray = cam.ray(u, v);
    if ray[2] <= 0.0 {
        return Trace::OutOfField;
    }
    match model.project(ray) {
        Some((x, y)) => Trace::Source(x, y),
        None => Trace::OutOfField,
    }
}

/// Bilinear sample; `None` outside the raster.
fn sample(img: &RgbImage, x: f64, y: f64) -> Option<[u8; 3]> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (p00, p10, p01, p11) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    Some([0, 1, 2].map(|c| {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rectified {
    pub image: RgbImage,
    /// Fraction of target pixels whose ray left the hemisphere or the lens field.
    pub out_of_field: f64,
}

pub fn undistort(img: &RgbImage, model: &FisheyeModel, cam: &VirtualCamera) -> Result<Rectified> {
    model.validate(img.width(), img.height())?;
    cam.validate()?;
    let n = cam.out_size;
    let mut missed = 0usize;
    let image = RgbImage::from_fn(n, n, |u, v| match trace_pixel(u as f64, v as f64, model, cam) {
        Trace::Source(x, y) => sample(img, x, y).unwrap_or([0; 3]),
        Trace::OutOfField => {
            missed += 1;
            [0; 3]
        }
    })?;
    Ok(Rectified {
        image,
        out_of_field: missed as f64 / (n * n) as f64,
    })
}
