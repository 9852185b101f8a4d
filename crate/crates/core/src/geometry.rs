//! Equirectangular pixel, spherical and Cartesian coordinate conversions.
//!
//! Conventions used throughout the crate:
//!
//! * Camera-local frame: `+x` forward (`theta = 0`), `+y` up, `+z` right, so a
//!   direction with longitude `theta` and latitude `phi` is
//!   `(cos(phi) cos(theta), sin(phi), -cos(phi) sin(theta))`.
//! * Pixel centers sit at half-integer offsets. Column 0 is `theta` just under
//!   `+pi` and `theta` decreases with the column index; row 0 is the zenith.
//! * A [`Pose`] maps camera-local vectors into the world frame:
//!   `p_world = rotation * p_local + position`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Raster extent of an equirectangular panorama (`width == 2 * height`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    width: usize,
    height: usize,
}

impl ImageDims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || width % 2 != 0 || width != 2 * height {
            return Err(Error::Dimensions(format!(
                "equirectangular raster must satisfy width = 2 x height with width >= 2, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    /// Dimensions for a panorama of the given width.
    pub fn from_width(width: usize) -> Result<Self> {
        Self::new(width, width / 2)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    /// Wraps a (possibly negative) column index onto the raster.
    #[inline]
    pub fn wrap_column(&self, i: i64) -> usize {
        i.rem_euclid(self.width as i64) as usize
    }

    #[inline]
    pub fn clamp_row(&self, j: i64) -> usize {
        j.clamp(0, self.height as i64 - 1) as usize
    }

    /// Nearest pixel to continuous coordinates, wrapping columns and clamping
    /// rows.
    #[inline]
    pub fn nearest_pixel(&self, x: f64, y: f64) -> (usize, usize) {
        (
            self.wrap_column(x.round() as i64),
            self.clamp_row(y.round() as i64),
        )
    }
}

impl std::fmt::Display for ImageDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// A point in spherical polar coordinates around a camera center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub theta: f64,
    pub phi: f64,
    pub d: f64,
}

impl SphericalCoord {
    pub fn new(theta: f64, phi: f64, d: f64) -> Result<Self> {
        if !(theta.is_finite() && phi.is_finite() && d.is_finite()) {
            return Err(Error::Domain("spherical coordinate is not finite".into()));
        }
        if !(-PI..=PI).contains(&theta) || !(-FRAC_PI_2..=FRAC_PI_2).contains(&phi) {
            return Err(Error::Domain(format!(
                "angles out of range: theta={theta}, phi={phi}"
            )));
        }
        if d <= 0.0 {
            return Err(Error::Domain(format!("depth must be positive, got {d}")));
        }
        Ok(Self { theta, phi, d })
    }
}

/// Camera position and world-from-local rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    position: Vec3,
    rotation: Matrix3<f64>,
}

impl Pose {
    pub fn new(position: Vec3, rotation: Matrix3<f64>) -> Result<Self> {
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("position is not finite".into()));
        }
        if rotation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("rotation is not finite".into()));
        }
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ORTHONORMAL_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self { position, rotation })
    }

    /// Pose with identity rotation.
    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            rotation: Matrix3::identity(),
        }
    }

    /// Pose oriented by yaw (about +y), then pitch (about +z), then roll
    /// (about +x), composed as `R = Ry(yaw) Rz(pitch) Rx(roll)`.
    ///
    /// Positive yaw turns the forward axis towards `theta = +pi/2`, positive
    /// pitch raises it towards the zenith.
    pub fn from_yaw_pitch_roll(position: Vec3, yaw: f64, pitch: f64, roll: f64) -> Result<Self> {
        if !(yaw.is_finite() && pitch.is_finite() && roll.is_finite()) {
            return Err(Error::InvalidPose("orientation angles must be finite".into()));
        }
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sr, cr) = roll.sin_cos();
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rz = Matrix3::new(cp, -sp, 0.0, sp, cp, 0.0, 0.0, 0.0, 1.0);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        Self::new(position, ry * rz * rx)
    }

    /// Builds a pose from a row-major rotation matrix.
    pub fn from_row_major(position: [f64; 3], rotation: [f64; 9]) -> Result<Self> {
        Self::new(
            Vec3::from(position),
            Matrix3::from_row_slice(&rotation),
        )
    }

    #[inline]
    pub fn position(&self) -> &Vec3 {
        &self.position
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    #[inline]
    pub fn local_to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation * v + self.position
    }

    #[inline]
    pub fn world_to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.position)
    }

    /// Applies the same world transform `x -> rotation * x + translation` to
    /// the camera.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> Result<Self> {
        Self::new(rotation * self.position + translation, rotation * self.rotation)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::at(Vec3::zeros())
    }
}

fn check_pixel(i: usize, j: usize, dims: ImageDims) -> Result<()> {
    if i >= dims.width() || j >= dims.height() {
        return Err(Error::Domain(format!(
            "pixel ({i}, {j}) outside {dims} raster"
        )));
    }
    Ok(())
}

/// Angles of the center of pixel `(i, j)`.
pub fn pixel_to_angles(i: usize, j: usize, dims: ImageDims) -> Result<(f64, f64)> {
    check_pixel(i, j, dims)?;
    Ok(continuous_pixel_to_angles(i as f64, j as f64, dims))
}

/// Continuous form of [`pixel_to_angles`]: `(x, y) = (i, j)` addresses a pixel
/// center.
#[inline]
pub fn continuous_pixel_to_angles(x: f64, y: f64, dims: ImageDims) -> (f64, f64) {
    let theta = PI - TAU * (x + 0.5) / dims.width() as f64;
    let phi = FRAC_PI_2 - PI * (y + 0.5) / dims.height() as f64;
    (theta, phi)
}

/// Continuous pixel coordinates of a direction.
///
/// Columns wrap into `[0, width)`, so `theta = pi` maps to `width - 0.5`.
/// Rows are clamped to the raster extent `[-0.5, height - 0.5]`.
pub fn angles_to_pixel(theta: f64, phi: f64, dims: ImageDims) -> Result<(f64, f64)> {
    if !(theta.is_finite() && phi.is_finite()) {
        return Err(Error::Domain("angles must be finite".into()));
    }
    Ok(angles_to_pixel_unchecked(theta, phi, dims))
}

#[inline]
pub(crate) fn angles_to_pixel_unchecked(theta: f64, phi: f64, dims: ImageDims) -> (f64, f64) {
    let w = dims.width() as f64;
    let h = dims.height() as f64;
    let x = ((PI - theta) * w / TAU - 0.5).rem_euclid(w);
    let y = ((FRAC_PI_2 - phi) * h / PI - 0.5).clamp(-0.5, h - 0.5);
    (x, y)
}

/// Unit direction for the given angles.
#[inline]
pub fn direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(cp * ct, sp, -cp * st)
}

pub fn spherical_to_cartesian(s: &SphericalCoord) -> Vec3 {
    direction(s.theta, s.phi) * s.d
}

pub fn cartesian_to_spherical(v: &Vec3) -> Result<SphericalCoord> {
    let d = v.norm();
    if !d.is_finite() {
        return Err(Error::Domain("vector is not finite".into()));
    }
    if d == 0.0 {
        return Err(Error::Domain("zero vector has no direction".into()));
    }
    Ok(SphericalCoord {
        theta: (-v.z).atan2(v.x),
        phi: (v.y / d).clamp(-1.0, 1.0).asin(),
        d,
    })
}

/// Re-expresses a point seen from `src` in the spherical frame of `dst`.
pub fn reproject(s: &SphericalCoord, src: &Pose, dst: &Pose) -> Result<SphericalCoord> {
    let world = src.local_to_world(&spherical_to_cartesian(s));
    let local = dst.world_to_local(&world);
    if local.norm() == 0.0 {
        return Err(Error::DegeneratePoint);
    }
    cartesian_to_spherical(&local)
}

/// Precomputed `src`-local to `dst`-local rigid transform used by the
/// per-pixel loops.
#[derive(Debug, Clone, Copy)]
pub struct Transfer {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

/// A reprojected sample: continuous pixel coordinates in the destination
/// raster plus the distance to the destination center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

impl Transfer {
    pub fn between(src: &Pose, dst: &Pose) -> Self {
        let rt = dst.rotation.transpose();
        Self {
            rotation: rt * src.rotation,
            translation: rt * (src.position - dst.position),
        }
    }

    /// Maps a `src`-local point into `dst`-local coordinates.
    #[inline]
    pub fn apply(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.translation
    }

    /// Projects the point `depth * dir` (src-local) into the `dst` raster.
    /// Returns `None` when it lands on the destination center.
    #[inline]
    pub fn project(&self, dir: &Vec3, depth: f64, dims: ImageDims) -> Option<Projected> {
        project_local(&self.apply(&(dir * depth)), dims)
    }
}

/// Projects a camera-local point into continuous pixel coordinates.
#[inline]
pub fn project_local(v: &Vec3, dims: ImageDims) -> Option<Projected> {
    let d = v.norm();
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let theta = (-v.z).atan2(v.x);
    let phi = (v.y / d).clamp(-1.0, 1.0).asin();
    let (x, y) = angles_to_pixel_unchecked(theta, phi, dims);
    Some(Projected { x, y, depth: d })
}

/// Separable per-column / per-row trigonometry for pixel-center directions.
#[derive(Debug, Clone)]
pub struct RayGrid {
    dims: ImageDims,
    cols: Vec<(f64, f64)>,
    rows: Vec<(f64, f64)>,
}

impl RayGrid {
    pub fn new(dims: ImageDims) -> Self {
        let cols = (0..dims.width())
            .map(|i| continuous_pixel_to_angles(i as f64, 0.0, dims).0.sin_cos())
            .collect();
        let rows = (0..dims.height())
            .map(|j| continuous_pixel_to_angles(0.0, j as f64, dims).1.sin_cos())
            .collect();
        Self { dims, cols, rows }
    }

    #[inline]
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    /// Unit direction through the center of pixel `(i, j)`.
    #[inline]
    pub fn direction(&self, i: usize, j: usize) -> Vec3 {
        let (st, ct) = self.cols[i];
        let (sp, cp) = self.rows[j];
        Vec3::new(cp * ct, sp, -cp * st)
    }

    /// Latitude of row `j`.
    pub fn latitude(&self, j: usize) -> f64 {
        self.rows[j].0.asin()
    }
}
