//! Analytic RGB-D renderer for synthetic test scenes.
//!
//! Surfaces carry unshaded albedo, so a world point has the same color from
//! every viewpoint. Textures are solid (functions of the 3D hit point) which
//! keeps them seamless on every primitive.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{ImageDims, Pose, RayGrid, Vec3};
use crate::panorama::{
    blur_score, save_manifest, write_depth_pfm, write_rgb_png, CaptureFrame, DepthPanorama, Rgb,
    RgbPanorama, SceneManifest,
};

const HIT_EPSILON: f64 = 1e-9;

/// Procedural albedo evaluated at a world point.
#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    Solid(Rgb),
    /// Sinusoidal blend between `a` and `b` along `wave` (cycles per meter).
    Stripes { a: Rgb, b: Rgb, wave: Vec3 },
    /// Two superposed sinusoids.
    Waves { a: Rgb, b: Rgb, wave1: Vec3, wave2: Vec3 },
    /// Checkerboard with smoothed cell boundaries.
    Checker { a: Rgb, b: Rgb, period: f64 },
}

fn mix(a: &Rgb, b: &Rgb, t: f64) -> Rgb {
    let t = t as f32;
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

impl Texture {
    pub fn color(&self, p: &Vec3) -> Rgb {
        match self {
            Texture::Solid(c) => *c,
            Texture::Stripes { a, b, wave } => mix(a, b, 0.5 + 0.5 * (TAU * wave.dot(p)).sin()),
            Texture::Waves { a, b, wave1, wave2 } => {
                let t = 0.5 + 0.25 * (TAU * wave1.dot(p)).sin() + 0.25 * (TAU * wave2.dot(p)).sin();
                mix(a, b, t)
            }
            Texture::Checker { a, b, period } => {
                let f = |x: f64| (std::f64::consts::PI * x / period).sin();
                let s = f(p.x) * f(p.y + 0.25 * period) * f(p.z);
                mix(a, b, 0.5 + 0.5 * (4.0 * s).tanh())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub texture: Texture,
}

/// Horizontal plane `y = height`, visible from either side.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPlane {
    pub height: f64,
    pub period: f64,
    pub a: Rgb,
    pub b: Rgb,
}

/// Axis-aligned box. Seen from outside it is a solid block; a camera inside
/// sees its walls.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub min: Vec3,
    pub max: Vec3,
    /// Face textures in the order -x, +x, -y, +y, -z, +z.
    pub faces: [Texture; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub spheres: Vec<Sphere>,
    pub ground: Option<GroundPlane>,
    pub boxes: Vec<AxisBox>,
    pub sky: Rgb,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            spheres: Vec::new(),
            ground: None,
            boxes: Vec::new(),
            sky: [0.55, 0.7, 0.9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the (unit) ray.
    pub t: f64,
    pub color: Rgb,
}

fn sphere_hit(s: &Sphere, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let oc = origin - s.center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - s.radius * s.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable root pair
    let q = if b > 0.0 { -b - sq } else { -b + sq };
    let (mut t0, mut t1) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    [t0, t1].into_iter().find(|t| *t > HIT_EPSILON)
}

fn box_hit(b: &AxisBox, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_face = 0;
    let mut far_face = 0;
    for axis in 0..3 {
        let (o, d) = (origin[axis], dir[axis]);
        if d == 0.0 {
            if o < b.min[axis] || o > b.max[axis] {
                return None;
            }
            continue;
        }
        let t_min = (b.min[axis] - o) / d;
        let t_max = (b.max[axis] - o) / d;
        // entering through the min face when moving in +axis
        let (t_in, f_in, t_out, f_out) = if d > 0.0 {
            (t_min, 2 * axis, t_max, 2 * axis + 1)
        } else {
            (t_max, 2 * axis + 1, t_min, 2 * axis)
        };
        if t_in > t_near {
            t_near = t_in;
            near_face = f_in;
        }
        if t_out < t_far {
            t_far = t_out;
            far_face = f_out;
        }
    }
    if t_near > t_far {
        return None;
    }
    if t_near > HIT_EPSILON {
        Some((t_near, near_face))
    } else if t_far > HIT_EPSILON {
        Some((t_far, far_face))
    } else {
        None
    }
}

impl SceneSpec {
    /// Nearest surface along the ray `origin + t * dir` (`dir` unit length).
    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut best: Option<(f64, Rgb)> = None;
        let mut consider = |t: f64, color: &dyn Fn(&Vec3) -> Rgb| {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, color(&(origin + dir * t))));
            }
        };
        for s in &self.spheres {
            if let Some(t) = sphere_hit(s, origin, dir) {
                consider(t, &|p| s.texture.color(p));
            }
        }
        for b in &self.boxes {
            if let Some((t, face)) = box_hit(b, origin, dir) {
                consider(t, &|p| b.faces[face].color(p));
            }
        }
        if let Some(g) = &self.ground {
            if dir.y != 0.0 {
                let t = (g.height - origin.y) / dir.y;
                if t > HIT_EPSILON {
                    let tex = Texture::Checker {
                        a: g.a,
                        b: g.b,
                        period: g.period,
                    };
                    consider(t, &|p| tex.color(&Vec3::new(p.x, 0.0, p.z)));
                }
            }
        }
        best.map(|(t, color)| Hit { t, color })
    }

    /// Whether `point` is the first surface seen from `eye`, within a relative
    /// distance tolerance.
    pub fn is_visible(&self, point: &Vec3, eye: &Vec3, rel_tol: f64) -> bool {
        let offset = point - eye;
        let dist = offset.norm();
        if dist == 0.0 {
            return true;
        }
        match self.first_hit(eye, &(offset / dist)) {
            Some(h) => h.t >= dist * (1.0 - rel_tol),
            None => true,
        }
    }
}

/// Renders the color and depth panoramas seen from `pose`.
pub fn render_rgbd(spec: &SceneSpec, pose: &Pose, dims: ImageDims) -> (RgbPanorama, DepthPanorama) {
    let grid = RayGrid::new(dims);
    let origin = *pose.position();
    let rows: Vec<(Vec<Rgb>, Vec<f32>)> = (0..dims.height())
        .into_par_iter()
        .map(|j| {
            let mut colors = Vec::with_capacity(dims.width());
            let mut depths = Vec::with_capacity(dims.width());
            for i in 0..dims.width() {
                let dir = pose.rotation() * grid.direction(i, j);
                match spec.first_hit(&origin, &dir) {
                    Some(h) => {
                        colors.push(h.color);
                        depths.push(h.t as f32);
                    }
                    None => {
                        colors.push(spec.sky);
                        depths.push(crate::panorama::MISSING);
                    }
                }
            }
            (colors, depths)
        })
        .collect();
    let mut colors = Vec::with_capacity(dims.pixel_count());
    let mut depths = Vec::with_capacity(dims.pixel_count());
    for (c, d) in rows {
        colors.extend(c);
        depths.extend(d);
    }
    let rgb = RgbPanorama::new(dims, colors.into_iter().map(|c| c.map(|v| v.clamp(0.0, 1.0))).collect())
        .expect("rendered raster matches its dimensions");
    let depth = DepthPanorama::new(dims, depths).expect("rendered raster matches its dimensions");
    (rgb, depth)
}

/// Pixels of `view` (rendered at `target`) whose surface point is seen by at
/// least one of `eyes`.
pub fn covisibility_mask(
    spec: &SceneSpec,
    target: &Pose,
    depth: &DepthPanorama,
    eyes: &[Vec3],
) -> crate::panorama::PixelMask {
    let dims = depth.dims();
    let grid = RayGrid::new(dims);
    let bits: Vec<bool> = (0..dims.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % dims.width(), idx / dims.width());
            let Some(d) = depth.get(i, j) else {
                return false;
            };
            let p = target.local_to_world(&(grid.direction(i, j) * d as f64));
            eyes.iter().any(|e| spec.is_visible(&p, e, 1e-4))
        })
        .collect();
    crate::panorama::PixelMask::new(dims, bits).expect("mask matches its dimensions")
}

fn rgb(r: f32, g: f32, b: f32) -> Rgb {
    [r, g, b]
}

/// Closed room with textured walls, one plain wall (+z) and textured spheres.
pub fn room_scene() -> SceneSpec {
    let walls = AxisBox {
        min: Vec3::new(-4.0, -1.4, -3.5),
        max: Vec3::new(4.0, 1.6, 3.5),
        faces: [
            Texture::Stripes {
                a: rgb(0.85, 0.75, 0.55),
                b: rgb(0.35, 0.25, 0.2),
                wave: Vec3::new(0.0, 1.1, 1.7),
            },
            Texture::Waves {
                a: rgb(0.2, 0.35, 0.6),
                b: rgb(0.9, 0.85, 0.7),
                wave1: Vec3::new(0.0, 0.9, 1.3),
                wave2: Vec3::new(0.0, -1.6, 0.7),
            },
            Texture::Checker {
                a: rgb(0.3, 0.3, 0.32),
                b: rgb(0.8, 0.78, 0.72),
                period: 0.5,
            },
            Texture::Waves {
                a: rgb(0.95, 0.95, 0.92),
                b: rgb(0.6, 0.62, 0.65),
                wave1: Vec3::new(0.7, 0.0, 0.4),
                wave2: Vec3::new(-0.3, 0.0, 0.9),
            },
            Texture::Stripes {
                a: rgb(0.6, 0.2, 0.2),
                b: rgb(0.95, 0.8, 0.6),
                wave: Vec3::new(1.2, 0.8, 0.0),
            },
            Texture::Solid(rgb(0.7, 0.72, 0.68)),
        ],
    };
    SceneSpec {
        spheres: vec![
            Sphere {
                center: Vec3::new(2.0, -0.6, 1.2),
                radius: 0.55,
                texture: Texture::Stripes {
                    a: rgb(0.9, 0.5, 0.1),
                    b: rgb(0.2, 0.1, 0.4),
                    wave: Vec3::new(2.0, 1.0, 0.5),
                },
            },
            Sphere {
                center: Vec3::new(-1.9, -0.8, -1.6),
                radius: 0.5,
                texture: Texture::Waves {
                    a: rgb(0.1, 0.6, 0.3),
                    b: rgb(0.9, 0.9, 0.5),
                    wave1: Vec3::new(1.5, 1.5, 0.0),
                    wave2: Vec3::new(0.0, -1.0, 2.0),
                },
            },
            Sphere {
                center: Vec3::new(0.6, 0.4, -2.4),
                radius: 0.4,
                texture: Texture::Checker {
                    a: rgb(0.95, 0.95, 0.95),
                    b: rgb(0.15, 0.2, 0.5),
                    period: 0.25,
                },
            },
            Sphere {
                center: Vec3::new(-2.6, 0.3, 1.9),
                radius: 0.6,
                texture: Texture::Stripes {
                    a: rgb(0.8, 0.2, 0.6),
                    b: rgb(0.95, 0.9, 0.85),
                    wave: Vec3::new(0.0, 2.5, 1.0),
                },
            },
        ],
        ground: None,
        boxes: vec![walls],
        sky: rgb(0.0, 0.0, 0.0),
    }
}

/// Looks up a named scene preset.
pub fn preset(name: &str) -> Option<SceneSpec> {
    match name {
        "room" => Some(room_scene()),
        _ => None,
    }
}

/// Capture layout for [`render_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub center: Vec3,
    /// Number of positions along each horizontal axis.
    pub side: usize,
    pub spacing: f64,
    pub dims: ImageDims,
    /// Marks the central frame as held out (odd `side` only).
    pub hold_out_center: bool,
    /// Seed for the simulated sparse depth.
    pub seed: u64,
}

impl GridSpec {
    pub fn new(dims: ImageDims) -> Self {
        Self {
            center: Vec3::zeros(),
            side: 3,
            spacing: 0.5,
            dims,
            hold_out_center: true,
            seed: 1,
        }
    }

    /// Camera positions, row-major with `x` varying fastest.
    pub fn positions(&self) -> Vec<Vec3> {
        let half = (self.side as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.side * self.side);
        for r in 0..self.side {
            for c in 0..self.side {
                out.push(
                    self.center
                        + Vec3::new(
                            (c as f64 - half) * self.spacing,
                            0.0,
                            (r as f64 - half) * self.spacing,
                        ),
                );
            }
        }
        out
    }

    pub fn center_index(&self) -> Option<usize> {
        (self.side % 2 == 1).then(|| (self.side * self.side) / 2)
    }
}

/// Sparse depth as a structure-from-motion stage would deliver it: present
/// only at textured pixels away from depth edges, with small multiplicative
/// noise.
pub fn simulate_sparse_depth(
    rgb: &RgbPanorama,
    truth: &DepthPanorama,
    noise: f64,
    rng: &mut impl Rng,
) -> DepthPanorama {
    let dims = rgb.dims();
    let luma = rgb.luma();
    let l = |i: i64, j: i64| luma[dims.index(dims.wrap_column(i), dims.clamp_row(j))];
    let mut out = DepthPanorama::missing(dims);
    for j in 0..dims.height() {
        for i in 0..dims.width() {
            let Some(d) = truth.get(i, j) else { continue };
            let (ii, jj) = (i as i64, j as i64);
            let gx = l(ii + 1, jj) - l(ii - 1, jj);
            let gy = l(ii, jj + 1) - l(ii, jj - 1);
            let textured = gx.abs() + gy.abs() > 0.04;
            let smooth = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().all(|(di, dj)| {
                let n = truth.get(dims.wrap_column(ii + di), dims.clamp_row(jj + dj));
                n.is_some_and(|n| (n - d).abs() <= 0.02 * d)
            });
            let jitter = 1.0 + rng.gen_range(-noise..=noise);
            if textured && smooth {
                out.set(i, j, (d as f64 * jitter) as f32);
            }
        }
    }
    out
}

/// Renders every grid position and writes an on-disk fixture: `rgb/`,
/// `truth/` (ground-truth depth), `sparse/` and `manifest.json`.
pub fn render_grid(spec: &SceneSpec, grid: &GridSpec, out_dir: &Path) -> Result<SceneManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let center = grid.center_index().filter(|_| grid.hold_out_center);
    let mut frames = Vec::new();
    for (k, position) in grid.positions().into_iter().enumerate() {
        let id = format!("f{k:02}");
        let pose = Pose::at(position);
        let (rgb, truth) = render_rgbd(spec, &pose, grid.dims);
        let sparse = simulate_sparse_depth(&rgb, &truth, 0.002, &mut rng);
        let rgb_rel = format!("rgb/{id}.png");
        let truth_rel = format!("truth/{id}.pfm");
        let sparse_rel = format!("sparse/{id}.pfm");
        write_rgb_png(&rgb, out_dir.join(&rgb_rel))?;
        write_depth_pfm(&truth, out_dir.join(&truth_rel))?;
        write_depth_pfm(&sparse, out_dir.join(&sparse_rel))?;
        let mut frame = CaptureFrame::new(id, rgb_rel, pose);
        frame.truth_depth_path = Some(truth_rel.into());
        frame.sparse_depth_path = Some(sparse_rel.into());
        frame.blur_score = Some(blur_score(&rgb));
        frame.held_out = Some(k) == center;
        frames.push(frame);
    }
    let manifest = SceneManifest::new(frames, 1.0)?.with_base_dir(out_dir);
    save_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cartesian_to_spherical, reproject, spherical_to_cartesian};

    #[test]
    fn sphere_in_front_of_camera() {
        let spec = SceneSpec {
            spheres: vec![Sphere {
                center: Vec3::new(0.0, 0.0, -5.0),
                radius: 1.0,
                texture: Texture::Solid([1.0, 0.0, 0.0]),
            }],
            ..SceneSpec::default()
        };
        let hit = spec
            .first_hit(&Vec3::zeros(), &Vec3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert!((hit.t - 4.0).abs() < 1e-12);
        // every rendered sample lies on the sphere, none nearer than the pole
        let (_, depth) = render_rgbd(&spec, &Pose::default(), ImageDims::new(256, 128).unwrap());
        let nearest = depth.depths().iter().copied().filter(|d| d.is_finite()).fold(f32::MAX, f32::min);
        assert!(nearest >= 4.0 - 1e-5 && nearest < 4.01, "{nearest}");
    }

    #[test]
    fn empty_scene_is_all_sky() {
        let spec = SceneSpec::default();
        let (rgb, depth) = render_rgbd(&spec, &Pose::default(), ImageDims::new(16, 8).unwrap());
        assert_eq!(depth.present_count(), 0);
        assert!(rgb.pixels().iter().all(|c| *c == spec.sky));
    }

    #[test]
    fn depths_agree_with_reprojection() {
        let spec = room_scene();
        let a = Pose::at(Vec3::new(0.0, 0.0, 0.0));
        let b = Pose::at(Vec3::new(1.0, 0.0, 0.0));
        let dims = ImageDims::new(64, 32).unwrap();
        let grid = RayGrid::new(dims);
        let mut checked = 0;
        for j in 0..dims.height() {
            for i in 0..dims.width() {
                let dir = grid.direction(i, j);
                let ta = spec.first_hit(a.position(), &dir).unwrap().t;
                let s = cartesian_to_spherical(&(dir * ta)).unwrap();
                let rep = reproject(&s, &a, &b).unwrap();
                let world = a.local_to_world(&spherical_to_cartesian(&s));
                if !spec.is_visible(&world, b.position(), 1e-9) {
                    continue;
                }
                let dir_b = crate::geometry::direction(rep.theta, rep.phi);
                let tb = spec.first_hit(b.position(), &dir_b).unwrap().t;
                assert!((tb - rep.d).abs() < 1e-9, "{tb} vs {}", rep.d);
                checked += 1;
            }
        }
        assert!(checked > 1500);
    }

    #[test]
    fn camera_inside_room_sees_walls_everywhere() {
        let (_, depth) = render_rgbd(&room_scene(), &Pose::default(), ImageDims::new(32, 16).unwrap());
        assert_eq!(depth.present_count(), 32 * 16);
        assert!(depth.max_depth().unwrap() < 6.0);
    }

    #[test]
    fn grid_positions_and_determinism() {
        let grid = GridSpec::new(ImageDims::new(32, 16).unwrap());
        let pos = grid.positions();
        assert_eq!(pos.len(), 9);
        assert_eq!(pos[4], Vec3::zeros());
        assert_eq!(pos[0], Vec3::new(-0.5, 0.0, -0.5));
        assert_eq!(pos[5], Vec3::new(0.5, 0.0, 0.0));

        let spec = room_scene();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = render_grid(&spec, &grid, a.path()).unwrap();
        render_grid(&spec, &grid, b.path()).unwrap();
        assert_eq!(m.frames.len(), 9);
        assert!(m.frames[4].held_out && m.frames.iter().filter(|f| f.held_out).count() == 1);
        for rel in ["manifest.json", "rgb/f03.png", "truth/f03.pfm", "sparse/f08.pfm"] {
            assert_eq!(
                std::fs::read(a.path().join(rel)).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }
}
