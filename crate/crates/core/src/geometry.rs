//! Detector layout: oriented boxes, the water sphere, ray intersection and presets.
//!
//! Lab frame: γ2 leaves the source along +z through the scatter detector (SCD)
//! into DM0, γ1 along −z into DM1. y is vertical. A module rotated by ρ about
//! the source turns about y, so its local axes are u = R_y(ρ)x̂, v = ŷ and its
//! depth axis w points away from the source.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec3;
use crate::material::Materials;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeId {
    Scd,
    Dm0,
    Dm1,
    Sphere,
}

impl VolumeId {
    pub fn is_dm(self) -> bool {
        matches!(self, VolumeId::Dm0 | VolumeId::Dm1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emission {
    #[default]
    Axis,
    Isotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmModuleConfig {
    /// `dm0` (behind the SCD, +z side) or `dm1` (−z side).
    pub id: VolumeId,
    pub rows: u16,
    pub cols: u16,
    pub pixel_size_mm: [f64; 3],
    pub pitch_mm: f64,
    pub face_distance_mm: f64,
    #[serde(default)]
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScdConfig {
    /// Extent along (x, y, z); the long axis is vertical.
    pub size_mm: [f64; 3],
    pub center_distance_mm: f64,
    #[serde(default)]
    pub lateral_offset_mm: [f64; 2],
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApparatusConfig {
    pub dm_modules: Vec<DmModuleConfig>,
    pub scd: Option<ScdConfig>,
    pub dm_material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Apparatus(ApparatusConfig),
    PerfectSphere { radius_mm: f64, material: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub source_position: Vec3,
    #[serde(default)]
    pub emission: Emission,
    pub layout: Layout,
}

pub const PRESETS: [&str; 4] = ["back2back", "rotated28", "no_scd", "perfect_sphere"];

fn dm(id: VolumeId, rotation_deg: f64) -> DmModuleConfig {
    DmModuleConfig {
        id,
        rows: 16,
        cols: 16,
        pixel_size_mm: [3.0, 3.0, 20.0],
        pitch_mm: 3.0,
        face_distance_mm: 38.0,
        rotation_deg,
    }
}

fn default_scd() -> ScdConfig {
    ScdConfig { size_mm: [3.0, 5.0, 3.0], center_distance_mm: 6.8, lateral_offset_mm: [0.0, 0.0], material: "lyso".into() }
}

impl GeometryConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let apparatus = |rot0: f64, scd: Option<ScdConfig>| GeometryConfig {
            source_position: Vec3::ZERO,
            emission: Emission::Axis,
            layout: Layout::Apparatus(ApparatusConfig {
                dm_modules: vec![dm(VolumeId::Dm0, rot0), dm(VolumeId::Dm1, 0.0)],
                scd,
                dm_material: "lyso".into(),
            }),
        };
        Ok(match name {
            "back2back" => apparatus(0.0, Some(default_scd())),
            "rotated28" => apparatus(28.0, Some(default_scd())),
            "no_scd" => apparatus(0.0, None),
            "perfect_sphere" => GeometryConfig {
                source_position: Vec3::ZERO,
                emission: Emission::Axis,
                layout: Layout::PerfectSphere { radius_mm: 200.0, material: "water".into() },
            },
            other => {
                return Err(Error::config(
                    "geometry.preset",
                    format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Orthonormal local axes (u, v, w).
    pub axes: [Vec3; 3],
    pub half: [f64; 3],
}

impl OrientedBox {
    pub fn axis_aligned(center: Vec3, size: [f64; 3]) -> Self {
        OrientedBox { center, axes: [Vec3::X, Vec3::Y, Vec3::Z], half: [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0] }
    }

    pub fn to_local(&self, p: Vec3) -> [f64; 3] {
        let d = p - self.center;
        [d.dot(self.axes[0]), d.dot(self.axes[1]), d.dot(self.axes[2])]
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        self.to_local(p).iter().zip(&self.half).all(|(x, h)| x.abs() <= h + tol)
    }

    /// Slab test; returns the parametric entry/exit distances along `dir`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let o = self.to_local(origin);
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..3 {
            let d = dir.dot(self.axes[i]);
            if d.abs() < 1e-15 {
                if o[i].abs() > self.half[i] {
                    return None;
                }
                continue;
            }
            let a = (-self.half[i] - o[i]) / d;
            let b = (self.half[i] - o[i]) / d;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            *c = self.center
                + self.axes[0] * (s(0) * self.half[0])
                + self.axes[1] * (s(1) * self.half[1])
                + self.axes[2] * (s(2) * self.half[2]);
        }
        out
    }

    /// Separating-axis test; touching faces do not count as overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let mut axes: Vec<Vec3> = self.axes.iter().chain(other.axes.iter()).copied().collect();
        for a in self.axes {
            for b in other.axes {
                let c = a.cross(b);
                if c.norm() > 1e-9 {
                    axes.push(c.normalized());
                }
            }
        }
        let (ca, cb) = (self.corners(), other.corners());
        let project = |cs: &[Vec3; 8], ax: Vec3| {
            cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.dot(ax)), hi.max(c.dot(ax))))
        };
        axes.iter().all(|&ax| {
            let (a0, a1) = project(&ca, ax);
            let (b0, b1) = project(&cb, ax);
            a1 > b0 + 1e-9 && b1 > a0 + 1e-9
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box(OrientedBox),
    Sphere { center: Vec3, radius: f64 },
}

impl Shape {
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        match self {
            Shape::Box(b) => b.intersect(origin, dir),
            Shape::Sphere { center, radius } => {
                let oc = origin - *center;
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                Some((-b - s, -b + s))
            }
        }
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        match self {
            Shape::Box(b) => b.contains(p, tol),
            Shape::Sphere { center, radius } => (p - *center).norm() <= radius + tol,
        }
    }
}

/// Forward ray intersection, clipped to t ≥ 0; `None` if the volume lies behind.
pub fn ray_volume_intersection(origin: Vec3, dir: Vec3, shape: &Shape) -> Option<(f64, f64)> {
    let (t0, t1) = shape.intersect(origin, dir)?;
    if t1 <= 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGrid {
    pub rows: u16,
    pub cols: u16,
    pub pitch: f64,
}

impl PixelGrid {
    /// (row, col) containing local (u, v); points on the outer boundary clamp inward.
    pub fn pixel_of(&self, u: f64, v: f64) -> [u16; 2] {
        let idx = |x: f64, n: u16| ((x / self.pitch + n as f64 / 2.0).floor().max(0.0) as u16).min(n - 1);
        [idx(v, self.rows), idx(u, self.cols)]
    }

    /// Pixel center (u, v) in the module frame.
    pub fn center(&self, pixel: [u16; 2]) -> (f64, f64) {
        let c = |i: u16, n: u16| (i as f64 + 0.5 - n as f64 / 2.0) * self.pitch;
        (c(pixel[1], self.cols), c(pixel[0], self.rows))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub id: VolumeId,
    pub shape: Shape,
    pub material: usize,
    pub grid: Option<PixelGrid>,
}

impl Volume {
    /// Pixel holding `p`, for pixelated modules.
    pub fn pixel_at(&self, p: Vec3) -> Option<[u16; 2]> {
        match (&self.shape, &self.grid) {
            (Shape::Box(b), Some(g)) => {
                let l = b.to_local(p);
                Some(g.pixel_of(l[0], l[1]))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub volumes: Vec<Volume>,
    pub source: Vec3,
    pub emission: Emission,
    /// γ2 emission axis for `Emission::Axis`.
    pub axis: Vec3,
    pub perfect_sphere: bool,
}

fn rot_y(v: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

fn material_index(materials: &Materials, path: &str, name: &str) -> Result<usize> {
    materials.index_of(name).ok_or_else(|| Error::config(path, format!("unknown material `{name}`")))
}

impl Geometry {
    pub fn build(cfg: &GeometryConfig, materials: &Materials) -> Result<Self> {
        let src = cfg.source_position;
        let mut volumes = Vec::new();
        let perfect_sphere = match &cfg.layout {
            Layout::PerfectSphere { radius_mm, material } => {
                positive("geometry.layout.radius_mm", *radius_mm)?;
                volumes.push(Volume {
                    id: VolumeId::Sphere,
                    shape: Shape::Sphere { center: src, radius: *radius_mm },
                    material: material_index(materials, "geometry.layout.material", material)?,
                    grid: None,
                });
                true
            }
            Layout::Apparatus(app) => {
                let dm_mat = material_index(materials, "geometry.layout.dm_material", &app.dm_material)?;
                for (i, m) in app.dm_modules.iter().enumerate() {
                    let p = format!("geometry.layout.dm_modules[{i}]");
                    let sign = match m.id {
                        VolumeId::Dm0 => 1.0,
                        VolumeId::Dm1 => -1.0,
                        _ => return Err(Error::config(format!("{p}.id"), "module id must be dm0 or dm1")),
                    };
                    if volumes.iter().any(|v: &Volume| v.id == m.id) {
                        return Err(Error::config(format!("{p}.id"), "duplicate module id"));
                    }
                    if m.rows == 0 || m.cols == 0 {
                        return Err(Error::config(format!("{p}.rows"), "pixel array must be non-empty"));
                    }
                    for (k, s) in m.pixel_size_mm.iter().enumerate() {
                        positive(&format!("{p}.pixel_size_mm[{k}]"), *s)?;
                    }
                    positive(&format!("{p}.pitch_mm"), m.pitch_mm)?;
                    positive(&format!("{p}.face_distance_mm"), m.face_distance_mm)?;
                    if (m.pitch_mm - m.pixel_size_mm[0]).abs() > 1e-9 || (m.pitch_mm - m.pixel_size_mm[1]).abs() > 1e-9 {
                        return Err(Error::config(
                            format!("{p}.pitch_mm"),
                            "pitch must equal the pixel face size (inter-pixel gaps are not modelled)",
                        ));
                    }
                    let rot = m.rotation_deg.to_radians();
                    let w = rot_y(Vec3::Z, rot) * sign;
                    let u = rot_y(Vec3::X, rot);
                    let depth = m.pixel_size_mm[2];
                    volumes.push(Volume {
                        id: m.id,
                        shape: Shape::Box(OrientedBox {
                            center: src + w * (m.face_distance_mm + depth / 2.0),
                            axes: [u, Vec3::Y, w],
                            half: [m.cols as f64 * m.pitch_mm / 2.0, m.rows as f64 * m.pitch_mm / 2.0, depth / 2.0],
                        }),
                        material: dm_mat,
                        grid: Some(PixelGrid { rows: m.rows, cols: m.cols, pitch: m.pitch_mm }),
                    });
                }
                if let Some(scd) = &app.scd {
                    for (k, s) in scd.size_mm.iter().enumerate() {
                        positive(&format!("geometry.layout.scd.size_mm[{k}]"), *s)?;
                    }
                    positive("geometry.layout.scd.center_distance_mm", scd.center_distance_mm)?;
                    let c = src + Vec3::new(scd.lateral_offset_mm[0], scd.lateral_offset_mm[1], scd.center_distance_mm);
                    volumes.push(Volume {
                        id: VolumeId::Scd,
                        shape: Shape::Box(OrientedBox::axis_aligned(c, scd.size_mm)),
                        material: material_index(materials, "geometry.layout.scd.material", &scd.material)?,
                        grid: None,
                    });
                }
                if !volumes.iter().any(|v| v.id == VolumeId::Dm0) || !volumes.iter().any(|v| v.id == VolumeId::Dm1) {
                    return Err(Error::config("geometry.layout.dm_modules", "both dm0 and dm1 are required"));
                }
                false
            }
        };
        for (i, a) in volumes.iter().enumerate() {
            for b in &volumes[i + 1..] {
                if let (Shape::Box(x), Shape::Box(y)) = (&a.shape, &b.shape) {
                    if x.overlaps(y) {
                        return Err(Error::config("geometry", format!("volumes {:?} and {:?} overlap", a.id, b.id)));
                    }
                }
            }
            if matches!(a.shape, Shape::Box(_)) && a.shape.contains(src, 0.0) {
                return Err(Error::config("geometry.source_position", "source lies inside a detector volume"));
            }
        }
        Ok(Geometry { volumes, source: src, emission: cfg.emission, axis: Vec3::Z, perfect_sphere })
    }

    pub fn volume(&self, id: VolumeId) -> Option<&Volume> {
        self.volumes.iter().find(|v| v.id == id)
    }

    pub fn volume_index(&self, id: VolumeId) -> Option<usize> {
        self.volumes.iter().position(|v| v.id == id)
    }

    pub fn emission_axis<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match self.emission {
            Emission::Axis => self.axis,
            Emission::Isotropic => {
                let c = 2.0 * rng.random::<f64>() - 1.0;
                let s = (1.0 - c * c).max(0.0).sqrt();
                let a = 2.0 * PI * rng.random::<f64>();
                Vec3::new(s * a.cos(), s * a.sin(), c)
            }
        }
    }
}
