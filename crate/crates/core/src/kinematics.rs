//! Vector geometry, Compton kinematics and polarization frame transport.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electron rest energy. Fixed at 511 keV so the annihilation line equals it exactly.
pub const ELECTRON_MASS_KEV: f64 = 511.0;

/// Energy of each annihilation photon.
pub const ANNIHILATION_ENERGY_KEV: f64 = ELECTRON_MASS_KEV;

const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Angle to another vector, robust near 0 and π.
    pub fn angle_to(self, o: Vec3) -> f64 {
        self.cross(o).norm().atan2(self.dot(o))
    }

    /// Coordinate axis least aligned with `self`.
    fn least_aligned_axis(self) -> Vec3 {
        let (ax, ay, az) = (self.x.abs(), self.y.abs(), self.z.abs());
        if ax <= ay && ax <= az {
            Vec3::X
        } else if ay <= az {
            Vec3::Y
        } else {
            Vec3::Z
        }
    }

    /// A deterministic unit vector perpendicular to `self` (assumed unit).
    pub fn any_perpendicular(self) -> Vec3 {
        let a = self.least_aligned_axis();
        (a - self * a.dot(self)).normalized()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coherence {
    Entangled,
    Separable,
    Unpolarized,
}

/// Which annihilation photon: γ1 heads for DM1, γ2 for the scatter detector and DM0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Gamma1,
    Gamma2,
}

impl Arm {
    pub fn index(self) -> usize {
        match self {
            Arm::Gamma1 => 0,
            Arm::Gamma2 => 1,
        }
    }

    pub fn partner(self) -> Arm {
        match self {
            Arm::Gamma1 => Arm::Gamma2,
            Arm::Gamma2 => Arm::Gamma1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Photon {
    pub energy_kev: f64,
    pub direction: Vec3,
    pub pol_ref: Option<Vec3>,
    pub coherence: Coherence,
    pub arm: Arm,
    /// Number of Compton scatters so far (0 = unscattered, 1 = primed, ...).
    pub prime: u8,
}

/// k′ = k / (1 + (k/m)(1 − cos θ)).
#[inline]
pub fn compton_scattered_energy(k: f64, theta: f64) -> Result<f64> {
    check_energy(k)?;
    check_polar(theta)?;
    Ok(scattered_energy_unchecked(k, theta.cos()))
}

#[inline]
pub(crate) fn scattered_energy_unchecked(k: f64, cos_theta: f64) -> f64 {
    k / (1.0 + (k / ELECTRON_MASS_KEV) * (1.0 - cos_theta))
}

/// Maximum energy a Compton scatter can deposit for incident energy `k`.
pub fn compton_edge(k: f64) -> f64 {
    let eps = 2.0 * k / ELECTRON_MASS_KEV;
    k * eps / (1.0 + eps)
}

/// Polar angle that leaves `e_dep` in the medium for incident energy `k`.
pub fn scatter_angle_from_deposit(e_dep: f64, k: f64) -> Result<f64> {
    check_energy(k)?;
    let edge = compton_edge(k);
    if !(e_dep >= 0.0) || e_dep > edge * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "deposit {e_dep} keV outside [0, {edge}] for k = {k} keV"
        )));
    }
    let kp = (k - e_dep).max(k - edge);
    let cos = 1.0 - ELECTRON_MASS_KEV * (1.0 / kp - 1.0 / k);
    Ok(cos.clamp(-1.0, 1.0).acos())
}

fn check_energy(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("photon energy must be positive, got {k}")))
    }
}

fn check_polar(theta: f64) -> Result<()> {
    if (0.0..=PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::domain(format!("polar angle {theta} outside [0, π]")))
    }
}

/// Wraps an angle into [−π, π).
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Result of carrying a polarization vector into a new propagation direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportedFrame {
    pub pol: Vec3,
    /// Set when `pol_in` was parallel to the new direction and a fallback axis was used.
    pub degenerate: bool,
}

/// Component of `pol_in` perpendicular to `dir_out`, normalized.
pub fn transport_polarization_frame(pol_in: Vec3, dir_out: Vec3) -> TransportedFrame {
    if pol_in.cross(dir_out).norm() < 1e-9 {
        return TransportedFrame {
            pol: dir_out.any_perpendicular(),
            degenerate: true,
        };
    }
    let rejected = pol_in - dir_out * pol_in.dot(dir_out);
    TransportedFrame {
        pol: rejected.normalized(),
        degenerate: false,
    }
}

/// Local right-handed frame (ê₁ = frame_ref, ê₂ = dir × frame_ref, ê₃ = dir).
#[inline]
fn local_frame(dir_parent: Vec3, frame_ref: Vec3) -> Result<(Vec3, Vec3)> {
    if dir_parent.dot(frame_ref).abs() > ORTHO_TOL {
        return Err(Error::Contract(format!(
            "frame reference not perpendicular to direction (dot = {:e})",
            dir_parent.dot(frame_ref)
        )));
    }
    Ok((frame_ref, dir_parent.cross(frame_ref)))
}

/// Direction at polar angle `theta` from `dir_parent` and azimuth `phi` from `frame_ref`.
pub fn scatter_direction(dir_parent: Vec3, frame_ref: Vec3, theta: f64, phi: f64) -> Result<Vec3> {
    let (e1, e2) = local_frame(dir_parent, frame_ref)?;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let d = e1 * (st * cp) + e2 * (st * sp) + dir_parent * ct;
    // renormalize away rounding so repeated scatters stay on the unit sphere
    Ok(d.normalized())
}

/// Inverse of [`scatter_direction`]'s azimuth, in [−π, π).
pub fn azimuth_in_frame(dir_parent: Vec3, frame_ref: Vec3, dir_scattered: Vec3) -> Result<f64> {
    let (e1, e2) = local_frame(dir_parent, frame_ref)?;
    let (a, b) = (dir_scattered.dot(e1), dir_scattered.dot(e2));
    if a.hypot(b) < 1e-9 {
        return Err(Error::domain("azimuth undefined for forward/backward scatter"));
    }
    Ok(wrap_angle(b.atan2(a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn scattered_energy_examples() {
        assert_eq!(compton_scattered_energy(511.0, 0.0).unwrap(), 511.0);
        assert!((compton_scattered_energy(511.0, FRAC_PI_2).unwrap() - 255.5).abs() < 1e-12);
        assert!((compton_scattered_energy(511.0, PI).unwrap() - 511.0 / 3.0).abs() < 1e-12);
        assert!(compton_scattered_energy(0.0, 1.0).is_err());
        assert!(compton_scattered_energy(511.0, -0.1).is_err());
        assert!(compton_scattered_energy(511.0, 3.2).is_err());
    }

    #[test]
    fn deposit_inverse_examples() {
        assert_eq!(scatter_angle_from_deposit(0.0, 511.0).unwrap(), 0.0);
        assert!((scatter_angle_from_deposit(255.5, 511.0).unwrap() - FRAC_PI_2).abs() < 1e-12);
        let edge = 511.0 - 511.0 / 3.0;
        assert!((compton_edge(511.0) - edge).abs() < 1e-12);
        assert!((scatter_angle_from_deposit(edge, 511.0).unwrap() - PI).abs() < 1e-6);
        assert!(scatter_angle_from_deposit(edge + 0.1, 511.0).is_err());
        assert!(scatter_angle_from_deposit(-1.0, 511.0).is_err());
    }

    #[test]
    fn frame_transport_examples() {
        let t = transport_polarization_frame(Vec3::X, Vec3::Z);
        assert!(close(t.pol, Vec3::X, 1e-15) && !t.degenerate);
        let d = (Vec3::Y + Vec3::Z).normalized();
        assert!(close(transport_polarization_frame(Vec3::X, d).pol, Vec3::X, 1e-15));
        let d = (Vec3::X + Vec3::Z).normalized();
        let expect = (Vec3::X - Vec3::Z).normalized();
        assert!(close(transport_polarization_frame(Vec3::X, d).pol, expect, 1e-12));
    }

    #[test]
    fn degenerate_transport_falls_back() {
        let t = transport_polarization_frame(Vec3::X, Vec3::X);
        assert!(t.degenerate);
        assert!(t.pol.dot(Vec3::X).abs() < 1e-12);
        assert!(t.pol.is_unit(1e-12));
        assert_eq!(t, transport_polarization_frame(Vec3::X, Vec3::X));
    }

    #[test]
    fn scatter_direction_examples() {
        assert!(close(scatter_direction(Vec3::Z, Vec3::X, 0.0, 1.3).unwrap(), Vec3::Z, 1e-15));
        assert!(close(scatter_direction(Vec3::Z, Vec3::X, FRAC_PI_2, 0.0).unwrap(), Vec3::X, 1e-15));
        assert!(close(
            scatter_direction(Vec3::Z, Vec3::X, FRAC_PI_2, FRAC_PI_2).unwrap(),
            Vec3::Y,
            1e-15
        ));
        let tilted = (Vec3::X + Vec3::Z).normalized();
        assert!(scatter_direction(Vec3::Z, tilted, 1.0, 0.0).is_err());
    }

    #[test]
    fn azimuth_examples() {
        assert_eq!(azimuth_in_frame(Vec3::Z, Vec3::X, Vec3::X).unwrap(), 0.0);
        assert!((azimuth_in_frame(Vec3::Z, Vec3::X, Vec3::Y).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(azimuth_in_frame(Vec3::Z, Vec3::X, -Vec3::X).unwrap(), -PI);
        assert!(azimuth_in_frame(Vec3::Z, Vec3::X, Vec3::Z).is_err());
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -PI..PI).prop_map(|(c, p)| {
            let s = (1.0 - c * c).sqrt();
            Vec3::new(s * p.cos(), s * p.sin(), c)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn energy_decreasing_in_theta(k in 1.0f64..2000.0, a in 0.0f64..PI, b in 0.0f64..PI) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(compton_scattered_energy(k, lo).unwrap() > compton_scattered_energy(k, hi).unwrap());
        }

        #[test]
        fn deposit_round_trip(k in 1.0f64..2000.0, theta in 0.0f64..PI) {
            let kp = compton_scattered_energy(k, theta).unwrap();
            let back = scatter_angle_from_deposit(k - kp, k).unwrap();
            let kp2 = compton_scattered_energy(k, back).unwrap();
            prop_assert!(((kp2 - kp) / kp).abs() < 1e-9);
        }

        #[test]
        fn transport_contract(p in unit(), d in unit()) {
            prop_assume!(p.cross(d).norm() > 1e-6);
            let t = transport_polarization_frame(p, d);
            prop_assert!(!t.degenerate);
            prop_assert!(t.pol.is_unit(1e-12));
            prop_assert!(t.pol.dot(d).abs() < 1e-9);
            prop_assert!(t.pol.dot(p) > 0.0);
            prop_assert!(t.pol.dot(d.cross(p)).abs() < 1e-9);
        }

        #[test]
        fn direction_azimuth_round_trip(d in unit(), r in unit(), theta in 0.01f64..(PI - 0.01), phi in -PI..PI) {
            prop_assume!(d.cross(r).norm() > 1e-3);
            let f = transport_polarization_frame(r, d).pol;
            let out = scatter_direction(d, f, theta, phi).unwrap();
            prop_assert!((d.angle_to(out) - theta).abs() < 1e-12);
            let back = azimuth_in_frame(d, f, out).unwrap();
            prop_assert!(wrap_angle(back - phi).abs() < 1e-9);
        }
    }
}
