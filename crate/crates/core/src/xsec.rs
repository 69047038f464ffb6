//! Klein-Nishina and entangled double-Compton cross sections, plus their samplers.
//!
//! All differential values are relative: the common factor r_e²/2 is dropped and
//! totals are expressed in units of the Thomson cross section. Only ratios enter
//! the enhancement ratio, so absolute normalization is never needed.
//!
//! Samplers use rejection against a constant envelope. Every density here is
//! bounded and cheap to evaluate, so no inverse-CDF tables are kept.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{compton_scattered_energy, scattered_energy_unchecked, ELECTRON_MASS_KEV};

/// 40/9 − 3 ln 3, the per-photon normalization of the entangled DCS.
pub const XSEC_NORM: f64 = 40.0 / 9.0 - 3.0 * 1.098_612_288_668_109_8;

const MAX_TRIES: usize = 1_000_000;

/// Kinematics of one correlated double-Compton event (γ1 and γ2′ analyzing scatters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntangledDcsKinematics {
    pub k1: f64,
    pub k2p: f64,
    pub theta1: f64,
    pub theta2p: f64,
    pub dphi: f64,
}

impl EntangledDcsKinematics {
    pub fn k1p(&self) -> Result<f64> {
        compton_scattered_energy(self.k1, self.theta1)
    }

    pub fn k2pp(&self) -> Result<f64> {
        compton_scattered_energy(self.k2p, self.theta2p)
    }

    pub fn alpha1(&self) -> Result<f64> {
        let kp = self.k1p()?;
        Ok(kp / self.k1 + self.k1 / kp)
    }

    pub fn alpha2p(&self) -> Result<f64> {
        let kp = self.k2pp()?;
        Ok(kp / self.k2p + self.k2p / kp)
    }
}

/// k′/k + k/k′ for a scatter at `cos_theta`.
#[inline]
fn alpha_ratio(k: f64, cos_theta: f64) -> (f64, f64) {
    let r = scattered_energy_unchecked(k, cos_theta) / k;
    (r, r + 1.0 / r)
}

pub fn kn_unpolarized(k: f64, theta: f64) -> Result<f64> {
    let kp = compton_scattered_energy(k, theta)?;
    let r = kp / k;
    let s2 = theta.sin().powi(2);
    Ok(r * r * (r + 1.0 / r - s2))
}

/// Polarized Klein-Nishina, φ measured from the incident polarization vector.
pub fn kn_polarized(k: f64, theta: f64, phi: f64) -> Result<f64> {
    let kp = compton_scattered_energy(k, theta)?;
    let r = kp / k;
    let s2 = theta.sin().powi(2);
    Ok(r * r * (r + 1.0 / r - 2.0 * s2 * phi.cos().powi(2)))
}

/// Total Klein-Nishina cross section in units of σ_T.
pub fn kn_total(k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("photon energy must be positive, got {k}")));
    }
    let e = k / ELECTRON_MASS_KEV;
    let l = (2.0 * e).ln_1p();
    let one2e = 1.0 + 2.0 * e;
    let a = (1.0 + e) / (e * e * e) * (2.0 * e * (1.0 + e) / one2e - l);
    let b = l / (2.0 * e);
    let c = (1.0 + 3.0 * e) / (one2e * one2e);
    Ok(0.75 * (a + b - c))
}

/// Antiderivative of kn_unpolarized with respect to u = 1 + ε(1 − cos θ).
fn kn_antiderivative(eps: f64, u: f64) -> f64 {
    let ln = u.ln();
    -0.5 / (u * u) + ln - 2.0 / eps * (ln + 1.0 / u) + (u - 2.0 * ln - 1.0 / u) / (eps * eps)
}

/// ∫ kn_unpolarized d(cos θ) over θ ∈ [lo, hi].
pub fn kn_integral(k: f64, lo: f64, hi: f64) -> Result<f64> {
    compton_scattered_energy(k, lo)?;
    compton_scattered_energy(k, hi)?;
    let eps = k / ELECTRON_MASS_KEV;
    let u_lo = 1.0 + eps * (1.0 - lo.cos());
    let u_hi = 1.0 + eps * (1.0 - hi.cos());
    Ok((kn_antiderivative(eps, u_hi) - kn_antiderivative(eps, u_lo)) / eps)
}

/// Probability that a Klein-Nishina scatter lands in θ ∈ [lo, hi].
pub fn kn_window_probability(k: f64, lo: f64, hi: f64) -> Result<f64> {
    Ok(kn_integral(k, lo, hi)? / kn_integral(k, 0.0, PI)?)
}

/// Entangled double-Compton cross section with the scattered-momentum prefactor.
pub fn entangled_dcs(kin: &EntangledDcsKinematics) -> Result<f64> {
    let k1p = kin.k1p()?;
    let k2pp = kin.k2pp()?;
    let a1 = k1p / kin.k1 + kin.k1 / k1p;
    let a2 = k2pp / kin.k2p + kin.k2p / k2pp;
    let s1 = kin.theta1.sin().powi(2);
    let s2 = kin.theta2p.sin().powi(2);
    let bracket = a1 * a2 - a1 * s2 - a2 * s1 + 2.0 * s1 * s2 * kin.dphi.sin().powi(2);
    Ok(k1p * k1p * k2pp * k2pp * bracket / (4.0 * PI * PI * kin.k1 * kin.k1 * XSEC_NORM * XSEC_NORM))
}

/// Offset `a` and modulation `2 sin²θ₁ sin²θ₂′` of the Δφ-conditional density.
fn conditional_terms(k1: f64, k2p: f64, theta1: f64, theta2p: f64) -> Result<(f64, f64)> {
    compton_scattered_energy(k1, theta1)?;
    compton_scattered_energy(k2p, theta2p)?;
    let (_, a1) = alpha_ratio(k1, theta1.cos());
    let (_, a2) = alpha_ratio(k2p, theta2p.cos());
    let s1 = theta1.sin().powi(2);
    let s2 = theta2p.sin().powi(2);
    Ok((a1 * a2 - a1 * s2 - a2 * s1, 2.0 * s1 * s2))
}

/// Yield ratio between Δφ = 90° and Δφ = 0 for the entangled pair.
pub fn r_analytic(theta1: f64, theta2p: f64, k1: f64, k2p: f64) -> Result<f64> {
    let (a, m) = conditional_terms(k1, k2p, theta1, theta2p)?;
    if a <= 0.0 {
        return Err(Error::domain(format!("degenerate DCS offset a = {a}")));
    }
    Ok((a + m) / a)
}

/// θ ∝ kn_unpolarized · sin θ on [0, π].
pub fn sample_theta_kn<R: Rng + ?Sized>(k: f64, rng: &mut R) -> Result<f64> {
    sample_theta_kn_window(k, 0.0, PI, rng)
}

/// θ ∝ kn_unpolarized · sin θ restricted to [lo, hi].
pub fn sample_theta_kn_window<R: Rng + ?Sized>(k: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::domain(format!("photon energy must be positive, got {k}")));
    }
    let (c_lo, c_hi) = (hi.cos(), lo.cos());
    // kn ≤ r³ + r and r is largest at the smallest angle
    let (r, _) = alpha_ratio(k, c_hi);
    let envelope = r * r * r + r;
    for _ in 0..MAX_TRIES {
        let c = c_lo + (c_hi - c_lo) * rng.random::<f64>();
        let (r, a) = alpha_ratio(k, c);
        let f = r * r * (a - (1.0 - c * c));
        if rng.random::<f64>() * envelope < f {
            return Ok(c.clamp(-1.0, 1.0).acos());
        }
    }
    Err(Error::Internal("Klein-Nishina θ rejection loop exhausted".into()))
}

#[inline]
fn uniform_azimuth<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -PI + 2.0 * PI * rng.random::<f64>()
}

/// φ ∈ [−π, π) ∝ kn_polarized(k, θ, φ) at fixed θ.
pub fn sample_phi_polarized<R: Rng + ?Sized>(k: f64, theta: f64, rng: &mut R) -> Result<f64> {
    compton_scattered_energy(k, theta)?;
    let (_, a) = alpha_ratio(k, theta.cos());
    let m = 2.0 * theta.sin().powi(2);
    for _ in 0..MAX_TRIES {
        let phi = uniform_azimuth(rng);
        if rng.random::<f64>() * a < a - m * phi.cos().powi(2) {
            return Ok(phi);
        }
    }
    Err(Error::Internal("polarized φ rejection loop exhausted".into()))
}

/// Δφ ∈ [−π, π) ∝ a + 2 sin²θ₁ sin²θ₂′ sin²Δφ.
pub fn sample_dphi_conditional<R: Rng + ?Sized>(
    k1: f64,
    k2p: f64,
    theta1: f64,
    theta2p: f64,
    rng: &mut R,
) -> Result<f64> {
    let (a, m) = conditional_terms(k1, k2p, theta1, theta2p)?;
    let envelope = a + m;
    for _ in 0..MAX_TRIES {
        let d = uniform_azimuth(rng);
        if rng.random::<f64>() * envelope < a + m * d.sin().powi(2) {
            return Ok(d);
        }
    }
    Err(Error::Internal("conditional Δφ rejection loop exhausted".into()))
}
