//! Annihilation pair state and the coherence models.
//!
//! A pair is created with two bookkeeping polarization frames, mutually
//! perpendicular and at a random azimuth about the emission axis. In the
//! entangled modes these frames carry no physical meaning until the
//! correlation is consumed: the first analyzing scatter draws its azimuth
//! uniformly, the second draws Δφ from the entangled conditional. Azimuths are
//! carried between the two photon frames by the mirror map φ → π/2 − φ, which
//! is exact for back-to-back partners and is used unchanged for a partner whose
//! frame has been transported through intermediate scatters.
//!
//! When the correlation is consumed both photons become separable. Each is
//! given a definite pre-scatter polarization drawn from the separable-mixture
//! posterior given the two observed scatters (orientation χ of the H/V pair
//! weighted by both polarized Klein-Nishina factors), and then a post-scatter
//! polarization from the two-channel Klein-Nishina transfer.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    compton_scattered_energy, scatter_direction, transport_polarization_frame, wrap_angle, Arm,
    Coherence, Photon, Vec3, ANNIHILATION_ENERGY_KEV,
};
use crate::xsec::{sample_dphi_conditional, sample_phi_polarized};

const MAX_TRIES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Entanglement survives intermediate scatters; Δφ sampled in the transported frame.
    Ent,
    /// Full decoherence after the first double-Compton scatter.
    Fd,
    /// Unpolarized, separable photons.
    Unpol,
    /// Separable |H V⟩ pair at a random orientation.
    Separable,
}

impl PairMode {
    pub const ALL: [PairMode; 4] = [PairMode::Ent, PairMode::Fd, PairMode::Unpol, PairMode::Separable];

    pub fn as_str(self) -> &'static str {
        match self {
            PairMode::Ent => "ent",
            PairMode::Fd => "fd",
            PairMode::Unpol => "unpol",
            PairMode::Separable => "separable",
        }
    }
}

impl std::fmt::Display for PairMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First analyzing scatter of an entangled pair, waiting for its partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingScatter {
    pub arm: Arm,
    pub theta: f64,
    /// Azimuth relative to `frame_ref` in the photon's local frame.
    pub phi: f64,
    pub k_in: f64,
    pub k_out: f64,
    pub dir_in: Vec3,
    pub dir_out: Vec3,
    pub frame_ref: Vec3,
}

/// What one scatter did to a photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterOutcome {
    pub arm: Arm,
    pub theta: f64,
    /// Azimuth in the photon's local frame (bookkeeping frame for entangled scatters).
    pub phi: f64,
    pub k_in: f64,
    pub k_out: f64,
    pub dir_in: Vec3,
    pub dir_out: Vec3,
    /// Polarization the azimuth should be measured against, if the photon had one.
    pub pol_frame: Option<Vec3>,
    /// Definite polarization assigned to the partner's earlier scatter at consumption.
    pub partner_update: Option<(Arm, Vec3)>,
    pub degenerate_frames: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub photons: [Photon; 2],
    pub mode: PairMode,
    pub correlation_consumed: bool,
    pub pending: Option<PendingScatter>,
    /// Number of conditional Δφ draws made for this pair (0 or 1).
    pub conditional_draws: u32,
}

/// γ2 travels along `axis`, γ1 along −`axis`.
pub fn create_annihilation_pair<R: Rng + ?Sized>(mode: PairMode, axis: Vec3, rng: &mut R) -> PairState {
    let axis = axis.normalized();
    let u = axis.any_perpendicular();
    let v = axis.cross(u);
    let psi = -PI + 2.0 * PI * rng.random::<f64>();
    let (s, c) = psi.sin_cos();
    let e1 = u * c + v * s;
    let e2 = u * (-s) + v * c;

    let (coherence, pols) = match mode {
        PairMode::Ent | PairMode::Fd => (Coherence::Entangled, [Some(e1), Some(e2)]),
        PairMode::Separable => (Coherence::Separable, [Some(e1), Some(e2)]),
        PairMode::Unpol => (Coherence::Unpolarized, [None, None]),
    };
    let photon = |arm: Arm, direction: Vec3, pol_ref| Photon {
        energy_kev: ANNIHILATION_ENERGY_KEV,
        direction,
        pol_ref,
        coherence,
        arm,
        prime: 0,
    };
    PairState {
        photons: [photon(Arm::Gamma1, -axis, pols[0]), photon(Arm::Gamma2, axis, pols[1])],
        mode,
        correlation_consumed: mode == PairMode::Unpol || mode == PairMode::Separable,
        pending: None,
        conditional_draws: 0,
    }
}

/// Post-scatter polarization from the two-channel Klein-Nishina transfer.
///
/// Candidates are the transported incident polarization and its perpendicular
/// within the plane normal to `dir_out`; channel weights are
/// (k′/k + k/k′ − 2) + 4 cos²Θ with Θ the angle to `pol_in`.
pub fn assign_scattered_polarization<R: Rng + ?Sized>(
    pol_in: Option<Vec3>,
    dir_out: Vec3,
    k: f64,
    kp: f64,
    rng: &mut R,
) -> (Vec3, bool) {
    let Some(pol_in) = pol_in else {
        return (random_perpendicular(dir_out, rng), false);
    };
    let t = transport_polarization_frame(pol_in, dir_out);
    let par = t.pol;
    let perp = dir_out.cross(par);
    let base = kp / k + k / kp - 2.0;
    let w_par = base + 4.0 * par.dot(pol_in).powi(2);
    let w_perp = base + 4.0 * perp.dot(pol_in).powi(2);
    let pick = if rng.random::<f64>() * (w_par + w_perp) < w_par { par } else { perp };
    (pick, t.degenerate)
}

fn random_perpendicular<R: Rng + ?Sized>(dir: Vec3, rng: &mut R) -> Vec3 {
    let u = dir.any_perpendicular();
    let v = dir.cross(u);
    let a = 2.0 * PI * rng.random::<f64>();
    u * a.cos() + v * a.sin()
}

/// Rotates `pol` by `angle` about `dir` (right-handed local frame).
fn rotate_in_frame(pol: Vec3, dir: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    (pol * c + dir.cross(pol) * s).normalized()
}

impl PairState {
    pub fn photon(&self, arm: Arm) -> &Photon {
        &self.photons[arm.index()]
    }

    fn photon_mut(&mut self, arm: Arm) -> &mut Photon {
        &mut self.photons[arm.index()]
    }

    /// Scatter that changes only direction and energy, keeping the entanglement.
    pub fn intermediate_scatter<R: Rng + ?Sized>(&mut self, arm: Arm, theta: f64, rng: &mut R) -> Result<ScatterOutcome> {
        if self.mode != PairMode::Ent || self.correlation_consumed {
            return Err(Error::Contract(format!(
                "intermediate scatter requires an unconsumed ENT pair (mode {}, consumed {})",
                self.mode, self.correlation_consumed
            )));
        }
        if self.pending.is_some_and(|p| p.arm == arm) {
            return Err(Error::Contract("intermediate scatter after the photon's analyzing scatter".into()));
        }
        let p = *self.photon(arm);
        let pol = p.pol_ref.ok_or_else(|| Error::Contract("entangled photon without frame".into()))?;
        let phi = -PI + 2.0 * PI * rng.random::<f64>();
        let k_out = compton_scattered_energy(p.energy_kev, theta)?;
        let dir_out = scatter_direction(p.direction, pol, theta, phi)?;
        let t = transport_polarization_frame(pol, dir_out);
        let ph = self.photon_mut(arm);
        ph.energy_kev = k_out;
        ph.direction = dir_out;
        ph.pol_ref = Some(t.pol);
        ph.prime += 1;
        Ok(ScatterOutcome {
            arm,
            theta,
            phi,
            k_in: p.energy_kev,
            k_out,
            dir_in: p.direction,
            dir_out,
            pol_frame: Some(pol),
            partner_update: None,
            degenerate_frames: t.degenerate as u32,
        })
    }

    /// Polarization-analyzing scatter; returns the sampled local azimuth and its effects.
    pub fn analyzing_scatter<R: Rng + ?Sized>(&mut self, arm: Arm, theta: f64, rng: &mut R) -> Result<ScatterOutcome> {
        let p = *self.photon(arm);
        match p.coherence {
            Coherence::Entangled if !self.correlation_consumed => match self.pending {
                None => self.first_analyzer(arm, theta, rng),
                Some(pending) if pending.arm == arm => Err(Error::Contract(
                    "second analyzing scatter of the same photon before its partner".into(),
                )),
                Some(pending) => self.second_analyzer(arm, theta, pending, rng),
            },
            Coherence::Entangled => Err(Error::Contract("entangled photon after consumption".into())),
            Coherence::Separable | Coherence::Unpolarized => self.separable_scatter(arm, theta, rng),
        }
    }

    fn first_analyzer<R: Rng + ?Sized>(&mut self, arm: Arm, theta: f64, rng: &mut R) -> Result<ScatterOutcome> {
        let p = *self.photon(arm);
        let frame = p.pol_ref.ok_or_else(|| Error::Contract("entangled photon without frame".into()))?;
        let phi = -PI + 2.0 * PI * rng.random::<f64>();
        let k_out = compton_scattered_energy(p.energy_kev, theta)?;
        let dir_out = scatter_direction(p.direction, frame, theta, phi)?;
        // provisional frame until the partner resolves the pair
        let t = transport_polarization_frame(frame, dir_out);
        self.pending = Some(PendingScatter {
            arm,
            theta,
            phi,
            k_in: p.energy_kev,
            k_out,
            dir_in: p.direction,
            dir_out,
            frame_ref: frame,
        });
        let ph = self.photon_mut(arm);
        ph.energy_kev = k_out;
        ph.direction = dir_out;
        ph.pol_ref = Some(t.pol);
        ph.prime += 1;
        Ok(ScatterOutcome {
            arm,
            theta,
            phi,
            k_in: p.energy_kev,
            k_out,
            dir_in: p.direction,
            dir_out,
            pol_frame: Some(frame),
            partner_update: None,
            degenerate_frames: t.degenerate as u32,
        })
    }

    fn second_analyzer<R: Rng + ?Sized>(
        &mut self,
        arm: Arm,
        theta: f64,
        first: PendingScatter,
        rng: &mut R,
    ) -> Result<ScatterOutcome> {
        let p = *self.photon(arm);
        let frame = p.pol_ref.ok_or_else(|| Error::Contract("entangled photon without frame".into()))?;
        let dphi = sample_dphi_conditional(first.k_in, p.energy_kev, first.theta, theta, rng)?;
        self.conditional_draws += 1;
        let phi = wrap_angle(FRAC_PI_2 - first.phi + dphi);
        let k_out = compton_scattered_energy(p.energy_kev, theta)?;
        let dir_out = scatter_direction(p.direction, frame, theta, phi)?;

        let chi = sample_collapse_orientation(
            (first.k_in, first.theta, first.phi),
            Some((p.energy_kev, theta, phi)),
            rng,
        )?;
        let pol_first = rotate_in_frame(first.frame_ref, first.dir_in, chi);
        let pol_this = rotate_in_frame(frame, p.direction, -chi);

        let mut degenerate = 0;
        let (new_first, d1) = assign_scattered_polarization(Some(pol_first), first.dir_out, first.k_in, first.k_out, rng);
        let (new_this, d2) = assign_scattered_polarization(Some(pol_this), dir_out, p.energy_kev, k_out, rng);
        degenerate += d1 as u32 + d2 as u32;

        let f = self.photon_mut(first.arm);
        f.pol_ref = Some(new_first);
        f.coherence = Coherence::Separable;
        let ph = self.photon_mut(arm);
        ph.energy_kev = k_out;
        ph.direction = dir_out;
        ph.pol_ref = Some(new_this);
        ph.coherence = Coherence::Separable;
        ph.prime += 1;
        self.pending = None;
        self.correlation_consumed = true;

        Ok(ScatterOutcome {
            arm,
            theta,
            phi,
            k_in: p.energy_kev,
            k_out,
            dir_in: p.direction,
            dir_out,
            pol_frame: Some(pol_this),
            partner_update: Some((first.arm, pol_first)),
            degenerate_frames: degenerate,
        })
    }

    fn separable_scatter<R: Rng + ?Sized>(&mut self, arm: Arm, theta: f64, rng: &mut R) -> Result<ScatterOutcome> {
        let p = *self.photon(arm);
        let k_out = compton_scattered_energy(p.energy_kev, theta)?;
        let (frame, phi) = match p.pol_ref {
            Some(pol) => (pol, sample_phi_polarized(p.energy_kev, theta, rng)?),
            None => (p.direction.any_perpendicular(), -PI + 2.0 * PI * rng.random::<f64>()),
        };
        let dir_out = scatter_direction(p.direction, frame, theta, phi)?;
        let (new_pol, degenerate) = match p.pol_ref {
            Some(_) => {
                let (v, d) = assign_scattered_polarization(p.pol_ref, dir_out, p.energy_kev, k_out, rng);
                (Some(v), d)
            }
            None => (None, false),
        };
        let ph = self.photon_mut(arm);
        ph.energy_kev = k_out;
        ph.direction = dir_out;
        ph.pol_ref = new_pol;
        ph.prime += 1;
        Ok(ScatterOutcome {
            arm,
            theta,
            phi,
            k_in: p.energy_kev,
            k_out,
            dir_in: p.direction,
            dir_out,
            pol_frame: p.pol_ref,
            partner_update: None,
            degenerate_frames: degenerate as u32,
        })
    }

    /// Resolves a first analyzing scatter whose partner never analyzed.
    ///
    /// Returns the definite polarization assigned to that scatter, if any was pending.
    pub fn finalize_unpaired<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<(Arm, Vec3)>> {
        let Some(first) = self.pending.take() else {
            if !self.correlation_consumed {
                self.correlation_consumed = true;
                for p in &mut self.photons {
                    p.coherence = Coherence::Separable;
                }
            }
            return Ok(None);
        };
        let chi = sample_collapse_orientation((first.k_in, first.theta, first.phi), None, rng)?;
        let pol = rotate_in_frame(first.frame_ref, first.dir_in, chi);
        let (new_pol, _) = assign_scattered_polarization(Some(pol), first.dir_out, first.k_in, first.k_out, rng);
        self.photon_mut(first.arm).pol_ref = Some(new_pol);
        // the partner never analyzed: its frame maps to the perpendicular orientation
        let partner = self.photon_mut(first.arm.partner());
        if let Some(pp) = partner.pol_ref {
            partner.pol_ref = Some(rotate_in_frame(pp, partner.direction, -chi));
        }
        for p in &mut self.photons {
            p.coherence = Coherence::Separable;
        }
        self.correlation_consumed = true;
        Ok(Some((first.arm, pol)))
    }
}

/// Orientation χ of the collapsed H/V pair, in the first analyzer's frame.
///
/// Density ∝ (α_F − 2 sin²θ_F cos²(φ_F − χ)) · (α_S − 2 sin²θ_S cos²(φ_S + χ)),
/// where the second factor is present only when the partner also scattered.
fn sample_collapse_orientation<R: Rng + ?Sized>(
    first: (f64, f64, f64),
    second: Option<(f64, f64, f64)>,
    rng: &mut R,
) -> Result<f64> {
    let factor = |(k, theta, _): (f64, f64, f64)| -> Result<(f64, f64)> {
        let kp = compton_scattered_energy(k, theta)?;
        Ok((kp / k + k / kp, 2.0 * theta.sin().powi(2)))
    };
    let (a1, m1) = factor(first)?;
    let (a2, m2) = match second {
        Some(s) => factor(s)?,
        None => (1.0, 0.0),
    };
    let phi1 = first.2;
    let phi2 = second.map_or(0.0, |s| s.2);
    let envelope = a1 * a2;
    for _ in 0..MAX_TRIES {
        let chi = -PI + 2.0 * PI * rng.random::<f64>();
        let w = (a1 - m1 * (phi1 - chi).cos().powi(2)) * (a2 - m2 * (phi2 + chi).cos().powi(2));
        if rng.random::<f64>() * envelope < w {
            return Ok(chi);
        }
    }
    Err(Error::Internal("collapse orientation rejection loop exhausted".into()))
}
