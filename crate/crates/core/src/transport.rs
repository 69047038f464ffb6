//! Straight-line photon transport and truth-event assembly.
//!
//! Each event is transported in three stages so that the entangled azimuthal
//! correlation does not depend on which photon happens to be tracked first:
//! γ2 is followed up to its first analyzing scatter, then γ1; the two
//! analyzing scatters are then resolved together by the pair state, and
//! finally both photons are tracked to absorption or escape.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ray_volume_intersection, Geometry, VolumeId};
use crate::kinematics::{azimuth_in_frame, wrap_angle, Arm, Coherence, Vec3};
use crate::material::Materials;
use crate::pair::{create_annihilation_pair, PairMode, PairState, ScatterOutcome};
use crate::xsec::{kn_window_probability, sample_theta_kn, sample_theta_kn_window};

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

const MAX_INTERACTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Compton,
    Photoabsorb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterRole {
    /// Scatter before the correlation is consumed that keeps the entanglement.
    Intermediate,
    /// Scatter that takes part in the correlated pair draw.
    Correlated,
    /// Scatter of a separable or unpolarized photon.
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub sequence: u32,
    pub arm: Arm,
    /// Compton scatters the photon had undergone before this interaction.
    pub prime: u8,
    pub kind: InteractionKind,
    pub volume: VolumeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<[u16; 2]>,
    pub position: Vec3,
    pub energy_deposit: f64,
    pub k_in: f64,
    pub dir_in: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_lab: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir_out: Option<Vec3>,
    /// Polarization in effect for the scatter azimuth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pol_frame: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ScatterRole>,
    /// The arm's polarimeter scatter: the one whose azimuth enters Δφ.
    #[serde(default)]
    pub analysis_site: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub schema_version: u32,
    pub event_index: u64,
    pub seed: u64,
    pub mode: PairMode,
    pub axis: Vec3,
    pub weight: f64,
    pub initial_pol: [Option<Vec3>; 2],
    pub records: Vec<InteractionRecord>,
    pub escaped: [bool; 2],
    pub escaped_energy: [f64; 2],
    pub degenerate_frames: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    PureTcs,
    PureDcs,
    MsBackground,
    Other,
}

/// Importance sampling of a polar scattering angle: with probability `fraction` θ is drawn from
/// Klein-Nishina restricted to the window, otherwise from the full density. The event weight is
/// divided by the mixture density ratio, so expectations are unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBias {
    pub window_deg: [f64; 2],
    /// Probability of drawing θ from the window-restricted density.
    #[serde(default = "default_bias_fraction")]
    pub fraction: f64,
}

fn default_bias_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportOptions {
    #[serde(default)]
    pub force_scd_interaction: bool,
    /// Bias of the polarimeter scatter of each arm.
    #[serde(default)]
    pub analyzing_bias: Option<ThetaBias>,
    /// Bias of γ2's intermediate scatter (SCD, or its first scatter in the sphere).
    #[serde(default)]
    pub intermediate_bias: Option<ThetaBias>,
}

impl TransportOptions {
    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        if self.force_scd_interaction {
            let scd = geometry
                .volume(VolumeId::Scd)
                .ok_or_else(|| Error::config("options.force_scd_interaction", "geometry has no SCD"))?;
            if geometry.emission != crate::geometry::Emission::Axis
                || ray_volume_intersection(geometry.source, geometry.axis, &scd.shape).is_none()
            {
                return Err(Error::config(
                    "options.force_scd_interaction",
                    "forcing requires axis emission through the SCD",
                ));
            }
        }
        for (name, bias) in [("analyzing_bias", self.analyzing_bias), ("intermediate_bias", self.intermediate_bias)] {
            if let Some(b) = bias {
                let [lo, hi] = b.window_deg;
                if !(0.0 <= lo && lo < hi && hi <= 180.0) {
                    return Err(Error::config(format!("options.{name}.window_deg"), "need 0 ≤ lo < hi ≤ 180"));
                }
                if !(0.0..1.0).contains(&b.fraction) {
                    return Err(Error::config(format!("options.{name}.fraction"), "must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flight {
    Interaction { position: Vec3, volume: usize, kind: InteractionKind },
    Escaped,
}

fn choose_kind<R: Rng + ?Sized>(pe: f64, total: f64, rng: &mut R) -> InteractionKind {
    if rng.random::<f64>() * total < pe {
        InteractionKind::Photoabsorb
    } else {
        InteractionKind::Compton
    }
}

/// Walks the volumes along the ray in distance order, sampling an exponential free path in each.
pub fn propagate<R: Rng + ?Sized>(
    origin: Vec3,
    dir: Vec3,
    energy_kev: f64,
    geometry: &Geometry,
    materials: &Materials,
    rng: &mut R,
) -> Flight {
    let mut segments: Vec<(f64, f64, usize)> = geometry
        .volumes
        .iter()
        .enumerate()
        .filter_map(|(i, v)| ray_volume_intersection(origin, dir, &v.shape).map(|(a, b)| (a, b, i)))
        .filter(|(a, b, _)| b > a)
        .collect();
    segments.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (t0, t1, i) in segments {
        let mu = materials.tables[geometry.volumes[i].material].mu(energy_kev);
        let total = mu.total();
        if total <= 0.0 {
            continue;
        }
        let s = -(1.0 - rng.random::<f64>()).ln() / total;
        if s < t1 - t0 {
            return Flight::Interaction {
                position: origin + dir * (t0 + s),
                volume: i,
                kind: choose_kind(mu.photoelectric, total, rng),
            };
        }
    }
    Flight::Escaped
}

/// Interaction forced into one volume along the ray; returns the flight and its weight 1 − e^(−μL).
pub fn propagate_forced<R: Rng + ?Sized>(
    origin: Vec3,
    dir: Vec3,
    energy_kev: f64,
    geometry: &Geometry,
    materials: &Materials,
    volume: usize,
    rng: &mut R,
) -> Option<(Flight, f64)> {
    let (t0, t1) = ray_volume_intersection(origin, dir, &geometry.volumes[volume].shape)?;
    let mu = materials.tables[geometry.volumes[volume].material].mu(energy_kev);
    let total = mu.total();
    let p = -(-total * (t1 - t0)).exp_m1();
    if p <= 0.0 {
        return None;
    }
    let s = -(-rng.random::<f64>() * p).ln_1p() / total;
    let position = origin + dir * (t0 + s.min(t1 - t0));
    Some((Flight::Interaction { position, volume, kind: choose_kind(mu.photoelectric, total, rng) }, p))
}

struct Site {
    position: Vec3,
    volume: VolumeId,
    pixel: Option<[u16; 2]>,
    theta: f64,
    prime: u8,
    analysis_site: bool,
}

struct Tracker<'a> {
    geometry: &'a Geometry,
    materials: &'a Materials,
    options: &'a TransportOptions,
    records: Vec<InteractionRecord>,
    weight: f64,
    position: [Vec3; 2],
    alive: [bool; 2],
    escaped_energy: [f64; 2],
    comptons: [u32; 2],
    dm_comptons: [u32; 2],
    flights: [u32; 2],
    degenerate: u32,
}

impl<'a> Tracker<'a> {
    fn is_analysis_site(&self, arm: Arm, volume: VolumeId) -> bool {
        if self.geometry.perfect_sphere {
            let n = self.comptons[arm.index()];
            match arm {
                Arm::Gamma1 => n == 0,
                Arm::Gamma2 => n == 1,
            }
        } else {
            volume.is_dm() && self.dm_comptons[arm.index()] == 0
        }
    }

    fn is_intermediate(&self, pair: &PairState, arm: Arm, volume: VolumeId) -> bool {
        if pair.mode != PairMode::Ent || pair.correlation_consumed || pair.pending.is_some_and(|p| p.arm == arm) {
            return false;
        }
        if self.geometry.perfect_sphere {
            arm == Arm::Gamma2 && self.comptons[arm.index()] == 0
        } else {
            volume == VolumeId::Scd
        }
    }

    fn sample_theta<R: Rng + ?Sized>(&mut self, k: f64, bias: Option<ThetaBias>, rng: &mut R) -> Result<f64> {
        let Some(b) = bias else { return sample_theta_kn(k, rng) };
        let lo = b.window_deg[0].to_radians();
        let hi = b.window_deg[1].to_radians();
        let pw = kn_window_probability(k, lo, hi)?;
        let theta = if rng.random::<f64>() < b.fraction {
            sample_theta_kn_window(k, lo, hi, rng)?
        } else {
            sample_theta_kn(k, rng)?
        };
        let inside = (lo..=hi).contains(&theta);
        let g = b.fraction * if inside { 1.0 / pw } else { 0.0 } + (1.0 - b.fraction);
        self.weight /= g;
        Ok(theta)
    }

    /// γ2's first Compton scatter at the SCD (apparatus) or anywhere (sphere).
    fn is_intermediate_candidate(&self, arm: Arm, volume: VolumeId) -> bool {
        arm == Arm::Gamma2 && self.comptons[arm.index()] == 0 && (self.geometry.perfect_sphere || volume == VolumeId::Scd)
    }

    fn push_record(&mut self, mut rec: InteractionRecord) -> usize {
        rec.sequence = self.records.len() as u32;
        self.records.push(rec);
        self.records.len() - 1
    }

    fn record_scatter(&mut self, site: &Site, arm: Arm, out: &ScatterOutcome, role: ScatterRole) -> usize {
        self.degenerate += out.degenerate_frames;
        self.push_record(InteractionRecord {
            sequence: 0,
            arm,
            prime: site.prime,
            kind: InteractionKind::Compton,
            volume: site.volume,
            pixel: site.pixel,
            position: site.position,
            energy_deposit: out.k_in - out.k_out,
            k_in: out.k_in,
            dir_in: out.dir_in,
            theta: Some(out.theta),
            phi_lab: Some(out.dir_out.y.atan2(out.dir_out.x)),
            dir_out: Some(out.dir_out),
            pol_frame: out.pol_frame,
            role: Some(role),
            analysis_site: site.analysis_site,
        })
    }

    /// Tracks one photon; with `stop_at_correlated` it halts before a scatter that would consume
    /// or open the correlation and returns that site.
    fn run_arm<R: Rng + ?Sized>(
        &mut self,
        pair: &mut PairState,
        arm: Arm,
        stop_at_correlated: bool,
        rng: &mut R,
    ) -> Result<Option<Site>> {
        let a = arm.index();
        for _ in 0..MAX_INTERACTIONS {
            if !self.alive[a] {
                return Ok(None);
            }
            let ph = *pair.photon(arm);
            let forced = self.options.force_scd_interaction && arm == Arm::Gamma2 && self.flights[a] == 0;
            self.flights[a] += 1;
            let flight = if forced {
                let scd = self
                    .geometry
                    .volume_index(VolumeId::Scd)
                    .ok_or_else(|| Error::config("options.force_scd_interaction", "geometry has no SCD"))?;
                let (f, w) = propagate_forced(
                    self.position[a],
                    ph.direction,
                    ph.energy_kev,
                    self.geometry,
                    self.materials,
                    scd,
                    rng,
                )
                .ok_or_else(|| Error::config("options.force_scd_interaction", "emission ray misses the SCD"))?;
                self.weight *= w;
                f
            } else {
                propagate(self.position[a], ph.direction, ph.energy_kev, self.geometry, self.materials, rng)
            };
            let (position, vidx, kind) = match flight {
                Flight::Escaped => {
                    self.alive[a] = false;
                    self.escaped_energy[a] = ph.energy_kev;
                    return Ok(None);
                }
                Flight::Interaction { position, volume, kind } => (position, volume, kind),
            };
            self.position[a] = position;
            let vol = &self.geometry.volumes[vidx];
            let (volume, pixel) = (vol.id, vol.pixel_at(position));
            if kind == InteractionKind::Photoabsorb {
                self.alive[a] = false;
                self.push_record(InteractionRecord {
                    sequence: 0,
                    arm,
                    prime: ph.prime,
                    kind,
                    volume,
                    pixel,
                    position,
                    energy_deposit: ph.energy_kev,
                    k_in: ph.energy_kev,
                    dir_in: ph.direction,
                    theta: None,
                    phi_lab: None,
                    dir_out: None,
                    pol_frame: None,
                    role: None,
                    analysis_site: false,
                });
                return Ok(None);
            }
            let analysis_site = self.is_analysis_site(arm, volume);
            let bias = if analysis_site {
                self.options.analyzing_bias
            } else if self.is_intermediate_candidate(arm, volume) {
                self.options.intermediate_bias
            } else {
                None
            };
            let theta = self.sample_theta(ph.energy_kev, bias, rng)?;
            let site = Site { position, volume, pixel, theta, prime: ph.prime, analysis_site };
            let intermediate = self.is_intermediate(pair, arm, volume);
            self.comptons[a] += 1;
            if volume.is_dm() {
                self.dm_comptons[a] += 1;
            }
            if intermediate {
                let out = pair.intermediate_scatter(arm, theta, rng)?;
                self.record_scatter(&site, arm, &out, ScatterRole::Intermediate);
                continue;
            }
            if stop_at_correlated && ph.coherence == Coherence::Entangled {
                return Ok(Some(site));
            }
            let out = pair.analyzing_scatter(arm, theta, rng)?;
            self.record_scatter(&site, arm, &out, ScatterRole::Separable);
        }
        Err(Error::Internal(format!("photon {arm:?} exceeded {MAX_INTERACTIONS} interactions")))
    }

    fn patch_pol(&mut self, idx: [Option<usize>; 2], update: Option<(Arm, Vec3)>) {
        if let Some((arm, pol)) = update {
            if let Some(i) = idx[arm.index()] {
                self.records[i].pol_frame = Some(pol);
            }
        }
    }
}

/// Transports one annihilation pair to completion.
pub fn simulate_event<R: Rng + ?Sized>(
    mode: PairMode,
    geometry: &Geometry,
    materials: &Materials,
    options: &TransportOptions,
    rng: &mut R,
) -> Result<TruthEvent> {
    let axis = geometry.emission_axis(rng);
    let mut pair = create_annihilation_pair(mode, axis, rng);
    let initial_pol = [pair.photons[0].pol_ref, pair.photons[1].pol_ref];
    let mut t = Tracker {
        geometry,
        materials,
        options,
        records: Vec::with_capacity(8),
        weight: 1.0,
        position: [geometry.source; 2],
        alive: [true; 2],
        escaped_energy: [0.0; 2],
        comptons: [0; 2],
        dm_comptons: [0; 2],
        flights: [0; 2],
        degenerate: 0,
    };

    let site2 = t.run_arm(&mut pair, Arm::Gamma2, true, rng)?;
    let site1 = t.run_arm(&mut pair, Arm::Gamma1, true, rng)?;
    let mut idx = [None, None];
    for (arm, site) in [(Arm::Gamma2, site2), (Arm::Gamma1, site1)] {
        if let Some(site) = site {
            let out = pair.analyzing_scatter(arm, site.theta, rng)?;
            idx[arm.index()] = Some(t.record_scatter(&site, arm, &out, ScatterRole::Correlated));
            t.patch_pol(idx, out.partner_update);
        }
    }
    let update = pair.finalize_unpaired(rng)?;
    t.patch_pol(idx, update);
    t.run_arm(&mut pair, Arm::Gamma2, false, rng)?;
    t.run_arm(&mut pair, Arm::Gamma1, false, rng)?;

    Ok(TruthEvent {
        schema_version: TRUTH_SCHEMA_VERSION,
        event_index: 0,
        seed: 0,
        mode,
        axis,
        weight: t.weight,
        initial_pol,
        escaped: [t.escaped_energy[0] > 0.0, t.escaped_energy[1] > 0.0],
        escaped_energy: t.escaped_energy,
        degenerate_frames: t.degenerate,
        records: t.records,
    })
}

/// Pair-level double Compton scattering without geometry: both photons scatter once, with θ
/// drawn from Klein-Nishina restricted to `window` (radians), and are then absorbed.
///
/// Records are tagged as sphere interactions so the perfect-detector reconstruction applies.
pub fn simulate_pair_dcs<R: Rng + ?Sized>(mode: PairMode, window: [f64; 2], rng: &mut R) -> Result<TruthEvent> {
    let [lo, hi] = window;
    if !(0.0 <= lo && lo < hi && hi <= std::f64::consts::PI) {
        return Err(Error::domain(format!("invalid polar window [{lo}, {hi}]")));
    }
    let axis = Vec3::Z;
    let mut pair = create_annihilation_pair(mode, axis, rng);
    let initial_pol = [pair.photons[0].pol_ref, pair.photons[1].pol_ref];
    let mut records = Vec::with_capacity(4);
    let mut degenerate = 0;
    for arm in [Arm::Gamma2, Arm::Gamma1] {
        let k = pair.photon(arm).energy_kev;
        let theta = sample_theta_kn_window(k, lo, hi, rng)?;
        let out = pair.analyzing_scatter(arm, theta, rng)?;
        degenerate += out.degenerate_frames;
        let position = out.dir_in;
        for (i, kind) in [InteractionKind::Compton, InteractionKind::Photoabsorb].into_iter().enumerate() {
            let compton = i == 0;
            records.push(InteractionRecord {
                sequence: records.len() as u32,
                arm,
                prime: i as u8,
                kind,
                volume: VolumeId::Sphere,
                pixel: None,
                position: if compton { position } else { position + out.dir_out },
                energy_deposit: if compton { out.k_in - out.k_out } else { out.k_out },
                k_in: if compton { out.k_in } else { out.k_out },
                dir_in: if compton { out.dir_in } else { out.dir_out },
                theta: compton.then_some(out.theta),
                phi_lab: compton.then(|| out.dir_out.y.atan2(out.dir_out.x)),
                dir_out: compton.then_some(out.dir_out),
                pol_frame: if compton { out.pol_frame } else { None },
                role: compton.then_some(if mode == PairMode::Ent || mode == PairMode::Fd {
                    ScatterRole::Correlated
                } else {
                    ScatterRole::Separable
                }),
                analysis_site: compton,
            });
        }
        if let Some((arm, pol)) = out.partner_update {
            if let Some(r) = records.iter_mut().find(|r| r.arm == arm && r.analysis_site) {
                r.pol_frame = Some(pol);
            }
        }
    }
    if let Some((arm, pol)) = pair.finalize_unpaired(rng)? {
        if let Some(r) = records.iter_mut().find(|r| r.arm == arm && r.analysis_site) {
            r.pol_frame = Some(pol);
        }
    }
    Ok(TruthEvent {
        schema_version: TRUTH_SCHEMA_VERSION,
        event_index: 0,
        seed: 0,
        mode,
        axis,
        weight: 1.0,
        initial_pol,
        records,
        escaped: [false; 2],
        escaped_energy: [0.0; 2],
        degenerate_frames: degenerate,
    })
}

impl TruthEvent {
    pub fn records_of(&self, arm: Arm) -> impl Iterator<Item = &InteractionRecord> {
        self.records.iter().filter(move |r| r.arm == arm)
    }

    pub fn analysis_site(&self, arm: Arm) -> Option<&InteractionRecord> {
        self.records_of(arm).find(|r| r.analysis_site)
    }

    /// Azimuth of each arm's polarimeter scatter relative to the photon's own polarization.
    pub fn photon_frame_azimuths(&self) -> [Option<f64>; 2] {
        [Arm::Gamma1, Arm::Gamma2].map(|arm| {
            let r = self.analysis_site(arm)?;
            azimuth_in_frame(r.dir_in, r.pol_frame?, r.dir_out?).ok()
        })
    }

    /// (φ1, φ2′) in the photon frames, with φ2′ mirrored so that Δφ = φ1 − φ2′.
    pub fn photon_frame_pair(&self) -> Option<(f64, f64)> {
        let [a, b] = self.photon_frame_azimuths();
        Some((a?, wrap_angle(FRAC_PI_2 - b?)))
    }

    pub fn deposited_energy(&self, arm: Arm) -> f64 {
        self.records_of(arm).map(|r| r.energy_deposit).sum()
    }
}

/// Truth topology of an apparatus event.
pub fn classify_truth(ev: &TruthEvent) -> TruthLabel {
    let in_dm = |v: VolumeId| ev.records.iter().filter(move |r| r.volume == v);
    let relevant = in_dm(VolumeId::Dm0).count() >= 2 && in_dm(VolumeId::Dm1).count() >= 2;
    let clean_dm = |arm: Arm, dm: VolumeId| {
        let rs: Vec<_> = ev.records_of(arm).filter(|r| r.volume != VolumeId::Scd).collect();
        rs.len() == 2
            && rs.iter().all(|r| r.volume == dm)
            && rs[0].kind == InteractionKind::Compton
            && rs[1].kind == InteractionKind::Photoabsorb
            && rs[0].pixel.is_some()
            && rs[0].pixel != rs[1].pixel
    };
    let scd: Vec<_> = ev.records.iter().filter(|r| r.volume == VolumeId::Scd).collect();
    let scd_ok = scd.iter().all(|r| r.arm == Arm::Gamma2 && r.kind == InteractionKind::Compton);
    if clean_dm(Arm::Gamma1, VolumeId::Dm1) && clean_dm(Arm::Gamma2, VolumeId::Dm0) && scd_ok {
        match scd.len() {
            0 => return TruthLabel::PureDcs,
            1 => return TruthLabel::PureTcs,
            _ => {}
        }
    }
    if relevant {
        TruthLabel::MsBackground
    } else {
        TruthLabel::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(name: &str) -> (Geometry, Materials) {
        let m = Materials::builtin();
        (Geometry::build(&GeometryConfig::preset(name).unwrap(), &m).unwrap(), m)
    }

    fn rec(arm: Arm, kind: InteractionKind, volume: VolumeId, pixel: Option<[u16; 2]>) -> InteractionRecord {
        InteractionRecord {
            sequence: 0,
            arm,
            prime: 0,
            kind,
            volume,
            pixel,
            position: Vec3::ZERO,
            energy_deposit: 100.0,
            k_in: 511.0,
            dir_in: Vec3::Z,
            theta: None,
            phi_lab: None,
            dir_out: None,
            pol_frame: None,
            role: None,
            analysis_site: false,
        }
    }

    fn event(records: Vec<InteractionRecord>) -> TruthEvent {
        TruthEvent {
            schema_version: TRUTH_SCHEMA_VERSION,
            event_index: 0,
            seed: 0,
            mode: PairMode::Unpol,
            axis: Vec3::Z,
            weight: 1.0,
            initial_pol: [None, None],
            records,
            escaped: [false; 2],
            escaped_energy: [0.0; 2],
            degenerate_frames: 0,
        }
    }

    #[test]
    fn classify_examples() {
        use InteractionKind::*;
        use VolumeId::*;
        let dm = |arm, v, a, b| vec![rec(arm, Compton, v, Some(a)), rec(arm, Photoabsorb, v, Some(b))];
        let mut tcs = vec![rec(Arm::Gamma2, Compton, Scd, None)];
        tcs.extend(dm(Arm::Gamma2, Dm0, [1, 1], [5, 5]));
        tcs.extend(dm(Arm::Gamma1, Dm1, [2, 2], [8, 8]));
        assert_eq!(classify_truth(&event(tcs.clone())), TruthLabel::PureTcs);
        assert_eq!(classify_truth(&event(tcs[1..].to_vec())), TruthLabel::PureDcs);
        let mut ms = tcs.clone();
        ms[2].pixel = Some([1, 1]);
        assert_eq!(classify_truth(&event(ms)), TruthLabel::MsBackground);
        let mut extra = tcs.clone();
        extra.insert(2, rec(Arm::Gamma2, Compton, Dm0, Some([3, 3])));
        assert_eq!(classify_truth(&event(extra)), TruthLabel::MsBackground);
        assert_eq!(classify_truth(&event(tcs[..3].to_vec())), TruthLabel::Other);
    }

    #[test]
    fn events_respect_invariants() {
        for preset in ["back2back", "perfect_sphere"] {
            let (g, m) = geom(preset);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for mode in PairMode::ALL {
                for _ in 0..1000 {
                    let ev = simulate_event(mode, &g, &m, &TransportOptions::default(), &mut rng).unwrap();
                    for r in &ev.records {
                        assert!(r.energy_deposit > 0.0);
                        let v = g.volume(r.volume).unwrap();
                        assert!(v.shape.contains(r.position, 1e-6));
                    }
                    for arm in [Arm::Gamma1, Arm::Gamma2] {
                        let total = ev.deposited_energy(arm) + ev.escaped_energy[arm.index()];
                        assert!((total - 511.0).abs() < 1e-6, "{total}");
                    }
                }
            }
        }
    }

    #[test]
    fn forcing_puts_gamma2_in_scd() {
        let (g, m) = geom("back2back");
        let opts = TransportOptions { force_scd_interaction: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let ev = simulate_event(PairMode::Ent, &g, &m, &opts, &mut rng).unwrap();
            assert!(ev.records.iter().any(|r| r.volume == VolumeId::Scd && r.arm == Arm::Gamma2));
            assert!(ev.weight > 0.0 && ev.weight < 1.0);
        }
    }

    #[test]
    fn ent_scd_scatter_is_intermediate() {
        let (g, m) = geom("back2back");
        let opts = TransportOptions { force_scd_interaction: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let ev = simulate_event(PairMode::Ent, &g, &m, &opts, &mut rng).unwrap();
            for r in ev.records.iter().filter(|r| r.volume == VolumeId::Scd && r.kind == InteractionKind::Compton) {
                assert_eq!(r.role, Some(ScatterRole::Intermediate));
            }
            let ev = simulate_event(PairMode::Fd, &g, &m, &opts, &mut rng).unwrap();
            if let Some(r) = ev.records.iter().find(|r| r.volume == VolumeId::Scd && r.kind == InteractionKind::Compton) {
                assert_eq!(r.role, Some(ScatterRole::Correlated));
            }
        }
    }

    #[test]
    fn same_seed_same_event() {
        let (g, m) = geom("back2back");
        for seed in 0..50 {
            let a = simulate_event(PairMode::Ent, &g, &m, &TransportOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed));
            let b = simulate_event(PairMode::Ent, &g, &m, &TransportOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a.unwrap(), b.unwrap());
        }
    }
}
