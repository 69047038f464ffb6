//! Event selection and angle reconstruction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::digitizer::{fwhm_at, DetectorEvent, PixelHit, ResolutionConfig};
use crate::error::{Error, Result};
use crate::geometry::VolumeId;
use crate::kinematics::{compton_edge, scatter_angle_from_deposit, wrap_angle, Arm, ANNIHILATION_ENERGY_KEV};
use crate::transport::{InteractionKind, TruthEvent, TruthLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionCuts {
    pub theta_window_deg: [f64; 2],
    pub theta_ics_edges_deg: Vec<f64>,
    pub dphi_bins: usize,
    /// Half-width of the summed-energy window in units of the summed FWHM; `None` disables it.
    pub sdh_window_fwhm: Option<f64>,
    pub adjacency_exclusion: bool,
    pub require_scd: bool,
    /// How the larger deposit of a double hit enters the polar-angle reconstruction.
    pub cs_energy: CsEnergy,
}

/// Interpretation of the larger deposit of a DM double hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsEnergy {
    /// Larger deposit is the scattered photon's energy k′; θ follows from k → k′.
    #[default]
    ScatteredPhoton,
    /// Larger deposit is the recoil-electron energy at the Compton site.
    Electron,
}

impl Default for SelectionCuts {
    fn default() -> Self {
        SelectionCuts {
            theta_window_deg: [72.0, 92.0],
            theta_ics_edges_deg: (0..=8).map(|i| 10.0 * i as f64).collect(),
            dphi_bins: 24,
            sdh_window_fwhm: Some(1.5),
            adjacency_exclusion: true,
            require_scd: true,
            cs_energy: CsEnergy::ScatteredPhoton,
        }
    }
}

impl SelectionCuts {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.theta_window_deg;
        if !(0.0 <= lo && lo < hi && hi <= 180.0) {
            return Err(Error::config("cuts.theta_window_deg", "need 0 ≤ low < high ≤ 180"));
        }
        let e = &self.theta_ics_edges_deg;
        if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) || e[0] < 0.0 || e[e.len() - 1] > 180.0 {
            return Err(Error::config("cuts.theta_ics_edges_deg", "need ≥ 2 strictly increasing edges within [0, 180]"));
        }
        if self.dphi_bins < 3 {
            return Err(Error::config("cuts.dphi_bins", "need at least 3 bins"));
        }
        if let Some(w) = self.sdh_window_fwhm {
            if !(w > 0.0) {
                return Err(Error::config("cuts.sdh_window_fwhm", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn theta_ics_edges_rad(&self) -> Vec<f64> {
        self.theta_ics_edges_deg.iter().map(|d| d.to_radians()).collect()
    }

    fn in_theta_window(&self, theta: f64) -> bool {
        let d = theta.to_degrees();
        d >= self.theta_window_deg[0] && d <= self.theta_window_deg[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    NoScd,
    Multiplicity,
    Adjacency,
    ComptonEdge,
    SdhWindow,
    ThetaWindow,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::NoScd => "no_scd",
            Rejection::Multiplicity => "multiplicity",
            Rejection::Adjacency => "adjacency",
            Rejection::ComptonEdge => "compton_edge",
            Rejection::SdhWindow => "sdh_window",
            Rejection::ThetaWindow => "theta_window",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedEvent {
    pub event_index: u64,
    pub theta_ics: f64,
    pub theta1: f64,
    pub theta2p: f64,
    /// Lab-frame azimuths of the two scatter planes.
    pub phi1: f64,
    pub phi2p: f64,
    pub dphi: f64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<TruthLabel>,
    /// Photon-frame (φ1, φ2′) with Δφ = φ1 − φ2′.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_frame: Option<(f64, f64)>,
}

/// Full-quadrant azimuth from the Compton site to the absorption site, in the module frame.
///
/// Module frames share the lab x and y axes up to the module rotation about the vertical,
/// so the returned angle is directly comparable between modules.
pub fn azimuth_from_pixels(hit1: &PixelHit, hit2: &PixelHit) -> Result<f64> {
    if hit1.pixel() == hit2.pixel() && hit1.volume == hit2.volume {
        return Err(Error::domain("azimuth undefined for identical pixels"));
    }
    Ok(wrap_angle((hit2.y - hit1.y).atan2(hit2.x - hit1.x)))
}

struct ArmReco {
    theta: f64,
    phi: f64,
}

fn reconstruct_dm(
    hits: &[PixelHit],
    incident: f64,
    fwhm_frac: f64,
    cuts: &SelectionCuts,
) -> std::result::Result<ArmReco, Rejection> {
    let [a, b] = hits else { return Err(Rejection::Multiplicity) };
    let cheb = (a.row as i32 - b.row as i32).abs().max((a.col as i32 - b.col as i32).abs());
    if cheb == 0 || (cuts.adjacency_exclusion && cheb <= 1) {
        return Err(Rejection::Adjacency);
    }
    if let Some(w) = cuts.sdh_window_fwhm {
        let sum = a.energy_kev + b.energy_kev;
        let half = (w * fwhm_at(fwhm_frac, incident)).max(1e-6 * incident);
        if (sum - incident).abs() > half {
            return Err(Rejection::SdhWindow);
        }
    }
    let (cs, abs) = if a.energy_kev >= b.energy_kev { (a, b) } else { (b, a) };
    let electron = match cuts.cs_energy {
        CsEnergy::Electron => cs.energy_kev,
        CsEnergy::ScatteredPhoton => incident - cs.energy_kev,
    };
    if !(incident > 0.0) || electron < 0.0 || electron > compton_edge(incident) {
        return Err(Rejection::ComptonEdge);
    }
    let theta = scatter_angle_from_deposit(electron, incident).map_err(|_| Rejection::ComptonEdge)?;
    let phi = azimuth_from_pixels(cs, abs).map_err(|_| Rejection::Adjacency)?;
    Ok(ArmReco { theta, phi })
}

/// Reconstructs one digitized coincidence; DM1 hosts γ1, DM0 hosts γ2′.
pub fn reconstruct(
    ev: &DetectorEvent,
    cuts: &SelectionCuts,
    resolution: &ResolutionConfig,
) -> std::result::Result<SelectedEvent, Rejection> {
    let scd = ev.scd_kev;
    if cuts.require_scd && scd.is_none() {
        return Err(Rejection::NoScd);
    }
    if ev.dm0.len() != 2 || ev.dm1.len() != 2 {
        return Err(Rejection::Multiplicity);
    }
    let e_scd = scd.unwrap_or(0.0);
    let k = ANNIHILATION_ENERGY_KEV;
    let theta_ics = if scd.is_some() {
        if e_scd > compton_edge(k) {
            return Err(Rejection::ComptonEdge);
        }
        scatter_angle_from_deposit(e_scd, k).map_err(|_| Rejection::ComptonEdge)?
    } else {
        0.0
    };
    let g1 = reconstruct_dm(&ev.dm1, k, resolution.dm1_sdh_fwhm_frac, cuts)?;
    let g2 = reconstruct_dm(&ev.dm0, k - e_scd, resolution.dm0_sdh_fwhm_frac, cuts)?;
    if !cuts.in_theta_window(g1.theta) || !cuts.in_theta_window(g2.theta) {
        return Err(Rejection::ThetaWindow);
    }
    let truth = ev.truth.as_ref();
    Ok(SelectedEvent {
        event_index: ev.event_index,
        theta_ics,
        theta1: g1.theta,
        theta2p: g2.theta,
        phi1: g1.phi,
        phi2p: g2.phi,
        dphi: wrap_angle(g1.phi - g2.phi),
        weight: ev.weight,
        label: truth.map(|t| t.label),
        photon_frame: truth.and_then(|t| t.photon_frame),
    })
}

/// Perfect-detector reconstruction from truth: exact angles of γ1's first scatter, γ2's
/// intermediate scatter (θ_ICS) and γ2′'s following scatter.
pub fn reconstruct_perfect(ev: &TruthEvent, cuts: &SelectionCuts) -> std::result::Result<SelectedEvent, Rejection> {
    let site = |arm: Arm| ev.analysis_site(arm).filter(|r| r.kind == InteractionKind::Compton);
    let (Some(r1), Some(r2)) = (site(Arm::Gamma1), site(Arm::Gamma2)) else {
        return Err(Rejection::Multiplicity);
    };
    let ics = ev
        .records_of(Arm::Gamma2)
        .find(|r| r.kind == InteractionKind::Compton && r.prime == 0 && r.sequence != r2.sequence);
    let theta_ics = match (ics, cuts.require_scd) {
        (Some(r), _) => r.theta.unwrap_or(0.0),
        (None, true) => return Err(Rejection::NoScd),
        (None, false) => 0.0,
    };
    let (Some(theta1), Some(theta2p), Some(phi1), Some(phi2p)) = (r1.theta, r2.theta, r1.phi_lab, r2.phi_lab) else {
        return Err(Rejection::Multiplicity);
    };
    if !cuts.in_theta_window(theta1) || !cuts.in_theta_window(theta2p) {
        return Err(Rejection::ThetaWindow);
    }
    let volume_ok = |v: VolumeId| v == VolumeId::Sphere || v.is_dm();
    if !volume_ok(r1.volume) || !volume_ok(r2.volume) {
        return Err(Rejection::Multiplicity);
    }
    Ok(SelectedEvent {
        event_index: ev.event_index,
        theta_ics,
        theta1,
        theta2p,
        phi1,
        phi2p,
        dphi: wrap_angle(phi1 - phi2p),
        weight: ev.weight,
        label: None,
        photon_frame: ev.photon_frame_pair(),
    })
}

/// Reflects an azimuth difference into [0, π/2] using the period-π, even symmetry.
pub fn fold_dphi(dphi: f64) -> f64 {
    let a = wrap_angle(dphi).abs();
    if a > PI / 2.0 {
        PI - a
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digitizer::DETECTOR_SCHEMA_VERSION;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn hit(volume: VolumeId, row: u16, col: u16, e: f64) -> PixelHit {
        PixelHit { volume, row, col, x: (col as f64 - 7.5) * 3.0, y: (row as f64 - 7.5) * 3.0, energy_kev: e }
    }

    fn event(scd: Option<f64>, dm0: Vec<PixelHit>, dm1: Vec<PixelHit>) -> DetectorEvent {
        DetectorEvent { schema_version: DETECTOR_SCHEMA_VERSION, event_index: 0, weight: 1.0, scd_kev: scd, dm0, dm1, truth: None }
    }

    fn loose() -> SelectionCuts {
        SelectionCuts { theta_window_deg: [0.0, 180.0], require_scd: false, ..SelectionCuts::default() }
    }

    fn electron_rule() -> SelectionCuts {
        SelectionCuts { cs_energy: CsEnergy::Electron, ..loose() }
    }

    #[test]
    fn azimuth_quadrants() {
        let at = |x: f64, y: f64| PixelHit { volume: VolumeId::Dm0, row: (y / 3.0 + 8.0) as u16, col: (x / 3.0 + 8.0) as u16, x, y, energy_kev: 1.0 };
        let o = at(0.0, 0.0);
        assert!((azimuth_from_pixels(&o, &at(3.0, 3.0)).unwrap() - FRAC_PI_4).abs() < 1e-12);
        assert!((azimuth_from_pixels(&o, &at(-3.0, 0.0)).unwrap().abs() - PI).abs() < 1e-12);
        let a = azimuth_from_pixels(&o, &at(3.0, 6.0)).unwrap();
        let b = azimuth_from_pixels(&at(3.0, 6.0), &o).unwrap();
        assert!(wrap_angle(b - a - PI).abs() < 1e-12);
        assert!(azimuth_from_pixels(&o, &o).is_err());
    }

    #[test]
    fn larger_deposit_is_compton_site() {
        let dm0 = vec![hit(VolumeId::Dm0, 5, 5, 211.0), hit(VolumeId::Dm0, 0, 0, 300.0)];
        let dm1 = vec![hit(VolumeId::Dm1, 0, 0, 300.0), hit(VolumeId::Dm1, 5, 5, 211.0)];
        let s = reconstruct(&event(None, dm0.clone(), dm1.clone()), &electron_rule(), &ResolutionConfig::default()).unwrap();
        let expect = scatter_angle_from_deposit(300.0, 511.0).unwrap();
        assert!((s.theta1 - expect).abs() < 1e-12 && (s.theta2p - expect).abs() < 1e-12);
        assert!((s.phi1 - FRAC_PI_4).abs() < 1e-12);
        assert_eq!(s.theta_ics, 0.0);
        // default reading: 300 keV is the scattered photon's energy
        let s = reconstruct(&event(None, dm0, dm1), &loose(), &ResolutionConfig::default()).unwrap();
        let kp = crate::kinematics::compton_scattered_energy(511.0, s.theta1).unwrap();
        assert!((kp - 300.0).abs() < 1e-9);
        assert!((s.phi1 - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn adjacent_pixels_rejected() {
        let dm0 = vec![hit(VolumeId::Dm0, 3, 3, 300.0), hit(VolumeId::Dm0, 3, 4, 211.0)];
        let dm1 = vec![hit(VolumeId::Dm1, 0, 0, 300.0), hit(VolumeId::Dm1, 5, 5, 211.0)];
        assert_eq!(reconstruct(&event(None, dm0, dm1), &loose(), &ResolutionConfig::default()), Err(Rejection::Adjacency));
    }

    #[test]
    fn theta_ics_from_scd() {
        let th = 40f64.to_radians();
        let e_scd = 511.0 - crate::kinematics::compton_scattered_energy(511.0, th).unwrap();
        let k2 = 511.0 - e_scd;
        // γ2′ and γ1 both scatter at 82°
        let dep = |k: f64| k - crate::kinematics::compton_scattered_energy(k, 82f64.to_radians()).unwrap();
        let dm0 = vec![hit(VolumeId::Dm0, 2, 2, dep(k2)), hit(VolumeId::Dm0, 2, 9, k2 - dep(k2))];
        let dm1 = vec![hit(VolumeId::Dm1, 4, 4, dep(511.0)), hit(VolumeId::Dm1, 9, 4, 511.0 - dep(511.0))];
        let s = reconstruct(&event(Some(e_scd), dm0, dm1), &SelectionCuts::default(), &ResolutionConfig::default()).unwrap();
        assert!((s.theta_ics - th).abs() < 1e-9);
        assert!((s.theta2p.to_degrees() - 82.0).abs() < 1e-9);
        // the larger deposit is the absorption pixel, so both azimuths point back along the track
        assert!((s.phi1 + FRAC_PI_2).abs() < 1e-12 && (s.phi2p.abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn rejection_reasons() {
        let cuts = SelectionCuts::default();
        let res = ResolutionConfig::default();
        let good0 = vec![hit(VolumeId::Dm0, 0, 0, 300.0), hit(VolumeId::Dm0, 5, 5, 211.0)];
        let good1 = good0.iter().map(|h| PixelHit { volume: VolumeId::Dm1, ..*h }).collect::<Vec<_>>();
        assert_eq!(reconstruct(&event(None, good0.clone(), good1.clone()), &cuts, &res), Err(Rejection::NoScd));
        assert_eq!(reconstruct(&event(Some(10.0), good0[..1].to_vec(), good1.clone()), &cuts, &res), Err(Rejection::Multiplicity));
        assert_eq!(reconstruct(&event(Some(400.0), good0.clone(), good1.clone()), &cuts, &res), Err(Rejection::ComptonEdge));
        let far = vec![hit(VolumeId::Dm1, 0, 0, 200.0), hit(VolumeId::Dm1, 5, 5, 100.0)];
        assert_eq!(reconstruct(&event(None, good0.clone(), far), &loose(), &res), Err(Rejection::SdhWindow));
        let fwd = vec![hit(VolumeId::Dm1, 0, 0, 450.0), hit(VolumeId::Dm1, 5, 5, 61.0)];
        // read as k′ = 450 keV this is a forward scatter outside the window
        let r = reconstruct(&event(None, good0.clone(), fwd.clone()), &SelectionCuts { require_scd: false, ..cuts.clone() }, &res);
        assert_eq!(r, Err(Rejection::ThetaWindow));
        let r = reconstruct(&event(None, good0, fwd), &electron_rule(), &res);
        assert_eq!(r, Err(Rejection::ComptonEdge));
    }

    #[test]
    fn fold_symmetry() {
        for d in [0.3, -0.3, PI - 0.3, -PI + 0.3] {
            assert!((fold_dphi(d) - 0.3).abs() < 1e-12);
        }
    }
}
