//! Truth interactions to detector observables.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, VolumeId};
use crate::kinematics::ELECTRON_MASS_KEV;
use crate::transport::{classify_truth, TruthEvent, TruthLabel};

pub const DETECTOR_SCHEMA_VERSION: u32 = 1;

/// FWHM → σ for a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_82;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionConfig {
    pub scd_fwhm_frac_at_511: f64,
    pub dm0_sdh_fwhm_frac: f64,
    pub dm1_sdh_fwhm_frac: f64,
    pub threshold_kev: f64,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig { scd_fwhm_frac_at_511: 0.122, dm0_sdh_fwhm_frac: 0.124, dm1_sdh_fwhm_frac: 0.143, threshold_kev: 7.0 }
    }
}

impl ResolutionConfig {
    pub fn ideal() -> Self {
        ResolutionConfig { scd_fwhm_frac_at_511: 0.0, dm0_sdh_fwhm_frac: 0.0, dm1_sdh_fwhm_frac: 0.0, threshold_kev: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("scd_fwhm_frac_at_511", self.scd_fwhm_frac_at_511),
            ("dm0_sdh_fwhm_frac", self.dm0_sdh_fwhm_frac),
            ("dm1_sdh_fwhm_frac", self.dm1_sdh_fwhm_frac),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::config(format!("resolution.{name}"), format!("must lie in [0, 1), got {f}")));
            }
        }
        if !(self.threshold_kev >= 0.0) {
            return Err(Error::config("resolution.threshold_kev", "must be non-negative"));
        }
        Ok(())
    }

    pub fn fraction(&self, volume: VolumeId) -> f64 {
        match volume {
            VolumeId::Scd => self.scd_fwhm_frac_at_511,
            VolumeId::Dm0 => self.dm0_sdh_fwhm_frac,
            VolumeId::Dm1 => self.dm1_sdh_fwhm_frac,
            VolumeId::Sphere => 0.0,
        }
    }
}

/// FWHM in keV at energy `e` for a resolution quoted at 511 keV, scaling as √E.
pub fn fwhm_at(frac_at_511: f64, e: f64) -> f64 {
    frac_at_511 * (ELECTRON_MASS_KEV * e.max(0.0)).sqrt()
}

pub fn smear_energy<R: Rng + ?Sized>(e: f64, frac_at_511: f64, rng: &mut R) -> f64 {
    let sigma = fwhm_at(frac_at_511, e) / FWHM_PER_SIGMA;
    if sigma <= 0.0 {
        return e;
    }
    let n = Normal::new(0.0, sigma).expect("finite positive sigma");
    (e + n.sample(rng)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelHit {
    pub volume: VolumeId,
    pub row: u16,
    pub col: u16,
    /// Pixel centre in the module frame, mm.
    pub x: f64,
    pub y: f64,
    pub energy_kev: f64,
}

impl PixelHit {
    pub fn pixel(&self) -> [u16; 2] {
        [self.row, self.col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub label: TruthLabel,
    /// Photon-frame azimuths (φ1, φ2′) arranged so that Δφ = φ1 − φ2′.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_frame: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvent {
    pub schema_version: u32,
    pub event_index: u64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scd_kev: Option<f64>,
    pub dm0: Vec<PixelHit>,
    pub dm1: Vec<PixelHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSummary>,
}

impl DetectorEvent {
    pub fn hits(&self, volume: VolumeId) -> &[PixelHit] {
        match volume {
            VolumeId::Dm0 => &self.dm0,
            VolumeId::Dm1 => &self.dm1,
            _ => &[],
        }
    }
}

/// Sums deposits per pixel, smears each sum, applies the threshold after smearing.
pub fn digitize<R: Rng + ?Sized>(ev: &TruthEvent, geometry: &Geometry, cfg: &ResolutionConfig, rng: &mut R) -> DetectorEvent {
    let mut sums: BTreeMap<(VolumeId, [u16; 2]), f64> = BTreeMap::new();
    for r in &ev.records {
        let key = match r.volume {
            VolumeId::Scd => (VolumeId::Scd, [0, 0]),
            v if v.is_dm() => match r.pixel {
                Some(p) => (v, p),
                None => continue,
            },
            _ => continue,
        };
        *sums.entry(key).or_insert(0.0) += r.energy_deposit;
    }
    let mut out = DetectorEvent {
        schema_version: DETECTOR_SCHEMA_VERSION,
        event_index: ev.event_index,
        weight: ev.weight,
        scd_kev: None,
        dm0: Vec::new(),
        dm1: Vec::new(),
        truth: Some(TruthSummary { label: classify_truth(ev), photon_frame: ev.photon_frame_pair() }),
    };
    for ((volume, pixel), e) in sums {
        let e = smear_energy(e, cfg.fraction(volume), rng);
        if e < cfg.threshold_kev || e <= 0.0 {
            continue;
        }
        if volume == VolumeId::Scd {
            out.scd_kev = Some(e);
            continue;
        }
        let Some(grid) = geometry.volume(volume).and_then(|v| v.grid) else { continue };
        let (x, y) = grid.center(pixel);
        let hit = PixelHit { volume, row: pixel[0], col: pixel[1], x, y, energy_kev: e };
        if volume == VolumeId::Dm0 {
            out.dm0.push(hit);
        } else {
            out.dm1.push(hit);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryConfig;
    use crate::kinematics::{Arm, Vec3};
    use crate::material::Materials;
    use crate::pair::PairMode;
    use crate::transport::{InteractionKind, InteractionRecord, TRUTH_SCHEMA_VERSION};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> Geometry {
        Geometry::build(&GeometryConfig::preset("back2back").unwrap(), &Materials::builtin()).unwrap()
    }

    fn truth(deposits: &[(VolumeId, [u16; 2], f64)]) -> TruthEvent {
        TruthEvent {
            schema_version: TRUTH_SCHEMA_VERSION,
            event_index: 3,
            seed: 0,
            mode: PairMode::Unpol,
            axis: Vec3::Z,
            weight: 1.0,
            initial_pol: [None, None],
            records: deposits
                .iter()
                .enumerate()
                .map(|(i, &(volume, pixel, e))| InteractionRecord {
                    sequence: i as u32,
                    arm: Arm::Gamma2,
                    prime: 0,
                    kind: InteractionKind::Compton,
                    volume,
                    pixel: volume.is_dm().then_some(pixel),
                    position: Vec3::ZERO,
                    energy_deposit: e,
                    k_in: 511.0,
                    dir_in: Vec3::Z,
                    theta: None,
                    phi_lab: None,
                    dir_out: None,
                    pol_frame: None,
                    role: None,
                    analysis_site: false,
                })
                .collect(),
            escaped: [false; 2],
            escaped_energy: [0.0; 2],
            degenerate_frames: 0,
        }
    }

    #[test]
    fn sigma_at_511() {
        assert!((fwhm_at(0.122, 511.0) / FWHM_PER_SIGMA - 26.47).abs() < 0.01);
    }

    #[test]
    fn zero_resolution_is_identity() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(smear_energy(123.4, 0.0, &mut r), 123.4);
    }

    #[test]
    fn pixel_merge_and_threshold() {
        let g = geometry();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let ev = truth(&[(VolumeId::Dm0, [4, 4], 200.0), (VolumeId::Dm0, [4, 4], 55.5), (VolumeId::Dm1, [1, 1], 5.0)]);
        let cfg = ResolutionConfig { threshold_kev: 7.0, ..ResolutionConfig::ideal() };
        let d = digitize(&ev, &g, &cfg, &mut r);
        assert_eq!(d.dm0.len(), 1);
        assert_eq!(d.dm0[0].energy_kev, 255.5);
        assert!(d.dm1.is_empty());
        let empty = digitize(&truth(&[]), &g, &cfg, &mut r);
        assert!(empty.dm0.is_empty() && empty.dm1.is_empty() && empty.scd_kev.is_none());
    }

    #[test]
    fn ideal_digitization_conserves_energy() {
        let g = geometry();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let ev = truth(&[(VolumeId::Scd, [0, 0], 40.0), (VolumeId::Dm0, [1, 2], 300.0), (VolumeId::Dm0, [3, 9], 171.0)]);
        let d = digitize(&ev, &g, &ResolutionConfig::ideal(), &mut r);
        let total: f64 = d.scd_kev.unwrap() + d.dm0.iter().map(|h| h.energy_kev).sum::<f64>();
        assert_eq!(total, 511.0);
    }
}
