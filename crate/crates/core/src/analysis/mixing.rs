//! Event mixing and the acceptance correction.

use rand::seq::SliceRandom;
use rand::Rng;

use super::hist::{Hist1D, Hist2D};
use super::select::SelectedEvent;
use super::series::Frame;
use crate::error::{Error, Result};
use crate::kinematics::wrap_angle;

pub const DEFAULT_MIXING_PASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedHistogram {
    pub hist: Hist2D,
    /// θ_ICS bins with fewer than two events to mix.
    pub insufficient: Vec<usize>,
}

fn azimuths(ev: &SelectedEvent, frame: Frame) -> Option<(f64, f64)> {
    match frame {
        Frame::Lab => Some((ev.phi1, ev.phi2p)),
        Frame::Photon => ev.photon_frame,
    }
}

/// Pairs φ1 of event i with φ2′ of event j = i + s (mod n) for s = 1..=passes within each θ_ICS bin.
///
/// Entries carry weight wᵢwⱼ; the variance is scaled by `passes` because every event is reused
/// that many times on each side.
pub fn mix_events<R: Rng + ?Sized>(
    events: &[SelectedEvent],
    x_edges: &[f64],
    dphi_bins: usize,
    passes: usize,
    frame: Frame,
    rng: &mut R,
) -> MixedHistogram {
    let mut hist = Hist2D::new(x_edges.to_vec(), dphi_bins);
    let mut groups: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); hist.slices.len()];
    for ev in events {
        if let (Some(b), Some((p1, p2))) = (hist.x_bin(ev.theta_ics), azimuths(ev, frame)) {
            groups[b].push((p1, p2, ev.weight));
        }
    }
    let mut insufficient = Vec::new();
    for (b, g) in groups.iter_mut().enumerate() {
        let n = g.len();
        if n < 2 {
            if n == 1 {
                insufficient.push(b);
            }
            continue;
        }
        g.shuffle(rng);
        let slice = &mut hist.slices[b];
        for s in 1..=passes {
            if s % n == 0 {
                continue;
            }
            for i in 0..n {
                let (p1, _, w1) = g[i];
                let (_, p2, w2) = g[(i + s) % n];
                let w = w1 * w2;
                slice.fill_with_variance(wrap_angle(p1 - p2), w, passes as f64 * w * w);
            }
        }
    }
    MixedHistogram { hist, insufficient }
}

/// N_corr = N_real / N_mixed · Σ N_mixed per θ_ICS slice.
pub fn acceptance_correct(real: &Hist2D, mixed: &Hist2D) -> Result<Hist2D> {
    if !real.same_binning(mixed) {
        return Err(Error::Contract("real and mixed histograms differ in binning".into()));
    }
    let mut out = real.clone();
    let mut bad = Vec::new();
    for (s, (r, m)) in real.slices.iter().zip(&mixed.slices).enumerate() {
        match correct_slice(r, m) {
            Ok(c) => out.slices[s] = c,
            Err(empty) => bad.extend(empty.into_iter().map(|i| format!("({s},{i})"))),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Fit(format!("empty mixed bins under populated real bins: {}", bad.join(" "))));
    }
    Ok(out)
}

/// Corrects one Δφ histogram; on failure returns the bins where the mixed histogram is empty
/// but the real one is not.
pub fn correct_slice(r: &Hist1D, m: &Hist1D) -> std::result::Result<Hist1D, Vec<usize>> {
    let total = m.total();
    let mut o = r.clone();
    let mut bad = Vec::new();
    for i in 0..r.len() {
        let (nr, nm) = (r.counts[i], m.counts[i]);
        if nm <= 0.0 {
            if nr > 0.0 {
                bad.push(i);
            }
            o.counts[i] = 0.0;
            o.sumw2[i] = 0.0;
            continue;
        }
        o.counts[i] = nr / nm * total;
        o.sumw2[i] = (total / nm).powi(2) * r.sumw2[i] + (nr * total / (nm * nm)).powi(2) * m.sumw2[i];
    }
    if bad.is_empty() {
        Ok(o)
    } else {
        Err(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ev(phi1: f64, phi2p: f64) -> SelectedEvent {
        SelectedEvent {
            event_index: 0,
            theta_ics: 0.1,
            theta1: 1.4,
            theta2p: 1.4,
            phi1,
            phi2p,
            dphi: wrap_angle(phi1 - phi2p),
            weight: 1.0,
            label: None,
            photon_frame: None,
        }
    }

    #[test]
    fn flat_correction_arithmetic() {
        let mut real = Hist2D::new(vec![0.0, 1.0], 24);
        let mut mixed = real.clone();
        for i in 0..24 {
            real.slices[0].counts[i] = 100.0;
            real.slices[0].sumw2[i] = 100.0;
            mixed.slices[0].counts[i] = 50.0;
            mixed.slices[0].sumw2[i] = 50.0;
        }
        let c = acceptance_correct(&real, &mixed).unwrap();
        assert!(c.slices[0].counts.iter().all(|&v| v == 2400.0));
    }

    #[test]
    fn empty_mixed_bin_is_error() {
        let mut real = Hist2D::new(vec![0.0, 1.0], 24);
        let mixed = real.clone();
        real.slices[0].counts[3] = 1.0;
        real.slices[0].sumw2[3] = 1.0;
        let err = acceptance_correct(&real, &mixed).unwrap_err();
        assert!(err.to_string().contains("(0,3)"));
    }

    #[test]
    fn degenerate_acceptance_stays_degenerate() {
        use rand::SeedableRng;
        let events: Vec<_> = (0..50).map(|_| ev(0.0, 0.0)).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = mix_events(&events, &[0.0, 1.0], 24, 10, Frame::Lab, &mut rng);
        let s = &m.hist.slices[0];
        let zero = s.find(0.0).unwrap();
        assert_eq!(s.counts[zero], s.total());
        assert_eq!(s.total(), 500.0);
    }

    #[test]
    fn singleton_bin_flagged() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = mix_events(&[ev(0.2, PI / 3.0)], &[0.0, 1.0], 24, 10, Frame::Lab, &mut rng);
        assert_eq!(m.insufficient, vec![0]);
        assert_eq!(m.hist.total(), 0.0);
    }
}
