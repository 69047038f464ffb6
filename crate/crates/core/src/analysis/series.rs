//! Enhancement-ratio series per θ_ICS bin, the mergeable accumulator behind them,
//! and the multiple-scattering deconvolution.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{enhancement_ratio, fit_modulation, FitBasis, FitResult};
use super::hist::Hist2D;
use super::mixing::{correct_slice, mix_events, DEFAULT_MIXING_PASSES};
use super::select::{Rejection, SelectedEvent, SelectionCuts};
use crate::error::{Error, Result};
use crate::kinematics::wrap_angle;
use crate::pair::PairMode;
use crate::transport::TruthLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Photon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sample {
    All,
    Tcs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub frame: Frame,
    pub sample: Sample,
}

impl SeriesSpec {
    pub const LAB_ALL: SeriesSpec = SeriesSpec { frame: Frame::Lab, sample: Sample::All };

    pub fn tag(&self) -> String {
        format!(
            "{}_{}",
            match self.frame {
                Frame::Lab => "lab",
                Frame::Photon => "photon",
            },
            match self.sample {
                Sample::All => "all",
                Sample::Tcs => "tcs",
            }
        )
    }

    fn azimuths(&self, ev: &SelectedEvent) -> Option<(f64, f64)> {
        match self.frame {
            Frame::Lab => Some((ev.phi1, ev.phi2p)),
            Frame::Photon => ev.photon_frame,
        }
    }

    fn accepts(&self, ev: &SelectedEvent) -> bool {
        self.azimuths(ev).is_some() && (self.sample == Sample::All || ev.label == Some(TruthLabel::PureTcs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    pub mixing: bool,
    pub mixing_passes: usize,
    pub fit_basis: FitBasis,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { mixing: true, mixing_passes: DEFAULT_MIXING_PASSES, fit_basis: FitBasis::Center }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RPoint {
    pub bin: usize,
    pub theta_ics_lo_deg: f64,
    pub theta_ics_hi_deg: f64,
    pub r: f64,
    pub sigma_r: f64,
    pub fit: FitResult,
    pub n_events: u64,
    pub sum_weights: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_tcs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_f_tcs: Option<f64>,
}

impl RPoint {
    pub fn center_deg(&self) -> f64 {
        0.5 * (self.theta_ics_lo_deg + self.theta_ics_hi_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSeries {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PairMode>,
    pub frame: Frame,
    pub sample: Sample,
    pub corrected: bool,
    pub fit_basis: FitBasis,
    pub theta_ics_edges_deg: Vec<f64>,
    pub points: Vec<RPoint>,
    /// Bins without a usable fit, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped_bins: BTreeMap<usize, String>,
}

impl RSeries {
    pub fn point(&self, bin: usize) -> Option<&RPoint> {
        self.points.iter().find(|p| p.bin == bin)
    }
}

/// Histograms for every requested series plus the truth-fraction sums; partials merge by addition.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub cuts: SelectionCuts,
    pub specs: Vec<SeriesSpec>,
    pub raw: Vec<Hist2D>,
    pub n_events: Vec<Vec<u64>>,
    /// Per θ_ICS bin: (Σw, Σw², Σw over pure TCS, labelled count).
    pub tcs_sums: Vec<[f64; 4]>,
    pub events: Option<Vec<SelectedEvent>>,
    pub rejections: BTreeMap<Rejection, u64>,
    pub n_input: u64,
}

impl Accumulator {
    pub fn new(cuts: &SelectionCuts, specs: &[SeriesSpec], keep_events: bool) -> Self {
        let proto = Hist2D::new(cuts.theta_ics_edges_rad(), cuts.dphi_bins);
        let nb = proto.slices.len();
        Accumulator {
            cuts: cuts.clone(),
            specs: specs.to_vec(),
            raw: vec![proto; specs.len()],
            n_events: vec![vec![0; nb]; specs.len()],
            tcs_sums: vec![[0.0; 4]; nb],
            events: keep_events.then(Vec::new),
            rejections: BTreeMap::new(),
            n_input: 0,
        }
    }

    pub fn add(&mut self, result: std::result::Result<SelectedEvent, Rejection>) {
        self.n_input += 1;
        match result {
            Ok(ev) => self.add_selected(ev),
            Err(r) => *self.rejections.entry(r).or_insert(0) += 1,
        }
    }

    fn add_selected(&mut self, ev: SelectedEvent) {
        let Some(bin) = self.raw[0].x_bin(ev.theta_ics) else { return };
        for (k, spec) in self.specs.iter().enumerate() {
            if !spec.accepts(&ev) {
                continue;
            }
            let (p1, p2) = spec.azimuths(&ev).expect("accepted events carry azimuths");
            self.raw[k].fill(ev.theta_ics, wrap_angle(p1 - p2), ev.weight);
            self.n_events[k][bin] += 1;
        }
        if let Some(label) = ev.label {
            let s = &mut self.tcs_sums[bin];
            s[0] += ev.weight;
            s[1] += ev.weight * ev.weight;
            if label == TruthLabel::PureTcs {
                s[2] += ev.weight;
            }
            s[3] += 1.0;
        }
        if let Some(events) = &mut self.events {
            events.push(ev);
        }
    }

    pub fn merge(&mut self, other: Accumulator) -> Result<()> {
        if self.specs != other.specs || self.cuts != other.cuts {
            return Err(Error::Contract("accumulators with different configuration".into()));
        }
        for (a, b) in self.raw.iter_mut().zip(&other.raw) {
            a.merge(b)?;
        }
        for (a, b) in self.n_events.iter_mut().zip(&other.n_events) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.tcs_sums.iter_mut().zip(&other.tcs_sums) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        if let (Some(a), Some(b)) = (&mut self.events, other.events) {
            a.extend(b);
        }
        for (r, n) in other.rejections {
            *self.rejections.entry(r).or_insert(0) += n;
        }
        self.n_input += other.n_input;
        Ok(())
    }

    pub fn selected(&self) -> u64 {
        self.n_input - self.rejections.values().sum::<u64>()
    }

    fn tcs_fraction(&self, bin: usize) -> (Option<f64>, Option<f64>) {
        let [w, w2, t, n] = self.tcs_sums[bin];
        if n == 0.0 || w <= 0.0 {
            return (None, None);
        }
        let f = t / w;
        (Some(f), Some((f * (1.0 - f) * w2).max(0.0).sqrt() / w))
    }

    /// Histogram that is fitted for series `k`: acceptance-corrected when mixing is on.
    ///
    /// Also returns the θ_ICS bins that cannot be corrected, with the reason.
    pub fn fit_histogram(&self, k: usize, opts: &AnalysisOptions, seed: u64) -> Result<(Hist2D, BTreeMap<usize, String>)> {
        let mut unusable = BTreeMap::new();
        if !opts.mixing {
            return Ok((self.raw[k].clone(), unusable));
        }
        let events = self
            .events
            .as_ref()
            .ok_or_else(|| Error::Contract("mixing requires retained events".into()))?;
        let spec = self.specs[k];
        let chosen: Vec<SelectedEvent> = events.iter().filter(|e| spec.accepts(e)).copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x6d69_78 + k as u64);
        let mixed = mix_events(
            &chosen,
            &self.raw[k].x_edges,
            self.cuts.dphi_bins,
            opts.mixing_passes,
            spec.frame,
            &mut rng,
        );
        let mut corrected = self.raw[k].clone();
        for (b, (r, m)) in self.raw[k].slices.iter().zip(&mixed.hist.slices).enumerate() {
            if mixed.insufficient.contains(&b) {
                unusable.insert(b, "insufficient statistics for mixing".to_string());
                continue;
            }
            match correct_slice(r, m) {
                Ok(c) => corrected.slices[b] = c,
                Err(bins) => {
                    unusable.insert(b, format!("mixed histogram empty in Δφ bins {bins:?}"));
                }
            }
        }
        Ok((corrected, unusable))
    }

    pub fn finish(&self, mode: Option<PairMode>, opts: &AnalysisOptions, seed: u64) -> Result<Vec<RSeries>> {
        Ok(self.finish_with_histograms(mode, opts, seed)?.into_iter().map(|(s, _)| s).collect())
    }

    /// Series together with the histogram each one was fitted on.
    pub fn finish_with_histograms(
        &self,
        mode: Option<PairMode>,
        opts: &AnalysisOptions,
        seed: u64,
    ) -> Result<Vec<(RSeries, Hist2D)>> {
        (0..self.specs.len()).map(|k| self.finish_one(k, mode, opts, seed)).collect()
    }

    fn finish_one(&self, k: usize, mode: Option<PairMode>, opts: &AnalysisOptions, seed: u64) -> Result<(RSeries, Hist2D)> {
        let spec = self.specs[k];
        let (hist, unusable) = self.fit_histogram(k, opts, seed)?;
        let edges = &self.cuts.theta_ics_edges_deg;
        let mut points = Vec::new();
        let mut skipped = BTreeMap::new();
        for (bin, slice) in hist.slices.iter().enumerate() {
            if let Some(why) = unusable.get(&bin) {
                skipped.insert(bin, why.clone());
                continue;
            }
            if self.raw[k].slices[bin].total() <= 0.0 {
                continue;
            }
            let fit = match fit_modulation(slice, opts.fit_basis) {
                Ok(f) => f,
                Err(e) => {
                    skipped.insert(bin, e.to_string());
                    continue;
                }
            };
            let (r, sigma_r) = match enhancement_ratio(&fit) {
                Ok(v) => v,
                Err(e) => {
                    skipped.insert(bin, e.to_string());
                    continue;
                }
            };
            let (f_tcs, sigma_f_tcs) = self.tcs_fraction(bin);
            points.push(RPoint {
                bin,
                theta_ics_lo_deg: edges[bin],
                theta_ics_hi_deg: edges[bin + 1],
                r,
                sigma_r,
                fit,
                n_events: self.n_events[k][bin],
                sum_weights: self.raw[k].slices[bin].total(),
                f_tcs,
                sigma_f_tcs,
            });
        }
        let series = RSeries {
            mode,
            frame: spec.frame,
            sample: spec.sample,
            corrected: opts.mixing,
            fit_basis: opts.fit_basis,
            theta_ics_edges_deg: edges.clone(),
            points,
            skipped_bins: skipped,
        };
        Ok((series, hist))
    }
}

/// Builds, optionally corrects and fits one series from selected events.
pub fn extract_r_series(
    events: &[SelectedEvent],
    cuts: &SelectionCuts,
    spec: SeriesSpec,
    opts: &AnalysisOptions,
    seed: u64,
) -> Result<RSeries> {
    let mut acc = Accumulator::new(cuts, &[spec], opts.mixing);
    for ev in events {
        acc.add(Ok(*ev));
    }
    Ok(acc.finish(None, opts, seed)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub const fn exact(value: f64) -> Self {
        Measured { value, sigma: 0.0 }
    }
}

/// R_TCS = (R_expt^all − R_sim^all)/f_sim^TCS + R_sim^TCS with independent error propagation.
pub fn deconvolve_tcs(r_expt_all: Measured, r_sim_all: Measured, r_sim_tcs: Measured, f_sim_tcs: Measured) -> Result<Measured> {
    let f = f_sim_tcs.value;
    if !(f > 0.0) {
        return Err(Error::domain(format!("TCS fraction must be positive, got {f}")));
    }
    let diff = r_expt_all.value - r_sim_all.value;
    let value = diff / f + r_sim_tcs.value;
    let var = (r_expt_all.sigma / f).powi(2)
        + (r_sim_all.sigma / f).powi(2)
        + (diff * f_sim_tcs.sigma / (f * f)).powi(2)
        + r_sim_tcs.sigma.powi(2);
    Ok(Measured { value, sigma: var.sqrt() })
}

/// Bin-wise deconvolution; the TCS fraction comes from the simulated "all" series.
pub fn deconvolve_series(expt: &RSeries, sim_all: &RSeries, sim_tcs: &RSeries) -> Result<RSeries> {
    for (name, s) in [("sim_all", sim_all), ("sim_tcs", sim_tcs)] {
        if s.theta_ics_edges_deg != expt.theta_ics_edges_deg {
            return Err(Error::Schema(format!("θ_ICS binning of {name} does not match the experiment series")));
        }
    }
    let mut points = Vec::new();
    let mut skipped = BTreeMap::new();
    for p in &expt.points {
        let (Some(a), Some(t)) = (sim_all.point(p.bin), sim_tcs.point(p.bin)) else {
            skipped.insert(p.bin, "missing simulation point".to_string());
            continue;
        };
        let Some(f) = a.f_tcs else {
            skipped.insert(p.bin, "simulation series carries no TCS fraction".to_string());
            continue;
        };
        let m = |x: &RPoint| Measured { value: x.r, sigma: x.sigma_r };
        let f = Measured { value: f, sigma: a.sigma_f_tcs.unwrap_or(0.0) };
        match deconvolve_tcs(m(p), m(a), m(t), f) {
            Ok(d) => points.push(RPoint { r: d.value, sigma_r: d.sigma, f_tcs: Some(f.value), sigma_f_tcs: Some(f.sigma), ..*p }),
            Err(e) => {
                skipped.insert(p.bin, e.to_string());
            }
        }
    }
    Ok(RSeries { sample: Sample::Tcs, points, skipped_bins: skipped, ..expt.clone() })
}
