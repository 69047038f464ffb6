//! Versioned analysis report and the artifacts written next to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{deconvolve_series, Accumulator, Frame, Hist2D, RSeries, Rejection, Sample};
use crate::config::ResolvedRun;
use crate::error::{Error, Result};
use crate::pair::PairMode;
use crate::pipeline::{generator, write_json};
use crate::plot;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Analysis,
    Deconvolution,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub n_input: u64,
    pub n_selected: u64,
    pub rejections: BTreeMap<Rejection, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub generator: String,
    /// Hash of the run configuration, or of the input reports for a deconvolution.
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PairMode>,
    pub counts: Counts,
    pub series: Vec<RSeries>,
}

impl Report {
    pub fn from_accumulator(run: &ResolvedRun, acc: &Accumulator) -> Result<(Self, Vec<Hist2D>)> {
        let cfg = &run.config;
        let fitted = acc.finish_with_histograms(Some(cfg.mode), &cfg.options.analysis(), cfg.seed)?;
        let (series, hists) = fitted.into_iter().unzip();
        let report = Report {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: ReportKind::Analysis,
            generator: generator(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            mode: Some(cfg.mode),
            counts: Counts { n_input: acc.n_input, n_selected: acc.selected(), rejections: acc.rejections.clone() },
            series,
        };
        Ok((report, hists))
    }

    pub fn series(&self, frame: Frame, sample: Sample) -> Option<&RSeries> {
        self.series.iter().find(|s| s.frame == frame && s.sample == sample)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Parses and checks the schema version before decoding the body.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(n) if n == REPORT_SCHEMA_VERSION as u64 => {}
            Some(n) => {
                return Err(Error::Schema(format!(
                    "report has schema_version {n}, this build reads schema_version {REPORT_SCHEMA_VERSION}"
                )))
            }
            None => return Err(Error::Schema("report has no schema_version".into())),
        }
        serde_json::from_value(v).map_err(|e| Error::Schema(format!("report does not match its schema: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn deg(rad: f64) -> f64 {
    (rad.to_degrees() * 1e9).round() / 1e9
}

/// Per-bin Δφ histogram as CSV, angles in degrees.
pub fn histogram_csv(h: &Hist2D) -> String {
    let mut out = String::from("theta_ics_lo,theta_ics_hi,dphi_lo,dphi_hi,count,err\n");
    for (b, slice) in h.slices.iter().enumerate() {
        let (xlo, xhi) = (deg(h.x_edges[b]), deg(h.x_edges[b + 1]));
        for i in 0..slice.len() {
            let (lo, hi) = (deg(slice.edges[i]), deg(slice.edges[i + 1]));
            let _ = writeln!(out, "{xlo},{xhi},{lo},{hi},{},{}", slice.counts[i], slice.sumw2[i].sqrt());
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes report.json, one CSV per series and the plots; returns the numeric artifacts.
///
/// Plot failures are reported on stderr and never fail the call.
pub fn write_analysis(out_dir: &Path, report: &Report, hists: &[Hist2D]) -> Result<Vec<PathBuf>> {
    crate::pipeline::create_dir(out_dir)?;
    let mut files = Vec::new();
    let rpath = out_dir.join(REPORT_FILE);
    write_text(&rpath, &report.to_json())?;
    files.push(rpath);
    for (s, h) in report.series.iter().zip(hists) {
        let tag = series_tag(s);
        let p = out_dir.join(format!("dphi_{tag}.csv"));
        write_text(&p, &histogram_csv(h))?;
        files.push(p);
    }
    if let Err(e) = write_plots(out_dir, report, hists) {
        eprintln!("warning: plots not written: {e}");
    }
    Ok(files)
}

fn series_tag(s: &RSeries) -> String {
    let frame = match s.frame {
        Frame::Lab => "lab",
        Frame::Photon => "photon",
    };
    let sample = match s.sample {
        Sample::All => "all",
        Sample::Tcs => "tcs",
    };
    format!("{frame}_{sample}")
}

fn write_plots(out_dir: &Path, report: &Report, hists: &[Hist2D]) -> Result<()> {
    let dir = out_dir.join("plots");
    crate::pipeline::create_dir(&dir)?;
    for (s, h) in report.series.iter().zip(hists) {
        let tag = series_tag(s);
        for p in &s.points {
            let svg = plot::dphi_svg(&h.slices[p.bin], Some(&p.fit), &format!("{tag}, θ_ICS {}–{}°", p.theta_ics_lo_deg, p.theta_ics_hi_deg));
            write_text(&dir.join(format!("dphi_{tag}_bin{}.svg", p.bin)), &svg)?;
        }
    }
    let labelled: Vec<(String, &RSeries)> = report
        .series
        .iter()
        .map(|s| (format!("{} {}", s.mode.map(|m| m.as_str()).unwrap_or("-"), series_tag(s)), s))
        .collect();
    write_text(&dir.join("r_vs_theta_ics.svg"), &plot::r_series_svg(&labelled, "R vs θ_ICS"))
}

/// Deconvolves the experiment's lab "all" series with a simulation's "all" and TCS series.
pub fn deconvolve_reports(expt: &Report, sim_all: &Report, sim_tcs: &Report) -> Result<Report> {
    let find = |r: &Report, sample: Sample, name: &str| {
        r.series(Frame::Lab, sample)
            .ok_or_else(|| Error::Schema(format!("{name} report has no lab-frame {sample:?} series")))
            .cloned()
    };
    let e = find(expt, Sample::All, "experiment")?;
    let a = find(sim_all, Sample::All, "sim-all")?;
    let t = find(sim_tcs, Sample::Tcs, "sim-tcs")?;
    let series = deconvolve_series(&e, &a, &t)?;
    let mut hasher_input = String::new();
    for r in [expt, sim_all, sim_tcs] {
        hasher_input.push_str(&r.config_hash);
    }
    use sha2::{Digest, Sha256};
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: ReportKind::Deconvolution,
        generator: generator(),
        config_hash: format!("{:x}", Sha256::digest(hasher_input.as_bytes())),
        seed: expt.seed,
        mode: expt.mode,
        counts: expt.counts.clone(),
        series: vec![series],
    })
}

/// Writes a deconvolved report and its plot.
pub fn write_deconvolution(out_dir: &Path, report: &Report) -> Result<PathBuf> {
    crate::pipeline::create_dir(out_dir)?;
    let p = out_dir.join("deconvolved.json");
    write_json(&p, report)?;
    let labelled: Vec<(String, &RSeries)> = report.series.iter().map(|s| ("deconvolved".to_string(), s)).collect();
    let svg = plot::r_series_svg(&labelled, "Deconvolved R vs θ_ICS");
    if let Err(e) = write_text(&out_dir.join("deconvolved.svg"), &svg) {
        eprintln!("warning: plot not written: {e}");
    }
    Ok(p)
}
