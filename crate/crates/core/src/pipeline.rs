//! Run orchestration: chunked simulation, stream I/O and analysis.
//!
//! Events are grouped into fixed-size chunks whose boundaries do not depend on the worker
//! count. Chunks may run in parallel but are always merged in index order, so every output
//! is identical for 1 or N workers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::analysis::{reconstruct, reconstruct_perfect, Accumulator, Rejection, SelectedEvent};
use crate::config::ResolvedRun;
use crate::digitizer::{digitize, DetectorEvent, DETECTOR_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::rng::{digitizer_rng, event_rng};
use crate::transport::{
    classify_truth, simulate_event, simulate_pair_dcs, InteractionKind, TruthEvent, TruthLabel, TRUTH_SCHEMA_VERSION,
};

/// Events per chunk; fixed so that chunk boundaries never depend on the worker count.
pub const CHUNK_EVENTS: u64 = 1024;

pub const TRUTH_FILE: &str = "truth.ndjson";
pub const EVENTS_FILE: &str = "events.ndjson";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Counters gathered during simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_events: u64,
    pub sum_weights: f64,
    pub escaped: [u64; 2],
    pub degenerate_frames: u64,
}

impl RunStats {
    fn add(&mut self, ev: &TruthEvent) {
        self.n_events += 1;
        self.sum_weights += ev.weight;
        for i in 0..2 {
            self.escaped[i] += ev.escaped[i] as u64;
        }
        self.degenerate_frames += ev.degenerate_frames as u64;
    }

    fn merge(&mut self, o: &RunStats) {
        self.n_events += o.n_events;
        self.sum_weights += o.sum_weights;
        for i in 0..2 {
            self.escaped[i] += o.escaped[i];
        }
        self.degenerate_frames += o.degenerate_frames;
    }
}

/// Simulates event `index`, digitizing it unless the run is analyzed at truth level.
pub fn simulate_index(run: &ResolvedRun, index: u64) -> Result<(TruthEvent, Option<DetectorEvent>)> {
    let cfg = &run.config;
    let mut rng = event_rng(cfg.seed, index);
    let mut truth = match cfg.options.direct_dcs_window_deg {
        Some([lo, hi]) => simulate_pair_dcs(cfg.mode, [lo.to_radians(), hi.to_radians()], &mut rng)?,
        None => simulate_event(cfg.mode, &run.geometry, &run.materials, &cfg.options.transport(), &mut rng)?,
    };
    truth.event_index = index;
    truth.seed = cfg.seed;
    let detector = (!run.truth_level).then(|| {
        digitize(&truth, &run.geometry, &cfg.resolution, &mut digitizer_rng(cfg.seed, index))
    });
    Ok((truth, detector))
}

/// Truth label for perfect-detector analysis: an intermediate scatter on γ2 makes it a TCS event.
fn truth_level_label(run: &ResolvedRun, ev: &TruthEvent) -> TruthLabel {
    if !run.geometry.perfect_sphere && run.config.options.direct_dcs_window_deg.is_none() {
        return classify_truth(ev);
    }
    let Some(site) = ev.analysis_site(crate::kinematics::Arm::Gamma2) else { return TruthLabel::Other };
    let before = ev
        .records_of(crate::kinematics::Arm::Gamma2)
        .filter(|r| r.kind == InteractionKind::Compton && r.sequence < site.sequence)
        .count();
    match before {
        0 => TruthLabel::PureDcs,
        1 => TruthLabel::PureTcs,
        _ => TruthLabel::MsBackground,
    }
}

pub fn select_truth(run: &ResolvedRun, ev: &TruthEvent) -> std::result::Result<SelectedEvent, Rejection> {
    reconstruct_perfect(ev, &run.config.cuts).map(|mut s| {
        s.label = Some(truth_level_label(run, ev));
        s
    })
}

pub fn select_detector(run: &ResolvedRun, ev: &DetectorEvent) -> std::result::Result<SelectedEvent, Rejection> {
    reconstruct(ev, &run.config.cuts, &run.config.resolution)
}

fn new_accumulator(run: &ResolvedRun) -> Accumulator {
    let o = &run.config.options;
    Accumulator::new(&run.config.cuts, &o.series_specs(), o.mixing)
}

/// Output of one chunk, merged in chunk order.
struct ChunkOut {
    acc: Option<Accumulator>,
    stats: RunStats,
    truth: Vec<u8>,
    events: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct ChunkWants {
    analyze: bool,
    truth: bool,
    events: bool,
}

fn run_chunk(run: &ResolvedRun, range: Range<u64>, wants: ChunkWants) -> Result<ChunkOut> {
    let mut out = ChunkOut {
        acc: wants.analyze.then(|| new_accumulator(run)),
        stats: RunStats::default(),
        truth: Vec::new(),
        events: Vec::new(),
    };
    for index in range {
        let (truth, det) = simulate_index(run, index)?;
        out.stats.add(&truth);
        if let Some(acc) = &mut out.acc {
            acc.add(match &det {
                Some(d) => select_detector(run, d),
                None => select_truth(run, &truth),
            });
        }
        if wants.truth {
            write_line(&mut out.truth, &truth)?;
        }
        if let (true, Some(d)) = (wants.events, &det) {
            write_line(&mut out.events, d)?;
        }
    }
    Ok(out)
}

fn write_line<T: Serialize>(buf: &mut Vec<u8>, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *buf, v).map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(())
}

fn chunk_ranges(n_events: u64) -> Vec<Range<u64>> {
    (0..n_events.div_ceil(CHUNK_EVENTS))
        .map(|c| c * CHUNK_EVENTS..((c + 1) * CHUNK_EVENTS).min(n_events))
        .collect()
}

/// Runs `f` over every chunk and hands results to `sink` in chunk order.
fn for_each_chunk<T, F, S>(n_events: u64, workers: usize, f: F, mut sink: S) -> Result<()>
where
    T: Send,
    F: Fn(Range<u64>) -> Result<T> + Sync,
    S: FnMut(T) -> Result<()>,
{
    let ranges = chunk_ranges(n_events);
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        // bounded batches keep at most a few chunks per worker in memory
        for batch in ranges.chunks(4 * workers) {
            let results: Vec<Result<T>> = pool.install(|| batch.par_iter().map(|r| f(r.clone())).collect());
            for r in results {
                sink(r?)?;
            }
        }
        return Ok(());
    }
    let _ = workers;
    for r in ranges {
        sink(f(r)?)?;
    }
    Ok(())
}

/// Simulation and analysis fully in memory; nothing is written.
pub fn simulate_and_accumulate(run: &ResolvedRun) -> Result<(Accumulator, RunStats)> {
    let wants = ChunkWants { analyze: true, truth: false, events: false };
    let mut acc = new_accumulator(run);
    let mut stats = RunStats::default();
    for_each_chunk(
        run.config.n_events,
        run.config.workers,
        |r| run_chunk(run, r, wants),
        |c| {
            stats.merge(&c.stats);
            acc.merge(c.acc.expect("analysis requested"))
        },
    )?;
    Ok((acc, stats))
}

/// Streams of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_events: u64,
    pub workers: usize,
    pub mode: crate::pair::PairMode,
    pub truth_level: bool,
    pub files: Vec<String>,
    pub stats: RunStats,
    pub config: crate::config::RunConfig,
}

pub fn generator() -> String {
    format!("tcs-core {}", env!("CARGO_PKG_VERSION"))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Line writer that is optionally gzip-compressed.
pub struct StreamWriter {
    path: PathBuf,
    inner: Box<dyn Write>,
}

impl StreamWriter {
    pub fn create(path: PathBuf, compress: bool) -> Result<Self> {
        let f = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        let inner: Box<dyn Write> = if compress { Box::new(GzEncoder::new(f, Compression::default())) } else { Box::new(f) };
        Ok(StreamWriter { path, inner })
    }

    pub fn write_all(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        drop(self.inner);
        Ok(self.path)
    }
}

fn stream_name(base: &str, compress: bool) -> String {
    if compress {
        format!("{base}.gz")
    } else {
        base.to_string()
    }
}

/// Result of [`run_simulate`].
#[derive(Debug)]
pub struct SimulateOutput {
    pub provenance: Provenance,
    pub files: Vec<PathBuf>,
    pub accumulator: Option<Accumulator>,
}

/// Simulates, writes the truth and digitized streams plus provenance, and optionally accumulates
/// the analysis in the same pass.
pub fn run_simulate(run: &ResolvedRun, out_dir: &Path, analyze: bool) -> Result<SimulateOutput> {
    let cfg = &run.config;
    create_dir(out_dir)?;
    let compress = cfg.options.compress;
    let wants = ChunkWants { analyze, truth: cfg.options.write_truth, events: !run.truth_level };
    let mut truth_w = wants
        .truth
        .then(|| StreamWriter::create(out_dir.join(stream_name(TRUTH_FILE, compress)), compress))
        .transpose()?;
    let mut events_w = wants
        .events
        .then(|| StreamWriter::create(out_dir.join(stream_name(EVENTS_FILE, compress)), compress))
        .transpose()?;
    let mut acc = analyze.then(|| new_accumulator(run));
    let mut stats = RunStats::default();
    for_each_chunk(
        cfg.n_events,
        cfg.workers,
        |r| run_chunk(run, r, wants),
        |c| {
            stats.merge(&c.stats);
            if let Some(w) = &mut truth_w {
                w.write_all(&c.truth)?;
            }
            if let Some(w) = &mut events_w {
                w.write_all(&c.events)?;
            }
            if let (Some(a), Some(b)) = (&mut acc, c.acc) {
                a.merge(b)?;
            }
            Ok(())
        },
    )?;
    let mut files = Vec::new();
    for w in [truth_w, events_w].into_iter().flatten() {
        files.push(w.finish()?);
    }
    let provenance = Provenance {
        generator: generator(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        n_events: cfg.n_events,
        workers: cfg.workers,
        mode: cfg.mode,
        truth_level: run.truth_level,
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        stats,
        config: cfg.clone(),
    };
    let ppath = out_dir.join(PROVENANCE_FILE);
    write_json(&ppath, &provenance)?;
    files.push(ppath);
    Ok(SimulateOutput { provenance, files, accumulator: acc })
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Opens a plain or gzip-compressed stream, detected by its magic bytes.
pub fn open_stream(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = f.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(if n == 2 && magic == [0x1f, 0x8b] {
        Box::new(BufReader::new(MultiGzDecoder::new(f)))
    } else {
        Box::new(BufReader::new(f))
    })
}

/// Kind of event stream found in a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Truth,
    Detector,
}

fn detect_kind(line: &str, lineno: usize) -> Result<StreamKind> {
    let v: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
    let kind = if v.get("records").is_some() {
        StreamKind::Truth
    } else if v.get("dm0").is_some() {
        StreamKind::Detector
    } else {
        return Err(Error::Schema(format!("line {lineno}: neither a truth nor a detector event")));
    };
    let expected = match kind {
        StreamKind::Truth => TRUTH_SCHEMA_VERSION,
        StreamKind::Detector => DETECTOR_SCHEMA_VERSION,
    };
    match v.get("schema_version").and_then(|s| s.as_u64()) {
        Some(found) if found == expected as u64 => Ok(kind),
        Some(found) => Err(Error::Schema(format!(
            "{} stream has schema_version {found}, this build reads schema_version {expected}",
            match kind {
                StreamKind::Truth => "truth",
                StreamKind::Detector => "detector",
            }
        ))),
        None => Err(Error::Schema(format!("line {lineno}: missing schema_version"))),
    }
}

/// Reads a truth or detector stream and accumulates the analysis.
///
/// Truth streams of apparatus runs are digitized on the fly with each event's own stream, so
/// they give the same result as the digitized stream written alongside them.
pub fn analyze_stream(run: &ResolvedRun, path: &Path) -> Result<(Accumulator, StreamKind)> {
    let reader = open_stream(path)?;
    let mut acc = new_accumulator(run);
    let mut kind = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let k = match kind {
            Some(k) => k,
            None => *kind.insert(detect_kind(&line, i + 1)?),
        };
        let parse_err = |e: serde_json::Error| Error::Parse { line: i + 1, msg: e.to_string() };
        let sel = match k {
            StreamKind::Detector => {
                if run.truth_level {
                    return Err(Error::config(
                        "options.reconstruction",
                        "a detector stream cannot be analyzed at truth level",
                    ));
                }
                let ev: DetectorEvent = serde_json::from_str(&line).map_err(parse_err)?;
                check_version(ev.schema_version, DETECTOR_SCHEMA_VERSION, i + 1)?;
                select_detector(run, &ev)
            }
            StreamKind::Truth => {
                let ev: TruthEvent = serde_json::from_str(&line).map_err(parse_err)?;
                check_version(ev.schema_version, TRUTH_SCHEMA_VERSION, i + 1)?;
                if run.truth_level {
                    select_truth(run, &ev)
                } else {
                    let mut rng = digitizer_rng(ev.seed, ev.event_index);
                    select_detector(run, &digitize(&ev, &run.geometry, &run.config.resolution, &mut rng))
                }
            }
        };
        acc.add(sel);
    }
    let kind = kind.ok_or_else(|| Error::Schema(format!("{} contains no events", path.display())))?;
    Ok((acc, kind))
}

fn check_version(found: u32, expected: u32, line: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Schema(format!("line {line}: schema_version {found}, expected {expected}")));
    }
    Ok(())
}
