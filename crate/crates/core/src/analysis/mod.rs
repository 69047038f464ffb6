//! Selection, histogramming, acceptance correction, fitting and R extraction.

pub mod fit;
pub mod hist;
pub mod mixing;
pub mod select;
pub mod series;

pub use fit::{enhancement_ratio, fit_modulation, FitBasis, FitResult};
pub use hist::{Hist1D, Hist2D};
pub use mixing::{acceptance_correct, mix_events, MixedHistogram};
pub use select::{azimuth_from_pixels, reconstruct, reconstruct_perfect, CsEnergy, Rejection, SelectedEvent, SelectionCuts};
pub use series::{
    deconvolve_series, deconvolve_tcs, extract_r_series, Accumulator, AnalysisOptions, Frame, Measured, RPoint, RSeries,
    Sample, SeriesSpec,
};
