//! Weighted least-squares fit of A cos 2Δφ + B and the enhancement ratio.

use serde::{Deserialize, Serialize};

use super::hist::Hist1D;
use crate::error::{Error, Result};

/// How the cos 2Δφ regressor is evaluated for each bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitBasis {
    /// cos 2Δφ at the bin centre.
    #[default]
    Center,
    /// cos 2Δφ averaged over the bin; unbiased for any bin width.
    BinAverage,
}

impl FitBasis {
    pub fn regressor(self, lo: f64, hi: f64) -> f64 {
        match self {
            FitBasis::Center => (lo + hi).cos(),
            FitBasis::BinAverage => ((2.0 * hi).sin() - (2.0 * lo).sin()) / (2.0 * (hi - lo)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    /// Covariance of (A, B).
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
    pub ndof: u32,
}

pub fn fit_modulation(h: &Hist1D, basis: FitBasis) -> Result<FitResult> {
    let rows: Vec<(f64, f64, f64)> = h
        .edges
        .windows(2)
        .zip(h.counts.iter().zip(&h.sumw2))
        .filter(|(_, (_, &v))| v > 0.0)
        .map(|(e, (&y, &v))| (basis.regressor(e[0], e[1]), y, 1.0 / v))
        .collect();
    if rows.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 populated bins, found {}", rows.len())));
    }
    let (mut sxx, mut sx, mut s1, mut sxy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, w) in &rows {
        sxx += w * x * x;
        sx += w * x;
        s1 += w;
        sxy += w * x * y;
        sy += w * y;
    }
    let det = sxx * s1 - sx * sx;
    if !(det > 1e-12 * sxx * s1) {
        return Err(Error::Fit("rank-deficient design matrix".into()));
    }
    let a = (s1 * sxy - sx * sy) / det;
    let b = (sxx * sy - sx * sxy) / det;
    let cov = [[s1 / det, -sx / det], [-sx / det, sxx / det]];
    let chi2 = rows.iter().map(|&(x, y, w)| w * (y - a * x - b).powi(2)).sum();
    Ok(FitResult { a, b, cov, chi2, ndof: rows.len() as u32 - 2 })
}

/// R = (B − A)/(B + A) with first-order error propagation.
pub fn enhancement_ratio(f: &FitResult) -> Result<(f64, f64)> {
    let s = f.a + f.b;
    if !(s > 0.0) {
        return Err(Error::Fit(format!("degenerate modulation: A + B = {s}")));
    }
    let r = (f.b - f.a) / s;
    let da = -2.0 * f.b / (s * s);
    let db = 2.0 * f.a / (s * s);
    let var = da * da * f.cov[0][0] + db * db * f.cov[1][1] + 2.0 * da * db * f.cov[0][1];
    Ok((r, var.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(a: f64, b: f64, basis: FitBasis) -> Hist1D {
        let mut h = Hist1D::dphi(24);
        for i in 0..24 {
            let (lo, hi) = (h.edges[i], h.edges[i + 1]);
            h.counts[i] = b + a * basis.regressor(lo, hi);
            h.sumw2[i] = 0.01;
        }
        h
    }

    #[test]
    fn exact_recovery() {
        for basis in [FitBasis::Center, FitBasis::BinAverage] {
            let f = fit_modulation(&model(-0.3, 1.0, basis), basis).unwrap();
            assert!((f.a + 0.3).abs() < 1e-9 && (f.b - 1.0).abs() < 1e-9);
            assert!(f.chi2 < 1e-12);
        }
    }

    #[test]
    fn flat_histogram() {
        let f = fit_modulation(&model(0.0, 5.0, FitBasis::Center), FitBasis::Center).unwrap();
        assert!(f.a.abs() < 1e-9);
        assert_eq!(enhancement_ratio(&f).unwrap().0, 1.0);
    }

    #[test]
    fn ratio_examples() {
        let f = FitResult { a: -0.3, b: 1.0, cov: [[0.0; 2]; 2], chi2: 0.0, ndof: 1 };
        assert!((enhancement_ratio(&f).unwrap().0 - 1.3 / 0.7).abs() < 1e-12);
        let f = FitResult { a: -0.45, b: 1.0, cov: [[1e-4, 0.0], [0.0, 0.0]], chi2: 0.0, ndof: 1 };
        let (_, s) = enhancement_ratio(&f).unwrap();
        assert!((s - 2.0 * 0.01 / 0.55f64.powi(2)).abs() < 1e-12);
        assert!((s - 0.0661).abs() < 1e-4);
        let bad = FitResult { a: -1.0, b: 1.0, ..f };
        assert!(enhancement_ratio(&bad).is_err());
    }

    #[test]
    fn too_few_bins() {
        let mut h = Hist1D::dphi(24);
        h.fill(0.1, 1.0);
        h.fill(1.1, 1.0);
        assert!(matches!(fit_modulation(&h, FitBasis::Center), Err(Error::Fit(_))));
    }

    #[test]
    fn covariance_is_psd() {
        let f = fit_modulation(&model(-0.2, 3.0, FitBasis::Center), FitBasis::Center).unwrap();
        assert!(f.cov[0][0] > 0.0 && f.cov[1][1] > 0.0);
        assert!(f.cov[0][0] * f.cov[1][1] - f.cov[0][1] * f.cov[1][0] >= 0.0);
        assert_eq!(f.cov[0][1], f.cov[1][0]);
    }
}
