//! Weighted histograms with per-bin sum of squared weights.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::wrap_angle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hist1D {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub sumw2: Vec<f64>,
}

impl Hist1D {
    pub fn new(edges: Vec<f64>) -> Self {
        assert!(edges.len() >= 2 && edges.windows(2).all(|w| w[0] < w[1]), "bin edges must increase");
        let n = edges.len() - 1;
        Hist1D { edges, counts: vec![0.0; n], sumw2: vec![0.0; n] }
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Self {
        Self::new((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
    }

    /// 24 bins of 15° over [−π, π) by default.
    pub fn dphi(n: usize) -> Self {
        Self::uniform(n, -PI, PI)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0.0
    }

    /// Closed-left bins; the upper edge belongs to the last bin.
    pub fn find(&self, x: f64) -> Option<usize> {
        let n = self.len();
        if !(x >= self.edges[0] && x <= self.edges[n]) {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(n - 1))
    }

    pub fn fill(&mut self, x: f64, w: f64) -> bool {
        match self.find(x) {
            Some(i) => {
                self.counts[i] += w;
                self.sumw2[i] += w * w;
                true
            }
            None => false,
        }
    }

    pub fn fill_with_variance(&mut self, x: f64, w: f64, var: f64) -> bool {
        match self.find(x) {
            Some(i) => {
                self.counts[i] += w;
                self.sumw2[i] += var;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.sumw2.iter().map(|v| v.sqrt()).collect()
    }

    pub fn same_binning(&self, other: &Hist1D) -> bool {
        self.edges == other.edges
    }

    pub fn merge(&mut self, other: &Hist1D) -> Result<()> {
        if !self.same_binning(other) {
            return Err(Error::Contract("cannot merge histograms with different binning".into()));
        }
        for i in 0..self.len() {
            self.counts[i] += other.counts[i];
            self.sumw2[i] += other.sumw2[i];
        }
        Ok(())
    }
}

/// θ_ICS slices, each holding a Δφ histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hist2D {
    pub x_edges: Vec<f64>,
    pub slices: Vec<Hist1D>,
}

impl Hist2D {
    pub fn new(x_edges: Vec<f64>, dphi_bins: usize) -> Self {
        let proto = Hist1D::dphi(dphi_bins);
        let x = Hist1D::new(x_edges);
        Hist2D { slices: vec![proto; x.len()], x_edges: x.edges }
    }

    pub fn x_bin(&self, x: f64) -> Option<usize> {
        let n = self.slices.len();
        if !(x >= self.x_edges[0] && x <= self.x_edges[n]) {
            return None;
        }
        Some(self.x_edges.partition_point(|&e| e <= x).saturating_sub(1).min(n - 1))
    }

    /// Δφ is wrapped into [−π, π) before filling.
    pub fn fill(&mut self, x: f64, dphi: f64, w: f64) -> bool {
        match self.x_bin(x) {
            Some(i) => self.slices[i].fill(wrap_angle(dphi), w),
            None => false,
        }
    }

    pub fn fill_with_variance(&mut self, x: f64, dphi: f64, w: f64, var: f64) -> bool {
        match self.x_bin(x) {
            Some(i) => self.slices[i].fill_with_variance(wrap_angle(dphi), w, var),
            None => false,
        }
    }

    pub fn total(&self) -> f64 {
        self.slices.iter().map(Hist1D::total).sum()
    }

    pub fn same_binning(&self, other: &Hist2D) -> bool {
        self.x_edges == other.x_edges
            && self.slices.len() == other.slices.len()
            && self.slices.iter().zip(&other.slices).all(|(a, b)| a.same_binning(b))
    }

    pub fn merge(&mut self, other: &Hist2D) -> Result<()> {
        if !self.same_binning(other) {
            return Err(Error::Contract("cannot merge histograms with different binning".into()));
        }
        for (a, b) in self.slices.iter_mut().zip(&other.slices) {
            a.merge(b)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_weighted_fill() {
        let mut h = Hist1D::dphi(24);
        h.fill(0.1, 2.5);
        assert_eq!(h.total(), 2.5);
        let i = h.find(0.1).unwrap();
        assert_eq!(h.sumw2[i], 6.25);
    }

    #[test]
    fn closed_left_edges() {
        let h = Hist1D::dphi(24);
        assert_eq!(h.find(-PI), Some(0));
        assert_eq!(h.find(-PI + PI / 12.0), Some(1));
        assert_eq!(h.find(PI), Some(23));
        assert_eq!(h.find(4.0), None);
    }

    #[test]
    fn wrap_invariance() {
        let mut a = Hist2D::new(vec![0.0, 1.0], 24);
        let mut b = a.clone();
        for (i, x) in [-3.0, -1.2, 0.4, 2.9].into_iter().enumerate() {
            a.fill(0.5, x, 1.0 + i as f64);
            b.fill(0.5, x + 2.0 * PI, 1.0 + i as f64);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn merge_adds() {
        let mut a = Hist1D::dphi(24);
        let mut b = Hist1D::dphi(24);
        a.fill(0.0, 1.0);
        b.fill(0.0, 2.0);
        a.merge(&b).unwrap();
        assert_eq!(a.total(), 3.0);
        assert!(a.merge(&Hist1D::dphi(12)).is_err());
    }
}
