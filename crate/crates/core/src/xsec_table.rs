//! Cross-section tables over a Cartesian grid, written as CSV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::ANNIHILATION_ENERGY_KEV;
use crate::xsec::{entangled_dcs, kn_polarized, kn_total, kn_unpolarized, r_analytic, EntangledDcsKinematics};

pub const XSEC_CSV_HEADER: &str =
    "theta1_deg,theta2p_deg,k1_kev,k2p_kev,dphi_deg,kn_unpolarized_1,kn_polarized_1,kn_total_1,entangled_dcs,r_analytic";

fn annihilation() -> Vec<f64> {
    vec![ANNIHILATION_ENERGY_KEV]
}

fn right_angle() -> Vec<f64> {
    vec![90.0]
}

/// Axes of the table; every combination becomes one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XsecGrid {
    pub theta1_deg: Vec<f64>,
    pub theta2p_deg: Vec<f64>,
    #[serde(default = "annihilation")]
    pub k1_kev: Vec<f64>,
    #[serde(default = "annihilation")]
    pub k2p_kev: Vec<f64>,
    /// Azimuth difference; `kn_polarized_1` uses it as γ1's azimuth from its polarization.
    #[serde(default = "right_angle")]
    pub dphi_deg: Vec<f64>,
}

impl XsecGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::config(format!("grid.{}", e.path()), e.into_inner().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: &[f64], ok: &dyn Fn(f64) -> bool, what: &str| {
            match v.iter().position(|&x| !ok(x)) {
                Some(i) => Err(Error::config(format!("grid.{name}[{i}]"), format!("{what}, got {}", v[i]))),
                None => Ok(()),
            }
        };
        let angle = |x: f64| (0.0..=180.0).contains(&x);
        let energy = |x: f64| x.is_finite() && x > 0.0;
        check("theta1_deg", &self.theta1_deg, &angle, "polar angles must lie in [0, 180]")?;
        check("theta2p_deg", &self.theta2p_deg, &angle, "polar angles must lie in [0, 180]")?;
        check("k1_kev", &self.k1_kev, &energy, "energies must be positive")?;
        check("k2p_kev", &self.k2p_kev, &energy, "energies must be positive")?;
        check("dphi_deg", &self.dphi_deg, &|x: f64| x.is_finite(), "azimuths must be finite")
    }
}

/// Tabulates the grid; an empty axis gives a header-only table.
pub fn xsec_table_csv(grid: &XsecGrid) -> Result<String> {
    grid.validate()?;
    let mut out = format!("{XSEC_CSV_HEADER}\n");
    for &t1 in &grid.theta1_deg {
        for &t2 in &grid.theta2p_deg {
            for &k1 in &grid.k1_kev {
                for &k2p in &grid.k2p_kev {
                    for &dphi in &grid.dphi_deg {
                        let (a, b, d) = (t1.to_radians(), t2.to_radians(), dphi.to_radians());
                        let kin = EntangledDcsKinematics { k1, k2p, theta1: a, theta2p: b, dphi: d };
                        let _ = writeln!(
                            out,
                            "{t1},{t2},{k1},{k2p},{dphi},{},{},{},{},{}",
                            kn_unpolarized(k1, a)?,
                            kn_polarized(k1, a, d)?,
                            kn_total(k1)?,
                            entangled_dcs(&kin)?,
                            r_analytic(a, b, k1, k2p)?
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_angle_row() {
        let g = XsecGrid::from_json(r#"{"theta1_deg": [90], "theta2p_deg": [90]}"#).unwrap();
        let csv = xsec_table_csv(&g).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let r: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((r - 2.6).abs() < 1e-9);
    }

    #[test]
    fn empty_grid_is_header_only() {
        let g = XsecGrid::from_json(r#"{"theta1_deg": [], "theta2p_deg": [90]}"#).unwrap();
        assert_eq!(xsec_table_csv(&g).unwrap(), format!("{XSEC_CSV_HEADER}\n"));
    }

    #[test]
    fn invalid_entries_name_their_index() {
        let g = XsecGrid::from_json(r#"{"theta1_deg": [10, 200], "theta2p_deg": [90]}"#).unwrap();
        let e = xsec_table_csv(&g).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "grid.theta1_deg[1]"));
    }
}
