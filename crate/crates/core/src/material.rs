//! Attenuation tables with log-log interpolation.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "energy_keV,mu_pe_per_mm,mu_compton_per_mm";

const LYSO_CSV: &str = include_str!("../../../data/materials/lyso.csv");
const WATER_CSV: &str = include_str!("../../../data/materials/water.csv");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attenuation {
    pub photoelectric: f64,
    pub compton: f64,
}

impl Attenuation {
    pub fn total(&self) -> f64 {
        self.photoelectric + self.compton
    }
}

#[derive(Debug)]
pub struct MaterialTable {
    pub name: String,
    energies: Vec<f64>,
    mu_pe: Vec<f64>,
    mu_compton: Vec<f64>,
    clamped: AtomicU64,
}

impl Clone for MaterialTable {
    fn clone(&self) -> Self {
        MaterialTable {
            name: self.name.clone(),
            energies: self.energies.clone(),
            mu_pe: self.mu_pe.clone(),
            mu_compton: self.mu_compton.clone(),
            clamped: AtomicU64::new(self.clamped_queries()),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

impl MaterialTable {
    /// Parses the CSV format; line numbers in errors are 1-based.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            Some((i, h)) => return Err(parse_err(i + 1, format!("expected header `{CSV_HEADER}`, found `{}`", h.trim()))),
            None => return Err(parse_err(1, "empty material table")),
        }
        let (mut energies, mut mu_pe, mut mu_compton) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            let n = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err(n, format!("expected 3 fields, found {}", fields.len())));
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.parse::<f64>().map_err(|e| parse_err(n, format!("`{f}`: {e}")))?;
                if !v.is_finite() {
                    return Err(parse_err(n, format!("non-finite value `{f}`")));
                }
            }
            let [e, pe, c] = vals;
            if e <= 0.0 {
                return Err(parse_err(n, "energy must be positive"));
            }
            if pe < 0.0 || c < 0.0 {
                return Err(parse_err(n, "attenuation coefficients must be non-negative"));
            }
            if energies.last().is_some_and(|&last| e <= last) {
                return Err(parse_err(n, "energies must be strictly increasing"));
            }
            energies.push(e);
            mu_pe.push(pe);
            mu_compton.push(c);
        }
        if energies.len() < 2 {
            return Err(parse_err(1, "material table needs at least two rows"));
        }
        Ok(MaterialTable { name: name.to_string(), energies, mu_pe, mu_compton, clamped: AtomicU64::new(0) })
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "lyso" => LYSO_CSV,
            "water" => WATER_CSV,
            _ => return None,
        };
        Some(Self::parse(name, text).expect("embedded material table is valid"))
    }

    pub fn energy_range(&self) -> (f64, f64) {
        (self.energies[0], self.energies[self.energies.len() - 1])
    }

    pub fn clamped_queries(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut t = self.clone();
        t.mu_pe.iter_mut().chain(t.mu_compton.iter_mut()).for_each(|v| *v *= factor);
        t
    }

    pub fn mu(&self, energy_kev: f64) -> Attenuation {
        let (lo, hi) = self.energy_range();
        let n = self.energies.len();
        if energy_kev <= lo || energy_kev >= hi {
            if energy_kev < lo || energy_kev > hi {
                self.clamped.fetch_add(1, Ordering::Relaxed);
            }
            let i = if energy_kev <= lo { 0 } else { n - 1 };
            return Attenuation { photoelectric: self.mu_pe[i], compton: self.mu_compton[i] };
        }
        let j = self.energies.partition_point(|&e| e <= energy_kev);
        let i = j - 1;
        let t = (energy_kev / self.energies[i]).ln() / (self.energies[j] / self.energies[i]).ln();
        Attenuation {
            photoelectric: loglog(self.mu_pe[i], self.mu_pe[j], t),
            compton: loglog(self.mu_compton[i], self.mu_compton[j], t),
        }
    }
}

fn loglog(a: f64, b: f64, t: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        (a.ln() + t * (b / a).ln()).exp()
    } else {
        a + t * (b - a)
    }
}

pub fn load_material_table(path: &Path) -> Result<MaterialTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("material");
    MaterialTable::parse(name, &text)
}

/// Material tables addressed by index from geometry volumes.
#[derive(Debug, Clone, Default)]
pub struct Materials {
    pub tables: Vec<MaterialTable>,
}

impl Materials {
    pub fn builtin() -> Self {
        Materials { tables: vec![MaterialTable::builtin("lyso").unwrap(), MaterialTable::builtin("water").unwrap()] }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    /// Adds or replaces a table by name.
    pub fn insert(&mut self, table: MaterialTable) -> usize {
        match self.index_of(&table.name) {
            Some(i) => {
                self.tables[i] = table;
                i
            }
            None => {
                self.tables.push(table);
                self.tables.len() - 1
            }
        }
    }

    pub fn clamped_queries(&self) -> u64 {
        self.tables.iter().map(MaterialTable::clamped_queries).sum()
    }
}
