//! Helpers shared by the integration tests: quadrature oracles and goodness-of-fit statistics.
#![allow(dead_code)]

pub const M: f64 = 511.0;

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// k′/k straight from the Compton formula.
pub fn ratio(k: f64, theta: f64) -> f64 {
    1.0 / (1.0 + k / M * (1.0 - theta.cos()))
}

/// Unnormalized θ density of an unpolarized Klein-Nishina scatter (includes sin θ).
pub fn theta_density(k: f64, theta: f64) -> f64 {
    let r = ratio(k, theta);
    r * r * (r + 1.0 / r - theta.sin().powi(2)) * theta.sin()
}

/// Unnormalized φ density at fixed θ for a photon polarized along φ = 0.
pub fn phi_density(k: f64, theta: f64, phi: f64) -> f64 {
    let r = ratio(k, theta);
    r + 1.0 / r - 2.0 * theta.sin().powi(2) * phi.cos().powi(2)
}

/// Unnormalized Δφ density of the entangled pair at fixed polar angles.
pub fn dphi_density(k1: f64, k2p: f64, t1: f64, t2: f64, d: f64) -> f64 {
    let g1 = { let r = ratio(k1, t1); r + 1.0 / r };
    let g2 = { let r = ratio(k2p, t2); r + 1.0 / r };
    let (s1, s2) = (t1.sin().powi(2), t2.sin().powi(2));
    g1 * g2 - g1 * s2 - g2 * s1 + 2.0 * s1 * s2 * d.sin().powi(2)
}

/// Pearson χ² of `samples` in `bins` equal bins of [lo, hi] against the density, with dof = bins − 1.
pub fn chi2(samples: &[f64], lo: f64, hi: f64, bins: usize, density: impl Fn(f64) -> f64) -> (f64, usize) {
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let i = (((x - lo) / w).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[i] += 1;
    }
    let probs: Vec<f64> = (0..bins).map(|i| simpson(&density, lo + i as f64 * w, lo + (i + 1) as f64 * w, 200)).collect();
    let total: f64 = probs.iter().sum();
    let n = samples.len() as f64;
    let chi2 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| {
            let e = n * p / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    (chi2, bins - 1)
}

/// Kolmogorov-Smirnov distance between the samples and the CDF of the density on [lo, hi].
pub fn ks_distance(samples: &[f64], lo: f64, hi: f64, density: impl Fn(f64) -> f64) -> f64 {
    const GRID: usize = 4096;
    let w = (hi - lo) / GRID as f64;
    let mut cdf = vec![0.0; GRID + 1];
    for i in 0..GRID {
        cdf[i + 1] = cdf[i] + simpson(&density, lo + i as f64 * w, lo + (i + 1) as f64 * w, 8);
    }
    let total = cdf[GRID];
    let at = |x: f64| {
        let t = ((x - lo) / w).clamp(0.0, GRID as f64);
        let i = (t.floor() as usize).min(GRID - 1);
        (cdf[i] + (t - i as f64) * (cdf[i + 1] - cdf[i])) / total
    };
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = at(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
