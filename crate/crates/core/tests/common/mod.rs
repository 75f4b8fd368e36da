//! Test-only oracles, independent of the crate's fitting code.

#![allow(dead_code)]

use fsc_core::domain::CurveSample;

/// Brute-force least squares for `ln(1 - score) = ln a + b ln(n + offset)`.
///
/// The line is searched as `c + b (x - x̄)` on a 2000 × 2000 lattice, then on
/// successively finer 101 × 101 lattices around the best cell. Returns `(a, b)`.
pub fn grid_search_fit(samples: &[CurveSample], offset: u64, epsilon_clamp: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (((s.n + offset) as f64).ln(), (1.0 - s.score).max(epsilon_clamp).ln()))
        .collect();
    let x_bar = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let sse = |b: f64, c: f64| -> f64 {
        pts.iter()
            .map(|(x, y)| {
                let r = y - (c + b * (x - x_bar));
                r * r
            })
            .sum()
    };
    let y_lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - 1.0;
    let y_hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    // Any least-squares slope lies within the steepest pairwise slope.
    let mut b_bound: f64 = 1.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            if p.0 != q.0 {
                b_bound = b_bound.max(((p.1 - q.1) / (p.0 - q.0)).abs() + 1.0);
            }
        }
    }

    let search = |b_lo: f64, b_hi: f64, c_lo: f64, c_hi: f64, n: usize| -> (f64, f64, f64, f64) {
        let (db, dc) = ((b_hi - b_lo) / (n - 1) as f64, (c_hi - c_lo) / (n - 1) as f64);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            let b = b_lo + db * i as f64;
            for j in 0..n {
                let c = c_lo + dc * j as f64;
                let e = sse(b, c);
                if e < best.0 {
                    best = (e, b, c);
                }
            }
        }
        (best.1, best.2, db, dc)
    };

    let (mut b, mut c, mut db, mut dc) = search(-b_bound, b_bound, y_lo, y_hi, 2000);
    for _ in 0..12 {
        let r = search(b - 2.0 * db, b + 2.0 * db, c - 2.0 * dc, c + 2.0 * dc, 101);
        (b, c, db, dc) = r;
    }
    ((c - b * x_bar).exp(), b)
}

pub fn rel_err(x: f64, reference: f64) -> f64 {
    ((x - reference) / reference).abs()
}

/// Relative error with the reference magnitude floored at 1e-6, so a
/// saturated curve (true slope 0) is compared on an absolute scale.
pub fn rel_err_floored(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(1e-6)
}

/// Samples `1 - a (n + offset)^b` at `ns`.
pub fn on_model(a: f64, b: f64, offset: u64, ns: &[u64]) -> Vec<CurveSample> {
    ns.iter()
        .map(|&n| CurveSample::new(n, 1.0 - a * ((n + offset) as f64).powf(b), 1))
        .collect()
}
