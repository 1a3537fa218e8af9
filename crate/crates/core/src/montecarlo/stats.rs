//! Estimators with 95% intervals and least-squares fits.

use serde::{Deserialize, Serialize};

pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub sd: f64,
    pub halfwidth: f64,
    pub n: usize,
}

/// Sample mean with `1.96 sd / √N` halfwidth (unbiased variance).
pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            sd: f64::NAN,
            halfwidth: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanCi {
        mean,
        sd,
        halfwidth: Z95 * sd / (n as f64).sqrt(),
        n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    pub hits: u64,
    pub n: u64,
}

/// Wilson score interval at 95%.
pub fn wilson(hits: u64, n: u64) -> Proportion {
    if n == 0 {
        return Proportion {
            p: f64::NAN,
            lo: 0.0,
            hi: 1.0,
            hits,
            n,
        };
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Proportion {
        p,
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
        hits,
        n,
    }
}

impl Proportion {
    pub fn overlaps(&self, other: &Proportion) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// Standard error of the slope from the residual variance.
    pub slope_se: f64,
}

/// Ordinary least squares `y ≈ intercept + slope x`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Some(LinearFit {
        slope,
        intercept,
        r2,
        points: n,
        slope_se,
    })
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let u = pos - lo as f64;
    sorted[lo] + u * (sorted[hi] - sorted[lo])
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_interval() {
        let m = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((m.sd - sd).abs() < 1e-15);
        assert!((m.halfwidth - 1.96 * sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn wilson_reference_values() {
        // 10 of 100: (0.0552, 0.1744)
        let w = wilson(10, 100);
        assert!((w.lo - 0.05522).abs() < 1e-4);
        assert!((w.hi - 0.17437).abs() < 1e-4);
        let all = wilson(50, 50);
        assert_eq!(all.hi, 1.0);
        assert!(all.lo > 0.9 && all.lo < 1.0);
        assert_eq!(wilson(0, 50).lo, 0.0);
    }

    #[test]
    fn exact_line_fit() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = least_squares(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
        assert!(least_squares(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn quantiles() {
        let s = sorted(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.95), 4.8);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
    }
}
