//! Panel in, pooled prior out.

use std::sync::atomic::AtomicBool;

use serde::Serialize;

use crate::density::{Density, EFFECTIVE_SUPPORT_LEVEL};
use crate::error::{Error, Result};
use crate::kernels::{gram_cancellable, GramPair};
use crate::panel::Panel;
use crate::quadrature::{integrate, Interval, QuadratureConfig};
use crate::solver::{min_rayleigh, PoolingSolution};

/// Grid size of the tabulated export.
pub const EXPORT_GRID_POINTS: usize = 4096;

/// `f(x) = (sum_i alpha_i psi_i(x))^2` with B-normalised `alpha`.
#[derive(Debug, Clone)]
pub struct PooledPrior {
    pub panel: Panel,
    pub alpha: Vec<f64>,
    pub information: f64,
    pub dominant_index: usize,
    /// `100 (1 - information / (4 A_dd))` for the dominant expert `d`.
    pub reduction_percent: f64,
    pub solution: PoolingSolution,
    pub gram: GramPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub pooled: f64,
    pub experts: Vec<f64>,
}

/// Least-informative expert: argmin of `A_ii`, lowest index on ties.
pub fn dominant_component(panel: &Panel, g: &GramPair) -> usize {
    debug_assert_eq!(panel.len(), g.m());
    let mut best = 0;
    for i in 1..g.m() {
        if g.a[(i, i)] < g.a[(best, best)] {
            best = i;
        }
    }
    best
}

pub fn pool(panel: &Panel, cfg: &QuadratureConfig, rank_tol: f64) -> Result<PooledPrior> {
    pool_cancellable(panel, cfg, rank_tol, &AtomicBool::new(false))
}

/// [`pool`] with a cancellation flag polled between Gram entries.
pub fn pool_cancellable(
    panel: &Panel,
    cfg: &QuadratureConfig,
    rank_tol: f64,
    cancel: &AtomicBool,
) -> Result<PooledPrior> {
    let gram = gram_cancellable(panel, cfg, cancel)?;
    pool_with_gram(panel, gram, rank_tol)
}

/// Pools from a precomputed Gram pair.
pub fn pool_with_gram(panel: &Panel, gram: GramPair, rank_tol: f64) -> Result<PooledPrior> {
    if gram.m() != panel.len() {
        return Err(Error::DimensionMismatch {
            expected: panel.len(),
            got: gram.m(),
        });
    }
    let solution = min_rayleigh(&gram, rank_tol)?;
    let dominant_index = dominant_component(panel, &gram);
    let baseline = 4.0 * gram.a[(dominant_index, dominant_index)];
    let reduction_percent = 100.0 * (1.0 - solution.information / baseline);
    Ok(PooledPrior {
        panel: panel.clone(),
        alpha: solution.alpha.clone(),
        information: solution.information,
        dominant_index,
        reduction_percent,
        solution,
        gram,
    })
}

impl PooledPrior {
    /// `sum_i alpha_i psi_i(x)`, the signed pooled square-root density.
    pub fn eval_sqrt(&self, x: f64) -> f64 {
        self.panel
            .experts()
            .iter()
            .zip(&self.alpha)
            .map(|(d, a)| a * d.eval_sqrt(x))
            .sum()
    }

    pub fn eval_pooled(&self, x: f64) -> f64 {
        let s = self.eval_sqrt(x);
        s * s
    }

    /// `n` equally spaced points on `[lo, hi]` with pooled and per-expert
    /// densities.
    pub fn sample_curve(&self, lo: f64, hi: f64, n: usize) -> Result<Vec<CurvePoint>> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidRange(format!(
                "need finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidRange(format!(
                "need at least 2 points, got {n}"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Ok((0..n)
            .map(|k| {
                let x = if k == n - 1 { hi } else { lo + step * k as f64 };
                CurvePoint {
                    x,
                    pooled: self.eval_pooled(x),
                    experts: self.panel.experts().iter().map(|d| d.eval_pdf(x)).collect(),
                }
            })
            .collect())
    }

    /// Total mass of the pooled density by quadrature, independent of `B`.
    pub fn normalization(&self, cfg: &QuadratureConfig) -> Result<f64> {
        let support = self.panel.support_hull();
        let breaks = self.panel.breakpoints();
        integrate(|x| self.eval_pooled(x), support, &breaks, cfg).map(|e| e.value)
    }

    /// Range used for curve export: the hull of the experts' effective
    /// supports, trimmed where every expert density is below the cutoff.
    pub fn export_range(&self) -> Interval {
        let hull = self.panel.effective_hull();
        let n = EXPORT_GRID_POINTS;
        let step = (hull.hi - hull.lo) / (n - 1) as f64;
        let alive = |k: usize| {
            let x = hull.lo + step * k as f64;
            self.panel
                .experts()
                .iter()
                .any(|d| d.eval_pdf(x) >= EFFECTIVE_SUPPORT_LEVEL)
        };
        let first = (0..n).find(|&k| alive(k)).unwrap_or(0);
        let last = (0..n).rev().find(|&k| alive(k)).unwrap_or(n - 1);
        let lo = hull.lo + step * first.saturating_sub(1) as f64;
        let hi = hull.lo + step * (last + 1).min(n - 1) as f64;
        if hi > lo {
            Interval::new(lo, hi)
        } else {
            hull
        }
    }

    /// The pooled density as a tabulated density on `EXPORT_GRID_POINTS`.
    pub fn to_tabulated(&self) -> Result<Density> {
        let range = self.export_range();
        let n = EXPORT_GRID_POINTS;
        let step = (range.hi - range.lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n)
            .map(|k| {
                if k == n - 1 {
                    range.hi
                } else {
                    range.lo + step * k as f64
                }
            })
            .collect();
        let values = grid.iter().map(|&x| self.eval_pooled(x)).collect();
        Density::tabulated(grid, values)
    }
}
