//! Parametric and tabulated univariate densities with their square roots.
//!
//! Each density exposes `f`, `psi = sqrt(f)` and `psi'`. Parametric families
//! are evaluated through the log-density so `psi` never overflows at large
//! shapes or far tails; `psi'` is the analytic score `(1/2) d/dx ln f` times
//! `psi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::Interval;

/// Relative density level that delimits the effective support.
pub const EFFECTIVE_SUPPORT_LEVEL: f64 = 1e-12;

/// Offset from a bounded support edge used as a quadrature breakpoint.
pub const EDGE_SPLIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensitySpec", into = "DensitySpec")]
pub enum Density {
    Normal {
        mu: f64,
        sigma: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    /// Shape/rate parameterisation.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Exponential {
        rate: f64,
    },
    /// `ln X ~ Normal(mu, sigma)`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Tabulated(Tabulated),
}

/// Wire form of [`Density`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum DensitySpec {
    Normal { mu: f64, sigma: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl TryFrom<DensitySpec> for Density {
    type Error = Error;

    fn try_from(spec: DensitySpec) -> Result<Self> {
        match spec {
            DensitySpec::Normal { mu, sigma } => Density::normal(mu, sigma),
            DensitySpec::Beta { a, b } => Density::beta(a, b),
            DensitySpec::Gamma { shape, rate } => Density::gamma(shape, rate),
            DensitySpec::Exponential { rate } => Density::exponential(rate),
            DensitySpec::Lognormal { mu, sigma } => Density::log_normal(mu, sigma),
            DensitySpec::Tabulated { grid, values } => {
                Tabulated::new(grid, values).map(Density::Tabulated)
            }
        }
    }
}

impl From<Density> for DensitySpec {
    fn from(d: Density) -> Self {
        match d {
            Density::Normal { mu, sigma } => DensitySpec::Normal { mu, sigma },
            Density::Beta { a, b } => DensitySpec::Beta { a, b },
            Density::Gamma { shape, rate } => DensitySpec::Gamma { shape, rate },
            Density::Exponential { rate } => DensitySpec::Exponential { rate },
            Density::LogNormal { mu, sigma } => DensitySpec::Lognormal { mu, sigma },
            Density::Tabulated(t) => DensitySpec::Tabulated {
                grid: t.grid,
                values: t.values,
            },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {v}"
        )))
    }
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

impl Density {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        finite("mu", mu)?;
        positive("sigma", sigma)?;
        Ok(Density::Normal { mu, sigma })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(Density::Beta { a, b })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("rate", rate)?;
        Ok(Density::Gamma { shape, rate })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Density::Exponential { rate })
    }

    pub fn log_normal(mu: f64, sigma: f64) -> Result<Self> {
        finite("mu", mu)?;
        positive("sigma", sigma)?;
        Ok(Density::LogNormal { mu, sigma })
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Tabulated::new(grid, values).map(Density::Tabulated)
    }

    /// Re-checks parameter invariants (enum fields are public).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Density::Normal { mu, sigma } | Density::LogNormal { mu, sigma } => {
                finite("mu", mu)?;
                positive("sigma", sigma)
            }
            Density::Beta { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            Density::Gamma { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)
            }
            Density::Exponential { rate } => positive("rate", rate),
            Density::Tabulated(ref t) => t.validate(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Density::Normal { .. } => "normal",
            Density::Beta { .. } => "beta",
            Density::Gamma { .. } => "gamma",
            Density::Exponential { .. } => "exponential",
            Density::LogNormal { .. } => "lognormal",
            Density::Tabulated(_) => "tabulated",
        }
    }

    pub fn support(&self) -> Interval {
        match self {
            Density::Normal { .. } => Interval::REAL_LINE,
            Density::Beta { .. } => Interval::new(0.0, 1.0),
            Density::Gamma { .. } | Density::Exponential { .. } | Density::LogNormal { .. } => {
                Interval::new(0.0, f64::INFINITY)
            }
            Density::Tabulated(t) => Interval::new(t.grid[0], t.grid[t.grid.len() - 1]),
        }
    }

    fn on_boundary(&self, x: f64) -> bool {
        let s = self.support();
        (s.lo.is_finite() && x == s.lo) || (s.hi.is_finite() && x == s.hi)
    }

    /// `ln f(x)`, `-inf` outside the support. Tabulated densities go through
    /// their interpolant.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Density::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
            Density::Beta { a, b } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
            }
            Density::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
            }
            Density::Exponential { rate } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                rate.ln() - rate * x
            }
            Density::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                let z = (lx - mu) / sigma;
                -0.5 * z * z - lx - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
            Density::Tabulated(ref t) => t.pdf(x).ln(),
        }
    }

    /// `f(x)`; zero outside the support.
    pub fn eval_pdf(&self, x: f64) -> f64 {
        match self {
            Density::Tabulated(t) => t.pdf(x),
            _ => self.ln_pdf(x).exp(),
        }
    }

    /// `psi(x) = sqrt(f(x))`; zero outside the support.
    pub fn eval_sqrt(&self, x: f64) -> f64 {
        match self {
            Density::Tabulated(t) => t.pdf(x).sqrt(),
            _ => (0.5 * self.ln_pdf(x)).exp(),
        }
    }

    /// `psi'(x)`. Zero outside the support; `BoundaryPoint` on a finite
    /// support edge.
    pub fn eval_sqrt_deriv(&self, x: f64) -> Result<f64> {
        if self.on_boundary(x) {
            return Err(Error::BoundaryPoint { x });
        }
        Ok(self.sqrt_deriv_interior(x))
    }

    /// `psi'(x)` with edges and exterior mapped to zero. Used inside
    /// integrands, which never sample piece endpoints.
    pub(crate) fn sqrt_deriv_interior(&self, x: f64) -> f64 {
        if !self.support().contains_open(x) {
            return 0.0;
        }
        match self {
            Density::Tabulated(t) => t.sqrt_deriv(x),
            _ => {
                let psi = self.eval_sqrt(x);
                if psi == 0.0 {
                    0.0
                } else {
                    self.half_score(x) * psi
                }
            }
        }
    }

    /// `(1/2) d/dx ln f(x)` for parametric families.
    fn half_score(&self, x: f64) -> f64 {
        match *self {
            Density::Normal { mu, sigma } => -(x - mu) / (2.0 * sigma * sigma),
            Density::Beta { a, b } => 0.5 * ((a - 1.0) / x - (b - 1.0) / (1.0 - x)),
            Density::Gamma { shape, rate } => (shape - 1.0) / (2.0 * x) - 0.5 * rate,
            Density::Exponential { rate } => -0.5 * rate,
            Density::LogNormal { mu, sigma } => {
                -((x.ln() - mu) / (sigma * sigma) + 1.0) / (2.0 * x)
            }
            Density::Tabulated(_) => unreachable!("tabulated score is piecewise"),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Density::Normal { mu, .. } => mu,
            Density::Beta { a, b } => a / (a + b),
            Density::Gamma { shape, rate } => shape / rate,
            Density::Exponential { rate } => 1.0 / rate,
            Density::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Density::Tabulated(ref t) => t.moment(1),
        }
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            Density::Normal { sigma, .. } => sigma,
            Density::Beta { a, b } => {
                let s = a + b;
                (a * b / (s * s * (s + 1.0))).sqrt()
            }
            Density::Gamma { shape, rate } => shape.sqrt() / rate,
            Density::Exponential { rate } => 1.0 / rate,
            Density::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp_m1() * (2.0 * mu + s2).exp()).sqrt()
            }
            Density::Tabulated(ref t) => {
                let m = t.moment(1);
                (t.moment(2) - m * m).max(0.0).sqrt()
            }
        }
    }

    /// Location of the maximum (a support edge when the density is monotone).
    pub fn mode(&self) -> f64 {
        match *self {
            Density::Normal { mu, .. } => mu,
            Density::Beta { a, b } => {
                if a > 1.0 && b > 1.0 {
                    (a - 1.0) / (a + b - 2.0)
                } else if a <= 1.0 && b > 1.0 {
                    0.0
                } else if a > 1.0 && b <= 1.0 {
                    1.0
                } else {
                    a / (a + b)
                }
            }
            Density::Gamma { shape, rate } => ((shape - 1.0) / rate).max(0.0),
            Density::Exponential { .. } => 0.0,
            Density::LogNormal { mu, sigma } => (mu - sigma * sigma).exp(),
            Density::Tabulated(ref t) => {
                let (k, _) =
                    t.values
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                        );
                t.grid[k]
            }
        }
    }

    /// Interior points where integrands built from this density change
    /// character: modes, spread-scaled quantiles and near-edge splits.
    pub fn breakpoints(&self) -> Vec<f64> {
        const K: [f64; 11] = [-10.0, -6.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 6.0, 10.0];
        let mut pts: Vec<f64> = match *self {
            Density::Normal { mu, sigma } => K.iter().map(|k| mu + k * sigma).collect(),
            Density::LogNormal { mu, sigma } => {
                let mut v: Vec<f64> = K.iter().map(|k| (mu + k * sigma).exp()).collect();
                v.push(self.mode());
                v
            }
            Density::Gamma { .. } | Density::Exponential { .. } => {
                let (m, s) = (self.mean(), self.std_dev());
                let mut v: Vec<f64> = [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
                    .iter()
                    .map(|k| m + k * s)
                    .filter(|x| *x > 0.0)
                    .collect();
                v.push(self.mode());
                v.push(0.05 * m);
                v.push(1e-3 * m);
                v
            }
            Density::Beta { .. } => {
                let (m, s) = (self.mean(), self.std_dev());
                let mut v: Vec<f64> = K.iter().map(|k| m + k * s).collect();
                v.extend([EDGE_SPLIT, 1.0 - EDGE_SPLIT, 1e-3, 1.0 - 1e-3, self.mode()]);
                v
            }
            Density::Tabulated(ref t) => t.grid.clone(),
        };
        let s = self.support();
        pts.retain(|x| x.is_finite() && s.contains_open(*x));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Interval where `f` stays above `EFFECTIVE_SUPPORT_LEVEL` times its
    /// peak, padded by 10% of its width and clipped to the support.
    pub fn effective_support(&self) -> Interval {
        let support = self.support();
        if let Density::Tabulated(_) = self {
            return support;
        }
        let mode = self.mode();
        let mut reference = mode;
        let mut peak = self.ln_pdf(mode);
        if !peak.is_finite() || !support.contains_open(mode) {
            reference = self.mean();
            peak = self.ln_pdf(reference);
            // monotone near an edge: the edge itself is the peak side
            let probe = if mode <= support.lo {
                support.lo + 1e-6 * self.std_dev().min(1.0)
            } else {
                support.hi - 1e-6 * self.std_dev().min(1.0)
            };
            if support.contains_open(probe) {
                peak = peak.max(self.ln_pdf(probe));
            }
        }
        let threshold = peak + EFFECTIVE_SUPPORT_LEVEL.ln();
        let spread = self.std_dev().max(f64::MIN_POSITIVE);

        let lo = self.level_crossing(reference, -1.0, spread, threshold, support.lo);
        let hi = self.level_crossing(reference, 1.0, spread, threshold, support.hi);
        let pad = 0.1 * (hi - lo);
        Interval::new((lo - pad).max(support.lo), (hi + pad).min(support.hi))
    }

    /// Walks from `start` in `dir` until `ln f` drops below `threshold`, then
    /// bisects. Returns `edge` if the crossing is not reached inside the support.
    fn level_crossing(&self, start: f64, dir: f64, spread: f64, threshold: f64, edge: f64) -> f64 {
        let mut inner = start;
        let mut step = spread;
        let mut outer = None;
        for _ in 0..200 {
            let x = start + dir * step;
            if (dir > 0.0 && x >= edge) || (dir < 0.0 && x <= edge) {
                if edge.is_finite() {
                    let near = edge - dir * 1e-12 * edge.abs().max(1.0);
                    if self.ln_pdf(near) >= threshold {
                        return edge;
                    }
                    outer = Some(edge);
                }
                break;
            }
            if self.ln_pdf(x) < threshold {
                outer = Some(x);
                break;
            }
            inner = x;
            step *= 2.0;
        }
        let Some(mut outer) = outer else {
            return edge;
        };
        for _ in 0..100 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if self.ln_pdf(mid) < threshold {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        outer
    }
}

/// Piecewise-linear density on a grid, renormalised so its trapezoid
/// integral is one.
///
/// `psi` is the square root of the linear interpolant and `psi'` its exact
/// derivative inside each cell. At a grid node the derivative is the mean of
/// the two one-sided cell derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated density needs at least two grid points".into(),
            ));
        }
        if grid.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "grid has {} points but values has {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "tabulated grid must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "tabulated values must be finite and nonnegative".into(),
            ));
        }
        let mass = trapezoid(&grid, &values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(
                "tabulated values have zero total mass".into(),
            ));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    fn validate(&self) -> Result<()> {
        Tabulated::new(self.grid.clone(), self.values.clone()).map(|_| ())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index `k` of the cell `[grid[k], grid[k+1]]` containing `x`.
    fn cell(&self, x: f64) -> Option<usize> {
        let n = self.grid.len();
        if !(x >= self.grid[0] && x <= self.grid[n - 1]) {
            return None;
        }
        let k = self.grid.partition_point(|g| *g <= x);
        Some(k.saturating_sub(1).min(n - 2))
    }

    fn pdf(&self, x: f64) -> f64 {
        let Some(k) = self.cell(x) else {
            return 0.0;
        };
        let (x0, x1) = (self.grid[k], self.grid[k + 1]);
        let (f0, f1) = (self.values[k], self.values[k + 1]);
        let w = (x - x0) / (x1 - x0);
        (f0 + w * (f1 - f0)).max(0.0)
    }

    fn cell_deriv(&self, k: usize, x: f64) -> f64 {
        let slope = (self.values[k + 1] - self.values[k]) / (self.grid[k + 1] - self.grid[k]);
        let psi = self.pdf(x).sqrt();
        if psi == 0.0 {
            0.0
        } else {
            slope / (2.0 * psi)
        }
    }

    fn sqrt_deriv(&self, x: f64) -> f64 {
        let Some(k) = self.cell(x) else {
            return 0.0;
        };
        let n = self.grid.len();
        if x == self.grid[k] && k > 0 {
            0.5 * (self.cell_deriv(k - 1, x) + self.cell_deriv(k, x))
        } else if x == self.grid[k + 1] && k + 2 < n {
            0.5 * (self.cell_deriv(k, x) + self.cell_deriv(k + 1, x))
        } else {
            self.cell_deriv(k, x)
        }
    }

    /// Exact raw moment of the piecewise-linear density (order 1 or 2).
    fn moment(&self, order: u32) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.grid.len() - 1 {
            let (a, b) = (self.grid[k], self.grid[k + 1]);
            let (fa, fb) = (self.values[k], self.values[k + 1]);
            let h = b - a;
            acc += match order {
                1 => h / 6.0 * (fa * (2.0 * a + b) + fb * (a + 2.0 * b)),
                _ => {
                    h / 12.0
                        * (fa * (3.0 * a * a + 2.0 * a * b + b * b)
                            + fb * (a * a + 2.0 * a * b + 3.0 * b * b))
                }
            };
        }
        acc
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pdf_examples() {
        let n = Density::normal(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(n.eval_pdf(0.0), 0.398_942_280_4, epsilon = 1e-10);
        let e = Density::exponential(2.0).unwrap();
        assert_abs_diff_eq!(e.eval_pdf(0.5), 0.735_758_882_3, epsilon = 1e-10);
        let b = Density::beta(2.0, 2.0).unwrap();
        assert_eq!(b.eval_pdf(-0.1), 0.0);
        assert_eq!(b.eval_pdf(1.5), 0.0);
    }

    #[test]
    fn sqrt_examples() {
        let n = Density::normal(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(n.eval_sqrt(0.0), 0.631_618_777_7, epsilon = 1e-10);
        let g = Density::gamma(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.eval_sqrt(1.0), 0.606_530_659_7, epsilon = 1e-10);
    }

    #[test]
    fn sqrt_deriv_examples() {
        let n = Density::normal(0.0, 1.0).unwrap();
        assert_eq!(n.eval_sqrt_deriv(0.0).unwrap(), 0.0);

        let e = Density::exponential(2.0).unwrap();
        let expected = -(2.0f64).sqrt() * (-1.0f64).exp();
        assert_abs_diff_eq!(e.eval_sqrt_deriv(1.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, -0.520, epsilon = 1e-3);

        let n = Density::normal(1.0, 2.0).unwrap();
        let h = 1e-5;
        let fd = (n.eval_sqrt(h) - n.eval_sqrt(-h)) / (2.0 * h);
        assert_abs_diff_eq!(n.eval_sqrt_deriv(0.0).unwrap(), fd, epsilon = 1e-6);
    }

    #[test]
    fn boundary_derivative_is_an_error() {
        let g = Density::gamma(3.0, 1.0).unwrap();
        assert_eq!(g.eval_sqrt_deriv(0.0), Err(Error::BoundaryPoint { x: 0.0 }));
        let b = Density::beta(3.0, 3.0).unwrap();
        assert!(b.eval_sqrt_deriv(1.0).is_err());
        assert_eq!(b.eval_sqrt_deriv(2.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(Density::normal(0.0, 0.0).is_err());
        assert!(Density::normal(f64::NAN, 1.0).is_err());
        assert!(Density::beta(-1.0, 2.0).is_err());
        assert!(Density::gamma(2.0, f64::INFINITY).is_err());
        assert!(Density::exponential(0.0).is_err());
        assert!(Density::log_normal(0.0, -1.0).is_err());
        assert!(Density::tabulated(vec![0.0], vec![1.0]).is_err());
        assert!(Density::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Density::tabulated(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(Density::tabulated(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn tabulated_is_renormalised() {
        let d = Density::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 4.0, 0.0]).unwrap();
        let Density::Tabulated(t) = &d else {
            unreachable!()
        };
        assert_abs_diff_eq!(trapezoid(t.grid(), t.values()), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.eval_pdf(0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.mean(), 1.0, epsilon = 1e-14);
        assert_eq!(d.support(), Interval::new(0.0, 2.0));
    }

    #[test]
    fn tabulated_node_derivative_is_central() {
        let d = Density::tabulated(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 4.0, 1.0]).unwrap();
        let Density::Tabulated(t) = &d else {
            unreachable!()
        };
        let left = t.cell_deriv(0, 1.0);
        let right = t.cell_deriv(1, 1.0);
        assert_abs_diff_eq!(
            d.eval_sqrt_deriv(1.0).unwrap(),
            0.5 * (left + right),
            epsilon = 1e-15
        );
    }

    #[test]
    fn json_schema_round_trip() {
        let cases = [
            r#"{"family":"normal","mu":-1.0,"sigma":1.0}"#,
            r#"{"family":"beta","a":2,"b":3}"#,
            r#"{"family":"gamma","shape":2,"rate":1}"#,
            r#"{"family":"exponential","rate":1}"#,
            r#"{"family":"lognormal","mu":3.73,"sigma":0.73}"#,
            r#"{"family":"tabulated","grid":[0,1,2],"values":[0,1,0]}"#,
        ];
        for c in cases {
            let d: Density = serde_json::from_str(c).unwrap();
            let back: Density = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
            assert_eq!(d, back);
        }
        assert!(
            serde_json::from_str::<Density>(r#"{"family":"normal","mu":0,"sigma":-1}"#).is_err()
        );
        assert!(serde_json::from_str::<Density>(r#"{"family":"cauchy","x0":0}"#).is_err());
    }

    #[test]
    fn effective_support_of_normal() {
        let d = Density::normal(2.0, 0.5).unwrap();
        let s = d.effective_support();
        let half = 0.5 * (2.0 * 1e12f64.ln()).sqrt();
        let width = 2.0 * half;
        assert_abs_diff_eq!(s.lo, 2.0 - half - 0.1 * width, epsilon = 1e-8);
        assert_abs_diff_eq!(s.hi, 2.0 + half + 0.1 * width, epsilon = 1e-8);
    }

    #[test]
    fn effective_support_clipped_to_support() {
        let e = Density::exponential(1.0).unwrap().effective_support();
        assert_eq!(e.lo, 0.0);
        assert!((e.hi - 1.1 * 1e12f64.ln()).abs() < 1e-5, "{}", e.hi);
        let b = Density::beta(0.5, 0.5).unwrap().effective_support();
        assert_eq!((b.lo, b.hi), (0.0, 1.0));
    }

    #[test]
    fn breakpoints_inside_support() {
        for d in [
            Density::beta(3.0, 7.0).unwrap(),
            Density::gamma(0.5, 2.0).unwrap(),
            Density::log_normal(5.0, 0.3).unwrap(),
        ] {
            let s = d.support();
            let b = d.breakpoints();
            assert!(!b.is_empty());
            assert!(b.iter().all(|x| s.contains_open(*x)));
            assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
