//! Brute-force cross-checks for the eigen-solution.
//!
//! [`fisher_direct`] integrates the Fisher information of an arbitrary
//! weighted square-root mixture without touching the Gram matrices, and
//! [`search_alpha`] minimises the Rayleigh quotient by seeded random search
//! without any eigendecomposition.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramPair;
use crate::panel::Panel;
use crate::quadrature::{integrate, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_restarts: usize,
    pub n_iterations: usize,
    /// Step multiplier after a rejected proposal.
    pub step_decay: f64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_restarts == 0 || self.n_iterations == 0 {
            return Err(Error::InvalidParameter(
                "search needs at least one restart and one iteration".into(),
            ));
        }
        if !(self.step_decay > 0.0 && self.step_decay < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step_decay must lie in (0, 1), got {}",
                self.step_decay
            )));
        }
        Ok(())
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_restarts: 64,
            n_iterations: 2000,
            step_decay: 0.97,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub alpha: Vec<f64>,
    pub value: f64,
}

/// Fisher information `int (f')^2 / f` of `f = (sum a_i psi_i)^2 / (a'Ba)`,
/// with both the normaliser and the information integrated directly.
///
/// The integrand is taken in the form `4 (sum a_i psi_i')^2 / (a'Ba)`, which
/// equals `(f')^2 / f` wherever `f > 0` and stays finite where the signed
/// mixture crosses zero.
pub fn fisher_direct(panel: &Panel, alpha: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    if alpha.len() != panel.len() {
        return Err(Error::DimensionMismatch {
            expected: panel.len(),
            got: alpha.len(),
        });
    }
    let experts = panel.experts();
    let support = panel.support_hull();
    let breaks = panel.breakpoints();

    let mix = |x: f64| -> f64 {
        experts
            .iter()
            .zip(alpha)
            .map(|(d, a)| a * d.eval_sqrt(x))
            .sum()
    };
    let mix_deriv = |x: f64| -> f64 {
        experts
            .iter()
            .zip(alpha)
            .map(|(d, a)| a * d.sqrt_deriv_interior(x))
            .sum()
    };

    let norm = integrate(
        |x| {
            let s = mix(x);
            s * s
        },
        support,
        &breaks,
        cfg,
    )?
    .value;
    if !(norm > 1e-10) {
        return Err(Error::DegenerateDirection(norm));
    }
    let info = integrate(
        |x| {
            let d = mix_deriv(x);
            4.0 * d * d
        },
        support,
        &breaks,
        cfg,
    )?
    .value;
    Ok(info / norm)
}

struct Quadratic<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
}

impl Quadratic<'_> {
    fn b_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(self.b * v))
    }

    fn value(&self, v: &DVector<f64>) -> f64 {
        4.0 * v.dot(&(self.a * v)) / self.b_norm(v)
    }
}

const MIN_B_NORM: f64 = 1e-12;

fn gaussian(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Maps search coordinates to weights. With a Cholesky factor `B = LL'`,
/// `a = L^{-T} y` turns the B-sphere into the unit sphere, which keeps the
/// random walk well scaled when `B` is badly conditioned. Values are always
/// evaluated on the original matrices.
struct Chart {
    l_inv_t: Option<DMatrix<f64>>,
}

impl Chart {
    fn new(b: &DMatrix<f64>, nonneg: bool) -> Self {
        // clipping acts on weights, so the nonnegative search stays in raw
        // coordinates
        let l_inv_t = if nonneg {
            None
        } else {
            b.clone()
                .cholesky()
                .and_then(|c| c.l().try_inverse())
                .map(|li| li.transpose())
                .filter(|m| m.iter().all(|v| v.is_finite()))
        };
        Self { l_inv_t }
    }

    fn to_alpha(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.l_inv_t {
            Some(t) => t * y,
            None => y.clone(),
        }
    }
}

fn one_restart(
    q: &Quadratic<'_>,
    chart: &Chart,
    m: usize,
    sc: &SearchConfig,
    restart: usize,
    nonneg: bool,
) -> Option<SearchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(restart as u64);

    // returns (unit coordinates, B-normalised weights)
    let project = |y: DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        let y = if nonneg { y.map(|x| x.max(0.0)) } else { y };
        let yn = y.norm();
        if !(yn > 0.0 && yn.is_finite()) {
            return None;
        }
        let y = y / yn;
        let a = chart.to_alpha(&y);
        let n = q.b_norm(&a);
        (n > MIN_B_NORM && n.is_finite()).then(|| (y, a / n.sqrt()))
    };

    let mut current = None;
    for _ in 0..100 {
        let start = gaussian(&mut rng, m);
        let start = if nonneg { start.abs() } else { start };
        if let Some(v) = project(start) {
            current = Some(v);
            break;
        }
    }
    let (mut y, mut alpha) = current?;
    let mut value = q.value(&alpha);

    // Success grows the step by decay^-4 and failure shrinks it by decay,
    // which balances at a 1/5 success rate. Successful steps also feed a
    // rank-one covariance update so the search stretches along the valley.
    let grow = sc.step_decay.powi(-4);
    let c_path = 2.0 / (m as f64 + 2.0);
    let c_cov = 2.0 / ((m * m) as f64 + 6.0);
    let mut step = 0.5;
    let mut cov = DMatrix::<f64>::identity(m, m);
    let mut factor = DMatrix::<f64>::identity(m, m);
    let mut path = DVector::<f64>::zeros(m);

    for _ in 0..sc.n_iterations {
        let z = factor.clone() * gaussian(&mut rng, m);
        match project(&y + &z * step) {
            Some((py, pa)) => {
                let v = q.value(&pa);
                if v < value {
                    y = py;
                    alpha = pa;
                    value = v;
                    step = (step * grow).min(1.0);
                    path = &path * (1.0 - c_path) + &z * (c_path * (2.0 - c_path)).sqrt();
                    cov = &cov * (1.0 - c_cov) + &path * path.transpose() * c_cov;
                    match cov.clone().cholesky() {
                        Some(c) => factor = c.l(),
                        None => {
                            cov = DMatrix::identity(m, m);
                            factor = DMatrix::identity(m, m);
                            path.fill(0.0);
                        }
                    }
                } else {
                    step *= sc.step_decay;
                }
            }
            None => step *= sc.step_decay,
        }
        if step < 1e-300 {
            break;
        }
    }
    Some(SearchResult {
        alpha: alpha.iter().copied().collect(),
        value,
    })
}

fn search(g: &GramPair, sc: &SearchConfig, nonneg: bool) -> Result<SearchResult> {
    sc.validate()?;
    let m = g.m();
    let q = Quadratic { a: &g.a, b: &g.b };
    if m == 1 {
        let alpha = DVector::from_element(1, 1.0 / g.b[(0, 0)].sqrt());
        return Ok(SearchResult {
            value: q.value(&alpha),
            alpha: alpha.iter().copied().collect(),
        });
    }
    let chart = Chart::new(&g.b, nonneg);
    let results: Vec<Option<SearchResult>> = (0..sc.n_restarts)
        .into_par_iter()
        .map(|k| one_restart(&q, &chart, m, sc, k, nonneg))
        .collect();
    // minimum value, lowest restart index on ties
    results
        .into_iter()
        .flatten()
        .reduce(|best, r| if r.value < best.value { r } else { best })
        .ok_or(Error::DegenerateGram)
}

/// Seeded random search for the minimum of `4 a'Aa / a'Ba` over
/// `{a : a'Ba = 1}`.
pub fn search_alpha(g: &GramPair, sc: &SearchConfig) -> Result<SearchResult> {
    search(g, sc, false)
}

/// As [`search_alpha`], restricted to nonnegative weights by clipping.
pub fn search_alpha_nonneg(g: &GramPair, sc: &SearchConfig) -> Result<SearchResult> {
    search(g, sc, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Density;
    use crate::kernels::Provenance;
    use approx::assert_abs_diff_eq;

    fn identity_pair(m: usize) -> GramPair {
        GramPair::from_matrices(
            DMatrix::identity(m, m),
            DMatrix::identity(m, m),
            vec![Provenance::ClosedForm; m * m],
        )
        .unwrap()
    }

    #[test]
    fn normal_fisher() {
        let cfg = QuadratureConfig::default();
        for sigma in [0.3, 1.0, 2.5] {
            let p = Panel::from_densities(vec![Density::normal(1.0, sigma).unwrap()]).unwrap();
            let v = fisher_direct(&p, &[1.0], &cfg).unwrap();
            assert_abs_diff_eq!(v, 1.0 / (sigma * sigma), epsilon = 1e-8);
        }
    }

    #[test]
    fn exponential_fisher() {
        let cfg = QuadratureConfig::default();
        for rate in [0.5, 2.0] {
            let p = Panel::from_densities(vec![Density::exponential(rate).unwrap()]).unwrap();
            let v = fisher_direct(&p, &[1.0], &cfg).unwrap();
            assert_abs_diff_eq!(v, rate * rate, epsilon = 1e-8);
        }
    }

    #[test]
    fn fisher_direct_rejects_null_direction() {
        let d = Density::normal(0.0, 1.0).unwrap();
        let p = Panel::from_densities(vec![d.clone(), d]).unwrap();
        let err = fisher_direct(&p, &[1.0, -1.0], &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection(_)));
    }

    #[test]
    fn isotropic_value_is_four() {
        let r = search_alpha(&identity_pair(3), &SearchConfig::with_seed(3)).unwrap();
        assert_abs_diff_eq!(r.value, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn singleton_is_one() {
        let g = GramPair::from_matrices(
            DMatrix::from_element(1, 1, 0.2),
            DMatrix::from_element(1, 1, 1.0),
            vec![Provenance::ClosedForm],
        )
        .unwrap();
        let sc = SearchConfig::with_seed(1);
        assert_eq!(search_alpha(&g, &sc).unwrap().alpha, vec![1.0]);
        assert_eq!(search_alpha_nonneg(&g, &sc).unwrap().alpha, vec![1.0]);
    }

    #[test]
    fn reproducible() {
        let g = GramPair::from_matrices(
            DMatrix::from_row_slice(2, 2, &[0.25, 0.003, 0.003, 0.11]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.59, 0.59, 1.0]),
            vec![Provenance::ClosedForm; 4],
        )
        .unwrap();
        let sc = SearchConfig::with_seed(42);
        assert_eq!(
            search_alpha(&g, &sc).unwrap(),
            search_alpha(&g, &sc).unwrap()
        );
        let nn = search_alpha_nonneg(&g, &sc).unwrap();
        assert!(nn.alpha.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn bad_config() {
        let sc = SearchConfig {
            step_decay: 1.0,
            ..SearchConfig::default()
        };
        assert!(search_alpha(&identity_pair(2), &sc).is_err());
    }
}
