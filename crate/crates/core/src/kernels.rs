//! Gram matrices `A_ij = <psi_i', psi_j'>` and `B_ij = <psi_i, psi_j>`.
//!
//! Same-family pairs use closed forms; everything else is integrated
//! numerically. The closed forms here are re-derived from the integrals and
//! differ from some commonly quoted displays:
//!
//! * Normal: `B = sqrt(2 s_i s_j / (s_i^2 + s_j^2)) exp(-(m_i - m_j)^2 / (4 (s_i^2 + s_j^2)))`.
//!   The leading factor is `sqrt(2 / (alpha s_i s_j))` with
//!   `alpha = 1/s_i^2 + 1/s_j^2`; the form `sqrt(alpha / (2 s_i s_j))` gives
//!   `B_ii = 1/s^2` and is wrong. `A = B (2/alpha + (c - m_i)(c - m_j)) / (4 s_i^2 s_j^2)`
//!   where `c = beta/alpha` is the centre of `psi_i psi_j`.
//! * Beta: `psi = B(a,b)^{-1/2} x^{(a-1)/2} (1-x)^{(b-1)/2}`; the derivative of
//!   the `(1-x)` factor carries a minus sign, so the two mixed terms of `A`
//!   enter negatively.
//! * Exponential: routed through the gamma formulas at shape 1, giving
//!   `B = 2 sqrt(b_i b_j) / (b_i + b_j)` and `A_ii = b^2 / 4`.
//! * Log-normal: `B` equals the normal closed form in `(mu, sigma)` because
//!   the overlap is invariant under `x = e^y`; `A` is not invariant and is
//!   integrated numerically.
//!
//! Every closed form is checked against quadrature in the test suite.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::density::{ln_beta, Density};
use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::panel::Panel;
use crate::quadrature::{integrate, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    ClosedForm,
    Quadrature,
    /// Produced by a basis change from other entries.
    Transformed,
}

/// Eigenvalue extremes of `A` and `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl PsdReport {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn a_is_psd(&self) -> bool {
        self.a_min >= -Self::TOLERANCE * self.a_max.abs()
    }

    pub fn b_is_psd(&self) -> bool {
        self.b_min >= -Self::TOLERANCE * self.b_max.abs()
    }

    pub fn is_psd(&self) -> bool {
        self.a_is_psd() && self.b_is_psd()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Row-major, `m * m`.
    pub provenance: Vec<Provenance>,
    pub psd: PsdReport,
}

fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

impl GramPair {
    /// Wraps matrices built elsewhere; checks shape and symmetry.
    pub fn from_matrices(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let m = a.nrows();
        if m == 0 || !a.is_square() || b.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: b.nrows(),
            });
        }
        if provenance.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                got: provenance.len(),
            });
        }
        for i in 0..m {
            for j in 0..i {
                if a[(i, j)] != a[(j, i)] || b[(i, j)] != b[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "Gram matrices must be symmetric (entry {i},{j})"
                    )));
                }
            }
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "Gram matrices must be finite".into(),
            ));
        }
        let (a_min, a_max) = eigen_extremes(&a);
        let (b_min, b_max) = eigen_extremes(&b);
        Ok(Self {
            a,
            b,
            provenance,
            psd: PsdReport {
                a_min,
                a_max,
                b_min,
                b_max,
            },
        })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn provenance(&self, i: usize, j: usize) -> Provenance {
        self.provenance[i * self.m() + j]
    }
}

/// `<psi_i, psi_j>`, the Bhattacharyya coefficient of the two densities.
pub fn b_entry(di: &Density, dj: &Density, cfg: &QuadratureConfig) -> Result<f64> {
    b_entry_with_provenance(di, dj, cfg).map(|(v, _)| v)
}

/// `<psi_i', psi_j'>`.
pub fn a_entry(di: &Density, dj: &Density, cfg: &QuadratureConfig) -> Result<f64> {
    a_entry_with_provenance(di, dj, cfg).map(|(v, _)| v)
}

fn check_overlap(di: &Density, dj: &Density) -> Result<()> {
    if di.support().intersect(&dj.support()).has_positive_measure() {
        Ok(())
    } else {
        Err(Error::DisjointSupports)
    }
}

pub fn b_entry_with_provenance(
    di: &Density,
    dj: &Density,
    cfg: &QuadratureConfig,
) -> Result<(f64, Provenance)> {
    check_overlap(di, dj)?;
    if di == dj {
        return Ok((1.0, Provenance::ClosedForm));
    }
    if let Some(v) = b_closed_form(di, dj) {
        return Ok((v, Provenance::ClosedForm));
    }
    b_quadrature(di, dj, cfg).map(|v| (v, Provenance::Quadrature))
}

pub fn a_entry_with_provenance(
    di: &Density,
    dj: &Density,
    cfg: &QuadratureConfig,
) -> Result<(f64, Provenance)> {
    check_overlap(di, dj)?;
    if let Some(v) = a_closed_form(di, dj)? {
        return Ok((v, Provenance::ClosedForm));
    }
    for d in [di, dj] {
        if !has_finite_information(d) {
            return Err(Error::InfiniteInformation(format!(
                "{} density {:?} has unbounded sqrt-density derivative at a support edge",
                d.family_name(),
                d
            )));
        }
    }
    a_quadrature(di, dj, cfg).map(|v| (v, Provenance::Quadrature))
}

/// Whether `int psi'^2` is finite for a single density.
pub fn has_finite_information(d: &Density) -> bool {
    let ok = |p: f64| p == 1.0 || p > 2.0;
    match *d {
        Density::Beta { a, b } => ok(a) && ok(b),
        Density::Gamma { shape, .. } => ok(shape),
        _ => true,
    }
}

/// Numeric `<psi_i, psi_j>` over the common support.
pub fn b_quadrature(di: &Density, dj: &Density, cfg: &QuadratureConfig) -> Result<f64> {
    let (support, breaks) = pair_domain(di, dj)?;
    integrate(|x| di.eval_sqrt(x) * dj.eval_sqrt(x), support, &breaks, cfg).map(|e| e.value)
}

/// Numeric `<psi_i', psi_j'>` over the common support.
pub fn a_quadrature(di: &Density, dj: &Density, cfg: &QuadratureConfig) -> Result<f64> {
    let (support, breaks) = pair_domain(di, dj)?;
    integrate(
        |x| di.sqrt_deriv_interior(x) * dj.sqrt_deriv_interior(x),
        support,
        &breaks,
        cfg,
    )
    .map(|e| e.value)
}

fn pair_domain(di: &Density, dj: &Density) -> Result<(crate::quadrature::Interval, Vec<f64>)> {
    let support = di.support().intersect(&dj.support());
    if !support.has_positive_measure() {
        return Err(Error::DisjointSupports);
    }
    let mut breaks = di.breakpoints();
    breaks.extend(dj.breakpoints());
    breaks.retain(|x| support.contains_open(*x));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Ok((support, breaks))
}

fn normal_b(mi: f64, si: f64, mj: f64, sj: f64) -> f64 {
    let v = si * si + sj * sj;
    let d = mi - mj;
    (2.0 * si * sj / v).sqrt() * (-d * d / (4.0 * v)).exp()
}

fn normal_a(mi: f64, si: f64, mj: f64, sj: f64) -> f64 {
    let (vi, vj) = (si * si, sj * sj);
    let alpha = 1.0 / vi + 1.0 / vj;
    let centre = (mi * vj + mj * vi) / (vi + vj);
    let second_moment = 2.0 / alpha + (centre - mi) * (centre - mj);
    normal_b(mi, si, mj, sj) * second_moment / (4.0 * vi * vj)
}

/// `(ln prefactor, s, rate)` shared by gamma-family entries:
/// `psi_i psi_j = exp(ln prefactor) x^{s-1} e^{-rate x}`.
fn gamma_pair(ai: f64, bi: f64, aj: f64, bj: f64) -> (f64, f64, f64) {
    let ln_k = 0.5 * (ai * bi.ln() + aj * bj.ln() - ln_gamma(ai) - ln_gamma(aj));
    (ln_k, 0.5 * (ai + aj), 0.5 * (bi + bj))
}

/// `int x^{p-1} e^{-rate x} dx` in log space.
fn ln_gamma_integral(p: f64, rate: f64) -> f64 {
    ln_gamma(p) - p * rate.ln()
}

fn gamma_b(ai: f64, bi: f64, aj: f64, bj: f64) -> f64 {
    let (ln_k, s, r) = gamma_pair(ai, bi, aj, bj);
    (ln_k + ln_gamma_integral(s, r)).exp()
}

fn gamma_a(ai: f64, bi: f64, aj: f64, bj: f64) -> Result<f64> {
    let (ln_k, s, r) = gamma_pair(ai, bi, aj, bj);
    // psi' = ((shape - 1) / (2x) - rate / 2) psi
    let c2 = 0.25 * (ai - 1.0) * (aj - 1.0);
    let c1 = -0.25 * ((ai - 1.0) * bj + (aj - 1.0) * bi);
    let c0 = 0.25 * bi * bj;
    let mut total = c0 * (ln_k + ln_gamma_integral(s, r)).exp();
    if c1 != 0.0 {
        if s <= 1.0 {
            return Err(Error::InfiniteInformation(format!(
                "gamma shapes ({ai}, {aj}) need mean shape > 1"
            )));
        }
        total += c1 * (ln_k + ln_gamma_integral(s - 1.0, r)).exp();
    }
    if c2 != 0.0 {
        if s <= 2.0 {
            return Err(Error::InfiniteInformation(format!(
                "gamma shapes ({ai}, {aj}) need mean shape > 2"
            )));
        }
        total += c2 * (ln_k + ln_gamma_integral(s - 2.0, r)).exp();
    }
    Ok(total)
}

fn beta_b(ai: f64, bi: f64, aj: f64, bj: f64) -> f64 {
    let ln_c = -0.5 * (ln_beta(ai, bi) + ln_beta(aj, bj));
    (ln_c + ln_beta(0.5 * (ai + aj), 0.5 * (bi + bj))).exp()
}

fn beta_a(ai: f64, bi: f64, aj: f64, bj: f64) -> Result<f64> {
    let ln_c = -0.5 * (ln_beta(ai, bi) + ln_beta(aj, bj));
    let (sa, sb) = (0.5 * (ai + aj), 0.5 * (bi + bj));
    // psi' = C ((a-1)/2 x^{(a-3)/2} (1-x)^{(b-1)/2} - (b-1)/2 x^{(a-1)/2} (1-x)^{(b-3)/2})
    let terms = [
        (0.25 * (ai - 1.0) * (aj - 1.0), sa - 2.0, sb),
        (
            -0.25 * ((ai - 1.0) * (bj - 1.0) + (bi - 1.0) * (aj - 1.0)),
            sa - 1.0,
            sb - 1.0,
        ),
        (0.25 * (bi - 1.0) * (bj - 1.0), sa, sb - 2.0),
    ];
    let mut total = 0.0;
    for (coef, p, q) in terms {
        if coef == 0.0 {
            continue;
        }
        if p <= 0.0 || q <= 0.0 {
            return Err(Error::InfiniteInformation(format!(
                "beta shapes ({ai}, {bi}) and ({aj}, {bj}) give a divergent term B({p}, {q})"
            )));
        }
        total += coef * (ln_c + ln_beta(p, q)).exp();
    }
    Ok(total)
}

fn b_closed_form(di: &Density, dj: &Density) -> Option<f64> {
    use Density::*;
    match (di, dj) {
        (Normal { mu: mi, sigma: si }, Normal { mu: mj, sigma: sj })
        | (LogNormal { mu: mi, sigma: si }, LogNormal { mu: mj, sigma: sj }) => {
            Some(normal_b(*mi, *si, *mj, *sj))
        }
        (Beta { a: ai, b: bi }, Beta { a: aj, b: bj }) => Some(beta_b(*ai, *bi, *aj, *bj)),
        _ => {
            let (ai, bi) = gamma_params(di)?;
            let (aj, bj) = gamma_params(dj)?;
            Some(gamma_b(ai, bi, aj, bj))
        }
    }
}

fn a_closed_form(di: &Density, dj: &Density) -> Result<Option<f64>> {
    use Density::*;
    match (di, dj) {
        (Normal { mu: mi, sigma: si }, Normal { mu: mj, sigma: sj }) => {
            Ok(Some(normal_a(*mi, *si, *mj, *sj)))
        }
        (Beta { a: ai, b: bi }, Beta { a: aj, b: bj }) => beta_a(*ai, *bi, *aj, *bj).map(Some),
        _ => match (gamma_params(di), gamma_params(dj)) {
            (Some((ai, bi)), Some((aj, bj))) => gamma_a(ai, bi, aj, bj).map(Some),
            _ => Ok(None),
        },
    }
}

/// Exponential is gamma with shape 1.
fn gamma_params(d: &Density) -> Option<(f64, f64)> {
    match *d {
        Density::Gamma { shape, rate } => Some((shape, rate)),
        Density::Exponential { rate } => Some((1.0, rate)),
        _ => None,
    }
}

/// Assembles `A` and `B` for a panel.
pub fn gram(panel: &Panel, cfg: &QuadratureConfig) -> Result<GramPair> {
    gram_cancellable(panel, cfg, &AtomicBool::new(false))
}

/// Like [`gram`], checking `cancel` before each entry. Entries are computed
/// in parallel; the result does not depend on scheduling.
pub fn gram_cancellable(
    panel: &Panel,
    cfg: &QuadratureConfig,
    cancel: &AtomicBool,
) -> Result<GramPair> {
    cfg.validate()?;
    let m = panel.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let experts = panel.experts();

    let entries: Vec<Result<(f64, Provenance, f64, Provenance)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if cancel.load(Ordering::Relaxed) {
                return Err(Error::Cancelled);
            }
            let (di, dj) = (&experts[i], &experts[j]);
            let annotate = |e: Error| Error::AtEntry {
                i,
                j,
                source: Box::new(e),
            };
            let (bv, bp) = if i == j {
                (1.0, Provenance::ClosedForm)
            } else {
                b_entry_with_provenance(di, dj, cfg).map_err(annotate)?
            };
            let (av, ap) = a_entry_with_provenance(di, dj, cfg).map_err(annotate)?;
            Ok((av, ap, bv, bp))
        })
        .collect();

    let mut a = DMatrix::zeros(m, m);
    let mut b = DMatrix::zeros(m, m);
    let mut provenance = vec![Provenance::ClosedForm; m * m];
    for (&(i, j), entry) in pairs.iter().zip(entries) {
        let (av, ap, bv, bp) = entry?;
        a[(i, j)] = av;
        a[(j, i)] = av;
        b[(i, j)] = bv;
        b[(j, i)] = bv;
        // closed form only if both matrices got one
        let p = if ap == Provenance::Quadrature || bp == Provenance::Quadrature {
            Provenance::Quadrature
        } else {
            Provenance::ClosedForm
        };
        provenance[i * m + j] = p;
        provenance[j * m + i] = p;
    }
    GramPair::from_matrices(a, b, provenance)
}

/// Which of the two Gram matrices a dump holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    A,
    B,
}

impl GramKind {
    fn tag(self) -> &'static str {
        match self {
            GramKind::A => "A",
            GramKind::B => "B",
        }
    }
}

/// Plain-text dump: header `m=<m> kind=A|B`, then one row per line,
/// space-separated, 17 significant digits.
pub fn write_dump(matrix: &DMatrix<f64>, kind: GramKind) -> String {
    let m = matrix.nrows();
    let mut out = format!("m={m} kind={}\n", kind.tag());
    for i in 0..m {
        let row: Vec<String> = (0..m).map(|j| g17(matrix[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_dump(text: &str) -> Result<(GramKind, DMatrix<f64>)> {
    let bad = |msg: &str| Error::InvalidParameter(format!("Gram dump: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let mut m = None;
    let mut kind = None;
    for tok in header.split_whitespace() {
        match tok.split_once('=') {
            Some(("m", v)) => m = v.parse::<usize>().ok(),
            Some(("kind", "A")) => kind = Some(GramKind::A),
            Some(("kind", "B")) => kind = Some(GramKind::B),
            _ => return Err(bad(&format!("unexpected header token {tok:?}"))),
        }
    }
    let m = m.ok_or_else(|| bad("missing m"))?;
    let kind = kind.ok_or_else(|| bad("missing kind"))?;
    let mut data = Vec::with_capacity(m * m);
    for (r, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|e| bad(&format!("row {r}: {e}")))?;
        if row.len() != m {
            return Err(bad(&format!(
                "row {r} has {} entries, expected {m}",
                row.len()
            )));
        }
        data.extend(row);
    }
    if data.len() != m * m {
        return Err(bad(&format!("expected {m} rows")));
    }
    Ok((kind, DMatrix::from_row_slice(m, m, &data)))
}
