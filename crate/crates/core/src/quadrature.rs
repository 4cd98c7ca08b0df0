//! Globally adaptive Gauss–Kronrod (10/21-point) quadrature.
//!
//! Every numeric inner product in the crate goes through [`integrate`]. The
//! integration domain is first split at caller-supplied breakpoints (density
//! modes, quantiles, support edges); semi-infinite end pieces are mapped onto
//! `(0, 1)` by the configured variable change. All pieces then share one
//! priority queue: the piece with the largest error estimate is bisected until
//! the summed error satisfies `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kronrod abscissae on `[0, 1]`; odd indices are the 10-point Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_983_180_348,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Variable change used for semi-infinite pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnboundedTransform {
    /// `x = x0 + s * t / (1 - t)`
    RationalMap,
    /// `x = x0 - s * ln(1 - t)`
    ExpMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisections allowed beyond the initial breakpoint partition.
    pub max_subdivisions: usize,
    pub unbounded_transform: UnboundedTransform,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
            unbounded_transform: UnboundedTransform::RationalMap,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidParameter(
                "max_subdivisions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A possibly unbounded interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    /// Convex hull of the two intervals.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Positive length (possibly infinite).
    pub fn has_positive_measure(&self) -> bool {
        self.hi > self.lo
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Value and error estimate of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

/// Integrates `g` over `support` with no interior breakpoints.
///
/// Doubly infinite supports are split at the origin.
pub fn quad_inner<F>(g: F, support: Interval, cfg: &QuadratureConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(g, support, &[], cfg).map(|e| e.value)
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Finite,
    /// `x = x0 + s * phi(t)`
    Right {
        x0: f64,
        s: f64,
    },
    /// `x = x0 - s * phi(t)`
    Left {
        x0: f64,
        s: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    map: Map,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

struct Mapped<'a, F> {
    g: &'a F,
    transform: UnboundedTransform,
}

impl<F: Fn(f64) -> f64> Mapped<'_, F> {
    #[inline]
    fn eval(&self, map: Map, t: f64) -> f64 {
        match map {
            Map::Finite => (self.g)(t),
            Map::Right { x0, s } => {
                let (phi, dphi) = self.phi(t);
                let v = (self.g)(x0 + s * phi);
                if v == 0.0 {
                    0.0
                } else {
                    v * s * dphi
                }
            }
            Map::Left { x0, s } => {
                let (phi, dphi) = self.phi(t);
                let v = (self.g)(x0 - s * phi);
                if v == 0.0 {
                    0.0
                } else {
                    v * s * dphi
                }
            }
        }
    }

    #[inline]
    fn phi(&self, t: f64) -> (f64, f64) {
        let u = 1.0 - t;
        match self.transform {
            UnboundedTransform::RationalMap => (t / u, 1.0 / (u * u)),
            UnboundedTransform::ExpMap => (-(u.ln()), 1.0 / u),
        }
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / resasc).powf(1.5);
        e = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * resabs);
    }
    e
}

/// One 21-point Kronrod evaluation with the embedded 10-point Gauss error estimate.
fn gk21<F: Fn(f64) -> f64>(f: &Mapped<'_, F>, map: Map, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f.eval(map, center);
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut resabs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f.eval(map, center - dx);
        let f2 = f.eval(map, center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let err = rescale_error(
        (res_k - res_g) * half,
        resabs * half.abs(),
        resasc * half.abs(),
    );
    (result, err)
}

/// Builds the initial partition from the support and breakpoints.
fn initial_pieces(support: Interval, breaks: &[f64]) -> Vec<(f64, f64, Map)> {
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && support.contains_open(*x))
        .collect();
    if support.lo.is_finite() {
        pts.push(support.lo);
    }
    if support.hi.is_finite() {
        pts.push(support.hi);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.is_empty() {
        // doubly infinite, nothing to anchor on
        pts.push(0.0);
    }

    let mut out = Vec::with_capacity(pts.len() + 1);
    let tail_scale = |near: f64, far: Option<f64>| -> f64 {
        match far {
            Some(f) if (near - f).abs() > 0.0 => (near - f).abs(),
            _ => near.abs().max(1.0),
        }
    };
    if support.lo == f64::NEG_INFINITY {
        let x0 = pts[0];
        let s = tail_scale(x0, pts.get(1).copied());
        out.push((0.0, 1.0, Map::Left { x0, s }));
    }
    for w in pts.windows(2) {
        out.push((w[0], w[1], Map::Finite));
    }
    if support.hi == f64::INFINITY {
        let n = pts.len();
        let x0 = pts[n - 1];
        let s = tail_scale(x0, if n >= 2 { Some(pts[n - 2]) } else { None });
        out.push((0.0, 1.0, Map::Right { x0, s }));
    }
    out
}

/// Integrates `g` over `support`, pre-splitting at `breaks`.
///
/// Breakpoints outside the open support are ignored. The integrand is never
/// evaluated at a piece endpoint, so integrable endpoint singularities are
/// handled by bisection.
pub fn integrate<F>(
    g: F,
    support: Interval,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if support.lo.is_nan() || support.hi.is_nan() {
        return Err(Error::InvalidRange("NaN integration limit".into()));
    }
    if support.hi <= support.lo {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }

    let f = Mapped {
        g: &g,
        transform: cfg.unbounded_transform,
    };
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Piece> = Vec::new();
    for (a, b, map) in initial_pieces(support, breaks) {
        let (value, error) = gk21(&f, map, a, b);
        heap.push(Piece {
            a,
            b,
            map,
            value,
            error,
        });
    }

    let totals = |heap: &BinaryHeap<Piece>, frozen: &[Piece]| -> (f64, f64) {
        let mut pieces: Vec<&Piece> = heap.iter().chain(frozen.iter()).collect();
        pieces.sort_by(|p, q| {
            p.a.total_cmp(&q.a)
                .then_with(|| p.b.total_cmp(&q.b))
                .then_with(|| map_key(p.map).total_cmp(&map_key(q.map)))
        });
        pieces
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
    };

    let (mut value, mut error) = totals(&heap, &frozen);
    let mut subdivisions = 0usize;
    loop {
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure {
                subdivisions,
                estimate: value,
                error,
            });
        }
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= tol {
            let (v, e) = totals(&heap, &frozen);
            value = v;
            error = e;
            if error <= cfg.abs_tol.max(cfg.rel_tol * value.abs()) {
                return Ok(Estimate {
                    value,
                    error,
                    subdivisions,
                });
            }
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::QuadratureFailure {
                subdivisions,
                estimate: value,
                error,
            });
        };
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::QuadratureFailure {
                subdivisions,
                estimate: value,
                error,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b)
            || (worst.b - worst.a) <= 8.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs())
        {
            frozen.push(worst);
            continue;
        }
        subdivisions += 1;
        let (v1, e1) = gk21(&f, worst.map, worst.a, mid);
        let (v2, e2) = gk21(&f, worst.map, mid, worst.b);
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            map: worst.map,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            map: worst.map,
            value: v2,
            error: e2,
        });
        // incremental sums drift; resync now and then
        if subdivisions.is_multiple_of(64) {
            let (v, e) = totals(&heap, &frozen);
            value = v;
            error = e;
        }
    }
}

fn map_key(m: Map) -> f64 {
    match m {
        Map::Left { x0, .. } => x0 - 1e300,
        Map::Finite => 0.0,
        Map::Right { x0, .. } => x0 + 1e300,
    }
}
