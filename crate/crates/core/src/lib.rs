//! Minimum-information pooling of expert priors.
//!
//! Each expert prior `f_i` is represented by its square root `psi_i`. The
//! pooled prior is `(sum_i alpha_i psi_i)^2` with weights chosen to minimise
//! its Fisher information `4 a'Aa / a'Ba`, where `A` and `B` are the Gram
//! matrices of `psi_i'` and `psi_i`. The minimiser comes from a symmetric
//! generalised eigenproblem.
//!
//! ```
//! use rootpool::{pool, Density, Panel, QuadratureConfig, DEFAULT_RANK_TOL};
//!
//! let panel = Panel::from_densities(vec![
//!     Density::normal(-1.0, 1.0).unwrap(),
//!     Density::normal(1.49, 1.49).unwrap(),
//! ])
//! .unwrap();
//! let pooled = pool(&panel, &QuadratureConfig::default(), DEFAULT_RANK_TOL).unwrap();
//! assert!((pooled.alpha[0] - 0.27).abs() < 0.01);
//! assert!((pooled.reduction_percent - 15.8).abs() < 0.5);
//! ```

pub mod density;
pub mod error;
pub mod io;
pub mod kernels;
pub mod numfmt;
pub mod oracle;
pub mod panel;
pub mod pooling;
pub mod quadrature;
pub mod solver;

pub use density::{Density, Tabulated};
pub use error::{Error, Result};
pub use io::{ConditionReport, PanelFile, Report};
pub use kernels::{a_entry, b_entry, gram, gram_cancellable, GramPair, Provenance};
pub use oracle::{fisher_direct, search_alpha, search_alpha_nonneg, SearchConfig, SearchResult};
pub use panel::Panel;
pub use pooling::{dominant_component, pool, pool_cancellable, CurvePoint, PooledPrior};
pub use quadrature::{quad_inner, Interval, QuadratureConfig, UnboundedTransform};
pub use solver::{
    basis_transform, min_rayleigh, rayleigh, reduce_rank, PoolingSolution, RankReduction,
    DEFAULT_RANK_TOL,
};
