use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::quadrature::Interval;

/// Ordered expert priors to be pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    experts: Vec<Density>,
    labels: Vec<String>,
}

impl Panel {
    /// Builds a panel, checking that every pair of supports overlaps on a set
    /// of positive measure.
    pub fn new(experts: Vec<Density>, labels: Vec<String>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidPanel(
                "panel needs at least one expert".into(),
            ));
        }
        if experts.len() != labels.len() {
            return Err(Error::InvalidPanel(format!(
                "{} experts but {} labels",
                experts.len(),
                labels.len()
            )));
        }
        for (d, l) in experts.iter().zip(&labels) {
            d.validate()
                .map_err(|e| Error::InvalidPanel(format!("expert {l:?}: {e}")))?;
        }
        for i in 0..experts.len() {
            for j in i + 1..experts.len() {
                let overlap = experts[i].support().intersect(&experts[j].support());
                if !overlap.has_positive_measure() {
                    return Err(Error::InvalidPanel(format!(
                        "experts {:?} and {:?} have disjoint supports",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Self { experts, labels })
    }

    /// Panel with labels `expert1`, `expert2`, ...
    pub fn from_densities(experts: Vec<Density>) -> Result<Self> {
        let labels = (1..=experts.len()).map(|k| format!("expert{k}")).collect();
        Self::new(experts, labels)
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn experts(&self) -> &[Density] {
        &self.experts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn expert(&self, i: usize) -> &Density {
        &self.experts[i]
    }

    /// Sub-panel with the given expert indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut experts = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &k in indices {
            if k >= self.len() {
                return Err(Error::InvalidPanel(format!(
                    "index {k} out of range for panel of {}",
                    self.len()
                )));
            }
            experts.push(self.experts[k].clone());
            labels.push(self.labels[k].clone());
        }
        Self::new(experts, labels)
    }

    /// Union (hull) of all expert supports.
    pub fn support_hull(&self) -> Interval {
        self.experts
            .iter()
            .map(Density::support)
            .reduce(|a, b| a.hull(&b))
            .expect("panel is non-empty")
    }

    /// Hull of the experts' effective supports.
    pub fn effective_hull(&self) -> Interval {
        self.experts
            .iter()
            .map(Density::effective_support)
            .reduce(|a, b| a.hull(&b))
            .expect("panel is non-empty")
    }

    /// Sorted union of every expert's breakpoints and finite support edges.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = Vec::new();
        for d in &self.experts {
            pts.extend(d.breakpoints());
            let s = d.support();
            pts.extend([s.lo, s.hi].into_iter().filter(|x| x.is_finite()));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}
