//! Panel files, pooling reports and curve CSV.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::panel::Panel;
use crate::pooling::{CurvePoint, PooledPrior};

/// Name used for the whole panel when a file defines no conditions.
pub const ALL_CONDITION: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertEntry {
    pub label: String,
    pub density: Density,
}

/// `{"experts": [{"label", "density"}], "conditions": {name: [indices]}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelFile {
    pub experts: Vec<ExpertEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<IndexMap<String, Vec<usize>>>,
}

impl PanelFile {
    /// Parses and validates. JSON errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let file: PanelFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidPanel(format!("malformed panel file: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experts.is_empty() {
            return Err(Error::InvalidPanel("panel file has no experts".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.experts {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::InvalidPanel(format!(
                    "duplicate label {:?}",
                    e.label
                )));
            }
        }
        if let Some(conds) = &self.conditions {
            if conds.is_empty() {
                return Err(Error::InvalidPanel("conditions map is empty".into()));
            }
            for (name, idx) in conds {
                if idx.is_empty() {
                    return Err(Error::InvalidPanel(format!(
                        "condition {name:?} lists no experts"
                    )));
                }
                if let Some(bad) = idx.iter().find(|&&k| k >= self.experts.len()) {
                    return Err(Error::InvalidPanel(format!(
                        "condition {name:?} references expert {bad}, file has {}",
                        self.experts.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn full_panel(&self) -> Result<Panel> {
        Panel::new(
            self.experts.iter().map(|e| e.density.clone()).collect(),
            self.experts.iter().map(|e| e.label.clone()).collect(),
        )
    }

    pub fn condition_names(&self) -> Vec<String> {
        match &self.conditions {
            Some(c) => c.keys().cloned().collect(),
            None => vec![ALL_CONDITION.to_string()],
        }
    }

    /// Panel for one condition; `None` selects the whole file when no
    /// conditions are defined.
    pub fn panel_for(&self, condition: Option<&str>) -> Result<Panel> {
        match (&self.conditions, condition) {
            (None, None) => self.full_panel(),
            (None, Some(ALL_CONDITION)) => self.full_panel(),
            (None, Some(name)) => Err(Error::InvalidPanel(format!(
                "condition {name:?} requested but the file defines no conditions"
            ))),
            (Some(_), None) => Err(Error::InvalidPanel(
                "file defines conditions; choose one".into(),
            )),
            (Some(c), Some(name)) => {
                let idx = c
                    .get(name)
                    .ok_or_else(|| Error::InvalidPanel(format!("unknown condition {name:?}")))?;
                let experts = idx
                    .iter()
                    .map(|&k| self.experts[k].density.clone())
                    .collect();
                let labels = idx.iter().map(|&k| self.experts[k].label.clone()).collect();
                Panel::new(experts, labels)
            }
        }
    }

    /// Every condition's panel in file order.
    pub fn panels(&self) -> Result<Vec<(String, Panel)>> {
        match &self.conditions {
            None => Ok(vec![(ALL_CONDITION.to_string(), self.full_panel()?)]),
            Some(c) => c
                .keys()
                .map(|name| Ok((name.clone(), self.panel_for(Some(name))?)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledValue {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub alpha: Vec<LabeledValue>,
    pub information: f64,
    pub dominant: String,
    pub reduction_percent: f64,
    pub rank: usize,
    pub warnings: Vec<String>,
}

/// Ratio of smallest to largest eigenvalue of `B` below which a full-rank
/// `B` is reported as near-singular.
pub const NEAR_SINGULAR_RATIO: f64 = 1e-8;

impl ConditionReport {
    pub fn from_pooled(name: &str, pp: &PooledPrior) -> Self {
        let labels = pp.panel.labels();
        let m = labels.len();
        let mut warnings = Vec::new();
        if pp.solution.multiplicity_warning {
            warnings.push(
                "smallest eigenvalue is (nearly) repeated; the optimal weights are not unique"
                    .into(),
            );
        }
        if pp.solution.used_reduction {
            warnings.push(format!(
                "B is rank-deficient: effective rank {} of {m}; coincident opinions were merged",
                pp.solution.effective_rank
            ));
        } else if pp.gram.psd.b_min < NEAR_SINGULAR_RATIO * pp.gram.psd.b_max {
            warnings.push(format!(
                "B is near-singular (eigenvalue ratio {:.3e})",
                pp.gram.psd.b_min / pp.gram.psd.b_max
            ));
        }
        if !pp.gram.psd.is_psd() {
            warnings.push(format!(
                "Gram matrices not positive semidefinite within tolerance (min eig A {:.3e}, B {:.3e})",
                pp.gram.psd.a_min, pp.gram.psd.b_min
            ));
        }
        Self {
            name: name.to_string(),
            alpha: labels
                .iter()
                .zip(&pp.alpha)
                .map(|(l, v)| LabeledValue {
                    label: l.clone(),
                    value: *v,
                })
                .collect(),
            information: pp.information,
            dominant: labels[pp.dominant_index].clone(),
            reduction_percent: pp.reduction_percent,
            rank: pp.solution.effective_rank,
            warnings,
        }
    }

    pub fn alpha_values(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a.value).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub conditions: Vec<ConditionReport>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header `x,pooled,<label...>`, one row per point, newline-terminated.
pub fn curve_csv(points: &[CurvePoint], labels: &[String]) -> String {
    let mut out = String::from("x,pooled");
    for l in labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for p in points {
        out.push_str(&g17(p.x));
        out.push(',');
        out.push_str(&g17(p.pooled));
        for v in &p.experts {
            out.push(',');
            out.push_str(&g17(*v));
        }
        out.push('\n');
    }
    out
}
