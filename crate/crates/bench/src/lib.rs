//! Shared fixtures for the benchmarks.

use rootpool::{Density, Panel, PanelFile};

pub fn two_normal() -> Panel {
    Panel::from_densities(vec![
        Density::normal(-1.0, 1.0).unwrap(),
        Density::normal(1.49, 1.49).unwrap(),
    ])
    .unwrap()
}

/// Six log-normal experts; every Gram entry of `A` goes through quadrature.
pub fn ecology_condition(name: &str) -> Panel {
    let text = include_str!("../../../data/ecology_ticks.json");
    PanelFile::parse(text)
        .unwrap()
        .panel_for(Some(name))
        .unwrap()
}

/// `m` normal experts with spread-out locations and scales.
pub fn normal_panel(m: usize) -> Panel {
    Panel::from_densities(
        (0..m)
            .map(|k| Density::normal(k as f64 * 0.7 - 2.0, 0.6 + 0.25 * k as f64).unwrap())
            .collect(),
    )
    .unwrap()
}
