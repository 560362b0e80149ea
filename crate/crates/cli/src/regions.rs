//! Labels parameter points with the regions A to G of the `(h, k)` plane by
//! counting attractors.
//!
//! Stable equilibria come from the equilibrium search. Periodic attractors
//! are detected by long integrations from a fixed set of initial states.
//!
//! | label | attractors |
//! |-------|------------|
//! | A | a periodic attractor and no stable equilibrium |
//! | B | a periodic attractor and at least one stable equilibrium |
//! | C | one stable equilibrium on `f = 1/2`, which is the only equilibrium |
//! | D | one stable equilibrium, on `x = 0` |
//! | E | two or more stable equilibria and no periodic attractor |
//! | F | one stable equilibrium on `f = 1/2`, among other equilibria |
//! | G | one stable equilibrium, on `x = 1` |
//!
//! Points that fit none of these rows get the label `?`.

use serde::Serialize;

use fgbif::model::{BranchFamily, ForestGrass, ParameterSet, State};
use fgbif::odeint::{classify_attractor, integrate, AttractorKind, Tolerances};
use fgbif::solver::{find_equilibria, SeedGrid};

/// Initial states of the periodic-attractor probes.
pub const PROBES: [(f64, f64); 6] = [(0.1, 0.1), (0.1, 0.9), (0.9, 0.1), (0.9, 0.9), (0.65, 0.2), (0.35, 0.8)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSample {
    pub first: f64,
    pub second: f64,
    pub label: String,
    /// Equilibria inside the unit square.
    pub equilibria: usize,
    pub stable: usize,
    pub periodic: bool,
}

/// Tolerances of the probe integrations.
pub fn probe_tolerances() -> Tolerances {
    Tolerances { rtol: 1e-7, atol: 1e-10, ..Tolerances::default() }
}

/// Attractor census of one parameter point.
pub fn census(p: &ParameterSet, horizon: f64) -> (usize, Vec<Option<BranchFamily>>, bool) {
    let equilibria: Vec<_> = find_equilibria(p, &SeedGrid::default())
        .into_iter()
        .filter(|e| e.state.is_physical())
        .collect();
    let stable: Vec<_> = equilibria.iter().filter(|e| e.stability.is_stable()).map(|e| e.family).collect();
    let tol = probe_tolerances();
    let periodic = PROBES.iter().any(|&(f, x)| {
        integrate(&ForestGrass, State::new(f, x), p, (0.0, horizon), &tol)
            .and_then(|traj| classify_attractor(&traj, 0.2))
            .map(|v| v.kind == AttractorKind::Periodic)
            .unwrap_or(false)
    });
    (equilibria.len(), stable, periodic)
}

/// Applies the table in the module documentation.
pub fn label(equilibria: usize, stable: &[Option<BranchFamily>], periodic: bool) -> &'static str {
    match (periodic, stable) {
        (true, []) => "A",
        (true, _) => "B",
        (false, [_, _, ..]) => "E",
        (false, [Some(BranchFamily::X0)]) => "D",
        (false, [Some(BranchFamily::X1)]) => "G",
        (false, [Some(BranchFamily::FHalf)]) if equilibria == 1 => "C",
        (false, [Some(BranchFamily::FHalf)]) => "F",
        _ => "?",
    }
}

pub fn classify_point(p: &ParameterSet, first: f64, second: f64, horizon: f64) -> RegionSample {
    let (equilibria, stable, periodic) = census(p, horizon);
    RegionSample {
        first,
        second,
        label: label(equilibria, &stable, periodic).to_string(),
        equilibria,
        stable: stable.len(),
        periodic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fgbif::model::ParamName;

    #[test]
    fn label_table() {
        use BranchFamily::*;
        assert_eq!(label(1, &[], true), "A");
        assert_eq!(label(3, &[Some(X0)], true), "B");
        assert_eq!(label(5, &[Some(X0), Some(X1)], false), "E");
        assert_eq!(label(3, &[Some(X0)], false), "D");
        assert_eq!(label(3, &[Some(X1)], false), "G");
        assert_eq!(label(1, &[Some(FHalf)], false), "C");
        assert_eq!(label(3, &[Some(FHalf)], false), "F");
        assert_eq!(label(2, &[], false), "?");
    }

    #[test]
    fn reference_point_is_bistable() {
        let p = ParameterSet { nu: 0.2, ..ParameterSet::default() };
        assert_eq!(classify_point(&p, p.h, p.k, 600.0).label, "B");
    }

    #[test]
    fn oscillating_point_is_region_a() {
        let p = ParameterSet { nu: 0.2, ..ParameterSet::default() }.with(ParamName::K, 10.0);
        assert_eq!(classify_point(&p, p.h, p.k, 600.0).label, "A");
    }
}
