//! Pseudo-arclength continuation of equilibria, codimension-one test
//! functions and two-parameter continuation of fold and Hopf loci.

pub mod engine;
mod equilibrium;
mod loci;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamName, ParameterSet, State};

pub use engine::{StepSettings, Termination};
pub use equilibrium::{
    branch_test, continue_equilibrium, continue_from_point, fold_test, hopf_test, refine_bifurcation,
    switch_branch, Branch, BranchPoint, BranchSettings, Direction, HopfTest,
};
pub use loci::{
    continue_fold_locus, continue_hopf_locus, detect_codim2, LocusBounds, LocusKind, LocusPoint,
    TwoParamLocus,
};

/// Kind of a detected bifurcation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BifurcationKind {
    Fold,
    Transcritical,
    Hopf,
    Cusp,
    BogdanovTakens,
    Lpc,
}

impl BifurcationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BifurcationKind::Fold => "fold",
            BifurcationKind::Transcritical => "transcritical",
            BifurcationKind::Hopf => "hopf",
            BifurcationKind::Cusp => "cusp",
            BifurcationKind::BogdanovTakens => "bogdanov_takens",
            BifurcationKind::Lpc => "lpc",
        }
    }

    /// Short label used in bifurcation tables.
    pub fn label(self) -> &'static str {
        match self {
            BifurcationKind::Fold => "SN",
            BifurcationKind::Transcritical => "TR",
            BifurcationKind::Hopf => "H",
            BifurcationKind::Cusp => "CP",
            BifurcationKind::BogdanovTakens => "BT",
            BifurcationKind::Lpc => "LPC",
        }
    }
}

impl fmt::Display for BifurcationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BifurcationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fold" | "sn" => Ok(BifurcationKind::Fold),
            "transcritical" | "tr" | "bp" => Ok(BifurcationKind::Transcritical),
            "hopf" | "h" => Ok(BifurcationKind::Hopf),
            "cusp" | "cp" => Ok(BifurcationKind::Cusp),
            "bogdanov_takens" | "bt" => Ok(BifurcationKind::BogdanovTakens),
            "lpc" => Ok(BifurcationKind::Lpc),
            other => Err(Error::InvalidInput(format!("unknown bifurcation kind '{other}'"))),
        }
    }
}

/// A refined bifurcation point.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationPoint {
    pub kind: BifurcationKind,
    pub state: State,
    pub params: ParameterSet,
    /// Active parameters: one for codimension one, two for codimension two.
    pub active: Vec<ParamName>,
    /// Value of the defining test function at the refined point.
    pub residual: f64,
    pub eigenvalues: [Complex64; 2],
    /// Unit tangent of the curve the point was found on.
    pub tangent: Vec<f64>,
    pub arclength: f64,
    /// Index of the accepted point preceding the bifurcation.
    pub index: usize,
}

impl BifurcationPoint {
    pub fn param(&self, name: ParamName) -> f64 {
        self.params.get(name)
    }
}
