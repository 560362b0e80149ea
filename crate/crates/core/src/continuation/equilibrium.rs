//! One-parameter continuation of equilibria with fold, branch-point and
//! Hopf detection.

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::engine::{self, Curve, CurvePoint, StepSettings, Termination};
use super::{BifurcationKind, BifurcationPoint};
use crate::error::{Error, Result};
use crate::model::{ParamName, ParameterSet, PlanarSystem, State};
use crate::solver::{eigen2, Equilibrium, Stability};

/// Bracket width (in arclength) at which refinement stops.
const REFINE_WIDTH: f64 = 1e-10;
/// Arclength offset of the probes on either side of a branch point.
const BRANCH_POINT_GAP: f64 = 1e-6;
/// Largest `|x|` treated as inside the continuation domain.
const X_LIMIT: f64 = 1e3;
/// Closest approach to `f = 1` before the branch is stopped.
const F_MARGIN: f64 = 1e-9;

/// Equilibrium manifold `{ rhs(f, x; p) = 0 }` in `(f, x, p)`.
pub(crate) struct EquilibriumCurve<'a, S> {
    pub system: &'a S,
    pub base: ParameterSet,
    pub active: ParamName,
}

impl<S: PlanarSystem> EquilibriumCurve<'_, S> {
    pub fn unpack(&self, z: &DVector<f64>) -> (State, ParameterSet) {
        (State::new(z[0], z[1]), self.base.with(self.active, z[2]))
    }

    pub fn pack(&self, state: State, p: &ParameterSet) -> DVector<f64> {
        DVector::from_vec(vec![state.f, state.x, p.get(self.active)])
    }
}

impl<S: PlanarSystem> Curve for EquilibriumCurve<'_, S> {
    fn dim(&self) -> usize {
        3
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let (s, p) = self.unpack(z);
        let r = self.system.rhs(s, &p);
        DVector::from_vec(vec![r[0], r[1]])
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (s, p) = self.unpack(z);
        let j = self.system.jacobian(s, &p);
        let fp = self.system.param_derivative(s, &p, self.active);
        DMatrix::from_row_slice(2, 3, &[j[(0, 0)], j[(0, 1)], fp[0], j[(1, 0)], j[(1, 1)], fp[1]])
    }

    fn in_domain(&self, z: &DVector<f64>) -> bool {
        z[0] >= 0.0 && z[0] <= 1.0 - F_MARGIN && z[1].abs() <= X_LIMIT
    }
}

/// Planar Hopf test: the trace, meaningful only while `det J > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfTest {
    pub value: f64,
    /// False when `det J <= 0`, where a zero trace is a neutral saddle.
    pub valid: bool,
}

/// A point on an equilibrium branch with its test-function values.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub state: State,
    pub params: ParameterSet,
    /// Unit tangent in `(f, x, p)`.
    pub tangent: [f64; 3],
    pub fold: f64,
    pub branch: f64,
    pub hopf: HopfTest,
    pub eigenvalues: [Complex64; 2],
    pub stability: Stability,
    pub arclength: f64,
    pub residual: f64,
}

/// `det J`: changes sign at folds and at branch points.
pub fn fold_test(point: &BranchPoint) -> f64 {
    point.fold
}

/// Determinant of `[J, F_p; tangent^T]`. It keeps its sign through folds and
/// changes sign where two equilibrium branches cross.
pub fn branch_test(point: &BranchPoint) -> f64 {
    point.branch
}

/// Trace of `J` guarded by the sign of `det J`.
pub fn hopf_test(point: &BranchPoint) -> HopfTest {
    point.hopf
}

fn bordered_det(jac: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    Matrix3::new(
        jac[(0, 0)], jac[(0, 1)], jac[(0, 2)],
        jac[(1, 0)], jac[(1, 1)], jac[(1, 2)],
        v[0], v[1], v[2],
    )
    .determinant()
}

fn state_jacobian(jac: &DMatrix<f64>) -> nalgebra::Matrix2<f64> {
    nalgebra::Matrix2::new(jac[(0, 0)], jac[(0, 1)], jac[(1, 0)], jac[(1, 1)])
}

impl<S: PlanarSystem> EquilibriumCurve<'_, S> {
    fn branch_point(&self, cp: &CurvePoint) -> BranchPoint {
        let (state, params) = self.unpack(&cp.z);
        let jac = self.jacobian(&cp.z);
        let j = state_jacobian(&jac);
        let det = j.determinant();
        let eigenvalues = eigen2(&j);
        BranchPoint {
            state,
            params,
            tangent: [cp.v[0], cp.v[1], cp.v[2]],
            fold: det,
            branch: bordered_det(&jac, &cp.v),
            hopf: HopfTest { value: j.trace(), valid: det > 0.0 },
            eigenvalues,
            stability: Stability::classify(&eigenvalues),
            arclength: cp.arclength,
            residual: self.residual(&cp.z).norm(),
        }
    }

    fn test_value(&self, kind: BifurcationKind, z: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let jac = self.jacobian(z);
        match kind {
            BifurcationKind::Transcritical => bordered_det(&jac, v),
            BifurcationKind::Hopf => state_jacobian(&jac).trace(),
            _ => state_jacobian(&jac).determinant(),
        }
    }
}

/// Initial direction of a branch in terms of the active parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Bounds and step control for [`continue_equilibrium`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSettings {
    pub param_min: f64,
    pub param_max: f64,
    pub direction: Direction,
    pub step: StepSettings,
}

impl BranchSettings {
    pub fn new(param_min: f64, param_max: f64, direction: Direction) -> Self {
        Self { param_min, param_max, direction, step: StepSettings::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.param_min < self.param_max) {
            return Err(Error::InvalidInput("parameter bounds must satisfy min < max".into()));
        }
        self.step.validate()
    }
}

/// An ordered equilibrium branch with its refined bifurcations.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub active: ParamName,
    pub points: Vec<BranchPoint>,
    pub bifurcations: Vec<BifurcationPoint>,
    pub termination: Termination,
    pub(crate) curve_points: Vec<CurvePoint>,
}

impl Branch {
    /// Bifurcations of one kind, in branch order.
    pub fn of_kind(&self, kind: BifurcationKind) -> impl Iterator<Item = &BifurcationPoint> {
        self.bifurcations.iter().filter(move |b| b.kind == kind)
    }
}

/// Continues an equilibrium in one parameter through folds, detecting and
/// refining folds, transcritical (branch) points and Hopf points.
pub fn continue_equilibrium<S: PlanarSystem>(
    system: &S,
    start: &Equilibrium,
    active: ParamName,
    settings: &BranchSettings,
) -> Result<Branch> {
    settings.validate()?;
    let curve = EquilibriumCurve { system, base: start.params, active };
    let p0 = start.params.get(active);
    if !(settings.param_min..=settings.param_max).contains(&p0) {
        return Err(Error::InvalidInput(format!(
            "start value {active} = {p0} outside [{}, {}]",
            settings.param_min, settings.param_max
        )));
    }
    let z0 = curve.pack(start.state, &start.params);
    if curve.residual(&z0).norm() > 1e-8 {
        return Err(Error::InvalidInput("start point is not an equilibrium".into()));
    }
    let sign = match settings.direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    let orient = DVector::from_vec(vec![0.0, 0.0, sign]);
    let jac = curve.jacobian(&z0);
    let mut v0 = engine::tangent(&jac, &orient).or_else(|_| {
        // start at a fold: the tangent is orthogonal to the parameter axis
        engine::tangent(&jac, &DVector::from_vec(vec![sign, 0.0, 0.0]))
    })?;
    if v0[2] * sign < 0.0 {
        v0 = -v0;
    }
    continue_from_point(system, start.params, active, z0, v0, settings)
}

/// Continues from a point `(f, x, p)` on the branch along the unit direction `v0`.
pub fn continue_from_point<S: PlanarSystem>(
    system: &S,
    base: ParameterSet,
    active: ParamName,
    z0: DVector<f64>,
    v0: DVector<f64>,
    settings: &BranchSettings,
) -> Result<Branch> {
    settings.validate()?;
    let mut curve = EquilibriumCurve { system, base, active };
    let (z0, v0, _) = engine::correct(&curve, z0, v0, &settings.step)?;
    let start = CurvePoint { z: z0, v: v0, arclength: 0.0, iterations: 0 };
    let (lo, hi) = (settings.param_min, settings.param_max);
    let (cps, termination) =
        engine::trace_curve(&mut curve, start, &settings.step, |p| p.z[2] < lo || p.z[2] > hi)?;
    let points: Vec<BranchPoint> = cps.iter().map(|cp| curve.branch_point(cp)).collect();
    let bifurcations = detect(&curve, &cps, &points, &settings.step);
    Ok(Branch { active, points, bifurcations, termination, curve_points: cps })
}

fn detect<S: PlanarSystem>(
    curve: &EquilibriumCurve<'_, S>,
    cps: &[CurvePoint],
    points: &[BranchPoint],
    step: &StepSettings,
) -> Vec<BifurcationPoint> {
    let mut found = Vec::new();
    for i in 0..points.len().saturating_sub(1) {
        let (a, b) = (&points[i], &points[i + 1]);
        if a.branch.signum() != b.branch.signum() {
            if let Ok(bp) = refine_pair(curve, &cps[i], &cps[i + 1], i, BifurcationKind::Transcritical, step) {
                if a.fold.signum() == b.fold.signum() {
                    found.extend(fold_beside_branch_point(curve, &cps[i], &cps[i + 1], &bp, step));
                }
                found.push(bp);
            }
        } else if a.fold.signum() != b.fold.signum() {
            if let Ok(bp) = refine_pair(curve, &cps[i], &cps[i + 1], i, BifurcationKind::Fold, step) {
                found.push(bp);
            }
        }
        if a.hopf.valid && b.hopf.valid && a.hopf.value.signum() != b.hopf.value.signum() {
            if let Ok(bp) = refine_pair(curve, &cps[i], &cps[i + 1], i, BifurcationKind::Hopf, step) {
                found.push(bp);
            }
        }
    }
    found.sort_by(|a, b| a.arclength.total_cmp(&b.arclength));
    found
}

/// Finds a fold lying in the same step as a refined branch point, where
/// the sign of `det J` agrees at both ends of the step.
fn fold_beside_branch_point<S: PlanarSystem>(
    curve: &EquilibriumCurve<'_, S>,
    a: &CurvePoint,
    b: &CurvePoint,
    branch_point: &BifurcationPoint,
    step: &StepSettings,
) -> Option<BifurcationPoint> {
    let z = curve.pack(branch_point.state, &branch_point.params);
    let d = a.v.dot(&(&z - &a.z));
    let before = engine::point_between(curve, a, b, d - BRANCH_POINT_GAP, step).ok()?;
    let after = engine::point_between(curve, a, b, d + BRANCH_POINT_GAP, step).ok()?;
    let det = |p: &CurvePoint| curve.test_value(BifurcationKind::Fold, &p.z, &p.v);
    let (lo, hi) = if det(a).signum() != det(&before).signum() { (a, &before) } else { (&after, b) };
    if det(lo).signum() == det(hi).signum() {
        return None;
    }
    refine_pair(curve, lo, hi, branch_point.index, BifurcationKind::Fold, step).ok()
}

fn refine_pair<S: PlanarSystem>(
    curve: &EquilibriumCurve<'_, S>,
    a: &CurvePoint,
    b: &CurvePoint,
    index: usize,
    kind: BifurcationKind,
    step: &StepSettings,
) -> Result<BifurcationPoint> {
    let g = |z: &DVector<f64>, v: &DVector<f64>| curve.test_value(kind, z, v);
    let what = match kind {
        BifurcationKind::Transcritical => "branch point",
        BifurcationKind::Hopf => "Hopf point",
        _ => "fold",
    };
    let refined = engine::refine_on_curve(curve, a, b, &g, REFINE_WIDTH, step, what)?;
    let (state, params) = curve.unpack(&refined.point.z);
    let j = curve.system.jacobian(state, &params);
    Ok(BifurcationPoint {
        kind,
        state,
        params,
        active: vec![curve.active],
        residual: refined.value,
        eigenvalues: eigen2(&j),
        tangent: refined.point.v.iter().copied().collect(),
        arclength: refined.point.arclength,
        index,
    })
}

/// Refines a bifurcation of `kind` between points `index` and `index + 1`
/// of a branch computed by [`continue_equilibrium`].
pub fn refine_bifurcation<S: PlanarSystem>(
    system: &S,
    branch: &Branch,
    index: usize,
    kind: BifurcationKind,
) -> Result<BifurcationPoint> {
    if index + 1 >= branch.curve_points.len() {
        return Err(Error::InvalidInput("bracket index outside the branch".into()));
    }
    if !matches!(kind, BifurcationKind::Fold | BifurcationKind::Transcritical | BifurcationKind::Hopf) {
        return Err(Error::InvalidInput(format!("{kind} is not an equilibrium-branch bifurcation")));
    }
    let base = branch.points[index].params;
    let curve = EquilibriumCurve { system, base, active: branch.active };
    refine_pair(
        &curve,
        &branch.curve_points[index],
        &branch.curve_points[index + 1],
        index,
        kind,
        &StepSettings::default(),
    )
}

/// Starts the second branch through a transcritical point in both
/// directions. The new direction is the null vector of `[J, F_p]`
/// orthogonal to the tangent of the branch the point was found on.
pub fn switch_branch<S: PlanarSystem>(
    system: &S,
    point: &BifurcationPoint,
    settings: &BranchSettings,
) -> Result<[Branch; 2]> {
    if point.kind != BifurcationKind::Transcritical || point.active.len() != 1 {
        return Err(Error::InvalidInput("branch switching needs a one-parameter branch point".into()));
    }
    let active = point.active[0];
    let curve = EquilibriumCurve { system, base: point.params, active };
    let z = curve.pack(point.state, &point.params);
    let jac = curve.jacobian(&z);
    let gram = jac.transpose() * &jac;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let v = DVector::from_column_slice(&point.tangent);
    let mut best: Option<DVector<f64>> = None;
    for &i in &order[..2] {
        let n = eig.eigenvectors.column(i).into_owned();
        let w = &n - &v * v.dot(&n);
        if best.as_ref().is_none_or(|b| w.norm() > b.norm()) {
            best = Some(w);
        }
    }
    let w = best.expect("two candidates");
    if w.norm() < 1e-6 {
        return Err(Error::SingularJacobian { condition: f64::INFINITY });
    }
    let w = w.normalize();
    let eps = 1e-3;
    let mut out = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let dir = &w * sign;
        let guess = &z + &dir * eps;
        let (z1, v1, _) = engine::correct(&curve, guess, dir.clone(), &settings.step)?;
        let v1 = if v1.dot(&dir) < 0.0 { -v1 } else { v1 };
        out.push(continue_from_point(system, point.params, active, z1, v1, settings)?);
    }
    let second = out.pop().expect("two branches");
    let first = out.pop().expect("two branches");
    Ok([first, second])
}
