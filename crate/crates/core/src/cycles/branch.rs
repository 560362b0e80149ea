//! Continuation of cycles in one parameter and of their folds in two.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::collocation::{
    assemble_jacobian, assemble_residual, equation_count, finish_cycle, flatten, monodromy, node_slopes, node_values,
    Cycle,
};
use super::mesh::CycleMesh;
use crate::continuation::engine::{self, Curve, CurvePoint, StepSettings, Termination};
use crate::continuation::{
    BifurcationKind, BifurcationPoint, Direction, LocusBounds, LocusKind, LocusPoint, TwoParamLocus,
};
use crate::error::{Error, Result};
use crate::model::{ParamName, ParameterSet, PlanarSystem, State};

/// Bracket width at which a limit point of cycles is considered located.
const LPC_REFINE_WIDTH: f64 = 1e-12;

/// Relative finite-difference step for the gradient of the fold test function.
const FD_STEP: f64 = 1e-6;

/// Bounds and step control for [`continue_cycles`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleBranchSettings {
    pub active: ParamName,
    pub param_min: f64,
    pub param_max: f64,
    pub direction: Direction,
    pub step: StepSettings,
    /// Cycles with a longer period end the branch.
    pub max_period: f64,
    /// Optional box `[(f_min, f_max), (x_min, x_max)]` the whole orbit must
    /// stay in.
    pub state_box: Option<[(f64, f64); 2]>,
    /// Cycles whose profile spans less than this in both coordinates have
    /// collapsed onto an equilibrium and end the branch.
    pub min_amplitude: f64,
}

impl CycleBranchSettings {
    pub fn new(active: ParamName, param_min: f64, param_max: f64, direction: Direction) -> Self {
        Self {
            active,
            param_min,
            param_max,
            direction,
            step: StepSettings {
                initial_step: 1e-2,
                max_step: 0.1,
                max_points: 4000,
                residual_tol: 1e-8,
                step_tol: 1e-8,
                ..StepSettings::default()
            },
            max_period: 1e3,
            state_box: None,
            min_amplitude: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.param_min < self.param_max) {
            return Err(Error::InvalidInput("cycle branch bounds must satisfy min < max".into()));
        }
        if !(self.max_period > 0.0) {
            return Err(Error::InvalidInput("maximum period must be positive".into()));
        }
        if !(self.min_amplitude >= 0.0) {
            return Err(Error::InvalidInput("minimum amplitude must be non-negative".into()));
        }
        if let Some(b) = self.state_box {
            if b.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::InvalidInput("state box must satisfy min < max".into()));
            }
        }
        self.step.validate()
    }
}

/// A limit point of cycles together with the cycle at the fold.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPointCycle {
    pub point: BifurcationPoint,
    pub cycle: Cycle,
}

/// A branch of cycles in one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleBranch {
    pub active: ParamName,
    pub cycles: Vec<Cycle>,
    /// Arclength of each cycle along the branch.
    pub arclength: Vec<f64>,
    pub lpc: Vec<LimitPointCycle>,
    /// Hopf point the branch was started from, if any.
    pub origin: Option<BifurcationPoint>,
    pub termination: Termination,
}

impl CycleBranch {
    pub fn param_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cycles.iter().map(move |c| c.params.get(self.active))
    }
}

/// Collocation unknowns with the profile scaled by `1 / sqrt(points)`, so
/// that arclength measures the root-mean-square change of the orbit.
fn profile_scale(mesh: &CycleMesh) -> f64 {
    1.0 / (mesh.points() as f64).sqrt()
}

struct CycleCurve<'a, S> {
    system: &'a S,
    mesh: &'a CycleMesh,
    base: ParameterSet,
    active: ParamName,
    reference: Vec<Vector2<f64>>,
    kappa: f64,
    max_period: f64,
    state_box: Option<[(f64, f64); 2]>,
    min_amplitude: f64,
}

impl<S: PlanarSystem> CycleCurve<'_, S> {
    fn np(&self) -> usize {
        2 * self.mesh.points()
    }

    fn profile(&self, z: &DVector<f64>) -> Vec<f64> {
        z.as_slice()[..self.np()].iter().map(|v| v / self.kappa).collect()
    }

    fn params(&self, z: &DVector<f64>) -> ParameterSet {
        self.base.with(self.active, z[self.np() + 1])
    }

    fn pack(&self, cycle: &Cycle) -> DVector<f64> {
        let mut z: Vec<f64> = flatten(&cycle.profile).iter().map(|v| v * self.kappa).collect();
        z.push(cycle.period);
        z.push(cycle.params.get(self.active));
        DVector::from_vec(z)
    }

    fn cycle(&self, z: &DVector<f64>) -> Result<Cycle> {
        finish_cycle(self.system, self.mesh, &self.profile(z), z[self.np()], self.params(z))
    }
}

/// Largest peak-to-peak extent of the representation values over both
/// coordinates.
fn profile_extent(y: &[f64]) -> f64 {
    (0..2)
        .map(|c| {
            let it = y.iter().skip(c).step_by(2);
            let hi = it.clone().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lo = it.fold(f64::INFINITY, |a, &b| a.min(b));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Inner product of two profiles after removing their point means.
fn deviation_overlap(a: &[f64], b: &[f64]) -> f64 {
    let points = (a.len() / 2) as f64;
    let mean = |y: &[f64], c: usize| y.iter().skip(c).step_by(2).sum::<f64>() / points;
    let (ma, mb) = ([mean(a, 0), mean(a, 1)], [mean(b, 0), mean(b, 1)]);
    a.chunks_exact(2)
        .zip(b.chunks_exact(2))
        .map(|(u, v)| (u[0] - ma[0]) * (v[0] - mb[0]) + (u[1] - ma[1]) * (v[1] - mb[1]))
        .sum()
}

fn orbit_in_box(y: &[f64], state_box: Option<[(f64, f64); 2]>) -> bool {
    match state_box {
        None => true,
        Some(b) => y
            .chunks_exact(2)
            .all(|c| (b[0].0..=b[0].1).contains(&c[0]) && (b[1].0..=b[1].1).contains(&c[1])),
    }
}

impl<S: PlanarSystem> Curve for CycleCurve<'_, S> {
    fn dim(&self) -> usize {
        self.np() + 2
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let np = self.np();
        assemble_residual(self.system, self.mesh, &self.profile(z), z[np], &self.params(z), &self.reference)
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let np = self.np();
        let mut jac = assemble_jacobian(
            self.system,
            self.mesh,
            &self.profile(z),
            z[np],
            &self.params(z),
            &self.reference,
            &[self.active],
        );
        jac.columns_mut(0, np).scale_mut(1.0 / self.kappa);
        jac
    }

    fn in_domain(&self, z: &DVector<f64>) -> bool {
        let period = z[self.np()];
        let y = self.profile(z);
        z.iter().all(|v| v.is_finite())
            && period > 0.0
            && period <= self.max_period
            && profile_extent(&y) >= self.min_amplitude
            && orbit_in_box(&y, self.state_box)
    }

    fn accepted(&mut self, z: &DVector<f64>, _v: &DVector<f64>) {
        self.reference = node_slopes(self.mesh, &self.profile(z));
    }
}

/// Continues a converged cycle in `settings.active`, computing Floquet
/// multipliers at every accepted cycle and locating limit points of cycles
/// where the parameter component of the tangent changes sign.
pub fn continue_cycles<S: PlanarSystem>(
    system: &S,
    start: &Cycle,
    origin: Option<&BifurcationPoint>,
    settings: &CycleBranchSettings,
) -> Result<CycleBranch> {
    settings.validate()?;
    let mesh = &start.mesh;
    if start.profile.len() != mesh.points() {
        return Err(Error::MeshMismatch);
    }
    let value = start.params.get(settings.active);
    if !(settings.param_min..=settings.param_max).contains(&value) {
        return Err(Error::InvalidInput(format!(
            "start value {value} of {} lies outside [{}, {}]",
            settings.active, settings.param_min, settings.param_max
        )));
    }
    let mut curve = CycleCurve {
        system,
        mesh,
        base: start.params,
        active: settings.active,
        reference: node_slopes(mesh, &flatten(&start.profile)),
        kappa: profile_scale(mesh),
        max_period: settings.max_period,
        state_box: settings.state_box,
        min_amplitude: settings.min_amplitude,
    };
    let z0 = curve.pack(start);
    let dim = curve.dim();
    let jac = curve.jacobian(&z0);
    let mut e_param = DVector::zeros(dim);
    e_param[dim - 1] = 1.0;
    let mut e_period = DVector::zeros(dim);
    e_period[dim - 2] = 1.0;
    let v0 = engine::tangent(&jac, &e_param).or_else(|_| engine::tangent(&jac, &e_period))?;
    let (z0, mut v0, _) = engine::correct(&curve, z0, v0, &settings.step)?;
    let wants_increase = settings.direction == Direction::Increasing;
    if (v0[dim - 1] > 0.0) != wants_increase {
        v0 = -v0;
    }

    let start_point = CurvePoint { z: z0, v: v0, arclength: 0.0, iterations: 0 };
    let (min, max) = (settings.param_min, settings.param_max);
    let np = curve.np();
    let mut previous = start_point.z.clone();
    let mut collapsed = false;
    let (points, mut termination) = engine::trace_curve(&mut curve, start_point, &settings.step, |p| {
        if !(min..=max).contains(&p.z[dim - 1]) {
            return true;
        }
        // Consecutive phase-aligned cycles correlate positively; a sign flip
        // means the branch went through an equilibrium onto its own
        // half-period-shifted copy.
        if deviation_overlap(&previous.as_slice()[..np], &p.z.as_slice()[..np]) <= 0.0 {
            collapsed = true;
            return true;
        }
        previous = p.z.clone();
        false
    })?;
    if collapsed {
        termination = Termination::Domain;
    }

    let mut cycles = Vec::with_capacity(points.len());
    for p in &points {
        match curve.cycle(&p.z) {
            Ok(c) => cycles.push(c),
            Err(Error::IllConditioned { .. }) if !cycles.is_empty() => {
                termination = Termination::Domain;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let points = &points[..cycles.len()];

    let mut lpc = Vec::new();
    for i in 0..points.len().saturating_sub(1) {
        let (a, b) = (&points[i], &points[i + 1]);
        if a.v[dim - 1].signum() == b.v[dim - 1].signum() {
            continue;
        }
        curve.accepted(&a.z, &a.v);
        let g = |_: &DVector<f64>, v: &DVector<f64>| v[dim - 1];
        let refined =
            engine::refine_on_curve(&curve, a, b, &g, LPC_REFINE_WIDTH, &settings.step, "limit point of cycles")?;
        let cycle = curve.cycle(&refined.point.z)?;
        lpc.push(LimitPointCycle {
            point: BifurcationPoint {
                kind: BifurcationKind::Lpc,
                state: cycle.profile[0],
                params: cycle.params,
                active: vec![settings.active],
                residual: refined.value.abs(),
                eigenvalues: cycle.multipliers,
                tangent: refined.point.v.iter().copied().collect(),
                arclength: refined.point.arclength,
                index: i,
            },
            cycle,
        });
    }

    Ok(CycleBranch {
        active: settings.active,
        arclength: points.iter().map(|p| p.arclength).collect(),
        cycles,
        lpc,
        origin: origin.cloned(),
        termination,
    })
}

/// Extended system for a fold of cycles in two parameters: the collocation
/// equations plus a bordered test function `g` that vanishes where the
/// collocation Jacobian in (profile, period) is singular.
struct LpcCurve<'a, S> {
    system: &'a S,
    mesh: &'a CycleMesh,
    base: ParameterSet,
    params: (ParamName, ParamName),
    reference: Vec<Vector2<f64>>,
    kappa: f64,
    border_left: DVector<f64>,
    border_right: DVector<f64>,
}

/// Solution of the bordered systems at one point.
struct Bordered {
    g: f64,
    right: DVector<f64>,
    left: DVector<f64>,
}

impl<S: PlanarSystem> LpcCurve<'_, S> {
    fn np(&self) -> usize {
        2 * self.mesh.points()
    }

    fn profile(&self, z: &DVector<f64>) -> Vec<f64> {
        z.as_slice()[..self.np()].iter().map(|v| v / self.kappa).collect()
    }

    fn param_set(&self, z: &DVector<f64>) -> ParameterSet {
        let np = self.np();
        self.base.with(self.params.0, z[np + 1]).with(self.params.1, z[np + 2])
    }

    fn square_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let np = self.np();
        assemble_jacobian(self.system, self.mesh, &self.profile(z), z[np], &self.param_set(z), &self.reference, &[])
    }

    fn bordered(&self, z: &DVector<f64>) -> Result<Bordered> {
        let a = self.square_jacobian(z);
        let n = a.nrows();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&a);
        m.view_mut((0, n), (n, 1)).copy_from(&self.border_left);
        m.view_mut((n, 0), (1, n)).copy_from(&self.border_right.transpose());
        let mut e = DVector::zeros(n + 1);
        e[n] = 1.0;
        let singular = || Error::CorrectorDivergence("singular bordered fold system".into());
        let lu = m.clone().lu();
        let sol = lu.solve(&e).ok_or_else(singular)?;
        let sol_t = m.transpose().lu().solve(&e).ok_or_else(singular)?;
        Ok(Bordered { g: sol[n], right: sol.rows(0, n).into_owned(), left: sol_t.rows(0, n).into_owned() })
    }

    /// `left . (A(y, T, p) right)` restricted to the collocation rows of
    /// interval `i`.
    fn interval_form(
        &self,
        i: usize,
        y: &[f64],
        period: f64,
        p: &ParameterSet,
        left: &DVector<f64>,
        right: &DVector<f64>,
    ) -> f64 {
        let m = self.mesh.nodes();
        let w_t = right[right.len() - 1];
        let mut sum = 0.0;
        for j in 0..m {
            let (u, _) = node_values(self.mesh, y, i, j);
            let state = State::new(u[0], u[1]);
            let a = self.system.jacobian(state, p);
            let field = self.system.rhs(state, p);
            let mut lw = Vector2::zeros();
            let mut dw = Vector2::zeros();
            for l in 0..=m {
                let q = i * m + l;
                let wq = Vector2::new(right[2 * q], right[2 * q + 1]);
                lw += wq * self.mesh.basis(j, l);
                dw += wq * self.mesh.basis_slope(i, j, l);
            }
            let row = dw - a * lw * period - field * w_t;
            let k = 2 * (i * m + j);
            sum += left[k] * row[0] + left[k + 1] * row[1];
        }
        sum
    }

    /// Gradient of `g` in the scaled unknowns, from `g_z = -left . (dA/dz) right`.
    fn g_gradient(&self, z: &DVector<f64>, b: &Bordered) -> DVector<f64> {
        let np = self.np();
        let (n, m) = (self.mesh.intervals(), self.mesh.nodes());
        let y = self.profile(z);
        let period = z[np];
        let p = self.param_set(z);
        let mut grad = DVector::zeros(self.dim());
        let form = |i: usize, y: &[f64], period: f64, p: &ParameterSet| {
            self.interval_form(i, y, period, p, &b.left, &b.right)
        };
        let mut probe = y.clone();
        for k in 0..np {
            let q = k / 2;
            let mut intervals = Vec::with_capacity(2);
            if q < n * m {
                intervals.push(q / m);
            }
            if q > 0 && q % m == 0 {
                intervals.push(q / m - 1);
            }
            let step = FD_STEP * y[k].abs().max(1.0);
            let mut diff = 0.0;
            for &i in &intervals {
                probe[k] = y[k] + step;
                let plus = form(i, &probe, period, &p);
                probe[k] = y[k] - step;
                let minus = form(i, &probe, period, &p);
                diff += plus - minus;
            }
            probe[k] = y[k];
            grad[k] = -diff / (2.0 * step) / self.kappa;
        }
        let total = |y: &[f64], period: f64, p: &ParameterSet| (0..n).map(|i| form(i, y, period, p)).sum::<f64>();
        let step = FD_STEP * period.abs().max(1.0);
        grad[np] = -(total(&y, period + step, &p) - total(&y, period - step, &p)) / (2.0 * step);
        for (e, name) in [self.params.0, self.params.1].into_iter().enumerate() {
            let v = p.get(name);
            let step = FD_STEP * v.abs().max(1.0);
            let plus = total(&y, period, &p.with(name, v + step));
            let minus = total(&y, period, &p.with(name, v - step));
            grad[np + 1 + e] = -(plus - minus) / (2.0 * step);
        }
        grad
    }

    fn cycle(&self, z: &DVector<f64>) -> Result<Cycle> {
        finish_cycle(self.system, self.mesh, &self.profile(z), z[self.np()], self.param_set(z))
    }

    fn to_point(&self, cp: &CurvePoint) -> Result<LocusPoint> {
        let cycle = self.cycle(&cp.z)?;
        let mono = monodromy(self.system, &cycle)?;
        let reference = node_slopes(self.mesh, &flatten(&cycle.profile));
        let r = assemble_residual(self.system, self.mesh, &flatten(&cycle.profile), cycle.period, &cycle.params, &reference);
        Ok(LocusPoint {
            state: cycle.profile[0],
            params: cycle.params,
            tangent: cp.v.iter().copied().collect(),
            arclength: cp.arclength,
            det: mono.determinant(),
            trace: mono.trace(),
            eigenvalues: cycle.multipliers,
            residual: r.amax(),
            period: Some(cycle.period),
        })
    }
}

impl<S: PlanarSystem> Curve for LpcCurve<'_, S> {
    fn dim(&self) -> usize {
        self.np() + 3
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let np = self.np();
        let core = assemble_residual(self.system, self.mesh, &self.profile(z), z[np], &self.param_set(z), &self.reference);
        let g = self.bordered(z).map(|b| b.g).unwrap_or(f64::NAN);
        let mut r = DVector::zeros(core.len() + 1);
        r.rows_mut(0, core.len()).copy_from(&core);
        r[core.len()] = g;
        r
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let np = self.np();
        let mut core = assemble_jacobian(
            self.system,
            self.mesh,
            &self.profile(z),
            z[np],
            &self.param_set(z),
            &self.reference,
            &[self.params.0, self.params.1],
        );
        core.columns_mut(0, np).scale_mut(1.0 / self.kappa);
        let rows = core.nrows();
        let mut jac = DMatrix::zeros(rows + 1, self.dim());
        jac.view_mut((0, 0), (rows, self.dim())).copy_from(&core);
        match self.bordered(z) {
            Ok(b) => jac.row_mut(rows).copy_from(&self.g_gradient(z, &b).transpose()),
            Err(_) => jac.row_mut(rows).fill(f64::NAN),
        }
        jac
    }

    fn in_domain(&self, z: &DVector<f64>) -> bool {
        z.iter().all(|v| v.is_finite()) && z[self.np()] > 0.0
    }

    fn accepted(&mut self, z: &DVector<f64>, _v: &DVector<f64>) {
        self.reference = node_slopes(self.mesh, &self.profile(z));
        if let Ok(b) = self.bordered(z) {
            if b.left.norm() > 0.0 && b.right.norm() > 0.0 {
                self.border_left = b.left.normalize();
                self.border_right = b.right.normalize();
            }
        }
    }
}

/// Null vectors of the smallest singular value: `(left, right)`.
fn smallest_singular_pair(a: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let svd = a.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::NoConvergence("singular value decomposition failed".into())),
    };
    let k = svd.singular_values.imin();
    Ok((u.column(k).into_owned(), v_t.row(k).transpose()))
}

/// Continues a limit point of cycles in two parameters, in both directions,
/// on the collocation system extended by the bordered fold test function.
///
/// Each locus point reports the monodromy determinant and trace in
/// `det`/`trace`, the Floquet multipliers in `eigenvalues`, the period and
/// the max-norm of the collocation residual.
pub fn lpc_two_param<S: PlanarSystem>(
    system: &S,
    lpc: &LimitPointCycle,
    params: (ParamName, ParamName),
    bounds: &LocusBounds,
) -> Result<TwoParamLocus> {
    bounds.validate()?;
    if lpc.point.kind != BifurcationKind::Lpc {
        return Err(Error::InvalidInput(format!("expected a limit point of cycles, got {}", lpc.point.kind)));
    }
    if params.0 == params.1 {
        return Err(Error::InvalidInput("the two locus parameters must differ".into()));
    }
    let start = &lpc.cycle;
    let mesh = &start.mesh;
    if start.profile.len() != mesh.points() {
        return Err(Error::MeshMismatch);
    }
    if !bounds.contains(start.params.get(params.0), start.params.get(params.1)) {
        return Err(Error::InvalidInput("starting point outside the locus bounds".into()));
    }
    let y = flatten(&start.profile);
    let reference = node_slopes(mesh, &y);
    let a = assemble_jacobian(system, mesh, &y, start.period, &start.params, &reference, &[]);
    debug_assert_eq!(a.nrows(), equation_count(mesh));
    let (left, right) = smallest_singular_pair(&a)?;
    let kappa = profile_scale(mesh);
    let mut curve = LpcCurve {
        system,
        mesh,
        base: start.params,
        params,
        reference,
        kappa,
        border_left: left,
        border_right: right,
    };
    let mut z0: Vec<f64> = y.iter().map(|v| v * kappa).collect();
    z0.extend([start.period, start.params.get(params.0), start.params.get(params.1)]);
    let z0 = DVector::from_vec(z0);
    let dim = curve.dim();
    let jac = curve.jacobian(&z0);
    let mut e_second = DVector::zeros(dim);
    e_second[dim - 1] = 1.0;
    let mut e_first = DVector::zeros(dim);
    e_first[dim - 2] = 1.0;
    let v0 = engine::tangent(&jac, &e_second).or_else(|_| engine::tangent(&jac, &e_first))?;
    let (z0, v0, _) = engine::correct(&curve, z0, v0, &bounds.step)?;
    curve.accepted(&z0, &v0);
    let origin = curve.reference.clone();
    let borders = (curve.border_left.clone(), curve.border_right.clone());

    let mut halves = Vec::with_capacity(2);
    for sign in [-1.0, 1.0] {
        curve.reference = origin.clone();
        curve.border_left = borders.0.clone();
        curve.border_right = borders.1.clone();
        let start = CurvePoint { z: z0.clone(), v: &v0 * sign, arclength: 0.0, iterations: 0 };
        let (pts, term) =
            engine::trace_curve(&mut curve, start, &bounds.step, |p| !bounds.contains(p.z[dim - 2], p.z[dim - 1]))?;
        halves.push((pts, term));
    }
    let (forward, term_fwd) = halves.pop().expect("two halves");
    let (backward, term_bwd) = halves.pop().expect("two halves");
    let mut cps: Vec<CurvePoint> = backward
        .into_iter()
        .rev()
        .map(|mut p| {
            p.v = -p.v;
            p
        })
        .collect();
    cps.extend(forward.into_iter().skip(1));
    let mut s = 0.0;
    for i in 0..cps.len() {
        if i > 0 {
            s += (&cps[i].z - &cps[i - 1].z).norm();
        }
        cps[i].arclength = s;
    }
    let points = cps.iter().map(|cp| curve.to_point(cp)).collect::<Result<Vec<_>>>()?;
    Ok(TwoParamLocus {
        kind: LocusKind::Lpc,
        params,
        points,
        codim2: Vec::new(),
        termination: (term_bwd, term_fwd),
        base: start.params,
        curve_points: cps,
    })
}

/// Stability labels change only across limit points of cycles on a planar
/// branch; returns the indices `i` where `cycles[i]` and `cycles[i + 1]`
/// differ in stability.
pub fn stability_changes(branch: &CycleBranch) -> Vec<usize> {
    branch
        .cycles
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].stability != w[1].stability)
        .map(|(i, _)| i)
        .collect()
}

/// Whether every stability change on the branch sits at a detected limit
/// point of cycles.
pub fn stability_changes_at_lpc(branch: &CycleBranch) -> bool {
    stability_changes(branch).iter().all(|&i| branch.lpc.iter().any(|l| l.point.index == i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{cycle_from_hopf, solve_cycle, CycleSettings, CycleStability};
    use nalgebra::Matrix2;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    /// Rotation at rate `k` with radial growth `r g(r^2)`,
    /// `g(rho) = h + 2 rho - rho^2`: cycles sit at `h = rho^2 - 2 rho`, with a
    /// fold of cycles at `rho = 1, h = -1` and a subcritical Hopf point at
    /// `h = 0`.
    struct Bautin;

    fn growth(rho: f64, mu: f64) -> (f64, f64) {
        (mu + 2.0 * rho - rho * rho, 2.0 - 2.0 * rho)
    }

    impl PlanarSystem for Bautin {
        fn rhs(&self, s: State, p: &ParameterSet) -> Vector2<f64> {
            let (g, _) = growth(s.f * s.f + s.x * s.x, p.h);
            Vector2::new(s.f * g - p.k * s.x, s.x * g + p.k * s.f)
        }
        fn jacobian(&self, s: State, p: &ParameterSet) -> Matrix2<f64> {
            let (g, dg) = growth(s.f * s.f + s.x * s.x, p.h);
            Matrix2::new(
                g + 2.0 * s.f * s.f * dg,
                2.0 * s.f * s.x * dg - p.k,
                2.0 * s.f * s.x * dg + p.k,
                g + 2.0 * s.x * s.x * dg,
            )
        }
        fn param_derivative(&self, s: State, _: &ParameterSet, name: ParamName) -> Vector2<f64> {
            match name {
                ParamName::H => Vector2::new(s.f, s.x),
                ParamName::K => Vector2::new(-s.x, s.f),
                _ => Vector2::zeros(),
            }
        }
    }

    fn params(mu: f64, omega: f64) -> ParameterSet {
        ParameterSet { h: mu, k: omega, ..ParameterSet::default() }
    }

    fn big_cycle(mesh: CycleMesh, mu: f64) -> Cycle {
        let r = (1.0 + (1.0 + mu).sqrt()).sqrt();
        let guess = Cycle::guess(mesh, 2.0 * PI * 1.05, params(mu, 1.0), |t| {
            State::new(0.9 * r * (2.0 * PI * t).cos(), 0.9 * r * (2.0 * PI * t).sin())
        });
        let settings = CycleSettings { tolerance: 1e-11, ..CycleSettings::default() };
        solve_cycle(&Bautin, &guess, &settings).unwrap()
    }

    #[test]
    fn converged_cycle_matches_exact_orbit() {
        let cycle = big_cycle(CycleMesh::default(), 0.5);
        let rho = 1.0 + 1.5f64.sqrt();
        assert!((cycle.period - 2.0 * PI).abs() < 1e-8, "{}", cycle.period);
        for s in &cycle.profile {
            assert!(((s.f * s.f + s.x * s.x) - rho).abs() < 1e-7);
        }
        assert!(cycle.periodicity_gap() < 1e-10);
        let exponent = 2.0 * rho * growth(rho, 0.5).1;
        assert!((cycle.multipliers[0] - Complex64::new(1.0, 0.0)).norm() < 1e-6);
        assert!((cycle.multipliers[1].re - (2.0 * PI * exponent).exp()).abs() < 1e-6);
        assert_eq!(cycle.stability, CycleStability::Stable);
    }

    #[test]
    fn period_error_shrinks_at_collocation_order() {
        let mut previous = f64::INFINITY;
        for n in [5, 10, 20] {
            let cycle = big_cycle(CycleMesh::uniform(n, 2).unwrap(), 0.5);
            let err = (cycle.period - 2.0 * PI).abs();
            assert!(err <= (previous / 8.0).max(1e-11), "n={n} err={err:e}");
            previous = err;
        }
    }

    #[test]
    fn branch_finds_the_fold_of_cycles_and_stops_at_the_hopf_point() {
        let start = big_cycle(CycleMesh::default(), 0.5);
        let settings = CycleBranchSettings::new(ParamName::H, -3.0, 1.0, Direction::Decreasing);
        let branch = continue_cycles(&Bautin, &start, None, &settings).unwrap();
        assert_eq!(branch.lpc.len(), 1, "{:?}", branch.lpc.iter().map(|l| l.point.params.h).collect::<Vec<_>>());
        let lpc = &branch.lpc[0];
        assert!((lpc.point.params.h + 1.0).abs() < 1e-8, "{}", lpc.point.params.h);
        assert!(lpc.point.residual < 1e-8);
        assert!((lpc.cycle.multipliers[1] - Complex64::new(1.0, 0.0)).norm() < 1e-3);
        assert_eq!(branch.termination, Termination::Domain);
        let last = branch.cycles.last().unwrap();
        assert!(last.params.h < 0.0 && last.params.h > -0.1, "{}", last.params.h);
        assert!(branch.arclength.windows(2).all(|w| w[1] > w[0]));
        assert!(stability_changes_at_lpc(&branch));
        assert_eq!(stability_changes(&branch).len(), 1);
        assert_eq!(branch.cycles[0].stability, CycleStability::Stable);
        assert_eq!(last.stability, CycleStability::Unstable);
        for c in &branch.cycles {
            assert!((c.multipliers[0] - Complex64::new(1.0, 0.0)).norm() < 5e-3);
            assert!((c.period - 2.0 * PI).abs() < 1e-6);
        }
    }

    #[test]
    fn hopf_start_gives_small_unstable_cycle() {
        let hopf = BifurcationPoint {
            kind: BifurcationKind::Hopf,
            state: State::new(0.0, 0.0),
            params: params(0.0, 2.0),
            active: vec![ParamName::H],
            residual: 0.0,
            eigenvalues: [Complex64::new(0.0, 2.0), Complex64::new(0.0, -2.0)],
            tangent: vec![],
            arclength: 0.0,
            index: 0,
        };
        let settings = CycleSettings { tolerance: 1e-10, ..CycleSettings::default() };
        let cycle = cycle_from_hopf(&Bautin, &hopf, 1e-3, &CycleMesh::default(), &settings).unwrap();
        assert!((cycle.period - PI).abs() < 1e-8);
        assert!(cycle.params.h < 0.0 && cycle.params.h > -1e-4);
        assert_eq!(cycle.stability, CycleStability::Unstable);
        let settings = CycleBranchSettings::new(ParamName::H, -3.0, 1.0, Direction::Decreasing);
        let branch = continue_cycles(&Bautin, &cycle, Some(&hopf), &settings).unwrap();
        assert_eq!(branch.lpc.len(), 1);
        assert!((branch.lpc[0].point.params.h + 1.0).abs() < 1e-8);
        assert_eq!(branch.origin.as_ref().map(|o| o.kind), Some(BifurcationKind::Hopf));
    }

    #[test]
    fn fold_of_cycles_locus_is_flat_in_the_rotation_rate() {
        let start = big_cycle(CycleMesh::uniform(10, 4).unwrap(), 0.5);
        let settings = CycleBranchSettings::new(ParamName::H, -3.0, 1.0, Direction::Decreasing);
        let branch = continue_cycles(&Bautin, &start, None, &settings).unwrap();
        let mut bounds = LocusBounds::new((-2.0, 0.0), (0.5, 2.0));
        bounds.step.residual_tol = 1e-8;
        bounds.step.step_tol = 1e-8;
        let locus = lpc_two_param(&Bautin, &branch.lpc[0], (ParamName::H, ParamName::K), &bounds).unwrap();
        assert_eq!(locus.kind, LocusKind::Lpc);
        let ks: Vec<f64> = locus.values().map(|(_, k)| k).collect();
        assert!(ks.iter().cloned().fold(f64::INFINITY, f64::min) < 0.55);
        assert!(ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 1.95);
        for p in &locus.points {
            assert!((p.params.h + 1.0).abs() < 1e-6, "{}", p.params.h);
            assert!((p.period.unwrap() - 2.0 * PI / p.params.k).abs() < 1e-6);
            assert!(p.residual < 1e-8);
        }
    }

    #[test]
    fn settings_validation() {
        let mut s = CycleBranchSettings::new(ParamName::K, 1.0, 0.0, Direction::Increasing);
        assert!(s.validate().is_err());
        s = CycleBranchSettings::new(ParamName::K, 0.0, 1.0, Direction::Increasing);
        assert!(s.validate().is_ok());
        s.max_period = 0.0;
        assert!(s.validate().is_err());
        s = CycleBranchSettings::new(ParamName::K, 0.0, 1.0, Direction::Increasing);
        s.state_box = Some([(0.0, 1.0), (1.0, 1.0)]);
        assert!(s.validate().is_err());
    }
}
