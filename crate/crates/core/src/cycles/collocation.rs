//! Orthogonal collocation of periodic orbits and their Floquet multipliers.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mesh::CycleMesh;
use crate::continuation::{BifurcationKind, BifurcationPoint};
use crate::error::{Error, Result};
use crate::model::{ParamName, ParameterSet, PlanarSystem, State};
use crate::solver::eigen2;

/// Condition estimate above which the monodromy assembly is rejected.
pub const MONODROMY_CONDITION_LIMIT: f64 = 1e12;

/// Largest starting amplitude accepted by [`cycle_from_hopf`].
pub const MAX_HOPF_AMPLITUDE: f64 = 1e-2;

/// Orbital stability of a cycle, from its nontrivial Floquet multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CycleStability {
    Stable,
    Unstable,
}

impl CycleStability {
    pub fn from_multipliers(multipliers: &[Complex64; 2]) -> Self {
        if multipliers[1].norm() < 1.0 {
            CycleStability::Stable
        } else {
            CycleStability::Unstable
        }
    }

    pub fn is_stable(self) -> bool {
        self == CycleStability::Stable
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CycleStability::Stable => "stable",
            CycleStability::Unstable => "unstable",
        }
    }
}

/// Newton controls for a cycle at fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSettings {
    /// Absolute bound on the residual and relative bound on the last update,
    /// both in the max-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_iterations: 20 }
    }
}

impl CycleSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidInput(format!("cycle tolerance must lie in (0, 1), got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("cycle Newton needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// A periodic orbit on a collocation mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub mesh: CycleMesh,
    /// States at the representation points, see [`CycleMesh::point_times`].
    pub profile: Vec<State>,
    pub period: f64,
    pub params: ParameterSet,
    /// Trivial multiplier first, then the nontrivial one.
    pub multipliers: [Complex64; 2],
    pub stability: CycleStability,
}

impl Cycle {
    /// Unconverged cycle sampled from `orbit` at the representation points,
    /// as a starting guess for [`solve_cycle`]. Its multipliers are NaN.
    pub fn guess(mesh: CycleMesh, period: f64, params: ParameterSet, orbit: impl Fn(f64) -> State) -> Self {
        let profile = mesh.point_times().into_iter().map(orbit).collect();
        Self {
            mesh,
            profile,
            period,
            params,
            multipliers: [Complex64::new(f64::NAN, f64::NAN); 2],
            stability: CycleStability::Unstable,
        }
    }

    /// State at normalized time `t`.
    pub fn sample(&self, t: f64) -> State {
        let (i, u) = self.mesh.locate(t);
        let (basis, _) = self.mesh.local_basis(u);
        let m = self.mesh.nodes();
        let (mut f, mut x) = (0.0, 0.0);
        for (l, b) in basis.iter().enumerate() {
            let s = self.profile[i * m + l];
            f += b * s.f;
            x += b * s.x;
        }
        State::new(f, x)
    }

    /// Derivative with respect to normalized time at `t`.
    pub fn slope(&self, t: f64) -> Vector2<f64> {
        let (i, u) = self.mesh.locate(t);
        let (_, slopes) = self.mesh.local_basis(u);
        let m = self.mesh.nodes();
        let mut d = Vector2::zeros();
        for (l, b) in slopes.iter().enumerate() {
            d += self.profile[i * m + l].to_vector() * *b;
        }
        d / self.mesh.width(i)
    }

    /// Peak-to-peak extent of `(f, x)` over a dense sampling of the orbit.
    pub fn amplitude(&self) -> (f64, f64) {
        let samples = 20 * self.mesh.intervals();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for k in 0..=samples {
            let s = self.sample(k as f64 / samples as f64);
            for (c, v) in [s.f, s.x].into_iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        (hi[0] - lo[0], hi[1] - lo[1])
    }

    /// Time average of the orbit, by the collocation quadrature.
    pub fn mean(&self) -> State {
        let y = flatten(&self.profile);
        let (mut f, mut x) = (0.0, 0.0);
        for i in 0..self.mesh.intervals() {
            for j in 0..self.mesh.nodes() {
                let (u, _) = node_values(&self.mesh, &y, i, j);
                let w = self.mesh.gauss_weight(i, j);
                f += w * u[0];
                x += w * u[1];
            }
        }
        State::new(f, x)
    }

    /// Largest distance between the profile at normalized times 0 and 1.
    pub fn periodicity_gap(&self) -> f64 {
        self.profile[0].distance(&self.profile[self.profile.len() - 1])
    }

    pub fn nontrivial_multiplier(&self) -> Complex64 {
        self.multipliers[1]
    }

    pub(crate) fn unknowns(&self) -> DVector<f64> {
        let mut y = flatten(&self.profile);
        y.push(self.period);
        DVector::from_vec(y)
    }
}

pub(crate) fn flatten(profile: &[State]) -> Vec<f64> {
    profile.iter().flat_map(|s| [s.f, s.x]).collect()
}

pub(crate) fn unflatten(y: &[f64]) -> Vec<State> {
    y.chunks_exact(2).map(|c| State::new(c[0], c[1])).collect()
}

/// Profile value and normalized-time derivative at Gauss node `j` of
/// interval `i`, from flattened representation values `y`.
pub(crate) fn node_values(mesh: &CycleMesh, y: &[f64], i: usize, j: usize) -> (Vector2<f64>, Vector2<f64>) {
    let m = mesh.nodes();
    let mut u = Vector2::zeros();
    let mut du = Vector2::zeros();
    for l in 0..=m {
        let q = i * m + l;
        let yq = Vector2::new(y[2 * q], y[2 * q + 1]);
        u += yq * mesh.basis(j, l);
        du += yq * mesh.basis_slope(i, j, l);
    }
    (u, du)
}

/// Normalized-time derivative of a profile at every Gauss node, interval by
/// interval.
pub(crate) fn node_slopes(mesh: &CycleMesh, y: &[f64]) -> Vec<Vector2<f64>> {
    let mut out = Vec::with_capacity(mesh.intervals() * mesh.nodes());
    for i in 0..mesh.intervals() {
        for j in 0..mesh.nodes() {
            out.push(node_values(mesh, y, i, j).1);
        }
    }
    out
}

/// Number of equations of the collocation system: `2 N m` collocation
/// conditions, two periodicity conditions and one phase condition.
pub(crate) fn equation_count(mesh: &CycleMesh) -> usize {
    2 * mesh.intervals() * mesh.nodes() + 3
}

/// Residual of the collocation system for representation values `y`,
/// period `period` and phase reference slopes `reference`.
pub(crate) fn assemble_residual<S: PlanarSystem>(
    system: &S,
    mesh: &CycleMesh,
    y: &[f64],
    period: f64,
    params: &ParameterSet,
    reference: &[Vector2<f64>],
) -> DVector<f64> {
    let (n, m) = (mesh.intervals(), mesh.nodes());
    let last = 2 * (mesh.points() - 1);
    let mut r = DVector::zeros(equation_count(mesh));
    let mut phase = 0.0;
    for i in 0..n {
        for j in 0..m {
            let (u, du) = node_values(mesh, y, i, j);
            let field = system.rhs(State::new(u[0], u[1]), params);
            let row = 2 * (i * m + j);
            r[row] = du[0] - period * field[0];
            r[row + 1] = du[1] - period * field[1];
            phase += mesh.gauss_weight(i, j) * u.dot(&reference[i * m + j]);
        }
    }
    let rows = 2 * n * m;
    r[rows] = y[0] - y[last];
    r[rows + 1] = y[1] - y[last + 1];
    r[rows + 2] = phase;
    r
}

/// Jacobian of [`assemble_residual`] with respect to the representation
/// values, the period and then each parameter in `extra`.
pub(crate) fn assemble_jacobian<S: PlanarSystem>(
    system: &S,
    mesh: &CycleMesh,
    y: &[f64],
    period: f64,
    params: &ParameterSet,
    reference: &[Vector2<f64>],
    extra: &[ParamName],
) -> DMatrix<f64> {
    let (n, m) = (mesh.intervals(), mesh.nodes());
    let points = mesh.points();
    let t_col = 2 * points;
    let mut jac = DMatrix::zeros(equation_count(mesh), t_col + 1 + extra.len());
    let phase_row = 2 * n * m + 2;
    for i in 0..n {
        for j in 0..m {
            let (u, _) = node_values(mesh, y, i, j);
            let state = State::new(u[0], u[1]);
            let a = system.jacobian(state, params);
            let field = system.rhs(state, params);
            let row = 2 * (i * m + j);
            let w = mesh.gauss_weight(i, j);
            let r = reference[i * m + j];
            for l in 0..=m {
                let col = 2 * (i * m + l);
                let (b, d) = (mesh.basis(j, l), mesh.basis_slope(i, j, l));
                for (rr, cc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let diag = if rr == cc { d } else { 0.0 };
                    jac[(row + rr, col + cc)] += diag - period * b * a[(rr, cc)];
                }
                jac[(phase_row, col)] += w * b * r[0];
                jac[(phase_row, col + 1)] += w * b * r[1];
            }
            jac[(row, t_col)] = -field[0];
            jac[(row + 1, t_col)] = -field[1];
            for (e, &name) in extra.iter().enumerate() {
                let dp = system.param_derivative(state, params, name);
                jac[(row, t_col + 1 + e)] = -period * dp[0];
                jac[(row + 1, t_col + 1 + e)] = -period * dp[1];
            }
        }
    }
    let rows = 2 * n * m;
    let last = 2 * (points - 1);
    jac[(rows, 0)] = 1.0;
    jac[(rows, last)] = -1.0;
    jac[(rows + 1, 1)] = 1.0;
    jac[(rows + 1, last + 1)] = -1.0;
    jac
}

/// Residual of the collocation system for `cycle`, with the phase condition
/// taken against the time derivative of `reference`.
///
/// The vector stacks `2 N m` collocation equations, the two periodicity
/// equations and the integral phase condition.
pub fn collocation_residual<S: PlanarSystem>(system: &S, cycle: &Cycle, reference: &Cycle) -> Result<DVector<f64>> {
    if !cycle.mesh.same_as(&reference.mesh) || cycle.profile.len() != cycle.mesh.points() {
        return Err(Error::MeshMismatch);
    }
    if reference.profile.len() != reference.mesh.points() {
        return Err(Error::MeshMismatch);
    }
    let slopes = node_slopes(&reference.mesh, &flatten(&reference.profile));
    Ok(assemble_residual(system, &cycle.mesh, &flatten(&cycle.profile), cycle.period, &cycle.params, &slopes))
}

/// Builds a [`Cycle`] from converged unknowns, computing its multipliers.
pub(crate) fn finish_cycle<S: PlanarSystem>(
    system: &S,
    mesh: &CycleMesh,
    y: &[f64],
    period: f64,
    params: ParameterSet,
) -> Result<Cycle> {
    let mut cycle = Cycle {
        mesh: mesh.clone(),
        profile: unflatten(y),
        period,
        params,
        multipliers: [Complex64::new(1.0, 0.0); 2],
        stability: CycleStability::Unstable,
    };
    cycle.multipliers = floquet_multipliers(system, &cycle)?;
    cycle.stability = CycleStability::from_multipliers(&cycle.multipliers);
    Ok(cycle)
}

/// Newton iteration on a square system with dense LU.
pub(crate) fn newton_dense(
    residual: impl Fn(&DVector<f64>) -> DVector<f64>,
    jacobian: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    mut z: DVector<f64>,
    settings: &CycleSettings,
) -> Result<DVector<f64>> {
    settings.validate()?;
    for _ in 0..settings.max_iterations {
        let r = residual(&z);
        let dz = jacobian(&z)
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::NoConvergence("singular collocation matrix".into()))?;
        z -= &dz;
        if !z.iter().all(|c| c.is_finite()) {
            return Err(Error::NoConvergence("non-finite collocation iterate".into()));
        }
        let res = residual(&z).amax();
        if res <= settings.tolerance && dz.amax() <= settings.tolerance * (1.0 + z.amax()) {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence(format!(
        "collocation Newton did not converge in {} iterations",
        settings.max_iterations
    )))
}

/// Converges a cycle at its own parameters, using `guess` as the phase
/// reference.
pub fn solve_cycle<S: PlanarSystem>(system: &S, guess: &Cycle, settings: &CycleSettings) -> Result<Cycle> {
    let mesh = &guess.mesh;
    if guess.profile.len() != mesh.points() {
        return Err(Error::MeshMismatch);
    }
    if !(guess.period > 0.0) {
        return Err(Error::InvalidInput(format!("period must be positive, got {}", guess.period)));
    }
    let reference = node_slopes(mesh, &flatten(&guess.profile));
    let np = 2 * mesh.points();
    let z = newton_dense(
        |z| assemble_residual(system, mesh, &z.as_slice()[..np], z[np], &guess.params, &reference),
        |z| assemble_jacobian(system, mesh, &z.as_slice()[..np], z[np], &guess.params, &reference, &[]),
        guess.unknowns(),
        settings,
    )?;
    if !(z[np] > 0.0) {
        return Err(Error::NoConvergence(format!("collocation converged to non-positive period {}", z[np])));
    }
    finish_cycle(system, mesh, &z.as_slice()[..np], z[np], guess.params)
}

/// Small cycle born at a Hopf point.
///
/// The guess is the equilibrium displaced by `amplitude` along the real and
/// imaginary parts of the critical eigenvector, with period `2 pi / omega`.
/// The active parameter of `hopf` is freed and the projection of the orbit
/// on the guessed oscillation is held at the requested amplitude.
pub fn cycle_from_hopf<S: PlanarSystem>(
    system: &S,
    hopf: &BifurcationPoint,
    amplitude: f64,
    mesh: &CycleMesh,
    settings: &CycleSettings,
) -> Result<Cycle> {
    if hopf.kind != BifurcationKind::Hopf {
        return Err(Error::InvalidInput(format!("expected a Hopf point, got {}", hopf.kind)));
    }
    if !(amplitude > 0.0 && amplitude <= MAX_HOPF_AMPLITUDE) {
        return Err(Error::InvalidInput(format!(
            "Hopf amplitude must lie in (0, {MAX_HOPF_AMPLITUDE}], got {amplitude}"
        )));
    }
    let name = *hopf
        .active
        .first()
        .ok_or_else(|| Error::InvalidInput("Hopf point has no active parameter".into()))?;
    let a = system.jacobian(hopf.state, &hopf.params);
    let omega_sq = a.determinant() - 0.25 * a.trace() * a.trace();
    if !(omega_sq > 0.0) {
        return Err(Error::InvalidInput("Hopf point has no imaginary eigenvalue pair".into()));
    }
    let omega = omega_sq.sqrt();
    let (q_re, q_im) = critical_eigenvector(&a, omega);
    let scale = (q_re.norm_squared() + q_im.norm_squared()).sqrt();
    let (q_re, q_im) = (q_re / scale, q_im / scale);

    let eq = hopf.state.to_vector();
    let times = mesh.point_times();
    let wave = |t: f64| {
        let phase = 2.0 * std::f64::consts::PI * t;
        q_re * phase.cos() - q_im * phase.sin()
    };
    let mut y = Vec::with_capacity(2 * times.len());
    for &t in &times {
        let s = eq + wave(t) * amplitude;
        y.extend([s[0], s[1]]);
    }
    let reference = node_slopes(mesh, &y);
    let mut direction = Vec::with_capacity(reference.len());
    let mut norm = 0.0;
    for i in 0..mesh.intervals() {
        for j in 0..mesh.nodes() {
            let d = wave(mesh.gauss_time(i, j));
            norm += mesh.gauss_weight(i, j) * d.norm_squared();
            direction.push(d);
        }
    }

    let np = 2 * mesh.points();
    let base = hopf.params;
    let unpack = |z: &DVector<f64>| base.with(name, z[np + 1]);
    let residual = |z: &DVector<f64>| {
        let p = unpack(z);
        let core = assemble_residual(system, mesh, &z.as_slice()[..np], z[np], &p, &reference);
        let mut r = DVector::zeros(core.len() + 1);
        r.rows_mut(0, core.len()).copy_from(&core);
        r[core.len()] = projection(mesh, &z.as_slice()[..np], &eq, &direction) - amplitude * norm;
        r
    };
    let jacobian = |z: &DVector<f64>| {
        let p = unpack(z);
        let core = assemble_jacobian(system, mesh, &z.as_slice()[..np], z[np], &p, &reference, &[name]);
        let mut jac = DMatrix::zeros(core.nrows() + 1, core.ncols());
        jac.view_mut((0, 0), (core.nrows(), core.ncols())).copy_from(&core);
        let row = core.nrows();
        let m = mesh.nodes();
        for i in 0..mesh.intervals() {
            for j in 0..m {
                let w = mesh.gauss_weight(i, j);
                let d = direction[i * m + j];
                for l in 0..=m {
                    let col = 2 * (i * m + l);
                    jac[(row, col)] += w * mesh.basis(j, l) * d[0];
                    jac[(row, col + 1)] += w * mesh.basis(j, l) * d[1];
                }
            }
        }
        jac
    };
    let mut z0 = y.clone();
    z0.push(2.0 * std::f64::consts::PI / omega);
    z0.push(base.get(name));
    let z = newton_dense(residual, jacobian, DVector::from_vec(z0), settings).map_err(|e| match e {
        Error::NoConvergence(msg) => Error::NoConvergence(format!("{msg}; try a smaller amplitude")),
        other => other,
    })?;
    if !(z[np] > 0.0) {
        return Err(Error::NoConvergence("Hopf cycle converged to a non-positive period; try a smaller amplitude".into()));
    }
    finish_cycle(system, mesh, &z.as_slice()[..np], z[np], unpack(&z))
}

/// Real and imaginary parts of the eigenvector of `a` for `i omega`, for a
/// matrix with zero trace shifted out: `(a - tr/2) v = i omega v`.
fn critical_eigenvector(a: &Matrix2<f64>, omega: f64) -> (Vector2<f64>, Vector2<f64>) {
    let half = 0.5 * a.trace();
    let (a11, a12, a21, a22) = (a[(0, 0)] - half, a[(0, 1)], a[(1, 0)], a[(1, 1)] - half);
    if a12.abs() >= a21.abs() {
        (Vector2::new(a12, -a11), Vector2::new(0.0, omega))
    } else {
        (Vector2::new(-a22, a21), Vector2::new(omega, 0.0))
    }
}

/// Quadrature of `<u - eq, direction>` over the orbit.
fn projection(mesh: &CycleMesh, y: &[f64], eq: &Vector2<f64>, direction: &[Vector2<f64>]) -> f64 {
    let m = mesh.nodes();
    let mut sum = 0.0;
    for i in 0..mesh.intervals() {
        for j in 0..m {
            let (u, _) = node_values(mesh, y, i, j);
            sum += mesh.gauss_weight(i, j) * (u - eq).dot(&direction[i * m + j]);
        }
    }
    sum
}

/// Monodromy matrix of `cycle` as the ordered product of per-interval
/// transition matrices of the discretized variational equation.
pub fn monodromy<S: PlanarSystem>(system: &S, cycle: &Cycle) -> Result<Matrix2<f64>> {
    let mesh = &cycle.mesh;
    if cycle.profile.len() != mesh.points() {
        return Err(Error::MeshMismatch);
    }
    let m = mesh.nodes();
    let y = flatten(&cycle.profile);
    let mut total = Matrix2::identity();
    let mut worst: f64 = 1.0;
    for i in 0..mesh.intervals() {
        // Columns 0..2 act on the interval's first point, the rest on its
        // remaining m points.
        let mut start = DMatrix::zeros(2 * m, 2);
        let mut rest = DMatrix::zeros(2 * m, 2 * m);
        for j in 0..m {
            let (u, _) = node_values(mesh, &y, i, j);
            let a = system.jacobian(State::new(u[0], u[1]), &cycle.params);
            for l in 0..=m {
                let (b, d) = (mesh.basis(j, l), mesh.basis_slope(i, j, l));
                for rr in 0..2 {
                    for cc in 0..2 {
                        let diag = if rr == cc { d } else { 0.0 };
                        let v = diag - cycle.period * b * a[(rr, cc)];
                        if l == 0 {
                            start[(2 * j + rr, cc)] = v;
                        } else {
                            rest[(2 * j + rr, 2 * (l - 1) + cc)] = v;
                        }
                    }
                }
            }
        }
        let sv = rest.clone().singular_values();
        let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
        worst = worst.max(condition);
        if !(condition <= MONODROMY_CONDITION_LIMIT) {
            return Err(Error::IllConditioned { condition });
        }
        let solved = rest
            .lu()
            .solve(&(-start))
            .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        let step = Matrix2::new(
            solved[(2 * m - 2, 0)],
            solved[(2 * m - 2, 1)],
            solved[(2 * m - 1, 0)],
            solved[(2 * m - 1, 1)],
        );
        total = step * total;
    }
    if !total.iter().all(|v| v.is_finite()) {
        return Err(Error::IllConditioned { condition: worst });
    }
    Ok(total)
}

/// Floquet multipliers of a cycle: the one nearest to 1 (the trivial
/// multiplier of an autonomous flow) first.
pub fn floquet_multipliers<S: PlanarSystem>(system: &S, cycle: &Cycle) -> Result<[Complex64; 2]> {
    let mut mu = eigen2(&monodromy(system, cycle)?);
    let one = Complex64::new(1.0, 0.0);
    if (mu[1] - one).norm() < (mu[0] - one).norm() {
        mu.swap(0, 1);
    }
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `(f, x)' = (-x, f)`: every circle is a 2 pi periodic orbit.
    struct Rotation;

    impl PlanarSystem for Rotation {
        fn rhs(&self, s: State, _: &ParameterSet) -> Vector2<f64> {
            Vector2::new(-s.x, s.f)
        }
        fn jacobian(&self, _: State, _: &ParameterSet) -> Matrix2<f64> {
            Matrix2::new(0.0, -1.0, 1.0, 0.0)
        }
        fn param_derivative(&self, _: State, _: &ParameterSet, _: ParamName) -> Vector2<f64> {
            Vector2::zeros()
        }
    }

    fn circle(mesh: &CycleMesh, radius: f64) -> Cycle {
        Cycle::guess(mesh.clone(), 2.0 * PI, ParameterSet::default(), |t| {
            State::new(radius * (2.0 * PI * t).cos(), radius * (2.0 * PI * t).sin())
        })
    }

    #[test]
    fn residual_dimensions_and_mesh_check() {
        let mesh = CycleMesh::default();
        let c = circle(&mesh, 1.0);
        let r = collocation_residual(&Rotation, &c, &c).unwrap();
        assert_eq!(r.len(), 2 * 20 * 4 + 3);
        assert_eq!(c.unknowns().len(), r.len());
        let other = circle(&CycleMesh::uniform(10, 4).unwrap(), 1.0);
        assert!(matches!(collocation_residual(&Rotation, &c, &other), Err(Error::MeshMismatch)));
    }

    #[test]
    fn phase_condition_vanishes_against_itself() {
        let mesh = CycleMesh::default();
        let c = circle(&mesh, 0.7);
        let r = collocation_residual(&Rotation, &c, &c).unwrap();
        assert!(r[r.len() - 1].abs() < 1e-14);
        assert!(r[r.len() - 2].abs() < 1e-15 && r[r.len() - 3].abs() < 1e-15);
    }

    #[test]
    fn circle_residual_decays_with_mesh_order() {
        let mut previous = f64::INFINITY;
        for n in [5, 10, 20, 40] {
            let mesh = CycleMesh::uniform(n, 4).unwrap();
            let c = circle(&mesh, 1.0);
            let r = collocation_residual(&Rotation, &c, &c).unwrap().amax();
            assert!(r < previous / 12.0, "n={n} r={r:e}");
            previous = r;
        }
        assert!(previous < 1e-5);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mesh = CycleMesh::uniform(5, 3).unwrap();
        let sys = crate::model::ForestGrass;
        let p = ParameterSet::default();
        let mut y = Vec::new();
        for t in mesh.point_times() {
            y.extend([0.5 + 0.1 * (2.0 * PI * t).cos(), 0.4 + 0.05 * (2.0 * PI * t).sin()]);
        }
        let reference = node_slopes(&mesh, &y);
        let period = 3.0;
        let jac = assemble_jacobian(&sys, &mesh, &y, period, &p, &reference, &[ParamName::K]);
        let np = y.len();
        let eval = |z: &DVector<f64>| {
            assemble_residual(&sys, &mesh, &z.as_slice()[..np], z[np], &p.with(ParamName::K, z[np + 1]), &reference)
        };
        let mut z = y.clone();
        z.extend([period, p.k]);
        let fd = crate::solver::fd_jacobian(&eval, &DVector::from_vec(z));
        assert!((&jac - &fd).amax() < 1e-6, "{:e}", (&jac - &fd).amax());
    }

    #[test]
    fn rotation_monodromy_is_identity() {
        let mesh = CycleMesh::default();
        let c = circle(&mesh, 1.0);
        let mono = monodromy(&Rotation, &c).unwrap();
        assert!((mono - Matrix2::identity()).amax() < 1e-8, "{mono}");
    }

    #[test]
    fn hopf_amplitude_is_validated() {
        let hopf = BifurcationPoint {
            kind: BifurcationKind::Hopf,
            state: State::new(0.5, 0.5),
            params: ParameterSet::default(),
            active: vec![ParamName::K],
            residual: 0.0,
            eigenvalues: [Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)],
            tangent: vec![],
            arclength: 0.0,
            index: 0,
        };
        let mesh = CycleMesh::default();
        let sys = crate::model::ForestGrass;
        for amp in [0.0, -1e-3, 0.02, f64::NAN] {
            assert!(matches!(
                cycle_from_hopf(&sys, &hopf, amp, &mesh, &CycleSettings::default()),
                Err(Error::InvalidInput(_))
            ));
        }
        let fold = BifurcationPoint { kind: BifurcationKind::Fold, ..hopf };
        assert!(cycle_from_hopf(&sys, &fold, 1e-3, &mesh, &CycleSettings::default()).is_err());
    }
}
