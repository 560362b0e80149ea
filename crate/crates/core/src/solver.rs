//! Small dense nonlinear algebra: damped Newton, 2x2 eigenvalues and a
//! multi-seed equilibrium search.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    branch_h_of_f, branch_x_of_h, BranchFamily, ForestGrass, ParameterSet, PlanarSystem, State,
};

/// Condition estimate above which a Newton Jacobian is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Real parts below this magnitude are reported as non-hyperbolic.
pub const HYPERBOLICITY_THRESHOLD: f64 = 1e-8;

/// Deduplication radius (max-norm) for the equilibrium search.
pub const DEDUP_RADIUS: f64 = 1e-6;

const MAX_HALVINGS: usize = 8;

/// Convergence controls for [`newton`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Use central finite differences of the residual instead of the
    /// supplied Jacobian.
    pub finite_difference: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            step_tol: 1e-12,
            max_iterations: 30,
            finite_difference: false,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::InvalidInput("Newton tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("Newton needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Result of a converged Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub root: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Residual function for [`newton`].
pub type ResidualFn<'a> = dyn Fn(&DVector<f64>) -> DVector<f64> + 'a;

/// Jacobian function for [`newton`].
pub type JacobianFn<'a> = dyn Fn(&DVector<f64>) -> DMatrix<f64> + 'a;

/// Central finite-difference Jacobian with step `1e-6 * max(1, |v_j|)`.
pub fn fd_jacobian(residual: &ResidualFn<'_>, v: &DVector<f64>) -> DMatrix<f64> {
    let m = residual(v).len();
    let n = v.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = v.clone();
    for j in 0..n {
        let step = 1e-6 * v[j].abs().max(1.0);
        probe[j] = v[j] + step;
        let plus = residual(&probe);
        probe[j] = v[j] - step;
        let minus = residual(&probe);
        probe[j] = v[j];
        jac.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    jac
}

/// Ratio of extreme singular values; infinite for an exactly singular matrix.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Damped Newton iteration for a square system.
///
/// A full step that increases the residual norm is halved up to eight times.
/// Converges when the residual norm (Euclidean) drops below
/// `settings.residual_tol`.
pub fn newton(
    residual: &ResidualFn<'_>,
    jacobian: Option<&JacobianFn<'_>>,
    guess: DVector<f64>,
    settings: &NewtonSettings,
) -> Result<NewtonReport> {
    settings.validate()?;
    let mut v = guess;
    let mut r = residual(&v);
    let mut norm = r.norm();
    if !norm.is_finite() {
        return Err(Error::InvalidInput("residual is not finite at the initial guess".into()));
    }
    for iteration in 0..settings.max_iterations {
        if norm < settings.residual_tol {
            return Ok(NewtonReport { root: v, iterations: iteration, residual_norm: norm });
        }
        let jac = match (jacobian, settings.finite_difference) {
            (Some(j), false) => j(&v),
            _ => fd_jacobian(residual, &v),
        };
        if jac.nrows() != jac.ncols() || jac.nrows() != r.len() {
            return Err(Error::InvalidInput("Newton requires a square system".into()));
        }
        let condition = condition_estimate(&jac);
        if condition > SINGULAR_CONDITION {
            return Err(Error::SingularJacobian { condition });
        }
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::SingularJacobian { condition: f64::INFINITY })?;

        let mut lambda = 1.0;
        let mut trial = &v + &step;
        let mut r_trial = residual(&trial);
        let mut trial_norm = r_trial.norm();
        let mut halvings = 0;
        while !(trial_norm < norm) && halvings < MAX_HALVINGS {
            lambda *= 0.5;
            trial = &v + &step * lambda;
            r_trial = residual(&trial);
            trial_norm = r_trial.norm();
            halvings += 1;
        }
        if !trial_norm.is_finite() {
            return Err(Error::MaxIterations { iterations: iteration + 1, residual: norm });
        }
        let step_norm = step.norm() * lambda;
        v = trial;
        r = r_trial;
        norm = trial_norm;
        if step_norm < settings.step_tol * (1.0 + v.norm()) && norm >= settings.residual_tol {
            return Err(Error::MaxIterations { iterations: iteration + 1, residual: norm });
        }
    }
    if norm < settings.residual_tol {
        Ok(NewtonReport { root: v, iterations: settings.max_iterations, residual_norm: norm })
    } else {
        Err(Error::MaxIterations { iterations: settings.max_iterations, residual: norm })
    }
}

/// Eigenvalues of a 2x2 matrix as roots of `l^2 - tr l + det`, with the
/// cancellation-free form of the quadratic formula. Real pairs are ordered
/// with the larger value first; complex pairs with positive imaginary part
/// first.
pub fn eigen2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    if b * c == 0.0 {
        let (hi, lo) = if a >= d { (a, d) } else { (d, a) };
        return [Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)];
    }
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        let root = disc.sqrt();
        let det = a * d - b * c;
        let q = half_tr + if half_tr >= 0.0 { root } else { -root };
        let (l1, l2) = if q == 0.0 { (0.0, 0.0) } else { (q, det / q) };
        let (hi, lo) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
        [Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
    }
}

/// Local stability class of an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    StableNode,
    StableFocus,
    UnstableNode,
    UnstableFocus,
    Saddle,
    NonHyperbolic,
}

impl Stability {
    pub fn classify(eigenvalues: &[Complex64; 2]) -> Self {
        let [l1, l2] = *eigenvalues;
        if l1.re.abs() < HYPERBOLICITY_THRESHOLD || l2.re.abs() < HYPERBOLICITY_THRESHOLD {
            return Stability::NonHyperbolic;
        }
        if l1.im != 0.0 {
            return if l1.re < 0.0 { Stability::StableFocus } else { Stability::UnstableFocus };
        }
        match (l1.re < 0.0, l2.re < 0.0) {
            (true, true) => Stability::StableNode,
            (false, false) => Stability::UnstableNode,
            _ => Stability::Saddle,
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::StableNode => "stable_node",
            Stability::StableFocus => "stable_focus",
            Stability::UnstableNode => "unstable_node",
            Stability::UnstableFocus => "unstable_focus",
            Stability::Saddle => "saddle",
            Stability::NonHyperbolic => "non_hyperbolic",
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A converged and classified fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: State,
    pub params: ParameterSet,
    pub eigenvalues: [Complex64; 2],
    pub stability: Stability,
    pub family: Option<BranchFamily>,
    pub residual: f64,
}

impl Equilibrium {
    /// Classifies an already converged state of `system`.
    pub fn from_state<S: PlanarSystem>(system: &S, state: State, params: ParameterSet) -> Self {
        let eigenvalues = eigen2(&system.jacobian(state, &params));
        Self {
            state,
            params,
            eigenvalues,
            stability: Stability::classify(&eigenvalues),
            family: family_of(state),
            residual: system.rhs(state, &params).norm(),
        }
    }
}

/// Analytic family of a state, using exact tests on the invariant lines.
pub fn family_of(state: State) -> Option<BranchFamily> {
    if state.x == 0.0 {
        Some(BranchFamily::X0)
    } else if state.x == 1.0 {
        Some(BranchFamily::X1)
    } else if (state.f - 0.5).abs() < 1e-10 {
        Some(BranchFamily::FHalf)
    } else {
        None
    }
}

/// Initial guesses for [`find_equilibria`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub f_values: Vec<f64>,
    pub x_values: Vec<f64>,
    /// Also seed at the closed-form fixed points of the three families.
    pub analytic_seeds: bool,
}

impl Default for SeedGrid {
    /// 99 uniform `f` values times `x` in `{0, 0.1, ..., 1}`.
    fn default() -> Self {
        Self {
            f_values: (1..100).map(|i| i as f64 / 100.0).collect(),
            x_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            analytic_seeds: true,
        }
    }
}

impl SeedGrid {
    fn seeds(&self, p: &ParameterSet) -> Vec<State> {
        let mut out: Vec<State> = self
            .f_values
            .iter()
            .flat_map(|&f| self.x_values.iter().map(move |&x| State::new(f, x)))
            .collect();
        if self.analytic_seeds {
            out.extend(analytic_fixed_points(p));
        }
        out
    }
}

/// Closed-form fixed points on the three families, located by bisection of
/// the branch formulas on a 2000-cell grid over `[0, 1)`.
pub fn analytic_fixed_points(p: &ParameterSet) -> Vec<State> {
    let mut out = Vec::new();
    if p.h != 0.0 {
        if let Ok(x) = branch_x_of_h(p) {
            out.push(State::new(0.5, x));
        }
    }
    const CELLS: usize = 2000;
    for (family, x) in [(BranchFamily::X0, 0.0), (BranchFamily::X1, 1.0)] {
        let g = |f: f64| branch_h_of_f(f, family, p).map(|h| h - p.h).unwrap_or(f64::NAN);
        let mut f_prev = 0.0;
        let mut g_prev = g(0.0);
        if g_prev == 0.0 {
            out.push(State::new(0.0, x));
        }
        for i in 1..CELLS {
            let f = i as f64 / CELLS as f64;
            let gv = g(f);
            if gv == 0.0 {
                out.push(State::new(f, x));
            } else if g_prev != 0.0 && g_prev.signum() != gv.signum() {
                let (mut a, mut b, mut ga) = (f_prev, f, g_prev);
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    let gm = g(mid);
                    if gm.signum() == ga.signum() {
                        a = mid;
                        ga = gm;
                    } else {
                        b = mid;
                    }
                }
                out.push(State::new(0.5 * (a + b), x));
            }
            f_prev = f;
            g_prev = gv;
        }
    }
    out
}

/// Solves `rhs = 0` for one state by Newton with the analytic Jacobian.
pub fn solve_equilibrium<S: PlanarSystem>(
    system: &S,
    guess: State,
    p: &ParameterSet,
    settings: &NewtonSettings,
) -> Result<Equilibrium> {
    let residual = |v: &DVector<f64>| -> DVector<f64> {
        let r: Vector2<f64> = system.rhs(State::new(v[0], v[1]), p);
        DVector::from_column_slice(r.as_slice())
    };
    let jacobian = |v: &DVector<f64>| -> DMatrix<f64> {
        let j = system.jacobian(State::new(v[0], v[1]), p);
        DMatrix::from_column_slice(2, 2, j.as_slice())
    };
    let report = newton(
        &residual,
        Some(&jacobian),
        DVector::from_vec(vec![guess.f, guess.x]),
        settings,
    )?;
    let state = State::new(report.root[0], report.root[1]);
    Ok(Equilibrium::from_state(system, state, *p))
}

/// All equilibria of the forest-grass model with `f` in `[0, 1]`.
///
/// Every seed is polished by Newton; converged points are sorted by `(f, x)`
/// and merged when closer than [`DEDUP_RADIUS`]. The `x` coordinate is not
/// restricted, so the `f = 1/2` point is reported even when it lies outside
/// the unit box.
pub fn find_equilibria(p: &ParameterSet, grid: &SeedGrid) -> Vec<Equilibrium> {
    let settings = NewtonSettings::default();
    let system = ForestGrass;
    let mut found: Vec<Equilibrium> = grid
        .seeds(p)
        .into_iter()
        .filter_map(|seed| solve_equilibrium(&system, seed, p, &settings).ok())
        .filter(|e| e.state.is_finite() && (0.0..1.0).contains(&e.state.f))
        .collect();
    found.sort_by(|a, b| {
        a.state
            .f
            .total_cmp(&b.state.f)
            .then(a.state.x.total_cmp(&b.state.x))
    });
    let mut unique: Vec<Equilibrium> = Vec::new();
    for e in found {
        match unique.iter_mut().find(|u| u.state.distance(&e.state) <= DEDUP_RADIUS) {
            Some(u) => {
                // prefer the representative lying exactly on an analytic family
                if u.family.is_none() && e.family.is_some() {
                    *u = e;
                }
            }
            None => unique.push(e),
        }
    }
    unique
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{h_star, jacobian, ParamName};

    #[test]
    fn newton_square_root() {
        let residual = |v: &DVector<f64>| DVector::from_element(1, v[0] * v[0] - 4.0);
        let jacobian = |v: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 * v[0]);
        let report = newton(
            &residual,
            Some(&jacobian),
            DVector::from_element(1, 3.0),
            &NewtonSettings::default(),
        )
        .unwrap();
        assert!((report.root[0] - 2.0).abs() < 1e-12);
        assert!(report.iterations <= 6);
    }

    #[test]
    fn newton_finite_difference_fallback() {
        let residual = |v: &DVector<f64>| DVector::from_element(1, v[0] * v[0] - 4.0);
        let settings = NewtonSettings { finite_difference: true, ..NewtonSettings::default() };
        let report = newton(&residual, None, DVector::from_element(1, 3.0), &settings).unwrap();
        assert!((report.root[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn newton_quadratic_convergence() {
        let residual = |v: &DVector<f64>| DVector::from_element(1, v[0].exp() - 2.0);
        let jacobian = |v: &DVector<f64>| DMatrix::from_element(1, 1, v[0].exp());
        let mut errors = Vec::new();
        for iters in 1..=4 {
            let settings = NewtonSettings { max_iterations: iters, residual_tol: 1e-300, ..Default::default() };
            let err = match newton(&residual, Some(&jacobian), DVector::from_element(1, 1.0), &settings) {
                Err(Error::MaxIterations { residual, .. }) => residual,
                other => panic!("{other:?}"),
            };
            errors.push(err);
        }
        assert!(errors[2] < 10.0 * errors[1] * errors[1]);
    }

    #[test]
    fn newton_rejects_singular_jacobian() {
        let residual = |v: &DVector<f64>| DVector::from_element(1, v[0] * v[0] + 1.0);
        let jacobian = |v: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 * v[0]);
        let out = newton(&residual, Some(&jacobian), DVector::from_element(1, 0.0), &NewtonSettings::default());
        assert!(matches!(out, Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn newton_lands_on_x1_family() {
        let p = ParameterSet { nu: 0.9, h: 0.3, ..ParameterSet::default() };
        let e = solve_equilibrium(&ForestGrass, State::new(0.2, 1.0), &p, &NewtonSettings::default()).unwrap();
        assert!((e.state.x - 1.0).abs() < 1e-10);
        assert!(e.residual < 1e-10);
        let h = branch_h_of_f(e.state.f, BranchFamily::X1, &p).unwrap();
        assert!((h - 0.3).abs() < 1e-9);
    }

    #[test]
    fn newton_at_fold_is_flagged() {
        // SN4 on x = 0 for nu = 0.2: J11 root near f = 0.685
        let p = ParameterSet { nu: 0.2, ..ParameterSet::default() };
        let mut a = 0.6;
        let mut b = 0.75;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if crate::model::j11(m, &p).unwrap() > 0.0 { a = m } else { b = m }
        }
        let f = 0.5 * (a + b);
        let h = branch_h_of_f(f, BranchFamily::X0, &p).unwrap();
        let q = p.with(ParamName::H, h);
        let residual = |v: &DVector<f64>| {
            let r = ForestGrass.rhs(State::new(v[0], v[1]), &q);
            DVector::from_column_slice(r.as_slice())
        };
        let jacobian = |v: &DVector<f64>| {
            let j = ForestGrass.jacobian(State::new(v[0], v[1]), &q);
            DMatrix::from_column_slice(2, 2, j.as_slice())
        };
        let guess = DVector::from_vec(vec![f + 1e-2, 0.0]);
        match newton(&residual, Some(&jacobian), guess, &NewtonSettings::default()) {
            Ok(report) => assert!(report.iterations >= 8, "{} iterations", report.iterations),
            Err(e) => assert!(matches!(e, Error::SingularJacobian { .. } | Error::MaxIterations { .. })),
        }
    }

    #[test]
    fn eigen2_examples() {
        let eig = eigen2(&Matrix2::identity());
        assert_eq!(eig, [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let eig = eigen2(&Matrix2::new(0.0, 0.3, 0.0, 0.0));
        assert_eq!(eig[0], Complex64::new(0.0, 0.0));
        assert_eq!(eig[1], Complex64::new(0.0, 0.0));
        let (s, x, h) = (10.0, 0.3, 0.5);
        let m = Matrix2::new(0.0, 2.0 * h, -2.0 * s * x * (1.0 - x), 0.0);
        let eig = eigen2(&m);
        let omega = 2.0 * (s * x * h * (1.0 - x)).sqrt();
        assert!(eig[0].re.abs() < 1e-15);
        assert!((eig[0].im - omega).abs() < 1e-12);
        assert!((eig[1].im + omega).abs() < 1e-12);
    }

    #[test]
    fn eigen2_sum_and_product() {
        let m = Matrix2::new(1e8, 1.0, 1.0, 1e-8);
        let eig = eigen2(&m);
        let sum = eig[0] + eig[1];
        let prod = eig[0] * eig[1];
        assert!((sum.re - m.trace()).abs() <= 1e-12 * m.trace().abs());
        assert!((prod.re - m.determinant()).abs() <= 1e-12 * m.determinant().abs().max(1e-300));
    }

    #[test]
    fn classification() {
        let c = |a: f64, b: f64| Stability::classify(&[Complex64::new(a, 0.0), Complex64::new(b, 0.0)]);
        assert_eq!(c(-1.0, -2.0), Stability::StableNode);
        assert_eq!(c(1.0, 2.0), Stability::UnstableNode);
        assert_eq!(c(1.0, -2.0), Stability::Saddle);
        assert_eq!(c(1e-9, -2.0), Stability::NonHyperbolic);
        let f = |re: f64| Stability::classify(&[Complex64::new(re, 1.0), Complex64::new(re, -1.0)]);
        assert_eq!(f(-0.1), Stability::StableFocus);
        assert_eq!(f(0.1), Stability::UnstableFocus);
    }

    fn count(p: ParameterSet) -> Vec<Equilibrium> {
        find_equilibria(&p, &SeedGrid::default())
    }

    #[test]
    fn equilibrium_counts() {
        let base = ParameterSet::default();
        let six = count(ParameterSet { nu: 0.2, h: 0.05, ..base });
        assert_eq!(six.len(), 6, "{six:#?}");
        let families: Vec<_> = six.iter().map(|e| e.family).collect();
        assert_eq!(families.iter().filter(|f| **f == Some(BranchFamily::X0)).count(), 2);
        assert_eq!(families.iter().filter(|f| **f == Some(BranchFamily::X1)).count(), 3);
        assert_eq!(families.iter().filter(|f| **f == Some(BranchFamily::FHalf)).count(), 1);
        assert_eq!(count(ParameterSet { nu: 0.9, h: 0.45, ..base }).len(), 4);
        assert_eq!(count(ParameterSet { nu: 0.2, h: 1.5, ..base }).len(), 1);
    }

    #[test]
    fn equilibria_satisfy_invariants() {
        let p = ParameterSet { nu: 0.2, h: 0.05, ..ParameterSet::default() };
        let all = count(p);
        for (i, e) in all.iter().enumerate() {
            assert!(e.residual < 1e-10);
            assert_eq!(e.stability, Stability::classify(&e.eigenvalues));
            if matches!(e.family, Some(BranchFamily::X0) | Some(BranchFamily::X1)) {
                let j = jacobian(e.state, &p).unwrap();
                let mut diag = [j[(0, 0)], j[(1, 1)]];
                diag.sort_by(|a, b| b.total_cmp(a));
                assert_eq!(e.eigenvalues[0].re, diag[0]);
                assert!((e.eigenvalues[1].re - diag[1]).abs() <= 1e-14 * diag[1].abs().max(1.0));
            }
            for other in &all[i + 1..] {
                assert!(e.state.distance(&other.state) > DEDUP_RADIUS);
            }
        }
    }

    #[test]
    fn zero_h_contains_origin() {
        let p = ParameterSet { h: 0.0, ..ParameterSet::default() };
        let all = count(p);
        assert!(all
            .iter()
            .any(|e| e.family == Some(BranchFamily::X0) && e.state.f.abs() < 1e-12));
    }

    #[test]
    fn stability_pattern_along_x0() {
        // intervals (0, 1/2), (1/2, rho1), (rho1, rho2), (rho2, 1)
        let p = ParameterSet { nu: 0.2, ..ParameterSet::default() };
        let signs = |f: f64| {
            let q = p.with(ParamName::H, branch_h_of_f(f, BranchFamily::X0, &p).unwrap());
            let j = jacobian(State::new(f, 0.0), &q).unwrap();
            (j[(0, 0)].signum(), j[(1, 1)].signum())
        };
        assert_eq!(signs(0.3), (-1.0, 1.0));
        assert_eq!(signs(0.52), (-1.0, -1.0));
        assert_eq!(signs(0.6), (1.0, -1.0));
        assert_eq!(signs(0.8), (-1.0, -1.0));
        let stable_x1 = |f: f64| {
            let q = p.with(ParamName::H, branch_h_of_f(f, BranchFamily::X1, &p).unwrap());
            Equilibrium::from_state(&ForestGrass, State::new(f, 1.0), q).stability.is_stable()
        };
        assert!(stable_x1(0.3));
        assert!(!stable_x1(0.52));
        assert!(!stable_x1(0.6));
        assert!(!stable_x1(0.8));
        assert!(h_star(&p) < 0.0);
    }
}
