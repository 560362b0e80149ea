use fgbif::cycles::{gauss_legendre, CycleMesh};
use fgbif::model::*;
use fgbif::odeint::{integrate, run_scenario, Perturbation, Scenario, Tolerances};
use fgbif::solver::{eigen2, find_equilibria, SeedGrid, Stability, HYPERBOLICITY_THRESHOLD};
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ParameterSet> {
    (0.5..2.0f64, 5.0..15.0f64, 2.0..20.0f64, 1.0..20.0f64, 0.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(c, b, k, s, nu, h)| ParameterSet { c, b, k, s, nu, h })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// The model in the coordinates `(f, 1 - x)`, which turns `h` into `-h`.
struct Mirrored;

fn flipped(p: &ParameterSet) -> ParameterSet {
    p.with(ParamName::H, -p.h)
}

impl PlanarSystem for Mirrored {
    fn rhs(&self, s: State, p: &ParameterSet) -> Vector2<f64> {
        let v = ForestGrass.rhs(s, &flipped(p));
        Vector2::new(v[0], -v[1])
    }
    fn jacobian(&self, s: State, p: &ParameterSet) -> Matrix2<f64> {
        let j = ForestGrass.jacobian(s, &flipped(p));
        Matrix2::new(j[(0, 0)], j[(0, 1)], -j[(1, 0)], -j[(1, 1)])
    }
    fn param_derivative(&self, s: State, p: &ParameterSet, name: ParamName) -> Vector2<f64> {
        let d = ForestGrass.param_derivative(s, &flipped(p), name);
        let sign = if name == ParamName::H { -1.0 } else { 1.0 };
        Vector2::new(sign * d[0], -sign * d[1])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fixed_point_families_mirror(p in params(), f in 0.0..=1.0f64) {
        let h0 = branch_h_of_f(f, BranchFamily::X0, &p).unwrap();
        let h1 = branch_h_of_f(f, BranchFamily::X1, &p).unwrap();
        prop_assert_eq!(h1, -h0);
    }

    #[test]
    fn determinant_is_antisymmetric_across_invariant_lines(p in params(), f in 0.0..0.999f64) {
        let d0 = jacobian(State::new(f, 0.0), &p).unwrap().determinant();
        let d1 = jacobian(State::new(f, 1.0), &p).unwrap().determinant();
        prop_assert!(rel_close(d1, -d0, 1e-12), "{} vs {}", d1, d0);
    }

    #[test]
    fn fire_rate_and_slope_are_positive(p in params(), f in 1e-6..0.95f64) {
        let w = fire_rate(f, &p).unwrap();
        prop_assert!(w > 0.0 && w <= p.c);
        prop_assert!(fire_rate_deriv(f, &p).unwrap() > 0.0);
    }

    #[test]
    fn jacobian_is_triangular_on_invariant_lines(p in params(), f in 0.0..0.999f64, one in any::<bool>()) {
        let x = if one { 1.0 } else { 0.0 };
        let j = jacobian(State::new(f, x), &p).unwrap();
        prop_assert_eq!(j[(1, 0)], 0.0);
        let mut eig: Vec<f64> = eigen2(&j).iter().map(|l| l.re).collect();
        let mut diag = vec![j[(0, 0)], j[(1, 1)]];
        eig.sort_by(f64::total_cmp);
        diag.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&diag) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        prop_assert!(eigen2(&j).iter().all(|l| l.im == 0.0));
    }

    #[test]
    fn jacobian_matches_central_differences(p in params(), f in 0.01..0.95f64, x in 0.0..=1.0f64) {
        let s = State::new(f, x);
        let j = jacobian(s, &p).unwrap();
        let step = 1e-6 * s.f.abs().max(s.x.abs()).max(1.0);
        let scale = j.abs().max().max(1.0);
        for col in 0..2 {
            let mut plus = s;
            let mut minus = s;
            if col == 0 { plus.f += step; minus.f -= step; } else { plus.x += step; minus.x -= step; }
            let d = (ForestGrass.rhs(plus, &p) - ForestGrass.rhs(minus, &p)) / (2.0 * step);
            for row in 0..2 {
                prop_assert!((d[row] - j[(row, col)]).abs() <= 1e-5 * scale, "entry ({row},{col})");
            }
        }
    }

    #[test]
    fn closed_form_fixed_points_are_roots(p in params(), f in 0.001..0.999f64) {
        for (family, x) in [(BranchFamily::X0, 0.0), (BranchFamily::X1, 1.0)] {
            let q = p.with(ParamName::H, branch_h_of_f(f, family, &p).unwrap());
            prop_assert!(rhs(State::new(f, x), &q).unwrap().norm() < 1e-12);
        }
        prop_assume!(p.h.abs() > 1e-3);
        let x = branch_x_of_h(&p).unwrap();
        prop_assert!(ForestGrass.rhs(State::new(0.5, x), &p).norm() < 1e-12);
    }

    #[test]
    fn transcritical_eigenstructure(p in params()) {
        let q = p.with(ParamName::H, h_star(&p));
        let j = jacobian(State::new(0.5, 0.0), &q).unwrap();
        prop_assert_eq!(j[(1, 1)], 0.0);
        let other = fire_rate_deriv(0.5, &q).unwrap() / 4.0 - q.nu;
        prop_assert!((j[(0, 0)] - other).abs() <= 1e-12 * (1.0 + other.abs()));
        prop_assert_eq!(h_star(&p) + h_double_star(&p), 0.0);
    }

    #[test]
    fn peak_formula_agrees_with_direct_evaluation(p in params()) {
        let (f_peak, value) = j11_peak(&p).unwrap();
        prop_assert!((f_peak - p.b / (p.b + p.k)).abs() < 1e-15);
        let direct = j11(f_peak, &p).unwrap();
        prop_assert!((value - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        prop_assert_eq!(cusp_residual(&p).signum(), value.signum());
    }

    #[test]
    fn hopf_roots_solve_the_residual(p in params()) {
        let roots = hopf_k_roots(&p);
        prop_assert!(roots.len() <= 2);
        for k in roots {
            prop_assert!(hopf_residual(&p.with(ParamName::K, k)).abs() < 1e-10);
        }
    }

    #[test]
    fn eigen_pair_reproduces_trace_and_determinant(a in -50.0..50.0f64, b in -50.0..50.0f64, c in -50.0..50.0f64, d in -50.0..50.0f64) {
        let m = Matrix2::new(a, b, c, d);
        let [l1, l2] = eigen2(&m);
        let scale = m.abs().max().max(1.0);
        prop_assert!(((l1 + l2).re - m.trace()).abs() <= 1e-12 * scale);
        prop_assert!((l1 + l2).im.abs() <= 1e-12 * scale);
        prop_assert!(((l1 * l2).re - m.determinant()).abs() <= 1e-12 * scale * scale);
    }

    #[test]
    fn gauss_weights_sum_to_one_on_any_mesh(cuts in proptest::collection::vec(0.01..0.99f64, 3..12), m in 2usize..=7) {
        let mut inner = cuts;
        inner.sort_by(f64::total_cmp);
        inner.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        prop_assume!(inner.len() >= 3);
        let mut boundaries = vec![0.0];
        boundaries.extend(inner);
        boundaries.push(1.0);
        let mesh = CycleMesh::with_boundaries(boundaries, m).unwrap();
        let total: f64 = (0..mesh.intervals()).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| mesh.gauss_weight(i, j)).sum();
        prop_assert!((total - 1.0).abs() < 1e-13);
        prop_assert_eq!(mesh.point_times().len(), mesh.points());
        prop_assert!(gauss_legendre(m).0.iter().all(|&u| u > 0.0 && u < 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn found_equilibria_are_converged_and_classified(p in params()) {
        for eq in find_equilibria(&p, &SeedGrid::default()) {
            prop_assert!(eq.residual < 1e-10);
            let [l1, l2] = eq.eigenvalues;
            let expected = if l1.re.abs() < HYPERBOLICITY_THRESHOLD || l2.re.abs() < HYPERBOLICITY_THRESHOLD {
                Stability::NonHyperbolic
            } else if l1.im != 0.0 {
                if l1.re < 0.0 { Stability::StableFocus } else { Stability::UnstableFocus }
            } else if l1.re < 0.0 && l2.re < 0.0 {
                Stability::StableNode
            } else if l1.re > 0.0 && l2.re > 0.0 {
                Stability::UnstableNode
            } else {
                Stability::Saddle
            };
            prop_assert_eq!(eq.stability, expected);
        }
    }

    #[test]
    fn mirrored_trajectories_coincide(p in params(), f0 in 0.05..0.95f64, x0 in 0.05..0.95f64) {
        let tol = Tolerances { rtol: 1e-12, atol: 1e-12, ..Tolerances::default() };
        let direct = integrate(&ForestGrass, State::new(f0, x0), &p, (0.0, 5.0), &tol).unwrap();
        let mirrored = integrate(&Mirrored, State::new(f0, 1.0 - x0), &p, (0.0, 5.0), &tol).unwrap();
        for t in [0.5, 1.0, 2.5, 5.0] {
            let a = direct.sample(t);
            let b = mirrored.sample(t);
            prop_assert!((a.f - b.f).abs() < 1e-7 && (a.x - (1.0 - b.x)).abs() < 1e-7, "t={} {:?} {:?}", t, a, b);
        }
    }

    #[test]
    fn state_after_a_jump_is_exact(p in params(), f1 in 0.0..=1.0f64, x1 in 0.0..=1.0f64) {
        let sc = Scenario {
            initial: State::new(0.4, 0.6),
            params: p,
            t_start: 0.0,
            horizon: 20.0,
            perturbations: vec![Perturbation::StateJump { time: 10.0, f: Some(f1), x: Some(x1), relative: false }],
        };
        let traj = run_scenario(&ForestGrass, &sc, &Tolerances::default()).unwrap();
        prop_assert_eq!(traj.events.len(), 1);
        prop_assert_eq!(traj.segments[1].states[0], State::new(f1, x1));
        prop_assert_eq!(traj.events[0].after, State::new(f1, x1));
        prop_assert_eq!(traj.segments[0].t_end(), traj.segments[1].t_start());
    }
}
