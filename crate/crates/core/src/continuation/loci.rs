//! Two-parameter continuation of fold and Hopf loci with Bogdanov-Takens
//! and cusp detection.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::engine::{self, Curve, CurvePoint, StepSettings, Termination};
use super::{BifurcationKind, BifurcationPoint};
use crate::error::{Error, Result};
use crate::model::{ParamName, ParameterSet, PlanarSystem, State};
use crate::solver::eigen2;

const X_LIMIT: f64 = 1e3;
const F_MARGIN: f64 = 1e-9;
const REFINE_WIDTH: f64 = 1e-10;
const CUSP_REFINE_WIDTH: f64 = 1e-14;
/// Parameter-tangent magnitude below which a normal-form zero counts as a cusp.
const CUSP_TANGENT_MAX: f64 = 1e-3;

/// Which augmented system a locus solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocusKind {
    /// `rhs = 0, det J = 0`.
    Fold,
    /// `rhs = 0, trace J = 0`.
    Hopf,
    /// Folds of limit cycles, computed by [`crate::cycles::lpc_two_param`].
    Lpc,
}

impl LocusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LocusKind::Fold => "fold",
            LocusKind::Hopf => "hopf",
            LocusKind::Lpc => "lpc",
        }
    }
}

/// Parameter box and step control for two-parameter continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusBounds {
    pub first: (f64, f64),
    pub second: (f64, f64),
    pub step: StepSettings,
}

impl LocusBounds {
    pub fn new(first: (f64, f64), second: (f64, f64)) -> Self {
        Self {
            first,
            second,
            step: StepSettings { max_points: 20_000, ..StepSettings::default() },
        }
    }

    pub fn contains(&self, a: f64, b: f64) -> bool {
        (self.first.0..=self.first.1).contains(&a) && (self.second.0..=self.second.1).contains(&b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.first.0 < self.first.1) || !(self.second.0 < self.second.1) {
            return Err(Error::InvalidInput("locus bounds must satisfy min < max".into()));
        }
        self.step.validate()
    }
}

/// A point on a two-parameter locus.
#[derive(Debug, Clone, PartialEq)]
pub struct LocusPoint {
    pub state: State,
    pub params: ParameterSet,
    pub tangent: Vec<f64>,
    pub arclength: f64,
    pub det: f64,
    pub trace: f64,
    pub eigenvalues: [Complex64; 2],
    /// Residual norm of the defining augmented system.
    pub residual: f64,
    /// Period of the cycle, for loci of cycle folds.
    pub period: Option<f64>,
}

/// A curve of codimension-one points in a parameter plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParamLocus {
    pub kind: LocusKind,
    pub params: (ParamName, ParamName),
    pub points: Vec<LocusPoint>,
    pub codim2: Vec<BifurcationPoint>,
    /// How each half of the locus ended (backward, forward).
    pub termination: (Termination, Termination),
    pub(crate) base: ParameterSet,
    pub(crate) curve_points: Vec<CurvePoint>,
}

impl TwoParamLocus {
    pub fn values(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .map(move |p| (p.params.get(self.params.0), p.params.get(self.params.1)))
    }
}

pub(crate) struct LocusCurve<'a, S> {
    pub system: &'a S,
    pub base: ParameterSet,
    pub params: (ParamName, ParamName),
    pub kind: LocusKind,
}

impl<S: PlanarSystem> LocusCurve<'_, S> {
    fn unpack(&self, z: &DVector<f64>) -> (State, ParameterSet) {
        let p = self.base.with(self.params.0, z[2]).with(self.params.1, z[3]);
        (State::new(z[0], z[1]), p)
    }

    fn pack(&self, state: State, p: &ParameterSet) -> DVector<f64> {
        DVector::from_vec(vec![state.f, state.x, p.get(self.params.0), p.get(self.params.1)])
    }

    fn state_jacobian(&self, z: &DVector<f64>) -> Matrix2<f64> {
        let (s, p) = self.unpack(z);
        self.system.jacobian(s, &p)
    }

    fn condition(&self, z: &DVector<f64>) -> f64 {
        let j = self.state_jacobian(z);
        match self.kind {
            LocusKind::Hopf => j.trace(),
            _ => j.determinant(),
        }
    }

    fn to_point(&self, cp: &CurvePoint) -> LocusPoint {
        let (state, params) = self.unpack(&cp.z);
        let j = self.system.jacobian(state, &params);
        LocusPoint {
            state,
            params,
            tangent: cp.v.iter().copied().collect(),
            arclength: cp.arclength,
            det: j.determinant(),
            trace: j.trace(),
            eigenvalues: eigen2(&j),
            residual: self.residual(&cp.z).norm(),
            period: None,
        }
    }
}

/// Central difference of a scalar function of `z` along coordinate `i`.
fn partial(g: &dyn Fn(&DVector<f64>) -> f64, z: &DVector<f64>, i: usize) -> f64 {
    let step = 1e-6 * z[i].abs().max(1.0);
    let mut zp = z.clone();
    zp[i] += step;
    let mut zm = z.clone();
    zm[i] -= step;
    (g(&zp) - g(&zm)) / (2.0 * step)
}

impl<S: PlanarSystem> Curve for LocusCurve<'_, S> {
    fn dim(&self) -> usize {
        4
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let (s, p) = self.unpack(z);
        let r = self.system.rhs(s, &p);
        DVector::from_vec(vec![r[0], r[1], self.condition(z)])
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (s, p) = self.unpack(z);
        let j = self.system.jacobian(s, &p);
        let f1 = self.system.param_derivative(s, &p, self.params.0);
        let f2 = self.system.param_derivative(s, &p, self.params.1);
        let g = |w: &DVector<f64>| self.condition(w);
        let mut m = DMatrix::zeros(3, 4);
        for r in 0..2 {
            m[(r, 0)] = j[(r, 0)];
            m[(r, 1)] = j[(r, 1)];
            m[(r, 2)] = f1[r];
            m[(r, 3)] = f2[r];
        }
        for c in 0..4 {
            m[(2, c)] = partial(&g, z, c);
        }
        m
    }

    fn in_domain(&self, z: &DVector<f64>) -> bool {
        z[0] >= 0.0 && z[0] <= 1.0 - F_MARGIN && z[1].abs() <= X_LIMIT
    }
}

fn start_kind_check(point: &BifurcationPoint, wanted: BifurcationKind) -> Result<()> {
    if point.kind != wanted {
        return Err(Error::InvalidInput(format!(
            "expected a {wanted} point to start the locus, got {}",
            point.kind
        )));
    }
    Ok(())
}

/// Continues a fold in two parameters on `{rhs = 0, det J = 0}`, in both
/// directions from the starting point, and detects cusp and
/// Bogdanov-Takens points on the result.
pub fn continue_fold_locus<S: PlanarSystem>(
    system: &S,
    fold: &BifurcationPoint,
    params: (ParamName, ParamName),
    bounds: &LocusBounds,
) -> Result<TwoParamLocus> {
    start_kind_check(fold, BifurcationKind::Fold)?;
    continue_locus(system, fold, params, bounds, LocusKind::Fold)
}

/// Continues a Hopf point in two parameters on `{rhs = 0, trace J = 0}`;
/// points where `det J` changes sign are reported as Bogdanov-Takens points.
pub fn continue_hopf_locus<S: PlanarSystem>(
    system: &S,
    hopf: &BifurcationPoint,
    params: (ParamName, ParamName),
    bounds: &LocusBounds,
) -> Result<TwoParamLocus> {
    start_kind_check(hopf, BifurcationKind::Hopf)?;
    continue_locus(system, hopf, params, bounds, LocusKind::Hopf)
}

fn continue_locus<S: PlanarSystem>(
    system: &S,
    start: &BifurcationPoint,
    params: (ParamName, ParamName),
    bounds: &LocusBounds,
    kind: LocusKind,
) -> Result<TwoParamLocus> {
    bounds.validate()?;
    if params.0 == params.1 {
        return Err(Error::InvalidInput("the two locus parameters must differ".into()));
    }
    let mut curve = LocusCurve { system, base: start.params, params, kind };
    let z0 = curve.pack(start.state, &start.params);
    if !bounds.contains(z0[2], z0[3]) {
        return Err(Error::InvalidInput("starting point outside the locus bounds".into()));
    }
    let jac = curve.jacobian(&z0);
    let v0 = engine::tangent(&jac, &DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]))
        .or_else(|_| engine::tangent(&jac, &DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0])))?;
    let (z0, v0, _) = engine::correct(&curve, z0, v0, &bounds.step)?;

    let mut halves = Vec::with_capacity(2);
    for sign in [-1.0, 1.0] {
        let start = CurvePoint { z: z0.clone(), v: &v0 * sign, arclength: 0.0, iterations: 0 };
        let (pts, term) = engine::trace_curve(&mut curve, start, &bounds.step, |p| {
            !bounds.contains(p.z[2], p.z[3])
        })?;
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

    let points = cps.iter().map(|cp| curve.to_point(cp)).collect();
    let mut locus = TwoParamLocus {
        kind,
        params,
        points,
        codim2: Vec::new(),
        termination: (term_bwd, term_fwd),
        base: start.params,
        curve_points: cps,
    };
    locus.codim2 = detect_codim2(system, &locus)?;
    Ok(locus)
}

/// Right and left null vectors of a (nearly) singular 2x2 matrix, taken from
/// the smallest singular value.
fn null_vectors(j: &Matrix2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let svd = j.svd(true, true);
    let idx = if svd.singular_values[0] <= svd.singular_values[1] { 0 } else { 1 };
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let q = Vector2::new(vt[(idx, 0)], vt[(idx, 1)]);
    let p = Vector2::new(u[(0, idx)], u[(1, idx)]);
    (q, p)
}

/// `p^T D^2 F(q, q)` from a central difference of the analytic Jacobian.
fn quadratic_coefficient<S: PlanarSystem>(
    system: &S,
    state: State,
    params: &ParameterSet,
    q: &Vector2<f64>,
    p: &Vector2<f64>,
) -> f64 {
    let eps = 1e-5;
    let plus = State::new(state.f + eps * q[0], state.x + eps * q[1]);
    let minus = State::new(state.f - eps * q[0], state.x - eps * q[1]);
    let dj = (system.jacobian(plus, params) - system.jacobian(minus, params)) / (2.0 * eps);
    p.dot(&(dj * q))
}

/// Finds codimension-two points along a locus.
///
/// On a fold locus a sign change of `trace J` marks a Bogdanov-Takens point
/// and a sign change of the quadratic normal-form coefficient, at which the
/// locus tangent has vanishing parameter components, marks a cusp. On a Hopf
/// locus a sign change of `det J` marks a Bogdanov-Takens point.
pub fn detect_codim2<S: PlanarSystem>(system: &S, locus: &TwoParamLocus) -> Result<Vec<BifurcationPoint>> {
    if locus.points.len() < 3 || locus.kind == LocusKind::Lpc {
        return Ok(Vec::new());
    }
    let curve = LocusCurve { system, base: locus.base, params: locus.params, kind: locus.kind };
    let cps = &locus.curve_points;
    let mut found = Vec::new();

    let mut frames: Vec<(Vector2<f64>, Vector2<f64>)> = Vec::with_capacity(cps.len());
    let mut coeffs = Vec::with_capacity(cps.len());
    if locus.kind == LocusKind::Fold {
        for (i, pt) in locus.points.iter().enumerate() {
            let (mut q, mut p) = null_vectors(&system.jacobian(pt.state, &pt.params));
            if let Some((q_prev, p_prev)) = frames.last() {
                if q.dot(q_prev) < 0.0 {
                    q = -q;
                }
                if p.dot(p_prev) < 0.0 {
                    p = -p;
                }
            } else if i == 0 {
                if q[0] < 0.0 {
                    q = -q;
                }
                if p[0] < 0.0 {
                    p = -p;
                }
            }
            coeffs.push(quadratic_coefficient(system, pt.state, &pt.params, &q, &p));
            frames.push((q, p));
        }
    }

    for i in 0..locus.points.len() - 1 {
        let (a, b) = (&locus.points[i], &locus.points[i + 1]);
        let bt_change = match locus.kind {
            LocusKind::Fold => a.trace.signum() != b.trace.signum(),
            _ => a.det.signum() != b.det.signum(),
        };
        if bt_change {
            if let Ok(bt) = refine_bt(&curve, &cps[i], &cps[i + 1], i) {
                found.push(bt);
            }
        }
        if locus.kind == LocusKind::Fold && coeffs[i].signum() != coeffs[i + 1].signum() {
            let (q_ref, p_ref) = frames[i];
            let g = |z: &DVector<f64>, _: &DVector<f64>| {
                let (s, p) = curve.unpack(z);
                let (mut q, mut pl) = null_vectors(&system.jacobian(s, &p));
                if q.dot(&q_ref) < 0.0 {
                    q = -q;
                }
                if pl.dot(&p_ref) < 0.0 {
                    pl = -pl;
                }
                quadratic_coefficient(system, s, &p, &q, &pl)
            };
            if let Ok(r) = engine::refine_on_curve(&curve, &cps[i], &cps[i + 1], &g, CUSP_REFINE_WIDTH, &StepSettings::default(), "cusp") {
                let param_tangent = (r.point.v[2].powi(2) + r.point.v[3].powi(2)).sqrt();
                if param_tangent < CUSP_TANGENT_MAX {
                    let (state, params) = curve.unpack(&r.point.z);
                    found.push(BifurcationPoint {
                        kind: BifurcationKind::Cusp,
                        state,
                        params,
                        active: vec![locus.params.0, locus.params.1],
                        residual: r.value,
                        eigenvalues: eigen2(&system.jacobian(state, &params)),
                        tangent: r.point.v.iter().copied().collect(),
                        arclength: r.point.arclength,
                        index: i,
                    });
                }
            }
        }
    }
    Ok(found)
}

/// Solves the square system `{rhs = 0, det J = 0, trace J = 0}` from a guess
/// interpolated inside the bracket, falling back to secant refinement of the
/// crossing test function along the locus.
fn refine_bt<S: PlanarSystem>(
    curve: &LocusCurve<'_, S>,
    a: &CurvePoint,
    b: &CurvePoint,
    index: usize,
) -> Result<BifurcationPoint> {
    let crossing = |z: &DVector<f64>| {
        let j = curve.state_jacobian(z);
        match curve.kind {
            LocusKind::Fold => j.trace(),
            _ => j.determinant(),
        }
    };
    let g = |z: &DVector<f64>, _: &DVector<f64>| crossing(z);
    let z = engine::refine_on_curve(curve, a, b, &g, REFINE_WIDTH, &StepSettings::default(), "Bogdanov-Takens point")?
        .point
        .z;
    let (state, params) = curve.unpack(&z);
    let j = curve.system.jacobian(state, &params);
    let v = engine::tangent(&curve.jacobian(&z), &a.v).unwrap_or_else(|_| a.v.clone());
    Ok(BifurcationPoint {
        kind: BifurcationKind::BogdanovTakens,
        state,
        params,
        active: vec![curve.params.0, curve.params.1],
        residual: j.trace().abs().max(j.determinant().abs()),
        eigenvalues: eigen2(&j),
        tangent: v.iter().copied().collect(),
        arclength: a.arclength + (&z - &a.z).norm(),
        index,
    })
}
