//! Moore-Penrose predictor-corrector for curves `F(z) = 0` with
//! `F: R^{n+1} -> R^n`, and secant refinement of scalar test functions
//! along an accepted step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerated excess of the end-tangent/chord angle over the start-tangent/chord angle.
const CHORD_SKEW_FLOOR: f64 = 1e-3;

/// An implicitly defined curve.
pub trait Curve {
    /// Number of unknowns; the residual has one entry fewer.
    fn dim(&self) -> usize;

    fn residual(&self, z: &DVector<f64>) -> DVector<f64>;

    /// Jacobian of [`Curve::residual`], `(dim - 1) x dim`.
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64>;

    /// Whether `z` lies in the region the caller wants traced.
    fn in_domain(&self, _z: &DVector<f64>) -> bool {
        true
    }

    /// Called after each accepted point, for curves whose residual depends on
    /// the previous solution.
    fn accepted(&mut self, _z: &DVector<f64>, _v: &DVector<f64>) {}
}

/// Step-size control and corrector tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Grow the step when the corrector needs at most this many iterations.
    pub fast_iterations: usize,
    /// Shrink the step when the corrector needs more than this many.
    pub slow_iterations: usize,
    pub max_corrector_iterations: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_points: usize,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            min_step: 1e-8,
            max_step: 0.1,
            grow: 1.3,
            shrink: 0.5,
            fast_iterations: 3,
            slow_iterations: 6,
            max_corrector_iterations: 10,
            residual_tol: 1e-11,
            step_tol: 1e-10,
            max_points: 5000,
        }
    }
}

impl StepSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_step,
            self.min_step,
            self.max_step,
            self.residual_tol,
            self.step_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("step sizes and tolerances must be positive".into()));
        }
        if self.min_step > self.initial_step || self.initial_step > self.max_step {
            return Err(Error::InvalidInput("steps must satisfy min <= initial <= max".into()));
        }
        if !(self.grow > 1.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidInput("grow must exceed 1 and shrink lie in (0, 1)".into()));
        }
        if self.max_points < 2 || self.max_corrector_iterations == 0 {
            return Err(Error::InvalidInput("max_points >= 2 and corrector iterations >= 1".into()));
        }
        Ok(())
    }
}

/// A point on a curve with its unit tangent.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub z: DVector<f64>,
    pub v: DVector<f64>,
    pub arclength: f64,
    pub iterations: usize,
}

/// Why a traced curve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The stop predicate fired (parameter bounds).
    Bounds,
    /// The next point left the curve's domain.
    Domain,
    MaxPoints,
    /// Three consecutive failures below the minimum step.
    StepUnderflow,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Bounds => "bounds",
            Termination::Domain => "domain",
            Termination::MaxPoints => "max_points",
            Termination::StepUnderflow => "step_underflow",
        }
    }
}

fn bordered(jac: &DMatrix<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    let n = jac.ncols();
    let mut a = DMatrix::zeros(n, n);
    a.rows_mut(0, n - 1).copy_from(jac);
    a.row_mut(n - 1).copy_from(&row.transpose());
    a
}

/// Solves a bordered system by LU, falling back to the least-squares
/// solution when the matrix is exactly singular.
fn solve_bordered(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(x) = a.clone().lu().solve(rhs) {
        if x.iter().all(|c| c.is_finite()) {
            return Some(x);
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = 1e-14 * svd.singular_values.max();
    svd.solve(rhs, eps).ok()
}

/// Unit tangent of the curve at a point with Jacobian `jac`, oriented to
/// have positive inner product with `orient`.
///
/// When the bordered matrix is exactly singular the tangent is the
/// eigenvector of `jac^T jac` with the smallest eigenvalue; an error is
/// returned if that vector is orthogonal to `orient`.
pub fn tangent(jac: &DMatrix<f64>, orient: &DVector<f64>) -> Result<DVector<f64>> {
    let n = jac.ncols();
    let a = bordered(jac, orient);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    if let Some(t) = a.lu().solve(&rhs) {
        let norm = t.norm();
        if norm > 0.0 && norm.is_finite() {
            return Ok(t / norm);
        }
    }
    let eig = (jac.transpose() * jac).symmetric_eigen();
    let idx = eig.eigenvalues.imin();
    let t = eig.eigenvectors.column(idx).into_owned();
    let along = t.dot(orient);
    if along.abs() < 1e-12 * orient.norm() {
        return Err(Error::SingularJacobian { condition: f64::INFINITY });
    }
    Ok(if along < 0.0 { -t } else { t })
}

/// Moore-Penrose correction: each iteration solves the system bordered by
/// the current tangent and refreshes the tangent from the same matrix.
pub fn correct<C: Curve + ?Sized>(
    curve: &C,
    z0: DVector<f64>,
    v0: DVector<f64>,
    settings: &StepSettings,
) -> Result<(DVector<f64>, DVector<f64>, usize)> {
    let n = z0.len();
    let mut z = z0;
    let mut v = v0;
    for it in 1..=settings.max_corrector_iterations {
        let r = curve.residual(&z);
        let jac = curve.jacobian(&z);
        let a = bordered(&jac, &v);
        let lu = a.lu();
        let mut rhs_z = DVector::zeros(n);
        rhs_z.rows_mut(0, n - 1).copy_from(&r);
        let mut rhs_v = DVector::zeros(n);
        rhs_v.rows_mut(0, n - 1).copy_from(&(&jac * &v));
        let dz = lu.solve(&rhs_z).ok_or_else(|| Error::CorrectorDivergence("singular bordered matrix".into()))?;
        let dv = lu.solve(&rhs_v).ok_or_else(|| Error::CorrectorDivergence("singular bordered matrix".into()))?;
        z -= &dz;
        let v_new = &v - dv;
        let norm = v_new.norm();
        if !(norm > 0.0) || !z.iter().all(|c| c.is_finite()) {
            return Err(Error::CorrectorDivergence("non-finite corrector iterate".into()));
        }
        v = v_new / norm;
        let res = curve.residual(&z).norm();
        if !res.is_finite() {
            return Err(Error::CorrectorDivergence("non-finite residual".into()));
        }
        if res < settings.residual_tol && dz.norm() < settings.step_tol * (1.0 + z.norm()) {
            return Ok((z, v, it));
        }
    }
    Err(Error::CorrectorDivergence(format!(
        "no convergence in {} corrector iterations",
        settings.max_corrector_iterations
    )))
}

/// Newton solve of `F(z) = 0` on the hyperplane `normal . (z - anchor) = offset`.
pub fn correct_on_plane<C: Curve + ?Sized>(
    curve: &C,
    guess: DVector<f64>,
    anchor: &DVector<f64>,
    normal: &DVector<f64>,
    offset: f64,
    settings: &StepSettings,
) -> Result<DVector<f64>> {
    let n = guess.len();
    let mut z = guess;
    for _ in 0..(2 * settings.max_corrector_iterations) {
        let r = curve.residual(&z);
        let plane = normal.dot(&(&z - anchor)) - offset;
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n - 1).copy_from(&r);
        rhs[n - 1] = plane;
        let a = bordered(&curve.jacobian(&z), normal);
        let dz = solve_bordered(&a, &rhs).ok_or_else(|| Error::CorrectorDivergence("singular bordered matrix".into()))?;
        z -= &dz;
        if !z.iter().all(|c| c.is_finite()) {
            return Err(Error::CorrectorDivergence("non-finite iterate".into()));
        }
        let res = curve.residual(&z).norm() + (normal.dot(&(&z - anchor)) - offset).abs();
        if res < settings.residual_tol && dz.norm() < settings.step_tol * (1.0 + z.norm()) {
            return Ok(z);
        }
    }
    let res = curve.residual(&z).norm();
    if res < settings.residual_tol {
        Ok(z)
    } else {
        Err(Error::CorrectorDivergence(format!("plane correction stalled at residual {res:e}")))
    }
}

/// Traces a curve from `start` along `start.v` until `stop` returns true
/// for a candidate point, the domain is left, `max_points` is reached or the
/// step underflows. The candidate that triggers a stop is not included.
pub fn trace_curve<C: Curve + ?Sized>(
    curve: &mut C,
    start: CurvePoint,
    settings: &StepSettings,
    mut stop: impl FnMut(&CurvePoint) -> bool,
) -> Result<(Vec<CurvePoint>, Termination)> {
    settings.validate()?;
    let mut points = vec![start];
    let mut h = settings.initial_step;
    let mut underflows = 0;
    curve.accepted(&points[0].z, &points[0].v);
    loop {
        if points.len() >= settings.max_points {
            return Ok((points, Termination::MaxPoints));
        }
        let last = points.last().expect("non-empty");
        let predicted = &last.z + &last.v * h;
        let attempt = correct(&*curve, predicted, last.v.clone(), settings);
        let accepted = match attempt {
            Ok((z, v, iterations)) => {
                let dist = (&z - &last.z).norm();
                let v = if v.dot(&last.v) < 0.0 { -v } else { v };
                // On a smooth arc the chord bisects the two end tangents. A
                // corrector that lands on a crossing curve breaks that symmetry
                // or lands far from the prediction, and one that jumps over a
                // sharp turning point ends with a tangent pointing back along
                // the chord.
                let chord = (&z - &last.z) / dist.max(f64::MIN_POSITIVE);
                let skew_start = (&last.v - &chord).norm();
                let skew_end = (&v - &chord).norm();
                if dist > 2.0 * h
                    || dist == 0.0
                    || v.dot(&last.v) < 0.5
                    || v.dot(&chord) <= 0.0
                    || skew_end > 4.0 * skew_start + CHORD_SKEW_FLOOR
                {
                    None
                } else {
                    Some(CurvePoint { arclength: last.arclength + dist, z, v, iterations })
                }
            }
            Err(_) => None,
        };
        match accepted {
            Some(point) => {
                underflows = 0;
                if !curve.in_domain(&point.z) {
                    return Ok((points, Termination::Domain));
                }
                if stop(&point) {
                    return Ok((points, Termination::Bounds));
                }
                if point.iterations <= settings.fast_iterations {
                    h = (h * settings.grow).min(settings.max_step);
                } else if point.iterations > settings.slow_iterations {
                    h = (h * settings.shrink).max(settings.min_step);
                }
                curve.accepted(&point.z, &point.v);
                points.push(point);
            }
            None => {
                h *= settings.shrink;
                if h < settings.min_step {
                    underflows += 1;
                    h = settings.min_step;
                    if underflows >= 3 {
                        if points.len() == 1 {
                            return Err(Error::CorrectorDivergence(
                                "no step accepted from the starting point".into(),
                            ));
                        }
                        return Ok((points, Termination::StepUnderflow));
                    }
                }
            }
        }
    }
}

/// Test-function magnitude a refined point must reach once its bracket is
/// narrow.
pub const REFINE_VALUE_TOL: f64 = 1e-8;

/// Result of [`refine_on_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub point: CurvePoint,
    pub value: f64,
    pub bracket_width: f64,
}

/// Point on the curve between consecutive points `a` and `b` whose
/// projection on `a.v` lies at distance `d` from `a`.
pub fn point_between<C: Curve + ?Sized>(
    curve: &C,
    a: &CurvePoint,
    b: &CurvePoint,
    d: f64,
    settings: &StepSettings,
) -> Result<CurvePoint> {
    let span = a.v.dot(&(&b.z - &a.z));
    let guess = hermite_guess(a, b, span, d);
    let z = correct_on_plane(curve, guess, &a.z, &a.v, d, settings)?;
    let v = tangent(&curve.jacobian(&z), &a.v)?;
    Ok(CurvePoint { arclength: a.arclength + (&z - &a.z).norm(), z, v, iterations: 0 })
}

/// Cubic Hermite estimate of the curve point whose projection on `a.v` is `d`.
fn hermite_guess(a: &CurvePoint, b: &CurvePoint, span: f64, d: f64) -> DVector<f64> {
    let t = d / span;
    let (t2, t3) = (t * t, t * t * t);
    let slope_a = &a.v * (span / a.v.dot(&a.v));
    let denom = b.v.dot(&a.v);
    let slope_b = if denom.abs() > 1e-12 { &b.v * (span / denom) } else { &b.z - &a.z };
    &a.z * (2.0 * t3 - 3.0 * t2 + 1.0)
        + slope_a * (t3 - 2.0 * t2 + t)
        + &b.z * (-2.0 * t3 + 3.0 * t2)
        + slope_b * (t3 - t2)
}

/// Locates a sign change of `g` between two consecutive accepted points by
/// the Illinois variant of regula falsi on the distance along `a.v`, with a
/// full correction onto the curve at every probe.
///
/// Stops once the bracket is narrower than `width_tol` and the best `|g|`
/// is below [`REFINE_VALUE_TOL`], or `|g| < 1e-14`.
pub fn refine_on_curve<C: Curve + ?Sized>(
    curve: &C,
    a: &CurvePoint,
    b: &CurvePoint,
    g: &dyn Fn(&DVector<f64>, &DVector<f64>) -> f64,
    width_tol: f64,
    settings: &StepSettings,
    what: &'static str,
) -> Result<Refined> {
    let span = a.v.dot(&(&b.z - &a.z));
    let mut g_lo = g(&a.z, &a.v);
    let mut g_hi = g(&b.z, &b.v);
    if !(g_lo.is_finite() && g_hi.is_finite()) || g_lo.signum() == g_hi.signum() || !(span > 0.0) {
        return Err(Error::LostBracket(what));
    }
    let (mut lo, mut hi) = (0.0, span);
    let mut best = (g_lo.abs(), a.clone(), g_lo);
    if g_hi.abs() < best.0 {
        best = (g_hi.abs(), b.clone(), g_hi);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let narrow = hi - lo < width_tol || hi - lo <= 4.0 * f64::EPSILON * span;
        if (narrow && best.0 < REFINE_VALUE_TOL) || best.0 < 1e-14 {
            break;
        }
        let mut d = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(d > lo && d < hi) {
            d = 0.5 * (lo + hi);
        }
        let point = point_between(curve, a, b, d, settings)?;
        let gd = g(&point.z, &point.v);
        if !gd.is_finite() {
            return Err(Error::LostBracket(what));
        }
        if gd.abs() < best.0 {
            best = (gd.abs(), point.clone(), gd);
        }
        if gd.signum() == g_lo.signum() {
            lo = d;
            g_lo = gd;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = d;
            g_hi = gd;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(Refined { point: best.1, value: best.2, bracket_width: hi - lo })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit circle in the plane.
    struct Circle;

    impl Curve for Circle {
        fn dim(&self) -> usize {
            2
        }
        fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, z[0] * z[0] + z[1] * z[1] - 1.0)
        }
        fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[2.0 * z[0], 2.0 * z[1]])
        }
    }

    #[test]
    fn traces_a_circle_through_its_turning_points() {
        let start = CurvePoint {
            z: DVector::from_vec(vec![1.0, 0.0]),
            v: DVector::from_vec(vec![0.0, 1.0]),
            arclength: 0.0,
            iterations: 0,
        };
        let settings = StepSettings { max_points: 10_000, ..StepSettings::default() };
        let (points, term) = trace_curve(&mut Circle, start, &settings, |p| p.arclength > 6.0).unwrap();
        assert_eq!(term, Termination::Bounds);
        for p in &points {
            assert!(Circle.residual(&p.z).norm() < 1e-10);
            assert!((p.v.norm() - 1.0).abs() < 1e-12);
        }
        for w in points.windows(2) {
            assert!(w[1].v.dot(&w[0].v) > 0.0);
            assert!(w[1].arclength > w[0].arclength);
        }
        // passed both vertical turning points of the x-coordinate
        assert!(points.iter().any(|p| p.z[0] < -0.99));
    }

    #[test]
    fn refines_a_turning_point() {
        let mk = |angle: f64| CurvePoint {
            z: DVector::from_vec(vec![angle.cos(), angle.sin()]),
            v: DVector::from_vec(vec![-angle.sin(), angle.cos()]),
            arclength: angle,
            iterations: 0,
        };
        let (a, b) = (mk(1.4), mk(1.7));
        let g = |_: &DVector<f64>, v: &DVector<f64>| v[1];
        let r = refine_on_curve(&Circle, &a, &b, &g, 1e-12, &StepSettings::default(), "turning point").unwrap();
        assert!(r.value.abs() < 1e-10);
        assert!(r.point.z[0].abs() < 1e-10);
        let bad = |_: &DVector<f64>, _: &DVector<f64>| 1.0;
        assert!(matches!(
            refine_on_curve(&Circle, &a, &b, &bad, 1e-12, &StepSettings::default(), "x"),
            Err(Error::LostBracket(_))
        ));
    }
}
