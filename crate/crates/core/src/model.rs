//! The human-coupled forest-grassland vector field and its closed-form
//! criticality conditions.
//!
//! The state is `(f, x)`: `f` is the forest proportion and `x` the fraction
//! of the population preferring forest. The dynamics are
//!
//! ```text
//! df/dt = w(f) (1 - f) f - nu f - h (1 - 2x)
//! dx/dt = s x (1 - x) (1 - 2f)
//! w(f)  = c / (1 + exp(b - k f / (1 - f)))
//! ```
//!
//! Everything in this module is a pure function of its arguments. The
//! closed forms double as an oracle for the numerical engine in
//! [`crate::solver`], [`crate::continuation`] and [`crate::cycles`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    /// Maximum fire-induced grass-to-forest transition rate.
    pub c: f64,
    /// Activation offset of `w`.
    pub b: f64,
    /// Activation steepness of `w`.
    pub k: f64,
    /// Social learning rate.
    pub s: f64,
    /// Natural forest-to-grass transition rate.
    pub nu: f64,
    /// Magnitude of human influence.
    pub h: f64,
}

impl Default for ParameterSet {
    /// Reference values `c=1, b=11, k=6.5, s=10, nu=0.2, h=0.5`.
    fn default() -> Self {
        Self {
            c: 1.0,
            b: 11.0,
            k: 6.5,
            s: 10.0,
            nu: 0.2,
            h: 0.5,
        }
    }
}

/// Name of a model parameter, used to select active continuation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    C,
    B,
    K,
    S,
    Nu,
    H,
}

impl ParamName {
    pub const ALL: [ParamName; 6] = [
        ParamName::C,
        ParamName::B,
        ParamName::K,
        ParamName::S,
        ParamName::Nu,
        ParamName::H,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::C => "c",
            ParamName::B => "b",
            ParamName::K => "k",
            ParamName::S => "s",
            ParamName::Nu => "nu",
            ParamName::H => "h",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "c" => Ok(ParamName::C),
            "b" => Ok(ParamName::B),
            "k" => Ok(ParamName::K),
            "s" => Ok(ParamName::S),
            "nu" | "ν" => Ok(ParamName::Nu),
            "h" => Ok(ParamName::H),
            other => Err(Error::InvalidInput(format!("unknown parameter '{other}'"))),
        }
    }
}

impl ParameterSet {
    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::C => self.c,
            ParamName::B => self.b,
            ParamName::K => self.k,
            ParamName::S => self.s,
            ParamName::Nu => self.nu,
            ParamName::H => self.h,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::C => self.c = value,
            ParamName::B => self.b = value,
            ParamName::K => self.k = value,
            ParamName::S => self.s = value,
            ParamName::Nu => self.nu = value,
            ParamName::H => self.h = value,
        }
    }

    /// Copy with one parameter replaced.
    pub fn with(&self, name: ParamName, value: f64) -> Self {
        let mut p = *self;
        p.set(name, value);
        p
    }

    /// Checks `c > 0`, `s > 0`, `k > 0`, `nu >= 0` and finiteness.
    pub fn validate(&self) -> Result<()> {
        for name in ParamName::ALL {
            if !self.get(name).is_finite() {
                return Err(Error::InvalidInput(format!("parameter {name} is not finite")));
            }
        }
        if self.c <= 0.0 {
            return Err(Error::InvalidInput("c must be positive".into()));
        }
        if self.s <= 0.0 {
            return Err(Error::InvalidInput("s must be positive".into()));
        }
        if self.k <= 0.0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        if self.nu < 0.0 {
            return Err(Error::InvalidInput("nu must be non-negative".into()));
        }
        Ok(())
    }
}

/// A phase point `(f, x)`. Values outside the unit box are representable;
/// [`State::is_physical`] tells whether the point is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub f: f64,
    pub x: f64,
}

impl State {
    pub const fn new(f: f64, x: f64) -> Self {
        Self { f, x }
    }

    pub fn is_physical(&self) -> bool {
        (0.0..=1.0).contains(&self.f) && (0.0..=1.0).contains(&self.x)
    }

    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.x.is_finite()
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.f, self.x)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self { f: v[0], x: v[1] }
    }

    /// Max-norm distance.
    pub fn distance(&self, other: &State) -> f64 {
        (self.f - other.f).abs().max((self.x - other.x).abs())
    }
}

/// Analytic fixed-point families: `x = 0`, `x = 1` and `f = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchFamily {
    X0,
    X1,
    FHalf,
}

impl BranchFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchFamily::X0 => "x0",
            BranchFamily::X1 => "x1",
            BranchFamily::FHalf => "f_half",
        }
    }
}

impl fmt::Display for BranchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BranchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x0" => Ok(BranchFamily::X0),
            "x1" => Ok(BranchFamily::X1),
            "f_half" | "fhalf" | "half" => Ok(BranchFamily::FHalf),
            other => Err(Error::InvalidInput(format!("unknown branch family '{other}'"))),
        }
    }
}

/// A planar vector field with an analytic state Jacobian and parameter
/// derivatives. Implementations evaluate without domain checks so that
/// Newton iterates and integrators may leave the physical box.
pub trait PlanarSystem {
    fn rhs(&self, state: State, p: &ParameterSet) -> Vector2<f64>;

    fn jacobian(&self, state: State, p: &ParameterSet) -> Matrix2<f64>;

    fn param_derivative(&self, state: State, p: &ParameterSet, name: ParamName) -> Vector2<f64>;
}

/// The forest-grassland model as a [`PlanarSystem`].
///
/// For `f >= 1` the fire rate is continued by its limit `c` and its
/// derivative by `0`, which keeps the field `C^1` across `f = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForestGrass;

impl PlanarSystem for ForestGrass {
    fn rhs(&self, state: State, p: &ParameterSet) -> Vector2<f64> {
        let State { f, x } = state;
        let w = fire_rate_unchecked(f, p);
        Vector2::new(
            w * (1.0 - f) * f - p.nu * f - p.h * (1.0 - 2.0 * x),
            p.s * x * (1.0 - x) * (1.0 - 2.0 * f),
        )
    }

    fn jacobian(&self, state: State, p: &ParameterSet) -> Matrix2<f64> {
        let State { f, x } = state;
        Matrix2::new(
            j11_unchecked(f, p),
            2.0 * p.h,
            -2.0 * p.s * x * (1.0 - x),
            p.s * (1.0 - 2.0 * x) * (1.0 - 2.0 * f),
        )
    }

    fn param_derivative(&self, state: State, p: &ParameterSet, name: ParamName) -> Vector2<f64> {
        let State { f, x } = state;
        let logistic_part = f * (1.0 - f);
        match name {
            ParamName::C => Vector2::new(fire_rate_unchecked(f, &p.with(ParamName::C, 1.0)) * logistic_part, 0.0),
            ParamName::B => {
                if f >= 1.0 {
                    return Vector2::zeros();
                }
                let u = activation(f, p);
                Vector2::new(-p.c * bell(u) * logistic_part, 0.0)
            }
            ParamName::K => {
                if f >= 1.0 {
                    return Vector2::zeros();
                }
                let u = activation(f, p);
                Vector2::new(p.c * bell(u) * f / (1.0 - f) * logistic_part, 0.0)
            }
            ParamName::S => Vector2::new(0.0, x * (1.0 - x) * (1.0 - 2.0 * f)),
            ParamName::Nu => Vector2::new(-f, 0.0),
            ParamName::H => Vector2::new(-(1.0 - 2.0 * x), 0.0),
        }
    }
}

/// Logistic function `1 / (1 + e^{-t})`, evaluated without overflow.
pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let z = t.exp();
        z / (1.0 + z)
    }
}

/// `e^t / (1 + e^t)^2`, symmetric in `t`.
pub(crate) fn bell(t: f64) -> f64 {
    let z = (-t.abs()).exp();
    z / ((1.0 + z) * (1.0 + z))
}

/// `k f / (1 - f) - b`, so that `w = c * logistic(activation)`.
fn activation(f: f64, p: &ParameterSet) -> f64 {
    p.k * f / (1.0 - f) - p.b
}

fn fire_rate_unchecked(f: f64, p: &ParameterSet) -> f64 {
    if f >= 1.0 {
        p.c
    } else {
        p.c * logistic(activation(f, p))
    }
}

fn fire_rate_deriv_unchecked(f: f64, p: &ParameterSet) -> f64 {
    if f >= 1.0 {
        0.0
    } else {
        let one_minus = 1.0 - f;
        p.c * p.k * bell(activation(f, p)) / (one_minus * one_minus)
    }
}

fn j11_unchecked(f: f64, p: &ParameterSet) -> f64 {
    if f >= 1.0 {
        return p.c * (1.0 - 2.0 * f) - p.nu;
    }
    // w'(f)(f - f^2) simplifies to c k bell(u) f / (1 - f)
    let u = activation(f, p);
    p.c * p.k * bell(u) * f / (1.0 - f) + p.c * logistic(u) * (1.0 - 2.0 * f) - p.nu
}

fn check_unit(what: &'static str, f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::Domain { what, value: f, limit: None })
    }
}

fn check_open_unit(what: &'static str, f: f64, limit: Option<f64>) -> Result<()> {
    check_unit(what, f)?;
    if f == 1.0 {
        return Err(Error::Domain { what, value: f, limit });
    }
    Ok(())
}

/// Fire-induced transition rate `w(f)` on `[0, 1]`; returns the limit `c` at `f = 1`.
pub fn fire_rate(f: f64, p: &ParameterSet) -> Result<f64> {
    check_unit("fire_rate", f)?;
    Ok(fire_rate_unchecked(f, p))
}

/// `w'(f)` on `[0, 1)`. At `f = 1` the formula is singular; the domain
/// error carries the limit value `0`.
pub fn fire_rate_deriv(f: f64, p: &ParameterSet) -> Result<f64> {
    check_open_unit("fire_rate_deriv", f, Some(0.0))?;
    Ok(fire_rate_deriv_unchecked(f, p))
}

/// Right-hand side at a physical state.
pub fn rhs(state: State, p: &ParameterSet) -> Result<Vector2<f64>> {
    if !state.is_physical() {
        return Err(Error::Domain {
            what: "rhs",
            value: if (0.0..=1.0).contains(&state.f) { state.x } else { state.f },
            limit: None,
        });
    }
    Ok(ForestGrass.rhs(state, p))
}

/// State Jacobian; requires `f < 1`.
pub fn jacobian(state: State, p: &ParameterSet) -> Result<Matrix2<f64>> {
    if !(state.f < 1.0) {
        return Err(Error::Domain { what: "jacobian", value: state.f, limit: None });
    }
    Ok(ForestGrass.jacobian(state, p))
}

/// The `(1,1)` Jacobian entry, whose roots on `x = 0` and `x = 1` are turning points.
pub fn j11(f: f64, p: &ParameterSet) -> Result<f64> {
    check_open_unit("j11", f, Some(p.c * (1.0 - 2.0 * f) - p.nu))?;
    Ok(j11_unchecked(f, p))
}

/// Value of `h` for which `(f, 0)` (family `X0`) or `(f, 1)` (family `X1`)
/// is a fixed point.
pub fn branch_h_of_f(f: f64, family: BranchFamily, p: &ParameterSet) -> Result<f64> {
    check_unit("branch_h_of_f", f)?;
    let h0 = fire_rate_unchecked(f, p) * (1.0 - f) * f - p.nu * f;
    match family {
        BranchFamily::X0 => Ok(h0),
        BranchFamily::X1 => Ok(-h0),
        BranchFamily::FHalf => Err(Error::InvalidInput(
            "the f = 1/2 family is parameterised by x; use branch_x_of_h".into(),
        )),
    }
}

/// `x` coordinate of the `f = 1/2` fixed point.
pub fn branch_x_of_h(p: &ParameterSet) -> Result<f64> {
    if p.h == 0.0 {
        return Err(Error::SingularParameter { what: "branch_x_of_h at h = 0" });
    }
    let w_half = p.c * logistic(p.k - p.b);
    Ok(0.5 * (1.0 - (w_half - 2.0 * p.nu) / (4.0 * p.h)))
}

/// Transcritical value of `h` at `(1/2, 0)`.
pub fn h_star(p: &ParameterSet) -> f64 {
    p.c * logistic(p.k - p.b) / 4.0 - p.nu / 2.0
}

/// Transcritical value of `h` at `(1/2, 1)`; equals `-h_star`.
pub fn h_double_star(p: &ParameterSet) -> f64 {
    -h_star(p)
}

/// Location `b / (b + k)` of the bell maximum of `j11` and the value there.
///
/// The value is `c b / 4 + c (k - b) / (2 (k + b)) - nu`. Some references
/// write the middle term without the factor `c`; both agree at `c = 1`.
pub fn j11_peak(p: &ParameterSet) -> Result<(f64, f64)> {
    if !(p.b > 0.0) {
        return Err(Error::InvalidInput("j11_peak requires b > 0".into()));
    }
    let f_peak = p.b / (p.b + p.k);
    Ok((f_peak, peak_value(p)))
}

fn peak_value(p: &ParameterSet) -> f64 {
    p.c * p.b / 4.0 + p.c * (p.k - p.b) / (2.0 * (p.k + p.b)) - p.nu
}

/// Left side of the approximate cusp condition minus `nu`.
pub fn cusp_residual(p: &ParameterSet) -> f64 {
    peak_value(p)
}

/// `c k e^{b-k} / (1 + e^{b-k})^2 - nu`: trace of the Jacobian on the
/// `f = 1/2` family. Its roots in `k` are the Hopf lines of the `(h, k)` plane.
pub fn hopf_residual(p: &ParameterSet) -> f64 {
    p.c * p.k * bell(p.b - p.k) - p.nu
}

/// All positive `k` with `hopf_residual = 0`, in increasing order.
///
/// Brackets on `(1e-6, b + 50)` with 2000 uniform probes, then bisects each
/// sign change to `|dk| < 1e-10`.
pub fn hopf_k_roots(p: &ParameterSet) -> Vec<f64> {
    const PROBES: usize = 2000;
    let lo = 1e-6;
    let hi = p.b + 50.0;
    if !(hi > lo) {
        return Vec::new();
    }
    let residual = |k: f64| hopf_residual(&p.with(ParamName::K, k));
    let dk = (hi - lo) / PROBES as f64;
    let mut roots = Vec::new();
    let mut k_prev = lo;
    let mut r_prev = residual(lo);
    for i in 1..=PROBES {
        let k = lo + dk * i as f64;
        let r = residual(k);
        if r == 0.0 {
            roots.push(k);
        } else if r_prev != 0.0 && r_prev.signum() != r.signum() {
            let (mut a, mut b) = (k_prev, k);
            let mut ra = r_prev;
            while b - a > 1e-10 {
                let mid = 0.5 * (a + b);
                let rm = residual(mid);
                if rm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if rm.signum() == ra.signum() {
                    a = mid;
                    ra = rm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        k_prev = k;
        r_prev = r;
    }
    roots
}

/// Angular frequency `2 sqrt(s x h (1 - x))` of the eigenvalue pair at a
/// Hopf point on the `f = 1/2` family.
pub fn hopf_frequency(x: f64, p: &ParameterSet) -> Result<f64> {
    let product = p.s * x * p.h * (1.0 - x);
    if !(product > 0.0) {
        return Err(Error::Domain { what: "hopf_frequency", value: x, limit: None });
    }
    Ok(2.0 * product.sqrt())
}

/// Large-`k` asymptote of the `h` coordinate of the outer fold loci.
pub fn fold_asymptote_h(p: &ParameterSet) -> f64 {
    p.c * (1.0 - p.nu * p.nu) / 4.0 - (1.0 - p.nu) / 2.0 * p.nu
}

/// A Bogdanov-Takens point `(f, x, h, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtPoint {
    pub f: f64,
    pub x: f64,
    pub h: f64,
    pub k: f64,
}

/// Double-zero eigenvalue point on the given family at the largest Hopf root
/// in `k`: `(1/2, 0, h*, k)` for `X0` and `(1/2, 1, h**, k)` for `X1`.
pub fn bt_point(p: &ParameterSet, family: BranchFamily) -> Result<BtPoint> {
    let k = *hopf_k_roots(p).last().ok_or(Error::NoBt)?;
    bt_at(p, family, k)
}

/// Every double-zero point: each Hopf root in `k` on both `X0` and `X1`.
pub fn bt_points(p: &ParameterSet) -> Vec<(BranchFamily, BtPoint)> {
    let mut out = Vec::new();
    for k in hopf_k_roots(p) {
        for family in [BranchFamily::X0, BranchFamily::X1] {
            if let Ok(bt) = bt_at(p, family, k) {
                out.push((family, bt));
            }
        }
    }
    out
}

fn bt_at(p: &ParameterSet, family: BranchFamily, k: f64) -> Result<BtPoint> {
    let q = p.with(ParamName::K, k);
    match family {
        BranchFamily::X0 => Ok(BtPoint { f: 0.5, x: 0.0, h: h_star(&q), k }),
        BranchFamily::X1 => Ok(BtPoint { f: 0.5, x: 1.0, h: h_double_star(&q), k }),
        BranchFamily::FHalf => Err(Error::InvalidInput(
            "Bogdanov-Takens points lie on the x = 0 or x = 1 families".into(),
        )),
    }
}

/// Coefficients of the quadratic expansion of `df/dt` around `f = 1/2`:
/// `a2 f^2 + a1 f + 2 h x + a0`.
///
/// `a2 = c/(z+1) (4 k^2 z^2/(z+1)^2 + 2 (k - k^2) z/(z+1) - 1)` with `z = e^{b-k}`,
/// `a1 = c k z/(z+1)^2 - nu` and `a0 = h - nu/2 + c/(4 (z+1))`, so that
/// `a0 = h + h*` and the constant term vanishes at `h = -h*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtTaylor {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

pub fn bt_taylor_coeffs(p: &ParameterSet) -> BtTaylor {
    // sigma = 1/(z+1), tau = z/(z+1); both computed without forming z.
    let sigma = logistic(p.k - p.b);
    let tau = logistic(p.b - p.k);
    let k = p.k;
    let a2 = p.c * sigma * (4.0 * k * k * tau * tau + 2.0 * (k - k * k) * tau - 1.0);
    BtTaylor {
        a0: p.h - p.nu / 2.0 + p.c * sigma / 4.0,
        a1: hopf_residual(p),
        a2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ParameterSet {
        ParameterSet { h: 0.5, ..ParameterSet::default() }
    }

    #[test]
    fn fire_rate_midpoint_and_limit() {
        let p = reference();
        let f_mid = p.b / (p.b + p.k);
        assert!((fire_rate(f_mid, &p).unwrap() - p.c / 2.0).abs() < 1e-15);
        assert_eq!(fire_rate(1.0, &p).unwrap(), p.c);
        let expected = 1.0 / (1.0 + 4.5f64.exp());
        assert!((fire_rate(0.5, &p).unwrap() - expected).abs() < 1e-16);
        assert!((fire_rate(0.5, &p).unwrap() - 0.01099).abs() < 1e-5);
    }

    #[test]
    fn fire_rate_rejects_outside_unit_interval() {
        let p = reference();
        assert!(matches!(fire_rate(-0.1, &p), Err(Error::Domain { .. })));
        assert!(matches!(fire_rate(1.2, &p), Err(Error::Domain { .. })));
    }

    #[test]
    fn fire_rate_survives_extreme_activation() {
        let p = ParameterSet { b: 800.0, k: 900.0, ..reference() };
        let w = fire_rate(1e-6, &p).unwrap();
        assert!(w.is_finite() && w >= 0.0);
        let w = fire_rate(0.999999, &p).unwrap();
        assert!((w - p.c).abs() < 1e-12);
    }

    #[test]
    fn fire_rate_deriv_values() {
        let p = reference();
        let at_zero = fire_rate_deriv(0.0, &p).unwrap();
        let direct = 6.5 * 11f64.exp() / (1.0 + 11f64.exp()).powi(2);
        assert!((at_zero - direct).abs() < 1e-18);
        assert!((at_zero - 1.086e-4).abs() < 1e-6);
        match fire_rate_deriv(1.0, &p) {
            Err(Error::Domain { limit, .. }) => assert_eq!(limit, Some(0.0)),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn fire_rate_deriv_peak_matches_finite_difference() {
        let p = reference();
        let f = p.b / (p.b + p.k);
        let analytic = fire_rate_deriv(f, &p).unwrap();
        let peak_form = p.c * p.k * 0.25 / ((1.0 - f) * (1.0 - f));
        assert!((analytic - peak_form).abs() < 1e-12 * peak_form);
        let eps = 1e-6;
        let fd = (fire_rate(f + eps, &p).unwrap() - fire_rate(f - eps, &p).unwrap()) / (2.0 * eps);
        assert!((analytic - fd).abs() < 1e-6 * analytic);
    }

    #[test]
    fn rhs_special_points() {
        let p = reference();
        let r = rhs(State::new(0.5, 0.5), &p).unwrap();
        let w_half = fire_rate(0.5, &p).unwrap();
        assert!((r[0] - (w_half / 4.0 - p.nu / 2.0)).abs() < 1e-15);
        assert_eq!(r[1], 0.0);
        let r = rhs(State::new(0.0, 0.0), &p).unwrap();
        assert_eq!(r[0], -p.h);
        assert_eq!(r[1], 0.0);
        assert!(rhs(State::new(0.5, 1.5), &p).is_err());
    }

    #[test]
    fn jacobian_is_triangular_on_invariant_lines() {
        let p = reference();
        for f in [0.1, 0.4, 0.7] {
            assert_eq!(jacobian(State::new(f, 0.0), &p).unwrap()[(1, 0)], 0.0);
            assert_eq!(jacobian(State::new(f, 1.0), &p).unwrap()[(1, 0)], 0.0);
        }
        assert!(jacobian(State::new(1.0, 0.3), &p).is_err());
    }

    #[test]
    fn jacobian_determinant_antisymmetry() {
        let p = reference();
        for f in [0.05, 0.3, 0.5, 0.62, 0.9] {
            let d0 = jacobian(State::new(f, 0.0), &p).unwrap().determinant();
            let d1 = jacobian(State::new(f, 1.0), &p).unwrap().determinant();
            assert!((d0 + d1).abs() <= 1e-12 * d0.abs().max(1e-300));
        }
    }

    #[test]
    fn j11_limits() {
        let p = ParameterSet { nu: 0.2, ..reference() };
        let near_zero = j11(1e-9, &p).unwrap();
        assert!((near_zero - (p.c / (1.0 + p.b.exp()) - p.nu)).abs() < 1e-6);
        assert!((near_zero + 0.2).abs() < 1e-4);
        let near_one = j11(0.99, &p).unwrap();
        assert!((near_one - ((1.0 - 1.98) - p.nu)).abs() < 1e-9);
        assert!(matches!(j11(1.0, &p), Err(Error::Domain { .. })));
    }

    #[test]
    fn j11_peak_close_to_true_maximum() {
        let p = reference();
        let (f_peak, value) = j11_peak(&p).unwrap();
        assert!((f_peak - 11.0 / 17.5).abs() < 1e-15);
        assert!((value - j11(f_peak, &p).unwrap()).abs() < 1e-12);
        assert!((value - (2.75 - 4.5 / 35.0 - 0.2)).abs() < 1e-12);
        // brute-force maximum on a 1e5 grid
        let n = 100_000;
        let max = (1..n)
            .map(|i| j11(i as f64 / n as f64, &p).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((max - value).abs() <= 0.05 * max);
        assert!(j11_peak(&ParameterSet { b: -1.0, ..p }).is_err());
    }

    #[test]
    fn peak_sign_matches_root_count() {
        for nu in [0.2, 0.9, 1.5, 2.2, 2.8, 3.5] {
            let p = ParameterSet { nu, ..reference() };
            let n = 20_000;
            let mut changes = 0;
            let mut prev = j11(0.5 / n as f64, &p).unwrap();
            for i in 1..n {
                let v = j11((i as f64 + 0.5) / n as f64, &p).unwrap();
                if v.signum() != prev.signum() {
                    changes += 1;
                }
                prev = v;
            }
            let (_, peak) = j11_peak(&p).unwrap();
            if peak > 0.05 {
                assert_eq!(changes, 2, "nu = {nu}");
            } else if peak < -0.05 {
                assert_eq!(changes, 0, "nu = {nu}");
            }
            assert_eq!(cusp_residual(&p).signum(), peak.signum());
        }
    }

    #[test]
    fn branch_formulas() {
        let p = reference();
        assert_eq!(branch_h_of_f(0.0, BranchFamily::X0, &p).unwrap(), 0.0);
        assert_eq!(branch_h_of_f(0.0, BranchFamily::X1, &p).unwrap(), 0.0);
        let h0 = branch_h_of_f(0.3, BranchFamily::X0, &p).unwrap();
        let h1 = branch_h_of_f(0.3, BranchFamily::X1, &p).unwrap();
        assert_eq!(h1, -h0);
        let sn1 = branch_h_of_f(0.53, BranchFamily::X1, &p).unwrap();
        assert!((sn1 - 0.1).abs() < 5e-3);
        assert!(branch_h_of_f(0.3, BranchFamily::FHalf, &p).is_err());
    }

    #[test]
    fn f_half_branch_endpoints() {
        let p = reference();
        let hs = h_star(&p);
        assert!(branch_x_of_h(&p.with(ParamName::H, hs)).unwrap().abs() < 1e-14);
        assert!((branch_x_of_h(&p.with(ParamName::H, -hs)).unwrap() - 1.0).abs() < 1e-14);
        assert!((branch_x_of_h(&p.with(ParamName::H, 1e12)).unwrap() - 0.5).abs() < 1e-12);
        assert!((branch_x_of_h(&p.with(ParamName::H, -1e12)).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            branch_x_of_h(&p.with(ParamName::H, 0.0)),
            Err(Error::SingularParameter { .. })
        ));
    }

    #[test]
    fn transcritical_values() {
        let p = ParameterSet { nu: 0.2, ..reference() };
        assert!((h_star(&p) + 0.096).abs() < 2e-3);
        let p9 = ParameterSet { nu: 0.9, ..reference() };
        assert!((h_double_star(&p9) - 0.447).abs() < 1e-3);
        assert_eq!(h_star(&p9) + h_double_star(&p9), 0.0);
    }

    #[test]
    fn cusp_residual_values() {
        let p = reference();
        assert!((cusp_residual(&p) - 2.4214).abs() < 1e-4);
        let nu = p.c * p.b / 4.0 + p.c * (p.k - p.b) / (2.0 * (p.k + p.b));
        assert!(cusp_residual(&p.with(ParamName::Nu, nu)).abs() < 1e-15);
    }

    #[test]
    fn hopf_residual_roots() {
        let p = reference();
        assert!(hopf_residual(&p.with(ParamName::K, 7.439)).abs() < 1e-3);
        assert!(hopf_residual(&p.with(ParamName::K, 15.31)).abs() < 1e-3);
        let roots = hopf_k_roots(&p);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 7.439).abs() < 5e-3);
        assert!((roots[1] - 15.31).abs() < 5e-3);
        for k in roots {
            assert!(hopf_residual(&p.with(ParamName::K, k)).abs() < 1e-10);
        }
    }

    #[test]
    fn hopf_roots_vanish_for_large_nu() {
        // nu / (c k) >= 1/4 for all k in the probe window
        let p = ParameterSet { nu: 20.0, ..reference() };
        assert!(hopf_k_roots(&p).is_empty());
        for k in [1.0, 5.0, 11.0, 30.0, 60.0] {
            assert!(hopf_residual(&p.with(ParamName::K, k)) < 0.0);
        }
    }

    #[test]
    fn hopf_frequency_values() {
        let p = ParameterSet { s: 10.0, h: 0.5, ..reference() };
        assert!((hopf_frequency(0.5, &p).unwrap() - 2.0 * 1.25f64.sqrt()).abs() < 1e-15);
        assert!(hopf_frequency(0.0, &p).is_err());
        assert!(hopf_frequency(1.0, &p).is_err());
    }

    #[test]
    fn fold_asymptote_values() {
        let p = reference();
        assert!((fold_asymptote_h(&p) - 0.16).abs() < 1e-15);
        assert_eq!(fold_asymptote_h(&p.with(ParamName::Nu, 1.0)), 0.0);
    }

    #[test]
    fn bt_point_reference() {
        let p = reference();
        let bt = bt_point(&p, BranchFamily::X0).unwrap();
        assert_eq!((bt.f, bt.x), (0.5, 0.0));
        assert!((bt.h - 0.146).abs() < 5e-3);
        assert!((bt.k - 15.311).abs() < 5e-3);
        let q = ParameterSet { h: bt.h, k: bt.k, ..p };
        let jac = jacobian(State::new(bt.f, bt.x), &q).unwrap();
        assert!(jac.trace().abs() < 1e-8);
        assert!(jac.determinant().abs() < 1e-8);
        assert!(jac[(0, 0)].abs() < 1e-8 && jac[(1, 0)].abs() < 1e-8 && jac[(1, 1)].abs() < 1e-8);
        assert!((jac[(0, 1)] - 2.0 * bt.h).abs() < 1e-12);

        let bt1 = bt_point(&p, BranchFamily::X1).unwrap();
        assert_eq!(bt1.x, 1.0);
        assert_eq!(bt1.h, -bt.h);
        assert!(bt_point(&p.with(ParamName::Nu, 20.0), BranchFamily::X0).is_err());
        assert_eq!(bt_points(&p).len(), 4);
    }

    #[test]
    fn bt_taylor_reference() {
        let p = reference();
        let bt = bt_point(&p, BranchFamily::X0).unwrap();
        let q = ParameterSet { h: bt.h, k: 15.311, ..p };
        let t = bt_taylor_coeffs(&q);
        assert!(t.a1.abs() < 1e-3);
        assert_eq!(t.a1, hopf_residual(&q));
        let r = ParameterSet { h: -h_star(&p), ..p };
        assert!(bt_taylor_coeffs(&r).a0.abs() < 1e-15);
        let at_bt = bt_taylor_coeffs(&ParameterSet { h: bt.h, k: bt.k, ..p });
        assert!(at_bt.a2.is_finite() && at_bt.a2.abs() > 1e-3);
    }

    #[test]
    fn bt_taylor_a2_matches_second_difference() {
        // a2 is half the second f-derivative of w(f)(1-f)f - nu f at f = 1/2
        for k in [4.0, 7.439, 11.0, 15.311, 25.0] {
            let p = reference().with(ParamName::K, k);
            let g = |f: f64| fire_rate(f, &p).unwrap() * (1.0 - f) * f - p.nu * f;
            let e = 1e-4;
            let second = (g(0.5 + e) - 2.0 * g(0.5) + g(0.5 - e)) / (e * e);
            let a2 = bt_taylor_coeffs(&p).a2;
            assert!((a2 - 0.5 * second).abs() < 1e-5 * (1.0 + a2.abs()), "k={k}: {a2} vs {}", 0.5 * second);
        }
    }

    #[test]
    fn param_names_round_trip() {
        for name in ParamName::ALL {
            assert_eq!(name.as_str().parse::<ParamName>().unwrap(), name);
        }
        assert!("q".parse::<ParamName>().is_err());
    }
}
