//! Adaptive Dormand-Prince 5(4) integration, piecewise perturbation
//! scenarios and attractor classification.

use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamName, ParameterSet, PlanarSystem, State};

/// Dormand-Prince tableau. The node vector is not needed because the
/// supported systems are autonomous.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Box outside which a trajectory is flagged as having left the physical region.
pub const VALIDITY_BOX: (f64, f64) = (-0.05, 1.05);

/// Error tolerances and step limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size; `None` means the span length.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_step: None, max_steps: 5_000_000 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(1e-12..=1e-3).contains(&self.rtol) {
            return Err(Error::InvalidInput(format!(
                "relative tolerance {} outside [1e-12, 1e-3]",
                self.rtol
            )));
        }
        if !(self.atol > 0.0) || !self.atol.is_finite() {
            return Err(Error::InvalidInput("absolute tolerance must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidInput("max_step must be positive".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One continuous piece of a trajectory integrated with fixed parameters.
///
/// Stores every accepted step with the vector field value, which is all the
/// cubic Hermite dense output needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub params: ParameterSet,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub derivatives: Vec<Vector2<f64>>,
}

impl Segment {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("segment is never empty")
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn final_state(&self) -> State {
        *self.states.last().expect("segment is never empty")
    }

    /// Cubic Hermite interpolation; `t` is clamped to the segment.
    pub fn sample(&self, t: f64) -> State {
        let t = t.clamp(self.t_start(), self.t_end());
        if self.times.len() == 1 {
            return self.states[0];
        }
        let i = self
            .times
            .partition_point(|&ti| ti <= t)
            .saturating_sub(1)
            .min(self.times.len() - 2);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let (y0, y1) = (self.states[i].to_vector(), self.states[i + 1].to_vector());
        let (d0, d1) = (self.derivatives[i], self.derivatives[i + 1]);
        State::from_vector(&(y0 * h00 + d0 * (h * h10) + y1 * h01 + d1 * (h * h11)))
    }
}

/// Instantaneous change applied between two segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Replace (or shift, when `relative`) the components that are `Some`.
    StateJump { time: f64, f: Option<f64>, x: Option<f64>, relative: bool },
    ParamJump { time: f64, name: ParamName, value: f64 },
}

impl Perturbation {
    pub fn time(&self) -> f64 {
        match *self {
            Perturbation::StateJump { time, .. } | Perturbation::ParamJump { time, .. } => time,
        }
    }

    fn apply(&self, state: State, params: ParameterSet) -> (State, ParameterSet) {
        match *self {
            Perturbation::StateJump { f, x, relative, .. } => {
                let pick = |current: f64, new: Option<f64>| match new {
                    None => current,
                    Some(v) if relative => current + v,
                    Some(v) => v,
                };
                (State::new(pick(state.f, f), pick(state.x, x)), params)
            }
            Perturbation::ParamJump { name, value, .. } => (state, params.with(name, value)),
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<f64>| v.map_or("keep".to_string(), |v| format!("{v}"));
        match *self {
            Perturbation::StateJump { f, x, relative, .. } => write!(
                out,
                "state_jump f={} x={}{}",
                show(f),
                show(x),
                if relative { " relative" } else { "" }
            ),
            Perturbation::ParamJump { name, value, .. } => write!(out, "param_jump {name}={value}"),
        }
    }
}

/// Record of an applied perturbation: the segment it opened and the state
/// before and after the jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventMarker {
    pub time: f64,
    pub segment: usize,
    pub perturbation: Perturbation,
    pub before: State,
    pub after: State,
}

/// Piecewise trajectory; times are strictly increasing inside each segment
/// and consecutive segments share their boundary time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub events: Vec<EventMarker>,
    /// Set when some accepted state left [`VALIDITY_BOX`] in either coordinate.
    pub left_valid_box: bool,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.segments[0].t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.last_segment().t_end()
    }

    pub fn last_segment(&self) -> &Segment {
        self.segments.last().expect("trajectory has at least one segment")
    }

    pub fn final_state(&self) -> State {
        self.last_segment().final_state()
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.times.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened `(segment, t, state)` rows in time order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, State)> + '_ {
        self.segments.iter().enumerate().flat_map(|(i, seg)| {
            seg.times.iter().zip(&seg.states).map(move |(&t, &s)| (i, t, s))
        })
    }

    /// Dense-output sample; at an event time the post-jump state is returned.
    pub fn sample(&self, t: f64) -> State {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.t_start() <= t)
            .unwrap_or(&self.segments[0]);
        seg.sample(t)
    }
}

fn within_box(s: State) -> bool {
    let (lo, hi) = VALIDITY_BOX;
    (lo..=hi).contains(&s.f) && (lo..=hi).contains(&s.x)
}

fn error_norm(y: &Vector2<f64>, y_new: &Vector2<f64>, err: &Vector2<f64>, tol: &Tolerances) -> f64 {
    let mut sum = 0.0;
    for i in 0..2 {
        let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
        sum += (err[i] / scale).powi(2);
    }
    (sum / 2.0).sqrt()
}

fn initial_step<S: PlanarSystem>(
    system: &S,
    y0: &Vector2<f64>,
    f0: &Vector2<f64>,
    p: &ParameterSet,
    span: f64,
    tol: &Tolerances,
) -> f64 {
    let scale = |v: &Vector2<f64>| {
        let mut sum = 0.0;
        for i in 0..2 {
            sum += (v[i] / (tol.atol + tol.rtol * y0[i].abs())).powi(2);
        }
        (sum / 2.0).sqrt()
    };
    let d0 = scale(y0);
    let d1 = scale(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = y0 + f0 * h0;
    let f1 = system.rhs(State::from_vector(&y1), p);
    let d2 = scale(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates one segment from `t0` to `t1` with fixed parameters.
pub fn integrate<S: PlanarSystem>(
    system: &S,
    state0: State,
    p: &ParameterSet,
    t_span: (f64, f64),
    tol: &Tolerances,
) -> Result<Trajectory> {
    let (segment, left) = integrate_segment(system, state0, p, t_span, tol)?;
    Ok(Trajectory { segments: vec![segment], events: Vec::new(), left_valid_box: left })
}

fn integrate_segment<S: PlanarSystem>(
    system: &S,
    state0: State,
    p: &ParameterSet,
    (t0, t1): (f64, f64),
    tol: &Tolerances,
) -> Result<(Segment, bool)> {
    tol.validate()?;
    if !t0.is_finite() || !t1.is_finite() || !(t1 > t0) {
        return Err(Error::InvalidInput(format!("invalid time span [{t0}, {t1}]")));
    }
    if !state0.is_finite() {
        return Err(Error::NonFiniteState { t: t0 });
    }
    let span = t1 - t0;
    let max_step = tol.max_step.unwrap_or(span).min(span);
    let min_step = 1e-14 * span;
    let f = |y: &Vector2<f64>| system.rhs(State::from_vector(y), p);

    let mut t = t0;
    let mut y = state0.to_vector();
    let mut k = [Vector2::zeros(); 7];
    k[0] = f(&y);
    let mut h = initial_step(system, &y, &k[0], p, span, tol).min(max_step);
    let mut err_prev: f64 = 1e-4;
    let mut left = !within_box(state0);

    let mut seg = Segment {
        params: *p,
        times: vec![t0],
        states: vec![state0],
        derivatives: vec![k[0]],
    };

    let mut steps = 0usize;
    while t < t1 {
        if steps >= tol.max_steps {
            return Err(Error::StepUnderflow { t, step: h });
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            let mut acc = y;
            for (j, &a) in A[s].iter().enumerate().take(s) {
                if a != 0.0 {
                    acc += k[j] * (h * a);
                }
            }
            k[s] = f(&acc);
        }
        // FSAL: the seventh stage point is the new solution
        let mut y_new = y;
        for (j, &a) in A[6].iter().enumerate() {
            if a != 0.0 {
                y_new += k[j] * (h * a);
            }
        }
        let k_new = f(&y_new);
        let mut err_vec = Vector2::zeros();
        for (j, &e) in E.iter().enumerate() {
            let kj = if j == 6 { k_new } else { k[j] };
            err_vec += kj * (h * e);
        }
        let err = error_norm(&y, &y_new, &err_vec, tol);

        if !y_new.iter().all(|v| v.is_finite()) || !err.is_finite() {
            h *= 0.25;
            if h < min_step {
                return Err(Error::NonFiniteState { t });
            }
            continue;
        }

        if err <= 1.0 {
            let fac = (err.max(1e-10).powf(0.2 - 0.75 * PI_BETA) / err_prev.powf(PI_BETA) / SAFETY)
                .clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            err_prev = err.max(1e-4);
            t = if last { t1 } else { t + h };
            y = y_new;
            k[0] = k_new;
            let state = State::from_vector(&y);
            left |= !within_box(state);
            seg.times.push(t);
            seg.states.push(state);
            seg.derivatives.push(k_new);
            h = (h / fac).min(max_step);
        } else {
            let fac = (err.powf(0.2 - 0.75 * PI_BETA) / SAFETY).min(1.0 / FAC_MIN);
            h /= fac;
            if h < min_step {
                return Err(Error::StepUnderflow { t, step: h });
            }
        }
    }
    Ok((seg, left))
}

/// Initial value problem with scheduled jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub initial: State,
    pub params: ParameterSet,
    pub t_start: f64,
    pub horizon: f64,
    pub perturbations: Vec<Perturbation>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !self.t_start.is_finite() || !self.horizon.is_finite() || !(self.horizon > self.t_start) {
            return Err(Error::InvalidInput("scenario horizon must exceed its start time".into()));
        }
        let mut previous = self.t_start;
        for pert in &self.perturbations {
            let t = pert.time();
            if !(t > previous) || !(t < self.horizon) {
                return Err(Error::InvalidInput(format!(
                    "perturbation time {t} must be increasing and inside ({}, {})",
                    self.t_start, self.horizon
                )));
            }
            previous = t;
        }
        Ok(())
    }
}

/// Integrates a scenario segment by segment, applying each perturbation
/// exactly at its time.
pub fn run_scenario<S: PlanarSystem>(system: &S, sc: &Scenario, tol: &Tolerances) -> Result<Trajectory> {
    sc.validate()?;
    let mut segments = Vec::new();
    let mut events = Vec::new();
    let mut left = false;
    let mut state = sc.initial;
    let mut params = sc.params;
    let mut t = sc.t_start;
    for pert in &sc.perturbations {
        let (seg, l) = integrate_segment(system, state, &params, (t, pert.time()), tol)?;
        left |= l;
        let before = seg.final_state();
        segments.push(seg);
        let (after, new_params) = pert.apply(before, params);
        events.push(EventMarker {
            time: pert.time(),
            segment: segments.len(),
            perturbation: *pert,
            before,
            after,
        });
        state = after;
        params = new_params;
        t = pert.time();
    }
    let (seg, l) = integrate_segment(system, state, &params, (t, sc.horizon), tol)?;
    segments.push(seg);
    Ok(Trajectory { segments, events, left_valid_box: left || l })
}

/// Long-run behaviour of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttractorKind {
    SteadyState,
    Periodic,
    Undecided,
}

impl AttractorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttractorKind::SteadyState => "steady_state",
            AttractorKind::Periodic => "periodic",
            AttractorKind::Undecided => "undecided",
        }
    }
}

impl fmt::Display for AttractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorVerdict {
    pub kind: AttractorKind,
    pub mean_state: State,
    /// `max - min` of `f` over the inspected tail.
    pub amplitude: f64,
    pub period: Option<f64>,
}

/// Amplitude below which the tail counts as a steady state.
pub const STEADY_AMPLITUDE: f64 = 1e-3;
/// Peaks rising less than this above the preceding trough are ignored.
pub const PEAK_PROMINENCE: f64 = 1e-4;
/// Minimum duration of the final segment accepted by [`classify_attractor`].
pub const MIN_CLASSIFY_DURATION: f64 = 100.0;

const PERIOD_CV_MAX: f64 = 0.1;
const AMPLITUDE_DRIFT_MAX: f64 = 0.05;
const TAIL_SAMPLES: usize = 4000;

/// Classifies the final segment of a trajectory from its last
/// `tail_fraction` (in `(0, 1]`).
///
/// An oscillating tail is called periodic only when at least three periods
/// are found, their spread is below 10% and the swing of the first and last
/// full cycle agree to 5%; decaying or growing oscillations are undecided.
pub fn classify_attractor(traj: &Trajectory, tail_fraction: f64) -> Result<AttractorVerdict> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidInput("tail fraction must lie in (0, 1]".into()));
    }
    let seg = traj.last_segment();
    let duration = seg.duration();
    if duration < MIN_CLASSIFY_DURATION {
        return Err(Error::TooShort { duration });
    }
    let t_tail = seg.t_end() - tail_fraction * duration;

    let mut samples: Vec<(f64, State)> = (0..=TAIL_SAMPLES)
        .map(|i| {
            let t = t_tail + (seg.t_end() - t_tail) * i as f64 / TAIL_SAMPLES as f64;
            (t, seg.sample(t))
        })
        .collect();
    samples.extend(
        seg.times
            .iter()
            .zip(&seg.states)
            .filter(|(&t, _)| t >= t_tail)
            .map(|(&t, &s)| (t, s)),
    );
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = samples.len() as f64;
    let mean_state = State::new(
        samples.iter().map(|(_, s)| s.f).sum::<f64>() / n,
        samples.iter().map(|(_, s)| s.x).sum::<f64>() / n,
    );
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(s.f), hi.max(s.f)));
    let amplitude = hi - lo;
    if amplitude < STEADY_AMPLITUDE {
        return Ok(AttractorVerdict { kind: AttractorKind::SteadyState, mean_state, amplitude, period: None });
    }

    let undecided = AttractorVerdict { kind: AttractorKind::Undecided, mean_state, amplitude, period: None };
    let extrema = tail_extrema(seg, t_tail);
    let peaks = prominent_peaks(&extrema);
    if peaks.len() < 4 {
        return Ok(undecided);
    }
    let spacings: Vec<f64> = peaks.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let var = spacings.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / spacings.len() as f64;
    if var.sqrt() / mean >= PERIOD_CV_MAX {
        return Ok(undecided);
    }
    let first = peaks[0].2;
    let last = peaks[peaks.len() - 1].2;
    if (first - last).abs() > AMPLITUDE_DRIFT_MAX * first.max(last) {
        return Ok(undecided);
    }
    Ok(AttractorVerdict { kind: AttractorKind::Periodic, mean_state, amplitude, period: Some(mean) })
}

/// Local extrema of `f` after `t_tail`, located where the stored derivative
/// of `f` changes sign and refined by linear interpolation of that derivative.
/// Each entry is `(time, value, is_max)`.
fn tail_extrema(seg: &Segment, t_tail: f64) -> Vec<(f64, f64, bool)> {
    let mut out = Vec::new();
    for i in 1..seg.times.len() {
        if seg.times[i - 1] < t_tail {
            continue;
        }
        let (d0, d1) = (seg.derivatives[i - 1][0], seg.derivatives[i][0]);
        if d0 > 0.0 && d1 <= 0.0 || d0 < 0.0 && d1 >= 0.0 {
            let (t0, t1) = (seg.times[i - 1], seg.times[i]);
            let t = t0 + (t1 - t0) * d0 / (d0 - d1);
            out.push((t, seg.sample(t).f, d0 > 0.0));
        }
    }
    out
}

/// Maxima whose rise above the preceding minimum exceeds
/// [`PEAK_PROMINENCE`], as `(time, value, rise)`.
fn prominent_peaks(extrema: &[(f64, f64, bool)]) -> Vec<(f64, f64, f64)> {
    let mut peaks = Vec::new();
    let mut trough: Option<f64> = None;
    for &(t, v, is_max) in extrema {
        if is_max {
            if let Some(lo) = trough {
                let rise = v - lo;
                if rise >= PEAK_PROMINENCE {
                    peaks.push((t, v, rise));
                    trough = None;
                }
            }
        } else {
            trough = Some(trough.map_or(v, |lo: f64| lo.min(v)));
        }
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ForestGrass;
    use nalgebra::Matrix2;

    struct Still;

    impl PlanarSystem for Still {
        fn rhs(&self, _: State, _: &ParameterSet) -> Vector2<f64> {
            Vector2::zeros()
        }
        fn jacobian(&self, _: State, _: &ParameterSet) -> Matrix2<f64> {
            Matrix2::zeros()
        }
        fn param_derivative(&self, _: State, _: &ParameterSet, _: ParamName) -> Vector2<f64> {
            Vector2::zeros()
        }
    }

    /// Harmonic oscillator `f' = -(x - 1/2)`, `x' = f - 1/2`.
    struct Rotation;

    impl PlanarSystem for Rotation {
        fn rhs(&self, s: State, _: &ParameterSet) -> Vector2<f64> {
            Vector2::new(-(s.x - 0.5), s.f - 0.5)
        }
        fn jacobian(&self, _: State, _: &ParameterSet) -> Matrix2<f64> {
            Matrix2::new(0.0, -1.0, 1.0, 0.0)
        }
        fn param_derivative(&self, _: State, _: &ParameterSet, _: ParamName) -> Vector2<f64> {
            Vector2::zeros()
        }
    }

    fn fig8(k: f64) -> ParameterSet {
        ParameterSet { k, h: 0.5, nu: 0.2, ..ParameterSet::default() }
    }

    #[test]
    fn constant_trajectory() {
        let s0 = State::new(0.3, 0.7);
        let traj = integrate(&Still, s0, &ParameterSet::default(), (0.0, 200.0), &Tolerances::default()).unwrap();
        assert!(traj.rows().all(|(_, _, s)| s == s0));
        let v = classify_attractor(&traj, 0.2).unwrap();
        assert_eq!(v.kind, AttractorKind::SteadyState);
        assert!(v.mean_state.distance(&s0) < 1e-12);
    }

    #[test]
    fn harmonic_accuracy_and_dense_output() {
        let tol = Tolerances { rtol: 1e-10, atol: 1e-12, ..Tolerances::default() };
        let traj = integrate(&Rotation, State::new(1.0, 0.5), &ParameterSet::default(), (0.0, 10.0), &tol).unwrap();
        let end = traj.final_state();
        assert!((end.f - (0.5 + 0.5 * 10f64.cos())).abs() < 1e-8);
        assert!((end.x - (0.5 + 0.5 * 10f64.sin())).abs() < 1e-8);
        for i in 0..100 {
            let t = 0.1 * i as f64 + 0.037;
            let s = traj.sample(t);
            assert!((s.f - (0.5 + 0.5 * t.cos())).abs() < 1e-5);
        }
        let times = &traj.segments[0].times;
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_tolerances() {
        let tol = Tolerances { rtol: 1e-2, ..Tolerances::default() };
        assert!(integrate(&Rotation, State::new(1.0, 0.5), &ParameterSet::default(), (0.0, 1.0), &tol).is_err());
    }

    #[test]
    fn decays_at_small_k_and_oscillates_past_onset() {
        let tol = Tolerances::default();
        let s0 = State::new(0.65, 0.2);
        let traj = integrate(&ForestGrass, s0, &fig8(4.0), (0.0, 300.0), &tol).unwrap();
        let v = classify_attractor(&traj, 0.2).unwrap();
        assert_eq!(v.kind, AttractorKind::SteadyState);
        assert!(v.amplitude < 1e-3);

        let traj = integrate(&ForestGrass, s0, &fig8(4.7), (0.0, 300.0), &tol).unwrap();
        let v = classify_attractor(&traj, 0.2).unwrap();
        assert_eq!(v.kind, AttractorKind::Periodic, "{v:?}");
        assert!(v.amplitude > 1e-2);
        assert!(!traj.left_valid_box);
    }

    #[test]
    fn long_transient_is_not_called_periodic() {
        let traj = integrate(&ForestGrass, State::new(0.65, 0.2), &fig8(4.57), (0.0, 100.0), &Tolerances::default()).unwrap();
        let v = classify_attractor(&traj, 0.2).unwrap();
        assert_eq!(v.kind, AttractorKind::Undecided, "{v:?}");
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let traj = integrate(&ForestGrass, State::new(0.65, 0.2), &fig8(4.57), (0.0, 10.0), &Tolerances::default()).unwrap();
        assert!(matches!(classify_attractor(&traj, 0.2), Err(Error::TooShort { .. })));
    }

    #[test]
    fn tolerance_halving_changes_terminal_state_little() {
        let s0 = State::new(0.65, 0.2);
        let a = integrate(&ForestGrass, s0, &fig8(4.0), (0.0, 300.0), &Tolerances::default()).unwrap();
        let tol = Tolerances { rtol: 0.5e-8, ..Tolerances::default() };
        let b = integrate(&ForestGrass, s0, &fig8(4.0), (0.0, 300.0), &tol).unwrap();
        assert!(a.final_state().distance(&b.final_state()) < 1e-6);
    }

    #[test]
    fn state_jump_is_exact() {
        let sc = Scenario {
            initial: State::new(0.65, 0.2),
            params: fig8(6.5),
            t_start: 0.0,
            horizon: 150.0,
            perturbations: vec![Perturbation::StateJump { time: 100.0, f: Some(0.4), x: None, relative: false }],
        };
        let traj = run_scenario(&ForestGrass, &sc, &Tolerances::default()).unwrap();
        assert_eq!(traj.segments.len(), 2);
        let ev = traj.events[0];
        assert_eq!(traj.segments[1].states[0], ev.after);
        assert_eq!(ev.after.f, 0.4);
        assert_eq!(ev.after.x, ev.before.x);
        assert_eq!(traj.segments[0].t_end(), 100.0);
        assert_eq!(traj.segments[1].t_start(), 100.0);
    }

    #[test]
    fn relative_jump_and_validation() {
        let pert = Perturbation::StateJump { time: 1.0, f: Some(0.1), x: Some(-0.05), relative: true };
        let (s, _) = pert.apply(State::new(0.2, 0.5), ParameterSet::default());
        assert!((s.f - 0.3).abs() < 1e-15 && (s.x - 0.45).abs() < 1e-15);
        let sc = Scenario {
            initial: State::new(0.5, 0.5),
            params: ParameterSet::default(),
            t_start: 0.0,
            horizon: 10.0,
            perturbations: vec![
                Perturbation::ParamJump { time: 5.0, name: ParamName::K, value: 3.0 },
                Perturbation::ParamJump { time: 4.0, name: ParamName::K, value: 3.0 },
            ],
        };
        assert!(sc.validate().is_err());
    }
}
