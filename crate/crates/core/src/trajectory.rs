//! Controlled trajectories of the discontinuous system.
//!
//! Off the interface the active side's dynamics are integrated with fixed-step
//! RK4. A step that reaches `{x_N = 0}` is shortened by bisection until
//! `|x_N| <= snap_tol` and the state is snapped onto the interface. On the
//! interface a mixed control `(α₁, α₂, μ)` with zero normal drift keeps the
//! state there; a `slide` directive recomputes `μ` from the current normal drifts
//! at every step, and when no weight cancels them the trajectory leaves on the
//! side both drifts point to.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::interface::{interface_control_set, interface_value, is_singular, mixing_coefficient, Mixing};
use crate::problem::{Side, TwoDomainProblem};

pub const DEFAULT_SNAP_TOL: f64 = 1e-10;

/// Maximum number of bisection halvings when locating an interface crossing.
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// Constant mixed control. Off the interface only `α₁` (in Ω₁) or `α₂` (in Ω₂) matters.
    Explicit { alpha1: Vec<f64>, alpha2: Vec<f64>, mu: f64 },
    /// Side controls off the interface; on it, `μ` is recomputed from the normal drifts.
    Slide { alpha1: Vec<f64>, alpha2: Vec<f64> },
}

impl Segment {
    fn controls(&self) -> (&[f64], &[f64]) {
        match self {
            Segment::Explicit { alpha1, alpha2, .. } | Segment::Slide { alpha1, alpha2 } => (alpha1, alpha2),
        }
    }

    fn control(&self, side: Side) -> &[f64] {
        let (a1, a2) = self.controls();
        match side {
            Side::One => a1,
            Side::Two => a2,
        }
    }
}

/// Piecewise-constant control: segment `k` is active on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

impl ControlSchedule {
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != segments.len() {
            return invalid("schedule needs one breakpoint per segment");
        }
        ensure_finite("breakpoints", &breakpoints)?;
        if breakpoints[0] != 0.0 {
            return invalid("schedule must start at t = 0");
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("breakpoints must be strictly increasing");
        }
        for s in &segments {
            let (a1, a2) = s.controls();
            ensure_finite("segment control", a1)?;
            ensure_finite("segment control", a2)?;
            if let Segment::Explicit { mu, .. } = s {
                if !(0.0..=1.0).contains(mu) {
                    return invalid(format!("mixing weight {mu} outside [0, 1]"));
                }
            }
        }
        Ok(Self { breakpoints, segments })
    }

    /// A single segment held forever.
    pub fn constant(segment: Segment) -> Self {
        Self { breakpoints: vec![0.0], segments: vec![segment] }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn active(&self, t: f64) -> (usize, f64) {
        let k = self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1);
        let next = self.breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY);
        (k, next)
    }

    fn validate_for(&self, problem: &TwoDomainProblem) -> Result<()> {
        for s in &self.segments {
            let (a1, a2) = s.controls();
            if !problem.side(Side::One).controls.contains_bounded(a1)
                || !problem.side(Side::Two).controls.contains_bounded(a2)
            {
                return invalid(format!("segment controls {a1:?}/{a2:?} outside the control bounds"));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let repr: ScheduleRepr =
            serde_json::from_str(s).map_err(|e| Error::Parse { what: "schedule JSON", message: e.to_string() })?;
        repr.try_into()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ScheduleRepr::from(self)).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ControlRepr {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ControlRepr {
    fn into_vec(self) -> Vec<f64> {
        match self {
            ControlRepr::Scalar(a) => vec![a],
            ControlRepr::Vector(v) => v,
        }
    }

    fn from_slice(a: &[f64]) -> Self {
        if a.len() == 1 {
            ControlRepr::Scalar(a[0])
        } else {
            ControlRepr::Vector(a.to_vec())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlideRepr {
    alpha1: ControlRepr,
    alpha2: ControlRepr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SegmentRepr {
    Slide { slide: SlideRepr },
    Explicit { alpha1: ControlRepr, alpha2: ControlRepr, mu: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleRepr {
    breakpoints: Vec<f64>,
    segments: Vec<SegmentRepr>,
}

impl TryFrom<ScheduleRepr> for ControlSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        let segments = r
            .segments
            .into_iter()
            .map(|s| match s {
                SegmentRepr::Slide { slide } => {
                    Segment::Slide { alpha1: slide.alpha1.into_vec(), alpha2: slide.alpha2.into_vec() }
                }
                SegmentRepr::Explicit { alpha1, alpha2, mu } => {
                    Segment::Explicit { alpha1: alpha1.into_vec(), alpha2: alpha2.into_vec(), mu }
                }
            })
            .collect();
        ControlSchedule::new(r.breakpoints, segments)
    }
}

impl From<&ControlSchedule> for ScheduleRepr {
    fn from(s: &ControlSchedule) -> Self {
        let segments = s
            .segments
            .iter()
            .map(|seg| match seg {
                Segment::Slide { alpha1, alpha2 } => SegmentRepr::Slide {
                    slide: SlideRepr { alpha1: ControlRepr::from_slice(alpha1), alpha2: ControlRepr::from_slice(alpha2) },
                },
                Segment::Explicit { alpha1, alpha2, mu } => SegmentRepr::Explicit {
                    alpha1: ControlRepr::from_slice(alpha1),
                    alpha2: ControlRepr::from_slice(alpha2),
                    mu: *mu,
                },
            })
            .collect();
        ScheduleRepr { breakpoints: s.breakpoints.clone(), segments }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    #[serde(rename = "O1")]
    Omega1,
    #[serde(rename = "O2")]
    Omega2,
    #[serde(rename = "H")]
    Interface,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Omega1 => "O1",
            Region::Omega2 => "O2",
            Region::Interface => "H",
        }
    }

    fn of_side(side: Side) -> Region {
        match side {
            Side::One => Region::Omega1,
            Side::Two => Region::Omega2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularity {
    Regular,
    Singular,
}

/// An explicit interface segment whose normal drift did not vanish.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub time: f64,
    pub normal_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub snap_tol: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { snap_tol: DEFAULT_SNAP_TOL }
    }
}

/// Time-discretized controlled path.
///
/// Node `k >= 1` carries the regime, mixing weight and discounted cost of the
/// step ending there; node 0 carries the initial region and zero cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub lambda: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub labels: Vec<Region>,
    pub mus: Vec<Option<f64>>,
    pub step_costs: Vec<f64>,
    pub total_cost: f64,
    pub regular: bool,
    /// Largest `|b_H·e_N|` over interface steps.
    pub max_normal_residual_on_h: f64,
    pub violations: Vec<Violation>,
    /// `sup_{t >= T} ∫ ℓ e^{-λt}` bound for the truncated tail.
    pub tail_bound: f64,
}

impl Trajectory {
    pub fn end_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one node")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    /// CSV with columns `t, x..., label, mu, step_cost`.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(1, Vec::len);
        let mut out = String::from("t");
        for i in 1..=dim {
            if dim == 1 {
                out.push_str(",x");
            } else {
                out.push_str(&format!(",x{i}"));
            }
        }
        out.push_str(",label,mu,step_cost\n");
        for k in 0..self.times.len() {
            out.push_str(&format!("{}", self.times[k]));
            for v in &self.states[k] {
                out.push_str(&format!(",{v}"));
            }
            let mu = self.mus[k].map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!(",{},{},{}\n", self.labels[k].label(), mu, self.step_costs[k]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    /// Trapezoid approximation of `∫₀^T ℓ e^{-λt} dt`.
    pub total: f64,
    /// Bound on the neglected `∫_T^∞ |ℓ| e^{-λt} dt`.
    pub tail_bound: f64,
}

pub fn cost(trajectory: &Trajectory) -> CostReport {
    CostReport { total: trajectory.step_costs.iter().sum(), tail_bound: trajectory.tail_bound }
}

pub fn classify(trajectory: &Trajectory) -> Regularity {
    if trajectory.regular {
        Regularity::Regular
    } else {
        Regularity::Singular
    }
}

/// What happens during one step started on the interface.
enum InterfaceMove {
    Stay { mu: f64, singular: bool },
    Exit(Side),
    Hold,
}

fn slide_move(problem: &TwoDomainProblem, x: &[f64], a1: &[f64], a2: &[f64]) -> InterfaceMove {
    let s1 = problem.side(Side::One);
    let s2 = problem.side(Side::Two);
    let d1 = s1.normal_drift(x, a1);
    let d2 = s2.normal_drift(x, a2);
    match mixing_coefficient(d1, d2) {
        Mixing::Unique(mu) => InterfaceMove::Stay { mu, singular: is_singular(d1, d2) },
        Mixing::Any => {
            let mu = if s1.cost(x, a1) <= s2.cost(x, a2) { 1.0 } else { 0.0 };
            InterfaceMove::Stay { mu, singular: false }
        }
        Mixing::Infeasible if d1 > 0.0 => InterfaceMove::Exit(Side::One),
        Mixing::Infeasible if d2 < 0.0 => InterfaceMove::Exit(Side::Two),
        Mixing::Infeasible => InterfaceMove::Hold,
    }
}

fn rk4<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], dt: f64) -> Vec<f64> {
    let add = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, dt / 2.0));
    let k3 = f(&add(x, &k2, dt / 2.0));
    let k4 = f(&add(x, &k3, dt));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates `x0` under `schedule` up to `horizon` with nominal step `dt`.
///
/// Steps are shortened to land exactly on breakpoints, on the horizon, and on
/// interface hits. The cost of each step is the trapezoid rule applied to
/// `ℓ e^{-λt}` with the step's own control at both ends.
pub fn integrate(
    problem: &TwoDomainProblem,
    x0: &[f64],
    schedule: &ControlSchedule,
    horizon: f64,
    dt: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    let n = problem.dim();
    if x0.len() != n {
        return invalid(format!("initial state must have {n} entries"));
    }
    ensure_finite("initial state", x0)?;
    ensure_finite("horizon/dt", &[horizon, dt])?;
    if dt <= 0.0 || horizon < dt {
        return invalid(format!("need dt > 0 and horizon >= dt (dt = {dt}, horizon = {horizon})"));
    }
    if opts.snap_tol <= 0.0 {
        return invalid("snap tolerance must be positive");
    }
    schedule.validate_for(problem)?;

    let lambda = problem.lambda();
    let onh_tol = opts.snap_tol / dt;
    let merge = 1e-9 * dt;
    let s1 = problem.side(Side::One);
    let s2 = problem.side(Side::Two);

    let mut x = x0.to_vec();
    let mut region = if x[n - 1].abs() <= opts.snap_tol {
        x[n - 1] = 0.0;
        Region::Interface
    } else if x[n - 1] > 0.0 {
        Region::Omega1
    } else {
        Region::Omega2
    };

    let mut tr = Trajectory {
        lambda,
        times: vec![0.0],
        states: vec![x.clone()],
        labels: vec![region],
        mus: vec![None],
        step_costs: vec![0.0],
        total_cost: 0.0,
        regular: true,
        max_normal_residual_on_h: 0.0,
        violations: Vec::new(),
        tail_bound: 0.0,
    };

    let mut t = 0.0f64;
    while horizon - t > merge {
        let (k, next_bp) = schedule.active(t);
        let seg = &schedule.segments[k];
        let mut t_next = (t + dt).min(horizon).min(next_bp);
        if next_bp - t_next <= merge {
            t_next = next_bp;
        }
        if horizon - t_next <= merge {
            t_next = horizon;
        }

        if region == Region::Interface {
            let a1 = seg.control(Side::One);
            let a2 = seg.control(Side::Two);
            let d1 = s1.normal_drift(&x, a1);
            let d2 = s2.normal_drift(&x, a2);
            let mv = match seg {
                Segment::Slide { .. } => slide_move(problem, &x, a1, a2),
                Segment::Explicit { mu, .. } => {
                    let v = mu * d1 + (1.0 - mu) * d2;
                    if v.abs() <= onh_tol {
                        InterfaceMove::Stay { mu: *mu, singular: is_singular(d1, d2) }
                    } else if *mu == 1.0 && d1 > 0.0 {
                        InterfaceMove::Exit(Side::One)
                    } else if *mu == 0.0 && d2 < 0.0 {
                        InterfaceMove::Exit(Side::Two)
                    } else {
                        tr.violations.push(Violation { time: t, normal_drift: v });
                        slide_move(problem, &x, a1, a2)
                    }
                }
            };
            match mv {
                InterfaceMove::Stay { mu, singular } => {
                    let h = t_next - t;
                    let mixed = |y: &[f64]| -> Vec<f64> {
                        let b1 = s1.dynamics(y, a1);
                        let b2 = s2.dynamics(y, a2);
                        let mut b: Vec<f64> = b1.iter().zip(&b2).map(|(p, q)| mu * p + (1.0 - mu) * q).collect();
                        b[n - 1] = 0.0;
                        b
                    };
                    let residual = (mu * d1 + (1.0 - mu) * d2).abs();
                    let mut x_new = rk4(mixed, &x, h);
                    x_new[n - 1] = 0.0;
                    let ell = |y: &[f64]| mu * s1.cost(y, a1) + (1.0 - mu) * s2.cost(y, a2);
                    let c = 0.5 * h * ((-lambda * t).exp() * ell(&x) + (-lambda * t_next).exp() * ell(&x_new));
                    tr.max_normal_residual_on_h = tr.max_normal_residual_on_h.max(residual);
                    if singular {
                        tr.regular = false;
                    }
                    x = x_new;
                    t = t_next;
                    push(&mut tr, t, &x, Region::Interface, Some(mu), c);
                    continue;
                }
                InterfaceMove::Hold => {
                    // Both normal drifts vanish identically only through Mixing::Any, so
                    // Hold means the drifts disagree in a degenerate way; stay put at side-1 cost.
                    let h = t_next - t;
                    let ell = s1.cost(&x, a1);
                    let c = 0.5 * h * ((-lambda * t).exp() + (-lambda * t_next).exp()) * ell;
                    t = t_next;
                    push(&mut tr, t, &x, Region::Interface, Some(1.0), c);
                    continue;
                }
                InterfaceMove::Exit(side) => {
                    region = Region::of_side(side);
                }
            }
        }

        // Off-interface step on `side` (possibly leaving the interface).
        let side = if region == Region::Omega1 { Side::One } else { Side::Two };
        let spec = problem.side(side);
        let alpha = seg.control(side);
        let f = |y: &[f64]| spec.dynamics(y, alpha);
        let sign = side.sign();
        let mut h = t_next - t;
        let mut x_new = rk4(f, &x, h);
        let mut hit = false;
        if x_new[n - 1] * sign <= opts.snap_tol {
            hit = true;
            if x_new[n - 1].abs() > opts.snap_tol {
                // Strict crossing: shrink the step until the endpoint sits on the interface.
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let mut found = false;
                for _ in 0..MAX_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    let y = rk4(f, &x, mid * h);
                    let s = y[n - 1] * sign;
                    if s.abs() <= opts.snap_tol {
                        x_new = y;
                        h *= mid;
                        found = true;
                        break;
                    }
                    if s > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if !found || h <= 0.0 {
                    return invalid(format!("could not locate the interface crossing near t = {t}"));
                }
            }
            x_new[n - 1] = 0.0;
        }
        let t_end = if hit && h < t_next - t { t + h } else { t_next };
        let c = 0.5
            * (t_end - t)
            * ((-lambda * t).exp() * spec.cost(&x, alpha) + (-lambda * t_end).exp() * spec.cost(&x_new, alpha));
        x = x_new;
        t = t_end;
        push(&mut tr, t, &x, Region::of_side(side), None, c);
        region = if hit { Region::Interface } else { Region::of_side(side) };
    }

    tr.total_cost = tr.step_costs.iter().sum();
    tr.tail_bound = tail_bound(problem, &x, t);
    Ok(tr)
}

fn push(tr: &mut Trajectory, t: f64, x: &[f64], label: Region, mu: Option<f64>, cost: f64) {
    tr.times.push(t);
    tr.states.push(x.to_vec());
    tr.labels.push(label);
    tr.mus.push(mu);
    tr.step_costs.push(cost);
}

/// `∫_T^∞ (M(|x_T| + v (t - T))) e^{-λt} dt` for the cost family, with `v` the top speed.
fn tail_bound(problem: &TwoDomainProblem, x_end: &[f64], t_end: f64) -> f64 {
    let lambda = problem.lambda();
    let r = crate::problem::norm(x_end);
    let (speed, m) = problem.bounds_on(r);
    let growth = [Side::One, Side::Two]
        .iter()
        .map(|&s| problem.side(s).cost.c3.abs())
        .fold(0.0, f64::max);
    (-lambda * t_end).exp() * (m / lambda + growth * speed / (lambda * lambda))
}

/// The one-dimensional strategy family from `x0`.
///
/// * `x0 ≠ 0`: hold any control of the current side that does not approach the
///   interface; approach it at any speed and then stay on it with the cheapest
///   interface control; or approach and cross, continuing at any speed on the other side.
/// * `x0 = 0`: hold any interface control, or leave into either side at any speed.
///
/// With `regular_only`, interface controls are restricted to regular ones.
pub fn strategy_family(problem: &TwoDomainProblem, x0: f64, regular_only: bool) -> Result<Vec<ControlSchedule>> {
    if problem.dim() != 1 {
        return invalid("strategy families are one-dimensional");
    }
    let pts = |s: Side| -> Vec<f64> { problem.side(s).controls.points().iter().map(|a| a[0]).collect() };
    let a1 = pts(Side::One);
    let a2 = pts(Side::Two);
    let mut out = Vec::new();

    if x0 == 0.0 {
        for c in interface_control_set(problem, &[0.0], regular_only, crate::interface::DEFAULT_NORMAL_TOL)? {
            out.push(ControlSchedule::constant(Segment::Explicit { alpha1: c.alpha1, alpha2: c.alpha2, mu: c.mu }));
        }
        for &a in a1.iter().filter(|&&a| a > 0.0) {
            out.push(ControlSchedule::constant(Segment::Explicit { alpha1: vec![a], alpha2: vec![a2[0]], mu: 1.0 }));
        }
        for &b in a2.iter().filter(|&&b| b < 0.0) {
            out.push(ControlSchedule::constant(Segment::Explicit { alpha1: vec![a1[0]], alpha2: vec![b], mu: 0.0 }));
        }
        return Ok(out);
    }

    let side = if x0 > 0.0 { Side::One } else { Side::Two };
    let sign = side.sign();
    let (own, other) = if side == Side::One { (&a1, &a2) } else { (&a2, &a1) };
    let pair = |own_a: f64, other_a: f64| -> (Vec<f64>, Vec<f64>) {
        if side == Side::One {
            (vec![own_a], vec![other_a])
        } else {
            (vec![other_a], vec![own_a])
        }
    };
    let stay = interface_value(problem, &[0.0], regular_only)?.minimizer;

    for &a in own.iter() {
        if a * sign >= 0.0 {
            let (alpha1, alpha2) = pair(a, other[0]);
            let mu = if side == Side::One { 1.0 } else { 0.0 };
            out.push(ControlSchedule::constant(Segment::Explicit { alpha1, alpha2, mu }));
            continue;
        }
        let t_hit = x0.abs() / a.abs();
        let (alpha1, alpha2) = pair(a, other[0]);
        out.push(ControlSchedule::new(
            vec![0.0, t_hit],
            vec![
                Segment::Explicit { alpha1, alpha2, mu: if side == Side::One { 1.0 } else { 0.0 } },
                Segment::Explicit { alpha1: stay.alpha1.clone(), alpha2: stay.alpha2.clone(), mu: stay.mu },
            ],
        )?);
        for &b in other.iter().filter(|&&b| b * sign < 0.0) {
            let (alpha1, alpha2) = pair(a, b);
            out.push(ControlSchedule::constant(Segment::Slide { alpha1, alpha2 }));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyResult {
    pub best_cost: f64,
    pub tail_bound: f64,
    pub regular: bool,
    pub schedule: serde_json::Value,
    pub candidates: usize,
    /// Largest `|b_H·e_N|` over all interface steps of all candidates.
    pub max_normal_residual_on_h: f64,
}

/// Cheapest member of [`strategy_family`]: a direct upper bound on `U⁻(x0)`
/// (or on `U⁺(x0)` when `regular_only`).
pub fn best_of_strategies(
    problem: &TwoDomainProblem,
    x0: f64,
    regular_only: bool,
    dt: f64,
    horizon: f64,
) -> Result<StrategyResult> {
    let family = strategy_family(problem, x0, regular_only)?;
    let runs: Vec<(ControlSchedule, Trajectory)> = family
        .into_par_iter()
        .map(|s| integrate(problem, &[x0], &s, horizon, dt, IntegrateOptions::default()).map(|t| (s, t)))
        .collect::<Result<_>>()?;
    let max_res = runs.iter().map(|(_, t)| t.max_normal_residual_on_h).fold(0.0, f64::max);
    let candidates = runs.len();
    let (schedule, best) = runs
        .into_iter()
        .filter(|(_, t)| !regular_only || t.regular)
        .min_by(|a, b| a.1.total_cost.total_cmp(&b.1.total_cost))
        .ok_or_else(|| Error::InvalidInput("empty strategy family".into()))?;
    Ok(StrategyResult {
        best_cost: best.total_cost,
        tail_bound: best.tail_bound,
        regular: best.regular,
        schedule: schedule.to_json_value(),
        candidates,
        max_normal_residual_on_h: max_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, Builtin, ControlSet, CostCoefficients, SideSpec};

    fn explicit(a1: f64, a2: f64, mu: f64) -> Segment {
        Segment::Explicit { alpha1: vec![a1], alpha2: vec![a2], mu }
    }

    fn slide(a1: f64, a2: f64) -> Segment {
        Segment::Slide { alpha1: vec![a1], alpha2: vec![a2] }
    }

    fn constant_cost_problem(c: f64, lambda: f64) -> TwoDomainProblem {
        let controls = ControlSet::grid(1, -1.0, 1.0, 1.0).unwrap();
        let cost = CostCoefficients { c0: c, c1: 0.0, c2: 0.0, c3: 0.0 };
        let side = SideSpec { cost, controls };
        TwoDomainProblem::new(1, lambda, 1.0, side.clone(), side).unwrap()
    }

    #[test]
    fn linear_motion_endpoint() {
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(explicit(1.0, 1.0, 1.0));
        let tr = integrate(&p, &[1.0], &s, 1.0, 1e-3, IntegrateOptions::default()).unwrap();
        assert!((tr.end_state()[0] - 2.0).abs() < 1e-12);
        assert_eq!(tr.end_time(), 1.0);
        assert!(tr.labels.iter().all(|&l| l == Region::Omega1));
        assert_eq!(classify(&tr), Regularity::Regular);
    }

    #[test]
    fn push_push_snap_and_slide_is_free_and_regular() {
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(slide(-1.0, 1.0));
        let dt = 1e-3;
        let tr = integrate(&p, &[0.5], &s, 10.0, dt, IntegrateOptions::default()).unwrap();
        assert!(tr.total_cost.abs() <= 1e-6, "cost {}", tr.total_cost);
        assert_eq!(classify(&tr), Regularity::Regular);
        assert!(tr.max_normal_residual_on_h <= DEFAULT_SNAP_TOL / dt);
        let first_h = tr.labels.iter().position(|&l| l == Region::Interface).unwrap();
        assert!((tr.times[first_h - 1] - 0.5).abs() < 1e-9 || (tr.times[first_h] - 0.5).abs() < 1e-9);
        assert!(tr.labels[first_h..].iter().all(|&l| l == Region::Interface));
        assert!(tr.states[first_h..].iter().all(|x| x[0] == 0.0));
        assert!(tr.violations.is_empty());
    }

    #[test]
    fn crossing_is_located_by_bisection() {
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        // dt does not divide the hitting time 0.3.
        let s = ControlSchedule::constant(slide(-1.0, 1.0));
        let tr = integrate(&p, &[0.3], &s, 1.0, 0.07, IntegrateOptions::default()).unwrap();
        let k = tr.labels.iter().position(|&l| l == Region::Interface).unwrap();
        assert!((tr.times[k - 1] - 0.3).abs() < 1e-9, "hit at {}", tr.times[k - 1]);
        assert_eq!(tr.states[k - 1][0], 0.0);
    }

    #[test]
    fn constant_cost_integrates_to_c_over_lambda() {
        for lambda in [0.5, 1.0, 2.0] {
            let c = 1.7;
            let p = constant_cost_problem(c, lambda);
            let s = ControlSchedule::constant(explicit(0.0, 0.0, 1.0));
            let tr = integrate(&p, &[0.4], &s, 40.0 / lambda, 1e-4, IntegrateOptions::default()).unwrap();
            let r = cost(&tr);
            assert!((r.total - c / lambda).abs() < 1e-8, "lambda={lambda}: {}", r.total);
            assert!(r.tail_bound < 1e-15);
        }
    }

    #[test]
    fn state_constraint_escape_from_origin() {
        let p = builtin(Builtin::StateConstraint, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(explicit(1.0, 0.0, 1.0));
        let tr = integrate(&p, &[0.0], &s, 40.0, 1e-3, IntegrateOptions::default()).unwrap();
        assert!((cost(&tr).total - 0.5).abs() < 1e-6);
        assert!(tr.violations.is_empty());
        assert_eq!(tr.labels[1], Region::Omega1);
    }

    #[test]
    fn pull_pull_singular_slide_cost_and_class() {
        let p = builtin(Builtin::PullPull, 1.0, 1.0).unwrap();
        let s = ControlSchedule::new(vec![0.0, 1.0], vec![explicit(-1.0, -1.0, 1.0), slide(1.0, -1.0)]).unwrap();
        let tr = integrate(&p, &[1.0], &s, 40.0, 1e-4, IntegrateOptions::default()).unwrap();
        let expected = 2.0 - (-1.0f64).exp();
        assert!((tr.total_cost - expected).abs() < 1e-3, "{}", tr.total_cost);
        assert_eq!(classify(&tr), Regularity::Singular);
        assert!(tr.violations.is_empty());
    }

    #[test]
    fn explicit_segment_with_normal_drift_on_interface_is_flagged() {
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(explicit(-1.0, 1.0, 0.8));
        let tr = integrate(&p, &[0.0], &s, 0.01, 1e-3, IntegrateOptions::default()).unwrap();
        assert!(!tr.violations.is_empty());
        // The fallback slides with the admissible weight.
        assert!(tr.states.iter().all(|x| x[0] == 0.0));
        assert!(tr.mus[1..].iter().all(|m| *m == Some(0.5)));
    }

    #[test]
    fn infeasible_slide_exits_along_common_sign() {
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(slide(-1.0, -1.0));
        let tr = integrate(&p, &[0.2], &s, 1.0, 1e-2, IntegrateOptions::default()).unwrap();
        assert!((tr.end_state()[0] + 0.8).abs() < 1e-9);
        assert!(tr.labels.iter().all(|&l| l != Region::Interface || tr.mus.iter().all(|m| m.is_none())));
        assert_eq!(classify(&tr), Regularity::Regular);
    }

    #[test]
    fn never_touching_interface_is_regular() {
        let p = builtin(Builtin::PullPull, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(explicit(1.0, 1.0, 1.0));
        let tr = integrate(&p, &[0.5], &s, 2.0, 1e-2, IntegrateOptions::default()).unwrap();
        assert_eq!(classify(&tr), Regularity::Regular);
        assert_eq!(tr.max_normal_residual_on_h, 0.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(ControlSchedule::new(vec![0.5], vec![slide(0.0, 0.0)]).is_err());
        assert!(ControlSchedule::new(vec![0.0, 0.0], vec![slide(0.0, 0.0), slide(0.0, 0.0)]).is_err());
        assert!(ControlSchedule::new(vec![0.0], vec![explicit(0.0, 0.0, 1.5)]).is_err());
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(explicit(2.0, 0.0, 1.0));
        assert!(integrate(&p, &[0.0], &s, 1.0, 0.1, IntegrateOptions::default()).is_err());
        let ok = ControlSchedule::constant(explicit(0.0, 0.0, 1.0));
        assert!(integrate(&p, &[0.0], &ok, 0.01, 0.1, IntegrateOptions::default()).is_err());
    }

    #[test]
    fn schedule_json_forms() {
        let text = r#"{"breakpoints":[0,0.5],"segments":[{"alpha1":-1,"alpha2":1,"mu":1},{"slide":{"alpha1":-1,"alpha2":1}}]}"#;
        let s = ControlSchedule::from_json_str(text).unwrap();
        assert_eq!(s.segments()[1], slide(-1.0, 1.0));
        let again = ControlSchedule::from_json_str(&s.to_json_value().to_string()).unwrap();
        assert_eq!(again, s);
        assert!(ControlSchedule::from_json_str(r#"{"breakpoints":[0],"segments":[{"slide":{}}]}"#).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let s = ControlSchedule::constant(slide(-1.0, 1.0));
        let tr = integrate(&p, &[0.02], &s, 0.05, 0.01, IntegrateOptions::default()).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x,label,mu,step_cost"));
        assert_eq!(csv.lines().count(), tr.times.len() + 1);
        assert!(csv.lines().last().unwrap().contains(",H,0.5,"));
    }

    #[test]
    fn best_of_strategies_examples() {
        let pp = builtin(Builtin::PushPush, 1.0, 1.0).unwrap();
        let r = best_of_strategies(&pp, 0.3, false, 1e-3, 40.0).unwrap();
        assert!(r.best_cost.abs() < 1e-6);

        let pl = builtin(Builtin::PullPull, 1.0, 1.0).unwrap();
        let r = best_of_strategies(&pl, 0.0, true, 1e-3, 40.0).unwrap();
        assert!((r.best_cost - 1.0).abs() < 1e-5, "{}", r.best_cost);
        assert!(r.regular);
        let r = best_of_strategies(&pl, 0.0, false, 1e-3, 40.0).unwrap();
        assert!(r.best_cost.abs() < 1e-12);

        let sc = builtin(Builtin::StateConstraint, 1.0, 1.0).unwrap();
        let r = best_of_strategies(&sc, 0.0, false, 1e-3, 40.0).unwrap();
        assert!((r.best_cost - 0.5).abs() < 1e-5, "{}", r.best_cost);
    }
}
