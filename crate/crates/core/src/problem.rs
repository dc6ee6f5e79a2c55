//! Problem data for two half-spaces separated by the hyperplane `{x_N = 0}`.
//!
//! Side 1 lives on `Ω₁ = {x_N > 0}` and side 2 on `Ω₂ = {x_N < 0}`. Each side has
//! its own finite control grid, dynamics `b_i(x, α) = α` and a running cost from
//! the parametric family
//!
//! ```text
//! l_i(x, α) = c0 + c1·α_N + c2·exp(-|x|) + c3·|x|
//! ```
//!
//! which contains the three one-dimensional benchmark problems shipped as
//! [`Builtin`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Relative slack used when checking that a resolution divides an interval.
const GRID_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::One => 1,
            Side::Two => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Side> {
        match i {
            1 => Ok(Side::One),
            2 => Ok(Side::Two),
            _ => invalid(format!("side must be 1 or 2, got {i}")),
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::One => Side::Two,
            Side::Two => Side::One,
        }
    }

    /// +1 for side 1 (x_N > 0), -1 for side 2.
    pub fn sign(self) -> f64 {
        match self {
            Side::One => 1.0,
            Side::Two => -1.0,
        }
    }
}

/// Finite surrogate of a compact control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    dim: usize,
    lo: f64,
    hi: f64,
    points: Vec<Vec<f64>>,
}

impl ControlSet {
    /// Builds a control set from explicit points, each of which must lie in `[lo, hi]^dim`.
    pub fn new(dim: usize, lo: f64, hi: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return invalid("control dimension must be at least 1");
        }
        ensure_finite("control bounds", &[lo, hi])?;
        if lo > hi {
            return invalid(format!("control bounds reversed: min {lo} > max {hi}"));
        }
        if points.is_empty() {
            return invalid("control set must be nonempty");
        }
        for (k, p) in points.iter().enumerate() {
            if p.len() != dim {
                return invalid(format!("control {k} has dimension {}, expected {dim}", p.len()));
            }
            ensure_finite("control point", p)?;
            if p.iter().any(|&v| v < lo || v > hi) {
                return invalid(format!("control {p:?} outside bounds [{lo}, {hi}]"));
            }
            if points[..k].iter().any(|q| q == p) {
                return invalid(format!("duplicate control {p:?}"));
            }
        }
        Ok(Self { dim, lo, hi, points })
    }

    /// Tensor grid of `[min, max]^dim` with the given spacing.
    ///
    /// Nodes are computed as `min + (max - min) * i / n`, so the endpoints and,
    /// for symmetric boxes with an even `n`, the origin are represented exactly.
    pub fn grid(dim: usize, min: f64, max: f64, resolution: f64) -> Result<Self> {
        ensure_finite("control grid", &[min, max, resolution])?;
        if min > max {
            return invalid(format!("control bounds reversed: min {min} > max {max}"));
        }
        let axis: Vec<f64> = if min == max {
            vec![min]
        } else {
            if resolution <= 0.0 {
                return invalid("control resolution must be positive");
            }
            let n = cells(max - min, resolution)
                .ok_or_else(|| Error::InvalidInput(format!("resolution {resolution} does not divide [{min}, {max}]")))?;
            (0..=n)
                .map(|i| min + (max - min) * i as f64 / n as f64)
                .collect()
        };
        let mut points = vec![Vec::with_capacity(dim)];
        for _ in 0..dim {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        Self::new(dim, min, max, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains_bounded(&self, alpha: &[f64]) -> bool {
        alpha.len() == self.dim && alpha.iter().all(|&a| a >= self.lo && a <= self.hi)
    }
}

/// Returns `length / step` when it is (numerically) a positive integer.
pub(crate) fn cells(length: f64, step: f64) -> Option<usize> {
    let ratio = length / step;
    let n = ratio.round();
    if n >= 1.0 && (ratio - n).abs() <= GRID_SLACK * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// Coefficients of `l(x, α) = c0 + c1·α_N + c2·exp(-|x|) + c3·|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl CostCoefficients {
    pub fn eval(&self, x: &[f64], alpha: &[f64]) -> f64 {
        let r = norm(x);
        self.c0 + self.c1 * alpha[alpha.len() - 1] + self.c2 * (-r).exp() + self.c3 * r
    }

    /// Specialization for N = 1.
    #[inline]
    pub fn eval_1d(&self, x: f64, alpha: f64) -> f64 {
        let r = x.abs();
        self.c0 + self.c1 * alpha + self.c2 * (-r).exp() + self.c3 * r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideSpec {
    pub cost: CostCoefficients,
    pub controls: ControlSet,
}

impl SideSpec {
    /// `b_i(x, α)`; the velocity is the control itself.
    pub fn dynamics(&self, _x: &[f64], alpha: &[f64]) -> Vec<f64> {
        alpha.to_vec()
    }

    /// `b_i(x, α)·e_N`.
    pub fn normal_drift(&self, _x: &[f64], alpha: &[f64]) -> f64 {
        alpha[alpha.len() - 1]
    }

    pub fn cost(&self, x: &[f64], alpha: &[f64]) -> f64 {
        self.cost.eval(x, alpha)
    }

    /// Largest `|b_i|` over the control set.
    pub fn max_speed(&self) -> f64 {
        self.controls
            .points()
            .iter()
            .map(|a| norm(a))
            .fold(0.0, f64::max)
    }
}

/// The three one-dimensional benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// Both sides prefer to run away from the interface.
    StateConstraint,
    /// Staying on the interface with velocities pointing into it is free.
    PushPush,
    /// Staying on the interface is free only with velocities pointing away from it.
    PullPull,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::StateConstraint, Builtin::PushPush, Builtin::PullPull];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::StateConstraint => "state_constraint",
            Builtin::PushPush => "push_push",
            Builtin::PullPull => "pull_pull",
        }
    }

    fn costs(self) -> (CostCoefficients, CostCoefficients) {
        let c = |c0, c1, c2, c3| CostCoefficients { c0, c1, c2, c3 };
        match self {
            Builtin::StateConstraint => (c(1.0, -1.0, 1.0, 0.0), c(1.0, 1.0, 1.0, 0.0)),
            Builtin::PushPush => (c(1.0, 1.0, 0.0, 0.0), c(1.0, -1.0, 0.0, 0.0)),
            Builtin::PullPull => (c(1.0, -1.0, 0.0, 1.0), c(1.0, 1.0, 0.0, 1.0)),
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "state_constraint" | "sc" | "stateconstraint" => Ok(Builtin::StateConstraint),
            "push_push" | "pushpush" => Ok(Builtin::PushPush),
            "pull_pull" | "pullpull" => Ok(Builtin::PullPull),
            _ => Err(Error::UnknownProblem(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoDomainProblem {
    dim: usize,
    lambda: f64,
    delta: f64,
    side1: SideSpec,
    side2: SideSpec,
    builtin: Option<Builtin>,
}

impl TwoDomainProblem {
    pub fn new(dim: usize, lambda: f64, delta: f64, side1: SideSpec, side2: SideSpec) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        ensure_finite("lambda/delta", &[lambda, delta])?;
        if lambda <= 0.0 {
            return invalid(format!("discount lambda must be positive, got {lambda}"));
        }
        if delta <= 0.0 {
            return invalid(format!("controllability radius delta must be positive, got {delta}"));
        }
        if side1.controls.dim() != dim || side2.controls.dim() != dim {
            return invalid("control dimension must match the state dimension");
        }
        Ok(Self { dim, lambda, delta, side1, side2, builtin: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn builtin(&self) -> Option<Builtin> {
        self.builtin
    }

    pub fn side(&self, side: Side) -> &SideSpec {
        match side {
            Side::One => &self.side1,
            Side::Two => &self.side2,
        }
    }

    /// Same problem with a different discount factor.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut p = Self::new(self.dim, lambda, self.delta, self.side1.clone(), self.side2.clone())?;
        p.builtin = self.builtin;
        Ok(p)
    }

    /// Largest speed over both control sets.
    pub fn max_speed(&self) -> f64 {
        self.side1.max_speed().max(self.side2.max_speed())
    }

    /// `(M_b, M)`: bounds of `|b_i|` and `|l_i|` over the ball `|x| <= radius`.
    ///
    /// The cost family depends on `x` only through `|x|`, so a radial sweep suffices.
    pub fn bounds_on(&self, radius: f64) -> (f64, f64) {
        const RADIAL_SAMPLES: usize = 2000;
        let mut m = 0.0f64;
        for side in [Side::One, Side::Two] {
            let spec = self.side(side);
            for k in 0..=RADIAL_SAMPLES {
                let r = radius * k as f64 / RADIAL_SAMPLES as f64;
                let mut x = vec![0.0; self.dim];
                x[self.dim - 1] = r;
                for a in spec.controls.points() {
                    m = m.max(spec.cost(&x, a).abs());
                }
            }
        }
        (self.max_speed(), m)
    }

    pub fn to_spec(&self) -> ProblemSpec {
        let (min, max) = self.side1.controls.bounds();
        let axis = self.side1.controls.points().len() as f64;
        let per_axis = axis.powf(1.0 / self.dim as f64).round();
        let resolution = if per_axis > 1.0 { (max - min) / (per_axis - 1.0) } else { 0.0 };
        ProblemSpec {
            dim: self.dim,
            lambda: self.lambda,
            delta: self.delta,
            control: ControlSpec { min, max, resolution },
            side1: self.side1.cost,
            side2: self.side2.cost,
        }
    }
}

/// One of the benchmark problems with `b_i = α`, `α ∈ [-1, 1]` gridded at `control_resolution`.
pub fn builtin_problem(name: &str, lambda: f64, control_resolution: f64) -> Result<TwoDomainProblem> {
    let which: Builtin = name.parse()?;
    builtin(which, lambda, control_resolution)
}

pub fn builtin(which: Builtin, lambda: f64, control_resolution: f64) -> Result<TwoDomainProblem> {
    ensure_finite("lambda/resolution", &[lambda, control_resolution])?;
    if control_resolution <= 0.0 || cells(1.0, control_resolution).is_none() {
        return invalid(format!(
            "control resolution {control_resolution} must divide 1 so that {{-1, 0, 1}} lies on the grid"
        ));
    }
    let controls = ControlSet::grid(1, -1.0, 1.0, control_resolution)?;
    let (l1, l2) = which.costs();
    let mut p = TwoDomainProblem::new(
        1,
        lambda,
        1.0,
        SideSpec { cost: l1, controls: controls.clone() },
        SideSpec { cost: l2, controls },
    )?;
    p.builtin = Some(which);
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub min: f64,
    pub max: f64,
    pub resolution: f64,
}

/// JSON form of a problem:
/// `{dim, lambda, delta, control:{min,max,resolution}, side1:{c0,c1,c2,c3}, side2:{...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dim: usize,
    pub lambda: f64,
    pub delta: f64,
    pub control: ControlSpec,
    pub side1: CostCoefficients,
    pub side2: CostCoefficients,
}

impl ProblemSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse { what: "problem JSON", message: e.to_string() })
    }

    pub fn build(&self) -> Result<TwoDomainProblem> {
        let controls = ControlSet::grid(self.dim, self.control.min, self.control.max, self.control.resolution)?;
        TwoDomainProblem::new(
            self.dim,
            self.lambda,
            self.delta,
            SideSpec { cost: self.side1, controls: controls.clone() },
            SideSpec { cost: self.side2, controls },
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianQuery {
    pub x: Vec<f64>,
    pub u: f64,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    /// Index into the side's control points of a maximizing control.
    pub argmax: usize,
}

/// `H_i(x, u, p) = max_α { -b_i(x,α)·p + λu - l_i(x,α) }` over the finite control set.
pub fn eval_hamiltonian(problem: &TwoDomainProblem, side: Side, q: &HamiltonianQuery) -> Result<HamiltonianValue> {
    if q.x.len() != problem.dim || q.p.len() != problem.dim {
        return invalid(format!("query dimension mismatch, expected {}", problem.dim));
    }
    ensure_finite("hamiltonian query", &q.x)?;
    ensure_finite("hamiltonian query", &q.p)?;
    ensure_finite("hamiltonian query", &[q.u])?;
    let spec = problem.side(side);
    let mut best = HamiltonianValue { value: f64::NEG_INFINITY, argmax: 0 };
    for (k, a) in spec.controls.points().iter().enumerate() {
        let b = spec.dynamics(&q.x, a);
        let v = -dot(&b, &q.p) + problem.lambda * q.u - spec.cost(&q.x, a);
        if v > best.value {
            best = HamiltonianValue { value: v, argmax: k };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCheck {
    pub x: Vec<f64>,
    /// Smallest support value `max_α b·d` over the probed unit directions, per side.
    pub min_support: [f64; 2],
    pub controllable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Largest `|b_i(x, α)|` over samples and controls.
    pub max_dynamics: f64,
    /// Largest `|l_i(x, α)|` over samples and controls.
    pub max_cost: f64,
    /// Largest sampled Lipschitz quotient `|b_i(x,α) - b_i(y,α)| / |x - y|`.
    pub max_lipschitz: f64,
    pub samples: Vec<SampleCheck>,
    pub pass: bool,
}

/// Samples boundedness, Lipschitz continuity and controllability.
///
/// Controllability (`B(0, δ) ⊂ conv{b_i(x, α)}`) is probed through the support
/// function along the directions `{-1, 0, 1}^N \ {0}` (normalized): a ball sits in
/// a convex hull iff every support value is at least `δ`. The probe is exact in
/// one dimension and for axis-aligned boxes.
pub fn check_assumptions(problem: &TwoDomainProblem, state_samples: &[Vec<f64>], tol: f64) -> Result<AssumptionReport> {
    if state_samples.is_empty() {
        return invalid("state samples must be nonempty");
    }
    for x in state_samples {
        if x.len() != problem.dim {
            return invalid(format!("sample {x:?} has wrong dimension"));
        }
        ensure_finite("state sample", x)?;
    }
    let directions = probe_directions(problem.dim);
    let mut max_dynamics = 0.0f64;
    let mut max_cost = 0.0f64;
    let mut max_lipschitz = 0.0f64;
    let mut samples = Vec::with_capacity(state_samples.len());

    for (i, x) in state_samples.iter().enumerate() {
        let mut min_support = [f64::INFINITY; 2];
        for (s, side) in [Side::One, Side::Two].into_iter().enumerate() {
            let spec = problem.side(side);
            let velocities: Vec<Vec<f64>> = spec.controls.points().iter().map(|a| spec.dynamics(x, a)).collect();
            for (a, b) in spec.controls.points().iter().zip(&velocities) {
                max_dynamics = max_dynamics.max(norm(b));
                max_cost = max_cost.max(spec.cost(x, a).abs());
                for y in &state_samples[..i] {
                    let dist = distance(x, y);
                    if dist > 0.0 {
                        let by = spec.dynamics(y, a);
                        max_lipschitz = max_lipschitz.max(distance(b, &by) / dist);
                    }
                }
            }
            for d in &directions {
                let support = velocities.iter().map(|b| dot(b, d)).fold(f64::NEG_INFINITY, f64::max);
                min_support[s] = min_support[s].min(support);
            }
        }
        let controllable = min_support.iter().all(|&m| m >= problem.delta - tol);
        samples.push(SampleCheck { x: x.clone(), min_support, controllable });
    }
    let pass = samples.iter().all(|s| s.controllable);
    Ok(AssumptionReport { max_dynamics, max_cost, max_lipschitz, samples, pass })
}

fn probe_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..dim {
        dirs = dirs
            .into_iter()
            .flat_map(|d| {
                [-1.0, 0.0, 1.0].into_iter().map(move |c| {
                    let mut e = d.clone();
                    e.push(c);
                    e
                })
            })
            .collect();
    }
    dirs.into_iter()
        .filter(|d| d.iter().any(|&c| c != 0.0))
        .map(|d| {
            let n = norm(&d);
            d.into_iter().map(|c| c / n).collect()
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
