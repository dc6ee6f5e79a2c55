//! Uniform 1-D grids, value fields and the half-line solvers behind `U⁻` and `U⁺`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::interface::{interface_value, InterfaceValue};
use crate::kernel::{Action, ChainBuilder, SolveStats, SolverOptions};
use crate::problem::{cells, Side, TwoDomainProblem};
use crate::trajectory::{integrate, strategy_family, IntegrateOptions};
use crate::verify::{closed_form, ClosedFormKind};

/// Nodes `x_k = (k − n_left) h` for `k = 0..=n_left + n_right`; the interface is node `n_left`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    h: f64,
    n_left: usize,
    n_right: usize,
}

impl Grid1D {
    pub fn new(h: f64, n_left: usize, n_right: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return invalid(format!("grid spacing must be positive, got {h}"));
        }
        if n_left + n_right < 1 {
            return invalid("grid needs at least two nodes");
        }
        Ok(Self { h, n_left, n_right })
    }

    fn cells_for(xmax: f64, h: f64) -> Result<usize> {
        ensure_finite("xmax/h", &[xmax, h])?;
        if !(xmax > 0.0) || !(h > 0.0) {
            return invalid("xmax and h must be positive");
        }
        cells(xmax, h).ok_or_else(|| Error::InvalidInput(format!("xmax = {xmax} is not a multiple of h = {h}")))
    }

    /// `[-xmax, xmax]`.
    pub fn symmetric(xmax: f64, h: f64) -> Result<Self> {
        let n = Self::cells_for(xmax, h)?;
        Self::new(h, n, n)
    }

    /// `[0, xmax]` for side 1, `[-xmax, 0]` for side 2.
    pub fn half(side: Side, xmax: f64, h: f64) -> Result<Self> {
        let n = Self::cells_for(xmax, h)?;
        match side {
            Side::One => Self::new(h, 0, n),
            Side::Two => Self::new(h, n, 0),
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n_left + self.n_right + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zero_index(&self) -> usize {
        self.n_left
    }

    pub fn x(&self, k: usize) -> f64 {
        (k as f64 - self.n_left as f64) * self.h
    }

    pub fn xmin(&self) -> f64 {
        self.x(0)
    }

    pub fn xmax(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.x(k)).collect()
    }

    /// Cell index and weight for linear interpolation, or `None` outside the grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let tol = 1e-9 * self.h;
        if !x.is_finite() || x < self.xmin() - tol || x > self.xmax() + tol {
            return None;
        }
        let s = ((x - self.xmin()) / self.h).clamp(0.0, (self.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.len() - 2);
        Some((k, s - k as f64))
    }

    /// Sub-grid of one closed half-line.
    pub fn side_half(&self, side: Side) -> Result<Self> {
        match side {
            Side::One => Self::new(self.h, 0, self.n_right),
            Side::Two => Self::new(self.h, self.n_left, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FieldKind {
    #[serde(rename = "U_minus")]
    UMinus,
    #[serde(rename = "U_plus")]
    UPlus,
    #[serde(rename = "U_SC1")]
    USc1,
    #[serde(rename = "U_SC2")]
    USc2,
    #[serde(rename = "dirichlet")]
    Dirichlet,
    #[serde(rename = "filippov")]
    Filippov,
    #[serde(rename = "viscous")]
    Viscous,
    #[serde(rename = "combined")]
    Combined,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FieldMeta {
    pub solver: String,
    pub iterations: usize,
    pub residual: f64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

impl FieldMeta {
    pub(crate) fn from_stats(solver: &str, stats: &SolveStats) -> Self {
        let mut params = BTreeMap::new();
        params.insert("kappa".into(), stats.kappa.into());
        params.insert("step".into(), stats.step.into());
        Self { solver: solver.into(), iterations: stats.iterations, residual: stats.residual, params, notes: Vec::new() }
    }

    pub fn param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub kind: FieldKind,
    pub meta: FieldMeta,
}

impl ValueField {
    pub fn new(grid: Grid1D, values: Vec<f64>, kind: FieldKind, meta: FieldMeta) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for {} nodes", values.len(), grid.len()));
        }
        Ok(Self { grid, values, kind, meta })
    }

    /// Linear interpolation; errors outside the grid.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (k, w) = self
            .grid
            .locate(x)
            .ok_or_else(|| Error::InvalidInput(format!("x = {x} outside [{}, {}]", self.grid.xmin(), self.grid.xmax())))?;
        Ok((1.0 - w) * self.values[k] + w * self.values[k + 1])
    }

    pub fn at_zero(&self) -> f64 {
        self.values[self.grid.zero_index()]
    }

    /// `sup_k |u_k − g(x_k)|` over this field's nodes.
    pub fn sup_distance_to<F: Fn(f64) -> Result<f64>>(&self, g: F) -> Result<f64> {
        let mut d = 0.0f64;
        for (k, v) in self.values.iter().enumerate() {
            d = d.max((v - g(self.grid.x(k))?).abs());
        }
        Ok(d)
    }

    /// Sup distance on the nodes of `self` that lie inside `other`.
    pub fn sup_distance(&self, other: &ValueField) -> Result<f64> {
        let mut d = 0.0f64;
        let mut any = false;
        for (k, v) in self.values.iter().enumerate() {
            if let Ok(w) = other.eval(self.grid.x(k)) {
                d = d.max((v - w).abs());
                any = true;
            }
        }
        if any {
            Ok(d)
        } else {
            invalid("fields do not overlap")
        }
    }

    /// Largest difference quotient between neighbouring nodes.
    pub fn lipschitz(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs() / self.grid.h).fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// `#`-prefixed header lines followed by `x,value` rows.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("# kind: {}\n", self.kind));
        out.push_str("x,value\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.grid.x(k), v));
        }
        out
    }
}

/// Treatment of the end of a truncated half-line away from the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarBoundary {
    Value(f64),
    StateConstraint,
}

/// How `assemble_structure` closes the truncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FarPolicy {
    /// Closed-form values at `±xmax` (builtins only).
    ClosedForm,
    /// State constraint at `±xmax`.
    StateConstraint,
}

fn side_actions(problem: &TwoDomainProblem, side: Side, x: f64) -> Vec<Action> {
    let spec = problem.side(side);
    spec.controls
        .points()
        .iter()
        .map(|a| Action { cost: spec.cost(&[x], a), drift: spec.normal_drift(&[x], a), diffusion: 0.0 })
        .collect()
}

fn check_half(problem: &TwoDomainProblem, side: Side, grid: &Grid1D) -> Result<()> {
    if problem.dim() != 1 {
        return invalid("grid solvers are one-dimensional");
    }
    let ok = match side {
        Side::One => grid.n_left == 0,
        Side::Two => grid.n_right == 0,
    };
    if !ok {
        return invalid(format!("grid [{}, {}] is not the closed half-line of side {}", grid.xmin(), grid.xmax(), side.index()));
    }
    Ok(())
}

/// `near` is the interface rule: `Some(v)` fixes `u(0) = v`, `None` imposes the state constraint.
fn solve_half(
    problem: &TwoDomainProblem,
    side: Side,
    grid: &Grid1D,
    near: Option<f64>,
    far: FarBoundary,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    check_half(problem, side, grid)?;
    let mut b = ChainBuilder::new(grid.h, problem.lambda());
    let zero = grid.zero_index();
    let far_index = if side == Side::One { grid.len() - 1 } else { 0 };
    for k in 0..grid.len() {
        let x = grid.x(k);
        let rule = if k == zero {
            near
        } else if k == far_index {
            match far {
                FarBoundary::Value(v) => Some(v),
                FarBoundary::StateConstraint => None,
            }
        } else {
            None
        };
        match rule {
            Some(v) => b.fixed(x, v),
            None => b.free(x, side_actions(problem, side, x)),
        }
    }
    b.build()?.solve(opts, None)
}

/// Value of the side-`side` problem on its closed half-line with `u(0) = boundary_value`.
pub fn solve_dirichlet_halfline(
    problem: &TwoDomainProblem,
    side: Side,
    boundary_value: f64,
    grid: &Grid1D,
    far: FarBoundary,
    opts: &SolverOptions,
) -> Result<ValueField> {
    ensure_finite("boundary value", &[boundary_value])?;
    let (values, stats) = solve_half(problem, side, grid, Some(boundary_value), far, opts)?;
    let meta = FieldMeta::from_stats(opts.iteration.name(), &stats)
        .param("lambda", problem.lambda())
        .param("h", grid.h)
        .param("boundary_value", boundary_value);
    ValueField::new(*grid, values, FieldKind::Dirichlet, meta)
}

/// State-constrained value `U_SC1` (side 1) or `U_SC2` (side 2) on the closed half-line.
pub fn solve_state_constraint(
    problem: &TwoDomainProblem,
    side: Side,
    grid: &Grid1D,
    far: FarBoundary,
    opts: &SolverOptions,
) -> Result<ValueField> {
    let (values, stats) = solve_half(problem, side, grid, None, far, opts)?;
    let kind = if side == Side::One { FieldKind::USc1 } else { FieldKind::USc2 };
    let meta = FieldMeta::from_stats(opts.iteration.name(), &stats).param("lambda", problem.lambda()).param("h", grid.h);
    ValueField::new(*grid, values, kind, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    #[serde(rename = "u_H")]
    UH,
    #[serde(rename = "u_H_reg")]
    UHReg,
    #[serde(rename = "U_SC1")]
    Sc1,
    #[serde(rename = "U_SC2")]
    Sc2,
}

impl Source {
    pub fn label(self) -> &'static str {
        match self {
            Source::UH => "u_H",
            Source::UHReg => "u_H_reg",
            Source::Sc1 => "U_SC1",
            Source::Sc2 => "U_SC2",
        }
    }
}

/// Interface value of one of the two extremal solutions and where it comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceChoice {
    pub value: f64,
    pub sources: Vec<Source>,
}

impl InterfaceChoice {
    fn pick(candidates: &[(Source, f64)], tie_tol: f64) -> Self {
        let value = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let sources = candidates.iter().filter(|c| c.1 <= value + tie_tol).map(|c| c.0).collect();
        Self { value, sources }
    }

    fn describe(&self, name: &str) -> String {
        let labels: Vec<&str> = self.sources.iter().map(|s| s.label()).collect();
        let tie = if labels.len() > 1 { " (tie)" } else { "" };
        format!("{name}(0)={} via {}{tie}", round6(self.value), labels.join("="))
    }
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Structure {
    pub u_minus: ValueField,
    pub u_plus: ValueField,
    pub sc1: ValueField,
    pub sc2: ValueField,
    pub u_h: InterfaceValue,
    pub u_h_reg: InterfaceValue,
    pub minus: InterfaceChoice,
    pub plus: InterfaceChoice,
    pub decision: String,
    /// `sup |Dirichlet(min) − U_SCi|` on each side whose interface value is attained by `U_SCi`.
    pub consistency: BTreeMap<String, f64>,
}

fn far_value(problem: &TwoDomainProblem, kind: ClosedFormKind, x: f64, policy: FarPolicy) -> Result<FarBoundary> {
    match policy {
        FarPolicy::StateConstraint => Ok(FarBoundary::StateConstraint),
        FarPolicy::ClosedForm => {
            let b = problem
                .builtin()
                .ok_or_else(|| Error::Uncatalogued("closed-form far boundary of a custom problem".into()))?;
            Ok(FarBoundary::Value(closed_form(b, problem.lambda(), kind, x)?))
        }
    }
}

/// Builds `U⁻` and `U⁺` on `grid` (symmetric around the interface).
///
/// `U⁻(0) = min(u_H, U_SC1(0), U_SC2(0))` and `U⁺(0)` is the same with `u_H_reg`.
/// Each side then solves its Dirichlet problem from that value, except that a
/// side whose state-constrained value attains the minimum reuses that field.
pub fn assemble_structure(
    problem: &TwoDomainProblem,
    grid: &Grid1D,
    far: FarPolicy,
    opts: &SolverOptions,
) -> Result<Structure> {
    if grid.n_left != grid.n_right {
        return invalid("the structure grid must be symmetric");
    }
    let xmax = grid.xmax();
    let g1 = grid.side_half(Side::One)?;
    let g2 = grid.side_half(Side::Two)?;
    let u_h = interface_value(problem, &[0.0], false)?;
    let u_h_reg = interface_value(problem, &[0.0], true)?;

    let far1 = far_value(problem, ClosedFormKind::USc1, xmax, far)?;
    let far2 = far_value(problem, ClosedFormKind::USc2, -xmax, far)?;
    let (sc1, sc2) = rayon::join(
        || solve_state_constraint(problem, Side::One, &g1, far1, opts),
        || solve_state_constraint(problem, Side::Two, &g2, far2, opts),
    );
    let (sc1, sc2) = (sc1?, sc2?);

    let tie_tol = 5.0 * grid.h;
    let sc = [(Source::Sc1, sc1.at_zero()), (Source::Sc2, sc2.at_zero())];
    let minus = InterfaceChoice::pick(&[(Source::UH, u_h.value), sc[0], sc[1]], tie_tol);
    let plus = InterfaceChoice::pick(&[(Source::UHReg, u_h_reg.value), sc[0], sc[1]], tie_tol);

    let jobs: Vec<(ClosedFormKind, Side)> = vec![
        (ClosedFormKind::UMinus, Side::One),
        (ClosedFormKind::UMinus, Side::Two),
        (ClosedFormKind::UPlus, Side::One),
        (ClosedFormKind::UPlus, Side::Two),
    ];
    let halves: Vec<ValueField> = jobs
        .par_iter()
        .map(|&(kind, side)| {
            let m = if kind == ClosedFormKind::UMinus { minus.value } else { plus.value };
            let (g, x_far) = if side == Side::One { (&g1, xmax) } else { (&g2, -xmax) };
            let fb = far_value(problem, kind, x_far, far)?;
            solve_dirichlet_halfline(problem, side, m, g, fb, opts)
        })
        .collect::<Result<_>>()?;

    let mut consistency = BTreeMap::new();
    let mut join = |choice: &InterfaceChoice, d1: &ValueField, d2: &ValueField, kind: FieldKind, name: &str| {
        let use1 = choice.sources.contains(&Source::Sc1);
        let use2 = choice.sources.contains(&Source::Sc2);
        let f1 = if use1 { &sc1 } else { d1 };
        let f2 = if use2 { &sc2 } else { d2 };
        if use1 {
            consistency.insert(format!("{name}_side1"), max_diff(&d1.values, &sc1.values));
        }
        if use2 {
            consistency.insert(format!("{name}_side2"), max_diff(&d2.values, &sc2.values));
        }
        let z = grid.zero_index();
        let mut values = f2.values.clone();
        values.extend_from_slice(&f1.values[1..]);
        values[z] = choice.value;
        let meta = FieldMeta {
            solver: opts.iteration.name().into(),
            iterations: f1.meta.iterations.max(f2.meta.iterations),
            residual: f1.meta.residual.max(f2.meta.residual),
            params: BTreeMap::new(),
            notes: vec![choice.describe(name)],
        }
        .param("lambda", problem.lambda())
        .param("h", grid.h)
        .param("xmax", xmax);
        ValueField::new(*grid, values, kind, meta)
    };
    let u_minus = join(&minus, &halves[0], &halves[1], FieldKind::UMinus, "U⁻")?;
    let u_plus = join(&plus, &halves[2], &halves[3], FieldKind::UPlus, "U⁺")?;
    let decision = format!("{}; {}", minus.describe("U⁻"), plus.describe("U⁺"));

    Ok(Structure { u_minus, u_plus, sc1, sc2, u_h, u_h_reg, minus, plus, decision, consistency })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppSample {
    pub x: f64,
    pub field: f64,
    pub best: f64,
    /// `best − field`: negative when some strategy beats the field.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppReport {
    pub tau: f64,
    pub samples: Vec<DppSample>,
    pub max_abs_violation: f64,
    pub min_violation: f64,
}

/// Compares `field(x)` with `min_s { ∫₀^τ ℓ e^{-λt} + e^{-λτ} field(X_s(τ)) }` over the
/// strategy family, for each sample state. Strategies leaving the grid are skipped.
pub fn dpp_residual(
    field: &ValueField,
    problem: &TwoDomainProblem,
    samples: &[f64],
    tau: f64,
    dt: f64,
    regular_only: bool,
) -> Result<DppReport> {
    if !(tau > 0.0) || !(dt > 0.0) || dt > tau {
        return invalid("need 0 < dt <= tau");
    }
    let out: Vec<DppSample> = samples
        .par_iter()
        .map(|&x| {
            let fx = field.eval(x)?;
            let mut best = f64::INFINITY;
            for s in strategy_family(problem, x, regular_only)? {
                let tr = integrate(problem, &[x], &s, tau, dt, IntegrateOptions::default())?;
                if regular_only && !tr.regular {
                    continue;
                }
                if let Ok(end) = field.eval(tr.end_state()[0]) {
                    best = best.min(tr.total_cost + (-problem.lambda() * tau).exp() * end);
                }
            }
            if !best.is_finite() {
                return invalid(format!("no strategy from x = {x} stays on the grid"));
            }
            Ok(DppSample { x, field: fx, best, violation: best - fx })
        })
        .collect::<Result<_>>()?;
    let max_abs_violation = out.iter().map(|s| s.violation.abs()).fold(0.0, f64::max);
    let min_violation = out.iter().map(|s| s.violation).fold(f64::INFINITY, f64::min);
    Ok(DppReport { tau, samples: out, max_abs_violation, min_violation })
}
