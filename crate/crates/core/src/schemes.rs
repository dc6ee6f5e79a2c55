//! Regularized approximations of the discontinuous problem on the whole line.
//!
//! * Filippov mixing: `φ_ε(x) H₁ + (1 − φ_ε(x)) H₂ = 0`, solved as one HJB over
//!   the pairs `A₁ × A₂` with drift `φ b₁ + (1 − φ) b₂`.
//! * Vanishing viscosity: `−ε u'' + H(x, u, u') = 0` with the side Hamiltonian on each half-line.
//! * Combined: the Filippov Hamiltonian plus a `−δ_ε u''` term.

use serde::Serialize;

use crate::error::{ensure_finite, invalid, Result};
use crate::grid::{FieldKind, FieldMeta, Grid1D, ValueField};
use crate::kernel::{Action, ChainBuilder, Iteration, SolverOptions};
use crate::problem::{Side, TwoDomainProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    /// `(1 + tanh s) / 2`
    Tanh,
    /// `1/2 + atan(s)/π`
    Arctan,
}

impl std::str::FromStr for ProfileShape {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(ProfileShape::Tanh),
            "arctan" | "atan" => Ok(ProfileShape::Arctan),
            _ => invalid(format!("unknown profile `{s}` (expected tanh or arctan)")),
        }
    }
}

/// `φ_ε(x) = φ(x/ε)` with `φ` increasing from 0 to 1 and `φ(0) = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingProfile {
    pub shape: ProfileShape,
    pub eps: f64,
}

impl MixingProfile {
    pub fn new(shape: ProfileShape, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return invalid(format!("ε must be positive, got {eps}"));
        }
        Ok(Self { shape, eps })
    }

    pub fn phi(&self, x: f64) -> f64 {
        let s = x / self.eps;
        match self.shape {
            ProfileShape::Tanh => 0.5 * (1.0 + s.tanh()),
            ProfileShape::Arctan => 0.5 + s.atan() / std::f64::consts::PI,
        }
    }
}

/// Conditions at `±xmax`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeBoundary {
    Dirichlet { left: f64, right: f64 },
    /// Zero curvature with inward drift only: a linear-growth extrapolation.
    Extrapolate,
}

/// Default solver for the regularized schemes: policy iteration, which
/// reaches `tol = 1e-10` at `h = 1e-3` where explicit marching would need
/// millions of sweeps. Its residual is not monotone and with little viscosity
/// it may need hundreds of policy updates, hence the wide stall window.
pub fn default_scheme_solver() -> SolverOptions {
    SolverOptions {
        iteration: Iteration::Howard { pseudo_dt: f64::INFINITY },
        max_iters: 20_000,
        stall_window: 2_000,
        ..SolverOptions::default()
    }
}

fn check(problem: &TwoDomainProblem, grid: &Grid1D) -> Result<()> {
    if problem.dim() != 1 {
        return invalid("regularized schemes are one-dimensional");
    }
    if grid.zero_index() == 0 || grid.zero_index() == grid.len() - 1 {
        return invalid("regularized schemes need a grid on both sides of the interface");
    }
    Ok(())
}

fn solve_nodes<F: Fn(f64) -> Vec<Action>>(
    problem: &TwoDomainProblem,
    grid: &Grid1D,
    bc: SchemeBoundary,
    solver: &SolverOptions,
    actions: F,
) -> Result<(Vec<f64>, crate::kernel::SolveStats)> {
    let mut b = ChainBuilder::new(grid.h(), problem.lambda());
    let last = grid.len() - 1;
    for k in 0..grid.len() {
        let x = grid.x(k);
        match bc {
            SchemeBoundary::Dirichlet { left, right } if k == 0 || k == last => {
                b.fixed(x, if k == 0 { left } else { right });
            }
            _ => b.free(x, actions(x)),
        }
    }
    b.build()?.solve(solver, None)
}

fn pair_actions(problem: &TwoDomainProblem, profile: &MixingProfile, diffusion: f64, x: f64) -> Vec<Action> {
    let s1 = problem.side(Side::One);
    let s2 = problem.side(Side::Two);
    let phi = profile.phi(x);
    let mut out = Vec::with_capacity(s1.controls.len() * s2.controls.len());
    for a1 in s1.controls.points() {
        let (c1, b1) = (s1.cost(&[x], a1), s1.normal_drift(&[x], a1));
        for a2 in s2.controls.points() {
            let (c2, b2) = (s2.cost(&[x], a2), s2.normal_drift(&[x], a2));
            out.push(Action { cost: phi * c1 + (1.0 - phi) * c2, drift: phi * b1 + (1.0 - phi) * b2, diffusion });
        }
    }
    out
}

fn check_bc(bc: SchemeBoundary) -> Result<()> {
    if let SchemeBoundary::Dirichlet { left, right } = bc {
        ensure_finite("boundary values", &[left, right])?;
    }
    Ok(())
}

fn meta(solver: &SolverOptions, stats: &crate::kernel::SolveStats, problem: &TwoDomainProblem, grid: &Grid1D) -> FieldMeta {
    FieldMeta::from_stats(solver.iteration.name(), stats).param("lambda", problem.lambda()).param("h", grid.h())
}

pub fn solve_filippov(
    problem: &TwoDomainProblem,
    profile: &MixingProfile,
    grid: &Grid1D,
    bc: SchemeBoundary,
    solver: &SolverOptions,
) -> Result<ValueField> {
    check(problem, grid)?;
    check_bc(bc)?;
    let (values, stats) = solve_nodes(problem, grid, bc, solver, |x| pair_actions(problem, profile, 0.0, x))?;
    let m = meta(solver, &stats, problem, grid).param("eps", profile.eps).param("profile", format!("{:?}", profile.shape));
    ValueField::new(*grid, values, FieldKind::Filippov, m)
}

/// Side `i` actions on `Ω_i`; the interface node offers both control sets.
pub fn solve_viscous(
    problem: &TwoDomainProblem,
    eps: f64,
    grid: &Grid1D,
    bc: SchemeBoundary,
    solver: &SolverOptions,
) -> Result<ValueField> {
    check(problem, grid)?;
    check_bc(bc)?;
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("ε must be positive, got {eps}"));
    }
    let side_actions = |side: Side, x: f64| -> Vec<Action> {
        let s = problem.side(side);
        s.controls
            .points()
            .iter()
            .map(|a| Action { cost: s.cost(&[x], a), drift: s.normal_drift(&[x], a), diffusion: eps })
            .collect()
    };
    let (values, stats) = solve_nodes(problem, grid, bc, solver, |x| {
        if x > 0.0 {
            side_actions(Side::One, x)
        } else if x < 0.0 {
            side_actions(Side::Two, x)
        } else {
            let mut a = side_actions(Side::One, x);
            a.extend(side_actions(Side::Two, x));
            a
        }
    })?;
    let m = meta(solver, &stats, problem, grid).param("eps", eps);
    ValueField::new(*grid, values, FieldKind::Viscous, m)
}

/// Exploratory: Filippov mixing at width `profile.eps` plus viscosity `delta_eps`.
pub fn solve_combined(
    problem: &TwoDomainProblem,
    profile: &MixingProfile,
    delta_eps: f64,
    grid: &Grid1D,
    bc: SchemeBoundary,
    solver: &SolverOptions,
) -> Result<ValueField> {
    check(problem, grid)?;
    check_bc(bc)?;
    if !(delta_eps >= 0.0) || !delta_eps.is_finite() {
        return invalid(format!("δ_ε must be non-negative, got {delta_eps}"));
    }
    let (values, stats) = solve_nodes(problem, grid, bc, solver, |x| pair_actions(problem, profile, delta_eps, x))?;
    let m = meta(solver, &stats, problem, grid)
        .param("eps", profile.eps)
        .param("delta_eps", delta_eps)
        .param("profile", format!("{:?}", profile.shape));
    ValueField::new(*grid, values, FieldKind::Combined, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Filippov,
    Viscous,
    Combined,
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filippov" => Ok(Scheme::Filippov),
            "viscous" => Ok(Scheme::Viscous),
            "combined" => Ok(Scheme::Combined),
            _ => invalid(format!("unknown scheme `{s}` (expected filippov, viscous or combined)")),
        }
    }
}

/// One row of an ε-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_eps: Option<f64>,
    #[serde(rename = "sup_err_Uminus")]
    pub sup_err_uminus: f64,
    #[serde(rename = "sup_err_Uplus")]
    pub sup_err_uplus: f64,
    /// `min_k (u_k − U⁺(x_k))`: the one-sided gap of the approximation below `U⁺`.
    pub min_gap_uplus: f64,
    pub iters: usize,
}

impl SweepRow {
    pub fn from_field<F, G>(field: &ValueField, delta_eps: Option<f64>, eps: f64, u_minus: F, u_plus: G) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64>,
        G: Fn(f64) -> Result<f64>,
    {
        let mut min_gap = f64::INFINITY;
        for (k, v) in field.values.iter().enumerate() {
            min_gap = min_gap.min(v - u_plus(field.grid.x(k))?);
        }
        Ok(Self {
            eps,
            delta_eps,
            sup_err_uminus: field.sup_distance_to(&u_minus)?,
            sup_err_uplus: field.sup_distance_to(&u_plus)?,
            min_gap_uplus: min_gap,
            iters: field.meta.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, Builtin, ControlSet, CostCoefficients, SideSpec};

    fn grid() -> Grid1D {
        Grid1D::symmetric(2.0, 1e-2).unwrap()
    }

    #[test]
    fn profiles_are_sigmoids() {
        for shape in [ProfileShape::Tanh, ProfileShape::Arctan] {
            let p = MixingProfile::new(shape, 0.1).unwrap();
            assert_eq!(p.phi(0.0), 0.5);
            assert!(p.phi(-10.0) < 0.01 && p.phi(10.0) > 0.99);
            let xs: Vec<f64> = (-50..=50).map(|k| k as f64 * 0.01).collect();
            assert!(xs.windows(2).all(|w| p.phi(w[1]) > p.phi(w[0])));
        }
        assert!(MixingProfile::new(ProfileShape::Tanh, 0.0).is_err());
    }

    #[test]
    fn equal_sides_reduce_to_single_domain() {
        let controls = ControlSet::grid(1, -1.0, 1.0, 0.5).unwrap();
        let cost = CostCoefficients { c0: 1.0, c1: 0.5, c2: 1.0, c3: 0.2 };
        let side = SideSpec { cost, controls };
        let p = TwoDomainProblem::new(1, 1.0, 1.0, side.clone(), side).unwrap();
        let g = grid();
        let prof = MixingProfile::new(ProfileShape::Tanh, 0.1).unwrap();
        let f = solve_filippov(&p, &prof, &g, SchemeBoundary::Extrapolate, &SolverOptions::default()).unwrap();
        let single = solve_viscous(&p, 1e-300, &g, SchemeBoundary::Extrapolate, &SolverOptions::default()).unwrap();
        assert!(f.sup_distance(&single).unwrap() < 1e-9);
    }

    #[test]
    fn constant_cost_gives_constant_field() {
        let controls = ControlSet::grid(1, -1.0, 1.0, 1.0).unwrap();
        let side = SideSpec { cost: CostCoefficients { c0: 2.0, c1: 0.0, c2: 0.0, c3: 0.0 }, controls };
        let p = TwoDomainProblem::new(1, 0.5, 1.0, side.clone(), side).unwrap();
        let bc = SchemeBoundary::Dirichlet { left: 4.0, right: 4.0 };
        let v = solve_viscous(&p, 0.1, &grid(), bc, &default_scheme_solver()).unwrap();
        assert!(v.values.iter().all(|u| (u - 4.0).abs() < 1e-9));
    }

    #[test]
    fn combined_without_viscosity_is_filippov() {
        let p = builtin(Builtin::PullPull, 1.0, 0.5).unwrap();
        let prof = MixingProfile::new(ProfileShape::Tanh, 0.1).unwrap();
        let g = grid();
        let f = solve_filippov(&p, &prof, &g, SchemeBoundary::Extrapolate, &SolverOptions::default()).unwrap();
        let c = solve_combined(&p, &prof, 0.0, &g, SchemeBoundary::Extrapolate, &default_scheme_solver()).unwrap();
        assert!(f.sup_distance(&c).unwrap() < 1e-8);
    }

    #[test]
    fn push_push_schemes_stay_near_zero() {
        let p = builtin(Builtin::PushPush, 1.0, 0.5).unwrap();
        let g = grid();
        let bc = SchemeBoundary::Dirichlet { left: 0.0, right: 0.0 };
        let prof = MixingProfile::new(ProfileShape::Tanh, 0.1).unwrap();
        let f = solve_filippov(&p, &prof, &g, bc, &SolverOptions::default()).unwrap();
        assert!(f.sup_norm() < 2e-2, "{}", f.sup_norm());
        let v = solve_viscous(&p, 0.05, &g, bc, &default_scheme_solver()).unwrap();
        assert!(v.sup_norm() < 3e-2, "{}", v.sup_norm());
    }

    #[test]
    fn raising_boundary_data_raises_the_solution() {
        let p = builtin(Builtin::PullPull, 1.0, 0.5).unwrap();
        let g = grid();
        let lo = solve_viscous(&p, 0.05, &g, SchemeBoundary::Dirichlet { left: 3.0, right: 3.0 }, &default_scheme_solver()).unwrap();
        let hi = solve_viscous(&p, 0.05, &g, SchemeBoundary::Dirichlet { left: 3.5, right: 3.2 }, &default_scheme_solver()).unwrap();
        assert!(lo.values.iter().zip(&hi.values).all(|(a, b)| a <= b));
    }

    #[test]
    fn explicit_marching_respects_cfl() {
        let p = builtin(Builtin::PullPull, 1.0, 0.5).unwrap();
        let g = Grid1D::symmetric(1.0, 0.1).unwrap();
        let too_big = SolverOptions::default().with_iteration(Iteration::Explicit { dt: Some(1.0) });
        let r = solve_viscous(&p, 0.1, &g, SchemeBoundary::Extrapolate, &too_big);
        assert!(matches!(r, Err(crate::Error::Cfl { .. })));
        let ok = SolverOptions::default().with_iteration(Iteration::Explicit { dt: None });
        let e = solve_viscous(&p, 0.1, &g, SchemeBoundary::Extrapolate, &ok).unwrap();
        let h = solve_viscous(&p, 0.1, &g, SchemeBoundary::Extrapolate, &default_scheme_solver()).unwrap();
        assert!(e.sup_distance(&h).unwrap() < 1e-7);
    }
}
