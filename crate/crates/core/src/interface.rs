//! Interface controls on `H = {x_N = 0}` and the tangential Hamiltonians.
//!
//! A mixed control `(α₁, α₂, μ)` drives a trajectory along the interface with
//! velocity `b_H = μ b₁(x, α₁) + (1 - μ) b₂(x, α₂)` at cost
//! `l_H = μ l₁(x, α₁) + (1 - μ) l₂(x, α₂)`, provided `b_H·e_N = 0`. It is
//! *singular* when both sides push towards the interface
//! (`b₁·e_N > 0` and `b₂·e_N < 0`), *regular* otherwise.

use serde::Serialize;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::problem::{dot, Side, TwoDomainProblem};

/// Default tolerance on `|b_H·e_N|`; the `b = α` family is exact on symmetric grids.
pub const DEFAULT_NORMAL_TOL: f64 = 1e-12;

/// Relative tolerance used when ranking equal costs.
const COST_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mixing {
    /// The unique weight cancelling the normal drift.
    Unique(f64),
    /// Both normal drifts vanish: every weight works.
    Any,
    /// Both normal drifts have the same strict sign.
    Infeasible,
}

/// Weight `μ ∈ [0, 1]` with `μ d₁ + (1 - μ) d₂ = 0`, where `d_i = b_i·e_N`.
pub fn mixing_coefficient(d1: f64, d2: f64) -> Mixing {
    if d1 == 0.0 && d2 == 0.0 {
        Mixing::Any
    } else if d1 * d2 <= 0.0 {
        Mixing::Unique((-d2 / (d1 - d2)).clamp(0.0, 1.0))
    } else {
        Mixing::Infeasible
    }
}

/// Singular iff `d₁ > 0` and `d₂ < 0`.
pub fn is_singular(d1: f64, d2: f64) -> bool {
    d1 > 0.0 && d2 < 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceControl {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub mu: f64,
    /// `|b_H·e_N|`.
    pub normal_residual: f64,
    pub regular: bool,
    /// Indices into the two control sets.
    #[serde(skip)]
    pub index: (usize, usize),
}

impl InterfaceControl {
    pub fn drift(&self, problem: &TwoDomainProblem, x: &[f64]) -> Vec<f64> {
        let b1 = problem.side(Side::One).dynamics(x, &self.alpha1);
        let b2 = problem.side(Side::Two).dynamics(x, &self.alpha2);
        b1.iter().zip(&b2).map(|(p, q)| self.mu * p + (1.0 - self.mu) * q).collect()
    }

    pub fn cost(&self, problem: &TwoDomainProblem, x: &[f64]) -> f64 {
        self.mu * problem.side(Side::One).cost(x, &self.alpha1)
            + (1.0 - self.mu) * problem.side(Side::Two).cost(x, &self.alpha2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceValue {
    pub value: f64,
    pub minimizer: InterfaceControl,
    pub regular_only: bool,
}

fn check_on_interface(problem: &TwoDomainProblem, x: &[f64], tol: f64) -> Result<()> {
    if x.len() != problem.dim() {
        return invalid(format!("state {x:?} has wrong dimension, expected {}", problem.dim()));
    }
    ensure_finite("interface state", x)?;
    if x[x.len() - 1].abs() > tol {
        return invalid(format!("state {x:?} is not on the interface x_N = 0"));
    }
    Ok(())
}

/// Enumerates `A₀(x)` (or `A₀^reg(x)` when `regular_only`) over the two control grids.
///
/// When both normal drifts vanish only `μ ∈ {0, 1}` is emitted: the cost is affine
/// in `μ`, so the extremes dominate any minimization or maximization.
pub fn interface_control_set(
    problem: &TwoDomainProblem,
    x: &[f64],
    regular_only: bool,
    tol: f64,
) -> Result<Vec<InterfaceControl>> {
    check_on_interface(problem, x, tol.max(DEFAULT_NORMAL_TOL))?;
    let s1 = problem.side(Side::One);
    let s2 = problem.side(Side::Two);
    let mut out = Vec::new();
    for (i, a1) in s1.controls.points().iter().enumerate() {
        let d1 = s1.normal_drift(x, a1);
        for (j, a2) in s2.controls.points().iter().enumerate() {
            let d2 = s2.normal_drift(x, a2);
            let regular = !is_singular(d1, d2);
            if regular_only && !regular {
                continue;
            }
            let mus: &[f64] = match mixing_coefficient(d1, d2) {
                Mixing::Unique(mu) => &[mu],
                Mixing::Any => &[0.0, 1.0],
                Mixing::Infeasible => &[],
            };
            for &mu in mus {
                let normal_residual = (mu * d1 + (1.0 - mu) * d2).abs();
                if normal_residual > tol {
                    continue;
                }
                out.push(InterfaceControl {
                    alpha1: a1.clone(),
                    alpha2: a2.clone(),
                    mu,
                    normal_residual,
                    regular,
                    index: (i, j),
                });
            }
        }
    }
    Ok(out)
}

/// `H_T` (or `H_T^reg`): `max_{A₀} { -b_H·(p_H, 0) + λu - l_H }`.
pub fn tangential_hamiltonian(
    problem: &TwoDomainProblem,
    x: &[f64],
    u: f64,
    p_tangential: &[f64],
    regular_only: bool,
) -> Result<f64> {
    if p_tangential.len() + 1 != problem.dim() {
        return invalid(format!("tangential gradient must have {} entries", problem.dim() - 1));
    }
    ensure_finite("tangential gradient", p_tangential)?;
    ensure_finite("u", &[u])?;
    let set = interface_control_set(problem, x, regular_only, DEFAULT_NORMAL_TOL)?;
    if set.is_empty() {
        return Err(Error::EmptyInterfaceSet { x: x.to_vec() });
    }
    let lambda = problem.lambda();
    Ok(set
        .iter()
        .map(|a| {
            let b = a.drift(problem, x);
            -dot(&b[..p_tangential.len()], p_tangential) + lambda * u - a.cost(problem, x)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `u_H(0)` (or `u_H^reg(0)`): the cheapest way of staying at the interface point,
/// `(1/λ) min_{A₀} l_H`. Only defined in one dimension.
///
/// Among minimizers of equal cost the one with the smallest control effort
/// `|α₁| + |α₂|` is reported.
pub fn interface_value(problem: &TwoDomainProblem, x: &[f64], regular_only: bool) -> Result<InterfaceValue> {
    if problem.dim() != 1 {
        return invalid("interface_value is only defined in one dimension");
    }
    let set = interface_control_set(problem, x, regular_only, DEFAULT_NORMAL_TOL)?;
    let effort = |a: &InterfaceControl| a.alpha1[0].abs() + a.alpha2[0].abs();
    let mut best: Option<(f64, &InterfaceControl)> = None;
    for a in &set {
        let c = a.cost(problem, x);
        best = match best {
            None => Some((c, a)),
            Some((bc, b)) => {
                let tie = (c - bc).abs() <= COST_TIE * bc.abs().max(1.0);
                if (!tie && c < bc) || (tie && effort(a) < effort(b)) {
                    Some((c, a))
                } else {
                    Some((bc, b))
                }
            }
        };
    }
    let (cost, minimizer) = best.ok_or_else(|| Error::EmptyInterfaceSet { x: x.to_vec() })?;
    Ok(InterfaceValue { value: cost / problem.lambda(), minimizer: minimizer.clone(), regular_only })
}
