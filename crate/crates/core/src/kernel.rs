//! Monotone Markov-chain discretization shared by every grid solver.
//!
//! A free node `i` carries a finite list of actions `(c, b, ε)` and satisfies
//!
//! ```text
//! max_a { (λ + q⁺ + q⁻) u_i − q⁺ u_{i+1} − q⁻ u_{i−1} − c } = 0,
//! q± = κ (ε/h² + b±/h),  κ = 1 − λΔ,  Δ = h / max|b|.
//! ```
//!
//! With `ε = 0` this is exactly the semi-Lagrangian scheme
//! `u_i = min_a { Δc + κ [(1 − |s|) u_i + |s| u_{i±1}] }`, `s = Δb/h`.
//! Fixed nodes hold Dirichlet data.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Action {
    pub cost: f64,
    pub drift: f64,
    pub diffusion: f64,
}

#[derive(Debug, Clone, Copy)]
struct Coeffs {
    c: f64,
    qp: f64,
    qm: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Fixed(f64),
    Free { start: usize, end: usize },
}

/// How the discrete fixed point is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Iteration {
    /// Alternating Gauss-Seidel sweeps with exact local solves.
    GaussSeidel,
    /// Explicit pseudo-time marching `u ← u − dt F(u)`; `None` uses the largest monotone step.
    Explicit { dt: Option<f64> },
    /// Policy iteration on the implicit pseudo-time step `dt` (`∞` gives plain Howard).
    Howard { pseudo_dt: f64 },
}

impl Iteration {
    pub fn name(&self) -> &'static str {
        match self {
            Iteration::GaussSeidel => "gauss_seidel",
            Iteration::Explicit { .. } => "explicit",
            Iteration::Howard { .. } => "howard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `sup |T(u) − u| <= tol`, `T` the explicit map at the largest monotone step.
    pub tol: f64,
    pub max_iters: usize,
    pub iteration: Iteration,
    /// Iterations without a new smallest residual before declaring divergence.
    pub stall_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 200_000, iteration: Iteration::GaussSeidel, stall_window: 200 }
    }
}

impl SolverOptions {
    pub fn with_iteration(mut self, iteration: Iteration) -> Self {
        self.iteration = iteration;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub trace: Vec<f64>,
    pub kappa: f64,
    pub step: f64,
}

const TRACE_TAIL: usize = 16;

fn tail(trace: &[f64]) -> Vec<f64> {
    trace[trace.len().saturating_sub(TRACE_TAIL)..].to_vec()
}

#[derive(Debug, Clone)]
pub(crate) struct Chain {
    lambda: f64,
    kappa: f64,
    delta: f64,
    nodes: Vec<Node>,
    coeffs: Vec<Coeffs>,
    /// Largest `λ + q⁺ + q⁻`; its inverse is the monotone explicit step.
    max_diag: f64,
}

/// Collects nodes left to right before the chain is frozen.
pub(crate) struct ChainBuilder {
    h: f64,
    lambda: f64,
    xs: Vec<f64>,
    nodes: Vec<Option<f64>>,
    actions: Vec<Vec<Action>>,
}

impl ChainBuilder {
    pub fn new(h: f64, lambda: f64) -> Self {
        Self { h, lambda, xs: Vec::new(), nodes: Vec::new(), actions: Vec::new() }
    }

    pub fn fixed(&mut self, x: f64, value: f64) {
        self.xs.push(x);
        self.nodes.push(Some(value));
        self.actions.push(Vec::new());
    }

    pub fn free(&mut self, x: f64, actions: Vec<Action>) {
        self.xs.push(x);
        self.nodes.push(None);
        self.actions.push(actions);
    }

    /// End nodes keep only actions that stay on the grid: no outward drift, no diffusion.
    pub fn build(mut self) -> Result<Chain> {
        let n = self.nodes.len();
        if n < 2 {
            return invalid("grid needs at least two nodes");
        }
        for (i, acts) in self.actions.iter_mut().enumerate() {
            if self.nodes[i].is_some() {
                continue;
            }
            if i == 0 || i == n - 1 {
                acts.retain(|a| if i == 0 { a.drift >= 0.0 } else { a.drift <= 0.0 });
                for a in acts.iter_mut() {
                    a.diffusion = 0.0;
                }
            }
            if acts.is_empty() {
                return Err(Error::NoAdmissibleControl { x: self.xs[i] });
            }
        }
        let bmax = self.actions.iter().flatten().map(|a| a.drift.abs()).fold(0.0, f64::max);
        let delta = if bmax > 0.0 { self.h / bmax } else { self.h };
        let kappa = 1.0 - self.lambda * delta;
        if kappa <= 0.0 {
            return invalid(format!("λΔ = {} must be below 1; refine the grid", self.lambda * delta));
        }
        let h = self.h;
        let mut nodes = Vec::with_capacity(n);
        let mut coeffs = Vec::new();
        let mut max_diag = self.lambda;
        for (node, acts) in self.nodes.iter().zip(&self.actions) {
            match node {
                Some(v) => nodes.push(Node::Fixed(*v)),
                None => {
                    let start = coeffs.len();
                    for a in acts {
                        let diff = a.diffusion / (h * h);
                        let qp = kappa * (diff + a.drift.max(0.0) / h);
                        let qm = kappa * (diff + (-a.drift).max(0.0) / h);
                        max_diag = max_diag.max(self.lambda + qp + qm);
                        coeffs.push(Coeffs { c: a.cost, qp, qm });
                    }
                    nodes.push(Node::Free { start, end: coeffs.len() });
                }
            }
        }
        Ok(Chain { lambda: self.lambda, kappa, delta, nodes, coeffs, max_diag })
    }
}

impl Chain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[cfg(test)]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Largest explicit pseudo-time step for which `u − dt F(u)` is monotone.
    pub fn monotone_step(&self) -> f64 {
        1.0 / self.max_diag
    }

    fn neighbours(&self, i: usize, u: &[f64]) -> (f64, f64) {
        let up = if i + 1 < u.len() { u[i + 1] } else { 0.0 };
        let um = if i > 0 { u[i - 1] } else { 0.0 };
        (up, um)
    }

    fn local_min(&self, i: usize, u: &[f64]) -> f64 {
        match self.nodes[i] {
            Node::Fixed(v) => v,
            Node::Free { start, end } => {
                let (up, um) = self.neighbours(i, u);
                self.coeffs[start..end]
                    .iter()
                    .map(|k| (k.c + k.qp * up + k.qm * um) / (self.lambda + k.qp + k.qm))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// `F_i(u)` and the maximizing action (absolute index into the action table).
    fn operator(&self, i: usize, u: &[f64]) -> (f64, usize) {
        match self.nodes[i] {
            Node::Fixed(v) => (u[i] - v, usize::MAX),
            Node::Free { start, end } => {
                let (up, um) = self.neighbours(i, u);
                let mut best = (f64::NEG_INFINITY, start);
                for (j, k) in self.coeffs[start..end].iter().enumerate() {
                    let f = (self.lambda + k.qp + k.qm) * u[i] - k.qp * up - k.qm * um - k.c;
                    if f > best.0 {
                        best = (f, start + j);
                    }
                }
                best
            }
        }
    }

    /// `sup_i |T(u)_i − u_i|` for the explicit map at the monotone step.
    pub fn residual(&self, u: &[f64]) -> f64 {
        let step = self.monotone_step();
        (0..u.len())
            .map(|i| match self.nodes[i] {
                Node::Fixed(v) => (u[i] - v).abs(),
                Node::Free { .. } => step * self.operator(i, u).0.abs(),
            })
            .fold(0.0, f64::max)
    }

    pub fn initial_guess(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| match self.nodes[i] {
                Node::Fixed(v) => v,
                Node::Free { start, end } => {
                    let cmin = self.coeffs[start..end].iter().map(|k| k.c).fold(f64::INFINITY, f64::min);
                    cmin / self.lambda
                }
            })
            .collect()
    }

    pub fn solve(&self, opts: &SolverOptions, initial: Option<Vec<f64>>) -> Result<(Vec<f64>, SolveStats)> {
        if !(opts.tol > 0.0) || opts.max_iters == 0 {
            return invalid("solver needs tol > 0 and max_iters > 0");
        }
        let mut u = match initial {
            Some(u) if u.len() == self.len() => u,
            Some(_) => return invalid("initial guess has the wrong length"),
            None => self.initial_guess(),
        };
        let step = match opts.iteration {
            Iteration::Explicit { dt } => {
                let bound = self.monotone_step();
                let dt = dt.unwrap_or(bound);
                if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
                    return Err(Error::Cfl { dt, bound });
                }
                dt
            }
            Iteration::Howard { pseudo_dt } => {
                if !(pseudo_dt > 0.0) {
                    return invalid("pseudo time step must be positive");
                }
                pseudo_dt
            }
            Iteration::GaussSeidel => self.delta,
        };
        let mut trace = Vec::new();
        let mut best = f64::INFINITY;
        let mut best_at = 0usize;
        let mut res = self.residual(&u);
        trace.push(res);
        let start = res.max(1.0);
        let mut it = 0usize;
        let mut buf = vec![0.0; self.len()];
        while res > opts.tol {
            if it >= opts.max_iters {
                return Err(Error::NotConverged { iterations: it, trace: tail(&trace) });
            }
            match opts.iteration {
                Iteration::GaussSeidel => {
                    if it % 2 == 0 {
                        for i in 0..u.len() {
                            u[i] = self.local_min(i, &u);
                        }
                    } else {
                        for i in (0..u.len()).rev() {
                            u[i] = self.local_min(i, &u);
                        }
                    }
                }
                Iteration::Explicit { .. } => {
                    for i in 0..u.len() {
                        buf[i] = match self.nodes[i] {
                            Node::Fixed(v) => v,
                            Node::Free { .. } => u[i] - step * self.operator(i, &u).0,
                        };
                    }
                    std::mem::swap(&mut u, &mut buf);
                }
                Iteration::Howard { pseudo_dt } => self.policy_step(&mut u, pseudo_dt),
            }
            it += 1;
            res = self.residual(&u);
            trace.push(res);
            if !res.is_finite() || res > 1e8 * start {
                return Err(Error::Divergence { iterations: it, trace: tail(&trace) });
            }
            if res < best {
                best = res;
                best_at = it;
            } else if it - best_at > opts.stall_window {
                return Err(Error::Divergence { iterations: it, trace: tail(&trace) });
            }
        }
        Ok((u, SolveStats { iterations: it, residual: res, trace, kappa: self.kappa, step }))
    }

    /// One policy-improvement step: freeze the maximizing actions and solve the
    /// tridiagonal system `(1/dt + λ + q⁺ + q⁻) v_i − q⁺ v_{i+1} − q⁻ v_{i−1} = c + u_i/dt`.
    fn policy_step(&self, u: &mut [f64], pseudo_dt: f64) {
        let n = u.len();
        let inv_dt = if pseudo_dt.is_finite() { 1.0 / pseudo_dt } else { 0.0 };
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            match self.nodes[i] {
                Node::Fixed(v) => {
                    diag[i] = 1.0;
                    rhs[i] = v;
                }
                Node::Free { .. } => {
                    let k = self.coeffs[self.operator(i, u).1];
                    diag[i] = inv_dt + self.lambda + k.qp + k.qm;
                    sub[i] = -k.qm;
                    sup[i] = -k.qp;
                    rhs[i] = k.c + inv_dt * u[i];
                }
            }
        }
        thomas(&sub, &mut diag, &sup, &mut rhs);
        u.copy_from_slice(&rhs);
    }
}

/// Solves a diagonally dominant tridiagonal system in place; the solution ends up in `rhs`.
fn thomas(sub: &[f64], diag: &mut [f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
    }
}
