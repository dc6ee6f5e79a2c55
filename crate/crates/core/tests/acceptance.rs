//! End-to-end acceptance run at `h = 1e-3`, `xmax = 3`.
//!
//! Prints one `PASS`/`FAIL` line per criterion. Reference values are written
//! out here by hand rather than taken from the library's own catalogue.
//! Criterion 9 is exploratory and never fails the run.

use std::time::Instant;

use hjb_core::grid::{assemble_structure, FarPolicy, Grid1D, Structure, ValueField};
use hjb_core::interface::interface_value;
use hjb_core::problem::{builtin, Builtin, TwoDomainProblem};
use hjb_core::schemes::{
    default_scheme_solver, solve_combined, solve_filippov, solve_viscous, MixingProfile, ProfileShape, SchemeBoundary,
};
use hjb_core::trajectory::{best_of_strategies, classify, integrate, ControlSchedule, Regularity, Segment};
use hjb_core::verify::invariant_suite;
use hjb_core::verify::SuiteConfig;
use hjb_core::SolverOptions;

const H: f64 = 1e-3;
const XMAX: f64 = 3.0;
const RES: f64 = 0.5;

fn exp(x: f64) -> f64 {
    x.exp()
}

fn sc_minus(x: f64) -> f64 {
    exp(-x.abs()) / 2.0
}

fn pull_minus_l1(x: f64) -> f64 {
    1.0 + x.abs() - exp(-x.abs())
}

fn pull_plus_l1(x: f64) -> f64 {
    x.abs() + 1.0
}

/// `|x|/λ + (2λ − 1)/λ² (1 − e^{−λ|x|})`, the λ < 1 branch.
fn pull_minus_small_lambda(l: f64, x: f64) -> f64 {
    x.abs() / l + (2.0 * l - 1.0) / (l * l) * (1.0 - exp(-l * x.abs()))
}

fn problem(b: Builtin, l: f64) -> TwoDomainProblem {
    builtin(b, l, RES).unwrap()
}

fn structure(b: Builtin, l: f64) -> Structure {
    let g = Grid1D::symmetric(XMAX, H).unwrap();
    assemble_structure(&problem(b, l), &g, FarPolicy::ClosedForm, &SolverOptions::default()).unwrap()
}

fn sup_err(f: &ValueField, g: impl Fn(f64) -> f64) -> f64 {
    f.sup_distance_to(|x| Ok(g(x))).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let s = structure(Builtin::StateConstraint, 1.0);
    let em = sup_err(&s.u_minus, sc_minus);
    let ep = sup_err(&s.u_plus, sc_minus);
    let uh = s.u_h.value;
    let sc0 = s.sc1.at_zero();
    let pass = em <= 1e-2 && ep <= 1e-2 && uh == 1.0 && (sc0 - 0.5).abs() <= 1e-2;
    outcome(pass, format!("sup|U⁻−e^(−|x|)/2|={em:.2e} sup|U⁺−·|={ep:.2e} u_H={uh} U_SC1(0)={sc0:.6}"))
}

fn criterion_2() -> Outcome {
    let s = structure(Builtin::PushPush, 1.0);
    let p = problem(Builtin::PushPush, 1.0);
    let um = s.u_minus.sup_norm();
    let up = s.u_plus.sup_norm();
    let sc0 = s.sc1.at_zero();
    let schedule = ControlSchedule::constant(Segment::Slide { alpha1: vec![-1.0], alpha2: vec![1.0] });
    let tr = integrate(&p, &[0.5], &schedule, 10.0, 1e-4, Default::default()).unwrap();
    let regular = classify(&tr) == Regularity::Regular;
    let pass = um <= 2e-2
        && up <= 2e-2
        && s.u_h.value == 0.0
        && s.u_h_reg.value == 0.0
        && (sc0 - 1.0).abs() <= 1e-2
        && tr.total_cost <= 1e-4
        && regular;
    outcome(
        pass,
        format!(
            "sup|U⁻|={um:.2e} sup|U⁺|={up:.2e} u_H={} u_H_reg={} U_SC1(0)={sc0:.6} slide cost={:.2e} regular={regular}",
            s.u_h.value, s.u_h_reg.value, tr.total_cost
        ),
    )
}

fn criterion_3() -> Outcome {
    let s = structure(Builtin::PullPull, 1.0);
    let gap = s.u_plus.at_zero() - s.u_minus.at_zero();
    let em = sup_err(&s.u_minus, pull_minus_l1);
    let ep = sup_err(&s.u_plus, pull_plus_l1);
    let p = problem(Builtin::PullPull, 1.0);
    let all = interface_value(&p, &[0.0], false).unwrap();
    let reg = interface_value(&p, &[0.0], true).unwrap();
    let singular = !all.minimizer.regular;
    let reg_min = reg.minimizer.alpha1 == vec![0.0] && reg.minimizer.alpha2 == vec![0.0];
    let s2 = structure(Builtin::PullPull, 2.0);
    let up2 = s2.u_plus.at_zero();
    let pass = (gap - 1.0).abs() <= 2e-2
        && em <= 1e-2
        && ep <= 1e-2
        && all.value == 0.0
        && singular
        && reg.value == 1.0
        && reg_min
        && (up2 - 0.25).abs() <= 1e-2;
    outcome(
        pass,
        format!(
            "U⁺(0)−U⁻(0)={gap:.6} sup err U⁻={em:.2e} U⁺={ep:.2e} u_H={} (singular={singular}) u_H_reg={} at (0,0)={reg_min} λ=2 U⁺(0)={up2:.6}",
            all.value, reg.value
        ),
    )
}

fn pull_pull_bc(f: fn(f64) -> f64) -> SchemeBoundary {
    SchemeBoundary::Dirichlet { left: f(-XMAX), right: f(XMAX) }
}

fn criterion_4() -> Outcome {
    let p = problem(Builtin::PullPull, 1.0);
    let g = Grid1D::symmetric(XMAX, H).unwrap();
    let errs: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&eps| {
            let prof = MixingProfile::new(ProfileShape::Tanh, eps).unwrap();
            let f = solve_filippov(&p, &prof, &g, pull_pull_bc(pull_minus_l1), &SolverOptions::default()).unwrap();
            sup_err(&f, pull_minus_l1)
        })
        .collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = errs[2];
    outcome(decreasing && last <= 0.15, format!("sup|u_ε−U⁻| at ε=0.2,0.1,0.05: {errs:.4?}"))
}

fn criterion_5() -> Outcome {
    let p = problem(Builtin::PullPull, 1.0);
    let g = Grid1D::symmetric(XMAX, H).unwrap();
    let rows: Vec<(f64, f64)> = [0.1, 0.05, 0.02]
        .iter()
        .map(|&eps| {
            let f = solve_viscous(&p, eps, &g, pull_pull_bc(pull_plus_l1), &default_scheme_solver()).unwrap();
            let below = f
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| pull_plus_l1(g.x(k)) - v)
                .fold(f64::NEG_INFINITY, f64::max);
            (sup_err(&f, pull_plus_l1), below)
        })
        .collect();
    let decreasing = rows.windows(2).all(|w| w[1].0 < w[0].0);
    let one_sided = rows.iter().all(|r| r.1 <= 5e-3);
    outcome(
        decreasing && one_sided,
        format!("(sup|u_ε−U⁺|, max(U⁺−u_ε)) at ε=0.1,0.05,0.02: {rows:.4?}"),
    )
}

fn criterion_6() -> Outcome {
    let cfg = SuiteConfig { h: H, xmax: XMAX, control_resolution: RES };
    let mut failed = Vec::new();
    let mut count = 0;
    for b in Builtin::ALL {
        for l in [0.5, 1.0, 2.0] {
            for c in invariant_suite(&problem(b, l), &cfg).unwrap() {
                count += 1;
                if !c.pass {
                    failed.push(format!("{} ({})", c.name, c.detail));
                }
            }
        }
    }
    let pass = failed.is_empty();
    outcome(pass, format!("{count} checks, failures: {failed:?}"))
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for b in Builtin::ALL {
        let s = structure(b, 1.0);
        let p = problem(b, 1.0);
        for x0 in [0.0, 0.5, -0.5, 1.0, -1.0] {
            let r = best_of_strategies(&p, x0, false, 1e-4, 25.0).unwrap();
            let d = (r.best_cost - s.u_minus.eval(x0).unwrap()).abs();
            if d > worst {
                worst = d;
                at = format!("{b} x0={x0}");
            }
        }
    }
    outcome(worst <= 5e-3, format!("max |strategies − U⁻| = {worst:.2e} at {at}"))
}

fn criterion_8() -> Outcome {
    let l = 0.5;
    let p = problem(Builtin::PullPull, l);
    let mut rows = Vec::new();
    for x0 in [0.0, 1.0] {
        let r = best_of_strategies(&p, x0, false, 1e-4, 60.0).unwrap();
        rows.push((x0, r.best_cost, pull_minus_small_lambda(l, x0)));
    }
    let pass = rows.iter().all(|(_, got, want)| (got - want).abs() <= 5e-3);
    outcome(pass, format!("(x0, strategies, formula): {rows:.5?}"))
}

fn criterion_9() -> Outcome {
    let p = problem(Builtin::PullPull, 1.0);
    let g = Grid1D::symmetric(XMAX, H).unwrap();
    let eps: f64 = 0.05;
    let prof = MixingProfile::new(ProfileShape::Tanh, eps).unwrap();
    let dist = |d: f64| {
        let f = solve_combined(&p, &prof, d, &g, SchemeBoundary::Extrapolate, &default_scheme_solver()).unwrap();
        (sup_err(&f, pull_minus_l1), sup_err(&f, pull_plus_l1))
    };
    let small = dist(eps.powi(3));
    let large = dist(eps.sqrt());
    let pass = small.0 < small.1 && large.1 < large.0;
    outcome(
        pass,
        format!("δ=ε³: (to U⁻, to U⁺)={small:.4?}; δ=√ε: {large:.4?}"),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failures = Vec::new();
    for (n, run) in criteria {
        let t = Instant::now();
        let o = run();
        let secs = t.elapsed().as_secs_f64();
        let status = match (o.pass, n == 9) {
            (true, _) => "PASS",
            (false, true) => "FAIL (exploratory)",
            (false, false) => "FAIL",
        };
        println!("criterion {n}: {status} [{secs:.1}s] {}", o.detail);
        if !o.pass && n != 9 {
            failures.push(n);
        }
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
