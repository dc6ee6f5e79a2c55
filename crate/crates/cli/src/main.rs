use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hjb_core::grid::{
    assemble_structure, solve_dirichlet_halfline, solve_state_constraint, FarBoundary, FarPolicy, Grid1D, ValueField,
};
use hjb_core::interface::interface_value;
use hjb_core::problem::{builtin_problem, ProblemSpec, Side, TwoDomainProblem};
use hjb_core::schemes::{
    default_scheme_solver, solve_combined, solve_filippov, solve_viscous, MixingProfile, ProfileShape, Scheme,
    SchemeBoundary, SweepRow,
};
use hjb_core::trajectory::{cost, integrate, ControlSchedule, IntegrateOptions};
use hjb_core::verify::{closed_form, closed_form_boundary, run_suite, ClosedFormKind, Suite, SuiteConfig};
use hjb_core::SolverOptions;
use rayon::prelude::*;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "hjb", version, about = "Optimal control with dynamics discontinuous across an interface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for U⁻ and U⁺, or a single half-line problem.
    Solve(SolveArgs),
    /// Interface values u_H and u_H_reg at x = 0.
    Interface(CommonArgs),
    /// Integrate a trajectory under a control schedule.
    Simulate(SimulateArgs),
    /// ε-sweeps of the regularized schemes.
    Approx(ApproxArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Builtin name (state_constraint, push_push, pull_pull) or path to a problem JSON file.
    #[arg(long)]
    problem: String,
    /// Discount factor; overrides the value in a JSON problem.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    xmax: f64,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Spacing of the control grid on [-1, 1] for builtins.
    #[arg(long, default_value_t = 0.5)]
    control_resolution: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum FieldChoice {
    /// U⁻ and U⁺ through the interface values.
    Structure,
    /// One side with a prescribed value at x = 0.
    Dirichlet,
    /// One side constrained to its closed half-line.
    StateConstraint,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum FarChoice {
    ClosedForm,
    StateConstraint,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = FieldChoice::Structure)]
    field: FieldChoice,
    /// Side (1 or 2) for single half-line solves.
    #[arg(long, default_value_t = 1)]
    side: usize,
    /// Value at x = 0 for `--field dirichlet`.
    #[arg(long)]
    boundary_value: Option<f64>,
    /// Far boundary; closed form for builtins, state constraint otherwise when omitted.
    #[arg(long, value_enum)]
    far: Option<FarChoice>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial state, comma separated in N-D.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    /// Control schedule JSON file.
    #[arg(long)]
    schedule: PathBuf,
    /// Horizon.
    #[arg(long = "T", default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = hjb_core::trajectory::DEFAULT_SNAP_TOL)]
    snap_tol: f64,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Scheme,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',', required = true)]
    eps: Vec<f64>,
    /// Comma-separated δ_ε values for the combined scheme, paired with --eps.
    #[arg(long, value_delimiter = ',')]
    delta_eps: Vec<f64>,
    /// δ_ε = ε^p for the combined scheme.
    #[arg(long)]
    delta_power: Option<f64>,
    #[arg(long, value_parser = parse_profile, default_value = "tanh")]
    profile: ProfileShape,
    /// Closed-form boundary data (builtins) or linear extrapolation at ±xmax.
    #[arg(long, value_enum)]
    bc: Option<BcChoice>,
    /// Worker threads for the sweep.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum BcChoice {
    ClosedForm,
    Extrapolate,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_parser = parse_suite, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long, default_value_t = 3.0)]
    xmax: f64,
    #[arg(long, default_value_t = 0.5)]
    control_resolution: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: hjb_core::Error| e.to_string())
}

fn parse_profile(s: &str) -> std::result::Result<ProfileShape, String> {
    s.parse().map_err(|e: hjb_core::Error| e.to_string())
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse().map_err(|e: hjb_core::Error| e.to_string())
}

/// Marks failures that come from reading or validating the configuration.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load_problem(c: &CommonArgs) -> Result<TwoDomainProblem> {
    let lambda = c.lambda.unwrap_or(1.0);
    match builtin_problem(&c.problem, lambda, c.control_resolution) {
        Err(hjb_core::Error::UnknownProblem(_)) => {
            let text = fs::read_to_string(&c.problem)
                .map_err(|e| config_error(format!("`{}` is neither a builtin nor a readable file: {e}", c.problem)))?;
            let mut spec = ProblemSpec::from_json_str(&text)?;
            if let Some(l) = c.lambda {
                spec.lambda = l;
            }
            Ok(spec.build()?)
        }
        other => Ok(other?),
    }
}

fn problem_json(p: &TwoDomainProblem) -> Value {
    json!({
        "builtin": p.builtin().map(|b| b.name()),
        "spec": p.to_spec(),
    })
}

fn common_json(c: &CommonArgs, p: &TwoDomainProblem) -> Value {
    json!({
        "problem": problem_json(p),
        "lambda": p.lambda(),
        "xmax": c.xmax,
        "h": c.h,
        "control_resolution": c.control_resolution,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                // A closed pipe (e.g. `| head`) is not an error for the user.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

fn side_of(n: usize) -> Result<Side> {
    Side::from_index(n).map_err(|_| config_error(format!("side must be 1 or 2, got {n}")))
}

fn far_policy(choice: Option<FarChoice>, p: &TwoDomainProblem) -> FarPolicy {
    match choice {
        Some(FarChoice::ClosedForm) => FarPolicy::ClosedForm,
        Some(FarChoice::StateConstraint) => FarPolicy::StateConstraint,
        None if p.builtin().is_some() => FarPolicy::ClosedForm,
        None => FarPolicy::StateConstraint,
    }
}

fn fields_csv(config: &Value, extra: &[String], fields: &[&ValueField]) -> String {
    let mut out = format!("# config: {config}\n");
    for line in extra {
        out.push_str(&format!("# {line}\n"));
    }
    out.push('x');
    for f in fields {
        out.push_str(&format!(",{}", f.kind));
    }
    out.push('\n');
    let first = fields[0];
    for k in 0..first.values.len() {
        out.push_str(&format!("{}", first.grid.x(k)));
        for f in fields {
            out.push_str(&format!(",{}", f.values[k]));
        }
        out.push('\n');
    }
    out
}

fn field_json(f: &ValueField) -> Value {
    json!({
        "kind": f.kind,
        "meta": f.meta,
        "x": f.grid.xs(),
        "values": f.values,
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let c = &a.common;
    let p = load_problem(c)?;
    let opts = SolverOptions { tol: a.tol, max_iters: a.max_iters, ..SolverOptions::default() };
    let policy = far_policy(a.far, &p);
    let mut config = common_json(c, &p);
    config["field"] = json!(match a.field {
        FieldChoice::Structure => "structure",
        FieldChoice::Dirichlet => "dirichlet",
        FieldChoice::StateConstraint => "state_constraint",
    });
    config["far"] = json!(policy);
    config["tol"] = json!(a.tol);

    match a.field {
        FieldChoice::Structure => {
            let grid = Grid1D::symmetric(c.xmax, c.h)?;
            let s = assemble_structure(&p, &grid, policy, &opts)?;
            eprintln!("{}", s.decision);
            let text = match c.format {
                Format::Csv => fields_csv(&config, &[format!("decision: {}", s.decision)], &[&s.u_minus, &s.u_plus]),
                Format::Json => json_text(&json!({
                    "config": config,
                    "decision": s.decision,
                    "u_H": s.u_h,
                    "u_H_reg": s.u_h_reg,
                    "U_minus_at_0": s.minus,
                    "U_plus_at_0": s.plus,
                    "consistency": s.consistency,
                    "U_minus": field_json(&s.u_minus),
                    "U_plus": field_json(&s.u_plus),
                })),
            };
            emit(&c.out, &text)
        }
        FieldChoice::Dirichlet | FieldChoice::StateConstraint => {
            let side = side_of(a.side)?;
            config["side"] = json!(a.side);
            let grid = Grid1D::half(side, c.xmax, c.h)?;
            let x_far = if side == Side::One { c.xmax } else { -c.xmax };
            let kind = if a.field == FieldChoice::Dirichlet {
                ClosedFormKind::UMinus
            } else if side == Side::One {
                ClosedFormKind::USc1
            } else {
                ClosedFormKind::USc2
            };
            let far = match policy {
                FarPolicy::StateConstraint => FarBoundary::StateConstraint,
                FarPolicy::ClosedForm => {
                    let b = p.builtin().ok_or_else(|| config_error("closed-form far boundary needs a builtin problem"))?;
                    FarBoundary::Value(closed_form(b, p.lambda(), kind, x_far)?)
                }
            };
            let f = if a.field == FieldChoice::Dirichlet {
                let v = a.boundary_value.ok_or_else(|| config_error("--field dirichlet needs --boundary-value"))?;
                config["boundary_value"] = json!(v);
                solve_dirichlet_halfline(&p, side, v, &grid, far, &opts)?
            } else {
                solve_state_constraint(&p, side, &grid, far, &opts)?
            };
            let text = match c.format {
                Format::Csv => f.to_csv(&[format!("config: {config}")]),
                Format::Json => json_text(&json!({ "config": config, "field": field_json(&f) })),
            };
            emit(&c.out, &text)
        }
    }
}

fn cmd_interface(c: &CommonArgs) -> Result<()> {
    let p = load_problem(c)?;
    if p.dim() != 1 {
        return Err(config_error("interface values are computed for one-dimensional problems"));
    }
    let all = interface_value(&p, &[0.0], false)?;
    let reg = interface_value(&p, &[0.0], true)?;
    let v = json!({
        "config": common_json(c, &p),
        "u_H": all.value,
        "u_H_reg": reg.value,
        "minimizer": all.minimizer,
        "minimizer_reg": reg.minimizer,
    });
    let text = match c.format {
        Format::Json => json_text(&v),
        Format::Csv => format!("# config: {}\nu_H,u_H_reg\n{},{}\n", v["config"], all.value, reg.value),
    };
    emit(&c.out, &text)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let c = &a.common;
    let p = load_problem(c)?;
    let text = fs::read_to_string(&a.schedule)
        .map_err(|e| config_error(format!("cannot read schedule {}: {e}", a.schedule.display())))?;
    let schedule = ControlSchedule::from_json_str(&text)?;
    if a.x0.is_empty() {
        return Err(config_error("--x0 is required"));
    }
    let tr = integrate(&p, &a.x0, &schedule, a.horizon, a.dt, IntegrateOptions { snap_tol: a.snap_tol })?;
    let report = cost(&tr);
    let mut config = common_json(c, &p);
    config["x0"] = json!(a.x0);
    config["T"] = json!(a.horizon);
    config["dt"] = json!(a.dt);
    config["snap_tol"] = json!(a.snap_tol);
    config["schedule"] = schedule.to_json_value();
    let summary = json!({
        "total_cost": report.total,
        "tail_bound": report.tail_bound,
        "regular": tr.regular,
        "max_normal_residual_on_H": tr.max_normal_residual_on_h,
        "violations": tr.violations,
        "end_state": tr.end_state(),
    });
    eprintln!("total_cost={} regular={}", report.total, tr.regular);
    let out = match c.format {
        Format::Csv => format!("# config: {config}\n# summary: {summary}\n{}", tr.to_csv()),
        Format::Json => json_text(&json!({ "config": config, "summary": summary, "trajectory": tr })),
    };
    emit(&c.out, &out)
}

fn cmd_approx(a: &ApproxArgs) -> Result<()> {
    let c = &a.common;
    let p = load_problem(c)?;
    if a.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(config_error("every ε must be positive"));
    }
    let deltas: Vec<Option<f64>> = match (a.scheme, a.delta_power, a.delta_eps.is_empty()) {
        (Scheme::Combined, Some(_), false) => return Err(config_error("give either --delta-eps or --delta-power")),
        (Scheme::Combined, Some(pw), true) => a.eps.iter().map(|e| Some(e.powf(pw))).collect(),
        (Scheme::Combined, None, false) if a.delta_eps.len() == a.eps.len() => a.delta_eps.iter().map(|d| Some(*d)).collect(),
        (Scheme::Combined, None, false) => return Err(config_error("--delta-eps needs one value per ε")),
        (Scheme::Combined, None, true) => return Err(config_error("the combined scheme needs --delta-eps or --delta-power")),
        (_, None, true) => vec![None; a.eps.len()],
        _ => return Err(config_error("--delta-eps/--delta-power only apply to the combined scheme")),
    };
    let grid = Grid1D::symmetric(c.xmax, c.h)?;

    // Reference fields: closed forms for builtins, the assembled structure otherwise.
    let reference: Box<dyn Fn(ClosedFormKind, f64) -> hjb_core::Result<f64> + Sync> = match p.builtin() {
        Some(b) => {
            let l = p.lambda();
            Box::new(move |k, x| closed_form(b, l, k, x))
        }
        None => {
            let s = assemble_structure(&p, &grid, FarPolicy::StateConstraint, &SolverOptions::default())?;
            Box::new(move |k, x| match k {
                ClosedFormKind::UMinus => s.u_minus.eval(x),
                _ => s.u_plus.eval(x),
            })
        }
    };
    let bc_choice = a.bc.unwrap_or(if p.builtin().is_some() { BcChoice::ClosedForm } else { BcChoice::Extrapolate });
    let bc = |kind: ClosedFormKind| -> Result<SchemeBoundary> {
        match (bc_choice, p.builtin()) {
            (BcChoice::Extrapolate, _) => Ok(SchemeBoundary::Extrapolate),
            (BcChoice::ClosedForm, Some(b)) => Ok(closed_form_boundary(b, p.lambda(), kind, c.xmax)?),
            (BcChoice::ClosedForm, None) => Err(config_error("closed-form boundary data needs a builtin problem")),
        }
    };
    let bc = match a.scheme {
        Scheme::Filippov => bc(ClosedFormKind::UMinus)?,
        Scheme::Viscous => bc(ClosedFormKind::UPlus)?,
        Scheme::Combined => {
            if bc_choice == BcChoice::ClosedForm {
                eprintln!("note: the combined scheme has no catalogued limit; using extrapolated boundary data");
            }
            SchemeBoundary::Extrapolate
        }
    };

    let run = |(eps, delta): (f64, Option<f64>)| -> Result<SweepRow> {
        let prof = MixingProfile::new(a.profile, eps)?;
        let f = match a.scheme {
            Scheme::Filippov => solve_filippov(&p, &prof, &grid, bc, &SolverOptions::default())?,
            Scheme::Viscous => solve_viscous(&p, eps, &grid, bc, &default_scheme_solver())?,
            Scheme::Combined => solve_combined(&p, &prof, delta.unwrap_or(0.0), &grid, bc, &default_scheme_solver())?,
        };
        Ok(SweepRow::from_field(
            &f,
            delta,
            eps,
            |x| reference(ClosedFormKind::UMinus, x),
            |x| reference(ClosedFormKind::UPlus, x),
        )?)
    };
    let jobs: Vec<(f64, Option<f64>)> = a.eps.iter().copied().zip(deltas).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    let rows: Vec<SweepRow> = pool.install(|| jobs.into_par_iter().map(run).collect::<Result<_>>())?;

    let mut config = common_json(c, &p);
    config["scheme"] = json!(a.scheme);
    config["profile"] = json!(a.profile);
    config["boundary"] = json!(bc);
    let text = match c.format {
        Format::Json => json_text(&json!({ "config": config, "rows": rows })),
        Format::Csv => {
            let mut s = format!("# config: {config}\neps,delta_eps,sup_err_Uminus,sup_err_Uplus,iters\n");
            for r in &rows {
                let d = r.delta_eps.map(|d| d.to_string()).unwrap_or_default();
                s.push_str(&format!("{},{d},{},{},{}\n", r.eps, r.sup_err_uminus, r.sup_err_uplus, r.iters));
            }
            s
        }
    };
    emit(&c.out, &text)
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let cfg = SuiteConfig { h: a.h, xmax: a.xmax, control_resolution: a.control_resolution };
    let report = run_suite(a.suite, &cfg)?;
    for c in &report.checks {
        let status = match (c.pass, c.exploratory) {
            (true, _) => "PASS",
            (false, true) => "FAIL (exploratory)",
            (false, false) => "FAIL",
        };
        eprintln!("{status} {}: {}", c.name, c.detail);
    }
    emit(&a.out, &json_text(&serde_json::to_value(&report)?))?;
    Ok(report.pass)
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| true),
        Command::Interface(c) => cmd_interface(c).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Approx(a) => cmd_approx(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<hjb_core::Error>() {
        Some(e) if e.is_numerical() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
