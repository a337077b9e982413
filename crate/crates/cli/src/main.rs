//! Command-line driver: parameter ingestion, reproducible runs and
//! machine-readable outputs.

mod output;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coinfect::simulate::{IntegratorOptions, SampleTimes};
use coinfect::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use output::{csv_preamble, json_document, num, write_file, ResolvedConfig};

#[derive(Parser)]
#[command(
    name = "coinfect",
    version,
    about = "Equilibrium branches of a two-strain coinfection model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derived quantities and the standing-assumption report.
    Derive(Common),
    /// All admissible equilibria at one K, with stability.
    Equilibria(Common),
    /// Scenario tag and predicted switch points.
    Scenario(Common),
    /// Trace the stable equilibrium over a K range (CSV plus events JSON).
    Branch(Common),
    /// Locate the loss of stability of the coexistence point.
    Hopf(Common),
    /// Integrate the system at one K (trajectory CSV).
    Simulate(SimArgs),
    /// Run the invariant suite; exit 1 on any failure.
    Verify(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Parameter file (JSON with the model field names).
    #[arg(long)]
    params: PathBuf,
    /// Carrying capacity; overrides the value in the parameter file.
    #[arg(long = "K")]
    k: Option<f64>,
    /// `min:max:steps`.
    #[arg(long = "K-range", value_parser = parse_range)]
    k_range: Option<(f64, f64, usize)>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    abs_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Integrate the recovered class too.
    #[arg(long = "include-R")]
    include_r: bool,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    t_end: f64,
    /// Uniform output samples; 0 keeps every accepted step.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// `S,I1,I2,I12[,R]`; defaults to the stable equilibrium with a seeded
    /// 1% perturbation.
    #[arg(long, value_delimiter = ',')]
    initial: Option<Vec<f64>>,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(format!("expected min:max:steps, got `{s}`"));
    };
    let lo: f64 = a.parse().map_err(|e| format!("bad min `{a}`: {e}"))?;
    let hi: f64 = b.parse().map_err(|e| format!("bad max `{b}`: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("bad steps `{n}`: {e}"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(format!("need 0 < min < max, got {lo}:{hi}"));
    }
    if n < 2 {
        return Err(format!("need at least 2 steps, got {n}"));
    }
    Ok((lo, hi, n))
}

/// Failure classes and their exit codes.
enum Failure {
    Validation(serde_json::Value),
    Numerical(String),
    Io(String),
    Invariant,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(serde_json::json!({ "error": "validation", "message": e.to_string() }))
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure::Validation(serde_json::json!({ "error": "validation", "message": msg.into() }))
}

fn load_params(path: &Path) -> std::result::Result<ModelParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let p: ModelParams = serde_json::from_str(&text).map_err(|e| {
        Failure::Validation(serde_json::json!({
            "error": "validation",
            "message": e.to_string(),
            "file": path.display().to_string(),
            "line": e.line(),
            "column": e.column(),
        }))
    })?;
    Ok(p)
}

struct Ctx {
    model: Model,
    cfg: ResolvedConfig,
    out: PathBuf,
}

fn setup(command: &'static str, c: &Common) -> std::result::Result<Ctx, Failure> {
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(validation("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    if !(c.rel_tol > 0.0 && c.abs_tol > 0.0) {
        return Err(validation("tolerances must be positive"));
    }
    let mut params = load_params(&c.params)?;
    if let Some(k) = c.k {
        params = params.with_k(k);
    }
    let model = Model::new(params)?;
    Ok(Ctx {
        model,
        cfg: ResolvedConfig {
            command,
            params,
            k: Some(params.k),
            k_range: c.k_range,
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            seed: c.seed,
            include_r: c.include_r,
            t_end: None,
            samples: None,
            initial: None,
        },
        out: c.out.clone(),
    })
}

fn need_range(c: &Common) -> std::result::Result<(f64, f64, usize), Failure> {
    c.k_range
        .ok_or_else(|| validation("--K-range min:max:steps is required"))
}

fn emit(ctx: &Ctx, name: &str, body: &str) -> std::result::Result<(), Failure> {
    let path = write_file(&ctx.out, name, body)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DeriveReport {
    derived: DerivedQuantities,
    identity_residuals: coinfect::model::IdentityResiduals,
    assumptions: Vec<coinfect::model::AssumptionCheck>,
    thresholds: Option<Thresholds>,
}

fn cmd_derive(c: &Common) -> std::result::Result<(), Failure> {
    let ctx = setup("derive", c)?;
    let m = &ctx.model;
    let report = DeriveReport {
        derived: m.derived,
        identity_residuals: m.derived.identity_residuals(&m.params),
        assumptions: validate_standing_assumptions(&m.params, &m.derived),
        thresholds: thresholds(m).ok(),
    };
    emit(&ctx, "derive.json", &json_document(&ctx.cfg, report))
}

#[derive(Serialize)]
struct EquilibriumRow {
    equilibrium: Equilibrium,
    stability: StabilityReport,
    r_limit: f64,
}

fn cmd_equilibria(c: &Common) -> std::result::Result<(), Failure> {
    let ctx = setup("equilibria", c)?;
    let m = &ctx.model;
    let k = m.params.k;
    let rows = all_equilibria(m, k)
        .into_iter()
        .map(|e| {
            Ok(EquilibriumRow {
                stability: classify(m, &e, k)?,
                r_limit: r_limit(m, &e),
                equilibrium: e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(&ctx, "equilibria.json", &json_document(&ctx.cfg, rows))
}

fn cmd_scenario(c: &Common) -> std::result::Result<(), Failure> {
    let ctx = setup("scenario", c)?;
    let s = classify_scenario(&ctx.model)?;
    emit(&ctx, "scenario.json", &json_document(&ctx.cfg, s))
}

#[derive(Serialize)]
struct BranchSidecar<'a> {
    scenario: &'a Option<Scenario>,
    events: &'a [BranchEvent],
    type_chain: Vec<EquilibriumType>,
}

fn cmd_branch(c: &Common) -> std::result::Result<(), Failure> {
    let ctx = setup("branch", c)?;
    let (lo, hi, steps) = need_range(c)?;
    let policy = StepPolicy {
        base: Some((hi - lo) / steps as f64),
        ..StepPolicy::default()
    };
    let b = trace(&ctx.model, lo, hi, &policy)?;
    let mut csv = csv_preamble(&ctx.cfg);
    csv.push_str(
        "K,type,S,I1,I2,I12,re_lambda1,re_lambda2,re_lambda3,re_lambda4,im_lambda1,im_lambda2,im_lambda3,im_lambda4,stable\n",
    );
    for s in &b.samples {
        let x = s.equilibrium.point;
        let ev = s.report.eigenvalues;
        let mut row = vec![
            num(s.k),
            s.equilibrium.kind.to_string(),
            num(x.s),
            num(x.i1),
            num(x.i2),
            num(x.i12),
        ];
        row.extend(ev.iter().map(|z| num(z.re)));
        row.extend(ev.iter().map(|z| num(z.im)));
        row.push(s.stable().to_string());
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    emit(&ctx, "branch.csv", &csv)?;
    let side = BranchSidecar {
        scenario: &b.scenario,
        events: &b.events,
        type_chain: b.type_chain(),
    };
    emit(&ctx, "branch_events.json", &json_document(&ctx.cfg, side))
}

#[derive(Serialize)]
struct HopfResult {
    hopf: Option<branch::HopfPoint>,
    /// Set when no crossing was found: whether some grid point was already
    /// marginal.
    marginal: Option<bool>,
}

fn cmd_hopf(c: &Common) -> std::result::Result<(), Failure> {
    let ctx = setup("hopf", c)?;
    let (lo, hi, steps) = need_range(c)?;
    let res = match hopf_scan(&ctx.model, lo, hi, steps) {
        Ok(h) => HopfResult {
            hopf: Some(h),
            marginal: None,
        },
        Err(Error::NoCrossing { marginal }) => HopfResult {
            hopf: None,
            marginal: Some(marginal),
        },
        Err(e) => return Err(e.into()),
    };
    emit(&ctx, "hopf.json", &json_document(&ctx.cfg, res))
}

fn default_initial(model: &Model, k: f64, seed: u64) -> std::result::Result<State, Failure> {
    let stable = branch::stable_equilibria(model, k)?;
    let base = stable
        .iter()
        .find(|(_, r)| r.is_stable())
        .or(stable.first())
        .map(|(e, _)| e.point)
        .ok_or_else(|| Failure::Numerical(format!("no equilibrium at K = {k}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = [base.s, base.i1, base.i2, base.i12].map(|c| c * (1.0 + 0.01 * rng.random_range(-1.0..=1.0)));
    Ok(State::new(v[0], v[1], v[2], v[3]))
}

fn cmd_simulate(a: &SimArgs) -> std::result::Result<(), Failure> {
    let mut ctx = setup("simulate", &a.common)?;
    if !(a.t_end > 0.0 && a.t_end.is_finite()) {
        return Err(validation("--t-end must be positive and finite"));
    }
    let k = ctx.model.params.k;
    let x0 = match &a.initial {
        Some(v) => {
            if !(4..=5).contains(&v.len()) || v.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(validation("--initial needs 4 or 5 nonnegative values S,I1,I2,I12[,R]"));
            }
            if v[0] <= 0.0 {
                return Err(validation("--initial needs S > 0"));
            }
            let mut s = State::new(v[0], v[1], v[2], v[3]);
            if let Some(&r) = v.get(4) {
                s = s.with_r(r);
            }
            s
        }
        None => default_initial(&ctx.model, k, a.common.seed)?,
    };
    ctx.cfg.t_end = Some(a.t_end);
    ctx.cfg.samples = Some(a.samples);
    ctx.cfg.initial = Some(x0.to_array5());
    let opts = IntegratorOptions {
        rel_tol: a.common.rel_tol,
        abs_tol: a.common.abs_tol,
        include_r: a.common.include_r,
        samples: if a.samples == 0 {
            SampleTimes::Steps
        } else {
            SampleTimes::Uniform(a.samples)
        },
        ..IntegratorOptions::default()
    };
    let tr = integrate(&ctx.model, k, &x0, a.t_end, &opts)?;
    let mut csv = csv_preamble(&ctx.cfg);
    csv.push_str("t,S,I1,I2,I12,R\n");
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let row = [*t, x.s, x.i1, x.i2, x.i12, x.r].map(num);
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    emit(&ctx, "trajectory.csv", &csv)
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    checks: Vec<verify::Check>,
}

fn cmd_verify(c: &Common) -> std::result::Result<(), Failure> {
    let ctx = setup("verify", c)?;
    let (lo, hi, steps) = need_range(c)?;
    let checks = verify::run(&ctx.model, lo, hi, steps, c.seed)?;
    let passed = checks.iter().all(|c| c.passed);
    for ch in &checks {
        eprintln!("{} {}: {}", if ch.passed { "PASS" } else { "FAIL" }, ch.name, ch.detail);
    }
    emit(
        &ctx,
        "verify.json",
        &json_document(&ctx.cfg, VerifyReport { passed, checks }),
    )?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Invariant)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Derive(c) => cmd_derive(c),
        Command::Equilibria(c) => cmd_equilibria(c),
        Command::Scenario(c) => cmd_scenario(c),
        Command::Branch(c) => cmd_branch(c),
        Command::Hopf(c) => cmd_hopf(c),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(c) => cmd_verify(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(diag)) => {
            eprintln!("{diag}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("{}", serde_json::json!({ "error": "numerical", "message": msg }));
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("{}", serde_json::json!({ "error": "io", "message": msg }));
            ExitCode::from(4)
        }
        Err(Failure::Invariant) => ExitCode::from(1),
    }
}
