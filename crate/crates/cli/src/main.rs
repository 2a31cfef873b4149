mod experiments;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use kolmolab::model::catalog::{self, CatalogModel, ModelKind};
use kolmolab::report::{Tally, SCHEMA_VERSION};
use kolmolab::{ProblemSpec, Scheme, SimConfig, Verdict};
use serde_json::json;

use experiments::Context;
use scenario::{Experiment, Kind, Scenario};

/// Numerical laboratory for nonautonomous Kolmogorov operators.
#[derive(Debug, Parser)]
#[command(name = "kolmolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags overriding the `[sim]` and `[output]` sections.
#[derive(Debug, Args)]
struct Overrides {
    /// Master RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo paths per point.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Euler step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Output root; results go to `<out>/<scenario>/`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Burn-in accuracy for sampled measures.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check symmetry, ellipticity and dissipativity on a grid.
    Audit(Target),
    /// Simulate paths and audit the Jacobian bound.
    Simulate(Target),
    /// Evolution measures and their invariance.
    Measure(Target),
    /// Log-Sobolev deficits over a random battery.
    Lsi(Target),
    /// Poincaré quotients over a random battery.
    Poincare(Target),
    /// Hypercontractivity checks and curves.
    Hyper(Target),
    /// Decay-rate fits for values and gradients.
    Decay(Target),
    /// Convergence to the limit measure (OU models only).
    Limit(Target),
    /// Every experiment declared in the scenario, in file order.
    Run(Target),
    /// Print the model catalog.
    ListCatalog,
}

#[derive(Debug, Args)]
struct Target {
    /// Scenario file.
    scenario: PathBuf,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let (kind, target) = match &cli.command {
        Command::ListCatalog => {
            list_catalog();
            return ExitCode::SUCCESS;
        }
        Command::Run(t) => (None, t),
        Command::Audit(t) => (Some(Kind::Audit), t),
        Command::Simulate(t) => (Some(Kind::Simulate), t),
        Command::Measure(t) => (Some(Kind::Measure), t),
        Command::Lsi(t) => (Some(Kind::Lsi), t),
        Command::Poincare(t) => (Some(Kind::Poincare), t),
        Command::Hyper(t) => (Some(Kind::Hyper), t),
        Command::Decay(t) => (Some(Kind::Decay), t),
        Command::Limit(t) => (Some(Kind::Limit), t),
    };
    match prepare(&target.scenario, kind, &cli.overrides) {
        Ok(plan) => execute(plan),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("KOLMOLAB_THREADS") else { return Ok(()) };
    let n: usize = raw.parse().map_err(|_| format!("KOLMOLAB_THREADS=`{raw}` is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn list_catalog() {
    for e in catalog::catalog() {
        let kind = match e.kind {
            ModelKind::Ou => "ou",
            ModelKind::General => "general",
        };
        let params: Vec<String> = e.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<20} {:<8} {}", e.name, kind, e.summary);
        println!("{:<20} {:<8} params: {} interval_start=0", "", "", params.join(" "));
    }
}

struct Plan {
    scenario: Scenario,
    ctx: Context,
    experiments: Vec<Experiment>,
    dir: PathBuf,
}

fn prepare(path: &std::path::Path, kind: Option<Kind>, flags: &Overrides) -> Result<Plan, String> {
    let scenario = scenario::load(path).map_err(|e| e.to_string())?;
    let model = build_model(&scenario)?;
    let sim = &scenario.sim;
    let cfg = SimConfig {
        dt: flags.dt.unwrap_or(sim.dt),
        n_paths: flags.paths.unwrap_or(sim.paths),
        seed: flags.seed.unwrap_or(sim.seed),
        scheme: if sim.scheme == "semi_implicit" { Scheme::SemiImplicitDrift } else { Scheme::Euler },
    };
    cfg.validate(&model.spec).map_err(|e| e.to_string())?;
    let tol = flags.tol.unwrap_or(sim.tol);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(format!("tol = {tol} must lie in (0, 1)"));
    }

    let experiments: Vec<Experiment> = match kind {
        None if scenario.experiments.is_empty() => return Err(format!("{}: no [[experiment]] declared", path.display())),
        None => scenario.experiments.clone(),
        Some(k) => {
            let chosen: Vec<_> = scenario.experiments.iter().filter(|e| e.kind == k).cloned().collect();
            if chosen.is_empty() {
                vec![Experiment::defaults(k)]
            } else {
                chosen
            }
        }
    };
    let start = model.spec.interval_start;
    for e in &experiments {
        if e.kind == Kind::Limit && model.ou.is_none() {
            return Err(format!("experiment `{}`: limit needs an OU catalog entry", e.id));
        }
        for t in experiments::times_used(e, start) {
            model.spec.check_time(t).map_err(|err| format!("experiment `{}`: {err}", e.id))?;
        }
    }

    let dir = flags.out.clone().unwrap_or_else(|| scenario.output.dir.clone()).join(&scenario.name);
    let ctx = Context { scenario: scenario.name.clone(), model, cfg, tol };
    Ok(Plan { scenario, ctx, experiments, dir })
}

fn build_model(s: &Scenario) -> Result<CatalogModel, String> {
    let m = &s.model;
    let mut model = catalog::build(&m.catalog, m.dim, &m.params).map_err(|e| e.to_string())?;
    if let Some(kind) = &m.kind {
        let actual = if model.ou.is_some() { "ou" } else { "general" };
        if kind != actual {
            return Err(format!("model `{}` is {actual}, not {kind}", m.catalog));
        }
    }
    if let Some(c) = s.constants {
        let old = &model.spec;
        let mut spec = ProblemSpec::new(
            old.name.clone(),
            old.dim,
            old.interval_start,
            old.diffusion.clone(),
            old.drift.clone(),
            c.eta0,
            c.lambda,
            c.r0,
        )
        .map_err(|e| e.to_string())?;
        if let Some(cert) = old.certificate() {
            spec = spec.with_certificate(cert.clone());
        }
        model.spec = spec;
    }
    Ok(model)
}

fn execute(plan: Plan) -> ExitCode {
    let started = SystemTime::now();
    let clock = Instant::now();
    let Plan { scenario, ctx, experiments, dir } = plan;
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return ExitCode::from(EXIT_FAIL);
    }
    let mut entries = Vec::new();
    let mut failed = false;
    for e in &experiments {
        let result = experiments::run(&ctx, e);
        let entry = match result {
            Ok(out) => {
                let tally = Tally::of(&out.rows);
                let write = output::write_csv(&dir.join(format!("{}.csv", e.id)), &out.rows)
                    .and_then(|_| out.files.iter().try_for_each(|(name, body)| output::write_atomic(&dir.join(name), body.as_bytes())));
                if let Err(err) = write {
                    eprintln!("error: experiment `{}`: {err}", e.id);
                    return ExitCode::from(EXIT_FAIL);
                }
                let verdict = Verdict::from_pass(tally.all_pass());
                println!(
                    "{:<16} {:<9} {:<7} pass={} fail={} skipped={} refused={}",
                    e.id,
                    e.kind.as_str(),
                    verdict,
                    tally.pass,
                    tally.fail,
                    tally.skipped,
                    tally.refused
                );
                for r in out.rows.iter().filter(|r| r.verdict.is_failure()) {
                    eprintln!("  {}: {} = {} exceeds tolerance {}", e.id, r.op, r.value, r.tolerance);
                }
                failed |= !tally.all_pass();
                json!({"id": e.id, "kind": e.kind.as_str(), "verdict": verdict, "rows": out.rows.len(), "tally": tally, "error": null})
            }
            Err(err) => {
                eprintln!("error: experiment `{}`: {err}", e.id);
                failed = true;
                json!({"id": e.id, "kind": e.kind.as_str(), "verdict": Verdict::Fail, "rows": 0, "tally": Tally::default(), "error": err.to_string()})
            }
        };
        entries.push(entry);
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name,
        "seed": ctx.cfg.seed,
        "paths": ctx.cfg.n_paths,
        "dt": ctx.cfg.dt,
        "verdict": Verdict::from_pass(!failed),
        "experiments": entries,
    });
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let metadata = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": secs(started),
        "finished_unix": secs(SystemTime::now()),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    let written =
        output::write_json(&dir.join("summary.json"), &summary).and_then(|_| output::write_json(&dir.join("metadata.json"), &metadata));
    if let Err(err) = written {
        eprintln!("error: {err}");
        return ExitCode::from(EXIT_FAIL);
    }
    if failed {
        ExitCode::from(EXIT_FAIL)
    } else {
        ExitCode::SUCCESS
    }
}
