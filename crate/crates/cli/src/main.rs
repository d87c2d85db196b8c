//! `robust-newsvendor`: command-line front end for the core crate.
//!
//! Exit status 2 means the arguments were rejected before any work was done;
//! 1 means a computation refused to run (size guards, formula regimes).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use newsvendor_core::asymptotics::{self, LimitParams};
use newsvendor_core::dp_oracle::{verify_against_closed_form, Grid};
use newsvendor_core::independent_model::{finite_ratio, ind_policy_value, martingale_full_inventory_value};
use newsvendor_core::worst_case_sim::{sample_trajectories, write_trajectories_csv};
use newsvendor_core::{
    breakpoint_closure_grid, convergence_report, enumerate_exact, full_inventory_value, large_b_ratio_limit,
    ratio_limit, simulate, ClosedForm, ProblemInstance, Rational,
};
use serde_json::{json, Value};

const SCHEMA: &str = "robust-newsvendor/1";

#[derive(Parser, Debug)]
#[command(name = "robust-newsvendor", version, about = "Minimax multi-period newsvendor under martingale demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form order-up-to level and optimal value.
    Policy(Common),
    /// Compare the closed form with the exact DP oracle.
    Verify {
        #[command(flatten)]
        common: Common,
        /// `closure` or `uniform:N`.
        #[arg(long, default_value = "closure")]
        grid: String,
    },
    /// Monte Carlo cost of the optimal policy against the worst-case demand.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Every worst-case demand path with its exact probability and cost.
    Enumerate(Common),
    /// Martingale against independent demand.
    Compare(Common),
    /// Distance between finite horizons and the large-horizon limit.
    Asymptotics {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, strictly ascending.
        #[arg(long, value_delimiter = ',', default_value = "100,400,1600")]
        horizons: Vec<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_parser = rational)]
    mu: Rational,
    #[arg(long, value_parser = rational, default_value = "1")]
    cap: Rational,
    #[arg(long, value_parser = rational)]
    b: Rational,
    #[arg(long)]
    horizon: usize,
    #[arg(long, value_parser = rational, default_value = "0")]
    x0: Rational,
    /// Per-unit holding cost. The model is solved with `b / h` and costs are
    /// multiplied back by `h`.
    #[arg(long, value_parser = rational)]
    holding: Option<Rational>,
    /// Secondary output file (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn rational(s: &str) -> Result<Rational, String> {
    s.parse().map_err(|e: newsvendor_core::Error| e.to_string())
}

enum GridSpec {
    Closure,
    Uniform(usize),
}

impl GridSpec {
    fn parse(s: &str) -> anyhow::Result<Self> {
        match s.split_once(':') {
            None if s == "closure" => Ok(GridSpec::Closure),
            Some(("uniform", n)) => {
                let n: usize = n.parse().with_context(|| format!("grid size {n:?} is not a positive integer"))?;
                if n == 0 {
                    bail!("grid size must be at least 1");
                }
                Ok(GridSpec::Uniform(n))
            }
            _ => bail!("--grid must be `closure` or `uniform:N`, got {s:?}"),
        }
    }

    fn build(&self, inst: &ProblemInstance) -> newsvendor_core::Result<Grid> {
        match self {
            GridSpec::Closure => breakpoint_closure_grid(inst),
            GridSpec::Uniform(n) => Grid::uniform(inst, *n),
        }
    }

    fn label(&self) -> String {
        match self {
            GridSpec::Closure => "closure".into(),
            GridSpec::Uniform(n) => format!("uniform:{n}"),
        }
    }
}

/// Multiplies costs back by the holding cost when one was given.
struct Scale(Option<Rational>);

impl Scale {
    fn r(&self, x: &Rational) -> Rational {
        match &self.0 {
            Some(h) => h * x,
            None => x.clone(),
        }
    }

    fn f(&self, x: f64) -> f64 {
        match &self.0 {
            Some(h) => h.to_f64() * x,
            None => x,
        }
    }
}

struct Resolved {
    inst: ProblemInstance,
    scale: Scale,
    out: Option<PathBuf>,
    format: Format,
}

fn resolve(c: Common) -> anyhow::Result<Resolved> {
    let b = match &c.holding {
        Some(h) if !h.is_positive() => bail!("holding cost must be positive, got {h}"),
        Some(h) => &c.b / h,
        None => c.b.clone(),
    };
    let inst = ProblemInstance::new(c.mu, c.cap, b, c.horizon, c.x0)?;
    Ok(Resolved { inst, scale: Scale(c.holding), out: c.out, format: c.format })
}

fn envelope(command: &str, r: &Resolved, report: Value) -> Value {
    let mut v = json!({
        "schema": SCHEMA,
        "command": command,
        "instance": r.inst,
        "report": report,
    });
    if let Some(h) = &r.scale.0 {
        v["holding"] = json!(h);
    }
    v
}

fn emit_json(v: &Value) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn out_file(path: &PathBuf) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn no_csv(r: &Resolved, command: &str) -> anyhow::Result<()> {
    if r.format == Format::Csv {
        bail!("{command} has no CSV form; use --format json");
    }
    Ok(())
}

fn policy(r: Resolved) -> anyhow::Result<()> {
    let mut rep = ClosedForm::new(&r.inst).value();
    rep.opt = r.scale.r(&rep.opt);
    rep.value_at_x0 = r.scale.r(&rep.value_at_x0);
    emit_json(&envelope("policy", &r, serde_json::to_value(rep)?))
}

fn verify(r: Resolved, grid: &GridSpec) -> anyhow::Result<()> {
    let g = grid.build(&r.inst)?;
    let mut rep = verify_against_closed_form(&r.inst, &g)?;
    rep.oracle_value = r.scale.r(&rep.oracle_value);
    rep.closed_form_value = r.scale.r(&rep.closed_form_value);
    rep.delta = r.scale.r(&rep.delta);
    for s in &mut rep.stages {
        s.max_abs_delta = r.scale.r(&s.max_abs_delta);
    }
    let mut report = serde_json::to_value(&rep)?;
    report["grid"] = json!(grid.label());
    // only the closure grid is guaranteed to reach the closed-form value
    report["lower_bound_only"] = json!(matches!(grid, GridSpec::Uniform(_)));
    emit_json(&envelope("verify", &r, report))
}

fn simulate_cmd(r: Resolved, runs: usize, seed: u64) -> anyhow::Result<()> {
    if r.format == Format::Csv || r.out.is_some() {
        let mut paths = sample_trajectories(&r.inst, runs, seed);
        for p in &mut paths {
            for s in &mut p.steps {
                s.cost = r.scale.r(&s.cost);
            }
        }
        match &r.out {
            Some(path) => write_trajectories_csv(out_file(path)?, &paths)?,
            None => write_trajectories_csv(io::stdout().lock(), &paths)?,
        }
        if r.format == Format::Csv {
            return Ok(());
        }
    }
    let mut sim = simulate(&r.inst, runs, seed)?;
    sim.cost.mean = r.scale.f(sim.cost.mean);
    sim.cost.stderr = r.scale.f(sim.cost.stderr);
    let mut report = serde_json::to_value(&sim)?;
    report["seed"] = json!(seed);
    report["exact_value"] = json!(r.scale.r(&ClosedForm::new(&r.inst).value().value_at_x0));
    emit_json(&envelope("simulate", &r, report))
}

fn enumerate_cmd(r: Resolved) -> anyhow::Result<()> {
    let mut e = enumerate_exact(&r.inst)?;
    e.expected_cost = r.scale.r(&e.expected_cost);
    for t in &mut e.trajectories {
        for s in &mut t.steps {
            s.cost = r.scale.r(&s.cost);
        }
    }
    if let Some(path) = &r.out {
        write_trajectories_csv(out_file(path)?, &e.trajectories)?;
    }
    match r.format {
        Format::Csv => Ok(write_trajectories_csv(io::stdout().lock(), &e.trajectories)?),
        Format::Json => emit_json(&envelope("enumerate", &r, serde_json::to_value(&e)?)),
    }
}

fn compare(r: Resolved) -> anyhow::Result<()> {
    let inst = &r.inst;
    let mar = ClosedForm::new(inst).value();
    let ind = ind_policy_value(inst);
    let or_reason = |v: Result<Value, String>| v.unwrap_or_else(|e| json!({ "unavailable": e }));
    let ratio = or_reason(finite_ratio(inst).map(|x| json!(x)).map_err(|e| e.to_string()));
    let (lim, large_b) = match LimitParams::from_instance(inst) {
        Ok(p) => (
            or_reason(ratio_limit(&p).map(|x| json!(x)).map_err(|e| e.to_string())),
            or_reason(large_b_ratio_limit(p.gamma()).map(|x| json!(x)).map_err(|e| e.to_string())),
        ),
        Err(e) => (json!({ "unavailable": e.to_string() }), json!({ "unavailable": e.to_string() })),
    };
    let full_ind = or_reason(full_inventory_value(inst).map(|x| json!(r.scale.r(&x))).map_err(|e| e.to_string()));
    let report = json!({
        "opt_mar": r.scale.r(&mar.opt),
        "chi_mar": mar.chi,
        "opt_ind": r.scale.r(&ind.opt_ind),
        "chi_ind": ind.chi_ind,
        "ratio": ratio,
        "ratio_limit": lim,
        "large_b_ratio_limit": large_b,
        "full_inventory": {
            "martingale": r.scale.r(&martingale_full_inventory_value(inst)),
            "independent": full_ind,
        },
    });
    emit_json(&envelope("compare", &r, report))
}

fn asymptotics_cmd(r: Resolved, horizons: &[usize]) -> anyhow::Result<()> {
    let last = *horizons.last().expect("checked in prepare");
    if let Some(path) = &r.out {
        asymptotics::write_paths_csv(out_file(path)?, &r.inst, last)?;
    }
    if r.format == Format::Csv {
        return Ok(asymptotics::write_paths_csv(io::stdout().lock(), &r.inst, last)?);
    }
    let p = LimitParams::from_instance(&r.inst)?;
    let entries = convergence_report(&r.inst, horizons)?;
    let report = json!({
        "limit": p.law(),
        "ratio_limit": ratio_limit(&p).ok(),
        "entries": entries,
    });
    emit_json(&envelope("asymptotics", &r, report))
}

enum Job {
    Policy,
    Verify(GridSpec),
    Simulate(usize, u64),
    Enumerate,
    Compare,
    Asymptotics(Vec<usize>),
}

/// Everything that can be rejected without computing anything.
fn prepare(command: Command) -> anyhow::Result<(Resolved, Job)> {
    Ok(match command {
        Command::Policy(c) => (resolve(c)?, Job::Policy),
        Command::Verify { common, grid } => {
            let g = GridSpec::parse(&grid)?;
            (resolve(common)?, Job::Verify(g))
        }
        Command::Simulate { common, runs, seed } => {
            if runs == 0 {
                bail!("--runs must be at least 1");
            }
            (resolve(common)?, Job::Simulate(runs, seed))
        }
        Command::Enumerate(c) => (resolve(c)?, Job::Enumerate),
        Command::Compare(c) => {
            let r = resolve(c)?;
            no_csv(&r, "compare")?;
            (r, Job::Compare)
        }
        Command::Asymptotics { common, horizons } => {
            if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
                bail!("--horizons must be a non-empty, strictly ascending list");
            }
            (resolve(common)?, Job::Asymptotics(horizons))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (resolved, job) = match prepare(cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let run = match job {
        Job::Policy => policy(resolved),
        Job::Verify(g) => verify(resolved, &g),
        Job::Simulate(runs, seed) => simulate_cmd(resolved, runs, seed),
        Job::Enumerate => enumerate_cmd(resolved),
        Job::Compare => compare(resolved),
        Job::Asymptotics(h) => asymptotics_cmd(resolved, &h),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
