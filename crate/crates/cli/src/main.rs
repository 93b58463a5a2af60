use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use damsim_core::io::{self, LoadError, LoadedScenario, Table};
use damsim_core::lp;
use damsim_core::market::{self, assemble_lp};
use damsim_core::regulation::{self, Decision};
use damsim_core::strategy::{self, DistortionSpec, GridSpec, Regime};
use damsim_core::verify::{self, ClaimedParams};
use damsim_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

/// Day-ahead market simulator with a regulated settlement for one firm.
#[derive(Parser, Debug)]
#[command(name = "damsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for report tables.
    #[arg(long, default_value = "damsim-out")]
    out: PathBuf,
    /// Seed for sampled checks.
    #[arg(long, env = "SIMSEED", default_value_t = verify::DEFAULT_SEED)]
    seed: u64,
}

/// Distortion of the firm's submitted offer relative to its true data.
#[derive(Args, Debug, Clone)]
struct OfferArgs {
    /// Price multiplier.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    alpha: f64,
    /// Price adder, applied after the multiplier.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    /// Fraction of p_max withheld.
    #[arg(long, default_value_t = 0.0)]
    withhold: f64,
    /// Ramp-limit multiplier.
    #[arg(long, default_value_t = 1.0)]
    ramp_scale: f64,
}

impl OfferArgs {
    fn spec(&self) -> DistortionSpec {
        DistortionSpec {
            price_scale: self.alpha,
            price_add: self.beta,
            withhold: self.withhold,
            ramp_scale: self.ramp_scale,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    None,
    Standard,
    Proposed,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::None => Regime::None,
            RegimeArg::Standard => Regime::Standard,
            RegimeArg::Proposed => Regime::Proposed,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clear the market and write prices, dispatch and settlement.
    Clear {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        offer: OfferArgs,
    },
    /// Run both clearing legs and the regulated settlement.
    Regulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        offer: OfferArgs,
        /// Settle at plain LMPs instead of applying the rule.
        #[arg(long)]
        waive: bool,
    },
    /// Evaluate the firm's profit over a grid of offer distortions.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid overrides, e.g. `alpha=0.5,1,2;withhold=0`. Repeatable.
        #[arg(long)]
        grid: Vec<String>,
        /// Regime whose argmax is flagged in the table.
        #[arg(long, value_enum, default_value = "proposed")]
        regime: RegimeArg,
    },
    /// Run every property check on the scenario.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Grid overrides for the dominance and alignment checks. Repeatable.
        #[arg(long)]
        grid: Vec<String>,
        /// Samples per claimed parameter set.
        #[arg(long, default_value_t = verify::DEFAULT_SAMPLES)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<LoadError>().is_some() {
        return EXIT_INPUT;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. } | Error::Unbounded { .. } | Error::Disconnected { .. }) => EXIT_INFEASIBLE,
        Some(
            Error::InvalidScenario(_)
            | Error::OfferMismatch(_)
            | Error::OutsideTrueEnvelope { .. }
            | Error::OutsideClaimedEnvelope(_)
            | Error::InvalidDistortion(_),
        ) => EXIT_INPUT,
        _ => EXIT_USAGE,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Clear { common, offer } => cmd_clear(&common, &offer),
        Command::Regulate { common, offer, waive } => cmd_regulate(&common, &offer, waive),
        Command::Sweep { common, grid, regime } => cmd_sweep(&common, &grid, regime.into()),
        Command::Verify { common, grid, samples } => cmd_verify(&common, &grid, samples),
    }
}

fn load(common: &Common) -> anyhow::Result<LoadedScenario> {
    Ok(io::load_scenario(&common.scenario)?)
}

fn write_all(dir: &Path, tables: &[Table]) -> anyhow::Result<()> {
    for t in tables {
        let path = t.write(dir).with_context(|| format!("writing report to {}", dir.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_clear(common: &Common, offer: &OfferArgs) -> anyhow::Result<u8> {
    let loaded = load(common)?;
    let s = &loaded.scenario;
    let submitted = strategy::apply_distortion(s, &offer.spec())?;
    let result = market::clear(s, &submitted)?;
    let settlement = market::settle(s, &result);
    write_all(
        &common.out,
        &[
            io::lmp_table(s, &result),
            io::dispatch_table(s, &result),
            io::settlement_table(s, &settlement),
            io::summary_table(&result),
        ],
    )?;
    println!("objective {}", io::fmt_num(result.objective));
    Ok(0)
}

fn cmd_regulate(common: &Common, offer: &OfferArgs, waive: bool) -> anyhow::Result<u8> {
    let loaded = load(common)?;
    let s = &loaded.scenario;
    let submitted = strategy::apply_distortion(s, &offer.spec())?;
    let decision = if waive { Decision::Waive } else { Decision::Apply };
    let outcome = regulation::run_regulation_with(s, &submitted, &loaded.estimate, decision)?;
    let settlement = regulation::settle_outcome(s, &outcome);
    write_all(
        &common.out,
        &[
            io::outcome_table(&outcome),
            io::allocation_table(s, &outcome),
            io::lmp_table(s, &outcome.base_run),
            io::dispatch_table(s, &outcome.base_run),
            io::settlement_table(s, &settlement),
        ],
    )?;
    println!(
        "regulated revenue {}, uplift {}",
        io::fmt_num(outcome.regulated_revenue),
        io::fmt_num(outcome.uplift)
    );
    Ok(0)
}

/// Applies `key=v1,v2;key=...` overrides to `grid`.
fn apply_grid_overrides(grid: &mut GridSpec, overrides: &[String]) -> anyhow::Result<()> {
    for spec in overrides {
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .with_context(|| format!("grid override {part:?} is not key=values"))?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("grid override {part:?} has a non-numeric value"))?;
            let target = match key.trim() {
                "alpha" => &mut grid.price_scales,
                "beta" => &mut grid.price_adds,
                "withhold" => &mut grid.withholds,
                "ramp_scale" => &mut grid.ramp_scales,
                other => bail!("unknown grid key {other:?}; expected alpha, beta, withhold or ramp_scale"),
            };
            *target = values;
        }
    }
    Ok(())
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn grid_for(loaded: &LoadedScenario, overrides: &[String]) -> anyhow::Result<GridSpec> {
    let mut grid = loaded.grid.clone();
    apply_grid_overrides(&mut grid, overrides).map_err(|e| UsageError(format!("{e:#}")))?;
    if !grid.points().iter().any(DistortionSpec::is_truthful) {
        return Err(UsageError("grid must contain the truthful point".into()).into());
    }
    Ok(grid)
}

fn cmd_sweep(common: &Common, overrides: &[String], regime: Regime) -> anyhow::Result<u8> {
    let loaded = load(common)?;
    let grid = grid_for(&loaded, overrides)?;
    let result = strategy::best_response_sweep(&loaded.scenario, &loaded.estimate, &grid)?;
    write_all(&common.out, &[io::sweep_table(&result, regime), io::sweep_summary(&result)])?;
    let a = result.argmax(regime);
    println!(
        "{} points; best profit {} at {:?}; truthful is argmax: {}",
        result.points.len(),
        io::fmt_num(a.best),
        a.ties,
        a.ties.contains(&result.truthful_index)
    );
    Ok(0)
}

struct Checks {
    table: Table,
    failed: usize,
}

impl Checks {
    fn new() -> Self {
        Self {
            table: Table {
                name: "verify".into(),
                header: ["check", "value", "tolerance", "status"].map(String::from).to_vec(),
                rows: Vec::new(),
            },
            failed: 0,
        }
    }

    fn record(&mut self, name: &str, value: f64, tol: f64, pass: bool) {
        self.push(name, io::fmt_num(value), format!("{tol:e}"), if pass { "pass" } else { "fail" });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.push(name, String::new(), String::new(), &format!("not applicable: {why}"));
    }

    fn push(&mut self, name: &str, value: String, tol: String, status: &str) {
        if status == "fail" {
            self.failed += 1;
        }
        println!("{name}: {status} {value}");
        self.table.rows.push(vec![name.into(), value, tol, status.into()]);
    }
}

fn cmd_verify(common: &Common, overrides: &[String], samples: usize) -> anyhow::Result<u8> {
    let loaded = load(common)?;
    let s = &loaded.scenario;
    let grid = grid_for(&loaded, overrides)?;
    let mut checks = Checks::new();
    let tol = 1e-6;

    // Clearing: KKT and the welfare decomposition.
    let truthful = damsim_core::FirmOffer::truthful(s);
    let (program, _) = assemble_lp(s, &truthful)?;
    let sol = lp::solve(&program)?;
    let kkt = lp::verify_kkt(&program, &sol);
    checks.record("clearing_kkt", kkt.duality_gap, lp::KKT_TOL, kkt.pass);
    let base = market::clear(s, &truthful)?;
    let decomposition = base.objective - (base.u_other - base.firm_offered_cost);
    checks.record("welfare_decomposition", decomposition, tol, decomposition.abs() <= tol);
    let settlement = market::settle(s, &base);
    checks.record(
        "revenue_adequacy",
        settlement.congestion_rent,
        tol,
        settlement.congestion_rent >= -tol,
    );
    let firm_x = base.dispatch.firm_schedule(s);
    let restricted = market::restricted_clear(s, &truthful, &firm_x)?;
    let gap = restricted.u_other - base.u_other;
    checks.record("restricted_consistency", gap, tol, gap.abs() <= tol);

    // Regulated settlement with the document's estimate.
    let outcome = regulation::run_regulation(s, &truthful, &loaded.estimate)?;
    let residual = verify::money_conservation_check(s, &outcome, &regulation::settle_outcome(s, &outcome));
    checks.record("money_conservation", residual, tol, residual.abs() <= tol);
    let report = regulation::profit_report(&outcome);
    checks.record("profit_identity", report.identity_residual, tol, report.identity_residual.abs() <= tol);
    checks.record("welfare_loss_sign", report.delta_u, tol, report.delta_u <= tol);

    // Incentives over the grid.
    let sweep = strategy::best_response_sweep(s, &loaded.estimate, &grid)?;
    let proposed = sweep.argmax(Regime::Proposed);
    let excess = proposed.best - sweep.truthful().profit_proposed;
    checks.record("truthful_dominance", excess, tol, excess <= tol);
    let aligned: Vec<f64> = sweep
        .evaluated()
        .map(|(_, v)| v.profit_proposed + v.deadweight_loss)
        .collect();
    let spread = aligned.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - aligned.iter().cloned().fold(f64::INFINITY, f64::min);
    checks.record("alignment_constant", spread, tol, spread <= tol);

    // Envelope along each firm coordinate, moving down from the cleared schedule.
    for (id, hours) in &firm_x.units {
        for (h, &x0) in hours.iter().enumerate() {
            let name = format!("envelope_{id}_h{h}");
            let p_min = s.unit(id).map(|u| u.true_params.p_min).unwrap_or(0.0);
            let room = (x0 - p_min - 1.0).min(10.0);
            if room < 1.0 {
                checks.skip(&name, "no interior room below the cleared output");
                continue;
            }
            let mut start = firm_x.clone();
            start.units.get_mut(id).expect("unit")[h] = x0 - 0.5 - 0.005;
            let mut end = start.clone();
            end.units.get_mut(id).expect("unit")[h] = x0 - 0.5 - room;
            let r = verify::envelope_check(s, &start, &end, 20);
            if r.applicable {
                checks.record(&name, r.residual, r.tolerance, r.pass);
            } else {
                checks.skip(&name, r.failure.as_deref().unwrap_or("path infeasible"));
            }
        }
    }

    // Feasible-set projections: the truth and a halved p_max claim.
    let truth = verify::true_params(s);
    let halved: ClaimedParams = truth
        .iter()
        .map(|(id, p)| {
            let mut q = *p;
            q.p_max = (p.p_min + p.p_max) / 2.0;
            (id.clone(), q)
        })
        .collect();
    let claimed = vec![truth, halved];
    let projection = verify::projection_check(s, &claimed, samples, common.seed)?;
    checks.record(
        "projection_violations",
        projection.violations.len() as f64,
        0.0,
        projection.pass(),
    );
    let coverage = projection.union_coverage;
    if coverage.is_nan() {
        checks.skip("projection_union_coverage", "no truth-feasible samples");
    } else {
        checks.record("projection_union_coverage", coverage, 0.0, coverage == 1.0);
    }

    write_all(&common.out, &[checks.table.clone()])?;
    if checks.failed > 0 {
        eprintln!("{} check(s) failed", checks.failed);
        return Ok(EXIT_PROPERTY);
    }
    Ok(0)
}
