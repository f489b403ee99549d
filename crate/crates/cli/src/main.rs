//! Command-line front end: exact policy solving, causal-model recovery from
//! a simulated regret-bounded oracle, synthetic environment generation, and
//! the error-vs-regret experiment sweep.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad flags, unreadable
//! or invalid inputs, rejected parameter combinations), 1 on runtime failures.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use regret2cause_core::{
    generate_batch, make_delta_oracle, reconstruct, run_sweep, Cid, EstimationMode,
    GeneratorConfig, GraphFamily, InterventionSpec, SweepConfig,
};

// ── Argument surface ────────────────────────────────────────────────────────

#[derive(Parser)]
#[command(
    name = "regret2cause",
    about = "Causal model recovery from regret-bounded policy oracles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the exact optimal policy of an influence diagram under a shift.
    Solve {
        /// Influence-diagram JSON (variables, edges, cpds, decision, utility).
        #[arg(long)]
        model: PathBuf,
        /// Intervention JSON ({"type":"hard","variable":…,"value":…}, local,
        /// mixture, composite, or null).
        #[arg(long)]
        shift: PathBuf,
        /// Output path for the policy JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct graph, CPTs, and per-parameter bounds from the policies of
    /// a regret-bounded oracle simulated on the given diagram.
    Discover {
        /// Influence-diagram JSON used to simulate the oracle; the
        /// reconstruction itself only consumes the diagram's public part
        /// (variables, decision wiring, utility) plus oracle answers.
        #[arg(long)]
        cid: PathBuf,
        /// Oracle regret bound (0 plays exactly optimally).
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// Oracle queries per switch-point estimation.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Switch-point estimation mode.
        #[arg(long, value_enum, default_value_t = ModeArg::Mc)]
        mode: ModeArg,
        /// Seed for the oracle's tie-breaking and the estimation streams.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output path for the reconstruction JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic environments (one influence-diagram JSON each plus
    /// a manifest).
    Gen {
        /// Chance-graph family.
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Number of environments.
        #[arg(long)]
        n: usize,
        /// Master seed; environment i uses an independent derived stream.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Chance-variable count (random-dag family).
        #[arg(long, default_value_t = 4)]
        n_chance: usize,
        /// Per-variable cardinalities, comma separated (random-dag family;
        /// defaults to all binary).
        #[arg(long, value_delimiter = ',')]
        cards: Option<Vec<usize>>,
        /// Decision cardinality.
        #[arg(long, default_value_t = 2)]
        decision_card: usize,
        /// Rejection margin: minimum per-state decision gap and minimum
        /// per-edge CPD response.
        #[arg(long, default_value_t = 0.01)]
        margin: f64,
    },
    /// Run the error-vs-regret sweep and write the CSV report (plus a JSON
    /// mirror with per-environment detail).
    Sweep {
        /// Normalized regret bounds, comma separated (e.g. 0,0.05,0.1).
        #[arg(long, value_delimiter = ',', required = true)]
        bounds: Vec<f64>,
        /// Environments per bound.
        #[arg(long, default_value_t = 1000)]
        n_envs: usize,
        /// Oracle queries per switch-point estimation.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Switch-point estimation mode for nonzero bounds.
        #[arg(long, value_enum, default_value_t = ModeArg::Mc)]
        mode: ModeArg,
        /// Master seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output CSV path; a .json sibling is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Include fallback environments in the parameter-error averages
        /// (they always count toward the graph-error rate).
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        include_fallback_in_error_averages: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Stratified Monte Carlo over the mixture weight.
    Mc,
    /// Bisection (requires an exact oracle, delta = 0).
    Bisect,
}

impl From<ModeArg> for EstimationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mc => EstimationMode::MonteCarlo,
            ModeArg::Bisect => EstimationMode::Bisection,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    /// Two binary chance variables, one random-direction edge.
    BinaryPair,
    /// Random DAG over a configurable number of chance variables.
    RandomDag,
}

// ── Error classification ────────────────────────────────────────────────────

/// Marker wrapped around errors the user caused with inputs or parameters;
/// `main` turns these into exit code 2.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Render the wrapped error with its full context chain; this type
        // only exists to carry the exit-code classification.
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(ConfigError(e)))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    config((|| {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {what} from {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing {what} from {}", path.display()))
    })())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T, what: &str) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {what}"))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {what} to {}", path.display()))
}

// ── Subcommand bodies ───────────────────────────────────────────────────────

fn load_cid(path: &Path) -> Result<Cid> {
    let json = read_json(path, "influence diagram")?;
    config(Cid::from_json(&json).context("validating influence diagram"))
}

fn cmd_solve(model: &Path, shift: &Path, out: &Path) -> Result<()> {
    let cid = load_cid(model)?;
    let shift: InterventionSpec = read_json(shift, "intervention")?;
    let policy = config(cid.optimal_policy(&shift).context("solving for the optimal policy"))?;
    write_json(out, &policy, "policy")?;
    println!("wrote optimal policy to {}", out.display());
    Ok(())
}

fn cmd_discover(
    cid_path: &Path,
    delta: f64,
    samples: usize,
    mode: ModeArg,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let cid = load_cid(cid_path)?;
    let public = cid.public();
    let oracle = config(make_delta_oracle(cid, delta, seed).context("building the oracle"))?;
    let model = reconstruct(&oracle, &public, samples, mode.into(), seed)
        .context("reconstructing the causal model")?;
    let json = model.to_json(&public);
    write_json(out, &json, "reconstruction")?;
    println!(
        "wrote reconstruction to {} ({} variables, {} edges, {} unidentifiable entries)",
        out.display(),
        json.variables.len(),
        json.edges.len(),
        json.unidentifiable.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    family: FamilyArg,
    n: usize,
    seed: u64,
    out: &Path,
    n_chance: usize,
    cards: Option<Vec<usize>>,
    decision_card: usize,
    margin: f64,
) -> Result<()> {
    let cfg = match family {
        FamilyArg::BinaryPair => {
            let mut cfg = GeneratorConfig::binary_pair(seed);
            cfg.margin = margin;
            cfg
        }
        FamilyArg::RandomDag => GeneratorConfig {
            n_chance,
            cardinalities: cards.unwrap_or_else(|| vec![2; n_chance]),
            graph_family: GraphFamily::RandomDag,
            decision_cardinality: decision_card,
            margin,
            seed,
        },
    };
    config(cfg.validate().context("validating generator configuration"))?;
    // Rejection-rate blowups come from unsatisfiable margins, a configuration
    // problem rather than a runtime fault.
    let envs = config(generate_batch(&cfg, n).context("generating environments"))?;
    fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let mut files = Vec::with_capacity(n);
    for (i, env) in envs.iter().enumerate() {
        let name = format!("env_{i:05}.json");
        write_json(&out.join(&name), &env.to_json(), "environment")?;
        files.push(name);
    }
    let manifest = serde_json::json!({
        "family": match family { FamilyArg::BinaryPair => "binary-pair", FamilyArg::RandomDag => "random-dag" },
        "count": n,
        "seed": seed,
        "margin": cfg.margin,
        "cardinalities": cfg.cardinalities,
        "decision_cardinality": cfg.decision_cardinality,
        "files": files,
    });
    write_json(&out.join("manifest.json"), &manifest, "manifest")?;
    println!("wrote {n} environments and manifest.json to {}", out.display());
    Ok(())
}

fn cmd_sweep(
    bounds: Vec<f64>,
    n_envs: usize,
    samples: usize,
    mode: ModeArg,
    seed: u64,
    out: &Path,
    include_fallback: bool,
) -> Result<()> {
    let mut cfg = SweepConfig::new(bounds, n_envs, seed, mode.into());
    cfg.n_samples = samples;
    cfg.out_path = Some(out.display().to_string());
    cfg.include_fallback_in_error_averages = include_fallback;
    config(cfg.validate().context("validating sweep configuration"))?;
    let report = run_sweep(&cfg).context("running the sweep")?;
    regret2cause_core::emit_reports(&report, out).context("writing sweep reports")?;
    for row in &report.rows {
        println!(
            "bound {:.3}: graph error {:.4}, mean |ΔP| {:.5}, fallback {:.3}",
            row.regret_bound_normalized, row.g_error_rate, row.p_mean_abs_error, row.fallback_rate
        );
    }
    println!(
        "wrote {} and {}",
        out.display(),
        out.with_extension("json").display()
    );
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Solve { model, shift, out } => cmd_solve(&model, &shift, &out),
        Command::Discover {
            cid,
            delta,
            samples,
            mode,
            seed,
            out,
        } => cmd_discover(&cid, delta, samples, mode, seed, &out),
        Command::Gen {
            family,
            n,
            seed,
            out,
            n_chance,
            cards,
            decision_card,
            margin,
        } => cmd_gen(family, n, seed, &out, n_chance, cards, decision_card, margin),
        Command::Sweep {
            bounds,
            n_envs,
            samples,
            mode,
            seed,
            out,
            include_fallback_in_error_averages,
        } => cmd_sweep(
            bounds,
            n_envs,
            samples,
            mode,
            seed,
            &out,
            include_fallback_in_error_averages,
        ),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
