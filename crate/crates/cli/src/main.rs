use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use subo_core::combinatorics::{
    bound_probability_report, closed_form_stats, mc_bound_experiment, oracle_pairing_stats, phi_final_line, McConfig,
    DEFAULT_ORACLE_CAP,
};
use subo_core::harness::{evaluate_checkpoint, run_experiment, ExperimentConfig};
use subo_core::rewards::{generate_ba, generate_er, write_edge_list};

#[derive(Parser)]
#[command(name = "subo", version, about = "Submodular-bound GFlowNet experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (variant, seed) pair of a config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Distinct-query budget, or `none`.
        #[arg(long)]
        query_budget: Option<String>,
        /// Run only this variant.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Compare closed-form pairing-graph counts with brute-force enumeration.
    VerifyCounts {
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        #[arg(long, default_value_t = 4)]
        c_max: usize,
    },
    /// Closed-form bound probabilities and their Monte Carlo estimates.
    Mc {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        c: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<u64>,
        /// Zero skips the simulation.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a random graph as an edge list.
    GenGraph {
        #[arg(long, value_enum)]
        kind: GraphKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        attach_count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics for a saved policy.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Er,
    Ba,
}

fn threads() -> usize {
    std::env::var("SUBO_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn train_cmd(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    query_budget: Option<String>,
    variant: Option<String>,
    epsilon: Option<f64>,
) -> Result<()> {
    let text = fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::load(&config)?;
    let mut overrides = Vec::new();
    let mut set = |cfg: &mut ExperimentConfig, k: &str, v: String| -> Result<()> {
        cfg.set(k, &v)?;
        overrides.push((k.to_string(), v));
        Ok(())
    };
    if let Some(s) = seed {
        set(&mut cfg, "seeds", s.to_string())?;
    }
    if let Some(q) = query_budget {
        set(&mut cfg, "train.query_budget", q)?;
    }
    if let Some(v) = variant {
        set(&mut cfg, "variants", v)?;
    }
    if let Some(e) = epsilon {
        set(&mut cfg, "train.epsilon", e.to_string())?;
    }
    if let Some(o) = out {
        set(&mut cfg, "out", o.display().to_string())?;
    }
    cfg.check()?;
    let out_dir = cfg.out_dir.clone().context("no output directory: pass --out or set `out`")?;
    let name = config.file_name().map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned());
    let result = run_experiment(&cfg, &out_dir, threads(), &[(name, text)], &overrides)?;
    for r in &result.runs {
        println!(
            "{} seed {}: {} steps, {} queries, csv {}",
            r.variant,
            r.seed,
            r.steps,
            r.queries_used,
            r.csv.display()
        );
    }
    println!("manifest {}", result.manifest.display());
    Ok(())
}

fn verify_counts(n_max: usize, c_max: usize) -> Result<bool> {
    println!("n,c,lambda,alpha,beta,phi,edge_count,oracle_lambda,oracle_alpha,oracle_beta,oracle_phi,oracle_edge_count,phi_final_line,status");
    let mut ok = true;
    for n in 2..=n_max {
        for c in 1..=c_max.min(n / 2) {
            let cf = closed_form_stats(n, c)?;
            let or = oracle_pairing_stats(n, c, DEFAULT_ORACLE_CAP)?.stats;
            let matches = cf.lambda == or.lambda
                && cf.alpha == or.alpha
                && cf.beta == or.beta
                && cf.phi == or.phi
                && cf.edge_count == or.edge_count;
            println!(
                "{n},{c},{},{},{},{},{},{},{},{},{},{},{},{}",
                cf.lambda,
                cf.alpha,
                cf.beta,
                cf.phi,
                cf.edge_count,
                or.lambda,
                or.alpha,
                or.beta,
                or.phi,
                or.edge_count,
                phi_final_line(n, c)?,
                if matches { "OK" } else { "MISMATCH" }
            );
            if !matches {
                eprintln!("mismatch at n={n} c={c}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn mc(n: usize, cs: &[usize], ms: &[u64], reps: usize, seed: u64) -> Result<()> {
    println!("n,c,m,expected_Q,mc_Q,mc_Q_se,janson_lower,mc_p_positive,coverage_lower,mc_coverage,mc_coverage_se,mc_p_positive_se,ratio");
    for &c in cs {
        for &m in ms {
            let r = bound_probability_report(n, c, m)?;
            let sim = if reps > 0 {
                Some(mc_bound_experiment(&McConfig::new(n, c, m, reps, seed))?)
            } else {
                None
            };
            let ratio = (m > 0).then(|| r.expected_coverage_lower / (m as f64 * c as f64));
            println!(
                "{n},{c},{m},{},{},{},{},{},{},{},{},{},{}",
                r.expected_q,
                opt(sim.as_ref().map(|s| s.mean_q)),
                opt(sim.as_ref().map(|s| s.se_q)),
                r.janson_lower,
                opt(sim.as_ref().map(|s| s.p_positive)),
                r.expected_coverage_lower,
                opt(sim.as_ref().map(|s| s.mean_coverage)),
                opt(sim.as_ref().map(|s| s.se_coverage)),
                opt(sim.as_ref().map(|s| s.se_p_positive)),
                opt(ratio)
            );
        }
    }
    Ok(())
}

fn gen_graph(kind: GraphKind, n: usize, p: Option<f64>, attach: Option<usize>, seed: u64, out: PathBuf) -> Result<()> {
    let graph = match kind {
        GraphKind::Er => generate_er(n, p.context("--p is required for er")?, seed)?,
        GraphKind::Ba => generate_ba(n, attach.context("--attach-count is required for ba")?, seed)?,
    };
    fs::write(&out, write_edge_list(&graph)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            query_budget,
            variant,
            epsilon,
        } => train_cmd(config, seed, out, query_budget, variant, epsilon)?,
        Command::VerifyCounts { n_max, c_max } => return verify_counts(n_max, c_max),
        Command::Mc { n, c, m, reps, seed } => mc(n, &c, &m, reps, seed)?,
        Command::GenGraph {
            kind,
            n,
            p,
            attach_count,
            seed,
            out,
        } => gen_graph(kind, n, p, attach_count, seed, out)?,
        Command::Eval {
            config,
            checkpoint,
            seed,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let e = evaluate_checkpoint(&cfg, &checkpoint, seed)?;
            if e.exact_tv.is_none() && e.fcs.is_none() {
                bail!("no metric could be computed");
            }
            println!("exact_tv,fcs");
            println!("{},{}", opt(e.exact_tv), opt(e.fcs));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
