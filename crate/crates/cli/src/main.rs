//! Batch experiment driver: phase-transition scans, cluster scaling,
//! dominating branching, SPDE and renormalization suites, and manifest
//! replay. Exits nonzero unless every invariant gate passes.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use percolab::experiments::{self, ExperimentKind, ExperimentPlan};
use percolab::LatticeConfig;

#[derive(Parser)]
#[command(
    name = "percolab",
    version,
    about = "anisotropic percolation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory for the report bundle.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; falls back to PERCOLAB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional lattice config file (TOML: n, alpha, b, kappa, seed, caps).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replicas per cell.
    #[arg(long, default_value_t = 400)]
    reps: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Crossing-probability scan over (N, b, kappa) with paired coins.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "32,128")]
        n: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5")]
        b: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.05,0.1,0.2,0.4,0.8,1.6,3.2,6.4,12.8,25.6"
        )]
        kappa: Vec<f64>,
        /// Crossing-box height in layers.
        #[arg(long, default_value_t = 6)]
        height: i64,
    },
    /// Cluster-size scaling of the attrition process.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Defaults to the config file's n when --config is given.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u32>>,
    },
    /// Dominating branching process over the vertical direction.
    Branching {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        kappa: Option<Vec<f64>>,
    },
    /// Numerical checks of the limiting stochastic PDEs.
    Spde {
        #[command(flatten)]
        common: Common,
    },
    /// Renormalized block construction and oriented percolation.
    Renorm {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1024)]
        n: u32,
        /// Block parameter m = delta^{-5/2}.
        #[arg(long, default_value_t = 2)]
        m: u32,
    },
    /// Re-run a manifest and verify byte-identical CSV artifacts.
    Report {
        /// Path to a previously emitted manifest.json.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<Option<LatticeConfig>> {
    match &common.config {
        Some(path) => Ok(Some(
            LatticeConfig::from_toml_file(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )),
        None => Ok(None),
    }
}

fn resolve_seed(common: &Common) -> Result<u64> {
    if let Some(s) = common.seed {
        return Ok(s);
    }
    if let Some(cfg) = load_config(common)? {
        return Ok(cfg.seed);
    }
    match std::env::var("PERCOLAB_SEED") {
        Ok(v) => v.parse().context("PERCOLAB_SEED must be a u64"),
        Err(_) => Ok(0),
    }
}

fn base_plan(kind: ExperimentKind, common: &Common) -> Result<ExperimentPlan> {
    Ok(ExperimentPlan {
        kind,
        n_values: vec![],
        kappa_values: vec![],
        b_values: vec![],
        block_m: 2,
        reps: common.reps,
        master_seed: resolve_seed(common)?,
        box_height: 6,
        step_cap: 100_000,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (plan, out) = match &cli.command {
        Command::Scan {
            common,
            n,
            b,
            kappa,
            height,
        } => {
            let mut plan = base_plan(ExperimentKind::KappaScan, common)?;
            plan.n_values = n.clone();
            plan.b_values = b.clone();
            plan.kappa_values = kappa.clone();
            plan.box_height = *height;
            (plan, common.out.clone())
        }
        Command::Cluster { common, n } => {
            let mut plan = base_plan(ExperimentKind::ClusterScaling, common)?;
            let from_config = load_config(common)?.map(|c| vec![c.n]);
            plan.n_values = n
                .clone()
                .or(from_config)
                .unwrap_or_else(|| vec![50, 200, 800]);
            (plan, common.out.clone())
        }
        Command::Branching { common, n, kappa } => {
            let mut plan = base_plan(ExperimentKind::DominatingBranching, common)?;
            let cfg = load_config(common)?;
            plan.n_values = n
                .clone()
                .or_else(|| cfg.as_ref().map(|c| vec![c.n]))
                .unwrap_or_else(|| vec![64]);
            plan.kappa_values = kappa
                .clone()
                .or_else(|| cfg.as_ref().map(|c| vec![c.kappa]))
                .unwrap_or_else(|| vec![0.1, 0.5, 1.0, 2.0]);
            (plan, common.out.clone())
        }
        Command::Spde { common } => (
            base_plan(ExperimentKind::SpdeSuite, common)?,
            common.out.clone(),
        ),
        Command::Renorm { common, n, m } => {
            let mut plan = base_plan(ExperimentKind::RenormSuite, common)?;
            plan.n_values = vec![*n];
            plan.block_m = *m;
            (plan, common.out.clone())
        }
        Command::Report { manifest, out } => {
            let outcome = experiments::replay(manifest, out)
                .with_context(|| format!("replaying {}", manifest.display()))?;
            for (name, ok) in &outcome.matched {
                println!("{name}: {}", if *ok { "match" } else { "MISMATCH" });
            }
            if outcome.all_match {
                println!("replay reproduced all artifacts byte-identically");
                return Ok(());
            }
            std::process::exit(1);
        }
    };

    let (manifest, gates_ok) = experiments::run_plan(&plan, &out)
        .with_context(|| format!("running plan into {}", out.display()))?;
    println!("manifest: {}", manifest.display());
    let loaded = percolab::report::Manifest::load(&manifest)?;
    for gate in &loaded.gates {
        println!(
            "gate {}: {} ({})",
            gate.name,
            if gate.pass { "pass" } else { "FAIL" },
            gate.detail
        );
    }
    if !gates_ok {
        std::process::exit(1);
    }
    Ok(())
}
