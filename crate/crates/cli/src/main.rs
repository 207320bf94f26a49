//! `drtr` command-line driver.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 on numeric failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use drtr::harness::ablation::ablation_experiment;
use drtr::harness::linkpred::link_prediction_experiment_on;
use drtr::harness::sbm::{gen_sbm, SbmSpec};
use drtr::harness::stability::stability_experiment;
use drtr::harness::{experiment_schedule, ExperimentResult};
use drtr::io::{load_graph_dir, save_graph_dir, load_noisy_edges};
use drtr::trainer::{fit, write_metrics_csv};
use drtr::{build_hop_shells, DrtrError, Mode, ModelParams, Result, ScheduleConfig};

#[derive(Parser)]
#[command(name = "drtr", version, about = "Hop-shell graph learning with distance pruning and edge reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model graph directory.
    GenSbm {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write parameters, metrics and refinement logs.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the mode in the config.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint format: 1 stores f32 values, 2 stores f64.
        #[arg(long, default_value_t = 2)]
        checkpoint_version: u32,
    },
    /// One distance pass and one reconstruction pass, without training.
    Refine {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding shift under random edge flips with fixed parameters.
    Stability {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parameter checkpoint; random parameters from the config seed when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        deltas: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every mode over several seeds and compare test accuracy.
    ///
    /// Without `--config` the tuned experiment schedule is used.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hold out edges, train, and score the holdout by embedding similarity.
    ///
    /// Without `--config` the tuned experiment schedule is used.
    Linkpred {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        holdout: f64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "baseline,gkhddra")]
        modes: Vec<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DrtrError::MalformedInput(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ScheduleConfig> {
    match path {
        Some(p) => ScheduleConfig::from_json(&read_text(p)?),
        None => Ok(ScheduleConfig::default()),
    }
}

/// Harness commands fall back to the tuned experiment schedule.
fn load_experiment_config(path: Option<&Path>) -> Result<ScheduleConfig> {
    match path {
        Some(p) => ScheduleConfig::from_json(&read_text(p)?),
        None => Ok(experiment_schedule()),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn emit(result: &ExperimentResult, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            let mut f = create(dir, &format!("{}.json", result.name))?;
            writeln!(f, "{}", result.to_json())?;
            f.flush()?;
            let mut csv = create(dir, &format!("{}_rows.csv", result.name))?;
            writeln!(csv, "seed,group,metric,value")?;
            for row in &result.rows {
                for (metric, value) in &row.metrics {
                    writeln!(csv, "{},{},{metric},{value}", row.seed, row.group)?;
                }
            }
            csv.flush()?;
        }
        None => println!("{}", result.to_json()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSbm { spec, out } => {
            let spec: SbmSpec = serde_json::from_str(&read_text(&spec)?)
                .map_err(|e| DrtrError::MalformedInput(format!("SBM spec: {e}")))?;
            let sbm = gen_sbm(&spec)?;
            save_graph_dir(&sbm.graph, Some(&sbm.noisy_edges), &out)?;
            write_json(
                &out,
                "sbm.json",
                &serde_json::json!({
                    "spec": spec,
                    "nodes": sbm.graph.node_count(),
                    "edges": sbm.graph.edge_count(),
                    "clean_edges": sbm.clean_edge_count,
                    "noisy_edges": sbm.noisy_edges.len(),
                }),
            )?;
            info!("wrote {} nodes, {} edges to {}", sbm.graph.node_count(), sbm.graph.edge_count(), out.display());
        }
        Command::Train {
            graph,
            config,
            mode,
            out,
            checkpoint_version,
        } => {
            let g = load_graph_dir(&graph)?;
            let cfg = load_config(config.as_deref())?;
            let mode = mode.unwrap_or(cfg.mode);
            let r = fit(&g, &cfg, mode)?;
            let mut params = create(&out, "params.bin")?;
            r.state.best_params.write_checkpoint(&mut params, checkpoint_version)?;
            params.flush()?;
            let mut metrics = create(&out, "metrics.csv")?;
            write_metrics_csv(&r.history, &mut metrics)?;
            metrics.flush()?;
            let mut log = create(&out, "refinement.jsonl")?;
            for rep in &r.reports {
                rep.write_jsonl(&mut log)?;
            }
            log.flush()?;
            save_graph_dir(&r.graph, None, &out.join("graph"))?;
            write_json(
                &out,
                "summary.json",
                &serde_json::json!({
                    "mode": mode,
                    "test_acc": r.test_acc,
                    "val_acc": r.val_acc,
                    "best_epoch": r.state.best_epoch,
                    "epochs_run": r.epochs_run,
                    "seconds": r.elapsed.as_secs_f64(),
                    "initial_degree": r.initial_degree,
                    "final_effective_degree": r.shells.effective_degree(),
                    "edges_before": g.edge_count(),
                    "edges_after": r.graph.edge_count(),
                    "omega": r.state.best_params.similarity.omega,
                    "hop_weights": r.state.best_params.diffusion.hop_weights(),
                    "config": ScheduleConfig { mode, ..cfg },
                }),
            )?;
            info!("test accuracy {:.4} after {} epochs", r.test_acc, r.epochs_run);
        }
        Command::Refine { graph, config, out } => {
            let mut g = load_graph_dir(&graph)?;
            let cfg = load_config(config.as_deref())?;
            let noisy = load_noisy_edges(&graph)?;
            let mut shells = build_hop_shells(&g, cfg.hops, cfg.shell_cap, cfg.seed)?;
            let before = shells.built_degree();
            let edges_before = g.edge_count();
            let report = drtr::trainer::refine_once(&mut g, &mut shells, &cfg)?;
            save_graph_dir(&g, (!noisy.is_empty()).then_some(&noisy[..]), &out)?;
            let mut log = create(&out, "refinement.jsonl")?;
            report.write_jsonl(&mut log)?;
            log.flush()?;
            write_json(
                &out,
                "summary.json",
                &serde_json::json!({
                    "original_degree": before,
                    "effective_degree": report.effective_degree,
                    "pruned_entries": report.pruned.len(),
                    "edges_before": edges_before,
                    "edges_added": report.added.len(),
                    "edges_after": g.edge_count(),
                }),
            )?;
        }
        Command::Stability {
            graph,
            config,
            params,
            deltas,
            seeds,
            out,
        } => {
            let g = load_graph_dir(&graph)?;
            let mut cfg = load_config(config.as_deref())?;
            let params = match params {
                Some(p) => {
                    let bytes = fs::read(&p).map_err(|e| DrtrError::MalformedInput(format!("{}: {e}", p.display())))?;
                    let m = ModelParams::from_checkpoint_bytes(&bytes)?;
                    cfg.hops = m.diffusion.hops();
                    m.diffusion
                }
                None => {
                    let classes = g.class_count().max(1);
                    ModelParams::init(cfg.hops, g.feature_dim(), cfg.hidden_dim, classes, cfg.omega_init, cfg.seed)
                        .diffusion
                }
            };
            let seeds: Vec<u64> = (0..seeds).collect();
            let r = stability_experiment(&g, &params, &cfg, &deltas, &seeds)?;
            emit(&r, out.as_deref())?;
        }
        Command::Ablate {
            spec,
            config,
            seeds,
            out,
        } => {
            let spec: SbmSpec = serde_json::from_str(&read_text(&spec)?)
                .map_err(|e| DrtrError::MalformedInput(format!("SBM spec: {e}")))?;
            let cfg = load_experiment_config(config.as_deref())?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let r = ablation_experiment(&spec, &cfg, &seeds)?;
            emit(&r, out.as_deref())?;
        }
        Command::Linkpred {
            graph,
            config,
            holdout,
            seeds,
            modes,
            out,
        } => {
            let g = load_graph_dir(&graph)?;
            let cfg = load_experiment_config(config.as_deref())?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let r = link_prediction_experiment_on(&g, &cfg, &modes, holdout, &seeds)?;
            emit(&r, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
