use std::io::Read;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use prefclm::dst::{self, ScorePair};
use prefclm::gateway::EndpointDescriptor;
use prefclm::model::{FusionMode, RunConfig, TeacherKind};
use prefclm::pbrl::{curve_csv, run_experiment, CurvePoint, RunOptions, RunState};

#[derive(Parser)]
#[command(name = "prefclm", version, about = "Preference-based RL with crowds of LLM-written evaluation programs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment to completion and write its run directory.
    Run(RunArgs),
    /// Start the HTTP control plane.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory for run directories; finished runs found here are reloaded.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Fuse crowd scores for one pair. Reads a JSON list of {"rho0","rho1"}.
    Fuse {
        /// JSON file, or - for stdin.
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, default_value_t = 0.3)]
        phi: f64,
    },
    /// Print a learning curve from a run directory or a server.
    Curve {
        /// Run directory.
        #[arg(required_unless_present = "server")]
        run_dir: Option<PathBuf>,
        /// Base URL of a running server.
        #[arg(long, requires = "run")]
        server: Option<String>,
        #[arg(long)]
        run: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TeacherArg {
    Oracle,
    Scripted,
    CrowdDst,
    CrowdMajority,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Dst,
    Majority,
    Single,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Base configuration (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    env: Option<String>,
    #[arg(long, value_enum)]
    teacher: Option<TeacherArg>,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    segment_length: Option<usize>,
    #[arg(long)]
    crowd_size: Option<usize>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    align_threshold: Option<f64>,
    #[arg(long)]
    pilot_count: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    expectations: Option<String>,
    /// Chat-completion endpoint as BASE_URL,MODEL. Repeat for a mixed crowd.
    #[arg(long = "endpoint")]
    endpoints: Vec<String>,
    /// Any other config field, as KEY=JSON_VALUE.
    #[arg(long = "set")]
    sets: Vec<String>,
}

fn build_config(a: &RunArgs) -> Result<RunConfig> {
    let mut value = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => serde_json::to_value(RunConfig::default())?,
    };
    for kv in &a.sets {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        let parsed = serde_json::from_str(v).unwrap_or_else(|_| json!(v));
        value[k] = parsed;
    }
    let mut cfg: RunConfig = serde_json::from_value(value)?;
    if let Some(v) = &a.env {
        cfg.env_name = v.clone();
    }
    if let Some(t) = a.teacher {
        cfg.teacher_kind = match t {
            TeacherArg::Oracle => TeacherKind::Oracle,
            TeacherArg::Scripted => TeacherKind::Scripted,
            TeacherArg::CrowdDst => TeacherKind::CrowdDst,
            TeacherArg::CrowdMajority => {
                cfg.fusion_mode = FusionMode::Majority;
                TeacherKind::CrowdMajority
            }
        };
    }
    if let Some(f) = a.fusion {
        cfg.fusion_mode = match f {
            FusionArg::Dst => FusionMode::Dst,
            FusionArg::Majority => FusionMode::Majority,
            FusionArg::Single => FusionMode::Single,
        };
    }
    macro_rules! set {
        ($($field:ident <- $arg:ident),*) => {
            $(if let Some(v) = a.$arg.clone() { cfg.$field = v; })*
        };
    }
    set!(query_budget <- budget, total_env_steps <- steps, warmup_steps <- warmup,
        segment_length <- segment_length, crowd_size <- crowd_size, phi <- phi,
        align_threshold <- align_threshold, pilot_count <- pilot_count,
        ensemble_size <- ensemble_size, seed <- seed);
    if let Some(e) = &a.expectations {
        cfg.user_expectations = Some(e.clone());
    }
    for ep in &a.endpoints {
        let (url, model) = ep
            .split_once(',')
            .with_context(|| format!("--endpoint expects BASE_URL,MODEL, got {ep:?}"))?;
        cfg.llm_endpoints.push(EndpointDescriptor::new(url, model));
    }
    Ok(cfg)
}

#[derive(Deserialize)]
struct ScoreIn {
    rho0: f64,
    rho1: f64,
}

fn fuse(input: &str, phi: f64) -> Result<()> {
    let text = if input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(input)?
    };
    let scores: Vec<ScoreIn> = serde_json::from_str(&text).context("expected a JSON list of {\"rho0\", \"rho1\"}")?;
    let pairs: Vec<ScorePair> = scores.iter().map(|s| ScorePair::new(s.rho0, s.rho1)).collect();
    let r = dst::fuse_crowd(&pairs, phi)?;
    let out = json!({
        "m_s0": r.fused.m_s0,
        "m_s1": r.fused.m_s1,
        "m_both": r.fused.m_both,
        "conflict": r.conflict_total,
        "label": r.label.value(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn curve(run_dir: Option<PathBuf>, server: Option<String>, run: Option<u64>, format: Format) -> Result<()> {
    let points: Vec<CurvePoint> = match (server, run, run_dir) {
        (Some(base), Some(id), _) => {
            let url = format!("{}/runs/{id}/curve", base.trim_end_matches('/'));
            ureq::get(&url)
                .set("Accept", "application/json")
                .call()
                .with_context(|| format!("GET {url}"))?
                .into_json()?
        }
        (_, _, Some(dir)) => {
            let state_path = dir.join("state.json");
            if state_path.exists() {
                let state: RunState = serde_json::from_str(&std::fs::read_to_string(state_path)?)?;
                state.curve
            } else {
                // A run still in progress only has its CSV.
                let text = std::fs::read_to_string(dir.join("curve.csv"))?;
                if matches!(format, Format::Csv) {
                    print!("{text}");
                    return Ok(());
                }
                bail!("{} has no state.json yet; use --format csv", dir.display());
            }
        }
        _ => bail!("give a run directory or --server with --run"),
    };
    match format {
        Format::Csv => print!("{}", curve_csv(&points)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&points)?),
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Cmd::Run(args) => {
            let cfg = build_config(&args)?;
            let opts = RunOptions {
                run_dir: Some(args.out.clone()),
                ..Default::default()
            };
            let out = run_experiment(&cfg, opts)?;
            let last = out.state.curve.last();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "run_dir": args.out,
                    "env_steps": out.state.env_steps,
                    "queries_used": out.state.queries_used,
                    "functions_version": out.state.functions_version,
                    "final_success_rate": last.map(|p| p.success_rate),
                    "final_mean_true_return": last.map(|p| p.mean_true_return),
                    "warnings": out.state.warnings,
                }))?
            );
        }
        Cmd::Serve { addr, data_dir } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(prefclm::service::serve(&addr, data_dir.as_deref()))?;
        }
        Cmd::Fuse { input, phi } => fuse(&input, phi)?,
        Cmd::Curve {
            run_dir,
            server,
            run,
            format,
        } => curve(run_dir, server, run, format)?,
    }
    Ok(())
}
