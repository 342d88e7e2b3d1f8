use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rendezvous::harness::{
    build_report, check_plan, metrics_from_traces, plan_mission, read_json, run_batch, run_oracle,
    trace_file_name, write_json, write_report, write_trace, ExperimentConfig, HarnessError,
};
use rendezvous::model::MissionParams;
use rendezvous::plan::RendezvousPlan;
use rendezvous::policy::PolicyVariant;
use rendezvous::world::generate_map;

/// Plan rendezvous schedules for a robot team and simulate them.
#[derive(Parser)]
#[command(name = "rendezvous", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the mission MILP and write plan.json and solve_report.json.
    Plan {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the plan once per seed, writing traces and aggregated metrics.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Run both policy variants on the same seeds.
        #[arg(long)]
        compare: bool,
    },
    /// Compare branch-and-bound against exhaustive enumeration.
    Oracle {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the comparison here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate trace files into report.json and CSV tables.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a plan file against the mission parameters.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Write the generated desk map as ASCII.
    GenMap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Overrides for fields of the experiment config.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON experiment config; defaults to the 3 robot, 5 rendezvous mission.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    num_robots: Option<usize>,
    #[arg(long)]
    num_rendezvous: Option<usize>,
    #[arg(long)]
    m_assign: Option<f64>,
    #[arg(long)]
    min_proc: Option<f64>,
    #[arg(long)]
    min_robots: Option<usize>,
    #[arg(long)]
    max_robots: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    map_path: Option<PathBuf>,
    #[arg(long)]
    map_size: Option<usize>,
    #[arg(long)]
    map_seed: Option<u64>,
    /// Sets num_runs to the number of seeds given.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    comm_range: Option<f64>,
    #[arg(long)]
    sensor_range: Option<f64>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    policy: Option<PolicyVariant>,
    #[arg(long)]
    utility_jitter: Option<f64>,
    #[arg(long)]
    reach_fraction: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::standard(),
        };
        cfg.mission = self.mission(&cfg.mission);
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f.clone() { cfg.$f = v; } )*};
        }
        set!(
            map_size,
            map_seed,
            dt,
            comm_range,
            sensor_range,
            speed,
            cell_size,
            policy,
            utility_jitter,
            reach_fraction,
            node_limit
        );
        if let Some(p) = &self.map_path {
            cfg.map_path = Some(p.clone());
        }
        if let Some(s) = &self.seeds {
            cfg = cfg.with_seeds(s.clone());
        }
        Ok(cfg)
    }

    /// Changing the core dimensions resets derived defaults (team sizes and
    /// big-M) unless they are given explicitly.
    fn mission(&self, base: &MissionParams) -> MissionParams {
        let resized = self.num_robots.is_some() || self.m_assign.is_some();
        let mut p = if resized {
            let mut p = MissionParams::new(
                self.num_robots.unwrap_or(base.num_robots),
                self.num_rendezvous.unwrap_or(base.num_rendezvous),
                self.m_assign.unwrap_or(base.m_assign),
                self.min_proc.unwrap_or(base.min_proc),
            );
            p.alpha = base.alpha;
            p.beta = base.beta;
            p
        } else {
            let mut p = base.clone();
            p.num_rendezvous = self.num_rendezvous.unwrap_or(p.num_rendezvous);
            p.min_proc = self.min_proc.unwrap_or(p.min_proc);
            p
        };
        if let Some(v) = self.min_robots {
            p.min_robots = v;
        }
        if let Some(v) = self.max_robots {
            p.max_robots = v;
        }
        p.alpha = self.alpha.unwrap_or(p.alpha);
        p.beta = self.beta.unwrap_or(p.beta);
        p
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan { cfg, out } => {
            let cfg = cfg.resolve()?;
            cfg.validate()?;
            let (report, plan) = plan_mission(&cfg.mission, cfg.node_limit)?;
            ensure_dir(&out)?;
            write_json(&out.join("plan.json"), &plan)?;
            write_json(&out.join("solve_report.json"), &report)?;
            eprintln!(
                "optimal objective {:.3} after {} nodes in {:.2?}; {} events",
                report.objective.unwrap_or(f64::NAN),
                report.nodes,
                report.wall_time,
                plan.events.len()
            );
        }
        Command::Simulate {
            cfg,
            plan,
            out,
            compare,
        } => {
            let cfg = cfg.resolve()?;
            cfg.validate()?;
            let plan: RendezvousPlan = read_json(&plan)?;
            let world = cfg.load_world()?;
            let variants = if compare {
                vec![PolicyVariant::Rtus, PolicyVariant::Baseline]
            } else {
                vec![cfg.policy]
            };
            ensure_dir(&out)?;
            let mut metrics = Vec::new();
            for v in variants {
                for run in run_batch(&cfg, &world, &plan, v)? {
                    write_trace(&out.join(trace_file_name(v, run.seed)), &run.trace)?;
                    metrics.push(run.metrics);
                }
            }
            let report = build_report(&metrics)?;
            for p in write_report(&out, &report)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Oracle { cfg, out } => {
            let cfg = cfg.resolve()?;
            let cmp = run_oracle(&cfg.mission, cfg.node_limit)?;
            match out {
                Some(p) => write_json(&p, &cmp)?,
                None => println!("{}", serde_json::to_string_pretty(&cmp)?),
            }
            if !cmp.matches {
                anyhow::bail!("solvers disagree");
            }
        }
        Command::Report { traces, out } => {
            let metrics = metrics_from_traces(&traces)?;
            let report = build_report(&metrics)?;
            for p in write_report(&out, &report)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Validate { cfg, plan } => {
            let cfg = cfg.resolve()?;
            let plan: RendezvousPlan = read_json(&plan)?;
            check_plan(&plan, &cfg.mission)?;
            eprintln!("plan is valid: {} events", plan.events.len());
        }
        Command::GenMap { cfg, out } => {
            let cfg = cfg.resolve()?;
            cfg.validate()?;
            let world = generate_map(
                cfg.map_size,
                cfg.cell_size,
                cfg.mission.num_robots,
                cfg.map_seed,
            );
            fs::write(&out, world.to_ascii())
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HarnessError>() {
        Some(h) => h.exit_code() as u8,
        None if err.to_string() == "solvers disagree" => 3,
        None => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
