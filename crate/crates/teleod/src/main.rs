use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::Vector3;

use pushplan::bench::{self, BenchConfig};
use pushplan::config::ParamFile;
use pushplan::demo::{DemoLibrary, Demonstration};
use pushplan::planner::{self, DpInit, Method, PlanRequest};
use teleod::scripted;
use teleod::server::{self, ServerConfig};

#[derive(Parser)]
#[command(name = "teleod", version, about = "Demonstration-guided pushing planner and recorder")]
struct Cli {
    /// Key-value parameter file for slider parameters and cost weights.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan to one target and print the result as JSON.
    Plan {
        #[arg(long, default_value = "zs")]
        method: Method,
        /// Target pose `x,y,theta` (m, m, rad).
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        target: Vector3<f64>,
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "zeros")]
        dp_init: DpInitArg,
        #[arg(long, default_value_t = planner::DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = planner::DEFAULT_DT)]
        dt: f64,
        /// Also write the trajectory as CSV.
        #[arg(long)]
        traj_csv: Option<PathBuf>,
        /// Also write the solver report (iterations, cost trace, termination) as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Seeded benchmark over random targets.
    Bench {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "zs,ds,dp,ws")]
        methods: Vec<Method>,
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Summary CSV; `records.jsonl` is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        md: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Serve the simulator for recording demonstrations.
    RecordServe {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value = "demos")]
        demos: PathBuf,
    },
    /// Inspect a demonstration library.
    Demo {
        #[command(subcommand)]
        action: DemoAction,
    },
    /// Regenerate the scripted fixture demonstrations.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DemoAction {
    /// One row per demonstration: id, target, N_s, duration.
    Ls {
        #[arg(default_value = "fixtures")]
        dir: PathBuf,
    },
    /// Details of one demonstration, by id or file path.
    Show {
        id: String,
        #[arg(long, default_value = "fixtures")]
        demos: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DpInitArg {
    Zeros,
    Demo,
}

fn parse_pose(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, t] => Ok(Vector3::new(*x, *y, *t)),
        _ => Err(format!("expected x,y,theta, got `{s}`")),
    }
}

type Fallible = Result<(), Box<dyn std::error::Error>>;

fn load_library(dir: Option<&Path>, needed: bool) -> Result<Option<DemoLibrary>, Box<dyn std::error::Error>> {
    match dir {
        Some(d) => Ok(Some(DemoLibrary::load_dir(d)?)),
        None if needed => Err("--demos is required for ds, dp and ws".into()),
        None => Ok(None),
    }
}

fn write_traj_csv(path: &Path, result: &planner::PlanResult) -> Fallible {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "y", "theta", "px", "py", "vx", "vy", "ax", "ay", "mode"])?;
    let traj = &result.trajectory;
    for (k, s) in traj.states.iter().enumerate() {
        let mut row: Vec<String> = std::iter::once(k as f64 * traj.dt).chain(s.to_vector().iter().copied()).map(|v| v.to_string()).collect();
        match (traj.controls.get(k), traj.modes.get(k)) {
            (Some(u), Some(m)) => row.extend([u.accel[0].to_string(), u.accel[1].to_string(), m.to_string()]),
            _ => row.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn print_demo_row(d: &Demonstration) {
    println!(
        "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>4} {:>8.2}",
        d.id,
        d.target[0],
        d.target[1],
        d.target[2],
        d.n_switches(),
        d.duration()
    );
}

fn run(cli: Cli) -> Fallible {
    let pf = match &cli.params {
        Some(p) => ParamFile::load(p)?,
        None => ParamFile::default(),
    };
    match cli.command {
        Command::Plan { method, target, demos, dp_init, horizon, dt, traj_csv, report } => {
            let lib = load_library(demos.as_deref(), method.needs_demos())?;
            let mut req = PlanRequest::new(target, method);
            req.params = pf.params;
            req.x0 = planner::initial_state(&Vector3::zeros(), &target, &pf.params);
            req.weights = pf.weights;
            req.horizon = horizon;
            req.dt = dt;
            req.dp_init = match dp_init {
                DpInitArg::Zeros => DpInit::Zeros,
                DpInitArg::Demo => DpInit::Demo,
            };
            let result = planner::plan(&req, lib.as_ref())?;
            if let Some(path) = traj_csv {
                write_traj_csv(&path, &result)?;
            }
            if let Some(path) = report {
                std::fs::write(path, serde_json::to_string_pretty(&result.report.summary())?)?;
            }
            println!("{}", serde_json::to_string_pretty(&result.to_json())?);
        }
        Command::Bench { seed, n, methods, demos, out, md, jobs } => {
            let lib = load_library(demos.as_deref(), methods.iter().any(|m| m.needs_demos()))?;
            let config = BenchConfig { n_targets: n, seed, methods, jobs, params: pf.params, weights: pf.weights, ..Default::default() };
            let start = std::time::Instant::now();
            let (rows, records) = bench::evaluate(&config, lib.as_ref())?;
            std::fs::write(&out, bench::to_csv(&rows)?)?;
            let records_path = out.parent().unwrap_or(Path::new(".")).join("records.jsonl");
            std::fs::write(&records_path, bench::records_to_jsonl(&records))?;
            let table = bench::to_markdown(&rows);
            if let Some(md) = md {
                std::fs::write(md, &table)?;
            }
            print!("{table}");
            let solve_time: f64 = records.iter().map(|r| r.wall_time_s).sum();
            eprintln!(
                "{} plans, {:.1} s wall, {:.1} s summed solve time; records in {}",
                records.len(),
                start.elapsed().as_secs_f64(),
                solve_time,
                records_path.display()
            );
        }
        Command::RecordServe { port, host, demos } => {
            std::fs::create_dir_all(&demos)?;
            let config = ServerConfig::new(demos, pf.params);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let (addr, handle) = server::spawn(config, SocketAddr::new(host, port)).await?;
                eprintln!("serving ws://{addr}/ws and http://{addr}/demos");
                handle.await?;
                Ok::<_, Box<dyn std::error::Error>>(())
            })?;
        }
        Command::Demo { action: DemoAction::Ls { dir } } => {
            let lib = DemoLibrary::load_dir(&dir)?;
            println!("{:<12} {:>8} {:>8} {:>8} {:>4} {:>8}", "id", "x", "y", "theta", "N_s", "dur_s");
            lib.demos.iter().for_each(print_demo_row);
        }
        Command::Demo { action: DemoAction::Show { id, demos } } => {
            let demo = if Path::new(&id).is_file() {
                Demonstration::load(&id)?
            } else {
                DemoLibrary::load_dir(&demos)?.get(&id).cloned().ok_or_else(|| format!("no demonstration `{id}` in {}", demos.display()))?
            };
            print_demo_row(&demo);
            println!("samples {}  dt_rec {}  replay error {:e}", demo.samples.len(), demo.dt_rec, demo.replay_error(&pf.params)?);
            println!("switch times (recording ticks) {:?}", pushplan::demo::switch_times(&demo.samples.iter().map(|s| s.mode).collect::<Vec<_>>()));
        }
        Command::Fixtures { out } => {
            std::fs::create_dir_all(&out)?;
            for d in scripted::write_fixtures(&out, &pf.params)? {
                print_demo_row(&d);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
