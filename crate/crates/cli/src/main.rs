//! `saddlesim` — run uncoupled bandit dynamics on bilinear games and
//! inspect the geometric machinery (spanners, ellipsoids, norms, gaps,
//! RVU audits) from the command line.

mod config;

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use saddlesim_core::norms::NormContext;
use saddlesim_core::oftrl::{audit_tolerance, rvu_audit, OftrlState, SolveOptions};
use saddlesim_core::rounding::build_regularizer;
use saddlesim_core::spanner::{build_spanner, certify_design, default_max_swaps, DEFAULT_C};
use saddlesim_core::{ConvexSet, CoreError};
use saddlesim_sim::dynamics::{run, RunConfig};
use saddlesim_sim::game::GameInstance;
use saddlesim_sim::metrics::{duality_gap, summarize};
use saddlesim_sim::trace::config_hash;
use saddlesim_sim::{svg, SimError, Trace};

use config::LoadedConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CERTIFICATION: u8 = 4;

#[derive(Parser)]
#[command(name = "saddlesim", version, about = "Bandit-feedback saddle-point dynamics simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SetArg {
    /// Which action set to operate on.
    #[arg(long, value_parser = ["x", "y"], default_value = "x")]
    set: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run the lockstep dynamics and write phase/round CSV traces.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Inclusive seed sweep `A..B`; one run directory per seed.
        #[arg(long)]
        seeds: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the seed sweep.
        #[arg(long)]
        threads: Option<usize>,
        /// Print the run summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Build the exploration spanner for a configured set and certify it.
    Spanner {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        set: SetArg,
        /// Certification sample count.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        json: bool,
    },
    /// Build the ellipsoidal regularizer and report the sandwich.
    Ellipsoid {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        set: SetArg,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the set-induced primal and dual norms of a vector.
    Norms {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        set: SetArg,
        /// Comma-separated coordinates.
        #[arg(long)]
        vector: String,
        #[arg(long)]
        json: bool,
    },
    /// Duality gap of a supplied strategy pair.
    Gap {
        #[command(flatten)]
        config: ConfigArg,
        /// Row strategy, comma-separated.
        #[arg(long)]
        x: String,
        /// Column strategy, comma-separated.
        #[arg(long)]
        y: String,
        #[arg(long)]
        json: bool,
    },
    /// RVU audit over seeded synthetic utility sequences.
    RvuCheck {
        /// Number of random sequences per set.
        #[arg(long, default_value_t = 25)]
        trials: usize,
        /// Horizon of each sequence.
        #[arg(long, default_value_t = 100)]
        phases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Certification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Certification(_) => EXIT_CERTIFICATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Certification(m) => m,
        }
    }
}

fn from_core(err: CoreError) -> Failure {
    match err {
        CoreError::CertificationFailed { .. } => Failure::Certification(err.to_string()),
        CoreError::InvalidParameter(_) | CoreError::InvalidSet(_) => {
            Failure::Config(err.to_string())
        }
        other => Failure::Runtime(other.to_string()),
    }
}

fn from_sim(err: SimError) -> Failure {
    match err {
        SimError::Config(m) => Failure::Config(m),
        SimError::Core(core) => from_core(core),
        other => Failure::Runtime(other.to_string()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            seed,
            seeds,
            out,
            threads,
            json,
        } => cmd_run(&config.config, seed, seeds, out, threads, json),
        Command::Spanner {
            config,
            set,
            samples,
            json,
        } => cmd_spanner(&config.config, &set.set, samples, json),
        Command::Ellipsoid { config, set, json } => cmd_ellipsoid(&config.config, &set.set, json),
        Command::Norms {
            config,
            set,
            vector,
            json,
        } => cmd_norms(&config.config, &set.set, &vector, json),
        Command::Gap { config, x, y, json } => cmd_gap(&config.config, &x, &y, json),
        Command::RvuCheck {
            trials,
            phases,
            seed,
            json,
        } => cmd_rvu_check(trials, phases, seed, json),
    }
}

fn load_config(path: &Path) -> Result<LoadedConfig, Failure> {
    config::load(path).map_err(Failure::Config)
}

fn pick_set(loaded: &LoadedConfig, which: &str) -> Result<ConvexSet, Failure> {
    let desc = match which {
        "x" => &loaded.config.game.set_x,
        _ => &loaded.config.game.set_y,
    };
    config::build_set(desc).map_err(Failure::Config)
}

fn parse_vector(text: &str) -> Result<DVector<f64>, Failure> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(|cell| cell.trim().parse::<f64>())
        .collect();
    values
        .map(DVector::from_vec)
        .map_err(|e| Failure::Config(format!("bad vector {text:?}: {e}")))
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

// ---------------------------------------------------------------- run

fn cmd_run(
    config_path: &Path,
    seed_override: Option<u64>,
    seeds: Option<String>,
    out_override: Option<PathBuf>,
    threads: Option<usize>,
    json: bool,
) -> Result<(), Failure> {
    let loaded = load_config(config_path)?;
    let game = config::build_game(&loaded).map_err(Failure::Config)?;
    let mut base_cfg = config::build_run_config(&loaded);
    if let Some(seed) = seed_override {
        base_cfg.seed = seed;
    }

    let out_base = out_override
        .or_else(|| std::env::var_os("SADDLESIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| loaded.dir.join(&loaded.config.out.dir));
    let emit_svg = loaded.config.out.emit_svg;
    let hash = config_hash(loaded.raw.as_bytes());
    let describe = git_describe();

    let seed_list: Vec<u64> = match seeds {
        None => vec![base_cfg.seed],
        Some(spec) => parse_seed_range(&spec)?,
    };

    if seed_list.len() == 1 {
        let mut cfg = base_cfg;
        cfg.seed = seed_list[0];
        let summary = run_one(&game, &cfg, &loaded.raw, &hash, &describe, &out_base, emit_svg)?;
        report_summary(&summary, json);
        return Ok(());
    }

    let worker_count = threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .clamp(1, seed_list.len());
    let queue: Mutex<VecDeque<u64>> = Mutex::new(seed_list.iter().copied().collect());
    let failures: Mutex<Vec<Failure>> = Mutex::new(Vec::new());
    let summaries: Mutex<Vec<saddlesim_sim::trace::Summary>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let seed = {
                    let mut q = queue.lock().unwrap();
                    match q.pop_front() {
                        Some(s) => s,
                        None => break,
                    }
                };
                let mut cfg = base_cfg.clone();
                cfg.seed = seed;
                let out_dir = out_base.join(format!("seed-{seed}"));
                match run_one(&game, &cfg, &loaded.raw, &hash, &describe, &out_dir, emit_svg) {
                    Ok(summary) => summaries.lock().unwrap().push(summary),
                    Err(failure) => failures.lock().unwrap().push(failure),
                }
            });
        }
    });

    if let Some(failure) = failures.into_inner().unwrap().into_iter().next() {
        return Err(failure);
    }
    let mut summaries = summaries.into_inner().unwrap();
    summaries.sort_by_key(|s| s.seed);
    for summary in &summaries {
        report_summary(summary, json);
    }
    Ok(())
}

fn parse_seed_range(spec: &str) -> Result<Vec<u64>, Failure> {
    let parts: Vec<&str> = spec.split("..").collect();
    let err = || Failure::Config(format!("bad --seeds range {spec:?}, expected A..B"));
    if parts.len() != 2 {
        return Err(err());
    }
    let a: u64 = parts[0].trim().parse().map_err(|_| err())?;
    let b: u64 = parts[1].trim().parse().map_err(|_| err())?;
    if b < a {
        return Err(err());
    }
    Ok((a..=b).collect())
}

fn run_one(
    game: &GameInstance,
    cfg: &RunConfig,
    raw_config: &str,
    hash: &str,
    describe: &str,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<saddlesim_sim::trace::Summary, Failure> {
    let mut trace: Trace = run(game, cfg).map_err(from_sim)?;
    trace.meta.config_hash = hash.to_string();

    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    fs::write(out_dir.join("config.toml"), raw_config)
        .map_err(|e| Failure::Runtime(format!("cannot write config copy: {e}")))?;
    trace.write_csvs(out_dir).map_err(from_sim)?;
    let summary = summarize(&trace, hash.to_string(), describe.to_string());
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Failure::Runtime(format!("summary serialization: {e}")))?;
    fs::write(out_dir.join("summary.json"), summary_json)
        .map_err(|e| Failure::Runtime(format!("cannot write summary: {e}")))?;
    if emit_svg {
        fs::write(out_dir.join("gap.svg"), svg::gap_chart(&trace))
            .map_err(|e| Failure::Runtime(format!("cannot write chart: {e}")))?;
    }
    Ok(summary)
}

fn report_summary(summary: &saddlesim_sim::trace::Summary, json: bool) {
    if json {
        println!("{}", serde_json::to_string(summary).unwrap());
    } else {
        println!(
            "seed {}: {} phases / {} rounds, final avg gap {:.6e}, final last gap {:.6e}",
            summary.seed,
            summary.phases,
            summary.rounds_total,
            summary.final_avg_gap,
            summary.final_last_gap
        );
    }
}

// ---------------------------------------------------------------- spanner

fn cmd_spanner(config_path: &Path, which: &str, samples: usize, json: bool) -> Result<(), Failure> {
    let loaded = load_config(config_path)?;
    let set = pick_set(&loaded, which)?;
    let mut design =
        build_spanner(&set, DEFAULT_C, default_max_swaps(set.dim())).map_err(from_core)?;
    let bound = certify_design(&mut design, &set, samples).map_err(from_core)?;
    let limit = design.bound_limit();
    if json {
        let payload = serde_json::json!({
            "points": design.points().iter().map(|p| p.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "v": matrix_rows(design.v()),
            "certified_bound": bound,
            "bound_limit": limit,
        });
        println!("{payload}");
    } else {
        println!("spanner for set {which} (dim {}):", set.dim());
        for (i, p) in design.points().iter().enumerate() {
            println!("  x{i} = {:?}", p.iter().copied().collect::<Vec<_>>());
        }
        println!("  V = {:?}", matrix_rows(design.v()));
        println!("  certified bound {bound:.6} (limit {limit})");
    }
    if bound > limit {
        return Err(Failure::Certification(format!(
            "spanner bound {bound:.6} exceeds 2n^2 = {limit}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- ellipsoid

fn cmd_ellipsoid(config_path: &Path, which: &str, json: bool) -> Result<(), Failure> {
    let loaded = load_config(config_path)?;
    let set = pick_set(&loaded, which)?;
    let reg = build_regularizer(&set, 1e-7).map_err(from_core)?;
    let d = set.dim() as f64;
    let alpha_limit = (d * (d + 1.0)).sqrt();
    if json {
        let payload = serde_json::json!({
            "h": matrix_rows(reg.h()),
            "alpha_eff": reg.alpha_eff(),
            "alpha_limit": alpha_limit,
            "eps_mvee": reg.eps_mvee(),
        });
        println!("{payload}");
    } else {
        println!("regularizer for set {which} (dim {}):", set.dim());
        println!("  H = {:?}", matrix_rows(reg.h()));
        println!(
            "  alpha_eff = {:.6} (limit sqrt(d(d+1)) = {alpha_limit:.6}), sandwich certified",
            reg.alpha_eff()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- norms

fn cmd_norms(config_path: &Path, which: &str, vector: &str, json: bool) -> Result<(), Failure> {
    let loaded = load_config(config_path)?;
    let set = pick_set(&loaded, which)?;
    let z = parse_vector(vector)?;
    if z.len() != set.dim() {
        return Err(Failure::Config(format!(
            "vector has length {}, set has dimension {}",
            z.len(),
            set.dim()
        )));
    }
    let ctx = NormContext::new(&set).map_err(from_core)?;
    let primal = ctx.primal_norm(&z).map_err(from_core)?;
    let dual = ctx.dual_norm(&z).map_err(from_core)?;
    if json {
        println!(
            "{}",
            serde_json::json!({ "primal": primal, "dual": dual })
        );
    } else {
        println!("||z||_X   = {primal:.9}");
        println!("||z||_*,X = {dual:.9}");
    }
    Ok(())
}

// ---------------------------------------------------------------- gap

fn cmd_gap(config_path: &Path, x_text: &str, y_text: &str, json: bool) -> Result<(), Failure> {
    let loaded = load_config(config_path)?;
    let game = config::build_game(&loaded).map_err(Failure::Config)?;
    let x = parse_vector(x_text)?;
    let y = parse_vector(y_text)?;
    for (set, v, name) in [(game.set_x(), &x, "x"), (game.set_y(), &y, "y")] {
        if v.len() != set.dim() {
            return Err(Failure::Config(format!(
                "{name} has length {}, set has dimension {}",
                v.len(),
                set.dim()
            )));
        }
        if !set.membership(v, 1e-6).map_err(from_core)? {
            return Err(Failure::Config(format!("{name} is not in its action set")));
        }
    }
    let gap = duality_gap(&game, &x, &y).map_err(from_sim)?;
    if json {
        println!(
            "{}",
            serde_json::json!({ "gap": gap, "payoff_scale": game.scale() })
        );
    } else {
        println!("duality gap (normalized payoffs): {gap:.9}");
        println!("payoff scale s = {:.9}", game.scale());
    }
    Ok(())
}

// ---------------------------------------------------------------- rvu-check

fn cmd_rvu_check(trials: usize, phases: usize, seed: u64, json: bool) -> Result<(), Failure> {
    use rand::Rng;
    use saddlesim_core::geometry::random_direction;
    use saddlesim_core::rng::stream_rng;

    let sets = [
        ConvexSet::simplex(2).map_err(from_core)?,
        ConvexSet::simplex(3).map_err(from_core)?,
        ConvexSet::cube(2, 1.0).map_err(from_core)?,
        ConvexSet::ball(DVector::zeros(3), 1.0).map_err(from_core)?,
    ];
    let mut min_slack = f64::INFINITY;
    let mut max_tol: f64 = 0.0;
    let mut rng = stream_rng(seed, 0x87);
    for set in &sets {
        let reg = build_regularizer(set, 1e-7).map_err(from_core)?;
        let ctx = NormContext::new(set).map_err(from_core)?;
        for _ in 0..trials {
            let mut state =
                OftrlState::new(&reg, set, 1.0 / 6.0, true).map_err(from_core)?;
            for _ in 0..phases {
                let mut u = random_direction(set.dim(), &mut rng);
                let d = ctx.dual_norm(&u).map_err(from_core)?;
                u *= rng.gen::<f64>() / d.max(1e-12);
                state
                    .step(&u, &reg, set, &SolveOptions::default())
                    .map_err(from_core)?;
            }
            let tol = audit_tolerance(phases, state.max_solve_tol());
            max_tol = max_tol.max(tol);
            let history = state.history().unwrap();
            let mut comparators = vec![history[0].0.clone()];
            if let Ok(verts) = set.vertices() {
                comparators.extend(verts);
            }
            for comparator in &comparators {
                let slack =
                    rvu_audit(history, comparator, state.eta(), &reg, &ctx).map_err(from_core)?;
                min_slack = min_slack.min(slack);
            }
        }
    }
    if json {
        println!(
            "{}",
            serde_json::json!({ "min_slack": min_slack, "audit_tol": max_tol })
        );
    } else {
        println!(
            "RVU audit: min slack {min_slack:.3e} over {} sets x {trials} trials (tolerance -{max_tol:.3e})",
            sets.len()
        );
    }
    if min_slack < -max_tol {
        return Err(Failure::Certification(format!(
            "RVU slack {min_slack:.3e} below -{max_tol:.3e}"
        )));
    }
    Ok(())
}
