use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use symdyn::config::{stream_rng, Config};
use symdyn::leafwise::{glue, LeafFamily};
use symdyn::marcus::{rigidity_experiment, Marcus};
use symdyn::report::{write_csv, CylinderRow, LeafwiseRow, MarcusRow, OrbitRow};
use symdyn::sft::{digits, random_point};
use symdyn::suspension::birkhoff_cross_check;
use symdyn::transfer::GibbsMeasure;
use symdyn::Error;

// generator streams split off the run seed
const STREAM_MARGINALS: u64 = 1;
const STREAM_BASE_POINTS: u64 = 2;

#[derive(Parser)]
#[command(
    name = "symdyn",
    version,
    about = "Equilibrium states, leafwise measures and Marcus averages on subshifts of finite type"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// System description (JSON, schema 1)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Leading eigendata of the transfer operator
    Pressure {
        #[command(flatten)]
        common: Common,
    },
    /// Equilibrium masses of all cylinders up to a length
    Gibbs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Convergence of R_n h for every observable
    Marcus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// ∫E_n h dm against ∫h dμ for every marginal and observable
    Rigidity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Quasi-invariance defects of the leafwise measures at random base points
    LeafwiseCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        base_points: Option<usize>,
    },
    /// Flow time averages against the equilibrium reference
    Birkhoff {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        orbits: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Pressure { common }
            | Command::Gibbs { common, .. }
            | Command::Marcus { common, .. }
            | Command::Rigidity { common, .. }
            | Command::LeafwiseCheck { common, .. }
            | Command::Birkhoff { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Pressure { .. } => "pressure",
            Command::Gibbs { .. } => "gibbs",
            Command::Marcus { .. } => "marcus",
            Command::Rigidity { .. } => "rigidity",
            Command::LeafwiseCheck { .. } => "leafwise-check",
            Command::Birkhoff { .. } => "birkhoff",
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    config_sha256: String,
    seed: u64,
    tol: f64,
    elapsed_ms: f64,
    outputs: Vec<String>,
    passed: bool,
}

/// What a command produced and whether its checks held.
struct Outcome {
    outputs: Vec<String>,
    passed: bool,
}

#[derive(Serialize)]
struct PressureReport {
    lambda: f64,
    pressure: f64,
    gap: f64,
    residual_right: f64,
    residual_left: f64,
    iterations: usize,
    entropy: f64,
    variational_defect: f64,
}

#[derive(Serialize)]
struct MarcusSummary {
    observable: String,
    converged_at: Option<usize>,
    limit: f64,
    reference: f64,
    defect: f64,
    monotone: bool,
}

#[derive(Serialize)]
struct BirkhoffSummary {
    flow_average: f64,
    reference: f64,
    defect: f64,
    std_error: f64,
    max_return_time: f64,
    transversal_ok: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("symdyn: tolerance check failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("symdyn: [{}] {e}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_schema_error() {
        2
    } else if matches!(e, Error::NotMixing { .. }) {
        3
    } else {
        1
    }
}

fn run(cmd: &Command) -> symdyn::Result<bool> {
    let common = cmd.common();
    if common.threads > 0 {
        // a second call only fails if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global();
    }
    let started = Instant::now();
    let text = fs::read_to_string(&common.config)?;
    let config = Config::from_json(&text)?;
    fs::create_dir_all(&common.out)?;
    let out = common.out.as_path();
    let outcome = match cmd {
        Command::Pressure { .. } => pressure(&config, out)?,
        Command::Gibbs { depth, .. } => gibbs(&config, out, depth.unwrap_or(config.depth()))?,
        Command::Marcus { n_max, .. } => marcus(&config, out, common.tol, n_max.unwrap_or(config.n_max()))?,
        Command::Rigidity { n_max, .. } => {
            rigidity(&config, out, common.tol, common.seed, n_max.unwrap_or(config.n_max()))?
        }
        Command::LeafwiseCheck { depth, base_points, .. } => leafwise_check(
            &config,
            out,
            common.tol,
            common.seed,
            depth.unwrap_or(config.depth()),
            base_points.unwrap_or(config.base_points()),
        )?,
        Command::Birkhoff { horizon, orbits, .. } => birkhoff(&config, out, common.seed, *horizon, *orbits)?,
    };
    let manifest = Manifest {
        command: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
        seed: common.seed,
        tol: common.tol,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        outputs: outcome.outputs,
        passed: outcome.passed,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(outcome.passed)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> symdyn::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn equilibrium(config: &Config) -> symdyn::Result<Arc<GibbsMeasure>> {
    Ok(Arc::new(GibbsMeasure::new(&config.potential)?))
}

fn pressure(config: &Config, out: &Path) -> symdyn::Result<Outcome> {
    let g = equilibrium(config)?;
    let s = g.spectral();
    let (entropy, variational_defect) = g.entropy_and_variational_check();
    let report = PressureReport {
        lambda: s.lambda,
        pressure: s.pressure,
        gap: s.gap,
        residual_right: s.residual_right,
        residual_left: s.residual_left,
        iterations: s.iterations,
        entropy,
        variational_defect,
    };
    println!("pressure {:.15}", report.pressure);
    write_json(&out.join("pressure.json"), &report)?;
    Ok(Outcome { outputs: vec!["pressure.json".into()], passed: true })
}

fn gibbs(config: &Config, out: &Path, depth: usize) -> symdyn::Result<Outcome> {
    let g = equilibrium(config)?;
    let mut rows = Vec::new();
    for len in 1..=depth {
        for w in config.system.words(len) {
            rows.push(CylinderRow { mass: g.cylinder_mass_word(&w), word: digits(&w), start: 0 });
        }
    }
    write_csv(&out.join("gibbs.csv"), &rows)?;
    Ok(Outcome { outputs: vec!["gibbs.csv".into()], passed: true })
}

fn marcus(config: &Config, out: &Path, tol: f64, n_max: usize) -> symdyn::Result<Outcome> {
    let g = equilibrium(config)?;
    let m = Marcus::new(Arc::new(LeafFamily::new(g)));
    let reports: Vec<_> = config.observables.par_iter().map(|(id, h)| m.converge(id, h, tol, n_max)).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut passed = true;
    for r in reports {
        for row in &r.rows {
            rows.push(MarcusRow {
                observable: r.id.clone(),
                n: row.n,
                inf: row.inf,
                sup: row.sup,
                gap: row.gap,
                reference: r.reference,
                defect: (row.inf - r.reference).abs().max((row.sup - r.reference).abs()),
            });
        }
        let ok = r.converged_at.is_some() && r.monotone;
        passed &= ok;
        println!(
            "{} converged_at={} limit={:.12} reference={:.12} {}",
            r.id,
            r.converged_at.map_or("none".into(), |n| n.to_string()),
            r.limit,
            r.reference,
            if ok { "ok" } else { "FAIL" }
        );
        summary.push(MarcusSummary {
            observable: r.id,
            converged_at: r.converged_at,
            limit: r.limit,
            reference: r.reference,
            defect: r.defect,
            monotone: r.monotone,
        });
    }
    write_csv(&out.join("marcus.csv"), &rows)?;
    write_csv(&out.join("marcus_summary.csv"), &summary)?;
    Ok(Outcome { outputs: vec!["marcus.csv".into(), "marcus_summary.csv".into()], passed })
}

fn rigidity(config: &Config, out: &Path, tol: f64, seed: u64, n_max: usize) -> symdyn::Result<Outcome> {
    let g = equilibrium(config)?;
    let leaves = Arc::new(LeafFamily::new(Arc::clone(&g)));
    let m = Marcus::new(Arc::clone(&leaves));
    let class_depth = config.observables.iter().map(|(_, h)| m.class_depth(h)).max().unwrap_or(1);
    let depth = n_max + class_depth;
    let mut rng = stream_rng(seed, STREAM_MARGINALS);
    let measures = config
        .marginals(&g, &mut rng)?
        .into_iter()
        .map(|p| glue(p, Arc::clone(&leaves), depth))
        .collect::<symdyn::Result<Vec<_>>>()?;
    let rows = rigidity_experiment(&m, &measures, &config.observables, tol, n_max)?;
    let passed = rows.iter().all(|r| r.pass);
    for r in rows.iter().filter(|r| !r.pass) {
        println!("{} / {}: defect {:e} at n = {}", r.marginal, r.observable, r.defect, r.n);
    }
    println!("{} of {} rows within {tol:e}", rows.iter().filter(|r| r.pass).count(), rows.len());
    write_csv(&out.join("rigidity.csv"), &rows)?;
    Ok(Outcome { outputs: vec!["rigidity.csv".into()], passed })
}

fn leafwise_check(
    config: &Config,
    out: &Path,
    tol: f64,
    seed: u64,
    depth: usize,
    base_points: usize,
) -> symdyn::Result<Outcome> {
    let g = equilibrium(config)?;
    let leaves = LeafFamily::new(g);
    let radius = leaves.past_depth().max(depth) + 1;
    let mut rng = stream_rng(seed, STREAM_BASE_POINTS);
    let points: Vec<_> = (0..base_points).map(|_| random_point(&config.system, &mut rng, radius)).collect();
    let rows: Vec<LeafwiseRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let q = leaves.quasi_invariance_check(z, depth);
            LeafwiseRow {
                base: i,
                point: digits(&z.window(-(radius as i64), radius as i64)),
                factor: q.factor,
                defect: q.defect,
                cylinders: q.cylinders,
            }
        })
        .collect();
    let worst = rows.iter().map(|r| r.defect).fold(0.0, f64::max);
    println!("max relative defect {worst:e} over {} base points", rows.len());
    write_csv(&out.join("leafwise.csv"), &rows)?;
    Ok(Outcome { outputs: vec!["leafwise.csv".into()], passed: worst < tol })
}

fn birkhoff(
    config: &Config,
    out: &Path,
    seed: u64,
    horizon: Option<f64>,
    orbits: Option<usize>,
) -> symdyn::Result<Outcome> {
    let roof = config.roof.as_ref().ok_or_else(|| Error::Config("birkhoff needs a roof".into()))?;
    let phi = config.flow_potential.as_ref().ok_or_else(|| Error::Config("birkhoff needs a flow_potential".into()))?;
    let spec = config.file.birkhoff.as_ref();
    let horizon = horizon.or(spec.map(|b| b.horizon)).unwrap_or(100.0);
    let orbits = orbits.or(spec.map(|b| b.orbits)).unwrap_or(32);
    let g = equilibrium(config)?;
    let r = birkhoff_cross_check(phi, roof, &g, horizon, orbits, seed)?;
    let rows: Vec<OrbitRow> =
        r.per_orbit.iter().enumerate().map(|(orbit, &average)| OrbitRow { orbit, average }).collect();
    write_csv(&out.join("birkhoff.csv"), &rows)?;
    let summary = BirkhoffSummary {
        flow_average: r.flow_average,
        reference: r.reference,
        defect: r.defect,
        std_error: r.std_error,
        max_return_time: r.max_return_time,
        transversal_ok: r.transversal_ok,
    };
    println!("flow average {:.10} reference {:.10} (std error {:.2e})", r.flow_average, r.reference, r.std_error);
    write_json(&out.join("birkhoff.json"), &summary)?;
    // sampling error only, so allow four standard errors
    let passed = r.transversal_ok && r.defect <= 4.0 * r.std_error + 1e-12;
    Ok(Outcome { outputs: vec!["birkhoff.csv".into(), "birkhoff.json".into()], passed })
}
