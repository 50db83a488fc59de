use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qssr_core::experiments::run_sweep;
use qssr_core::grid::Field;
use qssr_core::integrator::integrate_with_stops;
use qssr_core::io::{convergence_table, format_number, profile_table, projection_table, Profile, Table};
use qssr_core::models::{FullState, ModelKind, ReducedState};
use qssr_core::mol::{deinterleave, interleave};
use qssr_core::tf::{register_mm_decompositions, verify_oracle, VerifyOptions};
use qssr_core::{
    build_initial_profiles, build_laplacian, project_initial_values, Error, Grid1D, IntegratorError, Model,
    MolSystem, RunConfig,
};

/// Largest accepted deviation between generic and closed-form reductions.
const ORACLE_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "qssr", version, about = "Michaelis-Menten reaction-diffusion QSS reduction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated ε values (overrides `epsilon`/`epsilons`)
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Seed for randomized checks (overrides `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one model and write profile snapshots
    Simulate(Common),
    /// Sweep ε and compare the full model with its reduction
    Converge(Common),
    /// Check closed-form reductions against the generic projection
    VerifyTf {
        #[command(flatten)]
        common: Common,
        /// Random states per variant and grid size (overrides `verify.samples`)
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated cell counts (overrides `verify.cells`)
        #[arg(long, value_delimiter = ',')]
        cells: Option<Vec<usize>>,
        #[arg(long, hide = true)]
        corrupt_closed_form: bool,
    },
    /// Write raw and projected initial data
    ProjectIc(Common),
}

enum Failure {
    Verification(String),
    Solver(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<IntegratorError> for Failure {
    fn from(e: IntegratorError) -> Self {
        Failure::Core(Error::Integrator(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integrator(_) => 3,
        _ => 2,
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::from_file(&common.config)?;
    if let Some(eps) = &common.epsilon {
        cfg.epsilon = eps.first().copied();
        cfg.epsilons = eps.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let spec = cfg.model_spec()?;
    let grid = cfg.grid;
    let n = grid.cell_count();
    let kind = spec.kind;
    let rev = kind.is_reversible() || kind == ModelKind::SlowComplexFormation;
    let raw = build_initial_profiles(&cfg.initial, &grid, rev)?;
    let sys = MolSystem::new(Model::new(spec, build_laplacian(grid))?);
    let m = kind.species().len();

    let blocked: Vec<f64> = if kind.is_full() {
        let mut v = raw.s.to_vec();
        v.extend_from_slice(&raw.c_star);
        v.extend_from_slice(&raw.y_star);
        if let Some(p) = &raw.p {
            v.extend_from_slice(p);
        }
        v
    } else if kind == ModelKind::SlowComplexFormation {
        let mut v = raw.s.to_vec();
        v.extend(raw.y_star.iter().zip(raw.c_star.iter()).map(|(y, c)| y - c));
        v.extend_from_slice(raw.p.as_ref().expect("built with p"));
        v
    } else {
        let (red, _) = project_initial_values(&raw, &cfg.rates)?;
        let mut v = red.s.to_vec();
        v.extend_from_slice(&red.y_star);
        if let Some(p) = &red.p {
            v.extend_from_slice(p);
        }
        v
    };

    let traj = match integrate_with_stops(&sys, &interleave(&blocked, m, n), cfg.t_end, &cfg.snapshots, &cfg.integrator) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("integration failed for {kind}");
            return Err(e.into());
        }
    };
    let mut times: Vec<f64> = cfg.snapshots.clone();
    times.push(cfg.t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();

    for (k, &t) in times.iter().enumerate() {
        let state = traj.state_at(t).expect("stop times are recorded");
        let x = deinterleave(state, m, n);
        let field = |i: usize| Field::new(x[i * n..(i + 1) * n].to_vec());
        let mut table = if kind.is_full() {
            let st = FullState {
                s: field(0)?,
                c_star: field(1)?,
                y_star: field(2)?,
                p: if rev { Some(field(3)?) } else { None },
            };
            profile_table(&grid, Profile::Full(&st))?
        } else if kind == ModelKind::SlowComplexFormation {
            let (s, e, p) = (field(0)?, field(1)?, field(2)?);
            profile_table(&grid, Profile::SlowComplex { s: &s, e: &e, p: &p })?
        } else {
            let st = ReducedState {
                s: field(0)?,
                y_star: field(1)?,
                p: if rev { Some(field(2)?) } else { None },
            };
            profile_table(&grid, Profile::Reduced(&st, &cfg.rates))?
        };
        let mut meta = format!("model={kind},t={}", format_number(t));
        if let Some(e) = spec.epsilon {
            meta.push_str(&format!(",epsilon={}", format_number(e)));
        }
        table.trailer.push(meta);
        let path = out.join(format!("snapshot_{k:03}.csv"));
        table.write_file(&path)?;
        println!("wrote {}", path.display());
    }
    let st = traj.stats;
    eprintln!(
        "steps={} rejected={} newton={} jacobians={} factorizations={}",
        st.steps, st.rejected_steps, st.newton_iterations, st.jacobian_evaluations, st.factorizations
    );
    Ok(())
}

fn converge(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let spec = cfg.sweep_spec()?;
    let report = run_sweep(&spec, common.jobs)?;
    let table = convergence_table(&report);
    let path = out.join("convergence.csv");
    table.write_file(&path)?;
    for r in &report.records {
        match &r.failure {
            None => println!(
                "epsilon={:e} err_s={:.3e} err_cstar={:.3e} err_ystar={:.3e}{}",
                r.epsilon,
                r.err_s,
                r.err_cstar,
                r.err_ystar,
                r.err_p.map_or(String::new(), |p| format!(" err_p={p:.3e}"))
            ),
            Some(why) => println!("epsilon={:e} FAILED: {why}", r.epsilon),
        }
    }
    if let Some(line) = table.trailer.iter().find(|l| l.starts_with("slope_")) {
        println!("{line}");
    }
    println!("wrote {}", path.display());
    if report.records.iter().all(|r| !r.ok()) {
        return Err(Failure::Solver("every point of the sweep failed".into()));
    }
    Ok(())
}

fn verify_tf(common: &Common, samples: Option<usize>, cells: Option<Vec<usize>>, corrupt: bool) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let samples = samples.unwrap_or(cfg.verify.samples);
    let cells = cells.unwrap_or_else(|| cfg.verify.cells.clone());
    if samples == 0 || cells.iter().any(|&n| n == 0) {
        return Err(Error::Config("samples and cells must be positive".into()).into());
    }
    let mut table = Table::new(&[
        "cells",
        "max_rel_deviation",
        "max_idempotency_defect",
        "max_annihilation_defect",
        "max_tangency_defect",
        "max_eigen_real",
    ]);
    let mut worst = 0.0_f64;
    let opts = VerifyOptions { corrupt_closed_form: corrupt, ..Default::default() };
    for &n in &cells {
        let grid = Grid1D::new(cfg.grid.length(), n)?;
        for d in register_mm_decompositions(grid, cfg.rates, cfg.diffusion)? {
            let check = verify_oracle(&d, samples, cfg.seed, opts)?;
            worst = worst.max(check.max_rel_deviation);
            println!(
                "{} N={n} samples={samples} max_rel_deviation={:.3e} spectral_ok={}",
                check.variant.name(),
                check.max_rel_deviation,
                check.spectral_ok
            );
            table.rows.push(vec![
                n as f64,
                check.max_rel_deviation,
                check.max_idempotency_defect,
                check.max_annihilation_defect,
                check.max_tangency_defect,
                check.max_eigen_real,
            ]);
            table.trailer.push(format!("row {}: variant={}", table.rows.len(), check.variant.name()));
        }
    }
    table.trailer.push(format!("seed={},samples={samples}", cfg.seed));
    let path = out.join("verify_tf.csv");
    table.write_file(&path)?;
    println!("max deviation {worst:.3e} (tolerance {ORACLE_TOL:e})");
    if worst <= ORACLE_TOL {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure::Verification(format!("deviation {worst:.3e} exceeds {ORACLE_TOL:e}")))
    }
}

fn project_ic(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let rev = cfg.model.is_reversible();
    let raw = build_initial_profiles(&cfg.initial, &cfg.grid, rev)?;
    let (projected, c) = project_initial_values(&raw, &cfg.rates)?;
    let table = projection_table(&cfg.grid, &raw, &projected, &c)?;
    let path: PathBuf = Path::new(&out).join("projected_ic.csv");
    table.write_file(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Converge(c) => converge(c),
        Command::VerifyTf { common, samples, cells, corrupt_closed_form } => {
            verify_tf(common, *samples, cells.clone(), *corrupt_closed_form)
        }
        Command::ProjectIc(c) => project_ic(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
