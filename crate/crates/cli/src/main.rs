//! Benchmark front end: selects a problem and method matrix, runs the
//! integrator, and emits a CSV report plus plot-ready solution and
//! step-field snapshots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use madode::{
    integrate, write_checkpoint, BenchmarkProblem, BuiltProblem, IntegratorConfig, MethodTable,
    Mode, ProblemKind, RunReport, SolutionTrace, Variant,
};

#[derive(Parser, Debug)]
#[command(name = "madode", about = "Multi-adaptive Galerkin ODE benchmark runner")]
struct Cli {
    /// Problem: reaction-diffusion-1d|wave-1d-refined|exponential-decay|harmonic-oscillator
    /// (aliases: rd, wave, decay, harmonic)
    #[arg(long)]
    problem: Option<String>,
    /// Method: mcg|mdg (multi-adaptive) or cg|dg (mono-adaptive)
    #[arg(long)]
    method: Option<String>,
    /// Polynomial order q
    #[arg(long)]
    order: Option<usize>,
    /// Stepping mode: adaptive|fixed
    #[arg(long)]
    mode: Option<String>,
    /// Tolerance, or a comma-separated list for a tolerance sweep
    #[arg(long)]
    tol: Option<String>,
    /// Slab partition threshold in (0, 1)
    #[arg(long)]
    theta: Option<f64>,
    /// Maximum time step (also the fixed step for problems without a mesh)
    #[arg(long)]
    kmax: Option<f64>,
    /// Final time T
    #[arg(long = "end-time")]
    end_time: Option<f64>,
    /// Spatial mesh points (reaction-diffusion)
    #[arg(long = "mesh-n")]
    mesh_n: Option<usize>,
    /// Spatial domain length
    #[arg(long = "domain-length")]
    domain_length: Option<f64>,
    /// Mesh refinement ratio (wave)
    #[arg(long = "refine-ratio")]
    refine_ratio: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a binary solution checkpoint (trace.bin)
    #[arg(long, default_value_t = false)]
    trace: bool,
    /// RNG seed (reserved for sparsity probing; pinned for determinism)
    #[arg(long)]
    seed: Option<u64>,
    /// Use paper-scale problem sizes instead of desk-scale defaults
    #[arg(long = "paper-scale", default_value_t = false)]
    paper_scale: bool,
    /// Flat key=value config file; command-line flags win on conflict
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug)]
struct Settings {
    problem: ProblemKind,
    variant: Variant,
    multi: bool,
    order: usize,
    fixed: bool,
    tols: Vec<f64>,
    theta: f64,
    kmax: Option<f64>,
    end_time: Option<f64>,
    mesh_n: Option<usize>,
    domain_length: Option<f64>,
    refine_ratio: Option<usize>,
    out: PathBuf,
    trace: bool,
    #[allow(dead_code)]
    seed: u64,
    paper_scale: bool,
}

fn parse_problem(s: &str) -> Result<ProblemKind, String> {
    match s {
        "reaction-diffusion-1d" | "rd" => Ok(ProblemKind::ReactionDiffusion1d),
        "wave-1d-refined" | "wave" => Ok(ProblemKind::Wave1dRefined),
        "exponential-decay" | "decay" => Ok(ProblemKind::ExponentialDecay),
        "harmonic-oscillator" | "harmonic" => Ok(ProblemKind::HarmonicOscillator),
        other => Err(format!("unknown problem '{other}'")),
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("config {path:?}: {e}"))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn settings(cli: &Cli) -> Result<Settings, String> {
    let cfg = match &cli.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    let get = |key: &str| cfg.get(key).cloned();
    let parse_num = |key: &str| -> Result<Option<f64>, String> {
        get(key)
            .map(|v| v.parse::<f64>().map_err(|e| format!("config {key}: {e}")))
            .transpose()
    };

    let problem_s = cli
        .problem
        .clone()
        .or_else(|| get("problem"))
        .ok_or("missing --problem")?;
    let method_s = cli
        .method
        .clone()
        .or_else(|| get("method"))
        .ok_or("missing --method")?;
    let (variant, multi) = match method_s.as_str() {
        "mcg" => (Variant::Cg, true),
        "mdg" => (Variant::Dg, true),
        "cg" => (Variant::Cg, false),
        "dg" => (Variant::Dg, false),
        other => return Err(format!("unknown method '{other}' (use mcg|mdg|cg|dg)")),
    };
    let mode_s = cli
        .mode
        .clone()
        .or_else(|| get("mode"))
        .unwrap_or_else(|| "adaptive".into());
    let fixed = match mode_s.as_str() {
        "adaptive" => false,
        "fixed" => true,
        other => return Err(format!("unknown mode '{other}' (use adaptive|fixed)")),
    };
    let tol_s = cli
        .tol
        .clone()
        .or_else(|| get("tol"))
        .unwrap_or_else(|| "1e-4".into());
    let tols: Vec<f64> = tol_s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("tol: {e}")))
        .collect::<Result<_, _>>()?;
    if tols.iter().any(|&t| !(t > 0.0)) {
        return Err("tolerances must be positive".into());
    }
    let order = match cli.order.or(get("order").map(|v| v.parse().map_err(|e| format!("order: {e}"))).transpose()?) {
        Some(q) => q,
        None => 1,
    };
    let mesh_n = match cli.mesh_n {
        Some(v) => Some(v),
        None => get("mesh-n")
            .map(|v| v.parse().map_err(|e| format!("mesh-n: {e}")))
            .transpose()?,
    };
    let refine_ratio = match cli.refine_ratio {
        Some(v) => Some(v),
        None => get("refine-ratio")
            .map(|v| v.parse().map_err(|e| format!("refine-ratio: {e}")))
            .transpose()?,
    };
    let seed = match cli.seed {
        Some(v) => v,
        None => get("seed")
            .map(|v| v.parse().map_err(|e| format!("seed: {e}")))
            .transpose()?
            .unwrap_or(0),
    };
    Ok(Settings {
        problem: parse_problem(&problem_s)?,
        variant,
        multi,
        order,
        fixed,
        tols,
        theta: cli.theta.or(parse_num("theta")?).unwrap_or(0.5),
        kmax: cli.kmax.or(parse_num("kmax")?),
        end_time: cli.end_time.or(parse_num("end-time")?),
        mesh_n,
        domain_length: cli.domain_length.or(parse_num("domain-length")?),
        refine_ratio,
        out: cli
            .out
            .clone()
            .or_else(|| get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out")),
        trace: cli.trace || get("trace").map(|v| v == "true").unwrap_or(false),
        seed,
        paper_scale: cli.paper_scale || get("paper-scale").map(|v| v == "true").unwrap_or(false),
    })
}

fn build_problem(s: &Settings) -> Result<BuiltProblem<f64>, String> {
    let mut bench = BenchmarkProblem::new(s.problem);
    match s.problem {
        ProblemKind::ReactionDiffusion1d => {
            let default_n = if s.paper_scale { 1000 } else { 100 };
            bench = bench.with("mesh_n", s.mesh_n.unwrap_or(default_n) as f64);
            if let Some(l) = s.domain_length {
                bench = bench.with("length", l);
            }
        }
        ProblemKind::Wave1dRefined => {
            let default_r = 16;
            bench = bench.with("refine_ratio", s.refine_ratio.unwrap_or(default_r) as f64);
            if s.paper_scale {
                bench = bench.with("base_cells", 64.0);
            }
            if let Some(l) = s.domain_length {
                bench = bench.with("length", l);
            }
        }
        _ => {}
    }
    if let Some(t) = s.end_time {
        bench = bench.with("end_time", t);
    }
    bench.build().map_err(|e| e.to_string())
}

fn method_label(s: &Settings) -> String {
    let base = match (s.variant, s.multi) {
        (Variant::Cg, true) => "mcg",
        (Variant::Dg, true) => "mdg",
        (Variant::Cg, false) => "cg",
        (Variant::Dg, false) => "dg",
    };
    base.to_string()
}

fn problem_label(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::ReactionDiffusion1d => "reaction-diffusion-1d",
        ProblemKind::Wave1dRefined => "wave-1d-refined",
        ProblemKind::ExponentialDecay => "exponential-decay",
        ProblemKind::HarmonicOscillator => "harmonic-oscillator",
    }
}

fn integrator_config(s: &Settings, tol: f64, built: &BuiltProblem<f64>) -> Result<IntegratorConfig<f64>, String> {
    let mode = if s.fixed {
        Mode::FixedSteps
    } else if s.multi {
        Mode::MultiAdaptive
    } else {
        Mode::MonoAdaptive
    };
    let mut cfg = IntegratorConfig::new(s.variant, s.order, mode, tol);
    cfg.theta = s.theta;
    if let Some(k) = s.kmax {
        cfg.k_max = k;
    } else if s.problem == ProblemKind::ReactionDiffusion1d {
        // Keep macro steps short enough for the step field to follow the
        // moving front.
        cfg.k_max = 0.01;
    }
    if s.fixed {
        let steps = match &built.local_mesh_size {
            // CFL-style assignment k(x) = 0.1 h(x); mono methods share the
            // smallest step.
            Some(h) => {
                let ks: Vec<f64> = h.iter().map(|&hi| 0.1 * hi).collect();
                if s.multi {
                    ks
                } else {
                    let k_min = ks.iter().cloned().fold(f64::INFINITY, f64::min);
                    vec![k_min; ks.len()]
                }
            }
            None => {
                let k = s.kmax.ok_or("fixed mode needs --kmax for problems without a mesh")?;
                vec![k; built.system.n()]
            }
        };
        cfg.fixed_steps = Some(steps);
    }
    Ok(cfg)
}

fn emit_snapshots(
    trace: &SolutionTrace<f64>,
    positions: &[f64],
    times: &[f64],
    dir: &Path,
) -> Result<(), String> {
    let table =
        MethodTable::build(trace.variant, trace.order).map_err(|e| e.to_string())?;
    for &t in times {
        let mut sol = String::new();
        for i in 0..trace.n_components {
            let v = trace.value(i, t, &table).map_err(|e| e.to_string())?;
            sol.push_str(&format!("{:.12e} {:.12e}\n", positions[i], v));
        }
        let name = format!("solution_t{t:.4}.dat");
        fs::write(dir.join(name), sol).map_err(|e| e.to_string())?;
        if t > 0.0 {
            let ks = trace.local_steps_at(t).map_err(|e| e.to_string())?;
            let mut steps = String::new();
            for i in 0..trace.n_components {
                steps.push_str(&format!("{:.12e} {:.12e}\n", positions[i], ks[i]));
            }
            let name = format!("steps_t{t:.4}.dat");
            fs::write(dir.join(name), steps).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn reference_end_state(
    built: &BuiltProblem<f64>,
    s: &Settings,
    tol: f64,
) -> Result<Vec<f64>, String> {
    let mut cfg = IntegratorConfig::new(s.variant, s.order, Mode::MonoAdaptive, tol / 100.0);
    cfg.theta = s.theta;
    cfg.keep_trace = false;
    if let Some(k) = s.kmax {
        cfg.k_max = k;
    }
    let (trace, _) = integrate(&built.system, &cfg).map_err(|e| e.to_string())?;
    Ok(trace.end_state())
}

fn run_one(
    built: &BuiltProblem<f64>,
    s: &Settings,
    tol: f64,
) -> Result<(SolutionTrace<f64>, RunReport<f64>, f64), String> {
    let cfg = integrator_config(s, tol, built)?;
    let (trace, run) = integrate(&built.system, &cfg).map_err(|e| e.to_string())?;
    let reference = reference_end_state(built, s, tol)?;
    let error = trace
        .end_state()
        .iter()
        .zip(&reference)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    Ok((trace, run, error))
}

fn run(cli: &Cli) -> Result<bool, String> {
    let s = settings(cli)?;
    let built = build_problem(&s)?;
    fs::create_dir_all(&s.out).map_err(|e| e.to_string())?;

    let mut csv = String::from(
        "problem,method,q,mode,tol,n_components,error,walltime_s,slabs,rejected,iters_global,iters_local,mu\n",
    );
    let mode_label = if s.fixed { "fixed" } else { "adaptive" };
    let mut last_trace = None;
    for &tol in &s.tols {
        let (trace, run, error) = run_one(&built, &s, tol)?;
        csv.push_str(&format!(
            "{},{},{},{},{:.6e},{},{:.6e},{:.3},{},{},{:.3},{:.3},{:.6}\n",
            problem_label(s.problem),
            method_label(&s),
            s.order,
            mode_label,
            tol,
            built.system.n(),
            error,
            run.wall_time_s,
            run.slabs,
            run.rejected,
            run.avg_global_iterations,
            run.avg_local_iterations,
            run.efficiency_index,
        ));
        last_trace = Some(trace);
    }
    fs::write(s.out.join("results.csv"), csv).map_err(|e| e.to_string())?;

    if let Some(trace) = &last_trace {
        let t_end = trace.end_time();
        let times: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|f| f * t_end)
            .collect();
        emit_snapshots(trace, &built.positions, &times, &s.out)?;
        if s.trace {
            write_checkpoint(trace, &s.out.join("trace.bin")).map_err(|e| e.to_string())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
