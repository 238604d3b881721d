use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ncx_core::convexify::{convexify_problem, Policy};
use ncx_core::curvature::{curvature_of, detect_nonconvex, verify_convex, Domain};
use ncx_core::eval::{eval_corpus, sweep_iterations, time_breakdown, Corpus};
use ncx_core::gateway::{GatewayConfig, ModelGateway};
use ncx_core::model::{emit_dsl, extract_from_nl, parse_json};
use ncx_core::pipeline::{run, Ablations, Input, PipelineConfig};
use ncx_core::solve::{emit_script, ScriptBackend};
use ncx_core::{parse_problem, Assignment, Problem};

#[derive(Parser)]
#[command(
    name = "ncx",
    version,
    about = "Convexify, solve and repair optimization problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablate {
    Convex,
    Ecl,
    Fdc,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Maximum number of error-correction repairs.
    #[arg(long, default_value_t = 3)]
    max_ecl: usize,
    /// Maximum number of feasibility-correction iterations.
    #[arg(long, default_value_t = 6)]
    max_fdc: usize,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Disable a pipeline stage; may be repeated.
    #[arg(long, value_enum)]
    ablate: Vec<Ablate>,
    /// Gateway configuration (TOML) for model-assisted repairs.
    #[arg(long)]
    gateway: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a problem file.
    Solve {
        file: PathBuf,
        /// Initial point, e.g. `x=1,y=2`.
        #[arg(long)]
        x0: Option<String>,
        /// Write the JSON run report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print curvature verdicts and the non-convex components.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Convexify and print the surrogate, or a solver script for it.
    Transform {
        file: PathBuf,
        #[arg(long)]
        x0: Option<String>,
        /// One of scipy, cvxpy, gurobi.
        #[arg(long)]
        emit_script: Option<ScriptBackend>,
    },
    /// Evaluate a corpus manifest (or `builtin:<name>`).
    Eval {
        corpus: String,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated K values to sweep.
        #[arg(long, value_delimiter = ',')]
        sweep_k: Vec<usize>,
        /// Comma-separated L values to sweep.
        #[arg(long, value_delimiter = ',')]
        sweep_l: Vec<usize>,
        /// Write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write flat CSV metrics here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Formulate a problem from a natural-language description.
    Extract {
        desc: PathBuf,
        #[arg(long)]
        gateway: PathBuf,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Write the formulation here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure that maps to an exit code.
enum Failure {
    /// Exit 1: the run completed but did not succeed.
    Run(String),
    /// Exit 2: bad input.
    Input(String),
}

type CmdResult = Result<(), Failure>;

fn input_err(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let text = read(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        parse_json(text.as_bytes())
    } else {
        parse_problem(&text)
    };
    parsed.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn parse_point(text: &str) -> Result<Assignment, Failure> {
    let mut a = Assignment::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| input_err(format!("expected name=value, got `{part}`")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| input_err(format!("bad number in `{part}`")))?;
        a.insert(name.trim(), v).map_err(input_err)?;
    }
    Ok(a)
}

fn load_gateway(path: &Path) -> Result<Arc<dyn ModelGateway>, Failure> {
    let mut cfg = GatewayConfig::from_toml(&read(path)?).map_err(input_err)?;
    // fixture paths are relative to the config file
    if let (Some(f), Some(dir)) = (cfg.fixture.as_mut(), path.parent()) {
        if f.is_relative() {
            *f = dir.join(&*f);
        }
    }
    Ok(Arc::new(cfg.build().map_err(input_err)?))
}

fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig, Failure> {
    let mut ablations = Ablations::default();
    for a in &args.ablate {
        match a {
            Ablate::Convex => ablations.disable_convexify = true,
            Ablate::Ecl => ablations.disable_ecl = true,
            Ablate::Fdc => ablations.disable_fdc = true,
        }
    }
    let cfg = PipelineConfig {
        max_ecl: args.max_ecl,
        max_fdc: args.max_fdc,
        eps: args.eps,
        ablations,
        gateway: args.gateway.as_deref().map(load_gateway).transpose()?,
        ..PipelineConfig::default()
    };
    cfg.validate().map_err(Failure::Input)?;
    Ok(cfg)
}

fn solve_cmd(file: &Path, x0: Option<&str>, report: Option<&Path>, args: &RunArgs) -> CmdResult {
    let pb = load_problem(file)?;
    let mut cfg = pipeline_config(args)?;
    if let Some(x0) = x0 {
        cfg.x0 = parse_point(x0)?;
    }
    let r = run(Input::Problem(pb), &cfg);
    if let Some(path) = report {
        let text = serde_json::to_string_pretty(&r.to_json()).expect("report serializes");
        write(path, &text)?;
    }
    println!("execute: {}", u8::from(r.execute_flag));
    println!("success: {}", u8::from(r.success_flag));
    if let Some(status) = r.status {
        println!("status: {status}");
    }
    if let Some(obj) = r.objective {
        println!("objective: {obj}");
    }
    if let Some(x) = &r.x {
        for (k, v) in x.iter() {
            println!("  {k} = {v}");
        }
    }
    for e in &r.ecl_trace {
        println!(
            "repair after attempt {}: {:?} ({})",
            e.iteration, e.action, e.error.class
        );
    }
    for e in &r.fdc_trace {
        println!(
            "correction l={} stage={} feasible={}{}",
            e.l,
            e.stage,
            e.feasible,
            e.error
                .as_deref()
                .map(|m| format!(" error: {m}"))
                .unwrap_or_default()
        );
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    if r.success_flag {
        Ok(())
    } else {
        Err(Failure::Run(match &r.failure {
            Some(f) => format!("{}: {}", f.class, f.message),
            None => "final point is not feasible".to_string(),
        }))
    }
}

fn analyze_cmd(file: &Path, as_json: bool) -> CmdResult {
    let pb = load_problem(file)?;
    let d = Domain::from_problem(&pb);
    let functions: Vec<_> = pb
        .functions()
        .map(|(loc, e)| (loc.to_string(), curvature_of(e, &d).to_string()))
        .collect();
    let comps = detect_nonconvex(&pb);
    let convex = verify_convex(&pb);
    if as_json {
        let v = json!({
            "problem": pb.name,
            "convex": convex,
            "curvature": functions.iter().map(|(l, c)| json!({"location": l, "curvature": c})).collect::<Vec<_>>(),
            "components": comps,
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("serializes"));
    } else {
        println!(
            "problem {} ({})",
            pb.name,
            if convex {
                "convex"
            } else {
                "not certified convex"
            }
        );
        for (loc, c) in &functions {
            println!("  {loc:<12} {c}");
        }
        for c in &comps {
            println!("component: {c}");
        }
    }
    Ok(())
}

fn transform_cmd(file: &Path, x0: Option<&str>, backend: Option<ScriptBackend>) -> CmdResult {
    let pb = load_problem(file)?;
    let x0 = x0.map(parse_point).transpose()?.unwrap_or_default();
    let pc =
        convexify_problem(&pb, &x0, &Policy::default()).map_err(|e| Failure::Run(e.to_string()))?;
    match backend {
        Some(b) => {
            let script = emit_script(&pc, b).map_err(|e| Failure::Run(e.to_string()))?;
            print!("{script}");
        }
        None => {
            print!("{}", emit_dsl(pc.problem()));
            for e in &pc.record().entries {
                eprintln!(
                    "{}: {} `{}` -> `{}`",
                    e.location, e.strategy, e.before, e.after
                );
            }
        }
    }
    Ok(())
}

fn load_corpus(spec: &str) -> Result<Corpus, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Corpus::builtin(name).ok_or_else(|| {
            let names: Vec<_> = Corpus::builtin_names().collect();
            input_err(format!(
                "unknown built-in corpus `{name}` (have {})",
                names.join(", ")
            ))
        });
    }
    Corpus::load(Path::new(spec)).map_err(input_err)
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    corpus: &str,
    repeats: usize,
    seed: u64,
    sweep_k: &[usize],
    sweep_l: &[usize],
    json_out: Option<&Path>,
    csv_out: Option<&Path>,
    args: &RunArgs,
) -> CmdResult {
    let c = load_corpus(corpus)?;
    let cfg = pipeline_config(args)?;
    if !sweep_k.is_empty() || !sweep_l.is_empty() {
        let ks = if sweep_k.is_empty() {
            vec![cfg.max_ecl]
        } else {
            sweep_k.to_vec()
        };
        let ls = if sweep_l.is_empty() {
            vec![cfg.max_fdc]
        } else {
            sweep_l.to_vec()
        };
        let sweep = sweep_iterations(&c, &cfg, &ks, &ls, repeats, seed).map_err(input_err)?;
        print!("{}", sweep.to_csv());
        if let Some(p) = json_out {
            write(
                p,
                &serde_json::to_string_pretty(&sweep).expect("serializes"),
            )?;
        }
        if let Some(p) = csv_out {
            write(p, &sweep.to_csv())?;
        }
        return Ok(());
    }
    let r = eval_corpus(&c, &cfg, repeats, seed).map_err(input_err)?;
    println!(
        "corpus {} ({} problems, {} repeats)",
        r.corpus,
        r.problems.len(),
        repeats
    );
    for p in &r.problems {
        println!(
            "  {:<24} SR {:.2}  ER {:.2}",
            p.name,
            p.success_rate(),
            p.execution_rate()
        );
    }
    println!("SR {:.4}  ER {:.4}", r.sr, r.er);
    let shares = time_breakdown(&r);
    print!("{}", shares.render());
    if let Some(p) = json_out {
        let v = json!({ "metrics": r, "time_breakdown": shares });
        write(p, &serde_json::to_string_pretty(&v).expect("serializes"))?;
    }
    if let Some(p) = csv_out {
        write(p, &r.to_csv())?;
    }
    Ok(())
}

fn extract_cmd(desc: &Path, gateway: &Path, rounds: usize, out: Option<&Path>) -> CmdResult {
    let text = read(desc)?;
    let gw = load_gateway(gateway)?;
    let ex =
        extract_from_nl(&text, gw.as_ref(), rounds).map_err(|e| Failure::Run(e.to_string()))?;
    for d in &ex.diagnostics {
        eprintln!("note: {d}");
    }
    let dsl = emit_dsl(&ex.problem);
    match out {
        Some(p) => write(p, &dsl),
        None => {
            print!("{dsl}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve {
            file,
            x0,
            report,
            run,
        } => solve_cmd(file, x0.as_deref(), report.as_deref(), run),
        Command::Analyze { file, json } => analyze_cmd(file, *json),
        Command::Transform {
            file,
            x0,
            emit_script,
        } => transform_cmd(file, x0.as_deref(), *emit_script),
        Command::Eval {
            corpus,
            repeats,
            seed,
            sweep_k,
            sweep_l,
            json,
            csv,
            run,
        } => eval_cmd(
            corpus,
            *repeats,
            *seed,
            sweep_k,
            sweep_l,
            json.as_deref(),
            csv.as_deref(),
            run,
        ),
        Command::Extract {
            desc,
            gateway,
            rounds,
            out,
        } => extract_cmd(desc, gateway, *rounds, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("ncx: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("ncx: {msg}");
            ExitCode::from(2)
        }
    }
}
