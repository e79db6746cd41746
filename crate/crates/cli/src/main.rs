//! `apc`: decides whether the `target;` statement of a program can be
//! reached, using path-counter loop summaries and an SMT solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use apc_core::formula_builder::{
    analyze, decide, prune_check, run_route, scripts, Analysis, DecideOptions, Prune, Route,
    Status, Verdict,
};
use apc_core::program_model::{parse_program, Program, Ty};
use apc_core::smt_backend::{parse_formula, Model, SatResult, Solver};
use apc_core::symexec::{Analyzer, Options};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "apc",
    version,
    about = "Necessary conditions for reaching a program location"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a program and decide whether its target may be reachable.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Check a frontier path condition (SMT-LIB) against the program's
    /// necessary condition.
    Prune {
        file: PathBuf,
        frontier: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run every `.apc` program of a directory and print a table.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Clone)]
struct Flags {
    /// Bound of every path counter in the unfolded query.
    #[arg(long = "unfold-K", value_name = "N", default_value_t = 25)]
    unfold_k: u32,
    /// Time limit of the final decision, in seconds.
    #[arg(long, value_name = "SECS", default_value_t = 30)]
    timeout: u64,
    /// Run the unfolded query before the direct one instead of in parallel.
    #[arg(long)]
    no_race: bool,
    /// Simplify iterated array states.
    #[arg(long)]
    simplify: bool,
    /// Print the control flow graph as JSON.
    #[arg(long)]
    emit_cfg: bool,
    /// Print the backbone paths and the loop entries.
    #[arg(long)]
    emit_backbones: bool,
    /// Print the path-condition parts of the backbone tree.
    #[arg(long)]
    emit_psi: bool,
    /// Print the loop summaries.
    #[arg(long)]
    emit_summaries: bool,
    /// Write the direct and unfolded queries to PATH.direct.smt2 and
    /// PATH.unfolded.smt2.
    #[arg(long, value_name = "PATH")]
    emit_smt: Option<PathBuf>,
    /// Print the verdict as JSON.
    #[arg(long)]
    json: bool,
}

impl Flags {
    fn decide_options(&self) -> DecideOptions {
        DecideOptions {
            unfold_k: self.unfold_k,
            timeout: Duration::from_secs(self.timeout),
            race: !self.no_race,
        }
    }

    fn analyzer(&self) -> Analyzer {
        let opts = Options {
            simplify: self.simplify,
            ..Options::default()
        };
        Analyzer::new(Solver::from_env(Duration::from_secs(self.timeout)), opts)
    }
}

const EXIT_SAT: u8 = 0;
const EXIT_UNSAT: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_INPUT: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Analyze { file, flags } => cmd_analyze(&file, &flags),
        Command::Prune {
            file,
            frontier,
            flags,
        } => cmd_prune(&file, &frontier, &flags),
        Command::Bench { dir, flags } => cmd_bench(&dir, &flags),
    };
    ExitCode::from(code.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        EXIT_INPUT
    }))
}

fn load(file: &Path) -> Result<Program, String> {
    let src = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    parse_program(&src).map_err(|e| format!("{}: {e}", file.display()))
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::Sat => EXIT_SAT,
        Status::Unsat => EXIT_UNSAT,
        Status::Unknown => EXIT_UNKNOWN,
    }
}

fn cmd_analyze(file: &Path, flags: &Flags) -> Result<u8, String> {
    let p = load(file)?;
    let a = analyze(&p, flags.analyzer());
    let artifacts = emit(&a, flags)?;
    let mut v = decide(&a.analyzer.solver, &a.phi, &flags.decide_options());
    v.timings.build_ms = a.build_ms;
    if flags.json {
        let mut out = verdict_json(&v, &a.program);
        merge(&mut out, artifacts.json);
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("verdict serializes")
        );
    } else {
        print!("{}", artifacts.text);
        print!("{}", verdict_text(&v, &a.program));
    }
    Ok(exit_code(v.status))
}

fn cmd_prune(file: &Path, frontier: &Path, flags: &Flags) -> Result<u8, String> {
    let p = load(file)?;
    let text =
        std::fs::read_to_string(frontier).map_err(|e| format!("{}: {e}", frontier.display()))?;
    let symbols: BTreeMap<String, usize> = p
        .vars
        .iter()
        .map(|(n, t)| (n.clone(), if let Ty::Array(d) = t { *d } else { 0 }))
        .collect();
    let f = parse_formula(&text, &symbols).map_err(|e| format!("{}: {e}", frontier.display()))?;
    let a = analyze(&p, flags.analyzer());
    let artifacts = emit(&a, flags)?;
    let (answer, mut v) = prune_check(&a.analyzer.solver, &f, &a.phi, &flags.decide_options());
    v.timings.build_ms = a.build_ms;
    let word = match &answer {
        Prune::Keep(_) => "keep",
        Prune::Drop => "drop",
        Prune::Unknown => "unknown",
    };
    if flags.json {
        let mut out = verdict_json(&v, &a.program);
        merge(&mut out, artifacts.json);
        out["answer"] = json!(word);
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("verdict serializes")
        );
    } else {
        print!("{}", artifacts.text);
        println!("{word}");
        if let Prune::Keep(Some(m)) = &answer {
            print!("{}", model_text(m, &a.program));
        }
    }
    Ok(exit_code(v.status))
}

fn cmd_bench(dir: &Path, flags: &Flags) -> Result<u8, String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "apc"))
        .collect();
    files.sort();
    let opts = flags.decide_options();
    let mut rows = Vec::new();
    for f in &files {
        let name = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let p = match load(f) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("{name}: {e}");
                continue;
            }
        };
        let a = analyze(&p, flags.analyzer());
        let t = std::time::Instant::now();
        let unfolded = apc_core::formula_builder::unfold(&a.phi, flags.unfold_k);
        let unfold_ms = t.elapsed().as_millis();
        drop(unfolded);
        let (direct, direct_ms) = run_route(&a.analyzer.solver, &a.phi, Route::Direct, &opts);
        let (bounded, bounded_ms) = run_route(&a.analyzer.solver, &a.phi, Route::Unfolded, &opts);
        rows.push(json!({
            "name": name,
            "build_ms": a.build_ms,
            "unfold_ms": unfold_ms,
            "direct": route_letter(&direct, Route::Direct),
            "solve_direct_ms": direct_ms,
            "unfolded": route_letter(&bounded, Route::Unfolded),
            "solve_unfolded_ms": bounded_ms,
        }));
    }
    if flags.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&rows).expect("rows serialize")
        );
    } else {
        println!(
            "{:<12} {:>9} {:>9} {:>6} {:>9} {:>8} {:>9}",
            "program", "build_ms", "unfold_ms", "direct", "ms", "unfolded", "ms"
        );
        for r in &rows {
            println!(
                "{:<12} {:>9} {:>9} {:>6} {:>9} {:>8} {:>9}",
                r["name"].as_str().unwrap_or(""),
                r["build_ms"],
                r["unfold_ms"],
                r["direct"].as_str().unwrap_or(""),
                r["solve_direct_ms"],
                r["unfolded"].as_str().unwrap_or(""),
                r["solve_unfolded_ms"],
            );
        }
    }
    Ok(EXIT_SAT)
}

/// S for satisfiable, U for unsatisfiable, X for no answer. An
/// unsatisfiable unfolding only bounds the counters and is shown as `U<=K`.
fn route_letter<E>(r: &Result<SatResult, E>, route: Route) -> &'static str {
    match (r, route) {
        (Ok(SatResult::Sat(_)), _) => "S",
        (Ok(SatResult::Unsat), Route::Direct) => "U",
        (Ok(SatResult::Unsat), Route::Unfolded) => "U<=K",
        _ => "X",
    }
}

struct Artifacts {
    text: String,
    json: Value,
}

fn emit(a: &Analysis, flags: &Flags) -> Result<Artifacts, String> {
    let mut text = String::new();
    let mut obj = serde_json::Map::new();
    if flags.emit_cfg {
        let cfg = a.program.to_json();
        let _ = writeln!(
            text,
            "# cfg\n{}",
            serde_json::to_string_pretty(&cfg).expect("cfg serializes")
        );
        obj.insert("cfg".into(), cfg);
    }
    if flags.emit_backbones {
        let b = a.tree.render();
        let _ = write!(text, "# backbones\n{b}");
        obj.insert("backbones".into(), json!(b));
    }
    if flags.emit_psi {
        let _ = write!(text, "# psi\n{}", a.psi);
        obj.insert("psi".into(), json!(a.psi));
    }
    if flags.emit_summaries {
        let s = a.analyzer.summaries.borrow().join("\n");
        let _ = write!(text, "# summaries\n{s}");
        obj.insert("summaries".into(), json!(s));
    }
    if let Some(path) = &flags.emit_smt {
        let (direct, unfolded) = scripts(&a.phi, flags.unfold_k);
        for (suffix, body) in [("direct.smt2", direct), ("unfolded.smt2", unfolded)] {
            let mut name = path.clone().into_os_string();
            name.push(".");
            name.push(suffix);
            std::fs::write(&name, body)
                .map_err(|e| format!("{}: {e}", Path::new(&name).display()))?;
        }
    }
    Ok(Artifacts {
        text,
        json: Value::Object(obj),
    })
}

fn merge(target: &mut Value, extra: Value) {
    if let (Value::Object(t), Value::Object(e)) = (target, extra) {
        t.extend(e);
    }
}

fn verdict_json(v: &Verdict, p: &Program) -> Value {
    let mut out = serde_json::to_value(v).expect("verdict serializes");
    if let Some(m) = &v.model {
        out["model"] = inputs_json(m, p);
    }
    out
}

/// Program inputs of a model: scalars by value, arrays as the model's
/// function text together with the string they spell from index 0.
fn inputs_json(m: &Model, p: &Program) -> Value {
    let mut obj = serde_json::Map::new();
    for (name, ty) in &p.vars {
        match ty {
            Ty::Int => {
                if let Some(v) = m.int(name) {
                    obj.insert(name.clone(), json!(v));
                }
            }
            Ty::Array(d) => {
                if let Some(lam) = m.functions.get(name) {
                    let mut entry = json!({ "function": lam.to_string() });
                    if *d == 1 {
                        if let Some(s) = decode_string(m, name) {
                            entry["string"] = json!(s);
                        }
                    }
                    obj.insert(name.clone(), entry);
                }
            }
        }
    }
    Value::Object(obj)
}

/// Reads a one-dimensional array from index 0 up to its first zero cell,
/// or at most [`DECODE_LIMIT`] cells, as a string of character codes.
/// Codes outside printable ASCII show as `?`.
pub fn decode_string(m: &Model, name: &str) -> Option<String> {
    let mut s = String::new();
    for i in 0..DECODE_LIMIT {
        let c = m.array_at(name, &[i])?;
        if c == 0 {
            break;
        }
        s.push(match u8::try_from(c) {
            Ok(b) if b.is_ascii_graphic() || b == b' ' => char::from(b),
            _ => '?',
        });
    }
    Some(s)
}

const DECODE_LIMIT: i64 = 64;

fn model_text(m: &Model, p: &Program) -> String {
    let mut out = String::new();
    for (name, ty) in &p.vars {
        match ty {
            Ty::Int => {
                if let Some(v) = m.int(name) {
                    let _ = writeln!(out, "  {name} = {v}");
                }
            }
            Ty::Array(d) => {
                if let Some(lam) = m.functions.get(name) {
                    let _ = writeln!(out, "  {name} = {lam}");
                    if *d == 1 {
                        if let Some(s) = decode_string(m, name) {
                            let _ = writeln!(out, "  {name} as string: {s:?}");
                        }
                    }
                }
            }
        }
    }
    out
}

fn verdict_text(v: &Verdict, p: &Program) -> String {
    let mut out = String::new();
    let status = match v.status {
        Status::Sat => "satisfiable: the target may be reachable",
        Status::Unsat => "unsatisfiable: the target is unreachable",
        Status::Unknown => "unknown",
    };
    let _ = write!(out, "{status}");
    if let Some(r) = v.winner {
        let _ = write!(
            out,
            " ({} query)",
            if r == Route::Direct {
                "direct"
            } else {
                "unfolded"
            }
        );
    }
    if v.bounded_unsat {
        let _ = write!(out, "; no model with counters up to the unfolding bound");
    }
    out.push('\n');
    if let Some(m) = &v.model {
        let _ = writeln!(out, "inputs:");
        out.push_str(&model_text(m, p));
    }
    let t = &v.timings;
    let _ = writeln!(
        out,
        "time: build {} ms, unfold {} ms, direct {} ms, unfolded {} ms",
        t.build_ms, t.unfold_ms, t.solve_direct_ms, t.solve_unfolded_ms
    );
    out
}
