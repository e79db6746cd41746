//! SMT-LIB 2 emission and an external solver driven over pipes.
//!
//! The solver command comes from the `APC_SOLVER` environment variable and
//! defaults to `z3 -in`. Every query runs in its own solver process so that a
//! timed-out or cancelled query can be killed without disturbing others.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::symexpr::{CmpOp, Expr, Lambda, Node, State, Var};

/// Errors raised while talking to the solver.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("cannot start solver `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("solver i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver reported an error: {0}")]
    Reported(String),
}

/// Outcome of a satisfiability query.
#[derive(Clone, Debug)]
pub enum SatResult {
    Sat(Option<Model>),
    Unsat,
    Unknown(String),
}

impl SatResult {
    /// Whether the result is `sat`.
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
    /// Whether the result is `unsat`.
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

/// A model as reported by the solver, restricted to integer constants,
/// boolean constants and integer functions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Model {
    pub ints: BTreeMap<String, i64>,
    pub bools: BTreeMap<String, bool>,
    #[serde(serialize_with = "serialize_functions")]
    pub functions: BTreeMap<String, Lambda>,
}

fn serialize_functions<S: serde::Serializer>(
    fs: &BTreeMap<String, Lambda>,
    s: S,
) -> Result<S::Ok, S::Error> {
    let rendered: BTreeMap<&String, String> = fs.iter().map(|(k, v)| (k, v.to_string())).collect();
    rendered.serialize(s)
}

impl Model {
    /// Value of an integer constant, if the model assigns one.
    pub fn int(&self, name: &str) -> Option<i64> {
        self.ints.get(name).copied()
    }

    /// Evaluates array `name` at a concrete index.
    pub fn array_at(&self, name: &str, idx: &[i64]) -> Option<i64> {
        let lam = self.functions.get(name)?;
        let args: Vec<Expr> = idx.iter().map(|i| Expr::int(*i)).collect();
        lam.apply(&args).as_int()
    }

    /// The model as a substitution over basic symbols. Symbols missing from
    /// the model are left alone.
    pub fn as_state(&self) -> State {
        let mut st = State::default();
        for (k, v) in &self.ints {
            if is_program_name(k) {
                st.set_scalar(k, Expr::int(*v));
            }
        }
        for (k, lam) in &self.functions {
            st.set_array(k, lam.clone());
        }
        st
    }
}

fn is_program_name(name: &str) -> bool {
    !name.contains('!') && !name.starts_with("star_p")
}

// ----- emission -----------------------------------------------------------

const RESERVED: &[&str] = &[
    "and", "or", "not", "ite", "let", "forall", "exists", "true", "false", "distinct", "div",
    "mod", "abs", "select", "store", "assert", "Int", "Bool", "Real", "Array", "par", "as", "xor",
    "rem", "min", "max", "to_int", "to_real", "is_int", "match", "lambda", "push", "pop", "exit",
    "model",
];

/// SMT-LIB name of a basic symbol or array.
pub fn smt_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.chars().next().unwrap().is_ascii_digit()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple && !RESERVED.contains(&name) {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

/// SMT-LIB name of a variable.
pub fn smt_var(v: &Var) -> String {
    match v {
        Var::Sym(s) => smt_symbol(s),
        Var::Counter(n) => format!("k!{n}"),
        Var::Param(n) => format!("t!{n}"),
        Var::Placeholder(n) => format!("chi!{n}"),
    }
}

/// Renders expressions to SMT-LIB and records what needs declaring.
#[derive(Default)]
pub struct Emitter {
    star_preds: BTreeMap<Expr, String>,
    star_terms: usize,
    /// Extra trailing argument appended to every array application.
    pub extra_app_arg: Option<String>,
}

impl Emitter {
    /// New emitter with an empty proposition table.
    pub fn new() -> Emitter {
        Emitter::default()
    }

    /// Name of the opaque proposition `p`, shared by structural identity.
    pub fn star_pred_name(&mut self, p: &Expr) -> String {
        let n = self.star_preds.len();
        self.star_preds
            .entry(p.clone())
            .or_insert_with(|| format!("star_p{n}"))
            .clone()
    }

    /// Renders `e`.
    pub fn term(&mut self, e: &Expr) -> String {
        let mut out = String::new();
        self.write(e, &mut out);
        out
    }

    fn write(&mut self, e: &Expr, out: &mut String) {
        match e.node() {
            Node::Int(n) => write_int(*n, out),
            Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Node::Star => {
                let _ = write!(out, "star_t{}", self.star_terms);
                self.star_terms += 1;
            }
            Node::Var(v) => out.push_str(&smt_var(v)),
            Node::App(a, args) => {
                let _ = write!(out, "({}", smt_symbol(a));
                for x in args {
                    out.push(' ');
                    self.write(x, out);
                }
                if let Some(extra) = &self.extra_app_arg {
                    out.push(' ');
                    out.push_str(extra);
                }
                out.push(')');
            }
            Node::Lin(terms, c) => {
                out.push_str("(+");
                for (t, k) in terms {
                    out.push(' ');
                    if *k == 1 {
                        self.write(t, out);
                    } else {
                        out.push_str("(* ");
                        write_int(*k, out);
                        out.push(' ');
                        self.write(t, out);
                        out.push(')');
                    }
                }
                if *c != 0 || terms.len() == 1 {
                    out.push(' ');
                    write_int(*c, out);
                }
                out.push(')');
            }
            Node::Mul(a, b) => self.binary("*", a, b, out),
            Node::Div(a, b) => self.binary("div", a, b, out),
            Node::Mod(a, b) => self.binary("mod", a, b, out),
            Node::Max(a, b) => {
                out.push_str("(ite (>= ");
                self.write(a, out);
                out.push(' ');
                self.write(b, out);
                out.push_str(") ");
                self.write(a, out);
                out.push(' ');
                self.write(b, out);
                out.push(')');
            }
            Node::Ite(c, t, f) => {
                out.push_str("(ite ");
                self.write(c, out);
                out.push(' ');
                self.write(t, out);
                out.push(' ');
                self.write(f, out);
                out.push(')');
            }
            Node::Cmp(op, a, b) => match op {
                CmpOp::Ne => {
                    out.push_str("(not ");
                    self.binary("=", a, b, out);
                    out.push(')');
                }
                _ => {
                    let sym = match op {
                        CmpOp::Eq => "=",
                        CmpOp::Lt => "<",
                        CmpOp::Le => "<=",
                        CmpOp::Gt => ">",
                        CmpOp::Ge => ">=",
                        CmpOp::Ne => unreachable!(),
                    };
                    self.binary(sym, a, b, out)
                }
            },
            Node::StarPred(_) => {
                let name = self.star_pred_name(e);
                out.push_str(&name);
            }
            Node::And(xs) | Node::Or(xs) => {
                out.push_str(if matches!(e.node(), Node::And(_)) {
                    "(and"
                } else {
                    "(or"
                });
                for x in xs {
                    out.push(' ');
                    self.write(x, out);
                }
                out.push(')');
            }
            Node::Implies(a, b) => self.binary("=>", a, b, out),
            Node::Forall(vs, body) | Node::Exists(vs, body) => {
                out.push_str(if matches!(e.node(), Node::Forall(..)) {
                    "(forall ("
                } else {
                    "(exists ("
                });
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "({} Int)", smt_var(v));
                }
                out.push_str(") ");
                self.write(body, out);
                out.push(')');
            }
        }
    }

    fn binary(&mut self, op: &str, a: &Expr, b: &Expr, out: &mut String) {
        let _ = write!(out, "({op} ");
        self.write(a, out);
        out.push(' ');
        self.write(b, out);
        out.push(')');
    }

    /// Declarations for everything free in `exprs`, plus the propositions
    /// and unknown terms named while rendering. Call after rendering.
    pub fn declarations(&self, exprs: &[Expr], extra_arity: usize) -> String {
        let mut out = String::new();
        let mut scalars = std::collections::BTreeSet::new();
        let mut arrays = BTreeMap::new();
        for e in exprs {
            for v in e.free_vars() {
                if !matches!(v, Var::Placeholder(_)) {
                    scalars.insert(smt_var(&v));
                }
            }
            for (a, n) in e.arrays() {
                arrays.insert(smt_symbol(&a), n + extra_arity);
            }
        }
        for s in scalars {
            let _ = writeln!(out, "(declare-const {s} Int)");
        }
        for (a, n) in arrays {
            let _ = writeln!(out, "(declare-fun {a} ({}) Int)", vec!["Int"; n].join(" "));
        }
        for name in self.star_preds.values() {
            let _ = writeln!(out, "(declare-const {name} Bool)");
        }
        for i in 0..self.star_terms {
            let _ = writeln!(out, "(declare-const star_t{i} Int)");
        }
        out
    }
}

fn write_int(n: i64, out: &mut String) {
    if n < 0 {
        let _ = write!(out, "(- {})", -(n as i128));
    } else {
        let _ = write!(out, "{n}");
    }
}

/// A complete query: declarations followed by assertions.
pub fn script(assertions: &[Expr]) -> String {
    let mut em = Emitter::new();
    let body: Vec<String> = assertions.iter().map(|a| em.term(a)).collect();
    let mut out = em.declarations(assertions, 0);
    for b in body {
        let _ = writeln!(out, "(assert {b})");
    }
    out
}

// ----- solver process -----------------------------------------------------

/// Handle to the external solver.
#[derive(Clone, Debug)]
pub struct Solver {
    command: Vec<String>,
    /// Time limit for a single query.
    pub timeout: Duration,
}

impl Solver {
    /// Solver from `APC_SOLVER` (default `z3 -in`) with the given limit.
    pub fn from_env(timeout: Duration) -> Solver {
        let cmd = std::env::var("APC_SOLVER").unwrap_or_else(|_| "z3 -in".to_string());
        Solver::with_command(&cmd, timeout)
    }

    /// Solver running `command` (split on whitespace).
    pub fn with_command(command: &str, timeout: Duration) -> Solver {
        Solver {
            command: command.split_whitespace().map(str::to_string).collect(),
            timeout,
        }
    }

    /// Same solver with another time limit.
    pub fn with_timeout(&self, timeout: Duration) -> Solver {
        Solver {
            command: self.command.clone(),
            timeout,
        }
    }

    /// The command line, for diagnostics.
    pub fn command_line(&self) -> String {
        self.command.join(" ")
    }

    /// Checks satisfiability of the conjunction of `assertions`.
    pub fn check(&self, assertions: &[Expr]) -> Result<SatResult, SolverError> {
        self.check_script(&script(assertions), None)
    }

    /// Checks the validity of `f`.
    pub fn is_valid(&self, f: &Expr) -> Result<SatResult, SolverError> {
        self.check(&[f.not()])
    }

    /// Runs a script (declarations and assertions, without `check-sat`).
    /// A set `cancel` flag kills the solver and yields `unknown`.
    pub fn check_script(
        &self,
        body: &str,
        cancel: Option<&AtomicBool>,
    ) -> Result<SatResult, SolverError> {
        let out = self.run(body, false, cancel)?;
        match parse_response(&out) {
            Err(SolverError::Reported(msg)) if msg.contains("logic") => {
                parse_response(&self.run(body, true, cancel)?)
            }
            other => other,
        }
    }

    fn run(
        &self,
        body: &str,
        set_logic: bool,
        cancel: Option<&AtomicBool>,
    ) -> Result<String, SolverError> {
        let (prog, args) = self.command.split_first().expect("empty solver command");
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                command: self.command_line(),
                source,
            })?;
        let mut text = String::new();
        let ms = self.timeout.as_millis().max(1);
        let _ = writeln!(text, "(set-option :timeout {ms})");
        let _ = writeln!(text, "(set-option :produce-models true)");
        if set_logic {
            text.push_str("(set-logic ALL)\n");
        }
        text.push_str(body);
        text.push_str("(check-sat)\n(get-model)\n(exit)\n");
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(text.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut buf = String::new();
            let r = stdout.read_to_string(&mut buf).map(|_| buf);
            let _ = tx.send(r);
        });
        // The solver's own timeout is soft; give it a grace period before
        // killing the process.
        let deadline = Instant::now() + self.timeout + Duration::from_millis(500);
        let result = loop {
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                let _ = child.kill();
                break Ok("unknown\n".to_string());
            }
            let now = Instant::now();
            if now >= deadline {
                let _ = child.kill();
                break Ok("unknown\n".to_string());
            }
            let slice = (deadline - now).min(Duration::from_millis(25));
            match rx.recv_timeout(slice) {
                Ok(r) => break r.map_err(SolverError::Io),
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                Err(mpsc::RecvTimeoutError::Disconnected) => break Ok("unknown\n".to_string()),
            }
        };
        let _ = child.wait();
        let _ = writer.join();
        result
    }
}

fn parse_response(out: &str) -> Result<SatResult, SolverError> {
    let trimmed = out.trim_start();
    let first = trimmed.lines().next().unwrap_or("").trim();
    match first {
        "sat" => {
            let rest = &trimmed[3..];
            let model = sexp::parse_all(rest)
                .ok()
                .and_then(|items| items.into_iter().find_map(|it| model_from_sexp(&it)));
            Ok(SatResult::Sat(model))
        }
        "unsat" => Ok(SatResult::Unsat),
        "unknown" | "timeout" | "" => Ok(SatResult::Unknown(if first.is_empty() {
            "no answer".to_string()
        } else {
            first.to_string()
        })),
        _ if first.starts_with("(error") => Err(SolverError::Reported(first.to_string())),
        _ => Ok(SatResult::Unknown(first.to_string())),
    }
}

// ----- models -------------------------------------------------------------

fn model_from_sexp(s: &sexp::Sexp) -> Option<Model> {
    let items = s.list()?;
    let defs: Vec<&sexp::Sexp> = items
        .iter()
        .filter(|d| d.list().and_then(|l| l.first()).and_then(|h| h.atom()) == Some("define-fun"))
        .collect();
    if defs.is_empty() && !items.is_empty() {
        return None;
    }
    let mut raw: BTreeMap<String, (Vec<String>, String, sexp::Sexp)> = BTreeMap::new();
    for d in defs {
        let l = d.list()?;
        if l.len() != 5 {
            continue;
        }
        let name = l[1].atom()?.trim_matches('|').to_string();
        let params: Vec<String> = l[2]
            .list()?
            .iter()
            .filter_map(|p| {
                p.list()
                    .and_then(|pl| pl.first())
                    .and_then(|n| n.atom())
                    .map(str::to_string)
            })
            .collect();
        let sort = l[3].atom().unwrap_or("").to_string();
        raw.insert(name, (params, sort, l[4].clone()));
    }
    let mut model = Model::default();
    for (name, (params, sort, body)) in &raw {
        let ctx = Ctx {
            defs: &raw,
            locals: params
                .iter()
                .enumerate()
                .map(|(i, p)| (p.clone(), Expr::placeholder(i as u32)))
                .collect(),
            free: None,
        };
        let Some(e) = to_expr(body, &ctx, 0) else {
            continue;
        };
        if params.is_empty() {
            match (sort.as_str(), e.as_int(), e.as_bool()) {
                ("Int", Some(n), _) => {
                    model.ints.insert(name.clone(), n);
                }
                ("Bool", _, Some(b)) => {
                    model.bools.insert(name.clone(), b);
                }
                _ => {}
            }
        } else if sort == "Int" && !name.contains('!') {
            model.functions.insert(
                name.clone(),
                Lambda {
                    arity: params.len(),
                    body: e,
                },
            );
        }
    }
    Some(model)
}

struct Ctx<'a> {
    defs: &'a BTreeMap<String, (Vec<String>, String, sexp::Sexp)>,
    locals: BTreeMap<String, Expr>,
    /// Free symbols with their arities; 0 for scalars.
    free: Option<&'a BTreeMap<String, usize>>,
}

impl Ctx<'_> {
    fn free_arity(&self, name: &str) -> Option<usize> {
        self.free.and_then(|f| f.get(name).copied())
    }
}

/// Reads an SMT-LIB formula over the given free symbols (name and arity,
/// 0 for integer constants). The text is either a single term or a
/// sequence of `assert` commands, whose conjunction is returned;
/// `declare-fun` and `declare-const` commands are skipped.
pub fn parse_formula(text: &str, symbols: &BTreeMap<String, usize>) -> Result<Expr, String> {
    let items = sexp::parse_all(text)?;
    let defs = BTreeMap::new();
    let ctx = Ctx {
        defs: &defs,
        locals: BTreeMap::new(),
        free: Some(symbols),
    };
    let mut parts = Vec::new();
    for it in &items {
        let head = it.list().and_then(|l| l.first()).and_then(|h| h.atom());
        let term = match head {
            Some("declare-fun" | "declare-const" | "set-logic" | "set-option" | "check-sat") => {
                continue
            }
            Some("assert") => it.list().and_then(|l| l.get(1)).ok_or("empty assert")?,
            _ => it,
        };
        let e = to_expr(term, &ctx, 0).ok_or_else(|| format!("cannot read term `{}`", term))?;
        if !e.is_formula() {
            return Err(format!("`{term}` is not a formula"));
        }
        parts.push(e);
    }
    if parts.is_empty() {
        return Err("no formula".to_string());
    }
    Ok(Expr::and(parts))
}

fn to_expr(s: &sexp::Sexp, ctx: &Ctx<'_>, depth: usize) -> Option<Expr> {
    if depth > 64 {
        return None;
    }
    match s {
        sexp::Sexp::Atom(a) => {
            let a = a.trim_matches('|');
            if let Ok(n) = a.parse::<i64>() {
                return Some(Expr::int(n));
            }
            match a {
                "true" => return Some(Expr::tt()),
                "false" => return Some(Expr::ff()),
                _ => {}
            }
            if let Some(e) = ctx.locals.get(a) {
                return Some(e.clone());
            }
            if ctx.free_arity(a) == Some(0) {
                return Some(Expr::sym(a));
            }
            let (params, _, body) = ctx.defs.get(a)?;
            if !params.is_empty() {
                return None;
            }
            to_expr(
                body,
                &Ctx {
                    defs: ctx.defs,
                    locals: BTreeMap::new(),
                    free: ctx.free,
                },
                depth + 1,
            )
        }
        sexp::Sexp::List(items) => {
            let head = items.first()?.atom()?;
            let args = &items[1..];
            let sub = |i: usize| to_expr(&args[i], ctx, depth + 1);
            let all = || {
                args.iter()
                    .map(|x| to_expr(x, ctx, depth + 1))
                    .collect::<Option<Vec<_>>>()
            };
            Some(match head {
                "-" if args.len() == 1 => sub(0)?.neg(),
                "-" => {
                    let xs = all()?;
                    xs[1..].iter().fold(xs[0].clone(), |acc, x| acc.sub(x))
                }
                "+" => Expr::sum(all()?.iter()),
                "*" => {
                    let xs = all()?;
                    xs[1..].iter().fold(xs[0].clone(), |acc, x| acc.mul(x))
                }
                "div" => sub(0)?.div(&sub(1)?),
                "mod" => sub(0)?.modulo(&sub(1)?),
                "ite" => Expr::ite(&sub(0)?, &sub(1)?, &sub(2)?),
                "=" => Expr::eq(&sub(0)?, &sub(1)?),
                "<" => Expr::lt(&sub(0)?, &sub(1)?),
                "<=" => Expr::le(&sub(0)?, &sub(1)?),
                ">" => Expr::gt(&sub(0)?, &sub(1)?),
                ">=" => Expr::ge(&sub(0)?, &sub(1)?),
                "and" => Expr::and(all()?),
                "or" => Expr::or(all()?),
                "not" => sub(0)?.not(),
                "=>" => Expr::implies(&sub(0)?, &sub(1)?),
                "let" => {
                    let mut locals = ctx.locals.clone();
                    for b in args.first()?.list()? {
                        let bl = b.list()?;
                        let v = to_expr(&bl[1], ctx, depth + 1)?;
                        locals.insert(bl[0].atom()?.to_string(), v);
                    }
                    return to_expr(
                        args.get(1)?,
                        &Ctx {
                            defs: ctx.defs,
                            locals,
                            free: ctx.free,
                        },
                        depth + 1,
                    );
                }
                f => {
                    let f = f.trim_matches('|');
                    if ctx.free_arity(f).is_some_and(|n| n > 0 && n == args.len()) {
                        return Some(Expr::app(f, all()?));
                    }
                    let (params, _, body) = ctx.defs.get(f)?;
                    let xs = all()?;
                    if xs.len() != params.len() {
                        return None;
                    }
                    let locals = params.iter().cloned().zip(xs).collect();
                    to_expr(
                        body,
                        &Ctx {
                            defs: ctx.defs,
                            locals,
                            free: ctx.free,
                        },
                        depth + 1,
                    )?
                }
            })
        }
    }
}

/// Minimal s-expression reader for solver output.
pub mod sexp {
    /// An s-expression.
    #[derive(Clone, Debug, PartialEq, Eq)]
    pub enum Sexp {
        Atom(String),
        List(Vec<Sexp>),
    }

    impl std::fmt::Display for Sexp {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            match self {
                Sexp::Atom(a) => write!(f, "{a}"),
                Sexp::List(items) => {
                    write!(f, "(")?;
                    for (i, it) in items.iter().enumerate() {
                        if i > 0 {
                            write!(f, " ")?;
                        }
                        write!(f, "{it}")?;
                    }
                    write!(f, ")")
                }
            }
        }
    }

    impl Sexp {
        /// The atom text, if this is an atom.
        pub fn atom(&self) -> Option<&str> {
            match self {
                Sexp::Atom(a) => Some(a),
                Sexp::List(_) => None,
            }
        }
        /// The items, if this is a list.
        pub fn list(&self) -> Option<&[Sexp]> {
            match self {
                Sexp::List(l) => Some(l),
                Sexp::Atom(_) => None,
            }
        }
    }

    /// Parses every top-level s-expression in `text`.
    pub fn parse_all(text: &str) -> Result<Vec<Sexp>, String> {
        let chars: Vec<char> = text.chars().collect();
        let mut pos = 0;
        let mut out = Vec::new();
        loop {
            skip_ws(&chars, &mut pos);
            if pos >= chars.len() {
                return Ok(out);
            }
            out.push(parse_one(&chars, &mut pos)?);
        }
    }

    fn skip_ws(c: &[char], pos: &mut usize) {
        while *pos < c.len() {
            if c[*pos].is_whitespace() {
                *pos += 1;
            } else if c[*pos] == ';' {
                while *pos < c.len() && c[*pos] != '\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn parse_one(c: &[char], pos: &mut usize) -> Result<Sexp, String> {
        skip_ws(c, pos);
        match c.get(*pos) {
            None => Err("unexpected end of input".into()),
            Some('(') => {
                *pos += 1;
                let mut items = Vec::new();
                loop {
                    skip_ws(c, pos);
                    match c.get(*pos) {
                        None => return Err("unclosed list".into()),
                        Some(')') => {
                            *pos += 1;
                            return Ok(Sexp::List(items));
                        }
                        _ => items.push(parse_one(c, pos)?),
                    }
                }
            }
            Some(')') => Err("unexpected `)`".into()),
            Some('|') => {
                let start = *pos;
                *pos += 1;
                while *pos < c.len() && c[*pos] != '|' {
                    *pos += 1;
                }
                *pos += 1;
                Ok(Sexp::Atom(c[start..(*pos).min(c.len())].iter().collect()))
            }
            Some('"') => {
                let start = *pos;
                *pos += 1;
                while *pos < c.len() {
                    if c[*pos] == '"' {
                        if c.get(*pos + 1) == Some(&'"') {
                            *pos += 2;
                            continue;
                        }
                        break;
                    }
                    *pos += 1;
                }
                *pos += 1;
                Ok(Sexp::Atom(c[start..(*pos).min(c.len())].iter().collect()))
            }
            Some(_) => {
                let start = *pos;
                while *pos < c.len() && !c[*pos].is_whitespace() && c[*pos] != '(' && c[*pos] != ')'
                {
                    *pos += 1;
                }
                Ok(Sexp::Atom(c[start..*pos].iter().collect()))
            }
        }
    }
}
