//! The analysed programs: a small C-like language, its control flow graph,
//! loop entry normalization, loops and the programs they induce.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::dominators;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use crate::symexpr::CmpOp;

// ----- program syntax ------------------------------------------------------

/// Type of a program variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ty {
    Int,
    /// Integer array with the given number of dimensions.
    Array(usize),
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => write!(f, "int"),
            Ty::Array(n) => write!(f, "int{}", "[]".repeat(*n)),
        }
    }
}

/// Binary arithmetic operators of the language. Division and remainder are
/// Euclidean, as in SMT-LIB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

/// Side-effect free program expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PExpr {
    Int(i64),
    Var(String),
    Read(String, Vec<PExpr>),
    Neg(Box<PExpr>),
    Bin(BinOp, Box<PExpr>, Box<PExpr>),
}

impl PExpr {
    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            PExpr::Int(_) => {}
            PExpr::Var(v) => {
                out.insert(v.clone());
            }
            PExpr::Read(a, idx) => {
                out.insert(a.clone());
                idx.iter().for_each(|e| e.collect_vars(out));
            }
            PExpr::Neg(e) => e.collect_vars(out),
            PExpr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for PExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PExpr::Int(n) => write!(f, "{n}"),
            PExpr::Var(v) => write!(f, "{v}"),
            PExpr::Read(a, idx) => {
                write!(f, "{a}")?;
                idx.iter().try_for_each(|e| write!(f, "[{e}]"))
            }
            PExpr::Neg(e) => write!(f, "-({e})"),
            PExpr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Mod => "%",
                };
                write!(f, "({a} {s} {b})")
            }
        }
    }
}

/// Atomic predicate `lhs op rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pred {
    pub op: CmpOp,
    pub lhs: PExpr,
    pub rhs: PExpr,
}

impl Pred {
    /// The complementary predicate.
    pub fn negate(&self) -> Pred {
        Pred {
            op: self.op.negate(),
            lhs: self.lhs.clone(),
            rhs: self.rhs.clone(),
        }
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

/// Instruction labelling a CFG edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Assume(Pred),
    Assert(Pred),
    Skip,
    Assign(String, PExpr),
    Store(String, Vec<PExpr>, PExpr),
}

impl Instr {
    /// Variables read or written.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match self {
            Instr::Assume(p) | Instr::Assert(p) => {
                p.lhs.collect_vars(&mut out);
                p.rhs.collect_vars(&mut out);
            }
            Instr::Skip => {}
            Instr::Assign(a, e) => {
                out.insert(a.clone());
                e.collect_vars(&mut out);
            }
            Instr::Store(a, idx, e) => {
                out.insert(a.clone());
                idx.iter().for_each(|i| i.collect_vars(&mut out));
                e.collect_vars(&mut out);
            }
        }
        out
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Assume(p) => write!(f, "assume({p})"),
            Instr::Assert(p) => write!(f, "assert({p})"),
            Instr::Skip => write!(f, "skip"),
            Instr::Assign(a, e) => write!(f, "{a} = {e}"),
            Instr::Store(a, idx, e) => {
                write!(f, "{a}")?;
                idx.iter().try_for_each(|i| write!(f, "[{i}]"))?;
                write!(f, " = {e}")
            }
        }
    }
}

// ----- control flow graph ----------------------------------------------------

/// A labelled edge of the control flow graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub instr: Instr,
}

/// A program: vertices `0..num_vertices`, labelled edges, a start vertex
/// without predecessors and a target vertex without successors.
#[derive(Clone, Debug)]
pub struct Program {
    pub num_vertices: usize,
    pub edges: Vec<Edge>,
    pub start: usize,
    pub target: usize,
    pub vars: BTreeMap<String, Ty>,
    /// Vertex of the parsed program each vertex was copied from.
    pub origin: Vec<usize>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl Program {
    /// Builds a program from its parts. Out-edges keep their order in
    /// `edges`, which fixes the branch taken first by every traversal.
    pub fn new(
        num_vertices: usize,
        edges: Vec<Edge>,
        start: usize,
        target: usize,
        vars: BTreeMap<String, Ty>,
        origin: Vec<usize>,
    ) -> Program {
        let mut out = vec![Vec::new(); num_vertices];
        let mut inc = vec![Vec::new(); num_vertices];
        for (i, e) in edges.iter().enumerate() {
            out[e.src].push(i);
            inc[e.dst].push(i);
        }
        Program {
            num_vertices,
            edges,
            start,
            target,
            vars,
            origin,
            out,
            inc,
        }
    }

    /// Out-edges of `v` in traversal order.
    pub fn out_edges(&self, v: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.out[v].iter().map(move |&i| &self.edges[i])
    }

    /// In-edges of `v`.
    pub fn in_edges(&self, v: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.inc[v].iter().map(move |&i| &self.edges[i])
    }

    /// The edge from `u` to `v`, if any.
    pub fn edge(&self, u: usize, v: usize) -> Option<&Edge> {
        self.out_edges(u).find(|e| e.dst == v)
    }

    /// Type of a variable.
    pub fn ty(&self, name: &str) -> Option<Ty> {
        self.vars.get(name).copied()
    }

    /// Checks the structural invariants of a program.
    pub fn validate(&self) -> Result<(), String> {
        if self.start == self.target {
            return Err("start equals target".into());
        }
        if self.in_edges(self.start).next().is_some() {
            return Err("start vertex has predecessors".into());
        }
        if self.out_edges(self.target).next().is_some() {
            return Err("target vertex has successors".into());
        }
        for v in 0..self.num_vertices {
            let outs: Vec<&Edge> = self.out_edges(v).collect();
            match outs.as_slice() {
                [] | [_] => {}
                [a, b] => match (&a.instr, &b.instr) {
                    (Instr::Assume(p), Instr::Assume(q)) if *q == p.negate() => {}
                    _ => {
                        return Err(format!(
                            "vertex {v} branches without a complementary assume pair"
                        ))
                    }
                },
                _ => return Err(format!("vertex {v} has more than two successors")),
            }
        }
        Ok(())
    }

    /// Whether every in-edge of every loop entry vertex is `skip`.
    pub fn is_normalized(&self) -> bool {
        self.loop_headers().iter().all(|&(h, ref entering)| {
            let _ = h;
            entering.iter().all(|&i| self.edges[i].instr == Instr::Skip)
        })
    }

    /// Loop headers with the indices of their entering (non back) edges.
    fn loop_headers(&self) -> Vec<(usize, Vec<usize>)> {
        let mut g = DiGraph::<(), ()>::new();
        let nodes: Vec<NodeIndex> = (0..self.num_vertices).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(nodes[e.src], nodes[e.dst], ());
        }
        let dom = dominators::simple_fast(&g, nodes[self.start]);
        let dominates = |a: usize, b: usize| {
            dom.dominators(nodes[b])
                .is_some_and(|mut it| it.any(|d| d == nodes[a]))
        };
        let mut out = Vec::new();
        for v in 0..self.num_vertices {
            let back = self.inc[v].iter().any(|&i| dominates(v, self.edges[i].src));
            if back {
                let entering = self.inc[v]
                    .iter()
                    .copied()
                    .filter(|&i| !dominates(v, self.edges[i].src))
                    .collect();
                out.push((v, entering));
            }
        }
        out
    }

    /// Every in-edge of a loop entry vertex gets label `skip`: an entering
    /// edge `(u, v)` with another label is split into `(u, v')` keeping the
    /// label and `(v', v)` labelled `skip`. One fresh vertex per entry.
    pub fn normalize(&self) -> Program {
        let mut edges = self.edges.clone();
        let mut origin = self.origin.clone();
        let mut n = self.num_vertices;
        for (h, entering) in self.loop_headers() {
            if entering.iter().all(|&i| self.edges[i].instr == Instr::Skip) {
                continue;
            }
            let fresh = n;
            n += 1;
            origin.push(self.origin[h]);
            for &i in &entering {
                edges[i].dst = fresh;
            }
            edges.push(Edge {
                src: fresh,
                dst: h,
                instr: Instr::Skip,
            });
        }
        Program::new(n, edges, self.start, self.target, self.vars.clone(), origin)
    }

    /// The loop at `v` relative to an acyclic prefix ending in `v`: the
    /// vertices lying on closed walks through `v` that avoid the interior of
    /// the prefix. `None` when there is no such walk.
    pub fn find_loop(&self, prefix: &[usize]) -> Option<Loop> {
        let (&v, rest) = prefix.split_last()?;
        let interior: BTreeSet<usize> = rest.iter().copied().filter(|&u| u != v).collect();
        let forward = self.reach(v, &interior, true);
        let backward = self.reach(v, &interior, false);
        let body: BTreeSet<usize> = forward.intersection(&backward).copied().collect();
        let closes = self.in_edges(v).any(|e| body.contains(&e.src));
        if !closes {
            return None;
        }
        let exits = body
            .iter()
            .flat_map(|&w| self.out_edges(w).map(|e| e.dst))
            .filter(|u| !body.contains(u))
            .collect();
        Some(Loop {
            entry: v,
            body,
            exits,
        })
    }

    fn reach(&self, from: usize, avoid: &BTreeSet<usize>, forward: bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([from]);
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            let next: Vec<usize> = if forward {
                self.out_edges(u).map(|e| e.dst).collect()
            } else {
                self.in_edges(u).map(|e| e.src).collect()
            };
            for w in next {
                if !avoid.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// The program induced by `lp`: a copy of its body started at the copy
    /// of the entry, with every edge back into the entry redirected to a
    /// fresh target vertex.
    pub fn induced_program(&self, lp: &Loop) -> Program {
        let order: Vec<usize> = std::iter::once(lp.entry)
            .chain(lp.body.iter().copied().filter(|&w| w != lp.entry))
            .collect();
        let index: BTreeMap<usize, usize> =
            order.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        let target = order.len();
        let mut origin: Vec<usize> = order.iter().map(|&w| self.origin[w]).collect();
        origin.push(self.origin[lp.entry]);
        let mut edges = Vec::new();
        for &w in &order {
            for e in self.out_edges(w) {
                if let Some(&d) = index.get(&e.dst) {
                    let dst = if e.dst == lp.entry { target } else { d };
                    edges.push(Edge {
                        src: index[&w],
                        dst,
                        instr: e.instr.clone(),
                    });
                }
            }
        }
        Program::new(target + 1, edges, 0, target, self.vars.clone(), origin)
    }

    /// Vertices reachable from the start.
    pub fn reachable(&self) -> BTreeSet<usize> {
        self.reach(self.start, &BTreeSet::new(), true)
    }

    /// JSON dump of the graph.
    pub fn to_json(&self) -> serde_json::Value {
        let vars: BTreeMap<&String, String> =
            self.vars.iter().map(|(k, t)| (k, t.to_string())).collect();
        serde_json::json!({
            "vertices": (0..self.num_vertices).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| serde_json::json!({
                "src": e.src, "dst": e.dst, "instr": e.instr.to_string()
            })).collect::<Vec<_>>(),
            "start": self.start,
            "target": self.target,
            "vars": vars,
        })
    }
}

/// A loop: its entry vertex, body and exit vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub entry: usize,
    pub body: BTreeSet<usize>,
    pub exits: BTreeSet<usize>,
}

/// Reduces a start-to-target path to its backbone by repeatedly cutting
/// the segment between the first and last occurrence of the first vertex
/// that repeats.
pub fn reduce_to_backbone(path: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(path.len());
    let mut i = 0;
    while i < path.len() {
        let v = path[i];
        let last = path.iter().rposition(|&w| w == v).unwrap_or(i);
        out.push(v);
        i = last + 1;
    }
    out
}

// ----- parsing ----------------------------------------------------------------

/// Errors reported for malformed programs.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("type error at offset {offset}: {message}")]
    Type { offset: usize, message: String },
    #[error("structure error: {0}")]
    Structure(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Id(String),
    Num(i64),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "<", ">", "=", "+", "-", "*", "/", "%", "(", ")", "[", "]", "{",
    "}", ";", ":",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(end) => i += end + 4,
                None => {
                    return Err(ParseError::Syntax {
                        offset: i,
                        message: "unterminated comment".into(),
                    })
                }
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[start..i].parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: "integer literal too large".into(),
            })?;
            out.push((Tok::Num(n), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Id(src[start..i].to_string()), start));
            continue;
        }
        for s in SYMBOLS {
            if src[i..].starts_with(s) {
                out.push((Tok::Sym(s), i));
                i += s.len();
                continue 'outer;
            }
        }
        let ch = src[i..].chars().next().unwrap_or('?');
        return Err(ParseError::Syntax {
            offset: i,
            message: format!("unexpected character `{ch}`"),
        });
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

#[derive(Clone, Debug)]
enum Stmt {
    Assign(String, PExpr, usize),
    Store(String, Vec<PExpr>, PExpr, usize),
    Assume(Pred),
    Assert(Pred),
    Skip,
    Target,
    Break(usize),
    If(Vec<Pred>, Vec<Stmt>, Vec<Stmt>),
    While(Vec<Pred>, Vec<Stmt>),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: BTreeMap<String, Ty>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }
    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }
    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }
    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Sym(t) if *t == s => {
                self.bump();
                Ok(())
            }
            other => self.err(format!("expected `{s}`, found {}", describe(other))),
        }
    }
    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }
    fn at_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Id(t) if t == k)
    }
    fn ident(&mut self) -> Result<(String, usize), ParseError> {
        let off = self.offset();
        match self.peek().clone() {
            Tok::Id(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok((s, off))
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn decl(&mut self) -> Result<(), ParseError> {
        self.bump();
        let (name, off) = self.ident()?;
        if name.starts_with("star_p") {
            return Err(ParseError::Type {
                offset: off,
                message: format!("identifier `{name}` is reserved"),
            });
        }
        self.expect(":")?;
        if !self.at_kw("int") {
            return self.err("expected `int`");
        }
        self.bump();
        let mut dims = 0;
        while self.at_sym("[") {
            self.bump();
            if !matches!(self.peek(), Tok::Num(_)) {
                return self.err("expected array extent");
            }
            self.bump();
            self.expect("]")?;
            dims += 1;
        }
        self.expect(";")?;
        let ty = if dims == 0 { Ty::Int } else { Ty::Array(dims) };
        if self.vars.insert(name.clone(), ty).is_some() {
            return Err(ParseError::Type {
                offset: off,
                message: format!("variable `{name}` declared twice"),
            });
        }
        Ok(())
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        if self.at_sym("{") {
            self.bump();
            let mut out = Vec::new();
            while !self.at_sym("}") {
                if *self.peek() == Tok::Eof {
                    return self.err("expected `}`");
                }
                out.push(self.stmt()?);
            }
            self.bump();
            Ok(out)
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let off = self.offset();
        let kw = match self.peek() {
            Tok::Id(s) => s.clone(),
            other => return self.err(format!("expected statement, found {}", describe(other))),
        };
        match kw.as_str() {
            "assume" | "assert" => {
                self.bump();
                self.expect("(")?;
                let p = self.pred()?;
                self.expect(")")?;
                self.expect(";")?;
                Ok(if kw == "assume" {
                    Stmt::Assume(p)
                } else {
                    Stmt::Assert(p)
                })
            }
            "skip" | "target" | "break" => {
                self.bump();
                self.expect(";")?;
                Ok(match kw.as_str() {
                    "skip" => Stmt::Skip,
                    "target" => Stmt::Target,
                    _ => Stmt::Break(off),
                })
            }
            "if" => {
                self.bump();
                self.expect("(")?;
                let c = self.cond()?;
                self.expect(")")?;
                let then = self.block()?;
                let els = if self.at_kw("else") {
                    self.bump();
                    self.block()?
                } else {
                    Vec::new()
                };
                Ok(Stmt::If(c, then, els))
            }
            "while" => {
                self.bump();
                self.expect("(")?;
                let c = self.cond()?;
                self.expect(")")?;
                Ok(Stmt::While(c, self.block()?))
            }
            "for" => {
                self.bump();
                self.expect("(")?;
                let init = self.stmt()?;
                let c = self.cond()?;
                self.expect(";")?;
                let step = self.assignment()?;
                self.expect(")")?;
                let mut body = self.block()?;
                body.push(step);
                Ok(Stmt::If(
                    Vec::new(),
                    vec![init, Stmt::While(c, body)],
                    Vec::new(),
                ))
            }
            "var" => self.err("declarations must precede statements"),
            _ => {
                let s = self.assignment()?;
                self.expect(";")?;
                Ok(s)
            }
        }
    }

    fn assignment(&mut self) -> Result<Stmt, ParseError> {
        let (name, off) = self.ident()?;
        let mut idx = Vec::new();
        while self.at_sym("[") {
            self.bump();
            idx.push(self.expr()?);
            self.expect("]")?;
        }
        self.expect("=")?;
        let e = self.expr()?;
        Ok(if idx.is_empty() {
            Stmt::Assign(name, e, off)
        } else {
            Stmt::Store(name, idx, e, off)
        })
    }

    fn cond(&mut self) -> Result<Vec<Pred>, ParseError> {
        let mut out = vec![self.pred()?];
        while self.at_sym("&&") {
            self.bump();
            out.push(self.pred()?);
        }
        Ok(out)
    }

    fn pred(&mut self) -> Result<Pred, ParseError> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            other => return self.err(format!("expected comparison, found {}", describe(other))),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Pred { op, lhs, rhs })
    }

    fn expr(&mut self) -> Result<PExpr, ParseError> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            e = PExpr::Bin(op, Box::new(e), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<PExpr, ParseError> {
        let mut e = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                Tok::Sym("%") => BinOp::Mod,
                _ => return Ok(e),
            };
            self.bump();
            e = PExpr::Bin(op, Box::new(e), Box::new(self.factor()?));
        }
    }

    fn factor(&mut self) -> Result<PExpr, ParseError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(PExpr::Int(n))
            }
            Tok::Sym("-") => {
                self.bump();
                Ok(match self.factor()? {
                    PExpr::Int(n) => PExpr::Int(-n),
                    e => PExpr::Neg(Box::new(e)),
                })
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Id(_) => {
                let (name, _) = self.ident()?;
                let mut idx = Vec::new();
                while self.at_sym("[") {
                    self.bump();
                    idx.push(self.expr()?);
                    self.expect("]")?;
                }
                Ok(if idx.is_empty() {
                    PExpr::Var(name)
                } else {
                    PExpr::Read(name, idx)
                })
            }
            other => self.err(format!("expected expression, found {}", describe(&other))),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "var", "int", "assume", "assert", "skip", "target", "break", "if", "else", "while", "for",
];

fn describe(t: &Tok) -> String {
    match t {
        Tok::Id(s) => format!("`{s}`"),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

// ----- type checking -------------------------------------------------------------

fn check_expr(e: &PExpr, vars: &BTreeMap<String, Ty>, off: usize) -> Result<(), ParseError> {
    let terr = |message: String| {
        Err(ParseError::Type {
            offset: off,
            message,
        })
    };
    match e {
        PExpr::Int(_) => Ok(()),
        PExpr::Var(v) => match vars.get(v) {
            Some(Ty::Int) => Ok(()),
            Some(t) => terr(format!("`{v}` has type {t} but is used as a scalar")),
            None => terr(format!("undeclared variable `{v}`")),
        },
        PExpr::Read(a, idx) => {
            match vars.get(a) {
                Some(Ty::Array(n)) if *n == idx.len() => {}
                Some(t) => {
                    return terr(format!(
                        "`{a}` has type {t} but is indexed {} times",
                        idx.len()
                    ))
                }
                None => return terr(format!("undeclared variable `{a}`")),
            }
            idx.iter().try_for_each(|i| check_expr(i, vars, off))
        }
        PExpr::Neg(x) => check_expr(x, vars, off),
        PExpr::Bin(_, a, b) => {
            check_expr(a, vars, off)?;
            check_expr(b, vars, off)
        }
    }
}

fn check_pred(p: &Pred, vars: &BTreeMap<String, Ty>, off: usize) -> Result<(), ParseError> {
    check_expr(&p.lhs, vars, off)?;
    check_expr(&p.rhs, vars, off)
}

fn check_stmts(ss: &[Stmt], vars: &BTreeMap<String, Ty>, in_loop: bool) -> Result<(), ParseError> {
    for s in ss {
        match s {
            Stmt::Assign(a, e, off) => {
                check_expr(&PExpr::Var(a.clone()), vars, *off)?;
                check_expr(e, vars, *off)?;
            }
            Stmt::Store(a, idx, e, off) => {
                check_expr(&PExpr::Read(a.clone(), idx.clone()), vars, *off)?;
                check_expr(e, vars, *off)?;
            }
            Stmt::Assume(p) | Stmt::Assert(p) => check_pred(p, vars, 0)?,
            Stmt::Skip | Stmt::Target => {}
            Stmt::Break(off) => {
                if !in_loop {
                    return Err(ParseError::Structure(format!(
                        "`break` outside a loop at offset {off}"
                    )));
                }
            }
            Stmt::If(c, t, e) => {
                c.iter().try_for_each(|p| check_pred(p, vars, 0))?;
                check_stmts(t, vars, in_loop)?;
                check_stmts(e, vars, in_loop)?;
            }
            Stmt::While(c, b) => {
                c.iter().try_for_each(|p| check_pred(p, vars, 0))?;
                check_stmts(b, vars, true)?;
            }
        }
    }
    Ok(())
}

fn count_targets(ss: &[Stmt]) -> usize {
    ss.iter()
        .map(|s| match s {
            Stmt::Target => 1,
            Stmt::If(_, t, e) => count_targets(t) + count_targets(e),
            Stmt::While(_, b) => count_targets(b),
            _ => 0,
        })
        .sum()
}

// ----- graph construction ------------------------------------------------------

struct Builder {
    n: usize,
    edges: Vec<Edge>,
    target: usize,
    breaks: Vec<Vec<usize>>,
}

impl Builder {
    fn fresh(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    fn edge(&mut self, src: usize, dst: usize, instr: Instr) {
        self.edges.push(Edge { src, dst, instr });
    }

    fn has_out(&self, v: usize) -> bool {
        self.edges.iter().any(|e| e.src == v)
    }

    /// Redirects every edge into `from` to `to`. `from` must be a sink.
    /// Falls back to a `skip` edge when redirecting would create parallel
    /// edges, since a path is identified by its vertices.
    fn merge(&mut self, from: usize, to: usize) {
        if from == to {
            return;
        }
        let parallel = self
            .edges
            .iter()
            .any(|e| e.dst == from && self.edges.iter().any(|f| f.src == e.src && f.dst == to));
        if self.has_out(from) || parallel {
            self.edge(from, to, Instr::Skip);
            return;
        }
        for e in &mut self.edges {
            if e.dst == from {
                e.dst = to;
            }
        }
        for list in &mut self.breaks {
            for b in list.iter_mut() {
                if *b == from {
                    *b = to;
                }
            }
        }
    }

    /// Emits a short-circuit chain for a conjunction starting at `cur`.
    /// Returns the vertex reached when every conjunct holds and the vertex
    /// reached otherwise.
    fn cond(&mut self, cur: usize, preds: &[Pred]) -> (usize, usize) {
        let no = self.fresh();
        let mut at = cur;
        for p in preds {
            let yes = self.fresh();
            self.edge(at, yes, Instr::Assume(p.clone()));
            self.edge(at, no, Instr::Assume(p.negate()));
            at = yes;
        }
        (at, no)
    }

    fn stmts(&mut self, mut cur: usize, ss: &[Stmt]) -> usize {
        for s in ss {
            cur = self.stmt(cur, s);
        }
        cur
    }

    fn stmt(&mut self, cur: usize, s: &Stmt) -> usize {
        let simple = |b: &mut Builder, instr: Instr| {
            let v = b.fresh();
            b.edge(cur, v, instr);
            v
        };
        match s {
            Stmt::Assign(a, e, _) => simple(self, Instr::Assign(a.clone(), e.clone())),
            Stmt::Store(a, idx, e, _) => {
                simple(self, Instr::Store(a.clone(), idx.clone(), e.clone()))
            }
            Stmt::Assume(p) => simple(self, Instr::Assume(p.clone())),
            Stmt::Assert(p) => simple(self, Instr::Assert(p.clone())),
            Stmt::Skip => simple(self, Instr::Skip),
            Stmt::Target => {
                let t = self.target;
                self.edge(cur, t, Instr::Skip);
                self.fresh()
            }
            Stmt::Break(_) => {
                self.breaks.last_mut().expect("checked").push(cur);
                self.fresh()
            }
            Stmt::If(c, then, els) if c.is_empty() => {
                let end = self.stmts(cur, then);
                self.stmts(end, els)
            }
            Stmt::If(c, then, els) => {
                let (yes, no) = self.cond(cur, c);
                let t_end = self.stmts(yes, then);
                let e_end = self.stmts(no, els);
                let join = self.fresh();
                self.merge(t_end, join);
                self.merge(e_end, join);
                join
            }
            Stmt::While(c, body) => {
                let header = if self.edges.iter().any(|e| e.dst == cur) && !self.has_out(cur) {
                    cur
                } else {
                    let h = self.fresh();
                    self.edge(cur, h, Instr::Skip);
                    h
                };
                let (yes, exit) = self.cond(header, c);
                self.breaks.push(Vec::new());
                let end = self.stmts(yes, body);
                self.merge(end, header);
                for b in self.breaks.pop().expect("pushed") {
                    self.merge(b, exit);
                }
                exit
            }
        }
    }
}

/// Parses a program and builds its control flow graph. Vertex `0` is the
/// start; it has a single `skip` edge into the first statement.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        vars: BTreeMap::new(),
    };
    while p.at_kw("var") {
        p.decl()?;
    }
    let mut stmts = Vec::new();
    while *p.peek() != Tok::Eof {
        stmts.push(p.stmt()?);
    }
    check_stmts(&stmts, &p.vars, false)?;
    match count_targets(&stmts) {
        1 => {}
        0 => {
            return Err(ParseError::Structure(
                "program has no `target;` statement".into(),
            ))
        }
        n => {
            return Err(ParseError::Structure(format!(
                "program has {n} `target;` statements"
            )))
        }
    }
    let mut b = Builder {
        n: 2,
        edges: Vec::new(),
        target: 1,
        breaks: Vec::new(),
    };
    let first = b.fresh();
    b.edge(0, first, Instr::Skip);
    b.stmts(first, &stmts);
    // Keep the vertices reachable from the start, renumbered in order of
    // first appearance so that the numbering follows the source.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); b.n];
    for (i, e) in b.edges.iter().enumerate() {
        adj[e.src].push(i);
    }
    let mut order = vec![usize::MAX; b.n];
    let mut next = 0;
    let mut stack = vec![0];
    let mut seen = vec![false; b.n];
    seen[0] = true;
    let mut visit = Vec::new();
    while let Some(u) = stack.pop() {
        visit.push(u);
        for &i in adj[u].iter().rev() {
            let d = b.edges[i].dst;
            if !seen[d] {
                seen[d] = true;
                stack.push(d);
            }
        }
    }
    if !seen[1] {
        return Err(ParseError::Structure("`target;` is unreachable".into()));
    }
    visit.sort_unstable();
    for u in visit {
        order[u] = next;
        next += 1;
    }
    let edges: Vec<Edge> = b
        .edges
        .iter()
        .filter(|e| seen[e.src])
        .map(|e| Edge {
            src: order[e.src],
            dst: order[e.dst],
            instr: e.instr.clone(),
        })
        .collect();
    let prog = Program::new(next, edges, order[0], order[1], p.vars, (0..next).collect());
    debug_assert!(prog.validate().is_ok(), "{:?}", prog.validate());
    Ok(prog)
}
