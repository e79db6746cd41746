//! Random program generators and a reference symbolic executor shared by
//! the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;

use apc_core::formula_builder::unfold;
use apc_core::smt_backend::{SatResult, Solver};
use apc_core::symexpr::{CmpOp, Expr, State, Value};
use rand::rngs::StdRng;
use rand::Rng;

/// Name of the only array of generated programs.
pub const ARRAY: &str = "A";

#[derive(Clone, Debug)]
pub enum E {
    Int(i64),
    Var(usize),
    Read(Box<E>),
    Add(Box<E>, Box<E>),
    Sub(Box<E>, Box<E>),
    Scale(i64, Box<E>),
    Mod(Box<E>, i64),
}

#[derive(Clone, Debug)]
pub struct Cond {
    pub op: CmpOp,
    pub lhs: E,
    pub rhs: E,
}

#[derive(Clone, Debug)]
pub enum Stmt {
    Assign(usize, E),
    Store(E, E),
    Assume(Cond),
    If(Cond, Vec<Stmt>, Vec<Stmt>),
    While(Cond, Vec<Stmt>),
    Target,
}

/// A generated program over scalars `v0..` and optionally the array `A`.
#[derive(Clone, Debug)]
pub struct Prog {
    pub nvars: usize,
    pub array: bool,
    pub body: Vec<Stmt>,
}

impl E {
    fn render(&self, out: &mut String) {
        match self {
            E::Int(n) if *n < 0 => {
                let _ = write!(out, "(0 - {})", -n);
            }
            E::Int(n) => {
                let _ = write!(out, "{n}");
            }
            E::Var(i) => {
                let _ = write!(out, "v{i}");
            }
            E::Read(i) => {
                out.push_str("A[");
                i.render(out);
                out.push(']');
            }
            E::Add(a, b) | E::Sub(a, b) => {
                out.push('(');
                a.render(out);
                out.push_str(if matches!(self, E::Add(..)) {
                    " + "
                } else {
                    " - "
                });
                b.render(out);
                out.push(')');
            }
            E::Scale(k, a) => {
                let _ = write!(out, "{k} * ");
                a.render(out);
            }
            E::Mod(a, m) => {
                out.push('(');
                a.render(out);
                let _ = write!(out, " % {m})");
            }
        }
    }
}

impl Cond {
    fn render(&self, out: &mut String) {
        self.lhs.render(out);
        let _ = write!(out, " {} ", self.op.symbol());
        self.rhs.render(out);
    }
}

fn render_block(stmts: &[Stmt], indent: usize, out: &mut String) {
    for s in stmts {
        out.push_str(&"  ".repeat(indent));
        match s {
            Stmt::Assign(v, e) => {
                let _ = write!(out, "v{v} = ");
                e.render(out);
                out.push_str(";\n");
            }
            Stmt::Store(i, e) => {
                out.push_str("A[");
                i.render(out);
                out.push_str("] = ");
                e.render(out);
                out.push_str(";\n");
            }
            Stmt::Assume(c) => {
                out.push_str("assume(");
                c.render(out);
                out.push_str(");\n");
            }
            Stmt::If(c, t, e) => {
                out.push_str("if (");
                c.render(out);
                out.push_str(") {\n");
                render_block(t, indent + 1, out);
                out.push_str(&"  ".repeat(indent));
                out.push_str("} else {\n");
                render_block(e, indent + 1, out);
                out.push_str(&"  ".repeat(indent));
                out.push_str("}\n");
            }
            Stmt::While(c, b) => {
                out.push_str("while (");
                c.render(out);
                out.push_str(") {\n");
                render_block(b, indent + 1, out);
                out.push_str(&"  ".repeat(indent));
                out.push_str("}\n");
            }
            Stmt::Target => out.push_str("target;\n"),
        }
    }
}

impl Prog {
    /// Source text in the input language.
    pub fn source(&self) -> String {
        let mut out = String::new();
        for i in 0..self.nvars {
            let _ = write!(out, "var v{i}:int; ");
        }
        if self.array {
            out.push_str("var A:int[16];");
        }
        out.push('\n');
        render_block(&self.body, 0, &mut out);
        out
    }

    /// Names of the scalar inputs.
    pub fn names(&self) -> Vec<String> {
        (0..self.nvars).map(|i| format!("v{i}")).collect()
    }
}

// ----- generators ----------------------------------------------------------------

fn pick_op(rng: &mut StdRng) -> CmpOp {
    [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ][rng.gen_range(0..6)]
}

fn small(rng: &mut StdRng) -> i64 {
    rng.gen_range(-4..=4)
}

fn var_plus(rng: &mut StdRng, v: usize) -> E {
    let c = small(rng);
    if c == 0 {
        E::Var(v)
    } else {
        E::Add(Box::new(E::Var(v)), Box::new(E::Int(c)))
    }
}

fn operand(rng: &mut StdRng, n: usize, array: bool) -> E {
    match rng.gen_range(0..10) {
        0..=4 => E::Var(rng.gen_range(0..n)),
        5 | 6 => E::Int(small(rng)),
        7 => {
            let v = rng.gen_range(0..n);
            var_plus(rng, v)
        }
        8 if array => {
            let v = rng.gen_range(0..n);
            E::Read(Box::new(var_plus(rng, v)))
        }
        _ => E::Add(
            Box::new(E::Var(rng.gen_range(0..n))),
            Box::new(E::Var(rng.gen_range(0..n))),
        ),
    }
}

fn cond(rng: &mut StdRng, n: usize, array: bool) -> Cond {
    if rng.gen_bool(0.1) {
        let m = rng.gen_range(2..=3);
        return Cond {
            op: pick_op(rng),
            lhs: E::Mod(Box::new(E::Var(rng.gen_range(0..n))), m),
            rhs: E::Int(rng.gen_range(0..m)),
        };
    }
    Cond {
        op: pick_op(rng),
        lhs: E::Var(rng.gen_range(0..n)),
        rhs: operand(rng, n, array),
    }
}

/// Right-hand side of an assignment to `v`.
fn rhs(rng: &mut StdRng, v: usize, n: usize, array: bool) -> E {
    match rng.gen_range(0..8) {
        0 | 1 => E::Add(Box::new(E::Var(v)), Box::new(E::Int(small(rng)))),
        2 => E::Int(small(rng)),
        3 => E::Scale(rng.gen_range(2..=3), Box::new(E::Var(rng.gen_range(0..n)))),
        4 => E::Sub(Box::new(E::Var(v)), Box::new(E::Var(rng.gen_range(0..n)))),
        _ => operand(rng, n, array),
    }
}

fn assignable(rng: &mut StdRng, n: usize, frozen: &[usize]) -> Option<usize> {
    let free: Vec<usize> = (0..n).filter(|v| !frozen.contains(v)).collect();
    (!free.is_empty()).then(|| free[rng.gen_range(0..free.len())])
}

/// Loop-free block with up to `depth` levels of branching.
fn loop_free_block(rng: &mut StdRng, n: usize, array: bool, depth: usize) -> Vec<Stmt> {
    let len = rng.gen_range(1..=3);
    let mut out = Vec::new();
    for _ in 0..len {
        let s = match rng.gen_range(0..10) {
            0..=3 => {
                let v = rng.gen_range(0..n);
                Stmt::Assign(v, rhs(rng, v, n, array))
            }
            4 | 5 if array => {
                let v = rng.gen_range(0..n);
                Stmt::Store(var_plus(rng, v), operand(rng, n, false))
            }
            6 => Stmt::Assume(cond(rng, n, array)),
            _ if depth > 0 => Stmt::If(
                cond(rng, n, array),
                loop_free_block(rng, n, array, depth - 1),
                loop_free_block(rng, n, array, depth - 1),
            ),
            _ => {
                let v = rng.gen_range(0..n);
                Stmt::Assign(v, rhs(rng, v, n, array))
            }
        };
        out.push(s);
    }
    out
}

fn count_blocks(b: &[Stmt]) -> usize {
    1 + b
        .iter()
        .map(|s| match s {
            Stmt::If(_, t, e) => count_blocks(t) + count_blocks(e),
            Stmt::While(_, w) => count_blocks(w),
            _ => 0,
        })
        .sum::<usize>()
}

/// The `k`-th block of `b` in preorder, counting `b` itself as block 0.
fn nth_block(b: &mut Vec<Stmt>, k: usize) -> Result<&mut Vec<Stmt>, usize> {
    if k == 0 {
        return Ok(b);
    }
    let mut k = k - 1;
    for s in b.iter_mut() {
        let inner: Vec<&mut Vec<Stmt>> = match s {
            Stmt::If(_, t, e) => vec![t, e],
            Stmt::While(_, w) => vec![w],
            _ => continue,
        };
        for blk in inner {
            match nth_block(blk, k) {
                Ok(found) => return Ok(found),
                Err(rest) => k = rest,
            }
        }
    }
    Err(k)
}

/// Inserts `target;` at a random position of a random block.
fn place_target(rng: &mut StdRng, body: &mut Vec<Stmt>) {
    let k = rng.gen_range(0..count_blocks(body));
    let block = nth_block(body, k).expect("block index in range");
    let at = rng.gen_range(0..=block.len());
    block.insert(at, Stmt::Target);
}

/// Loop-free program with branches, assumptions and array accesses. The
/// target sits somewhere inside the branching structure.
pub fn loop_free(rng: &mut StdRng) -> Prog {
    let nvars = rng.gen_range(2..=5);
    let array = rng.gen_bool(0.5);
    let mut body = loop_free_block(rng, nvars, array, 3);
    body.extend(loop_free_block(rng, nvars, array, 2));
    place_target(rng, &mut body);
    Prog { nvars, array, body }
}

/// A counting loop over `v` bounded by an expression the body does not
/// change, with the body produced by `inner`.
fn counting_loop(
    rng: &mut StdRng,
    n: usize,
    frozen: &mut Vec<usize>,
    inner: &mut dyn FnMut(&mut StdRng, &[usize]) -> Vec<Stmt>,
) -> Vec<Stmt> {
    let free: Vec<usize> = (0..n).filter(|v| !frozen.contains(v)).collect();
    let v = free[rng.gen_range(0..free.len())];
    let w = rng.gen_range(0..n);
    let step = rng.gen_range(1..=3);
    let up = rng.gen_bool(0.7);
    let bound = if rng.gen_bool(0.5) {
        var_plus(rng, w)
    } else {
        E::Int(small(rng))
    };
    let c = Cond {
        op: if up { CmpOp::Lt } else { CmpOp::Gt },
        lhs: E::Var(v),
        rhs: bound,
    };
    frozen.push(v);
    frozen.push(w);
    let mut body = inner(rng, frozen);
    frozen.truncate(frozen.len() - 2);
    let next = if up {
        E::Add(Box::new(E::Var(v)), Box::new(E::Int(step)))
    } else {
        E::Sub(Box::new(E::Var(v)), Box::new(E::Int(step)))
    };
    body.push(Stmt::Assign(v, next));
    let mut out = Vec::new();
    if rng.gen_bool(0.5) {
        out.push(Stmt::Assign(v, operand(rng, n, false)));
    }
    out.push(Stmt::While(c, body));
    out
}

fn scalar_stmts(rng: &mut StdRng, n: usize, frozen: &[usize], len: usize) -> Vec<Stmt> {
    let mut out = Vec::new();
    for _ in 0..len {
        if let Some(v) = assignable(rng, n, frozen) {
            out.push(Stmt::Assign(v, rhs(rng, v, n, false)));
        }
    }
    out
}

fn fuzz_block(
    rng: &mut StdRng,
    n: usize,
    frozen: &mut Vec<usize>,
    loops: &mut usize,
    depth: usize,
) -> Vec<Stmt> {
    let len = rng.gen_range(1..=3);
    let mut out = Vec::new();
    for _ in 0..len {
        match rng.gen_range(0..10) {
            0..=3 => out.extend(scalar_stmts(rng, n, frozen, 1)),
            4..=6 if *loops < 2 && depth < 2 && assignable(rng, n, frozen).is_some() => {
                *loops += 1;
                let mut inner = |rng: &mut StdRng, fr: &[usize]| {
                    let mut fr = fr.to_vec();
                    fuzz_block(rng, n, &mut fr, loops, depth + 1)
                };
                out.extend(counting_loop(rng, n, frozen, &mut inner));
            }
            _ => {
                let c = cond(rng, n, false);
                let t = {
                    let len = rng.gen_range(0..=2);
                    scalar_stmts(rng, n, frozen, len)
                };
                let e = {
                    let len = rng.gen_range(0..=2);
                    scalar_stmts(rng, n, frozen, len)
                };
                out.push(Stmt::If(c, t, e));
            }
        }
    }
    out
}

/// Scalar program with at most two loops, nested at most two deep, over at
/// most six variables. Every loop counts towards a bound its body leaves
/// unchanged.
pub fn with_loops(rng: &mut StdRng) -> Prog {
    let nvars = rng.gen_range(2..=6);
    let mut loops = 0;
    let mut body = fuzz_block(rng, nvars, &mut Vec::new(), &mut loops, 0);
    body.extend(fuzz_block(rng, nvars, &mut Vec::new(), &mut loops, 0));
    let c = cond(rng, nvars, false);
    if rng.gen_bool(0.3) {
        place_target(rng, &mut body);
    } else {
        body.push(Stmt::If(c, vec![Stmt::Target], vec![]));
    }
    Prog {
        nvars,
        array: false,
        body,
    }
}

/// A single loop followed by the target. Its body is either straight-line
/// code or one two-way branch, so the loop has at most two paths. `v0`
/// counts up to `v1` plus a constant.
pub fn single_loop(rng: &mut StdRng) -> Prog {
    let nvars = rng.gen_range(3..=5);
    let frozen = [0, 1];
    let mut body = Vec::new();
    if rng.gen_bool(0.75) {
        let c = cond(rng, nvars, false);
        let t = {
            let len = rng.gen_range(1..=2);
            scalar_stmts(rng, nvars, &frozen, len)
        };
        let e = {
            let len = rng.gen_range(0..=2);
            scalar_stmts(rng, nvars, &frozen, len)
        };
        body.push(Stmt::If(c, t, e));
    } else {
        body.extend({
            let len = rng.gen_range(1..=2);
            scalar_stmts(rng, nvars, &frozen, len)
        });
    }
    body.push(Stmt::Assign(
        0,
        E::Add(Box::new(E::Var(0)), Box::new(E::Int(rng.gen_range(1..=2)))),
    ));
    let head = Cond {
        op: CmpOp::Lt,
        lhs: E::Var(0),
        rhs: var_plus(rng, 1),
    };
    Prog {
        nvars,
        array: false,
        body: vec![Stmt::While(head, body), Stmt::Target],
    }
}

// ----- reference symbolic execution -------------------------------------------

/// Symbolic state of the reference executor: scalar values and the stores
/// applied to the input array, oldest first.
#[derive(Clone)]
struct RefState {
    scalars: Vec<Expr>,
    stores: Vec<(Expr, Expr)>,
}

impl RefState {
    fn eval(&self, e: &E) -> Expr {
        match e {
            E::Int(n) => Expr::int(*n),
            E::Var(v) => self.scalars[*v].clone(),
            E::Read(i) => {
                let idx = self.eval(i);
                self.stores
                    .iter()
                    .fold(Expr::app(ARRAY, vec![idx.clone()]), |acc, (j, val)| {
                        Expr::ite(&Expr::eq(&idx, j), val, &acc)
                    })
            }
            E::Add(a, b) => self.eval(a).add(&self.eval(b)),
            E::Sub(a, b) => self.eval(a).sub(&self.eval(b)),
            E::Scale(k, a) => self.eval(a).scale(*k),
            E::Mod(a, m) => self.eval(a).modulo(&Expr::int(*m)),
        }
    }

    fn holds(&self, c: &Cond) -> Expr {
        Expr::cmp(c.op, &self.eval(&c.lhs), &self.eval(&c.rhs))
    }
}

/// Runs `stmts` on every `(state, path condition)` pair, collecting the
/// path conditions of paths that hit the target. Returns the pairs that
/// leave the block.
fn ref_exec(
    stmts: &[Stmt],
    mut live: Vec<(RefState, Expr)>,
    hits: &mut Vec<Expr>,
) -> Vec<(RefState, Expr)> {
    for s in stmts {
        let mut next = Vec::new();
        for (mut st, pc) in live {
            match s {
                Stmt::Assign(v, e) => {
                    st.scalars[*v] = st.eval(e);
                    next.push((st, pc));
                }
                Stmt::Store(i, e) => {
                    let (i, e) = (st.eval(i), st.eval(e));
                    st.stores.push((i, e));
                    next.push((st, pc));
                }
                Stmt::Assume(c) => {
                    let pc = Expr::and2(&pc, &st.holds(c));
                    next.push((st, pc));
                }
                Stmt::If(c, t, e) => {
                    let h = st.holds(c);
                    next.extend(ref_exec(t, vec![(st.clone(), Expr::and2(&pc, &h))], hits));
                    next.extend(ref_exec(e, vec![(st, Expr::and2(&pc, &h.not()))], hits));
                }
                Stmt::While(..) => panic!("reference executor handles loop-free programs only"),
                Stmt::Target => hits.push(pc),
            }
        }
        live = next;
    }
    live
}

/// Disjunction of the path conditions of all target-reaching paths of a
/// loop-free program, computed by straightforward path enumeration.
pub fn reference_condition(p: &Prog) -> Expr {
    let init = RefState {
        scalars: (0..p.nvars).map(|i| Expr::sym(&format!("v{i}"))).collect(),
        stores: Vec::new(),
    };
    let mut hits = Vec::new();
    ref_exec(&p.body, vec![(init, Expr::tt())], &mut hits);
    Expr::or(hits)
}

// ----- grounding --------------------------------------------------------------------

/// State binding each named scalar to a constant.
pub fn ground_state(values: &BTreeMap<String, i64>) -> State {
    let mut st = State::default();
    for (k, v) in values {
        st.set_scalar(k, Expr::int(*v));
    }
    st
}

/// Truth of a formula whose remaining free variables are existentially
/// read: ground evaluation when possible, otherwise a satisfiability query.
/// `None` when the solver gives no answer.
pub fn holds(solver: &Solver, f: &Expr) -> Option<bool> {
    if let Some(Value::Bool(b)) = f.eval_ground() {
        return Some(b);
    }
    if let Some(Value::Bool(b)) = unfold(f, 8).eval_ground() {
        return Some(b);
    }
    match solver.check(std::slice::from_ref(f)) {
        Ok(SatResult::Sat(_)) => Some(true),
        Ok(SatResult::Unsat) => Some(false),
        _ => None,
    }
}
