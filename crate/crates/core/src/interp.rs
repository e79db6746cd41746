//! Concrete interpreter for programs. Used to replay solver witnesses and as
//! an oracle in the test suites.

use std::collections::BTreeMap;

use crate::program_model::{BinOp, Instr, PExpr, Pred, Program, Ty};
use crate::smt_backend::Model;
use crate::symexpr::{euclid_div, euclid_mod, Expr, Lambda, Value};

/// Contents of one array: explicitly written cells over a base that is
/// either a lambda over integer placeholders or a constant default.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArrayMem {
    pub default: i64,
    pub base: Option<Lambda>,
    pub cells: BTreeMap<Vec<i64>, i64>,
}

impl ArrayMem {
    /// Array with every cell equal to `default`.
    pub fn constant(default: i64) -> ArrayMem {
        ArrayMem {
            default,
            ..ArrayMem::default()
        }
    }

    /// Array whose initial contents are given by a closed lambda.
    pub fn from_lambda(lam: Lambda) -> ArrayMem {
        ArrayMem {
            base: Some(lam),
            ..ArrayMem::default()
        }
    }

    /// Reads a cell.
    pub fn get(&self, idx: &[i64]) -> i64 {
        if let Some(v) = self.cells.get(idx) {
            return *v;
        }
        if let Some(lam) = &self.base {
            let args: Vec<Expr> = idx.iter().map(|i| Expr::int(*i)).collect();
            if let Some(Value::Int(v)) = lam.apply(&args).eval_ground() {
                return v;
            }
        }
        self.default
    }

    /// Writes a cell.
    pub fn set(&mut self, idx: Vec<i64>, v: i64) {
        self.cells.insert(idx, v);
    }
}

/// Concrete memory: values of all program variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Memory {
    pub scalars: BTreeMap<String, i64>,
    pub arrays: BTreeMap<String, ArrayMem>,
}

impl Memory {
    /// Memory for `p` with every scalar and array cell zero.
    pub fn zeroed(p: &Program) -> Memory {
        let mut m = Memory::default();
        for (name, ty) in &p.vars {
            match ty {
                Ty::Int => {
                    m.scalars.insert(name.clone(), 0);
                }
                Ty::Array(_) => {
                    m.arrays.insert(name.clone(), ArrayMem::constant(0));
                }
            }
        }
        m
    }

    /// Initial memory described by a solver model. Variables the model does
    /// not mention are zero.
    pub fn from_model(p: &Program, model: &Model) -> Memory {
        let mut m = Memory::zeroed(p);
        for (name, ty) in &p.vars {
            match ty {
                Ty::Int => {
                    if let Some(v) = model.int(name) {
                        m.scalars.insert(name.clone(), v);
                    }
                }
                Ty::Array(_) => {
                    if let Some(lam) = model.functions.get(name) {
                        m.arrays
                            .insert(name.clone(), ArrayMem::from_lambda(lam.clone()));
                    }
                }
            }
        }
        m
    }

    /// Value of a scalar (zero when absent).
    pub fn scalar(&self, name: &str) -> i64 {
        self.scalars.get(name).copied().unwrap_or(0)
    }

    /// Value of an array cell (zero when the array is absent).
    pub fn read(&self, name: &str, idx: &[i64]) -> i64 {
        self.arrays.get(name).map_or(0, |a| a.get(idx))
    }

    fn eval(&self, e: &PExpr) -> Result<i64, String> {
        Ok(match e {
            PExpr::Int(n) => *n,
            PExpr::Var(v) => self.scalar(v),
            PExpr::Read(a, idx) => {
                let idx = idx
                    .iter()
                    .map(|i| self.eval(i))
                    .collect::<Result<Vec<_>, _>>()?;
                self.read(a, &idx)
            }
            PExpr::Neg(e) => self.eval(e)?.checked_neg().ok_or("overflow")?,
            PExpr::Bin(op, a, b) => {
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                match op {
                    BinOp::Add => x.checked_add(y).ok_or("overflow")?,
                    BinOp::Sub => x.checked_sub(y).ok_or("overflow")?,
                    BinOp::Mul => x.checked_mul(y).ok_or("overflow")?,
                    BinOp::Div if y == 0 => return Err("division by zero".into()),
                    BinOp::Mod if y == 0 => return Err("division by zero".into()),
                    BinOp::Div => euclid_div(x, y),
                    BinOp::Mod => euclid_mod(x, y),
                }
            }
        })
    }

    fn holds(&self, p: &Pred) -> Result<bool, String> {
        Ok(p.op.eval(self.eval(&p.lhs)?, self.eval(&p.rhs)?))
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// The target vertex was reached.
    Reached,
    /// An `assume` failed or a vertex without successors was reached.
    Blocked(usize),
    /// An `assert` failed at the given vertex.
    AssertFailed(usize),
    /// Evaluation error (division by zero, overflow) at the given vertex.
    Stuck(usize, String),
    /// The step limit was exhausted.
    StepLimit,
}

/// Result of a run: the outcome and the visited vertices.
#[derive(Clone, Debug)]
pub struct Run {
    pub outcome: Outcome,
    pub path: Vec<usize>,
    pub steps: usize,
}

/// Runs `p` from its start vertex, mutating `mem`, for at most `limit`
/// edges.
pub fn run(p: &Program, mem: &mut Memory, limit: usize) -> Run {
    run_from(p, p.start, mem, limit)
}

/// Runs `p` from vertex `from`.
pub fn run_from(p: &Program, from: usize, mem: &mut Memory, limit: usize) -> Run {
    let mut v = from;
    let mut path = vec![v];
    let mut steps = 0;
    let done = |outcome, path, steps| Run {
        outcome,
        path,
        steps,
    };
    loop {
        if v == p.target {
            return done(Outcome::Reached, path, steps);
        }
        if steps >= limit {
            return done(Outcome::StepLimit, path, steps);
        }
        let outs: Vec<_> = p.out_edges(v).collect();
        let mut next = None;
        for e in &outs {
            match &e.instr {
                Instr::Assume(pred) => match mem.holds(pred) {
                    Ok(true) => {
                        next = Some(*e);
                        break;
                    }
                    Ok(false) => {}
                    Err(msg) => return done(Outcome::Stuck(v, msg), path, steps),
                },
                _ => {
                    next = Some(*e);
                    break;
                }
            }
        }
        let Some(e) = next else {
            return done(Outcome::Blocked(v), path, steps);
        };
        match &e.instr {
            Instr::Assume(_) | Instr::Skip => {}
            Instr::Assert(pred) => match mem.holds(pred) {
                Ok(true) => {}
                Ok(false) => return done(Outcome::AssertFailed(v), path, steps),
                Err(msg) => return done(Outcome::Stuck(v, msg), path, steps),
            },
            Instr::Assign(a, rhs) => match mem.eval(rhs) {
                Ok(x) => {
                    mem.scalars.insert(a.clone(), x);
                }
                Err(msg) => return done(Outcome::Stuck(v, msg), path, steps),
            },
            Instr::Store(a, idx, rhs) => {
                let idx = idx
                    .iter()
                    .map(|i| mem.eval(i))
                    .collect::<Result<Vec<_>, _>>();
                match (idx, mem.eval(rhs)) {
                    (Ok(idx), Ok(x)) => mem.arrays.entry(a.clone()).or_default().set(idx, x),
                    (Err(msg), _) | (_, Err(msg)) => {
                        return done(Outcome::Stuck(v, msg), path, steps)
                    }
                }
            }
        }
        steps += 1;
        v = e.dst;
        path.push(v);
    }
}
