//! Symbolic execution of backbone trees: instruction semantics, path
//! condition assembly and the per-analysis context shared with loop
//! summarization.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::rc::Rc;
use std::time::Duration;

use crate::backbone::{BackboneTree, TreeNode};
use crate::formula_builder::unfold;
use crate::loop_summary::{self, Summary};
use crate::program_model::{BinOp, Instr, PExpr, Pred, Program, Ty};
use crate::smt_backend::{SatResult, Solver};
use crate::symexpr::{Expr, State, Var};

/// Time limit of the unfolded probe in [`Analyzer::check`].
const PROBE_TIMEOUT: Duration = Duration::from_secs(1);

/// Tuning knobs of one analysis.
#[derive(Clone, Debug)]
pub struct Options {
    /// Apply the array simplification pass to iterated states.
    pub simplify: bool,
    /// Prune backbone paths whose path condition is unsatisfiable.
    pub prune: bool,
    /// Time limit for pruning and assertion queries.
    pub check_timeout: Duration,
    /// Time limit for each iteration-count synthesis query.
    pub synth_timeout: Duration,
    /// Counter bound of the unfolded probe tried before a quantified
    /// pruning query; 0 disables the probe.
    pub probe_k: u32,
}

impl Default for Options {
    fn default() -> Options {
        Options {
            simplify: false,
            prune: true,
            check_timeout: Duration::from_secs(5),
            synth_timeout: Duration::from_secs(10),
            probe_k: 6,
        }
    }
}

/// Loop entry and sorted body vertices, in the numbering of the parsed
/// program.
type MemoKey = (usize, Vec<usize>);

/// Per-analysis state: the solver, fresh-name counters and the memo table
/// of loop summaries.
pub struct Analyzer {
    pub solver: Solver,
    pub opts: Options,
    next_counter: Cell<u32>,
    next_param: Cell<u32>,
    next_artificial: Cell<u32>,
    pub(crate) memo: RefCell<BTreeMap<MemoKey, Rc<Summary>>>,
    /// Rendered summaries in the order they were computed.
    pub summaries: RefCell<Vec<String>>,
    /// Rendered path-condition parts of every executed tree.
    pub psi_log: RefCell<Vec<String>>,
    /// Iteration counts found for nested loops, by artificial variable.
    pub counts: RefCell<Vec<(String, Expr)>>,
    /// Number of solver queries issued.
    pub queries: Cell<usize>,
}

impl Analyzer {
    /// New context.
    pub fn new(solver: Solver, opts: Options) -> Analyzer {
        Analyzer {
            solver,
            opts,
            next_counter: Cell::new(0),
            next_param: Cell::new(0),
            next_artificial: Cell::new(0),
            memo: RefCell::new(BTreeMap::new()),
            summaries: RefCell::new(Vec::new()),
            psi_log: RefCell::new(Vec::new()),
            counts: RefCell::new(Vec::new()),
            queries: Cell::new(0),
        }
    }

    /// Fresh path counter.
    pub fn fresh_counter(&self) -> Var {
        let n = self.next_counter.get();
        self.next_counter.set(n + 1);
        Var::Counter(n)
    }

    /// Fresh parameter.
    pub fn fresh_param(&self) -> Var {
        let n = self.next_param.get();
        self.next_param.set(n + 1);
        Var::Param(n)
    }

    /// Fresh artificial variable name.
    pub fn fresh_artificial(&self) -> String {
        let n = self.next_artificial.get();
        self.next_artificial.set(n + 1);
        format!("$s{n}")
    }

    /// Satisfiability check under the pruning time limit. A quantified
    /// formula is first probed through its bounded unfolding: a model of the
    /// unfolding is a model of `f`, and such models are usually found much
    /// faster than by quantifier instantiation.
    pub fn check(&self, f: &Expr) -> SatResult {
        let solver = self.solver.with_timeout(self.opts.check_timeout);
        if self.opts.probe_k > 0 && f.has_quantifiers() {
            self.queries.set(self.queries.get() + 1);
            let probe = solver.with_timeout(PROBE_TIMEOUT);
            if let Ok(r @ SatResult::Sat(_)) = probe.check(&[unfold(f, self.opts.probe_k)]) {
                return r;
            }
        }
        self.queries.set(self.queries.get() + 1);
        solver
            .check(std::slice::from_ref(f))
            .unwrap_or_else(|e| SatResult::Unknown(e.to_string()))
    }
}

/// Symbolic value of a program expression.
pub fn eval_expr(p: &Program, theta: &State, e: &PExpr) -> Expr {
    match e {
        PExpr::Int(n) => Expr::int(*n),
        PExpr::Var(v) => theta.scalar(v),
        PExpr::Read(a, idx) => {
            let arity = match p.ty(a) {
                Some(Ty::Array(n)) => n,
                _ => idx.len(),
            };
            let args: Vec<Expr> = idx.iter().map(|i| eval_expr(p, theta, i)).collect();
            theta.array(a, arity).apply(&args)
        }
        PExpr::Neg(x) => eval_expr(p, theta, x).neg(),
        PExpr::Bin(op, a, b) => {
            let (x, y) = (eval_expr(p, theta, a), eval_expr(p, theta, b));
            match op {
                BinOp::Add => x.add(&y),
                BinOp::Sub => x.sub(&y),
                BinOp::Mul => x.mul(&y),
                BinOp::Div => x.div(&y),
                BinOp::Mod => x.modulo(&y),
            }
        }
    }
}

/// Symbolic value of a predicate.
pub fn eval_pred(p: &Program, theta: &State, pred: &Pred) -> Expr {
    Expr::cmp(
        pred.op,
        &eval_expr(p, theta, &pred.lhs),
        &eval_expr(p, theta, &pred.rhs),
    )
}

/// Executes one instruction in state `theta` under path condition `pc`.
/// Returns the path-condition part and the successor state. An `assume`
/// contributes its condition without a solver call; an `assert` contributes
/// `true` when the path condition entails it and `false` otherwise.
pub fn exec_instruction(
    an: &Analyzer,
    p: &Program,
    instr: &Instr,
    theta: &State,
    pc: &Expr,
) -> (Expr, State) {
    match instr {
        Instr::Skip => (Expr::tt(), theta.clone()),
        Instr::Assume(pred) => (eval_pred(p, theta, pred), theta.clone()),
        Instr::Assert(pred) => {
            let g = eval_pred(p, theta, pred);
            let valid = an.check(&Expr::and2(pc, &g.not())).is_unsat();
            (Expr::bool(valid), theta.clone())
        }
        Instr::Assign(a, e) => {
            let mut out = theta.clone();
            out.set_scalar(a, eval_expr(p, theta, e));
            (Expr::tt(), out)
        }
        Instr::Store(a, idx, e) => {
            let arity = idx.len();
            let args: Vec<Expr> = idx.iter().map(|i| eval_expr(p, theta, i)).collect();
            let v = eval_expr(p, theta, e);
            let mut out = theta.clone();
            out.set_array(a, theta.array(a, arity).store(&args, &v));
            (Expr::tt(), out)
        }
    }
}

/// Path condition part at a node wrapped around `phi`.
pub fn pc_hat(node: &TreeNode, phi: &Expr) -> Expr {
    let counters = node.counters();
    if counters.is_empty() {
        return Expr::and2(&node.psi, phi);
    }
    let mut parts: Vec<Expr> = counters
        .iter()
        .map(|k| Expr::ge(&Expr::var(k.clone()), &Expr::int(0)))
        .collect();
    parts.push(node.psi.clone());
    parts.push(phi.clone());
    Expr::exists(counters.to_vec(), &Expr::and(parts))
}

/// Path condition of node `n`: the right-nested fold of the parts along
/// its ancestry.
pub fn pc(tree: &BackboneTree, n: usize) -> Expr {
    pc_from(tree, &tree.ancestry(n), Expr::tt())
}

/// Right-nested fold of `pc_hat` over `nodes` around `inner`.
pub fn pc_from(tree: &BackboneTree, nodes: &[usize], inner: Expr) -> Expr {
    nodes
        .iter()
        .rev()
        .fold(inner, |acc, &m| pc_hat(&tree.nodes[m], &acc))
}

/// Symbolically executes `tree` (built from `p`), filling in the
/// path-condition parts and the leaf states and pruning infeasible paths.
/// Returns the pruned nodes.
pub fn execute(an: &Analyzer, p: &Program, tree: &mut BackboneTree) -> Vec<usize> {
    let mut pruned = Vec::new();
    let Some(root) = tree.root() else {
        return pruned;
    };
    tree.nodes[root].psi = Expr::tt();
    let mut stack = vec![(root, State::default())];
    while let Some((n, theta)) = stack.pop() {
        if !tree.nodes[n].alive {
            continue;
        }
        if tree.nodes[n].vertex == p.target {
            tree.nodes[n].theta = Some(theta);
            continue;
        }
        let u = tree.nodes[n].vertex;
        let kids: Vec<usize> = tree.children(n).collect();
        let mut next = Vec::new();
        for c in kids {
            let v = tree.nodes[c].vertex;
            let instr = p
                .edge(u, v)
                .expect("tree edge exists in the program")
                .instr
                .clone();
            let (psi, state) = if tree.nodes[c].loop_node.is_some() {
                let (g, entry_state) = exec_instruction(an, p, &instr, &theta, &Expr::tt());
                let lp = tree.nodes[c].loop_node.as_ref().unwrap().lp.clone();
                let inst = loop_summary::summarize(an, p, &lp);
                let ln = tree.nodes[c].loop_node.as_mut().unwrap();
                ln.counters = inst.counters.clone();
                ln.params = inst.params.clone();
                ln.parts = inst
                    .parts
                    .iter()
                    .map(|e| e.apply_state(&entry_state))
                    .collect();
                let psi = Expr::and2(&g, &inst.phi.apply_state(&entry_state));
                (psi, inst.theta.compose(&entry_state))
            } else {
                let pc_here = if matches!(instr, Instr::Assert(_)) {
                    pc(tree, n)
                } else {
                    Expr::tt()
                };
                exec_instruction(an, p, &instr, &theta, &pc_here)
            };
            tree.nodes[c].psi = psi;
            if an.opts.prune && !tree.nodes[c].psi.is_true() {
                let f = pc(tree, c);
                if f.is_false() || an.check(&f).is_unsat() {
                    tree.prune(c);
                    pruned.push(c);
                    continue;
                }
            }
            next.push((c, state));
        }
        stack.extend(next.into_iter().rev());
    }
    pruned
}

/// Text dump of the path-condition parts of a tree in depth-first order,
/// one `[path] formula` line per node. `label` names the vertices.
pub fn render_psi(tree: &BackboneTree, label: &dyn Fn(usize) -> usize) -> String {
    let mut out = String::new();
    for n in tree.preorder() {
        let path: Vec<String> = tree.path(n).iter().map(|&v| label(v).to_string()).collect();
        let _ = writeln!(out, "[{}] {}", path.join(" "), tree.nodes[n].psi);
    }
    out
}
