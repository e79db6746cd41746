//! Assembly of the necessary condition from an executed backbone tree,
//! bounded unfolding of its quantifiers and the decision procedure that
//! races the direct query against the unfolded one.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::backbone::BackboneTree;
use crate::program_model::Program;
use crate::smt_backend::{script, smt_var, Model, SatResult, Solver, SolverError};
use crate::symexec::{self, Analyzer};
use crate::symexpr::{CmpOp, Expr, Node, Var};

/// Result of analysing a program: the normalized program, its executed
/// backbone tree and the necessary condition for reaching the target.
pub struct Analysis {
    pub program: Program,
    pub tree: BackboneTree,
    pub phi: Expr,
    pub analyzer: Analyzer,
    /// Path-condition parts of the top-level tree.
    pub psi: String,
    pub build_ms: u128,
}

/// Normalizes `p`, builds and executes its backbone tree and assembles the
/// necessary condition.
pub fn analyze(p: &Program, analyzer: Analyzer) -> Analysis {
    let t0 = Instant::now();
    let program = p.normalize();
    let mut tree = BackboneTree::build(&program);
    symexec::execute(&analyzer, &program, &mut tree);
    let psi = symexec::render_psi(&tree, &|v| v);
    let phi = build_phi_hat(&tree);
    Analysis {
        program,
        tree,
        phi,
        analyzer,
        psi,
        build_ms: t0.elapsed().as_millis(),
    }
}

/// The necessary condition of an executed tree, with shared path prefixes
/// factored out: each node wraps the disjunction of its children.
pub fn build_phi_hat(tree: &BackboneTree) -> Expr {
    match tree.root() {
        None => Expr::ff(),
        Some(r) => build_at(tree, r),
    }
}

fn build_at(tree: &BackboneTree, n: usize) -> Expr {
    let inner = if tree.is_leaf(n) {
        Expr::tt()
    } else {
        Expr::or(
            tree.children(n)
                .map(|c| build_at(tree, c))
                .collect::<Vec<_>>(),
        )
    };
    symexec::pc_hat(&tree.nodes[n], &inner)
}

/// The flat form: the disjunction of the path conditions of all leaves.
pub fn flat_phi_hat(tree: &BackboneTree) -> Expr {
    if tree.is_empty() {
        return Expr::ff();
    }
    Expr::or(
        tree.leaves()
            .into_iter()
            .map(|l| symexec::pc(tree, l))
            .collect::<Vec<_>>(),
    )
}

// ----- unfolding -------------------------------------------------------------

/// Bounded unfolding with every path counter limited to `0..=k`. Positive
/// existential binders become fresh constants, counter-bounded universal
/// binders become finite conjunctions, and quantifiers under `ite`
/// conditions are expanded over their finite range. A model of the result
/// restricted to the original symbols is a model of `phi`.
pub fn unfold(phi: &Expr, k: u32) -> Expr {
    unfold_tracked(phi, k).0
}

/// [`unfold`], also returning the counters of `phi` bound by existentials
/// outside every universal quantifier, each paired with the counter that
/// replaces it in the unfolding.
pub fn unfold_tracked(phi: &Expr, k: u32) -> (Expr, Vec<(Var, Var)>) {
    let mut next_counter = 0;
    let mut next_param = 0;
    for v in phi.all_vars() {
        match v {
            Var::Counter(n) => next_counter = next_counter.max(n + 1),
            Var::Param(n) => next_param = next_param.max(n + 1),
            _ => {}
        }
    }
    let mut u = Unfolder {
        k: k as i64,
        next_counter,
        next_param,
        bounds: Vec::new(),
        outer: Vec::new(),
        universal_depth: 0,
    };
    let body = u.positive(phi);
    let mut parts = vec![body];
    parts.append(&mut u.bounds);
    (Expr::and(parts), u.outer)
}

struct Unfolder {
    k: i64,
    next_counter: u32,
    next_param: u32,
    bounds: Vec<Expr>,
    outer: Vec<(Var, Var)>,
    universal_depth: usize,
}

/// Ranges larger than this are left quantified.
const MAX_RANGE: i64 = 4096;

impl Unfolder {
    fn positive(&mut self, e: &Expr) -> Expr {
        match e.node() {
            Node::And(xs) => Expr::and(xs.iter().map(|x| self.positive(x)).collect::<Vec<_>>()),
            Node::Or(xs) => Expr::or(xs.iter().map(|x| self.positive(x)).collect::<Vec<_>>()),
            Node::Implies(a, b) => {
                let a = self.full(a);
                let b = self.positive(b);
                Expr::or([a.not(), b])
            }
            Node::Exists(vs, body) => {
                let mut map = std::collections::BTreeMap::new();
                for v in vs {
                    let fresh = match v {
                        Var::Counter(_) => {
                            let c = Var::Counter(self.next_counter);
                            self.next_counter += 1;
                            let ce = Expr::var(c.clone());
                            self.bounds.push(Expr::ge(&ce, &Expr::int(0)));
                            self.bounds.push(Expr::le(&ce, &Expr::int(self.k)));
                            if self.universal_depth == 0 {
                                self.outer.push((v.clone(), c.clone()));
                            }
                            c
                        }
                        _ => {
                            let t = Var::Param(self.next_param);
                            self.next_param += 1;
                            t
                        }
                    };
                    map.insert(v.clone(), Expr::var(fresh));
                }
                self.positive(&body.subst(&map))
            }
            Node::Forall(vs, body) => match self.expand(vs, body, true) {
                Some(parts) => {
                    self.universal_depth += 1;
                    let parts: Vec<Expr> = parts.iter().map(|p| self.positive(p)).collect();
                    self.universal_depth -= 1;
                    Expr::and(parts)
                }
                None => Expr::forall(vs.clone(), &self.full(body)),
            },
            _ => self.full(e),
        }
    }

    /// Expands every quantifier with a finite range, at any polarity.
    fn full(&mut self, e: &Expr) -> Expr {
        match e.node() {
            Node::Forall(vs, body) | Node::Exists(vs, body) => {
                let universal = matches!(e.node(), Node::Forall(..));
                match self.expand(vs, body, universal) {
                    Some(parts) => {
                        let parts: Vec<Expr> = parts.iter().map(|p| self.full(p)).collect();
                        if universal {
                            Expr::and(parts)
                        } else {
                            Expr::or(parts)
                        }
                    }
                    None => {
                        let b = self.full(body);
                        if universal {
                            Expr::forall(vs.clone(), &b)
                        } else {
                            Expr::exists(vs.clone(), &b)
                        }
                    }
                }
            }
            Node::Int(_) | Node::Bool(_) | Node::Star | Node::Var(_) | Node::StarPred(_) => {
                e.clone()
            }
            _ => {
                let kids: Vec<Expr> = e.children().iter().map(|c| self.full(c)).collect();
                e.rebuild(&kids)
            }
        }
    }

    /// Instances of the first binder over its range, each still quantified
    /// over the remaining binders. `None` when the range is not finite under
    /// the counter bound.
    fn expand(&self, vs: &[Var], body: &Expr, universal: bool) -> Option<Vec<Expr>> {
        let (v, rest) = vs.split_first()?;
        let guards: Vec<Expr> = if universal {
            match body.node() {
                Node::Implies(a, _) => conjuncts(a),
                Node::Or(xs) => xs
                    .iter()
                    .filter(|x| x.is_formula() && !x.has_star_pred())
                    .map(|x| x.not())
                    .collect(),
                _ => return None,
            }
        } else {
            conjuncts(body)
        };
        let mut lo: Option<i64> = None;
        let mut hi: Option<i64> = None;
        for g in &guards {
            let Some((lower, bound)) = self.bound_of(v, g) else {
                continue;
            };
            if lower {
                lo = Some(lo.map_or(bound, |l| l.max(bound)));
            } else {
                hi = Some(hi.map_or(bound, |h| h.min(bound)));
            }
        }
        let (lo, hi) = (lo?, hi?);
        if hi - lo > MAX_RANGE {
            return None;
        }
        let wrap = |b: Expr| {
            if universal {
                Expr::forall(rest.to_vec(), &b)
            } else {
                Expr::exists(rest.to_vec(), &b)
            }
        };
        Some(
            (lo..hi)
                .map(|c| wrap(body.subst1(v, &Expr::int(c))))
                .collect(),
        )
    }

    /// Reads `g` as a bound on `v`: `(true, lo)` for `v >= lo`, `(false,
    /// hi)` for `v < hi`, using the largest value any counter can take.
    fn bound_of(&self, v: &Var, g: &Expr) -> Option<(bool, i64)> {
        let Node::Cmp(op, a, b) = g.node() else {
            return None;
        };
        let d = a.sub(b);
        let ve = Expr::var(v.clone());
        let c = d.coefficient(&ve);
        if c.abs() != 1 {
            return None;
        }
        let rest = d.sub(&ve.scale(c));
        if rest.occurs(v) {
            return None;
        }
        // d = c*v + rest, so `d op 0` reads `v op' other`.
        let other = if c == 1 { rest.neg() } else { rest };
        let op = if c == 1 { *op } else { flip(*op) };
        let (lo_val, hi_val) = self.extent(&other)?;
        match op {
            CmpOp::Lt => Some((false, hi_val)),
            CmpOp::Le => Some((false, hi_val + 1)),
            CmpOp::Gt => Some((true, lo_val + 1)),
            CmpOp::Ge => Some((true, lo_val)),
            _ => None,
        }
    }

    /// Smallest and largest value of a sum of counters with non-negative
    /// coefficients plus a constant.
    fn extent(&self, e: &Expr) -> Option<(i64, i64)> {
        let (terms, c) = e.linear();
        let mut max = c;
        for (t, k) in terms {
            if !matches!(t.node(), Node::Var(Var::Counter(_))) || k < 0 {
                return None;
            }
            max += k * self.k;
        }
        Some((c, max))
    }
}

fn flip(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Le => CmpOp::Ge,
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Ge => CmpOp::Le,
        other => other,
    }
}

fn conjuncts(e: &Expr) -> Vec<Expr> {
    match e.node() {
        Node::And(xs) => xs.clone(),
        _ => vec![e.clone()],
    }
}

// ----- deciding ----------------------------------------------------------------

/// Which query produced a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Direct,
    Unfolded,
}

/// Final answer about a formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
}

/// Wall-clock time spent in each phase, in milliseconds.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub build_ms: u128,
    pub unfold_ms: u128,
    pub solve_direct_ms: u128,
    pub solve_unfolded_ms: u128,
}

/// Verdict about the satisfiability of a necessary condition.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub winner: Option<Route>,
    /// The unfolded query was unsatisfiable; this bounds the counters but
    /// proves nothing about the unbounded condition.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub bounded_unsat: bool,
    /// For a model of the unfolded query: whether substituting it into the
    /// original condition left a satisfiable formula (`None` when that
    /// check was inconclusive).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confirmed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    pub timings: Timings,
}

/// Settings for [`decide`].
#[derive(Clone, Debug)]
pub struct DecideOptions {
    /// Unfolding bound for path counters.
    pub unfold_k: u32,
    /// Shared time limit for the whole decision.
    pub timeout: Duration,
    /// Run both queries in parallel and take the first definitive answer.
    /// Otherwise the unfolded query runs first.
    pub race: bool,
}

impl Default for DecideOptions {
    fn default() -> Self {
        DecideOptions {
            unfold_k: 25,
            timeout: Duration::from_secs(30),
            race: true,
        }
    }
}

/// Both scripts of a decision, for `--emit-smt`.
pub fn scripts(phi: &Expr, k: u32) -> (String, String) {
    let direct = script(std::slice::from_ref(phi)) + "(check-sat)\n(get-model)\n";
    let unfolded = script(&[unfold(phi, k)]) + "(check-sat)\n(get-model)\n";
    (direct, unfolded)
}

fn run_session(solver: &Solver, text: &str, cancel: &AtomicBool) -> Result<SatResult, SolverError> {
    match solver.check_script(text, Some(cancel)) {
        Err(SolverError::Reported(msg)) => Err(SolverError::Reported(msg)),
        Err(_) if !cancel.load(Ordering::Relaxed) => solver.check_script(text, Some(cancel)),
        other => other,
    }
}

/// Decides satisfiability of `phi`. The direct query and the bounded
/// unfolding are both final when satisfiable; an unsatisfiable unfolding
/// only bounds the counters, so unsatisfiability comes from the direct
/// query alone.
pub fn decide(solver: &Solver, phi: &Expr, opts: &DecideOptions) -> Verdict {
    let mut verdict = Verdict {
        status: Status::Unknown,
        winner: None,
        bounded_unsat: false,
        confirmed: None,
        model: None,
        timings: Timings::default(),
    };
    if phi.is_false() {
        verdict.status = Status::Unsat;
        verdict.winner = Some(Route::Direct);
        return verdict;
    }
    let t0 = Instant::now();
    let (unfolded, witnesses) = unfold_tracked(phi, opts.unfold_k);
    verdict.timings.unfold_ms = t0.elapsed().as_millis();
    let direct_script = script(std::slice::from_ref(phi));
    let unfolded_script = script(std::slice::from_ref(&unfolded));
    let solver = solver.with_timeout(opts.timeout);
    let cancel = Arc::new(AtomicBool::new(false));

    type Msg = (Route, Result<SatResult, SolverError>, u128);
    let (tx, rx) = mpsc::channel::<Msg>();
    let spawn = |route: Route, text: String| {
        let tx = tx.clone();
        let cancel = cancel.clone();
        let solver = solver.clone();
        std::thread::spawn(move || {
            let t = Instant::now();
            let r = run_session(&solver, &text, &cancel);
            let _ = tx.send((route, r, t.elapsed().as_millis()));
        })
    };
    let final_answer = |m: &Msg| {
        matches!(
            (&m.0, &m.1),
            (_, Ok(SatResult::Sat(_))) | (Route::Direct, Ok(SatResult::Unsat))
        )
    };

    let mut results: Vec<Msg> = Vec::new();
    if opts.race {
        let handles = [
            spawn(Route::Direct, direct_script),
            spawn(Route::Unfolded, unfolded_script),
        ];
        for _ in 0..2 {
            let Ok(m) = rx.recv() else { break };
            let done = final_answer(&m);
            results.push(m);
            if done {
                cancel.store(true, Ordering::Relaxed);
                break;
            }
        }
        for h in handles {
            let _ = h.join();
        }
    } else {
        for (route, text) in [
            (Route::Unfolded, unfolded_script),
            (Route::Direct, direct_script),
        ] {
            let _ = spawn(route, text).join();
            let Ok(m) = rx.recv() else { break };
            let done = final_answer(&m);
            results.push(m);
            if done {
                break;
            }
        }
    }
    for (route, _, ms) in &results {
        match route {
            Route::Direct => verdict.timings.solve_direct_ms = *ms,
            Route::Unfolded => verdict.timings.solve_unfolded_ms = *ms,
        }
    }

    for (route, r, _) in results {
        match r {
            Ok(SatResult::Sat(model)) => {
                if route == Route::Unfolded {
                    if let Some(m) = &model {
                        verdict.confirmed = match confirm_model(&solver, phi, m, &witnesses) {
                            Ok(SatResult::Sat(_)) => Some(true),
                            Ok(SatResult::Unsat) => Some(false),
                            _ => None,
                        };
                    }
                    if verdict.confirmed == Some(false) {
                        continue;
                    }
                }
                verdict.status = Status::Sat;
                verdict.winner = Some(route);
                verdict.model = model;
                return verdict;
            }
            Ok(SatResult::Unsat) if route == Route::Direct => {
                verdict.status = Status::Unsat;
                verdict.winner = Some(route);
                return verdict;
            }
            Ok(SatResult::Unsat) => verdict.bounded_unsat = true,
            _ => {}
        }
    }
    verdict
}

/// Runs a single route without racing, for per-route reports. Returns the
/// solver answer and the time it took in milliseconds.
pub fn run_route(
    solver: &Solver,
    phi: &Expr,
    route: Route,
    opts: &DecideOptions,
) -> (Result<SatResult, SolverError>, u128) {
    let f = match route {
        Route::Direct => phi.clone(),
        Route::Unfolded => unfold(phi, opts.unfold_k),
    };
    let t = Instant::now();
    let r = run_session(
        &solver.with_timeout(opts.timeout),
        &script(&[f]),
        &AtomicBool::new(false),
    );
    (r, t.elapsed().as_millis())
}

/// Checks that `model`, substituted for the basic symbols of `phi`, leaves a
/// satisfiable formula. `witnesses` pairs outer counters of `phi` with their
/// counterparts in the unfolding that produced the model; their model
/// values are tried first as witnesses for the existentials binding them,
/// and the plain substitution is checked when that attempt is not
/// satisfiable.
pub fn confirm_model(
    solver: &Solver,
    phi: &Expr,
    model: &Model,
    witnesses: &[(Var, Var)],
) -> Result<SatResult, SolverError> {
    let grounded = phi.apply_state(&model.as_state());
    let values: BTreeMap<Var, Expr> = witnesses
        .iter()
        .filter_map(|(orig, fresh)| {
            model
                .int(&smt_var(fresh))
                .map(|n| (orig.clone(), Expr::int(n)))
        })
        .collect();
    if !values.is_empty() {
        if let Ok(r @ SatResult::Sat(_)) = solver.check(&[pin_exists(&grounded, &values)]) {
            return Ok(r);
        }
    }
    solver.check(&[grounded])
}

/// Instantiates existentially bound variables that have a value in
/// `values`, dropping them from their binders.
fn pin_exists(e: &Expr, values: &BTreeMap<Var, Expr>) -> Expr {
    e.rewrite(&mut |n, _| match n.node() {
        Node::Exists(vs, body) if vs.iter().any(|v| values.contains_key(v)) => {
            let here: BTreeMap<Var, Expr> = vs
                .iter()
                .filter_map(|v| values.get(v).map(|x| (v.clone(), x.clone())))
                .collect();
            let rest: Vec<Var> = vs
                .iter()
                .filter(|v| !here.contains_key(v))
                .cloned()
                .collect();
            let inner = pin_exists(&body.subst(&here), values);
            Some(if rest.is_empty() {
                inner
            } else {
                Expr::exists(rest, &inner)
            })
        }
        _ => None,
    })
}

/// Answer to a frontier pruning query.
#[derive(Clone, Debug)]
pub enum Prune {
    /// The frontier may still reach the target; the model gives inputs.
    Keep(Option<Model>),
    /// No real path from the frontier reaches the target.
    Drop,
    /// The solver gave no definitive answer; the caller keeps the frontier.
    Unknown,
}

/// Checks a frontier path condition of an external exploration against the
/// necessary condition.
pub fn prune_check(
    solver: &Solver,
    frontier: &Expr,
    phi: &Expr,
    opts: &DecideOptions,
) -> (Prune, Verdict) {
    let v = decide(solver, &Expr::and2(frontier, phi), opts);
    let p = match v.status {
        Status::Sat => Prune::Keep(v.model.clone()),
        Status::Unsat => Prune::Drop,
        Status::Unknown => Prune::Unknown,
    };
    (p, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program_model::parse_program;
    use crate::symexec::Options;

    fn solver() -> Solver {
        Solver::from_env(Duration::from_secs(10))
    }

    #[test]
    fn empty_tree_gives_false() {
        assert!(build_phi_hat(&BackboneTree::default()).is_false());
        let v = decide(&solver(), &Expr::ff(), &DecideOptions::default());
        assert_eq!(v.status, Status::Unsat);
    }

    #[test]
    fn shared_prefixes_are_factored() {
        let src =
            "var x:int; var y:int; if (x > 0) { if (y > 0) { y = 1; } else { y = 2; } target; }";
        let p = parse_program(src).unwrap();
        let a = analyze(&p, Analyzer::new(solver(), Options::default()));
        let x = Expr::sym("x");
        let y = Expr::sym("y");
        let expected = Expr::and2(
            &Expr::gt(&x, &Expr::int(0)),
            &Expr::or([Expr::gt(&y, &Expr::int(0)), Expr::le(&y, &Expr::int(0))]),
        );
        assert_eq!(a.phi, expected);
    }

    #[test]
    fn counter_bounded_universal_unfolds_to_instances() {
        let k = Var::Counter(0);
        let t = Var::Param(0);
        let (ke, te) = (Expr::var(k.clone()), Expr::var(t.clone()));
        let range = Expr::and2(&Expr::ge(&te, &Expr::int(0)), &Expr::lt(&te, &ke));
        let body = Expr::ne(&Expr::app("A", vec![te.clone()]), &Expr::int(0));
        let phi = Expr::exists(
            vec![k.clone()],
            &Expr::forall(vec![t], &Expr::implies(&range, &body)),
        );
        let u = unfold(&phi, 2);
        let k1 = Expr::counter(1);
        let inst = |v: i64| {
            Expr::or([
                Expr::ge(&Expr::int(v), &k1),
                Expr::ne(&Expr::app("A", vec![Expr::int(v)]), &Expr::int(0)),
            ])
        };
        let expected = Expr::and([
            inst(0),
            inst(1),
            Expr::ge(&k1, &Expr::int(0)),
            Expr::le(&k1, &Expr::int(2)),
        ]);
        assert_eq!(u, expected);
    }

    #[test]
    fn quantifier_free_formula_is_unchanged() {
        let phi = Expr::lt(&Expr::sym("x"), &Expr::sym("y"));
        assert_eq!(unfold(&phi, 25), phi);
    }
}
