//! Loop summaries. A loop is summarized by the program it induces: one path
//! counter per backbone path of that program, a looping condition over the
//! counters and the state reached after the counted iterations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::rc::Rc;

use crate::backbone::BackboneTree;
use crate::program_model::{Loop, Program, Ty};
use crate::smt_backend::SatResult;
use crate::symexec::{self, Analyzer};
use crate::symexpr::{Expr, Lambda, Node, State, Var};

/// Summary of one loop.
#[derive(Clone, Debug)]
pub struct Summary {
    /// Entry vertex, in the numbering of the parsed program.
    pub entry: usize,
    /// One path counter per surviving backbone path of the induced program.
    pub counters: Vec<Var>,
    /// Parameters standing for the counters inside `parts`.
    pub params: Vec<Var>,
    /// Looping condition over the counters.
    pub phi: Expr,
    /// State after the counted iterations, over the entry state.
    pub theta: State,
    /// Per path, its path condition at iteration `params`.
    pub parts: Vec<Expr>,
    /// Per path, the vertices it visits, in the numbering of the parsed
    /// program.
    pub paths: Vec<Vec<usize>>,
}

/// Summary of `lp` (a loop of `p`) with fresh counters and parameters.
/// Summaries are computed once per loop and renamed on every use.
pub fn summarize(an: &Analyzer, p: &Program, lp: &Loop) -> Summary {
    let body: BTreeSet<usize> = lp.body.iter().map(|&v| p.origin[v]).collect();
    let key = (p.origin[lp.entry], body.into_iter().collect::<Vec<_>>());
    let cached = an.memo.borrow().get(&key).cloned();
    let s = match cached {
        Some(s) => s,
        None => {
            let s = Rc::new(compute(an, p, lp));
            an.summaries.borrow_mut().push(render(&s));
            an.memo.borrow_mut().insert(key, s.clone());
            s
        }
    };
    instantiate(an, &s)
}

fn instantiate(an: &Analyzer, s: &Summary) -> Summary {
    let mut vars = BTreeSet::new();
    vars.extend(s.phi.all_vars());
    for e in &s.parts {
        vars.extend(e.all_vars());
    }
    for v in s.theta.scalars.values() {
        vars.extend(v.all_vars());
    }
    for l in s.theta.arrays.values() {
        vars.extend(l.body.all_vars());
    }
    let mut map = BTreeMap::new();
    let ordered = s.counters.iter().chain(&s.params).cloned().chain(vars);
    for v in ordered {
        if map.contains_key(&v) {
            continue;
        }
        match v {
            Var::Counter(_) => {
                map.insert(v, an.fresh_counter());
            }
            Var::Param(_) => {
                map.insert(v, an.fresh_param());
            }
            _ => {}
        }
    }
    let theta = s.theta.map_values(&mut |e| e.rename(&map));
    Summary {
        entry: s.entry,
        counters: s.counters.iter().map(|k| map[k].clone()).collect(),
        params: s.params.iter().map(|t| map[t].clone()).collect(),
        phi: s.phi.rename(&map),
        theta,
        parts: s.parts.iter().map(|e| e.rename(&map)).collect(),
        paths: s.paths.clone(),
    }
}

/// Text dump of a summary: entry, counters, looping condition and state.
pub fn render(s: &Summary) -> String {
    let mut out = String::new();
    let ks: Vec<String> = s.counters.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(out, "loop at {}", s.entry);
    let _ = writeln!(out, "counters: {}", ks.join(" "));
    let _ = writeln!(out, "phi: {}", s.phi);
    let _ = writeln!(out, "theta:");
    for line in s.theta.to_string().lines() {
        let _ = writeln!(out, "  {line}");
    }
    out
}

/// Computes the summary of `lp` from scratch.
pub fn compute(an: &Analyzer, p: &Program, lp: &Loop) -> Summary {
    let ip = p.induced_program(lp);
    let mut tree = BackboneTree::build(&ip);
    symexec::execute(an, &ip, &mut tree);
    an.psi_log
        .borrow_mut()
        .push(symexec::render_psi(&tree, &|v| ip.origin[v]));
    let entry = p.origin[lp.entry];
    if tree.is_empty() {
        return Summary {
            entry,
            counters: vec![],
            params: vec![],
            phi: Expr::tt(),
            theta: State::default(),
            parts: vec![],
            paths: vec![],
        };
    }
    let leaves = tree.leaves();
    let counters: Vec<Var> = leaves.iter().map(|_| an.fresh_counter()).collect();
    let params: Vec<Var> = leaves.iter().map(|_| an.fresh_param()).collect();
    let bar = introduce_artificials(an, &tree);
    let ctx = Iteration::new(an, &ip, &tree, &bar, &leaves, &counters);
    let full = ctx.iterate();
    let theta = restrict(&full);
    let (phi, parts) = looping_condition(&tree, &leaves, &theta, &counters, &params);
    let paths = leaves
        .iter()
        .map(|&n| tree.path(n).iter().map(|&v| ip.origin[v]).collect())
        .collect();
    Summary {
        entry,
        counters,
        params,
        phi,
        theta,
        parts,
        paths,
    }
}

/// Drops the artificial variables from a state.
pub fn restrict(theta: &State) -> State {
    State {
        scalars: theta
            .scalars
            .iter()
            .filter(|(k, _)| !k.starts_with('$'))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        arrays: theta.arrays.clone(),
    }
}

/// Looping condition: every path runs its counted iterations at some
/// interleaving of the others. Returns the condition and, per path, its
/// parameterized path condition.
pub fn looping_condition(
    tree: &BackboneTree,
    leaves: &[usize],
    theta: &State,
    counters: &[Var],
    params: &[Var],
) -> (Expr, Vec<Expr>) {
    let to_params: BTreeMap<Var, Expr> = counters
        .iter()
        .zip(params)
        .map(|(k, t)| (k.clone(), Expr::var(t.clone())))
        .collect();
    let parts: Vec<Expr> = leaves
        .iter()
        .map(|&l| symexec::pc(tree, l).apply_state(theta).subst(&to_params))
        .collect();
    let mut conj = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        let ti = Expr::var(params[i].clone());
        let ki = Expr::var(counters[i].clone());
        let mut inner = Vec::new();
        let mut others = Vec::new();
        for j in 0..params.len() {
            if j == i {
                continue;
            }
            let tj = Expr::var(params[j].clone());
            inner.push(Expr::ge(&tj, &Expr::int(0)));
            inner.push(Expr::le(&tj, &Expr::var(counters[j].clone())));
            others.push(params[j].clone());
        }
        inner.push(part.clone());
        let body = Expr::exists(others, &Expr::and(inner));
        let range = Expr::and2(&Expr::ge(&ti, &Expr::int(0)), &Expr::lt(&ti, &ki));
        conj.push(Expr::forall(
            vec![params[i].clone()],
            &Expr::implies(&range, &body),
        ));
    }
    (Expr::and(conj), parts)
}

// ----- artificial variables ------------------------------------------------

/// An artificial variable: the iteration count of a nested loop entered
/// at `node`.
#[derive(Clone, Debug)]
pub struct Artificial {
    pub node: usize,
    pub name: String,
    /// Bound iteration variable of the quantified path condition.
    pub bound: Var,
    /// Disjunction of the nested paths' conditions at iteration `bound`.
    pub body: Expr,
}

/// Path-condition parts and leaf states with nested counters replaced by
/// artificial variables.
#[derive(Clone, Debug)]
pub struct Barred {
    pub psi: Vec<Expr>,
    pub thetas: BTreeMap<usize, State>,
    pub arts: Vec<Artificial>,
}

impl Barred {
    fn art_at(&self, n: usize) -> Option<&Artificial> {
        self.arts.iter().find(|a| a.node == n)
    }
}

/// Replaces the counters of every nested loop entry by a fresh artificial
/// variable, outermost entries first.
pub fn introduce_artificials(an: &Analyzer, tree: &BackboneTree) -> Barred {
    let mut psi: Vec<Expr> = tree.nodes.iter().map(|n| n.psi.clone()).collect();
    let mut parts: BTreeMap<usize, Vec<Expr>> = BTreeMap::new();
    let mut thetas = BTreeMap::new();
    for n in tree.preorder() {
        if let Some(ln) = &tree.nodes[n].loop_node {
            parts.insert(n, ln.parts.clone());
        }
        if let Some(th) = &tree.nodes[n].theta {
            thetas.insert(n, th.clone());
        }
    }
    let mut arts = Vec::new();
    for g in tree.preorder() {
        let Some(ln) = &tree.nodes[g].loop_node else {
            continue;
        };
        if ln.counters.is_empty() {
            continue;
        }
        let name = an.fresh_artificial();
        let bound = an.fresh_param();
        let s_sym = Expr::sym(&name);
        let s = Expr::var(bound.clone());
        let tau_sum = Expr::sum(
            ln.params
                .iter()
                .map(|t| Expr::var(t.clone()))
                .collect::<Vec<_>>()
                .iter(),
        );
        let body = Expr::or(
            parts[&g]
                .iter()
                .map(|e| weaken(&e.tau_subst(&tau_sum, &s), &ln.params, true)),
        );
        let range = Expr::and2(&Expr::ge(&s, &Expr::int(0)), &Expr::lt(&s, &s_sym));
        psi[g] = Expr::forall(vec![bound.clone()], &Expr::implies(&range, &body));
        let k_sum = Expr::sum(
            ln.counters
                .iter()
                .map(|k| Expr::var(k.clone()))
                .collect::<Vec<_>>()
                .iter(),
        );
        let ks = ln.counters.clone();
        let sub = |e: &Expr| e.tau_subst(&k_sum, &s_sym).starify(&ks);
        for d in descendants(tree, g) {
            psi[d] = sub(&psi[d]);
            if let Some(ps) = parts.get_mut(&d) {
                *ps = ps.iter().map(sub).collect();
            }
            if let Some(th) = thetas.get_mut(&d) {
                *th = th.map_values(&mut |e| sub(e));
            }
        }
        arts.push(Artificial {
            node: g,
            name,
            bound,
            body,
        });
    }
    Barred { psi, thetas, arts }
}

fn descendants(tree: &BackboneTree, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = tree.children(n).collect();
    while let Some(m) = stack.pop() {
        out.push(m);
        stack.extend(tree.children(m));
    }
    out
}

/// Drops the atoms mentioning `vars`: they become `true` at positive
/// polarity and `false` at negative polarity, so the result is implied by
/// `e` when `positive` holds.
pub fn weaken(e: &Expr, vars: &[Var], positive: bool) -> Expr {
    if !vars.iter().any(|v| e.occurs(v)) {
        return e.clone();
    }
    match e.node() {
        Node::And(xs) => Expr::and(xs.iter().map(|x| weaken(x, vars, positive))),
        Node::Or(xs) => Expr::or(xs.iter().map(|x| weaken(x, vars, positive))),
        Node::Implies(a, b) => {
            Expr::implies(&weaken(a, vars, !positive), &weaken(b, vars, positive))
        }
        Node::Forall(vs, b) => Expr::forall(vs.clone(), &weaken(b, vars, positive)),
        Node::Exists(vs, b) => Expr::exists(vs.clone(), &weaken(b, vars, positive)),
        _ => Expr::bool(positive),
    }
}

// ----- iterated state --------------------------------------------------------

struct Iteration<'a> {
    an: &'a Analyzer,
    p: &'a Program,
    tree: &'a BackboneTree,
    bar: &'a Barred,
    counters: &'a [Var],
    thetas: Vec<State>,
    /// Per path, the conditions below the common prefix of all paths.
    /// `None` when such a condition involves a nested loop.
    guards: Vec<Option<Expr>>,
}

impl<'a> Iteration<'a> {
    fn new(
        an: &'a Analyzer,
        p: &'a Program,
        tree: &'a BackboneTree,
        bar: &'a Barred,
        leaves: &[usize],
        counters: &'a [Var],
    ) -> Iteration<'a> {
        let thetas: Vec<State> = leaves.iter().map(|l| bar.thetas[l].clone()).collect();
        let ancestries: Vec<Vec<usize>> = leaves.iter().map(|&l| tree.ancestry(l)).collect();
        let mut common = 0;
        while ancestries
            .iter()
            .all(|a| a.len() > common && a[common] == ancestries[0][common])
        {
            common += 1;
        }
        let guards = ancestries
            .iter()
            .map(|a| {
                let below = &a[common..];
                if below.iter().any(|&m| !tree.nodes[m].counters().is_empty()) {
                    return None;
                }
                Some(Expr::and(below.iter().map(|&m| bar.psi[m].clone())))
            })
            .collect();
        Iteration {
            an,
            p,
            tree,
            bar,
            counters,
            thetas,
            guards,
        }
    }

    fn scalar_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .p
            .vars
            .iter()
            .filter(|(_, t)| **t == Ty::Int)
            .map(|(k, _)| k.clone())
            .collect();
        out.extend(self.bar.arts.iter().map(|a| a.name.clone()));
        out
    }

    fn array_names(&self) -> Vec<(String, usize)> {
        self.p
            .vars
            .iter()
            .filter_map(|(k, t)| match t {
                Ty::Array(n) => Some((k.clone(), *n)),
                Ty::Int => None,
            })
            .collect()
    }

    /// Kleene iteration from the all-unknown state: each round recomputes
    /// every unknown value against the current state and stops when a
    /// round resolves nothing new.
    fn iterate(&self) -> State {
        let mut theta = State::default();
        for a in self.scalar_names() {
            theta.set_scalar(&a, Expr::star());
        }
        for (a, n) in self.array_names() {
            theta.set_array(&a, Lambda::star(n));
        }
        let mut failed = BTreeSet::new();
        loop {
            let mut changed = false;
            for a in self
                .p
                .vars
                .iter()
                .filter(|(_, t)| **t == Ty::Int)
                .map(|(k, _)| k.clone())
            {
                if !theta.scalar(&a).is_star() {
                    continue;
                }
                let mut t = theta.clone();
                t.set_scalar(&a, Expr::sym(&a));
                let v = iterate_scalar(&a, &self.thetas, &t, self.counters);
                if !v.is_star() {
                    theta.set_scalar(&a, v);
                    changed = true;
                }
            }
            for (a, n) in self.array_names() {
                if !theta.array(&a, n).is_star() {
                    continue;
                }
                let mut t = theta.clone();
                t.set_array(&a, Lambda::identity(&a, n));
                let v = self.iterate_array(&a, n, &t);
                if !v.is_star() {
                    theta.set_array(&a, v);
                    changed = true;
                }
            }
            for art in &self.bar.arts {
                if !theta.scalar(&art.name).is_star() {
                    continue;
                }
                let mut t = theta.clone();
                t.set_scalar(&art.name, Expr::sym(&art.name));
                let v = self.iterations_of_loop(art, &t, &mut failed);
                if !v.is_star() {
                    theta.set_scalar(&art.name, v);
                    changed = true;
                }
            }
            if !changed {
                return theta;
            }
        }
    }
}

/// Iterated value of scalar `a`. `t` is the current iterated state with
/// `a` itself left symbolic.
pub fn iterate_scalar(a: &str, thetas: &[State], t: &State, counters: &[Var]) -> Expr {
    enum Acc {
        Unchanged,
        Progression(Expr),
        Writers(Vec<(usize, Expr)>),
    }
    let base = Expr::sym(a);
    let av = Var::sym(a);
    let mut acc = Acc::Unchanged;
    for (i, th) in thetas.iter().enumerate() {
        let e = th.scalar(a).apply_state(t);
        if e.is_star() {
            return Expr::star();
        }
        let diff = e.sub(&base);
        let k = Expr::var(counters[i].clone());
        if diff.as_int() == Some(0) {
            continue;
        }
        if !diff.occurs(&av) && !diff.has_counters() && !diff.has_params() {
            acc = match acc {
                Acc::Unchanged => Acc::Progression(diff.mul(&k)),
                Acc::Progression(d) => Acc::Progression(d.add(&diff.mul(&k))),
                Acc::Writers(_) => return Expr::star(),
            };
            continue;
        }
        let own = e.free_counters().iter().all(|c| *c == counters[i]);
        if !e.occurs(&av) && own && !e.has_params() {
            acc = match acc {
                Acc::Unchanged => Acc::Writers(vec![(i, e)]),
                Acc::Writers(mut ws) => {
                    ws.push((i, e));
                    Acc::Writers(ws)
                }
                Acc::Progression(_) => return Expr::star(),
            };
            continue;
        }
        return Expr::star();
    }
    match acc {
        Acc::Unchanged => base,
        Acc::Progression(d) => base.add(&d),
        Acc::Writers(ws) if ws.len() == 1 => {
            let (i, rho) = &ws[0];
            let k = Expr::var(counters[*i].clone());
            let last = rho.subst1(&counters[*i], &k.add_int(-1));
            Expr::ite(&Expr::gt(&k, &Expr::int(0)), &last, &base)
        }
        Acc::Writers(ws) => {
            let rho = &ws[0].1;
            if ws.iter().all(|(_, r)| r == rho && !r.has_counters()) {
                let any = Expr::or(
                    ws.iter()
                        .map(|(i, _)| Expr::gt(&Expr::var(counters[*i].clone()), &Expr::int(0))),
                );
                Expr::ite(&any, rho, &base)
            } else {
                Expr::star()
            }
        }
    }
}

// ----- arrays ------------------------------------------------------------------

/// A write made on one path: the cell condition over the placeholders and
/// the iteration variable, and the written value.
#[derive(Clone, Debug)]
struct Family {
    path: usize,
    cond: Expr,
    /// Index terms when the condition is a point equality.
    idx: Option<Vec<Expr>>,
    val: Expr,
    guard: Expr,
}

/// Splits a nested `ite` chain ending in `base` into its (condition, value)
/// links, outermost first.
fn write_chain(body: &Expr, base: &Expr) -> Option<Vec<(Expr, Expr)>> {
    let mut out = Vec::new();
    let mut cur = body.clone();
    loop {
        if cur == *base {
            return Some(out);
        }
        let Node::Ite(c, t, e) = cur.node() else {
            return None;
        };
        out.push((c.clone(), t.clone()));
        cur = e.clone();
    }
}

/// Index terms of a point condition `x0 = i0 /\ .. /\ x(n-1) = i(n-1)`.
fn point_index(c: &Expr, arity: usize) -> Option<Vec<Expr>> {
    let atoms: Vec<Expr> = match c.node() {
        Node::And(xs) => xs.clone(),
        Node::Cmp(..) => vec![c.clone()],
        _ => return None,
    };
    let mut idx: Vec<Option<Expr>> = vec![None; arity];
    for a in atoms {
        let Node::Cmp(crate::symexpr::CmpOp::Eq, l, r) = a.node() else {
            return None;
        };
        let d = l.sub(r);
        let (terms, _) = d.linear();
        let mut found = None;
        for (t, k) in &terms {
            if let Node::Var(Var::Placeholder(n)) = t.node() {
                if found.is_some() {
                    return None;
                }
                found = Some((*n as usize, *k));
            }
        }
        let (n, k) = found?;
        if k.abs() != 1 || n >= arity || idx[n].is_some() {
            return None;
        }
        let rest = d.sub(&Expr::placeholder(n as u32).scale(k));
        if rest.has_placeholders() {
            return None;
        }
        idx[n] = Some(if k == 1 { rest.neg() } else { rest });
    }
    idx.into_iter().collect()
}

fn reads(e: &Expr, array: &str) -> bool {
    e.arrays().contains_key(array)
}

impl Iteration<'_> {
    /// Iterated value of array `a` under the current state `t` (with `a`
    /// itself reset to its initial contents).
    fn iterate_array(&self, a: &str, arity: usize, t: &State) -> Lambda {
        let star = Lambda::star(arity);
        let n = self.counters.len();
        let s = self.an.fresh_param();
        let s_e = Expr::var(s.clone());
        let mut to_s = BTreeMap::new();
        for (j, k) in self.counters.iter().enumerate() {
            to_s.insert(k.clone(), if j == 0 { s_e.clone() } else { Expr::int(0) });
        }
        let by_sum = |e: &Expr| -> Option<Expr> {
            if n >= 2 && !e.depends_only_on_sum(self.counters) {
                return None;
            }
            Some(e.subst(&to_s))
        };
        let base = Expr::app(a, Lambda::placeholders(arity));
        let mut fams: Vec<Family> = Vec::new();
        for (i, th) in self.thetas.iter().enumerate() {
            let body = th.array(a, arity).body.apply_state(t);
            if body.is_star() {
                return star;
            }
            let Some(chain) = write_chain(&body, &base) else {
                return star;
            };
            if chain.is_empty() {
                continue;
            }
            let guard = if n == 1 {
                Expr::tt()
            } else {
                let Some(g) = &self.guards[i] else {
                    return star;
                };
                let g = g.apply_state(t);
                if g.has_star_pred() || reads(&g, a) {
                    return star;
                }
                match by_sum(&g) {
                    Some(g) => g,
                    None => return star,
                }
            };
            for (c, v) in chain {
                let (Some(c), Some(v)) = (by_sum(&c), by_sum(&v)) else {
                    return star;
                };
                if c.has_star_pred() || reads(&c, a) {
                    return star;
                }
                let idx = point_index(&c, arity);
                fams.push(Family {
                    path: i,
                    cond: c,
                    idx,
                    val: v,
                    guard: guard.clone(),
                });
            }
        }
        if fams.is_empty() {
            return Lambda::identity(a, arity);
        }
        let total = Expr::sum(
            self.counters
                .iter()
                .map(|k| Expr::var(k.clone()))
                .collect::<Vec<_>>()
                .iter(),
        );
        let xs = Lambda::placeholders(arity);
        let mut body = base.clone();
        for f in (0..fams.len()).rev() {
            let Some(value) = self.family_value(a, &fams, f, &s, &xs) else {
                return star;
            };
            let h = self.written_by(&fams, f, &s, &total);
            body = Expr::ite(&h, &value, &body);
            if body.is_star() {
                return star;
            }
        }
        Lambda { arity, body }
    }

    /// Condition under which family `f` made the last write to cell `xs`.
    fn written_by(&self, fams: &[Family], f: usize, s: &Var, total: &Expr) -> Expr {
        if self.an.opts.simplify {
            if let Some(h) = simplified_written_by(fams, f, s, total) {
                return h;
            }
        }
        let fam = &fams[f];
        let s_e = Expr::var(s.clone());
        let later = self.an.fresh_param();
        let later_e = Expr::var(later.clone());
        let self_fixed = fam
            .idx
            .as_ref()
            .is_some_and(|ix| ix.iter().all(|e| !e.occurs(s)));
        let mut excl = Vec::new();
        for (g, other) in fams.iter().enumerate() {
            if g == f && self_fixed {
                continue;
            }
            let cond = other.cond.subst1(s, &later_e);
            let guard = other.guard.subst1(s, &later_e);
            excl.push(Expr::implies(&guard, &cond.not()));
        }
        let range = Expr::and2(&Expr::lt(&s_e, &later_e), &Expr::lt(&later_e, total));
        let none_later = Expr::forall(vec![later], &Expr::implies(&range, &Expr::and(excl)));
        let body = Expr::and([
            Expr::ge(&s_e, &Expr::int(0)),
            Expr::lt(&s_e, total),
            fam.guard.clone(),
            fam.cond.clone(),
            none_later,
        ]);
        Expr::exists(vec![s.clone()], &body)
    }

    /// Value family `f` leaves in cell `xs`, expressed without the
    /// iteration variable.
    fn family_value(
        &self,
        a: &str,
        fams: &[Family],
        f: usize,
        s: &Var,
        xs: &[Expr],
    ) -> Option<Expr> {
        let fam = &fams[f];
        if !reads(&fam.val, a) {
            if !fam.val.occurs(s) {
                return Some(fam.val.clone());
            }
            return invert(&fam.val, fam.idx.as_ref()?, s, xs);
        }
        // The value reads the array being iterated.
        if fams.len() != 1 || reads(&fam.guard, a) {
            return None;
        }
        let idx = fam.idx.as_ref()?;
        if idx.iter().any(|e| reads(e, a)) {
            return None;
        }
        let (terms, _) = fam.val.linear();
        let own: Vec<&(Expr, i64)> = terms
            .iter()
            .filter(|(t, _)| matches!(t.node(), Node::App(name, _) if &**name == a))
            .collect();
        if own.len() != 1 || own[0].1 != 1 {
            return None;
        }
        let read = &own[0].0;
        let Node::App(_, z) = read.node() else {
            return None;
        };
        let inc = fam.val.sub(read);
        if reads(&inc, a) || z.iter().any(|e| reads(e, a)) {
            return None;
        }
        let shifts: Option<Vec<i64>> = idx
            .iter()
            .zip(z)
            .map(|(i, zk)| i.sub(zk).as_int())
            .collect();
        let shifts = shifts?;
        let k = Expr::var(self.counters[fam.path].clone());
        let cell = Expr::app(a, xs.to_vec());
        if shifts.iter().all(|&q| q == 0) {
            if idx.iter().all(|e| !e.occurs(s)) {
                if inc.occurs(s) {
                    return None;
                }
                return Some(cell.add(&inc.mul(&k)));
            }
            let inc = if inc.occurs(s) {
                invert(&inc, idx, s, xs)?
            } else {
                inc
            };
            return Some(cell.add(&inc));
        }
        if xs.len() != 1 || self.counters.len() != 1 || inc.occurs(s) {
            return None;
        }
        let step = idx[0].coefficient(&Expr::var(s.clone()));
        let start = idx[0].sub(&Expr::var(s.clone()).scale(step));
        if step == 0 || start.occurs(s) {
            return None;
        }
        let q = shifts[0];
        let x = &xs[0];
        if q % step == 0 && q / step > 0 {
            let d = q / step;
            let m = x
                .sub(&start)
                .div(&Expr::int(step))
                .div(&Expr::int(d))
                .add_int(1);
            let from = Expr::app(a, vec![x.sub(&m.scale(q))]);
            return Some(from.add(&inc.mul(&m)));
        }
        Some(Expr::app(a, vec![x.sub(&Expr::int(q))]).add(&inc))
    }
}

/// Expresses `val` through the cell index by solving one index equation
/// for the iteration variable.
fn invert(val: &Expr, idx: &[Expr], s: &Var, xs: &[Expr]) -> Option<Expr> {
    let s_e = Expr::var(s.clone());
    for (k, ik) in idx.iter().enumerate() {
        let c = ik.coefficient(&s_e);
        if c == 0 {
            continue;
        }
        let v2 = val.tau_subst(ik, &xs[k]);
        if !v2.occurs(s) {
            return Some(v2);
        }
        let rest = ik.sub(&s_e.scale(c));
        if rest.occurs(s) {
            continue;
        }
        return Some(val.subst1(s, &xs[k].sub(&rest).div(&Expr::int(c))));
    }
    None
}

/// Closed forms of the last-write condition when every family writes a
/// point moving with the same stride along one dimension.
fn simplified_written_by(fams: &[Family], f: usize, s: &Var, total: &Expr) -> Option<Expr> {
    let s_e = Expr::var(s.clone());
    let idx_f = fams[f].idx.as_ref()?;
    let arity = idx_f.len();
    let pivot = (0..arity).find(|&k| idx_f[k].coefficient(&s_e) != 0)?;
    let c = idx_f[pivot].coefficient(&s_e);
    let b_f = idx_f[pivot].sub(&s_e.scale(c));
    if b_f.occurs(s) {
        return None;
    }
    let mut deltas = Vec::new();
    for g in fams {
        let idx_g = g.idx.as_ref()?;
        if idx_g[pivot].coefficient(&s_e) != c {
            return None;
        }
        let diff = b_f.sub(&idx_g[pivot].sub(&s_e.scale(c))).as_int()?;
        if diff % c == 0 && diff / c > 0 {
            deltas.push(diff / c);
        }
    }
    let fam = &fams[f];
    let lower = Expr::ge(&s_e, &Expr::int(0));
    let upper = Expr::lt(&s_e, total);
    let Some(&dmin) = deltas.iter().min() else {
        return Some(Expr::exists(
            vec![s.clone()],
            &Expr::and([fam.cond.clone(), lower, upper, fam.guard.clone()]),
        ));
    };
    if arity != 1 || fams.iter().any(|g| !g.guard.is_true()) {
        return None;
    }
    if dmin == 1 {
        let last = total.add_int(-1);
        return Some(Expr::and2(
            &Expr::gt(total, &Expr::int(0)),
            &fam.cond.subst1(s, &last),
        ));
    }
    let window = Expr::le(&total.add_int(-dmin), &s_e);
    Some(Expr::exists(
        vec![s.clone()],
        &Expr::and([fam.cond.clone(), lower, window, upper]),
    ))
}

// ----- iteration counts of nested loops -----------------------------------------

impl Iteration<'_> {
    /// Condition relating a nested loop's iteration count to the state: the
    /// conjunction of the path-condition parts from its entry to its exits.
    fn exit_condition(&self, art: &Artificial) -> Expr {
        let exits = &self.tree.nodes[art.node]
            .loop_node
            .as_ref()
            .expect("loop entry")
            .lp
            .exits;
        let mut disj = Vec::new();
        let mut stack = vec![(art.node, vec![self.omega(art.node)])];
        while let Some((n, acc)) = stack.pop() {
            if n != art.node && exits.contains(&self.tree.nodes[n].vertex) {
                disj.push(Expr::and(acc));
                continue;
            }
            for c in self.tree.children(n) {
                let mut next = acc.clone();
                next.push(self.omega(c));
                stack.push((c, next));
            }
        }
        Expr::or(disj)
    }

    fn omega(&self, n: usize) -> Expr {
        match self.bar.art_at(n) {
            Some(a) => {
                let last = Expr::sym(&a.name).add_int(-1);
                Expr::implies(
                    &Expr::ge(&last, &Expr::int(0)),
                    &a.body.subst1(&a.bound, &last),
                )
            }
            None => self.bar.psi[n].clone(),
        }
    }

    /// Iteration count of the nested loop of `art` as a closed form over
    /// the scalars and counters, or `star`.
    fn iterations_of_loop(
        &self,
        art: &Artificial,
        t: &State,
        failed: &mut BTreeSet<String>,
    ) -> Expr {
        let gamma = self.exit_condition(art).apply_state(t);
        let gamma = gamma.rewrite(&mut |e, _| match e.node() {
            Node::StarPred(_) => Some(Expr::tt()),
            _ => None,
        });
        let key = gamma.to_string();
        if failed.contains(&key) {
            return Expr::star();
        }
        match synthesize_count(self.an, &art.name, &gamma, self.counters) {
            Some(e) => {
                self.an
                    .counts
                    .borrow_mut()
                    .push((art.name.clone(), e.clone()));
                e
            }
            None => {
                failed.insert(key);
                Expr::star()
            }
        }
    }
}

/// Finds `s = max(0, c + sum_j c_j * a_j)` entailed by `gamma`, where `s`
/// is the symbol `name`, the `a_j` are the other scalars of `gamma` and
/// every coefficient is affine in the counters.
pub fn synthesize_count(an: &Analyzer, name: &str, gamma: &Expr, counters: &[Var]) -> Option<Expr> {
    // Array reads become independent unknowns.
    let mut reads: BTreeMap<Expr, Var> = BTreeMap::new();
    let mut next = 0;
    let gamma = gamma.rewrite(&mut |e, bound| match e.node() {
        Node::App(..) if bound.is_empty() || !e.free_vars().iter().any(|v| bound.contains(v)) => {
            let v = reads
                .entry(e.clone())
                .or_insert_with(|| {
                    next += 1;
                    Var::sym(&format!("rd!{next}"))
                })
                .clone();
            Some(Expr::var(v))
        }
        _ => None,
    });
    if gamma.has_apps() {
        return None;
    }
    let s = Expr::sym(name);
    let scalars: Vec<String> = gamma
        .symbols()
        .iter()
        .filter(|a| !a.starts_with('$') && !a.contains('!'))
        .map(|a| a.to_string())
        .collect();
    let ks: Vec<Var> = counters
        .iter()
        .filter(|k| gamma.occurs(k))
        .cloned()
        .collect();
    let mut universals: Vec<Var> = gamma
        .symbols()
        .iter()
        .filter(|a| &***a != name)
        .map(|a| Var::sym(a))
        .collect();
    universals.push(Var::sym(name));
    universals.extend(ks.iter().cloned());
    let mut hyps: Vec<Expr> = ks
        .iter()
        .map(|k| Expr::ge(&Expr::var(k.clone()), &Expr::int(0)))
        .collect();
    hyps.push(Expr::ge(&s, &Expr::int(0)));
    hyps.push(gamma.clone());
    let hyp = Expr::and(hyps);
    let synth = an.solver.with_timeout(an.opts.synth_timeout);
    for full in [false, true] {
        if full && ks.is_empty() {
            break;
        }
        let coef = |j: usize| -> Expr {
            let mut c = Expr::sym(&format!("w!{j}"));
            if full || j == scalars.len() {
                for (l, k) in ks.iter().enumerate() {
                    c = c.add(&Expr::sym(&format!("m!{j}!{l}")).mul(&Expr::var(k.clone())));
                }
            }
            c
        };
        let mut rhs = coef(scalars.len());
        for (j, a) in scalars.iter().enumerate() {
            rhs = rhs.add(&coef(j).mul(&Expr::sym(a)));
        }
        let goal = Expr::eq(&s, &Expr::int(0).maximum(&rhs));
        let query = Expr::forall(universals.clone(), &Expr::implies(&hyp, &goal));
        let unknowns: Vec<Expr> = query
            .symbols()
            .iter()
            .filter(|a| a.starts_with("w!") || a.starts_with("m!"))
            .map(|a| Expr::sym(a))
            .collect();
        let mut result = None;
        for bound in [None, Some(1), Some(4), Some(16)] {
            let mut assertions = vec![query.clone()];
            if let Some(b) = bound {
                for u in &unknowns {
                    assertions.push(Expr::le(&Expr::int(-b), u));
                    assertions.push(Expr::le(u, &Expr::int(b)));
                }
            }
            an.queries.set(an.queries.get() + 1);
            match synth.check(&assertions) {
                Ok(SatResult::Sat(Some(m))) => {
                    result = Some(m);
                    break;
                }
                Ok(SatResult::Unsat) => break,
                _ => {}
            }
        }
        let Some(m) = result else { continue };
        let val = |n: &str| Expr::int(m.int(n).unwrap_or(0));
        let mut map = BTreeMap::new();
        for u in &unknowns {
            let Node::Var(v) = u.node() else { continue };
            let Var::Sym(n) = v else { continue };
            map.insert(v.clone(), val(n));
        }
        let closed = Expr::int(0).maximum(&rhs.subst(&map));
        return Some(closed);
    }
    None
}
