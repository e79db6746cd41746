//! Symbolic expressions over basic symbols, path counters and parameters.
//!
//! Every [`Expr`] is built through smart constructors that keep integer terms
//! in a linear normal form and fold constants. The unknown value `star` is
//! absorbing for terms: any term with a `star` operand is `star` itself. An
//! atomic predicate over `star` becomes an opaque proposition
//! ([`Node::StarPred`]) that keeps the raw predicate only as its identity.
//!
//! Negation is pushed to the atoms eagerly, so formulas are always in
//! negation normal form. Together with the rule that an `ite` whose condition
//! mentions an opaque proposition collapses to `star`, this keeps every opaque
//! proposition in a positive position, which is what makes sharing one
//! proposition symbol between structurally identical predicates harmless.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// A variable that may occur in a symbolic expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Basic symbol: the initial value of a program variable, or an
    /// artificial iteration-count symbol.
    Sym(Arc<str>),
    /// Path counter.
    Counter(u32),
    /// Parameter standing for a counter value inside a quantifier.
    Param(u32),
    /// Lambda placeholder used for array indices.
    Placeholder(u32),
}

impl Var {
    /// Basic symbol with the given name.
    pub fn sym(name: &str) -> Var {
        Var::Sym(Arc::from(name))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Sym(name) => write!(f, "{name}"),
            Var::Counter(n) => write!(f, "k{n}"),
            Var::Param(n) => write!(f, "t{n}"),
            Var::Placeholder(n) => write!(f, "x{n}"),
        }
    }
}

/// Integer comparison operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    /// The operator of the complementary predicate.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// Evaluates the operator on two integers.
    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    /// Surface syntax of the operator.
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Expression node. Build nodes through the constructors on [`Expr`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Int(i64),
    Bool(bool),
    Star,
    Var(Var),
    /// Application of an array's initial contents to index terms.
    App(Arc<str>, Vec<Expr>),
    /// `sum(c * atom) + constant`, atoms sorted and coefficients nonzero.
    Lin(Vec<(Expr, i64)>, i64),
    Mul(Expr, Expr),
    /// Euclidean division.
    Div(Expr, Expr),
    /// Euclidean remainder.
    Mod(Expr, Expr),
    Max(Expr, Expr),
    Ite(Expr, Expr, Expr),
    Cmp(CmpOp, Expr, Expr),
    /// Opaque proposition standing for a predicate over `star`.
    StarPred(Expr),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Implies(Expr, Expr),
    Forall(Vec<Var>, Expr),
    Exists(Vec<Var>, Expr),
}

const F_STAR_PRED: u8 = 1;
const F_PARAM: u8 = 2;
const F_COUNTER: u8 = 4;
const F_PLACEHOLDER: u8 = 8;
const F_QUANT: u8 = 16;
const F_APP: u8 = 32;
const F_SYM: u8 = 64;

#[derive(Debug)]
struct Inner {
    node: Node,
    flags: u8,
}

/// Shared, immutable symbolic expression.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.node == other.0.node
    }
}
impl Eq for Expr {}
impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Expr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return std::cmp::Ordering::Equal;
        }
        self.0.node.cmp(&other.0.node)
    }
}
impl std::hash::Hash for Expr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.node.hash(state)
    }
}
impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn flags_of(node: &Node) -> u8 {
    let children = |es: &[&Expr]| es.iter().fold(0u8, |acc, e| acc | e.0.flags);
    match node {
        Node::Int(_) | Node::Bool(_) | Node::Star => 0,
        Node::Var(Var::Sym(_)) => F_SYM,
        Node::Var(Var::Counter(_)) => F_COUNTER,
        Node::Var(Var::Param(_)) => F_PARAM,
        Node::Var(Var::Placeholder(_)) => F_PLACEHOLDER,
        Node::App(_, args) => F_APP | args.iter().fold(0, |acc, e| acc | e.0.flags),
        Node::Lin(terms, _) => terms.iter().fold(0, |acc, (e, _)| acc | e.0.flags),
        Node::Mul(a, b)
        | Node::Div(a, b)
        | Node::Mod(a, b)
        | Node::Max(a, b)
        | Node::Cmp(_, a, b)
        | Node::Implies(a, b) => children(&[a, b]),
        Node::Ite(c, t, e) => children(&[c, t, e]),
        Node::StarPred(_) => F_STAR_PRED,
        Node::And(xs) | Node::Or(xs) => xs.iter().fold(0, |acc, e| acc | e.0.flags),
        Node::Forall(vs, body) | Node::Exists(vs, body) => {
            let mut f = body.0.flags | F_QUANT;
            for v in vs {
                f |= match v {
                    Var::Sym(_) => F_SYM,
                    Var::Counter(_) => F_COUNTER,
                    Var::Param(_) => F_PARAM,
                    Var::Placeholder(_) => F_PLACEHOLDER,
                };
            }
            f
        }
    }
}

fn mk(node: Node) -> Expr {
    let flags = flags_of(&node);
    Expr(Arc::new(Inner { node, flags }))
}

type LinMap = BTreeMap<Expr, i64>;

fn lin_parts(e: &Expr) -> (LinMap, i64) {
    match e.node() {
        Node::Int(c) => (BTreeMap::new(), *c),
        Node::Lin(terms, c) => (terms.iter().cloned().collect(), *c),
        _ => (BTreeMap::from([(e.clone(), 1)]), 0),
    }
}

fn from_lin(map: LinMap, constant: i64) -> Expr {
    let terms: Vec<(Expr, i64)> = map.into_iter().filter(|(_, c)| *c != 0).collect();
    if terms.is_empty() {
        return Expr::int(constant);
    }
    if terms.len() == 1 && terms[0].1 == 1 && constant == 0 {
        return terms[0].0.clone();
    }
    mk(Node::Lin(terms, constant))
}

impl Expr {
    /// The node of this expression.
    pub fn node(&self) -> &Node {
        &self.0.node
    }

    // ----- leaves -------------------------------------------------------

    /// Integer literal.
    pub fn int(n: i64) -> Expr {
        mk(Node::Int(n))
    }

    /// Boolean literal.
    pub fn bool(b: bool) -> Expr {
        mk(Node::Bool(b))
    }

    /// The literal `true`.
    pub fn tt() -> Expr {
        Expr::bool(true)
    }

    /// The literal `false`.
    pub fn ff() -> Expr {
        Expr::bool(false)
    }

    /// The unknown value.
    pub fn star() -> Expr {
        mk(Node::Star)
    }

    /// Variable occurrence.
    pub fn var(v: Var) -> Expr {
        mk(Node::Var(v))
    }

    /// Basic symbol occurrence.
    pub fn sym(name: &str) -> Expr {
        Expr::var(Var::sym(name))
    }

    /// Path counter occurrence.
    pub fn counter(n: u32) -> Expr {
        Expr::var(Var::Counter(n))
    }

    /// Parameter occurrence.
    pub fn param(n: u32) -> Expr {
        Expr::var(Var::Param(n))
    }

    /// Placeholder occurrence.
    pub fn placeholder(n: u32) -> Expr {
        Expr::var(Var::Placeholder(n))
    }

    /// Application of an array's initial contents.
    pub fn app(name: &str, args: Vec<Expr>) -> Expr {
        Expr::app_arc(Arc::from(name), args)
    }

    fn app_arc(name: Arc<str>, args: Vec<Expr>) -> Expr {
        if args.iter().any(Expr::is_star) {
            return Expr::star();
        }
        mk(Node::App(name, args))
    }

    // ----- integer terms ------------------------------------------------

    /// `a + b`.
    pub fn add(&self, other: &Expr) -> Expr {
        if self.is_star() || other.is_star() {
            return Expr::star();
        }
        let (mut m, c1) = lin_parts(self);
        let (m2, c2) = lin_parts(other);
        for (k, v) in m2 {
            *m.entry(k).or_insert(0) += v;
        }
        from_lin(m, c1 + c2)
    }

    /// `a - b`.
    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.scale(-1))
    }

    /// `-a`.
    pub fn neg(&self) -> Expr {
        self.scale(-1)
    }

    /// `a + n`.
    pub fn add_int(&self, n: i64) -> Expr {
        self.add(&Expr::int(n))
    }

    /// `k * a` for a literal `k`.
    pub fn scale(&self, k: i64) -> Expr {
        if self.is_star() {
            return Expr::star();
        }
        let (m, c) = lin_parts(self);
        from_lin(m.into_iter().map(|(e, v)| (e, v * k)).collect(), c * k)
    }

    /// Sum of a sequence of terms.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a Expr>) -> Expr {
        items.into_iter().fold(Expr::int(0), |acc, e| acc.add(e))
    }

    /// `a * b`.
    pub fn mul(&self, other: &Expr) -> Expr {
        if self.is_star() || other.is_star() {
            return Expr::star();
        }
        if let Some(k) = self.as_int() {
            return other.scale(k);
        }
        if let Some(k) = other.as_int() {
            return self.scale(k);
        }
        let (a, b) = if self <= other {
            (self, other)
        } else {
            (other, self)
        };
        mk(Node::Mul(a.clone(), b.clone()))
    }

    /// Euclidean division `a div b`.
    pub fn div(&self, other: &Expr) -> Expr {
        if self.is_star() || other.is_star() {
            return Expr::star();
        }
        match (self.as_int(), other.as_int()) {
            (Some(a), Some(b)) if b != 0 => Expr::int(euclid_div(a, b)),
            (_, Some(1)) => self.clone(),
            _ => mk(Node::Div(self.clone(), other.clone())),
        }
    }

    /// Euclidean remainder `a mod b`.
    pub fn modulo(&self, other: &Expr) -> Expr {
        if self.is_star() || other.is_star() {
            return Expr::star();
        }
        match (self.as_int(), other.as_int()) {
            (Some(a), Some(b)) if b != 0 => Expr::int(euclid_mod(a, b)),
            (_, Some(1)) | (_, Some(-1)) => Expr::int(0),
            _ => mk(Node::Mod(self.clone(), other.clone())),
        }
    }

    /// `max(a, b)`.
    pub fn maximum(&self, other: &Expr) -> Expr {
        if self.is_star() || other.is_star() {
            return Expr::star();
        }
        if let (Some(a), Some(b)) = (self.as_int(), other.as_int()) {
            return Expr::int(a.max(b));
        }
        if self == other {
            return self.clone();
        }
        mk(Node::Max(self.clone(), other.clone()))
    }

    /// `ite(c, t, e)` for terms or formulas.
    pub fn ite(c: &Expr, t: &Expr, e: &Expr) -> Expr {
        if let Some(b) = c.as_bool() {
            return if b { t.clone() } else { e.clone() };
        }
        if t == e {
            return t.clone();
        }
        if t.is_star() || e.is_star() || c.has_star_pred() {
            return Expr::star();
        }
        mk(Node::Ite(c.clone(), t.clone(), e.clone()))
    }

    // ----- predicates ---------------------------------------------------

    /// Atomic comparison `a op b`.
    pub fn cmp(op: CmpOp, a: &Expr, b: &Expr) -> Expr {
        if a.is_star() || b.is_star() {
            return mk(Node::StarPred(mk(Node::Cmp(op, a.clone(), b.clone()))));
        }
        if let Some(d) = a.sub(b).as_int() {
            return Expr::bool(op.eval(d, 0));
        }
        mk(Node::Cmp(op, a.clone(), b.clone()))
    }

    /// `a == b`.
    pub fn eq(a: &Expr, b: &Expr) -> Expr {
        Expr::cmp(CmpOp::Eq, a, b)
    }
    /// `a != b`.
    pub fn ne(a: &Expr, b: &Expr) -> Expr {
        Expr::cmp(CmpOp::Ne, a, b)
    }
    /// `a < b`.
    pub fn lt(a: &Expr, b: &Expr) -> Expr {
        Expr::cmp(CmpOp::Lt, a, b)
    }
    /// `a <= b`.
    pub fn le(a: &Expr, b: &Expr) -> Expr {
        Expr::cmp(CmpOp::Le, a, b)
    }
    /// `a > b`.
    pub fn gt(a: &Expr, b: &Expr) -> Expr {
        Expr::cmp(CmpOp::Gt, a, b)
    }
    /// `a >= b`.
    pub fn ge(a: &Expr, b: &Expr) -> Expr {
        Expr::cmp(CmpOp::Ge, a, b)
    }

    /// Conjunction with flattening and constant folding.
    pub fn and(items: impl IntoIterator<Item = Expr>) -> Expr {
        let mut out: Vec<Expr> = Vec::new();
        let mut seen: BTreeSet<Expr> = BTreeSet::new();
        for item in items {
            let parts = match item.node() {
                Node::And(xs) => xs.clone(),
                _ => vec![item],
            };
            for p in parts {
                match p.as_bool() {
                    Some(true) => {}
                    Some(false) => return Expr::ff(),
                    None => {
                        if seen.insert(p.clone()) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        match out.len() {
            0 => Expr::tt(),
            1 => out.pop().unwrap(),
            _ => mk(Node::And(out)),
        }
    }

    /// Disjunction with flattening and constant folding.
    pub fn or(items: impl IntoIterator<Item = Expr>) -> Expr {
        let mut out: Vec<Expr> = Vec::new();
        let mut seen: BTreeSet<Expr> = BTreeSet::new();
        for item in items {
            let parts = match item.node() {
                Node::Or(xs) => xs.clone(),
                _ => vec![item],
            };
            for p in parts {
                match p.as_bool() {
                    Some(false) => {}
                    Some(true) => return Expr::tt(),
                    None => {
                        if seen.insert(p.clone()) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        match out.len() {
            0 => Expr::ff(),
            1 => out.pop().unwrap(),
            _ => mk(Node::Or(out)),
        }
    }

    /// `a && b`.
    pub fn and2(a: &Expr, b: &Expr) -> Expr {
        Expr::and([a.clone(), b.clone()])
    }

    /// Negation, pushed down to the atoms.
    pub fn not(&self) -> Expr {
        match self.node() {
            Node::Bool(b) => Expr::bool(!b),
            Node::Cmp(op, a, b) => mk(Node::Cmp(op.negate(), a.clone(), b.clone())),
            Node::StarPred(p) => match p.node() {
                Node::Cmp(op, a, b) => mk(Node::StarPred(mk(Node::Cmp(
                    op.negate(),
                    a.clone(),
                    b.clone(),
                )))),
                _ => mk(Node::StarPred(p.clone())),
            },
            Node::And(xs) => Expr::or(xs.iter().map(Expr::not)),
            Node::Or(xs) => Expr::and(xs.iter().map(Expr::not)),
            Node::Implies(a, b) => Expr::and([a.clone(), b.not()]),
            Node::Forall(vs, body) => Expr::exists(vs.clone(), &body.not()),
            Node::Exists(vs, body) => Expr::forall(vs.clone(), &body.not()),
            Node::Ite(c, t, e) => Expr::ite(c, &t.not(), &e.not()),
            _ => panic!("negation of a non-formula: {self}"),
        }
    }

    /// Implication. An antecedent that mentions an opaque proposition is
    /// expanded into a disjunction so the proposition stays positive.
    pub fn implies(a: &Expr, b: &Expr) -> Expr {
        match (a.as_bool(), b.as_bool()) {
            (Some(true), _) => return b.clone(),
            (Some(false), _) | (_, Some(true)) => return Expr::tt(),
            (_, Some(false)) => return a.not(),
            _ => {}
        }
        if a.has_star_pred() {
            return Expr::or([a.not(), b.clone()]);
        }
        mk(Node::Implies(a.clone(), b.clone()))
    }

    /// Universal quantification; unused binders are dropped.
    pub fn forall(vars: Vec<Var>, body: &Expr) -> Expr {
        Expr::quant(true, vars, body)
    }

    /// Existential quantification; unused binders are dropped.
    pub fn exists(vars: Vec<Var>, body: &Expr) -> Expr {
        Expr::quant(false, vars, body)
    }

    fn quant(universal: bool, vars: Vec<Var>, body: &Expr) -> Expr {
        if body.as_bool().is_some() {
            return body.clone();
        }
        let free = body.free_vars();
        let mut vs: Vec<Var> = Vec::new();
        for v in vars {
            if free.contains(&v) && !vs.contains(&v) {
                vs.push(v);
            }
        }
        if vs.is_empty() {
            return body.clone();
        }
        if universal {
            mk(Node::Forall(vs, body.clone()))
        } else {
            mk(Node::Exists(vs, body.clone()))
        }
    }

    // ----- queries ------------------------------------------------------

    /// Whether this is the unknown value.
    pub fn is_star(&self) -> bool {
        matches!(self.node(), Node::Star)
    }

    /// Whether this is the literal `true`.
    pub fn is_true(&self) -> bool {
        matches!(self.node(), Node::Bool(true))
    }

    /// Whether this is the literal `false`.
    pub fn is_false(&self) -> bool {
        matches!(self.node(), Node::Bool(false))
    }

    /// The integer value of a literal.
    pub fn as_int(&self) -> Option<i64> {
        match self.node() {
            Node::Int(n) => Some(*n),
            _ => None,
        }
    }

    /// The boolean value of a literal.
    pub fn as_bool(&self) -> Option<bool> {
        match self.node() {
            Node::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// The variable, if this is a variable occurrence.
    pub fn as_var(&self) -> Option<&Var> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Whether the expression has boolean sort.
    pub fn is_formula(&self) -> bool {
        match self.node() {
            Node::Bool(_)
            | Node::Cmp(..)
            | Node::StarPred(_)
            | Node::And(_)
            | Node::Or(_)
            | Node::Implies(..)
            | Node::Forall(..)
            | Node::Exists(..) => true,
            Node::Ite(_, t, _) => t.is_formula(),
            _ => false,
        }
    }

    /// Whether an opaque proposition occurs.
    pub fn has_star_pred(&self) -> bool {
        self.0.flags & F_STAR_PRED != 0
    }

    /// Whether any parameter occurs (free or bound).
    pub fn has_params(&self) -> bool {
        self.0.flags & F_PARAM != 0
    }

    /// Whether any counter occurs (free or bound).
    pub fn has_counters(&self) -> bool {
        self.0.flags & F_COUNTER != 0
    }

    /// Whether any placeholder occurs.
    pub fn has_placeholders(&self) -> bool {
        self.0.flags & F_PLACEHOLDER != 0
    }

    /// Whether any quantifier occurs.
    pub fn has_quantifiers(&self) -> bool {
        self.0.flags & F_QUANT != 0
    }

    /// Whether any array application occurs.
    pub fn has_apps(&self) -> bool {
        self.0.flags & F_APP != 0
    }

    /// Linear view `(terms, constant)` of an integer term.
    pub fn linear(&self) -> (Vec<(Expr, i64)>, i64) {
        let (m, c) = lin_parts(self);
        (m.into_iter().collect(), c)
    }

    /// Coefficient of `atom` in the linear view of this term.
    pub fn coefficient(&self, atom: &Expr) -> i64 {
        lin_parts(self).0.get(atom).copied().unwrap_or(0)
    }

    /// Direct children, in order.
    pub fn children(&self) -> Vec<Expr> {
        match self.node() {
            Node::Int(_) | Node::Bool(_) | Node::Star | Node::Var(_) | Node::StarPred(_) => vec![],
            Node::App(_, args) => args.clone(),
            Node::Lin(terms, _) => terms.iter().map(|(e, _)| e.clone()).collect(),
            Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Mod(a, b)
            | Node::Max(a, b)
            | Node::Cmp(_, a, b)
            | Node::Implies(a, b) => vec![a.clone(), b.clone()],
            Node::Ite(c, t, e) => vec![c.clone(), t.clone(), e.clone()],
            Node::And(xs) | Node::Or(xs) => xs.clone(),
            Node::Forall(_, b) | Node::Exists(_, b) => vec![b.clone()],
        }
    }

    /// Whether `v` occurs anywhere, bound or free. Opaque propositions are
    /// not inspected.
    pub fn occurs(&self, v: &Var) -> bool {
        let flag = match v {
            Var::Sym(_) => F_SYM,
            Var::Counter(_) => F_COUNTER,
            Var::Param(_) => F_PARAM,
            Var::Placeholder(_) => F_PLACEHOLDER,
        };
        if self.0.flags & flag == 0 {
            return false;
        }
        match self.node() {
            Node::Var(w) => w == v,
            Node::Forall(vs, _) | Node::Exists(vs, _) if vs.contains(v) => true,
            _ => self.children().iter().any(|c| c.occurs(v)),
        }
    }

    /// Free variables.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match self.node() {
            Node::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            Node::Forall(vs, body) | Node::Exists(vs, body) => {
                let n = bound.len();
                bound.extend(vs.iter().cloned());
                body.collect_free(bound, out);
                bound.truncate(n);
            }
            _ => {
                for c in self.children() {
                    c.collect_free(bound, out);
                }
            }
        }
    }

    /// Free counters.
    pub fn free_counters(&self) -> BTreeSet<Var> {
        if !self.has_counters() {
            return BTreeSet::new();
        }
        self.free_vars()
            .into_iter()
            .filter(|v| matches!(v, Var::Counter(_)))
            .collect()
    }

    /// Names of basic symbols that occur.
    pub fn symbols(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Var(Var::Sym(s)) = e.node() {
                out.insert(s.clone());
            }
        });
        out
    }

    /// Array names and arities of the applications that occur.
    pub fn arrays(&self) -> BTreeMap<Arc<str>, usize> {
        let mut out = BTreeMap::new();
        self.visit(&mut |e| {
            if let Node::App(a, args) = e.node() {
                out.insert(a.clone(), args.len());
            }
        });
        out
    }

    /// Opaque propositions that occur.
    pub fn star_preds(&self) -> BTreeSet<Expr> {
        let mut out = BTreeSet::new();
        if self.has_star_pred() {
            self.visit(&mut |e| {
                if let Node::StarPred(_) = e.node() {
                    out.insert(e.clone());
                }
            });
        }
        out
    }

    /// Pre-order traversal (opaque propositions are leaves).
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Whether some subexpression satisfies `pred`.
    pub fn any(&self, pred: &mut dyn FnMut(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        self.children().iter().any(|c| c.any(pred))
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(Expr::size).sum::<usize>()
    }

    // ----- rewriting ----------------------------------------------------

    /// Top-down rewrite. `f` sees each node together with the variables
    /// bound above it; returning `Some` replaces the node without descending
    /// further. Nodes are rebuilt through the smart constructors.
    pub fn rewrite(&self, f: &mut dyn FnMut(&Expr, &[Var]) -> Option<Expr>) -> Expr {
        self.rewrite_in(f, &mut Vec::new())
    }

    fn rewrite_in(
        &self,
        f: &mut dyn FnMut(&Expr, &[Var]) -> Option<Expr>,
        bound: &mut Vec<Var>,
    ) -> Expr {
        if let Some(r) = f(self, bound) {
            return r;
        }
        let mut go = |e: &Expr, bound: &mut Vec<Var>| e.rewrite_in(f, bound);
        match self.node() {
            Node::Int(_) | Node::Bool(_) | Node::Star | Node::Var(_) | Node::StarPred(_) => {
                self.clone()
            }
            Node::App(a, args) => {
                Expr::app_arc(a.clone(), args.iter().map(|x| go(x, bound)).collect())
            }
            Node::Lin(terms, c) => {
                let mut acc = Expr::int(*c);
                for (e, k) in terms {
                    acc = acc.add(&go(e, bound).scale(*k));
                }
                acc
            }
            Node::Mul(a, b) => go(a, bound).mul(&go(b, bound)),
            Node::Div(a, b) => go(a, bound).div(&go(b, bound)),
            Node::Mod(a, b) => go(a, bound).modulo(&go(b, bound)),
            Node::Max(a, b) => go(a, bound).maximum(&go(b, bound)),
            Node::Ite(c, t, e) => {
                let c2 = go(c, bound);
                Expr::ite(&c2, &go(t, bound), &go(e, bound))
            }
            Node::Cmp(op, a, b) => Expr::cmp(*op, &go(a, bound), &go(b, bound)),
            Node::And(xs) => Expr::and(xs.iter().map(|x| go(x, bound)).collect::<Vec<_>>()),
            Node::Or(xs) => Expr::or(xs.iter().map(|x| go(x, bound)).collect::<Vec<_>>()),
            Node::Implies(a, b) => {
                let a2 = go(a, bound);
                Expr::implies(&a2, &go(b, bound))
            }
            Node::Forall(vs, body) | Node::Exists(vs, body) => {
                let n = bound.len();
                bound.extend(vs.iter().cloned());
                let b2 = go(body, bound);
                bound.truncate(n);
                if matches!(self.node(), Node::Forall(..)) {
                    Expr::forall(vs.clone(), &b2)
                } else {
                    Expr::exists(vs.clone(), &b2)
                }
            }
        }
    }

    /// Renames variables everywhere, quantifier binders included.
    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.rewrite(&mut |e, _| match e.node() {
            Node::Var(v) => map.get(v).map(|w| Expr::var(w.clone())),
            Node::Forall(vs, body) | Node::Exists(vs, body) => {
                let vs2: Vec<Var> = vs
                    .iter()
                    .map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone()))
                    .collect();
                let body2 = body.rename(map);
                Some(if matches!(e.node(), Node::Forall(..)) {
                    Expr::forall(vs2, &body2)
                } else {
                    Expr::exists(vs2, &body2)
                })
            }
            _ => None,
        })
    }

    /// Every variable occurring in the expression, bound ones included.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| match e.node() {
            Node::Var(v) => {
                out.insert(v.clone());
            }
            Node::Forall(vs, _) | Node::Exists(vs, _) => out.extend(vs.iter().cloned()),
            _ => {}
        });
        out
    }

    /// Simultaneous substitution of free variables.
    pub fn subst(&self, map: &BTreeMap<Var, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.rewrite(&mut |e, bound| match e.node() {
            Node::Var(v) if !bound.contains(v) => map.get(v).cloned(),
            _ => None,
        })
    }

    /// Substitution of a single free variable.
    pub fn subst1(&self, v: &Var, by: &Expr) -> Expr {
        self.subst(&BTreeMap::from([(v.clone(), by.clone())]))
    }

    /// Replaces every free occurrence of the given variables by `star`.
    pub fn starify(&self, vars: &[Var]) -> Expr {
        self.subst(&vars.iter().map(|v| (v.clone(), Expr::star())).collect())
    }

    /// Applies a state: basic symbols and array applications are replaced by
    /// their values in `theta`.
    pub fn apply_state(&self, theta: &State) -> Expr {
        self.rewrite(&mut |e, _| match e.node() {
            Node::Var(Var::Sym(a)) => theta.scalars.get(a).cloned(),
            Node::App(a, args) => {
                let lam = theta.arrays.get(a)?;
                let args2: Vec<Expr> = args.iter().map(|x| x.apply_state(theta)).collect();
                Some(lam.apply(&args2))
            }
            _ => None,
        })
    }

    /// Rewrites this term so that `h` occurs as often as possible and then
    /// replaces `h` by `g`. Works on the linear view and recurses into
    /// atoms; whatever remains of `h`'s variables is left untouched.
    pub fn tau_subst(&self, h: &Expr, g: &Expr) -> Expr {
        if self == h {
            return g.clone();
        }
        if self.is_formula() {
            let kids: Vec<Expr> = self.children().iter().map(|c| c.tau_subst(h, g)).collect();
            return self.rebuild(&kids);
        }
        if self.is_star() {
            return self.clone();
        }
        let (hm, _) = lin_parts(h);
        let pivot = hm
            .iter()
            .find(|(a, _)| {
                matches!(
                    a.node(),
                    Node::Var(Var::Param(_)) | Node::Var(Var::Counter(_))
                )
            })
            .or_else(|| hm.iter().next())
            .map(|(a, c)| (a.clone(), *c));
        let (m, _) = lin_parts(self);
        let mut lambda = 0;
        if let Some((p, d)) = &pivot {
            let cp = m.get(p).copied().unwrap_or(0);
            if cp != 0 && cp % d == 0 {
                lambda = cp / d;
            }
        }
        let rest = if lambda != 0 {
            self.sub(&h.scale(lambda))
        } else {
            self.clone()
        };
        let (rm, rc) = lin_parts(&rest);
        let mut acc = Expr::int(rc).add(&g.scale(lambda));
        for (atom, k) in rm {
            let atom2 = match atom.node() {
                Node::Int(_) | Node::Bool(_) | Node::Star | Node::Var(_) | Node::StarPred(_) => {
                    atom.clone()
                }
                _ => {
                    let kids: Vec<Expr> =
                        atom.children().iter().map(|c| c.tau_subst(h, g)).collect();
                    atom.rebuild(&kids)
                }
            };
            acc = acc.add(&atom2.scale(k));
        }
        acc
    }

    /// Rebuilds a node with new children (same shape as [`Expr::children`]).
    pub fn rebuild(&self, kids: &[Expr]) -> Expr {
        match self.node() {
            Node::Int(_) | Node::Bool(_) | Node::Star | Node::Var(_) | Node::StarPred(_) => {
                self.clone()
            }
            Node::App(a, _) => Expr::app_arc(a.clone(), kids.to_vec()),
            Node::Lin(terms, c) => {
                let mut acc = Expr::int(*c);
                for ((_, k), e) in terms.iter().zip(kids) {
                    acc = acc.add(&e.scale(*k));
                }
                acc
            }
            Node::Mul(..) => kids[0].mul(&kids[1]),
            Node::Div(..) => kids[0].div(&kids[1]),
            Node::Mod(..) => kids[0].modulo(&kids[1]),
            Node::Max(..) => kids[0].maximum(&kids[1]),
            Node::Ite(..) => Expr::ite(&kids[0], &kids[1], &kids[2]),
            Node::Cmp(op, ..) => Expr::cmp(*op, &kids[0], &kids[1]),
            Node::Implies(..) => Expr::implies(&kids[0], &kids[1]),
            Node::And(_) => Expr::and(kids.to_vec()),
            Node::Or(_) => Expr::or(kids.to_vec()),
            Node::Forall(vs, _) => Expr::forall(vs.clone(), &kids[0]),
            Node::Exists(vs, _) => Expr::exists(vs.clone(), &kids[0]),
        }
    }

    /// Whether this expression depends on the parameters `ps` only through
    /// their sum.
    pub fn depends_only_on_sum(&self, ps: &[Var]) -> bool {
        if ps.len() < 2 {
            return true;
        }
        let total = Expr::sum(
            ps.iter()
                .map(|p| Expr::var(p.clone()))
                .collect::<Vec<_>>()
                .iter(),
        );
        let mut map = BTreeMap::new();
        map.insert(ps[0].clone(), total);
        for p in &ps[1..] {
            map.insert(p.clone(), Expr::int(0));
        }
        self.subst(&map) == *self
    }

    /// Evaluates a ground expression. Returns `None` when a variable, array
    /// application, quantifier or `star` is reached.
    pub fn eval_ground(&self) -> Option<Value> {
        let int = |e: &Expr| match e.eval_ground()? {
            Value::Int(n) => Some(n),
            Value::Bool(_) => None,
        };
        let boolean = |e: &Expr| match e.eval_ground()? {
            Value::Bool(b) => Some(b),
            Value::Int(_) => None,
        };
        Some(match self.node() {
            Node::Int(n) => Value::Int(*n),
            Node::Bool(b) => Value::Bool(*b),
            Node::Lin(terms, c) => {
                let mut acc = *c;
                for (e, k) in terms {
                    acc += k * int(e)?;
                }
                Value::Int(acc)
            }
            Node::Mul(a, b) => Value::Int(int(a)? * int(b)?),
            Node::Div(a, b) => {
                let d = int(b)?;
                if d == 0 {
                    return None;
                }
                Value::Int(euclid_div(int(a)?, d))
            }
            Node::Mod(a, b) => {
                let d = int(b)?;
                if d == 0 {
                    return None;
                }
                Value::Int(euclid_mod(int(a)?, d))
            }
            Node::Max(a, b) => Value::Int(int(a)?.max(int(b)?)),
            Node::Ite(c, t, e) => {
                if boolean(c)? {
                    t.eval_ground()?
                } else {
                    e.eval_ground()?
                }
            }
            Node::Cmp(op, a, b) => Value::Bool(op.eval(int(a)?, int(b)?)),
            Node::And(xs) => {
                let mut all = true;
                for x in xs {
                    all &= boolean(x)?;
                }
                Value::Bool(all)
            }
            Node::Or(xs) => {
                let mut some = false;
                for x in xs {
                    some |= boolean(x)?;
                }
                Value::Bool(some)
            }
            Node::Implies(a, b) => Value::Bool(!boolean(a)? || boolean(b)?),
            _ => return None,
        })
    }
}

/// Value of a ground expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

/// Euclidean division (remainder always nonnegative).
pub fn euclid_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Euclidean remainder (always nonnegative).
pub fn euclid_mod(a: i64, b: i64) -> i64 {
    a.rem_euclid(b)
}

/// Array value `lambda x0 .. x(n-1). body`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lambda {
    pub arity: usize,
    pub body: Expr,
}

impl Lambda {
    /// The initial contents of array `name`.
    pub fn identity(name: &str, arity: usize) -> Lambda {
        Lambda {
            arity,
            body: Expr::app(name, Lambda::placeholders(arity)),
        }
    }

    /// The unknown array.
    pub fn star(arity: usize) -> Lambda {
        Lambda {
            arity,
            body: Expr::star(),
        }
    }

    /// Placeholder terms `x0 .. x(n-1)`.
    pub fn placeholders(arity: usize) -> Vec<Expr> {
        (0..arity as u32).map(Expr::placeholder).collect()
    }

    /// Whether this is the unknown array.
    pub fn is_star(&self) -> bool {
        self.body.is_star()
    }

    /// Applies the lambda to index terms.
    pub fn apply(&self, args: &[Expr]) -> Expr {
        let map: BTreeMap<Var, Expr> = args
            .iter()
            .enumerate()
            .map(|(i, a)| (Var::Placeholder(i as u32), a.clone()))
            .collect();
        self.body.subst(&map)
    }

    /// Point update `self[idx := val]`.
    pub fn store(&self, idx: &[Expr], val: &Expr) -> Lambda {
        let xs = Lambda::placeholders(self.arity);
        let cond = Expr::and(
            xs.iter()
                .zip(idx)
                .map(|(x, i)| Expr::eq(x, i))
                .collect::<Vec<_>>(),
        );
        Lambda {
            arity: self.arity,
            body: Expr::ite(&cond, val, &self.body),
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let xs: Vec<String> = (0..self.arity).map(|i| format!("x{i}")).collect();
        write!(f, "lambda ({}). {}", xs.join(", "), self.body)
    }
}

/// Symbolic state: values of scalar and array variables in terms of basic
/// symbols. Variables without an entry keep their initial value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct State {
    pub scalars: BTreeMap<Arc<str>, Expr>,
    pub arrays: BTreeMap<Arc<str>, Lambda>,
}

impl State {
    /// Value of scalar `name` (its basic symbol when unset).
    pub fn scalar(&self, name: &str) -> Expr {
        self.scalars
            .get(name)
            .cloned()
            .unwrap_or_else(|| Expr::sym(name))
    }

    /// Value of array `name` (its initial contents when unset).
    pub fn array(&self, name: &str, arity: usize) -> Lambda {
        self.arrays
            .get(name)
            .cloned()
            .unwrap_or_else(|| Lambda::identity(name, arity))
    }

    /// Sets a scalar value.
    pub fn set_scalar(&mut self, name: &str, value: Expr) {
        self.scalars.insert(Arc::from(name), value);
    }

    /// Sets an array value.
    pub fn set_array(&mut self, name: &str, value: Lambda) {
        self.arrays.insert(Arc::from(name), value);
    }

    /// Composition `self` after `inner`: every value of `self` is expressed
    /// over the basic symbols of `inner`'s origin. Variables unset in `self`
    /// take their value from `inner`.
    pub fn compose(&self, inner: &State) -> State {
        let mut out = inner.clone();
        for (k, v) in &self.scalars {
            out.scalars.insert(k.clone(), v.apply_state(inner));
        }
        for (k, lam) in &self.arrays {
            out.arrays.insert(
                k.clone(),
                Lambda {
                    arity: lam.arity,
                    body: lam.body.apply_state(inner),
                },
            );
        }
        out
    }

    /// Applies `f` to every stored value.
    pub fn map_values(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> State {
        State {
            scalars: self
                .scalars
                .iter()
                .map(|(k, v)| (k.clone(), f(v)))
                .collect(),
            arrays: self
                .arrays
                .iter()
                .map(|(k, l)| {
                    (
                        k.clone(),
                        Lambda {
                            arity: l.arity,
                            body: f(&l.body),
                        },
                    )
                })
                .collect(),
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.scalars {
            if !first {
                writeln!(f)?;
            }
            first = false;
            write!(f, "{k} -> {v}")?;
        }
        for (k, v) in &self.arrays {
            if !first {
                writeln!(f)?;
            }
            first = false;
            write!(f, "{k} -> {v}")?;
        }
        Ok(())
    }
}

// ----- rendering ---------------------------------------------------------

fn is_atomic(e: &Expr) -> bool {
    matches!(
        e.node(),
        Node::Int(_)
            | Node::Bool(_)
            | Node::Star
            | Node::Var(_)
            | Node::App(..)
            | Node::Max(..)
            | Node::Ite(..)
            | Node::StarPred(_)
    ) && !matches!(e.node(), Node::Int(n) if *n < 0)
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    if is_atomic(e) {
        write!(f, "{e}")
    } else {
        write!(f, "({e})")
    }
}

fn write_vars(f: &mut fmt::Formatter<'_>, vs: &[Var]) -> fmt::Result {
    let names: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
    write!(f, "({})", names.join(", "))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Int(n) => write!(f, "{n}"),
            Node::Bool(b) => write!(f, "{b}"),
            Node::Star => write!(f, "star"),
            Node::Var(v) => write!(f, "{v}"),
            Node::App(a, args) => {
                write!(f, "{a}(")?;
                for (i, x) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            Node::Lin(terms, c) => {
                for (i, (e, k)) in terms.iter().enumerate() {
                    let k = *k;
                    if i == 0 {
                        match k {
                            1 => {}
                            -1 => write!(f, "-")?,
                            _ => write!(f, "{k}*")?,
                        }
                    } else if k < 0 {
                        write!(f, " - ")?;
                        if k != -1 {
                            write!(f, "{}*", -k)?;
                        }
                    } else {
                        write!(f, " + ")?;
                        if k != 1 {
                            write!(f, "{k}*")?;
                        }
                    }
                    write_operand(f, e)?;
                }
                match c.cmp(&0) {
                    std::cmp::Ordering::Greater => write!(f, " + {c}"),
                    std::cmp::Ordering::Less => write!(f, " - {}", -c),
                    std::cmp::Ordering::Equal => Ok(()),
                }
            }
            Node::Mul(a, b) => {
                write_operand(f, a)?;
                write!(f, " * ")?;
                write_operand(f, b)
            }
            Node::Div(a, b) => {
                write_operand(f, a)?;
                write!(f, " / ")?;
                write_operand(f, b)
            }
            Node::Mod(a, b) => {
                write_operand(f, a)?;
                write!(f, " % ")?;
                write_operand(f, b)
            }
            Node::Max(a, b) => write!(f, "max({a}, {b})"),
            Node::Ite(c, t, e) => write!(f, "ite({c}, {t}, {e})"),
            Node::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Node::StarPred(p) => write!(f, "star[{p}]"),
            Node::And(xs) | Node::Or(xs) => {
                let sep = if matches!(self.node(), Node::And(_)) {
                    " && "
                } else {
                    " || "
                };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    match x.node() {
                        Node::Cmp(..) | Node::StarPred(_) | Node::Bool(_) => write!(f, "{x}")?,
                        _ => write!(f, "({x})")?,
                    }
                }
                Ok(())
            }
            Node::Implies(a, b) => write!(f, "({a}) -> ({b})"),
            Node::Forall(vs, b) => {
                write!(f, "forall ")?;
                write_vars(f, vs)?;
                write!(f, " ({b})")
            }
            Node::Exists(vs, b) => {
                write!(f, "exists ")?;
                write_vars(f, vs)?;
                write!(f, " ({b})")
            }
        }
    }
}
