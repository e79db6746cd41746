//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use apc_core::formula_builder::{analyze, decide, Analysis, DecideOptions, Route, Status, Verdict};
use apc_core::interp::{run, Memory, Outcome};
use apc_core::loop_summary;
use apc_core::program_model::{parse_program, Program};
use apc_core::smt_backend::{SatResult, Solver};
use apc_core::symexec::{Analyzer, Options};
use apc_core::symexpr::{Expr, Value, Var};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{ground_state, holds};

/// Time limit for deriving one iteration count and checking it.
const COUNT_LIMIT: Duration = Duration::from_secs(5);
/// Time limit for all array-summary checks together.
const ARRAY_LIMIT: Duration = Duration::from_secs(10);
/// Counter values checked for the array summaries.
const ARRAY_COUNTERS: std::ops::RangeInclusive<i64> = 0..=4;
/// Unfolding bound and per-benchmark time limit of the verdict suite.
const BENCH_K: u32 = 25;
const BENCH_TIMEOUT: Duration = Duration::from_secs(300);
/// Interpreter step limit for replaying models.
const REPLAY_STEPS: usize = 1_000_000;
/// Fuzzing: programs, random inputs per program, input range, step limit
/// and the number of hits checked per program.
const FUZZ_PROGRAMS: usize = 300;
const FUZZ_INPUTS: usize = 200;
const FUZZ_RANGE: std::ops::RangeInclusive<i64> = -8..=8;
const FUZZ_STEPS: usize = 10_000;
const FUZZ_HITS: usize = 3;
/// Time limit of each decision on a fuzzed program.
const FUZZ_DECIDE_TIMEOUT: Duration = Duration::from_secs(20);
/// Loop-free programs compared against the reference executor.
const LOOP_FREE_PROGRAMS: usize = 100;
/// Single-loop programs, inputs per program and the largest counter sum
/// checked against concrete runs.
const LOOP_PROGRAMS: usize = 50;
const LOOP_INPUTS: usize = 12;
const LOOP_PROFILE_SUM: usize = 4;

const RECTANGULAR: &str = "var A:int[8][8]; var i:int; var j:int; var m:int; var n:int;
i = 0;
while (i < m) { j = 0; while (j < n) { A[i][j] = 0; j = j + 1; } i = i + 1; }
target;";

const TRIANGULAR: &str = "var A:int[8][8]; var i:int; var j:int; var m:int; var n:int;
i = 0;
while (i < m) { j = i; while (j < n) { A[i][j] = 0; j = j + 1; } i = i + 1; }
target;";

const FILL: &str = "var A:int[8]; var i:int; var n:int;
while (i < n) { A[i] = i; i = i + 1; }
target;";

const FILL_PAIRS: &str = "var A:int[8]; var i:int; var n:int;
while (i < n) { A[i - 1] = i; A[i] = i; i = i + 1; }
target;";

const FILL_PARITY: &str = "var A:int[8]; var i:int; var n:int;
while (i < n) { if (i % 2 == 0) { A[i] = 2 * i + 1; } else { A[i] = 5; } i = i + 1; }
target;";

/// Summaries of the fill loops after simplification, frozen from a run
/// whose equivalence with the expected forms was checked below.
const FILL_SIMPLIFIED: &str =
    "lambda (x0). ite(exists (t3) (x0 == i + t3 && t3 >= 0 && t3 < k1), x0, A(x0))";
const FILL_PAIRS_SIMPLIFIED: &str =
    "lambda (x0). ite(k1 > 0 && x0 == i + k1 - 1, x0, ite(exists (t3) (x0 == i + t3 - 1 && t3 >= 0 && t3 < k1), x0 + 1, A(x0)))";

fn corpus(name: &str) -> String {
    let path = format!("{}/corpus/{name}.apc", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn solver(timeout: Duration) -> Solver {
    Solver::from_env(timeout)
}

fn run_analysis(src: &str, opts: Options) -> Analysis {
    let p = parse_program(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    analyze(&p, Analyzer::new(solver(Duration::from_secs(10)), opts))
}

fn valid(s: &Solver, f: &Expr) -> bool {
    matches!(s.is_valid(f), Ok(SatResult::Unsat))
}

type Outcome_ = Result<String, String>;

// ----- 1: iteration counts of nested loops -------------------------------------

fn iteration_counts() -> Outcome_ {
    let s = solver(COUNT_LIMIT);
    let mut notes = Vec::new();
    for (name, src) in [("rectangular", RECTANGULAR), ("triangular", TRIANGULAR)] {
        let t0 = Instant::now();
        let a = run_analysis(src, Options::default());
        let counts = a.analyzer.counts.borrow().clone();
        let [(_, count)] = counts.as_slice() else {
            return Err(format!(
                "{name}: expected one count, found {}",
                counts.len()
            ));
        };
        let expected = match name {
            "rectangular" => Expr::int(0).maximum(&Expr::sym("n")),
            _ => {
                let ks = count.free_counters();
                let [k] = ks.iter().collect::<Vec<_>>()[..] else {
                    return Err(format!("{name}: count {count} should mention one counter"));
                };
                Expr::int(0).maximum(
                    &Expr::sym("n")
                        .sub(&Expr::sym("i"))
                        .sub(&Expr::var(k.clone())),
                )
            }
        };
        if !valid(&s, &Expr::eq(count, &expected)) {
            return Err(format!("{name}: count {count} differs from {expected}"));
        }
        let took = t0.elapsed();
        if took > COUNT_LIMIT {
            return Err(format!("{name}: took {took:?}"));
        }
        notes.push(format!("{name} {count} in {} ms", took.as_millis()));
    }
    Ok(notes.join("; "))
}

// ----- 2: array summaries ----------------------------------------------------------

fn param(n: u32) -> Var {
    Var::Param(1000 + n)
}

/// `lo <= t < hi`.
fn within(t: &Expr, lo: &Expr, hi: &Expr) -> Expr {
    Expr::and2(&Expr::le(lo, t), &Expr::lt(t, hi))
}

/// Expected state of `A` after `k` iterations of the fill loop, read at `x`.
fn fill_expected(x: &Expr, k: &Expr, full: bool) -> Expr {
    let i = Expr::sym("i");
    let (t, u) = (Expr::var(param(0)), Expr::var(param(1)));
    let mut hit = vec![Expr::eq(x, &t.add(&i)), within(&t, &Expr::int(0), k)];
    if full {
        let later = Expr::and2(&Expr::lt(&t, &u), &Expr::lt(&u, k));
        hit.push(Expr::forall(
            vec![param(1)],
            &Expr::implies(&later, &Expr::ne(x, &u.add(&i))),
        ));
    }
    Expr::ite(
        &Expr::exists(vec![param(0)], &Expr::and(hit)),
        x,
        &Expr::app("A", vec![x.clone()]),
    )
}

/// Expected state of `A` after `k` iterations of the pair-filling loop.
fn fill_pairs_expected(x: &Expr, k: &Expr, full: bool) -> Expr {
    let i = Expr::sym("i");
    let (t, u) = (Expr::var(param(0)), Expr::var(param(1)));
    let not_later = {
        let later = Expr::and2(&Expr::lt(&t, &u), &Expr::lt(&u, k));
        let avoid = Expr::and2(
            &Expr::ne(x, &u.add(&i)),
            &Expr::ne(x, &u.add(&i).add_int(-1)),
        );
        Expr::forall(vec![param(1)], &Expr::implies(&later, &avoid))
    };
    let h = |offset: i64| {
        let mut c = vec![
            Expr::eq(x, &t.add(&i).add_int(offset)),
            within(&t, &Expr::int(0), k),
        ];
        if full {
            c.push(not_later.clone());
        }
        Expr::exists(vec![param(0)], &Expr::and(c))
    };
    let first = if full {
        h(0)
    } else {
        Expr::and2(
            &Expr::gt(k, &Expr::int(0)),
            &Expr::eq(x, &k.add_int(-1).add(&i)),
        )
    };
    Expr::ite(
        &first,
        x,
        &Expr::ite(&h(-1), &x.add_int(1), &Expr::app("A", vec![x.clone()])),
    )
}

/// Expected state of `A` after `k1 + k2` iterations of the parity loop,
/// the two paths taken `k1` and `k2` times in some order.
fn fill_parity_expected(x: &Expr, k1: &Expr, k2: &Expr, full: bool) -> Expr {
    let i = Expr::sym("i");
    let total = k1.add(k2);
    let (t1, t2, u1, u2) = (
        Expr::var(param(0)),
        Expr::var(param(1)),
        Expr::var(param(2)),
        Expr::var(param(3)),
    );
    let t = t1.add(&t2);
    let u = u1.add(&u2);
    let nonneg =
        |a: &Expr, b: &Expr| Expr::and2(&Expr::ge(a, &Expr::int(0)), &Expr::ge(b, &Expr::int(0)));
    let even = |e: &Expr| Expr::eq(&e.add(&i).modulo(&Expr::int(2)), &Expr::int(0));
    let branch = |want_even: bool| {
        let parity = if want_even { even(&t) } else { even(&t).not() };
        let mut c = vec![
            Expr::eq(x, &t.add(&i)),
            nonneg(&t1, &t2),
            Expr::lt(&t, &total),
            parity,
        ];
        if full {
            let later = Expr::and(vec![
                nonneg(&u1, &u2),
                Expr::lt(&t, &u),
                Expr::lt(&u, &total),
            ]);
            c.push(Expr::forall(
                vec![param(2), param(3)],
                &Expr::implies(&later, &Expr::ne(x, &u.add(&i))),
            ));
        }
        Expr::exists(vec![param(0), param(1)], &Expr::and(c))
    };
    let doubled = x.scale(2).add_int(1);
    Expr::ite(
        &branch(true),
        &doubled,
        &Expr::ite(
            &branch(false),
            &Expr::int(5),
            &Expr::app("A", vec![x.clone()]),
        ),
    )
}

fn array_summary(src: &str, simplify: bool) -> (apc_core::symexpr::Lambda, Vec<Var>) {
    let a = run_analysis(
        src,
        Options {
            simplify,
            ..Options::default()
        },
    );
    let leaf = a.tree.leaves()[0];
    let lam = a.tree.nodes[leaf]
        .theta
        .as_ref()
        .expect("executed leaf")
        .array("A", 1);
    let counters = a
        .tree
        .nodes
        .iter()
        .flat_map(|n| n.counters().to_vec())
        .collect();
    (lam, counters)
}

fn array_summaries() -> Outcome_ {
    let t0 = Instant::now();
    let s = solver(ARRAY_LIMIT);
    let x = Expr::sym("chi");
    let mut checked = 0;
    for simplify in [false, true] {
        for (name, src) in [
            ("fill", FILL),
            ("pairs", FILL_PAIRS),
            ("parity", FILL_PARITY),
        ] {
            let (lam, ks) = array_summary(src, simplify);
            let got = lam.apply(std::slice::from_ref(&x));
            let profiles: Vec<Vec<i64>> = if ks.len() == 1 {
                ARRAY_COUNTERS.map(|c| vec![c]).collect()
            } else {
                ARRAY_COUNTERS
                    .flat_map(|a| ARRAY_COUNTERS.map(move |b| vec![a, b]))
                    .collect()
            };
            for c in profiles {
                let map: BTreeMap<Var, Expr> = ks
                    .iter()
                    .cloned()
                    .zip(c.iter().map(|&v| Expr::int(v)))
                    .collect();
                let ce: Vec<Expr> = c.iter().map(|&v| Expr::int(v)).collect();
                let want = match name {
                    "fill" => fill_expected(&x, &ce[0], !simplify),
                    "pairs" => fill_pairs_expected(&x, &ce[0], !simplify),
                    _ => fill_parity_expected(&x, &ce[0], &ce[1], !simplify),
                };
                if !valid(&s, &Expr::eq(&got.subst(&map), &want)) {
                    return Err(format!(
                        "{name} (simplify={simplify}) differs at counters {c:?}: {lam}"
                    ));
                }
                checked += 1;
            }
            if simplify {
                let golden = match name {
                    "fill" => Some(FILL_SIMPLIFIED),
                    "pairs" => Some(FILL_PAIRS_SIMPLIFIED),
                    _ => None,
                };
                if let Some(g) = golden {
                    if lam.to_string() != g {
                        return Err(format!("{name}: simplified form {lam} is not {g}"));
                    }
                }
            }
        }
    }
    let took = t0.elapsed();
    if took > ARRAY_LIMIT {
        return Err(format!("took {took:?}"));
    }
    Ok(format!(
        "{checked} point-wise checks and 2 shapes in {} ms",
        took.as_millis()
    ))
}

// ----- 3, 4: benchmark verdicts and replays -------------------------------------

/// Decides a program and replays the model when satisfiable.
struct Bench {
    name: &'static str,
    verdict: Verdict,
    replay: Option<(Outcome, Memory)>,
}

fn bench(name: &'static str) -> Bench {
    let a = run_analysis(&corpus(name), Options::default());
    let opts = DecideOptions {
        unfold_k: BENCH_K,
        timeout: BENCH_TIMEOUT,
        race: true,
    };
    let verdict = decide(&a.analyzer.solver, &a.phi, &opts);
    let replay = verdict.model.as_ref().map(|m| {
        let init = Memory::from_model(&a.program, m);
        let mut mem = init.clone();
        (run(&a.program, &mut mem, REPLAY_STEPS).outcome, init)
    });
    Bench {
        name,
        verdict,
        replay,
    }
}

fn decoded(mem: &Memory, array: &str) -> String {
    (0..64)
        .map(|i| mem.read(array, &[i]))
        .take_while(|&c| c != 0)
        .map(|c| {
            u8::try_from(c)
                .ok()
                .filter(|b| b.is_ascii_graphic() || *b == b' ')
                .map_or('?', char::from)
        })
        .collect()
}

const SAT_BENCHES: [&str; 5] = ["hello", "hw", "hwm", "matrir", "windriver"];
const UNSAT_BENCHES: [&str; 2] = ["oneloop", "twoloops"];

fn verdicts(benches: &[Bench]) -> Outcome_ {
    let mut notes = Vec::new();
    for b in benches {
        let want = if SAT_BENCHES.contains(&b.name) {
            Status::Sat
        } else {
            Status::Unsat
        };
        let v = &b.verdict;
        if v.status != want {
            return Err(format!("{}: {:?}, expected {want:?}", b.name, v.status));
        }
        let route = match v.winner {
            Some(Route::Direct) => "direct",
            Some(Route::Unfolded) => "unfolded",
            None => "-",
        };
        notes.push(format!("{} {}", b.name, route));
    }
    Ok(notes.join(", "))
}

fn replays(benches: &[Bench]) -> Outcome_ {
    let mut notes = Vec::new();
    for b in benches.iter().filter(|b| SAT_BENCHES.contains(&b.name)) {
        let Some((outcome, init)) = &b.replay else {
            return Err(format!("{}: no model", b.name));
        };
        if *outcome != Outcome::Reached {
            return Err(format!("{}: replay ended with {outcome:?}", b.name));
        }
        if b.name == "hello" {
            let text = decoded(init, "A");
            if !text.contains("Hello") {
                return Err(format!("hello: input string {text:?} lacks the word"));
            }
            notes.push(format!("hello A={text:?}"));
        }
    }
    notes.push(format!("{} replays reached the target", SAT_BENCHES.len()));
    Ok(notes.join(", "))
}

// ----- 5: soundness against random testing ------------------------------------

/// Outcome of the fuzzing run, shared with the confirmation criterion.
struct Fuzz {
    verdicts: Vec<(String, Verdict)>,
    hits: usize,
    checked: usize,
    violations: Vec<String>,
    inconclusive: usize,
}

fn fuzz() -> Fuzz {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let s = solver(Duration::from_secs(20));
    let mut out = Fuzz {
        verdicts: Vec::new(),
        hits: 0,
        checked: 0,
        violations: Vec::new(),
        inconclusive: 0,
    };
    for _ in 0..FUZZ_PROGRAMS {
        let prog = common::with_loops(&mut rng);
        let src = prog.source();
        let a = run_analysis(&src, Options::default());
        let mut seen = BTreeSet::new();
        for _ in 0..FUZZ_INPUTS {
            let values: BTreeMap<String, i64> = prog
                .names()
                .into_iter()
                .map(|n| (n, rng.gen_range(FUZZ_RANGE)))
                .collect();
            let mut mem = Memory::zeroed(&a.program);
            mem.scalars.extend(values.clone());
            if run(&a.program, &mut mem, FUZZ_STEPS).outcome != Outcome::Reached {
                continue;
            }
            out.hits += 1;
            if seen.len() >= FUZZ_HITS || !seen.insert(values.clone()) {
                continue;
            }
            out.checked += 1;
            match holds(&s, &a.phi.apply_state(&ground_state(&values))) {
                Some(true) => {}
                Some(false) => out
                    .violations
                    .push(format!("inputs {values:?} reach the target of\n{src}")),
                None => out.inconclusive += 1,
            }
        }
        let opts = DecideOptions {
            unfold_k: BENCH_K,
            timeout: FUZZ_DECIDE_TIMEOUT,
            race: true,
        };
        out.verdicts
            .push((src, decide(&a.analyzer.solver, &a.phi, &opts)));
    }
    out
}

fn soundness(f: &Fuzz) -> Outcome_ {
    if let Some(v) = f.violations.first() {
        return Err(format!("{} violations; first: {v}", f.violations.len()));
    }
    if f.inconclusive > 0 {
        return Err(format!(
            "{} of {} hit checks inconclusive",
            f.inconclusive, f.checked
        ));
    }
    Ok(format!(
        "{FUZZ_PROGRAMS} programs, {} hits, {} distinct hits satisfy the condition",
        f.hits, f.checked
    ))
}

// ----- 6: non-terminating loop --------------------------------------------------

fn flip_flop() -> Outcome_ {
    let a = run_analysis(&corpus("flipflop"), Options::default());
    let v = decide(&a.analyzer.solver, &a.phi, &DecideOptions::default());
    if v.status != Status::Sat {
        return Err(format!("condition is {:?}", v.status));
    }
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..5 {
        let mut mem = Memory::zeroed(&a.program);
        mem.scalars.insert("i".into(), rng.gen_range(FUZZ_RANGE));
        let r = run(&a.program, &mut mem, REPLAY_STEPS);
        if r.outcome == Outcome::Reached {
            return Err("a concrete run reached the target".into());
        }
    }
    Ok("condition SAT, no concrete run within the step limit reaches the target".into())
}

// ----- 7: loop-free programs ----------------------------------------------------

fn loop_free() -> Outcome_ {
    let mut rng = StdRng::seed_from_u64(0x5eed_0007);
    let s = solver(Duration::from_secs(20));
    for n in 0..LOOP_FREE_PROGRAMS {
        let prog = common::loop_free(&mut rng);
        let src = prog.source();
        let a = run_analysis(&src, Options::default());
        let reference = common::reference_condition(&prog);
        let same = Expr::and2(
            &Expr::implies(&a.phi, &reference),
            &Expr::implies(&reference, &a.phi),
        );
        if !valid(&s, &same) {
            return Err(format!(
                "program {n} differs\n{src}\ncondition: {}\nreference: {reference}",
                a.phi
            ));
        }
    }
    Ok(format!(
        "{LOOP_FREE_PROGRAMS} programs equivalent to the reference"
    ))
}

// ----- 8: loop summaries against concrete iterations -----------------------------

fn has_star(e: &Expr) -> bool {
    e.any(&mut |n| n.is_star()) || e.has_star_pred()
}

fn memory_after(p: &Program, inputs: &BTreeMap<String, i64>, steps: usize) -> Memory {
    let mut mem = Memory::zeroed(p);
    mem.scalars.extend(inputs.clone());
    let _ = run(p, &mut mem, steps);
    mem
}

fn summaries() -> Outcome_ {
    let mut rng = StdRng::seed_from_u64(0x5eed_0008);
    let s = solver(Duration::from_secs(20));
    let (mut profiles, mut values, mut starred) = (0, 0, 0);
    for n in 0..LOOP_PROGRAMS {
        let prog = common::single_loop(&mut rng);
        let src = prog.source();
        let a = run_analysis(&src, Options::default());
        let Some(lp) = a
            .tree
            .nodes
            .iter()
            .find_map(|t| t.loop_node.as_ref().map(|l| l.lp.clone()))
        else {
            return Err(format!("program {n}: no loop found\n{src}"));
        };
        let sum = loop_summary::summarize(&a.analyzer, &a.program, &lp);
        if sum.counters.len() > 2 || sum.paths.len() != sum.counters.len() {
            return Err(format!(
                "program {n}: {} counters for {} paths\n{src}",
                sum.counters.len(),
                sum.paths.len()
            ));
        }
        for _ in 0..LOOP_INPUTS {
            let inputs: BTreeMap<String, i64> = prog
                .names()
                .into_iter()
                .map(|v| (v, rng.gen_range(FUZZ_RANGE)))
                .collect();
            let mut mem = Memory::zeroed(&a.program);
            mem.scalars.extend(inputs.clone());
            let r = run(&a.program, &mut mem, FUZZ_STEPS);
            let visits: Vec<usize> = r
                .path
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == lp.entry)
                .map(|(i, _)| i)
                .collect();
            let Some(&first) = visits.first() else {
                continue;
            };
            let entry = ground_state(&memory_after(&a.program, &inputs, first).scalars);
            let mut counts = vec![0i64; sum.counters.len()];
            for (t, &at) in visits.iter().enumerate() {
                if t > 0 {
                    let seg: Vec<usize> = r.path[visits[t - 1]..=at]
                        .iter()
                        .map(|&v| a.program.origin[v])
                        .collect();
                    let Some(j) = sum.paths.iter().position(|p| *p == seg) else {
                        return Err(format!(
                            "program {n}: iteration {seg:?} matches no path of {:?}\n{src}",
                            sum.paths
                        ));
                    };
                    counts[j] += 1;
                }
                if t > LOOP_PROFILE_SUM {
                    break;
                }
                profiles += 1;
                let map: BTreeMap<Var, Expr> = sum
                    .counters
                    .iter()
                    .cloned()
                    .zip(counts.iter().map(|&c| Expr::int(c)))
                    .collect();
                let phi = sum.phi.subst(&map).apply_state(&entry);
                if holds(&s, &phi) != Some(true) {
                    return Err(format!(
                        "program {n}: profile {counts:?} violates {}\n{src}",
                        sum.phi
                    ));
                }
                let now = memory_after(&a.program, &inputs, at);
                for (name, e) in &sum.theta.scalars {
                    if has_star(e) {
                        starred += 1;
                        continue;
                    }
                    let got = e.subst(&map).apply_state(&entry);
                    let want = Expr::int(now.scalar(name));
                    let same = match got.eval_ground() {
                        Some(Value::Int(v)) => now.scalar(name) == v,
                        _ => valid(&s, &Expr::eq(&got, &want)),
                    };
                    if !same {
                        return Err(format!(
                            "program {n}: {name} = {e} gives {got} at profile {counts:?}, run has {}\n{src}",
                            now.scalar(name)
                        ));
                    }
                    values += 1;
                }
            }
        }
    }
    Ok(format!("{LOOP_PROGRAMS} programs, {profiles} profiles, {values} state entries match, {starred} unknown entries skipped"))
}

// ----- 9: bounded models hold for the unbounded condition -------------------------

fn confirmations(benches: &[Bench], f: &Fuzz) -> Outcome_ {
    let mut confirmed = 0;
    let all = benches
        .iter()
        .map(|b| (b.name.to_string(), &b.verdict))
        .chain(f.verdicts.iter().map(|(s, v)| (s.clone(), v)));
    for (name, v) in all {
        if v.winner == Some(Route::Unfolded) && v.status == Status::Sat {
            if v.confirmed != Some(true) {
                return Err(format!("unconfirmed model ({:?}) for {name}", v.confirmed));
            }
            confirmed += 1;
        }
        if v.confirmed == Some(false) {
            return Err(format!("bounded model refuted for {name}"));
        }
    }
    Ok(format!(
        "{confirmed} models from the unfolded route confirmed"
    ))
}

/// Criteria selected by `ACCEPTANCE_ONLY` (a comma-separated list of
/// numbers); all of them when unset.
fn selected() -> BTreeSet<usize> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list
            .split(',')
            .filter_map(|n| n.trim().parse().ok())
            .collect(),
        Err(_) => (1..=9).collect(),
    }
}

fn main() {
    let only = selected();
    let mut failed = 0;
    let mut report = |n: usize, what: &str, r: Outcome_, took: Duration| {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {n} {tag} {what} ({:.1} s): {detail}",
            took.as_secs_f64()
        );
    };
    let timed = |f: &mut dyn FnMut() -> Outcome_| {
        let t = Instant::now();
        let r = f();
        (r, t.elapsed())
    };

    if only.contains(&1) {
        let (r, t) = timed(&mut iteration_counts);
        report(1, "nested loop iteration counts", r, t);
    }
    if only.contains(&2) {
        let (r, t) = timed(&mut array_summaries);
        report(2, "array summaries", r, t);
    }
    let t = Instant::now();
    let benches: Vec<Bench> = if [3, 4, 9].iter().any(|n| only.contains(n)) {
        SAT_BENCHES
            .iter()
            .chain(UNSAT_BENCHES.iter())
            .map(|n| bench(n))
            .collect()
    } else {
        Vec::new()
    };
    let bench_time = t.elapsed();
    if only.contains(&3) {
        report(3, "benchmark verdicts", verdicts(&benches), bench_time);
    }
    if only.contains(&4) {
        report(4, "model replays", replays(&benches), bench_time);
    }
    let t = Instant::now();
    let f = if only.contains(&5) || only.contains(&9) {
        fuzz()
    } else {
        Fuzz {
            verdicts: Vec::new(),
            hits: 0,
            checked: 0,
            violations: Vec::new(),
            inconclusive: 0,
        }
    };
    if only.contains(&5) {
        report(
            5,
            "soundness on random programs",
            soundness(&f),
            t.elapsed(),
        );
    }
    if only.contains(&6) {
        let (r, t) = timed(&mut flip_flop);
        report(6, "non-terminating loop", r, t);
    }
    if only.contains(&7) {
        let (r, t) = timed(&mut loop_free);
        report(7, "loop-free programs", r, t);
    }
    if only.contains(&8) {
        let (r, t) = timed(&mut summaries);
        report(8, "loop summaries", r, t);
    }
    if only.contains(&9) {
        report(
            9,
            "confirmation of bounded models",
            confirmations(&benches, &f),
            Duration::ZERO,
        );
    }

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
