//! One function per acceptance property. Each returns a short summary on
//! success and a description of the first violation otherwise.

// ensure!(a < b) on floats is meant to fail on NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use astd_anomaly::cli::{evaluate, synthesize, Injection, Profile, ScoreField, SynthConfig};
use astd_anomaly::detectors::{circ_distance, KMeansModel, KdeModel, LofModel};
use astd_anomaly::engine::{AstdSpec, AstdState, Body, Engine, Env, Event, Key, Program, StepOutcome, Value};
use astd_anomaly::ensemble::{majority_vote, ScoreBoard};
use astd_anomaly::pipeline::{PipelineConfig, Runtime, ScoredEvent};
use astd_anomaly::windowing::{compute_period, formatting_data, TrainingData, Window, WindowConfig, WindowType};
use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::*;
use super::oracles::*;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- engine

pub fn init_final_law(trees: usize) -> Check {
    let mut r = rng(11);
    for i in 0..trees {
        let t = RandomTree::generate(&mut r);
        let engine = Engine::new(t.program.clone());
        let s = engine.init().map_err(|e| e.to_string())?;
        let got = engine.is_final(&s).map_err(|e| e.to_string())?;
        let want = expected_initially_final(&t.program, &t.program.root);
        ensure!(got == want, "tree {i}: is_final(init) = {got}, expected {want}");
    }
    Ok(format!("{trees} random trees"))
}

/// Every node's stored environment holds exactly its own attributes.
fn locals_match(engine: &Engine, spec: &AstdSpec, state: &AstdState) -> Result<(), String> {
    let have: BTreeSet<String> = state.env().names();
    ensure!(have == spec.attr_names(), "node `{}` stores {:?}, declares {:?}", spec.name, have, spec.attr_names());
    match (&spec.body, state) {
        (Body::Flow(l, r), AstdState::Flow { left, right, .. }) => {
            locals_match(engine, l, left)?;
            locals_match(engine, r, right)
        }
        (Body::QFlow { body, .. }, AstdState::QFlow { instances, .. }) => {
            instances.values().try_for_each(|s| locals_match(engine, body, s))
        }
        (Body::QInterleave { body, .. }, AstdState::QInterleave { instances, .. }) => {
            instances.values().try_for_each(|s| locals_match(engine, body, s))
        }
        (Body::Call { callee, .. }, AstdState::Call { inner, .. }) => {
            locals_match(engine, &engine.program().library[callee], inner)
        }
        _ => Ok(()),
    }
}

pub fn theta_partition(cases: usize) -> Check {
    let mut r = rng(12);
    // algebraic side: restriction and subtraction split any environment
    for i in 0..cases {
        let env: Env = (0..r.random_range(0..8))
            .map(|j| (format!("v{}", r.random_range(0..10)), Value::Int(j)))
            .collect();
        let vars: BTreeSet<String> = (0..r.random_range(0..6)).map(|_| format!("v{}", r.random_range(0..12))).collect();
        let (kept, rest) = (env.restrict(&vars), env.subtract(&vars));
        ensure!(kept.names().is_disjoint(&rest.names()), "case {i}: overlap");
        let union: Env = kept.iter().chain(rest.iter()).map(|(k, v)| (k.clone(), v.clone())).collect();
        ensure!(union == env, "case {i}: union differs");
    }
    // operational side: after each accepted step locals stay local and the
    // enclosing environment keeps its domain
    let engine = Engine::new(theta_fixture());
    let mut state = engine.init().map_err(|e| e.to_string())?;
    let mut env: Env = [("ext".to_string(), Value::Int(0))].into_iter().collect();
    let (mut accepted, mut e_steps, mut f_steps) = (0, 0, 0);
    for _ in 0..cases {
        let e = random_theta_event(&mut r);
        if let Ok(StepOutcome::Accepted { state: s, env: en, .. }) = engine.step(&state, &e, &env) {
            locals_match(&engine, &engine.program().root, &s)?;
            ensure!(en.names() == env.names(), "enclosing domain changed: {:?}", en.names());
            state = s;
            env = en;
            accepted += 1;
            // r fires on every integer e(v) that got through
            if e.name == "e" {
                e_steps += 1;
            } else {
                f_steps += 1;
            }
        }
    }
    let get = |s: &AstdState, k: &str| s.env().get(k).and_then(Value::as_int).unwrap_or(-1);
    let AstdState::Flow { left, .. } = &state else { return Err("unexpected root shape".into()) };
    let n_sum: i64 = [1, 2, 3].iter().map(|&d| get(left.instance(&Key::Int(d)).unwrap(), "n")).sum();
    ensure!(get(&state, "total") == n_sum + 100 * e_steps, "total {} != {n_sum} + 100*{e_steps}", get(&state, "total"));
    ensure!(get(&state, "ticks") == accepted, "ticks {} != accepted {accepted}", get(&state, "ticks"));
    ensure!(env.get("ext").and_then(Value::as_int) == Some(f_steps), "ext should count f() steps");
    Ok(format!("{cases} env cases, {accepted} accepted steps"))
}

/// Refused and failing steps leave state and environment untouched.
pub fn refusal_totality(events: usize) -> Check {
    let mut r = rng(13);
    let (mut refused, mut failed, mut ok) = (0, 0, 0);
    for program in [theta_fixture(), per_user_fixture(), commutative_qflow()] {
        let engine = Engine::new(program);
        let mut state = engine.init().map_err(|e| e.to_string())?;
        let mut env: Env = [("ext".to_string(), Value::Int(0))].into_iter().collect();
        for i in 0..events {
            let e = if r.random_bool(0.5) {
                random_theta_event(&mut r)
            } else {
                ev("e", vec![format!("u{}", r.random_range(0..3)).as_str().into(), Value::Int(r.random_range(0..7))])
            };
            let (before_s, before_e) = (state.clone(), env.clone());
            match engine.apply(&mut state, &mut env, &e) {
                Ok(Some(_)) => ok += 1,
                outcome => {
                    if outcome.is_ok() {
                        refused += 1;
                    } else {
                        failed += 1;
                    }
                    ensure!(state == before_s && env == before_e, "event {i} {e:?} changed state on {outcome:?}");
                }
            }
        }
    }
    ensure!(refused > 0 && failed > 0, "fixtures never exercised both paths ({refused} refused, {failed} failed)");
    Ok(format!("{ok} accepted, {refused} refused, {failed} failed"))
}

fn user_event(u: &str, v: i64) -> Event {
    ev("e", vec![u.into(), Value::Int(v)])
}

/// Interleaving other users' events never changes a user's sub-state.
pub fn per_user_isolation(cases: usize) -> Check {
    let mut r = rng(14);
    let users = ["alice", "bob", "carol", "dave"];
    for case in 0..cases {
        let streams: Vec<Vec<Event>> = users
            .iter()
            .map(|u| {
                (0..r.random_range(0..25))
                    .map(|_| {
                        if r.random_bool(0.1) {
                            ev("e", vec![(*u).into(), "bad".into()])
                        } else {
                            user_event(u, r.random_range(-5..10))
                        }
                    })
                    .collect()
            })
            .collect();
        // random merge keeping each user's order
        let mut tags: Vec<usize> = streams.iter().enumerate().flat_map(|(i, s)| std::iter::repeat_n(i, s.len())).collect();
        tags.shuffle(&mut r);
        let mut cursors = vec![0; users.len()];
        let merged: Vec<&Event> = tags
            .iter()
            .map(|&t| {
                cursors[t] += 1;
                &streams[t][cursors[t] - 1]
            })
            .collect();
        let engine = Engine::new(per_user_fixture());
        let run = |events: &mut dyn Iterator<Item = &Event>| -> Result<AstdState, String> {
            let mut s = engine.init().map_err(|e| e.to_string())?;
            let mut env = Env::new();
            for e in events {
                let _ = engine.apply(&mut s, &mut env, e);
            }
            Ok(s)
        };
        let together = run(&mut merged.into_iter())?;
        for (u, stream) in users.iter().zip(&streams) {
            let alone = run(&mut stream.iter())?;
            let key = Key::from(*u);
            ensure!(
                together.instance(&key) == alone.instance(&key),
                "case {case}: user {u} differs when interleaved"
            );
        }
    }
    Ok(format!("{cases} interleavings of {} users", users.len()))
}

fn run_ordered(program: Program, order: Vec<usize>, events: &[Event]) -> Result<(String, Vec<bool>), String> {
    let engine = Engine::new(program).with_qflow_order(move |_, keys| order.iter().map(|&i| keys[i].clone()).collect());
    let mut s = engine.init().map_err(|e| e.to_string())?;
    let mut env = Env::new();
    let mut fired = Vec::new();
    for e in events {
        fired.push(matches!(engine.apply(&mut s, &mut env, e), Ok(Some(_))));
    }
    Ok((engine.dump(&s).map_err(|e| e.to_string())?, fired))
}

/// All 3! iteration orders of a commutative quantified flow agree; an
/// order-sensitive control shows the hook really reorders.
pub fn qflow_permutations(cases: usize) -> Check {
    let mut r = rng(15);
    let orders = permutations(&[0usize, 1, 2]);
    for case in 0..cases {
        let events: Vec<Event> = (0..r.random_range(1..30))
            .map(|_| if r.random_bool(0.1) { ev("x", vec![]) } else { ev("e", vec![Value::Int(r.random_range(0..12))]) })
            .collect();
        let baseline = run_ordered(commutative_qflow(), orders[0].clone(), &events)?;
        for o in &orders[1..] {
            let got = run_ordered(commutative_qflow(), o.clone(), &events)?;
            ensure!(got == baseline, "case {case}: order {o:?} diverged\n{}\nvs\n{}", got.0, baseline.0);
        }
    }
    let probe = [ev("e", vec![Value::Int(1)])];
    let distinct: BTreeSet<String> = orders
        .iter()
        .map(|o| run_ordered(order_sensitive_qflow(), o.clone(), &probe).map(|d| d.0))
        .collect::<Result<_, _>>()?;
    ensure!(distinct.len() == 3, "control produced {} distinct states, expected 3", distinct.len());
    Ok(format!("{cases} streams x {} orders", orders.len()))
}

pub fn call_layers() -> Check {
    let engine = Engine::new(nested_call_fixture());
    let mut s = engine.init().map_err(|e| e.to_string())?;
    let mut env = Env::new();
    engine.apply(&mut s, &mut env, &ev("e", vec![])).map_err(|e| e.to_string())?.ok_or("refused")?;
    let log = s.env().get("log").and_then(|v| v.as_list()).map(|l| l.to_vec()).unwrap_or_default();
    let want: Vec<Value> = [7, 70, 70, 3].into_iter().map(Value::Int).collect();
    ensure!(log == want, "log {log:?}");
    Ok("two call layers".into())
}

pub fn declaration_order() -> Check {
    let engine = Engine::new(two_enabled());
    let mut s = engine.init().map_err(|e| e.to_string())?;
    let mut env = Env::new();
    engine.apply(&mut s, &mut env, &ev("e", vec![])).map_err(|e| e.to_string())?.ok_or("refused")?;
    ensure!(matches!(&s, AstdState::Automaton { current, .. } if current == "A"), "took {s:?}");
    Ok("first declared transition wins".into())
}

// ---------------------------------------------------------------- windows

fn oracle_unit(d: NaiveDate, ty: WindowType) -> i64 {
    let (y, m, dd) = (d.year(), d.month(), d.day());
    match ty {
        WindowType::Day => y as i64 * 1000 + day_of_year(y, m, dd) as i64,
        WindowType::Week => {
            let (wy, w) = iso_week(y, m, dd);
            wy as i64 * 100 + w as i64
        }
        WindowType::Instance => 0,
    }
}

/// Runs the real window over `dates` and reports what each event did.
fn window_trace(ws: u32, ss: u32, ty: WindowType, dates: &[NaiveDateTime]) -> Vec<(WindowStep, Vec<u16>)> {
    let mut w = Window::new(WindowConfig::new(ws, ss, ty).expect("valid window"));
    let mut data = TrainingData::new();
    dates
        .iter()
        .map(|ts| {
            let mut before: BTreeSet<i64> = data.periods().keys().copied().collect();
            let ing = formatting_data(&mut data, &mut w, ts);
            // a late event can open a new oldest period that leaves at once
            if let astd_anomaly::windowing::Ingest::Added { period, .. } = ing {
                before.insert(period);
            }
            let after: BTreeSet<i64> = data.periods().keys().copied().collect();
            let step = WindowStep {
                deleted: before.difference(&after).copied().collect(),
                dropped: matches!(ing, astd_anomaly::windowing::Ingest::Late { .. }),
                version: w.version(),
                buffer_len: data.len(),
                units: w.active_periods().iter().copied().collect(),
            };
            (step, data.training_set())
        })
        .collect()
}

fn monday(k: i64) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2009, 12, 21).unwrap().and_hms_opt(9, 0, 0).unwrap() + Duration::weeks(k)
}

fn literal_traces() -> Result<(), String> {
    // (3,1,week) across 2009-W53, then a late event from an evicted week
    let mut dates: Vec<NaiveDateTime> = (0..6).map(monday).collect();
    dates.push(NaiveDate::from_ymd_opt(2009, 12, 29).unwrap().and_hms_opt(1, 0, 0).unwrap());
    let t = window_trace(3, 1, WindowType::Week, &dates);
    let versions: Vec<i64> = t.iter().map(|s| s.0.version).collect();
    let lens: Vec<usize> = t.iter().map(|s| s.0.buffer_len).collect();
    let deleted: Vec<Vec<i64>> = t.iter().map(|s| s.0.deleted.clone()).collect();
    ensure!(versions == [0, 0, 1, 2, 3, 4, 4], "(3,1,week) versions {versions:?}");
    ensure!(lens == [1, 2, 3, 3, 3, 3, 3], "(3,1,week) lengths {lens:?}");
    let want: Vec<Vec<i64>> = vec![vec![], vec![], vec![], vec![200952], vec![200953], vec![201001], vec![]];
    ensure!(deleted == want, "(3,1,week) deletions {deleted:?}");
    ensure!(t[6].0.dropped && t[6].0.units == [201002, 201003, 201004], "(3,1,week) late event {:?}", t[6].0);

    // (10,5,week): fill at 10, slide at 15, 20, 25, 30
    let t = window_trace(10, 5, WindowType::Week, &(0..30).map(monday).collect::<Vec<_>>());
    for (i, (s, _)) in t.iter().enumerate() {
        let k = i as i64 + 1;
        let version = if k < 10 { 0 } else { 1 + (k - 10) / 5 };
        let len = if k < 15 { k } else { 10 + (k - 15) % 5 };
        ensure!(s.version == version && s.buffer_len as i64 == len, "(10,5,week) event {k}: {s:?}");
        ensure!((k >= 15 && k % 5 == 0) == !s.deleted.is_empty(), "(10,5,week) event {k} deletions {:?}", s.deleted);
        if k >= 15 && k % 5 == 0 {
            ensure!(s.deleted.len() == 5, "(10,5,week) event {k} deleted {:?}", s.deleted);
        }
    }

    // (10,0,week): a single fill, nothing ever leaves
    let t = window_trace(10, 0, WindowType::Week, &(0..40).map(monday).collect::<Vec<_>>());
    for (i, (s, _)) in t.iter().enumerate() {
        let k = i + 1;
        ensure!(s.version == i64::from(k >= 10) && s.buffer_len == k && s.deleted.is_empty(), "(10,0,week) event {k}: {s:?}");
    }

    // (2,1,instance): oldest sample goes first
    let base = NaiveDate::from_ymd_opt(2010, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let dates: Vec<NaiveDateTime> = (1..=5).map(|m| base + Duration::minutes(m)).collect();
    let t = window_trace(2, 1, WindowType::Instance, &dates);
    let versions: Vec<i64> = t.iter().map(|s| s.0.version).collect();
    let lens: Vec<usize> = t.iter().map(|s| s.0.buffer_len).collect();
    ensure!(versions == [0, 1, 2, 3, 4] && lens == [1, 2, 2, 2, 2], "(2,1,instance) {versions:?} {lens:?}");
    ensure!(t[4].1 == [4, 5], "(2,1,instance) kept {:?}", t[4].1);

    // (100,50,instance)
    let dates: Vec<NaiveDateTime> = (0..300).map(|m| base + Duration::minutes(m)).collect();
    let t = window_trace(100, 50, WindowType::Instance, &dates);
    for (i, (s, kept)) in t.iter().enumerate() {
        let k = i as i64 + 1;
        let version = if k < 100 { 0 } else { 1 + (k - 100) / 50 };
        let len = if k < 150 { k } else { 100 + (k - 150) % 50 };
        ensure!(s.version == version && s.buffer_len as i64 == len, "(100,50,instance) event {k}: {s:?}");
        ensure!(kept.last() == Some(&(i as u16)) && kept[0] as i64 == k - len, "(100,50,instance) event {k} kept wrong samples");
    }
    Ok(())
}

/// Period codes agree with the calendar oracle on every day of 1999..=2031.
fn calendar_agrees() -> Result<usize, String> {
    let mut d = NaiveDate::from_ymd_opt(1999, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2031, 12, 31).unwrap();
    let mut n = 0;
    while d <= end {
        let ts = d.and_hms_opt(12, 0, 0).unwrap();
        for ty in [WindowType::Day, WindowType::Week] {
            ensure!(compute_period(&ts, ty) == Some(oracle_unit(d, ty)), "{d} {ty}: {:?}", compute_period(&ts, ty));
        }
        n += 1;
        d = d.succ_opt().unwrap();
    }
    Ok(n)
}

pub const WINDOW_CONFIGS: [(u32, u32, WindowType); 5] = [
    (3, 1, WindowType::Week),
    (10, 5, WindowType::Week),
    (10, 0, WindowType::Week),
    (2, 1, WindowType::Instance),
    (100, 50, WindowType::Instance),
];

/// Random streams with gaps, year boundaries and late arrivals, replayed
/// through the hand simulator.
fn simulated_traces(streams: usize) -> Result<usize, String> {
    let mut r = rng(21);
    let mut events = 0;
    for &(ws, ss, ty) in WINDOW_CONFIGS.iter().chain([(5, 2, WindowType::Day)].iter()) {
        for _ in 0..streams {
            let year = [2004, 2009, 2015, 2020][r.random_range(0..4)];
            let mut now = NaiveDate::from_ymd_opt(year, 11, 1).unwrap().and_hms_opt(8, 0, 0).unwrap();
            let mut dates = Vec::new();
            for _ in 0..400 {
                if r.random_bool(0.08) {
                    dates.push(now - Duration::days(r.random_range(1..90)));
                } else {
                    now += Duration::minutes(r.random_range(0..3 * 24 * 60));
                    dates.push(now);
                }
            }
            let real = window_trace(ws, ss, ty, &dates);
            let mut sim = WindowSim::new(ws as usize, ss as usize, ty == WindowType::Instance);
            for (i, (ts, (got, _))) in dates.iter().zip(&real).enumerate() {
                let want = sim.push(oracle_unit(ts.date(), ty));
                ensure!(*got == want, "({ws},{ss},{ty}) event {i} at {ts}: got {got:?}, want {want:?}");
            }
            events += dates.len();
        }
    }
    Ok(events)
}

pub fn window_oracle(streams: usize) -> Check {
    literal_traces()?;
    let days = calendar_agrees()?;
    let events = simulated_traces(streams)?;
    Ok(format!("literal traces, {days} calendar days, {events} simulated events"))
}

// ---------------------------------------------------------------- detectors

/// Hours drawn from a few bumps, some snapped to whole minutes so that
/// duplicates occur.
pub fn random_hours(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let bumps: Vec<(f64, f64)> =
        (0..r.random_range(1..4)).map(|_| (r.random_range(0.0..24.0), r.random_range(0.05..3.0))).collect();
    let snap = r.random_bool(0.4);
    (0..n)
        .map(|_| {
            let (c, s) = bumps[r.random_range(0..bumps.len())];
            let h = wrap(c + s * (r.random::<f64>() - 0.5) * 2.0);
            if snap {
                wrap((h * 60.0).floor() / 60.0)
            } else {
                h
            }
        })
        .collect()
}

pub fn wrap(h: f64) -> f64 {
    let w = h.rem_euclid(24.0);
    if w >= 24.0 {
        0.0
    } else {
        w
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn lof_equivalence(instances: usize) -> Check {
    let mut r = rng(31);
    let mut compared = 0;
    for i in 0..instances {
        let n = r.random_range(3..=50);
        let hours = random_hours(&mut r, n);
        let k = r.random_range(1..=25);
        let model = LofModel::fit_hours(&hours, 95.0, k).map_err(|e| e.to_string())?;
        let oracle = BruteLof::fit(&hours, k);
        for (j, (a, b)) in model.training_scores.iter().zip(&oracle.scores).enumerate() {
            ensure!(close(*a, *b, 1e-9), "instance {i} (n={n}, k={k}) point {j}: {a} vs {b}");
        }
        let queries: Vec<f64> = (0..10).map(|_| r.random_range(0.0..24.0)).chain(hours.iter().take(3).copied()).collect();
        for q in queries {
            let (a, b) = (model.lof_of(q), oracle.novelty(q));
            ensure!(close(a, b, 1e-9), "instance {i} query {q}: {a} vs {b}");
        }
        compared += n + 13;
    }
    Ok(format!("{instances} instances, {compared} scores within 1e-9"))
}

pub fn kde_normalisation(fits: usize) -> Check {
    let mut r = rng(41);
    let mut worst: f64 = 0.0;
    for i in 0..fits {
        let n = r.random_range(2..=200);
        let hours = random_hours(&mut r, n);
        let p = r.random_range(0.5..10.0);
        let model = KdeModel::fit_hours(&hours, p).map_err(|e| e.to_string())?;
        let integral = integrate_day(|x| model.density(x), 4800);
        worst = worst.max((integral - 1.0).abs());
        ensure!((integral - 1.0).abs() <= 1e-3, "fit {i} (n={n}, h={}): integral {integral}", model.bandwidth);
        // three shifts drop windings beyond one day; negligible below h = 3
        let probes: &[f64] = if model.bandwidth <= 3.0 { &[0.0, 3.3, 12.0, 23.99] } else { &[] };
        for &x in probes {
            let (a, b) = (model.density(x), wrapped_density(&hours, model.bandwidth, x));
            ensure!((a - b).abs() <= 1e-9 * b.max(1e-12), "fit {i}: density at {x} {a} vs {b}");
        }
        let below = hours.iter().filter(|&&h| model.density(h) < model.density_threshold).count();
        let bound = p / 100.0 + 1.0 / n as f64;
        ensure!(below as f64 / n as f64 <= bound, "fit {i}: {below}/{n} below threshold, bound {bound}");
    }
    Ok(format!("{fits} fits, worst |integral - 1| = {worst:.2e}"))
}

pub fn kmeans_rotation(offsets: usize) -> Check {
    let mut r = rng(51);
    let (mut compared, mut borderline) = (0, 0);
    for i in 0..offsets {
        let n = r.random_range(10..150);
        let hours = random_hours(&mut r, n);
        let delta = r.random_range(0.0..24.0);
        let rotated: Vec<f64> = hours.iter().map(|h| wrap(h + delta)).collect();
        let seed = r.random();
        let a = KMeansModel::fit_hours(&hours, 1.5, seed).map_err(|e| e.to_string())?;
        let b = KMeansModel::fit_hours(&rotated, 1.5, seed).map_err(|e| e.to_string())?;
        ensure!(a.clusters.len() == b.clusters.len(), "offset {i}: {} vs {} clusters", a.clusters.len(), b.clusters.len());
        for c in &a.clusters {
            let moved = wrap(c.centroid + delta);
            ensure!(
                b.clusters.iter().any(|d| circ_distance(moved, d.centroid) < 1e-6 && d.size == c.size),
                "offset {i}: centroid {} has no rotated partner",
                c.centroid
            );
        }
        for q in (0..200).map(|_| r.random_range(0.0..24.0)).chain(hours.iter().copied()) {
            let (sa, sb) = (a.score_hour(q), b.score_hour(wrap(q + delta)));
            // a z-score within rounding of the threshold may legitimately flip
            if (sa.raw - a.threshold).abs() < 1e-9 {
                borderline += 1;
                continue;
            }
            ensure!(sa.binary == sb.binary, "offset {i} ({delta}): query {q} z {} vs {}", sa.raw, sb.raw);
            compared += 1;
        }
    }
    Ok(format!("{offsets} offsets, {compared} binary scores equal, {borderline} on the threshold"))
}

pub fn circular_metric(triples: usize) -> Check {
    let mut r = rng(52);
    let special = [0.0, 6.0, 12.0, 18.0, 23.999999, 11.999999];
    for i in 0..triples {
        let mut pick = || if r.random_bool(0.05) { special[r.random_range(0..special.len())] } else { r.random_range(0.0..24.0) };
        let (a, b, c) = (pick(), pick(), pick());
        let (ab, ba, bc, ac) = (circ_distance(a, b), circ_distance(b, a), circ_distance(b, c), circ_distance(a, c));
        ensure!(ab == ba, "triple {i}: asymmetric {a} {b}");
        ensure!(circ_distance(a, a) == 0.0, "triple {i}: d({a},{a}) != 0");
        ensure!((0.0..=12.0).contains(&ab), "triple {i}: d = {ab}");
        ensure!(ac <= ab + bc + 1e-12, "triple {i}: triangle {a} {b} {c}");
        ensure!((ab - clock_gap(a, b)).abs() <= 1e-12, "triple {i}: {ab} vs oracle {}", clock_gap(a, b));
    }
    Ok(format!("{triples} triples"))
}

// ---------------------------------------------------------------- ensemble

pub fn vote_exhaustive(max_n: usize) -> Check {
    let mut vectors = 0;
    for n in 0..=max_n {
        for bits in 0..(1u32 << n) {
            let scores: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
            let mut board: ScoreBoard = scores.iter().copied().collect();
            let mut alerts = Vec::new();
            let got = majority_vote(&mut board, &mut alerts, "e1", "01/04/2010 03:00:00", "U1");
            let want = majority_by_count(&scores);
            ensure!(got.as_ref().map(|a| a.votes) == want, "{scores:?}: got {got:?}, want {want:?}");
            ensure!(alerts.len() == usize::from(want.is_some()), "{scores:?}: {} alerts appended", alerts.len());
            ensure!(board.is_empty(), "{scores:?}: board not cleared");
            vectors += 1;
        }
    }
    Ok(format!("{vectors} score vectors"))
}

// ---------------------------------------------------------------- pipeline

fn small_pipeline() -> PipelineConfig {
    PipelineConfig {
        window_parameters: WindowConfig::new(3, 1, WindowType::Week).unwrap(),
        min_training_instances: 10,
        ..PipelineConfig::default()
    }
}

fn scored_stream(config: &PipelineConfig, events: &[Event]) -> Result<Vec<Option<ScoredEvent>>, String> {
    let mut rt = Runtime::new(config).map_err(|e| e.to_string())?;
    Ok(events.iter().map(|e| rt.process_event(e).ok().and_then(|r| r.scored)).collect())
}

pub fn prequential(streams: usize) -> Check {
    let mut r = rng(71);
    let config = small_pipeline();
    let mut checked = 0;
    for s in 0..streams {
        let cfg = SynthConfig {
            users: 3,
            weeks: 8,
            rate: 0.1,
            seed: s as u64 + 1000,
            injection: Injection::Uniform,
            profile: if s % 2 == 0 { Profile::Office } else { Profile::Drift },
            ..SynthConfig::default()
        };
        let events: Vec<Event> = synthesize(&cfg).map_err(|e| e.to_string())?.iter().map(|e| e.record.to_event()).collect();
        let full = scored_stream(&config, &events)?;
        let scored: Vec<usize> = (0..full.len()).filter(|&i| full[i].is_some()).collect();
        ensure!(!scored.is_empty(), "stream {s}: nothing scored");
        let mut cuts: Vec<usize> = (0..4).map(|_| scored[r.random_range(0..scored.len())]).collect();
        cuts.push(r.random_range(0..events.len()));
        for i in cuts {
            let prefix = scored_stream(&config, &events[..=i])?;
            ensure!(prefix[i] == full[i], "stream {s}, event {i}: {:?} vs {:?}", prefix[i], full[i]);
            checked += 1;
        }
    }
    Ok(format!("{streams} streams, {checked} truncations"))
}

#[derive(Debug, Clone)]
pub struct TrendNumbers {
    pub dr_sliding: f64,
    pub auc_sliding: f64,
    pub auc_growing: f64,
    pub detector_auc: BTreeMap<String, f64>,
}

fn auc_and_dr(scored: &[ScoredEvent], labels: &HashMap<String, u8>, field: ScoreField) -> Result<(f64, f64), String> {
    let rep = evaluate(scored, labels, &field).map_err(|e| e.to_string())?;
    Ok((rep.auc.ok_or("single-class evaluation")?, rep.dr.ok_or("no positives")?))
}

pub fn trend_numbers() -> Result<TrendNumbers, String> {
    let synth = synthesize(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let labels: HashMap<String, u8> = synth.iter().map(|e| (e.record.id.clone(), e.label)).collect();
    let events: Vec<Event> = synth.iter().map(|e| e.record.to_event()).collect();
    let run = |ss: u32| -> Result<Vec<ScoredEvent>, String> {
        let config = PipelineConfig {
            window_parameters: WindowConfig::new(10, ss, WindowType::Week).unwrap(),
            ..PipelineConfig::default()
        };
        Ok(scored_stream(&config, &events)?.into_iter().flatten().collect())
    };
    let sliding = run(5)?;
    let growing = run(0)?;
    let (auc_sliding, dr_sliding) = auc_and_dr(&sliding, &labels, ScoreField::Votes)?;
    let (auc_growing, _) = auc_and_dr(&growing, &labels, ScoreField::Votes)?;
    let mut detector_auc = BTreeMap::new();
    for d in ["kde", "kmeans", "lof"] {
        detector_auc.insert(d.to_string(), auc_and_dr(&sliding, &labels, ScoreField::Detector(d.into()))?.0);
    }
    Ok(TrendNumbers { dr_sliding, auc_sliding, auc_growing, detector_auc })
}

pub fn trend(t: &TrendNumbers) -> Check {
    let min_single = t.detector_auc.values().copied().fold(f64::INFINITY, f64::min);
    let singles = t.detector_auc.iter().map(|(k, v)| format!("{k} {v:.3}")).collect::<Vec<_>>().join(", ");
    let summary = format!(
        "DR {:.3}, AUROC (10,5) {:.3} vs (10,0) {:.3}, singles: {singles}",
        t.dr_sliding, t.auc_sliding, t.auc_growing
    );
    ensure!(t.dr_sliding >= 0.85, "(a) DR below 0.85: {summary}");
    ensure!(t.auc_sliding - t.auc_growing >= 0.05, "(b) gap below 0.05: {summary}");
    ensure!(t.auc_sliding >= min_single, "(c) combined below every detector: {summary}");
    Ok(summary)
}

/// Two identical `run` invocations of the binary write identical files.
pub fn determinism(bin: &std::path::Path) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n);
    let exec = |args: &[&std::ffi::OsStr]| -> Result<(), String> {
        let out = std::process::Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        Ok(())
    };
    let os = |s: &str| std::ffi::OsString::from(s);
    let (log, labels) = (p("logon.csv"), p("labels.csv"));
    exec(&[&os("synth"), &os("--users"), &os("12"), &os("--weeks"), &os("16"), &os("--out"), log.as_os_str(), &os("--labels"), labels.as_os_str()])?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let (alerts, scores) = (p(&format!("alerts_{run}.jsonl")), p(&format!("scores_{run}.jsonl")));
        exec(&[&os("run"), &os("--input"), log.as_os_str(), &os("--alerts-out"), alerts.as_os_str(), &os("--scores-out"), scores.as_os_str()])?;
        let read = |f: &std::path::Path| std::fs::read(f).map_err(|e| e.to_string());
        outputs.push((read(&alerts)?, read(&scores)?));
    }
    ensure!(!outputs[0].0.is_empty() && !outputs[0].1.is_empty(), "run produced empty outputs");
    ensure!(outputs[0].0 == outputs[1].0, "alert files differ");
    ensure!(outputs[0].1 == outputs[1].1, "score files differ");
    Ok(format!("{} alert bytes, {} score bytes identical", outputs[0].0.len(), outputs[0].1.len()))
}
