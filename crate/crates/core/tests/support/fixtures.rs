//! Small operator trees exercising the interpreter.

use std::collections::{BTreeMap, BTreeSet};

use astd_anomaly::engine::{
    Action, ActionError, AstdSpec, Automaton, Body, CaptureType, Domain, Event, EventPattern, Expr,
    Guard, Init, Key, Program, Slot, Transition, Value,
};
use rand::Rng;

pub fn ev(name: &str, args: Vec<Value>) -> Event {
    Event::new(name, args)
}

pub fn pat(name: &str, slots: Vec<Slot>) -> EventPattern {
    EventPattern::new(name, slots)
}

pub fn cap(var: &str, ty: CaptureType) -> Slot {
    Slot::Capture(var.into(), ty)
}

pub fn int(ctx: &astd_anomaly::engine::ActionCtx<'_>, name: &str) -> Result<i64, ActionError> {
    ctx.require(name)?.as_int().ok_or_else(|| ActionError::new(format!("`{name}` is not an int")))
}

pub fn add(ctx: &mut astd_anomaly::engine::ActionCtx<'_>, name: &str, by: i64) -> Result<(), ActionError> {
    let v = int(ctx, name)?;
    ctx.set(name, Value::Int(v + by))
}

/// One-state loop on `e()` incrementing attribute `c`.
pub fn counter(name: &str) -> AstdSpec {
    AstdSpec::automaton(
        name,
        Automaton::single_loop("S0", pat("e", vec![]), None, Some(Action::new(|ctx| add(ctx, "c", 1)))),
    )
    .with_attr("c", Init::Const(Value::Int(0)))
}

pub fn automaton_with(states: &[&str], initial: &str, finals: &[&str], transitions: Vec<Transition>) -> Automaton {
    Automaton {
        states: states.iter().map(|s| s.to_string()).collect(),
        initial: initial.into(),
        finals: finals.iter().map(|s| s.to_string()).collect(),
        transitions,
    }
}

pub fn transition(source: &str, pattern: EventPattern, action: Option<Action>, target: &str) -> Transition {
    Transition { source: source.into(), pattern, guard: None, action, target: target.into() }
}

/// Random well-formed tree and the library its calls refer to.
pub struct RandomTree {
    pub program: Program,
    next_id: usize,
}

fn random_leaf(rng: &mut impl Rng, id: usize) -> AstdSpec {
    let finals: Vec<&str> = match rng.random_range(0..3) {
        0 => vec!["S0"],
        1 => vec!["S1"],
        _ => vec!["S0", "S1"],
    };
    let t = vec![
        transition("S0", pat("a", vec![]), None, "S1"),
        transition("S1", pat("b", vec![]), None, "S0"),
    ];
    AstdSpec::automaton(format!("leaf{id}"), automaton_with(&["S0", "S1"], "S0", &finals, t))
        .with_attr(format!("v{id}"), Init::Const(Value::Int(id as i64)))
}

impl RandomTree {
    pub fn generate(rng: &mut impl Rng) -> Self {
        let mut t = RandomTree { program: Program::new(counter("tmp")).unwrap(), next_id: 0 };
        let lib: Vec<AstdSpec> = (0..2)
            .map(|i| {
                let body = t.node(rng, 2, false);
                AstdSpec::new(format!("lib{i}"), body.body).with_params([format!("p{i}")])
            })
            .collect();
        let root = t.node(rng, 3, true);
        t.program = Program::with_library(root, lib).expect("generated tree is well formed");
        t
    }

    fn node(&mut self, rng: &mut impl Rng, depth: u32, calls: bool) -> AstdSpec {
        self.next_id += 1;
        let id = self.next_id;
        if depth == 0 {
            return random_leaf(rng, id);
        }
        match rng.random_range(0..if calls { 6 } else { 5 }) {
            0 => random_leaf(rng, id),
            1 => AstdSpec::flow(format!("flow{id}"), self.node(rng, depth - 1, calls), self.node(rng, depth - 1, calls)),
            2 => {
                let domain: Vec<Key> = (0..rng.random_range(0..4)).map(Key::Int).collect();
                AstdSpec::qflow(format!("qf{id}"), format!("x{id}"), domain, self.node(rng, depth - 1, calls))
            }
            3 => {
                let body = self.node(rng, depth - 1, calls);
                AstdSpec::qinterleave(format!("qi{id}"), format!("x{id}"), Domain::Unbounded, body)
            }
            4 => {
                let domain: BTreeSet<Key> = (0..rng.random_range(1..3)).map(Key::Int).collect();
                let body = self.node(rng, depth - 1, calls);
                AstdSpec::qinterleave(format!("qi{id}"), format!("x{id}"), Domain::Finite(domain), body)
            }
            _ => {
                let which = rng.random_range(0..2);
                AstdSpec::call(
                    format!("call{id}"),
                    format!("lib{which}"),
                    vec![(format!("p{which}"), Expr::Const(Value::Int(id as i64)))],
                )
            }
        }
    }
}

/// Whether `init` should be final, read straight off the tree.
pub fn expected_initially_final(program: &Program, spec: &AstdSpec) -> bool {
    match &spec.body {
        Body::Automaton(a) => a.finals.contains(&a.initial),
        Body::Flow(l, r) => expected_initially_final(program, l) && expected_initially_final(program, r),
        Body::QFlow { domain, body, .. } => domain.is_empty() || expected_initially_final(program, body),
        Body::QInterleave { domain: Domain::Unbounded, .. } => true,
        Body::QInterleave { domain: Domain::Finite(d), body, .. } => {
            d.is_empty() || expected_initially_final(program, body)
        }
        Body::Call { callee, .. } => expected_initially_final(program, &program.library[callee]),
    }
}

/// Attribute layout per node, for partition checks.
///
/// ```text
/// top flow [total]                      action: ticks += 1
/// ├─ q qflow d ∈ {1,2,3} [qsum]
/// │  └─ inc automaton [n]   e(?v:int) when v % d == 0: n += 1; qsum += d*v; total += 1
/// └─ r automaton [m]        e(?v:int): m += v; total += 100 (fails on v == 5)
///                           f(): ext += 1
/// ```
pub fn theta_fixture() -> Program {
    let inc = AstdSpec::automaton(
        "inc",
        Automaton::single_loop(
            "S0",
            pat("e", vec![cap("v", CaptureType::Int)]),
            Some(Guard::new(|s| {
                let v = s.require("v")?.as_int().unwrap_or(0);
                let d = s.require("d")?.as_int().unwrap_or(1);
                Ok(v % d == 0)
            })),
            Some(Action::new(|ctx| {
                let v = int(ctx, "v")?;
                let d = int(ctx, "d")?;
                add(ctx, "n", 1)?;
                add(ctx, "qsum", d * v)?;
                add(ctx, "total", 1)
            })),
        ),
    )
    .with_attr("n", Init::Const(Value::Int(0)));
    let q = AstdSpec::qflow("q", "d", [1, 2, 3].map(Key::Int), inc).with_attr("qsum", Init::Const(Value::Int(0)));
    let r = AstdSpec::automaton(
        "r",
        automaton_with(
            &["S0"],
            "S0",
            &["S0"],
            vec![
                transition(
                    "S0",
                    pat("e", vec![cap("v", CaptureType::Int)]),
                    Some(Action::new(|ctx| {
                        let v = int(ctx, "v")?;
                        if v == 5 {
                            return Err(ActionError::new("five is not allowed"));
                        }
                        add(ctx, "m", v)?;
                        add(ctx, "total", 100)
                    })),
                    "S0",
                ),
                transition("S0", pat("f", vec![]), Some(Action::new(|ctx| add(ctx, "ext", 1))), "S0"),
            ],
        ),
    )
    .with_attr("m", Init::Const(Value::Int(0)));
    let top = AstdSpec::flow("top", q, r)
        .with_attr("total", Init::Const(Value::Int(0)))
        .with_attr("ticks", Init::Const(Value::Int(0)))
        .with_action(Action::new(|ctx| add(ctx, "ticks", 1)));
    Program::new(top).unwrap()
}

pub fn random_theta_event(rng: &mut impl Rng) -> Event {
    match rng.random_range(0..10) {
        0 => ev("f", vec![]),
        1 => ev("g", vec![]),
        2 => ev("e", vec!["seven".into()]),
        3 => ev("e", vec![]),
        _ => ev("e", vec![Value::Int(rng.random_range(0..7))]),
    }
}

/// Per-user history under an unbounded interleave:
/// `users ||| u : flow [count] (hist automaton [seen], tally automaton [sum])`.
pub fn per_user_fixture() -> Program {
    let hist = AstdSpec::automaton(
        "hist",
        Automaton::single_loop(
            "S0",
            pat("e", vec![Slot::Bound(Expr::var("u")), cap("v", CaptureType::Int)]),
            None,
            Some(Action::new(|ctx| {
                let v = ctx.require("v")?.clone();
                let mut seen = ctx.require("seen")?.as_list().unwrap_or_default().to_vec();
                seen.push(v);
                ctx.set("seen", Value::List(seen))?;
                add(ctx, "count", 1)
            })),
        ),
    )
    .with_attr("seen", Init::Const(Value::List(vec![])));
    let tally = AstdSpec::automaton(
        "tally",
        Automaton::single_loop(
            "S0",
            pat("e", vec![Slot::Bound(Expr::var("u")), cap("v", CaptureType::Int)]),
            Some(Guard::new(|s| Ok(s.require("v")?.as_int().unwrap_or(0) % 2 == 0))),
            Some(Action::new(|ctx| {
                let v = int(ctx, "v")?;
                add(ctx, "sum", v)
            })),
        ),
    )
    .with_attr("sum", Init::Const(Value::Int(0)));
    let body = AstdSpec::flow("perUser", hist, tally).with_attr("count", Init::Const(Value::Int(0)));
    Program::new(AstdSpec::qinterleave("users", "u", Domain::Unbounded, body)).unwrap()
}

/// `q` ranges over {"a","b","c"}; each instance counts its hits, adds its
/// weight to a shared accumulator and records the last value it saw in a
/// shared map under its own key. All three writes commute across instances.
pub fn commutative_qflow() -> Program {
    let body = AstdSpec::automaton(
        "inst",
        Automaton::single_loop(
            "S0",
            pat("e", vec![cap("v", CaptureType::Int)]),
            Some(Guard::new(|s| {
                let d = s.require("d")?.as_text().unwrap_or("");
                let v = s.require("v")?.as_int().unwrap_or(0);
                Ok(!(d == "b" && v % 3 == 0))
            })),
            Some(Action::new(|ctx| {
                let d = ctx.require_text("d")?.to_string();
                let v = int(ctx, "v")?;
                let weight = match d.as_str() {
                    "a" => 1,
                    "b" => 10,
                    _ => 100,
                };
                add(ctx, "hits", 1)?;
                add(ctx, "acc", weight * v)?;
                let mut seen: BTreeMap<String, Value> = ctx.require("seen")?.as_map().cloned().unwrap_or_default();
                seen.insert(d, Value::Int(v));
                ctx.set("seen", Value::Map(seen))
            })),
        ),
    )
    .with_attr("hits", Init::Const(Value::Int(0)));
    let q = AstdSpec::qflow("q", "d", ["a", "b", "c"].map(Key::from), body)
        .with_attr("acc", Init::Const(Value::Int(0)))
        .with_attr("seen", Init::Const(Value::Map(BTreeMap::new())));
    Program::new(q).unwrap()
}

/// Same shape as [`commutative_qflow`] but every instance overwrites a shared
/// `last`, so the result depends on iteration order.
pub fn order_sensitive_qflow() -> Program {
    let body = AstdSpec::automaton(
        "inst",
        Automaton::single_loop(
            "S0",
            pat("e", vec![cap("v", CaptureType::Int)]),
            None,
            Some(Action::new(|ctx| {
                let d = ctx.require("d")?.clone();
                ctx.set("last", d)
            })),
        ),
    );
    let q = AstdSpec::qflow("q", "d", ["a", "b", "c"].map(Key::from), body)
        .with_attr("last", Init::Const(Value::text("")));
    Program::new(q).unwrap()
}

/// `root [x, log] -> Call midSpec(y = 70) [k] -> Call leafSpec(z = y)`; the
/// leaf action copies every visible layer into `log` and checks that both
/// parameters are read-only.
pub fn nested_call_fixture() -> Program {
    let leaf = Automaton::single_loop(
        "S0",
        pat("e", vec![]),
        None,
        Some(Action::new(|ctx| {
            let layers = ["x", "y", "z", "k"].map(|n| ctx.require(n).cloned());
            let layers: Result<Vec<Value>, _> = layers.into_iter().collect();
            ctx.set("log", Value::List(layers?))?;
            for p in ["y", "z"] {
                if ctx.set(p, Value::Int(0)).is_ok() {
                    return Err(ActionError::new(format!("parameter {p} was writable")));
                }
            }
            Ok(())
        })),
    );
    let leaf_lib = AstdSpec::automaton("leafSpec", leaf).with_params(["z"]);
    let mid_lib = AstdSpec::call("midSpec", "leafSpec", vec![("z".into(), Expr::var("y"))])
        .with_params(["y"])
        .with_attr("k", Init::Const(Value::Int(3)));
    let root = AstdSpec::call("root", "midSpec", vec![("y".into(), Expr::Const(Value::Int(70)))])
        .with_attr("x", Init::Const(Value::Int(7)))
        .with_attr("log", Init::Const(Value::List(vec![])));
    Program::with_library(root, vec![mid_lib, leaf_lib]).unwrap()
}

/// Two enabled transitions from S0 on `e()`; the first declared goes to A.
pub fn two_enabled() -> Program {
    let a = automaton_with(
        &["S0", "A", "B"],
        "S0",
        &["A", "B"],
        vec![
            transition("S0", pat("e", vec![]), None, "A"),
            transition("S0", pat("e", vec![]), None, "B"),
        ],
    );
    Program::new(AstdSpec::automaton("pick", a)).unwrap()
}

pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// A single office worker: `weeks` weeks of weekday logons spread over
/// 08:00-17:00, four a day, ids `N0001..`. Dates use the default format.
pub fn nine_to_five(user: &str, weeks: i64) -> Vec<astd_anomaly::cli::LogRecord> {
    use chrono::{Duration, NaiveDate};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(95);
    let start = NaiveDate::from_ymd_opt(2010, 1, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut out = Vec::new();
    for day in (0..weeks * 7).filter(|d| d % 7 < 5) {
        let mut minutes: Vec<i64> = (0..4).map(|_| rng.random_range(8 * 60..17 * 60)).collect();
        minutes.sort();
        for m in minutes {
            out.push(log_record(user, start + Duration::days(day) + Duration::minutes(m), out.len() + 1));
        }
    }
    out
}

pub fn log_record(user: &str, at: chrono::NaiveDateTime, n: usize) -> astd_anomaly::cli::LogRecord {
    astd_anomaly::cli::LogRecord {
        id: format!("N{n:04}"),
        date: at.format(astd_anomaly::windowing::DEFAULT_DATE_FORMAT).to_string(),
        user: user.into(),
        pc: "PC-0001".into(),
        activity: "Logon".into(),
    }
}
