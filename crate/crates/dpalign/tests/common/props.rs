//! Corpus loading, input and tape strategies, and the per-case checks shared
//! by the property suites and the acceptance run.

use std::sync::OnceLock;

use dpalign::ast::{Program, TypingEnv};
use dpalign::infer::infer_program;
use dpalign::interp::{
    check_precondition, eval, execute_source, execute_target, init_memory, replay_check, Memory,
    TapeDraws, Value, STEP_LIMIT,
};
use dpalign::parser::parse_program;
use dpalign::target::TargetProgram;
use proptest::prelude::*;

pub struct Loaded {
    pub program: Program,
    pub env: TypingEnv,
    pub target: TargetProgram,
}

pub fn load(name: &str) -> Loaded {
    let path = format!("{}/../../corpus/{name}.ldp", env!("CARGO_MANIFEST_DIR"));
    let program = parse_program(&std::fs::read_to_string(path).unwrap()).unwrap();
    let inf = infer_program(&program).unwrap();
    Loaded {
        program,
        env: inf.env,
        target: inf.check.target,
    }
}

macro_rules! corpus {
    ($name:ident, $file:literal) => {
        pub fn $name() -> &'static Loaded {
            static CELL: OnceLock<Loaded> = OnceLock::new();
            CELL.get_or_init(|| load($file))
        }
    };
}

corpus!(sv, "sparsevector");
corpus!(nsv, "numsparsevector");
corpus!(ps, "partialsum");
corpus!(ss, "smartsum");
corpus!(pb, "privbernoulli");
corpus!(ls, "laplace_sign");

pub fn num(x: f64) -> Value {
    Value::Num(x)
}

pub fn list(xs: &[f64]) -> Value {
    Value::List(xs.iter().copied().map(Value::Num).collect())
}

pub fn mem(items: Vec<(&str, Value)>) -> Memory {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub const LEN: usize = 6;

pub fn eps() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.0), Just(2.0)]
}

pub fn queries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-5i32..=5).prop_map(f64::from), LEN)
}

/// Inputs where every query may move by at most one.
pub fn sparse_vector_inputs() -> impl Strategy<Value = Memory> {
    (
        -3i32..=5,
        1i32..=2,
        eps(),
        queries(),
        prop::collection::vec(-1.0f64..=1.0, LEN),
    )
        .prop_map(|(t, n, e, q, d)| {
            mem(vec![
                ("T", num(t.into())),
                ("N", num(n.into())),
                ("eps", num(e)),
                ("q", list(&q)),
                ("^q", list(&d)),
            ])
        })
}

/// A companion list that is zero except at one position.
pub fn one_difference(bound: f64) -> impl Strategy<Value = Vec<f64>> {
    (0..LEN, -bound..=bound).prop_map(|(k, d)| {
        let mut v = vec![0.0; LEN];
        v[k] = d;
        v
    })
}

pub fn partial_sum_inputs() -> impl Strategy<Value = Memory> {
    (eps(), 0.5f64..3.0, queries()).prop_flat_map(|(e, b, q)| {
        one_difference(b).prop_map(move |d| {
            mem(vec![
                ("eps", num(e)),
                ("b", num(b)),
                ("size", num(LEN as f64)),
                ("q", list(&q)),
                ("^q", list(&d)),
            ])
        })
    })
}

pub fn smart_sum_inputs() -> impl Strategy<Value = Memory> {
    (eps(), 1i32..=3, 0..LEN, queries(), one_difference(1.0)).prop_map(|(e, m, t, q, d)| {
        mem(vec![
            ("eps", num(e)),
            ("M", num(m.into())),
            ("T", num(t as f64)),
            ("q", list(&q)),
            ("^q", list(&d)),
        ])
    })
}

pub fn bernoulli_inputs() -> impl Strategy<Value = Memory> {
    (0.05f64..=1.0, 0.0f64..=1.0).prop_map(|(t, u)| mem(vec![("t", num(t)), ("^t", num(u - t))]))
}

pub fn laplace_sign_inputs() -> impl Strategy<Value = Memory> {
    (eps(), -5.0f64..5.0, -1.0f64..=1.0)
        .prop_map(|(e, x, d)| mem(vec![("eps", num(e)), ("x", num(x)), ("^x", num(d))]))
}

pub fn laplace_tape() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 2 * LEN + 2)
}

pub fn unit_tape() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 1)
}

/// Source and target agree on output (or on the error) and on every source
/// variable.
pub fn faithful(l: &Loaded, m: &Memory, tape: &[f64]) -> Result<(), TestCaseError> {
    let start = init_memory(&l.program, m).unwrap();
    prop_assume!(check_precondition(&l.program, &start).unwrap());
    let s = execute_source(
        &l.program,
        &start,
        &mut TapeDraws::new(tape),
        None,
        STEP_LIMIT,
    )
    .unwrap();
    let (t, tm) = execute_target(&l.target, &start, tape, STEP_LIMIT);
    match (&s.outcome, &t) {
        (Ok(a), Ok(b)) => prop_assert!(a.close_to(b), "outputs {a} vs {b}"),
        (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
        (a, b) => prop_assert!(false, "outcomes {a:?} vs {b:?}"),
    }
    for x in l.program.base_types().keys() {
        let (a, b) = (&s.memory[x], &tm[x]);
        prop_assert!(a.close_to(b), "`{x}`: {a} vs {b}");
    }
    Ok(())
}

/// Every completed target run of a verified program stays within budget.
pub fn within_budget(l: &Loaded, m: &Memory, tape: &[f64]) -> Result<(), TestCaseError> {
    let start = init_memory(&l.program, m).unwrap();
    prop_assume!(check_precondition(&l.program, &start).unwrap());
    let budget = eval(l.program.budget.as_ref().unwrap(), &start)
        .unwrap()
        .as_num()
        .unwrap();
    let (outcome, tm) = execute_target(&l.target, &start, tape, STEP_LIMIT);
    if outcome.is_ok() {
        let v = tm["v_eps"].as_num().unwrap();
        prop_assert!(v <= budget + 1e-9, "v_eps = {v} > {budget}");
    }
    Ok(())
}

/// The second input of an adjacent pair: parameters shifted by their hats.
pub fn shifted(m: &Memory) -> (Memory, Memory) {
    let mut m1 = Memory::new();
    let mut m2 = Memory::new();
    for (k, v) in m.iter().filter(|(k, _)| !k.starts_with('^')) {
        m1.insert(k.clone(), v.clone());
        let moved = match (v, m.get(&format!("^{k}"))) {
            (Value::Num(x), Some(Value::Num(d))) => Value::Num(x + d),
            (Value::List(xs), Some(Value::List(ds))) => Value::List(
                xs.iter()
                    .zip(ds)
                    .map(|(x, d)| Value::Num(x.as_num().unwrap() + d.as_num().unwrap()))
                    .collect(),
            ),
            (v, _) => v.clone(),
        };
        m2.insert(k.clone(), moved);
    }
    (m1, m2)
}

pub fn replays_cleanly(l: &Loaded, m: &Memory, seed: u64) -> Result<(), TestCaseError> {
    let start = init_memory(&l.program, m).unwrap();
    prop_assume!(check_precondition(&l.program, &start).unwrap());
    let (m1, m2) = shifted(m);
    let r = replay_check(&l.program, &l.env, &l.target, &m1, &m2, 50, seed).unwrap();
    prop_assert_eq!(r.failed, 0, "{:?}", r.violations);
    Ok(())
}
