use dpalign::ast::{Program, TypingEnv};
use dpalign::checker::check_program;
use dpalign::infer::{infer_program, Inference};
use dpalign::interp::{
    align_tape, estimate_privacy, init_memory, paired_memory, replay_check, run_source, run_target,
    Memory, PrivacyVerdict, TapeDraws, Value, STEP_LIMIT,
};
use dpalign::parser::parse_program;

fn source(name: &str) -> String {
    let path = format!("{}/../../corpus/{name}.ldp", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

fn load(name: &str) -> (Program, Inference) {
    let p = parse_program(&source(name)).unwrap();
    let inf = infer_program(&p).unwrap();
    (p, inf)
}

fn num(x: f64) -> Value {
    Value::Num(x)
}

fn nums(xs: &[f64]) -> Value {
    Value::List(xs.iter().copied().map(Value::Num).collect())
}

fn bools(xs: &[bool]) -> Value {
    Value::List(xs.iter().copied().map(Value::Bool).collect())
}

fn mem(items: &[(&str, Value)]) -> Memory {
    items
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn sv_inputs(eps: f64, q: &[f64]) -> Memory {
    mem(&[
        ("T", num(4.0)),
        ("N", num(1.0)),
        ("eps", num(eps)),
        ("q", nums(q)),
    ])
}

#[test]
fn sparse_vector_worked_example() {
    let (p, inf) = load("sparsevector");
    let m1 = sv_inputs(0.8, &[2.0, 3.0, 5.0]);
    let m2 = sv_inputs(0.8, &[3.0, 3.0, 4.0]);
    let start = paired_memory(&p, &inf.env, &m1, &m2).unwrap();
    assert_eq!(start["^q"], nums(&[1.0, 0.0, -1.0]));

    let tape = [1.0, 2.0, 0.0, 0.0];
    let run = run_source(
        &p,
        &start,
        &mut TapeDraws::new(&tape),
        Some(&inf.env),
        STEP_LIMIT,
    )
    .unwrap();
    // Lists grow at the head, so the chronological answers (false, false,
    // true) read back to front.
    assert_eq!(run.output, bools(&[true, false, false]));
    assert_eq!(align_tape(&run.trace).unwrap(), vec![2.0, 2.0, 0.0, 2.0]);
    let cost: f64 = run.trace.iter().filter_map(|d| d.cost).sum();
    assert!((cost - 0.8).abs() < 1e-12);

    let aligned = align_tape(&run.trace).unwrap();
    let run2 = run_source(&p, &m2, &mut TapeDraws::new(&aligned), None, STEP_LIMIT).unwrap();
    assert_eq!(run2.output, run.output);

    let t = run_target(&inf.check.target, &start, &tape, STEP_LIMIT).unwrap();
    assert_eq!(t.output, run.output);
    assert!((t.v_eps - 0.8).abs() < 1e-12, "v_eps = {}", t.v_eps);
}

#[test]
fn partial_sum_examples() {
    let (p, inf) = load("partialsum");
    let m = mem(&[
        ("eps", num(1.0)),
        ("b", num(1.0)),
        ("size", num(3.0)),
        ("q", nums(&[1.0, 2.0, 3.0])),
        ("^q", nums(&[1.0, 0.0, 0.0])),
    ]);
    let run = run_source(
        &p,
        &m,
        &mut TapeDraws::new(&[0.0]),
        Some(&inf.env),
        STEP_LIMIT,
    )
    .unwrap();
    assert_eq!(run.output, num(6.0));
    assert_eq!(run.memory["^sum"], num(1.0));
    // The noise cancels the distance of the sum.
    assert_eq!(align_tape(&run.trace).unwrap(), vec![-1.0]);

    for eps in [1.0, 0.25] {
        let mut m = init_memory(&p, &m).unwrap();
        m.insert("eps".into(), num(eps));
        let t = run_target(&inf.check.target, &m, &[0.0], STEP_LIMIT).unwrap();
        assert!((t.v_eps - eps).abs() < 1e-12);
    }
}

fn replay(name: &str, env: &TypingEnv, m1: &Memory, m2: &Memory) -> dpalign::interp::ReplayReport {
    let p = parse_program(&source(name)).unwrap();
    let tp = dpalign::checker::transform(&p, env).target;
    let r = replay_check(&p, env, &tp, m1, m2, 1000, 7).unwrap();
    eprintln!(
        "{name}: {} of {} trials failed, max cost {}",
        r.failed, r.trials, r.max_cost
    );
    for v in &r.violations {
        eprintln!("  trial {} {}: {}", v.trial, v.kind, v.detail);
    }
    r
}

#[test]
fn verified_programs_replay_cleanly() {
    let (_, sv) = load("sparsevector");
    let r = replay(
        "sparsevector",
        &sv.env,
        &sv_inputs(1.0, &[2.0, 3.0, 5.0]),
        &sv_inputs(1.0, &[3.0, 3.0, 4.0]),
    );
    assert_eq!(r.failed, 0);

    let (_, nsv) = load("numsparsevector");
    let r = replay(
        "numsparsevector",
        &nsv.env,
        &sv_inputs(1.0, &[2.0, 3.0, 5.0, 1.0]),
        &sv_inputs(1.0, &[3.0, 3.0, 4.0, 1.5]),
    );
    assert_eq!(r.failed, 0);

    let (_, ps) = load("partialsum");
    let ps_in = |q: &[f64]| {
        mem(&[
            ("eps", num(0.5)),
            ("b", num(2.0)),
            ("size", num(4.0)),
            ("q", nums(q)),
        ])
    };
    let r = replay(
        "partialsum",
        &ps.env,
        &ps_in(&[1.0, 2.0, 3.0, 4.0]),
        &ps_in(&[1.0, 0.5, 3.0, 4.0]),
    );
    assert_eq!(r.failed, 0);

    let (_, ss) = load("smartsum");
    let ss_in = |q: &[f64]| {
        mem(&[
            ("eps", num(0.5)),
            ("M", num(2.0)),
            ("T", num(4.0)),
            ("q", nums(q)),
        ])
    };
    let r = replay(
        "smartsum",
        &ss.env,
        &ss_in(&[1.0, 0.0, 2.0, 1.0, 1.0]),
        &ss_in(&[1.0, 0.0, 2.0, 0.0, 1.0]),
    );
    assert_eq!(r.failed, 0);
}

#[test]
fn buggy_variant_with_threshold_alignment_diverges() {
    // Align the released noise the way Sparse Vector does. The aligned run
    // then releases a different number.
    let text = source("sparsevector_buggy").replace(
        "tT, eta1: num[1];",
        "tT, eta1: num[1]; eta2: num[q[i] + eta2 >= tT ? 2 : 0]; qt: num[0];",
    );
    let p = parse_program(&text).unwrap();
    let env = TypingEnv::from_annotations(&p);
    let tp = check_program(&p).target;
    let m1 = sv_inputs(1.0, &[2.0, 3.0, 5.0]);
    let m2 = sv_inputs(1.0, &[3.0, 3.0, 4.0]);

    // By hand: threshold 4 + 1 = 5; the first query 2 + 3 = 5 answers, so
    // the aligned run releases 3 + 5 = 8 instead of 5.
    let start = paired_memory(&p, &env, &m1, &m2).unwrap();
    let run = run_source(
        &p,
        &start,
        &mut TapeDraws::new(&[1.0, 3.0]),
        Some(&env),
        STEP_LIMIT,
    )
    .unwrap();
    assert_eq!(run.output, nums(&[5.0]));
    let aligned = align_tape(&run.trace).unwrap();
    let run2 = run_source(&p, &m2, &mut TapeDraws::new(&aligned), None, STEP_LIMIT).unwrap();
    assert_eq!(run2.output, nums(&[8.0]));

    let r = replay_check(&p, &env, &tp, &m1, &m2, 1000, 3).unwrap();
    assert!(r.failed > 0);
    assert!(r.violations.iter().any(|v| v.kind == "output"));
}

#[test]
fn replays_are_deterministic() {
    let (p, sv) = load("sparsevector");
    let m1 = sv_inputs(1.0, &[2.0, 3.0, 5.0]);
    let m2 = sv_inputs(1.0, &[3.0, 3.0, 4.0]);
    let a = replay_check(&p, &sv.env, &sv.check.target, &m1, &m2, 200, 11).unwrap();
    let b = replay_check(&p, &sv.env, &sv.check.target, &m1, &m2, 200, 11).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );

    let x = estimate_privacy(&p, &m1, &m2, 1.0, 500, 5).unwrap();
    let y = estimate_privacy(&p, &m1, &m2, 1.0, 500, 5).unwrap();
    assert_eq!(
        serde_json::to_string(&x).unwrap(),
        serde_json::to_string(&y).unwrap()
    );
}

#[test]
fn identical_inputs_are_consistent() {
    let (p, _) = load("sparsevector");
    let m = sv_inputs(0.5, &[2.0, 3.0, 5.0]);
    let r = estimate_privacy(&p, &m, &m, 0.0, 20_000, 1).unwrap();
    assert_eq!(r.verdict, PrivacyVerdict::Consistent);
    for o in &r.outcomes {
        assert!((o.ratio.ln()).abs() < 0.2, "{o:?}");
    }
}

#[test]
fn numeric_outputs_are_rejected_by_the_estimator() {
    let (p, _) = load("partialsum");
    let m = mem(&[
        ("eps", num(1.0)),
        ("b", num(1.0)),
        ("size", num(1.0)),
        ("q", nums(&[1.0])),
    ]);
    assert!(estimate_privacy(&p, &m, &m, 1.0, 10, 1).is_err());
}

#[test]
fn missing_draws_and_bad_inputs() {
    let (p, inf) = load("sparsevector");
    let m = sv_inputs(1.0, &[2.0, 3.0, 5.0]);
    assert!(run_source(&p, &m, &mut TapeDraws::new(&[1.0]), None, STEP_LIMIT).is_err());
    // q differs by 2 in one position, outside the precondition.
    let far = sv_inputs(1.0, &[4.0, 3.0, 5.0]);
    assert!(replay_check(&p, &inf.env, &inf.check.target, &m, &far, 10, 1).is_err());
}
