//! Running the external solver with a wall-clock limit.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use super::sexp::{parse_all, Sexp};
use super::{Mode, Model, ModelValue, SmtScript, SolverConfig, SolverError, SolverVerdict};

static DUMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Feed `text` to the solver. Returns `None` on timeout.
pub fn run_text(text: &str, name: &str, cfg: &SolverConfig) -> Result<Option<String>, SolverError> {
    if let Some(dir) = &cfg.keep_smt {
        std::fs::create_dir_all(dir)?;
        let k = DUMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        std::fs::write(dir.join(format!("{k:04}_{name}.smt2")), text)?;
    }
    let mut child = Command::new(&cfg.path)
        .args(&cfg.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| SolverError::Spawn {
            path: cfg.path.display().to_string(),
            source,
        })?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = text.to_string();
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(input.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });

    let deadline = Instant::now() + cfg.timeout;
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if Instant::now() >= deadline {
            // Grandchildren may keep the pipes open, so the helper threads
            // are left to finish on their own.
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
        thread::sleep(Duration::from_millis(2));
    }
    let _ = writer.join();
    let out = reader
        .join()
        .map_err(|_| SolverError::Malformed("reader thread panicked".into()))?;
    Ok(Some(out))
}

/// First error message in a response, if any.
pub(crate) fn solver_error(items: &[Sexp]) -> Option<String> {
    items.iter().find_map(|s| {
        if s.head() == Some("error") {
            let msg = s
                .as_list()?
                .get(1)?
                .as_atom()?
                .trim_matches('"')
                .to_string();
            // Asking for a model after unsat is expected to fail.
            if msg.contains("model is not available") {
                None
            } else {
                Some(msg)
            }
        } else {
            None
        }
    })
}

pub(crate) fn parse_model(items: &[Sexp], names: &[(String, String)]) -> Model {
    let mut model = Model::new();
    let Some(pairs) = items.iter().rev().find_map(|s| {
        let xs = s.as_list()?;
        let ok = !xs.is_empty() && xs.iter().all(|p| p.as_list().is_some_and(|l| l.len() == 2));
        ok.then_some(xs)
    }) else {
        return model;
    };
    for ((name, _), pair) in names.iter().zip(pairs) {
        let v = &pair.as_list().expect("checked above")[1];
        let value = match (v.to_rational(), v.as_atom()) {
            (Some(r), _) => ModelValue::Num(r),
            (None, Some("true")) => ModelValue::Bool(true),
            (None, Some("false")) => ModelValue::Bool(false),
            _ => ModelValue::Other(v.to_string()),
        };
        model.insert(name.clone(), value);
    }
    model
}

/// Run a script and interpret the answer according to its mode.
pub fn run(script: &SmtScript, cfg: &SolverConfig) -> Result<SolverVerdict, SolverError> {
    if let Some(u) = &script.unsupported {
        return Ok(SolverVerdict::Unknown(format!("no SMT encoding for `{u}`")));
    }
    let Some(out) = run_text(&script.text, &script.name, cfg)? else {
        return Ok(SolverVerdict::Timeout);
    };
    let items = parse_all(&out).map_err(|e| SolverError::Malformed(e.to_string()))?;
    let status = items.iter().find_map(|s| match s.as_atom() {
        Some(a @ ("sat" | "unsat" | "unknown")) => Some(a),
        _ => None,
    });
    let Some(status) = status else {
        return match solver_error(&items) {
            Some(e) => Ok(SolverVerdict::Unknown(e)),
            None => Err(SolverError::Malformed(out)),
        };
    };
    if let Some(e) = solver_error(&items) {
        return Ok(SolverVerdict::Unknown(e));
    }
    let validity = script.mode == Mode::Validity;
    Ok(match status {
        "unsat" if validity => SolverVerdict::Valid,
        "unsat" => SolverVerdict::Unsat,
        "sat" => {
            let model = parse_model(&items, &script.values);
            if validity {
                SolverVerdict::Invalid(model)
            } else {
                SolverVerdict::Sat(model)
            }
        }
        _ => SolverVerdict::Unknown("solver answered unknown".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn sh(script: &str, timeout_ms: u64) -> SolverConfig {
        SolverConfig {
            path: PathBuf::from("sh"),
            args: vec!["-c".into(), script.into()],
            timeout: Duration::from_millis(timeout_ms),
            ..SolverConfig::default()
        }
    }

    fn script(mode: Mode, values: &[&str]) -> SmtScript {
        SmtScript {
            name: "t".into(),
            mode,
            text: String::new(),
            values: values
                .iter()
                .map(|v| (v.to_string(), format!("|{v}|")))
                .collect(),
            unsupported: None,
        }
    }

    #[test]
    fn unsat_is_valid() {
        let cfg = sh("cat >/dev/null; echo unsat; echo '(error \"line 9 column 10: model is not available\")'", 5000);
        assert_eq!(
            run(&script(Mode::Validity, &["x"]), &cfg).unwrap(),
            SolverVerdict::Valid
        );
    }

    #[test]
    fn sat_with_model() {
        let cfg = sh(
            "cat >/dev/null; echo sat; echo '((|x| (- 1.5)) (|b| true))'",
            5000,
        );
        let v = run(&script(Mode::Satisfiability, &["x", "b"]), &cfg).unwrap();
        let SolverVerdict::Sat(m) = v else {
            panic!("{v:?}")
        };
        assert_eq!(m["x"], ModelValue::Num(crate::ast::rat_frac(-3, 2)));
        assert_eq!(m["b"], ModelValue::Bool(true));
    }

    #[test]
    fn killed_at_timeout() {
        let cfg = sh("sleep 5", 100);
        let start = Instant::now();
        assert_eq!(
            run(&script(Mode::Validity, &[]), &cfg).unwrap(),
            SolverVerdict::Timeout
        );
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn spawn_failure_and_garbage() {
        let cfg = SolverConfig {
            path: PathBuf::from("/nonexistent/solver"),
            ..SolverConfig::default()
        };
        assert!(matches!(
            run(&script(Mode::Validity, &[]), &cfg),
            Err(SolverError::Spawn { .. })
        ));
        let cfg = sh("cat >/dev/null; echo 'hello ('", 5000);
        assert!(matches!(
            run(&script(Mode::Validity, &[]), &cfg),
            Err(SolverError::Malformed(_))
        ));
    }

    #[test]
    fn unsupported_short_circuits() {
        let mut s = script(Mode::Validity, &[]);
        s.unsupported = Some("log(x)".into());
        let cfg = sh("exit 1", 100);
        assert!(matches!(run(&s, &cfg).unwrap(), SolverVerdict::Unknown(_)));
    }
}
