//! Acceptance battery at full scale: one `[PASS]`/`[FAIL]` line per
//! criterion, with runtime limits where the criterion sets one, then the
//! determinism check through the binary.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use mmlab_core::suite::{run_criterion, Scale, CRITERIA};

const SEED: u64 = 7;

/// Runtime limits in seconds.
fn time_limit(id: usize) -> Option<f64> {
    match id {
        1 => Some(120.0),
        3 => Some(60.0),
        5 => Some(300.0),
        _ => None,
    }
}

/// Written straight to stderr so the lines show with or without capture.
fn line(text: &str) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{text}");
}

fn small_report(dir: &std::path::Path, name: &str) -> Vec<u8> {
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_mmlab"))
        .args(["suite", "acceptance", "--scale", "small", "--seed", &SEED.to_string(), "--out"])
        .arg(&out)
        .output()
        .expect("mmlab runs");
    assert!(matches!(status.status.code(), Some(0) | Some(1)), "suite run errored: {status:?}");
    std::fs::read(out).expect("report written")
}

#[test]
fn acceptance_battery() {
    let mut failed = Vec::new();
    for &(id, name) in CRITERIA.iter() {
        let start = Instant::now();
        let result = run_criterion(id, Scale::Full, SEED);
        let secs = start.elapsed().as_secs_f64();
        let (pass, summary) = match result {
            Ok(r) => (r.pass, r.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = match time_limit(id) {
            Some(limit) => (secs < limit, format!("; runtime {secs:.1} s (limit {limit} s)")),
            None => (true, format!("; runtime {secs:.1} s")),
        };
        let ok = pass && timing.0;
        line(&format!("[{}] {id} {name}: {summary}{}", if ok { "PASS" } else { "FAIL" }, timing.1));
        if !ok {
            failed.push(id);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let a = small_report(dir.path(), "a.json");
    let b = small_report(dir.path(), "b.json");
    let same = a == b;
    line(&format!(
        "[{}] 10 determinism: two `suite acceptance --scale small` reports {} ({} bytes)",
        if same { "PASS" } else { "FAIL" },
        if same { "byte-identical" } else { "differ" },
        a.len()
    ));
    if !same {
        failed.push(10);
    }
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}
