use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn umspace(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_umspace"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    // the binary may exit before reading
    let _ = child.stdin.take().unwrap().write_all(stdin.as_bytes());
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn truncate_caps_the_pair_distance() {
    let o = umspace(&["truncate", "--h", "1"], r#"{"height":5,"children":[{"mass":1},{"mass":2}]}"#);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "{\"children\":[{\"mass\":1},{\"mass\":2}],\"height\":2}\n");
}

#[test]
fn decompose_three_singletons() {
    let o = umspace(
        &["decompose", "--h", "1"],
        r#"{"height":2,"children":[{"mass":1},{"mass":1},{"mass":0.5}]}"#,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "{\"mass\":0.5}\n{\"mass\":1}\n{\"mass\":1}\n");
}

#[test]
fn count_and_trunk() {
    let doc = r#"{"height":4,"children":[{"mass":1},{"height":1,"children":[{"mass":1},{"mass":2}]}]}"#;
    assert_eq!(stdout(&umspace(&["count", "--h", "1"], doc)), "2\n");
    assert_eq!(stdout(&umspace(&["count", "--h", "0.25"], doc)), "3\n");
    let o = umspace(&["trunk", "--h", "1"], doc);
    assert_eq!(stdout(&o), "{\"children\":[{\"mass\":1},{\"mass\":3}],\"height\":2}\n");
}

#[test]
fn fragmentation_path_csv() {
    let o = umspace(&["fragmentation-path"], r#"{"height":3,"children":[{"mass":1},{"mass":2}]}"#);
    assert_eq!(stdout(&o), "h_low,h_high,count,mass_1,mass_2\n0,1.5,2,2,1\n1.5,inf,1,3,\n");
}

#[test]
fn concat_files() {
    let a = scratch("concat_a.json");
    let b = scratch("concat_b.json");
    fs::write(&a, r#"{"mass":1}"#).unwrap();
    fs::write(&b, r#"{"height":1,"children":[{"mass":1},{"mass":1}]}"#).unwrap();
    let o = umspace(&["concat", "--h", "1", a.to_str().unwrap(), b.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "{\"children\":[{\"mass\":1},{\"children\":[{\"mass\":1},{\"mass\":1}],\"height\":1}],\"height\":2}\n"
    );
}

#[test]
fn eval_exact_and_monte_carlo() {
    let doc = r#"{"height":3,"children":[{"mass":1},{"mass":2}]}"#;
    let o = umspace(&["eval", "--phi", "sum", "--order", "2"], doc);
    assert_eq!(stdout(&o), "{\"mean\":12.0,\"n\":1,\"stderr\":0.0}\n");
    let o = umspace(&["eval", "--phi", "one", "--order", "2", "--samples", "100", "--seed", "3"], doc);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"mean\":9.0"));
}

#[test]
fn marked_documents_keep_their_mark_space() {
    let doc = r#"{"mark_space":{"alphabet":["a","b"],"neutral":"a"},"tree":{"height":5,"children":[{"mass":1,"mark":"a"},{"mass":2,"mark":"b"}]}}"#;
    let o = umspace(&["truncate", "--h", "1"], doc);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("\"mark_space\""));
    assert!(out.contains("\"height\":2"));
    let bad = r#"{"mark_space":{"alphabet":["a"]},"tree":{"mass":1,"mark":"z"}}"#;
    assert_eq!(umspace(&["canon"], bad).status.code(), Some(2));
}

#[test]
fn validation_failures_exit_2() {
    let o = umspace(&["validate"], r#"{"height":1,"children":[{"mass":-1},{"mass":1}]}"#);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("negative mass"));
    assert_eq!(umspace(&["canon"], "{not json").status.code(), Some(2));
    // a unary node is repaired, not rejected
    let o = umspace(&["validate"], r#"{"height":1,"children":[{"mass":1}]}"#);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"canonical\":false"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(umspace(&["frobnicate"], "").status.code(), Some(64));
    assert_eq!(umspace(&["truncate", "--bogus"], "").status.code(), Some(64));
    assert_eq!(umspace(&["truncate", "--h", "-1"], r#"{"mass":1}"#).status.code(), Some(64));
    assert_eq!(umspace(&["--help"], "").status.code(), Some(0));
}

#[test]
fn verify_lk_reference_run_passes() {
    let o = umspace(&["verify-lk", "--theta", "2", "--samples", "100000", "--seed", "7"], "");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r["pass"], true);
        assert!(r["z"].as_f64().unwrap().abs() <= 3.0);
    }
    assert_eq!(report["seed"], 7);
    assert_eq!(report["config"]["theta"], "2");
}

#[test]
fn reports_are_byte_identical_across_reruns() {
    let a = scratch("report_a.json");
    let b = scratch("report_b.json");
    for p in [&a, &b] {
        let o = umspace(
            &["verify-star-mass", "--samples", "2000", "--seed", "11", "--workers", "2", "--out", p.to_str().unwrap()],
            "",
        );
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(!fs::read_to_string(&a).unwrap().contains("wall"));
}

#[test]
fn failed_experiment_exits_3() {
    let o = umspace(&["verify-star-mass", "--samples", "1000", "--sigma", "0.000001", "--format", "csv"], "");
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).starts_with("statistic,estimate,stderr,oracle,z,pass\n"));
}

#[test]
fn samplers_emit_batches() {
    let o = umspace(&["sample-cpf", "--theta", "2", "--samples", "5", "--seed", "1"], "");
    assert_eq!(stdout(&o).lines().count(), 5);
    let o = umspace(&["gw", "--atoms", "4", "--mass", "0.25", "--time", "0.5", "--samples", "3"], "");
    assert_eq!(o.status.code(), Some(0));
    let batch = stdout(&o);
    assert_eq!(batch.lines().count(), 3);
    let o = umspace(&["laplace", "--phi", "one"], &batch);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"n\":3"));
}
