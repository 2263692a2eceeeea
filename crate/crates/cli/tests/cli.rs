use std::process::{Command, Output};

fn semistab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semistab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exclude_ends_with_containment() {
    let o = semistab(&["exclude", "--ell", "3", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().last(), Some("CONTAINED Q(mu_3, 2^(1/3))"));
    assert!(text.lines().all(|l| l.starts_with("STEP ") || l.starts_with("CONTAINED")));
}

#[test]
fn herbrand_example() {
    let o = semistab(&["herbrand", "--orders", "4,2,1", "--eval", "3/2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "5/8\n");
    let o = semistab(&["herbrand", "--orders", "4,2,1", "--eval", "5/8", "--inverse"]);
    assert_eq!(stdout(&o), "3/2\n");
}

#[test]
fn table_rows() {
    let o = semistab(&["table1"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("l=2 p=3 rd<2^2*3^(1/2) ≈ 6.9282 degree-cap=10\n"));
    assert!(text.contains("l=5 p=3 rd<3^(4/5)*5^(5/4) ≈ 18.0057 degree-cap=168"));
}

#[test]
fn bound_with_stage() {
    let o = semistab(&["bound", "--ell", "3", "--p", "5", "--n", "1"]);
    assert_eq!(stdout(&o), "rd<3^(3/2)*5^(2/3) ≈ 15.1936\ndegree-cap=68\n");
}

#[test]
fn exit_codes_separate_usage_from_verification() {
    assert_eq!(semistab(&["table1", "--bogus"]).status.code(), Some(2));
    assert_eq!(semistab(&["exclude", "--ell", "2", "--p", "5"]).status.code(), Some(2));
    assert_eq!(semistab(&["theorem42", "--p", "11"]).status.code(), Some(2));
    assert_eq!(semistab(&["prop43", "--p", "2"]).status.code(), Some(2));
    let o = semistab(&["exclude", "--ell", "5", "--p", "3", "--disable", "order-two-quotient"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).lines().last(), Some("STUCK |H| = 30"));
    assert_eq!(semistab(&["exclude", "--ell", "3", "--p", "2", "--disable", "nope"]).status.code(), Some(2));
}

#[test]
fn gates() {
    for (p, ell) in [(2, 3), (3, 2), (5, 3), (7, 2)] {
        let o = semistab(&["theorem42", "--p", &p.to_string()]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(stdout(&o).lines().last().unwrap(), format!("NONEXISTENT p={p} l={ell}"));
    }
    assert_eq!(stdout(&semistab(&["prop43", "--p", "11"])).lines().last(), Some("NONEXISTENT"));
    assert_eq!(stdout(&semistab(&["prop43", "--p", "17"])).lines().last(), Some("NO-OBSTRUCTION"));
}

#[test]
fn symplectic_counts() {
    let o = semistab(&["symplectic", "--q", "3", "--n", "2", "--count-only"]);
    assert_eq!(stdout(&o), "count=40 formula=40\n");
    let o = semistab(&["symplectic", "--q", "2", "--n", "1"]);
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn randomized_commands_are_deterministic() {
    let tower = ["tower", "--ell", "3", "--t", "2", "--a", "1", "--steps", "5", "--seed", "9"];
    let a = semistab(&tower);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, semistab(&tower).stdout);
    let fuzz = ["lemma24-fuzz", "--iters", "60", "--seed", "3"];
    let a = semistab(&fuzz);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, semistab(&fuzz).stdout);
    assert_eq!(stdout(&a).lines().last(), Some("OK"));
}

#[test]
fn trace_files() {
    let dir = std::env::temp_dir().join(format!("semistab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (txt, json) = (dir.join("t.txt"), dir.join("t.json"));
    let o = semistab(&[
        "exclude",
        "--ell",
        "3",
        "--p",
        "5",
        "--out",
        txt.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&o), "CONTAINED Q(mu_3, 5^(1/3))\n");
    let text = std::fs::read_to_string(&txt).unwrap();
    assert!(text.contains("3^(7/6)*5^(2/3)"));
    let trace = semistab::exclusion::ProofTrace::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(trace.to_text() + "CONTAINED Q(mu_3, 5^(1/3))\n", text);
    std::fs::remove_dir_all(&dir).unwrap();
}
