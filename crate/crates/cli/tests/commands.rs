use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coarse-embed"))
        .args(args)
        .current_dir(dir)
        .env("COARSE_EMBED_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Value printed after `key ` on its own line.
fn field(out: &Output, key: &str) -> String {
    let text = stdout(out);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

fn number(out: &Output, key: &str) -> f64 {
    field(out, key).split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn gen_writes_space_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "binary_tree:3", "-o", "t3.space"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("t3.space")).unwrap();
    assert!(text.starts_with("space 15\n"), "{text}");
    assert_eq!(number(&out, "n"), 15.0);

    let out = run(&["gen", "cycle:6", "-o", "spaces"], dir.path());
    assert!(out.status.success());
    assert_eq!(field(&out, "diameter"), "3");
    assert!(dir.path().join("spaces/cycle_6.space").is_file());
}

#[test]
fn gen_laakso_counts_follow_the_recursion() {
    let dir = tempfile::tempdir().unwrap();
    for level in 0..=3u32 {
        let out = run(&["gen", &format!("laakso:{level}")], dir.path());
        assert!(out.status.success());
        // every edge becomes six edges and four new vertices
        let edges = 6u64.pow(level);
        let vertices = 2 + 4 * (edges - 1) / 5;
        assert_eq!(number(&out, "edges"), edges as f64);
        assert_eq!(number(&out, "n"), vertices as f64);
    }
}

#[test]
fn gen_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "cycle:2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle"));
}

#[test]
fn embed_path_passes_its_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["embed", "path:16", "--family", "doubling", "-p", "2", "--rate", "0.5,0", "-o", "e"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(field(&out, "audit disjoint_support").starts_with("pass"));
    assert!(field(&out, "audit lipschitz").starts_with("pass"));
    let csv = std::fs::read_to_string(dir.path().join("e/profiles.csv")).unwrap();
    assert!(csv.starts_with("t,rho,delta,theta\n"));
}

#[test]
fn embed_with_zero_rate_is_the_zero_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["embed", "path:16", "--rate", "0,inf", "-o", "e"], dir.path());
    assert!(out.status.success());
    assert!(field(&out, "empirical_rate").contains("need at least"));
    let csv = std::fs::read_to_string(dir.path().join("e/profiles.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(1), Some("0"), "{line}");
    }
}

#[test]
fn embed_converted_subexp_family_on_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["embed", "cycle:64", "--family", "subexp", "-p", "2", "-o", "e"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
}

#[test]
fn embed_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&["embed", "laakso:2", "-p", "3", "-o", "a"], dir.path());
    let b = run(&["embed", "laakso:2", "-p", "3", "-o", "b"], dir.path());
    assert_eq!(a.stdout, b.stdout);
    for f in ["profiles.csv", "embedding.txt"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn certify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["certify", "binary_tree:4", "--kind", "tree-cp", "-p", "2", "-o", "c"], dir.path());
    assert!(out.status.success());
    assert!(number(&out, "lower_bound") > 1.0);
    assert!(dir.path().join("c/certificate.txt").is_file());
    assert!(dir.path().join("c/constraint.csv").is_file());

    let out = run(&["certify", "complete:2", "--kind", "expander", "-o", "c"], dir.path());
    assert!(out.status.success());
    assert!((number(&out, "J") - 1.0).abs() < 1e-12);

    std::fs::write(dir.path().join("m.txt"), "measures r=1\nP\n0 1 0.5\n1 2 0.5\nQ\n0 1 0.5\n1 2 0.5\n").unwrap();
    let out = run(&["certify", "path:3", "--kind", "custom", "--measures", "m.txt", "-o", "c"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((number(&out, "J") - 1.0).abs() < 1e-12);
}

#[test]
fn certificates_round_trip_through_custom_measures() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&["certify", "cycle:8", "--kind", "diametral", "-o", "a"], dir.path());
    assert!(first.status.success());
    let again = run(
        &["certify", "cycle:8", "--kind", "custom", "--measures", "a/certificate.txt", "-o", "b"],
        dir.path(),
    );
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert!((number(&first, "J") - number(&again, "J")).abs() < 1e-9);
}

#[test]
fn bracket_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bracket", "cycle:4", "-p", "2", "-o", "b"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(field(&out, "verdict"), "consistent");
    let s2 = 2f64.sqrt();
    assert!((number(&out, "certificate_lower") - s2).abs() < 1e-9);
    assert!(number(&out, "construction_upper") >= s2 - 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("b/bracket.csv")).unwrap();
    assert!(csv.starts_with("space,p,lower,upper,method\n"));

    let out = run(&["bracket", "path:8", "-o", "b"], dir.path());
    assert!(out.status.success());
    assert_eq!(number(&out, "certificate_lower"), 1.0);
    assert!((number(&out, "numeric_upper") - 1.0).abs() < 1e-6);
    let exact = field(&out, "exact_c2");
    let ends: Vec<f64> = exact.trim_matches(['[', ']']).split(", ").map(|v| v.parse().unwrap()).collect();
    assert!(ends.iter().all(|v| (v - 1.0).abs() < 1e-3), "{exact}");
}

#[test]
fn profile_reports_normalized_scales() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["profile", "cycle:32", "--scales", "1,2,4,8", "-o", "p"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("n,J,lipschitz,saturated\n"));
    assert_eq!(text.lines().count(), 5);

    let out = run(&["profile", "cycle:32", "--scales", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_checks_are_listed_and_exit_nonzero() {
    // A cycle on a line is badly distorted, so the one-dimensional search
    // lands above the dyadic construction and the sandwich breaks.
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bracket", "cycle:6", "--dim", "1", "--restarts", "1", "-o", "f"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("FAIL,sandwich,")), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("f/failures.csv")).unwrap();
    assert!(csv.starts_with("check,detail\nsandwich,"));
}
