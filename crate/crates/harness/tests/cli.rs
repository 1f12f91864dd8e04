use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ot_harness::instances::test_image;
use ot_harness::ppm::PpmImage;

fn ot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ot"))
        .args(args)
        .env_remove("OT_THREADS")
        .output()
        .expect("binary runs")
}

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo_solve(method: &str, extra: &[&str]) -> Output {
    let (mu, nu, cost) = (data("demo2x2/mu.txt"), data("demo2x2/nu.txt"), data("demo2x2/cost.txt"));
    let mut args = vec!["solve", "--method", method, "--mu", &mu, "--nu", &nu, "--cost", &cost];
    args.extend_from_slice(extra);
    ot(&args)
}

#[test]
fn exact_demo_prints_distance_one() {
    let out = demo_solve("exact", &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("distance 1\n"), "{text}");
    assert!(text.contains("status tolerance_met"), "{text}");
}

#[test]
fn single_point_instance() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.txt");
    let (mu, nu, cost) = (data("single/mu.txt"), data("single/nu.txt"), data("single/cost.txt"));
    let out = ot(&["solve", "--method", "ipot", "--mu", &mu, "--nu", &nu, "--cost", &cost, "--out-plan", path_str(&plan)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&plan).unwrap(), "1\n");
}

#[test]
fn usage_errors_exit_one() {
    let mu = data("demo2x2/mu.txt");
    let out = ot(&["solve", "--method", "exact", "--mu", &mu, "--nu", &mu]);
    assert_eq!(out.status.code(), Some(1));
    let out = ot(&["solve", "--method", "exact", "--mu", "/nonexistent", "--nu", &mu, "--cost", &mu]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent"));
    assert_eq!(ot(&["--help"]).status.code(), Some(0));
}

#[test]
fn iteration_budget_exhausted_exits_two() {
    let out = demo_solve("ipot", &["--max-iters", "1", "--check-every", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("status max_iters"));
}

#[test]
fn trace_ends_on_reported_distance() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = demo_solve("sinkhorn", &["--eps", "0.5", "--out-trace", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    let distance = stdout(&out).lines().next().unwrap().strip_prefix("distance ").unwrap().to_string();
    let mut reader = csv::Reader::from_path(&trace).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["iter", "cost", "marginal_violation", "wall_time_s", "effective_eps"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let iters: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(iters.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(&rows.last().unwrap()[1], distance.as_str());
}

#[test]
fn no_timing_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let plan: PathBuf = dir.path().join(format!("plan_{tag}.txt"));
        let trace: PathBuf = dir.path().join(format!("trace_{tag}.csv"));
        let out = demo_solve(
            "ipot",
            &["--beta", "0.5", "--out-plan", path_str(&plan), "--out-trace", path_str(&trace), "--no-timing"],
        );
        (out.stdout, fs::read(&plan).unwrap(), fs::read(&trace).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn color_transfer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.ppm");
    let out = dir.path().join("out.ppm");
    let image = test_image(5, 16);
    image.write(&src).unwrap();
    // read → write is byte-identical
    let copy = dir.path().join("copy.ppm");
    PpmImage::read(&src).unwrap().write(&copy).unwrap();
    assert_eq!(fs::read(&src).unwrap(), fs::read(&copy).unwrap());

    for method in ["exact", "ipot"] {
        let o = ot(&["color-transfer", "--src", path_str(&src), "--ref", path_str(&src), "--out", path_str(&out), "--method", method]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(fs::read(&out).unwrap(), fs::read(&src).unwrap(), "{method}");
    }
}

#[test]
fn bad_ppm_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ppm");
    fs::write(&bad, b"P3\n1 1\n255\n0 0 0\n").unwrap();
    let o = ot(&["color-transfer", "--src", path_str(&bad), "--ref", path_str(&bad), "--out", path_str(&dir.path().join("o.ppm"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn barycenter_writes_grids() {
    let dir = tempfile::tempdir().unwrap();
    let o = ot(&["barycenter", "--k", "2", "--side", "8", "--iters", "20", "--out-dir", path_str(dir.path()), "--no-timing"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("method,entropy,seconds\n"));
    let grid = fs::read_to_string(dir.path().join("q_ipot_wb.txt")).unwrap();
    assert_eq!(grid.lines().count(), 8);
    let mass: f64 = grid.split_whitespace().map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn gradcheck_reports_small_errors() {
    let o = ot(&["gradcheck", "--instances", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("instances 3\n"));
}

#[test]
fn thread_setting_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_ot"))
        .args(["gradcheck", "--instances", "1"])
        .env("OT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
