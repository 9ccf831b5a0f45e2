//! End-to-end CLI tests: each invocation spawns its own service instance, so
//! these also exercise the full client/service path over loopback HTTP.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ahrs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ahrs"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = ahrs().args(args).env_remove("AHRS_SEED").output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed with {:?}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ahrs-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn simulate_row_count_and_byte_determinism() {
    let a = tmp("det-a.csv");
    let b = tmp("det-b.csv");
    run_ok(&[
        "simulate",
        "--case",
        "1",
        "--duration",
        "30",
        "--dt",
        "0.005",
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--case",
        "1",
        "--duration",
        "30",
        "--dt",
        "0.005",
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]);
    let ta = read(&a);
    assert_eq!(ta.lines().count(), 6002, "header + 6001 rows");
    assert!(ta.starts_with("t,wx,wy,wz,ax,ay,az,mx,my,mz,qw,qx,qy,qz,bwx,bwy,bwz\n"));
    assert_eq!(ta, read(&b), "same seed twice must be byte-identical");
}

#[test]
fn seed_env_override_and_flag_precedence() {
    let base = tmp("seed-base.csv");
    let env = tmp("seed-env.csv");
    let flag = tmp("seed-flag.csv");
    run_ok(&[
        "simulate",
        "--case",
        "1",
        "--duration",
        "1",
        "--seed",
        "5",
        "--out",
        base.to_str().unwrap(),
    ]);
    // AHRS_SEED picks a different stream.
    let out = ahrs()
        .args([
            "simulate",
            "--case",
            "1",
            "--duration",
            "1",
            "--out",
            env.to_str().unwrap(),
        ])
        .env("AHRS_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(read(&base), read(&env));
    // The flag wins over the environment.
    let out = ahrs()
        .args([
            "simulate",
            "--case",
            "1",
            "--duration",
            "1",
            "--seed",
            "5",
            "--out",
            flag.to_str().unwrap(),
        ])
        .env("AHRS_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read(&base), read(&flag));
}

#[test]
fn tune_report_round_trips_into_run() {
    let json = tmp("gains.json");
    let out = run_ok(&[
        "tune",
        "--mask-preset",
        "selective-yaw",
        "--omega-max",
        "1.0472",
        "--json",
        json.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("a1 = "));
    assert!(text.contains("residual = "));
    assert!(text.contains("p1(omega_max=1.0472)"));

    let log = tmp("tune-log.csv");
    run_ok(&[
        "simulate",
        "--case",
        "1",
        "--duration",
        "2",
        "--seed",
        "3",
        "--out",
        log.to_str().unwrap(),
    ]);
    let est = tmp("tune-est.csv");
    run_ok(&[
        "run",
        "--filter",
        "rincf",
        "--log",
        log.to_str().unwrap(),
        "--gains-file",
        json.to_str().unwrap(),
        "--out",
        est.to_str().unwrap(),
    ]);
    let est_text = read(&est);
    assert!(est_text.starts_with("t,qw,qx,qy,qz,roll,pitch,yaw,"));
    assert_eq!(est_text.lines().count(), 402);
}

#[test]
fn run_writes_gain_trace_and_is_deterministic() {
    let log = tmp("run-log.csv");
    run_ok(&[
        "simulate",
        "--case",
        "2",
        "--duration",
        "2",
        "--seed",
        "11",
        "--out",
        log.to_str().unwrap(),
    ]);
    let est1 = tmp("run-est1.csv");
    let est2 = tmp("run-est2.csv");
    let trace = tmp("run-trace.csv");
    run_ok(&[
        "run",
        "--filter",
        "riekf-star",
        "--log",
        log.to_str().unwrap(),
        "--out",
        est1.to_str().unwrap(),
        "--gain-trace",
        trace.to_str().unwrap(),
        "--trace-every",
        "10",
    ]);
    run_ok(&[
        "run",
        "--filter",
        "riekf-star",
        "--log",
        log.to_str().unwrap(),
        "--out",
        est2.to_str().unwrap(),
    ]);
    assert_eq!(
        read(&est1),
        read(&est2),
        "identical inputs, identical estimates"
    );
    let trace_text = read(&trace);
    assert!(trace_text.starts_with("t,k11,k12"));
    assert_eq!(trace_text.lines().count(), 1 + 41); // 401 samples, every 10th
}

#[test]
fn compare_is_deterministic_without_timing() {
    let log = tmp("cmp-log.csv");
    run_ok(&[
        "simulate",
        "--case",
        "1",
        "--duration",
        "3",
        "--seed",
        "21",
        "--out",
        log.to_str().unwrap(),
    ]);
    let a = tmp("cmp-a.csv");
    let b = tmp("cmp-b.csv");
    run_ok(&[
        "compare",
        "--filters",
        "rincf,riekf-star,wab",
        "--log",
        log.to_str().unwrap(),
        "--no-timing",
        "--out",
        a.to_str().unwrap(),
    ]);
    run_ok(&[
        "compare",
        "--filters",
        "rincf,riekf-star,wab",
        "--log",
        log.to_str().unwrap(),
        "--no-timing",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a).lines().count(), 4);
}

#[test]
fn compare_with_timing_reports_step_cost() {
    let log = tmp("cmp-t-log.csv");
    run_ok(&[
        "simulate",
        "--case",
        "1",
        "--duration",
        "5",
        "--seed",
        "2",
        "--out",
        log.to_str().unwrap(),
    ]);
    let out_path = tmp("cmp-t.csv");
    let out = run_ok(&[
        "compare",
        "--filters",
        "rincf,wab",
        "--log",
        log.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("step_us"));
    assert!(read(&out_path).starts_with("filter,"));
    assert!(read(&out_path).contains("median_step_us"));
}

#[test]
fn exit_code_2_on_malformed_log() {
    let log = tmp("bad-log.csv");
    std::fs::write(
        &log,
        "t,wx,wy,wz,ax,ay,az,mx,my,mz\n0,0,0,0,0,0,-9.81,1,0,0\n0.01,0,0,0,0,0,-9.81,1,0,0\n0.005,0,0,0,0,0,-9.81,1,0,0\n",
    )
    .unwrap();
    let est = tmp("bad-est.csv");
    let out = ahrs()
        .args([
            "run",
            "--filter",
            "rincf",
            "--log",
            log.to_str().unwrap(),
            "--out",
            est.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 4"), "stderr: {stderr}");
}

#[test]
fn exit_code_2_on_bad_config_and_bad_filter() {
    let cfg = tmp("bad.cfg");
    std::fs::write(&cfg, "nonsense = 1\n").unwrap();
    let out = ahrs()
        .args(["--config", cfg.to_str().unwrap(), "tune"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);

    let log = tmp("filter-log.csv");
    std::fs::write(
        &log,
        "t,wx,wy,wz,ax,ay,az,mx,my,mz\n0,0,0,0,0,0,-9.81,1,0,0\n",
    )
    .unwrap();
    let out = ahrs()
        .args([
            "run",
            "--filter",
            "nope",
            "--log",
            log.to_str().unwrap(),
            "--out",
            tmp("x.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);

    let out = ahrs()
        .args([
            "compare",
            "--filters",
            "rincf",
            "--log",
            log.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn exit_code_3_on_numerical_failure() {
    let log = tmp("overflow-log.csv");
    std::fs::write(
        &log,
        format!(
            "t,wx,wy,wz,ax,ay,az,mx,my,mz\n0,0,0,0,0,0,-9.81,1,0,0\n0.005,{big},{big},0,0,0,-9.81,1,0,0\n",
            big = 1e308
        ),
    )
    .unwrap();
    let out = ahrs()
        .args([
            "run",
            "--filter",
            "rincf",
            "--log",
            log.to_str().unwrap(),
            "--out",
            tmp("overflow-est.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("t = 0.005"), "stderr: {stderr}");
}

#[test]
fn config_file_drives_simulation_and_run() {
    let cfg = tmp("drive.cfg");
    std::fs::write(
        &cfg,
        "q = 0.1\nr = 0.3,0.3,0.3,0.5,0.5,0.5\ng_e = 0,0,9.81\nb_e = 9.81,0,0\ndt = 0.01\nduration = 2\nseed = 4\ncase = 3\nfilter = rincf2\nomega_max = 5.236\n",
    )
    .unwrap();
    let log = tmp("drive-log.csv");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        log.to_str().unwrap(),
    ]);
    assert_eq!(read(&log).lines().count(), 202);
    let est = tmp("drive-est.csv");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "run",
        "--log",
        log.to_str().unwrap(),
        "--out",
        est.to_str().unwrap(),
    ]);
    assert_eq!(read(&est).lines().count(), 202);
}

#[test]
fn perfect_init_round_trip_stays_near_truth() {
    // Noiseless config end to end through the CLI: simulate then run with
    // perfect init; the estimate must stay at the sampled-data floor.
    let cfg = tmp("clean.cfg");
    std::fs::write(&cfg, "q = 0\nr = 1e-12\ndt = 0.005\n").unwrap();
    let log = tmp("clean-log.csv");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--case",
        "1",
        "--duration",
        "5",
        "--seed",
        "1",
        "--out",
        log.to_str().unwrap(),
    ]);
    let est = tmp("clean-est.csv");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "run",
        "--filter",
        "rincf",
        "--log",
        log.to_str().unwrap(),
        "--perfect-init",
        "--out",
        est.to_str().unwrap(),
    ]);

    // Compare estimate quaternions against the truth columns row by row.
    let log_text = read(&log);
    let est_text = read(&est);
    let mut worst: f64 = 0.0;
    for (lrow, erow) in log_text.lines().skip(1).zip(est_text.lines().skip(1)) {
        let lf: Vec<f64> = lrow.split(',').map(|v| v.parse().unwrap()).collect();
        let ef: Vec<f64> = erow.split(',').map(|v| v.parse().unwrap()).collect();
        let (tw, tx, ty, tz) = (lf[10], lf[11], lf[12], lf[13]);
        let (ew, ex, ey, ez) = (ef[1], ef[2], ef[3], ef[4]);
        // Angle between the two attitudes via the inner product.
        let dot = (tw * ew + tx * ex + ty * ey + tz * ez).abs().min(1.0);
        worst = worst.max(2.0 * dot.acos());
    }
    assert!(worst < 1e-2, "worst attitude error {worst} rad");
}

#[test]
fn exit_code_1_on_unreachable_server() {
    let out = ahrs()
        .args(["--server", "http://127.0.0.1:9", "selftest"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn selftest_passes_and_prints_named_checks() {
    let out = run_ok(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS dare-scalar-oracle"));
    assert!(text.contains("PASS output-error-right-invariance"));
    assert!(text.contains("checks passed"));
    assert!(!text.contains("FAIL"));
}
