use std::path::Path;
use std::process::{Command, Output};

use sync_sim::experiment::{SUMMARY_HEADER, SWEEP_HEADER, TRACE_HEADER};
use sync_sim::RunConfig;

fn sync_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sync-sim"))
        .args(args)
        .output()
        .expect("spawn sync-sim")
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> String {
    let p = dir.join(name);
    std::fs::write(&p, cfg.to_toml()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn quick() -> RunConfig {
    RunConfig {
        duration_s: 1.0,
        ..RunConfig::default()
    }
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn run_writes_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &quick());
    let out = dir.path().join("out");
    let o = sync_sim(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = std::fs::read_to_string(out.join("run_summary.csv")).unwrap();
    assert!(summary.starts_with("# sync-sim "));
    assert!(summary.contains("# config_sha256: "));
    assert!(summary.contains("# seed: 42"));
    assert_eq!(body(&summary)[0], SUMMARY_HEADER);
    assert_eq!(body(&summary).len(), 2);

    let trace = std::fs::read_to_string(out.join("error_trace.csv")).unwrap();
    let rows = body(&trace);
    assert_eq!(rows[0], TRACE_HEADER);
    assert!(rows.len() > 50);
    for r in &rows[1..] {
        let (t, e) = r.split_once(',').unwrap();
        t.parse::<u64>().unwrap();
        e.parse::<i64>().unwrap();
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &quick());
    let out = dir.path().join("out");
    let o = sync_sim(&["run", &cfg, "--seed", "7", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary = std::fs::read_to_string(out.join("run_summary.csv")).unwrap();
    assert!(summary.contains("# seed: 7"));
    assert!(body(&summary)[1].starts_with("7,"));
}

#[test]
fn sweep_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.toml", &quick());
    let out = dir.path().join("out");
    let o = sync_sim(&[
        "sweep", &cfg, "--var", "rssi_dbm", "--values", "-80,-60,-40", "--repeats", "2", "--svg",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep_rssi_dbm.csv")).unwrap();
    let rows = body(&csv);
    assert_eq!(rows[0], SWEEP_HEADER);
    let keys: Vec<String> = rows[1..]
        .iter()
        .map(|r| r.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(keys, ["-80,0", "-80,1", "-60,0", "-60,1", "-40,0", "-40,1"]);
    assert!(csv.contains("# sweep_variable: rssi_dbm"));
    let svg = std::fs::read_to_string(out.join("sweep_rssi_dbm.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();

    let mut c = quick();
    c.connection.interval_ms = 5.0;
    let p = write_config(dir.path(), "interval.toml", &c);
    let o = sync_sim(&["run", &p]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("connection.interval_ms") && err.contains("7.5"), "{err}");

    let mut c = quick();
    c.duration_s = 0.0;
    let p = write_config(dir.path(), "zero.toml", &c);
    let o = sync_sim(&["run", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duration_s"));

    let mut c = quick();
    c.traffic.throughput_kbps = 1200.0;
    c.traffic.phy_rate_bps = 1_000_000.0;
    let p = write_config(dir.path(), "phy.toml", &c);
    let o = sync_sim(&["validate", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("traffic.throughput_kbps"));

    let p = dir.path().join("garbage.toml");
    std::fs::write(&p, "duration_s = \"long\"\n").unwrap();
    assert_eq!(sync_sim(&["run", p.to_str().unwrap()]).status.code(), Some(2));

    let p = write_config(dir.path(), "ok.toml", &quick());
    let o = sync_sim(&["sweep", &p, "--var", "bogus", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = sync_sim(&["sweep", &p, "--var", "requested_hz", "--values", "10", "--repeats", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_prints_effective_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick();
    c.sync.requested_hz = 3125.0;
    let p = write_config(dir.path(), "v.toml", &c);
    let o = sync_sim(&["validate", &p]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(&format!("# nominal_period_ns = {}", c.scheduler.min_gap_ns)));
    assert!(text.contains("requested_hz = 3125.0"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let o = sync_sim(&["validate", p.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
            n += 1;
        }
    }
    assert!(n > 0);
}
