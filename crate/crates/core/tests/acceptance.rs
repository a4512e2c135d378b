//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::process::{Command, ExitCode, Stdio};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sync_sim::clock::TimerValue;
use sync_sim::experiment::{run_sweep, SweepRow, SweepSpec, SweepVar};
use sync_sim::metrics::{percentile_sorted, RunMetrics};
use sync_sim::sync::{compute_offset, Beacon};
use sync_sim::traffic::BleRole;
use sync_sim::{simulate, RunConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sweep(base: &RunConfig, var: SweepVar, values: &[f64]) -> Vec<SweepRow> {
    let spec = SweepSpec {
        var,
        values: values.to_vec(),
        repeats: 1,
    };
    run_sweep(base, &spec).expect("sweep runs")
}

fn mean_err(r: &SweepRow) -> f64 {
    r.summary.error.map_or(f64::NAN, |e| e.mean_abs_ns)
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.1}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Offset formula against absolute tick differences on random wrapped pairs.
fn c1_offset_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ff5e7);
    let n = 10_000;
    let mut bad = 0;
    for i in 0..n {
        let t_max: u64 = match i % 4 {
            0 => 65_536,
            1 => 1 << 24,
            2 => rng.random_range(2..=1_000),
            _ => rng.random_range(2..=(1u64 << 32)),
        };
        let span = t_max * 1000;
        let a: u64 = rng.random_range(0..span);
        let b: u64 = match i % 5 {
            // straddle a wrap boundary
            0 => (a / t_max + 1) * t_max - 1 + rng.random_range(0..3),
            // timer values at 0 and t_max - 1
            1 => (rng.random_range(0..1000u64)) * t_max + (t_max - 1) * rng.random_range(0..2u64),
            _ => rng.random_range(0..span),
        };
        let beacon = Beacon {
            t_i_ticks: a % t_max,
            c_i_wraps: a / t_max,
            seq: i,
            air_time_ns: 0,
        };
        let rx = TimerValue {
            t_ticks: b % t_max,
            c_wraps: b / t_max,
            corr_ticks: 0,
        };
        if i128::from(compute_offset(&beacon, &rx, t_max)) != i128::from(b) - i128::from(a) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{}/{n} tuples exact", n - bad))
}

/// No drift, jitter or bias: every sample after the first correction is 0.
fn c2_exactness() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.duration_s = 5.0;
    cfg.sync.path_bias_ns = 0;
    for c in [&mut cfg.initiator, &mut cfg.receiver] {
        c.drift_ppm = 0.0;
        c.capture_jitter_sd_ns = 0.0;
    }
    cfg.receiver.phase0_ns = 7_000_000;
    let m = simulate(&cfg).expect("run");
    let nonzero = m.error_samples.iter().filter(|s| s.error_ns != 0).count();
    check(
        m.rx_count >= 1 && !m.error_samples.is_empty() && nonzero == 0,
        format!(
            "{} beacons received, {} samples, {nonzero} non-zero",
            m.rx_count,
            m.error_samples.len()
        ),
    )
}

fn max_delivery_gap_ns(m: &RunMetrics) -> u64 {
    let tail = m
        .corrections
        .last()
        .map_or(m.duration_ns, |c| m.duration_ns - c.oracle.0);
    m.max_correction_gap_ns().max(tail)
}

/// p99 |error| <= |rho| G + 3 sigma + 2 q.
fn c3_drift_bound() -> Outcome {
    let rhos = [-50.0, -20.0, -5.0, 5.0, 20.0, 50.0];
    let results: Vec<(f64, f64, f64, f64)> = rhos
        .par_iter()
        .map(|&rho| {
            let t0 = Instant::now();
            let mut cfg = RunConfig::default();
            cfg.initiator.drift_ppm = 0.0;
            cfg.receiver.drift_ppm = rho;
            let m = simulate(&cfg).expect("run");
            let mut abs: Vec<u64> = m
                .error_samples
                .iter()
                .map(|s| s.error_ns.unsigned_abs())
                .collect();
            abs.sort_unstable();
            let p99 = percentile_sorted(&abs, 0.99) as f64;
            let g = max_delivery_gap_ns(&m) as f64;
            let sigma = cfg.receiver.capture_jitter_sd_ns;
            let q = 1e9 / cfg.receiver.tick_hz as f64;
            let bound = rho.abs() * 1e-6 * g + 3.0 * sigma + 2.0 * q;
            (rho, p99, bound, t0.elapsed().as_secs_f64())
        })
        .collect();
    let ok = results.iter().all(|&(_, p, b, t)| p <= b && t < 10.0);
    let detail = results
        .iter()
        .map(|(r, p, b, _)| format!("{r:+} ppm p99 {p:.0} <= {b:.0}"))
        .collect::<Vec<_>>()
        .join("; ");
    check(ok, detail)
}

fn rate(cfg: &RunConfig, r: &SweepRow) -> f64 {
    r.summary.tx_count as f64 / cfg.duration_s
}

/// Rate saturation, overload drop and best-case error.
fn c4_frequency_sweep() -> Outcome {
    let cfg = RunConfig::default();
    let hz = [1.0, 10.0, 100.0, 700.0, 1000.0, 1500.0, 2000.0, 2300.0, 3125.0];
    let rows = sweep(&cfg, SweepVar::RequestedHz, &hz);
    let rates: Vec<f64> = rows.iter().map(|r| rate(&cfg, r)).collect();
    let errs: Vec<f64> = rows.iter().map(mean_err).collect();
    let saturated = (4..=6).all(|i| (rates[i] - 1000.0).abs() <= 100.0);
    let overload = (rates[8] - 800.0).abs() <= 80.0;
    let best = (15.0..=35.0).contains(&errs[4]);
    check(
        saturated && overload && best,
        format!(
            "rate/s at 1000..2000 Hz [{}], at 3125 Hz {:.1}; mean |err| at 1000 Hz {:.1} ns",
            fmt(&rates[4..=6]),
            rates[8],
            errs[4]
        ),
    )
}

fn c5_rssi_sweep() -> Outcome {
    let cfg = RunConfig::default();
    let grid = [-80.0, -70.0, -60.0, -50.0, -40.0];
    let rows = sweep(&cfg, SweepVar::RssiDbm, &grid);
    let ratio: Vec<f64> = rows
        .iter()
        .map(|r| r.summary.rx_count as f64 / r.summary.tx_count as f64)
        .collect();
    let errs: Vec<f64> = rows.iter().map(mean_err).collect();
    let ok = (0.012..=0.022).contains(&ratio[0])
        && (0.50..=0.61).contains(&ratio[4])
        && non_increasing(&errs)
        && (errs[0] - 633.0).abs() <= 0.35 * 633.0
        && (15.0..=30.0).contains(&errs[4]);
    check(
        ok,
        format!(
            "delivery {:.4} @-80, {:.4} @-40; mean |err| [{}] ns",
            ratio[0],
            ratio[4],
            fmt(&errs)
        ),
    )
}

fn c6_interval_trend() -> Outcome {
    let cfg = RunConfig::default();
    let grid = [7.5, 10.0, 20.0, 50.0, 100.0, 400.0, 1000.0, 4000.0];
    let rows = sweep(&cfg, SweepVar::IntervalMs, &grid);
    let errs: Vec<f64> = rows.iter().map(mean_err).collect();
    let ratio = errs[0] / errs[errs.len() - 1];
    check(
        non_increasing(&errs) && ratio >= 1.3,
        format!("mean |err| [{}] ns, 7.5/4000 ratio {ratio:.2}", fmt(&errs)),
    )
}

fn c7_role_symmetry() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.duration_s = 20.0;
    cfg.connection.enabled = true;
    cfg.traffic.throughput_kbps = 400.0;
    let runs = [BleRole::Central, BleRole::Peripheral].map(|role| {
        let mut c = cfg.clone();
        c.connection.initiator_role = role;
        simulate(&c).expect("run")
    });
    let [a, b] = &runs;
    let same = a.granted == b.granted && a.error_samples == b.error_samples;
    check(
        same && !a.granted.is_empty(),
        format!(
            "{} grants, {} error samples, identical: {same}",
            a.granted.len(),
            a.error_samples.len()
        ),
    )
}

fn c8_throughput() -> Outcome {
    let cfg = RunConfig::default();
    let grid = [0.0, 200.0, 400.0, 800.0, 1200.0];
    let rows = sweep(&cfg, SweepVar::ThroughputKbps, &grid);
    let errs: Vec<f64> = rows.iter().map(mean_err).collect();
    let ok = (20.0..=45.0).contains(&errs[0])
        && (errs[4] - 1500.0).abs() <= 0.25 * 1500.0
        && non_decreasing(&errs);
    check(ok, format!("mean |err| [{}] ns", fmt(&errs)))
}

fn c9_power() -> Outcome {
    let cfg = RunConfig::default();
    let e = &cfg.energy;
    let hz = [1.0, 10.0, 100.0, 700.0, 1000.0, 2000.0, 3125.0];
    let rows = sweep(&cfg, SweepVar::RequestedHz, &hz);
    let obs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (rate(&cfg, r), r.summary.initiator_avg_mw))
        .collect();
    let model = |rate: f64| e.p_idle_mw + rate * e.tx_on_ns as f64 * (e.p_tx_mw - e.p_idle_mw) / 1e9;
    let mean = obs.iter().map(|o| o.1).sum::<f64>() / obs.len() as f64;
    let ss_tot: f64 = obs.iter().map(|o| (o.1 - mean).powi(2)).sum();
    let ss_res: f64 = obs.iter().map(|o| (o.1 - model(o.0)).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;

    let rssi = sweep(&cfg, SweepVar::RssiDbm, &[-80.0, -70.0, -60.0, -50.0, -40.0]);
    let rx: Vec<f64> = rssi.iter().map(|r| r.summary.receiver_avg_mw).collect();
    let hi = rx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = rx.iter().cloned().fold(f64::INFINITY, f64::min);
    let dev = (hi - lo) / lo;
    check(
        r2 >= 0.999 && dev < 1e-3,
        format!("initiator R^2 {r2:.6}; receiver power spread {:.4}%", dev * 100.0),
    )
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg_path = dir.path().join("c10.toml");
    let mut cfg = RunConfig::default();
    cfg.duration_s = 5.0;
    std::fs::write(&cfg_path, cfg.to_toml()).expect("write config");
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_sync-sim"))
            .args(["sweep", cfg_path.to_str().unwrap(), "--var", "requested_hz"])
            .args(["--values", "10,100,1000", "--repeats", "2", "--seed", "42"])
            .arg("--out-dir")
            .arg(&out_dir)
            .stdout(Stdio::null())
            .status()
            .expect("spawn sync-sim");
        assert!(status.success());
        std::fs::read(out_dir.join("sweep_requested_hz.csv")).expect("csv written")
    };
    let a = run("a");
    let b = run("b");
    check(
        a == b && !a.is_empty(),
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("C1 offset formula vs absolute-tick oracle", c1_offset_oracle),
        ("C2 exact sync without drift, jitter or bias", c2_exactness),
        ("C3 drift bound on p99 error", c3_drift_bound),
        ("C4 frequency sweep rate and error", c4_frequency_sweep),
        ("C5 RSSI sweep anchors", c5_rssi_sweep),
        ("C6 connection interval trend", c6_interval_trend),
        ("C7 central/peripheral symmetry", c7_role_symmetry),
        ("C8 throughput degradation", c8_throughput),
        ("C9 power shapes", c9_power),
        ("C10 byte-identical sweep output", c10_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {name}: {detail} ({:.2} s)",
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
