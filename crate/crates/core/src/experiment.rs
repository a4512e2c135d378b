//! Single runs and parameter sweeps, with CSV and SVG output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{ConfigError, Error};
use crate::metrics::{summarize, RunMetrics, Summary};
use crate::scheduler::{cancel_probability, plan_spacing};
use crate::sim::simulate;
use crate::traffic::{event_duration, occupancy_fraction};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SWEEP_HEADER: &str = "variable_value,repeat,seed,mean_abs_error_ns,p95_abs_error_ns,max_abs_error_ns,tx_count,rx_count,blocked_count,initiator_avg_mw,receiver_avg_mw";
pub const TRACE_HEADER: &str = "oracle_ns,error_ns";
pub const SUMMARY_HEADER: &str = "seed,duration_s,samples,mean_abs_error_ns,sd_abs_error_ns,p95_abs_error_ns,max_abs_error_ns,tx_count,rx_count,delivered_count,blocked_count,cancelled_count,effective_tx_rate_hz,initiator_avg_mw,receiver_avg_mw,initiator_joules,receiver_joules,clamped_corrections,unsynced_samples";

/// Written in place of statistics when a run produced no error samples.
pub const EMPTY: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    RequestedHz,
    RssiDbm,
    DistanceM,
    IntervalMs,
    ThroughputKbps,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::RequestedHz => "requested_hz",
            SweepVar::RssiDbm => "rssi_dbm",
            SweepVar::DistanceM => "distance_m",
            SweepVar::IntervalMs => "interval_ms",
            SweepVar::ThroughputKbps => "throughput_kbps",
        }
    }

    /// Copy of `base` with the swept variable set to `value`. Sweeping a
    /// connection parameter turns the connection on.
    pub fn apply(self, base: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            SweepVar::RequestedHz => cfg.sync.requested_hz = value,
            SweepVar::RssiDbm => {
                cfg.channel.rssi_dbm = Some(value);
                cfg.channel.distance_m = None;
            }
            SweepVar::DistanceM => {
                cfg.channel.rssi_dbm = None;
                cfg.channel.distance_m = Some(value);
            }
            SweepVar::IntervalMs => {
                cfg.connection.enabled = true;
                cfg.connection.interval_ms = value;
            }
            SweepVar::ThroughputKbps => {
                cfg.connection.enabled = true;
                cfg.traffic.throughput_kbps = value;
            }
        }
        cfg
    }
}

impl FromStr for SweepVar {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "requested_hz" => SweepVar::RequestedHz,
            "rssi_dbm" => SweepVar::RssiDbm,
            "distance_m" => SweepVar::DistanceM,
            "interval_ms" => SweepVar::IntervalMs,
            "throughput_kbps" => SweepVar::ThroughputKbps,
            other => {
                return Err(ConfigError::new(
                    "sweep.var",
                    format!(
                        "unknown variable {other:?}; expected one of requested_hz, rssi_dbm, distance_m, interval_ms, throughput_kbps"
                    ),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub var: SweepVar,
    pub values: Vec<f64>,
    pub repeats: u32,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::new("sweep.values", "must not be empty"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::new("sweep.values", "must be finite numbers"));
        }
        if self.repeats == 0 {
            return Err(ConfigError::new("sweep.repeats", "must be >= 1"));
        }
        Ok(())
    }
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, ConfigError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| ConfigError::new("sweep.values", format!("not a number: {s:?}")))
        })
        .collect()
}

/// Seed for repeat `r` of a sweep; every swept value shares it.
pub fn derive_seed(master: u64, repeat: u32) -> u64 {
    if repeat == 0 {
        return master;
    }
    // splitmix64 finalizer
    let mut z = master.wrapping_add(u64::from(repeat).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

fn metadata(cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# sync-sim {VERSION}");
    let _ = writeln!(s, "# config_sha256: {}", config_hash(cfg));
    let _ = writeln!(s, "# seed: {}", cfg.seed);
    let curve = &cfg.channel.curve;
    let _ = writeln!(
        s,
        "# channel_curve: midpoint_dbm={} slope_per_db={} floor={} ceiling={}",
        curve.midpoint_dbm, curve.slope_per_db, curve.floor, curve.ceiling
    );
    let _ = writeln!(
        s,
        "# channel_anchors: p(-40dBm)={:.4} p(-80dBm)={:.4}",
        curve.probability(-40.0),
        curve.probability(-80.0)
    );
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

fn stat(v: Option<f64>) -> String {
    v.map_or_else(|| EMPTY.to_owned(), |x| format!("{x:.3}"))
}

pub fn summary_csv(cfg: &RunConfig, m: &RunMetrics) -> String {
    let s = summarize(m);
    let e = s.error;
    let mut out = metadata(cfg, &[]);
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.6},{:.6},{:.9},{:.9},{},{}",
        cfg.seed,
        cfg.duration_s,
        e.map_or(0, |e| e.samples),
        stat(e.map(|e| e.mean_abs_ns)),
        stat(e.map(|e| e.sd_abs_ns)),
        stat(e.map(|e| e.p95_abs_ns)),
        stat(e.map(|e| e.max_abs_ns)),
        s.tx_count,
        s.rx_count,
        m.delivered_count,
        s.blocked_count,
        s.cancelled_count,
        m.effective_tx_rate_hz(),
        s.initiator_avg_mw,
        s.receiver_avg_mw,
        s.initiator_joules,
        s.receiver_joules,
        s.clamped_corrections,
        m.warnings.unsynced_samples,
    );
    out
}

pub fn trace_csv(cfg: &RunConfig, m: &RunMetrics) -> String {
    let mut out = metadata(cfg, &[]);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for s in &m.error_samples {
        let _ = writeln!(out, "{},{}", s.oracle_ns, s.error_ns);
    }
    out
}

/// One finished point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub repeat: u32,
    pub seed: u64,
    pub summary: Summary,
}

/// Run every `(value, repeat)` point, in parallel, and return the rows in
/// value order then repeat order.
pub fn run_sweep(base: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, Error> {
    spec.validate()?;
    let points: Vec<(f64, u32)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.repeats).map(move |r| (v, r)))
        .collect();
    // Reject a bad value before spending time on the others.
    for &(v, _) in &points {
        spec.var.apply(base, v).validate()?;
    }
    points
        .par_iter()
        .map(|&(value, repeat)| {
            let mut cfg = spec.var.apply(base, value);
            cfg.seed = derive_seed(base.seed, repeat);
            let m = simulate(&cfg)?;
            Ok(SweepRow {
                value,
                repeat,
                seed: cfg.seed,
                summary: summarize(&m),
            })
        })
        .collect()
}

pub fn sweep_csv(base: &RunConfig, spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let values = spec
        .values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    let mut out = metadata(
        base,
        &[
            ("sweep_variable", spec.var.name().to_owned()),
            ("sweep_values", values),
            ("repeats", spec.repeats.to_string()),
        ],
    );
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let e = r.summary.error;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
            r.value,
            r.repeat,
            r.seed,
            stat(e.map(|e| e.mean_abs_ns)),
            stat(e.map(|e| e.p95_abs_ns)),
            stat(e.map(|e| e.max_abs_ns)),
            r.summary.tx_count,
            r.summary.rx_count,
            r.summary.blocked_count,
            r.summary.initiator_avg_mw,
            r.summary.receiver_avg_mw,
        );
    }
    out
}

/// Line chart of mean |error| against the swept value, averaged over repeats.
pub fn sweep_svg(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let (w, h, pad) = (640.0, 400.0, 60.0);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for &v in &spec.values {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.value == v)
            .filter_map(|r| r.summary.error.map(|e| e.mean_abs_ns))
            .collect();
        if !errs.is_empty() {
            pts.push((v, errs.iter().sum::<f64>() / errs.len() as f64));
        }
    }
    let xmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let log_x = xmin > 0.0 && xmax / xmin >= 100.0;
    let fx = |x: f64| if log_x { x.log10() } else { x };
    let (a, b) = (fx(xmin), fx(xmax));
    let ymax = pts.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-9);
    let sx = |x: f64| {
        if b > a {
            pad + (fx(x) - a) / (b - a) * (w - 2.0 * pad)
        } else {
            w / 2.0
        }
    };
    let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y0}" stroke="black"/>"#,
        y0 = h - pad,
        x1 = w - pad
    );
    let line = pts
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{line}"/>"#
    );
    for &(x, y) in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            sx(x),
            sy(y),
            sx(x),
            h - pad + 15.0,
            x
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}{}</text>"#,
        w / 2.0,
        h - 15.0,
        spec.var.name(),
        if log_x { " (log)" } else { "" }
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" font-size="12" transform="rotate(-90 15 {:.1})" text-anchor="middle">mean |error| (ns), max {:.1}</text>"#,
        h / 2.0,
        h / 2.0,
        ymax
    );
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, body)?;
    Ok(p)
}

/// Run once and write `run_summary.csv` and (optionally) `error_trace.csv`.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let m = simulate(cfg)?;
    let mut files = vec![write(out_dir, "run_summary.csv", &summary_csv(cfg, &m))?];
    if cfg.output.error_trace {
        files.push(write(out_dir, "error_trace.csv", &trace_csv(cfg, &m))?);
    }
    Ok(files)
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    spec: &SweepSpec,
    out_dir: &Path,
    svg: bool,
) -> Result<Vec<PathBuf>, Error> {
    cfg.validate()?;
    let rows = run_sweep(cfg, spec)?;
    let name = spec.var.name();
    let mut files = vec![write(
        out_dir,
        &format!("sweep_{name}.csv"),
        &sweep_csv(cfg, spec, &rows),
    )?];
    if svg {
        files.push(write(
            out_dir,
            &format!("sweep_{name}.svg"),
            &sweep_svg(spec, &rows),
        )?);
    }
    Ok(files)
}

/// Normalized configuration followed by the derived parameters, as TOML comments.
pub fn validate_report(cfg: &RunConfig) -> Result<String, Error> {
    cfg.validate()?;
    let mut s = cfg.to_toml();
    let period = plan_spacing(cfg.sync.requested_hz, &cfg.scheduler);
    let rssi = cfg.channel.effective_rssi_dbm()?;
    let _ = writeln!(s, "\n# effective parameters");
    let _ = writeln!(s, "# config_sha256 = {}", config_hash(cfg));
    let _ = writeln!(s, "# nominal_period_ns = {period}");
    let _ = writeln!(s, "# nominal_rate_hz = {}", 1e9 / period as f64);
    let _ = writeln!(
        s,
        "# cancel_probability = {:.4}",
        cancel_probability(cfg.sync.requested_hz, &cfg.scheduler)
    );
    let _ = writeln!(s, "# effective_rssi_dbm = {rssi:.3}");
    let _ = writeln!(
        s,
        "# delivery_probability = {:.4}",
        cfg.channel.curve.probability(rssi)
    );
    let _ = writeln!(s, "# uncompensated_bias_ns = {}", cfg.effective_bias_ns());
    if cfg.connection.enabled {
        let _ = writeln!(
            s,
            "# connection_event_ns = {}",
            event_duration(&cfg.traffic, &cfg.connection)?
        );
        let _ = writeln!(
            s,
            "# occupancy_fraction = {:.6}",
            occupancy_fraction(&cfg.traffic, &cfg.connection)?
        );
    } else {
        let _ = writeln!(s, "# occupancy_fraction = 0 (connection disabled)");
    }
    Ok(s)
}
