//! On-disk formats: trace files, scenario configs, ground-truth sidecars,
//! and run reports.
//!
//! Trace files are line-oriented text, chosen for hand-inspectability and
//! append-friendly streaming:
//!
//! ```text
//! #breathtrace v1
//! # time_s,tx,rx,rss_dbm
//! 0,0,1,-40
//! 0.012,1,0,-43
//! ```
//!
//! The first line is the mandatory version header; `#`-prefixed lines after
//! it are comments. Rows are `time_s,tx,rx,rss_dbm` with times in seconds
//! (fractions carry at least millisecond precision) and RSS in dBm. Rows are
//! written in (time, tx, rx) order with shortest round-trip float formatting,
//! so write -> read -> write is byte-stable.
//!
//! Scenario configs, ground truth, and reports are TOML documents.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinkId, LinkTrace, ModelError, RssSample};
use crate::simulate::{
    AmplitudeModel, Breathing, Ellipse, GroundTruth, Point, SimScenario,
};

pub const TRACE_HEADER: &str = "#breathtrace v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: unsupported header '{header}' (expected '{TRACE_HEADER}')")]
    UnknownVersion { path: String, header: String },
    #[error("{path}: unknown scenario keys: {keys}")]
    UnknownKeys { path: String, keys: String },
    #[error("{path}: {message}")]
    Toml { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid scenario in {path}: {message}")]
    Scenario { path: String, message: String },
}

/// Write file contents atomically: temp file in the same directory, then
/// rename over the target.
fn atomic_write(path: &Path, contents: &str) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Shortest round-trip decimal form of a float ("-40", "0.012").
fn fmt_float(x: f64) -> String {
    format!("{x}")
}

/// Serialize traces to the versioned line format, rows sorted by
/// (time, tx, rx).
pub fn write_traces(traces: &[LinkTrace], path: &Path) -> Result<(), IoError> {
    let mut rows: Vec<(f64, u32, u32, f64)> = Vec::new();
    for trace in traces {
        for s in trace.samples() {
            rows.push((s.time_s, trace.link.tx, trace.link.rx, s.rss_dbm));
        }
    }
    rows.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut out = String::with_capacity(rows.len() * 24 + 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    out.push_str("# time_s,tx,rx,rss_dbm\n");
    for (t, tx, rx, rss) in rows {
        out.push_str(&fmt_float(t));
        out.push(',');
        out.push_str(&tx.to_string());
        out.push(',');
        out.push_str(&rx.to_string());
        out.push(',');
        out.push_str(&fmt_float(rss));
        out.push('\n');
    }
    atomic_write(path, &out)
}

/// Parse a trace file. Rows may arrive in any order; they are grouped per
/// link and sorted by time. Duplicate (link, time) records are rejected.
pub fn read_traces(path: &Path) -> Result<Vec<LinkTrace>, IoError> {
    let path_str = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim_end(),
        None => {
            return Err(IoError::UnknownVersion {
                path: path_str,
                header: String::new(),
            })
        }
    };
    if header != TRACE_HEADER {
        return Err(IoError::UnknownVersion {
            path: path_str,
            header: header.to_string(),
        });
    }

    // Per-link sample lists, keyed by first-seen order for stable output.
    let mut order: Vec<LinkId> = Vec::new();
    let mut by_link: std::collections::HashMap<LinkId, Vec<(f64, f64, usize)>> =
        std::collections::HashMap::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |field: &str, what: &str| -> Result<f64, IoError> {
            field.trim().parse::<f64>().map_err(|_| IoError::Parse {
                path: path_str.clone(),
                line: line_no,
                message: format!("bad {what} '{field}'"),
            })
        };
        let mut parts = line.split(',');
        let (t, tx, rx, rss) = match (parts.next(), parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(tx), Some(rx), Some(rss), None) => (t, tx, rx, rss),
            _ => {
                return Err(IoError::Parse {
                    path: path_str,
                    line: line_no,
                    message: "expected 4 comma-separated fields".into(),
                })
            }
        };
        let time_s = parse(t, "time")?;
        let rss_dbm = parse(rss, "rss")?;
        let node = |field: &str| -> Result<u32, IoError> {
            field.trim().parse::<u32>().map_err(|_| IoError::Parse {
                path: path_str.clone(),
                line: line_no,
                message: format!("bad node id '{field}'"),
            })
        };
        let link = LinkId::new(node(tx)?, node(rx)?).map_err(|e| IoError::Parse {
            path: path_str.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !(time_s >= 0.0) {
            return Err(IoError::Parse {
                path: path_str,
                line: line_no,
                message: format!("negative time {time_s}"),
            });
        }
        by_link.entry(link).or_insert_with(|| {
            order.push(link);
            Vec::new()
        });
        by_link.get_mut(&link).unwrap().push((time_s, rss_dbm, line_no));
    }

    let mut traces = Vec::with_capacity(order.len());
    for link in order {
        let mut rows = by_link.remove(&link).unwrap();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(IoError::Parse {
                    path: path_str,
                    line: pair[1].2,
                    message: format!("duplicate sample for link {link} at t = {}", pair[1].0),
                });
            }
        }
        let samples: Vec<RssSample> = rows
            .into_iter()
            .map(|(time_s, rss_dbm, _)| RssSample { time_s, rss_dbm })
            .collect();
        traces.push(LinkTrace::new(link, samples)?);
    }
    Ok(traces)
}

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<(), IoError> {
    let text = toml::to_string_pretty(truth).map_err(|e| IoError::Toml {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, &text)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, IoError> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| IoError::Toml {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Serialize any report document as pretty TOML, atomically.
pub fn write_report<T: Serialize>(report: &T, path: &Path) -> Result<(), IoError> {
    let text = toml::to_string_pretty(report).map_err(|e| IoError::Toml {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, &text)
}

// ── Scenario config ────────────────────────────────────────────────────────

/// The editable scenario document. Every field is optional; absent fields
/// take the documented defaults (the `patch_quiet` geometry with no
/// breathing). Either `nodes` (auto layout on the room rectangle) or
/// explicit `node_positions` selects the geometry.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_positions: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slot_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_sigma_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_rss_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_rss_spread_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fade_offset_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fade_noise_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    packet_loss_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantize_dbm: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    motion_noise_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breathing: Option<BreathingFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chest_region: Option<EllipseFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    affected_amplitude: Option<AmplitudeFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BreathingFile {
    rate_bpm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_scale: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EllipseFile {
    center: [f64; 2],
    semi_x: f64,
    semi_y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmplitudeFile {
    median_db: f64,
    sigma_ln: f64,
}

const SCENARIO_KEYS: &[&str] = &[
    "nodes",
    "node_positions",
    "slot_ms",
    "duration_s",
    "seed",
    "noise_sigma_db",
    "mean_rss_db",
    "mean_rss_spread_db",
    "fade_offset_db",
    "fade_noise_factor",
    "packet_loss_prob",
    "quantize_dbm",
    "motion_noise_db",
    "breathing",
    "chest_region",
    "affected_amplitude",
];

/// Read a scenario config. In strict mode unknown keys are an error; in
/// lenient mode they are logged and dropped.
pub fn read_scenario(path: &Path, strict: bool) -> Result<SimScenario, IoError> {
    let path_str = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| IoError::Toml {
        path: path_str.clone(),
        message: e.to_string(),
    })?;

    let unknown: Vec<String> = table
        .keys()
        .filter(|k| !SCENARIO_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        if strict {
            return Err(IoError::UnknownKeys {
                path: path_str,
                keys: unknown.join(", "),
            });
        }
        for key in &unknown {
            log::warn!("{path_str}: ignoring unknown scenario key '{key}'");
            table.remove(key);
        }
    }

    let file: ScenarioFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| IoError::Toml {
            path: path_str.clone(),
            message: e.to_string(),
        })?;

    scenario_from_file(file).map_err(|message| IoError::Scenario {
        path: path_str,
        message,
    })
}

fn scenario_from_file(file: ScenarioFile) -> Result<SimScenario, String> {
    let mut sc = SimScenario::base(file.nodes.unwrap_or(20)).without_breathing();
    if let Some(positions) = file.node_positions {
        if let Some(n) = file.nodes {
            if n != positions.len() {
                return Err(format!(
                    "nodes = {n} disagrees with {} node_positions entries",
                    positions.len()
                ));
            }
        }
        sc.node_positions = positions
            .into_iter()
            .map(|[x, y]| Point { x, y })
            .collect();
    }
    if let Some(v) = file.slot_ms {
        sc.slot_ms = v;
    }
    if let Some(v) = file.duration_s {
        sc.duration_s = v;
    }
    if let Some(v) = file.seed {
        sc.seed = v;
    }
    if let Some(v) = file.noise_sigma_db {
        sc.noise_sigma_db = v;
    }
    if let Some(v) = file.mean_rss_db {
        sc.mean_rss_db = v;
    }
    if let Some(v) = file.mean_rss_spread_db {
        sc.mean_rss_spread_db = v;
    }
    if let Some(v) = file.fade_offset_db {
        sc.fade_offset_db = v;
    }
    if let Some(v) = file.fade_noise_factor {
        sc.fade_noise_factor = v;
    }
    if let Some(v) = file.packet_loss_prob {
        sc.packet_loss_prob = v;
    }
    if let Some(v) = file.quantize_dbm {
        sc.quantize_dbm = v;
    }
    sc.motion_noise_db = file.motion_noise_db;
    if let Some(b) = file.breathing {
        sc.breathing = Some(Breathing {
            rate_bpm: b.rate_bpm,
            depth_scale: b.depth_scale.unwrap_or(1.0),
        });
    }
    if let Some(e) = file.chest_region {
        sc.chest_region = Ellipse {
            center: Point { x: e.center[0], y: e.center[1] },
            semi_x: e.semi_x,
            semi_y: e.semi_y,
        };
    }
    if let Some(a) = file.affected_amplitude {
        sc.affected_amplitude = AmplitudeModel {
            median_db: a.median_db,
            sigma_ln: a.sigma_ln,
        };
    }
    sc.validate().map_err(|e| e.to_string())?;
    Ok(sc)
}

/// Write the fully explicit form of a scenario (every field spelled out).
pub fn write_scenario(scenario: &SimScenario, path: &Path) -> Result<(), IoError> {
    let file = ScenarioFile {
        nodes: None,
        node_positions: Some(
            scenario
                .node_positions
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
        ),
        slot_ms: Some(scenario.slot_ms),
        duration_s: Some(scenario.duration_s),
        seed: Some(scenario.seed),
        noise_sigma_db: Some(scenario.noise_sigma_db),
        mean_rss_db: Some(scenario.mean_rss_db),
        mean_rss_spread_db: Some(scenario.mean_rss_spread_db),
        fade_offset_db: Some(scenario.fade_offset_db),
        fade_noise_factor: Some(scenario.fade_noise_factor),
        packet_loss_prob: Some(scenario.packet_loss_prob),
        quantize_dbm: Some(scenario.quantize_dbm),
        motion_noise_db: scenario.motion_noise_db,
        breathing: scenario.breathing.map(|b| BreathingFile {
            rate_bpm: b.rate_bpm,
            depth_scale: Some(b.depth_scale),
        }),
        chest_region: Some(EllipseFile {
            center: [scenario.chest_region.center.x, scenario.chest_region.center.y],
            semi_x: scenario.chest_region.semi_x,
            semi_y: scenario.chest_region.semi_y,
        }),
        affected_amplitude: Some(AmplitudeFile {
            median_db: scenario.affected_amplitude.median_db,
            sigma_ln: scenario.affected_amplitude.sigma_ln,
        }),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| IoError::Toml {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, &text)
}

// ── Per-window and per-link records ────────────────────────────────────────

/// One row of the per-window estimate/detection CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    pub start_s: f64,
    pub f_hat_hz: f64,
    pub rate_bpm: f64,
    pub s_hat: Option<f64>,
    pub decision: Option<crate::model::Hypothesis>,
    pub links: usize,
    pub n_samples: usize,
}

pub fn write_window_records(records: &[WindowRecord], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("start_s,f_hat_hz,rate_bpm,s_hat,decision,links,n_samples\n");
    for r in records {
        let s_hat = r.s_hat.map(fmt_float).unwrap_or_default();
        let decision = r.decision.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_float(r.start_s),
            fmt_float(r.f_hat_hz),
            fmt_float(r.rate_bpm),
            s_hat,
            decision,
            r.links,
            r.n_samples
        ));
    }
    atomic_write(path, &out)
}

/// One row of the per-link CSV emitted next to the window records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRecord {
    pub window_start_s: f64,
    pub link: LinkId,
    pub amplitude_db: f64,
    pub phase_rad: f64,
    pub stat: f64,
    pub decision: Option<crate::model::Hypothesis>,
}

pub fn write_link_records(records: &[LinkRecord], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("window_start_s,tx,rx,amplitude_db,phase_rad,stat,decision\n");
    for r in records {
        let decision = r.decision.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_float(r.window_start_s),
            r.link.tx,
            r.link.rx,
            fmt_float(r.amplitude_db),
            fmt_float(r.phase_rad),
            fmt_float(r.stat),
            decision
        ));
    }
    atomic_write(path, &out)
}

/// The Fig.-1-style objective curve: raw and max-normalized PSD per
/// frequency.
pub fn write_psd_csv(
    points: &[crate::model::ObjectivePoint],
    path: &Path,
) -> Result<(), IoError> {
    let peak = points.iter().map(|p| p.psd).fold(f64::MIN, f64::max);
    let mut out = String::from("f_hz,raw_psd,normalized_psd\n");
    for p in points {
        let norm = if peak > 0.0 { p.psd / peak } else { 0.0 };
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_float(p.freq_hz),
            fmt_float(p.psd),
            fmt_float(norm)
        ));
    }
    atomic_write(path, &out)
}
