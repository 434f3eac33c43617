//! CSV and JSON writers. Every file is written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use beaconsim_core::engine::{MetricsReport, SimConfig};
use serde::Serialize;

use crate::error::CliError;

/// Columns of the aggregated sweep table.
pub const AGGREGATE_COLUMNS: [&str; 12] =
    ["tech", "rho", "fb", "pt", "mcs", "seed", "pdr_100m", "range_pdr90_m", "cbr", "V", "ipg_p999", "cr"];

/// One pooled sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub tech: String,
    pub rho: f64,
    pub fb: f64,
    pub pt: f64,
    pub mcs: String,
    pub seed: u64,
    pub pdr_100m: Option<f64>,
    pub range_pdr90_m: Option<f64>,
    pub cbr: Option<f64>,
    #[serde(rename = "V")]
    pub v: Option<f64>,
    pub ipg_p999: Option<f64>,
    pub cr: f64,
}

impl AggregateRow {
    pub fn new(cfg: &SimConfig, r: &MetricsReport) -> Self {
        AggregateRow {
            tech: cfg.technology.to_string(),
            rho: cfg.rho_veh_per_km,
            fb: cfg.fb_hz,
            pt: cfg.pt_dbm,
            mcs: cfg.mcs.to_string(),
            seed: cfg.seed,
            pdr_100m: r.pdr_within_100m(),
            range_pdr90_m: r.range_pdr90_m(),
            cbr: r.cbr_mean(),
            v: r.neighbor_mean(),
            ipg_p999: r.ipg_p999_s(),
            cr: cfg.channel_occupancy(),
        }
    }
}

/// One replication of a sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub tech: String,
    pub rho: f64,
    pub fb: f64,
    pub pt: f64,
    pub mcs: String,
    pub seed: u64,
    pub replication: u32,
    pub pdr_100m: Option<f64>,
    pub range_pdr90_m: Option<f64>,
    pub cbr: Option<f64>,
    #[serde(rename = "V")]
    pub v: Option<f64>,
    pub ipg_p999: Option<f64>,
    pub cr: f64,
}

impl ReplicationRow {
    pub fn new(cfg: &SimConfig, replication: u32, r: &MetricsReport) -> Self {
        let a = AggregateRow::new(cfg, r);
        ReplicationRow {
            tech: a.tech,
            rho: a.rho,
            fb: a.fb,
            pt: a.pt,
            mcs: a.mcs,
            seed: a.seed,
            replication,
            pdr_100m: a.pdr_100m,
            range_pdr90_m: a.range_pdr90_m,
            cbr: a.cbr,
            v: a.v,
            ipg_p999: a.ipg_p999,
            cr: a.cr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdrRow {
    pub distance_m: f64,
    pub pdr: Option<f64>,
    pub successes: u64,
    pub opportunities: u64,
}

pub fn pdr_rows(r: &MetricsReport) -> Vec<PdrRow> {
    let h = &r.pdr_by_distance;
    (0..h.bins())
        .map(|b| PdrRow {
            distance_m: h.bin_center_m(b),
            pdr: h.pdr(b),
            successes: h.successes[b],
            opportunities: h.opportunities[b],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcdfRow {
    pub ipg_s: f64,
    pub ccdf: f64,
}

pub fn ccdf_rows(r: &MetricsReport) -> Vec<CcdfRow> {
    r.ipg.ccdf().into_iter().map(|(us, p)| CcdfRow { ipg_s: us as f64 / 1e6, ccdf: p }).collect()
}

pub const REPLICATION_COLUMNS: [&str; 13] = [
    "tech",
    "rho",
    "fb",
    "pt",
    "mcs",
    "seed",
    "replication",
    "pdr_100m",
    "range_pdr90_m",
    "cbr",
    "V",
    "ipg_p999",
    "cr",
];
pub const PDR_COLUMNS: [&str; 4] = ["distance_m", "pdr", "successes", "opportunities"];
pub const CCDF_COLUMNS: [&str; 2] = ["ipg_s", "ccdf"];
pub const CSMA_TRACE_COLUMNS: [&str; 4] = ["time_us", "node", "event", "phase"];
pub const SPS_TRACE_COLUMNS: [&str; 4] = ["subframe", "node", "slot", "rc"];
pub const DCC_TRACE_COLUMNS: [&str; 5] = ["time_us", "node", "cbr", "cr", "neighbors"];

/// CSV text of `rows`. `header` is written explicitly when there are no rows.
pub fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(|e| CliError::io("<csv>", std::io::Error::other(e)))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io("<csv>", std::io::Error::other(e)))?;
    }
    w.into_inner().map_err(|e| CliError::io("<csv>", std::io::Error::other(e.to_string())))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    write_atomic(path, &csv_bytes(header, rows)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Creates `dir` and proves it is writable.
pub fn probe_writable(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe: PathBuf = dir.join(".beaconsim-write-probe");
    fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
}
