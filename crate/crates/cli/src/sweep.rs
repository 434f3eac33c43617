//! Cartesian parameter sweeps and their output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use beaconsim_core::engine::{run_replications, RunOptions, SimConfig};
use beaconsim_core::Technology;
use rayon::prelude::*;
use serde::Serialize;
use toml::Value;

use crate::config_file::{canonical_key, set_dotted, Axis, ConfigDocument};
use crate::error::CliError;
use crate::output::{
    ccdf_rows, pdr_rows, probe_writable, write_csv, write_json, AggregateRow, ReplicationRow, AGGREGATE_COLUMNS,
    CCDF_COLUMNS, CSMA_TRACE_COLUMNS, DCC_TRACE_COLUMNS, PDR_COLUMNS, REPLICATION_COLUMNS, SPS_TRACE_COLUMNS,
};

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ConfigDocument,
    pub axes: Vec<Axis>,
    pub output_dir: PathBuf,
    /// Recorded in the metadata, e.g. the figure a sweep belongs to.
    pub name: Option<String>,
}

impl SweepSpec {
    /// A sweep over the axes declared in the document itself.
    pub fn from_document(base: ConfigDocument, output_dir: impl Into<PathBuf>) -> Self {
        let axes = base.axes.clone();
        SweepSpec { base, axes, output_dir: output_dir.into(), name: None }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunSettings {
    pub trace_mac: bool,
    pub trace_dcc: bool,
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub config: SimConfig,
    /// Non-technology axis values, in axis order, as `(short name, value)`.
    pub params: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl SweepPoint {
    /// `{tech}_{param}={value}_seed{n}`; parameters joined in axis order.
    pub fn file_stem(&self) -> String {
        let mut s = self.config.technology.to_string();
        for (k, v) in &self.params {
            s.push_str(&format!("_{k}={v}"));
        }
        s.push_str(&format!("_seed{}", self.config.seed));
        s
    }
}

/// Renders an axis value the way it appears in file names.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) if f.fract() == 0.0 && f.abs() < 1e15 => format!("{}", *f as i64),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        other => other.to_string(),
    }
}

/// Every point of the Cartesian product, technology outermost, the last
/// axis varying fastest. Each point is validated.
pub fn expand(spec: &SweepSpec) -> Result<Vec<SweepPoint>, CliError> {
    let tech_key = canonical_key("tech");
    let (tech_axes, axes): (Vec<&Axis>, Vec<&Axis>) = spec.axes.iter().partition(|a| a.key == tech_key);
    let techs: Vec<Option<&Value>> = match tech_axes.last() {
        Some(a) => a.values.iter().map(Some).collect(),
        None => vec![None],
    };
    let sizes: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    if sizes.contains(&0) {
        return Err(CliError::config("sweep", "empty axis"));
    }
    let combos: usize = sizes.iter().product();
    let mut points = Vec::with_capacity(techs.len() * combos);
    for tech in &techs {
        for c in 0..combos {
            let mut table = spec.base.table().clone();
            if let Some(t) = tech {
                set_dotted(&mut table, &tech_key, (*t).clone()).map_err(|m| CliError::config("sweep", m))?;
            }
            let mut rest = c;
            let mut idx = vec![0; axes.len()];
            for (i, n) in sizes.iter().enumerate().rev() {
                idx[i] = rest % n;
                rest /= n;
            }
            let mut params = Vec::with_capacity(axes.len());
            for (a, &i) in axes.iter().zip(&idx) {
                set_dotted(&mut table, &a.key, a.values[i].clone()).map_err(|m| CliError::config("sweep", m))?;
                params.push((a.label(), value_label(&a.values[i])));
            }
            let context = format!(
                "sweep point {}{}",
                tech.map_or(String::new(), |t| format!("tech={} ", value_label(t))),
                params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
            );
            let changed: Vec<&str> = spec.axes.iter().map(|a| a.key.as_str()).collect();
            let (config, warnings) = spec.base.config_with(&table, context.trim_end(), &changed)?;
            points.push(SweepPoint { config, params, warnings });
        }
    }
    Ok(points)
}

#[derive(Debug, Serialize)]
struct AxisMeta {
    name: String,
    key: String,
    values: Vec<String>,
}

#[derive(Debug, Serialize)]
struct PointMeta<'a> {
    file: String,
    tech: Technology,
    params: BTreeMap<String, String>,
    effective_warmup_s: f64,
    period_us: u64,
    warnings: &'a [String],
    config: &'a SimConfig,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    sweep: Option<&'a str>,
    columns: [&'static str; 12],
    replication_columns: [&'static str; 13],
    axes: Vec<AxisMeta>,
    points: Vec<PointMeta<'a>>,
}

/// What a finished sweep wrote.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// Runs every point and writes, under `output_dir`: one CSV per point with a
/// row per replication, `aggregate.csv`, `metadata.json`, plus PDR and gap
/// curves in `curves/` and traces in `traces/` when requested.
pub fn run_sweep(spec: &SweepSpec, settings: &RunSettings) -> Result<SweepOutcome, CliError> {
    let points = expand(spec)?;
    let out = &spec.output_dir;
    probe_writable(out)?;
    let mut stems: Vec<String> = points.iter().map(SweepPoint::file_stem).collect();
    stems.sort();
    if stems.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::config("sweep", "two sweep points map to the same file name"));
    }
    for p in &points {
        for w in &p.warnings {
            log::warn!("{}: {w}", p.file_stem());
        }
    }
    let opts = RunOptions { trace_mac: settings.trace_mac, trace_dcc: settings.trace_dcc, ..Default::default() };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = settings.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::config("--jobs", e.to_string()))?;
    let results = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                log::info!("running {}", p.file_stem());
                run_replications(&p.config, &opts)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut files = Vec::new();
    let mut rows = Vec::with_capacity(points.len());
    let mut meta_points = Vec::with_capacity(points.len());
    for (p, (pooled, reps)) in points.iter().zip(&results) {
        let stem = p.file_stem();
        let per_rep: Vec<ReplicationRow> =
            reps.iter().zip(0u32..).map(|(o, r)| ReplicationRow::new(&p.config, r, &o.report)).collect();
        let file = format!("{stem}.csv");
        push(&mut files, out.join(&file), |f| write_csv(f, &REPLICATION_COLUMNS, &per_rep))?;
        push(&mut files, out.join("curves").join(format!("{stem}_pdr.csv")), |f| {
            write_csv(f, &PDR_COLUMNS, &pdr_rows(pooled))
        })?;
        push(&mut files, out.join("curves").join(format!("{stem}_ipg_ccdf.csv")), |f| {
            write_csv(f, &CCDF_COLUMNS, &ccdf_rows(pooled))
        })?;
        let mac_columns: &[&str] = match p.config.technology {
            Technology::Ieee80211pStar => &CSMA_TRACE_COLUMNS,
            Technology::LteV2x => &SPS_TRACE_COLUMNS,
        };
        for (r, o) in reps.iter().enumerate() {
            if settings.trace_mac {
                let f = out.join("traces").join(format!("{stem}_rep{r}_mac.csv"));
                push(&mut files, f, |f| write_csv(f, mac_columns, &o.mac_trace))?;
            }
            if settings.trace_dcc {
                let f = out.join("traces").join(format!("{stem}_rep{r}_dcc.csv"));
                push(&mut files, f, |f| write_csv(f, &DCC_TRACE_COLUMNS, &o.dcc_trace))?;
            }
        }
        rows.push(AggregateRow::new(&p.config, pooled));
        meta_points.push(PointMeta {
            file,
            tech: p.config.technology,
            params: p.params.iter().cloned().collect(),
            effective_warmup_s: p.config.warmup(),
            period_us: p.config.period_us(),
            warnings: &p.warnings,
            config: &p.config,
        });
    }
    push(&mut files, out.join(AGGREGATE_FILE), |f| write_csv(f, &AGGREGATE_COLUMNS, &rows))?;
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        sweep: spec.name.as_deref(),
        columns: AGGREGATE_COLUMNS,
        replication_columns: REPLICATION_COLUMNS,
        axes: spec
            .axes
            .iter()
            .map(|a| AxisMeta { name: a.label(), key: a.key.clone(), values: a.values.iter().map(value_label).collect() })
            .collect(),
        points: meta_points,
    };
    push(&mut files, out.join(METADATA_FILE), |f| write_json(f, &meta))?;
    Ok(SweepOutcome { rows, files })
}

fn push(
    files: &mut Vec<PathBuf>,
    path: PathBuf,
    write: impl FnOnce(&Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    write(&path)?;
    files.push(path);
    Ok(())
}
