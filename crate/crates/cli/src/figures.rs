//! Preset sweeps behind each published figure, and the CR table.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use beaconsim_core::dcc::{median_range_m, occupancy_table, OccupancyRow};
use beaconsim_core::engine::SimConfig;
use beaconsim_core::{McsId, Technology};
use serde::Serialize;
use toml::Value;

use crate::config_file::{Axis, ConfigDocument};
use crate::error::CliError;
use crate::output::write_csv;
use crate::sweep::SweepSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Neighbors and CBR vs density at 8 and 23 dBm.
    Fig1,
    /// PDR vs distance at 300 veh/km, one sweep per knob.
    Fig2,
    /// Update-delay ccdf at 300 veh/km vs beacon rate. Same sweep as fig4.
    Fig3,
    Fig4,
    /// PDR within 100 m vs density, one sweep per knob.
    Fig5,
    /// 99.9th percentile update delay vs density and beacon rate.
    Fig6,
    Table3,
}

impl Figure {
    pub const ALL: [Figure; 7] =
        [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig6, Figure::Table3];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Table3 => "table3",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Figure::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Figure::ALL.iter().map(|f| f.name()).collect();
            CliError::config("--figure", format!("unknown figure {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

pub const DENSITIES: [i64; 10] = [50, 100, 150, 200, 250, 300, 350, 400, 450, 500];
pub const POWERS_DBM: [i64; 4] = [8, 13, 18, 23];
pub const BEACON_RATES_HZ: [i64; 4] = [1, 2, 5, 10];

fn ints(v: &[i64]) -> Vec<Value> {
    v.iter().map(|&x| Value::Integer(x)).collect()
}

fn techs() -> Axis {
    Axis::new("tech", Technology::ALL.iter().map(|t| Value::String(t.to_string())).collect())
}

fn mcs_axis() -> Axis {
    Axis::new("mcs", McsId::ALL.iter().map(|m| Value::String(m.to_string())).collect())
}

/// The knob axes of the three-panel figures, with their directory names.
fn knobs() -> [(&'static str, Axis); 3] {
    [
        ("power", Axis::new("pt", ints(&POWERS_DBM))),
        ("beacon_rate", Axis::new("fb", ints(&BEACON_RATES_HZ))),
        ("mcs", mcs_axis()),
    ]
}

/// The sweeps behind `figure`, each writing to its own directory below
/// `out`. `base` supplies everything the figure does not vary.
pub fn figure_sweeps(figure: Figure, base: &ConfigDocument, out: &Path) -> Result<Vec<SweepSpec>, CliError> {
    let mut at_300 = base.clone();
    at_300.set("rho_veh_per_km=300")?;
    let rho = || Axis::new("rho", ints(&DENSITIES));
    let spec = |doc: &ConfigDocument, dir: PathBuf, axes: Vec<Axis>| SweepSpec {
        base: doc.clone(),
        axes,
        output_dir: dir,
        name: Some(figure.name().to_string()),
    };
    let root = out.join(figure.name());
    Ok(match figure {
        Figure::Fig1 => vec![spec(base, root, vec![techs(), Axis::new("pt", ints(&[8, 23])), rho()])],
        Figure::Fig2 => knobs().into_iter().map(|(d, a)| spec(&at_300, root.join(d), vec![techs(), a])).collect(),
        Figure::Fig3 | Figure::Fig4 => {
            vec![spec(&at_300, root.join("beacon_rate"), vec![techs(), Axis::new("fb", ints(&BEACON_RATES_HZ))])]
        }
        Figure::Fig5 => knobs().into_iter().map(|(d, a)| spec(base, root.join(d), vec![techs(), a, rho()])).collect(),
        Figure::Fig6 => vec![spec(
            base,
            root.join("beacon_rate"),
            vec![techs(), Axis::new("fb", ints(&BEACON_RATES_HZ)), rho()],
        )],
        Figure::Table3 => Vec::new(),
    })
}

/// Vehicles expected within the path-loss-only range on both sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRangeRow {
    pub tech: String,
    pub pt: f64,
    pub rho: f64,
    pub median_range_m: f64,
    pub neighbors: f64,
}

pub const MEDIAN_RANGE_COLUMNS: [&str; 5] = ["tech", "pt", "rho", "median_range_m", "neighbors"];
pub const TABLE3_COLUMNS: [&str; 4] = ["mcs", "fb_hz", "cr_11p", "cr_lte"];

pub fn median_range_rows(base: &SimConfig) -> Vec<MedianRangeRow> {
    let mut rows = Vec::new();
    for tech in Technology::ALL {
        for pt in [8.0, 23.0] {
            let r = median_range_m(pt, &base.mcs_profile(), &base.propagation, &base.phy, tech);
            for &rho in &DENSITIES {
                let rho = rho as f64;
                rows.push(MedianRangeRow {
                    tech: tech.to_string(),
                    pt,
                    rho,
                    median_range_m: r,
                    neighbors: 2.0 * rho * r / 1000.0,
                });
            }
        }
    }
    rows
}

pub fn write_median_ranges(base: &SimConfig, out: &Path) -> Result<PathBuf, CliError> {
    let path = out.join(Figure::Fig1.name()).join("median_range.csv");
    write_csv(&path, &MEDIAN_RANGE_COLUMNS, &median_range_rows(base))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3Row {
    pub mcs: String,
    pub fb_hz: f64,
    pub cr_11p: f64,
    pub cr_lte: f64,
}

impl From<&OccupancyRow> for Table3Row {
    fn from(r: &OccupancyRow) -> Self {
        Table3Row { mcs: r.mcs.to_string(), fb_hz: r.fb_hz, cr_11p: r.cr_11p, cr_lte: r.cr_lte }
    }
}

pub fn table3_rows() -> Vec<Table3Row> {
    occupancy_table().iter().map(Table3Row::from).collect()
}

/// Four decimals, trailing zeros dropped.
fn short(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn render_table3() -> String {
    let mut s = String::from("MCS  Beacon frequency  CR 802.11p*  CR LTE-V2X\n");
    for r in occupancy_table() {
        s.push_str(&format!(
            "{:<4} {:>5} Hz          {:<12} {}\n",
            r.mcs.to_string(),
            r.fb_hz,
            short(r.cr_11p),
            short(r.cr_lte)
        ));
    }
    s
}
