//! Config files: TOML laid out like `SimConfig`, plus an optional `[sweep]`
//! table whose keys are parameters and whose values are lists.

use std::path::Path;

use beaconsim_core::engine::SimConfig;
use toml::{Table, Value};

use crate::error::CliError;

/// Short names accepted for the common sweep parameters.
const ALIASES: [(&str, &str); 4] = [
    ("rho", "rho_veh_per_km"),
    ("fb", "fb_hz"),
    ("pt", "pt_dbm"),
    ("tech", "technology"),
];

/// Expands a short parameter name to its config key.
pub fn canonical_key(name: &str) -> String {
    ALIASES.iter().find(|(short, _)| *short == name).map_or(name, |(_, full)| full).to_string()
}

/// The short name used in file names and tables.
pub fn short_key(key: &str) -> String {
    ALIASES.iter().find(|(_, full)| *full == key).map_or(key, |(short, _)| short).to_string()
}

/// One sweep dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    /// Dotted config key.
    pub key: String,
    pub values: Vec<Value>,
}

impl Axis {
    pub fn new(name: &str, values: Vec<Value>) -> Self {
        Axis { key: canonical_key(name), values }
    }

    pub fn label(&self) -> String {
        short_key(&self.key)
    }
}

/// A parsed config file with command-line overrides applied on top.
#[derive(Debug, Clone)]
pub struct ConfigDocument {
    origin: String,
    text: String,
    table: Table,
    overridden: Vec<String>,
    pub axes: Vec<Axis>,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        ConfigDocument::parse("", "<defaults>").expect("empty document parses")
    }
}

impl ConfigDocument {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let full: Table = text.parse().map_err(|e: toml::de::Error| located(origin, text, &e))?;
        let sim_part = blank_sweep_section(text);
        // Deserialize from text so type errors and unknown keys carry a line.
        toml::from_str::<SimConfig>(&sim_part).map_err(|e| located(origin, &sim_part, &e))?;
        let table: Table = sim_part.parse().map_err(|e: toml::de::Error| located(origin, text, &e))?;
        let axes = match full.get("sweep") {
            None => Vec::new(),
            Some(Value::Table(t)) => parse_axes(t, origin, text)?,
            Some(_) => return Err(CliError::config(at_line(origin, text, "sweep"), "`sweep` must be a table")),
        };
        Ok(ConfigDocument { origin: origin.to_string(), text: text.to_string(), table, overridden: Vec::new(), axes })
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    /// Applies a `key=value` override. The value is read as a TOML value and
    /// falls back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::config("--set", format!("expected key=value, got {assignment:?}")))?;
        let key = canonical_key(key.trim());
        if key.is_empty() {
            return Err(CliError::config("--set", format!("empty key in {assignment:?}")));
        }
        let mut table = self.table.clone();
        set_dotted(&mut table, &key, parse_value(raw.trim())).map_err(|m| CliError::config("--set", m))?;
        self.config_with(&table, &format!("--set {key}"), &[key.as_str()])?;
        self.table = table;
        self.overridden.push(key);
        Ok(())
    }

    /// The table behind [`ConfigDocument::config`], overrides included.
    pub fn table(&self) -> &Table {
        &self.table
    }

    /// The validated config and its soft warnings.
    pub fn config(&self) -> Result<(SimConfig, Vec<String>), CliError> {
        self.config_with(&self.table, "--set", &[])
    }

    /// Deserializes and validates `table`. Errors on `changed` or overridden
    /// keys are attributed to `context`, others to their line in the file.
    pub fn config_with(
        &self,
        table: &Table,
        context: &str,
        changed: &[&str],
    ) -> Result<(SimConfig, Vec<String>), CliError> {
        let cfg: SimConfig = Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(context, e.message().to_string()))?;
        let warnings = cfg.validate().map_err(|e| {
            let origin = match e.key() {
                Some(k) if !changed.contains(&k) && !self.overridden.iter().any(|o| o == k) => {
                    at_line(&self.origin, &self.text, k)
                }
                _ => context.to_string(),
            };
            CliError::config(origin, e.to_string())
        })?;
        Ok((cfg, warnings))
    }
}

/// Serializes a config in the file layout accepted by [`ConfigDocument`].
pub fn emit(cfg: &SimConfig) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(|e| CliError::config("config echo", e.to_string()))
}

/// Convenience for tests and callers holding only text.
pub fn load_config_str(text: &str) -> Result<SimConfig, CliError> {
    ConfigDocument::parse(text, "<string>")?.config().map(|(c, _)| c)
}

pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    ConfigDocument::load(path)?.config().map(|(c, _)| c)
}

pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().ok_or("empty key")?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(format!("`{p}` is not a section")),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_axes(t: &Table, origin: &str, text: &str) -> Result<Vec<Axis>, CliError> {
    let mut axes = Vec::new();
    for (name, v) in t {
        let values = match v {
            Value::Array(a) if !a.is_empty() => a.clone(),
            Value::Table(r) => range_values(r).map_err(|m| CliError::config(at_line(origin, text, name), m))?,
            _ => {
                return Err(CliError::config(
                    at_line(origin, text, name),
                    format!("sweep axis `{name}` must be a non-empty list or {{ from, to, step }}"),
                ))
            }
        };
        axes.push(Axis::new(name, values));
    }
    Ok(axes)
}

/// `{ from = 50, to = 500, step = 50 }`, both ends included.
fn range_values(r: &Table) -> Result<Vec<Value>, String> {
    let num = |k: &str| match r.get(k) {
        Some(Value::Integer(i)) => Ok((*i as f64, true)),
        Some(Value::Float(f)) => Ok((*f, false)),
        _ => Err(format!("range needs numeric `{k}`")),
    };
    let (from, fi) = num("from")?;
    let (to, ti) = num("to")?;
    let (step, si) = num("step")?;
    if !(step > 0.0) || to < from {
        return Err("range needs step > 0 and to >= from".into());
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    if n > 10_000 {
        return Err(format!("range has {n} points"));
    }
    Ok((0..n)
        .map(|k| {
            let x = from + k as f64 * step;
            if fi && ti && si {
                Value::Integer(x.round() as i64)
            } else {
                Value::Float(x)
            }
        })
        .collect())
}

/// Replaces the lines of the `[sweep]` section with blank lines so line
/// numbers of the rest are preserved.
fn blank_sweep_section(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_sweep = false;
    for line in text.lines() {
        if let Some(name) = table_header(line) {
            in_sweep = name == "sweep" || name.starts_with("sweep.");
        }
        if !in_sweep {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn table_header(line: &str) -> Option<&str> {
    let t = line.trim();
    let t = t.split_once('#').map_or(t, |(h, _)| h).trim_end();
    let inner = t.strip_prefix('[')?.strip_suffix(']')?.trim();
    let inner = inner.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(inner).trim();
    let ok = inner.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && inner.chars().all(|c| c.is_ascii_alphanumeric() || "_-. ".contains(c));
    ok.then_some(inner)
}

/// `origin:line` of the line assigning dotted `key`, or `origin` alone.
fn at_line(origin: &str, text: &str, key: &str) -> String {
    let (section, leaf) = key.rsplit_once('.').unwrap_or(("", key));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = table_header(line) {
            current = h.to_string();
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            let k = k.trim();
            let matches = (current == section && k == leaf)
                || (section.is_empty() && current == "sweep" && short_key(&canonical_key(k)) == short_key(leaf))
                || (current.is_empty() && !section.is_empty() && k == key);
            if matches {
                return format!("{origin}:{}", i + 1);
            }
        }
    }
    origin.to_string()
}

fn located(origin: &str, text: &str, e: &toml::de::Error) -> CliError {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            CliError::config(format!("{origin}:{line}"), e.message().trim().to_string())
        }
        None => CliError::config(origin, e.message().trim().to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use beaconsim_core::{McsId, Technology};

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = load_config_str("").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!((cfg.fb_hz, cfg.mcs, cfg.pt_dbm), (10.0, McsId::B, 23.0));
    }

    #[test]
    fn sections_and_integers_are_accepted() {
        let cfg = load_config_str("technology = \"ltev2x\"\nrho_veh_per_km = 200\n[csma]\naifs_us = 58\n").unwrap();
        assert_eq!(cfg.technology, Technology::LteV2x);
        assert_eq!(cfg.rho_veh_per_km, 200.0);
        assert_eq!(cfg.csma.aifs_us, 58);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let e = ConfigDocument::parse("fb_hz = 5\n\nbogus = 1\n", "a.toml").unwrap_err();
        let msg = e.to_string();
        assert!(msg.starts_with("a.toml:3:"), "{msg}");
        assert!(msg.contains("bogus"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn out_of_range_value_reports_its_line() {
        let doc = ConfigDocument::parse("# header\npayload_bytes = 500\n", "b.toml").unwrap();
        let msg = doc.config().unwrap_err().to_string();
        assert!(msg.starts_with("b.toml:2:") && msg.contains("payload_bytes"), "{msg}");
        let doc = ConfigDocument::parse("[metrics]\nbin_width_m = 7\n", "c.toml").unwrap();
        assert!(doc.config().unwrap_err().to_string().starts_with("c.toml:2:"));
    }

    #[test]
    fn soft_bound_warns_and_proceeds() {
        let doc = ConfigDocument::parse("pt_dbm = 50\n", "p.toml").unwrap();
        let (cfg, warnings) = doc.config().unwrap();
        assert_eq!(cfg.pt_dbm, 50.0);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn overrides_win_and_use_aliases() {
        let mut doc = ConfigDocument::parse("pt_dbm = 10\n", "o.toml").unwrap();
        doc.set("pt=18").unwrap();
        doc.set("technology=lte").unwrap_err();
        doc.set("technology=ltev2x").unwrap();
        doc.set("dcc.neighbor_expiry_periods = 3").unwrap();
        let (cfg, _) = doc.config().unwrap();
        assert_eq!((cfg.pt_dbm, cfg.technology, cfg.dcc.neighbor_expiry_periods), (18.0, Technology::LteV2x, 3.0));
        let e = doc.set("payload_bytes=500").unwrap_err();
        assert!(e.to_string().starts_with("--set"), "{e}");
        assert!(doc.set("nonsense").is_err());
    }

    #[test]
    fn sweep_table_is_split_off() {
        let text = "rho_veh_per_km = 100\n[sweep]\nrho = [100, 200]\ntech = [\"ieee80211p\", \"ltev2x\"]\n\n[csma]\nslot_us = 13\n";
        let doc = ConfigDocument::parse(text, "s.toml").unwrap();
        let keys: Vec<&str> = doc.axes.iter().map(|a| a.key.as_str()).collect();
        assert_eq!(keys, ["rho_veh_per_km", "technology"]);
        assert_eq!(doc.config().unwrap().0.csma.slot_us, 13);
        let ranged = ConfigDocument::parse("[sweep]\nrho = { from = 50, to = 500, step = 50 }\n", "r").unwrap();
        assert_eq!(ranged.axes[0].values.len(), 10);
        assert_eq!(ranged.axes[0].values[9], Value::Integer(500));
        assert!(ConfigDocument::parse("[sweep]\nrho = 5\n", "r").is_err());
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = ConfigDocument::parse("fb_hz = 5\nrho_veh_per_km = = 3\n", "x.toml").unwrap_err();
        assert!(e.to_string().starts_with("x.toml:2:"), "{e}");
    }

    proptest::proptest! {
        #[test]
        fn config_echo_round_trips(
            rho in 0.0f64..1000.0,
            fb in 1.0f64..=10.0,
            pt in 8.0f64..=23.0,
            seed in 0u64..(1 << 62),
            lte in proptest::bool::ANY,
            mcs in 0usize..4,
            warm in proptest::option::of(1.0f64..3.0),
        ) {
            let cfg = SimConfig {
                technology: if lte { Technology::LteV2x } else { Technology::Ieee80211pStar },
                rho_veh_per_km: rho,
                fb_hz: fb,
                pt_dbm: pt,
                seed,
                mcs: McsId::ALL[mcs],
                warmup_s: warm,
                ..Default::default()
            };
            let text = emit(&cfg).unwrap();
            let back = load_config_str(&text).unwrap();
            proptest::prop_assert_eq!(back, cfg);
        }
    }
}
