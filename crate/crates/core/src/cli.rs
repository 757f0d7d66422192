//! Config-file parsing and report writing for the `nocsim` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::error::ConfigError;
use crate::metrics::CsvRows;
use crate::scenario::Outcome;

/// Parses TOML text into a validated config. Missing keys take defaults.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start].matches('\n').count() + 1);
        ConfigError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> anyhow::Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    parse_config_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// Human-readable summary of an outcome.
pub fn summary(o: &Outcome) -> String {
    let mut s = String::new();
    let verdict = if o.passed() { "PASS" } else { "FAIL" };
    writeln!(s, "[{verdict}] {}", o.scenario).unwrap();
    for (k, v) in &o.scalars {
        writeln!(s, "  {k:32} {v}").unwrap();
    }
    for p in &o.properties {
        writeln!(s, "  {p}").unwrap();
    }
    s
}

fn summary_csv(o: &Outcome) -> String {
    let mut rows = CsvRows::new();
    let name = o.scenario.name();
    for (k, v) in &o.scalars {
        rows.row("scenario", name, k, &v.to_string());
    }
    for p in &o.properties {
        rows.row("property", name, &p.name, &p.value.to_string());
        rows.row(
            "property",
            name,
            &format!("{}.pass", p.name),
            &(p.pass as u8).to_string(),
        );
    }
    rows.finish()
}

/// Writes `<scenario>.<variant>.{csv,json}` per simulation plus
/// `<scenario>.summary.{csv,txt}`. Returns the written paths.
pub fn write_outcome(o: &Outcome, dir: &Path, format: Format) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |file: String, body: String| -> std::io::Result<()> {
        let p = dir.join(file);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    let name = o.scenario.name();
    let extra: BTreeMap<String, f64> = o.scalars.clone();
    for (variant, r) in &o.runs {
        if format.csv() {
            put(format!("{name}.{variant}.csv"), r.to_csv(&extra))?;
        }
        if format.json() {
            put(format!("{name}.{variant}.json"), r.to_json())?;
        }
    }
    put(format!("{name}.summary.csv"), summary_csv(o))?;
    put(format!("{name}.summary.txt"), summary(o))?;
    Ok(written)
}
