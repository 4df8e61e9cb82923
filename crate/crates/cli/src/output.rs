use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use crate::config::Settings;
use crate::CliError;

/// `.`-decimal scientific notation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

pub fn write_table(settings: &Settings, name: &str, table: &Table) -> Result<PathBuf, CliError> {
    let path = settings.out.join(format!("{name}.csv"));
    std::fs::write(&path, table.render())?;
    Ok(path)
}

/// Sidecar `<name>.json` with the effective config, version, tolerances and a result summary.
pub fn write_sidecar<T: Serialize>(settings: &Settings, name: &str, tolerances: serde_json::Value, result: &T) -> Result<PathBuf, CliError> {
    let path = settings.out.join(format!("{name}.json"));
    let doc = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "config": settings,
        "tolerances": tolerances,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}
