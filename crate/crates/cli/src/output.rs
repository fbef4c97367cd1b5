//! CSV and JSON artifacts.
//!
//! CSV files open with a `# schema: <name>/v<version>` comment row followed
//! by the header. Floats are printed with 12 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// A cell value.
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($v)),*]
    };
}

pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    columns: usize,
}

impl CsvTable {
    pub fn create(path: impl AsRef<Path>, schema: &str, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# schema: {schema}/v{SCHEMA_VERSION}")?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(header)?;
        Ok(CsvTable {
            path,
            writer,
            columns: header.len(),
        })
    }

    pub fn write(&mut self, cells: Vec<Cell>) -> Result<()> {
        anyhow::ensure!(
            cells.len() == self.columns,
            "row has {} cells, {} expects {}",
            cells.len(),
            self.path.display(),
            self.columns
        );
        self.writer.write_record(cells.iter().map(Cell::render))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub fn write_json(path: impl AsRef<Path>, value: &serde_json::Value) -> Result<PathBuf> {
    let path = path.as_ref().to_path_buf();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// JSON number for a float, `null` when not finite.
pub fn json_f64(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.00000000000e-1");
        assert_eq!(fmt_f64(-1234.5), "-1.23450000000e3");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn schema_row_then_header() {
        let dir = std::env::temp_dir().join(format!("exal-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut t = CsvTable::create(dir.join("t.csv"), "demo", &["a", "b"]).unwrap();
        t.write(row![1usize, 0.5]).unwrap();
        assert!(t.write(row![1usize]).is_err());
        let path = t.finish().unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "# schema: demo/v1\na,b\n1,5.00000000000e-1\n");
        std::fs::remove_dir_all(dir).unwrap();
    }
}
