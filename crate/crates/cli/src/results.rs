//! CSV result tables with a `#`-prefixed metadata block.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// Empty for dimensionless or categorical columns.
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, unit: &str) -> Self {
        Column {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    /// Reals use 17 significant digits so they parse back to the same bits.
    pub fn render(&self) -> String {
        match self {
            Cell::Real(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Ordered `key: value` pairs; a multi-line value becomes one comment line per line.
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: Vec<Column>) -> Self {
        ResultTable {
            columns,
            rows: Vec::new(),
            metadata: vec![("tool".into(), format!("difflink {}", env!("CARGO_PKG_VERSION")))],
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row arity differs from the column schema");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let mut lines = v.lines();
            out.push_str(&format!("# {k}: {}\n", lines.next().unwrap_or("")));
            for l in lines {
                out.push_str(&format!("#   {l}\n"));
            }
        }
        let units: Vec<String> = self
            .columns
            .iter()
            .filter(|c| !c.unit.is_empty())
            .map(|c| format!("{}={}", c.name, c.unit))
            .collect();
        if !units.is_empty() {
            out.push_str(&format!("# units: {}\n", units.join(", ")));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str())).unwrap();
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).unwrap();
        }
        out.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Header and raw cell strings of a CSV written by [`ResultTable::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvContents {
    pub metadata: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvContents {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn reals(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column(name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }

    /// Value of the first `# key: value` metadata line for `key`.
    pub fn meta(&self, key: &str) -> Option<&str> {
        let prefix = format!("{key}: ");
        self.metadata.iter().find_map(|l| l.strip_prefix(&prefix))
    }
}

pub fn read_csv(path: &Path) -> io::Result<CsvContents> {
    let text = fs::read_to_string(path)?;
    let metadata = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim_start().to_string())
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().map_err(io::Error::other)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(io::Error::other)?.iter().map(String::from).collect());
    }
    Ok(CsvContents { metadata, header, rows })
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
