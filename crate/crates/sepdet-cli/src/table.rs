//! Result tables and their deterministic CSV / JSON rendering.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use sepdet::matcore::C64;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
    Empty,
}

impl Cell {
    /// Shortest round-trip text; the same bytes for the same value on every run.
    fn text(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:?}"),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Cell::F(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::I(v) => Value::from(*v),
            Cell::B(v) => Value::Bool(*v),
            Cell::S(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// computed, but outside tolerance
    Fail,
    /// numerical error; the message column says why
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Fail => "fail",
            Status::Error => "error",
        }
    }
}

/// One output row: named cells in insertion order, plus status.
#[derive(Clone, Debug)]
pub struct Row {
    pub status: Status,
    pub message: String,
    cells: Vec<(String, Cell)>,
}

impl Row {
    pub fn new() -> Self {
        Row { status: Status::Ok, message: String::new(), cells: vec![] }
    }

    pub fn set(&mut self, name: &str, v: impl Into<Cell>) -> &mut Self {
        let v = v.into();
        match self.cells.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = v,
            None => self.cells.push((name.to_string(), v)),
        }
        self
    }

    /// `name_re` and `name_im`
    pub fn complex(&mut self, name: &str, z: C64) -> &mut Self {
        self.set(&format!("{name}_re"), z.re).set(&format!("{name}_im"), z.im)
    }

    pub fn get(&self, name: &str) -> Option<&Cell> {
        self.cells.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn get_f64(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            Cell::F(v) => Some(*v),
            Cell::I(v) => Some(*v as f64),
            _ => None,
        }
    }

    /// Marks the row failed when `err` is not within `tol`.
    pub fn check(&mut self, what: &str, err: f64, tol: f64) -> &mut Self {
        if !(err <= tol) && self.status == Status::Ok {
            self.status = Status::Fail;
            self.message = format!("{what} = {err:.3e} exceeds {tol:.1e}");
        }
        self
    }

    pub fn fail(&mut self, msg: impl Into<String>) -> &mut Self {
        if self.status == Status::Ok {
            self.status = Status::Fail;
            self.message = msg.into();
        }
        self
    }

    pub fn error(&mut self, err: impl std::fmt::Display) -> &mut Self {
        self.status = Status::Error;
        self.message = err.to_string();
        self
    }
}

impl Default for Row {
    fn default() -> Self {
        Self::new()
    }
}

/// Rows sharing a fixed column list. Leading columns echo the inputs, then
/// the computed values; `status` and `message` come last.
#[derive(Clone, Debug)]
pub struct Table {
    columns: Vec<&'static str>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: vec![] }
    }

    pub fn columns(&self) -> Vec<&str> {
        self.columns.iter().copied().chain(["status", "message"]).collect()
    }

    pub fn push(&mut self, row: Row) {
        debug_assert!(row.cells.iter().all(|(k, _)| self.columns.contains(&k.as_str())), "row has an undeclared column");
        self.rows.push(row);
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status == Status::Ok)
    }

    fn cell<'a>(&self, row: &'a Row, col: &str) -> std::borrow::Cow<'a, Cell> {
        use std::borrow::Cow;
        match col {
            "status" => Cow::Owned(Cell::S(row.status.name().into())),
            "message" => Cow::Owned(if row.message.is_empty() { Cell::Empty } else { Cell::S(row.message.clone()) }),
            c => row.get(c).map_or(Cow::Owned(Cell::Empty), Cow::Borrowed),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        let cols = self.columns();
        w.write_record(&cols)?;
        for row in &self.rows {
            w.write_record(cols.iter().map(|c| self.cell(row, c).text()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    pub fn to_json(&self) -> Result<Vec<u8>, CliError> {
        let cols = self.columns();
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj = cols.iter().map(|c| (c.to_string(), self.cell(row, c).json())).collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        let mut out = serde_json::to_vec_pretty(&serde_json::json!({ "columns": cols, "rows": rows }))?;
        out.push(b'\n');
        Ok(out)
    }

    /// Human summary for stderr.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let count = |st: Status| self.rows.iter().filter(|r| r.status == st).count();
        let _ = write!(s, "{} rows: {} ok, {} fail, {} error", self.rows.len(), count(Status::Ok), count(Status::Fail), count(Status::Error));
        for (i, r) in self.rows.iter().enumerate().filter(|(_, r)| r.status != Status::Ok) {
            let _ = write!(s, "\n  row {i}: {} — {}", r.status.name(), r.message);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn render(self, t: &Table) -> Result<Vec<u8>, CliError> {
        match self {
            Format::Csv => t.to_csv(),
            Format::Json => t.to_json(),
        }
    }
}

/// Writes via a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
