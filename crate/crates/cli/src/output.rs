//! CSV and JSON writers.
//!
//! Every CSV starts with `#` comment lines giving the tool version, the
//! command and the resolved configuration as one-line JSON, then a header
//! row. Floats use the shortest representation that round-trips. Nothing
//! time- or host-dependent is written, so reruns are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
    Empty,
}

impl Cell {
    fn write(&self, out: &mut impl Write, buf: &mut ryu::Buffer) -> std::io::Result<()> {
        match self {
            Cell::F(v) => out.write_all(buf.format(*v).as_bytes()),
            Cell::U(v) => write!(out, "{v}"),
            Cell::B(v) => write!(out, "{v}"),
            Cell::S(s) if s.contains([',', '"', '\n']) => write!(out, "\"{}\"", s.replace('"', "\"\"")),
            Cell::S(s) => out.write_all(s.as_bytes()),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
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

pub struct CsvWriter {
    out: BufWriter<File>,
    buf: ryu::Buffer,
    columns: usize,
}

impl CsvWriter {
    pub fn row(&mut self, cells: Vec<Cell>) -> Result<(), CliError> {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.out.write_all(b",")?;
            }
            c.write(&mut self.out, &mut self.buf)?;
        }
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    result: T,
}

/// Destination for one command's files.
pub struct Output<'a> {
    dir: Option<PathBuf>,
    command: &'a str,
    config: &'a RunConfig,
}

impl<'a> Output<'a> {
    pub fn new(dir: Option<&Path>, command: &'a str, config: &'a RunConfig) -> Result<Self, CliError> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), command, config })
    }

    /// Opens `<out>/<name>` with provenance comments and a header row, or
    /// returns `None` when no output directory was given.
    pub fn csv(&self, name: &str, header: &[&str]) -> Result<Option<CsvWriter>, CliError> {
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let mut out = BufWriter::new(File::create(dir.join(name))?);
        let config = serde_json::to_string(self.config).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(out, "# intermap {VERSION}")?;
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# config: {config}")?;
        writeln!(out, "{}", header.join(","))?;
        Ok(Some(CsvWriter { out, buf: ryu::Buffer::new(), columns: header.len() }))
    }

    /// Writes all rows to a CSV in one go.
    pub fn table<I>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        if let Some(mut w) = self.csv(name, header)? {
            for r in rows {
                w.row(r)?;
            }
            w.finish()?;
        }
        Ok(())
    }

    /// Prints the JSON summary to stdout and writes it to
    /// `<out>/<command>.json`.
    pub fn summary<T: Serialize>(&self, result: T) -> Result<(), CliError> {
        let s = Summary { version: VERSION, command: self.command, config: self.config, result };
        let mut text = serde_json::to_string_pretty(&s).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        if let Some(dir) = &self.dir {
            std::fs::write(dir.join(format!("{}.json", self.command)), &text)?;
        }
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes())?;
        stdout.flush()?;
        Ok(())
    }
}
