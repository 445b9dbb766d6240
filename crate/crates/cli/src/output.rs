use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Versioned record wrapper: `{"v": 1, ...fields}`.
#[derive(Serialize)]
struct Versioned<'a, T> {
    v: u32,
    #[serde(flatten)]
    record: &'a T,
}

/// Line-delimited JSON sink, a file or stdout.
pub struct Records {
    out: Box<dyn Write>,
    path: Option<PathBuf>,
}

impl Records {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => {
                create_parent(p)?;
                Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?))
            }
            None => Box::new(BufWriter::new(io::stdout())),
        };
        Ok(Self { out, path: path.map(Path::to_path_buf) })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, &Versioned { v: SCHEMA_VERSION, record })?;
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().with_context(|| match &self.path {
            Some(p) => format!("cannot write {}", p.display()),
            None => "cannot write stdout".into(),
        })
    }
}

pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => {
            std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))
        }
        _ => Ok(()),
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
