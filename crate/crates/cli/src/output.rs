//! Artifact writing. Every file lands via a temporary sibling and a rename,
//! so a reader never sees a partial artifact.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use polyflow::snapshot::write_trajectory;
use polyflow::Trajectory;

pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn atomic(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> std::io::Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.root)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        let path = self.root.join(name);
        tmp.persist(&path).map_err(|e| e.error)?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        self.atomic(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        })
    }

    /// CSV with a header row; floats use the shortest round-trip representation.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        self.atomic(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header)?;
            for row in rows {
                out.write_record(row.iter().map(|v| v.to_string()))?;
            }
            out.flush()
        })
    }

    pub fn trajectory(&mut self, name: &str, traj: &Trajectory) -> std::io::Result<()> {
        self.atomic(name, |w| {
            write_trajectory(&mut &mut *w, traj).map_err(|e| match e {
                polyflow::Error::Io(io) => io,
                other => std::io::Error::other(other.to_string()),
            })
        })
    }

    /// File names written so far, relative to the output directory.
    pub fn artifacts(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect()
    }
}
