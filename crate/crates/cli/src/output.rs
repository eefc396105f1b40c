//! Run-directory writers. Floats are printed with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use turnpike_core::grid::Grid;
use turnpike_core::parabolic::{Control, Trajectory};

use crate::error::CliError;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct RunDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.to_owned(),
            source,
        })?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        Ok((path, BufWriter::new(file)))
    }

    fn finish(&mut self, path: PathBuf, result: std::io::Result<()>) -> Result<(), CliError> {
        result.map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let (path, mut w) = self.open(name)?;
        let result = serde_json::to_writer_pretty(&mut w, value)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(w))
            .and_then(|_| w.flush());
        self.finish(path, result)
    }

    /// Writes `header` then one line per row of already formatted cells.
    pub fn csv<I>(&mut self, name: &str, header: &str, rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let (path, mut w) = self.open(name)?;
        let result = (|| {
            writeln!(w, "{header}")?;
            for row in rows {
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()
        })();
        self.finish(path, result)
    }

    /// `t,x,value` for every `stride`-th snapshot and the last one.
    pub fn trajectory(
        &mut self,
        name: &str,
        grid: &Grid,
        y: &Trajectory,
        stride: usize,
    ) -> Result<(), CliError> {
        let xs = grid.coordinates();
        let rows = sampled(y.nt() + 1, stride).flat_map(|k| {
            let t = y.time(k);
            let snap = y.snapshot(k);
            xs.iter()
                .zip(snap)
                .map(move |(x, v)| vec![num(t), num(*x), num(*v)])
                .collect::<Vec<_>>()
        });
        self.csv(name, "t,x,value", rows)
    }

    /// `t,x,value` for control steps, `U_k` stamped at `t_k`.
    pub fn control(
        &mut self,
        name: &str,
        grid: &Grid,
        u: &Control,
        dt: f64,
        stride: usize,
    ) -> Result<(), CliError> {
        let xs = grid.coordinates();
        let rows = sampled(u.nt(), stride).flat_map(|k| {
            let t = k as f64 * dt;
            xs.iter()
                .zip(u.step(k))
                .map(move |(x, v)| vec![num(t), num(*x), num(*v)])
                .collect::<Vec<_>>()
        });
        self.csv(name, "t,x,value", rows)
    }
}

/// `0, stride, 2·stride, …` below `len`, always including `len − 1`.
fn sampled(len: usize, stride: usize) -> impl Iterator<Item = usize> {
    let last = len.saturating_sub(1);
    (0..len)
        .step_by(stride.max(1))
        .chain((last % stride.max(1) != 0).then_some(last))
}
