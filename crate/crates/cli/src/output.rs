use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use assim_core::{SpaceTimeField, SpatialMesh};

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,x,value` rows, time-major.
pub fn field_csv(f: &SpaceTimeField) -> String {
    let mut out = String::from("t,x,value\n");
    for (i, &t) in f.tgrid().taus().iter().enumerate() {
        for (j, &x) in f.smesh().nodes().iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", num(t), num(x), num(f.get(i, j)));
        }
    }
    out
}

/// `x,value` rows for a nodal spatial vector.
pub fn nodal_csv(smesh: &SpatialMesh, values: &[f64]) -> String {
    let mut out = String::from("x,value\n");
    for (&x, &v) in smesh.nodes().iter().zip(values) {
        let _ = writeln!(out, "{},{}", num(x), num(v));
    }
    out
}

/// Rows of `setting,paper_value,computed_value,relative_difference`.
pub struct Comparison {
    rows: Vec<(String, Option<f64>, f64)>,
}

impl Comparison {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn push(&mut self, setting: impl Into<String>, published: Option<f64>, computed: f64) {
        self.rows.push((setting.into(), published, computed));
    }

    pub fn rows(&self) -> &[(String, Option<f64>, f64)] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,paper_value,computed_value,relative_difference\n");
        for (s, published, c) in &self.rows {
            let (pv, rd) = match published {
                Some(p) => (num(*p), num((c - p).abs() / p.abs())),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{s},{pv},{},{rd}", num(*c));
        }
        out
    }
}

impl Default for Comparison {
    fn default() -> Self {
        Self::new()
    }
}
