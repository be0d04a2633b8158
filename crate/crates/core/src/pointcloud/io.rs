//! Plain-text formats.
//!
//! XYZ files carry one point per line as three whitespace-separated reals.
//! Sidecar files (saliency, per-point mixing ratios) carry one real per line,
//! and per-point label files one class index per line; line `i` pairs with
//! point `i`. Lines starting with `#` and blank lines are ignored. Reals are
//! written with 17 significant digits, which round-trips binary64 exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, PointCloud, PointLabels, SaliencyMap};
use crate::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            None
        } else {
            Some((i + 1, trimmed))
        }
    })
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_real(field: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("cannot parse {field:?} as a real")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fmt_real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

/// Parses XYZ text; `path` is only used in error messages.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                line,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        points.push(Point3::new(
            parse_real(fields[0], path, line)?,
            parse_real(fields[1], path, line)?,
            parse_real(fields[2], path, line)?,
        ));
    }
    if points.is_empty() {
        return Err(parse_error(path, 0, "file contains no points"));
    }
    PointCloud::new(points)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_xyz(&read_text(path)?, path)
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 72);
    for p in cloud.points() {
        fmt_real(&mut out, p.x);
        out.push(' ');
        fmt_real(&mut out, p.y);
        out.push(' ');
        fmt_real(&mut out, p.z);
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

fn parse_single_values(text: &str, path: &Path) -> Result<Vec<(usize, f64)>> {
    data_lines(text)
        .map(|(line, content)| {
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 1 {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected 1 field, found {}", fields.len()),
                ));
            }
            Ok((line, parse_real(fields[0], path, line)?))
        })
        .collect()
}

pub fn parse_saliency(text: &str, path: &Path) -> Result<SaliencyMap> {
    let values = parse_single_values(text, path)?;
    if let Some((line, v)) = values.iter().find(|(_, v)| *v < 0.0) {
        return Err(parse_error(path, *line, format!("negative saliency {v}")));
    }
    SaliencyMap::new(values.into_iter().map(|(_, v)| v).collect())
}

pub fn read_saliency(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    parse_saliency(&read_text(path)?, path)
}

pub fn write_saliency(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<()> {
    write_values(path, map.scores())
}

/// Reads a sidecar of arbitrary finite reals.
pub fn read_values(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    Ok(parse_single_values(&read_text(path)?, path)?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

pub fn write_values(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 24);
    for &v in values {
        fmt_real(&mut out, v);
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

pub fn parse_point_labels(text: &str, path: &Path, classes: usize) -> Result<PointLabels> {
    let mut labels = Vec::new();
    for (line, content) in data_lines(text) {
        let label: usize = content
            .parse()
            .map_err(|_| parse_error(path, line, format!("cannot parse {content:?} as a class index")))?;
        if label >= classes {
            return Err(parse_error(
                path,
                line,
                format!("class {label} out of range for {classes} classes"),
            ));
        }
        labels.push(label);
    }
    PointLabels::new(labels, classes)
}

pub fn read_point_labels(path: impl AsRef<Path>, classes: usize) -> Result<PointLabels> {
    let path = path.as_ref();
    parse_point_labels(&read_text(path)?, path, classes)
}

pub fn write_point_labels(path: impl AsRef<Path>, labels: &PointLabels) -> Result<()> {
    let mut out = String::new();
    for l in labels.labels() {
        writeln!(out, "{l}").unwrap();
    }
    write_text(path.as_ref(), &out)
}
