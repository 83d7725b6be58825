//! ASCII PLY (`element vertex`, float `x`, `y`, `z`) and `x,y,z` CSV readers
//! and writers. Values are written in shortest round-trip form.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::error::Error as GeometryError;
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Error)]
pub enum PointIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Cloud(#[from] GeometryError),
}

fn parse_err(line: usize, message: impl Into<String>) -> PointIoError {
    PointIoError::Parse {
        line,
        message: message.into(),
    }
}

pub fn write_ply(cloud: &PointCloud, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property float {axis}")?;
    }
    writeln!(out, "end_header")?;
    for p in cloud.iter() {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn parse_ply(text: &str) -> Result<PointCloud, PointIoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut properties: Vec<String> = Vec::new();
    loop {
        let (no, line) = lines.next().ok_or_else(|| parse_err(0, "missing end_header"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(parse_err(no, format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count.parse::<usize>().map_err(|e| parse_err(no, e.to_string()))?);
                } else if vertex_count.is_none() {
                    return Err(parse_err(no, "vertex element must come first"));
                }
            }
            ["property", .., name] if in_vertex => properties.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(parse_err(no, format!("unexpected header line '{line}'"))),
        }
    }
    let count = vertex_count.ok_or_else(|| parse_err(0, "no vertex element"))?;
    let column = |axis: &str| {
        properties
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| parse_err(0, format!("vertex has no '{axis}' property")))
    };
    let (ix, iy, iz) = (column("x")?, column("y")?, column("z")?);

    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let (no, line) = lines.next().ok_or_else(|| parse_err(0, "fewer vertices than declared"))?;
        let values = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(no, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != properties.len() {
            return Err(parse_err(no, format!("expected {} values", properties.len())));
        }
        points.push(Point3::new(values[ix], values[iy], values[iz]));
    }
    Ok(PointCloud::new(points)?)
}

pub fn write_csv(cloud: &PointCloud, mut out: impl Write) -> io::Result<()> {
    for p in cloud.iter() {
        writeln!(out, "{},{},{}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// One `x,y,z` row per point; an optional non-numeric header row is skipped.
pub fn parse_csv(text: &str) -> Result<PointCloud, PointIoError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(i + 1, "expected three comma-separated values"));
        }
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => points.push(Point3::new(v[0], v[1], v[2])),
            Err(_) if i == 0 && points.is_empty() => continue,
            Err(e) => return Err(parse_err(i + 1, e.to_string())),
        }
    }
    Ok(PointCloud::new(points)?)
}

/// Reads `.ply` or `.csv` by extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud, PointIoError> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => parse_ply(&text),
        _ => parse_csv(&text),
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<(), PointIoError> {
    let mut buf = Vec::new();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => write_ply(cloud, &mut buf)?,
        _ => write_csv(cloud, &mut buf)?,
    }
    fs::write(path, buf)?;
    Ok(())
}
