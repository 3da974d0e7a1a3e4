//! On-disk formats.
//!
//! * depth maps: text header `DPTH W H focal cx cy` and a newline, then
//!   `W * H` little-endian `f32` depths in mm, row-major;
//! * ROI masks: binary PGM (`P5`), 255 inside;
//! * shapes: CSV `s_mm,x_mm,y_mm,z_mm`;
//! * estimator weights: CSV `net,row,neuron,weight`.

use std::io::Write;
use std::path::Path;

use endonav_core::depth::{DepthMap, Intrinsics, Roi};
use endonav_core::jacobian::RbfJacobian;
use endonav_core::Vec3;

use crate::{format_err, io_err, Error, Result};

pub fn encode_depth(map: &DepthMap) -> Vec<u8> {
    let i = map.intrinsics();
    let mut out = format!("DPTH {} {} {:?} {:?} {:?}\n", i.width, i.height, i.focal, i.cx, i.cy).into_bytes();
    for d in map.data() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| format_err(path, "missing DPTH header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| format_err(path, "header is not text"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "DPTH" {
        return Err(format_err(path, format!("malformed header `{header}`")));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| format_err(path, format!("bad size `{s}`")));
    let real = |s: &str| s.parse::<f64>().map_err(|_| format_err(path, format!("bad number `{s}`")));
    let (w, h) = (int(fields[1])?, int(fields[2])?);
    let intrinsics = Intrinsics { width: w, height: h, focal: real(fields[3])?, cx: real(fields[4])?, cy: real(fields[5])? };
    let body = &bytes[nl + 1..];
    let expected = w.checked_mul(h).and_then(|n| n.checked_mul(4));
    if expected != Some(body.len()) {
        return Err(format_err(
            path,
            format!("header declares {w}x{h} ({} bytes) but {} bytes follow", w * h * 4, body.len()),
        ));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    DepthMap::new(intrinsics, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn save_depth(path: &Path, map: &DepthMap) -> Result<()> {
    std::fs::write(path, encode_depth(map)).map_err(io_err(path))
}

pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_depth(&bytes, path)
}

pub fn encode_pgm(roi: &Roi) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", roi.width(), roi.height()).into_bytes();
    out.extend(roi.mask().iter().map(|m| if *m { 255u8 } else { 0 }));
    out
}

pub fn save_pgm(path: &Path, roi: &Roi) -> Result<()> {
    std::fs::write(path, encode_pgm(roi)).map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => format_err(path, format!("{other:?}")),
    }
}

/// Writes a polyline with cumulative arc length in the first column.
pub fn save_shape(path: &Path, points: &[Vec3]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["s_mm", "x_mm", "y_mm", "z_mm"]).map_err(|e| csv_err(path, e))?;
    let mut s = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            s += (p - points[i - 1]).norm();
        }
        w.write_record([s, p.x, p.y, p.z].map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn load_shape(path: &Path) -> Result<Vec<Vec3>> {
    let table = read_table(path)?;
    let cols = ["x_mm", "y_mm", "z_mm"].map(|c| table.column(c));
    let [x, y, z] = cols;
    let (x, y, z) = (x?, y?, z?);
    Ok((0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect())
}

/// Appends `net`'s weights to an open writer.
fn write_weights<W: Write>(w: &mut csv::Writer<W>, net: &str, est: &RbfJacobian) -> csv::Result<()> {
    for (row, neuron, value) in est.weight_entries() {
        w.write_record([net.to_string(), row.to_string(), neuron.to_string(), value.to_string()])?;
    }
    Ok(())
}

/// Writes several named estimators into one weight file.
pub fn save_weights(path: &Path, nets: &[(&str, &RbfJacobian)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["net", "row", "neuron", "weight"]).map_err(|e| csv_err(path, e))?;
    for (name, est) in nets {
        write_weights(&mut w, name, est).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads the rows of `net` from a weight file into `est`. Every weight of
/// the estimator must be present exactly once.
pub fn load_weights(path: &Path, net: &str, est: &mut RbfJacobian) -> Result<()> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["net", "row", "neuron", "weight"] {
        return Err(format_err(path, "expected header net,row,neuron,weight"));
    }
    let total = est.weights().len();
    let mut seen = vec![false; total];
    let xi = est.neurons();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if &rec[0] != net {
            continue;
        }
        let parse = |k: usize| rec[k].parse::<usize>().map_err(|_| format_err(path, format!("bad index `{}`", &rec[k])));
        let (row, neuron) = (parse(1)?, parse(2)?);
        let value: f64 = rec[3].parse().map_err(|_| format_err(path, format!("bad weight `{}`", &rec[3])))?;
        est.set_weight_entry(row, neuron, value).map_err(|e| format_err(path, e.to_string()))?;
        let k = row * xi + neuron;
        if std::mem::replace(&mut seen[k], true) {
            return Err(format_err(path, format!("duplicate weight {net}[{row}, {neuron}]")));
        }
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        return Err(format_err(path, format!("{missing} of {total} `{net}` weights missing")));
    }
    Ok(())
}

/// Numeric CSV read into named columns.
pub struct Table {
    path: std::path::PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { path: self.path.clone(), column: name.into() })?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Reads a CSV whose cells are all numbers; empty cells become NaN.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| format_err(path, format!("non-numeric cell on line {}", rows.len() + 2)))?;
        rows.push(row);
    }
    Ok(Table { path: path.to_path_buf(), headers, rows })
}
