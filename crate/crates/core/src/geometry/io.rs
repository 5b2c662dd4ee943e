//! Point-cloud file I/O: ASCII XYZ and binary little-endian PLY.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Provenance};
use crate::vec3::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    /// One `x y z` triple per line, whitespace separated.
    Xyz,
    /// Binary little-endian PLY with float32 or float64 vertex positions.
    Ply,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::Xyz,
        }
    }
}

pub fn read_point_cloud(path: &Path, provenance: Provenance) -> Result<PointCloud> {
    match CloudFormat::from_path(path) {
        CloudFormat::Xyz => read_xyz(path, provenance),
        CloudFormat::Ply => read_ply(path, provenance),
    }
}

pub fn write_point_cloud(pc: &PointCloud, path: &Path) -> Result<()> {
    match CloudFormat::from_path(path) {
        CloudFormat::Xyz => write_xyz(pc, path),
        CloudFormat::Ply => write_ply(pc, path),
    }
}

fn read_xyz(path: &Path, provenance: Provenance) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut coord = [0.0f64; 3];
        for c in coord.iter_mut() {
            let tok = it.next().ok_or_else(|| Error::Parse {
                format: "xyz",
                detail: format!("line {}: expected three coordinates", lineno + 1),
            })?;
            *c = tok.parse().map_err(|_| Error::Parse {
                format: "xyz",
                detail: format!("line {}: bad float {tok:?}", lineno + 1),
            })?;
        }
        points.push(coord);
    }
    PointCloud::new(points, provenance)
}

fn write_xyz(pc: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(pc.len() * 24);
    for p in pc.points() {
        // `{}` prints the shortest representation that parses back exactly.
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_ply(pc: &PointCloud, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(128 + pc.len() * 24);
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\nend_header\n",
        pc.len()
    )
    .expect("writing to a Vec cannot fail");
    for p in pc.points() {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy)]
enum PlyScalar {
    F32,
    F64,
}

impl PlyScalar {
    fn size(self) -> usize {
        match self {
            PlyScalar::F32 => 4,
            PlyScalar::F64 => 8,
        }
    }

    fn parse(name: &str) -> Option<PlyScalar> {
        match name {
            "float" | "float32" => Some(PlyScalar::F32),
            "double" | "float64" => Some(PlyScalar::F64),
            _ => None,
        }
    }

    fn read(self, bytes: &[u8]) -> f64 {
        match self {
            PlyScalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyScalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

fn read_ply(path: &Path, provenance: Provenance) -> Result<PointCloud> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Parse { format: "ply", detail };

    let header_end = find_header_end(&data).ok_or_else(|| bad("missing end_header".into()))?;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| bad("header is not valid ASCII".into()))?;

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex_element = false;
    // (scalar type, offset-in-record) per property; x/y/z slots by index.
    let mut stride = 0usize;
    let mut xyz: [Option<(PlyScalar, usize)>; 3] = [None, None, None];

    for line in header.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("ply") | Some("comment") | Some("end_header") | None => {}
            Some("format") => {
                let kind = it.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(bad(format!("unsupported format {kind:?}")));
                }
            }
            Some("element") => {
                let name = it.next().unwrap_or("");
                let count: usize = it
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad("bad element count".into()))?;
                if name == "vertex" {
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    if count > 0 && vertex_count.is_none() {
                        return Err(bad(format!("element {name:?} precedes vertex data")));
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue;
                }
                let ty = it.next().unwrap_or("");
                if ty == "list" {
                    return Err(bad("list property in vertex element".into()));
                }
                let scalar = PlyScalar::parse(ty)
                    .ok_or_else(|| bad(format!("unsupported vertex property type {ty:?}")))?;
                let name = it.next().unwrap_or("");
                let slot = match name {
                    "x" => Some(0),
                    "y" => Some(1),
                    "z" => Some(2),
                    _ => None,
                };
                if let Some(s) = slot {
                    xyz[s] = Some((scalar, stride));
                }
                stride += scalar.size();
            }
            Some(_) => {}
        }
    }

    let count = vertex_count.ok_or_else(|| bad("no vertex element".into()))?;
    let [Some(px), Some(py), Some(pz)] = xyz else {
        return Err(bad("vertex element lacks x/y/z properties".into()));
    };
    let body = &data[header_end..];
    if body.len() < count * stride {
        return Err(bad(format!(
            "vertex data truncated: need {} bytes, have {}",
            count * stride,
            body.len()
        )));
    }

    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let rec = &body[i * stride..(i + 1) * stride];
        points.push([
            px.0.read(&rec[px.1..]),
            py.0.read(&rec[py.1..]),
            pz.0.read(&rec[pz.1..]),
        ]);
    }
    PointCloud::new(points, provenance)
}

fn find_header_end(data: &[u8]) -> Option<usize> {
    let needle = b"end_header\n";
    data.windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
}

#[allow(dead_code)]
fn points_approx_eq(a: &[Point3], b: &[Point3], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(p, q)| (0..3).all(|i| (p[i] - q[i]).abs() <= tol))
}
