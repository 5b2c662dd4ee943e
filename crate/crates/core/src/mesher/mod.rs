//! Zero-level-set extraction by marching cubes, plus mesh file I/O.

mod tables;

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sdf::{LatentCode, SdfNetwork};
use crate::vec3::{self, Point3};

/// Environment variable capping the worker threads used for lattice
/// evaluation. Unset or unparsable means single-threaded.
pub const THREADS_ENV: &str = "SDFIT_THREADS";

/// Axis-aligned extraction bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: Point3,
    pub max: Point3,
}

impl Bounds {
    pub fn new(min: Point3, max: Point3) -> Bounds {
        Bounds { min, max }
    }

    /// The normalized unit box inflated by 5%, covering level sets that
    /// bulge slightly past the samples.
    pub fn default_unit() -> Bounds {
        Bounds { min: [-0.525; 3], max: [0.525; 3] }
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|a| self.max[a].partial_cmp(&self.min[a]) != Some(std::cmp::Ordering::Greater))
    }
}

/// Indexed triangle mesh with per-face unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    pub face_normals: Vec<Point3>,
}

impl TriangleMesh {
    /// Build a mesh, validating indices and deriving face normals.
    /// Degenerate triangles (repeated indices or zero area) are rejected.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<TriangleMesh> {
        let n = vertices.len() as u32;
        let mut face_normals = Vec::with_capacity(triangles.len());
        for (i, t) in triangles.iter().enumerate() {
            if t[0] >= n || t[1] >= n || t[2] >= n {
                return Err(Error::InvalidInput {
                    what: "triangle mesh",
                    detail: format!("triangle {i} references a missing vertex"),
                });
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput {
                    what: "triangle mesh",
                    detail: format!("triangle {i} repeats a vertex index"),
                });
            }
            match face_normal(&vertices, *t) {
                Some(nrm) => face_normals.push(nrm),
                None => {
                    return Err(Error::InvalidInput {
                        what: "triangle mesh",
                        detail: format!("triangle {i} has zero area"),
                    })
                }
            }
        }
        Ok(TriangleMesh { vertices, triangles, face_normals })
    }

    pub fn empty() -> TriangleMesh {
        TriangleMesh { vertices: Vec::new(), triangles: Vec::new(), face_normals: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangles[i];
        let u = vec3::sub(self.vertices[b as usize], self.vertices[a as usize]);
        let v = vec3::sub(self.vertices[c as usize], self.vertices[a as usize]);
        0.5 * vec3::norm(vec3::cross(u, v))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Vertices mapped through a transform (e.g. de-normalization).
    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> Result<TriangleMesh> {
        TriangleMesh::new(self.vertices.iter().map(|&v| f(v)).collect(), self.triangles.clone())
    }

    /// Count of triangles sharing each undirected edge. A closed surface
    /// has every edge shared exactly twice.
    pub fn edge_incidence(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }
}

fn face_normal(vertices: &[Point3], t: [u32; 3]) -> Option<Point3> {
    let u = vec3::sub(vertices[t[1] as usize], vertices[t[0] as usize]);
    let v = vec3::sub(vertices[t[2] as usize], vertices[t[0] as usize]);
    vec3::normalized(vec3::cross(u, v), 1e-20)
}

fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

/// Extract the 0-isosurface of an arbitrary scalar field sampled on a
/// `(resolution + 1)³` lattice over `bounds`, using the canonical 256-case
/// tables with linear interpolation along crossing edges.
///
/// A field of uniform sign yields an empty mesh; a non-finite sample is an
/// error naming the lattice coordinate. Extraction is deterministic for a
/// fixed field and resolution regardless of the worker thread count.
pub fn extract_isosurface<F>(field: &F, resolution: usize, bounds: Bounds) -> Result<TriangleMesh>
where
    F: Fn(Point3) -> f64 + Sync,
{
    assert!(resolution >= 2, "resolution must be at least 2");
    if bounds.is_degenerate() {
        return Err(Error::InvalidInput {
            what: "bounds",
            detail: format!("degenerate box {bounds:?}"),
        });
    }
    let n = resolution + 1;
    let step = [
        (bounds.max[0] - bounds.min[0]) / resolution as f64,
        (bounds.max[1] - bounds.min[1]) / resolution as f64,
        (bounds.max[2] - bounds.min[2]) / resolution as f64,
    ];
    let lattice_point = |ix: usize, iy: usize, iz: usize| -> Point3 {
        [
            bounds.min[0] + step[0] * ix as f64,
            bounds.min[1] + step[1] * iy as f64,
            bounds.min[2] + step[2] * iz as f64,
        ]
    };

    // Sample the lattice, slab-parallel over z.
    let mut values = vec![0.0f64; n * n * n];
    let threads = worker_threads().min(n);
    if threads <= 1 {
        let mut idx = 0;
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    values[idx] = field(lattice_point(ix, iy, iz));
                    idx += 1;
                }
            }
        }
    } else {
        let slab = n * n;
        let chunk_slabs = n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (c, chunk) in values.chunks_mut(chunk_slabs * slab).enumerate() {
                let z0 = c * chunk_slabs;
                scope.spawn(move || {
                    for (local, v) in chunk.iter_mut().enumerate() {
                        let iz = z0 + local / slab;
                        let iy = (local % slab) / n;
                        let ix = local % n;
                        *v = field(lattice_point(ix, iy, iz));
                    }
                });
            }
        });
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteField(bad % n, (bad / n) % n, bad / (n * n)));
    }

    // March the cells in a fixed order; weld vertices by global lattice edge.
    let value_at = |ix: usize, iy: usize, iz: usize| values[ix + n * (iy + n * iz)];
    // Cube corner offsets matching the table convention.
    const CORNER: [[usize; 3]; 8] = [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ];

    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut face_normals: Vec<Point3> = Vec::new();
    let mut edge_vertex: HashMap<u64, u32> = HashMap::new();

    for iz in 0..resolution {
        for iy in 0..resolution {
            for ix in 0..resolution {
                let mut corner_vals = [0.0f64; 8];
                let mut case = 0usize;
                for (c, off) in CORNER.iter().enumerate() {
                    let v = value_at(ix + off[0], iy + off[1], iz + off[2]);
                    corner_vals[c] = v;
                    if v < 0.0 {
                        case |= 1 << c;
                    }
                }
                if tables::EDGE_TABLE[case] == 0 {
                    continue;
                }

                let mut cube_edge_vertex = [u32::MAX; 12];
                for (e, ends) in tables::EDGE_ENDPOINTS.iter().enumerate() {
                    if tables::EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (c0, c1) = (ends[0], ends[1]);
                    let g0 = [
                        ix + CORNER[c0][0],
                        iy + CORNER[c0][1],
                        iz + CORNER[c0][2],
                    ];
                    let g1 = [
                        ix + CORNER[c1][0],
                        iy + CORNER[c1][1],
                        iz + CORNER[c1][2],
                    ];
                    let key = edge_key(g0, g1, n);
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let (v0, v1) = (corner_vals[c0], corner_vals[c1]);
                        let t = if v1 == v0 { 0.5 } else { (0.0 - v0) / (v1 - v0) };
                        let p0 = lattice_point(g0[0], g0[1], g0[2]);
                        let p1 = lattice_point(g1[0], g1[1], g1[2]);
                        let p = [
                            p0[0] + t * (p1[0] - p0[0]),
                            p0[1] + t * (p1[1] - p0[1]),
                            p0[2] + t * (p1[2] - p0[2]),
                        ];
                        let id = vertices.len() as u32;
                        vertices.push(p);
                        id
                    });
                    cube_edge_vertex[e] = id;
                }

                let tri = &tables::TRI_TABLE[case];
                let mut i = 0;
                while tri[i] >= 0 {
                    // The tables wind clockwise under the inside = negative
                    // convention here; swap two indices so face normals
                    // point along increasing field values (outward).
                    let t = [
                        cube_edge_vertex[tri[i] as usize],
                        cube_edge_vertex[tri[i + 2] as usize],
                        cube_edge_vertex[tri[i + 1] as usize],
                    ];
                    debug_assert!(t.iter().all(|&v| v != u32::MAX));
                    // Exact corner crossings can collapse a triangle to zero
                    // area; those are dropped rather than emitted with an
                    // undefined normal.
                    if let Some(nrm) = face_normal(&vertices, t) {
                        triangles.push(t);
                        face_normals.push(nrm);
                    }
                    i += 3;
                }
            }
        }
    }

    Ok(TriangleMesh { vertices, triangles, face_normals })
}

fn edge_key(a: [usize; 3], b: [usize; 3], n: usize) -> u64 {
    let idx = |p: [usize; 3]| (p[0] + n * (p[1] + n * p[2])) as u64;
    // Undirected: orient by the smaller lattice index.
    let (lo, hi) = if idx(a) <= idx(b) { (a, b) } else { (b, a) };
    // The axis distinguishes the three edges leaving a lattice point.
    let axis = if hi[0] != lo[0] {
        0
    } else if hi[1] != lo[1] {
        1
    } else {
        2
    } as u64;
    idx(lo) * 3 + axis
}

/// Extract the zero-level set of a trained field.
pub fn extract_zero_level(
    net: &SdfNetwork,
    code: &LatentCode,
    resolution: usize,
    bounds: Bounds,
) -> Result<TriangleMesh> {
    // Surface the code-length error before the closure swallows it.
    net.evaluate(code, bounds.min)?;
    let field = |p: Point3| net.evaluate(code, p).expect("code length already validated");
    extract_isosurface(&field, resolution, bounds)
}

// ── Mesh file I/O ───────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    /// ASCII: `v x y z` lines, then 1-based `f i j k` lines.
    Obj,
    /// Binary little-endian: float32 vertices, int32 face indices.
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> MeshFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => MeshFormat::Ply,
            _ => MeshFormat::Obj,
        }
    }
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    match MeshFormat::from_path(path) {
        MeshFormat::Obj => write_obj(mesh, path),
        MeshFormat::Ply => write_ply(mesh, path),
    }
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match MeshFormat::from_path(path) {
        MeshFormat::Obj => read_obj(path),
        MeshFormat::Ply => read_ply(path),
    }
}

fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(mesh.vertices.len() * 32 + mesh.triangles.len() * 16);
    for v in &mesh.vertices {
        // `{}` keeps the shortest exact round-trip representation.
        out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |lineno: usize, what: &str| Error::Parse {
        format: "obj",
        detail: format!("line {}: {what}", lineno + 1),
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for c in p.iter_mut() {
                    *c = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad(lineno, "bad vertex"))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut t = [0u32; 3];
                for i in t.iter_mut() {
                    let tok = it.next().ok_or_else(|| bad(lineno, "face needs 3 indices"))?;
                    let first = tok.split('/').next().unwrap_or(tok);
                    let one_based: u32 =
                        first.parse().map_err(|_| bad(lineno, "bad face index"))?;
                    if one_based == 0 {
                        return Err(bad(lineno, "face indices are 1-based"));
                    }
                    *i = one_based - 1;
                }
                triangles.push(t);
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Ok(TriangleMesh { vertices, triangles, face_normals: Vec::new() });
    }
    TriangleMesh::new(vertices, triangles)
}

fn write_ply(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(128 + mesh.vertices.len() * 12 + mesh.triangles.len() * 13);
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )
    .expect("writing to a Vec cannot fail");
    for v in &mesh.vertices {
        for c in v {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        buf.push(3);
        for &i in t {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Parse { format: "ply", detail };
    let needle = b"end_header\n";
    let header_end = data
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
        .ok_or_else(|| bad("missing end_header".into()))?;
    let header =
        std::str::from_utf8(&data[..header_end]).map_err(|_| bad("header not ASCII".into()))?;

    let mut vertex_count = None;
    let mut face_count = None;
    for line in header.lines() {
        let mut it = line.split_whitespace();
        if it.next() == Some("element") {
            match (it.next(), it.next().and_then(|c| c.parse::<usize>().ok())) {
                (Some("vertex"), Some(c)) => vertex_count = Some(c),
                (Some("face"), Some(c)) => face_count = Some(c),
                _ => {}
            }
        }
    }
    let nv = vertex_count.ok_or_else(|| bad("no vertex element".into()))?;
    let nf = face_count.ok_or_else(|| bad("no face element".into()))?;

    let mut pos = header_end;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > data.len() {
            return Err(Error::Parse { format: "ply", detail: "truncated body".into() });
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let rec = take(&mut pos, 12)?;
        vertices.push([
            f32::from_le_bytes(rec[0..4].try_into().unwrap()) as f64,
            f32::from_le_bytes(rec[4..8].try_into().unwrap()) as f64,
            f32::from_le_bytes(rec[8..12].try_into().unwrap()) as f64,
        ]);
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let count = take(&mut pos, 1)?[0];
        if count != 3 {
            return Err(bad(format!("only triangles supported, got {count}-gon")));
        }
        let rec = take(&mut pos, 12)?;
        let mut t = [0u32; 3];
        for (i, chunk) in rec.chunks_exact(4).enumerate() {
            let v = i32::from_le_bytes(chunk.try_into().unwrap());
            if v < 0 {
                return Err(bad("negative vertex index".into()));
            }
            t[i] = v as u32;
        }
        triangles.push(t);
    }
    if triangles.is_empty() {
        return Ok(TriangleMesh { vertices, triangles, face_normals: Vec::new() });
    }
    TriangleMesh::new(vertices, triangles)
}
