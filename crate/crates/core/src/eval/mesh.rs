use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::field::Sdf;
use crate::geom::{NormalizationRecord, Vec3};

/// Triangle mesh with shared vertices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    /// Unnormalized face normal `(b − a) × (c − a)`.
    pub fn face_normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| 0.5 * self.face_normal(i).norm())
            .sum()
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    /// `V − E + F` over the vertices referenced by triangles.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &v in t {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Maps a mesh from the normalized scene back to world units.
    pub fn to_world(&self, record: &NormalizationRecord) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| record.to_world(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    /// Parses `v` and `f` records; polygons are fan-triangulated and other
    /// records are ignored.
    pub fn from_obj(text: &str) -> std::result::Result<Mesh, String> {
        let mut mesh = Mesh::default();
        for (line_no, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let bad = |what: &str| format!("line {}: {what}", line_no + 1);
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                        .collect::<std::result::Result<_, _>>()?;
                    if c.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|s| {
                            let first = s.split('/').next().unwrap_or("");
                            match first.parse::<i64>() {
                                Ok(i) if i >= 1 => Ok((i - 1) as u32),
                                _ => Err(bad("bad face index")),
                            }
                        })
                        .collect::<std::result::Result<_, _>>()?;
                    if idx.len() < 3 {
                        return Err(bad("face needs at least three vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        let n = mesh.vertices.len() as u32;
        if mesh.triangles.iter().flatten().any(|&i| i >= n) {
            return Err("face index out of range".into());
        }
        Ok(mesh)
    }
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, mesh.to_obj()).map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Mesh::from_obj(&text).map_err(|m| Error::format(path, m))
}

/// Axis-aligned sampling box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoundingBox {
    pub fn cube(half: f64) -> Self {
        Self {
            min: Vec3::repeat(-half),
            max: Vec3::repeat(half),
        }
    }
}

// Cube corner `i` sits at offset (i & 1, (i >> 1) & 1, (i >> 2) & 1).
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn corner_offset(i: usize) -> Vec3 {
    Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)
}

fn edge_index(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(p, q)| (p, q) == (a.min(b), a.max(b)))
        .expect("corners share an edge")
}

/// Triangles (as cube edge indices) for each of the 256 inside/outside
/// corner patterns, derived from face-by-face contour segments so that
/// neighboring cubes always agree on their shared face.
fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(triangulate_case))
}

fn triangulate_case(case: usize) -> Vec<[u8; 3]> {
    let inside = |c: usize| case & (1 << c) != 0;
    let edge_mid = |e: usize| 0.5 * (corner_offset(EDGES[e].0) + corner_offset(EDGES[e].1));
    let mut next = [usize::MAX; 12];

    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let corner = |u: usize, v: usize| (side << axis) | (u << b) | (v << c);
            let ring = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            let mut normal = Vec3::zeros();
            normal[axis] = if side == 1 { 1.0 } else { -1.0 };
            let crossings: Vec<usize> = (0..4)
                .filter(|&k| inside(ring[k]) != inside(ring[(k + 1) % 4]))
                .collect();
            let mut segments: Vec<(usize, usize, Vec3)> = Vec::new();
            let ring_edge = |k: usize| edge_index(ring[k % 4], ring[(k + 1) % 4]);
            match crossings.len() {
                0 => {}
                2 => {
                    let (ins, outs): (Vec<usize>, Vec<usize>) =
                        ring.iter().partition(|&&r| inside(r));
                    let mean = |v: &[usize]| {
                        v.iter().map(|&i| corner_offset(i)).sum::<Vec3>() / v.len() as f64
                    };
                    let toward_outside = mean(&outs) - mean(&ins);
                    segments.push((
                        ring_edge(crossings[0]),
                        ring_edge(crossings[1]),
                        toward_outside,
                    ));
                }
                4 => {
                    // ambiguous face: cut off each inside corner separately
                    for k in 0..4 {
                        if inside(ring[k]) {
                            let (e0, e1) = (ring_edge(k + 3), ring_edge(k));
                            let mid = 0.5 * (edge_mid(e0) + edge_mid(e1));
                            segments.push((e0, e1, mid - corner_offset(ring[k])));
                        }
                    }
                }
                _ => unreachable!("a face ring changes sign an even number of times"),
            }
            for (e0, e1, toward_outside) in segments {
                let forward = toward_outside.cross(&normal);
                let (from, to) = if (edge_mid(e1) - edge_mid(e0)).dot(&forward) > 0.0 {
                    (e0, e1)
                } else {
                    (e1, e0)
                };
                next[from] = to;
            }
        }
    }

    let mut triangles = Vec::new();
    let mut used = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || used[start] {
            continue;
        }
        let mut ring = vec![start];
        used[start] = true;
        let mut e = next[start];
        while e != start {
            used[e] = true;
            ring.push(e);
            e = next[e];
        }
        for k in 1..ring.len() - 1 {
            triangles.push([ring[0] as u8, ring[k] as u8, ring[k + 1] as u8]);
        }
    }
    triangles
}

/// Extracts the zero level set of `field` sampled on `resolution³` grid
/// nodes spanning `bbox`. Triangles wind counter-clockwise seen from the
/// positive side, and vertices on shared cube edges are welded.
pub fn marching_cubes<S: Sdf>(field: &S, bbox: BoundingBox, resolution: usize) -> Result<Mesh> {
    if resolution < 8 {
        return Err(Error::Config(format!(
            "marching cubes needs at least 8 samples per axis, got {resolution}"
        )));
    }
    if !(0..3).all(|a| bbox.max[a] > bbox.min[a]) {
        return Err(Error::Config("bounding box is empty".into()));
    }
    let n = resolution;
    let step = (bbox.max - bbox.min) / (n - 1) as f64;
    let node = |i: usize, j: usize, k: usize| {
        bbox.min + Vec3::new(i as f64 * step.x, j as f64 * step.y, k as f64 * step.z)
    };
    let slice = |k: usize| -> Vec<f64> {
        let points: Vec<Vec3> = (0..n * n).map(|idx| node(idx % n, idx / n, k)).collect();
        field
            .values(&points)
            .into_iter()
            .map(|v| if v.is_nan() { f64::INFINITY } else { v })
            .collect()
    };

    let table = case_table();
    let mut mesh = Mesh::default();
    let mut welded: HashMap<(usize, usize, usize, usize), u32> = HashMap::new();
    let mut lower = slice(0);
    for k in 0..n - 1 {
        let upper = slice(k + 1);
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let value = |c: usize| {
                    let (di, dj, dk) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                    let s = if dk == 0 { &lower } else { &upper };
                    s[(j + dj) * n + i + di]
                };
                let values: [f64; 8] = std::array::from_fn(value);
                let case = (0..8).fold(0, |acc, c| acc | (((values[c] < 0.0) as usize) << c));
                for tri in &table[case] {
                    let mut ids = [0u32; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let (a, b) = EDGES[e as usize];
                        let oa = (i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1));
                        let axis = (a ^ b).trailing_zeros() as usize;
                        let key = (oa.0, oa.1, oa.2, axis);
                        ids[slot] = *welded.entry(key).or_insert_with(|| {
                            let (fa, fb) = (values[a], values[b]);
                            let t = if fa.is_finite() && fb.is_finite() {
                                fa / (fa - fb)
                            } else {
                                0.5
                            };
                            let pa = node(oa.0, oa.1, oa.2);
                            let pb = pa + corner_offset(a ^ b).component_mul(&step);
                            mesh.vertices.push(pa + (pb - pa) * t.clamp(0.0, 1.0));
                            (mesh.vertices.len() - 1) as u32
                        });
                    }
                    mesh.triangles.push(ids);
                }
            }
        }
        lower = upper;
    }
    Ok(cleanup(mesh))
}

/// Merges coincident vertices, drops zero-area triangles and unused vertices.
fn cleanup(mesh: Mesh) -> Mesh {
    let mut by_position: HashMap<[u64; 3], u32> = HashMap::new();
    let mut remap = Vec::with_capacity(mesh.vertices.len());
    let mut vertices = Vec::new();
    for v in &mesh.vertices {
        let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        let id = *by_position.entry(key).or_insert_with(|| {
            vertices.push(*v);
            (vertices.len() - 1) as u32
        });
        remap.push(id);
    }
    let mut merged = Mesh {
        vertices,
        triangles: Vec::with_capacity(mesh.triangles.len()),
    };
    for t in &mesh.triangles {
        let t = t.map(|v| remap[v as usize]);
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            continue;
        }
        merged.triangles.push(t);
    }
    merged.triangles = (0..merged.triangles.len())
        .filter(|&i| 0.5 * merged.face_normal(i).norm() > 1e-12)
        .map(|i| merged.triangles[i])
        .collect();

    let mut used = vec![u32::MAX; merged.vertices.len()];
    let mut out = Mesh::default();
    for t in &merged.triangles {
        let t = t.map(|v| {
            if used[v as usize] == u32::MAX {
                out.vertices.push(merged.vertices[v as usize]);
                used[v as usize] = (out.vertices.len() - 1) as u32;
            }
            used[v as usize]
        });
        out.triangles.push(t);
    }
    out
}
