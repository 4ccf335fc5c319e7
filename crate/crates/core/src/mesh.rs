//! Isosurface extraction and surface area.
//!
//! Marching cubes over the mask treated as a 0/1 scalar field, with linear
//! edge interpolation. The 256-entry case table is derived once at start-up
//! from a per-face rule instead of being transcribed: on every cube face
//! each crossing where the face boundary enters the inside region is joined
//! to the next crossing where it leaves. Faces with two diagonal inside
//! corners therefore always separate those corners, and because both cells
//! sharing a face see the same corner values, neighbouring cells emit the
//! same segments on it. Chaining the segments of a cell yields closed loops;
//! loops of three crossings become one triangle, longer loops are split into
//! a fan around their centroid. The resulting surface is watertight and
//! 2-manifold on a zero-padded grid.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::fmt::format_e;
use crate::par::{self, Exec};
use crate::volgrid::{BinaryMask, Spacing};
use crate::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Undirected edge → number of incident triangles.
    pub fn edge_valence(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.edge_valence().values().all(|&n| n == 2)
    }

    /// V − E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &v in t {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_valence().len() as i64 + self.triangles.len() as i64
    }

    /// Signed enclosed volume (positive for outward-facing triangles).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// ASCII STL with `%.9e` number formatting.
    pub fn to_stl(&self, name: &str) -> String {
        let mut s = format!("solid {name}\n");
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            let n = cross(sub(b, a), sub(c, a));
            let len = norm(n);
            let n = if len > 0.0 { n.map(|v| v / len) } else { [0.0; 3] };
            let f = |p: Point| format!("{} {} {}", format_e(p[0], 9), format_e(p[1], 9), format_e(p[2], 9));
            let _ = writeln!(s, "  facet normal {}", f(n));
            s.push_str("    outer loop\n");
            for p in [a, b, c] {
                let _ = writeln!(s, "      vertex {}", f(p));
            }
            s.push_str("    endloop\n  endfacet\n");
        }
        let _ = writeln!(s, "endsolid {name}");
        s
    }
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: Point, b: Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Σ ½‖(b−a)×(c−a)‖ over all triangles.
pub fn surface_area(mesh: &TriangleMesh) -> f64 {
    mesh.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            0.5 * norm(cross(sub(b, a), sub(c, a)))
        })
        .sum()
}

// Cube corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1) in (x, y, z).
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cube edges as (lower corner, axis) with axis 0 = x, 1 = y, 2 = z.
fn cube_edges() -> [(usize, usize); 12] {
    let mut e = [(0, 0); 12];
    let mut k = 0;
    for axis in 0..3 {
        for c in 0..8 {
            if c & (1 << axis) == 0 {
                e[k] = (c, axis);
                k += 1;
            }
        }
    }
    e
}

fn edge_id(edges: &[(usize, usize); 12], a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    let axis = (hi ^ lo).trailing_zeros() as usize;
    edges.iter().position(|&e| e == (lo, axis)).expect("corners share an edge")
}

/// Corners of each face in counter-clockwise order seen from outside.
fn cube_faces() -> [[usize; 4]; 6] {
    let mut faces = [[0; 4]; 6];
    let mut k = 0;
    for axis in 0..3 {
        for side in 0..2 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let base = side << axis;
            // (u, v, normal) is right-handed, so this order is CCW about +axis.
            let mut f = [base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)];
            if side == 0 {
                f.reverse();
            }
            faces[k] = f;
            k += 1;
        }
    }
    faces
}

/// Per case: closed loops of crossed edge ids.
struct CaseTable {
    edges: [(usize, usize); 12],
    loops: Vec<Vec<Vec<u8>>>,
}

fn case_table() -> &'static CaseTable {
    static TABLE: OnceLock<CaseTable> = OnceLock::new();
    TABLE.get_or_init(build_case_table)
}

fn build_case_table() -> CaseTable {
    let edges = cube_edges();
    let faces = cube_faces();
    let mut loops = Vec::with_capacity(256);
    for case in 0..256usize {
        let inside = |c: usize| case & (1 << c) != 0;
        let mut succ = [usize::MAX; 12];
        for f in &faces {
            for i in 0..4 {
                let (a, b) = (f[i], f[(i + 1) % 4]);
                if inside(a) || !inside(b) {
                    continue;
                }
                // Entering the inside run at edge (a, b); leave at the run's end.
                let mut j = (i + 1) % 4;
                while inside(f[(j + 1) % 4]) {
                    j = (j + 1) % 4;
                }
                let leave = edge_id(&edges, f[j], f[(j + 1) % 4]);
                succ[edge_id(&edges, a, b)] = leave;
            }
        }
        let mut seen = [false; 12];
        let mut case_loops = Vec::new();
        for start in 0..12 {
            if succ[start] == usize::MAX || seen[start] {
                continue;
            }
            let mut lp = Vec::new();
            let mut e = start;
            while !seen[e] {
                seen[e] = true;
                lp.push(e as u8);
                e = succ[e];
            }
            debug_assert_eq!(e, start);
            case_loops.push(lp);
        }
        loops.push(case_loops);
    }
    CaseTable { edges, loops }
}

/// Vertex reference before global numbering: a grid edge (padded-grid
/// index of its lower corner, axis) or the centroid of a polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum VertexKey {
    Edge(usize, u8),
    Centroid(usize, u8),
}

struct PaddedField<'a> {
    mask: &'a BinaryMask,
    // Padded extents (x, y, z).
    n: [usize; 3],
}

impl PaddedField<'_> {
    #[inline]
    fn value(&self, x: usize, y: usize, z: usize) -> bool {
        if x == 0 || y == 0 || z == 0 || x + 1 == self.n[0] || y + 1 == self.n[1] || z + 1 == self.n[2] {
            return false;
        }
        *self.mask.get(z - 1, y - 1, x - 1)
    }

    #[inline]
    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.n[1] + y) * self.n[0] + x
    }

    fn coords(&self, i: usize) -> [usize; 3] {
        [i % self.n[0], (i / self.n[0]) % self.n[1], i / (self.n[0] * self.n[1])]
    }
}

pub const DEFAULT_ISO: f64 = 0.5;

/// Marching cubes at `iso` with vertices in mm.
pub fn extract_isosurface(mask: &BinaryMask, iso: f64) -> Result<TriangleMesh> {
    extract_isosurface_with(mask, iso, mask.spacing(), Exec::default())
}

/// As [`extract_isosurface`] with explicit vertex scaling (pass
/// [`Spacing::unit`] for voxel units) and execution strategy.
pub fn extract_isosurface_with(mask: &BinaryMask, iso: f64, scale: Spacing, exec: Exec) -> Result<TriangleMesh> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(Error::InvalidArgument(format!("iso level {iso} outside (0, 1)")));
    }
    let d = mask.dims();
    let field = PaddedField { mask, n: [d.nx + 2, d.ny + 2, d.nz + 2] };
    let table = case_table();

    // Per z-slab of cells: polygons as loops of grid-edge keys, in canonical
    // cell order.
    let slabs: Vec<Vec<(usize, Vec<VertexKey>)>> = par::map_range(exec, field.n[2] - 1, |z| {
        let mut polys = Vec::new();
        for y in 0..field.n[1] - 1 {
            for x in 0..field.n[0] - 1 {
                let mut case = 0usize;
                for c in 0..8 {
                    let o = corner_offset(c);
                    if field.value(x + o[0], y + o[1], z + o[2]) {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let cell = field.index(x, y, z);
                for lp in &table.loops[case] {
                    let keys = lp
                        .iter()
                        .map(|&e| {
                            let (c, axis) = table.edges[e as usize];
                            let o = corner_offset(c);
                            VertexKey::Edge(field.index(x + o[0], y + o[1], z + o[2]), axis as u8)
                        })
                        .collect();
                    polys.push((cell, keys));
                }
            }
        }
        polys
    });

    let position = |key: VertexKey| -> Point {
        match key {
            VertexKey::Edge(i, axis) => {
                let [x, y, z] = field.coords(i);
                let mut q = [x, y, z];
                q[axis as usize] += 1;
                let fa = f64::from(u8::from(field.value(x, y, z)));
                let fb = f64::from(u8::from(field.value(q[0], q[1], q[2])));
                let t = (iso - fa) / (fb - fa);
                let mut p = [x as f64, y as f64, z as f64];
                p[axis as usize] += t;
                // Padded index 1 is voxel 0.
                [(p[0] - 1.0) * scale.dx, (p[1] - 1.0) * scale.dy, (p[2] - 1.0) * scale.dz]
            }
            VertexKey::Centroid(..) => unreachable!("centroids are computed from their loop"),
        }
    };

    let mut mesh = TriangleMesh::default();
    let mut ids: HashMap<VertexKey, u32> = HashMap::new();
    let mut intern = |mesh: &mut TriangleMesh, key: VertexKey, p: Point| -> u32 {
        *ids.entry(key).or_insert_with(|| {
            mesh.vertices.push(p);
            (mesh.vertices.len() - 1) as u32
        })
    };
    let mut loop_in_cell = (usize::MAX, 0u8);
    for (cell, keys) in slabs.into_iter().flatten() {
        loop_in_cell = if loop_in_cell.0 == cell { (cell, loop_in_cell.1 + 1) } else { (cell, 0) };
        let pts: Vec<Point> = keys.iter().map(|&k| position(k)).collect();
        let vs: Vec<u32> = keys.iter().zip(&pts).map(|(&k, &p)| intern(&mut mesh, k, p)).collect();
        if vs.len() == 3 {
            mesh.triangles.push([vs[0], vs[1], vs[2]]);
        } else {
            let n = pts.len() as f64;
            let c = pts.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
            let c = c.map(|v| v / n);
            let ci = intern(&mut mesh, VertexKey::Centroid(cell, loop_in_cell.1), c);
            for k in 0..vs.len() {
                mesh.triangles.push([ci, vs[k], vs[(k + 1) % vs.len()]]);
            }
        }
    }
    Ok(mesh)
}
