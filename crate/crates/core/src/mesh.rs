//! Conforming P1 triangulations of elliptical domains.
//!
//! A [`Mesh`] owns its node coordinates, counter-clockwise triangles and the
//! closed loop of boundary edges, together with per-triangle geometry that the
//! assembly routines use repeatedly (areas, barycentric gradients, centroids)
//! and the CSR sparsity pattern of the P1 stiffness matrix.

use crate::error::{MatmiError, Result};
use crate::geometry::Ellipse;
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

/// A boundary edge, oriented counter-clockwise around the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub length: f64,
    /// Triangle that owns the edge.
    pub triangle: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Pattern {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    /// For each triangle, the value slot of entry (local i, local j) at `3 * i + j`.
    pub slots: Vec<[usize; 9]>,
}

#[derive(Debug)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    centroids: Vec<[f64; 2]>,
    lumped: Vec<f64>,
    on_boundary: Vec<bool>,
    h: f64,
    pattern: Pattern,
    locator: OnceLock<Locator>,
    neighbours: OnceLock<Vec<Vec<usize>>>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh::new(self.nodes.clone(), self.triangles.clone()).expect("valid mesh")
    }
}

impl Mesh {
    /// Builds a mesh from nodes and triangles; boundary edges are derived and
    /// triangles are required to be counter-clockwise with positive area.
    pub fn new(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if nodes.len() < 3 || triangles.is_empty() {
            return Err(MatmiError::Model("mesh needs at least one triangle".into()));
        }
        let n = nodes.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut lumped = vec![0.0; n];
        let mut h: f64 = 0.0;
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(MatmiError::Model(format!(
                    "triangle {t} references a missing node"
                )));
            }
            let [p0, p1, p2] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let d = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            let area = 0.5 * d;
            let scale = edge_len(p0, p1).max(edge_len(p1, p2)).max(edge_len(p2, p0));
            if !(area > 1e-12 * scale * scale) {
                return Err(MatmiError::Model(format!(
                    "triangle {t} is degenerate or clockwise (signed area {area:.3e})"
                )));
            }
            h = h.max(scale);
            let g = [
                [(p1[1] - p2[1]) / d, (p2[0] - p1[0]) / d],
                [(p2[1] - p0[1]) / d, (p0[0] - p2[0]) / d],
                [(p0[1] - p1[1]) / d, (p1[0] - p0[0]) / d],
            ];
            areas.push(area);
            grads.push(g);
            centroids.push([(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0]);
            for &i in tri {
                lumped[i] += area / 3.0;
            }
        }

        // edges with a single owner form the boundary
        let mut owners: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                let key = (i.min(j), i.max(j));
                let e = owners.entry(key).or_insert((0, t, k));
                e.0 += 1;
                if e.0 > 2 {
                    return Err(MatmiError::Model(format!(
                        "edge {i}-{j} shared by more than two triangles"
                    )));
                }
            }
        }
        let mut boundary = Vec::new();
        let mut on_boundary = vec![false; n];
        for (&(_, _), &(count, t, k)) in owners.iter() {
            if count == 1 {
                let tri = triangles[t];
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                let (pi, pj) = (nodes[i], nodes[j]);
                let len = edge_len(pi, pj);
                // counter-clockwise triangle: outward normal is the tangent rotated clockwise
                let normal = [(pj[1] - pi[1]) / len, -(pj[0] - pi[0]) / len];
                boundary.push(BoundaryEdge {
                    nodes: [i, j],
                    normal,
                    length: len,
                    triangle: t,
                });
                on_boundary[i] = true;
                on_boundary[j] = true;
            }
        }
        let boundary = order_loop(boundary)?;

        let pattern = build_pattern(n, &triangles);
        Ok(Self {
            nodes,
            triangles,
            boundary,
            areas,
            grads,
            centroids,
            lumped,
            on_boundary,
            h,
            pattern,
            locator: OnceLock::new(),
            neighbours: OnceLock::new(),
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }
    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }
    /// Gradients of the three barycentric hat functions on triangle `t`.
    pub fn hat_gradients(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.grads[t]
    }
    pub fn centroid(&self, t: usize) -> [f64; 2] {
        self.centroids[t]
    }
    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }
    /// Row sums of the consistent mass matrix.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }
    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.on_boundary[i]
    }
    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.on_boundary
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }
    /// Longest edge length.
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }
    pub(crate) fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn num_edges(&self) -> usize {
        (self.pattern.col_idx.len() - self.nodes.len()) / 2
    }

    /// Node adjacency lists, excluding the node itself.
    pub fn neighbours(&self) -> &[Vec<usize>] {
        self.neighbours.get_or_init(|| {
            (0..self.nodes.len())
                .map(|i| {
                    let (s, e) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
                    self.pattern.col_idx[s..e]
                        .iter()
                        .copied()
                        .filter(|&j| j != i)
                        .collect()
                })
                .collect()
        })
    }

    /// Finds the triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let loc = self.locator.get_or_init(|| Locator::new(self));
        loc.locate(self, p)
    }

    /// Like [`Mesh::locate`], but points outside the triangulation snap to the
    /// closest triangle (barycentric coordinates clamped to the simplex).
    pub fn locate_or_nearest(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        if let Some(hit) = self.locate(p) {
            return hit;
        }
        let loc = self.locator.get_or_init(|| Locator::new(self));
        loc.nearest(self, p)
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let tri = self.triangles[t];
        let g = &self.grads[t];
        let p0 = self.nodes[tri[0]];
        let p1 = self.nodes[tri[1]];
        let p2 = self.nodes[tri[2]];
        let l0 = 1.0 + g[0][0] * (p[0] - p0[0]) + g[0][1] * (p[1] - p0[1]);
        let l1 = g[1][0] * (p[0] - p0[0]) + g[1][1] * (p[1] - p0[1]);
        let l2 = g[2][0] * (p[0] - p0[0]) + g[2][1] * (p[1] - p0[1]);
        let _ = (p1, p2);
        [l0, l1, l2]
    }

    /// Evaluates a P1 nodal field at an arbitrary point.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let (t, l) = self.locate_or_nearest(p);
        let tri = self.triangles[t];
        l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]
    }

    /// Writes the `matmi-mesh v1` text format.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "matmi-mesh v1")?;
        writeln!(w, "{}", self.nodes.len())?;
        for p in &self.nodes {
            writeln!(w, "{:e} {:e}", p[0], p[1])?;
        }
        writeln!(w, "{}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "{}", self.boundary.len())?;
        for e in &self.boundary {
            writeln!(
                w,
                "{} {} {:e} {:e}",
                e.nodes[0], e.nodes[1], e.normal[0], e.normal[1]
            )?;
        }
        Ok(())
    }

    /// Reads the `matmi-mesh v1` text format and re-validates the topology.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = crate::io::Lines::new(r);
        lines.expect_header("matmi-mesh v1")?;
        let n = lines.count("node count")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let v = lines.floats(2)?;
            nodes.push([v[0], v[1]]);
        }
        let m = lines.count("triangle count")?;
        let mut tris = Vec::with_capacity(m);
        for _ in 0..m {
            let v = lines.indices(3)?;
            tris.push([v[0], v[1], v[2]]);
        }
        let nb = lines.count("boundary edge count")?;
        let mut declared = Vec::with_capacity(nb);
        for _ in 0..nb {
            let line = lines.next_line()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(MatmiError::Format(format!(
                    "line {}: expected 'i j nx ny'",
                    lines.line_no()
                )));
            }
            let i: usize = parse(parts[0], lines.line_no())?;
            let j: usize = parse(parts[1], lines.line_no())?;
            declared.push((i.min(j), i.max(j)));
        }
        let mesh = Mesh::new(nodes, tris)?;
        let mut derived: Vec<(usize, usize)> = mesh
            .boundary
            .iter()
            .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
            .collect();
        derived.sort_unstable();
        declared.sort_unstable();
        if derived != declared {
            return Err(MatmiError::Model(
                "declared boundary edges do not match the triangulation".into(),
            ));
        }
        Ok(mesh)
    }
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| MatmiError::Format(format!("line {line}: cannot parse '{s}'")))
}

fn edge_len(p: [f64; 2], q: [f64; 2]) -> f64 {
    (q[0] - p[0]).hypot(q[1] - p[1])
}

fn order_loop(edges: Vec<BoundaryEdge>) -> Result<Vec<BoundaryEdge>> {
    if edges.is_empty() {
        return Err(MatmiError::Model("mesh has no boundary".into()));
    }
    let mut by_start: HashMap<usize, usize> = HashMap::with_capacity(edges.len());
    for (k, e) in edges.iter().enumerate() {
        if by_start.insert(e.nodes[0], k).is_some() {
            return Err(MatmiError::Model(
                "boundary is not a simple closed curve".into(),
            ));
        }
    }
    let start = (0..edges.len()).min_by_key(|&k| edges[k].nodes[0]).unwrap();
    let mut ordered = Vec::with_capacity(edges.len());
    let mut k = start;
    for _ in 0..edges.len() {
        ordered.push(edges[k]);
        k = match by_start.get(&edges[k].nodes[1]) {
            Some(&next) => next,
            None => return Err(MatmiError::Model("boundary loop is open".into())),
        };
        if k == start {
            break;
        }
    }
    if ordered.len() != edges.len() {
        return Err(MatmiError::Model(
            "boundary has more than one component".into(),
        ));
    }
    Ok(ordered)
}

fn build_pattern(n: usize, triangles: &[[usize; 3]]) -> Pattern {
    let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for tri in triangles {
        for &i in tri {
            for &j in tri {
                adj[i].push(j);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for row in adj.iter_mut() {
        row.sort_unstable();
        row.dedup();
        col_idx.extend_from_slice(row);
        row_ptr.push(col_idx.len());
    }
    let slots = triangles
        .iter()
        .map(|tri| {
            let mut s = [0usize; 9];
            for a in 0..3 {
                let (lo, hi) = (row_ptr[tri[a]], row_ptr[tri[a] + 1]);
                for b in 0..3 {
                    let off = col_idx[lo..hi]
                        .binary_search(&tri[b])
                        .expect("pattern entry");
                    s[3 * a + b] = lo + off;
                }
            }
            s
        })
        .collect();
    Pattern {
        row_ptr,
        col_idx,
        slots,
    }
}

#[derive(Debug)]
struct Locator {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(mesh: &Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let cell = (2.0 * mesh.h).max(1e-12);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &i in tri {
                for d in 0..2 {
                    a[d] = a[d].min(mesh.nodes[i][d]);
                    b[d] = b[d].max(mesh.nodes[i][d]);
                }
            }
            let (i0, j0) = Self::clamp_cell(lo, cell, nx, ny, a);
            let (i1, j1) = Self::clamp_cell(lo, cell, nx, ny, b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn clamp_cell(lo: [f64; 2], cell: f64, nx: usize, ny: usize, p: [f64; 2]) -> (usize, usize) {
        let i = ((p[0] - lo[0]) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((p[1] - lo[1]) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    fn locate(&self, mesh: &Mesh, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        if fx < -1e-9 || fy < -1e-9 || fx > self.nx as f64 + 1e-9 || fy > self.ny as f64 + 1e-9 {
            return None;
        }
        let (i, j) = Self::clamp_cell(self.origin, self.cell, self.nx, self.ny, p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let l = mesh.barycentric(t, p);
            let m = l[0].min(l[1]).min(l[2]);
            if m >= -1e-12 {
                return Some((t, l));
            }
            if best.map_or(true, |b| m > b.2) {
                best = Some((t, l, m));
            }
        }
        match best {
            Some((t, l, m)) if m >= -1e-9 => Some((t, l)),
            _ => None,
        }
    }

    fn nearest(&self, mesh: &Mesh, p: [f64; 2]) -> (usize, [f64; 3]) {
        // closest boundary edge owner; points outside the hull are near the boundary
        let mut best = (usize::MAX, f64::INFINITY);
        for e in &mesh.boundary {
            let a = mesh.nodes[e.nodes[0]];
            let b = mesh.nodes[e.nodes[1]];
            let d = point_segment_distance(p, a, b);
            if d < best.1 {
                best = (e.triangle, d);
            }
        }
        let t = best.0;
        let mut l = mesh.barycentric(t, p);
        for v in l.iter_mut() {
            *v = v.max(0.0);
        }
        let s: f64 = l.iter().sum();
        (t, [l[0] / s, l[1] / s, l[2] / s])
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// Triangulates the ellipse with nearly equilateral elements of size `target_h`.
///
/// Boundary nodes sit exactly on the ellipse, equally spaced in arc length.
/// Interior nodes start on a hexagonal lattice and are relaxed by a few rounds
/// of Laplacian smoothing with Delaunay re-triangulation.
pub fn build_ellipse_mesh(ellipse: &Ellipse, target_h: f64) -> Result<Mesh> {
    let min_axis = ellipse.a.min(ellipse.b);
    if !(target_h.is_finite() && target_h > 0.0) || target_h >= min_axis {
        return Err(MatmiError::Parameter(format!(
            "target mesh size must lie in (0, {min_axis}), got {target_h}"
        )));
    }
    let perimeter = ellipse.perimeter();
    let nb = ((perimeter / target_h).ceil() as usize).max(8);
    let mut pts: Vec<[f64; 2]> = ellipse
        .arc_length_parameters(nb)
        .into_iter()
        .map(|t| ellipse.point(t))
        .collect();

    let dy = target_h * 3f64.sqrt() / 2.0;
    let jmax = (ellipse.b / dy).ceil() as i64 + 1;
    let imax = (ellipse.a / target_h).ceil() as i64 + 1;
    let margin = 0.5 * target_h;
    for j in -jmax..=jmax {
        let y = j as f64 * dy;
        let shift = if j.rem_euclid(2) == 1 {
            0.5 * target_h
        } else {
            0.0
        };
        for i in -imax..=imax {
            let p = [i as f64 * target_h + shift, y];
            if ellipse.contains(p) && ellipse.distance_to_boundary(p) >= margin {
                pts.push(p);
            }
        }
    }

    let mut tris = delaunay(&pts);
    for _ in 0..8 {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); pts.len()];
        for t in &tris {
            for k in 0..3 {
                adj[t[k]].push(t[(k + 1) % 3]);
                adj[t[k]].push(t[(k + 2) % 3]);
            }
        }
        let old = pts.clone();
        for i in nb..pts.len() {
            let nbrs = &mut adj[i];
            nbrs.sort_unstable();
            nbrs.dedup();
            if nbrs.is_empty() {
                continue;
            }
            let mut c = [0.0, 0.0];
            for &j in nbrs.iter() {
                c[0] += old[j][0];
                c[1] += old[j][1];
            }
            let k = nbrs.len() as f64;
            pts[i] = [
                0.5 * old[i][0] + 0.5 * c[0] / k,
                0.5 * old[i][1] + 0.5 * c[1] / k,
            ];
        }
        tris = delaunay(&pts);
    }
    let mesh = Mesh::new(pts, tris)?;
    if mesh.boundary_edges().len() != nb || (0..nb).any(|i| !mesh.is_boundary_node(i)) {
        return Err(MatmiError::Model(
            "triangulation boundary does not match the ellipse nodes".into(),
        ));
    }
    Ok(mesh)
}

fn delaunay(pts: &[[f64; 2]]) -> Vec<[usize; 3]> {
    let points: Vec<delaunator::Point> = pts
        .iter()
        .map(|p| delaunator::Point { x: p[0], y: p[1] })
        .collect();
    let tri = delaunator::triangulate(&points);
    tri.triangles
        .chunks_exact(3)
        .map(|c| {
            let [a, b, c] = [c[0], c[1], c[2]];
            let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
            let d = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
            if d > 0.0 {
                [a, b, c]
            } else {
                [a, c, b]
            }
        })
        .collect()
}
