use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::koch::koch_prefractal;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLabel {
    Dirichlet,
    Neumann,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub v0: usize,
    pub v1: usize,
    pub label: EdgeLabel,
}

/// On-disk mesh description. Edge ids run over boundary edges first, then interface edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    #[serde(default)]
    pub interface_edges: Vec<[usize; 2]>,
    /// Weights of Dynamic edges; missing Dynamic edges default to their length.
    #[serde(default)]
    pub sigma_measure: BTreeMap<usize, f64>,
    /// Point masses on vertices (experimental).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vertex_masses: BTreeMap<usize, f64>,
    /// Accept a Dynamic set of total measure zero (control cases only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_empty_sigma: bool,
}

/// Conforming triangulation with boundary labels and lumped hybrid weights.
///
/// Degrees of freedom are the non-Dirichlet vertices, in vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridMesh {
    file: MeshFile,
    edge_measure: Vec<f64>,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
    vertex_vol: Vec<f64>,
    vertex_sigma: Vec<f64>,
    w_vol: Vec<f64>,
    w_sigma: Vec<f64>,
    sigma_dof: Vec<bool>,
    acute: bool,
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadGeometry(msg.into())
}

fn max_angle(a: Point, b: Point, c: Point) -> f64 {
    let angle = |p: Point, q: Point, r: Point| {
        let (u, v) = ([q[0] - p[0], q[1] - p[1]], [r[0] - p[0], r[1] - p[1]]);
        let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
        cos.clamp(-1.0, 1.0).acos()
    };
    angle(a, b, c).max(angle(b, c, a)).max(angle(c, a, b))
}

impl HybridMesh {
    pub fn from_file(mut file: MeshFile) -> Result<Self> {
        let nv = file.vertices.len();
        if file.vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(bad("non-finite vertex coordinate"));
        }
        let scale = file
            .vertices
            .iter()
            .flat_map(|v| v.iter().map(|x| x.abs()))
            .fold(1.0f64, f64::max);
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in file.triangles.iter_mut() {
            if t.iter().any(|&v| v >= nv) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(bad(format!("invalid triangle {t:?}")));
            }
            let area = signed_area(file.vertices[t[0]], file.vertices[t[1]], file.vertices[t[2]]);
            if area.abs() <= 1e-14 * scale * scale {
                return Err(bad(format!("degenerate triangle {t:?}")));
            }
            if area < 0.0 {
                t.swap(1, 2);
            }
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry(key(a, b)).or_default() += 1;
            }
        }
        if file.triangles.is_empty() {
            return Err(bad("no triangles"));
        }
        if edge_count.values().any(|&c| c > 2) {
            return Err(bad("edge shared by more than two triangles"));
        }
        let mut labelled = HashSet::new();
        for e in &file.boundary_edges {
            let k = key(e.v0, e.v1);
            if edge_count.get(&k) != Some(&1) {
                return Err(bad(format!("boundary edge ({}, {}) is not on the boundary", e.v0, e.v1)));
            }
            if !labelled.insert(k) {
                return Err(bad(format!("boundary edge ({}, {}) labelled twice", e.v0, e.v1)));
            }
        }
        let n_boundary = edge_count.values().filter(|&&c| c == 1).count();
        if labelled.len() != n_boundary {
            return Err(bad(format!("{} of {n_boundary} boundary edges labelled", labelled.len())));
        }
        let mut interface = HashSet::new();
        for &[a, b] in &file.interface_edges {
            if edge_count.get(&key(a, b)) != Some(&2) || !interface.insert(key(a, b)) {
                return Err(bad(format!("interface edge ({a}, {b}) is not a unique interior edge")));
            }
        }

        let nb = file.boundary_edges.len();
        let endpoints = |id: usize| -> (usize, usize) {
            if id < nb {
                (file.boundary_edges[id].v0, file.boundary_edges[id].v1)
            } else {
                let [a, b] = file.interface_edges[id - nb];
                (a, b)
            }
        };
        let is_dynamic = |id: usize| id >= nb || file.boundary_edges[id].label == EdgeLabel::Dynamic;
        let n_edges = nb + file.interface_edges.len();
        for (&id, &w) in &file.sigma_measure {
            if id >= n_edges || !is_dynamic(id) {
                return Err(bad(format!("sigma_measure on non-Dynamic edge {id}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(bad(format!("invalid measure {w} on edge {id}")));
            }
        }
        let edge_measure: Vec<f64> = (0..n_edges)
            .map(|id| {
                if !is_dynamic(id) {
                    return 0.0;
                }
                let (a, b) = endpoints(id);
                file.sigma_measure.get(&id).copied().unwrap_or_else(|| dist(file.vertices[a], file.vertices[b]))
            })
            .collect();

        let mut dirichlet = vec![false; nv];
        for e in file.boundary_edges.iter().filter(|e| e.label == EdgeLabel::Dirichlet) {
            dirichlet[e.v0] = true;
            dirichlet[e.v1] = true;
        }
        let mut dof_of_vertex = vec![None; nv];
        let mut vertex_of_dof = Vec::new();
        let mut used = vec![false; nv];
        file.triangles.iter().flatten().for_each(|&v| used[v] = true);
        for v in 0..nv {
            if !dirichlet[v] && used[v] {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        if vertex_of_dof.is_empty() {
            return Err(bad("no free vertices"));
        }

        let mut vertex_vol = vec![0.0; nv];
        let mut acute = true;
        for t in &file.triangles {
            let [a, b, c] = t.map(|v| file.vertices[v]);
            let area = signed_area(a, b, c);
            acute &= max_angle(a, b, c) <= std::f64::consts::FRAC_PI_2 + 1e-10;
            t.iter().for_each(|&v| vertex_vol[v] += area / 3.0);
        }
        let mut vertex_sigma = vec![0.0; nv];
        let mut on_sigma = vec![false; nv];
        for id in (0..n_edges).filter(|&id| is_dynamic(id)) {
            let (a, b) = endpoints(id);
            for v in [a, b] {
                vertex_sigma[v] += 0.5 * edge_measure[id];
                on_sigma[v] = true;
            }
        }
        for (&v, &w) in &file.vertex_masses {
            if v >= nv || dirichlet[v] {
                return Err(bad(format!("point mass on Dirichlet or unknown vertex {v}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(bad(format!("invalid point mass {w}")));
            }
            vertex_sigma[v] += w;
            on_sigma[v] = true;
        }
        let w_vol = vertex_of_dof.iter().map(|&v| vertex_vol[v]).collect();
        let w_sigma = vertex_of_dof.iter().map(|&v| vertex_sigma[v]).collect();
        let sigma_dof = vertex_of_dof.iter().map(|&v| on_sigma[v]).collect();
        let total: f64 = edge_measure.iter().sum::<f64>() + file.vertex_masses.values().sum::<f64>();
        if total <= 0.0 && !file.allow_empty_sigma {
            return Err(bad("dynamic set has zero measure"));
        }
        Ok(Self {
            file,
            edge_measure,
            dof_of_vertex,
            vertex_of_dof,
            vertex_vol,
            vertex_sigma,
            w_vol,
            w_sigma,
            sigma_dof,
            acute,
        })
    }

    pub fn to_file(&self) -> &MeshFile {
        &self.file
    }

    pub fn vertices(&self) -> &[Point] {
        &self.file.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.file.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.file.boundary_edges
    }

    pub fn interface_edges(&self) -> &[[usize; 2]] {
        &self.file.interface_edges
    }

    /// Measure of every edge id; zero for non-Dynamic edges.
    pub fn edge_measures(&self) -> &[f64] {
        &self.edge_measure
    }

    /// Dynamic edges as `(v0, v1, measure)`.
    pub fn dynamic_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.file
            .boundary_edges
            .iter()
            .map(|e| (e.v0, e.v1, e.label == EdgeLabel::Dynamic))
            .chain(self.file.interface_edges.iter().map(|&[a, b]| (a, b, true)))
            .enumerate()
            .filter(|(_, e)| e.2)
            .map(move |(id, (a, b, _))| (a, b, self.edge_measure[id]))
    }

    pub fn total_sigma_measure(&self) -> f64 {
        self.edge_measure.iter().sum::<f64>() + self.file.vertex_masses.values().sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.file
            .triangles
            .iter()
            .map(|t| signed_area(self.file.vertices[t[0]], self.file.vertices[t[1]], self.file.vertices[t[2]]))
            .sum()
    }

    pub fn n_vertices(&self) -> usize {
        self.file.vertices.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn vertex_of_dof(&self, d: usize) -> usize {
        self.vertex_of_dof[d]
    }

    pub fn dof_point(&self, d: usize) -> Point {
        self.file.vertices[self.vertex_of_dof[d]]
    }

    /// Lumped volume weights per vertex, Dirichlet vertices included.
    pub fn vertex_volume_weights(&self) -> &[f64] {
        &self.vertex_vol
    }

    pub fn vertex_sigma_weights(&self) -> &[f64] {
        &self.vertex_sigma
    }

    /// Lumped volume weights per dof.
    pub fn volume_weights(&self) -> &[f64] {
        &self.w_vol
    }

    /// Lumped Dynamic-set weights per dof.
    pub fn sigma_weights(&self) -> &[f64] {
        &self.w_sigma
    }

    pub fn total_weights(&self) -> Vec<f64> {
        self.w_vol.iter().zip(&self.w_sigma).map(|(a, b)| a + b).collect()
    }

    /// Dofs carried by the Dynamic set.
    pub fn is_sigma_dof(&self, d: usize) -> bool {
        self.sigma_dof[d]
    }

    pub fn acute_flag(&self) -> bool {
        self.acute
    }

    pub fn has_dirichlet(&self) -> bool {
        self.file.boundary_edges.iter().any(|e| e.label == EdgeLabel::Dirichlet)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.file
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| dist(self.file.vertices[a], self.file.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Copy with every Dynamic weight multiplied by `s` (allowing zero total measure).
    pub fn with_sigma_scaled(&self, s: f64) -> Result<Self> {
        let mut file = self.file.clone();
        let nb = file.boundary_edges.len();
        for (id, &m) in self.edge_measure.iter().enumerate() {
            if id >= nb || file.boundary_edges[id].label == EdgeLabel::Dynamic {
                file.sigma_measure.insert(id, m * s);
            }
        }
        file.vertex_masses.values_mut().for_each(|w| *w *= s);
        file.allow_empty_sigma |= s == 0.0;
        Self::from_file(file)
    }
}

/// Rule assigning Dynamic weights along a straight piece of `Sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureRule {
    #[default]
    ArcLength,
    /// Koch prefractal weights over the piece, projected onto its mesh edges.
    Koch { level: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Rectangle { origin: Point, width: f64, height: f64 },
    /// Simple polygon; side `i` joins vertex `i` to vertex `i + 1`.
    Polygon { vertices: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub points: Vec<Point>,
    #[serde(default)]
    pub measure: MeasureRule,
}

/// Mesh generation request. Rectangle sides are ordered bottom, right, top, left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub domain: Domain,
    pub h: f64,
    pub side_labels: Vec<EdgeLabel>,
    #[serde(default)]
    pub boundary_measure: MeasureRule,
    #[serde(default)]
    pub interface: Option<InterfaceSpec>,
    #[serde(default)]
    pub allow_empty_sigma: bool,
}

impl MeshSpec {
    pub fn unit_square(h: f64, side_labels: [EdgeLabel; 4]) -> Self {
        Self {
            domain: Domain::Rectangle { origin: [0.0, 0.0], width: 1.0, height: 1.0 },
            h,
            side_labels: side_labels.to_vec(),
            boundary_measure: MeasureRule::ArcLength,
            interface: None,
            allow_empty_sigma: false,
        }
    }

    pub fn with_interface(mut self, points: Vec<Point>, measure: MeasureRule) -> Self {
        self.interface = Some(InterfaceSpec { points, measure });
        self
    }
}

struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    /// (v0, v1, side index)
    sides: Vec<(usize, usize, usize)>,
}

fn rectangle(origin: Point, width: f64, height: f64, h: f64) -> Triangulation {
    let nx = ((width / h).round() as usize).max(1);
    let ny = ((height / h).round() as usize).max(1);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([origin[0] + width * i as f64 / nx as f64, origin[1] + height * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut sides = Vec::new();
    sides.extend((0..nx).map(|i| (id(i, 0), id(i + 1, 0), 0)));
    sides.extend((0..ny).map(|j| (id(nx, j), id(nx, j + 1), 1)));
    sides.extend((0..nx).rev().map(|i| (id(i + 1, ny), id(i, ny), 2)));
    sides.extend((0..ny).rev().map(|j| (id(0, j + 1), id(0, j), 3)));
    Triangulation { vertices, triangles, sides }
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (signed_area(a, b, c), signed_area(a, b, d));
    let (d3, d4) = (signed_area(c, d, a), signed_area(c, d, b));
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0 && !(d1 == 0.0 && d2 == 0.0 && d3 == 0.0 && d4 == 0.0)
        || (d1 == 0.0 && d2 == 0.0 && {
            // collinear overlap
            let t = |p: Point| (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
            let l = t(b);
            let (s0, s1) = (t(c).min(t(d)), t(c).max(t(d)));
            s1 >= 0.0 && s0 <= l
        })
}

fn point_in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    signed_area(a, b, p) >= 0.0 && signed_area(b, c, p) >= 0.0 && signed_area(c, a, p) >= 0.0
}

fn polygon(points: &[Point]) -> Result<Triangulation> {
    let n = points.len();
    if n < 3 {
        return Err(bad("polygon needs at least three vertices"));
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist(points[i], points[j]) == 0.0 {
                return Err(bad("repeated polygon vertex"));
            }
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if !adjacent && segments_cross(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                return Err(bad(format!("polygon sides {i} and {j} intersect")));
            }
        }
    }
    let area: f64 = (0..n).map(|i| signed_area([0.0, 0.0], points[i], points[(i + 1) % n])).sum();
    let ccw = area > 0.0;
    // CCW working order; side ids refer to the caller's ordering
    let order: Vec<usize> = if ccw { (0..n).collect() } else { (0..n).rev().collect() };
    let side_of = |k: usize| if ccw { k } else { (2 * n - 2 - k) % n };

    let mut remaining = order.clone();
    let mut triangles = Vec::with_capacity(n - 2);
    while remaining.len() > 3 {
        let m = remaining.len();
        let ear = (0..m).find(|&k| {
            let (a, b, c) = (remaining[(k + m - 1) % m], remaining[k], remaining[(k + 1) % m]);
            signed_area(points[a], points[b], points[c]) > 0.0
                && remaining
                    .iter()
                    .filter(|&&v| v != a && v != b && v != c)
                    .all(|&v| !point_in_triangle(points[v], points[a], points[b], points[c]))
        });
        let k = ear.ok_or_else(|| bad("ear clipping failed"))?;
        triangles.push([remaining[(k + m - 1) % m], remaining[k], remaining[(k + 1) % m]]);
        remaining.remove(k);
    }
    triangles.push([remaining[0], remaining[1], remaining[2]]);
    let sides = (0..n).map(|k| (order[k], order[(k + 1) % n], side_of(k))).collect();
    Ok(Triangulation { vertices: points.to_vec(), triangles, sides })
}

fn refine(t: &mut Triangulation) {
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let vertices = &mut t.vertices;
    let mut midpoint = |a: usize, b: usize| -> usize {
        *mid.entry(key(a, b)).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * t.triangles.len());
    for &[a, b, c] in &t.triangles {
        let (ab, bc, ca) = (midpoint(a, b), midpoint(b, c), midpoint(c, a));
        triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    let mut sides = Vec::with_capacity(2 * t.sides.len());
    for &(a, b, s) in &t.sides {
        let m = midpoint(a, b);
        sides.extend([(a, m, s), (m, b, s)]);
    }
    t.triangles = triangles;
    t.sides = sides;
}

/// Mesh edges covering the straight piece `p -> q`, in order; each must be an existing edge.
fn resolve_piece(
    vertices: &[Point],
    edges: &HashSet<(usize, usize)>,
    p: Point,
    q: Point,
) -> Result<Vec<(usize, usize)>> {
    let len = dist(p, q);
    if len == 0.0 {
        return Err(bad("zero-length interface piece"));
    }
    let tol = 1e-9 * len.max(1.0);
    let mut on: Vec<(f64, usize)> = vertices
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            let t = ((v[0] - p[0]) * (q[0] - p[0]) + (v[1] - p[1]) * (q[1] - p[1])) / (len * len);
            let off = (signed_area(p, q, v) * 2.0 / len).abs();
            (off <= tol && t >= -tol / len && t <= 1.0 + tol / len).then_some((t, i))
        })
        .collect();
    on.sort_by(|a, b| a.0.total_cmp(&b.0));
    let starts = on.first().is_some_and(|f| dist(vertices[f.1], p) <= tol);
    let ends = on.last().is_some_and(|l| dist(vertices[l.1], q) <= tol);
    if !starts || !ends {
        return Err(bad("interface endpoint is not a mesh vertex"));
    }
    on.windows(2)
        .map(|w| {
            let (a, b) = (w[0].1, w[1].1);
            if edges.contains(&key(a, b)) {
                Ok((a, b))
            } else {
                Err(bad(format!("interface does not follow mesh edges near vertex {a}")))
            }
        })
        .collect()
}

/// Weights for the mesh edges of a straight piece under `rule`.
fn piece_weights(vertices: &[Point], p: Point, q: Point, piece: &[(usize, usize)], rule: MeasureRule) -> Result<Vec<f64>> {
    match rule {
        MeasureRule::ArcLength => Ok(piece.iter().map(|&(a, b)| dist(vertices[a], vertices[b])).collect()),
        MeasureRule::Koch { level } => {
            let len = dist(p, q);
            let pref = koch_prefractal(level, len)?;
            let param = |v: Point| ((v[0] - p[0]) * (q[0] - p[0]) + (v[1] - p[1]) * (q[1] - p[1])) / (len * len);
            let ends: Vec<f64> = piece.iter().map(|&(_, b)| param(vertices[b])).collect();
            let mut w = vec![0.0; piece.len()];
            for s in pref.segments() {
                let t = 0.5 * (s.a[0] + s.b[0]) / len;
                let k = ends.iter().position(|&e| t <= e).unwrap_or(piece.len() - 1);
                w[k] += s.weight;
            }
            Ok(w)
        }
    }
}

/// Triangulates a rectangle or simple polygon and attaches labels and Dynamic weights.
pub fn build_mesh(spec: &MeshSpec) -> Result<HybridMesh> {
    if !(spec.h.is_finite() && spec.h > 0.0) {
        return Err(bad(format!("mesh size {}", spec.h)));
    }
    let (mut tri, n_sides, corners) = match &spec.domain {
        Domain::Rectangle { origin, width, height } => {
            if !(*width > 0.0 && *height > 0.0) {
                return Err(bad("rectangle with non-positive side"));
            }
            let o = *origin;
            let corners = vec![o, [o[0] + width, o[1]], [o[0] + width, o[1] + height], [o[0], o[1] + height]];
            (rectangle(o, *width, *height, spec.h), 4, corners)
        }
        Domain::Polygon { vertices } => {
            let mut t = polygon(vertices)?;
            let max_edges = 1 << 16;
            while t.triangles.len() < max_edges
                && t.triangles.iter().any(|tr| {
                    (0..3).any(|k| dist(t.vertices[tr[k]], t.vertices[tr[(k + 1) % 3]]) > spec.h * (1.0 + 1e-12))
                })
            {
                refine(&mut t);
            }
            (t, vertices.len(), vertices.clone())
        }
    };
    if spec.side_labels.len() != n_sides {
        return Err(bad(format!("{} side labels for {n_sides} sides", spec.side_labels.len())));
    }

    let mut edges = HashSet::new();
    for t in &tri.triangles {
        for k in 0..3 {
            edges.insert(key(t[k], t[(k + 1) % 3]));
        }
    }
    let boundary_keys: HashSet<(usize, usize)> = tri.sides.iter().map(|&(a, b, _)| key(a, b)).collect();

    let mut file = MeshFile { allow_empty_sigma: spec.allow_empty_sigma, ..Default::default() };
    // boundary edges grouped by side, in traversal order
    let mut by_side: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_sides];
    for &(a, b, s) in &tri.sides {
        by_side[s].push((a, b));
    }
    for (s, piece) in by_side.iter_mut().enumerate() {
        let (p, q) = (corners[s], corners[(s + 1) % n_sides]);
        let param = |v: Point| (v[0] - p[0]) * (q[0] - p[0]) + (v[1] - p[1]) * (q[1] - p[1]);
        piece.sort_by(|x, y| param(tri.vertices[x.0]).max(param(tri.vertices[x.1])).total_cmp(
            &param(tri.vertices[y.0]).max(param(tri.vertices[y.1])),
        ));
        // orient along p -> q so Koch projection sees increasing parameters
        let oriented: Vec<(usize, usize)> = piece
            .iter()
            .map(|&(a, b)| if param(tri.vertices[a]) <= param(tri.vertices[b]) { (a, b) } else { (b, a) })
            .collect();
        let label = spec.side_labels[s];
        let weights = if label == EdgeLabel::Dynamic {
            Some(piece_weights(&tri.vertices, p, q, &oriented, spec.boundary_measure)?)
        } else {
            None
        };
        for (k, &(a, b)) in piece.iter().enumerate() {
            let id = file.boundary_edges.len();
            file.boundary_edges.push(BoundaryEdge { v0: a, v1: b, label });
            if let Some(w) = &weights {
                file.sigma_measure.insert(id, w[k]);
            }
        }
    }
    if let Some(iface) = &spec.interface {
        if iface.points.len() < 2 {
            return Err(bad("interface needs at least two points"));
        }
        let nb = file.boundary_edges.len();
        for w in iface.points.windows(2) {
            let piece = resolve_piece(&tri.vertices, &edges, w[0], w[1])?;
            if piece.iter().any(|&(a, b)| boundary_keys.contains(&key(a, b))) {
                return Err(bad("interface runs along the boundary"));
            }
            let weights = piece_weights(&tri.vertices, w[0], w[1], &piece, iface.measure)?;
            for (&(a, b), &m) in piece.iter().zip(&weights) {
                file.sigma_measure.insert(nb + file.interface_edges.len(), m);
                file.interface_edges.push([a, b]);
            }
        }
    }
    file.vertices = std::mem::take(&mut tri.vertices);
    file.triangles = std::mem::take(&mut tri.triangles);
    HybridMesh::from_file(file)
}
