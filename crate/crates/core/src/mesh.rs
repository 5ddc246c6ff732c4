//! Rectangular and triangular meshes with edge topology and boundary tags.
//!
//! Cell vertices are stored counterclockwise. Local edge `i` of a cell runs
//! from vertex `i` to vertex `i + 1`, so a shared edge is traversed in
//! opposite directions by its two cells.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Domain {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite());
        if !finite || self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(Error::Config(format!(
                "domain [{}, {}] x [{}, {}] must have positive extents",
                self.x0, self.x1, self.y0, self.y1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    Left,
    Right,
    Bottom,
    Top,
    /// Imported group id.
    Group(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Rectangle,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriSplit {
    TwoWay,
    FourWay,
}

/// What lies across an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeSide {
    Cell(usize),
    Boundary(BoundaryTag),
}

/// One edge as seen from a cell.
#[derive(Clone, Copy, Debug)]
pub struct LocalEdge {
    pub edge: usize,
    /// Outward with respect to the owning cell.
    pub normal: [f64; 2],
    pub length: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub neighbor: EdgeSide,
    /// Local index of this edge in the neighboring cell, if any.
    pub neighbor_local: Option<usize>,
}

impl LocalEdge {
    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1])]
    }

    /// Point at parameter `s ∈ [0, 1]` from `start` to `end`.
    pub fn point(&self, s: f64) -> [f64; 2] {
        [
            self.start[0] + s * (self.end[0] - self.start[0]),
            self.start[1] + s * (self.end[1] - self.start[1]),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub kind: CellKind,
    pub vertices: Vec<usize>,
    pub area: f64,
    pub centroid: [f64; 2],
    pub edges: Vec<LocalEdge>,
}

impl Cell {
    pub fn longest_edge(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    pub fn is_boundary(&self) -> bool {
        self.edges.iter().any(|e| matches!(e.neighbor, EdgeSide::Boundary(_)))
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub length: f64,
    /// Outward with respect to `left_cell`.
    pub normal: [f64; 2],
    pub left_cell: usize,
    pub right: EdgeSide,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        matches!(self.right, EdgeSide::Boundary(_))
    }
}

/// Lattice description of a uniform rectangular mesh; cell `(i, j)` has index
/// `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuredInfo {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    pub bounds: Domain,
    /// Present for meshes built by [`build_rect_mesh`].
    pub structured: Option<StructuredInfo>,
}

impl Mesh {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn kind(&self) -> CellKind {
        self.cells.first().map_or(CellKind::Triangle, |c| c.kind)
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    /// Tags present on the boundary, sorted.
    pub fn boundary_tags(&self) -> Vec<BoundaryTag> {
        let mut tags: Vec<_> = self
            .edges
            .iter()
            .filter_map(|e| match e.right {
                EdgeSide::Boundary(t) => Some(t),
                EdgeSide::Cell(_) => None,
            })
            .collect();
        tags.sort();
        tags.dedup();
        tags
    }

    /// Smallest edge length over the mesh.
    pub fn min_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }
}

fn lattice_size(extent: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("mesh size h = {h} must be positive")));
    }
    let n = (extent / h).round();
    if n < 1.0 {
        return Ok(1);
    }
    if n > 1e7 {
        return Err(Error::Config(format!("mesh size h = {h} gives too many cells")));
    }
    Ok(n as usize)
}

fn lattice_nodes(domain: &Domain, nx: usize, ny: usize) -> Vec<[f64; 2]> {
    let dx = domain.width() / nx as f64;
    let dy = domain.height() / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // pin the far side exactly to the domain bound
            let x = if i == nx { domain.x1 } else { domain.x0 + i as f64 * dx };
            let y = if j == ny { domain.y1 } else { domain.y0 + j as f64 * dy };
            nodes.push([x, y]);
        }
    }
    nodes
}

/// Uniform `nx × ny` rectangles with `nx = round(width/h)`.
pub fn build_rect_mesh(domain: Domain, h: f64) -> Result<Mesh> {
    domain.validate()?;
    let nx = lattice_size(domain.width(), h)?;
    let ny = lattice_size(domain.height(), h)?;
    build_rect_mesh_n(domain, nx, ny)
}

/// Uniform rectangles with explicit counts.
pub fn build_rect_mesh_n(domain: Domain, nx: usize, ny: usize) -> Result<Mesh> {
    domain.validate()?;
    if nx == 0 || ny == 0 {
        return Err(Error::Config("cell counts must be positive".into()));
    }
    let nodes = lattice_nodes(&domain, nx, ny);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            elements.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut mesh = assemble(nodes, elements, CellKind::Rectangle, &HashMap::new(), domain)?;
    mesh.structured = Some(StructuredInfo {
        nx,
        ny,
        dx: domain.width() / nx as f64,
        dy: domain.height() / ny as f64,
    });
    Ok(mesh)
}

/// Triangulates the rectangular lattice, either along one diagonal or
/// criss-cross about each rectangle's center. The criss-cross variant keeps
/// the mirror symmetries of the box.
pub fn build_tri_mesh_from_rect(domain: Domain, h: f64, split: TriSplit) -> Result<Mesh> {
    domain.validate()?;
    let nx = lattice_size(domain.width(), h)?;
    let ny = lattice_size(domain.height(), h)?;
    let mut nodes = lattice_nodes(&domain, nx, ny);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let v = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
            match split {
                TriSplit::TwoWay => {
                    elements.push(vec![v[0], v[1], v[2]]);
                    elements.push(vec![v[0], v[2], v[3]]);
                }
                TriSplit::FourWay => {
                    let a = nodes[v[0]];
                    let b = nodes[v[2]];
                    let c = nodes.len();
                    nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                    for s in 0..4 {
                        elements.push(vec![v[s], v[(s + 1) % 4], c]);
                    }
                }
            }
        }
    }
    assemble(nodes, elements, CellKind::Triangle, &HashMap::new(), domain)
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

fn polygon_centroid(poly: &[[f64; 2]], area: f64) -> [f64; 2] {
    let n = poly.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let cross = p[0] * q[1] - q[0] * p[1];
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    [cx / (6.0 * area), cy / (6.0 * area)]
}

fn side_tag(a: [f64; 2], b: [f64; 2], bounds: &Domain) -> Option<BoundaryTag> {
    let tol = 1e-10 * bounds.width().max(bounds.height());
    let on = |v: f64, w: f64, target: f64| (v - target).abs() <= tol && (w - target).abs() <= tol;
    if on(a[0], b[0], bounds.x0) {
        Some(BoundaryTag::Left)
    } else if on(a[0], b[0], bounds.x1) {
        Some(BoundaryTag::Right)
    } else if on(a[1], b[1], bounds.y0) {
        Some(BoundaryTag::Bottom)
    } else if on(a[1], b[1], bounds.y1) {
        Some(BoundaryTag::Top)
    } else {
        None
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b { (a, b) } else { (b, a) }
}

/// Builds geometry and topology from counterclockwise elements.
fn assemble(
    nodes: Vec<[f64; 2]>,
    elements: Vec<Vec<usize>>,
    kind: CellKind,
    explicit_tags: &HashMap<(usize, usize), BoundaryTag>,
    bounds: Domain,
) -> Result<Mesh> {
    let mut cells = Vec::with_capacity(elements.len());
    let mut edges: Vec<Edge> = Vec::new();
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
    let mut owners: Vec<Vec<(usize, usize)>> = Vec::new();

    for (c, verts) in elements.iter().enumerate() {
        let poly: Vec<[f64; 2]> = verts.iter().map(|&v| nodes[v]).collect();
        let area = signed_area(&poly);
        if !(area > 0.0) {
            return Err(Error::MeshValidation {
                element: c,
                message: format!("non-positive area {area}"),
            });
        }
        let centroid = polygon_centroid(&poly, area);
        let n = verts.len();
        let mut local = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            let (pa, pb) = (nodes[a], nodes[b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let length = d[0].hypot(d[1]);
            let normal = [d[1] / length, -d[0] / length];
            let key = edge_key(a, b);
            let e = *lookup.entry(key).or_insert_with(|| {
                edges.push(Edge {
                    vertices: [a, b],
                    length,
                    normal,
                    left_cell: c,
                    right: EdgeSide::Boundary(BoundaryTag::Group(0)),
                });
                owners.push(Vec::new());
                edges.len() - 1
            });
            owners[e].push((c, i));
            if owners[e].len() > 2 {
                return Err(Error::MeshValidation {
                    element: c,
                    message: format!("edge ({}, {}) shared by more than two elements", a + 1, b + 1),
                });
            }
            local.push(LocalEdge {
                edge: e,
                normal,
                length,
                start: pa,
                end: pb,
                neighbor: EdgeSide::Boundary(BoundaryTag::Group(0)),
                neighbor_local: None,
            });
        }
        cells.push(Cell {
            kind,
            vertices: verts.clone(),
            area,
            centroid,
            edges: local,
        });
    }

    for (e, own) in owners.iter().enumerate() {
        match own.as_slice() {
            [(c0, l0), (c1, l1)] => {
                let first = &cells[*c0].vertices;
                let second = &cells[*c1].vertices;
                let a = first[*l0];
                let b = second[*l1];
                if a == b {
                    return Err(Error::MeshValidation {
                        element: *c1,
                        message: "inconsistent orientation with a neighbor".into(),
                    });
                }
                edges[e].right = EdgeSide::Cell(*c1);
                cells[*c0].edges[*l0].neighbor = EdgeSide::Cell(*c1);
                cells[*c0].edges[*l0].neighbor_local = Some(*l1);
                cells[*c1].edges[*l1].neighbor = EdgeSide::Cell(*c0);
                cells[*c1].edges[*l1].neighbor_local = Some(*l0);
                // exact negatives regardless of rounding in either direction
                let n = cells[*c0].edges[*l0].normal;
                cells[*c1].edges[*l1].normal = [-n[0], -n[1]];
            }
            [(c0, l0)] => {
                let [a, b] = edges[e].vertices;
                let tag = explicit_tags
                    .get(&edge_key(a, b))
                    .copied()
                    .or_else(|| side_tag(nodes[a], nodes[b], &bounds))
                    .unwrap_or(BoundaryTag::Group(0));
                edges[e].right = EdgeSide::Boundary(tag);
                cells[*c0].edges[*l0].neighbor = EdgeSide::Boundary(tag);
            }
            _ => unreachable!("every edge has one or two owners"),
        }
    }

    Ok(Mesh {
        nodes,
        cells,
        edges,
        bounds,
        structured: None,
    })
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, plus its 1-based number.
    fn next_data(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            let body = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if !tokens.is_empty() {
                return Some((i + 1, tokens));
            }
        }
        None
    }

    fn expect(&mut self, what: &str, last_line: usize) -> Result<(usize, Vec<&'a str>)> {
        self.next_data().ok_or_else(|| Error::MeshParse {
            line: last_line + 1,
            message: format!("unexpected end of input, expected {what}"),
        })
    }
}

fn parse_tokens<T: std::str::FromStr>(
    tokens: &[&str],
    count: usize,
    line: usize,
    what: &str,
) -> Result<Vec<T>> {
    if tokens.len() != count {
        return Err(Error::MeshParse {
            line,
            message: format!("expected {count} value(s) for {what}, found {}", tokens.len()),
        });
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<T>().map_err(|_| Error::MeshParse {
                line,
                message: format!("cannot parse `{t}` in {what}"),
            })
        })
        .collect()
}

/// Parses a plain-text triangle mesh.
///
/// ```text
/// # comment
/// <node count>
/// x y              (one line per node)
/// <element count>
/// i j k            (1-based node ids)
/// <boundary count> (optional)
/// i j tag          (1-based node ids, integer group id)
/// ```
///
/// Clockwise elements are reordered. Boundary edges without an explicit tag
/// are tagged by the side of the bounding box they lie on, or group 0.
pub fn import_tri_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (line, tok) = lines.expect("node count", 0)?;
    let n_nodes: usize = parse_tokens(&tok, 1, line, "node count")?[0];
    let mut last = line;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (line, tok) = lines.expect("node coordinates", last)?;
        let xy: Vec<f64> = parse_tokens(&tok, 2, line, "node coordinates")?;
        if !xy.iter().all(|v| v.is_finite()) {
            return Err(Error::MeshParse {
                line,
                message: "non-finite coordinate".into(),
            });
        }
        nodes.push([xy[0], xy[1]]);
        last = line;
    }

    let (line, tok) = lines.expect("element count", last)?;
    let n_elem: usize = parse_tokens(&tok, 1, line, "element count")?[0];
    last = line;
    let mut elements = Vec::with_capacity(n_elem);
    let mut seen = HashMap::new();
    for e in 0..n_elem {
        let (line, tok) = lines.expect("element", last)?;
        let ids: Vec<usize> = parse_tokens(&tok, 3, line, "element")?;
        for &id in &ids {
            if id == 0 || id > n_nodes {
                return Err(Error::MeshValidation {
                    element: e,
                    message: format!("line {line}: node {id} does not exist ({n_nodes} nodes)"),
                });
            }
        }
        let mut v: Vec<usize> = ids.iter().map(|i| i - 1).collect();
        if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
            return Err(Error::MeshValidation {
                element: e,
                message: format!("line {line}: repeated vertex"),
            });
        }
        let mut sorted = v.clone();
        sorted.sort_unstable();
        if let Some(prev) = seen.insert(sorted, e) {
            return Err(Error::MeshValidation {
                element: e,
                message: format!("line {line}: duplicates element {prev}"),
            });
        }
        let poly = [nodes[v[0]], nodes[v[1]], nodes[v[2]]];
        let area = signed_area(&poly);
        let scale = (0..3)
            .map(|i| {
                let (p, q) = (poly[i], poly[(i + 1) % 3]);
                (q[0] - p[0]).hypot(q[1] - p[1])
            })
            .fold(0.0, f64::max);
        if area.abs() <= 1e-14 * scale * scale {
            return Err(Error::MeshValidation {
                element: e,
                message: format!("line {line}: zero-area triangle"),
            });
        }
        if area < 0.0 {
            v.swap(1, 2);
        }
        elements.push(v);
        last = line;
    }

    let mut tags = HashMap::new();
    if let Some((line, tok)) = lines.next_data() {
        let n_tags: usize = parse_tokens(&tok, 1, line, "boundary count")?[0];
        last = line;
        for _ in 0..n_tags {
            let (line, tok) = lines.expect("boundary edge", last)?;
            let vals: Vec<usize> = parse_tokens(&tok, 3, line, "boundary edge")?;
            if vals[0] == 0 || vals[0] > n_nodes || vals[1] == 0 || vals[1] > n_nodes {
                return Err(Error::MeshParse {
                    line,
                    message: "boundary edge references a missing node".into(),
                });
            }
            let group = u32::try_from(vals[2]).map_err(|_| Error::MeshParse {
                line,
                message: "boundary tag out of range".into(),
            })?;
            tags.insert(edge_key(vals[0] - 1, vals[1] - 1), BoundaryTag::Group(group));
            last = line;
        }
        if let Some((line, _)) = lines.next_data() {
            return Err(Error::MeshParse {
                line,
                message: "trailing data after boundary section".into(),
            });
        }
    }

    if elements.is_empty() {
        return Err(Error::MeshParse {
            line: last,
            message: "mesh has no elements".into(),
        });
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &nodes {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let mesh = assemble(nodes, elements, CellKind::Triangle, &tags, Domain::new(x0, x1, y0, y1))?;
    for key in tags.keys() {
        let found = mesh
            .edges
            .iter()
            .any(|e| e.is_boundary() && edge_key(e.vertices[0], e.vertices[1]) == *key);
        if !found {
            return Err(Error::MeshParse {
                line: last,
                message: format!("tagged edge ({}, {}) is not a boundary edge", key.0 + 1, key.1 + 1),
            });
        }
    }
    Ok(mesh)
}
