//! One-dimensional Gauss and Gauss-Lobatto rules and the per-shape node sets
//! used by the solver: volume rules, edge rules, the cell-mean decomposition
//! and the realizability node set `S_k^K`.
//!
//! All reference coordinates use the unit triangle `(0,0), (1,0), (0,1)` or
//! the centered square `[−½, ½]²`. Every weight set is normalized to sum to 1,
//! so a weighted sum is a cell average.

use crate::error::{Error, Result};
use crate::mesh::CellKind;

/// Nodes and weights on `[−½, ½]`, weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss-Legendre with any number of points, by Newton iteration on `Pₙ`.
pub fn gauss_legendre(n: usize) -> Rule1D {
    assert!(n >= 1, "gauss_legendre needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // store on [−½, ½] with unit total weight
        nodes[i] = -0.5 * x;
        nodes[n - 1 - i] = 0.5 * x;
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule1D { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 2..=n {
        let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule with `1 ≤ n ≤ 5` points.
pub fn gauss_rule(n: usize) -> Result<Rule1D> {
    if !(1..=5).contains(&n) {
        return Err(Error::Quadrature(format!("Gauss rule with {n} points not supported (1..=5)")));
    }
    Ok(gauss_legendre(n))
}

/// Gauss-Lobatto rule with 3 or 4 points, endpoints included.
pub fn gauss_lobatto_rule(n: usize) -> Result<Rule1D> {
    match n {
        3 => Ok(Rule1D {
            nodes: vec![-0.5, 0.0, 0.5],
            weights: vec![1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
        }),
        4 => {
            let a = 0.5 / 5f64.sqrt();
            Ok(Rule1D {
                nodes: vec![-0.5, -a, a, 0.5],
                weights: vec![1.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0, 1.0 / 12.0],
            })
        }
        _ => Err(Error::Quadrature(format!("Gauss-Lobatto rule with {n} points not supported (3 or 4)"))),
    }
}

/// Number of Gauss-Lobatto points behind the cell-mean decomposition.
pub fn lobatto_points(k: usize) -> usize {
    (k + 1).max(3)
}

/// First Gauss-Lobatto weight `ŵ¹` entering the time-step restriction.
pub fn first_lobatto_weight(k: usize) -> Result<f64> {
    Ok(gauss_lobatto_rule(lobatto_points(k))?.weights[0])
}

/// Weighted point in reference coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPoint {
    pub xi: [f64; 2],
    pub weight: f64,
}

/// Reference vertices, counterclockwise, matching the mesh's local vertex order.
pub fn reference_vertices(kind: CellKind) -> &'static [[f64; 2]] {
    match kind {
        CellKind::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        CellKind::Rectangle => &[[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
    }
}

/// Collapsed-coordinate Gauss rule on the reference triangle, exact for total
/// degree `2n − 2`.
pub fn triangle_rule(n: usize) -> Vec<WeightedPoint> {
    let g = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for (&ta, &wa) in g.nodes.iter().zip(&g.weights) {
        for (&tb, &wb) in g.nodes.iter().zip(&g.weights) {
            let a = ta + 0.5;
            let b = tb + 0.5;
            out.push(WeightedPoint {
                xi: [a * (1.0 - b), b],
                weight: 2.0 * wa * wb * (1.0 - b),
            });
        }
    }
    out
}

/// Tensor rule on `[−½, ½]²`.
pub fn tensor_rule(rule: &Rule1D) -> Vec<WeightedPoint> {
    let mut out = Vec::with_capacity(rule.len() * rule.len());
    for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
        for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
            out.push(WeightedPoint {
                xi: [x, y],
                weight: wx * wy,
            });
        }
    }
    out
}

/// Volume rule with `n` points per direction for the given shape.
pub fn volume_rule(kind: CellKind, n: usize) -> Vec<WeightedPoint> {
    match kind {
        CellKind::Triangle => triangle_rule(n),
        CellKind::Rectangle => tensor_rule(&gauss_legendre(n)),
    }
}

/// Which part of the cell-mean decomposition a node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRole {
    /// First Gauss-Lobatto layer, lying on an edge.
    Edge,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionNode {
    pub xi: [f64; 2],
    pub weight: f64,
    pub role: NodeRole,
}

/// Quadrature data for one reference shape and degree.
#[derive(Clone, Debug)]
pub struct QuadratureSet {
    pub kind: CellKind,
    pub k: usize,
    /// Volume rule for the weak-form integrals.
    pub volume: Vec<WeightedPoint>,
    /// `(k+1)`-point Gauss rule used on every edge.
    pub edge: Rule1D,
    /// Gauss-Lobatto rule behind the cell-mean decomposition.
    pub lobatto: Rule1D,
    /// Decomposition as constructed, with shared edge nodes listed once per
    /// projection that produces them.
    pub decomposition_raw: Vec<DecompositionNode>,
    /// Decomposition with coincident nodes merged (weights added).
    pub decomposition: Vec<DecompositionNode>,
    /// Nodes at which realizability is enforced, deduplicated.
    pub realizability_nodes: Vec<[f64; 2]>,
}

impl QuadratureSet {
    pub fn new(kind: CellKind, k: usize) -> Result<Self> {
        match kind {
            CellKind::Triangle => triangle_cellmean_set(k),
            CellKind::Rectangle => rect_node_set(k),
        }
    }

    pub fn first_lobatto_weight(&self) -> f64 {
        self.lobatto.weights[0]
    }

    /// Reference coordinates of the Gauss nodes on local edge `local`,
    /// ordered from the edge's start vertex to its end vertex.
    pub fn edge_nodes(&self, local: usize) -> Vec<[f64; 2]> {
        let verts = reference_vertices(self.kind);
        let a = verts[local];
        let b = verts[(local + 1) % verts.len()];
        self.edge
            .nodes
            .iter()
            .map(|&t| {
                let s = t + 0.5;
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
            })
            .collect()
    }

    /// Applies the merged decomposition to point values.
    pub fn decomposition_mean(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.decomposition.iter().map(|n| n.weight * f(n.xi)).sum()
    }
}

fn check_degree(k: usize) -> Result<()> {
    if k > 2 {
        return Err(Error::Quadrature(format!("polynomial degree {k} not supported (0..=2)")));
    }
    Ok(())
}

const MERGE_TOL: f64 = 1e-13;

fn same_point(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= MERGE_TOL && (a[1] - b[1]).abs() <= MERGE_TOL
}

fn merge(raw: &[DecompositionNode]) -> Vec<DecompositionNode> {
    let mut out: Vec<DecompositionNode> = Vec::new();
    for n in raw {
        match out.iter_mut().find(|m| same_point(m.xi, n.xi)) {
            Some(m) => m.weight += n.weight,
            None => out.push(*n),
        }
    }
    out
}

fn dedup_points(points: impl IntoIterator<Item = [f64; 2]>) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for p in points {
        if !out.iter().any(|q| same_point(*q, p)) {
            out.push(p);
        }
    }
    out
}

/// Triangle node set built from three collapsed projections of the
/// Gauss(k+1) × Gauss-Lobatto(N) tensor rule.
///
/// Projection `i` collapses the square onto vertex `i`:
/// `X(u, v) = Vᵢ + (½ − v)[(½ − u)(Vᵢ₊₁ − Vᵢ) + (½ + u)(Vᵢ₊₂ − Vᵢ)]`,
/// with `u` Gauss-Lobatto and `v` Gauss. The lines `u = ±½` are the two edges
/// meeting at `Vᵢ`, so every edge Gauss node is produced by two projections.
pub fn triangle_cellmean_set(k: usize) -> Result<QuadratureSet> {
    check_degree(k)?;
    let kind = CellKind::Triangle;
    let gauss = gauss_legendre(k + 1);
    let lobatto = gauss_lobatto_rule(lobatto_points(k))?;
    let verts = reference_vertices(kind);
    let n_gl = lobatto.len();

    let mut raw = Vec::with_capacity(3 * (k + 1) * n_gl);
    for i in 0..3 {
        let apex = verts[i];
        let e1 = [verts[(i + 1) % 3][0] - apex[0], verts[(i + 1) % 3][1] - apex[1]];
        let e2 = [verts[(i + 2) % 3][0] - apex[0], verts[(i + 2) % 3][1] - apex[1]];
        for (a, (&u, &wu)) in lobatto.nodes.iter().zip(&lobatto.weights).enumerate() {
            for (&v, &wv) in gauss.nodes.iter().zip(&gauss.weights) {
                let r = 0.5 - v;
                let xi = [
                    apex[0] + r * ((0.5 - u) * e1[0] + (0.5 + u) * e2[0]),
                    apex[1] + r * ((0.5 - u) * e1[1] + (0.5 + u) * e2[1]),
                ];
                let role = if a == 0 || a == n_gl - 1 {
                    NodeRole::Edge
                } else {
                    NodeRole::Interior
                };
                raw.push(DecompositionNode {
                    xi,
                    weight: 2.0 / 3.0 * wu * wv * r,
                    role,
                });
            }
        }
    }
    let decomposition = merge(&raw);
    let realizability_nodes = dedup_points(decomposition.iter().map(|n| n.xi));
    Ok(QuadratureSet {
        kind,
        k,
        volume: triangle_rule(k + 2),
        edge: gauss,
        lobatto,
        decomposition_raw: raw,
        decomposition,
        realizability_nodes,
    })
}

/// Rectangle node set: 4×4 Gauss-Lobatto volume rule, `(k+1)`-point Gauss
/// edges, and the two directional Gauss × Gauss-Lobatto(N) decompositions
/// averaged with equal weight.
///
/// The realizability set is the union of the volume nodes and all
/// decomposition nodes, which include the edge Gauss nodes.
pub fn rect_node_set(k: usize) -> Result<QuadratureSet> {
    check_degree(k)?;
    let kind = CellKind::Rectangle;
    let gauss = gauss_legendre(k + 1);
    let lobatto = gauss_lobatto_rule(lobatto_points(k))?;
    let volume = tensor_rule(&gauss_lobatto_rule(4)?);
    let n_gl = lobatto.len();

    let mut raw = Vec::new();
    for dir in 0..2 {
        for (a, (&u, &wu)) in lobatto.nodes.iter().zip(&lobatto.weights).enumerate() {
            for (&g, &wg) in gauss.nodes.iter().zip(&gauss.weights) {
                let xi = if dir == 0 { [g, u] } else { [u, g] };
                let role = if a == 0 || a == n_gl - 1 {
                    NodeRole::Edge
                } else {
                    NodeRole::Interior
                };
                raw.push(DecompositionNode {
                    xi,
                    weight: 0.5 * wu * wg,
                    role,
                });
            }
        }
    }
    let decomposition = merge(&raw);
    let realizability_nodes = dedup_points(
        volume
            .iter()
            .map(|p| p.xi)
            .chain(decomposition.iter().map(|n| n.xi)),
    );
    Ok(QuadratureSet {
        kind,
        k,
        volume,
        edge: gauss,
        lobatto,
        decomposition_raw: raw,
        decomposition,
        realizability_nodes,
    })
}
