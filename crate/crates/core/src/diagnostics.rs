//! Realizability statistics, error norms, the log-Sobolev comparison and
//! the CSV / VTK writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::closure::MomentVector;
use crate::dg::{DGField, Discretization};
use crate::error::{Error, Result};
use crate::fv::FVGrid;
use crate::mesh::{CellKind, Mesh};
use crate::quadrature::{volume_rule, WeightedPoint};

/// Points per direction of the per-cell error rule.
pub const ERROR_POINTS: usize = 20;

/// Floor applied to ψ⁰ before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-14;

/// Share of non-realizable nodes and cell means at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RealizabilityStats {
    pub time: f64,
    /// Percent of realizability nodes outside the cone.
    pub pct_gp: f64,
    /// Percent of cell means outside the cone.
    pub pct_cm: f64,
    pub theta_max: f64,
}

/// Exact predicate on every cell mean and every realizability node.
pub fn realizability_stats(disc: &Discretization, field: &DGField, time: f64, theta_max: f64) -> RealizabilityStats {
    let counts: Vec<(usize, usize)> = (0..field.n_cells)
        .into_par_iter()
        .map(|c| {
            let coeffs = field.cell(c);
            let bad_nodes = disc
                .node_phi
                .iter()
                .filter(|phi| !crate::dg::eval_cell(coeffs, phi).is_realizable())
                .count();
            (bad_nodes, usize::from(!field.mean(c).is_realizable()))
        })
        .collect();
    let (gp, cm) = counts.iter().fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let total_nodes = field.n_cells * disc.node_phi.len();
    RealizabilityStats {
        time,
        pct_gp: 100.0 * gp as f64 / total_nodes.max(1) as f64,
        pct_cm: 100.0 * cm as f64 / field.n_cells.max(1) as f64,
        theta_max,
    }
}

/// Per-cell rule used for errors: 20×20 Gauss on rectangles, the collapsed
/// 20×20 rule on triangles. Weights sum to one. With 20 points the maximum
/// over the nodes of the limiter study settles to four digits.
pub fn error_rule(kind: CellKind) -> Vec<WeightedPoint> {
    error_rule_n(kind, ERROR_POINTS)
}

/// As [`error_rule`] with `n` points per direction.
pub fn error_rule_n(kind: CellKind, n: usize) -> Vec<WeightedPoint> {
    let mut rule = volume_rule(kind, n);
    let total: f64 = rule.iter().map(|p| p.weight).sum();
    for p in &mut rule {
        p.weight /= total;
    }
    rule
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub e1: f64,
    pub einf: f64,
}

/// `E¹ = ∫|ψ⁰_exact − ψ⁰_h|` and the maximum of the same difference over
/// the quadrature nodes.
pub fn error_norms(disc: &Discretization, field: &DGField, exact: impl Fn(f64, f64) -> f64 + Sync) -> ErrorNorms {
    error_norms_n(disc, field, exact, ERROR_POINTS)
}

/// As [`error_norms`] with `n` points per direction.
pub fn error_norms_n(disc: &Discretization, field: &DGField, exact: impl Fn(f64, f64) -> f64 + Sync, n: usize) -> ErrorNorms {
    let rule = error_rule_n(disc.mesh.kind(), n);
    let phis: Vec<Vec<f64>> = rule.iter().map(|p| disc.basis.eval(p.xi)).collect();
    let per_cell: Vec<(f64, f64)> = (0..field.n_cells)
        .into_par_iter()
        .map(|c| {
            let coeffs = &field.cell(c)[..field.n_basis];
            let area = disc.mesh.cells[c].area;
            let mut e1 = 0.0;
            let mut einf: f64 = 0.0;
            for (p, phi) in rule.iter().zip(&phis) {
                let x = disc.maps[c].to_physical(p.xi);
                let uh: f64 = coeffs.iter().zip(phi).map(|(a, b)| a * b).sum();
                let e = (exact(x[0], x[1]) - uh).abs();
                e1 += area * p.weight * e;
                einf = einf.max(e);
            }
            (e1, einf)
        })
        .collect();
    ErrorNorms {
        e1: per_cell.iter().map(|x| x.0).sum(),
        einf: per_cell.iter().map(|x| x.1).fold(0.0, f64::max),
    }
}

/// `log(e_coarse/e_fine) / log(h_coarse/h_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// Finds the cell containing a point.
pub struct CellLocator<'a> {
    mesh: &'a Mesh,
    bins: Vec<Vec<usize>>,
    nb: usize,
}

impl<'a> CellLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        if mesh.structured.is_some() {
            return Self { mesh, bins: Vec::new(), nb: 0 };
        }
        let nb = ((mesh.num_cells() as f64).sqrt().ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nb * nb];
        let b = mesh.bounds;
        let bin = |v: f64, lo: f64, w: f64| (((v - lo) / w * nb as f64).floor().max(0.0) as usize).min(nb - 1);
        for (c, cell) in mesh.cells.iter().enumerate() {
            let xs = cell.vertices.iter().map(|&v| mesh.nodes[v][0]);
            let ys = cell.vertices.iter().map(|&v| mesh.nodes[v][1]);
            let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |a, x| (a.0.min(x), a.1.max(x)));
            let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |a, y| (a.0.min(y), a.1.max(y)));
            for j in bin(y0, b.y0, b.height())..=bin(y1, b.y0, b.height()) {
                for i in bin(x0, b.x0, b.width())..=bin(x1, b.x0, b.width()) {
                    bins[j * nb + i].push(c);
                }
            }
        }
        Self { mesh, bins, nb }
    }

    /// Cell index, or `None` outside the mesh.
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let b = self.mesh.bounds;
        let tol = 1e-12 * b.width().max(b.height());
        if x[0] < b.x0 - tol || x[0] > b.x1 + tol || x[1] < b.y0 - tol || x[1] > b.y1 + tol {
            return None;
        }
        if let Some(s) = self.mesh.structured {
            let i = (((x[0] - b.x0) / s.dx).floor().max(0.0) as usize).min(s.nx - 1);
            let j = (((x[1] - b.y0) / s.dy).floor().max(0.0) as usize).min(s.ny - 1);
            return Some(j * s.nx + i);
        }
        let bin = |v: f64, lo: f64, w: f64| (((v - lo) / w * self.nb as f64).floor().max(0.0) as usize).min(self.nb - 1);
        let i = bin(x[0], b.x0, b.width());
        let j = bin(x[1], b.y0, b.height());
        let mut best = None;
        let mut best_out = f64::INFINITY;
        for &c in &self.bins[j * self.nb + i] {
            // largest signed distance outside any edge; ≤ 0 means inside
            let out = self.mesh.cells[c]
                .edges
                .iter()
                .map(|e| (x[0] - e.start[0]) * e.normal[0] + (x[1] - e.start[1]) * e.normal[1])
                .fold(f64::NEG_INFINITY, f64::max);
            if out <= 0.0 {
                return Some(c);
            }
            if out < best_out {
                best_out = out;
                best = Some(c);
            }
        }
        if best_out <= tol {
            best
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSobolevError {
    /// Sum of the two parts below.
    pub value: f64,
    /// `‖log₁₀ψ⁰_h − log₁₀ψ⁰_ref‖_L²`.
    pub l2: f64,
    /// `‖∇log₁₀ψ⁰_h − ∇log₁₀ψ⁰_ref‖_L²`.
    pub gradient: f64,
    /// Samples where either ψ⁰ had to be floored.
    pub clamped: usize,
}

/// Compares `log₁₀ ψ⁰` of a DG field with an FV reference at the reference
/// cell centres, using equal weights `Δx Δy`. Gradients use the chain rule
/// `∇log₁₀ f = ∇f / (f ln 10)`; the reference gradient comes from centred
/// differences.
pub fn log_sobolev_error(disc: &Discretization, field: &DGField, reference: &FVGrid) -> Result<LogSobolevError> {
    let grads = reference.psi0_gradients()?;
    let locator = CellLocator::new(&disc.mesh);
    let w = reference.dx * reference.dy;
    let ln10 = std::f64::consts::LN_10;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut clamped = 0;
    for j in 0..reference.ny {
        for i in 0..reference.nx {
            let x = reference.center(i, j);
            let c = locator
                .locate(x)
                .ok_or_else(|| Error::Config(format!("reference point ({}, {}) lies outside the DG mesh", x[0], x[1])))?;
            let xi = disc.maps[c].to_reference(x);
            let mut dg = disc.eval_ref(field, c, xi).psi0;
            let dg_grad = disc.grad_psi0_ref(field, c, xi);
            let mut rf = reference.get(i, j).psi0;
            let rf_grad = grads[j * reference.nx + i];
            if !(dg > LOG_FLOOR && rf > LOG_FLOOR) {
                clamped += 1;
                dg = dg.max(LOG_FLOOR);
                rf = rf.max(LOG_FLOOR);
            }
            l2 += w * (dg.log10() - rf.log10()).powi(2);
            let gx = dg_grad[0] / (dg * ln10) - rf_grad[0] / (rf * ln10);
            let gy = dg_grad[1] / (dg * ln10) - rf_grad[1] / (rf * ln10);
            h1 += w * (gx * gx + gy * gy);
        }
    }
    let (l2, gradient) = (l2.sqrt(), h1.sqrt());
    Ok(LogSobolevError {
        value: l2 + gradient,
        l2,
        gradient,
        clamped,
    })
}

/// Where a field dump samples the solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldSampling {
    /// One row per cell at its centroid, holding the mean.
    CellMeans,
    /// Every realizability node of every cell.
    Nodes,
    /// Cell centres of a uniform `nx × ny` lattice over the bounding box.
    Lattice { nx: usize, ny: usize },
}

pub const FIELD_HEADER: &str = "x,y,psi0,psi1x,psi1y,f";
pub const STATS_HEADER: &str = "time,pct_gp,pct_cm,theta_max";
pub const STUDY_HEADER: &str = "inv_h,E1,order1,Einf,orderinf,theta_max";

/// One field CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub u: MomentVector,
}

impl FieldRow {
    /// `|ψ¹|/ψ⁰`, infinite when ψ⁰ ≤ 0 and ψ¹ ≠ 0.
    pub fn f(&self) -> f64 {
        let n = self.u.flux_norm();
        if self.u.psi0 > 0.0 {
            n / self.u.psi0
        } else if n == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Sample rows of a DG field in a deterministic order.
pub fn field_rows(disc: &Discretization, field: &DGField, sampling: FieldSampling) -> Result<Vec<FieldRow>> {
    let mut rows = Vec::new();
    match sampling {
        FieldSampling::CellMeans => {
            for (c, cell) in disc.mesh.cells.iter().enumerate() {
                rows.push(FieldRow {
                    x: cell.centroid[0],
                    y: cell.centroid[1],
                    u: field.mean(c),
                });
            }
        }
        FieldSampling::Nodes => {
            for c in 0..field.n_cells {
                for (x, u) in disc.node_points(c).into_iter().zip(disc.node_values(field, c)) {
                    rows.push(FieldRow { x: x[0], y: x[1], u });
                }
            }
        }
        FieldSampling::Lattice { nx, ny } => {
            if nx == 0 || ny == 0 {
                return Err(Error::Config(format!("sampling lattice {nx}x{ny} must be positive")));
            }
            let locator = CellLocator::new(&disc.mesh);
            let b = disc.mesh.bounds;
            for j in 0..ny {
                for i in 0..nx {
                    let x = [
                        b.x0 + (i as f64 + 0.5) * b.width() / nx as f64,
                        b.y0 + (j as f64 + 0.5) * b.height() / ny as f64,
                    ];
                    if let Some(c) = locator.locate(x) {
                        rows.push(FieldRow { x: x[0], y: x[1], u: disc.eval_at(field, c, x) });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Rows of an FV grid, row-major.
pub fn fv_field_rows(grid: &FVGrid) -> Vec<FieldRow> {
    let mut rows = Vec::with_capacity(grid.cells.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let [x, y] = grid.center(i, j);
            rows.push(FieldRow { x, y, u: grid.get(i, j) });
        }
    }
    rows
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any f64.
fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn field_csv(rows: &[FieldRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 120);
    out.push_str(FIELD_HEADER);
    out.push('\n');
    for r in rows {
        for (i, v) in [r.x, r.y, r.u.psi0, r.u.psi1x, r.u.psi1y, r.f()].into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn write_field_csv(path: &Path, rows: &[FieldRow]) -> Result<()> {
    write_file(path, &field_csv(rows))
}

pub fn stats_csv(series: &[RealizabilityStats]) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for s in series {
        num(&mut out, s.time);
        out.push(',');
        num(&mut out, s.pct_gp);
        out.push(',');
        num(&mut out, s.pct_cm);
        out.push(',');
        num(&mut out, s.theta_max);
        out.push('\n');
    }
    out
}

pub fn write_stats_csv(path: &Path, series: &[RealizabilityStats]) -> Result<()> {
    write_file(path, &stats_csv(series))
}

fn parse_rows(text: &str, header: &str, width: usize) -> Result<Vec<Vec<Option<f64>>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::Config(format!(
                "expected CSV header {header:?}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Config(format!("CSV line {}: expected {width} fields", n + 2)));
        }
        let row = fields
            .iter()
            .map(|f| {
                let f = f.trim();
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Config(format!("CSV line {}: {e}", n + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_stats_csv(text: &str) -> Result<Vec<RealizabilityStats>> {
    parse_rows(text, STATS_HEADER, 4)?
        .into_iter()
        .map(|r| {
            let v: Option<Vec<f64>> = r.into_iter().collect();
            let v = v.ok_or_else(|| Error::Config("empty field in stats CSV".into()))?;
            Ok(RealizabilityStats {
                time: v[0],
                pct_gp: v[1],
                pct_cm: v[2],
                theta_max: v[3],
            })
        })
        .collect()
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<RealizabilityStats>> {
    parse_stats_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn parse_field_csv(text: &str) -> Result<Vec<FieldRow>> {
    parse_rows(text, FIELD_HEADER, 6)?
        .into_iter()
        .map(|r| {
            let v: Option<Vec<f64>> = r.into_iter().collect();
            let v = v.ok_or_else(|| Error::Config("empty field in field CSV".into()))?;
            Ok(FieldRow {
                x: v[0],
                y: v[1],
                u: MomentVector::new(v[2], v[3], v[4]),
            })
        })
        .collect()
}

/// One row of a convergence table. Orders are absent on the first row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyRow {
    pub inv_h: f64,
    pub e1: f64,
    pub order1: Option<f64>,
    pub einf: f64,
    pub orderinf: Option<f64>,
    pub theta_max: f64,
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(STUDY_HEADER);
    out.push('\n');
    for r in rows {
        for (i, v) in [Some(r.inv_h), Some(r.e1), r.order1, Some(r.einf), r.orderinf, Some(r.theta_max)]
            .into_iter()
            .enumerate()
        {
            if i > 0 {
                out.push(',');
            }
            if let Some(v) = v {
                num(&mut out, v);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_study_csv(path: &Path, rows: &[StudyRow]) -> Result<()> {
    write_file(path, &study_csv(rows))
}

pub fn parse_study_csv(text: &str) -> Result<Vec<StudyRow>> {
    parse_rows(text, STUDY_HEADER, 6)?
        .into_iter()
        .map(|r| {
            let req = |i: usize| r[i].ok_or_else(|| Error::Config("empty required field in study CSV".into()));
            Ok(StudyRow {
                inv_h: req(0)?,
                e1: req(1)?,
                order1: r[2],
                einf: req(3)?,
                orderinf: r[4],
                theta_max: req(5)?,
            })
        })
        .collect()
}

/// Legacy ASCII unstructured grid. Cell data holds the means and `f`;
/// point data holds ψ averaged over the cells sharing each vertex.
pub fn vtk_string(disc: &Discretization, field: &DGField, title: &str) -> String {
    let mesh = &disc.mesh;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    out.push_str(&title);
    out.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1]);
    }
    let list: usize = mesh.cells.iter().map(|c| c.vertices.len() + 1).sum();
    let _ = writeln!(out, "CELLS {} {}", mesh.cells.len(), list);
    for c in &mesh.cells {
        let _ = write!(out, "{}", c.vertices.len());
        for v in &c.vertices {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.cells.len());
    for c in &mesh.cells {
        out.push_str(match c.kind {
            CellKind::Triangle => "5\n",
            CellKind::Rectangle => "9\n",
        });
    }
    let _ = writeln!(out, "CELL_DATA {}", mesh.cells.len());
    out.push_str("SCALARS psi0 double 1\nLOOKUP_TABLE default\n");
    for c in 0..field.n_cells {
        let _ = writeln!(out, "{:.16e}", field.mean(c).psi0);
    }
    out.push_str("SCALARS f double 1\nLOOKUP_TABLE default\n");
    for c in 0..field.n_cells {
        let m = field.mean(c);
        let f = FieldRow { x: 0.0, y: 0.0, u: m }.f();
        let _ = writeln!(out, "{:.16e}", if f.is_finite() { f } else { f64::MAX });
    }
    out.push_str("VECTORS psi1 double\n");
    for c in 0..field.n_cells {
        let m = field.mean(c);
        let _ = writeln!(out, "{:.16e} {:.16e} 0", m.psi1x, m.psi1y);
    }
    let mut sum = vec![MomentVector::ZERO; mesh.nodes.len()];
    let mut count = vec![0usize; mesh.nodes.len()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        for &v in &cell.vertices {
            sum[v] += disc.eval_at(field, c, mesh.nodes[v]);
            count[v] += 1;
        }
    }
    let avg: Vec<MomentVector> = sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| if n > 0 { *s * (1.0 / n as f64) } else { MomentVector::ZERO })
        .collect();
    let _ = writeln!(out, "POINT_DATA {}", mesh.nodes.len());
    out.push_str("SCALARS psi0_vertex double 1\nLOOKUP_TABLE default\n");
    for a in &avg {
        let _ = writeln!(out, "{:.16e}", a.psi0);
    }
    out.push_str("VECTORS psi1_vertex double\n");
    for a in &avg {
        let _ = writeln!(out, "{:.16e} {:.16e} 0", a.psi1x, a.psi1y);
    }
    out
}

pub fn write_vtk(path: &Path, disc: &Discretization, field: &DGField, title: &str) -> Result<()> {
    write_file(path, &vtk_string(disc, field, title))
}
