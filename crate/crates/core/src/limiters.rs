//! TVBM slope limiting in primitive or characteristic variables and the
//! scaling realizability limiter.
//!
//! After every Runge-Kutta stage the slope limiter runs first and the
//! realizability limiter second. Both keep cell means bit-identical.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::{eigendecomposition, is_realizable, realizability_fix, MomentVector};
use crate::dg::{eval_cell, ghost_state, DGField, Discretization, GhostPolicy};
use crate::error::{Error, Result};
use crate::mesh::{CellKind, EdgeSide};

/// Amount added to θ while a cell still leaks outside the cone after scaling.
pub const THETA_RETIGHTEN: f64 = 1e-10;

/// Relative size below which a limited slope counts as unchanged.
pub const CHANGE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlopeMode {
    Off,
    Primitive,
    Characteristic,
}

/// Limiter selection. Labels follow the `SL`, `CL`, `SRL`, `CRL` convention
/// followed by `M` (or `inf`), e.g. `CRL22`, `SL0`, `CRLinf`; `RL` and `none`
/// are accepted as shorthands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimiterConfig {
    pub slope: SlopeMode,
    pub m: f64,
    pub realizability: bool,
    pub eps_fix: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self {
            slope: SlopeMode::Characteristic,
            m: 0.0,
            realizability: true,
            eps_fix: 1e-12,
        }
    }
}

pub const VALID_LABELS: &str = "SL<M>, CL<M>, SRL<M>, CRL<M> with M a non-negative number or `inf`, RL, none";

impl LimiterConfig {
    pub fn none() -> Self {
        Self {
            slope: SlopeMode::Off,
            m: f64::INFINITY,
            realizability: false,
            eps_fix: 1e-12,
        }
    }

    pub fn realizability_only() -> Self {
        Self {
            realizability: true,
            ..Self::none()
        }
    }

    pub fn new(slope: SlopeMode, m: f64, realizability: bool) -> Self {
        let slope = if m.is_infinite() { SlopeMode::Off } else { slope };
        Self {
            slope,
            m,
            realizability,
            eps_fix: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.is_nan() || self.m < 0.0 {
            return Err(Error::Config(format!("TVB constant M = {} must be non-negative", self.m)));
        }
        if self.slope != SlopeMode::Off && !self.m.is_finite() {
            return Err(Error::Config("slope limiting needs a finite M".into()));
        }
        if !(self.eps_fix > 0.0 && self.eps_fix < 1e-6) {
            return Err(Error::Config(format!("eps_fix = {} outside (0, 1e-6)", self.eps_fix)));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let m = if self.m.is_infinite() { "inf".to_string() } else { format!("{}", self.m) };
        match (self.slope, self.realizability) {
            (SlopeMode::Off, true) => "RL".into(),
            (SlopeMode::Off, false) => "none".into(),
            (SlopeMode::Primitive, false) => format!("SL{m}"),
            (SlopeMode::Characteristic, false) => format!("CL{m}"),
            (SlopeMode::Primitive, true) => format!("SRL{m}"),
            (SlopeMode::Characteristic, true) => format!("CRL{m}"),
        }
    }
}

impl fmt::Display for LimiterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for LimiterConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown limiter label `{s}`; valid labels: {VALID_LABELS}"));
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "none" | "off" => return Ok(Self::none()),
            "rl" => return Ok(Self::realizability_only()),
            _ => {}
        }
        let (slope, realizability, rest) = if let Some(r) = t.strip_prefix("CRL") {
            (SlopeMode::Characteristic, true, r)
        } else if let Some(r) = t.strip_prefix("SRL") {
            (SlopeMode::Primitive, true, r)
        } else if let Some(r) = t.strip_prefix("CL") {
            (SlopeMode::Characteristic, false, r)
        } else if let Some(r) = t.strip_prefix("SL") {
            (SlopeMode::Primitive, false, r)
        } else {
            return Err(bad());
        };
        let m = match rest.to_ascii_lowercase().as_str() {
            "inf" | "∞" => f64::INFINITY,
            "" => return Err(bad()),
            v => v.parse::<f64>().map_err(|_| bad())?,
        };
        if m.is_nan() || m < 0.0 {
            return Err(bad());
        }
        Ok(Self::new(slope, m, realizability))
    }
}

/// TVB-modified minmod: returns `a[0]` when `|a[0]| < M·dx²`, otherwise the
/// minmod of all arguments.
pub fn tvb_minmod(a: &[f64], m: f64, dx: f64) -> f64 {
    assert!(a.len() >= 2, "tvb_minmod needs at least two arguments");
    if a[0].abs() < m * dx * dx {
        return a[0];
    }
    let s = a[0].signum();
    if a.iter().all(|v| v.signum() == s && *v != 0.0) {
        s * a.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    } else {
        0.0
    }
}

/// Outcome of one slope limiting pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlopeReport {
    pub limited: Vec<bool>,
    /// Cells where the characteristic transform was unusable and primitive
    /// limiting was applied instead.
    pub fallback_cells: Vec<usize>,
}

impl SlopeReport {
    pub fn limited_count(&self) -> usize {
        self.limited.iter().filter(|&&b| b).count()
    }
}

/// Mean across each edge: neighbor mean or ghost mean.
fn neighbor_means(
    disc: &Discretization,
    field: &DGField,
    c: usize,
    ghosts: &GhostPolicy,
    t: f64,
) -> Result<Vec<MomentVector>> {
    let mean = field.mean(c);
    disc.mesh.cells[c]
        .edges
        .iter()
        .map(|e| match e.neighbor {
            EdgeSide::Cell(n) => Ok(field.mean(n)),
            EdgeSide::Boundary(tag) => Ok(ghost_state(&mean, ghosts.get(tag)?, e.midpoint(), e.normal, t)),
        })
        .collect()
}

/// Limits a set of directional slopes against mean differences.
///
/// `slopes[d]` is the cell's own difference in direction `d` and `diffs[d]`
/// the list of mean differences it is compared against. In characteristic
/// mode everything is first transformed with `R⁻¹(n_d)` built at the fixed
/// mean. Returns the limited slopes, whether anything changed, and whether
/// the characteristic transform had to be skipped.
fn limit_directions(
    mean: &MomentVector,
    slopes: &[[f64; 3]],
    diffs: &[Vec<[f64; 3]>],
    normals: &[[f64; 2]],
    dxs: &[f64],
    cfg: &LimiterConfig,
) -> (Vec<[f64; 3]>, bool, bool) {
    let mut out = slopes.to_vec();
    let mut changed = false;
    let mut fallback = false;
    // differences at rounding level relative to the mean do not count as
    // limiting; otherwise M = 0 would strip high modes off smooth data
    let tol = CHANGE_TOLERANCE * mean.psi0.abs().max(mean.flux_norm());
    for d in 0..slopes.len() {
        let decomposition = if cfg.slope == SlopeMode::Characteristic {
            let fixed = realizability_fix(mean, cfg.eps_fix);
            match eigendecomposition(&fixed, normals[d]) {
                Ok(e) => Some(e),
                Err(_) => {
                    fallback = true;
                    None
                }
            }
        } else {
            None
        };
        let to = |v: [f64; 3]| match &decomposition {
            Some(e) => e.to_characteristic(v),
            None => v,
        };
        let w = to(slopes[d]);
        let dw: Vec<[f64; 3]> = diffs[d].iter().map(|&v| to(v)).collect();
        let mut limited = w;
        let mut dir_changed = false;
        for comp in 0..3 {
            let mut args = Vec::with_capacity(1 + dw.len());
            args.push(w[comp]);
            args.extend(dw.iter().map(|v| v[comp]));
            limited[comp] = tvb_minmod(&args, cfg.m, dxs[d]);
            if (limited[comp] - w[comp]).abs() > tol {
                dir_changed = true;
            }
        }
        if dir_changed {
            changed = true;
            out[d] = match &decomposition {
                Some(e) => e.from_characteristic(limited),
                None => limited,
            };
        }
    }
    (out, changed, fallback)
}

/// TVBM slope limiter.
///
/// Rectangles compare the face-minus-mean value of the linear part in `x` and
/// `y` against forward and backward mean differences. Triangles compare the
/// linear part's increment toward each edge neighbor's centroid (a boundary
/// neighbor's centroid is the reflection across the edge) with the mean
/// difference, then rebuild the gradient by least squares. A limited cell
/// keeps its mean and the limited linear part; higher modes are dropped.
pub fn slope_limit(
    disc: &Discretization,
    field: &DGField,
    cfg: &LimiterConfig,
    ghosts: &GhostPolicy,
    t: f64,
) -> Result<(DGField, SlopeReport)> {
    cfg.validate()?;
    let n = disc.n_cells();
    let mut out = field.clone();
    if cfg.slope == SlopeMode::Off || disc.k == 0 {
        return Ok((
            out,
            SlopeReport {
                limited: vec![false; n],
                fallback_cells: Vec::new(),
            },
        ));
    }
    ghosts.validate(&disc.boundary_tags)?;
    let stride = out.stride();
    let results: Vec<Result<(bool, bool)>> = out
        .data
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(c, coeffs)| match disc.mesh.kind() {
            CellKind::Rectangle => limit_rect_cell(disc, field, c, cfg, ghosts, t, coeffs),
            CellKind::Triangle => limit_tri_cell(disc, field, c, cfg, ghosts, t, coeffs),
        })
        .collect();
    let mut report = SlopeReport {
        limited: Vec::with_capacity(n),
        fallback_cells: Vec::new(),
    };
    for (c, r) in results.into_iter().enumerate() {
        let (limited, fallback) = r?;
        report.limited.push(limited);
        if fallback {
            report.fallback_cells.push(c);
        }
    }
    Ok((out, report))
}

fn component_coeffs(coeffs: &[f64], nb: usize, i: usize) -> [f64; 3] {
    [coeffs[i], coeffs[nb + i], coeffs[2 * nb + i]]
}

fn write_linear(coeffs: &mut [f64], nb: usize, lin: &[[f64; 3]; 2]) {
    for comp in 0..3 {
        coeffs[comp * nb + 1] = lin[0][comp];
        coeffs[comp * nb + 2] = lin[1][comp];
        for i in 3..nb {
            coeffs[comp * nb + i] = 0.0;
        }
    }
}

fn sub(a: MomentVector, b: MomentVector) -> [f64; 3] {
    (a - b).to_array()
}

fn limit_rect_cell(
    disc: &Discretization,
    field: &DGField,
    c: usize,
    cfg: &LimiterConfig,
    ghosts: &GhostPolicy,
    t: f64,
    coeffs: &mut [f64],
) -> Result<(bool, bool)> {
    let nb = field.n_basis;
    let cell = &disc.mesh.cells[c];
    let mean = field.mean(c);
    let nbrs = neighbor_means(disc, field, c, ghosts, t)?;
    // local edges: 0 bottom, 1 right, 2 top, 3 left
    let fx = disc.basis.eval([0.5, 0.0])[1];
    let fy = disc.basis.eval([0.0, 0.5])[2];
    let c1 = component_coeffs(field.cell(c), nb, 1);
    let c2 = component_coeffs(field.cell(c), nb, 2);
    let sx = c1.map(|v| v * fx);
    let sy = c2.map(|v| v * fy);
    let diffs = vec![
        vec![sub(nbrs[1], mean), sub(mean, nbrs[3])],
        vec![sub(nbrs[2], mean), sub(mean, nbrs[0])],
    ];
    let dx = cell.edges[0].length;
    let dy = cell.edges[1].length;
    let (lim, changed, fallback) = limit_directions(
        &mean,
        &[sx, sy],
        &diffs,
        &[[1.0, 0.0], [0.0, 1.0]],
        &[dx, dy],
        cfg,
    );
    if changed {
        write_linear(coeffs, nb, &[lim[0].map(|v| v / fx), lim[1].map(|v| v / fy)]);
    }
    Ok((changed, fallback))
}

fn limit_tri_cell(
    disc: &Discretization,
    field: &DGField,
    c: usize,
    cfg: &LimiterConfig,
    ghosts: &GhostPolicy,
    t: f64,
    coeffs: &mut [f64],
) -> Result<(bool, bool)> {
    let nb = field.n_basis;
    let cell = &disc.mesh.cells[c];
    let map = &disc.maps[c];
    let mean = field.mean(c);
    let nbrs = neighbor_means(disc, field, c, ghosts, t)?;

    // physical gradients of the two linear modes (constant on the cell)
    let g_ref = disc.basis.grad([1.0 / 3.0, 1.0 / 3.0]);
    let g1 = map.physical_gradient(g_ref[1]);
    let g2 = map.physical_gradient(g_ref[2]);
    let c1 = component_coeffs(field.cell(c), nb, 1);
    let c2 = component_coeffs(field.cell(c), nb, 2);

    let mut dirs = Vec::with_capacity(3);
    let mut slopes = Vec::with_capacity(3);
    let mut diffs = Vec::with_capacity(3);
    let mut normals = Vec::with_capacity(3);
    for (e, nbr) in cell.edges.iter().zip(&nbrs) {
        let target = match e.neighbor {
            EdgeSide::Cell(n) => disc.mesh.cells[n].centroid,
            EdgeSide::Boundary(_) => {
                let m = e.midpoint();
                [2.0 * m[0] - cell.centroid[0], 2.0 * m[1] - cell.centroid[1]]
            }
        };
        let d = [target[0] - cell.centroid[0], target[1] - cell.centroid[1]];
        let len = d[0].hypot(d[1]);
        let a1 = g1[0] * d[0] + g1[1] * d[1];
        let a2 = g2[0] * d[0] + g2[1] * d[1];
        slopes.push([0, 1, 2].map(|k| c1[k] * a1 + c2[k] * a2));
        diffs.push(vec![sub(*nbr, mean)]);
        normals.push([d[0] / len, d[1] / len]);
        dirs.push(d);
    }
    let dx = cell.longest_edge();
    let (lim, changed, fallback) = limit_directions(&mean, &slopes, &diffs, &normals, &[dx; 3], cfg);
    if !changed {
        return Ok((false, fallback));
    }
    // least-squares gradient from the limited directional increments
    let mut ata = Matrix2::zeros();
    for d in &dirs {
        let v = Vector2::new(d[0], d[1]);
        ata += v * v.transpose();
    }
    let ata_inv = ata
        .try_inverse()
        .ok_or_else(|| Error::Config(format!("cell {c}: degenerate neighbor directions")))?;
    // coefficients of the linear modes reproducing a physical gradient
    let modes = Matrix2::new(g1[0], g2[0], g1[1], g2[1]);
    let modes_inv = modes
        .try_inverse()
        .ok_or_else(|| Error::Config(format!("cell {c}: singular linear modes")))?;
    let mut lin = [[0.0; 3]; 2];
    for comp in 0..3 {
        let mut rhs = Vector2::zeros();
        for (d, l) in dirs.iter().zip(&lim) {
            rhs += Vector2::new(d[0], d[1]) * l[comp];
        }
        let grad = ata_inv * rhs;
        let cc = modes_inv * grad;
        lin[0][comp] = cc[0];
        lin[1][comp] = cc[1];
    }
    write_linear(coeffs, nb, &lin);
    Ok((true, fallback))
}

/// Point on the segment from `point` (θ = 0) to `mean` (θ = 1).
pub fn blend(mean: &MomentVector, point: &MomentVector, theta: f64) -> MomentVector {
    *mean + (*point - *mean) * (1.0 - theta)
}

/// Smallest `θ ∈ [0, 1]` with `blend(mean, point, θ)` realizable.
///
/// The starting value is the largest root in `[0, 1]` of
/// `r(θ) = (B⁰)² − |B¹|² = aθ² + bθ + c` for `B = θ·mean + (1 − θ)·point`;
/// it is then refined with a bracketed Newton iteration on `B⁰ − |B¹|` and
/// nudged until the exact predicate holds.
pub fn realizability_theta(mean: &MomentVector, point: &MomentVector) -> Result<f64> {
    if !mean.is_strictly_realizable() {
        return Err(Error::NotRealizable {
            psi0: mean.psi0,
            psi1x: mean.psi1x,
            psi1y: mean.psi1y,
        });
    }
    if is_realizable(point) {
        return Ok(0.0);
    }
    let d = *mean - *point;
    let a = d.psi0 * d.psi0 - d.psi1x * d.psi1x - d.psi1y * d.psi1y;
    let b = 2.0 * (point.psi0 * d.psi0 - point.psi1x * d.psi1x - point.psi1y * d.psi1y);
    let c = point.psi0 * point.psi0 - point.psi1x * point.psi1x - point.psi1y * point.psi1y;

    let ok = |th: f64| is_realizable(&blend(mean, point, th));
    let start = quadratic_roots(a, b, c)
        .into_iter()
        .filter(|r| r.is_finite() && (-1e-9..=1.0 + 1e-9).contains(r))
        .filter(|&r| blend(mean, point, r.clamp(0.0, 1.0)).psi0 >= -1e-12 * mean.psi0)
        .fold(f64::NAN, f64::max);
    let start = if start.is_nan() { 0.5 } else { start.clamp(0.0, 1.0) };

    // bracket: lo fails the predicate, hi passes
    let (mut lo, mut hi) = (0.0, 1.0);
    if ok(start) {
        hi = start;
    } else {
        lo = start;
    }
    let h = |th: f64| {
        let v = blend(mean, point, th);
        v.psi0 - v.flux_norm()
    };
    let dh = |th: f64| {
        let v = blend(mean, point, th);
        let n = v.flux_norm();
        let proj = if n > 0.0 { (v.psi1x * d.psi1x + v.psi1y * d.psi1y) / n } else { 0.0 };
        d.psi0 - proj
    };
    let mut th = start;
    for _ in 0..200 {
        if hi - lo <= 2.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        let slope = dh(th);
        let mut next = if slope > 0.0 { th - h(th) / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == th {
            next = 0.5 * (lo + hi);
        }
        if next <= lo || next >= hi {
            break;
        }
        if ok(next) {
            hi = next;
        } else {
            lo = next;
        }
        th = next;
    }
    let mut th = hi;
    while !ok(th) && th < 1.0 {
        th = th.next_up().min(1.0);
    }
    Ok(th)
}

/// Real roots of `ax² + bx + c`, computed without cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        // tangent case where rounding pushed the discriminant below zero
        if disc > -1e-12 * b * b {
            return vec![-b / (2.0 * a)];
        }
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// θ values of one realizability limiting pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThetaReport {
    pub theta: Vec<f64>,
    pub theta_max: f64,
    /// Cells with θ > 0.
    pub activations: usize,
}

/// Scales every cell's higher modes toward its mean so that all
/// realizability nodes enter the cone. Means are left untouched.
pub fn apply_realizability_limiter(disc: &Discretization, field: &mut DGField) -> Result<ThetaReport> {
    let bad: Vec<usize> = (0..field.n_cells)
        .filter(|&c| !field.mean(c).is_strictly_realizable())
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonRealizableMeans { cells: bad });
    }
    let nb = field.n_basis;
    let stride = field.stride();
    let results: Vec<Result<f64>> = field
        .data
        .par_chunks_mut(stride)
        .map(|coeffs| limit_cell_realizability(disc, coeffs, nb))
        .collect();
    let theta = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let theta_max = theta.iter().copied().fold(0.0, f64::max);
    let activations = theta.iter().filter(|&&t| t > 0.0).count();
    Ok(ThetaReport {
        theta,
        theta_max,
        activations,
    })
}

fn limit_cell_realizability(disc: &Discretization, coeffs: &mut [f64], nb: usize) -> Result<f64> {
    let mean = MomentVector::new(coeffs[0], coeffs[nb], coeffs[2 * nb]);
    let values: Vec<MomentVector> = disc.node_phi.iter().map(|phi| eval_cell(coeffs, phi)).collect();
    let mut theta: f64 = 0.0;
    for v in &values {
        theta = theta.max(realizability_theta(&mean, v)?);
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let original = coeffs.to_vec();
    loop {
        for comp in 0..3 {
            for i in 1..nb {
                coeffs[comp * nb + i] = (1.0 - theta) * original[comp * nb + i];
            }
        }
        let all_ok = disc.node_phi.iter().all(|phi| is_realizable(&eval_cell(coeffs, phi)));
        if all_ok || theta >= 1.0 {
            return Ok(theta);
        }
        theta = (theta + THETA_RETIGHTEN).min(1.0);
    }
}

/// Diagnostics of one full limiter pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LimiterReport {
    pub slope: SlopeReport,
    pub theta: ThetaReport,
}

/// Slope limiter followed by the realizability limiter, per `cfg`.
pub fn apply_limiters(
    disc: &Discretization,
    field: &DGField,
    cfg: &LimiterConfig,
    ghosts: &GhostPolicy,
    t: f64,
) -> Result<(DGField, LimiterReport)> {
    let (mut out, slope) = slope_limit(disc, field, cfg, ghosts, t)?;
    let theta = if cfg.realizability {
        apply_realizability_limiter(disc, &mut out)?
    } else {
        ThetaReport {
            theta: vec![0.0; disc.n_cells()],
            ..Default::default()
        }
    };
    Ok((out, LimiterReport { slope, theta }))
}
