//! First-order Lax-Friedrichs finite volumes on a uniform rectangular grid.
//! Used to generate reference solutions.

use rayon::prelude::*;

use crate::closure::MomentVector;
use crate::dg::{ghost_state, lax_friedrichs_flux, BoundaryCondition, GhostPolicy, PointCoefficients};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Domain};

/// Fraction of the monotone time-step bound used by [`fv_dt`].
pub const FV_CFL: f64 = 0.45;

/// Cell-centred states, row-major (`j * nx + i`).
#[derive(Clone, Debug, PartialEq)]
pub struct FVGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub domain: Domain,
    pub cells: Vec<MomentVector>,
}

impl FVGrid {
    pub fn new(domain: Domain, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("FV resolution {nx}x{ny} must be positive")));
        }
        if !(domain.width() > 0.0 && domain.height() > 0.0) {
            return Err(Error::Config("FV domain must have positive extent".into()));
        }
        Ok(Self {
            nx,
            ny,
            dx: domain.width() / nx as f64,
            dy: domain.height() / ny as f64,
            domain,
            cells: vec![MomentVector::ZERO; nx * ny],
        })
    }

    /// Grid with cell averages approximated by centre values.
    pub fn from_fn(domain: Domain, nx: usize, ny: usize, f: impl Fn(f64, f64) -> MomentVector) -> Result<Self> {
        let mut g = Self::new(domain, nx, ny)?;
        for j in 0..ny {
            for i in 0..nx {
                let [x, y] = g.center(i, j);
                g.cells[j * nx + i] = f(x, y);
            }
        }
        Ok(g)
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.domain.x0 + (i as f64 + 0.5) * self.dx,
            self.domain.y0 + (j as f64 + 0.5) * self.dy,
        ]
    }

    pub fn get(&self, i: usize, j: usize) -> MomentVector {
        self.cells[j * self.nx + i]
    }

    /// Cell containing `x`, clamped to the grid.
    pub fn locate(&self, x: [f64; 2]) -> (usize, usize) {
        let i = ((x[0] - self.domain.x0) / self.dx).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((x[1] - self.domain.y0) / self.dy).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    pub fn psi0(&self) -> Vec<f64> {
        self.cells.iter().map(|u| u.psi0).collect()
    }

    /// Gradient of ψ⁰ at cell centres.
    pub fn psi0_gradients(&self) -> Result<Vec<[f64; 2]>> {
        fv_gradients(self.nx, self.ny, self.dx, self.dy, &self.psi0())
    }

    pub fn total_psi0(&self) -> f64 {
        self.cells.iter().map(|u| u.psi0).sum::<f64>() * self.dx * self.dy
    }
}

/// Spatially varying material data sampled at cell centres.
#[derive(Clone, Debug, PartialEq)]
pub struct FVSources {
    pub cells: Vec<PointCoefficients>,
}

impl FVSources {
    pub fn zero(grid: &FVGrid) -> Self {
        Self {
            cells: vec![PointCoefficients::default(); grid.cells.len()],
        }
    }

    pub fn sample(grid: &FVGrid, f: impl Fn(f64, f64) -> PointCoefficients) -> Result<Self> {
        let mut cells = Vec::with_capacity(grid.cells.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let [x, y] = grid.center(i, j);
                let p = f(x, y);
                if !(p.sigma_a >= 0.0 && p.sigma_s >= 0.0) {
                    return Err(Error::Config(format!("negative opacity at ({x}, {y})")));
                }
                cells.push(p);
            }
        }
        Ok(Self { cells })
    }

    pub fn max_total_sigma(&self) -> f64 {
        self.cells.iter().map(|p| p.sigma_a + p.sigma_s).fold(0.0, f64::max)
    }
}

/// `0.45 / (1/Δx + 1/Δy + σ_max)`.
pub fn fv_dt(grid: &FVGrid, sources: &FVSources) -> f64 {
    FV_CFL / (1.0 / grid.dx + 1.0 / grid.dy + sources.max_total_sigma())
}

fn source_term(p: &PointCoefficients, u: &MomentVector) -> MomentVector {
    let st = p.sigma_a + p.sigma_s;
    MomentVector::new(p.q0 - p.sigma_a * u.psi0, p.q1x - st * u.psi1x, p.q1y - st * u.psi1y)
}

#[allow(clippy::too_many_arguments)]
fn neighbor(
    grid: &FVGrid,
    ghosts: &GhostPolicy,
    inner: &MomentVector,
    i: isize,
    j: isize,
    face: [f64; 2],
    n: [f64; 2],
    tag: BoundaryTag,
    t: f64,
) -> Result<MomentVector> {
    if i < 0 || j < 0 || i >= grid.nx as isize || j >= grid.ny as isize {
        let bc: &BoundaryCondition = ghosts.get(tag)?;
        Ok(ghost_state(inner, bc, face, n, t))
    } else {
        Ok(grid.get(i as usize, j as usize))
    }
}

/// One forward-Euler step of the five-point Lax-Friedrichs scheme.
///
/// Monotone, hence realizability preserving, when
/// `Δt (1/Δx + 1/Δy + σ) ≤ 1`.
pub fn fv_step(grid: &FVGrid, dt: f64, sources: &FVSources, ghosts: &GhostPolicy, t: f64) -> Result<FVGrid> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::TimeStep(dt));
    }
    if sources.cells.len() != grid.cells.len() {
        return Err(Error::Config("source array does not match the FV grid".into()));
    }
    let (nx, dx, dy) = (grid.nx, grid.dx, grid.dy);
    let mut out = grid.clone();
    out.cells
        .par_chunks_mut(nx)
        .enumerate()
        .try_for_each(|(j, row)| -> Result<()> {
            for (i, slot) in row.iter_mut().enumerate() {
                let u = grid.get(i, j);
                let [xc, yc] = grid.center(i, j);
                let (ii, jj) = (i as isize, j as isize);
                let faces = [
                    ([1.0, 0.0], ii + 1, jj, [xc + 0.5 * dx, yc], BoundaryTag::Right, dy),
                    ([-1.0, 0.0], ii - 1, jj, [xc - 0.5 * dx, yc], BoundaryTag::Left, dy),
                    ([0.0, 1.0], ii, jj + 1, [xc, yc + 0.5 * dy], BoundaryTag::Top, dx),
                    ([0.0, -1.0], ii, jj - 1, [xc, yc - 0.5 * dy], BoundaryTag::Bottom, dx),
                ];
                let mut div = MomentVector::ZERO;
                for (n, ni, nj, face, tag, len) in faces {
                    let v = neighbor(grid, ghosts, &u, ni, nj, face, n, tag, t)?;
                    div += lax_friedrichs_flux(&u, &v, n, 1.0)? * len;
                }
                let new = u - div * (dt / (dx * dy)) + source_term(&sources.cells[j * nx + i], &u) * dt;
                if !new.is_finite() {
                    return Err(Error::BlowUp {
                        cell: j * nx + i,
                        context: format!("FV step at t = {t}"),
                    });
                }
                *slot = new;
            }
            Ok(())
        })?;
    Ok(out)
}

/// Runs to `t_final` with the fixed [`fv_dt`] step, clipping the last one.
/// `observer` sees every intermediate grid.
pub fn fv_run(
    mut grid: FVGrid,
    sources: &FVSources,
    ghosts: &GhostPolicy,
    t_final: f64,
    observer: &mut dyn FnMut(f64, &FVGrid),
) -> Result<FVGrid> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Config(format!("final time {t_final} must be finite and non-negative")));
    }
    let dt = fv_dt(&grid, sources);
    let mut t = 0.0;
    while t < t_final {
        let h = if t + dt >= t_final * (1.0 - 1e-14) { t_final - t } else { dt };
        if h <= 0.0 {
            break;
        }
        grid = fv_step(&grid, h, sources, ghosts, t)?;
        t = if h == t_final - t { t_final } else { t + h };
        observer(t, &grid);
    }
    Ok(grid)
}

/// Centred-difference gradient of a row-major scalar array; second-order
/// one-sided differences on the boundary rows and columns.
pub fn fv_gradients(nx: usize, ny: usize, dx: f64, dy: f64, values: &[f64]) -> Result<Vec<[f64; 2]>> {
    if nx < 3 || ny < 3 {
        return Err(Error::Config(format!("gradient needs at least 3x3 cells, got {nx}x{ny}")));
    }
    if values.len() != nx * ny {
        return Err(Error::Config("value array does not match the grid".into()));
    }
    let v = |i: usize, j: usize| values[j * nx + i];
    let diff = |at: usize, n: usize, h: f64, f: &dyn Fn(usize) -> f64| -> f64 {
        if at == 0 {
            (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
        } else if at == n - 1 {
            (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
        } else {
            (f(at + 1) - f(at - 1)) / (2.0 * h)
        }
    };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = diff(i, nx, dx, &|a| v(a, j));
            let gy = diff(j, ny, dy, &|b| v(i, b));
            out.push([gx, gy]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::flux;

    fn unit() -> Domain {
        Domain::new(0.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn constant_state_unchanged() {
        let u = MomentVector::new(2.0, 0.4, -0.3);
        let g = FVGrid::from_fn(unit(), 8, 8, |_, _| u).unwrap();
        let ghosts = GhostPolicy::uniform(BoundaryCondition::constant(u));
        let s = FVSources::zero(&g);
        let out = fv_step(&g, fv_dt(&g, &s), &s, &ghosts, 0.0).unwrap();
        for c in &out.cells {
            assert!(c.max_abs_diff(&u) < 1e-15);
        }
    }

    #[test]
    fn hand_composed_centre_update() {
        let f = |x: f64, y: f64| MomentVector::new(1.0 + x + 2.0 * y * y, 0.3 * x, 0.1 - 0.2 * y);
        let g = FVGrid::from_fn(unit(), 3, 3, f).unwrap();
        let ghosts = GhostPolicy::uniform(BoundaryCondition::Reflective);
        let s = FVSources::zero(&g);
        let dt = 0.05;
        let out = fv_step(&g, dt, &s, &ghosts, 0.0).unwrap();
        let u = g.get(1, 1);
        let nb = [(g.get(2, 1), [1.0, 0.0]), (g.get(0, 1), [-1.0, 0.0]), (g.get(1, 2), [0.0, 1.0]), (g.get(1, 0), [0.0, -1.0])];
        let h = 1.0 / 3.0;
        let mut expected = u;
        for (v, n) in nb {
            let fu = flux(&u).unwrap();
            let fv = flux(&v).unwrap();
            let fnu: Vec<f64> = (0..3).map(|r| fu.0[r] * n[0] + fu.1[r] * n[1]).collect();
            let fnv: Vec<f64> = (0..3).map(|r| fv.0[r] * n[0] + fv.1[r] * n[1]).collect();
            let d = v - u;
            let lf = MomentVector::new(
                0.5 * (fnu[0] + fnv[0] - d.psi0),
                0.5 * (fnu[1] + fnv[1] - d.psi1x),
                0.5 * (fnu[2] + fnv[2] - d.psi1y),
            );
            expected = expected - lf * (dt * h / (h * h));
        }
        assert!(out.get(1, 1).max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn conservation_with_reflection() {
        let g = FVGrid::from_fn(unit(), 10, 10, |x, y| {
            MomentVector::new(1.0 + (-(x - 0.4).powi(2) * 30.0 - (y - 0.6).powi(2) * 20.0).exp(), 0.1, -0.05)
        })
        .unwrap();
        let ghosts = GhostPolicy::uniform(BoundaryCondition::Reflective);
        let s = FVSources::zero(&g);
        let mut cur = g.clone();
        for _ in 0..10 {
            let next = fv_step(&cur, fv_dt(&cur, &s), &s, &ghosts, 0.0).unwrap();
            assert!((next.total_psi0() - cur.total_psi0()).abs() < 1e-11);
            cur = next;
        }
    }

    #[test]
    fn gradients_exact_for_linear_and_interior_quadratic() {
        let (nx, ny, dx, dy) = (5, 4, 0.2, 0.25);
        let at = |f: &dyn Fn(f64, f64) -> f64| {
            let mut v = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    v.push(f((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy));
                }
            }
            v
        };
        let g = fv_gradients(nx, ny, dx, dy, &at(&|x, y| 3.0 * x - 2.0 * y + 1.0)).unwrap();
        for d in &g {
            assert!((d[0] - 3.0).abs() < 1e-12 && (d[1] + 2.0).abs() < 1e-12);
        }
        let g = fv_gradients(nx, ny, dx, dy, &at(&|x, y| x * x + x * y - y * y)).unwrap();
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let (x, y) = ((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
                let d = g[j * nx + i];
                assert!((d[0] - (2.0 * x + y)).abs() < 1e-12);
                assert!((d[1] - (x - 2.0 * y)).abs() < 1e-12);
            }
        }
        assert!(fv_gradients(2, 5, 0.1, 0.1, &[0.0; 10]).is_err());
    }

    #[test]
    fn gradient_second_order() {
        let f = |x: f64, y: f64| (2.0 * x).sin() * (3.0 * y).cos() + x * x * y;
        let fx = |x: f64, y: f64| 2.0 * (2.0 * x).cos() * (3.0 * y).cos() + 2.0 * x * y;
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let h = 1.0 / n as f64;
            let v: Vec<f64> = (0..n * n).map(|c| f(((c % n) as f64 + 0.5) * h, ((c / n) as f64 + 0.5) * h)).collect();
            let g = fv_gradients(n, n, h, h, &v).unwrap();
            let e = (0..n * n)
                .map(|c| (g[c][0] - fx(((c % n) as f64 + 0.5) * h, ((c / n) as f64 + 0.5) * h)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn resolution_zero_rejected() {
        assert!(FVGrid::new(unit(), 0, 4).is_err());
    }
}
