//! Orthonormal polynomial bases of total degree `k` on the reference shapes,
//! and the affine maps from reference to physical cells.
//!
//! The basis is the monomial basis `1, ξ, η, ξ², ξη, η², …` orthonormalized
//! against the cell-averaged `L²` inner product, so that `φ₀ = 1`, the first
//! coefficient is the cell mean, and the mass matrix of cell `K` is `|K|·I`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Cell, CellKind};
use crate::quadrature::volume_rule;

/// Number of basis functions of total degree `k`.
pub fn basis_size(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

#[derive(Clone, Debug)]
pub struct ReferenceBasis {
    pub kind: CellKind,
    pub k: usize,
    exponents: Vec<(i32, i32)>,
    /// Row `i` holds the monomial coefficients of `φᵢ`.
    coeffs: DMatrix<f64>,
    /// Center subtracted from the reference coordinates before raising to powers.
    shift: [f64; 2],
}

impl ReferenceBasis {
    pub fn new(kind: CellKind, k: usize) -> Result<Self> {
        if k > 2 {
            return Err(Error::Quadrature(format!("polynomial degree {k} not supported (0..=2)")));
        }
        let exponents: Vec<(i32, i32)> = (0..=k as i32)
            .flat_map(|d| (0..=d).map(move |b| (d - b, b)))
            .collect();
        let shift = match kind {
            CellKind::Triangle => [1.0 / 3.0, 1.0 / 3.0],
            CellKind::Rectangle => [0.0, 0.0],
        };
        let n = exponents.len();
        // exact for the degree-2k Gram entries
        let rule = volume_rule(kind, k + 2);
        let mut gram = DMatrix::zeros(n, n);
        for p in &rule {
            let m = monomials(&exponents, shift, p.xi);
            for i in 0..n {
                for j in 0..n {
                    gram[(i, j)] += p.weight * m[i] * m[j];
                }
            }
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Quadrature("basis Gram matrix is not positive definite".into()))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Quadrature("basis Gram factor is singular".into()))?;
        let mut l_inv = l_inv;
        // the weights sum to one up to rounding; keep φ₀ exactly 1
        l_inv[(0, 0)] = 1.0;
        Ok(Self {
            kind,
            k,
            exponents,
            coeffs: l_inv,
            shift,
        })
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Basis values at a reference point.
    pub fn eval(&self, xi: [f64; 2]) -> Vec<f64> {
        let m = monomials(&self.exponents, self.shift, xi);
        (0..self.len())
            .map(|i| (0..=i).map(|j| self.coeffs[(i, j)] * m[j]).sum())
            .collect()
    }

    /// Reference gradients `∇_ξ φᵢ`.
    pub fn grad(&self, xi: [f64; 2]) -> Vec<[f64; 2]> {
        let x = xi[0] - self.shift[0];
        let y = xi[1] - self.shift[1];
        let dm: Vec<[f64; 2]> = self
            .exponents
            .iter()
            .map(|&(a, b)| {
                let dx = if a > 0 { a as f64 * x.powi(a - 1) * y.powi(b) } else { 0.0 };
                let dy = if b > 0 { b as f64 * x.powi(a) * y.powi(b - 1) } else { 0.0 };
                [dx, dy]
            })
            .collect();
        (0..self.len())
            .map(|i| {
                let mut g = [0.0, 0.0];
                for (j, d) in dm.iter().enumerate().take(i + 1) {
                    g[0] += self.coeffs[(i, j)] * d[0];
                    g[1] += self.coeffs[(i, j)] * d[1];
                }
                g
            })
            .collect()
    }

    /// Number of basis functions of degree at most one.
    pub fn linear_len(&self) -> usize {
        basis_size(self.k.min(1))
    }
}

fn monomials(exponents: &[(i32, i32)], shift: [f64; 2], xi: [f64; 2]) -> Vec<f64> {
    let x = xi[0] - shift[0];
    let y = xi[1] - shift[1];
    exponents.iter().map(|&(a, b)| x.powi(a) * y.powi(b)).collect()
}

/// Affine map `x = origin + J ξ` from the reference shape to a cell.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    pub origin: [f64; 2],
    /// Columns are the images of the reference axes.
    pub jac: [[f64; 2]; 2],
    /// `J⁻ᵀ`, mapping reference gradients to physical ones.
    pub inv_jac_t: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn for_cell(cell: &Cell, nodes: &[[f64; 2]]) -> Self {
        let v: Vec<[f64; 2]> = cell.vertices.iter().map(|&i| nodes[i]).collect();
        let (origin, jac) = match cell.kind {
            CellKind::Triangle => (
                v[0],
                [[v[1][0] - v[0][0], v[2][0] - v[0][0]], [v[1][1] - v[0][1], v[2][1] - v[0][1]]],
            ),
            CellKind::Rectangle => {
                let dx = v[1][0] - v[0][0];
                let dy = v[3][1] - v[0][1];
                ([0.5 * (v[0][0] + v[2][0]), 0.5 * (v[0][1] + v[2][1])], [[dx, 0.0], [0.0, dy]])
            }
        };
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_jac_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Self { origin, jac, inv_jac_t }
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // J⁻¹ = (J⁻ᵀ)ᵀ
        [
            self.inv_jac_t[0][0] * d[0] + self.inv_jac_t[1][0] * d[1],
            self.inv_jac_t[0][1] * d[0] + self.inv_jac_t[1][1] * d[1],
        ]
    }

    pub fn physical_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jac_t[0][0] * g[0] + self.inv_jac_t[0][1] * g[1],
            self.inv_jac_t[1][0] * g[0] + self.inv_jac_t[1][1] * g[1],
        ]
    }
}
