//! Algebra of the M1 model: Eddington closure, fluxes, directional Jacobians
//! and their eigenstructure, and the realizability predicates.
//!
//! The closure is evaluated through `q = f²` so that every coefficient stays
//! smooth at the isotropic point `f = 0`:
//!
//! ```text
//! ψ² = ψ⁰ A(q) id + G(q) ψ¹ψ¹ᵀ / ψ⁰,   A = (1 − χ)/2,   G = (3χ − 1)/(2f²)
//! ```
//!
//! `G` has the closed form `(6 + 3/(2 + s)) / (5 + 2s)` with `s = √(4 − 3q)`,
//! which removes the `nnᵀ/|n|²` singularity analytically.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this normalized flux the isotropic limit of the closure is used.
const ISOTROPIC_CUTOFF: f64 = 1e-14;

/// Condition estimates above this are reported as defective eigenvector bases.
const MAX_CONDITION: f64 = 1e15;

/// Conserved state `(ψ⁰, ψ¹ₓ, ψ¹ᵧ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub psi0: f64,
    pub psi1x: f64,
    pub psi1y: f64,
}

impl MomentVector {
    pub const ZERO: MomentVector = MomentVector::new(0.0, 0.0, 0.0);

    pub const fn new(psi0: f64, psi1x: f64, psi1y: f64) -> Self {
        Self { psi0, psi1x, psi1y }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.psi0, self.psi1x, self.psi1y]
    }

    /// `|ψ¹|`.
    pub fn flux_norm(&self) -> f64 {
        self.psi1x.hypot(self.psi1y)
    }

    /// Normalized first moment `f = |ψ¹|/ψ⁰` (meaningless unless `ψ⁰ > 0`).
    pub fn normalized_flux(&self) -> f64 {
        self.flux_norm() / self.psi0
    }

    pub fn is_realizable(&self) -> bool {
        is_realizable(self)
    }

    pub fn is_strictly_realizable(&self) -> bool {
        self.psi0 > 0.0 && self.flux_norm() < self.psi0
    }

    pub fn is_finite(&self) -> bool {
        self.psi0.is_finite() && self.psi1x.is_finite() && self.psi1y.is_finite()
    }

    /// Rotates the first moment by `phi` radians, leaving `ψ⁰` alone.
    pub fn rotated(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(
            self.psi0,
            c * self.psi1x - s * self.psi1y,
            s * self.psi1x + c * self.psi1y,
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.psi0 - other.psi0)
            .abs()
            .max((self.psi1x - other.psi1x).abs())
            .max((self.psi1y - other.psi1y).abs())
    }
}

impl Add for MomentVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.psi0 + o.psi0, self.psi1x + o.psi1x, self.psi1y + o.psi1y)
    }
}

impl AddAssign for MomentVector {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for MomentVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.psi0 - o.psi0, self.psi1x - o.psi1x, self.psi1y - o.psi1y)
    }
}

impl Mul<f64> for MomentVector {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.psi0 * s, self.psi1x * s, self.psi1y * s)
    }
}

impl Mul<MomentVector> for f64 {
    type Output = MomentVector;
    fn mul(self, u: MomentVector) -> MomentVector {
        u * self
    }
}

impl Neg for MomentVector {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// Second moment `ψ²`.
///
/// The 2D model transports only the in-plane block `xx, xy, yy`. The
/// out-of-plane diagonal entry `zz` of the full second moment over the sphere
/// is kept as well, so that [`PressureTensor::trace`] satisfies `tr ψ² = ψ⁰`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureTensor {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
    pub zz: f64,
}

impl PressureTensor {
    /// Trace of the full second moment (`xx + yy + zz`).
    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Trace of the in-plane 2×2 block, `(1 + χ) ψ⁰ / 2`.
    pub fn planar_trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// `ψ² ν` for an in-plane vector `ν`.
    pub fn apply(&self, nu: [f64; 2]) -> [f64; 2] {
        [self.xx * nu[0] + self.xy * nu[1], self.xy * nu[0] + self.yy * nu[1]]
    }
}

/// Eigenstructure of a directional Jacobian: `J = R Λ R⁻¹`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Sorted ascending.
    pub eigenvalues: [f64; 3],
    /// Columns are right eigenvectors.
    pub right: Matrix3<f64>,
    /// Inverse of `right`.
    pub left: Matrix3<f64>,
    /// `‖R‖₁ ‖R⁻¹‖₁`.
    pub condition_estimate: f64,
}

impl EigenDecomposition {
    pub fn to_characteristic(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.left * Vector3::from(v);
        [r[0], r[1], r[2]]
    }

    pub fn from_characteristic(&self, w: [f64; 3]) -> [f64; 3] {
        let r = self.right * Vector3::from(w);
        [r[0], r[1], r[2]]
    }

    pub fn spread(&self) -> f64 {
        self.eigenvalues[2] - self.eigenvalues[0]
    }
}

/// Eddington factor `χ(f) = (3 + 4f²) / (5 + 2√(4 − 3f²))`.
pub fn eddington_chi(f: f64) -> Result<f64> {
    check_unit_interval(f)?;
    Ok(chi_of_q(f * f))
}

/// `dχ/df`, which vanishes at `f = 0`.
pub fn eddington_chi_derivative(f: f64) -> Result<f64> {
    check_unit_interval(f)?;
    Ok(2.0 * f * chi_dq(f * f))
}

fn check_unit_interval(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::Domain(format!("normalized flux f = {f} outside [0, 1]")))
    }
}

fn chi_of_q(q: f64) -> f64 {
    let s = (4.0 - 3.0 * q).sqrt();
    (3.0 + 4.0 * q) / (5.0 + 2.0 * s)
}

fn chi_dq(q: f64) -> f64 {
    let s = (4.0 - 3.0 * q).sqrt();
    let den = 5.0 + 2.0 * s;
    (4.0 * den + 3.0 * (3.0 + 4.0 * q) / s) / (den * den)
}

/// `G(q) = (3χ − 1)/(2q)`, smooth on `[0, 1]`.
fn anisotropy_of_q(q: f64) -> f64 {
    let s = (4.0 - 3.0 * q).sqrt();
    (6.0 + 3.0 / (2.0 + s)) / (5.0 + 2.0 * s)
}

fn anisotropy_dq(q: f64) -> f64 {
    let s = (4.0 - 3.0 * q).sqrt();
    let den = 5.0 + 2.0 * s;
    let num = 6.0 + 3.0 / (2.0 + s);
    let num_dq = 4.5 / (s * (2.0 + s) * (2.0 + s));
    (num_dq * den + 3.0 * num / s) / (den * den)
}

fn require_realizable(u: &MomentVector) -> Result<()> {
    if is_realizable(u) {
        Ok(())
    } else {
        Err(Error::NotRealizable {
            psi0: u.psi0,
            psi1x: u.psi1x,
            psi1y: u.psi1y,
        })
    }
}

/// Closed-form second moment `ψ² = D(ψ¹/ψ⁰) ψ⁰`.
pub fn closure_pressure(u: &MomentVector) -> Result<PressureTensor> {
    require_realizable(u)?;
    let f = u.normalized_flux();
    if f < ISOTROPIC_CUTOFF {
        let third = u.psi0 / 3.0;
        return Ok(PressureTensor {
            xx: third,
            xy: 0.0,
            yy: third,
            zz: third,
        });
    }
    let q = f * f;
    let chi = chi_of_q(q);
    let iso = 0.5 * (1.0 - chi) * u.psi0;
    let g = anisotropy_of_q(q) / u.psi0;
    Ok(PressureTensor {
        xx: iso + g * u.psi1x * u.psi1x,
        xy: g * u.psi1x * u.psi1y,
        yy: iso + g * u.psi1y * u.psi1y,
        zz: iso,
    })
}

/// Physical fluxes `F = (ψ¹ₓ, ψ²ₓₓ, ψ²ₓᵧ)` and `G = (ψ¹ᵧ, ψ²ᵧₓ, ψ²ᵧᵧ)`.
pub fn flux(u: &MomentVector) -> Result<([f64; 3], [f64; 3])> {
    let p = closure_pressure(u)?;
    Ok(([u.psi1x, p.xx, p.xy], [u.psi1y, p.xy, p.yy]))
}

/// `F nₓ + G nᵧ`.
pub fn normal_flux(u: &MomentVector, n: [f64; 2]) -> Result<MomentVector> {
    let p = closure_pressure(u)?;
    let pn = p.apply(n);
    Ok(MomentVector::new(
        u.psi1x * n[0] + u.psi1y * n[1],
        pn[0],
        pn[1],
    ))
}

fn check_unit_normal(n: [f64; 2]) -> Result<()> {
    let len = n[0].hypot(n[1]);
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("direction has length {len}, expected 1")));
    }
    Ok(())
}

/// Analytic Jacobian of `F nₓ + G nᵧ` with respect to `U`.
pub fn directional_jacobian(u: &MomentVector, n: [f64; 2]) -> Result<Matrix3<f64>> {
    check_unit_normal(n)?;
    require_realizable(u)?;
    if !u.is_strictly_realizable() {
        return Err(Error::Singular {
            f: u.normalized_flux(),
        });
    }
    let r = u.psi0;
    let p = [u.psi1x, u.psi1y];
    let q = {
        let f = u.normalized_flux();
        f * f
    };
    let a = 0.5 * (1.0 - chi_of_q(q));
    let a_q = -0.5 * chi_dq(q);
    let g = anisotropy_of_q(q);
    let g_q = anisotropy_dq(q);
    let w = p[0] * n[0] + p[1] * n[1];

    let mut jac = Matrix3::zeros();
    jac[(0, 1)] = n[0];
    jac[(0, 2)] = n[1];

    // d(ψ²ν)/dψ⁰ with dq/dψ⁰ = −2q/ψ⁰
    let q_r = -2.0 * q / r;
    for c in 0..2 {
        jac[(c + 1, 0)] =
            a * n[c] + r * a_q * q_r * n[c] + g_q * q_r * w * p[c] / r - g * w * p[c] / (r * r);
    }
    // d(ψ²ν)/dψ¹ⱼ with dq/dψ¹ⱼ = 2ψ¹ⱼ/ψ⁰²
    for j in 0..2 {
        let q_p = 2.0 * p[j] / (r * r);
        for c in 0..2 {
            let delta = if c == j { 1.0 } else { 0.0 };
            jac[(c + 1, j + 1)] = r * a_q * q_p * n[c]
                + g_q * q_p * w * p[c] / r
                + g * (n[j] * p[c] + w * delta) / r;
        }
    }
    Ok(jac)
}

/// Real eigendecomposition of the directional Jacobian, eigenvalues sorted
/// ascending.
pub fn eigendecomposition(u: &MomentVector, n: [f64; 2]) -> Result<EigenDecomposition> {
    let jac = directional_jacobian(u, n)?;
    decompose(&jac)
}

fn decompose(jac: &Matrix3<f64>) -> Result<EigenDecomposition> {
    let mut lambda: [f64; 3] = {
        let ev = jac.complex_eigenvalues();
        [ev[0].re, ev[1].re, ev[2].re]
    };
    lambda.sort_by(f64::total_cmp);

    let mut right = Matrix3::zeros();
    for (i, &l) in lambda.iter().enumerate() {
        let v = null_vector(&(jac - Matrix3::identity() * l));
        right.set_column(i, &v);
    }
    let left = right.try_inverse().ok_or(Error::Conditioning {
        condition_estimate: f64::INFINITY,
    })?;
    let condition_estimate = norm1(&right) * norm1(&left);
    if !condition_estimate.is_finite() || condition_estimate > MAX_CONDITION {
        return Err(Error::Conditioning { condition_estimate });
    }
    Ok(EigenDecomposition {
        eigenvalues: lambda,
        right,
        left,
        condition_estimate,
    })
}

/// Induced 1-norm (max column sum).
fn norm1(m: &Matrix3<f64>) -> f64 {
    (0..3)
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Unit vector spanning the (numerical) null space of a rank-2 matrix: the
/// largest cross product of two of its rows.
fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let rows = [
        Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]),
        Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]),
        Vector3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]),
    ];
    let candidates = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let best = candidates
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_else(Vector3::zeros);
    let norm = best.norm();
    if norm == 0.0 {
        return Vector3::zeros();
    }
    let mut v = best / norm;
    // fix the sign by the largest component for reproducibility
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v = -v;
    }
    v
}

/// Closed realizability cone: `ψ⁰ > 0` and `|ψ¹| ≤ ψ⁰`. No tolerance.
pub fn is_realizable(u: &MomentVector) -> bool {
    u.psi0 > 0.0 && u.flux_norm() <= u.psi0
}

/// `ψ⁰ − |ψ¹|`, negative outside the cone.
pub fn distance_to_boundary(u: &MomentVector) -> f64 {
    u.psi0 - u.flux_norm()
}

/// Pulls a state into the interior of the cone: floors `ψ⁰` at `eps` and then
/// rescales `ψ¹` so that `f ≤ 1 − eps`.
pub fn realizability_fix(u: &MomentVector, eps: f64) -> MomentVector {
    let mut out = *u;
    if !(out.psi0 >= eps) {
        out.psi0 = eps;
    }
    if !out.psi1x.is_finite() || !out.psi1y.is_finite() {
        out.psi1x = 0.0;
        out.psi1y = 0.0;
    }
    let f = out.normalized_flux();
    if f > 1.0 - eps {
        let scale = (1.0 - eps) / f;
        out.psi1x *= scale;
        out.psi1y *= scale;
        // rounding can leave f a hair above the target
        while out.normalized_flux() > 1.0 - eps {
            out.psi1x = f64_prev(out.psi1x);
            out.psi1y = f64_prev(out.psi1y);
        }
    }
    out
}

/// One ulp towards zero.
fn f64_prev(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x > 0.0 {
        x.next_down()
    } else {
        x.next_up()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn chi_endpoints_and_midpoint() {
        assert_eq!(eddington_chi(0.0).unwrap(), 1.0 / 3.0);
        assert_eq!(eddington_chi(1.0).unwrap(), 1.0);
        let expected = 4.0 / (5.0 + 2.0 * 3.25f64.sqrt());
        assert!(close(eddington_chi(0.5).unwrap(), expected, 1e-15));
        assert!(close(expected, 0.4648162, 1e-7));
    }

    #[test]
    fn chi_rejects_out_of_range() {
        assert!(matches!(eddington_chi(-0.1), Err(Error::Domain(_))));
        assert!(matches!(eddington_chi(1.0 + 1e-9), Err(Error::Domain(_))));
        assert!(eddington_chi(f64::NAN).is_err());
    }

    #[test]
    fn chi_derivative_matches_finite_differences() {
        for i in 0..100 {
            let f = 0.005 + 0.99 * i as f64 / 100.0;
            let h = 1e-6;
            let fd = (eddington_chi(f + h).unwrap() - eddington_chi(f - h).unwrap()) / (2.0 * h);
            assert!(close(eddington_chi_derivative(f).unwrap(), fd, 1e-6), "f = {f}");
        }
        assert_eq!(eddington_chi_derivative(0.0).unwrap(), 0.0);
    }

    #[test]
    fn anisotropy_matches_definition() {
        for &f in &[0.1, 0.3, 0.7, 0.95, 1.0] {
            let chi = eddington_chi(f).unwrap();
            let g = (3.0 * chi - 1.0) / (2.0 * f * f);
            assert!(close(anisotropy_of_q(f * f), g, 1e-13));
            let h = 1e-6;
            let q = f * f;
            if q + h < 1.0 {
                let fd = (anisotropy_of_q(q + h) - anisotropy_of_q(q - h)) / (2.0 * h);
                assert!(close(anisotropy_dq(q), fd, 1e-7));
            }
        }
        assert!(close(anisotropy_of_q(0.0), 0.75, 1e-15));
    }

    #[test]
    fn pressure_examples() {
        let iso = closure_pressure(&MomentVector::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((iso.xx, iso.xy, iso.yy), (1.0 / 3.0, 0.0, 1.0 / 3.0));

        let free = closure_pressure(&MomentVector::new(1.0, 1.0, 0.0)).unwrap();
        assert!(close(free.xx, 1.0, 1e-15) && close(free.xy, 0.0, 0.0) && close(free.yy, 0.0, 1e-15));

        let chi = eddington_chi(0.5).unwrap();
        let p = closure_pressure(&MomentVector::new(2.0, 0.0, 1.0)).unwrap();
        assert!(close(p.xx, 1.0 - chi, 1e-15));
        assert!(close(p.xx, 0.5351838, 1e-7));
        assert!(close(p.yy, 2.0 * chi, 1e-15));
        assert!(close(p.yy, 0.9296325, 1e-7));
        assert_eq!(p.xy, 0.0);
    }

    #[test]
    fn pressure_traces() {
        let u = MomentVector::new(2.0, 0.3, -0.8);
        let p = closure_pressure(&u).unwrap();
        let chi = eddington_chi(u.normalized_flux()).unwrap();
        assert!(close(p.trace(), 2.0, 1e-14));
        assert!(close(p.planar_trace(), (1.0 + chi) * 0.5 * 2.0, 1e-14));
    }

    #[test]
    fn pressure_rejects_non_realizable() {
        assert!(matches!(
            closure_pressure(&MomentVector::new(1.0, 2.0, 0.0)),
            Err(Error::NotRealizable { .. })
        ));
        assert!(closure_pressure(&MomentVector::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn flux_examples() {
        let (f, g) = flux(&MomentVector::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(f, [0.0, 1.0 / 3.0, 0.0]);
        assert_eq!(g, [0.0, 0.0, 1.0 / 3.0]);
        let (f, g) = flux(&MomentVector::new(1.0, 1.0, 0.0)).unwrap();
        assert!(close(f[0], 1.0, 0.0) && close(f[1], 1.0, 1e-15) && close(f[2], 0.0, 0.0));
        assert!(g.iter().all(|x| x.abs() < 1e-15));
        let chi = eddington_chi(0.5).unwrap();
        let (f, g) = flux(&MomentVector::new(2.0, 0.0, 1.0)).unwrap();
        assert!(close(f[1], 1.0 - chi, 1e-15) && f[0] == 0.0 && f[2] == 0.0);
        assert!(close(g[0], 1.0, 0.0) && close(g[2], 2.0 * chi, 1e-15) && g[1] == 0.0);
    }

    #[test]
    fn isotropic_jacobian() {
        let j = directional_jacobian(&MomentVector::new(1.0, 0.0, 0.0), [1.0, 0.0]).unwrap();
        let expected = Matrix3::new(0.0, 1.0, 0.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!((j - expected).abs().max() < 1e-15);
    }

    #[test]
    fn jacobian_rejects_boundary_and_bad_normal() {
        let u = MomentVector::new(1.0, 0.6, 0.8);
        assert!(matches!(directional_jacobian(&u, [1.0, 0.0]), Err(Error::Singular { .. })));
        let u = MomentVector::new(1.0, 0.1, 0.0);
        assert!(directional_jacobian(&u, [1.0, 1.0]).is_err());
    }

    #[test]
    fn isotropic_eigenvalues() {
        let s = 1.0 / 3.0f64.sqrt();
        for &phi in &[0.0, 0.3, 1.2, 2.9] {
            let n = [f64::cos(phi), f64::sin(phi)];
            let e = eigendecomposition(&MomentVector::new(1.0, 0.0, 0.0), n).unwrap();
            assert!(close(e.eigenvalues[0], -s, 1e-12));
            assert!(close(e.eigenvalues[1], 0.0, 1e-12));
            assert!(close(e.eigenvalues[2], s, 1e-12));
        }
    }

    #[test]
    fn eigenvalues_collapse_near_free_streaming() {
        let e = eigendecomposition(&MomentVector::new(1.0, 1.0 - 1e-6, 0.0), [1.0, 0.0]).unwrap();
        assert!(e.spread() < 0.05, "spread {}", e.spread());
    }

    #[test]
    fn condition_estimate_grows_towards_boundary() {
        let mut last = 0.0;
        for d in 1..=8 {
            let eps = 10f64.powi(-d);
            let e = eigendecomposition(&MomentVector::new(1.0, 1.0 - eps, 0.0), [0.6, 0.8]).unwrap();
            assert!(e.condition_estimate > last, "eps {eps}: {}", e.condition_estimate);
            last = e.condition_estimate;
        }
        // roughly 2/eps in order of magnitude
        assert!(last > 1e6 && last < 1e11, "{last}");
    }

    #[test]
    fn realizability_predicate_examples() {
        let a = MomentVector::new(1.0, 0.0, 0.0);
        assert!(is_realizable(&a));
        assert_eq!(distance_to_boundary(&a), 1.0);
        let b = MomentVector::new(1.0, 0.6, 0.8);
        assert!(is_realizable(&b));
        assert_eq!(distance_to_boundary(&b), 0.0);
        assert!(!b.is_strictly_realizable());
        let c = MomentVector::new(0.5, 0.6, 0.0);
        assert!(!is_realizable(&c));
        assert!(close(distance_to_boundary(&c), -0.1, 1e-15));
    }

    #[test]
    fn fix_examples() {
        let eps = 1e-12;
        let u = MomentVector::new(1.0, 0.5, 0.0);
        assert_eq!(realizability_fix(&u, eps), u);
        assert_eq!(
            realizability_fix(&MomentVector::new(-1.0, 0.0, 0.0), eps),
            MomentVector::new(1e-12, 0.0, 0.0)
        );
        let v = realizability_fix(&MomentVector::new(1.0, 2.0, 0.0), eps);
        assert_eq!(v.psi0, 1.0);
        assert!(close(v.psi1x, 1.0 - 1e-12, 1e-16));
        assert!(v.is_strictly_realizable());
        assert_eq!(realizability_fix(&v, eps), v);
    }

    #[test]
    fn rotation_preserves_norm() {
        let u = MomentVector::new(1.0, 0.3, 0.4);
        let r = u.rotated(0.7);
        assert!(close(r.flux_norm(), 0.5, 1e-15));
    }
}
