//! Time-step selection and the Shu-Osher SSP-RK3 loop with the limiter
//! pipeline applied after every stage.

use crate::closure::realizability_fix;
use crate::dg::{evaluate_operator, Coefficients, DGField, Discretization, GhostPolicy, OperatorOptions};
use crate::error::{Error, Result};
use crate::limiters::{apply_limiters, LimiterConfig, LimiterReport};
use crate::mesh::CellKind;
use crate::quadrature::first_lobatto_weight;

/// Largest stable step for realizability of the cell means, times `safety`.
///
/// Rectangles: `ŵ₁(1 − Δt σ) ≥ Δt/Δx + Δt/Δy`.
/// Triangles: `(2/3) ŵ₁ (1 − Δt σ) ≥ Δt l_e / (2|K|)` for every edge.
/// `σ = σ_a + σ_s` is taken per cell and `ŵ₁` is the first weight of the
/// Gauss-Lobatto rule behind the cell-mean decomposition.
pub fn compute_dt(disc: &Discretization, coeffs: &Coefficients, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::Config(format!("CFL safety factor {safety} outside (0, 1]")));
    }
    let w1 = first_lobatto_weight(disc.k)?;
    let mut dt = f64::INFINITY;
    for (c, cell) in disc.mesh.cells.iter().enumerate() {
        let sigma = coeffs.sigma_a[c] + coeffs.sigma_s[c];
        let local = match cell.kind {
            CellKind::Rectangle => {
                let dx = cell.edges[0].length;
                let dy = cell.edges[1].length;
                w1 / (1.0 / dx + 1.0 / dy + w1 * sigma)
            }
            CellKind::Triangle => {
                let a = 2.0 / 3.0 * w1;
                cell.edges
                    .iter()
                    .map(|e| a / (e.length / (2.0 * cell.area) + a * sigma))
                    .fold(f64::INFINITY, f64::min)
            }
        };
        dt = dt.min(local);
    }
    let dt = safety * dt;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::TimeStep(dt));
    }
    Ok(dt)
}

/// Everything a step needs besides the state.
#[derive(Clone, Debug)]
pub struct StepContext {
    pub ghosts: GhostPolicy,
    pub coeffs: Coefficients,
    pub limiter: LimiterConfig,
    pub operator: OperatorOptions,
}

/// Passed to stage observers after limiting.
pub struct StageInfo<'a> {
    /// 1, 2 or 3.
    pub stage: usize,
    /// Time level the stage approximates.
    pub t: f64,
    pub field: &'a DGField,
    pub report: &'a LimiterReport,
}

/// Summary of one step.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    /// `L²` norm of the first-stage rate.
    pub rate_norm: f64,
    /// Largest θ over the three stages.
    pub theta_max: f64,
    pub limited_cells: usize,
    pub fallback_cells: usize,
}

/// `L²` norm of a field over the mesh (the basis is orthonormal).
pub fn l2_norm(disc: &Discretization, field: &DGField) -> f64 {
    (0..disc.n_cells())
        .map(|c| disc.mesh.cells[c].area * field.cell(c).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn check_finite(field: &DGField, stage: usize, t: f64) -> Result<()> {
    let stride = field.stride();
    if let Some(pos) = field.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::BlowUp {
            cell: pos / stride,
            context: format!("RK stage {stage} at t = {t}"),
        });
    }
    Ok(())
}

/// One SSP-RK3 step:
///
/// ```text
/// u⁽¹⁾ = L(u + Δt 𝓛(u))
/// u⁽²⁾ = L(¾u + ¼(u⁽¹⁾ + Δt 𝓛(u⁽¹⁾)))
/// uⁿ⁺¹ = L(⅓u + ⅔(u⁽²⁾ + Δt 𝓛(u⁽²⁾)))
/// ```
///
/// with `L` the slope limiter followed by the realizability limiter.
pub fn ssp_rk3_step(
    disc: &Discretization,
    state: &DGField,
    t: f64,
    dt: f64,
    ctx: &StepContext,
    observer: &mut dyn FnMut(&StageInfo),
) -> Result<(DGField, StepReport)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::TimeStep(dt));
    }
    let mut report = StepReport::default();
    // (weight on uⁿ, weight on the Euler update, time of the rate, time of the result)
    let stages = [(0.0, 1.0, t, t + dt), (0.75, 0.25, t + dt, t + 0.5 * dt), (1.0 / 3.0, 2.0 / 3.0, t + 0.5 * dt, t + dt)];
    let mut current = state.clone();
    for (s, &(a, b, t_rate, t_out)) in stages.iter().enumerate() {
        let rate = evaluate_operator(disc, &current, t_rate, &ctx.ghosts, &ctx.coeffs, &ctx.operator)?;
        if s == 0 {
            report.rate_norm = l2_norm(disc, &rate);
        }
        let mut next = current;
        next.combine(1.0, dt, &rate);
        if a != 0.0 {
            next.combine(b, a, state);
        }
        check_finite(&next, s + 1, t_out)?;
        let (limited, lim) = apply_limiters(disc, &next, &ctx.limiter, &ctx.ghosts, t_out)?;
        report.theta_max = report.theta_max.max(lim.theta.theta_max);
        report.limited_cells += lim.slope.limited_count();
        report.fallback_cells += lim.slope.fallback_cells.len();
        observer(&StageInfo {
            stage: s + 1,
            t: t_out,
            field: &limited,
            report: &lim,
        });
        current = limited;
    }
    Ok((current, report))
}

/// Steady-state stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SteadyState {
    /// Stop once `‖uⁿ⁺¹ − uⁿ‖/Δt` falls below `tolerance` times its value
    /// over the first step. Measured on the limited states, so a limiter
    /// that keeps clipping the same profile still counts as converged.
    pub tolerance: f64,
    pub t_max: f64,
}

impl Default for SteadyState {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            t_max: 30.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub t_final: f64,
    pub cfl_safety: f64,
    /// Number of equidistant sample times in `(0, T]`.
    pub samples: usize,
    pub steady: Option<SteadyState>,
    pub max_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_final: 0.0,
            cfl_safety: 0.9,
            samples: 20,
            steady: None,
            max_steps: usize::MAX,
        }
    }
}

/// Per-sample callback arguments.
pub struct Sample<'a> {
    pub index: usize,
    pub t: f64,
    pub field: &'a DGField,
    /// Largest θ since the previous sample.
    pub theta_max: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub field: DGField,
    pub t: f64,
    pub steps: usize,
    pub dt: f64,
    /// Set when a steady-state run met its tolerance.
    pub converged: bool,
    /// Initial cell means that had to be floored into the cone.
    pub fixed_initial_means: usize,
    /// `‖uⁿ⁺¹ − uⁿ‖/Δt` over the last step.
    pub final_rate_norm: f64,
}

/// Integrates from `t = 0` to the final (or steady-state) time.
///
/// The limiter pipeline is applied to `initial` before the first step.
/// Cell means that are not strictly realizable at that point (for example
/// identically zero data) are first floored with the fix used for flux
/// evaluation when the realizability limiter is enabled.
pub fn run(
    disc: &Discretization,
    initial: &DGField,
    ctx: &StepContext,
    cfg: &RunConfig,
    on_sample: &mut dyn FnMut(&Sample) -> Result<()>,
    on_stage: &mut dyn FnMut(&StageInfo),
) -> Result<RunResult> {
    ctx.limiter.validate()?;
    let t_end = match cfg.steady {
        Some(s) => s.t_max,
        None => cfg.t_final,
    };
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Config(format!("final time {t_end} must be finite and non-negative")));
    }
    let mut field = initial.clone();
    let mut fixed = 0;
    if ctx.limiter.realizability {
        for c in 0..field.n_cells {
            let m = field.mean(c);
            if !m.is_strictly_realizable() {
                let f = realizability_fix(&m, ctx.limiter.eps_fix);
                *field.coeff_mut(c, 0, 0) = f.psi0;
                *field.coeff_mut(c, 1, 0) = f.psi1x;
                *field.coeff_mut(c, 2, 0) = f.psi1y;
                fixed += 1;
            }
        }
    }
    let dt = compute_dt(disc, &ctx.coeffs, cfg.cfl_safety)?;
    if t_end == 0.0 {
        return Ok(RunResult {
            field: initial.clone(),
            t: 0.0,
            steps: 0,
            dt,
            converged: false,
            fixed_initial_means: 0,
            final_rate_norm: 0.0,
        });
    }
    let (limited, lim) = apply_limiters(disc, &field, &ctx.limiter, &ctx.ghosts, 0.0)?;
    field = limited;
    let mut theta_since = lim.theta.theta_max;

    let n_samples = cfg.samples.max(1);
    let sample_time = |i: usize| t_end * i as f64 / n_samples as f64;
    let mut next_sample = 1;
    let mut t = 0.0;
    let mut steps = 0;
    let mut initial_rate = None;
    let mut last_rate = 0.0;
    let mut converged = false;

    while next_sample <= n_samples {
        if steps >= cfg.max_steps {
            break;
        }
        let target = sample_time(next_sample);
        let mut h = dt;
        let mut hits = false;
        if t + h >= target - 1e-12 * t_end {
            h = target - t;
            hits = true;
        }
        if h <= 0.0 {
            // rounding left us on the sample time already
            hits = true;
        } else {
            let (next, rep) = ssp_rk3_step(disc, &field, t, h, ctx, on_stage)?;
            let mut change = next.clone();
            change.combine(1.0 / h, -1.0 / h, &field);
            let change = l2_norm(disc, &change);
            field = next;
            t = if hits { target } else { t + h };
            steps += 1;
            theta_since = theta_since.max(rep.theta_max);
            last_rate = change;
            let r0 = *initial_rate.get_or_insert(change);
            if let Some(s) = cfg.steady {
                if change <= s.tolerance * r0 {
                    converged = true;
                }
            }
        }
        if hits || converged {
            on_sample(&Sample {
                index: next_sample,
                t,
                field: &field,
                theta_max: theta_since,
            })?;
            theta_since = 0.0;
            if converged {
                break;
            }
            if hits {
                next_sample += 1;
            }
        }
    }
    Ok(RunResult {
        field,
        t,
        steps,
        dt,
        converged,
        fixed_initial_means: fixed,
        final_rate_norm: last_rate,
    })
}
