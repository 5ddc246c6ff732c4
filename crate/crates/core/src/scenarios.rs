//! Benchmark problems, the limiter convergence study and the sweep over
//! the TVB constant.

use serde::{Deserialize, Serialize};

use crate::closure::MomentVector;
use crate::diagnostics::{error_norms, log_sobolev_error, observed_order, StudyRow};
use crate::dg::{project_initial, BoundaryCondition, Coefficients, DGField, Discretization, GhostPolicy, OperatorOptions, PointCoefficients};
use crate::error::{Error, Result};
use crate::fv::{FVGrid, FVSources};
use crate::limiters::{apply_realizability_limiter, LimiterConfig, SlopeMode};
use crate::mesh::{build_rect_mesh, build_rect_mesh_n, build_tri_mesh_from_rect, import_tri_mesh, BoundaryTag, Domain, Mesh, TriSplit};
use crate::stepper::{run, RunConfig, RunResult, StepContext, SteadyState};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 7] = [
    "line_source",
    "homogeneous_disk",
    "homogeneous_disk-addendum",
    "flash",
    "flash-addendum",
    "shadow",
    "two_beams",
];

/// TVB constants tried by [`select_m`].
pub const M_GRID: [f64; 10] = [0.1, 0.2, 0.5, 1.0, 2.0, 10.0, 22.0, 46.0, 100.0, 150.0];

/// Closed subset of the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Everywhere,
    Disk { center: [f64; 2], radius: f64 },
    Box { x: [f64; 2], y: [f64; 2] },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Disk { center, radius } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
            Region::Box { x: bx, y: by } => x >= bx[0] && x <= bx[1] && y >= by[0] && y <= by[1],
        }
    }
}

/// `value` on `region`, `outside` elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub value: f64,
    #[serde(default = "everywhere")]
    pub region: Region,
    #[serde(default)]
    pub outside: f64,
}

fn everywhere() -> Region {
    Region::Everywhere
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            region: Region::Everywhere,
            outside: value,
        }
    }

    pub fn on(region: Region, value: f64) -> Self {
        Self { value, region, outside: 0.0 }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        if self.region.contains(x, y) {
            self.value
        } else {
            self.outside
        }
    }
}

impl Default for ScalarField {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

/// Moment triples are written as `[ψ⁰, ψ¹ₓ, ψ¹ᵧ]` in configs.
pub type State = [f64; 3];

fn mv(s: &State) -> MomentVector {
    MomentVector::from_array(*s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { state: State },
    Piecewise { region: Region, inside: State, outside: State },
    /// `ψ⁰ = max(exp(−10 (x² + y²)/σ²), floor)`, `ψ¹ = 0`.
    SmoothedDirac { sigma: f64, floor: f64 },
}

impl InitialCondition {
    pub fn at(&self, x: f64, y: f64) -> MomentVector {
        match self {
            InitialCondition::Constant { state } => mv(state),
            InitialCondition::Piecewise { region, inside, outside } => {
                if region.contains(x, y) {
                    mv(inside)
                } else {
                    mv(outside)
                }
            }
            InitialCondition::SmoothedDirac { sigma, floor } => {
                MomentVector::new((-10.0 * (x * x + y * y) / (sigma * sigma)).exp().max(*floor), 0.0, 0.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let states: Vec<&State> = match self {
            InitialCondition::Constant { state } => vec![state],
            InitialCondition::Piecewise { inside, outside, .. } => vec![inside, outside],
            InitialCondition::SmoothedDirac { sigma, floor } => {
                if !(*sigma > 0.0 && *floor >= 0.0) {
                    return Err(Error::Config(format!("smoothed Dirac needs sigma > 0 and floor >= 0, got {sigma}, {floor}")));
                }
                Vec::new()
            }
        };
        for s in states {
            // an empty medium is allowed; the runner floors it into the cone
            if !(mv(s).is_realizable() || *s == [0.0; 3]) {
                return Err(Error::Config(format!("initial state {s:?} is not realizable")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Floor state defaults to `(1e-10, 0, 0)`.
    Vacuum {
        #[serde(default)]
        floor: Option<State>,
    },
    Reflective,
    Dirichlet { state: State },
    /// Dirichlet data equal to the initial condition.
    Initial,
    /// `inside` where the face point lies in the given coordinate ranges.
    Inlet {
        #[serde(default)]
        x: Option<[f64; 2]>,
        #[serde(default)]
        y: Option<[f64; 2]>,
        inside: State,
        outside: State,
    },
}

impl BoundarySpec {
    fn states(&self) -> Vec<State> {
        match self {
            BoundarySpec::Vacuum { floor } => floor.iter().copied().collect(),
            BoundarySpec::Dirichlet { state } => vec![*state],
            BoundarySpec::Inlet { inside, outside, .. } => vec![*inside, *outside],
            _ => Vec::new(),
        }
    }

    fn to_condition(&self, ic: &InitialCondition) -> BoundaryCondition {
        match self {
            BoundarySpec::Vacuum { floor: None } => BoundaryCondition::vacuum(),
            BoundarySpec::Vacuum { floor: Some(s) } => BoundaryCondition::Vacuum(mv(s)),
            BoundarySpec::Reflective => BoundaryCondition::Reflective,
            BoundarySpec::Dirichlet { state } => BoundaryCondition::constant(mv(state)),
            BoundarySpec::Initial => {
                let ic = ic.clone();
                BoundaryCondition::function(move |x, y, _| ic.at(x, y))
            }
            BoundarySpec::Inlet { x, y, inside, outside } => {
                let (x, y, inside, outside) = (*x, *y, mv(inside), mv(outside));
                BoundaryCondition::function(move |px, py, _| {
                    let in_x = x.is_none_or(|r| px >= r[0] && px <= r[1]);
                    let in_y = y.is_none_or(|r| py >= r[0] && py <= r[1]);
                    if in_x && in_y {
                        inside
                    } else {
                        outside
                    }
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBoundary {
    pub group: u32,
    pub spec: BoundarySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    pub left: BoundarySpec,
    pub right: BoundarySpec,
    pub bottom: BoundarySpec,
    pub top: BoundarySpec,
    /// Boundary groups of imported meshes.
    #[serde(default)]
    pub groups: Vec<GroupBoundary>,
}

impl Boundaries {
    pub fn uniform(spec: BoundarySpec) -> Self {
        Self {
            left: spec.clone(),
            right: spec.clone(),
            bottom: spec.clone(),
            top: spec,
            groups: Vec::new(),
        }
    }

    pub fn policy(&self, ic: &InitialCondition) -> GhostPolicy {
        let mut p = GhostPolicy::new()
            .with(BoundaryTag::Left, self.left.to_condition(ic))
            .with(BoundaryTag::Right, self.right.to_condition(ic))
            .with(BoundaryTag::Bottom, self.bottom.to_condition(ic))
            .with(BoundaryTag::Top, self.top.to_condition(ic));
        for g in &self.groups {
            p.set(BoundaryTag::Group(g.group), g.spec.to_condition(ic));
        }
        p
    }

    fn all(&self) -> impl Iterator<Item = &BoundarySpec> {
        [&self.left, &self.right, &self.bottom, &self.top]
            .into_iter()
            .chain(self.groups.iter().map(|g| &g.spec))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Rect,
    /// Each lattice square cut along one diagonal.
    TriTwoWay,
    /// Each lattice square cut along both diagonals.
    TriFourWay,
    /// Triangle file in the import format.
    Import { path: String },
}

impl std::str::FromStr for MeshSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(MeshSpec::Rect),
            "tri" | "tri4" => Ok(MeshSpec::TriFourWay),
            "tri2" => Ok(MeshSpec::TriTwoWay),
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(MeshSpec::Import { path: path.to_string() }),
                _ => Err(Error::Config(format!(
                    "unknown mesh kind {other:?}; expected rect, tri, tri2, tri4 or file:<path>"
                ))),
            },
        }
    }
}

/// A complete problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// `[x0, x1, y0, y1]`.
    pub domain: [f64; 4],
    pub h: f64,
    pub t_final: f64,
    #[serde(default)]
    pub steady: Option<SteadyState>,
    #[serde(default)]
    pub sigma_a: ScalarField,
    #[serde(default)]
    pub sigma_s: ScalarField,
    #[serde(default)]
    pub q0: ScalarField,
    #[serde(default)]
    pub q1x: ScalarField,
    #[serde(default)]
    pub q1y: ScalarField,
    pub initial: InitialCondition,
    pub boundary: Boundaries,
    pub mesh: MeshSpec,
    pub k: usize,
    /// Label such as `CRL22`.
    pub limiter: String,
    pub cfl_safety: f64,
    pub samples: usize,
}

/// Everything needed to start a run.
pub struct Setup {
    pub disc: Discretization,
    /// `L²` projection of the initial condition, before any limiting.
    pub initial: DGField,
    pub ctx: StepContext,
    pub run: RunConfig,
}

impl std::fmt::Debug for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setup")
            .field("cells", &self.disc.n_cells())
            .field("k", &self.disc.k)
            .field("limiter", &self.ctx.limiter)
            .finish()
    }
}

impl ScenarioConfig {
    pub fn domain(&self) -> Domain {
        Domain::new(self.domain[0], self.domain[1], self.domain[2], self.domain[3])
    }

    pub fn limiter_config(&self) -> Result<LimiterConfig> {
        self.limiter.parse()
    }

    pub fn point_coefficients(&self, x: f64, y: f64) -> PointCoefficients {
        PointCoefficients {
            sigma_a: self.sigma_a.at(x, y),
            sigma_s: self.sigma_s.at(x, y),
            q0: self.q0.at(x, y),
            q1x: self.q1x.at(x, y),
            q1y: self.q1y.at(x, y),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain().validate()?;
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h = {} must be positive", self.h)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final = {} must be finite and non-negative", self.t_final)));
        }
        if let Some(s) = self.steady {
            if !(s.tolerance > 0.0 && s.t_max > 0.0 && s.t_max.is_finite()) {
                return Err(Error::Config("steady state needs tolerance > 0 and finite t_max > 0".into()));
            }
        }
        if self.k > 2 {
            return Err(Error::Config(format!("k = {} not supported (0..=2)", self.k)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!("cfl_safety = {} outside (0, 1]", self.cfl_safety)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        self.limiter_config()?.validate()?;
        for (name, f) in [("sigma_a", &self.sigma_a), ("sigma_s", &self.sigma_s)] {
            if !(f.value >= 0.0 && f.outside >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        for (name, f) in [("q0", &self.q0), ("q1x", &self.q1x), ("q1y", &self.q1y)] {
            if !(f.value.is_finite() && f.outside.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        self.initial.validate()?;
        for b in self.boundary.all() {
            for s in b.states() {
                if !mv(&s).is_realizable() {
                    return Err(Error::Config(format!("boundary state {s:?} is not realizable")));
                }
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let d = self.domain();
        match &self.mesh {
            MeshSpec::Rect => build_rect_mesh(d, self.h),
            MeshSpec::TriTwoWay => build_tri_mesh_from_rect(d, self.h, TriSplit::TwoWay),
            MeshSpec::TriFourWay => build_tri_mesh_from_rect(d, self.h, TriSplit::FourWay),
            MeshSpec::Import { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                import_tri_mesh(&text)
            }
        }
    }

    pub fn ghosts(&self) -> GhostPolicy {
        self.boundary.policy(&self.initial)
    }

    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let mesh = self.build_mesh()?;
        let disc = Discretization::new(mesh, self.k)?;
        let ghosts = self.ghosts();
        ghosts.validate(&disc.boundary_tags)?;
        let coeffs = Coefficients::sample(&disc.mesh, |x, y| self.point_coefficients(x, y))?;
        let ic = self.initial.clone();
        let initial = project_initial(&disc, move |x, y| ic.at(x, y))?;
        let limiter = self.limiter_config()?;
        Ok(Setup {
            disc,
            initial,
            ctx: StepContext {
                ghosts,
                coeffs,
                limiter,
                operator: OperatorOptions {
                    eps_fix: limiter.eps_fix,
                    ..Default::default()
                },
            },
            run: RunConfig {
                t_final: self.t_final,
                cfl_safety: self.cfl_safety,
                samples: self.samples,
                steady: self.steady,
                max_steps: usize::MAX,
            },
        })
    }

    /// FV grid, sources and ghosts with `n` cells along x.
    pub fn reference_setup(&self, n: usize) -> Result<(FVGrid, FVSources, GhostPolicy)> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Config("reference resolution must be positive".into()));
        }
        if !self.boundary.groups.is_empty() || matches!(self.mesh, MeshSpec::Import { .. }) {
            return Err(Error::Config("the reference solver needs a rectangular domain with side boundaries".into()));
        }
        let d = self.domain();
        let ny = ((n as f64) * d.height() / d.width()).round().max(1.0) as usize;
        let ic = self.initial.clone();
        let grid = FVGrid::from_fn(d, n, ny, |x, y| ic.at(x, y))?;
        let sources = FVSources::sample(&grid, |x, y| self.point_coefficients(x, y))?;
        Ok((grid, sources, self.ghosts()))
    }

    /// Final time of the reference run: `t_final`, or `t_max` when the
    /// scenario runs to steady state.
    pub fn end_time(&self) -> f64 {
        match self.steady {
            Some(s) => s.t_max,
            None => self.t_final,
        }
    }
}

fn base(name: &str, domain: [f64; 4], h: f64, t_final: f64, initial: InitialCondition, boundary: Boundaries) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        domain,
        h,
        t_final,
        steady: None,
        sigma_a: ScalarField::default(),
        sigma_s: ScalarField::default(),
        q0: ScalarField::default(),
        q1x: ScalarField::default(),
        q1y: ScalarField::default(),
        initial,
        boundary,
        mesh: MeshSpec::Rect,
        k: 2,
        limiter: LimiterConfig::default().label(),
        cfl_safety: 0.9,
        samples: 20,
    }
}

fn vacuum() -> Boundaries {
    Boundaries::uniform(BoundarySpec::Vacuum { floor: None })
}

/// A builtin benchmark. Where the main text and the addendum disagree the
/// plain name follows the main text and `<name>-addendum` the addendum.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let unit_disk = Region::Disk { center: [0.0, 0.0], radius: 1.0 };
    let floor = 1e-10;
    let cfg = match name {
        "line_source" => base(
            name,
            [-0.5, 0.5, -0.5, 0.5],
            0.004,
            0.45,
            InitialCondition::SmoothedDirac { sigma: 0.02, floor: 1e-4 },
            Boundaries::uniform(BoundarySpec::Initial),
        ),
        "homogeneous_disk" | "homogeneous_disk-addendum" => {
            let addendum = name.ends_with("-addendum");
            let ic = if addendum { 0.0 } else { floor };
            let mut c = base(
                name,
                [-5.0, 5.0, -5.0, 5.0],
                0.05,
                if addendum { 3.75 } else { 3.0 },
                InitialCondition::Constant { state: [ic, 0.0, 0.0] },
                vacuum(),
            );
            c.sigma_a = ScalarField::on(unit_disk.clone(), 10.0);
            c.q0 = ScalarField::on(unit_disk, 1.0);
            c
        }
        "flash" | "flash-addendum" => {
            let addendum = name.ends_with("-addendum");
            let outside = if addendum { 0.0 } else { floor };
            base(
                name,
                [-10.0, 10.0, -10.0, 10.0],
                0.06,
                6.0,
                InitialCondition::Piecewise {
                    region: Region::Disk {
                        center: [0.0, 0.0],
                        radius: if addendum { 5.0 } else { 0.5 },
                    },
                    inside: [1.0, 0.9, 0.0],
                    outside: [outside, 0.0, 0.0],
                },
                vacuum(),
            )
        }
        "shadow" => {
            let mut c = base(
                name,
                [0.0, 12.0, 0.0, 6.0],
                0.04,
                0.0,
                InitialCondition::Constant { state: [0.0, 0.0, 0.0] },
                Boundaries {
                    left: BoundarySpec::Dirichlet { state: [1.0, 0.99, 0.0] },
                    right: BoundarySpec::Vacuum { floor: None },
                    bottom: BoundarySpec::Reflective,
                    top: BoundarySpec::Reflective,
                    groups: Vec::new(),
                },
            );
            c.steady = Some(SteadyState::default());
            c.sigma_a = ScalarField::on(Region::Box { x: [2.0, 3.0], y: [0.0, 2.0] }, 50.0);
            c
        }
        "two_beams" => {
            let bg = [1e-4, 0.0, 0.0];
            let inlet_x = BoundarySpec::Inlet { x: None, y: Some([3.0, 4.0]), inside: [100.0, 99.9, 0.0], outside: bg };
            let inlet_y = BoundarySpec::Inlet { x: Some([3.0, 4.0]), y: None, inside: [100.0, 0.0, 99.9], outside: bg };
            base(
                name,
                [0.0, 7.0, 0.0, 7.0],
                0.05,
                7.0,
                InitialCondition::Constant { state: bg },
                Boundaries {
                    left: inlet_x,
                    bottom: inlet_y,
                    right: BoundarySpec::Dirichlet { state: bg },
                    top: BoundarySpec::Dirichlet { state: bg },
                    groups: Vec::new(),
                },
            )
        }
        other => {
            return Err(Error::UnknownScenario(format!(
                "{other} (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// Runs a scenario end to end with the given callbacks.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    on_sample: &mut dyn FnMut(&Setup, &crate::stepper::Sample) -> Result<()>,
) -> Result<(Setup, RunResult)> {
    let setup = cfg.setup()?;
    let result = {
        let s = &setup;
        run(
            &s.disc,
            &s.initial,
            &s.ctx,
            &s.run,
            &mut |sample| on_sample(s, sample),
            &mut |_| {},
        )?
    };
    Ok((setup, result))
}

/// Distance to the cone boundary is controlled by `ξ`:
/// `U = (1 − λ)U₀ + λU₁` with `λ = (cos(2π(x + y)) + 1)/2`,
/// `U₀ = (1 − ξ)(1, 1, 0) + ξ(1, 0, 0)` and
/// `U₁ = 10⁻⁶ [(1 − ξ)(1, 0, 1) + ξ(1, 0, 0)]`.
pub fn limiter_study_field(xi: f64) -> impl Fn(f64, f64) -> MomentVector + Sync + Send + Clone {
    let u0 = MomentVector::new(1.0, 1.0 - xi, 0.0);
    let u1 = MomentVector::new(1.0, 0.0, 1.0 - xi) * 1e-6;
    move |x, y| {
        let lambda = ((2.0 * std::f64::consts::PI * (x + y)).cos() + 1.0) / 2.0;
        u0 * (1.0 - lambda) + u1 * lambda
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimiterStudyConfig {
    pub xi: f64,
    pub k: usize,
    /// Values of `1/h` on the unit square, ascending.
    pub grids: Vec<usize>,
}

/// Projects the study field on each grid, applies the realizability
/// limiter and tabulates the `ψ⁰` errors, observed orders and largest θ.
pub fn run_limiter_study(cfg: &LimiterStudyConfig) -> Result<Vec<StudyRow>> {
    if !(cfg.xi >= 0.0 && cfg.xi <= 1.0) {
        return Err(Error::Config(format!("xi = {} outside [0, 1]", cfg.xi)));
    }
    if cfg.grids.is_empty() || cfg.grids.contains(&0) {
        return Err(Error::Config("grid list must be non-empty and positive".into()));
    }
    if cfg.grids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("grid list must be strictly ascending".into()));
    }
    if cfg.k > 2 {
        return Err(Error::Config(format!("k = {} not supported (0..=2)", cfg.k)));
    }
    let field = limiter_study_field(cfg.xi);
    let mut rows: Vec<StudyRow> = Vec::new();
    for &n in &cfg.grids {
        let mesh = build_rect_mesh_n(Domain::new(0.0, 1.0, 0.0, 1.0), n, n)?;
        let disc = Discretization::new(mesh, cfg.k)?;
        let mut u = project_initial(&disc, field.clone())?;
        let rep = apply_realizability_limiter(&disc, &mut u)?;
        let f = field.clone();
        let e = error_norms(&disc, &u, move |x, y| f(x, y).psi0);
        let (order1, orderinf) = match rows.last() {
            Some(p) => {
                let (hc, hf) = (1.0 / p.inv_h, 1.0 / n as f64);
                (Some(observed_order(p.e1, e.e1, hc, hf)), Some(observed_order(p.einf, e.einf, hc, hf)))
            }
            None => (None, None),
        };
        rows.push(StudyRow {
            inv_h: n as f64,
            e1: e.e1,
            order1,
            einf: e.einf,
            orderinf,
            theta_max: rep.theta_max,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MSelection {
    /// `(M, log-Sobolev error)`; infinite when the run failed.
    pub errors: Vec<(f64, f64)>,
    pub best: f64,
}

/// Runs `base` once per entry of [`M_GRID`] with the slope mode and
/// realizability switch of `base.limiter`, and returns the `M` with the
/// smallest log-Sobolev error of `ψ⁰` against `reference`.
pub fn select_m(base: &ScenarioConfig, reference: &FVGrid) -> Result<MSelection> {
    let lim = base.limiter_config()?;
    if lim.slope == SlopeMode::Off {
        return Err(Error::Config("M selection needs an active slope limiter".into()));
    }
    let mut errors = Vec::with_capacity(M_GRID.len());
    for &m in &M_GRID {
        let mut cfg = base.clone();
        cfg.limiter = LimiterConfig { m, ..lim }.label();
        let err = match run_scenario(&cfg, &mut |_, _| Ok(())) {
            Ok((setup, res)) => match log_sobolev_error(&setup.disc, &res.field, reference) {
                Ok(e) if e.value.is_finite() => e.value,
                Ok(_) => f64::INFINITY,
                Err(e @ Error::Config(_)) => return Err(e),
                Err(_) => f64::INFINITY,
            },
            Err(e @ Error::Config(_)) => return Err(e),
            Err(_) => f64::INFINITY,
        };
        errors.push((m, err));
    }
    let best = errors
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|x| x.0)
        .unwrap_or(M_GRID[0]);
    Ok(MSelection { errors, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        let ls = builtin("line_source").unwrap();
        assert_eq!(ls.t_final, 0.45);
        assert_eq!(ls.h, 0.004);
        let flash = builtin("flash").unwrap();
        assert_eq!(flash.initial.at(0.0, 0.0), MomentVector::new(1.0, 0.9, 0.0));
        assert_eq!(flash.initial.at(0.4, 0.0), MomentVector::new(1.0, 0.9, 0.0));
        assert_eq!(flash.initial.at(0.6, 0.0).psi0, 1e-10);
        let fa = builtin("flash-addendum").unwrap();
        assert_eq!(fa.initial.at(4.9, 0.0), MomentVector::new(1.0, 0.9, 0.0));
        assert_eq!(fa.initial.at(5.1, 0.0).psi0, 0.0);
        assert_eq!(builtin("homogeneous_disk").unwrap().t_final, 3.0);
        assert_eq!(builtin("homogeneous_disk-addendum").unwrap().t_final, 3.75);
        let hd = builtin("homogeneous_disk").unwrap();
        assert_eq!(hd.point_coefficients(0.5, 0.5).sigma_a, 10.0);
        assert_eq!(hd.point_coefficients(0.5, 0.5).q0, 1.0);
        assert_eq!(hd.point_coefficients(1.5, 0.0).sigma_a, 0.0);
        let sh = builtin("shadow").unwrap();
        assert_eq!(sh.point_coefficients(2.5, 1.0).sigma_a, 50.0);
        assert_eq!(sh.point_coefficients(3.5, 1.0).sigma_a, 0.0);
        assert!(sh.steady.is_some());
        assert!(matches!(builtin("nope"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn two_beams_inlets() {
        let tb = builtin("two_beams").unwrap();
        let g = tb.ghosts();
        let inner = MomentVector::new(1e-4, 0.0, 0.0);
        let bottom = g.get(BoundaryTag::Bottom).unwrap();
        let at = |bc: &BoundaryCondition, x: f64, y: f64, n: [f64; 2]| crate::dg::ghost_state(&inner, bc, [x, y], n, 0.0);
        assert_eq!(at(bottom, 3.5, 0.0, [0.0, -1.0]), MomentVector::new(100.0, 0.0, 99.9));
        assert_eq!(at(bottom, 5.0, 0.0, [0.0, -1.0]), MomentVector::new(1e-4, 0.0, 0.0));
        let left = g.get(BoundaryTag::Left).unwrap();
        assert_eq!(at(left, 0.0, 3.2, [-1.0, 0.0]), MomentVector::new(100.0, 99.9, 0.0));
    }

    #[test]
    fn every_builtin_validates() {
        for name in BUILTIN_NAMES {
            builtin(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn config_round_trips_through_serde() {
        for name in BUILTIN_NAMES {
            let c = builtin(name).unwrap();
            let text = serde_json::to_string(&c).unwrap();
            let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn study_field_examples() {
        let f = limiter_study_field(1.0);
        let u = f(0.1, 0.3);
        let lambda = ((2.0 * std::f64::consts::PI * 0.4).cos() + 1.0) / 2.0;
        assert!((u.psi0 - (1.0 - lambda + 1e-6 * lambda)).abs() < 1e-15);
        assert_eq!((u.psi1x, u.psi1y), (0.0, 0.0));
        // λ = 0 on x + y = ½
        let f0 = limiter_study_field(0.0);
        let u = f0(0.25, 0.25);
        assert!(u.max_abs_diff(&MomentVector::new(1.0, 1.0, 0.0)) < 1e-15);
        assert!((u.psi0 - u.flux_norm()).abs() < 1e-15);
        let xi = 0.3;
        let u0 = limiter_study_field(xi)(0.25, 0.25);
        assert!((u0.flux_norm() / u0.psi0 - (1.0 - xi)).abs() < 1e-14);
    }

    #[test]
    fn study_rejects_bad_input() {
        assert!(run_limiter_study(&LimiterStudyConfig { xi: -1.0, k: 2, grids: vec![5] }).is_err());
        assert!(run_limiter_study(&LimiterStudyConfig { xi: 0.0, k: 2, grids: vec![10, 5] }).is_err());
    }

    #[test]
    fn study_piecewise_constant_is_first_order() {
        let rows = run_limiter_study(&LimiterStudyConfig { xi: 0.5, k: 0, grids: vec![16, 32, 64] }).unwrap();
        assert!(rows[0].order1.is_none());
        for r in &rows[1..] {
            let o = r.order1.unwrap();
            assert!((o - 1.0).abs() < 0.1, "{o}");
        }
    }

    #[test]
    fn mesh_spec_parsing() {
        assert_eq!("rect".parse::<MeshSpec>().unwrap(), MeshSpec::Rect);
        assert_eq!("tri".parse::<MeshSpec>().unwrap(), MeshSpec::TriFourWay);
        assert_eq!("file:m.txt".parse::<MeshSpec>().unwrap(), MeshSpec::Import { path: "m.txt".into() });
        assert!("hex".parse::<MeshSpec>().is_err());
    }

    #[test]
    fn m_grid_matches() {
        assert_eq!(M_GRID, [0.1, 0.2, 0.5, 1.0, 2.0, 10.0, 22.0, 46.0, 100.0, 150.0]);
    }
}
