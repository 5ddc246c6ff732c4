use std::path::{Path, PathBuf};
use std::time::Instant;

use m1dg::diagnostics::{
    field_rows, fv_field_rows, realizability_stats, study_csv, write_field_csv, write_stats_csv, write_study_csv, write_vtk,
};
use m1dg::fv::fv_run;
use m1dg::scenarios::{run_limiter_study, run_scenario, select_m, LimiterStudyConfig, ScenarioConfig};
use m1dg::stepper::l2_norm;
use serde::Serialize;

use crate::config::{
    self, apply_overrides, base_scenario, check_threads, merge, output_root, parse_sampling, Overrides, ReferenceSection,
    RunSection, StudySection, SweepSection,
};
use crate::CliError;

const DEFAULT_GRIDS: [usize; 5] = [5, 10, 20, 40, 80];
const DEFAULT_REFERENCE_RESOLUTION: usize = 256;

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = check_threads(threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn prepare_output(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output: cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Everything in `summary.json`. Wall time lives in `timing.json` so that
/// the summary stays byte-identical across repeated runs.
#[derive(Serialize)]
struct Summary {
    scenario: String,
    mesh: String,
    k: usize,
    limiter: String,
    h: f64,
    cells: usize,
    degrees_of_freedom: usize,
    dt: f64,
    steps: usize,
    t_end: f64,
    converged: bool,
    fixed_initial_means: usize,
    final_rate_norm: f64,
    psi0_integral: f64,
    psi0_max: f64,
    l2_norm: f64,
    max_pct_gp: f64,
    max_pct_cm: f64,
    theta_max: f64,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
}

pub fn run(config_path: Option<&Path>, mut args: RunSection) -> Result<(), CliError> {
    let file = config::load(config_path)?;
    merge!(args, file.run, scenario, mesh, k, limiter, h, t_final, cfl, samples, sampling, vtk, output, threads, seed);
    init_threads(args.threads)?;
    let mut cfg = base_scenario(args.scenario.as_deref(), file.scenario.as_ref())?;
    apply_overrides(
        &mut cfg,
        &Overrides {
            mesh: args.mesh.as_deref(),
            k: args.k,
            limiter: args.limiter.as_deref(),
            h: args.h,
            t_final: args.t_final,
            cfl: args.cfl,
            samples: args.samples,
        },
    )?;
    let sampling = parse_sampling(args.sampling.as_deref().unwrap_or("cells"))?;
    let vtk = args.vtk.unwrap_or(true);
    let out = args.output.clone().unwrap_or_else(|| output_root().join(&cfg.name));
    prepare_output(&out)?;
    write_json(&out.join("scenario.json"), &cfg)?;

    let started = Instant::now();
    let mut stats = Vec::new();
    let (setup, res) = run_scenario(&cfg, &mut |s, smp| {
        stats.push(realizability_stats(&s.disc, smp.field, smp.t, smp.theta_max));
        let rows = field_rows(&s.disc, smp.field, sampling)?;
        write_field_csv(&out.join(format!("field_{:03}.csv", smp.index)), &rows)?;
        if vtk {
            let title = format!("{} t={:.6e}", cfg.name, smp.t);
            write_vtk(&out.join(format!("field_{:03}.vtk", smp.index)), &s.disc, smp.field, &title)?;
        }
        Ok(())
    })?;
    let wall = started.elapsed().as_secs_f64();
    write_stats_csv(&out.join("stats.csv"), &stats)?;

    let disc = &setup.disc;
    let means = res.field.means();
    let summary = Summary {
        scenario: cfg.name.clone(),
        mesh: mesh_label(&cfg),
        k: cfg.k,
        limiter: cfg.limiter.clone(),
        h: cfg.h,
        cells: disc.n_cells(),
        degrees_of_freedom: res.field.data.len(),
        dt: res.dt,
        steps: res.steps,
        t_end: res.t,
        converged: res.converged,
        fixed_initial_means: res.fixed_initial_means,
        final_rate_norm: res.final_rate_norm,
        psi0_integral: means.iter().zip(&disc.mesh.cells).map(|(m, c)| m.psi0 * c.area).sum(),
        psi0_max: means.iter().map(|m| m.psi0).fold(f64::NEG_INFINITY, f64::max),
        l2_norm: l2_norm(disc, &res.field),
        max_pct_gp: stats.iter().map(|s| s.pct_gp).fold(0.0, f64::max),
        max_pct_cm: stats.iter().map(|s| s.pct_cm).fold(0.0, f64::max),
        theta_max: stats.iter().map(|s| s.theta_max).fold(0.0, f64::max),
        seed: args.seed,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timing.json"), &Timing { wall_time_s: wall })?;
    println!(
        "{}: {} cells, k={}, {}; {} steps of dt={:.4e} to t={:.4}{}; {} samples in {} ({:.1} s)",
        cfg.name,
        disc.n_cells(),
        cfg.k,
        cfg.limiter,
        res.steps,
        res.dt,
        res.t,
        if res.converged { " (steady)" } else { "" },
        stats.len(),
        out.display(),
        wall
    );
    Ok(())
}

fn mesh_label(cfg: &ScenarioConfig) -> String {
    use m1dg::scenarios::MeshSpec;
    match &cfg.mesh {
        MeshSpec::Rect => "rect".into(),
        MeshSpec::TriTwoWay => "tri2".into(),
        MeshSpec::TriFourWay => "tri4".into(),
        MeshSpec::Import { path } => format!("file:{path}"),
    }
}

pub fn study(config_path: Option<&Path>, mut args: StudySection) -> Result<(), CliError> {
    let file = config::load(config_path)?;
    merge!(args, file.study, xi, k, grids, output, threads);
    init_threads(args.threads)?;
    let xi = args.xi.ok_or_else(|| CliError::Config("xi: missing".into()))?;
    if !(0.0..=1.0).contains(&xi) {
        return Err(CliError::Config(format!("xi: {xi} outside [0, 1]")));
    }
    let ks = args.k.unwrap_or_else(|| vec![2]);
    if ks.is_empty() {
        return Err(CliError::Config("k: empty list".into()));
    }
    let grids = args.grids.unwrap_or_else(|| DEFAULT_GRIDS.to_vec());
    let out = args.output.unwrap_or_else(|| output_root().join("study"));
    prepare_output(&out)?;
    for k in ks {
        let rows = run_limiter_study(&LimiterStudyConfig { xi, k, grids: grids.clone() })
            .map_err(|e| CliError::Config(format!("study k={k}: {e}")))?;
        let path = out.join(format!("study_k{k}.csv"));
        write_study_csv(&path, &rows)?;
        println!("# xi = {xi:e}, k = {k} -> {}", path.display());
        print!("{}", study_csv(&rows));
    }
    Ok(())
}

pub fn reference(config_path: Option<&Path>, mut args: ReferenceSection) -> Result<(), CliError> {
    let file = config::load(config_path)?;
    merge!(args, file.reference, scenario, resolution, output, threads);
    init_threads(args.threads)?;
    let cfg = base_scenario(args.scenario.as_deref(), file.scenario.as_ref())?;
    let n = args.resolution.unwrap_or(DEFAULT_REFERENCE_RESOLUTION);
    let out = args.output.unwrap_or_else(|| output_root().join(&cfg.name));
    let path = write_reference(&cfg, n, &out)?;
    println!("{}: reference {n} cells along x -> {}", cfg.name, path.display());
    Ok(())
}

fn reference_grid(cfg: &ScenarioConfig, n: usize) -> Result<m1dg::fv::FVGrid, CliError> {
    if n == 0 {
        return Err(CliError::Config("resolution: must be positive".into()));
    }
    let (grid, sources, ghosts) = cfg.reference_setup(n)?;
    Ok(fv_run(grid, &sources, &ghosts, cfg.end_time(), &mut |_, _| {})?)
}

fn write_reference(cfg: &ScenarioConfig, n: usize, out: &Path) -> Result<PathBuf, CliError> {
    let grid = reference_grid(cfg, n)?;
    prepare_output(out)?;
    let path = out.join(format!("reference_{n}.csv"));
    write_field_csv(&path, &fv_field_rows(&grid))?;
    Ok(path)
}

pub fn sweep(config_path: Option<&Path>, mut args: SweepSection) -> Result<(), CliError> {
    let file = config::load(config_path)?;
    merge!(args, file.sweep, scenario, mesh, k, limiter, h, resolution, output, threads);
    init_threads(args.threads)?;
    let mut cfg = base_scenario(args.scenario.as_deref(), file.scenario.as_ref())?;
    apply_overrides(
        &mut cfg,
        &Overrides {
            mesh: args.mesh.as_deref(),
            k: args.k,
            limiter: args.limiter.as_deref(),
            h: args.h,
            t_final: None,
            cfl: None,
            samples: None,
        },
    )?;
    let n = args.resolution.unwrap_or(DEFAULT_REFERENCE_RESOLUTION);
    let out = args.output.unwrap_or_else(|| output_root().join(format!("{}_sweep", cfg.name)));
    let reference = reference_grid(&cfg, n)?;
    prepare_output(&out)?;
    let sel = select_m(&cfg, &reference)?;
    let mut text = String::from("M,log_sobolev_error\n");
    for (m, e) in &sel.errors {
        text.push_str(&format!("{m:.16e},{e:.16e}\n"));
    }
    let path = out.join("sweep.csv");
    std::fs::write(&path, &text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    print!("{text}");
    println!("# best M = {} -> {}", sel.best, path.display());
    Ok(())
}
