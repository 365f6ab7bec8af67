//! The subcommands: each turns a validated model and its flags into output
//! bytes plus the diagnostics recorded in the manifest.

use alphafair_core::allocator::MAX_ITERS;
use alphafair_core::dual::SolverSettings;
use alphafair_core::fluid::FluidTrajectory;
use alphafair_core::manifold::{lift_delta_with, CONE_TOL, LIFT_EPS};
use alphafair_core::{
    cone_contains, fluid_limit_error, integrate, invariant_from_q, is_invariant, simulate,
    uniform_grid, workload, Allocator, FluidLimitReport, FluidOptions, NetworkModel, SimulationOptions,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::{Command, CommonArgs};

/// Default invariance tolerance of `manifold`.
pub const INVARIANCE_TOL: f64 = 1e-6;

/// What a command produced.
#[derive(Debug)]
pub struct Output {
    /// Bytes of the data file (CSV or JSON).
    pub data: Vec<u8>,
    /// Tolerances in effect, for the manifest.
    pub tolerances: Value,
    /// Solver diagnostics, for the manifest.
    pub diagnostics: Value,
    /// Short result printed to stdout when the data goes to a file.
    pub summary: Option<Value>,
    /// A violated invariant, reported after the data has been written.
    pub violation: Option<CliError>,
}

impl Output {
    fn new(data: Vec<u8>, tolerances: Value, diagnostics: Value) -> Self {
        Self {
            data,
            tolerances,
            diagnostics,
            summary: None,
            violation: None,
        }
    }
}

pub fn execute(loaded: &LoadedConfig, common: &CommonArgs, command: &Command) -> Result<Output, CliError> {
    let model = &loaded.model;
    check_tolerance("--eps-kkt", common.eps_kkt)?;
    if let Some(tol) = common.tol {
        check_tolerance("--tol", tol)?;
    }
    match command {
        Command::Allocate { state } => allocate(model, common, state),
        Command::Fluid {
            n0,
            horizon,
            sample_interval,
        } => fluid(model, common, n0, *horizon, *sample_interval),
        Command::Simulate {
            n0,
            horizon,
            max_events,
        } => simulate_path(model, common, n0, *horizon, *max_events),
        Command::Fluidlimit {
            n0,
            scales,
            seeds,
            horizon,
            grid_step,
        } => fluid_limit(model, common, n0, scales, *seeds, *horizon, *grid_step),
        Command::Manifold { q, state } => manifold(model, common, q.as_deref(), state.as_deref()),
        Command::Lift { w } => lift(model, common, w),
        Command::Cone { grid, max } => cone(model, common, *grid, *max),
    }
}

fn check_tolerance(flag: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} must be positive and finite (got {value})")))
    }
}

fn check_length(flag: &str, values: usize, expected: usize, what: &str) -> Result<(), CliError> {
    if values == expected {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} has {values} entries but the network has {expected} {what}")))
    }
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("result serialises");
    text.push('\n');
    text.into_bytes()
}

/// Shortest round-trip decimal form, so reruns are byte-identical.
fn num(x: f64) -> String {
    x.to_string()
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[String]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}_{k}"))
}

fn allocate(model: &NetworkModel, common: &CommonArgs, state: &[f64]) -> Result<Output, CliError> {
    check_length("--state", state.len(), model.route_count(), "routes")?;
    let a = Allocator::new(model).with_tolerance(common.eps_kkt).allocate(state)?;
    let data = json_bytes(&json!({
        "state": state,
        "lambda": a.lambda,
        "prices": a.prices,
        "kkt_residual": a.kkt_residual,
        "iterations": a.iterations,
    }));
    Ok(Output::new(
        data,
        json!({ "eps_kkt": common.eps_kkt }),
        json!({ "iterations": a.iterations, "kkt_residual": a.kkt_residual }),
    ))
}

fn fluid_options(model: &NetworkModel, common: &CommonArgs) -> Result<FluidOptions, CliError> {
    let mut options = FluidOptions::for_model(model);
    if let Some(dt) = common.dt {
        check_tolerance("--dt", dt)?;
        options.dt = dt;
    }
    options.eps_kkt = common.eps_kkt;
    options.enforce_gap_monotone = false;
    Ok(options)
}

/// Output times `0, Δ, 2Δ, …` up to and including `horizon`.
fn sample_grid(horizon: f64, interval: f64, flag: &str) -> Result<Vec<f64>, CliError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(CliError::Usage(format!("--horizon must be nonnegative and finite (got {horizon})")));
    }
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(CliError::Usage(format!("{flag} must be positive and finite (got {interval})")));
    }
    Ok(uniform_grid(horizon, interval))
}

fn fluid(
    model: &NetworkModel,
    common: &CommonArgs,
    n0: &[f64],
    horizon: f64,
    interval: f64,
) -> Result<Output, CliError> {
    check_length("--n0", n0.len(), model.route_count(), "routes")?;
    let mut options = fluid_options(model, common)?;
    if let Some(tol) = common.tol {
        options.tol_mono_base = tol;
    }
    let grid = sample_grid(horizon, interval, "--sample-interval")?;
    let traj = integrate(model, n0, horizon, &grid, options)?;
    let (routes, resources, critical) = (
        model.route_count(),
        model.resource_count(),
        model.critical_resources().len(),
    );

    let mut header = vec!["t".to_string()];
    header.extend(indexed("n", routes));
    header.extend(["F", "H", "K"].map(String::from));
    header.extend(indexed("w", critical));
    header.extend(indexed("feas", resources));
    let mut table = Table::new(&header);
    for s in &traj.samples {
        let mut row = vec![num(s.t)];
        row.extend(s.n.iter().map(|&x| num(x)));
        row.push(num(s.f));
        row.push(s.h.map(num).unwrap_or_default());
        row.push(num(s.k));
        row.extend(s.w.iter().map(|&x| num(x)));
        row.extend(s.feasibility.iter().map(|&x| num(x)));
        table.row(&row);
    }

    let feas_tol = 10.0 * options.eps_kkt;
    let (diagnostics, violation) = fluid_checks(&traj, feas_tol);
    let mut output = Output::new(
        table.finish(),
        json!({
            "eps_kkt": options.eps_kkt,
            "dt": options.dt,
            "tol_mono": traj.tol_mono(),
            "tol_mono_base": options.tol_mono_base,
            "eps_feas": feas_tol,
        }),
        diagnostics,
    );
    output.violation = violation;
    Ok(output)
}

/// Terminal diagnostics of a fluid run and the first violated invariant.
fn fluid_checks(traj: &FluidTrajectory, feas_tol: f64) -> (Value, Option<CliError>) {
    let tol = traj.tol_mono();
    let mono = traj.monotonicity();
    let infeasible = traj.max_feasibility_violation();
    let last = traj.last();
    let diagnostics = json!({
        "steps": traj.steps,
        "samples": traj.samples.len(),
        "max_kkt_residual": traj.max_kkt_residual,
        "max_abs_k": traj.max_abs_k,
        "f_increase": mono.f_increase,
        "h_increase": mono.h_increase,
        "w_decrease": mono.w_decrease,
        "secant_error": mono.secant_error,
        "secant_error_over_dt": mono.secant_error / traj.dt,
        "max_feasibility_violation": infeasible,
        "final_h": last.and_then(|s| s.h),
        "final_lift_distance": last.and_then(|s| s.lift_distance),
    });
    let violation = if mono.h_increase > tol {
        Some(format!("H increased by {:e} (tolerance {tol:e})", mono.h_increase))
    } else if mono.f_increase > tol {
        Some(format!("F increased by {:e} (tolerance {tol:e})", mono.f_increase))
    } else if mono.w_decrease > tol {
        Some(format!("critical workload decreased by {:e} (tolerance {tol:e})", mono.w_decrease))
    } else if infeasible > feas_tol {
        Some(format!("capacity margin violated by {infeasible:e} (tolerance {feas_tol:e})"))
    } else {
        None
    };
    (diagnostics, violation.map(CliError::Invariant))
}

fn simulate_path(
    model: &NetworkModel,
    common: &CommonArgs,
    n0: &[u32],
    horizon: f64,
    max_events: u64,
) -> Result<Output, CliError> {
    check_length("--n0", n0.len(), model.route_count(), "routes")?;
    let options = SimulationOptions {
        eps_kkt: common.eps_kkt,
        event_cap: max_events,
        ..SimulationOptions::default()
    };
    let path = simulate(model, n0, horizon, common.seed, options)?;
    let (routes, resources) = (model.route_count(), model.resource_count());

    let mut header = ["t", "event", "i"].map(String::from).to_vec();
    header.extend(indexed("N", routes));
    header.extend(indexed("U", resources));
    let mut table = Table::new(&header);
    for k in 0..path.len() {
        let (event, route) = match k {
            0 => ("start".to_string(), String::new()),
            _ => {
                let e = path.events()[k - 1];
                (e.label().to_string(), (e.route() + 1).to_string())
            }
        };
        let mut row = vec![num(path.node_time(k)), event, route];
        row.extend(path.state(k).iter().map(|x| x.to_string()));
        row.extend(path.unused_capacity(k).iter().map(|&x| num(x)));
        table.row(&row);
    }
    let (arrivals, departures) = path.event_counts();
    Ok(Output::new(
        table.finish(),
        json!({ "eps_kkt": options.eps_kkt, "event_cap": options.event_cap }),
        json!({
            "events": path.event_count(),
            "arrivals": arrivals,
            "departures": departures,
            "final_state": path.final_state(),
            "time_average": path.time_average(),
            "unused_at_horizon": path.unused_at_horizon(),
        }),
    ))
}

fn fluid_limit(
    model: &NetworkModel,
    common: &CommonArgs,
    n0: &[f64],
    scales: &[f64],
    seed_count: u64,
    horizon: f64,
    grid_step: f64,
) -> Result<Output, CliError> {
    check_length("--n0", n0.len(), model.route_count(), "routes")?;
    if scales.is_empty() || scales.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(CliError::Usage(format!("--scales must be positive and finite (got {scales:?})")));
    }
    if seed_count == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let options = fluid_options(model, common)?;
    let grid = sample_grid(horizon, grid_step, "--grid-step")?;
    let fluid_path = integrate(model, n0, horizon, &grid, options)?;
    let fluid_states = fluid_path.states();
    let seeds: Vec<u64> = (0..seed_count).map(|k| common.seed.wrapping_add(k)).collect();
    let sim = SimulationOptions {
        eps_kkt: common.eps_kkt,
        ..SimulationOptions::default()
    };

    // every (scale, seed) run is independent; `collect` keeps input order
    let jobs: Vec<(f64, u64)> = scales.iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(r, s)| fluid_limit_error(model, n0, r, s, &grid, &fluid_states, sim))
        .collect::<Result<Vec<f64>, _>>()?;
    let errors: Vec<Vec<f64>> = results.chunks(seeds.len()).map(<[f64]>::to_vec).collect();

    let mut table = Table::new(&["scale", "seed", "error"].map(String::from));
    for (&(r, s), &e) in jobs.iter().zip(&results) {
        table.row(&[num(r), s.to_string(), num(e)]);
    }
    let report = FluidLimitReport::new(scales.to_vec(), seeds, errors);
    let (smallest, largest) = extreme_scales(scales);
    let summary = json!({
        "scales": report.scales,
        "medians": report.medians,
        "medians_decreasing": report.medians_decreasing(),
        "median_ratio_smallest_to_largest_scale": report.medians[smallest] / report.medians[largest],
    });
    let mut output = Output::new(
        table.finish(),
        json!({ "eps_kkt": common.eps_kkt, "dt": options.dt }),
        json!({ "report": summary.clone(), "fluid_steps": fluid_path.steps, "grid_points": grid.len() }),
    );
    output.summary = Some(summary);
    Ok(output)
}

fn extreme_scales(scales: &[f64]) -> (usize, usize) {
    let by = |better: fn(f64, f64) -> bool| {
        (0..scales.len()).fold(0, |best, k| if better(scales[k], scales[best]) { k } else { best })
    };
    (by(|a, b| a < b), by(|a, b| a > b))
}

fn manifold(
    model: &NetworkModel,
    common: &CommonArgs,
    q: Option<&[f64]>,
    state: Option<&[f64]>,
) -> Result<Output, CliError> {
    let tol = common.tol.unwrap_or(INVARIANCE_TOL);
    let (header, n) = match (q, state) {
        (Some(q), _) => {
            let point = invariant_from_q(model, q)?;
            let header = json!({
                "q": point.q,
                "n": point.n,
                "w": point.w,
                "allocation_gap": point.allocation_gap,
            });
            (header, point.n)
        }
        (None, Some(n)) => {
            check_length("--state", n.len(), model.route_count(), "routes")?;
            let w = workload(model, n)?;
            (json!({ "n": n, "w": w }), n.to_vec())
        }
        (None, None) => return Err(CliError::Usage("one of --q or --state is required".into())),
    };
    let check = is_invariant(model, &n, tol)?;
    let mut doc = header;
    doc["checks"] = json!({
        "invariant": check.invariant,
        "lift_residual": check.residual,
        "gap_h": check.gap_h,
        "dissipation_k": check.dissipation_k,
        "lift": check.lift.n,
    });
    Ok(Output::new(
        json_bytes(&doc),
        json!({ "invariance_tol": tol, "lift_eps": LIFT_EPS }),
        json!({ "lift_iterations": check.lift.iterations, "lift_kkt_residual": check.lift.kkt_residual }),
    ))
}

fn lift(model: &NetworkModel, common: &CommonArgs, w: &[f64]) -> Result<Output, CliError> {
    let tolerance = common.tol.unwrap_or(LIFT_EPS);
    let result = lift_delta_with(model, w, SolverSettings { tolerance, max_iters: MAX_ITERS })?;
    let data = json_bytes(&json!({
        "w": w,
        "n": result.n,
        "prices": result.prices,
        "f": result.f_lower,
        "kkt_residual": result.kkt_residual,
        "iterations": result.iterations,
    }));
    Ok(Output::new(
        data,
        json!({ "lift_eps": tolerance }),
        json!({ "iterations": result.iterations, "kkt_residual": result.kkt_residual }),
    ))
}

fn cone(model: &NetworkModel, common: &CommonArgs, points: usize, max: f64) -> Result<Output, CliError> {
    let critical = model.critical_resources().len();
    if critical != 2 {
        return Err(CliError::Config(format!(
            "cone needs exactly two critical resources, the network has {critical}"
        )));
    }
    if points < 2 {
        return Err(CliError::Usage(format!("--grid must be at least 2 (got {points})")));
    }
    if !(max > 0.0 && max.is_finite()) {
        return Err(CliError::Usage(format!("--max must be positive and finite (got {max})")));
    }
    let tol = common.tol.unwrap_or(CONE_TOL);
    let axis: Vec<f64> = (0..points).map(|k| max * k as f64 / (points - 1) as f64).collect();
    let mut table = Table::new(&["w_1", "w_2", "inside"].map(String::from));
    let mut inside = 0usize;
    for &w1 in &axis {
        for &w2 in &axis {
            let member = cone_contains(model, &[w1, w2], tol)?;
            inside += usize::from(member);
            table.row(&[num(w1), num(w2), u8::from(member).to_string()]);
        }
    }
    Ok(Output::new(
        table.finish(),
        json!({ "cone_tol": tol, "lift_eps": LIFT_EPS }),
        json!({ "points": points * points, "inside": inside }),
    ))
}
