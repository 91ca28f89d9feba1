//! Subcommand bodies.

use std::path::Path;

use aerocourier::bundling::{self, BundlingEquilibrium};
use aerocourier::milp::{self, BuildOptions, PlanSolution, SolveOptions, SolverBackend};
use aerocourier::scenario::{load_scenario_file, KeyPolicy, NetworkScenario};
use aerocourier::simkit::{self, SimEstimate};
use aerocourier::surrogate::TrainConfig;
use aerocourier::droneq;
use serde::Serialize;
use serde_json::json;

use crate::cache::{ModelCache, TrainSettings};
use crate::output::{self, Manifest, SummaryRow};
use crate::sweep::{self, SweepAxis};
use crate::{Cli, CliError, Command, ModelArgs, ScenarioArgs, SimKind, SolverArgs};

pub(crate) fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { path, scenario, lenient } => {
            let path = path
                .as_ref()
                .or(scenario.as_ref())
                .ok_or_else(|| CliError::Usage("validate needs a scenario path".into()))?;
            validate(path, *lenient)
        }
        Command::Equilibrium { scenario, lambda, idle } => equilibrium(g.seed, &g.out, scenario, *lambda, *idle),
        Command::Simulate {
            kind,
            scenario,
            lenient,
            lambda,
            idle,
            orders,
            gamma,
            capacity,
            events,
        } => {
            let sc = scenario
                .as_ref()
                .map(|p| load(&ScenarioArgs {
                    scenario: p.clone(),
                    lenient: *lenient,
                }))
                .transpose()?;
            match kind {
                SimKind::Bundling => {
                    let sc = sc.ok_or_else(|| CliError::Usage("--kind bundling needs --scenario".into()))?;
                    simulate_bundling(g.seed, &g.out, &sc, *lambda, *idle, *orders)
                }
                SimKind::Queue => simulate_queue(g.seed, &g.out, sc.as_ref(), gamma, *capacity, *events),
            }
        }
        Command::Train {
            scenario,
            models,
            lambda_scale,
        } => train(g.seed, &g.out, scenario, models, *lambda_scale),
        Command::Plan {
            scenario,
            models,
            solver,
            export_lp,
        } => plan(g.seed, &g.out, scenario, models, solver, *export_lp),
        Command::Sweep {
            scenario,
            models,
            solver,
            axis,
            cases,
        } => run_sweep(g.seed, &g.out, scenario, models, solver, *axis, cases),
        Command::Report {
            scenario,
            plan,
            tolerance,
        } => report(g.seed, &g.out, scenario, plan, *tolerance),
    }
}

fn load(args: &ScenarioArgs) -> Result<NetworkScenario, CliError> {
    let policy = if args.lenient {
        KeyPolicy::Lenient
    } else {
        KeyPolicy::Strict
    };
    Ok(load_scenario_file(&args.scenario, policy)?)
}

fn scenario_config(args: &ScenarioArgs, sc: &NetworkScenario) -> serde_json::Value {
    json!({
        "path": args.scenario.display().to_string(),
        "lenient": args.lenient,
        "document_sha256": output::config_hash(&sc.to_json()),
    })
}

fn validate(path: &Path, lenient: bool) -> Result<(), CliError> {
    let sc = load(&ScenarioArgs {
        scenario: path.to_path_buf(),
        lenient,
    })?;
    println!(
        "ok: {} nodes, {} links, {} OD pairs, {} launchpad and {} kiosk candidates, total demand {:.4} orders/min",
        sc.document().nodes.len(),
        sc.document().links.len(),
        sc.demand().len(),
        sc.launchpads().len(),
        sc.kiosks().len(),
        sc.total_demand()
    );
    Ok(())
}

fn default_idle(sc: &NetworkScenario) -> f64 {
    let r = &sc.params().idle;
    0.5 * (r.min + r.max)
}

fn equilibrium(
    seed: u64,
    out: &Path,
    args: &ScenarioArgs,
    lambda: Option<f64>,
    idle: Option<f64>,
) -> Result<(), CliError> {
    let sc = load(args)?;
    let idle = idle.unwrap_or_else(|| default_idle(&sc));
    let mut header = vec!["i".to_string(), "j".to_string(), "idle_count".to_string()];
    header.extend(BundlingEquilibrium::CSV_COLUMNS.iter().map(|c| c.to_string()));
    let mut rows = vec![header];
    for ((i, j), rate) in sc.demand() {
        let ctx = sc.ground_context(i, j)?.with_flow(lambda.unwrap_or(rate), idle);
        let eq = bundling::equilibrium(&ctx).map_err(|e| CliError::Validation(format!("OD ({i}, {j}): {e}")))?;
        let mut row = vec![i.to_string(), j.to_string(), idle.to_string()];
        row.extend(eq.csv_values().iter().map(|v| v.to_string()));
        rows.push(row);
    }
    output::create_dir(out)?;
    let path = out.join("equilibrium.csv");
    write_records(&path, &rows)?;
    let mut m = Manifest::new(
        "equilibrium",
        seed,
        json!({"scenario": scenario_config(args, &sc), "lambda": lambda, "idle": idle}),
    );
    m.outputs.push("equilibrium.csv".into());
    m.write(out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_records(path: &Path, rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// One simulated quantity next to its closed form.
#[derive(Debug, Serialize)]
struct SimRow {
    point: String,
    quantity: &'static str,
    estimate: f64,
    ci_low: f64,
    ci_high: f64,
    analytic: f64,
    covered: bool,
}

impl SimRow {
    fn new(point: &str, quantity: &'static str, est: &SimEstimate, analytic: f64) -> Self {
        SimRow {
            point: point.to_string(),
            quantity,
            estimate: est.mean,
            ci_low: est.mean - est.half_width,
            ci_high: est.mean + est.half_width,
            analytic,
            covered: est.covers(analytic),
        }
    }
}

fn simulate_bundling(
    seed: u64,
    out: &Path,
    sc: &NetworkScenario,
    lambda: Option<f64>,
    idle: Option<f64>,
    orders: u64,
) -> Result<(), CliError> {
    let idle = idle.unwrap_or_else(|| default_idle(sc));
    let mut rows = Vec::new();
    for (k, ((i, j), rate)) in sc.demand().into_iter().enumerate() {
        let ctx = sc.ground_context(i, j)?.with_flow(lambda.unwrap_or(rate), idle);
        let eq = bundling::equilibrium(&ctx).map_err(|e| CliError::Validation(format!("OD ({i}, {j}): {e}")))?;
        // Distinct streams per OD keep points independent.
        let sim = simkit::simulate_bundling(&ctx, orders, seed.wrapping_add(k as u64)).map_err(CliError::runtime)?;
        let point = format!("od={i}-{j};lambda={};idle={idle}", ctx.lambda_all);
        rows.push(SimRow::new(&point, "p_s", &sim.p_s, eq.p_s));
        rows.push(SimRow::new(&point, "rho11", &sim.rho11, eq.rho11));
        rows.push(SimRow::new(&point, "rho21", &sim.rho21, eq.rho21));
        rows.push(SimRow::new(&point, "rho22", &sim.rho22, eq.rho22));
        rows.push(SimRow::new(&point, "w_g", &sim.w_g, eq.w_g));
        rows.push(SimRow::new(&point, "t_s1", &sim.t_s1, eq.t_s1));
        rows.push(SimRow::new(&point, "t_s2", &sim.t_s2, eq.t_s2));
    }
    finish_simulation(
        seed,
        out,
        rows,
        json!({"kind": "bundling", "scenario_sha256": output::config_hash(&sc.to_json()),
               "lambda": lambda, "idle": idle, "orders": orders}),
    )
}

fn simulate_queue(
    seed: u64,
    out: &Path,
    sc: Option<&NetworkScenario>,
    gamma: &[f64],
    capacity: Option<u32>,
    events: u64,
) -> Result<(), CliError> {
    let capacity = capacity
        .or(sc.map(|s| s.params().queue.capacity))
        .ok_or_else(|| CliError::Usage("--kind queue needs --capacity or --scenario".into()))?;
    let gammas: Vec<f64> = if gamma.is_empty() {
        sc.map(|s| s.params().queue.gamma_grid.iter().copied().filter(|&g| g > 0.0).collect())
            .unwrap_or_else(|| vec![0.3, 0.6, 0.9])
    } else {
        gamma.to_vec()
    };
    let mut rows = Vec::new();
    for (k, &g) in gammas.iter().enumerate() {
        let analytic = droneq::queue_metrics(g, capacity).map_err(|e| CliError::Validation(e.to_string()))?;
        // Unit order rate; the drone rate is then the reliability level.
        let sim = simkit::simulate_double_queue(1.0, g, capacity, events, seed.wrapping_add(k as u64))
            .map_err(CliError::runtime)?;
        let point = format!("gamma={g};M={capacity}");
        rows.push(SimRow::new(&point, "n_drones", &sim.n_drones, analytic.n_drones));
        rows.push(SimRow::new(&point, "n_orders", &sim.n_orders, analytic.n_orders));
        rows.push(SimRow::new(&point, "p_block", &sim.p_block, analytic.p_block));
    }
    finish_simulation(
        seed,
        out,
        rows,
        json!({"kind": "queue", "gamma": gammas, "capacity": capacity, "events": events}),
    )
}

fn finish_simulation(seed: u64, out: &Path, rows: Vec<SimRow>, config: serde_json::Value) -> Result<(), CliError> {
    output::create_dir(out)?;
    let path = out.join("simulation.csv");
    output::write_csv(&path, &rows)?;
    let mut m = Manifest::new("simulate", seed, config);
    m.outputs.push("simulation.csv".into());
    m.write(out)?;
    let missed = rows.iter().filter(|r| !r.covered).count();
    println!("wrote {} ({} of {} intervals cover the closed form)", path.display(), rows.len() - missed, rows.len());
    Ok(())
}

fn model_cache(seed: u64, args: &ModelArgs) -> ModelCache {
    let settings = TrainSettings {
        n_points: args.points,
        config: TrainConfig {
            hidden: args.hidden,
            learning_rate: args.learning_rate,
            epochs: args.epochs,
            batch_size: args.batch_size,
            seed,
            ..TrainConfig::default()
        },
    };
    ModelCache::new(&args.models, settings)
}

#[derive(Debug, Serialize)]
struct MetricRow {
    od: String,
    label: &'static str,
    #[serde(rename = "MAE")]
    mae: f64,
    #[serde(rename = "RMSE")]
    rmse: f64,
    #[serde(rename = "R2")]
    r2: f64,
}

fn train(seed: u64, out: &Path, args: &ScenarioArgs, model_args: &ModelArgs, lambda_scale: f64) -> Result<(), CliError> {
    if !(lambda_scale > 0.0 && lambda_scale.is_finite()) {
        return Err(CliError::Validation(format!("--lambda-scale must be positive, got {lambda_scale}")));
    }
    let sc = load(args)?;
    let mut cache = model_cache(seed, model_args);
    let models = cache.models_for(&sc, lambda_scale)?;
    let mut rows = Vec::new();
    for ((i, j), m) in &models {
        for (label, met) in ["theta1", "theta2"].into_iter().zip(m.metrics.iter()) {
            rows.push(MetricRow {
                od: format!("{i}-{j}"),
                label,
                mae: met.mae,
                rmse: met.rmse,
                r2: met.r2,
            });
        }
    }
    output::create_dir(out)?;
    let path = out.join("metrics.csv");
    output::write_csv(&path, &rows)?;
    let mut m = Manifest::new(
        "train",
        seed,
        json!({"scenario": scenario_config(args, &sc), "training": cache.settings(),
               "lambda_scale": lambda_scale}),
    );
    m.outputs.push("metrics.csv".into());
    m.cache = Some(json!(cache.stats()));
    m.write(out)?;
    let worst = rows.iter().map(|r| r.r2).fold(f64::INFINITY, f64::min);
    println!("{} surrogates, worst held-out R2 {worst}; wrote {}", models.len(), path.display());
    Ok(())
}

fn backend(args: &SolverArgs) -> Result<Box<dyn SolverBackend>, CliError> {
    match &args.backend {
        Some(name) => milp::backend_by_name(name).map_err(|e| CliError::Usage(e.to_string())),
        None => milp::default_backend().map_err(|e| CliError::Usage(e.to_string())),
    }
}

fn solve_options(seed: u64, args: &SolverArgs) -> Result<SolveOptions, CliError> {
    if !(args.mip_gap >= 0.0 && args.mip_gap.is_finite()) {
        return Err(CliError::Validation(format!("--mip-gap must be nonnegative, got {}", args.mip_gap)));
    }
    if let Some(t) = args.time_limit {
        if !(t > 0.0) {
            return Err(CliError::Validation(format!("--time-limit must be positive, got {t}")));
        }
    }
    Ok(SolveOptions {
        time_limit: args.time_limit,
        mip_gap: args.mip_gap,
        seed,
        ..SolveOptions::default()
    })
}

fn solver_config(backend: &dyn SolverBackend, opts: &SolveOptions) -> serde_json::Value {
    json!({"backend": backend.name(), "options": opts})
}

fn plan(
    seed: u64,
    out: &Path,
    args: &ScenarioArgs,
    model_args: &ModelArgs,
    solver: &SolverArgs,
    export_lp: bool,
) -> Result<(), CliError> {
    let sc = load(args)?;
    let be = backend(solver)?;
    let opts = solve_options(seed, solver)?;
    let mut cache = model_cache(seed, model_args);
    let models = cache.models_for(&sc, 1.0)?;
    let model = milp::build_model(&sc, &models, &BuildOptions::default()).map_err(CliError::runtime)?;
    output::create_dir(out)?;
    let mut outputs = Vec::new();
    if export_lp {
        milp::export_model(&model.model, &out.join("plan.lp")).map_err(CliError::runtime)?;
        outputs.push("plan.lp".to_string());
    }
    let solution = milp::solve(&model, be.as_ref(), &opts).map_err(CliError::runtime)?;
    let report = milp::post_check(&solution, &sc);
    output::write_text(&out.join("plan.json"), &(solution.to_json() + "\n"))?;
    output::write_csv(&out.join("summary.csv"), &[SummaryRow::new(1, "base".into(), &solution, &report)])?;
    outputs.extend(["plan.json".to_string(), "summary.csv".to_string()]);
    let mut m = Manifest::new(
        "plan",
        seed,
        json!({"scenario": scenario_config(args, &sc), "training": cache.settings(),
               "solver": solver_config(be.as_ref(), &opts)}),
    );
    m.outputs = outputs;
    m.cache = Some(json!(cache.stats()));
    m.write(out)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    println!(
        "{:?}: objective {}, launchpads {:?}, kiosks {:?}, couriers {}, drones {}",
        solution.status, solution.objective, solution.launchpads_built, solution.kiosks_built, solution.couriers,
        solution.drones
    );
    Ok(())
}

fn run_sweep(
    seed: u64,
    out: &Path,
    args: &ScenarioArgs,
    model_args: &ModelArgs,
    solver: &SolverArgs,
    axis: SweepAxis,
    cases: &str,
) -> Result<(), CliError> {
    let cases = sweep::parse_cases(cases, axis)?;
    let sc = load(args)?;
    let be = backend(solver)?;
    let opts = solve_options(seed, solver)?;
    let mut cache = model_cache(seed, model_args);
    let outcomes = sweep::run_sweep(&sc, axis, &cases, &mut cache, be.as_ref(), &opts)?;
    output::create_dir(out)?;
    let mut rows = Vec::new();
    let mut outputs = vec!["sweep.csv".to_string()];
    let mut per_case = Vec::new();
    for o in &outcomes {
        rows.push(SummaryRow::new(o.index, o.case.to_string(), &o.solution, &o.report));
        let name = format!("case_{:02}.json", o.index);
        output::write_text(&out.join(&name), &(o.solution.to_json() + "\n"))?;
        per_case.push(json!({"case": o.index, "label": o.case.to_string(), "cache": o.cache}));
        outputs.push(name);
    }
    output::write_csv(&out.join("sweep.csv"), &rows)?;
    let mut m = Manifest::new(
        "sweep",
        seed,
        json!({"scenario": scenario_config(args, &sc), "axis": axis, "cases": cases,
               "training": cache.settings(), "solver": solver_config(be.as_ref(), &opts)}),
    );
    m.outputs = outputs;
    m.cache = Some(json!({"total": cache.stats(), "per_case": per_case}));
    m.write(out)?;
    for r in &rows {
        println!(
            "case {} ({}): {} sites, objective {}, couriers {}",
            r.case, r.label, r.sites_built, r.objective, r.couriers
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReportSummary {
    solver_objective: f64,
    recomputed_objective: f64,
    objective_gap: f64,
    exact_objective: f64,
    max_rel_error: f64,
    couriers_plan: f64,
    couriers_exact: f64,
    avg_delivery_time: f64,
    avg_bundling_prob: f64,
}

fn report(seed: u64, out: &Path, args: &ScenarioArgs, plan_path: &Path, tolerance: f64) -> Result<(), CliError> {
    let sc = load(args)?;
    let text = std::fs::read_to_string(plan_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", plan_path.display())))?;
    let solution = PlanSolution::from_json(&text).map_err(|e| CliError::Validation(e.to_string()))?;
    let rep = milp::post_check(&solution, &sc);
    let summary = ReportSummary {
        solver_objective: solution.objective,
        recomputed_objective: rep.accounting_objective,
        objective_gap: (rep.accounting_objective - solution.objective).abs(),
        exact_objective: rep.exact_objective,
        max_rel_error: rep.max_rel_error,
        couriers_plan: solution.couriers,
        couriers_exact: rep.couriers_exact,
        avg_delivery_time: rep.avg_delivery_time,
        avg_bundling_prob: rep.avg_bundling_prob,
    };
    output::create_dir(out)?;
    let json_text = serde_json::to_string_pretty(&rep).expect("report serializes");
    output::write_text(&out.join("report.json"), &(json_text + "\n"))?;
    output::write_csv(&out.join("report.csv"), &[&summary])?;
    let mut m = Manifest::new(
        "report",
        seed,
        json!({"scenario": scenario_config(args, &sc), "plan": plan_path.display().to_string(),
               "plan_sha256": output::config_hash(&text), "tolerance": tolerance}),
    );
    m.outputs = vec!["report.json".into(), "report.csv".into()];
    m.write(out)?;
    println!(
        "solver objective {}, recomputed {}, gap {:e}; exact-formula objective {}, max relative surrogate error {}",
        summary.solver_objective,
        summary.recomputed_objective,
        summary.objective_gap,
        summary.exact_objective,
        summary.max_rel_error
    );
    if !(summary.objective_gap <= tolerance) {
        return Err(CliError::Validation(format!(
            "recomputed objective differs from the solver's by {:e} (tolerance {tolerance:e})",
            summary.objective_gap
        )));
    }
    Ok(())
}
