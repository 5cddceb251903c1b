use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use empc_core::bridge::{run_bridge_loop, serve_plant, BridgeClient};
use empc_core::control::{
    compare_controllers, run_closed_loop, write_comparison_csv, ComparisonRow, ConstantInput, Controller,
    ExplicitMpc, LoopSettings,
};
use empc_core::nn::{
    certify_convexity, fit_step_model, objective_surface, Architecture, GridAxis, Horizon, MinMaxScaler,
    SampleTable,
};
use empc_core::plant::generate_openloop_dataset;
use empc_core::pwl::{build_region_tree, RegionTree, SurrogateSet};
use empc_core::{Error, Result};
use log::info;

use crate::config::{arch_name, parse_stack, RunConfig, Stack};

/// Outcome of a subcommand that ran to completion.
pub enum Done {
    Ok,
    /// At least one closed-loop run halted.
    Halted,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Fails with a config error naming the first missing input.
pub fn require(paths: &[PathBuf]) -> Result<()> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(Error::InvalidConfig(format!("missing input {}", p.display()))),
        None => Ok(()),
    }
}

pub fn dataset_path(cfg: &RunConfig, step: usize, absolute: bool) -> PathBuf {
    let suffix = if absolute { "_abs" } else { "" };
    cfg.paths.data.join(format!("openloop_k{step}{suffix}.csv"))
}

pub fn horizon_path(cfg: &RunConfig, a: Architecture) -> PathBuf {
    cfg.paths.models.join(format!("{}.json", arch_name(a)))
}

pub fn tree_path(cfg: &RunConfig, a: Architecture) -> PathBuf {
    cfg.paths.regions.join(format!("{}_tree.json", arch_name(a)))
}

/// Inputs each subcommand reads, checked before anything runs.
pub fn inputs(cfg: &RunConfig, command: &str) -> Vec<PathBuf> {
    let stacks = |names: &[String]| -> Vec<PathBuf> {
        names
            .iter()
            .filter_map(|s| match parse_stack(s) {
                Ok(Stack::Mpc(a)) => Some([horizon_path(cfg, a), tree_path(cfg, a)]),
                _ => None,
            })
            .flatten()
            .collect()
    };
    match command {
        "train" => (1..=cfg.mpc.horizon).map(|k| dataset_path(cfg, k, false)).collect(),
        "build-regions" => cfg.model.architectures.iter().map(|a| horizon_path(cfg, *a)).collect(),
        "simulate" | "bridge-run" => stacks(std::slice::from_ref(&cfg.sim.controller)),
        "compare" => stacks(&cfg.sim.stacks),
        "surface" => vec![horizon_path(cfg, cfg.surface.architecture)],
        _ => Vec::new(),
    }
}

fn scalers(cfg: &RunConfig) -> Result<(MinMaxScaler, MinMaxScaler)> {
    let x_box = cfg.x_box()?.scaled_by(cfg.data.scaler_margin);
    Ok((MinMaxScaler::from_box(&x_box), MinMaxScaler::from_box(&cfg.mpc.u_box()?)))
}

pub fn gen_data(cfg: &RunConfig) -> Result<Done> {
    let plant = cfg.plant.build();
    let tables = generate_openloop_dataset(plant.as_ref(), &cfg.openloop()?)?;
    create_dir(&cfg.paths.data)?;
    for t in &tables {
        t.save_csv(&dataset_path(cfg, t.step, false))?;
        t.to_absolute().save_csv(&dataset_path(cfg, t.step, true))?;
        info!("step {}: {} samples", t.step, t.len());
    }
    println!("wrote {} datasets to {}", 2 * tables.len(), cfg.paths.data.display());
    Ok(Done::Ok)
}

pub fn train(cfg: &RunConfig) -> Result<Done> {
    let tables: Vec<SampleTable> = (1..=cfg.mpc.horizon)
        .map(|k| SampleTable::load_csv(&dataset_path(cfg, k, false)))
        .collect::<Result<_>>()?;
    let (state_scaler, input_scaler) = scalers(cfg)?;
    let domain = cfg.x_box()?.concat(&cfg.mpc.u_box()?.repeat(cfg.mpc.horizon));
    create_dir(&cfg.paths.models)?;
    let mut summary = csv::Writer::from_writer(create(&cfg.paths.models.join("train_summary.csv"))?);
    summary.write_record([
        "architecture",
        "step",
        "samples",
        "test_mse",
        "final_train_mse",
        "convex_pass",
        "worst_violation",
    ])?;
    for &a in &cfg.model.architectures {
        let spec = cfg.model_spec(a);
        let mut models = Vec::new();
        for t in &tables {
            let fit = fit_step_model(t, &spec, &state_scaler, &input_scaler)?;
            let loss = cfg.paths.models.join(format!("{}_k{}_loss.csv", arch_name(a), t.step));
            fit.report.write_csv(create(&loss)?)?;
            let width = fit.model.network.input_dim;
            let scaled = fit.model.input_scaler.forward_box(&domain.project(0, width));
            let cert = certify_convexity(&fit.model.network, &scaled, cfg.model.convexity_pairs, 1e-6, t.step as u64)?;
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            summary.write_record([
                arch_name(a).to_owned(),
                t.step.to_string(),
                t.len().to_string(),
                opt(fit.test_mse),
                opt(fit.report.final_loss()),
                cert.pass.to_string(),
                cert.worst_violation.to_string(),
            ])?;
            println!(
                "{} step {}: test mse {:.3e}, convex {} (worst {:.2e})",
                arch_name(a),
                t.step,
                fit.test_mse.unwrap_or(f64::NAN),
                cert.pass,
                cert.worst_violation
            );
            models.push(fit.model);
        }
        Horizon::new(models)?.save(&horizon_path(cfg, a))?;
    }
    summary.flush().map_err(|e| Error::io(&cfg.paths.models, e))?;
    Ok(Done::Ok)
}

pub fn build_regions(cfg: &RunConfig) -> Result<Done> {
    create_dir(&cfg.paths.regions)?;
    for &a in &cfg.model.architectures {
        let horizon = load_horizon(cfg, a)?;
        let root = horizon
            .joint_scaler()
            .forward_box(&cfg.x_box()?.concat(&cfg.mpc.u_box()?.repeat(cfg.mpc.horizon)));
        let tree = build_region_tree(&SurrogateSet::from_horizon(&horizon), &root, &cfg.approx)?;
        tree.save(&tree_path(cfg, a))?;
        let stats = cfg.paths.regions.join(format!("{}_stats.csv", arch_name(a)));
        tree.write_stats_csv(create(&stats)?)?;
        let saturated = tree.regions.iter().filter(|r| r.saturated).count();
        println!(
            "{}: {} regions ({} saturated), depth {}",
            arch_name(a),
            tree.len(),
            saturated,
            tree.max_depth()
        );
    }
    Ok(Done::Ok)
}

fn load_horizon(cfg: &RunConfig, a: Architecture) -> Result<Horizon> {
    let h = Horizon::load(&horizon_path(cfg, a))?;
    if h.len() != cfg.mpc.horizon {
        return Err(Error::InvalidConfig(format!(
            "{} holds {} step models but mpc.horizon is {}",
            horizon_path(cfg, a).display(),
            h.len(),
            cfg.mpc.horizon
        )));
    }
    Ok(h)
}

fn controller(cfg: &RunConfig, name: &str) -> Result<Box<dyn Controller>> {
    Ok(match parse_stack(name)? {
        Stack::OpenLoop => Box::new(ConstantInput::zero(cfg.mpc.u_lo.len())),
        Stack::Mpc(a) => {
            let horizon = load_horizon(cfg, a)?;
            let tree = RegionTree::load(&tree_path(cfg, a))?;
            Box::new(ExplicitMpc::new(name, horizon, tree, cfg.mpc.clone())?)
        }
    })
}

fn settings(cfg: &RunConfig) -> Result<LoopSettings> {
    let halt_box = if cfg.sim.halt_factor > 0.0 {
        Some(cfg.x_box()?.scaled_by(cfg.sim.halt_factor))
    } else {
        None
    };
    Ok(LoopSettings {
        dt: cfg.mpc.dt,
        steps: cfg.mpc.steps,
        halt_box,
    })
}

fn row_line(r: &ComparisonRow) -> String {
    format!(
        "{} from {:?}: converged {}, steps to band {}, IAE {:.4}, max solve {:.3} s{}",
        r.controller,
        r.x0,
        r.converged,
        r.steps_to_band.map_or("-".into(), |s| s.to_string()),
        r.iae,
        r.max_solve_time,
        if r.halted { ", halted" } else { "" }
    )
}

pub fn simulate(cfg: &RunConfig) -> Result<Done> {
    let plant = cfg.plant.build();
    let mut c = controller(cfg, &cfg.sim.controller)?;
    let settings = settings(cfg)?;
    let dir = cfg.out_dir.join("sim");
    create_dir(&dir)?;
    let scale = cfg.error_scale();
    let mut rows = Vec::new();
    for (i, x0) in cfg.sim.x0.iter().enumerate() {
        let log = run_closed_loop(plant.as_ref(), c.as_mut(), x0, &settings)?;
        log.write_csv(create(&dir.join(format!("{}_x0_{}.csv", cfg.sim.controller, i + 1)))?, cfg.sim.timing)?;
        let row = ComparisonRow::from_log(&log, x0, settings.dt, &cfg.sim.setpoint, &scale, cfg.sim.band);
        println!("{}", row_line(&row));
        rows.push(row);
    }
    write_comparison_csv(&rows, create(&dir.join(format!("{}_summary.csv", cfg.sim.controller)))?)?;
    Ok(if rows.iter().any(|r| r.halted) { Done::Halted } else { Done::Ok })
}

pub fn compare(cfg: &RunConfig) -> Result<Done> {
    let plant = cfg.plant.build();
    let mut stacks = cfg.sim.stacks.iter().map(|s| controller(cfg, s)).collect::<Result<Vec<_>>>()?;
    let rows = compare_controllers(
        plant.as_ref(),
        &mut stacks,
        &cfg.sim.x0,
        &settings(cfg)?,
        &cfg.sim.setpoint,
        &cfg.error_scale(),
        cfg.sim.band,
    )?;
    let dir = cfg.out_dir.join("compare");
    create_dir(&dir)?;
    write_comparison_csv(&rows, create(&dir.join("comparison.csv"))?)?;
    for r in &rows {
        println!("{}", row_line(r));
    }
    Ok(Done::Ok)
}

pub fn serve(cfg: &RunConfig, endpoint: &str) -> Result<Done> {
    let plant = cfg.plant.build();
    let listener = TcpListener::bind(endpoint).map_err(|e| Error::Transport {
        context: format!("bind {endpoint}"),
        source: e,
    })?;
    let local = listener.local_addr().map_err(|e| Error::Transport {
        context: "local address".into(),
        source: e,
    })?;
    // Scripts wait for this line before connecting.
    println!("listening on {local}");
    let summary = serve_plant(plant.as_ref(), &listener, &cfg.bridge.x0)?;
    println!(
        "served {} sessions, {} requests, {} steps",
        summary.sessions, summary.requests, summary.steps
    );
    Ok(Done::Ok)
}

pub fn bridge_run(cfg: &RunConfig, endpoint: &str) -> Result<Done> {
    let mut c = controller(cfg, &cfg.sim.controller)?;
    let settings = settings(cfg)?;
    let dir = cfg.out_dir.join("bridge");
    create_dir(&dir)?;
    let mut client = BridgeClient::connect(endpoint, Duration::from_secs_f64(cfg.bridge.timeout_secs))?;
    info!("connected to {} plant at {endpoint}", client.plant());
    let scale = cfg.error_scale();
    let mut halted = false;
    for (i, x0) in cfg.sim.x0.iter().enumerate() {
        let run = run_bridge_loop(&mut client, c.as_mut(), Some(x0), &settings);
        run.log
            .write_csv(create(&dir.join(format!("{}_x0_{}.csv", cfg.sim.controller, i + 1)))?, cfg.sim.timing)?;
        if let Some(e) = run.error {
            return Err(e);
        }
        let row = ComparisonRow::from_log(&run.log, x0, settings.dt, &cfg.sim.setpoint, &scale, cfg.sim.band);
        println!("{}", row_line(&row));
        halted |= row.halted;
    }
    client.bye()?;
    Ok(if halted { Done::Halted } else { Done::Ok })
}

pub fn surface(cfg: &RunConfig) -> Result<Done> {
    let a = cfg.surface.architecture;
    let horizon = load_horizon(cfg, a)?;
    // The surface is over the first input only, so only the step-1 model applies.
    let first = Horizon::new(vec![horizon.steps[0].clone()])?;
    let axes: Vec<GridAxis> = cfg
        .mpc
        .u_lo
        .iter()
        .zip(&cfg.mpc.u_hi)
        .map(|(&lo, &hi)| GridAxis {
            lo,
            hi,
            points: cfg.surface.points,
        })
        .collect();
    let s = objective_surface(&first, &cfg.surface.x, &axes, &cfg.mpc.weights()?)?;
    let dir = cfg.out_dir.join("surface");
    create_dir(&dir)?;
    s.write_csv(create(&dir.join(format!("{}_surface.csv", arch_name(a))))?)?;
    println!(
        "{} surface: {} points, worst grid midpoint violation {:.3e}",
        arch_name(a),
        s.values.len(),
        s.worst_midpoint_violation()
    );
    Ok(Done::Ok)
}
