use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use tante::data::{generate_advection2d, generate_heat2d, heat2d_regimes, AdvectionParams, Dataset, HeatParams, Split};
use tante::eval::{dataset_windows, evaluate_rollouts, rollout as run_rollout, RolloutMode};
use tante::gradcheck::{gradcheck_layers, gradcheck_model, tiny_gradcheck_config, GradcheckOptions, GradcheckRow};
use tante::metrics::radius_report;
use tante::model::{load_checkpoint, Tante};
use tante::training::train as train_model;

use crate::{AnalyzeArgs, CliError, EvalArgs, GenerateArgs, GradcheckArgs, Generator, RolloutArgs, RunArgs, RunConfig, TrainArgs};

pub const CONFIG_FILE: &str = "config.txt";

pub fn generate_data(a: &GenerateArgs) -> Result<(), CliError> {
    let mut params = BTreeMap::new();
    params.insert("trajectories".to_string(), json!(a.trajectories));
    params.insert("modes".to_string(), json!(a.modes));
    params.insert("seed".to_string(), json!(a.seed));
    let (name, trajectories, labels) = match a.generator {
        Generator::Heat2d => {
            let p = HeatParams {
                height: a.height,
                width: a.width,
                channels: a.channels,
                kappa: a.kappa,
                modes: a.modes,
                frames: a.frames,
                dt: a.dt,
                seed: a.seed,
            };
            if a.regimes.is_empty() {
                params.insert("kappa".to_string(), json!(a.kappa));
                let trajs = generate_heat2d(&p, a.trajectories)?;
                let labels = vec![format!("kappa={}", a.kappa); trajs.len()];
                ("heat2d", trajs, labels)
            } else {
                let regimes = parse_regimes(&a.regimes)?;
                let per_regime = a.trajectories / regimes.len();
                if per_regime == 0 {
                    return Err(CliError::Usage(format!("{} trajectories cannot cover {} regimes", a.trajectories, regimes.len())));
                }
                params.insert("regimes".to_string(), json!(regimes));
                let (trajs, labels) = heat2d_regimes(&p, &regimes, per_regime)?;
                ("heat2d", trajs, labels)
            }
        }
        Generator::Advection2d => {
            let velocity = (a.velocity[0], a.velocity[1]);
            params.insert("velocity".to_string(), json!([velocity.0, velocity.1]));
            let p = AdvectionParams {
                height: a.height,
                width: a.width,
                channels: a.channels,
                velocity,
                modes: a.modes,
                frames: a.frames,
                dt: a.dt,
                seed: a.seed,
            };
            let trajs = generate_advection2d(&p, a.trajectories);
            let labels = vec!["advection2d".to_string(); trajs.len()];
            ("advection2d", trajs, labels)
        }
    };
    let ds = Dataset::new(name, params, a.dt, trajectories, labels)?;
    ds.write(&a.out)?;
    let m = &ds.manifest;
    println!(
        "wrote {} trajectories ({} frames of {}x{}x{}) to {}; train/val/test = {}/{}/{}",
        m.trajectories,
        m.frames,
        m.height,
        m.width,
        m.channels,
        a.out.display(),
        ds.indices(Split::Train).len(),
        ds.indices(Split::Val).len(),
        ds.indices(Split::Test).len(),
    );
    Ok(())
}

fn parse_regimes(items: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    items
        .iter()
        .map(|item| {
            let (label, kappa) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("regime `{item}` is not label=kappa")))?;
            let kappa = kappa
                .trim()
                .parse()
                .map_err(|e| CliError::Usage(format!("regime `{item}`: {e}")))?;
            Ok((label.trim().to_string(), kappa))
        })
        .collect()
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let text = a.config.as_ref().map(fs::read_to_string).transpose()?;
    let mut cfg = RunConfig::resolve(text.as_deref(), &a.overrides)?;
    if let Some(d) = &a.data {
        cfg.data_dir = Some(d.clone());
    }
    let data_dir = cfg
        .data_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set data_dir".into()))?;
    cfg.train.validate()?;
    let ds = Dataset::read(&data_dir)?;
    let m = &ds.manifest;
    let model_cfg = cfg.model_config(m.height, m.width, m.channels);
    model_cfg.validate()?;
    let (windows, skipped) = dataset_windows(&ds, Split::Train, cfg.window, cfg.train.horizon, 1)?;
    if skipped > 0 {
        eprintln!("{skipped} training trajectories too short for {}+{} frames", cfg.window, cfg.train.horizon);
    }
    for sub in ["checkpoints", "metrics", "traces"] {
        fs::create_dir_all(a.run.join(sub))?;
    }
    fs::write(a.run.join(CONFIG_FILE), cfg.render())?;
    let mut model = Tante::<f32>::new(model_cfg, cfg.model_seed)?;
    println!("training {} parameters on {} windows for {} iterations", model.params.numel(), windows.len(), cfg.train.iterations);
    let every = a.log_every;
    let report = train_model(&mut model, &windows, &cfg.train, Some(&a.run), |r| {
        if every > 0 && r.step % every == 0 {
            eprintln!("step {:>7}  loss {:.6}  mse {:.6}  reg {:.5}  lr {:.3e}  radius {:.3}", r.step, r.loss, r.mse, r.reg, r.lr, r.mean_radius);
        }
    })?;
    if !report.skipped.is_empty() {
        eprintln!("{} optimizer steps skipped on non-finite gradients", report.skipped.len());
    }
    if let Some(last) = report.records.last() {
        println!("final loss {:.6} at step {}", last.loss, last.step);
    }
    println!("run written to {}", a.run.display());
    Ok(())
}

struct LoadedRun {
    config: RunConfig,
    dataset: Dataset,
    model: Tante<f32>,
    split: Split,
}

fn latest_checkpoint(run: &Path) -> Result<PathBuf, CliError> {
    let dir = run.join("checkpoints");
    let mut stems: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::Failed(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    stems.pop().ok_or_else(|| CliError::Failed(format!("no checkpoints in {}", dir.display())))
}

fn load_run(a: &RunArgs) -> Result<LoadedRun, CliError> {
    let config_path = a.run.join(CONFIG_FILE);
    let text = fs::read_to_string(&config_path)
        .map_err(|e| CliError::Failed(format!("cannot read {}: {e}", config_path.display())))?;
    let config = RunConfig::parse(&text)?;
    let data_dir = a
        .data
        .clone()
        .or_else(|| config.data_dir.clone())
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set data_dir in the run config".into()))?;
    let split: Split = a.split.parse().map_err(|e: tante::Error| CliError::Usage(e.to_string()))?;
    let dataset = Dataset::read(&data_dir)?;
    let stem = match &a.checkpoint {
        Some(s) => s.clone(),
        None => latest_checkpoint(&a.run)?,
    };
    let (model, step) = load_checkpoint::<f32>(&stem)?;
    eprintln!("loaded {} (step {step})", stem.display());
    Ok(LoadedRun { config, dataset, model, split })
}

fn rollout_mode(mode: &str, model: &Tante<f32>) -> Result<RolloutMode, CliError> {
    if mode == "auto" {
        return Ok(if model.config.is_adaptive() { RolloutMode::Adaptive } else { RolloutMode::Fixed });
    }
    mode.parse().map_err(|e: tante::Error| CliError::Usage(e.to_string()))
}

fn mode_name(mode: RolloutMode) -> &'static str {
    match mode {
        RolloutMode::Adaptive => "adaptive",
        RolloutMode::Fixed => "fixed",
    }
}

pub fn evaluate(a: &EvalArgs) -> Result<(), CliError> {
    let run = load_run(&a.run)?;
    let mode = rollout_mode(&a.mode, &run.model)?;
    let metrics = a.run.run.join("metrics");
    fs::create_dir_all(&metrics)?;
    for &steps in &a.steps {
        let (windows, _) = dataset_windows(&run.dataset, run.split, run.config.window, steps, a.stride)?;
        let eval = evaluate_rollouts(&run.model, &windows, &run.dataset.manifest.stats, steps, mode)?;
        let r = &eval.report;
        let stem = format!("eval_{}_{}_T{steps}", run.split, mode_name(mode));
        fs::write(metrics.join(format!("{stem}.json")), serde_json::to_string_pretty(r)?)?;
        let mut curve = String::from("step,rel_l2,rel_l2_std\n");
        for (i, (m, s)) in r.per_step_rel_l2.iter().zip(&r.per_step_rel_l2_std).enumerate() {
            let _ = writeln!(curve, "{},{m},{s}", i + 1);
        }
        fs::write(metrics.join(format!("{stem}_per_step.csv")), curve)?;
        println!(
            "T'={steps}: {} windows  rel L2 {:.4} ± {:.4}  MSE {:.3e}  mean calls {:.2}",
            r.trajectories, r.rel_l2, r.rel_l2_std, r.mse, r.mean_calls
        );
    }
    Ok(())
}

pub fn rollout(a: &RolloutArgs) -> Result<(), CliError> {
    let run = load_run(&a.run)?;
    let mode = rollout_mode(&a.mode, &run.model)?;
    let (windows, _) = dataset_windows(&run.dataset, run.split, run.config.window, a.steps, a.stride)?;
    let w = windows
        .get(a.window)
        .ok_or_else(|| CliError::Usage(format!("window {} out of range ({} windows)", a.window, windows.len())))?;
    let mut trace = run_rollout(&run.model, w, a.steps, mode)?;
    trace.emitted.iter_mut().for_each(|f| run.dataset.manifest.stats.denormalize(f));
    let traces = a.run.run.join("traces");
    fs::create_dir_all(&traces)?;
    let stem = format!("rollout_{}_traj{}_start{}_T{}", run.split, w.trajectory, w.start, a.steps);
    trace.write_csv(&traces.join(format!("{stem}.csv")))?;
    trace.write_frames(&traces.join(format!("{stem}.f32")))?;
    println!(
        "trajectory {} from frame {}: {} targets in {} calls -> {}",
        w.trajectory,
        w.start,
        a.steps,
        trace.calls(),
        traces.join(&stem).display()
    );
    Ok(())
}

pub fn analyze_radius(a: &AnalyzeArgs) -> Result<(), CliError> {
    let run = load_run(&a.run)?;
    if !run.model.config.is_adaptive() {
        return Err(CliError::Failed("model has no radius head".into()));
    }
    let (windows, _) = dataset_windows(&run.dataset, run.split, run.config.window, 1, a.stride)?;
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for w in &windows {
        let radius = run.model.predict(&w.input)?.radius.expect("adaptive model has a radius");
        let label = &run.dataset.manifest.regimes[w.trajectory];
        match groups.iter_mut().find(|(l, _)| l == label) {
            Some((_, v)) => v.push(radius),
            None => groups.push((label.clone(), vec![radius])),
        }
    }
    let report = radius_report(&groups);
    let metrics = a.run.run.join("metrics");
    fs::create_dir_all(&metrics)?;
    fs::write(metrics.join(format!("radius_summary_{}.csv", run.split)), report.summary_csv())?;
    fs::write(metrics.join(format!("radius_tests_{}.csv", run.split)), report.tests_csv())?;
    print!("{}", report.summary_csv());
    print!("{}", report.tests_csv());
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}

pub fn format_rows(rows: &[GradcheckRow], tol: f64) -> String {
    let mut out = format!("{:<28} {:<44} {:>8} {:>12} {:>12}  status\n", "layer", "parameter", "checked", "max_entry", "tensor");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<28} {:<44} {:>8} {:>12.3e} {:>12.3e}  {}",
            r.layer,
            r.param,
            r.checked,
            r.max_rel_error,
            r.norm_rel_error,
            if r.passes(tol) { "ok" } else { "FAIL" }
        );
    }
    out
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let opts = GradcheckOptions { seed: a.seed, ..Default::default() };
    let mut rows = gradcheck_layers(&opts)?;
    if !a.layers_only {
        let model_opts = GradcheckOptions { max_entries: a.max_entries, ..opts };
        rows.extend(gradcheck_model(&tiny_gradcheck_config(), &model_opts)?);
    }
    print!("{}", format_rows(&rows, a.tol));
    let failed = rows.iter().filter(|r| !r.passes(a.tol)).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} parameter tensors exceed {:e}", rows.len(), a.tol)));
    }
    println!("all {} parameter tensors within {:e}", rows.len(), a.tol);
    Ok(())
}
