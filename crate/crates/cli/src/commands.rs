use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;

use lossmanifold::format::{AnalyzePayload, ErrorRecord, FitPayload, TrainPayload, WalkPayload};
use lossmanifold::{
    embed_deep, exact_fit_shallow, hessian_spectrum_at, init_params, jacobian_rank, perturb_labels, residuals,
    train_gd, walk_manifold, Dataset, DatasetFile, ExperimentConfig, MlpSpec, ParamVector, ParamsFile, Payload, Report,
};

use crate::args::{Command, Common};
use crate::error::{CliError, CliResult};
use crate::table;

/// What a successful invocation prints and which exit code it ends with.
pub struct Outcome {
    pub stdout: String,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, failure: None }
    }
}

pub fn run(command: Command) -> CliResult<Outcome> {
    match command {
        Command::GenData { common } => gen_data(&common),
        Command::FitExact { common, data, perturb_eps } => fit_exact(&common, &data, perturb_eps),
        Command::Train { common, data } => train(&common, &data),
        Command::Analyze { common, data, params } => analyze(&common, &data, &params),
        Command::Walk { common, data, params } => walk(&common, &data, &params),
        Command::Report { out, plain, reports } => table::report(&reports, out.as_deref(), plain),
    }
}

pub fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::Usage {
        code: "config",
        message: format!("{}: {}", common.config.display(), e.message()),
    })?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage { code: "parse", message: format!("{}: {e}", path.display()) })
}

/// Creates `dir/name`, refusing to overwrite.
pub fn write_new(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let mut file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| CliError::io(&path, e))?;
    file.write_all(contents.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

/// Fails early if an output already exists, so nothing is computed in vain.
fn ensure_fresh(dir: &Path, names: &[&str]) -> CliResult<()> {
    for name in names {
        let path = dir.join(name);
        if path.exists() {
            return Err(CliError::io(&path, std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output exists")));
        }
    }
    Ok(())
}

fn load_dataset(path: &Path, spec: &MlpSpec) -> CliResult<Dataset> {
    let file: DatasetFile = read_json(path)?;
    file.check()?;
    let data = file.dataset;
    if data.input_dim() != spec.input_dim || data.output_dim() != spec.output_dim {
        return Err(CliError::usage(format!(
            "{}: dataset is {}->{} but the network is {}->{}",
            path.display(),
            data.input_dim(),
            data.output_dim(),
            spec.input_dim,
            spec.output_dim
        )));
    }
    Ok(data)
}

fn load_params(path: &Path, spec: &MlpSpec) -> CliResult<ParamVector> {
    let file: ParamsFile = read_json(path)?;
    file.check()?;
    if &file.spec != spec {
        return Err(CliError::usage(format!(
            "{}: parameter file architecture differs from the config",
            path.display()
        )));
    }
    Ok(file.params)
}

fn finish(mut report: Report, started: Instant, out: &Path) -> CliResult<PathBuf> {
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    write_new(out, "report.json", &to_json(&report))
}

fn error_record(e: &CliError) -> ErrorRecord {
    ErrorRecord { code: e.code().to_string(), message: e.to_string() }
}

fn gen_data(common: &Common) -> CliResult<Outcome> {
    let cfg = load_config(common)?;
    ensure_fresh(&common.out, &["dataset.json"])?;
    let spec = cfg.network.spec()?;
    let data = Dataset::synthetic(&spec, cfg.data.points, cfg.data.generator, cfg.seed)?;
    let file = DatasetFile::new(data, cfg.seed, cfg.data.generator);
    let path = write_new(&common.out, "dataset.json", &to_json(&file))?;
    Ok(Outcome::ok(format!("wrote {}\n", path.display())))
}

fn fit_exact(common: &Common, data_path: &Path, perturb_eps: Option<f64>) -> CliResult<Outcome> {
    let started = Instant::now();
    let cfg = load_config(common)?;
    let spec = cfg.network.spec()?;
    let mut data = load_dataset(data_path, &spec)?;
    let needed = spec.output_dim * data.len();
    let last = *spec.hidden_widths.last().expect("validated spec has a hidden layer");
    if last < needed {
        return Err(CliError::Usage {
            code: "too-narrow",
            message: format!(
                "last hidden layer has {last} units, an exact fit of {needed} targets needs at least {needed}"
            ),
        });
    }
    let eps = perturb_eps.unwrap_or(cfg.fit.perturb_eps);
    if eps < 0.0 || !eps.is_finite() {
        return Err(CliError::usage("perturbation radius must be finite and >= 0"));
    }
    let mut outputs = vec!["params.json", "report.json"];
    if eps > 0.0 {
        outputs.push("dataset.json");
    }
    ensure_fresh(&common.out, &outputs)?;
    if eps > 0.0 {
        data = perturb_labels(&data, eps, cfg.seed)?;
    }

    let opts = cfg.fit_options();
    let mut report = Report::new("fit-exact", cfg.clone());
    let fitted = if spec.depth() == 1 {
        exact_fit_shallow(&data, last, spec.activation, &opts).map(|cert| {
            let payload = FitPayload::from_certificate(&cert, eps);
            (cert.spec, cert.params, payload)
        })
    } else {
        exact_fit_shallow(&data, needed, spec.activation, &opts)
            .and_then(|cert| embed_deep(&cert, &data, &spec.hidden_widths, &opts))
            .and_then(|deep| {
                let mut payload = FitPayload::from_certificate(&deep.last_layer, eps);
                let r = residuals(&deep.spec, &deep.params, &data)?;
                payload.n = deep.spec.param_count();
                payload.residuals =
                    r.chunks(spec.output_dim).map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
                payload.max_residual = deep.max_residual;
                Ok((deep.spec, deep.params, payload))
            })
    };

    let mut written = Vec::new();
    if eps > 0.0 {
        let file = DatasetFile::new(data.clone(), cfg.seed, cfg.data.generator);
        written.push(write_new(&common.out, "dataset.json", &to_json(&file))?);
    }
    let failure = match fitted {
        Ok((fit_spec, params, payload)) => {
            let file = ParamsFile::new(fit_spec, params, cfg.seed);
            written.push(write_new(&common.out, "params.json", &to_json(&file))?);
            let status = if payload.passed() {
                None
            } else {
                Some(CliError::Numerical {
                    code: "certificate",
                    message: format!("residual {:e} above tolerance {:e}", payload.max_residual, payload.tolerance),
                })
            };
            report.payload = Some(Payload::FitExact(payload));
            status
        }
        Err(e) => Some(CliError::from(e)),
    };
    if let Some(e) = &failure {
        report.error = Some(error_record(e));
    }
    written.push(finish(report, started, &common.out)?);
    Ok(Outcome { stdout: wrote(&written), failure })
}

fn train(common: &Common, data_path: &Path) -> CliResult<Outcome> {
    let started = Instant::now();
    let cfg = load_config(common)?;
    let spec = cfg.network.spec()?;
    let data = load_dataset(data_path, &spec)?;
    ensure_fresh(&common.out, &["params.json", "report.json"])?;
    let theta0 = init_params(&spec, cfg.seed, cfg.train.init_scale)?;
    let mut report = Report::new("train", cfg.clone());
    let mut written = Vec::new();
    let failure = match train_gd(&spec, &theta0, &data, cfg.train_options()) {
        Ok(outcome) => {
            report.payload = Some(Payload::Train(TrainPayload {
                n: spec.param_count(),
                d: data.len(),
                outputs: spec.output_dim,
                lr: cfg.train.lr,
                max_iters: cfg.train.max_iters,
                target_loss: cfg.train.target_loss,
                init_scale: cfg.train.init_scale,
                converged: outcome.converged,
                iterations: outcome.iterations,
                final_loss: outcome.final_loss(),
                trace: outcome.trace.clone(),
            }));
            let file = ParamsFile::new(spec.clone(), outcome.theta, cfg.seed);
            written.push(write_new(&common.out, "params.json", &to_json(&file))?);
            None
        }
        Err(e) => Some(CliError::from(e)),
    };
    if let Some(e) = &failure {
        report.error = Some(error_record(e));
    }
    written.push(finish(report, started, &common.out)?);
    Ok(Outcome { stdout: wrote(&written), failure })
}

fn analyze(common: &Common, data_path: &Path, params_path: &Path) -> CliResult<Outcome> {
    let started = Instant::now();
    let cfg = load_config(common)?;
    let spec = cfg.network.spec()?;
    let data = load_dataset(data_path, &spec)?;
    let theta = load_params(params_path, &spec)?;
    ensure_fresh(&common.out, &["report.json"])?;

    let spectrum = hessian_spectrum_at(&spec, &theta, &data)?;
    let rank = jacobian_rank(&spec, &theta, &data, cfg.tolerances.rank)?;
    let on_manifold = spectrum.loss <= cfg.tolerances.zero_loss;
    let payload = AnalyzePayload {
        n: spectrum.n,
        d: spectrum.d,
        outputs: spectrum.outputs,
        loss: spectrum.loss,
        zero_loss_gate: cfg.tolerances.zero_loss,
        rank_tol: cfg.tolerances.rank,
        on_manifold,
        jacobian_rank: rank,
        manifold_dimension: on_manifold.then(|| spectrum.n - rank),
        expected: spectrum.expected(),
        spectrum,
    };
    let status = if !on_manifold {
        "not on M"
    } else if payload.passed() {
        "PASS"
    } else {
        "FAIL"
    };
    let fd = payload.spectrum.finite_difference.counts;
    let gn = payload.spectrum.gauss_newton.counts;
    let line = format!(
        "{status}: loss={:.3e} n={} d={} l={} fd=({},{},{}) gn=({},{},{}) expected=({},{},{}) dim={}\n",
        payload.loss,
        payload.n,
        payload.d,
        payload.outputs,
        fd.negative,
        fd.zero,
        fd.positive,
        gn.negative,
        gn.zero,
        gn.positive,
        payload.expected.negative,
        payload.expected.zero,
        payload.expected.positive,
        payload.manifold_dimension.map_or("-".to_string(), |v| v.to_string()),
    );
    let mut report = Report::new("analyze", cfg);
    report.payload = Some(Payload::Analyze(payload));
    let path = finish(report, started, &common.out)?;
    Ok(Outcome::ok(format!("{line}{}", wrote(&[path]))))
}

/// Three points per input coordinate, off the data's bulk and on both sides
/// of the origin.
fn default_probes(p: usize) -> Vec<Vec<f64>> {
    let mut probes = Vec::new();
    for k in 0..p {
        for c in [-1.5, 0.5, 2.5] {
            let mut x = vec![0.0; p];
            x[k] = c;
            probes.push(x);
        }
    }
    probes
}

fn walk(common: &Common, data_path: &Path, params_path: &Path) -> CliResult<Outcome> {
    let started = Instant::now();
    let cfg = load_config(common)?;
    let spec = cfg.network.spec()?;
    let data = load_dataset(data_path, &spec)?;
    let theta = load_params(params_path, &spec)?;
    ensure_fresh(&common.out, &["path.json", "report.json"])?;

    let opts = cfg.walk_options();
    let path = walk_manifold(&spec, &theta, &data, opts)?;
    let probes = if cfg.walk.probes.is_empty() { default_probes(spec.input_dim) } else { cfg.walk.probes.clone() };
    let mut drift = 0.0f64;
    for x in &probes {
        let a = spec.forward(path.base(), x)?;
        let b = spec.forward(path.last(), x)?;
        for (u, v) in a.iter().zip(&b) {
            drift = drift.max((u - v).abs());
        }
    }
    let payload = WalkPayload {
        n: spec.param_count(),
        d: data.len(),
        outputs: spec.output_dim,
        steps: opts.steps,
        step_size: opts.step_size,
        loss_tol: opts.loss_tol,
        rank_tol: opts.rank_tol,
        corrector_tol: opts.corrector.tol,
        points: path.points.len(),
        arc_length: path.arc_length(),
        displacement: path.displacement(),
        max_loss: path.max_loss(),
        probe_drift: drift,
        step_lengths: path.step_lengths.clone(),
        corrector_iterations: path.corrector_iterations.clone(),
        failure: path.failure.clone(),
    };
    let failure = path.failure.as_ref().map(|reason| CliError::Numerical {
        code: "walk-truncated",
        message: format!("walk stopped after {} of {} steps: {reason}", path.points.len() - 1, opts.steps),
    });
    let summary = format!(
        "points={} arc_length={:.4} displacement={:.4} max_loss={:.3e} probe_drift={:.3e}\n",
        payload.points, payload.arc_length, payload.displacement, payload.max_loss, payload.probe_drift
    );
    let mut report = Report::new("walk", cfg);
    if let Some(e) = &failure {
        report.error = Some(error_record(e));
    }
    report.payload = Some(Payload::Walk(payload));
    let written = [write_new(&common.out, "path.json", &to_json(&path))?, finish(report, started, &common.out)?];
    Ok(Outcome { stdout: format!("{summary}{}", wrote(&written)), failure })
}

fn wrote(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("wrote {}\n", p.display())).collect()
}
