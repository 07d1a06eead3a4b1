use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use forcegp::basis::{elimination_ratio, normalize_shapes, ModeShapeSet, Oscillator};
use forcegp::gp::{fit, predict_force, reference_scales, CovarianceMode, Dataset, DatasetStack, FitConfig, PosteriorCovariance};
use forcegp::io::{atomic_write, matrix_to_csv, read_matrix, ModelFile, TimeTable};
use forcegp::metrics::compare;
use forcegp::modal::{modal_decompose, project_modes, SensorArray};
use forcegp::seed::derive_seed;
use forcegp::signal::{add_white_noise, fft_magnitude, uniform_grid, Kind, TimeSeries};
use forcegp::simulate::run_study;
use serde::Serialize;

use crate::config::{CovarianceChoice, Loaded, ModesSpec, FULL_COVARIANCE_LIMIT};

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    ensure!(path.is_file(), "input file {} does not exist", path.display());
    Ok(path)
}

fn mode_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("mode{i}")).collect()
}

fn sensor_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i}")).collect()
}

/// Training datasets named `<file stem>/<column>`, in configuration order.
fn load_datasets(loaded: &Loaded) -> Result<(Vec<String>, DatasetStack)> {
    let cfg = &loaded.config;
    ensure!(!cfg.inputs.is_empty(), "the configuration lists no inputs");
    let mut names = Vec::new();
    let mut entries = Vec::new();
    for (i, input) in cfg.inputs.iter().enumerate() {
        let path = existing(loaded.resolve(&input.file))?;
        let table = TimeTable::read(&path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let columns: Vec<usize> = match &input.columns {
            None => (0..table.names.len()).collect(),
            Some(wanted) => wanted
                .iter()
                .map(|c| table.column_index(c).with_context(|| format!("{} has no column `{c}`", path.display())))
                .collect::<Result<_>>()?,
        };
        ensure!(!columns.is_empty(), "{} has no channel columns", path.display());
        for c in columns {
            names.push(format!("{stem}/{}", table.names[c]));
            let series = table.series(c, input.kind, &input.unit).with_context(|| format!("in {}", path.display()))?;
            entries.push(Dataset { series, group: input.group.unwrap_or(i) });
        }
    }
    let reference = match &cfg.reference {
        None => 0,
        Some(r) => names
            .iter()
            .position(|n| n == r)
            .with_context(|| format!("reference `{r}` is not among the datasets {names:?}"))?,
    };
    let stack = DatasetStack::new(entries, reference)?;
    Ok((names, if cfg.detrend { stack.detrended() } else { stack }))
}

fn load_modes(loaded: &Loaded, spec: &ModesSpec) -> Result<ModeShapeSet> {
    let path = existing(loaded.resolve(&spec.shapes))?;
    let phi = read_matrix(&path)?;
    Ok(ModeShapeSet::new(phi, spec.masses.clone(), spec.zetas.clone(), spec.frequencies.clone())
        .with_context(|| format!("mode set from {}", path.display()))?)
}

fn fit_config(loaded: &Loaded) -> FitConfig {
    FitConfig { seed: derive_seed(loaded.config.seed, "fit"), ..loaded.config.fit }
}

pub fn cmd_fit(loaded: &Loaded, out: Option<PathBuf>) -> Result<()> {
    let (names, stack) = load_datasets(loaded)?;
    let rule = loaded.config.frequency;
    let scales = reference_scales(&stack, rule)?;
    let elimination = elimination_ratio(&fft_magnitude(stack.reference_series())?, &scales);
    let model = fit(&stack, &scales, &fit_config(loaded))?;

    let path = out.unwrap_or_else(|| loaded.output_dir().join("model.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    ModelFile::from_model(&model, &names, rule, elimination)?.write(&path)?;

    println!("log marginal likelihood: {}", model.log_likelihood());
    for (g, r) in model.signal_ratios().iter().enumerate() {
        println!("signal ratio (group {g}): {r:.6}");
    }
    println!("frequencies kept: {} ({:.1}% of bins eliminated)", scales.len(), 100.0 * elimination);
    let freqs: Vec<String> = scales.freqs().iter().map(|f| f.to_string()).collect();
    println!("frequency grid (Hz): {}", freqs.join(" "));
    let failed = model.starts().iter().filter(|s| s.log_likelihood.is_none()).count();
    if failed > 0 {
        log::warn!("{failed} of {} optimizer starts failed", model.starts().len());
    }
    println!("model written to {}", path.display());
    Ok(())
}

fn oscillator(loaded: &Loaded) -> Result<Oscillator> {
    let cfg = &loaded.config;
    match (cfg.predict.mode, &cfg.modes, cfg.oscillator) {
        (Some(mode), Some(spec), _) => {
            let shapes = load_modes(loaded, spec)?;
            ensure!(
                (1..=shapes.n_modes()).contains(&mode),
                "predict.mode {mode} outside 1..={}",
                shapes.n_modes()
            );
            Ok(shapes.oscillator(mode - 1))
        }
        (Some(_), None, _) => bail!("predict.mode needs a [modes] section"),
        (None, _, Some(o)) => Ok(Oscillator::new(o.mass, o.zeta, o.f_n)?),
        (None, _, None) => bail!("prediction needs an [oscillator] section or predict.mode with [modes]"),
    }
}

pub fn cmd_predict(loaded: &Loaded, model_path: &Path, out: Option<PathBuf>, covariance_out: Option<PathBuf>) -> Result<()> {
    let model = ModelFile::read(&existing(model_path.to_path_buf())?)?
        .to_model()
        .with_context(|| format!("loading {}", model_path.display()))?;
    let osc = oscillator(loaded)?;
    let spec = &loaded.config.predict;
    let t_pred = match (spec.start, spec.step, spec.count) {
        (Some(start), Some(step), Some(count)) => uniform_grid(start, step, count),
        (None, None, None) => model.stack().reference_series().t().to_vec(),
        _ => bail!("predict.start, predict.step and predict.count must be given together"),
    };
    let mode = match spec.covariance {
        CovarianceChoice::Full => CovarianceMode::Full,
        CovarianceChoice::Diagonal => CovarianceMode::Diagonal,
        CovarianceChoice::Auto if t_pred.len() <= FULL_COVARIANCE_LIMIT => CovarianceMode::Full,
        CovarianceChoice::Auto => CovarianceMode::Diagonal,
    };
    ensure!(
        covariance_out.is_none() || mode == CovarianceMode::Full,
        "writing the covariance matrix needs the full covariance mode"
    );
    let post = predict_force(&model, &osc, &t_pred, mode)?;
    if post.clipped_variances > 0 {
        log::warn!("{} posterior variances were clipped to zero", post.clipped_variances);
    }

    let path = out.unwrap_or_else(|| loaded.output_dir().join("force.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    TimeTable::new(post.t.clone(), vec!["mean".into(), "std".into()], vec![post.mean.clone(), post.std()])?.write(&path)?;
    if let (Some(cov_path), PosteriorCovariance::Full(cov)) = (covariance_out, &post.cov) {
        let names: Vec<String> = (0..cov.ncols()).map(|i| format!("t{i}")).collect();
        atomic_write(&cov_path, matrix_to_csv(cov, &names).as_bytes())?;
    }
    log::info!("{} prediction times written to {}", post.t.len(), path.display());
    Ok(())
}

pub fn cmd_study(loaded: &Loaded) -> Result<()> {
    let mut cfg = loaded.config.study.clone();
    cfg.seed = loaded.config.seed;
    let table = run_study(&cfg)?;
    let dir = loaded.output_dir();
    ensure_dir(&dir)?;
    atomic_write(&dir.join("study.csv"), table.to_csv().as_bytes())?;
    atomic_write(&dir.join("study.json"), serde_json::to_string_pretty(&table.metadata())?.as_bytes())?;
    print!("{}", table.to_csv());
    let failed: usize = table.rows.iter().map(|r| r.n_failed).sum();
    if failed > 0 {
        log::warn!("{failed} samples failed numerically and were excluded");
    }
    Ok(())
}

/// One column of a time table; the first channel when no name is given.
fn read_column(path: &Path, column: Option<&str>) -> Result<(String, TimeSeries)> {
    let table = TimeTable::read(&existing(path.to_path_buf())?)?;
    let index = match column {
        Some(c) => table.column_index(c).with_context(|| format!("{} has no column `{c}`", path.display()))?,
        None => {
            ensure!(!table.names.is_empty(), "{} has no channel columns", path.display());
            0
        }
    };
    let series = table.series(index, Kind::Force, "").with_context(|| format!("in {}", path.display()))?;
    Ok((table.names[index].clone(), series))
}

#[derive(Serialize)]
struct MetricsOutput<'a> {
    reference: (String, String),
    candidate: (String, String),
    config: &'a forcegp::metrics::MetricConfig,
    report: forcegp::metrics::MetricReport,
}

pub fn cmd_metrics(
    loaded: &Loaded,
    reference: &Path,
    reference_column: Option<&str>,
    candidate: &Path,
    candidate_column: Option<&str>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (x_name, x) = read_column(reference, reference_column)?;
    let (y_name, y) = read_column(candidate, candidate_column)?;
    let report = compare(&x, &y, &loaded.config.metrics)?;
    let output = MetricsOutput {
        reference: (reference.display().to_string(), x_name),
        candidate: (candidate.display().to_string(), y_name),
        config: &loaded.config.metrics,
        report,
    };
    let mut json = serde_json::to_string_pretty(&output)?;
    json.push('\n');
    match out {
        Some(path) => atomic_write(&path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

/// `kind=path` pairs from the command line.
pub fn parse_sensor_arg(arg: &str) -> Result<(Kind, PathBuf), String> {
    let (kind, path) = arg.split_once('=').ok_or_else(|| format!("expected KIND=PATH, got `{arg}`"))?;
    let kind: Kind = serde_json::from_value(serde_json::Value::String(kind.to_string()))
        .map_err(|_| format!("unknown kind `{kind}`"))?;
    Ok((kind, PathBuf::from(path)))
}

pub fn cmd_decompose(loaded: &Loaded, sensors: &[(Kind, PathBuf)], shapes: Option<&Path>, out_dir: Option<PathBuf>) -> Result<()> {
    ensure!(!sensors.is_empty(), "at least one --sensors KIND=PATH is required");
    let modes = loaded.config.modes.as_ref();
    let shape_set = match (shapes, modes) {
        (None, Some(spec)) => Some(load_modes(loaded, spec)?),
        _ => None,
    };
    let phi = match (&shape_set, shapes) {
        (Some(set), _) => set.phi().clone(),
        (None, Some(path)) => normalize_shapes(read_matrix(&existing(path.to_path_buf())?)?)?,
        (None, None) => bail!("mode shapes are needed: pass --shapes or configure [modes]"),
    };
    let dir = out_dir.unwrap_or_else(|| loaded.output_dir());
    ensure_dir(&dir)?;
    for (kind, path) in sensors {
        let table = TimeTable::read(&existing(path.clone())?)?;
        let channels = (0..table.names.len())
            .map(|c| table.series(c, *kind, ""))
            .collect::<forcegp::error::Result<Vec<_>>>()
            .with_context(|| format!("in {}", path.display()))?;
        let array = SensorArray::new(channels, table.names.clone())?;
        let modal = match &shape_set {
            Some(set) => modal_decompose(&array, set),
            None => project_modes(&array, &phi),
        }
        .with_context(|| format!("decomposing {}", path.display()))?;
        let target = dir.join(format!("modal_{kind}.csv"));
        TimeTable::from_series(&modal, mode_names(modal.len()))?.write(&target)?;
        log::info!("{} modal series written to {}", modal.len(), target.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct ModesSnippet {
    modes: ModesSpec,
}

pub fn cmd_simulate(loaded: &Loaded, out_dir: Option<PathBuf>) -> Result<()> {
    let spec = loaded.config.fixture;
    let fixture = spec.fixture(loaded.config.seed);
    let run = fixture.generate()?;
    let dir = out_dir.unwrap_or_else(|| loaded.output_dir());
    ensure_dir(&dir)?;

    for kind in [Kind::Displacement, Kind::Velocity, Kind::Acceleration] {
        let array = run.response.sensors(kind).context("fixture has no sensors of that kind")?;
        let channels: Vec<TimeSeries> = match spec.snr {
            None => array.channels().to_vec(),
            Some(snr) => array
                .channels()
                .iter()
                .enumerate()
                .map(|(i, c)| add_white_noise(c, snr, derive_seed(loaded.config.seed, &format!("noise-{kind}-{i}"))))
                .collect::<forcegp::error::Result<_>>()?,
        };
        TimeTable::from_series(&channels, sensor_names(channels.len()))?.write(&dir.join(format!("sensors_{kind}.csv")))?;
    }
    let loads = &run.response.modal_loads;
    TimeTable::from_series(loads, mode_names(loads.len()))?.write(&dir.join("modal_loads.csv"))?;
    TimeTable::from_series(&run.nodal_loads, sensor_names(run.nodal_loads.len()))?.write(&dir.join("nodal_loads.csv"))?;
    let shapes = &run.shapes;
    atomic_write(&dir.join("shapes.csv"), matrix_to_csv(shapes.phi(), &mode_names(shapes.n_modes())).as_bytes())?;
    let snippet = ModesSnippet {
        modes: ModesSpec {
            shapes: PathBuf::from("shapes.csv"),
            masses: shapes.masses().to_vec(),
            zetas: shapes.zetas().to_vec(),
            frequencies: shapes.f_ns().to_vec(),
        },
    };
    atomic_write(&dir.join("modes.toml"), toml::to_string(&snippet)?.as_bytes())?;
    println!("fixture with {} sensors and {} modes written to {}", shapes.n_sensors(), shapes.n_modes(), dir.display());
    Ok(())
}
