//! The `search`, `decode`, `eval` and `pca` commands. Each writes its
//! normal output to `out` and diagnostics to `err`, so tests can capture
//! both.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use ipnas_core::codec::{
    coordinate_to_byte, decode_address, decode_particle_position, InterfaceAddress, LayerSpec,
};
use ipnas_core::dataset::{load_csv, load_idx, split, LabeledDataset, SplitSpec};
use ipnas_core::pca::{project_trajectory, write_projection_csv};
use ipnas_core::trajectory::{self, TrajectoryRecorder};
use ipnas_core::{
    run, FitnessEvaluator, GenerationStats, SearchRng, SurrogateLandscape, TrainingEvaluator,
};
use rand::SeedableRng;
use serde::Serialize;

use crate::config::{ConfigError, DatasetFormat, EvaluatorKind, RunConfig};

/// Valid address range quoted in decode errors.
pub const ADDRESS_BOUND: &str = "0.0–39.255";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, config or input; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The command was well-formed but failed while running; exit status 1.
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(anyhow::Error::new(e).context("writing output"))
}

/// The evaluator selected by a config, with the class count particles
/// decode to.
pub struct ConfiguredEvaluator {
    pub evaluator: Box<dyn FitnessEvaluator>,
    pub num_classes: usize,
}

fn load_dataset(config: &RunConfig) -> Result<LabeledDataset, CliError> {
    let ds = &config.dataset;
    let data = match ds.format {
        DatasetFormat::Idx => {
            let (images, labels) = (
                ds.images.as_deref().expect("validated"),
                ds.labels.as_deref().expect("validated"),
            );
            load_idx(images, labels).context("loading IDX dataset")?
        }
        DatasetFormat::Csv => load_csv(
            ds.csv.as_deref().expect("validated"),
            ds.height.expect("validated"),
            ds.width.expect("validated"),
        )
        .context("loading CSV dataset")?,
    };
    Ok(match ds.num_classes {
        Some(n) => data
            .with_num_classes(n)
            .context("applying dataset.num_classes")?,
        None => data,
    })
}

pub fn build_evaluator(config: &RunConfig) -> Result<ConfiguredEvaluator, CliError> {
    match config.evaluator {
        EvaluatorKind::Surrogate => {
            let target = config.surrogate_target()?;
            let num_classes = target.num_classes();
            let landscape = SurrogateLandscape::new(target, config.surrogate.sharpness)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(ConfiguredEvaluator {
                evaluator: Box::new(landscape),
                num_classes,
            })
        }
        EvaluatorKind::Train => {
            let data = load_dataset(config)?;
            let (train, fitness) = split(
                &data,
                SplitSpec {
                    train_fraction: config.fitness.train_fraction,
                    seed: config.fitness.split_seed,
                },
            )
            .context("splitting the dataset")?;
            let evaluator = TrainingEvaluator::new(train, fitness, config.protocol())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(ConfiguredEvaluator {
                num_classes: evaluator.num_classes(),
                evaluator: Box::new(evaluator),
            })
        }
    }
}

/// Contents of `gbest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbestReport {
    pub seed: u64,
    pub fitness: f64,
    /// Decoded layers, one `kind | Configuration` row each.
    pub architecture: Vec<String>,
    /// Every interface of the global best, Disabled slots included.
    pub addresses: Vec<String>,
    pub position: Vec<f64>,
    pub evaluations: usize,
    pub history: Vec<HistoryRow>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub gbest_fitness: f64,
}

impl From<&GenerationStats> for HistoryRow {
    fn from(s: &GenerationStats) -> Self {
        Self {
            generation: s.generation,
            best_fitness: s.best_fitness,
            mean_fitness: s.mean_fitness,
            gbest_fitness: s.gbest_fitness,
        }
    }
}

/// Runs a search and writes `gbest.json` and `trajectory.csv` into `out_dir`.
pub fn search(
    config_path: &Path,
    seed: Option<u64>,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<GbestReport, CliError> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let ConfiguredEvaluator {
        evaluator,
        num_classes,
    } = build_evaluator(&config)?;
    let swarm = config.swarm_config(num_classes)?;

    let mut recorder = TrajectoryRecorder::new();
    let mut rng = SearchRng::seed_from_u64(config.seed);
    let result =
        run(swarm, evaluator.as_ref(), &mut rng, &mut recorder).context("search failed")?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let addresses = ipnas_core::codec::position_addresses(&result.gbest_position)
        .context("decoding the global best")?;
    let report = GbestReport {
        seed: config.seed,
        fitness: result.gbest_fitness,
        architecture: result
            .architecture
            .layers()
            .iter()
            .map(|l| l.to_string())
            .collect(),
        addresses: addresses.iter().map(|a| a.to_string()).collect(),
        position: result.gbest_position.clone(),
        evaluations: result.evaluations,
        history: result.history.iter().map(HistoryRow::from).collect(),
        config,
    };
    let gbest_path = out_dir.join("gbest.json");
    let json = serde_json::to_string_pretty(&report).context("serialising gbest.json")?;
    std::fs::write(&gbest_path, json + "\n")
        .with_context(|| format!("writing {}", gbest_path.display()))?;
    let trajectory_path = out_dir.join("trajectory.csv");
    trajectory::save(&trajectory_path, recorder.records())
        .with_context(|| format!("writing {}", trajectory_path.display()))?;

    writeln!(
        out,
        "gbest fitness {:.6} after {} evaluations",
        report.fitness, report.evaluations
    )
    .map_err(io_err)?;
    writeln!(out, "{}", result.architecture).map_err(io_err)?;
    writeln!(
        out,
        "wrote {} and {}",
        gbest_path.display(),
        trajectory_path.display()
    )
    .map_err(io_err)?;
    Ok(report)
}

/// Parses a dotted address and checks it lies inside a subnet.
pub fn parse_address(text: &str) -> Result<(InterfaceAddress, LayerSpec), CliError> {
    let addr: InterfaceAddress = text.parse().map_err(|_| {
        CliError::Usage(format!(
            "invalid address `{text}`: expected a dotted pair in {ADDRESS_BOUND}"
        ))
    })?;
    let spec = decode_address(addr).map_err(|_| {
        CliError::Usage(format!(
            "InvalidSubnet: address {addr} is outside every subnet; valid addresses are {ADDRESS_BOUND}"
        ))
    })?;
    Ok((addr, spec))
}

/// Reads particle positions from CSV: either plain rows of coordinates
/// (no header) or a trajectory file, whose coordinate columns are used.
pub fn read_positions(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading positions from {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut skip = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if i == 0 && record.get(0) == Some("generation") {
            skip = 4;
            continue;
        }
        let row = record
            .iter()
            .skip(skip)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!(
                        "{} row {}: `{v}` is not a number",
                        path.display(),
                        i + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{} holds no positions",
            path.display()
        )));
    }
    Ok(rows)
}

fn position_to_address_strings(row: &[f64]) -> Result<Vec<String>, CliError> {
    if row.len() % 2 != 0 {
        return Err(CliError::Usage(format!(
            "a position needs an even number of coordinates, got {}",
            row.len()
        )));
    }
    row.chunks(2)
        .map(|pair| {
            let hi = coordinate_to_byte(pair[0]).map_err(|e| CliError::Usage(e.to_string()))?;
            let lo = coordinate_to_byte(pair[1]).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(InterfaceAddress::from_bytes(hi, lo).to_string())
        })
        .collect()
}

/// Per-interface listing plus the final architecture with Disabled layers
/// removed. With `num_classes`, a trailing FC layer gets that many neurons.
/// Returns the final layer listing.
pub fn decode_listing(
    addresses: &[String],
    num_classes: Option<usize>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<LayerSpec>, CliError> {
    let decoded = addresses
        .iter()
        .map(|a| parse_address(a))
        .collect::<Result<Vec<_>, _>>()?;
    for (addr, spec) in &decoded {
        if spec.is_disabled() {
            writeln!(out, "{addr:>7}  {spec}  [Disabled: omitted]").map_err(io_err)?;
        } else {
            writeln!(out, "{addr:>7}  {spec}").map_err(io_err)?;
        }
    }
    let mut layers: Vec<LayerSpec> = decoded
        .into_iter()
        .map(|(_, s)| s)
        .filter(|s| !s.is_disabled())
        .collect();
    if let (Some(n), Some(LayerSpec::FullyConnected { neurons })) = (num_classes, layers.last_mut())
    {
        *neurons = u16::try_from(n)
            .ok()
            .filter(|n| (1..=2048).contains(n))
            .ok_or_else(|| CliError::Usage(format!("--num-classes {n} outside [1, 2048]")))?;
    }
    writeln!(out, "Architecture:").map_err(io_err)?;
    if layers.is_empty() {
        writeln!(
            err,
            "warning: every layer is Disabled; the architecture is empty"
        )
        .map_err(io_err)?;
    }
    for layer in &layers {
        writeln!(out, "{layer}").map_err(io_err)?;
    }
    Ok(layers)
}

/// `decode <addresses...>` or `decode --positions file.csv`.
pub fn decode(
    addresses: &[String],
    positions: Option<&Path>,
    num_classes: Option<usize>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    match positions {
        None => decode_listing(addresses, num_classes, out, err).map(|_| ()),
        Some(path) => {
            let rows = read_positions(path)?;
            for (i, row) in rows.iter().enumerate() {
                if rows.len() > 1 {
                    writeln!(out, "# particle {i}").map_err(io_err)?;
                }
                decode_listing(&position_to_address_strings(row)?, num_classes, out, err)?;
            }
            Ok(())
        }
    }
}

/// Fitness of each given particle under the configured evaluator; prints
/// `row,fitness,addresses` CSV. Row `i` evaluates with seed `seed + i`.
pub fn eval(
    config_path: &Path,
    positions: &Path,
    out: &mut dyn Write,
) -> Result<Vec<f64>, CliError> {
    let config = RunConfig::load(config_path)?;
    let ConfiguredEvaluator {
        evaluator,
        num_classes,
    } = build_evaluator(&config)?;
    let constraints = config.slot_constraints(num_classes)?;
    let rows = read_positions(positions)?;
    writeln!(out, "row,fitness,addresses").map_err(io_err)?;
    let mut fitnesses = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != constraints.dimension() {
            return Err(CliError::Usage(format!(
                "row {i} has {} coordinates, expected {}",
                row.len(),
                constraints.dimension()
            )));
        }
        let arch = decode_particle_position(row, num_classes)
            .map_err(|e| CliError::Usage(format!("row {i}: {e}")))?;
        let mut rng = SearchRng::seed_from_u64(config.seed.wrapping_add(i as u64));
        let fitness = evaluator
            .evaluate(&arch, &mut rng)
            .map_err(|e| anyhow!("row {i}: {e}"))?;
        let addresses = arch
            .encode()
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>();
        writeln!(out, "{i},{fitness},{}", addresses.join(" ")).map_err(io_err)?;
        fitnesses.push(fitness);
    }
    Ok(fitnesses)
}

/// Two-component projection of a trajectory file.
pub fn pca(
    trajectory_path: &Path,
    out_path: &Path,
    out: &mut dyn Write,
) -> Result<Vec<f64>, CliError> {
    let records = trajectory::load(trajectory_path)
        .with_context(|| format!("reading {}", trajectory_path.display()))?;
    let (fit, rows) = project_trajectory(&records).context("PCA failed")?;
    let file = std::fs::File::create(out_path)
        .with_context(|| format!("creating {}", out_path.display()))?;
    write_projection_csv(std::io::BufWriter::new(file), &rows)
        .with_context(|| format!("writing {}", out_path.display()))?;
    let ratio = fit.explained_variance_ratio();
    writeln!(
        out,
        "explained variance ratio: pc1 {:.6}, pc2 {:.6}; wrote {} rows to {}",
        ratio[0],
        ratio[1],
        rows.len(),
        out_path.display()
    )
    .map_err(io_err)?;
    Ok(ratio)
}
