//! Per-generation particle records for the landscape and trajectory plots,
//! with CSV export and import.

use std::io::{Read, Write};
use std::path::Path;

use crate::swarm::{GenerationSnapshot, Observer};

/// Particle column value used for the per-generation global-best row.
pub const GBEST_PARTICLE: i64 = -1;

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trajectory CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("trajectory format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub generation: usize,
    /// Particle index, or [`GBEST_PARTICLE`] for the global-best row.
    pub particle: i64,
    pub fitness: f64,
    pub is_gbest: bool,
    pub position: Vec<f64>,
}

/// Observer that keeps one record per particle plus one global-best record
/// for every generation it sees.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecorder {
    records: Vec<TrajectoryRecord>,
}

impl TrajectoryRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TrajectoryRecord> {
        self.records
    }
}

impl Observer for TrajectoryRecorder {
    fn on_generation(&mut self, s: &GenerationSnapshot<'_>) {
        for (i, p) in s.particles.iter().enumerate() {
            self.records.push(TrajectoryRecord {
                generation: s.generation,
                particle: i as i64,
                fitness: p.fitness().unwrap_or(0.0),
                is_gbest: false,
                position: p.position().to_vec(),
            });
        }
        self.records.push(TrajectoryRecord {
            generation: s.generation,
            particle: GBEST_PARTICLE,
            fitness: s.gbest_fitness,
            is_gbest: true,
            position: s.gbest_position.to_vec(),
        });
    }
}

/// Writes `generation,particle,fitness,is_gbest,x0..x{d-1}` with a header.
pub fn write_csv<W: Write>(writer: W, records: &[TrajectoryRecord]) -> Result<(), TrajectoryError> {
    let dim = records.first().map_or(0, |r| r.position.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "generation".to_string(),
        "particle".into(),
        "fitness".into(),
        "is_gbest".into(),
    ];
    header.extend((0..dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for r in records {
        if r.position.len() != dim {
            return Err(TrajectoryError::Format(format!(
                "record has {} coordinates, expected {dim}",
                r.position.len()
            )));
        }
        let mut row = vec![
            r.generation.to_string(),
            r.particle.to_string(),
            r.fitness.to_string(),
            u8::from(r.is_gbest).to_string(),
        ];
        row.extend(r.position.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| TrajectoryError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let expected = ["generation", "particle", "fitness", "is_gbest"];
    if headers.len() < expected.len() || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(TrajectoryError::Format(format!(
            "header must start with {}",
            expected.join(",")
        )));
    }
    let dim = headers.len() - expected.len();
    let field = |row: &csv::StringRecord, i: usize| -> Result<String, TrajectoryError> {
        row.get(i)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| TrajectoryError::Format(format!("missing column {i}")))
    };
    let bad = |what: &str, v: &str| TrajectoryError::Format(format!("invalid {what} {v:?}"));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let g = field(&row, 0)?;
        let p = field(&row, 1)?;
        let f = field(&row, 2)?;
        let b = field(&row, 3)?;
        let position = (0..dim)
            .map(|i| {
                let v = field(&row, 4 + i)?;
                v.parse::<f64>().map_err(|_| bad("coordinate", &v))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(TrajectoryRecord {
            generation: g.parse().map_err(|_| bad("generation", &g))?,
            particle: p.parse().map_err(|_| bad("particle", &p))?,
            fitness: f.parse().map_err(|_| bad("fitness", &f))?,
            is_gbest: match b.as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("is_gbest", &b)),
            },
            position,
        });
    }
    Ok(out)
}

pub fn save(path: &Path, records: &[TrajectoryRecord]) -> Result<(), TrajectoryError> {
    let file = std::fs::File::create(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(std::io::BufWriter::new(file), records)
}

pub fn load(path: &Path) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    let file = std::fs::File::open(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file))
}
