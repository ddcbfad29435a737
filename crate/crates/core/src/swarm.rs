//! The search loop: constrained population initialisation, synchronous
//! update/evaluate generations, and personal/global best bookkeeping.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::codec::{decode_particle_position, subnet_of, Architecture, CodecError, LayerKind};
use crate::fitness::FitnessEvaluator;
use crate::particle::{random_address, Particle, ParticleError, PsoCoefficients};
use crate::SearchRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SwarmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("slot {slot} outside [0, {max_length})")]
    SlotRange { slot: usize, max_length: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
}

const CONV_ONLY: &[LayerKind] = &[LayerKind::Conv];
const FC_ONLY: &[LayerKind] = &[LayerKind::FullyConnected];
const FEATURE_SLOTS: &[LayerKind] = &[LayerKind::Conv, LayerKind::Pool, LayerKind::Disabled];
const TAIL_BEFORE_FC: &[LayerKind] = &LayerKind::ALL;
const TAIL_AFTER_FC: &[LayerKind] = &[LayerKind::FullyConnected, LayerKind::Disabled];

/// Particle length and the per-slot layer-kind rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotConstraints {
    max_length: usize,
    max_fully_connected: usize,
    num_classes: usize,
}

impl SlotConstraints {
    pub fn new(
        max_length: usize,
        max_fully_connected: usize,
        num_classes: usize,
    ) -> Result<Self, SwarmError> {
        if max_fully_connected == 0 || max_fully_connected >= max_length {
            return Err(SwarmError::Config(format!(
                "max_fully_connected must be in [1, max_length); got {max_fully_connected} with max_length {max_length}"
            )));
        }
        if !(1..=2048).contains(&num_classes) {
            return Err(SwarmError::Config(format!(
                "num_classes {num_classes} outside [1, 2048]"
            )));
        }
        Ok(Self {
            max_length,
            max_fully_connected,
            num_classes,
        })
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn max_fully_connected(&self) -> usize {
        self.max_fully_connected
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Particle dimension: two bytes per slot.
    pub fn dimension(&self) -> usize {
        2 * self.max_length
    }

    /// Layer kinds permitted at `slot`, given whether a fully-connected layer
    /// already occurs to its left.
    ///
    /// Slot 0 is Conv; the middle slots take Conv, Pool or Disabled; the last
    /// `max_fully_connected - 1` slots before the output take any kind until
    /// the first FC, then FC or Disabled; the output slot is FC.
    pub fn allowed_subnets(
        &self,
        slot: usize,
        has_seen_fc: bool,
    ) -> Result<&'static [LayerKind], SwarmError> {
        let tail_start = self.max_length - self.max_fully_connected;
        Ok(match slot {
            s if s >= self.max_length => {
                return Err(SwarmError::SlotRange {
                    slot,
                    max_length: self.max_length,
                })
            }
            0 => CONV_ONLY,
            s if s == self.max_length - 1 => FC_ONLY,
            s if s < tail_start => FEATURE_SLOTS,
            _ if has_seen_fc => TAIL_AFTER_FC,
            _ => TAIL_BEFORE_FC,
        })
    }

    /// Uniformly random legal position, scanned left to right.
    pub fn random_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut position = Vec::with_capacity(self.dimension());
        let mut has_seen_fc = false;
        for slot in 0..self.max_length {
            let allowed = self
                .allowed_subnets(slot, has_seen_fc)
                .expect("slot in range");
            let addr = random_address(allowed, rng);
            has_seen_fc |= subnet_of(addr).map(|s| s.kind()) == Some(LayerKind::FullyConnected);
            position.extend(addr.bytes().map(f64::from));
        }
        position
    }

    /// Replaces every illegal interface, left to right, so a replacement
    /// early in the vector re-derives the rules for the slots after it.
    /// Returns the number of interfaces replaced.
    pub fn repair<R: Rng + ?Sized>(&self, particle: &mut Particle, rng: &mut R) -> usize {
        let mut has_seen_fc = false;
        let mut replaced = 0;
        for slot in 0..self.max_length {
            let allowed = self
                .allowed_subnets(slot, has_seen_fc)
                .expect("slot in range");
            if particle.repair_interface(slot, allowed, rng) {
                replaced += 1;
            }
            has_seen_fc |= subnet_of(particle.interface(slot)).map(|s| s.kind())
                == Some(LayerKind::FullyConnected);
        }
        replaced
    }

    /// Slots whose interface breaks the rules, scanning left to right.
    pub fn violations(&self, position: &[f64]) -> Vec<usize> {
        let mut bad = Vec::new();
        let Ok(addresses) = crate::codec::position_addresses(position) else {
            return (0..self.max_length).collect();
        };
        if addresses.len() != self.max_length {
            return (0..self.max_length).collect();
        }
        let mut has_seen_fc = false;
        for (slot, addr) in addresses.iter().enumerate() {
            let allowed = self
                .allowed_subnets(slot, has_seen_fc)
                .expect("slot in range");
            match subnet_of(*addr) {
                Some(s) if allowed.contains(&s.kind()) => {
                    has_seen_fc |= s.kind() == LayerKind::FullyConnected;
                }
                _ => bad.push(slot),
            }
        }
        bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmConfig {
    pub constraints: SlotConstraints,
    pub population_size: usize,
    /// Update/evaluate generations after the initial evaluation.
    pub max_generations: usize,
    pub coefficients: PsoCoefficients,
    /// Evaluate particles in parallel when the evaluator allows it.
    pub parallel: bool,
}

impl SwarmConfig {
    pub fn new(constraints: SlotConstraints) -> Self {
        Self {
            constraints,
            population_size: 30,
            max_generations: 10,
            coefficients: PsoCoefficients::default(),
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<(), SwarmError> {
        if self.population_size == 0 {
            return Err(SwarmError::Config(
                "population size must be at least 1".into(),
            ));
        }
        self.coefficients.validate()?;
        Ok(())
    }
}

/// What an observer sees after each generation.
#[derive(Debug, Clone, Copy)]
pub struct GenerationSnapshot<'a> {
    pub generation: usize,
    pub particles: &'a [Particle],
    pub gbest_position: &'a [f64],
    pub gbest_fitness: f64,
}

pub trait Observer {
    fn on_generation(&mut self, snapshot: &GenerationSnapshot<'_>);
}

impl<F: FnMut(&GenerationSnapshot<'_>)> Observer for F {
    fn on_generation(&mut self, snapshot: &GenerationSnapshot<'_>) {
        self(snapshot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness among this generation's evaluations.
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub gbest_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub gbest_position: Vec<f64>,
    pub gbest_fitness: f64,
    pub architecture: Architecture,
    /// Entry 0 is the initial population; entries 1.. the generations.
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct Swarm {
    config: SwarmConfig,
    particles: Vec<Particle>,
    gbest_position: Option<Vec<f64>>,
    gbest_fitness: Option<f64>,
    generation: usize,
}

impl Swarm {
    /// Random legal positions, velocities uniform in `[-v_max, v_max]`, no bests.
    pub fn init<R: Rng + ?Sized>(config: SwarmConfig, rng: &mut R) -> Result<Self, SwarmError> {
        config.validate()?;
        let particles = (0..config.population_size)
            .map(|_| {
                let position = config.constraints.random_position(rng);
                Particle::with_random_velocity(position, config.coefficients.v_max, rng)
            })
            .collect();
        Ok(Self {
            config,
            particles,
            gbest_position: None,
            gbest_fitness: None,
            generation: 0,
        })
    }

    pub fn config(&self) -> &SwarmConfig {
        &self.config
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn gbest_position(&self) -> Option<&[f64]> {
        self.gbest_position.as_deref()
    }

    pub fn gbest_fitness(&self) -> Option<f64> {
        self.gbest_fitness
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Velocity, clamp, position and repair for every particle.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), SwarmError> {
        let gbest = self
            .gbest_position
            .clone()
            .ok_or(ParticleError::UnsetPbest)?;
        let coeffs = self.config.coefficients;
        for particle in &mut self.particles {
            particle.update_velocity(&gbest, &coeffs, rng)?;
            particle.update_position();
            self.config.constraints.repair(particle, rng);
        }
        self.generation += 1;
        Ok(())
    }

    /// Scores every particle and merges personal and global bests. A failed
    /// or out-of-range evaluation scores 0.
    pub fn evaluate<E, R>(
        &mut self,
        evaluator: &E,
        rng: &mut R,
    ) -> Result<GenerationStats, SwarmError>
    where
        E: FitnessEvaluator + ?Sized,
        R: Rng + ?Sized,
    {
        let num_classes = self.config.constraints.num_classes();
        let jobs = self
            .particles
            .iter()
            .map(|p| {
                Ok((
                    decode_particle_position(p.position(), num_classes)?,
                    rng.gen::<u64>(),
                ))
            })
            .collect::<Result<Vec<(Architecture, u64)>, SwarmError>>()?;
        let score = |(arch, seed): &(Architecture, u64)| {
            let mut rng = SearchRng::seed_from_u64(*seed);
            match evaluator.evaluate(arch, &mut rng) {
                Ok(f) if (0.0..=1.0).contains(&f) => f,
                Ok(f) => {
                    log::warn!("evaluator returned {f} outside [0, 1]; scoring 0");
                    0.0
                }
                Err(e) => {
                    log::warn!("evaluation failed ({e}); scoring 0");
                    0.0
                }
            }
        };
        let fitnesses: Vec<f64> = if self.config.parallel && evaluator.concurrency_safe() {
            jobs.par_iter().map(score).collect()
        } else {
            jobs.iter().map(score).collect()
        };

        for (particle, &f) in self.particles.iter_mut().zip(&fitnesses) {
            particle.record_fitness(f);
            if self.gbest_fitness.map_or(true, |g| f > g) {
                self.gbest_fitness = Some(f);
                self.gbest_position = Some(particle.position().to_vec());
            }
        }
        Ok(GenerationStats {
            generation: self.generation,
            best_fitness: fitnesses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_fitness: fitnesses.iter().sum::<f64>() / fitnesses.len() as f64,
            gbest_fitness: self.gbest_fitness.expect("set by the first evaluation"),
        })
    }

    fn snapshot(&self) -> GenerationSnapshot<'_> {
        GenerationSnapshot {
            generation: self.generation,
            particles: &self.particles,
            gbest_position: self.gbest_position.as_deref().expect("evaluated"),
            gbest_fitness: self.gbest_fitness.expect("evaluated"),
        }
    }
}

/// Evaluates the initial population, then runs `max_generations` rounds of
/// update-then-evaluate. The observer is called after each of those rounds
/// (not for the initial population).
pub fn run<E, R, O>(
    config: SwarmConfig,
    evaluator: &E,
    rng: &mut R,
    observer: &mut O,
) -> Result<SearchResult, SwarmError>
where
    E: FitnessEvaluator + ?Sized,
    R: Rng + ?Sized,
    O: Observer + ?Sized,
{
    let mut swarm = Swarm::init(config, rng)?;
    let mut history = vec![swarm.evaluate(evaluator, rng)?];
    for _ in 0..config.max_generations {
        swarm.advance(rng)?;
        history.push(swarm.evaluate(evaluator, rng)?);
        observer.on_generation(&swarm.snapshot());
    }
    let gbest_position = swarm.gbest_position.clone().expect("evaluated");
    let gbest_fitness = swarm.gbest_fitness.expect("evaluated");
    let architecture = decode_particle_position(&gbest_position, config.constraints.num_classes())?;
    Ok(SearchResult {
        gbest_position,
        gbest_fitness,
        architecture,
        evaluations: history.len() * config.population_size,
        history,
    })
}
