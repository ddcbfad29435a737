//! Neural architecture search with particle swarm optimisation over an
//! IP-address-style layer encoding.
//!
//! Each CNN layer is a 2-byte address whose high bits select the layer kind
//! (a subnet) and whose low bits carry its hyperparameters ([`codec`]). A
//! particle is a vector of such addresses treated as real-valued bytes
//! ([`particle`]); the swarm keeps every particle decodable and searches
//! with the standard inertia-weight update ([`swarm`]). Candidates are scored
//! by training a small CNN ([`cnn`], [`fitness`]) on image data
//! ([`dataset`]), and runs can be exported for plotting ([`trajectory`],
//! [`pca`]).

pub mod cnn;
pub mod codec;
pub mod dataset;
pub mod fitness;
pub mod particle;
pub mod pca;
pub mod swarm;
pub mod trajectory;

/// Random number generator used throughout the search.
pub type SearchRng = rand_chacha::ChaCha8Rng;

pub use codec::{
    decode_address, decode_particle_position, encode_layer, subnet_of, Architecture, CodecError,
    InterfaceAddress, LayerKind, LayerSpec, PoolType, Subnet,
};
pub use fitness::{
    EvalProtocolConfig, FitnessError, FitnessEvaluator, SurrogateLandscape, TrainingEvaluator,
};
pub use particle::{Particle, ParticleError, PsoCoefficients};
pub use swarm::{
    run, GenerationSnapshot, GenerationStats, Observer, SearchResult, SlotConstraints, Swarm,
    SwarmConfig, SwarmError,
};
