//! Particle state and the per-byte velocity/position update.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{coordinate_to_byte, subnet_of, InterfaceAddress, LayerKind};

/// Upper bound of the position domain. Overflow wraps by this amount, not 256.
pub const POSITION_WRAP: f64 = 255.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParticleError {
    #[error("personal best is unset; evaluate the particle before updating it")]
    UnsetPbest,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid PSO coefficient `{name}` = {value}: must be finite and > 0")]
    Coefficient { name: &'static str, value: f64 },
}

/// Inertia, acceleration and velocity limits, with per-byte arrays
/// indexed by the byte position inside an interface (0 = high, 1 = low).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoCoefficients {
    pub w: f64,
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub v_max: [f64; 2],
}

impl Default for PsoCoefficients {
    fn default() -> Self {
        Self {
            w: 0.7298,
            c1: [1.49618, 1.49618],
            c2: [1.49618, 1.49618],
            v_max: [4.0, 25.6],
        }
    }
}

impl PsoCoefficients {
    pub fn validate(&self) -> Result<(), ParticleError> {
        let named = [
            ("w", self.w),
            ("c1[0]", self.c1[0]),
            ("c1[1]", self.c1[1]),
            ("c2[0]", self.c2[0]),
            ("c2[1]", self.c2[1]),
            ("v_max[0]", self.v_max[0]),
            ("v_max[1]", self.v_max[1]),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParticleError::Coefficient { name, value });
            }
        }
        Ok(())
    }
}

/// One velocity coordinate: inertia plus cognitive and social pulls.
#[allow(clippy::too_many_arguments)]
pub fn velocity_component(
    v: f64,
    x: f64,
    pbest: f64,
    gbest: f64,
    w: f64,
    c1: f64,
    c2: f64,
    r1: f64,
    r2: f64,
) -> f64 {
    w * v + c1 * r1 * (pbest - x) + c2 * r2 * (gbest - x)
}

pub fn clamp_velocity(v: f64, v_max: f64) -> f64 {
    v.clamp(-v_max, v_max)
}

/// Folds a coordinate back into `[0, 255]` by repeated +/-255 steps.
pub fn wrap_coordinate(mut x: f64) -> f64 {
    while x > POSITION_WRAP {
        x -= POSITION_WRAP;
    }
    while x < 0.0 {
        x += POSITION_WRAP;
    }
    x
}

/// `x += v` per dimension, wrapped.
pub fn update_position(position: &mut [f64], velocity: &[f64]) -> Result<(), ParticleError> {
    if position.len() != velocity.len() {
        return Err(ParticleError::Dimension {
            expected: position.len(),
            got: velocity.len(),
        });
    }
    for (x, v) in position.iter_mut().zip(velocity) {
        *x = wrap_coordinate(*x + v);
    }
    Ok(())
}

/// Uniform address inside a uniformly chosen subnet among `kinds`.
pub fn random_address<R: Rng + ?Sized>(kinds: &[LayerKind], rng: &mut R) -> InterfaceAddress {
    let kind = kinds
        .choose(rng)
        .expect("at least one layer kind must be allowed");
    let subnet = kind.subnet();
    subnet.address(rng.gen_range(0..subnet.size()) as u16)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    pbest_position: Option<Vec<f64>>,
    pbest_fitness: Option<f64>,
    fitness: Option<f64>,
}

impl Particle {
    /// Panics if the vectors differ in length or the length is odd.
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Self {
        assert_eq!(position.len(), velocity.len(), "position/velocity length");
        assert!(position.len() % 2 == 0, "positions hold whole interfaces");
        Self {
            position,
            velocity,
            pbest_position: None,
            pbest_fitness: None,
            fitness: None,
        }
    }

    /// Velocity drawn uniformly from `[-v_max[i], v_max[i]]` per byte.
    pub fn with_random_velocity<R: Rng + ?Sized>(
        position: Vec<f64>,
        v_max: [f64; 2],
        rng: &mut R,
    ) -> Self {
        let velocity = (0..position.len())
            .map(|d| {
                let m = v_max[d % 2];
                rng.gen_range(-m..=m)
            })
            .collect();
        Self::new(position, velocity)
    }

    pub fn dimension(&self) -> usize {
        self.position.len()
    }

    pub fn num_interfaces(&self) -> usize {
        self.position.len() / 2
    }

    pub fn position(&self) -> &[f64] {
        &self.position
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn pbest_position(&self) -> Option<&[f64]> {
        self.pbest_position.as_deref()
    }

    pub fn pbest_fitness(&self) -> Option<f64> {
        self.pbest_fitness
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    /// Stores the latest fitness and promotes the current position to
    /// personal best when it is strictly better (or no best exists yet).
    /// Returns whether the personal best changed.
    pub fn record_fitness(&mut self, fitness: f64) -> bool {
        self.fitness = Some(fitness);
        let improved = self.pbest_fitness.map_or(true, |best| fitness > best);
        if improved {
            self.pbest_fitness = Some(fitness);
            self.pbest_position = Some(self.position.clone());
        }
        improved
    }

    /// Applies the velocity rule with fresh `r1, r2` per byte, then clamps.
    pub fn update_velocity<R: Rng + ?Sized>(
        &mut self,
        gbest: &[f64],
        coeffs: &PsoCoefficients,
        rng: &mut R,
    ) -> Result<(), ParticleError> {
        let pbest = self
            .pbest_position
            .as_deref()
            .ok_or(ParticleError::UnsetPbest)?;
        if gbest.len() != self.position.len() {
            return Err(ParticleError::Dimension {
                expected: self.position.len(),
                got: gbest.len(),
            });
        }
        for d in 0..self.position.len() {
            let byte = d % 2;
            let r1: f64 = rng.gen();
            let r2: f64 = rng.gen();
            let v = velocity_component(
                self.velocity[d],
                self.position[d],
                pbest[d],
                gbest[d],
                coeffs.w,
                coeffs.c1[byte],
                coeffs.c2[byte],
                r1,
                r2,
            );
            self.velocity[d] = clamp_velocity(v, coeffs.v_max[byte]);
        }
        Ok(())
    }

    pub fn update_position(&mut self) {
        update_position(&mut self.position, &self.velocity)
            .expect("particle vectors share one length");
    }

    /// Address held by interface `slot`.
    pub fn interface(&self, slot: usize) -> InterfaceAddress {
        let byte = |x: f64| coordinate_to_byte(x).expect("positions stay in [0, 256)");
        InterfaceAddress::from_bytes(
            byte(self.position[2 * slot]),
            byte(self.position[2 * slot + 1]),
        )
    }

    /// Overwrites interface `slot` and zeroes its velocity.
    pub fn set_interface(&mut self, slot: usize, addr: InterfaceAddress) {
        let [hi, lo] = addr.bytes();
        self.position[2 * slot] = hi as f64;
        self.position[2 * slot + 1] = lo as f64;
        self.velocity[2 * slot] = 0.0;
        self.velocity[2 * slot + 1] = 0.0;
    }

    /// Replaces interface `slot` with a random valid address when it falls
    /// outside `allowed`. Returns whether a replacement happened.
    pub fn repair_interface<R: Rng + ?Sized>(
        &mut self,
        slot: usize,
        allowed: &[LayerKind],
        rng: &mut R,
    ) -> bool {
        let ok = subnet_of(self.interface(slot)).is_some_and(|s| allowed.contains(&s.kind()));
        if !ok {
            let addr = random_address(allowed, rng);
            self.set_interface(slot, addr);
        }
        !ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn evaluated(position: Vec<f64>, velocity: Vec<f64>) -> Particle {
        let mut p = Particle::new(position, velocity);
        p.record_fitness(0.5);
        p
    }

    #[test]
    fn zero_coefficients_give_zero_velocity() {
        let mut p = evaluated(vec![10.0, 200.0], vec![3.0, -20.0]);
        let coeffs = PsoCoefficients {
            w: 0.0,
            c1: [0.0; 2],
            c2: [0.0; 2],
            v_max: [4.0, 25.6],
        };
        p.update_velocity(&[100.0, 0.0], &coeffs, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(p.velocity(), &[0.0, 0.0]);
    }

    #[test]
    fn consensus_point_is_stationary() {
        let mut p = evaluated(vec![100.0, 100.0], vec![0.0, 0.0]);
        p.update_velocity(
            &[100.0, 100.0],
            &PsoCoefficients::default(),
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        assert_eq!(p.velocity(), &[0.0, 0.0]);
    }

    #[test]
    fn inertia_only_and_clamping() {
        let coeffs = PsoCoefficients {
            c1: [0.0; 2],
            c2: [0.0; 2],
            ..PsoCoefficients::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = evaluated(vec![0.0, 0.0], vec![0.0, 30.0]);
        p.update_velocity(&[0.0, 0.0], &coeffs, &mut rng).unwrap();
        assert_abs_diff_eq!(p.velocity()[1], 21.894, epsilon = 1e-12);

        let mut p = evaluated(vec![0.0, 0.0], vec![0.0, 40.0]);
        p.update_velocity(&[0.0, 0.0], &coeffs, &mut rng).unwrap();
        assert_eq!(p.velocity()[1], 25.6);

        // high byte clamps at 4
        let mut p = evaluated(vec![0.0, 0.0], vec![-10.0, 0.0]);
        p.update_velocity(&[0.0, 0.0], &coeffs, &mut rng).unwrap();
        assert_eq!(p.velocity()[0], -4.0);
    }

    #[test]
    fn unset_pbest_is_a_state_error() {
        let mut p = Particle::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        let err = p
            .update_velocity(
                &[0.0, 0.0],
                &PsoCoefficients::default(),
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap_err();
        assert_eq!(err, ParticleError::UnsetPbest);
    }

    #[test]
    fn gbest_dimension_is_checked() {
        let mut p = evaluated(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert!(matches!(
            p.update_velocity(
                &[0.0],
                &PsoCoefficients::default(),
                &mut ChaCha8Rng::seed_from_u64(0)
            ),
            Err(ParticleError::Dimension { .. })
        ));
    }

    #[test]
    fn wrap_rules() {
        let mut x = [250.0, 10.0, 100.0];
        update_position(&mut x, &[10.0, -15.0, 0.0]).unwrap();
        assert_eq!(x, [5.0, 250.0, 100.0]);
        assert_eq!(wrap_coordinate(255.0), 255.0);
        assert_eq!(wrap_coordinate(0.0), 0.0);
        assert_eq!(wrap_coordinate(-600.0), 165.0);
    }

    #[test]
    fn pbest_keeps_incumbent_on_ties() {
        let mut p = Particle::new(vec![1.0, 1.0], vec![0.0, 0.0]);
        assert!(p.record_fitness(0.4));
        p.position[0] = 9.0;
        assert!(!p.record_fitness(0.4));
        assert_eq!(p.pbest_position().unwrap()[0], 1.0);
        assert!(p.record_fitness(0.41));
        assert_eq!(p.pbest_position().unwrap()[0], 9.0);
        assert!(!p.record_fitness(0.1));
        assert_eq!(p.pbest_fitness(), Some(0.41));
        assert_eq!(p.fitness(), Some(0.1));
    }

    #[test]
    fn repair_replaces_only_disallowed_interfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = Particle::new(vec![35.0, 255.0, 2.0, 61.0, 40.0, 0.0], vec![1.0; 6]);
        assert!(p.repair_interface(0, &[LayerKind::Conv], &mut rng));
        assert!(p.interface(0).value() <= 0x0FFF);
        assert_eq!(&p.velocity()[..2], &[0.0, 0.0]);

        assert!(!p.repair_interface(1, &[LayerKind::Conv], &mut rng));
        assert_eq!(&p.position()[2..4], &[2.0, 61.0]);
        assert_eq!(&p.velocity()[2..4], &[1.0, 1.0]);

        assert!(p.repair_interface(2, &LayerKind::ALL, &mut rng));
        assert!(p.interface(2).is_valid());
    }

    #[test]
    fn random_velocity_respects_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Particle::with_random_velocity(vec![0.0; 18], [4.0, 25.6], &mut rng);
        for (d, v) in p.velocity().iter().enumerate() {
            assert!(v.abs() <= [4.0, 25.6][d % 2]);
        }
    }

    #[test]
    fn coefficient_validation() {
        assert!(PsoCoefficients::default().validate().is_ok());
        let bad = PsoCoefficients {
            w: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
