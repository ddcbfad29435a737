//! Share of 30 random architectures that learn (fitness > 0.6) on the
//! desk-scale task. Args: task (lr | bars), noise, train batch size, [lr].
use ipnas_core::dataset::{split, synthetic, SplitSpec};
use ipnas_core::*;
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let task = if a[1] == "lr" {
        synthetic::Task::LeftRight
    } else {
        synthetic::Task::Bars
    };
    let noise: u8 = a[2].parse().unwrap();
    let tbs: usize = a[3].parse().unwrap();
    let lr: f64 = a.get(4).map_or(0.01, |s| s.parse().unwrap());
    let data = synthetic::generate(task, 800, 8, noise, 7);
    let (train, fit) = split(
        &data,
        SplitSpec {
            train_fraction: 0.75,
            seed: 7,
        },
    )
    .unwrap();
    let protocol = EvalProtocolConfig {
        epochs: 2,
        batch_size: 50,
        train_batch_size: tbs,
        learning_rate: lr,
        ..Default::default()
    };
    let evaluator = TrainingEvaluator::new(train, fit, protocol).unwrap();
    let constraints = SlotConstraints::new(9, 3, 2).unwrap();
    let mut rng = SearchRng::seed_from_u64(99);
    let t = Instant::now();
    let mut fs = vec![];
    for _ in 0..30 {
        let arch = decode_particle_position(&constraints.random_position(&mut rng), 2).unwrap();
        let mut erng = SearchRng::seed_from_u64(rand::Rng::gen(&mut rng));
        fs.push(evaluator.evaluate(&arch, &mut erng).unwrap_or(0.0));
    }
    fs.sort_by(|a, b| b.total_cmp(a));
    let learned = fs.iter().filter(|&&f| f > 0.6).count();
    println!(
        "{} noise {noise} tbs {tbs} lr {lr}: learned {learned}/30, top {:?}, {:.1?}",
        a[1],
        fs[..8]
            .iter()
            .map(|f| format!("{f:.2}"))
            .collect::<Vec<_>>(),
        t.elapsed()
    );
}
