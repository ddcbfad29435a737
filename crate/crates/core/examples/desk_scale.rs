//! Timing and paired comparison for the desk-scale end-to-end run:
//! 2-class 8x8 synthetic images (600 train / 200 fitness), N=6, 5
//! generations, k=2, batch size 50, against 36 random architectures.
use ipnas_core::dataset::{split, synthetic, SplitSpec};
use ipnas_core::*;
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task = if args.get(1).map(String::as_str) == Some("lr") {
        synthetic::Task::LeftRight
    } else {
        synthetic::Task::Bars
    };
    let noise: u8 = args.get(2).map_or(128, |s| s.parse().unwrap());
    let seeds: u64 = args.get(3).map_or(10, |s| s.parse().unwrap());
    let tbs: usize = args.get(4).map_or(32, |s| s.parse().unwrap());
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
        ..Default::default()
    };
    let evaluator = TrainingEvaluator::new(train, fit, protocol).unwrap();
    let constraints = SlotConstraints::new(9, 3, 2).unwrap();
    let mut config = SwarmConfig::new(constraints);
    config.population_size = 6;
    config.max_generations = 5;
    let mut wins = 0;
    let total = Instant::now();
    for seed in 0..seeds {
        let t = Instant::now();
        let result = run(
            config,
            &evaluator,
            &mut SearchRng::seed_from_u64(seed),
            &mut |_: &GenerationSnapshot<'_>| {},
        )
        .unwrap();
        let search_time = t.elapsed();
        let t = Instant::now();
        let mut rng = SearchRng::seed_from_u64(seed ^ 0xBA5E);
        let mut best_random = 0.0f64;
        let mut slowest = (0.0, String::new());
        for _ in 0..36 {
            let p = constraints.random_position(&mut rng);
            let arch = decode_particle_position(&p, 2).unwrap();
            let mut erng = SearchRng::seed_from_u64(rand::Rng::gen(&mut rng));
            let t1 = Instant::now();
            let f = evaluator.evaluate(&arch, &mut erng).unwrap_or(0.0);
            let dt = t1.elapsed().as_secs_f64();
            if dt > slowest.0 {
                slowest = (dt, arch.to_string().replace('\n', " / "));
            }
            best_random = best_random.max(f);
        }
        let won = result.gbest_fitness >= best_random;
        wins += usize::from(won);
        println!(
            "seed {seed}: search {:.4} in {:.1?}, random best {:.4} in {:.1?}, {} (slowest {:.1}s: {})",
            result.gbest_fitness, search_time, best_random, t.elapsed(), if won { "win/tie" } else { "LOSS" }, slowest.0, slowest.1
        );
        println!(
            "  history {:?}",
            result
                .history
                .iter()
                .map(|h| format!("{:.3}/{:.3}", h.best_fitness, h.mean_fitness))
                .collect::<Vec<_>>()
        );
    }
    println!("{wins}/{seeds} win or tie; total {:.1?}", total.elapsed());
}
