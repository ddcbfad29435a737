//! Final gbest distance to each target on the surrogate landscape
//! (N=20, 30 generations, 20 seeds). Ranking under exp(-s*d) does not depend
//! on s, so distances alone characterise the run.
use ipnas_core::codec::{Architecture, LayerSpec, PoolType};
use ipnas_core::fitness::architecture_distance;
use ipnas_core::*;
use rand::SeedableRng;

fn conv(f: u8, s: u8, m: u8) -> LayerSpec {
    LayerSpec::Conv {
        filter_size: f,
        feature_maps: m,
        stride: s,
    }
}
fn full(n: u16) -> LayerSpec {
    LayerSpec::FullyConnected { neurons: n }
}

fn main() {
    let targets = [
        (
            "MB",
            Architecture::new(
                vec![
                    conv(2, 1, 26),
                    conv(6, 3, 82),
                    conv(8, 4, 114),
                    conv(7, 4, 107),
                    full(1686),
                    full(10),
                ],
                10,
            )
            .unwrap(),
        ),
        (
            "MDRBI",
            Architecture::new(
                vec![
                    conv(2, 1, 32),
                    conv(6, 3, 90),
                    conv(7, 4, 101),
                    conv(7, 4, 97),
                    LayerSpec::Pool {
                        kernel: 4,
                        stride: 4,
                        pool_type: PoolType::Average,
                        placeholder: 0,
                    },
                    conv(5, 3, 68),
                    full(1577),
                    full(10),
                ],
                10,
            )
            .unwrap(),
        ),
        (
            "CS",
            Architecture::new(
                vec![
                    conv(1, 1, 11),
                    conv(7, 4, 108),
                    conv(1, 1, 8),
                    conv(6, 3, 92),
                    full(906),
                    full(2),
                ],
                2,
            )
            .unwrap(),
        ),
    ];
    let generations: usize = std::env::args().nth(1).map_or(30, |s| s.parse().unwrap());
    let population: usize = std::env::args().nth(2).map_or(20, |s| s.parse().unwrap());
    for (name, target) in targets {
        let classes = target.num_classes();
        let constraints = SlotConstraints::new(9, 3, classes).unwrap();
        let landscape = SurrogateLandscape::new(target.clone(), 0.1).unwrap();
        let mut config = SwarmConfig::new(constraints);
        config.population_size = population;
        config.max_generations = generations;
        let mut rng = SearchRng::seed_from_u64(99);
        let mut random: Vec<f64> = (0..1000)
            .map(|_| {
                let p = constraints.random_position(&mut rng);
                architecture_distance(&decode_particle_position(&p, classes).unwrap(), &target)
            })
            .collect();
        random.sort_by(f64::total_cmp);
        let mut d: Vec<f64> = (0..20u64)
            .map(|s| {
                let r = run(
                    config,
                    &landscape,
                    &mut SearchRng::seed_from_u64(s),
                    &mut |_: &GenerationSnapshot<'_>| {},
                )
                .unwrap();
                let d = architecture_distance(&r.architecture, &target);
                if name == "MB" && s < 6 {
                    let kinds: String = r
                        .architecture
                        .layers()
                        .iter()
                        .map(|l| format!("{} ", l.kind()))
                        .collect();
                    println!(
                        "  seed {s}: d {d:.2} depth {} kinds {kinds}",
                        r.architecture.depth()
                    );
                }
                d
            })
            .collect();
        d.sort_by(f64::total_cmp);
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "{name}: random median {:.2} min {:.2}; search {}",
            random[500],
            random[0],
            fmt(&d)
        );
    }
}
