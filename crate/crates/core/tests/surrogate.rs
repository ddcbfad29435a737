//! The surrogate landscape against an independently written distance and a
//! brute-force argmax over an enumerated lattice of architectures.

use std::collections::HashMap;

use ipnas_core::codec::{Architecture, LayerSpec, PoolType};
use ipnas_core::fitness::{architecture_distance, surrogate_evaluate};
use ipnas_core::SurrogateLandscape;

/// Per-layer gap written from the definition: mean of normalised field
/// differences for same-kind layers, `None` across kinds.
fn oracle_gap(a: &LayerSpec, b: &LayerSpec) -> Option<f64> {
    use LayerSpec::*;
    let norm = |x: f64, y: f64, range: f64| (x - y).abs() / (range - 1.0);
    match (a, b) {
        (
            Conv {
                filter_size: f1,
                feature_maps: m1,
                stride: s1,
            },
            Conv {
                filter_size: f2,
                feature_maps: m2,
                stride: s2,
            },
        ) => Some(
            (norm(*f1 as f64, *f2 as f64, 8.0)
                + norm(*m1 as f64, *m2 as f64, 128.0)
                + norm(*s1 as f64, *s2 as f64, 4.0))
                / 3.0,
        ),
        (
            Pool {
                kernel: k1,
                stride: s1,
                pool_type: t1,
                ..
            },
            Pool {
                kernel: k2,
                stride: s2,
                pool_type: t2,
                ..
            },
        ) => Some(
            (norm(*k1 as f64, *k2 as f64, 4.0)
                + norm(*s1 as f64, *s2 as f64, 4.0)
                + if t1 == t2 { 0.0 } else { 1.0 })
                / 3.0,
        ),
        (FullyConnected { neurons: n1 }, FullyConnected { neurons: n2 }) => {
            Some(norm(*n1 as f64, *n2 as f64, 2048.0))
        }
        (Disabled { .. }, Disabled { .. }) => Some(0.0),
        _ => None,
    }
}

/// Top-down memoised alignment (the library uses a bottom-up table).
fn oracle_edit(
    a: &[LayerSpec],
    b: &[LayerSpec],
    i: usize,
    j: usize,
    memo: &mut HashMap<(usize, usize), f64>,
) -> f64 {
    if i == a.len() {
        return (b.len() - j) as f64;
    }
    if j == b.len() {
        return (a.len() - i) as f64;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let sub = oracle_gap(&a[i], &b[j]).unwrap_or(1.0) + oracle_edit(a, b, i + 1, j + 1, memo);
    let del = 1.0 + oracle_edit(a, b, i + 1, j, memo);
    let ins = 1.0 + oracle_edit(a, b, i, j + 1, memo);
    let best = sub.min(del).min(ins);
    memo.insert((i, j), best);
    best
}

fn oracle_distance(a: &Architecture, b: &Architecture) -> f64 {
    let edit = oracle_edit(a.layers(), b.layers(), 0, 0, &mut HashMap::new());
    edit + (a.depth() as f64 - b.depth() as f64).abs()
}

/// conv(f, m, s) [middle] [hidden fc] fc(10): 32 * 19 * 4 = 2432 members.
fn lattice() -> Vec<Architecture> {
    let mut middles = vec![None];
    for k in 1..=4 {
        for s in 1..=2 {
            for t in [PoolType::Max, PoolType::Average] {
                middles.push(Some(LayerSpec::Pool {
                    kernel: k,
                    stride: s,
                    pool_type: t,
                    placeholder: 0,
                }));
            }
        }
    }
    middles.push(Some(LayerSpec::Conv {
        filter_size: 3,
        feature_maps: 16,
        stride: 1,
    }));
    middles.push(Some(LayerSpec::Conv {
        filter_size: 3,
        feature_maps: 64,
        stride: 1,
    }));
    let hidden = [None, Some(64u16), Some(512), Some(2048)];
    let mut out = Vec::new();
    for f in [1u8, 3, 5, 8] {
        for m in [1u8, 32, 64, 128] {
            for s in [1u8, 2] {
                for mid in &middles {
                    for h in hidden {
                        let mut layers = vec![LayerSpec::Conv {
                            filter_size: f,
                            feature_maps: m,
                            stride: s,
                        }];
                        layers.extend(*mid);
                        layers.extend(h.map(|n| LayerSpec::FullyConnected { neurons: n }));
                        layers.push(LayerSpec::FullyConnected { neurons: 10 });
                        out.push(Architecture::new(layers, 10).unwrap());
                    }
                }
            }
        }
    }
    out
}

#[test]
fn distance_matches_independent_oracle_on_lattice() {
    let lattice = lattice();
    assert_eq!(lattice.len(), 2432);
    let probes = [&lattice[0], &lattice[777], &lattice[2431]];
    for p in probes {
        for a in &lattice {
            let (lib, oracle) = (architecture_distance(a, p), oracle_distance(a, p));
            assert!(
                (lib - oracle).abs() < 1e-12,
                "{a}\nvs\n{p}: {lib} != {oracle}"
            );
        }
    }
}

#[test]
fn argmax_over_lattice_is_the_target() {
    let lattice = lattice();
    for target_index in [5, 1234, 2000] {
        let target = lattice[target_index].clone();
        let landscape = SurrogateLandscape::new(target.clone(), 0.3).unwrap();
        let scores: Vec<f64> = lattice
            .iter()
            .map(|a| surrogate_evaluate(a, &landscape))
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let argmax: Vec<usize> = (0..lattice.len()).filter(|&i| scores[i] == best).collect();
        assert_eq!(best, 1.0);
        assert_eq!(argmax, vec![target_index]);
        for (a, s) in lattice.iter().zip(&scores) {
            assert!((0.0..=1.0).contains(s));
            let expected = (-0.3 * oracle_distance(a, &target)).exp();
            assert!((s - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn off_lattice_target_argmax_matches_brute_force() {
    let target = Architecture::new(
        vec![
            LayerSpec::Conv {
                filter_size: 4,
                feature_maps: 40,
                stride: 2,
            },
            LayerSpec::Pool {
                kernel: 3,
                stride: 2,
                pool_type: PoolType::Average,
                placeholder: 9,
            },
            LayerSpec::FullyConnected { neurons: 300 },
            LayerSpec::FullyConnected { neurons: 10 },
        ],
        10,
    )
    .unwrap();
    let landscape = SurrogateLandscape::new(target.clone(), 1.0).unwrap();
    let lattice = lattice();
    let lib_best = lattice
        .iter()
        .map(|a| surrogate_evaluate(a, &landscape))
        .fold(f64::NEG_INFINITY, f64::max);
    let oracle_best = lattice
        .iter()
        .map(|a| (-oracle_distance(a, &target)).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((lib_best - oracle_best).abs() < 1e-12);
    assert!(lib_best < 1.0);
}
