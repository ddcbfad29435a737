//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary
//! (`harness = false`) and exits non-zero when any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use ipnas_cli::commands;
use ipnas_core::codec::*;
use ipnas_core::dataset::{self, synthetic, LabeledDataset};
use ipnas_core::fitness::mean_batch_accuracy;
use ipnas_core::particle::{wrap_coordinate, Particle, PsoCoefficients};
use ipnas_core::pca::{covariance, mean};
use ipnas_core::trajectory::{self, TrajectoryRecord};
use ipnas_core::*;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: impl Into<String>) -> Outcome {
    if cond {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn within(limit: Duration, elapsed: Duration, detail: String) -> Outcome {
    check(
        elapsed < limit,
        format!("{detail}; {:.2?} (limit {:.0?})", elapsed, limit),
    )
}

fn table_iv_constraints(num_classes: usize) -> SlotConstraints {
    SlotConstraints::new(9, 3, num_classes).expect("Table IV constraints")
}

/// The default surrogate: peaked at the paper's evolved MB architecture.
fn default_surrogate() -> SurrogateLandscape {
    let config = ipnas_cli::RunConfig {
        evaluator: ipnas_cli::config::EvaluatorKind::Surrogate,
        ..Default::default()
    };
    let target = config.surrogate_target().expect("default target");
    SurrogateLandscape::new(target, config.surrogate.sharpness).expect("default sharpness")
}

fn quiet() -> impl FnMut(&GenerationSnapshot<'_>) {
    |_: &GenerationSnapshot<'_>| {}
}

fn c1_golden_vectors() -> Outcome {
    let start = Instant::now();
    let cases = [
        (
            "2.61",
            LayerSpec::Conv {
                filter_size: 2,
                feature_maps: 16,
                stride: 2,
            },
        ),
        (
            "18.143",
            LayerSpec::Pool {
                kernel: 2,
                stride: 2,
                pool_type: PoolType::Max,
                placeholder: 15,
            },
        ),
        ("27.255", LayerSpec::FullyConnected { neurons: 1024 }),
        ("35.255", LayerSpec::Disabled { placeholder: 1023 }),
    ];
    let mut bad = Vec::new();
    for (text, spec) in cases {
        let addr: InterfaceAddress = text.parse().map_err(|e| format!("{e}"))?;
        let decoded = decode_address(addr).ok();
        let encoded = encode_layer(&spec).ok().map(|a| a.to_string());
        if decoded != Some(spec) || encoded.as_deref() != Some(text) {
            bad.push(text);
        }
    }
    if !bad.is_empty() {
        return Err(format!("mismatch on {bad:?}"));
    }
    within(
        Duration::from_secs(1),
        start.elapsed(),
        "4/4 pairs exact".into(),
    )
}

fn c2_exhaustive_round_trip() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut valid = 0;
    for v in 0..=MAX_VALID_ADDRESS {
        let addr = InterfaceAddress::from_u16(v);
        valid += 1;
        match decode_address(addr).and_then(|s| encode_layer(&s)) {
            Ok(back) if back == addr => {}
            _ => mismatches += 1,
        }
    }
    let mut specs = 0;
    for spec in all_layer_specs() {
        specs += 1;
        if encode_layer(&spec).and_then(decode_address) != Ok(spec) {
            mismatches += 1;
        }
    }
    if mismatches > 0 || valid != 10_240 || specs != 10_240 {
        return Err(format!(
            "{mismatches} mismatches over {valid} addresses and {specs} specs"
        ));
    }
    within(
        Duration::from_secs(5),
        start.elapsed(),
        format!("{valid} addresses and {specs} specs, 0 mismatches"),
    )
}

fn c3_subnet_partition() -> Outcome {
    let start = Instant::now();
    let mut overlaps = 0;
    let mut uncovered_valid = 0;
    let mut covered_invalid = 0;
    for v in 0..=u16::MAX {
        let owners = Subnet::ALL
            .iter()
            .filter(|s| s.contains(InterfaceAddress::from_u16(v)))
            .count();
        match (v <= MAX_VALID_ADDRESS, owners) {
            (_, n) if n > 1 => overlaps += 1,
            (true, 0) => uncovered_valid += 1,
            (false, 1) => covered_invalid += 1,
            _ => {}
        }
    }
    let ranges: Vec<String> = Subnet::ALL
        .iter()
        .map(|s| format!("{} {}-{}", s, s.first(), s.last()))
        .collect();
    if overlaps + uncovered_valid + covered_invalid > 0 {
        return Err(format!(
            "{overlaps} overlaps, {uncovered_valid} gaps, {covered_invalid} addresses past 39.255"
        ));
    }
    within(Duration::from_secs(1), start.elapsed(), ranges.join(", "))
}

fn c4_pso_mechanics() -> Outcome {
    let coeffs = PsoCoefficients::default();
    let mut rng = SearchRng::seed_from_u64(4);
    let mut steps = 0;
    let mut violations = 0;
    while steps < 10_000 {
        let pos: Vec<f64> = (0..18).map(|_| rng.gen_range(0.0..256.0)).collect();
        let mut p = Particle::with_random_velocity(pos, coeffs.v_max, &mut rng);
        p.record_fitness(rng.gen());
        for _ in 0..100 {
            let gbest: Vec<f64> = (0..18).map(|_| rng.gen_range(0.0..256.0)).collect();
            p.update_velocity(&gbest, &coeffs, &mut rng)
                .map_err(|e| e.to_string())?;
            p.update_position();
            for d in 0..18 {
                if p.velocity()[d].abs() > coeffs.v_max[d % 2]
                    || !(0.0..256.0).contains(&p.position()[d])
                {
                    violations += 1;
                }
            }
            p.record_fitness(rng.gen());
            steps += 1;
        }
    }
    let wrap = wrap_coordinate(250.0 + 10.0);
    check(
        violations == 0 && wrap == 5.0,
        format!("{steps} steps, {violations} violations; 250 + 10 wraps to {wrap}"),
    )
}

fn c5_constraint_preservation() -> Outcome {
    let constraints = table_iv_constraints(10);
    let mut config = SwarmConfig::new(constraints);
    config.max_generations = 100;
    let landscape = default_surrogate();
    let (mut violations, mut non_fc_last, mut checked) = (0, 0, 0);
    let mut observer = |s: &GenerationSnapshot<'_>| {
        for p in s.particles {
            violations += constraints.violations(p.position()).len();
            if subnet_of(p.interface(8)).map(|s| s.kind()) != Some(LayerKind::FullyConnected) {
                non_fc_last += 1;
            }
            checked += 1;
        }
    };
    run(
        config,
        &landscape,
        &mut SearchRng::seed_from_u64(5),
        &mut observer,
    )
    .map_err(|e| e.to_string())?;
    check(
        violations == 0 && non_fc_last == 0 && checked == 3000,
        format!("{checked} particle-generations, {violations} slot violations, {non_fc_last} non-FC last slots"),
    )
}

fn c6_monotone_and_deterministic() -> Outcome {
    let landscape = default_surrogate();
    let mut config = SwarmConfig::new(table_iv_constraints(10));
    config.max_generations = 20;
    let (mut drops, mut differing) = (0, 0);
    for seed in 0..20u64 {
        let a = run(
            config,
            &landscape,
            &mut SearchRng::seed_from_u64(seed),
            &mut quiet(),
        )
        .map_err(|e| e.to_string())?;
        let b = run(
            config,
            &landscape,
            &mut SearchRng::seed_from_u64(seed),
            &mut quiet(),
        )
        .map_err(|e| e.to_string())?;
        drops += a
            .history
            .windows(2)
            .filter(|w| w[1].gbest_fitness < w[0].gbest_fitness)
            .count();
        let bits = |r: &SearchResult| -> Vec<u64> {
            r.history
                .iter()
                .flat_map(|h| [h.best_fitness, h.mean_fitness, h.gbest_fitness])
                .chain(r.gbest_position.iter().copied())
                .map(f64::to_bits)
                .collect()
        };
        if bits(&a) != bits(&b) || a != b {
            differing += 1;
        }
    }
    check(
        drops == 0 && differing == 0,
        format!("20 seeds: {drops} gbest decreases, {differing} non-reproducible runs"),
    )
}

fn c7_surrogate_convergence() -> Outcome {
    let start = Instant::now();
    let landscape = default_surrogate();
    let mut config = SwarmConfig::new(table_iv_constraints(10));
    config.population_size = 20;
    config.max_generations = 30;
    let mut fits = Vec::new();
    for seed in 0..20u64 {
        let r = run(
            config,
            &landscape,
            &mut SearchRng::seed_from_u64(seed),
            &mut quiet(),
        )
        .map_err(|e| e.to_string())?;
        fits.push(r.gbest_fitness);
    }
    let hits = fits.iter().filter(|&&f| f >= 0.95).count();
    let worst = fits.iter().copied().fold(f64::INFINITY, f64::min);
    let detail = format!("{hits}/20 seeds reach >= 0.95 (worst {worst:.4})");
    if hits < 18 {
        return Err(detail);
    }
    within(Duration::from_secs(30), start.elapsed(), detail)
}

fn c8_gradient_checks() -> Outcome {
    let start = Instant::now();
    let reports = ipnas_core::cnn::gradcheck::standard_suite(8);
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| {
            format!(
                "{} ({} of {} coordinates, worst rel {:.2e})",
                r.name, r.failures, r.checked, r.worst_relative
            )
        })
        .collect();
    if !failed.is_empty() {
        return Err(failed.join("; "));
    }
    let worst = reports.iter().map(|r| r.worst_relative).fold(0.0, f64::max);
    within(
        Duration::from_secs(60),
        start.elapsed(),
        format!(
            "{}: {} coordinates agree at rel 1e-4 or abs 1e-8 (worst relative error above the floor: {worst:.1e})",
            reports.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", "),
            reports.iter().map(|r| r.checked).sum::<usize>()
        ),
    )
}

/// Desk-scale task: generated 2-class 8x8 images.
const DESK_TASK: synthetic::Task = synthetic::Task::Bars;
const DESK_NOISE: u8 = 128;

fn write_desk_config(dir: &Path, seed: u64) -> Result<std::path::PathBuf, String> {
    let data = synthetic::generate(DESK_TASK, 800, 8, DESK_NOISE, 7);
    let (img, lbl) = (dir.join("images.idx"), dir.join("labels.idx"));
    dataset::write_idx(&data, &img, &lbl).map_err(|e| e.to_string())?;
    let config = format!(
        "seed = {seed}\nmax_generations = 5\nevaluator = \"train\"\n\
         pso.population_size = 6\n\
         fitness.epochs = 2\nfitness.batch_size = 50\nfitness.train_batch_size = 8\nfitness.train_fraction = 0.75\nfitness.split_seed = 7\n\
         dataset.format = \"idx\"\ndataset.images = \"images.idx\"\ndataset.labels = \"labels.idx\"\n"
    );
    let path = dir.join("desk.toml");
    std::fs::write(&path, config).map_err(|e| e.to_string())?;
    Ok(path)
}

fn c9_desk_scale() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut wins = 0;
    let mut slowest = Duration::ZERO;
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let config_path = write_desk_config(dir.path(), seed)?;
        let out_dir = dir.path().join(format!("run{seed}"));
        let start = Instant::now();
        let report = commands::search(&config_path, None, &out_dir, &mut std::io::sink())
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());

        // Same evaluator, same number of evaluations, random architectures.
        let config = ipnas_cli::RunConfig::load(&config_path).map_err(|e| e.to_string())?;
        let configured = commands::build_evaluator(&config).map_err(|e| e.to_string())?;
        let constraints = config
            .slot_constraints(configured.num_classes)
            .map_err(|e| e.to_string())?;
        let mut rng = SearchRng::seed_from_u64(seed ^ 0x5A5A_5A5A);
        let budget = report.evaluations;
        let mut best_random = 0.0f64;
        for _ in 0..budget {
            let arch = decode_particle_position(
                &constraints.random_position(&mut rng),
                configured.num_classes,
            )
            .map_err(|e| e.to_string())?;
            let mut eval_rng = SearchRng::seed_from_u64(rng.gen());
            best_random = best_random.max(
                configured
                    .evaluator
                    .evaluate(&arch, &mut eval_rng)
                    .unwrap_or(0.0),
            );
        }
        if budget != 36 {
            return Err(format!("search used {budget} evaluations, expected 36"));
        }
        if report.fitness >= best_random {
            wins += 1;
        }
        rows.push(format!("{:.3}/{:.3}", report.fitness, best_random));
    }
    let detail = format!(
        "search wins or ties in {wins}/10 seeds (search/random best: {}); slowest run {:.1?}",
        rows.join(" "),
        slowest
    );
    check(wins >= 8 && slowest < Duration::from_secs(300), detail)
}

fn c10_protocol_identity() -> Outcome {
    let mut rng = SearchRng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..2000 {
        let batch = rng.gen_range(1..=64);
        let n = batch * rng.gen_range(1..=20);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..10)).collect();
        let preds: Vec<usize> = labels
            .iter()
            .map(|&l| {
                if rng.gen_bool(0.7) {
                    l
                } else {
                    rng.gen_range(0..10)
                }
            })
            .collect();
        let overall = labels.iter().zip(&preds).filter(|(a, b)| a == b).count() as f64 / n as f64;
        worst = worst.max((mean_batch_accuracy(&preds, &labels, batch) - overall).abs());
        cases += 1;
    }
    check(
        worst <= 1e-12,
        format!("{cases} cases, max |difference| {worst:.1e}"),
    )
}

fn c11_pca_oracle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = SearchRng::seed_from_u64(11);
    let records: Vec<TrajectoryRecord> = (0..500)
        .map(|i| TrajectoryRecord {
            generation: i / 50,
            particle: (i % 50) as i64,
            fitness: rng.gen(),
            is_gbest: false,
            position: (0..18).map(|_| rng.gen_range(0.0..256.0)).collect(),
        })
        .collect();
    let trajectory_path = dir.path().join("trajectory.csv");
    trajectory::save(&trajectory_path, &records).map_err(|e| e.to_string())?;
    let ratio = commands::pca(
        &trajectory_path,
        &dir.path().join("pca.csv"),
        &mut std::io::sink(),
    )
    .map_err(|e| e.to_string())?;

    // Oracle on the points as written to (and read back from) the file.
    let points: Vec<Vec<f64>> = trajectory::load(&trajectory_path)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.position)
        .collect();
    let cov = covariance(&points, &mean(&points));
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(18, 18, &cov));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = values.iter().sum();
    let diffs = [
        (ratio[0] - values[0] / total).abs(),
        (ratio[1] - values[1] / total).abs(),
    ];
    let rows = std::fs::read_to_string(dir.path().join("pca.csv"))
        .map_err(|e| e.to_string())?
        .lines()
        .count();
    check(
        diffs[0] < 1e-6 && diffs[1] < 1e-6 && rows == 501,
        format!(
            "explained variance {:.6}/{:.6} vs oracle, |diff| {:.1e}/{:.1e}; {} projection rows",
            ratio[0],
            ratio[1],
            diffs[0],
            diffs[1],
            rows - 1
        ),
    )
}

fn c12_idx_bit_exact() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (n, h, w) = (9usize, 3usize, 4usize);
    let pixels: Vec<u8> = (0..n * h * w).map(|i| (i * 37 % 256) as u8).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let data =
        LabeledDataset::from_bytes(h, w, &pixels, labels.clone()).map_err(|e| e.to_string())?;
    let (img, lbl) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
    dataset::write_idx(&data, &img, &lbl).map_err(|e| e.to_string())?;

    let mut expected_images = vec![0x00, 0x00, 0x08, 0x03];
    for dim in [n, h, w] {
        expected_images.extend((dim as u32).to_be_bytes());
    }
    expected_images.extend(&pixels);
    let mut expected_labels = vec![0x00, 0x00, 0x08, 0x01];
    expected_labels.extend((n as u32).to_be_bytes());
    expected_labels.extend(labels.iter().map(|&l| l as u8));

    let written = (
        std::fs::read(&img).map_err(|e| e.to_string())?,
        std::fs::read(&lbl).map_err(|e| e.to_string())?,
    );
    let back = dataset::load_idx(&img, &lbl).map_err(|e| e.to_string())?;
    let (img2, lbl2) = (dir.path().join("i2.idx"), dir.path().join("l2.idx"));
    dataset::write_idx(&back, &img2, &lbl2).map_err(|e| e.to_string())?;
    let rewritten = (
        std::fs::read(&img2).map_err(|e| e.to_string())?,
        std::fs::read(&lbl2).map_err(|e| e.to_string())?,
    );
    check(
        written.0 == expected_images
            && written.1 == expected_labels
            && rewritten == written
            && back.pixel_bytes() == pixels
            && back.labels() == labels.as_slice(),
        format!(
            "{} image bytes and {} label bytes match the layout and survive a round trip",
            written.0.len(),
            written.1.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("codec golden vectors", c1_golden_vectors),
        ("codec exhaustive round-trip", c2_exhaustive_round_trip),
        ("subnet partition", c3_subnet_partition),
        ("PSO mechanics", c4_pso_mechanics),
        ("constraint preservation", c5_constraint_preservation),
        (
            "gbest monotonicity and determinism",
            c6_monotone_and_deterministic,
        ),
        ("surrogate convergence", c7_surrogate_convergence),
        ("gradient checks", c8_gradient_checks),
        ("desk-scale end-to-end", c9_desk_scale),
        ("fitness protocol identity", c10_protocol_identity),
        ("PCA oracle equivalence", c11_pca_oracle),
        ("IDX bit-exactness", c12_idx_bit_exact),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let number = i + 1;
        if only.is_some_and(|o| o != number) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS criterion {number:>2} ({name}): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {number:>2} ({name}): {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
