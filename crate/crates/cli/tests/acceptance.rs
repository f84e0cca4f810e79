//! The numbered verification criteria for the whole pipeline, one test per
//! criterion. Each prints a single `criterion NN (...): PASS` line (visible
//! with --nocapture); a failure panics with the measured numbers so the
//! harness line doubles as the fail report.
//!
//! Criteria 6/7 share one trained toy ensemble and criterion 8 trains six
//! desk-scale networks, so this suite runs for several minutes.

use inkrec_core::augment::DeformPolicy;
use inkrec_core::dataio::{
    load_archive, load_inkjson, load_tensor, load_weights, parse_pot, save_archive, save_inkjson,
    save_tensor, save_weights, synth_dataset, write_pot, Dataset, SynthConfig, TensorArchive,
    WeightFile,
};
use inkrec_core::ensemble::{Ensemble, EvalMethod, Member};
use inkrec_core::features::{decompose8, Sig2, DIR8_AXES};
use inkrec_core::ink::{Ink, Point, Stroke};
use inkrec_core::net::{grad_check, ArchSpec, Network, TrainConfig};
use inkrec_core::nln::{apply_nln, build_map, density_projections, rasterize_binary};
use inkrec_core::pipeline::{FeaturizerConfig, Preset};
use inkrec_core::train::{accuracy, featurize_dataset, train_network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

fn pass(n: u32, name: &str, detail: &str) {
    println!("criterion {n:02} ({name}): PASS — {detail}");
}

/// Numerical reference for level-2 signatures: midpoint Riemann sums of
/// ∫ (X_i(t) − X_i(0)) dX_j(t) with `m` subdivisions per segment. The
/// integrand is linear on each subinterval, so the midpoint rule is exact
/// up to float rounding — an independent check on the closed forms.
fn riemann_sig2(points: &[Point], m: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let first = [points[0].x, points[0].y];
    let last = points.last().unwrap();
    let level1 = [last.x - first[0], last.y - first[1]];
    let mut level2 = [[0.0; 2]; 2];
    for seg in points.windows(2) {
        let a = [seg[0].x, seg[0].y];
        let d = [seg[1].x - a[0], seg[1].y - a[1]];
        let dx = [d[0] / m as f64, d[1] / m as f64];
        for k in 0..m {
            let t = (k as f64 + 0.5) / m as f64;
            let mid = [a[0] + d[0] * t - first[0], a[1] + d[1] * t - first[1]];
            for i in 0..2 {
                for j in 0..2 {
                    level2[i][j] += mid[i] * dx[j];
                }
            }
        }
    }
    (level1, level2)
}

fn max_sig_diff(a: &Sig2, b: &Sig2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        worst = worst.max((a.level1[i] - b.level1[i]).abs());
        for j in 0..2 {
            worst = worst.max((a.level2[i][j] - b.level2[i][j]).abs());
        }
    }
    worst
}

fn random_polyline(rng: &mut ChaCha8Rng, min_pts: usize, max_pts: usize) -> Vec<Point> {
    let n = rng.random_range(min_pts..=max_pts);
    (0..n)
        .map(|_| Point::new(rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0)))
        .collect()
}

#[test]
fn criterion_01_segment_signatures_are_exact() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_closed: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..50 {
        let a = Point::new(rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
        let b = Point::new(rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
        let sig = Sig2::of_polyline(&[a, b]);
        let d = [b.x - a.x, b.y - a.y];
        // A single segment's level 2 is the half outer product of its
        // displacement with itself.
        for i in 0..2 {
            for j in 0..2 {
                worst_closed = worst_closed.max((sig.level2[i][j] - d[i] * d[j] / 2.0).abs());
            }
        }
        let (l1, l2) = riemann_sig2(&[a, b], 10_000);
        for i in 0..2 {
            worst_oracle = worst_oracle.max((sig.level1[i] - l1[i]).abs());
            for j in 0..2 {
                worst_oracle = worst_oracle.max((sig.level2[i][j] - l2[i][j]).abs());
            }
        }
    }

    // The unit L: right then up. Closed form for its level 2.
    let l_path = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)];
    let sig = Sig2::of_polyline(&l_path);
    let want1 = [1.0, 1.0];
    let want2 = [[0.5, 1.0], [0.0, 0.5]];
    let (o1, o2) = riemann_sig2(&l_path, 10_000);
    for i in 0..2 {
        assert!((sig.level1[i] - want1[i]).abs() < 1e-12, "L-path level1[{i}]");
        assert!((sig.level1[i] - o1[i]).abs() < 1e-12, "L-path oracle level1[{i}]");
        for j in 0..2 {
            assert!(
                (sig.level2[i][j] - want2[i][j]).abs() < 1e-12,
                "L-path level2[{i}][{j}] = {} want {}",
                sig.level2[i][j],
                want2[i][j]
            );
            assert!(
                (sig.level2[i][j] - o2[i][j]).abs() < 1e-12,
                "L-path oracle level2[{i}][{j}]"
            );
        }
    }
    assert!(
        worst_closed < 1e-12 && worst_oracle < 1e-12,
        "segment signatures: closed-form dev {worst_closed:e}, oracle dev {worst_oracle:e}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1 s");
    pass(
        1,
        "segment signature exactness",
        &format!("closed-form dev {worst_closed:.2e}, oracle dev {worst_oracle:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_02_signature_algebra_holds() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let cases = 1200;
    for _ in 0..cases {
        let pts = random_polyline(&mut rng, 4, 16);
        let whole = Sig2::of_polyline(&pts);

        // Chen associativity over a three-way split.
        let c1 = rng.random_range(1..pts.len() - 2);
        let c2 = rng.random_range(c1 + 1..pts.len() - 1);
        let (s1, s2, s3) = (
            Sig2::of_polyline(&pts[..=c1]),
            Sig2::of_polyline(&pts[c1..=c2]),
            Sig2::of_polyline(&pts[c2..]),
        );
        let left = Sig2::concat(Sig2::concat(s1, s2), s3);
        let right = Sig2::concat(s1, Sig2::concat(s2, s3));
        worst = worst.max(max_sig_diff(&left, &right));
        worst = worst.max(max_sig_diff(&left, &whole));

        // Shuffle identity ties level 2 to level 1.
        let shuffle =
            whole.level2[0][1] + whole.level2[1][0] - whole.level1[0] * whole.level1[1];
        worst = worst.max(shuffle.abs());

        // Splitting a segment at a collinear midpoint changes nothing.
        let k = rng.random_range(0..pts.len() - 1);
        let t = rng.random_range(0.2..0.8);
        let mid = Point::new(
            pts[k].x + t * (pts[k + 1].x - pts[k].x),
            pts[k].y + t * (pts[k + 1].y - pts[k].y),
        );
        let mut refined = pts.clone();
        refined.insert(k + 1, mid);
        worst = worst.max(max_sig_diff(&whole, &Sig2::of_polyline(&refined)));
    }
    assert!(worst < 1e-10, "worst algebra deviation {worst:e} over {cases} polylines");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}, budget 10 s");
    pass(
        2,
        "signature algebra",
        &format!("{cases} polylines, worst deviation {worst:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_03_direction_decomposition_reconstructs() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for deg in 0..360 {
        let a = (deg as f64).to_radians();
        let u = [a.cos(), a.sin()];
        let w = decompose8(u).unwrap();
        let mut rebuilt = [0.0; 2];
        let mut nonzero = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            assert!(wi >= 0.0, "{deg}°: negative weight {wi}");
            if wi > 0.0 {
                nonzero.push(i);
            }
            rebuilt[0] += wi * DIR8_AXES[i][0];
            rebuilt[1] += wi * DIR8_AXES[i][1];
        }
        worst = worst.max((rebuilt[0] - u[0]).abs().max((rebuilt[1] - u[1]).abs()));
        let adjacent = match nonzero.as_slice() {
            [_] => true,
            [a, b] => b - a == 1 || (*a == 0 && *b == 7),
            _ => false,
        };
        assert!(adjacent, "{deg}°: weights spread beyond adjacent axes: {nonzero:?}");
    }
    assert!(worst < 1e-12, "worst reconstruction error {worst:e}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1 s");
    pass(
        3,
        "direction decomposition",
        &format!("360 angles, worst reconstruction {worst:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_04_channel_accounting() {
    let want = [
        (Preset::A, 1usize),
        (Preset::B, 3),
        (Preset::C, 7),
        (Preset::F, 15),
        (Preset::G, 14),
        (Preset::H, 30),
    ];
    for (preset, channels) in want {
        let got = preset.featurizer().channels();
        assert_eq!(got, channels, "{preset} produced {got} channels, want {channels}");
    }
    pass(4, "channel accounting", "A,B,C,F,G,H → 1,3,7,15,14,30");
}

#[test]
fn criterion_05_gradients_match_finite_differences() {
    let start = Instant::now();
    let spec = ArchSpec::parse("2x8x8-3C3-MP2-8N-4Output").unwrap();
    assert!(
        spec.param_count() >= 50,
        "toy network must offer at least 50 parameters to sample"
    );
    let mut worst: f64 = 0.0;
    for seed in [1u64, 2, 3] {
        let err = grad_check(&spec, seed).unwrap();
        assert!(err < 1e-4, "seed {seed}: max relative error {err:.3e} ≥ 1e-4");
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}, budget 30 s");
    pass(
        5,
        "gradient check",
        &format!("3 seeds × 50 params, worst relative error {worst:.2e}, {elapsed:?}"),
    );
}

/// Shared fixture for criteria 6 and 7: a 4-member ensemble over a 500-sample
/// test set. The first member gets real training so its confidence is high;
/// the rest are barely trained so the cascade has something to fall back to.
struct ToyEnsemble {
    members: Vec<Member>,
    class_table: Vec<String>,
    test: Dataset,
    build_time: Duration,
}

static TOY: OnceLock<ToyEnsemble> = OnceLock::new();

fn toy_featurizer() -> FeaturizerConfig {
    let mut fz = Preset::A.featurizer();
    fz.render.inner = 14;
    fz.render.outer = 16;
    fz
}

fn toy() -> &'static ToyEnsemble {
    TOY.get_or_init(|| {
        let t0 = Instant::now();
        let data = synth_dataset(&SynthConfig {
            num_classes: 10,
            samples_per_class: 80,
            jitter_scale: 0.10,
            seed: 123,
        })
        .unwrap();
        let (train, test) = data.split_holdout(50).unwrap();
        let fz = toy_featurizer();
        let spec = ArchSpec::parse("1x16x16-32C3-MP2-64C3-MP2-64N-10Output").unwrap();
        let strong_cfg = TrainConfig {
            batch_size: 30,
            learning_rate: 0.01,
            momentum: 0.9,
            dropout: vec![],
            epochs: 16,
        };
        let weak_cfg = TrainConfig {
            epochs: 1,
            ..strong_cfg.clone()
        };
        let mut members = Vec::new();
        for (i, cfg) in [
            (0u64, &strong_cfg),
            (1, &weak_cfg),
            (2, &weak_cfg),
            (3, &weak_cfg),
        ] {
            let outcome = train_network(
                &train,
                None,
                &fz,
                &DeformPolicy::disabled(),
                spec.clone(),
                cfg,
                900 + i,
                |_| {},
            )
            .unwrap();
            members.push(Member {
                name: format!("m{i}"),
                featurizer: fz,
                network: outcome.network,
            });
        }
        ToyEnsemble {
            members,
            class_table: data.class_table().to_vec(),
            test,
            build_time: t0.elapsed(),
        }
    })
}

fn toy_ensemble(threshold: f64) -> Ensemble {
    let t = toy();
    Ensemble::new(t.members.clone(), t.class_table.clone(), threshold).unwrap()
}

#[test]
fn criterion_06_cascade_degenerate_thresholds() {
    let start = Instant::now();
    let t = toy();
    let never_exits = toy_ensemble(1.5);
    let always_exits = toy_ensemble(0.0);
    assert_eq!(t.test.len(), 500, "test set is 500 samples");
    for (i, ink) in t.test.samples().iter().enumerate() {
        let cascade = never_exits.cascade_predict(ink).unwrap();
        let average = never_exits.average_predict(ink).unwrap();
        assert_eq!(cascade.class, average.class, "sample {i}: T>1 class differs");
        assert_eq!(cascade.probs, average.probs, "sample {i}: T>1 probs differ");
        assert_eq!(cascade.exit_stage, None, "sample {i}: T>1 must never exit early");

        let first = always_exits.cascade_predict(ink).unwrap();
        let single = always_exits.single_predict(ink).unwrap();
        assert_eq!(first.class, single.class, "sample {i}: T=0 class differs");
        assert_eq!(first.probs, single.probs, "sample {i}: T=0 probs differ");
        assert_eq!(first.exit_stage, Some(1), "sample {i}: T=0 must exit at stage 1");
    }
    let elapsed = start.elapsed() + t.build_time;
    assert!(
        elapsed < Duration::from_secs(120),
        "took {elapsed:?} including training, budget 2 min"
    );
    pass(
        6,
        "cascade degenerate thresholds",
        &format!(
            "500 samples: T=1.5 ≡ averaging, T=0 ≡ first member; {elapsed:?} incl. training"
        ),
    );
}

#[test]
fn criterion_07_cascade_speed_ordering() {
    let t = toy();
    let ensemble = toy_ensemble(0.99);

    let stats = ensemble
        .evaluate(&t.test, EvalMethod::Cascade)
        .unwrap()
        .stats;
    assert!(
        stats.mean_members_evaluated < t.members.len() as f64,
        "cascade evaluated {:.3} members per sample on average, no better than running all {}",
        stats.mean_members_evaluated,
        t.members.len()
    );
    assert!(
        stats.exit_histogram[0] > 250,
        "premise broken: the trained first member exits only {}/500 samples early",
        stats.exit_histogram[0]
    );

    // Wall-clock ordering over the whole test set; minimum of five passes
    // per method to push scheduling noise out of the comparison.
    let min_wall = |method: EvalMethod| {
        (0..5)
            .map(|_| ensemble.evaluate(&t.test, method).unwrap().timing.wall_seconds)
            .fold(f64::INFINITY, f64::min)
    };
    let single = min_wall(EvalMethod::Single);
    let cascade = min_wall(EvalMethod::Cascade);
    let average = min_wall(EvalMethod::Average);
    assert!(
        single < cascade && cascade < average,
        "wall-time ordering violated: single {single:.4}s, cascade {cascade:.4}s, average {average:.4}s"
    );
    pass(
        7,
        "cascade speed ordering",
        &format!(
            "mean members {:.2} of {}, early exits {}/500; wall single {:.1}ms < cascade {:.1}ms < average {:.1}ms",
            stats.mean_members_evaluated,
            t.members.len(),
            stats.exit_histogram[0],
            single * 1e3,
            cascade * 1e3,
            average * 1e3
        ),
    );
}

#[test]
fn criterion_08_desk_scale_learning() {
    let data = synth_dataset(&SynthConfig {
        num_classes: 10,
        samples_per_class: 250,
        jitter_scale: 0.08,
        seed: 42,
    })
    .unwrap();
    let (train, test) = data.split_holdout(50).unwrap();
    assert_eq!((train.len(), test.len()), (2000, 500));

    let cfg = TrainConfig {
        batch_size: 48,
        learning_rate: 0.01,
        momentum: 0.9,
        dropout: vec![],
        epochs: 8,
    };
    let arch = |channels: usize| {
        ArchSpec::parse(&format!(
            "{channels}x48x48-16C3-MP2-32C2-MP2-48C2-MP2-64C2-MP2-80C2-96N-10Output"
        ))
        .unwrap()
    };

    let run = |preset: Preset, seed: u64| -> (f64, Duration) {
        let fz = preset.featurizer();
        let t0 = Instant::now();
        let outcome = train_network(
            &train,
            None,
            &fz,
            &DeformPolicy::disabled(),
            arch(fz.channels()),
            &cfg,
            seed,
            |_| {},
        )
        .unwrap();
        let test_feats = featurize_dataset(&test, &fz).unwrap();
        let acc = accuracy(&outcome.network, &test_feats).unwrap();
        (acc, t0.elapsed())
    };

    let seeds = [11u64, 12, 13];
    let mut acc_a = Vec::new();
    let mut acc_c = Vec::new();
    for &seed in &seeds {
        let (a, wall_a) = run(Preset::A, seed);
        assert!(
            wall_a < Duration::from_secs(600),
            "config A seed {seed} took {wall_a:?}, budget 10 min"
        );
        assert!(a >= 0.90, "config A seed {seed}: accuracy {a:.4} < 0.90");
        acc_a.push(a);
        let (c, _) = run(Preset::C, seed);
        acc_c.push(c);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mc) = (mean(&acc_a), mean(&acc_c));
    assert!(
        mc >= ma - 0.005,
        "signature features underperform: mean C {mc:.4} < mean A {ma:.4} − 0.005"
    );
    pass(
        8,
        "desk-scale learning",
        &format!(
            "3 seeds: config A mean {:.2}% (all ≥ 90%), config C mean {:.2}% (margin {:+.2}pp)",
            ma * 100.0,
            mc * 100.0,
            (mc - ma) * 100.0
        ),
    );
}

#[test]
fn criterion_09_density_equalization_mechanics() {
    let start = Instant::now();
    // Every stroke crammed into the left third of the unit box.
    let ink = Ink::new(
        vec![
            Stroke::real(vec![Point::new(0.02, 0.05), Point::new(0.02, 0.95)]).unwrap(),
            Stroke::real(vec![Point::new(0.15, 0.05), Point::new(0.15, 0.95)]).unwrap(),
            Stroke::real(vec![Point::new(0.30, 0.05), Point::new(0.30, 0.95)]).unwrap(),
            Stroke::real(vec![Point::new(0.02, 0.5), Point::new(0.30, 0.5)]).unwrap(),
        ],
        None,
    )
    .unwrap();
    let n = 64;

    let remapped = apply_nln(&ink, n);
    let before = ink.bounding_box().width();
    let after = remapped.bounding_box().width();
    assert!(
        after > before,
        "x bounding-box width must grow: {before:.4} → {after:.4}"
    );

    let grid = rasterize_binary(&ink, n);
    let (px, py) = density_projections(&grid);
    for proj in [&px, &py] {
        let map = build_map(proj);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=n {
            let v = map.apply(k as f64);
            assert!(v > prev, "map not strictly monotone at knot {k}");
            prev = v;
        }
    }

    // Equalization means: remapped coordinates are linear in cumulative
    // line density. Check against an independent recomputation of the raw
    // (unfloored) run-length densities; the shipped floor and endpoint
    // pinning may shift things by less than one grid cell.
    let raw_density = |along_x: bool| -> Vec<f64> {
        let mut values = vec![0.0; n];
        for scan in 0..n {
            let occupied: Vec<bool> = (0..n)
                .map(|i| if along_x { grid.get(i, scan) } else { grid.get(scan, i) })
                .collect();
            let mut i = 0;
            while i < n {
                let start = i;
                let hit = occupied[i];
                while i < n && occupied[i] == hit {
                    i += 1;
                }
                let w = if hit { 1.0 } else { 1.0 / (i - start) as f64 };
                for v in &mut values[start..i] {
                    *v += w;
                }
            }
        }
        values
    };
    let mut worst: f64 = 0.0;
    for (proj, along_x) in [(&px, true), (&py, false)] {
        let raw = raw_density(along_x);
        let total: f64 = raw.iter().sum();
        let map = build_map(proj);
        let mut cum = 0.0;
        for (k, v) in raw.iter().enumerate() {
            cum += v;
            let ideal = n as f64 * cum / total;
            worst = worst.max((map.apply((k + 1) as f64) - ideal).abs());
        }
    }
    assert!(
        worst <= 1.0,
        "remapped cumulative density strays {worst:.3} cells from linear"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1 s");
    pass(
        9,
        "density equalization",
        &format!(
            "width {before:.3} → {after:.3}, maps monotone, cumulative density within {worst:.3} cells, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_10_format_round_trips() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // POT: integer tablet coordinates and hex labels survive exactly.
    let glyph = |code: &str, dx: f64| {
        Ink::new(
            vec![
                Stroke::real(vec![Point::new(10.0 + dx, 20.0), Point::new(90.0, 20.0 + dx)])
                    .unwrap(),
                Stroke::real(vec![Point::new(50.0, 5.0), Point::new(50.0 + dx, 95.0)]).unwrap(),
            ],
            Some(code.into()),
        )
        .unwrap()
    };
    let pot_data = Dataset::from_samples(vec![
        glyph("4e00", 0.0),
        glyph("4e8c", 4.0),
        glyph("4e09", 9.0),
        glyph("4e00", 2.0),
    ])
    .unwrap();
    let parsed = parse_pot(&write_pot(&pot_data).unwrap()).unwrap();
    assert_eq!(parsed, pot_data, "POT write→parse must reproduce the dataset");

    // JSON lines: float coordinates survive exactly (shortest round-trip
    // float formatting).
    let json_data = synth_dataset(&SynthConfig {
        num_classes: 5,
        samples_per_class: 8,
        jitter_scale: 0.1,
        seed: 77,
    })
    .unwrap();
    let json_path = dir.path().join("d.jsonl");
    save_inkjson(&json_path, &json_data).unwrap();
    assert_eq!(
        load_inkjson(&json_path).unwrap(),
        json_data,
        "JSON-lines write→read must reproduce the dataset"
    );

    // Tensor, archive, and weight files: load→save must give back the bytes.
    let fz = Preset::C.featurizer();
    let feats = featurize_dataset(&json_data, &fz).unwrap();
    let t_path = dir.path().join("one.ikf");
    save_tensor(&t_path, &feats[0].0).unwrap();
    let t_bytes = std::fs::read(&t_path).unwrap();
    let t2_path = dir.path().join("one2.ikf");
    save_tensor(&t2_path, &load_tensor(&t_path).unwrap()).unwrap();
    assert_eq!(t_bytes, std::fs::read(&t2_path).unwrap(), "tensor bytes");

    let archive = TensorArchive {
        tool_version: "test".into(),
        config_hash: fz.config_hash(),
        class_table: json_data.class_table().to_vec(),
        samples: feats.iter().map(|(t, c)| (*c as u32, t.clone())).collect(),
    };
    let a_path = dir.path().join("all.ika");
    save_archive(&a_path, &archive).unwrap();
    let a_bytes = std::fs::read(&a_path).unwrap();
    let a2_path = dir.path().join("all2.ika");
    save_archive(&a2_path, &load_archive(&a_path).unwrap()).unwrap();
    assert_eq!(a_bytes, std::fs::read(&a2_path).unwrap(), "archive bytes");

    let spec = ArchSpec::parse("7x48x48-4C3-MP2-8N-5Output").unwrap();
    let wf = WeightFile {
        network: Network::init(spec, 5),
        feature_hash: fz.config_hash(),
        class_table: json_data.class_table().to_vec(),
        tool_version: "test".into(),
    };
    let w_path = dir.path().join("m.ikw");
    save_weights(&w_path, &wf).unwrap();
    let w_bytes = std::fs::read(&w_path).unwrap();
    let w2_path = dir.path().join("m2.ikw");
    save_weights(&w2_path, &load_weights(&w_path).unwrap()).unwrap();
    assert_eq!(w_bytes, std::fs::read(&w2_path).unwrap(), "weight bytes");

    // Corrupted magic bytes are rejected outright.
    for (name, bytes) in [("tensor", &t_bytes), ("archive", &a_bytes), ("weights", &w_bytes)] {
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        let bad_path = dir.path().join(format!("bad-{name}"));
        std::fs::write(&bad_path, &bad).unwrap();
        let rejected = match name {
            "tensor" => load_tensor(&bad_path).is_err(),
            "archive" => load_archive(&bad_path).is_err(),
            _ => load_weights(&bad_path).is_err(),
        };
        assert!(rejected, "{name} file with corrupted magic must be rejected");
    }
    assert!(parse_pot(&write_pot(&pot_data).unwrap()[..7]).is_err(), "truncated POT");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}, budget 5 s");
    pass(
        10,
        "format round trips",
        &format!("POT, JSON lines, tensor, archive, weights all exact; {elapsed:?}"),
    );
}

#[test]
fn criterion_11_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "seed": 21,
            "dataio": {"num_classes": 4, "samples_per_class": 15, "holdout_per_class": 3},
            "raster": {"inner": 12, "outer": 16},
            "net": {"batch_size": 12, "epochs": 3, "dropout": [0.1, 0.1, 0.1]}
        }"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let run = |args: &[&str]| {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_inkrec"))
            .args(args)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&["synth", "--config", cfg, "--out", dir.path().to_str().unwrap()]);
    let data = dir.path().join("dataset.jsonl");
    let d = data.to_str().unwrap();

    let mut weight_bytes = Vec::new();
    let mut reports = Vec::new();
    for i in 0..2 {
        let model = dir.path().join(format!("run{i}.ikw"));
        run(&[
            "train",
            "--config",
            cfg,
            "--arch",
            "Mx16x16-4C3-MP2-8N-KOutput",
            "--dataset",
            d,
            "--out",
            model.to_str().unwrap(),
        ]);
        weight_bytes.push(std::fs::read(&model).unwrap());
        let report = dir.path().join(format!("report{i}.json"));
        run(&[
            "eval",
            "--config",
            cfg,
            "--dataset",
            d,
            "--weights",
            model.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ]);
        let mut json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        json.as_object_mut().unwrap().remove("timing");
        reports.push(json);
    }
    assert_eq!(
        weight_bytes[0], weight_bytes[1],
        "same config and seed must give byte-identical weight files"
    );
    assert_eq!(
        reports[0], reports[1],
        "evaluation reports must match apart from timing"
    );
    pass(
        11,
        "training reproducibility",
        "two full train+eval runs: identical weight bytes and reports",
    );
}
