//! The subcommand implementations.
//!
//! Shared rules: the full configuration is validated before any file is
//! touched, existing outputs are only replaced under --force, and every
//! artifact embeds the featurizer hash and tool version so downstream
//! commands can refuse mismatched inputs.

use crate::config::{resolve_arch, CmdError, Settings};
use inkrec_core::dataio::{
    load_inkjson, load_weights, parse_pot, save_archive, save_inkjson, save_weights, Dataset,
    TensorArchive, WeightFile,
};
use inkrec_core::ensemble::{
    load_ensemble, Ensemble, EnsembleManifest, EvalMethod, EvalReport, Member,
};
use inkrec_core::ink::{Ink, Point, Stroke};
use inkrec_core::net::{grad_check, grad_check_with_fault, ArchSpec, Network};
use inkrec_core::nln::{apply_nln, build_map, density_projections, rasterize_binary};
use inkrec_core::pipeline::{featurize_sample, featurize_train, Preset};
use inkrec_core::raster::FeatureTensor;
use inkrec_core::seed::derive_seed;
use inkrec_core::train::train_network;
use inkrec_core::features::{decompose8, Sig2, DIR8_AXES};
use inkrec_core::dataio::{synth_dataset, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Refuse to clobber without --force; create parent directories.
fn ensure_out(path: &Path, force: bool) -> Result<(), CmdError> {
    if path.exists() && !force {
        return Err(CmdError::Failure(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, CmdError> {
    load_inkjson(path)
        .map_err(|e| CmdError::Failure(format!("cannot load dataset {}: {e}", path.display())))
}

pub fn cmd_synth(
    settings: &Settings,
    out: Option<PathBuf>,
    force: bool,
) -> Result<(), CmdError> {
    let dir = out
        .or_else(|| settings.out_dir.clone())
        .ok_or_else(|| CmdError::Config("no output directory: pass --out or set out_dir".into()))?;
    let dataset_path = dir.join("dataset.jsonl");
    let manifest_path = dir.join("synth-manifest.json");
    ensure_out(&dataset_path, force)?;
    ensure_out(&manifest_path, force)?;

    let data = synth_dataset(&settings.synth)?;
    save_inkjson(&dataset_path, &data)?;
    let cfg_json = serde_json::to_string(&settings.synth).expect("config serializes");
    let manifest = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "config_hash": format!("{:016x}", inkrec_core::seed::fnv1a(cfg_json.as_bytes())),
        "num_classes": settings.synth.num_classes,
        "samples_per_class": settings.synth.samples_per_class,
        "jitter_scale": settings.synth.jitter_scale,
        "seed": settings.synth.seed,
        "class_table": data.class_table(),
    });
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())?;
    println!(
        "wrote {} samples across {} classes to {}",
        data.len(),
        data.class_table().len(),
        dataset_path.display()
    );
    Ok(())
}

pub fn cmd_pot2json(input: &Path, out: &Path, force: bool) -> Result<(), CmdError> {
    let bytes = std::fs::read(input)
        .map_err(|e| CmdError::Failure(format!("cannot read {}: {e}", input.display())))?;
    let data = parse_pot(&bytes)?;
    ensure_out(out, force)?;
    save_inkjson(out, &data)?;
    println!(
        "converted {} samples ({} classes) to {}",
        data.len(),
        data.class_table().len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_featurize(
    settings: &Settings,
    dataset: &Path,
    out: &Path,
    train_mode: bool,
    force: bool,
) -> Result<(), CmdError> {
    let data = load_dataset(dataset)?;
    ensure_out(out, force)?;
    let fz = &settings.featurizer;
    let samples: Vec<(u32, FeatureTensor)> = data
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, ink)| {
            let class = data
                .class_index(ink.label().expect("dataset samples are labeled"))
                .expect("dataset labels are in the table") as u32;
            let tensor = if train_mode {
                let draw = derive_seed(settings.seed, "featurize", &[i as u64]);
                featurize_train(ink, fz, &settings.augment, draw)
            } else {
                featurize_sample(ink, fz)
            }
            .map_err(|e| CmdError::Failure(format!("sample {i}: {e}")))?;
            Ok((class, tensor))
        })
        .collect::<Result<_, CmdError>>()?;
    let archive = TensorArchive {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: fz.config_hash(),
        class_table: data.class_table().to_vec(),
        samples,
    };
    save_archive(out, &archive)?;
    println!(
        "featurized {} samples into {}-channel tensors at {}",
        data.len(),
        fz.channels(),
        out.display()
    );
    Ok(())
}

pub fn cmd_train(
    settings: &Settings,
    dataset: &Path,
    out: &Path,
    force: bool,
) -> Result<(), CmdError> {
    let data = load_dataset(dataset)?;
    let fz = &settings.featurizer;
    let spec = resolve_arch(
        &settings.arch,
        fz.channels(),
        fz.render.outer,
        data.class_table().len(),
    )?;
    settings.train.validate(&spec)?;
    let (train_set, holdout) = if settings.holdout_per_class > 0 {
        let (t, h) = data.split_holdout(settings.holdout_per_class)?;
        (t, Some(h))
    } else {
        (data.clone(), None)
    };
    ensure_out(out, force)?;
    let log_path = out.with_extension("log.json");
    ensure_out(&log_path, force)?;

    println!(
        "training {} on {} samples ({} held out), seed {}",
        spec.canonical_string(),
        train_set.len(),
        holdout.as_ref().map_or(0, Dataset::len),
        settings.seed
    );
    let outcome = train_network(
        &train_set,
        holdout.as_ref(),
        fz,
        &settings.augment,
        spec.clone(),
        &settings.train,
        settings.seed,
        |e| match e.holdout_accuracy {
            Some(acc) => println!(
                "  epoch {:>3}  loss {:.4}  holdout {:.2}%",
                e.epoch,
                e.mean_loss,
                acc * 100.0
            ),
            None => println!("  epoch {:>3}  loss {:.4}", e.epoch, e.mean_loss),
        },
    )?;

    save_weights(
        out,
        &WeightFile {
            network: outcome.network,
            feature_hash: fz.config_hash(),
            class_table: data.class_table().to_vec(),
            tool_version: TOOL_VERSION.to_string(),
        },
    )?;
    let log = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "seed": settings.seed,
        "arch": spec.canonical_string(),
        "config_hash": format!("{:016x}", fz.config_hash()),
        "best_epoch": outcome.best_epoch,
        "epochs": outcome.log.iter().map(|e| serde_json::json!({
            "epoch": e.epoch,
            "mean_loss": e.mean_loss,
            "holdout_accuracy": e.holdout_accuracy,
        })).collect::<Vec<_>>(),
    });
    std::fs::write(&log_path, serde_json::to_string_pretty(&log).unwrap())?;
    println!(
        "wrote {} (best epoch {}) and {}",
        out.display(),
        outcome.best_epoch,
        log_path.display()
    );
    Ok(())
}

pub struct EvalArgs {
    pub dataset: PathBuf,
    pub weights: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub method: Option<String>,
    pub threshold: Option<f64>,
    pub member: Option<usize>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

fn build_from_weights(
    settings: &Settings,
    path: &Path,
    threshold: f64,
    force: bool,
) -> Result<Ensemble, CmdError> {
    let wf = load_weights(path)?;
    let expected = settings.featurizer.config_hash();
    if wf.feature_hash != expected && !force {
        return Err(CmdError::Failure(format!(
            "{} was trained with featurizer {:016x}, this config is {:016x}; \
             pass --force to evaluate anyway",
            path.display(),
            wf.feature_hash,
            expected
        )));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "member".into());
    let member = Member {
        name,
        featurizer: settings.featurizer,
        network: wf.network,
    };
    Ok(Ensemble::new(vec![member], wf.class_table, threshold)?)
}

fn build_from_manifest(path: &Path, threshold: Option<f64>, force: bool) -> Result<Ensemble, CmdError> {
    if !force {
        let e = load_ensemble(path)?;
        return match threshold {
            Some(t) => Ok(Ensemble::new(
                e.members().to_vec(),
                e.class_table().to_vec(),
                t,
            )?),
            None => Ok(e),
        };
    }
    // --force: load members without the feature-hash cross-check.
    let text = std::fs::read_to_string(path)?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)
        .map_err(|e| CmdError::Failure(format!("bad manifest {}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut members = Vec::new();
    let mut class_table: Option<Vec<String>> = None;
    for mm in manifest.members {
        let wf = load_weights(&dir.join(&mm.weights))?;
        match &class_table {
            None => class_table = Some(wf.class_table),
            Some(t) if *t != wf.class_table => {
                return Err(CmdError::Failure(format!(
                    "member '{}' has a different class table",
                    mm.name
                )))
            }
            Some(_) => {}
        }
        members.push(Member {
            name: mm.name,
            featurizer: mm.featurizer,
            network: wf.network,
        });
    }
    let table = class_table
        .ok_or_else(|| CmdError::Failure("manifest has no members".into()))?;
    Ok(Ensemble::new(
        members,
        table,
        threshold.unwrap_or(manifest.threshold),
    )?)
}

fn print_report(report: &EvalReport) {
    let s = &report.stats;
    println!("method               {}", s.method);
    println!("threshold            {}", s.threshold);
    println!("samples              {}", s.samples);
    println!("correct              {}", s.correct);
    println!("accuracy             {:.2}%", s.accuracy * 100.0);
    println!("mean members/sample  {:.3}", s.mean_members_evaluated);
    for (i, n) in s.exit_histogram.iter().enumerate() {
        println!("exits at stage {:>2}    {}", i + 1, n);
    }
    println!("fallback decisions   {}", s.fallback_exits);
    println!(
        "wall time            {:.3} s  ({:.1} samples/s)",
        report.timing.wall_seconds, report.timing.samples_per_second
    );
}

pub fn cmd_eval(settings: &Settings, args: &EvalArgs) -> Result<(), CmdError> {
    let method = match args.method.as_deref().unwrap_or("cascade") {
        "hsp" => EvalMethod::Cascade,
        other => other
            .parse::<EvalMethod>()
            .map_err(|e| CmdError::Config(e.to_string()))?,
    };
    let data = load_dataset(&args.dataset)?;
    let mut ensemble = match (&args.weights, &args.manifest) {
        (Some(w), None) => build_from_weights(
            settings,
            w,
            args.threshold.unwrap_or(settings.threshold),
            args.force,
        )?,
        (None, Some(m)) => build_from_manifest(m, args.threshold, args.force)?,
        _ => {
            return Err(CmdError::Config(
                "pass exactly one of --weights or --manifest".into(),
            ))
        }
    };
    if let Some(k) = args.member {
        let members = ensemble.members();
        if k >= members.len() {
            return Err(CmdError::Config(format!(
                "--member {k} out of range, ensemble has {} members",
                members.len()
            )));
        }
        if method != EvalMethod::Single {
            return Err(CmdError::Config(
                "--member only applies to --method single".into(),
            ));
        }
        ensemble = Ensemble::new(
            vec![members[k].clone()],
            ensemble.class_table().to_vec(),
            ensemble.threshold(),
        )?;
    }
    let report = ensemble.evaluate(&data, method)?;
    print_report(&report);
    if let Some(out) = &args.out {
        ensure_out(out, args.force)?;
        std::fs::write(out, serde_json::to_string_pretty(&report).unwrap())?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

/// One embedded verification check.
struct Check {
    name: &'static str,
    run: Box<dyn Fn() -> Result<(), String>>,
}

fn random_polyline(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = rng.random_range(3..=12);
    (0..n)
        .map(|_| Point::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
        .collect()
}

fn check_signature_identities() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let pts = random_polyline(&mut rng);
        let cut_a = rng.random_range(1..pts.len() - 1);
        let full = Sig2::of_polyline(&pts);
        // Chen: the concatenation of piece signatures equals the whole.
        let glued = Sig2::concat(
            Sig2::of_polyline(&pts[..=cut_a]),
            Sig2::of_polyline(&pts[cut_a..]),
        );
        for i in 0..2 {
            if (full.level1[i] - glued.level1[i]).abs() > 1e-10 {
                return Err(format!("case {case}: Chen level1 violated"));
            }
            for j in 0..2 {
                if (full.level2[i][j] - glued.level2[i][j]).abs() > 1e-10 {
                    return Err(format!("case {case}: Chen level2 violated"));
                }
            }
        }
        // Shuffle: S12 + S21 = dx * dy.
        let shuffle = full.level2[0][1] + full.level2[1][0] - full.level1[0] * full.level1[1];
        if shuffle.abs() > 1e-10 {
            return Err(format!("case {case}: shuffle identity off by {shuffle:e}"));
        }
    }
    // The L-path closed form.
    let l = Sig2::of_polyline(&[Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)]);
    let want = [[0.5, 1.0], [0.0, 0.5]];
    for i in 0..2 {
        for j in 0..2 {
            if (l.level2[i][j] - want[i][j]).abs() > 1e-12 {
                return Err("L-path level2 mismatch".into());
            }
        }
    }
    Ok(())
}

fn check_direction_reconstruction() -> Result<(), String> {
    for deg in 0..360 {
        let a = (deg as f64).to_radians();
        let u = [a.cos(), a.sin()];
        let w = decompose8(u).map_err(|e| e.to_string())?;
        let mut rebuilt = [0.0; 2];
        let mut nonzero: Vec<usize> = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            if wi < 0.0 {
                return Err(format!("{deg} deg: negative weight {wi}"));
            }
            if wi > 0.0 {
                nonzero.push(i);
            }
            rebuilt[0] += wi * DIR8_AXES[i][0];
            rebuilt[1] += wi * DIR8_AXES[i][1];
        }
        if (rebuilt[0] - u[0]).abs() > 1e-12 || (rebuilt[1] - u[1]).abs() > 1e-12 {
            return Err(format!("{deg} deg: reconstruction off"));
        }
        let adjacent = match nonzero.as_slice() {
            [_] => true,
            [a, b] => (b - a == 1) || (*a == 0 && *b == 7),
            _ => false,
        };
        if !adjacent {
            return Err(format!("{deg} deg: weights not on adjacent axes: {nonzero:?}"));
        }
    }
    Ok(())
}

fn left_heavy_ink() -> Ink {
    let mut strokes = Vec::new();
    for x in [0.02, 0.15, 0.3] {
        strokes.push(
            Stroke::real(vec![Point::new(x, 0.05), Point::new(x, 0.95)]).unwrap(),
        );
    }
    strokes.push(Stroke::real(vec![Point::new(0.02, 0.5), Point::new(0.3, 0.5)]).unwrap());
    Ink::new(strokes, None).unwrap()
}

fn check_density_equalization() -> Result<(), String> {
    let ink = left_heavy_ink();
    let before = ink.bounding_box().width();
    let after_ink = apply_nln(&ink, 64);
    let after = after_ink.bounding_box().width();
    if after <= before {
        return Err(format!("width did not grow: {before} -> {after}"));
    }
    let grid = rasterize_binary(&ink, 64);
    let (px, py) = density_projections(&grid);
    for proj in [px, py] {
        let map = build_map(&proj);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=64 {
            let v = map.apply(k as f64);
            if v <= prev {
                return Err(format!("coordinate map not strictly monotone at {k}"));
            }
            prev = v;
        }
    }
    Ok(())
}

fn check_gradients(fault: bool) -> Result<(), String> {
    let spec = ArchSpec::parse("1x6x6-2C3-MP2-4N-3Output").map_err(|e| e.to_string())?;
    for seed in [3u64, 4] {
        let worst = if fault {
            grad_check_with_fault(&spec, seed, 0.05)
        } else {
            grad_check(&spec, seed)
        }
        .map_err(|e| e.to_string())?;
        if worst >= 1e-4 {
            return Err(format!("seed {seed}: max relative error {worst:.2e}"));
        }
    }
    Ok(())
}

fn check_cascade_equivalences() -> Result<(), String> {
    let data = synth_dataset(&SynthConfig {
        num_classes: 3,
        samples_per_class: 10,
        jitter_scale: 0.06,
        seed: 77,
    })
    .map_err(|e| e.to_string())?;
    let mut featurizer = Preset::A.featurizer();
    featurizer.render.inner = 12;
    featurizer.render.outer = 12;
    let spec = ArchSpec::parse("1x12x12-2C3-MP2-4N-3Output").map_err(|e| e.to_string())?;
    let members: Vec<Member> = (0..3)
        .map(|i| Member {
            name: format!("m{i}"),
            featurizer,
            network: Network::init(spec.clone(), 100 + i as u64),
        })
        .collect();
    let table = data.class_table().to_vec();
    let never = Ensemble::new(members.clone(), table.clone(), 1.5).map_err(|e| e.to_string())?;
    let always = Ensemble::new(members, table, 0.0).map_err(|e| e.to_string())?;
    for (i, ink) in data.samples().iter().enumerate() {
        let cascade = never.cascade_predict(ink).map_err(|e| e.to_string())?;
        let average = never.average_predict(ink).map_err(|e| e.to_string())?;
        if cascade.class != average.class || cascade.probs != average.probs {
            return Err(format!("sample {i}: threshold>1 differs from averaging"));
        }
        let first = always.cascade_predict(ink).map_err(|e| e.to_string())?;
        let single = always.single_predict(ink).map_err(|e| e.to_string())?;
        if first.class != single.class || first.probs != single.probs {
            return Err(format!("sample {i}: threshold 0 differs from the first member"));
        }
    }
    Ok(())
}

pub fn cmd_selfcheck(fault: Option<&str>) -> Result<(), CmdError> {
    match fault {
        None | Some("gradcheck") => {}
        Some(other) => {
            return Err(CmdError::Config(format!(
                "unknown fault injection '{other}', expected 'gradcheck'"
            )))
        }
    }
    let inject = fault == Some("gradcheck");
    let checks: Vec<Check> = vec![
        Check {
            name: "signature-identities",
            run: Box::new(check_signature_identities),
        },
        Check {
            name: "direction-reconstruction",
            run: Box::new(check_direction_reconstruction),
        },
        Check {
            name: "density-equalization",
            run: Box::new(check_density_equalization),
        },
        Check {
            name: "gradient-check",
            run: Box::new(move || check_gradients(inject)),
        },
        Check {
            name: "cascade-equivalences",
            run: Box::new(check_cascade_equivalences),
        },
    ];
    let mut failures = 0;
    for check in &checks {
        match (check.run)() {
            Ok(()) => println!("check {:<26} ok", check.name),
            Err(reason) => {
                println!("check {:<26} FAIL: {reason}", check.name);
                failures += 1;
            }
        }
    }
    if failures > 0 {
        return Err(CmdError::Failure(format!(
            "{failures} of {} checks failed",
            checks.len()
        )));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
