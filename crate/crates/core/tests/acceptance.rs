//! Acceptance suite. Prints one `PASS`, `FAIL` or `SKIP` line per criterion
//! and exits non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use binotab::combinatorics::{enumerate_prefix, rank, total_combinations, unrank};
use binotab::data::{BalancedSampler, Manifest, DATA_DIR_ENV};
use binotab::experiment::{evaluate, run_experiment, run_on_datasets, RepetitionReport, RunReport};
use binotab::losses::{binary_log_gradient, binary_log_loss, hinge_gradient, hinge_loss};
use binotab::{
    synthetic, Activation, ArchitectureKind, BinaryLabel, DenseLayer, ExperimentConfig, Layer,
    Matrix, Network,
};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

enum Outcome {
    Done(Check),
    Skip(String),
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_oracle() -> Outcome {
    Outcome::Done(loss_gradients().and_then(|a| network_gradients().map(|b| format!("{a}; {b}"))))
}

fn loss_gradients() -> Check {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for label in [BinaryLabel::Positive, BinaryLabel::Negative] {
        let gt = label.sign();
        for i in -3000..=3000 {
            let out = i as f64 * 0.005 + 0.0013;
            let fd_log = (binary_log_loss(out + h, label) - binary_log_loss(out - h, label)) / (2.0 * h);
            let err = (binary_log_gradient(out, label, 1.0) - fd_log).abs();
            ensure(err <= 1e-6, || format!("binary-log gradient off by {err:e} at out={out}, gt={gt}"))?;
            worst = worst.max(err);
            checked += 1;
            if (1.0 - gt * out).abs() < 1e-3 {
                continue;
            }
            let fd_hinge = (hinge_loss(out + h, label) - hinge_loss(out - h, label)) / (2.0 * h);
            let err = (hinge_gradient(out, label, 1.0) - fd_hinge).abs();
            ensure(err <= 1e-6, || format!("hinge gradient off by {err:e} at out={out}, gt={gt}"))?;
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(format!("{checked} loss points, max abs error {worst:.1e}"))
}

fn network_gradients() -> Check {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (seed, hidden) in [(1u64, Activation::Relu), (2, Activation::Sigmoid), (3, Activation::Relu)] {
        let mut net = Network::new(vec![
            Layer::new(DenseLayer::xavier(4, 8, seed).map_err(|e| e.to_string())?, hidden),
            Layer::new(DenseLayer::xavier(8, 1, seed + 100).map_err(|e| e.to_string())?, Activation::Identity),
        ])
        .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in net.parameters_mut() {
            for v in p.as_mut_slice() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let x = Matrix::from_vec(6, 4, (0..24).map(|_| rng.random_range(-2.0..2.0)).collect())
            .map_err(|e| e.to_string())?;
        let upstream = Matrix::from_vec(6, 1, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let objective = |n: &Network, x: &Matrix| -> f64 {
            let out = n.predict(x).unwrap();
            out.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum()
        };
        let z0 = net.layers()[0].dense.affine(&x).map_err(|e| e.to_string())?;
        ensure(
            z0.as_slice().iter().all(|z| z.abs() > 1e-4),
            || "a hidden pre-activation sits on the relu kink".into(),
        )?;
        let (_, cache) = net.forward(&x).map_err(|e| e.to_string())?;
        let (grads, input_grad) = net.backward(&cache, &upstream).map_err(|e| e.to_string())?;
        let analytic: Vec<Matrix> = grads.tensors().into_iter().cloned().collect();

        let h = 1e-6;
        for (t, tensor) in analytic.iter().enumerate() {
            for (k, &g) in tensor.as_slice().iter().enumerate() {
                let mut plus = net.clone();
                plus.parameters_mut()[t].as_mut_slice()[k] += h;
                let mut minus = net.clone();
                minus.parameters_mut()[t].as_mut_slice()[k] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                let err = relative(g, fd);
                ensure(err <= 1e-5, || format!("parameter tensor {t}[{k}]: relative error {err:e}"))?;
                worst = worst.max(err);
                checked += 1;
            }
        }
        for k in 0..x.as_slice().len() {
            let mut plus = x.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = x.clone();
            minus.as_mut_slice()[k] -= h;
            let fd = (objective(&net, &plus) - objective(&net, &minus)) / (2.0 * h);
            let err = relative(input_grad.as_slice()[k], fd);
            ensure(err <= 1e-5, || format!("input gradient [{k}]: relative error {err:e}"))?;
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(format!("{checked} network partials, max relative error {worst:.1e}"))
}

/// Relative error with an absolute floor for partials that are zero.
fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn combinatorics_oracle() -> Outcome {
    let check = || -> Check {
        for f in 1..=12usize {
            let total = (1usize << f) - 1;
            let got: Vec<Vec<usize>> = enumerate_prefix(f, total)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|c| c.indices().to_vec())
                .collect();
            ensure(got.len() == total, || format!("F={f}: {} subsets, expected {total}", got.len()))?;
            let expected: BTreeSet<Vec<usize>> = (1..=total)
                .map(|mask| (0..f).filter(|i| mask >> i & 1 == 1).collect())
                .collect();
            let seen: BTreeSet<Vec<usize>> = got.iter().cloned().collect();
            ensure(seen.len() == total, || format!("F={f}: duplicate subsets"))?;
            ensure(seen == expected, || format!("F={f}: subsets differ from brute force"))?;
            let ordered = got
                .windows(2)
                .all(|w| (w[0].len(), &w[0]) < (w[1].len(), &w[1]));
            ensure(ordered, || format!("F={f}: not in size-then-lexicographic order"))?;
            for r in 0..total {
                let r = BigUint::from(r);
                let c = unrank(f, &r).map_err(|e| e.to_string())?;
                let back = rank(f, &c).map_err(|e| e.to_string())?;
                ensure(back == r, || format!("F={f}: rank(unrank({r})) = {back}"))?;
            }
        }
        for (f, want) in [(8usize, 255u64), (14, 16_383), (31, 2_147_483_647)] {
            let got = total_combinations(f).map_err(|e| e.to_string())?;
            ensure(got == BigUint::from(want), || format!("F={f}: {got} combinations, expected {want}"))?;
        }
        Ok("F=1..12 exhaustive; counts 255, 16383, 2147483647".into())
    };
    Outcome::Done(check())
}

fn quick_config(kind: ArchitectureKind, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("in-memory", kind);
    cfg.training.epochs = 30;
    cfg.training.batch_size = 1000;
    cfg.training.repetitions = 1;
    cfg.training.base_seed = seed;
    cfg
}

fn xor_task() -> Outcome {
    let check = || -> Check {
        let mut accs = Vec::new();
        for seed in 0..5u64 {
            let train = synthetic::xor(5000, 6, 1000 + seed).map_err(|e| e.to_string())?;
            let test = synthetic::xor(2000, 6, 2000 + seed).map_err(|e| e.to_string())?;
            let cfg = quick_config(ArchitectureKind::Proposed, seed);
            let out = run_on_datasets(&cfg, "xor", &train, &test).map_err(|e| e.to_string())?;
            let rep = &out.report.repetitions[0];
            let neurons = out.networks[0].as_ref().map(|n| n.layers()[0].dense.out_units());
            ensure(neurons == Some(255), || format!("first layer has {neurons:?} neurons"))?;
            let acc = rep.test.map(|m| m.accuracy).ok_or_else(|| format!("seed {seed}: {:?}", rep.error))?;
            accs.push(acc);
        }
        let fmt: Vec<String> = accs.iter().map(|a| format!("{a:.4}")).collect();
        let passed = accs.iter().filter(|&&a| a >= 0.95).count();
        ensure(passed == 5, || format!("{passed}/5 seeds reach 0.95, accuracies [{}]", fmt.join(", ")))?;
        Ok(format!("5/5 seeds >= 0.95, accuracies [{}]", fmt.join(", ")))
    };
    Outcome::Done(check())
}

fn separable_task() -> Outcome {
    let check = || -> Check {
        let train = synthetic::separable(8000, 0.2, 11).map_err(|e| e.to_string())?;
        let test = synthetic::separable(1000, 0.2, 12).map_err(|e| e.to_string())?;
        let mut notes = Vec::new();
        for kind in ArchitectureKind::ALL {
            let cfg = quick_config(kind, 0);
            let out = run_on_datasets(&cfg, "separable", &train, &test).map_err(|e| e.to_string())?;
            let rep = &out.report.repetitions[0];
            let f1 = rep.test.map(|m| m.f1).ok_or_else(|| format!("{kind}: {:?}", rep.error))?;
            ensure(f1 == 1.0, || format!("{kind}: test f1 {f1}"))?;
            notes.push(format!("{kind} epoch {}", rep.selected_epoch.unwrap_or(0)));
        }
        Ok(format!("f1 == 1.0 for all four ({})", notes.join(", ")))
    };
    Outcome::Done(check())
}

fn adult_manifest() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("BINOTAB_ADULT_MANIFEST").map(PathBuf::from),
        Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/adult/manifest.toml")),
    ];
    let manifest_path = candidates.into_iter().flatten().find(|p| p.exists())?;
    let manifest = Manifest::load(&manifest_path).ok()?;
    let present = manifest.resolve(&manifest.train).exists() && manifest.resolve(&manifest.test).exists();
    present.then_some(manifest_path)
}

fn adult() -> Outcome {
    let Some(manifest) = adult_manifest() else {
        return Outcome::Skip(format!(
            "Adult files not found (set {DATA_DIR_ENV} to the directory holding adult.data and adult.test)"
        ));
    };
    let check = || -> Check {
        let targets = [
            (ArchitectureKind::Proposed, 0.658),
            (ArchitectureKind::PropRnd, 0.659),
            (ArchitectureKind::PropEns, 0.661),
            (ArchitectureKind::Mlp, 0.651),
        ];
        let mut notes = Vec::new();
        let mut failures = Vec::new();
        for (kind, target) in targets {
            let mut cfg = ExperimentConfig::new(&manifest, kind);
            cfg.training.repetitions = 5;
            let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
            let f1 = out.report.mean.map(|m| m.f1).unwrap_or(f64::NAN);
            let note = format!("{} {f1:.3} (target {target:.3})", out.report.label);
            if (f1 - target).abs() <= 0.03 {
                notes.push(note);
            } else {
                failures.push(note);
            }
        }
        ensure(failures.is_empty(), || format!("outside +-0.03: {}", failures.join(", ")))?;
        Ok(notes.join(", "))
    };
    Outcome::Done(check())
}

fn nan_semantics() -> Outcome {
    let check = || -> Check {
        let data = synthetic::imbalanced(400, 40, 3, 5).map_err(|e| e.to_string())?;
        let net = Network::new(vec![Layer::new(
            DenseLayer::new(
                Matrix::zeros(1, 3).map_err(|e| e.to_string())?,
                Matrix::filled(1, 1, -1.0).map_err(|e| e.to_string())?,
                None,
            )
            .map_err(|e| e.to_string())?,
            Activation::Identity,
        )])
        .map_err(|e| e.to_string())?;
        let m = evaluate(&net, &data).map_err(|e| e.to_string())?;
        ensure(m.precision.is_nan(), || format!("precision {}", m.precision))?;
        ensure(m.recall == 0.0, || format!("recall {}", m.recall))?;
        ensure(m.f1.is_nan(), || format!("f1 {}", m.f1))?;

        let report = RunReport {
            label: "Constant".into(),
            dataset: "imbalanced".into(),
            config: quick_config(ArchitectureKind::Mlp, 0),
            repetitions: vec![RepetitionReport {
                repetition: 0,
                seed: 0,
                test: Some(m),
                selected_epoch: Some(1),
                steps: 0,
                trace: vec![],
                error: None,
            }],
            mean: Some(m),
            wall_clock_seconds: 0.0,
        };
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        report.write(dir.path()).map_err(|e| e.to_string())?;
        let json = std::fs::read_to_string(dir.path().join(binotab::experiment::REPORT_FILE))
            .map_err(|e| e.to_string())?;
        let value: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
        for scope in [&value["mean"], &value["repetitions"][0]["test"]] {
            ensure(scope["precision"] == "NaN", || format!("precision serialized as {}", scope["precision"]))?;
            ensure(scope["f1"] == "NaN", || format!("f1 serialized as {}", scope["f1"]))?;
            ensure(scope["recall"].as_f64() == Some(0.0), || format!("recall serialized as {}", scope["recall"]))?;
        }
        let table = std::fs::read_to_string(dir.path().join(binotab::experiment::TABLE_FILE))
            .map_err(|e| e.to_string())?;
        let mean_row = table.lines().last().unwrap_or_default();
        let cells: Vec<&str> = mean_row.split_whitespace().rev().take(3).collect();
        ensure(cells == ["NaN", ".000", "NaN"], || format!("table row {mean_row:?}"))?;
        Ok("precision \"NaN\", recall .000, f1 \"NaN\"".into())
    };
    Outcome::Done(check())
}

fn write_fixture(dir: &Path) -> std::io::Result<PathBuf> {
    use std::fmt::Write as _;
    let train = synthetic::xor(600, 2, 77).expect("xor data");
    let test = synthetic::xor(200, 2, 78).expect("xor data");
    let csv = |d: &binotab::TabularDataset| {
        let mut s = String::from("a,b,c,d,y\n");
        for (row, l) in d.features.iter_rows().zip(&d.labels) {
            for v in row {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{}", if l.is_positive() { "yes" } else { "no" });
        }
        s
    };
    std::fs::write(dir.join("train.csv"), csv(&train))?;
    std::fs::write(dir.join("test.csv"), csv(&test))?;
    std::fs::write(
        dir.join("schema.toml"),
        "[[column]]\nname = \"a\"\nkind = \"numeric\"\n\
         [[column]]\nname = \"b\"\nkind = \"numeric\"\n\
         [[column]]\nname = \"c\"\nkind = \"numeric\"\n\
         [[column]]\nname = \"d\"\nkind = \"numeric\"\n\
         [[column]]\nname = \"y\"\nkind = \"label\"\npositive = [\"yes\"]\n",
    )?;
    let manifest = dir.join("manifest.toml");
    std::fs::write(
        &manifest,
        "name = \"fixture\"\ntrain = \"train.csv\"\ntest = \"test.csv\"\nschema = \"schema.toml\"\n",
    )?;
    Ok(manifest)
}

fn determinism() -> Outcome {
    let check = || -> Check {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let manifest = write_fixture(dir.path()).map_err(|e| e.to_string())?;
        let mut checked = Vec::new();
        for kind in ArchitectureKind::ALL {
            let mut cfg = ExperimentConfig::new(&manifest, kind);
            cfg.training.epochs = 3;
            cfg.training.batch_size = 128;
            cfg.training.repetitions = 3;
            cfg.training.base_seed = 42;
            if kind == ArchitectureKind::PropEns {
                cfg.architecture.loss.mask_rate = 0.3;
            }
            let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
            let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
            let (pa, pb) = (a.report.metrics_payload(), b.report.metrics_payload());
            ensure(pa.as_bytes() == pb.as_bytes(), || format!("{kind}: payloads differ"))?;
            ensure(a.networks == b.networks, || format!("{kind}: selected snapshots differ"))?;
            checked.push(format!("{kind} {} bytes", pa.len()));
        }
        Ok(format!("identical payloads ({})", checked.join(", ")))
    };
    Outcome::Done(check())
}

fn balanced_sampler() -> Outcome {
    let check = || -> Check {
        let data = synthetic::imbalanced(20_000, 1000, 2, 9).map_err(|e| e.to_string())?;
        ensure(data.positives() * 20 == data.rows(), || "dataset is not 95/5".into())?;
        let mut sampler = BalancedSampler::new(&data, 3).map_err(|e| e.to_string())?;
        for b in 0..1000 {
            let idx = sampler.sample_indices(1000).map_err(|e| e.to_string())?;
            let pos = idx.iter().filter(|&&i| data.labels[i].is_positive()).count();
            ensure(idx.len() == 1000 && pos == 500, || {
                format!("batch {b}: {} rows, {pos} positive", idx.len())
            })?;
        }
        Ok("1000/1000 batches with 500 + 500".into())
    };
    Outcome::Done(check())
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { id: 1, name: "gradient oracle", budget: Some(Duration::from_secs(10)), run: gradient_oracle },
        Criterion { id: 2, name: "combinatorics oracle", budget: Some(Duration::from_secs(10)), run: combinatorics_oracle },
        Criterion { id: 3, name: "xor interaction task", budget: Some(Duration::from_secs(120)), run: xor_task },
        Criterion { id: 4, name: "separable sanity", budget: Some(Duration::from_secs(60)), run: separable_task },
        Criterion { id: 5, name: "adult reproduction", budget: None, run: adult },
        Criterion { id: 6, name: "nan semantics", budget: None, run: nan_semantics },
        Criterion { id: 7, name: "determinism", budget: None, run: determinism },
        Criterion { id: 8, name: "balanced sampler", budget: None, run: balanced_sampler },
    ];
    let mut failed = 0;
    for c in &criteria {
        if !args.is_empty() && !args.iter().any(|a| c.name.contains(a.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Outcome::Skip(why) => ("SKIP", why),
            Outcome::Done(Err(why)) => ("FAIL", why),
            Outcome::Done(Ok(detail)) => match c.budget {
                Some(b) if elapsed > b => ("FAIL", format!("{detail}; took {elapsed:.1?}, budget {b:?}")),
                _ => ("PASS", detail),
            },
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("[{status}] {}. {} ({:.2}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
