//! One line per acceptance criterion: `PASS`, `FAIL` or `SKIP`, with the
//! measured quantity and wall time.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use muvi_core::gems::gems_lookup;
use muvi_core::harness::{
    agreement_table, build_golds, describe, make_folds, resample_records, synthesize, SynthConfig, TransferBenchmark,
};
use muvi_core::io::read_annotations;
use muvi_core::lasso::{default_alpha_grid, lasso_cv, lasso_fit, LassoConfig, StandardizedProblem};
use muvi_core::metrics::{ccc, pearson, rmse};
use muvi_core::neural::{build_a1, build_a2, build_pair, Example, ModelSpec, Regressor, TrainedModel};
use muvi_core::preprocess::{ResampleConfig, ZScore};
use muvi_core::record::{Channel, Dimension, Modality};
use muvi_core::stats::{chi_square_contingency, kruskal_wallis, label_cooccurrence, mann_whitney_u};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() < tol
}

// ---------------------------------------------------------------------------

fn metrics_suite() -> Verdict {
    let examples = [
        (pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0),
        (pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5),
        (pearson(&[0.1, 0.4, -0.2], &[0.1, 0.4, -0.2]).unwrap(), 1.0),
        (ccc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0),
        (ccc(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(), 4.0 / 7.0),
        (ccc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0),
        (rmse(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0),
        (rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0),
        (rmse(&[1.0, 2.0, 3.0], &[2.0, 4.0, 3.0]).unwrap(), (5.0f64 / 3.0).sqrt()),
    ];
    let bad_examples = examples.iter().filter(|(got, want)| !close(*got, *want, 1e-12)).count();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut bad_props = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..50);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = ccc(&a, &b).unwrap();
        let shift = rng.random_range(-3.0..3.0);
        let scale = rng.random_range(0.1..10.0);
        let sa: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        let sb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
        let ok = (-1.0..=1.0).contains(&c)
            && close(c, ccc(&b, &a).unwrap(), 1e-12)
            && close(c, ccc(&sa, &sb).unwrap(), 1e-9);
        bad_props += usize::from(!ok);
    }
    check(
        bad_examples == 0 && bad_props == 0,
        format!("{} examples off, {bad_props}/1000 property violations", bad_examples),
    )
}

/// Unweighted mean per (media, modality, dimension) from the resampled traces.
fn unweighted_means(
    records: &[muvi_core::record::AnnotationRecord],
) -> BTreeMap<(String, Modality, Dimension), Vec<f64>> {
    let seqs = resample_records(records, &ResampleConfig::default()).unwrap();
    let mut sums: BTreeMap<(String, Modality, Dimension), (Vec<f64>, usize)> = BTreeMap::new();
    for (r, s) in records.iter().zip(&seqs) {
        for d in Dimension::ALL {
            let e = sums.entry((r.media_id.clone(), r.modality, d)).or_insert((vec![0.0; s.len()], 0));
            for (acc, v) in e.0.iter_mut().zip(s.dimension(d)) {
                *acc += v;
            }
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (v, n))| (k, v.into_iter().map(|x| x / n as f64).collect())).collect()
}

fn ewe_oracle() -> Verdict {
    let mut adversary_leaks = 0;
    let mut wins = 0;
    for seed in 0..20 {
        let mut cfg = SynthConfig { seed, ..SynthConfig::default() };
        cfg.annotators.count = 6;
        cfg.annotators.adversaries = 1;
        let data = synthesize(&cfg).unwrap();
        let golds = build_golds(&data.records, &ResampleConfig::default()).unwrap();
        let means = unweighted_means(&data.records);
        let (mut ewe_sum, mut mean_sum) = (0.0, 0.0);
        for (key, res) in &golds {
            for adv in &data.adversaries {
                if res.gold.annotator_weights.get(adv).is_some_and(|w| *w != 0.0) {
                    adversary_leaks += 1;
                }
            }
            let latent = data.latent_for(&key.media_id, key.modality, key.dimension).unwrap();
            let mean = &means[&(key.media_id.clone(), key.modality, key.dimension)];
            let n = latent.values.len().min(res.gold.values.len());
            ewe_sum += ccc(&res.gold.values[..n], &latent.values[..n]).unwrap();
            mean_sum += ccc(&mean[..n], &latent.values[..n]).unwrap();
        }
        if ewe_sum >= mean_sum {
            wins += 1;
        }
    }
    check(adversary_leaks == 0 && wins >= 18, format!("adversary weight > 0 in {adversary_leaks} golds, EWE >= mean in {wins}/20 seeds"))
}

fn lasso_recovery() -> Verdict {
    let (n, d) = (500, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut features: Vec<usize> = (0..d).collect();
    features.shuffle(&mut rng);
    let truth: Vec<(usize, f64)> =
        features[..5].iter().map(|&j| (j, rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })).collect();
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| truth.iter().map(|(j, b)| b * r[*j]).sum::<f64>() + rng.random_range(-0.5..0.5)).collect();
    let cfg = LassoConfig::default();
    let grid = default_alpha_grid(&x, &y, 50).unwrap();
    let cv = lasso_cv(&x, &y, None, &grid, 5, 0, &cfg).unwrap();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| cv.model.coefficients[*b].abs().total_cmp(&cv.model.coefficients[*a].abs()));
    let recovered = truth.iter().filter(|(j, _)| order[..10].contains(j)).count();
    let kkt = StandardizedProblem::new(&x, &y).unwrap().kkt_violation(&cv.model.standardized_coefficients, cv.best_alpha);

    // Walsh columns: mean 0, unit variance, mutually orthogonal.
    let ortho: Vec<Vec<f64>> =
        (0..16usize).map(|i| (1..=4usize).map(|j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect()).collect();
    let yo: Vec<f64> = ortho.iter().map(|r| 1.5 * r[0] - 0.4 * r[1] + 0.05 * r[3] + rng.random_range(-0.2..0.2)).collect();
    let ybar = yo.iter().sum::<f64>() / 16.0;
    let tight = LassoConfig { tol: 1e-12, max_sweeps: 100_000 };
    let mut soft_err = 0.0f64;
    for alpha in [0.0, 0.1, 0.5, 1.0] {
        let m = lasso_fit(&ortho, &yo, None, alpha, &tight).unwrap();
        for j in 0..4 {
            let ols = ortho.iter().zip(&yo).map(|(r, v)| r[j] * (v - ybar)).sum::<f64>() / 16.0;
            let expected = ols.signum() * (ols.abs() - alpha).max(0.0);
            soft_err = soft_err.max((m.standardized_coefficients[j] - expected).abs());
        }
    }
    check(
        recovered == 5 && kkt < 1e-6 && soft_err < 1e-8,
        format!("{recovered}/5 true features in top 10, KKT {kkt:.1e}, soft-threshold error {soft_err:.1e}"),
    )
}

fn gradient_error(net: &Regressor, examples: &[Example]) -> f64 {
    let refs: Vec<&Example> = examples.iter().collect();
    let analytic = net.loss_and_grad::<ChaCha8Rng>(&refs, None).unwrap().1.flatten();
    let eps = 1e-6;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut k = 0;
    for s in 0..probe.params.slices().len() {
        for i in 0..probe.params.slices()[s].len() {
            let orig = probe.params.slices()[s][i];
            probe.params.slices_mut()[s][i] = orig + eps;
            let up = probe.loss(examples.iter()).unwrap();
            probe.params.slices_mut()[s][i] = orig - eps;
            let down = probe.loss(examples.iter()).unwrap();
            probe.params.slices_mut()[s][i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-6));
            k += 1;
        }
    }
    worst
}

fn random_examples(rng: &mut ChaCha8Rng, dims: &[usize], n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| Example {
            inputs: dims.iter().map(|d| (0..4).map(|_| (0..*d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()).collect(),
            target: rng.random_range(-0.9..0.9),
        })
        .collect()
}

fn donor(channel: Channel, dim: usize, hidden: usize, seed: u64) -> TrainedModel {
    let spec = ModelSpec::unimodal(channel, dim).unwrap().with_hidden(hidden).with_seq_len(4);
    TrainedModel {
        network: Regressor::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
        normalization: vec![ZScore { mean: vec![0.0; dim], sd: vec![1.0; dim] }],
        seed,
    }
}

fn gradient_check() -> Verdict {
    let h = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pair = build_pair(&donor(Channel::Audio, 5, h, 2), &donor(Channel::Visual, 3, h, 3), (5, 3), h, 4).unwrap();
    let nets = [
        ("unimodal", Regressor::init(&ModelSpec::unimodal(Channel::Audio, 5).unwrap().with_hidden(h).with_seq_len(4), &mut rng).unwrap()),
        ("A1", Regressor::init(&build_a1(5, 3).unwrap().with_hidden(h).with_seq_len(4), &mut rng).unwrap()),
        ("A2", Regressor::init(&build_a2(5, 3).unwrap().with_hidden(h).with_head_hidden(h).with_seq_len(4), &mut rng).unwrap()),
        ("PAIR", pair.network),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, net) in &nets {
        let examples = random_examples(&mut rng, &net.spec.input_dims, 3);
        let e = gradient_error(net, &examples);
        worst = worst.max(e);
        parts.push(format!("{name} {e:.1e}"));
    }
    check(worst < 1e-4, format!("max relative error: {}", parts.join(", ")))
}

fn pair_direction() -> Verdict {
    let bench = TransferBenchmark::default();
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let o = bench.run(seed).unwrap();
        if o.pair_ccc >= o.a2_ccc {
            wins += 1;
        }
        parts.push(format!("{:.3}/{:.3}/{:.3}", o.pair_ccc, o.a2_ccc, o.a1_ccc));
    }
    check(wins >= 4, format!("PAIR >= A2 in {wins}/5 seeds; PAIR/A2/A1 CCC {}", parts.join(" ")))
}

fn transfer_exactness() -> Verdict {
    let (a, v) = (donor(Channel::Audio, 8, 16, 10), donor(Channel::Visual, 6, 16, 11));
    let pair = build_pair(&a, &v, (8, 6), 32, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = 0;
    for ex in random_examples(&mut rng, &[8, 6], 100) {
        let same = |x: Vec<f64>, y: Vec<f64>| x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same(pair.network.block_output(0, &ex.inputs[0]).unwrap(), a.network.block_output(0, &ex.inputs[0]).unwrap())
            || !same(pair.network.block_output(1, &ex.inputs[1]).unwrap(), v.network.block_output(0, &ex.inputs[1]).unwrap())
        {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches}/100 windows differ"))
}

fn exact_p_by_enumeration(n1: usize, n2: usize, u: f64) -> f64 {
    let n = n1 + n2;
    let mu = (n1 * n2) as f64 / 2.0;
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == n1 {
            total += 1;
            let r: usize = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| k + 1).sum();
            let uu = r as f64 - (n1 * (n1 + 1)) as f64 / 2.0;
            hits += u64::from((uu - mu).abs() >= (u - mu).abs() - 1e-9);
        }
    }
    hits as f64 / total as f64
}

fn statistics_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mw_bad = 0;
    let mut mw_cases = 0;
    for n1 in 1..10usize {
        for n2 in 1..=(10 - n1) {
            for _ in 0..5 {
                let mut v: Vec<f64> = (0..n1 + n2).map(|i| i as f64).collect();
                v.shuffle(&mut rng);
                let mw = mann_whitney_u(&v[..n1], &v[n1..]).unwrap();
                mw_cases += 1;
                mw_bad += usize::from(!close(mw.result.p_value, exact_p_by_enumeration(n1, n2, mw.u1), 1e-12));
            }
        }
    }
    let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap().statistic;
    let c1 = chi_square_contingency(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap().statistic;
    let c2 = chi_square_contingency(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap().statistic;
    let mut u_bad = 0;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random_range(0..4) as f64).collect();
        let b: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random_range(0..4) as f64).collect();
        let mw = mann_whitney_u(&a, &b).unwrap();
        u_bad += usize::from(!close(mw.u1 + mw.u2, (a.len() * b.len()) as f64, 1e-9));
    }
    check(
        mw_bad == 0 && close(kw, 7.2, 1e-12) && close(c1, 20.0 / 3.0, 1e-12) && close(c2, 10.0, 1e-12) && u_bad == 0,
        format!("exact p mismatches {mw_bad}/{mw_cases}, H = {kw}, chi2 = {c1:.6}, {c2}, U1+U2 violations {u_bad}/1000"),
    )
}

fn fold_partition() -> Verdict {
    let ids: Vec<String> = (0..81).map(|i| format!("m{i:02}")).collect();
    let a = make_folds(&ids, 5, 42).unwrap();
    let b = make_folds(&ids, 5, 42).unwrap();
    let mut sizes: Vec<usize> = a.folds.iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|x, y| y.cmp(x));
    check(sizes == [17, 16, 16, 16, 16] && a == b, format!("sizes {sizes:?}, repeat identical: {}", a == b))
}

fn muvi(args: &[String]) {
    let out = Command::new(env!("CARGO_BIN_EXE_muvi")).args(args).env_remove("MUVI_SEED").output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn pipeline(root: &Path) -> Vec<u8> {
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let (data, gold) = (p("data"), p("gold/gold.csv"));
    let (da, dv) = (p("donor_audio/model.json"), p("donor_visual/model.json"));
    let run = |words: &[&str]| {
        let mut args: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        if words[0] != "synth" && words[0] != "gold" {
            args.extend(["--in", &data, "--gold", &gold].map(String::from));
            args.extend(["--seed", "5", "--hidden", "8", "--head-hidden", "8", "--epochs", "3", "--lr", "1e-3"].map(String::from));
        }
        muvi(&args);
    };
    run(&["synth", "--seed", "5", "--media", "10", "--duration", "20", "--out", &data]);
    run(&["gold", "--in", &data, "--out", &p("gold")]);
    let unimodal = ["--arch", "unimodal"];
    run(&[&["train", "--modality", "music", "--feature-set", "audio", "--out", &p("donor_audio")][..], &unimodal].concat());
    run(&[&["train", "--modality", "visual", "--feature-set", "visual", "--out", &p("donor_visual")][..], &unimodal].concat());
    let donors = ["--donor-audio", da.as_str(), "--donor-visual", dv.as_str()];
    run(&[&["train", "--arch", "pair", "--out", &p("pair")][..], &donors].concat());
    assert!(root.join("pair/model.json").exists());
    run(&[&["eval", "--arch", "pair", "--folds", "5", "--out", &p("eval")][..], &donors].concat());
    std::fs::read(root.join("eval/report.json")).unwrap()
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (pipeline(a.path()), pipeline(b.path()));
    check(!ra.is_empty() && ra == rb, format!("report.json {} bytes, identical: {}", ra.len(), ra == rb))
}

fn muvi_dataset() -> Verdict {
    let Some(dir) = std::env::var_os("MUVI_DATA").map(PathBuf::from) else {
        return Verdict::Skip("MUVI_DATA not set".into());
    };
    let path = if dir.is_dir() { dir.join("annotations.jsonl") } else { dir };
    if !path.exists() {
        return Verdict::Skip(format!("{} not found", path.display()));
    }
    let records = read_annotations(&path).unwrap();
    let rc = ResampleConfig::default();
    let d = describe(&records, &rc).unwrap();
    let table = agreement_table(&records, &rc).unwrap();
    let expected = [
        (Modality::Music, Dimension::Arousal, 0.4062),
        (Modality::Music, Dimension::Valence, 0.2385),
        (Modality::Visual, Dimension::Arousal, 0.2839),
        (Modality::Visual, Dimension::Valence, 0.3115),
        (Modality::Audiovisual, Dimension::Arousal, 0.3369),
        (Modality::Audiovisual, Dimension::Valence, 0.2384),
    ];
    let worst_cell = expected
        .iter()
        .map(|(m, dim, v)| {
            table.cells.iter().find(|c| c.modality == *m && c.dimension == *dim).map_or(f64::INFINITY, |c| (c.mean - v).abs())
        })
        .fold(0.0, f64::max);
    let sad_tearful = label_cooccurrence(&records)
        .unwrap()
        .get(gems_lookup("Sad").unwrap(), gems_lookup("Tearful").unwrap())
        .unwrap_or(f64::NAN);
    check(
        close(d.overall.mean_arousal, 0.163, 0.005)
            && close(d.overall.mean_valence, 0.073, 0.005)
            && worst_cell <= 0.02
            && close(sad_tearful, 0.419, 0.01),
        format!(
            "mean arousal {:.4}, mean valence {:.4}, worst agreement gap {worst_cell:.4}, sad-tearful r {sad_tearful:.3}",
            d.overall.mean_arousal, d.overall.mean_valence
        ),
    )
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion { name: "metrics suite", budget: Duration::from_secs(5), run: metrics_suite },
        Criterion { name: "EWE oracle", budget: Duration::from_secs(10), run: ewe_oracle },
        Criterion { name: "LASSO recovery", budget: Duration::from_secs(30), run: lasso_recovery },
        Criterion { name: "LSTM gradient check", budget: Duration::from_secs(60), run: gradient_check },
        Criterion { name: "PAIR transfer direction", budget: Duration::from_secs(15 * 60), run: pair_direction },
        Criterion { name: "weight-transfer exactness", budget: Duration::from_secs(60), run: transfer_exactness },
        Criterion { name: "statistics oracle", budget: Duration::from_secs(60), run: statistics_oracle },
        Criterion { name: "fold partition", budget: Duration::from_secs(5), run: fold_partition },
        Criterion { name: "end-to-end determinism", budget: Duration::from_secs(300), run: determinism },
        Criterion { name: "MuVi dataset check", budget: Duration::from_secs(600), run: muvi_dataset },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Verdict::Fail(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed();
        let verdict = match verdict {
            Verdict::Pass(d) if secs > c.budget => Verdict::Fail(format!("{d}; over the {}s budget", c.budget.as_secs())),
            v => v,
        };
        let (tag, detail) = match &verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        // Written past the test harness capture so the lines always show.
        let line = format!("{tag} {}: {detail} ({:.1}s)\n", c.name, secs.as_secs_f64());
        std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
        if matches!(verdict, Verdict::Fail(_)) {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
