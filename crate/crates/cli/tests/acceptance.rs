//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criterion 7 asks for an optimal-to-MS-5-4 EIG ratio of at least 2. The
//! similarity models implemented here top out near 1.6 over every shared
//! similarity value tried, so that criterion is reported as FAIL and listed
//! in `EXPECTED_FAILURES`. The run exits nonzero if the set of failing
//! criteria differs from that list in either direction.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use oed_cli::commands::{curve_rows, rank_rows};
use oed_cli::config::{resolve, Overrides};
use oed_core::category::{category_space, enumerate_structures, ms54_structure, ParameterMode};
use oed_core::coin::{all_sequences, bias_coin, coin_model, coin_space, rank_sequences, MODEL_NAMES};
use oed_core::design::{eig_factorized_two_model, OutcomePrior};
use oed_core::dist::{binomial_pmf, kl_divergence};
use oed_core::{CoinSequence, FiniteDistribution, Flip, ItemResponses};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPECTED_FAILURES: &[u32] = &[7];

type Outcome = (bool, String);
type Criterion = (u32, &'static str, fn() -> Outcome);

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn config(rel: &str, tweak: impl FnOnce(&mut Overrides)) -> oed_cli::RunConfig {
    let mut o = Overrides {
        config: Some(repo(rel)),
        ..Default::default()
    };
    tweak(&mut o);
    resolve(&o, None).expect("checked-in config is valid")
}

fn ranked(rel: &str, tweak: impl FnOnce(&mut Overrides)) -> Vec<(String, f64)> {
    let (rows, _) = rank_rows(&config(rel, tweak)).expect("rank runs");
    rows.into_iter().map(|r| (r.experiment, r.eig)).collect()
}

fn set<'a>(items: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    items.into_iter().map(String::from).collect()
}

fn within(budget: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (
        t <= budget,
        format!("{:.2}s of {:.0}s budget", t.as_secs_f64(), budget.as_secs_f64()),
    )
}

fn c1_bias_predictive() -> Outcome {
    let seq: CoinSequence = "HHHH".parse().unwrap();
    let p = bias_coin(&seq).prob(&Flip::H);
    // posterior Beta(5, 1); trapezoid rule for E[w]
    let points = 100_000;
    let h = 1.0 / points as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=points {
        let w = i as f64 * h;
        let edge = if i == 0 || i == points { 0.5 } else { 1.0 };
        let dens = w.powi(4);
        num += edge * w * dens;
        den += edge * dens;
    }
    let quad = num / den;
    let closed = (p - 5.0 / 6.0).abs();
    let oracle = (p - quad).abs();
    (
        closed <= 1e-12 && oracle <= 1e-6,
        format!("p(H) = {p:.12}, |closed| = {closed:.1e}, |quadrature| = {oracle:.1e}"),
    )
}

fn c2_fair_bias() -> Outcome {
    let start = Instant::now();
    let r = ranked("configs/coin_fair_bias.json", |_| {});
    let eig = |k: &str| r.iter().find(|(key, _)| key == k).unwrap().1;
    let zeros = eig("HTHT").abs() <= 1e-12 && eig("HHTT").abs() <= 1e-12;
    let top = set([r[0].0.as_str(), r[1].0.as_str()]) == set(["HHHH", "TTTT"]);
    let (fast, t) = within(Duration::from_secs(1), start);
    (
        zeros && top && fast,
        format!(
            "top-2 {} {}, EIG(HTHT) = {:.1e}, EIG(HHTT) = {:.1e}, {t}",
            r[0].0,
            r[1].0,
            eig("HTHT"),
            eig("HHTT")
        ),
    )
}

fn c3_bias_markov() -> Outcome {
    let start = Instant::now();
    let r = ranked("configs/coin_bias_markov.json", |_| {});
    let top = set([r[0].0.as_str(), r[1].0.as_str()]) == set(["HTHT", "THTH"]);
    let bottom = set([r[14].0.as_str(), r[15].0.as_str()]) == set(["HHHH", "TTTT"]);
    let (fast, t) = within(Duration::from_secs(1), start);
    (
        top && bottom && fast,
        format!("top-2 {} {}, bottom-2 {} {}, {t}", r[0].0, r[1].0, r[14].0, r[15].0),
    )
}

fn c4_three_model() -> Outcome {
    let start = Instant::now();
    let r = ranked("configs/coin_three_model.json", |_| {});
    let top = set([r[0].0.as_str(), r[1].0.as_str()]) == set(["HHHH", "TTTT"]);
    let third: CoinSequence = r[2].0.parse().unwrap();
    let next_ok = third.to_string() == "HHHT" || third.mirror().to_string() == "HHHT";
    let (fast, t) = within(Duration::from_secs(1), start);
    (
        top && next_ok && fast,
        format!("top-2 {} {}, next {} ({:.4} nats), {t}", r[0].0, r[1].0, r[2].0, r[2].1),
    )
}

fn c5_crossing() -> Outcome {
    let start = Instant::now();
    let rows = curve_rows(&config("configs/coin_curve.json", |_| {})).unwrap();
    let curve = |k: &str| -> Vec<(u32, f64)> { rows.iter().filter(|r| r.0 == k).map(|r| (r.1, r.2)).collect() };
    let (a, b) = (curve("HTHT"), curve("HHHT"));
    let diff: Vec<(u32, f64)> = a.iter().zip(&b).map(|((n, x), (_, y))| (*n, x - y)).collect();
    let changes: Vec<u32> = diff
        .windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .map(|w| w[1].0)
        .collect();
    let once = changes.len() == 1 && (10..=14).contains(&changes[0]);
    let at1 = ranked("configs/coin_three_model.json", |o| o.n = Some(1))[0].0.clone();
    let at30 = ranked("configs/coin_three_model.json", |o| o.n = Some(30))[0].0.clone();
    let (fast, t) = within(Duration::from_secs(5), start);
    (
        once && at1 == at30 && fast,
        format!("sign changes at n = {changes:?}, argmax n=1 {at1}, n=30 {at30}, {t}"),
    )
}

fn c6_enumeration() -> Outcome {
    let start = Instant::now();
    let all = enumerate_structures();
    let valid = all.iter().all(|s| s.validate().is_ok());
    let (fast, t) = within(Duration::from_secs(60), start);
    (
        all.len() == 933 && valid && fast,
        format!("{} structures, all valid: {valid}, {t}", all.len()),
    )
}

fn c7_category_sweep() -> Outcome {
    let start = Instant::now();
    let r = ranked("configs/category_sweep.json", |_| {});
    let finite = r.len() == 933 && r.iter().all(|(_, e)| e.is_finite() && *e >= 0.0);
    let ms_key = ms54_structure().unwrap().canonical().to_string();
    let ms = r.iter().find(|(k, _)| *k == ms_key).unwrap().1;
    let below = r.iter().filter(|(_, e)| *e < ms).count() as f64 / r.len() as f64;
    let ratio = r[0].1 / ms;
    let (fast, t) = within(Duration::from_secs(300), start);
    (
        finite && below < 0.5 && ratio >= 2.0 && fast,
        format!(
            "finite: {finite}, MS 5-4 EIG {ms:.4} at percentile {:.1}, best {:.4}, ratio {ratio:.3} (needs >= 2), {t}",
            below * 100.0,
            r[0].1
        ),
    )
}

/// Brute-force two-model EIG over every label vector.
fn brute_force(p1: &[f64], p2: &[f64], op: OutcomePrior) -> f64 {
    let k = p1.len();
    let mut eig = 0.0;
    for y in 0..1usize << k {
        let mass = |p: &[f64]| {
            (0..k)
                .map(|j| if y >> j & 1 == 1 { p[j] } else { 1.0 - p[j] })
                .product::<f64>()
        };
        let (a, b) = (0.5 * mass(p1), 0.5 * mass(p2));
        let z = a + b;
        if z == 0.0 {
            continue;
        }
        let kl: f64 = [a / z, b / z]
            .iter()
            .filter(|v| **v > 0.0)
            .map(|v| v * (v / 0.5).ln())
            .sum();
        eig += kl
            * match op {
                OutcomePrior::Uniform => 1.0 / (1usize << k) as f64,
                OutcomePrior::Predictive => z,
            };
    }
    eig
}

fn c8_fast_path() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=10);
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            match rng.gen_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen(),
            }
        };
        let p1: Vec<f64> = (0..k).map(|_| draw(&mut rng)).collect();
        let p2: Vec<f64> = (0..k).map(|_| draw(&mut rng)).collect();
        for op in [OutcomePrior::Uniform, OutcomePrior::Predictive] {
            let fast = eig_factorized_two_model(&p1, &p2, &[0.5, 0.5], op).unwrap();
            worst = worst.max((fast - brute_force(&p1, &p2, op)).abs());
        }
    }
    let space = category_space(&["exemplar", "prototype"], None, ParameterMode::default())
        .unwrap()
        .unwrap();
    let all = enumerate_structures();
    let mut real_worst: f64 = 0.0;
    for _ in 0..5 {
        let s = &all[rng.gen_range(0..all.len())];
        let items: Vec<Vec<f64>> = space
            .models()
            .iter()
            .map(|m| match m.items(s).unwrap() {
                ItemResponses::Independent(p) => p,
                ItemResponses::Mixture(_) => unreachable!("point mode"),
            })
            .collect();
        let fast = eig_factorized_two_model(&items[0], &items[1], &[0.5, 0.5], OutcomePrior::Predictive).unwrap();
        real_worst = real_worst.max((fast - brute_force(&items[0], &items[1], OutcomePrior::Predictive)).abs());
    }
    let (fast, t) = within(Duration::from_secs(120), start);
    (
        worst <= 1e-9 && real_worst <= 1e-9 && fast,
        format!("max |fast - direct| random {worst:.1e}, real structures {real_worst:.1e}, {t}"),
    )
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

fn c9_mutual_information() -> Outcome {
    let comparisons: [&[&str]; 3] = [&["fair", "bias"], &["bias", "markov"], &MODEL_NAMES];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for names in comparisons {
        let space = coin_space(names, None).unwrap();
        for n in [1u32, 20] {
            for r in rank_sequences(&space, n, OutcomePrior::Predictive).unwrap() {
                let w = 1.0 / names.len() as f64;
                let rows: Vec<Vec<f64>> = names
                    .iter()
                    .map(|m| {
                        let p = coin_model(m)
                            .unwrap()
                            .predict(&r.experiment.inner)
                            .unwrap()
                            .prob(&Flip::H);
                        (0..=u64::from(n)).map(|k| binomial_pmf(u64::from(n), p, k)).collect()
                    })
                    .collect();
                let marginal: Vec<f64> = (0..=n as usize)
                    .map(|k| rows.iter().map(|row| w * row[k]).sum())
                    .collect();
                let mi = entropy(&marginal) - rows.iter().map(|row| w * entropy(row)).sum::<f64>();
                worst = worst.max((r.eig - mi).abs());
                checked += 1;
            }
        }
    }
    (
        worst <= 1e-9,
        format!("{checked} experiments, max |EIG - I(M;Y)| = {worst:.1e}"),
    )
}

fn random_distribution(rng: &mut ChaCha8Rng, size: usize) -> FiniteDistribution<usize> {
    let w: Vec<f64> = (0..size).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = w.iter().sum();
    FiniteDistribution::new(w.iter().enumerate().map(|(i, v)| (i, v / total))).unwrap()
}

fn c10_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut kl_ok = true;
    for _ in 0..10_000 {
        let size = rng.gen_range(1..=6);
        let p = random_distribution(&mut rng, size);
        let q = random_distribution(&mut rng, size);
        let pq = kl_divergence(&p, &q).unwrap();
        let distinct = p.max_abs_diff(&q) > 1e-9;
        kl_ok &= pq >= 0.0 && kl_divergence(&p, &p).unwrap() == 0.0 && (!distinct || pq > 0.0);
    }

    let mut mirror_worst: f64 = 0.0;
    let comparisons: [&[&str]; 3] = [&["fair", "bias"], &["bias", "markov"], &MODEL_NAMES];
    for names in comparisons {
        let space = coin_space(names, None).unwrap();
        for op in [OutcomePrior::Uniform, OutcomePrior::Predictive] {
            let r = rank_sequences(&space, 20, op).unwrap();
            let eig = |s: &CoinSequence| r.iter().find(|x| x.experiment.inner == *s).unwrap().eig;
            for s in all_sequences() {
                mirror_worst = mirror_worst.max((eig(&s) - eig(&s.mirror())).abs());
            }
        }
    }

    let run = |args: &[&str]| {
        let mut out = Vec::new();
        let code = oed_cli::main_with(args.iter().copied(), &mut out, &mut std::io::sink());
        (code, out)
    };
    let cfg = repo("configs/coin_three_model.json");
    let rank_args = ["oed", "rank", "--config", cfg.to_str().unwrap(), "--format", "json"];
    let curve_cfg = repo("configs/coin_curve.json");
    let curve_args = ["oed", "curve", "--config", curve_cfg.to_str().unwrap()];
    let enum_args = ["oed", "enumerate"];
    let deterministic = [&rank_args[..], &curve_args[..], &enum_args[..]].iter().all(|args| {
        let (a, b) = (run(args), run(args));
        a.0 == 0 && a == b
    });

    let mut group_worst: f64 = 0.0;
    let space = coin_space(&MODEL_NAMES, None).unwrap().groupify();
    for m in space.models() {
        for s in all_sequences() {
            let p = coin_model(oed_core::NamedModel::name(m))
                .unwrap()
                .predict(&s)
                .unwrap()
                .prob(&Flip::H);
            for n in 1..=100u32 {
                let d = m.predict(&oed_core::GroupExperiment::new(n, s).unwrap()).unwrap();
                let mean: f64 = d.entries().iter().map(|(k, q)| f64::from(*k) * q).sum();
                group_worst = group_worst
                    .max((d.total_mass() - 1.0).abs())
                    .max((mean - f64::from(n) * p).abs());
            }
        }
    }
    (
        kl_ok && mirror_worst <= 1e-9 && deterministic && group_worst <= 1e-9,
        format!(
            "KL on 10^4 pairs: {kl_ok}, mirror max diff {mirror_worst:.1e}, byte-identical reruns: {deterministic}, groupify max error {group_worst:.1e}"
        ),
    )
}

fn c11_generate_and_recover() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut details = Vec::new();
    let mut ok = true;
    for generator in MODEL_NAMES {
        for rival in MODEL_NAMES.iter().filter(|m| **m != generator) {
            let models = format!("{generator},{rival}");
            let cfg = resolve(
                &Overrides {
                    suite: Some(oed_cli::Suite::Coin),
                    models: Some(vec![generator.to_string(), rival.to_string()]),
                    n: Some(200),
                    ..Default::default()
                },
                None,
            )
            .unwrap();
            let chosen = rank_rows(&cfg).unwrap().0[0].experiment.clone();
            let seq: CoinSequence = chosen.parse().unwrap();
            let p = coin_model(generator).unwrap().predict(&seq).unwrap().prob(&Flip::H);
            let heads = (0..200).filter(|_| rng.gen::<f64>() < p).count();
            let data = dir.path().join(format!("{generator}-{rival}.csv"));
            std::fs::write(&data, format!("experiment,n,response\n{chosen},200,{heads}\n")).unwrap();
            let out = dir.path().join(format!("{generator}-{rival}-aig.csv"));
            let args = [
                "oed",
                "aig",
                "--suite",
                "coin",
                "--models",
                &models,
                "--data",
                data.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ];
            let code = oed_cli::main_with(args, &mut std::io::sink(), &mut std::io::sink());
            let report = std::fs::read_to_string(&out).unwrap_or_default();
            let posterior = report
                .lines()
                .nth(1)
                .and_then(|l| l.split(',').nth(6))
                .and_then(|v| v.parse::<f64>().ok())
                .unwrap_or(f64::NAN);
            ok &= code == 0 && posterior > 0.9;
            details.push(format!("{generator} vs {rival} on {chosen}: {posterior:.4}"));
        }
    }
    (ok, format!("posterior on generator: {}", details.join("; ")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "bias-model predictive exactness", c1_bias_predictive),
        (2, "fair-bias ordering", c2_fair_bias),
        (3, "bias-markov ordering", c3_bias_markov),
        (4, "three-model ordering", c4_three_model),
        (5, "rank crossing", c5_crossing),
        (6, "structure enumeration", c6_enumeration),
        (7, "category EIG sweep", c7_category_sweep),
        (8, "fast-path oracle equivalence", c8_fast_path),
        (9, "mutual-information identity", c9_mutual_information),
        (10, "property suites", c10_properties),
        (11, "generate-and-recover", c11_generate_and_recover),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let (pass, detail) = check();
        println!(
            "criterion {id:>2} {}: {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed != EXPECTED_FAILURES {
        println!("unexpected result: failing criteria {failed:?}, expected {EXPECTED_FAILURES:?}");
        std::process::exit(1);
    }
    println!("failing criteria match the documented list {EXPECTED_FAILURES:?}");
}
