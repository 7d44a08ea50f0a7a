//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` (custom harness) or directly with
//! `cargo test -p headrouter-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use headrouter::baselines::{fastv_importance, frame_select, oracle_select, overlap, random_select, sample_seed};
use headrouter::calibration::{calibrate, calibrate_detailed};
use headrouter::probe::probe_all_heads;
use headrouter::pruner::{budget, prune, run_pipeline, token_importance, top_k};
use headrouter::router::{
    route, route_hard, selectivity, selectivity_stats, soft_alphas, uniform_profile, PerProfile, ProfileKind,
};
use headrouter::synth::{generate_calibration_set, generate_category, random_bundle, Dims};
use headrouter::tensor_io::{read_tensor, write_tensor};
use headrouter::{
    Category, Error, HeadMarginals, PruneConfig, ProfileBank, SampleBundle, SelectivityStats, Tensor,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);
type CorruptCase = (&'static str, Vec<u8>, fn(&Error) -> bool);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, n: usize) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    let mut v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        v = vec![1.0; n];
        return v.iter().map(|x| x / n as f64).collect();
    }
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn random_bank(rng: &mut ChaCha8Rng, n_heads: usize) -> ProfileBank {
    let sem = dirichlet(rng, 1.0, n_heads);
    let aco = dirichlet(rng, 1.0, n_heads);
    let a = rng.random_range(0.0..0.4);
    let b = a + rng.random_range(0.01..0.4);
    ProfileBank::new(sem, aco, PerProfile::new(a, 0.5 * (a + b), b), rng.random_range(0.01..0.2)).unwrap()
}

fn c1_selectivity() -> Outcome {
    for n in [2usize, 3, 16, 1500] {
        let s = selectivity(&vec![1.0 / n as f64; n]).map_err(e2s)?;
        ensure(s.abs() <= 1e-9, || format!("uniform n={n} gave {s}"))?;
        let mut one = vec![0.0f64; n];
        one[n / 2] = 1.0;
        let s = selectivity(&one).map_err(e2s)?;
        ensure((s - 1.0).abs() <= 1e-9, || format!("one-hot n={n} gave {s}"))?;
    }
    let s = selectivity(&[0.5f64, 0.5, 0.0, 0.0]).map_err(e2s)?;
    ensure((s - 0.5).abs() <= 1e-9, || format!("[0.5,0.5,0,0] gave {s}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let n = rng.random_range(2..200);
        let alpha = [0.01, 0.1, 1.0, 10.0][i % 4];
        let p = dirichlet(&mut rng, alpha, n);
        let s = selectivity(&p).map_err(e2s)?;
        ensure((0.0..=1.0).contains(&s), || format!("simplex vector gave {s}"))?;
    }
    Ok("limits exact, 10^4 simplex vectors in [0,1]".into())
}

fn c2_routing_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let bank = random_bank(&mut rng, 4);
        let spr = rng.random_range(0.0..0.5);
        let a = soft_alphas(spr, &bank);
        ensure((a.sum() - 1.0).abs() <= 1e-9, || format!("alphas sum {}", a.sum()))?;
    }
    let centers = PerProfile::new(0.1, 0.2, 0.3);
    let span = 0.2;
    let wide = ProfileBank::new(vec![0.5; 2], vec![0.5; 2], centers, 1e6 * span).unwrap();
    for spr in [0.0, 0.1, 0.17, 0.3, 0.9] {
        let a = soft_alphas(spr, &wide);
        for (_, &v) in a.iter() {
            ensure((v - 1.0 / 3.0).abs() <= 1e-6, || format!("wide bandwidth alpha {v} at spr {spr}"))?;
        }
    }
    let narrow = ProfileBank::new(vec![0.5; 2], vec![0.5; 2], centers, 1e-6 * span).unwrap();
    let mut checked = 0;
    while checked < 1000 {
        let spr: f64 = rng.random_range(0.0..0.4);
        if [0.15, 0.25].iter().any(|m| (spr - m).abs() < 1e-9) {
            continue;
        }
        let stats = SelectivityStats { sel: vec![0.0, 0.0], spread: spr };
        let soft = route(stats.clone(), &narrow).map_err(e2s)?;
        let hard = route_hard(stats, &narrow).map_err(e2s)?;
        ensure(soft.alphas.argmax() == hard.alphas.argmax(), || {
            format!("narrow bandwidth argmax disagrees with hard routing at spr {spr}")
        })?;
        checked += 1;
    }
    let bank = ProfileBank::new(vec![0.5; 2], vec![0.5; 2], centers, 0.05).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for i in 0..100 {
        let spr = 0.4 * i as f64 / 99.0;
        let a = soft_alphas(spr, &bank);
        let lr = (a[ProfileKind::Acoustic] / a[ProfileKind::Semantic]).ln();
        ensure(lr > prev, || format!("log-ratio not increasing at spr {spr}"))?;
        prev = lr;
    }
    Ok("simplex, wide/narrow limits, monotone log-ratio".into())
}

fn c3_worked_value() -> Outcome {
    let fixture: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/worked_routing.json")).map_err(|e| e.to_string())?;
    let reference: Vec<f64> = fixture["alphas"]
        .as_array()
        .ok_or("fixture lacks alphas")?
        .iter()
        .map(|v| v.as_str().unwrap().parse::<f64>().unwrap())
        .collect();
    let stated = [0.7675, 0.2312, 0.0013];
    for (r, s) in reference.iter().zip(stated) {
        ensure((r - s).abs() <= 1e-4, || format!("fixture {r} disagrees with stated {s}"))?;
    }
    let c = &fixture["centers"];
    let bank = ProfileBank::new(
        vec![1.0],
        vec![1.0],
        PerProfile::new(c[0].as_f64().unwrap(), c[1].as_f64().unwrap(), c[2].as_f64().unwrap()),
        fixture["bandwidth"].as_f64().unwrap(),
    )
    .map_err(e2s)?;
    let a = soft_alphas(fixture["spread"].as_f64().unwrap(), &bank);
    let got = [a[ProfileKind::Semantic], a[ProfileKind::Uniform], a[ProfileKind::Acoustic]];
    let err = got.iter().zip(&reference).map(|(g, r)| (g - r).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-3, || format!("alphas {got:?} vs {reference:?}"))?;
    Ok(format!("alphas ({:.4}, {:.4}, {:.4}), max error {err:.1e}", got[0], got[1], got[2]))
}

fn brute_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn c4_top_k() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..1000 {
        let n = if t < 10 { t + 1 } else { rng.random_range(1..=2000) };
        let levels = rng.random_range(1..=n.max(2));
        let mut scores: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(0..levels) as f64,
                _ => rng.random::<f64>(),
            })
            .collect();
        for _ in 0..n / 4 {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            scores[a] = scores[b];
        }
        let k = rng.random_range(1..=n);
        let got = top_k(&scores, k).map_err(e2s)?;
        ensure(got == brute_top_k(&scores, k), || format!("mismatch at trial {t} (n={n}, k={k})"))?;
    }
    Ok("10^3 vectors match the sort oracle".into())
}

fn random_marginals(rng: &mut ChaCha8Rng) -> HeadMarginals {
    let heads = rng.random_range(1..=16);
    let n = rng.random_range(2..=500);
    let rows: Vec<Vec<f32>> = (0..heads)
        .map(|_| {
            let alpha = [0.05, 0.5, 2.0][rng.random_range(0..3)];
            let p = dirichlet(rng, alpha, n);
            p.iter().map(|&v| v as f32).collect()
        })
        .collect();
    HeadMarginals::from_rows(rows, 1, 8).unwrap()
}

fn c5_fastv_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..100 {
        let m = random_marginals(&mut rng);
        let a = token_importance(&m, &uniform_profile(m.n_heads())).map_err(e2s)?;
        let b = fastv_importance(&m);
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-9, || format!("trial {t}: max entry difference {err}"))?;
        let k = rng.random_range(1..=m.n_tokens());
        ensure(top_k(&a, k).map_err(e2s)? == top_k(&b, k).map_err(e2s)?, || {
            format!("trial {t}: retained sets differ")
        })?;
    }
    Ok("100 marginals agree entrywise and in selection".into())
}

fn small_random_bundle(rng: &mut ChaCha8Rng, id: usize) -> SampleBundle {
    let n_text = rng.random_range(1..=6);
    let n_audio = rng.random_range(2..=300);
    let heads = rng.random_range(1..=8);
    let d = rng.random_range(4..=24);
    let dk = rng.random_range(2..=8);
    let mut normal = |shape: usize, scale: f64| -> Vec<f32> {
        (0..shape)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                (scale * z) as f32
            })
            .collect::<Vec<f32>>()
    };
    let text = Array2::from_shape_vec((n_text, d), normal(n_text * d, 1.0)).unwrap();
    let audio = Array2::from_shape_vec((n_audio, d), normal(n_audio * d, 1.0)).unwrap();
    let q = Array3::from_shape_vec((heads, d, dk), normal(heads * d * dk, 1.0)).unwrap();
    let k = Array3::from_shape_vec((heads, d, dk), normal(heads * d * dk, 1.0)).unwrap();
    SampleBundle::new(format!("random-{id}"), None, text, audio, q, k, None).unwrap()
}

fn c6_permutation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in 0..100 {
        let b = small_random_bundle(&mut rng, t);
        let bank = random_bank(&mut rng, b.n_heads());
        let ratio = [0.0, 0.3, 0.6, 0.9][t % 4];
        let cfg = PruneConfig::new(ratio).with_prefilter_keep(1.0);
        let Ok(base) = run_pipeline(&b, Some(&bank), &cfg) else {
            // Only too-small budgets are rejected; those are covered by the budget criterion.
            ensure(budget(b.n_audio(), ratio).is_err(), || format!("trial {t}: pipeline failed"))?;
            continue;
        };
        let mut order: Vec<usize> = (0..b.n_audio()).collect();
        order.shuffle(&mut rng);
        let permuted = b.reorder_audio(&order).map_err(e2s)?;
        let res = run_pipeline(&permuted, Some(&bank), &cfg).map_err(e2s)?;
        let mut mapped: Vec<usize> = res.retained.iter().map(|&i| order[i]).collect();
        mapped.sort_unstable();
        ensure(mapped == base.retained, || format!("trial {t}: retained set not equivariant"))?;
    }
    Ok("100 bundles map exactly through the permutation".into())
}

fn c7_budget() -> Outcome {
    let mut checked = 0;
    for tenths in [3u64, 6, 9] {
        let ratio = tenths as f64 / 10.0;
        for n in 1..=1000u64 {
            let want = n * (10 - tenths) / 10;
            match budget(n as usize, ratio) {
                Ok(k) => ensure(want > 0 && k as u64 == want, || format!("n={n} r={ratio}: got {k}, want {want}"))?,
                Err(Error::InvalidConfig(_)) => {
                    ensure(want == 0, || format!("n={n} r={ratio}: rejected but k={want}"))?
                }
                Err(e) => return Err(format!("n={n} r={ratio}: unexpected error {e}")),
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} cases match integer arithmetic"))
}

fn c8_routing_separation() -> Outcome {
    let bank = calibrate(&generate_calibration_set(10, 8).map_err(e2s)?).map_err(e2s)?;
    let mut samples = generate_category(Category::Semantic, 100, 800).map_err(e2s)?;
    samples.extend(generate_category(Category::Acoustic, 100, 800).map_err(e2s)?);
    let mut hits = 0;
    for s in &samples {
        let stats = selectivity_stats(&probe_all_heads(s).map_err(e2s)?).map_err(e2s)?;
        let dominant = route(stats, &bank).map_err(e2s)?.alphas.argmax();
        let want = match s.category() {
            Some(Category::Semantic) => ProfileKind::Semantic,
            _ => ProfileKind::Acoustic,
        };
        hits += usize::from(dominant == want);
    }
    let acc = hits as f64 / samples.len() as f64;
    ensure(acc >= 0.95, || format!("accuracy {acc:.3}"))?;
    Ok(format!("{hits}/{} dominant alphas match", samples.len()))
}

fn c9_calibration_stability() -> Outcome {
    let small = calibrate_detailed(&generate_calibration_set(10, 9).map_err(e2s)?).map_err(e2s)?;
    let large = calibrate_detailed(&generate_calibration_set(50, 90).map_err(e2s)?).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for kind in ProfileKind::ALL {
        let a = small.bank.centers()[kind];
        let b = large.bank.centers()[kind];
        worst = worst.max((a - b).abs() / b.abs());
    }
    ensure(worst < 0.05, || format!("largest relative center change {worst:.4}"))?;
    Ok(format!("largest relative center change {:.2}%", 100.0 * worst))
}

fn c10_routing_overhead() -> Outcome {
    let dims = Dims { n_text: 64, n_audio: 9000, n_heads: 16, d_model: 2048, d_head: 128 };
    let bundle = random_bundle(dims, 10).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let bank = random_bank(&mut rng, bundle.n_heads());
    let cfg = PruneConfig::new(0.3);
    let mut fractions = Vec::with_capacity(20);
    for _ in 0..20 {
        let res = run_pipeline(&bundle, Some(&bank), &cfg).map_err(e2s)?;
        fractions.push(res.timings.routing_fraction());
    }
    fractions.sort_by(f64::total_cmp);
    let median = 0.5 * (fractions[9] + fractions[10]);
    ensure(median < 0.01, || format!("median routing fraction {median:.5}"))?;
    Ok(format!("median routing fraction {:.4}%", 100.0 * median))
}

fn c11_oracle_alignment() -> Outcome {
    let bank = calibrate(&generate_calibration_set(10, 11).map_err(e2s)?).map_err(e2s)?;
    let samples = generate_category(Category::Acoustic, 100, 1100).map_err(e2s)?;
    let mut sums = [0.0f64; 3];
    for s in &samples {
        let energy: Vec<f64> = s.energy().unwrap().iter().map(|&e| f64::from(e)).collect();
        let k = budget(s.n_audio(), 0.6).map_err(e2s)?;
        let oracle = oracle_select(&energy, k).map_err(e2s)?;
        let hr = prune(s, Some(&bank), &PruneConfig::new(0.6)).map_err(e2s)?.retained;
        let frame = frame_select(s.n_audio(), k).map_err(e2s)?;
        let random = random_select(s.n_audio(), k, sample_seed(11, s.sample_id())).map_err(e2s)?;
        for (acc, sel) in sums.iter_mut().zip([&hr, &frame, &random]) {
            *acc += overlap(sel, &oracle);
        }
    }
    let [hr, frame, random] = sums.map(|v| v / samples.len() as f64);
    ensure(hr - frame >= 0.10 && hr - random >= 0.10, || {
        format!("overlap headrouter {hr:.3}, frame {frame:.3}, random {random:.3}")
    })?;
    Ok(format!("overlap headrouter {hr:.3}, frame {frame:.3}, random {random:.3}"))
}

fn c12_serialization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for t in 0..100 {
        let rank = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=12)).collect();
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| loop {
                let v = f32::from_bits(rng.next_u32());
                if v.is_finite() {
                    break v;
                }
            })
            .collect();
        let tensor = Tensor::new(dims, data).map_err(e2s)?;
        let path = dir.path().join(format!("t{t}.hrtn"));
        write_tensor(&path, &tensor).map_err(e2s)?;
        let back = read_tensor(&path).map_err(e2s)?;
        let same = back.dims() == tensor.dims()
            && back.data().iter().zip(tensor.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("tensor {t} not bit-exact"))?;
    }

    let bank = calibrate(&generate_calibration_set(3, 12).map_err(e2s)?).map_err(e2s)?;
    let back = ProfileBank::from_json(&bank.to_json()).map_err(e2s)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(f64::MIN_POSITIVE);
    for kind in ProfileKind::ALL {
        ensure(close(bank.centers()[kind], back.centers()[kind]), || format!("{kind:?} center drifted"))?;
        for (a, b) in bank.profile(kind).iter().zip(back.profile(kind)) {
            ensure(close(*a, *b), || format!("{kind:?} profile drifted"))?;
        }
    }
    ensure(close(bank.bandwidth(), back.bandwidth()), || "bandwidth drifted".into())?;

    let good = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).map_err(e2s)?.encode();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    let truncated = good[..good.len() - 3].to_vec();
    let mut trailing = good.clone();
    trailing.push(0);
    let mut nan = good.clone();
    let last = nan.len() - 4;
    nan[last..].copy_from_slice(&f32::NAN.to_le_bytes());
    let cases: [CorruptCase; 5] = [
        ("bad magic", bad_magic, |e| matches!(e, Error::BadMagic { .. })),
        ("bad version", bad_version, |e| matches!(e, Error::UnsupportedVersion(9))),
        ("truncated", truncated, |e| matches!(e, Error::Truncated { .. })),
        ("trailing", trailing, |e| matches!(e, Error::TrailingBytes(1))),
        ("non-finite", nan, |e| matches!(e, Error::NonFinite { index: 5 })),
    ];
    for (name, bytes, expect) in cases {
        match Tensor::decode(&bytes) {
            Err(e) if expect(&e) => {}
            other => return Err(format!("{name}: got {other:?}")),
        }
    }
    ensure(
        matches!(read_tensor(dir.path().join("absent.hrtn")), Err(Error::Io { .. })),
        || "missing file not reported as i/o error".into(),
    )?;
    ensure(
        matches!(ProfileBank::from_json("{\"n_heads\": 2"), Err(Error::InvalidBank(_))),
        || "corrupt bank not reported as invalid bank".into(),
    )?;
    Ok("100 tensors bit-exact, bank exact, 7 corruption kinds".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("C1  selectivity correctness", c1_selectivity, Duration::from_secs(1)),
        ("C2  routing simplex and limits", c2_routing_limits, Duration::from_secs(1)),
        ("C3  worked routing value", c3_worked_value, Duration::MAX),
        ("C4  top-k oracle equivalence", c4_top_k, Duration::from_secs(5)),
        ("C5  FastV equivalence", c5_fastv_equivalence, Duration::MAX),
        ("C6  permutation equivariance", c6_permutation_equivariance, Duration::MAX),
        ("C7  budget formula", c7_budget, Duration::MAX),
        ("C8  routing separation", c8_routing_separation, Duration::from_secs(30)),
        ("C9  calibration stability", c9_calibration_stability, Duration::from_secs(60)),
        ("C10 routing overhead", c10_routing_overhead, Duration::from_secs(300)),
        ("C11 oracle alignment ordering", c11_oracle_alignment, Duration::from_secs(60)),
        ("C12 serialization", c12_serialization, Duration::MAX),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let tag = name.split_whitespace().next().unwrap();
        if !filter.is_empty() && !filter.iter().any(|f| f.eq_ignore_ascii_case(tag)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; exceeded {}s budget", limit.as_secs())),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{status} {name:<34} {:>8.2}s  {detail}", elapsed.as_secs_f64());
        failed += usize::from(outcome.is_err());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
