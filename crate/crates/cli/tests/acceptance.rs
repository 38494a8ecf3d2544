//! Acceptance suite: oracle- and property-based checks on simulated data
//! plus internal-consistency identities, one printed pass/fail line per
//! criterion. Run with `cargo test --test acceptance -- --nocapture` to see
//! every line.

use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cascademix::*;

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n:2} ({name}): {verdict} — {detail}");
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn bf(v: f64) -> BranchingFactor {
    BranchingFactor::new(v).unwrap()
}

fn sim_sizes(n_star: f64, theta: f64, count: usize, seed: u64) -> Vec<u64> {
    let kernel = KernelParams::exponential(theta).unwrap();
    let cfg = SimConfig::new(bf(n_star), kernel, 0);
    (0..count)
        .map(|i| {
            let mut rng = rng_for_stream(seed, i as u64);
            simulate_cascade_with(&cfg, &mut rng).cascade.size() as u64
        })
        .collect()
}

fn sim_group(n_star: f64, kernel: KernelParams, count: usize, seed: u64) -> Vec<Cascade> {
    let cfg = SimConfig::new(bf(n_star), kernel, 0);
    (0..count)
        .map(|i| {
            let mut rng = rng_for_stream(seed, i as u64);
            simulate_cascade_with(&cfg, &mut rng).cascade
        })
        .collect()
}

#[test]
fn c01_borel_law_recovery() {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = String::new();
    for (ci, &n) in [0.2, 0.5, 0.8].iter().enumerate() {
        let runs = 100_000usize;
        let sizes = sim_sizes(n, 1.0, runs, 1000 + ci as u64);
        let mut counts = std::collections::HashMap::<u64, usize>::new();
        for &s in &sizes {
            *counts.entry(s).or_default() += 1;
        }
        for k in 1..=10u64 {
            let p = borel_log_pmf(bf(n), k).unwrap().exp();
            let freq = *counts.get(&k).unwrap_or(&0) as f64 / runs as f64;
            let sigma = (p * (1.0 - p) / runs as f64).sqrt();
            if (freq - p).abs() > 3.0 * sigma {
                ok = false;
                detail = format!("n*={n} k={k}: freq {freq} vs pmf {p} (3σ={})", 3.0 * sigma);
            }
        }
        let mean = sizes.iter().sum::<u64>() as f64 / runs as f64;
        let (m, v) = borel_mean_var(bf(n));
        let sigma_mean = (v / runs as f64).sqrt();
        if (mean - m).abs() > 3.0 * sigma_mean {
            ok = false;
            detail = format!("n*={n}: mean {mean} vs {m} (3σ={})", 3.0 * sigma_mean);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        ok = false;
        detail = format!("runtime {elapsed:.2}s >= 10s");
    }
    if detail.is_empty() {
        detail = format!(
            "3x10^5 cascades, PMF within 3σ for k<=10 and means within 3σ, {elapsed:.2}s"
        );
    }
    report(1, "borel law recovery", ok, &detail);
}

#[test]
fn c02_analytic_mle_consistency() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let sizes = sim_sizes(0.6, 1.0, 5_000, 2000 + seed);
        let n_hat = fit_borel_mle(&sizes).unwrap().value();
        worst = worst.max((n_hat - 0.6).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 0.02 && elapsed < 1.0;
    report(
        2,
        "analytic MLE consistency",
        ok,
        &format!("20 seeds, max |n̂*-0.6| = {worst:.4} (<=0.02), {elapsed:.3}s (<1s)"),
    );
}

#[test]
fn c03_separability() {
    let kernel = KernelParams::exponential(1.2).unwrap();
    let group = sim_group(0.5, kernel, 50, 3000);
    let rep = check_separability(&group, KernelFamily::Exponential).unwrap();
    let ok = rep.theta_identifiable && rep.max_coordinate_diff <= 1e-3;
    report(
        3,
        "likelihood separability",
        ok,
        &format!(
            "joint ({:.5}, {:.5}) vs separate ({:.5}, {:.5}), max diff {:.2e} (<=1e-3)",
            rep.joint_n_star,
            rep.joint_kernel.map_or(f64::NAN, |k| k.theta),
            rep.separate_n_star,
            rep.separate_kernel.map_or(f64::NAN, |k| k.theta),
            rep.max_coordinate_diff
        ),
    );
}

#[test]
fn c04_em_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let monotone = |trace: &[f64]| -> bool {
        trace
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
    };
    let mut ok = true;
    let mut detail = String::new();
    // 70 size corpora through the Borel mixture EM
    for i in 0..70u64 {
        let n = rng.random::<f64>() * 0.85;
        let theta = 0.5 + rng.random::<f64>() * 2.0;
        let count = 150 + (rng.random::<f64>() * 300.0) as usize;
        let k = 1 + (i % 3) as usize;
        let sizes = sim_sizes(n, theta, count, 4100 + i);
        let cfg = EmConfig { seed: i, ..EmConfig::bmm() };
        let (_, rep) = fit_bmm(&sizes, k, &cfg).unwrap();
        if !monotone(&rep.ll_trace) {
            ok = false;
            detail = format!("BMM corpus {i}: non-monotone trace");
        }
    }
    // 30 cascade corpora through the kernel mixture EM
    for i in 0..30u64 {
        let n = 0.2 + rng.random::<f64>() * 0.6;
        let theta = 10f64.powf(rng.random::<f64>() * 2.0 - 1.0);
        let kernel = KernelParams::exponential(theta).unwrap();
        let group = sim_group(n, kernel, 80, 4200 + i);
        let k = 1 + (i % 2) as usize;
        let cfg = EmConfig {
            seed: i,
            restarts: 2,
            max_iterations: 40,
            ..EmConfig::kmm()
        };
        match fit_kmm(&group, k, KernelFamily::Exponential, &cfg) {
            Ok((_, rep)) => {
                if !monotone(&rep.ll_trace) {
                    ok = false;
                    detail = format!("KMM corpus {i}: non-monotone trace");
                }
            }
            Err(Error::InsufficientData) => {}
            Err(e) => {
                ok = false;
                detail = format!("KMM corpus {i}: {e}");
            }
        }
    }
    if detail.is_empty() {
        detail = "100 corpora, every EM trace satisfies L(t+1) >= L(t) - 1e-9|L(t)|".into();
    }
    report(4, "EM monotonicity", ok, &detail);
}

#[test]
fn c05_bmm_recovery() {
    let mut sizes = sim_sizes(0.2, 1.0, 5_000, 5000);
    sizes.extend(sim_sizes(0.8, 1.0, 5_000, 5001));
    let cfg = EmConfig { seed: 5, restarts: 5, ..EmConfig::bmm() };
    let (mix, _) = fit_bmm(&sizes, 2, &cfg).unwrap();
    let n0 = mix.components[0].n_star.value();
    let n1 = mix.components[1].n_star.value();
    let w0 = mix.components[0].weight;
    let ok = (n0 - 0.2).abs() <= 0.05 && (n1 - 0.8).abs() <= 0.05 && (w0 - 0.5).abs() <= 0.05;
    report(
        5,
        "BMM recovery",
        ok,
        &format!("n̂* = ({n0:.3}, {n1:.3}) vs (0.2, 0.8), ŵ = ({w0:.3}, {:.3})", 1.0 - w0),
    );
}

#[test]
fn c06_kmm_recovery() {
    // single regime, k = 1
    let kernel = KernelParams::exponential(1.5).unwrap();
    let group = sim_group(0.5, kernel, 2_000, 6000);
    let cfg = EmConfig { seed: 6, ..EmConfig::kmm() };
    let (mix, _) = fit_kmm(&group, 1, KernelFamily::Exponential, &cfg).unwrap();
    let theta1 = mix.components[0].kernel.theta;
    let ok1 = (theta1 - 1.5).abs() <= 0.05;

    // two regimes, k = 2
    let mut group = sim_group(0.6, KernelParams::exponential(0.2).unwrap(), 1_000, 6001);
    group.extend(sim_group(0.6, KernelParams::exponential(5.0).unwrap(), 1_000, 6002));
    let (mix, _) = fit_kmm(&group, 2, KernelFamily::Exponential, &cfg).unwrap();
    let (t_lo, w_lo) = (mix.components[0].kernel.theta, mix.components[0].weight);
    let t_hi = mix.components[1].kernel.theta;
    let ok2 = (t_lo - 0.2).abs() <= 0.2 * 0.2
        && (t_hi - 5.0).abs() <= 0.2 * 5.0
        && (w_lo - 0.5).abs() <= 0.1;
    report(
        6,
        "KMM recovery",
        ok1 && ok2,
        &format!(
            "k=1: θ̂ = {theta1:.3} vs 1.5 (±0.05); k=2: θ̂ = ({t_lo:.3}, {t_hi:.3}) vs (0.2, 5.0) (±20%), ŵ_lo = {w_lo:.3} (±0.1)"
        ),
    );
}

#[test]
fn c07_aic_selection() {
    let cfg = EmConfig { seed: 7, ..EmConfig::bmm() };
    let mut single_hits = 0;
    let mut bimodal_hits = 0;
    for seed in 0..20u64 {
        let sizes = sim_sizes(0.3, 1.0, 4_000, 11_000 + seed * 7);
        if select_k_bmm(&sizes, 1..=3, &cfg).unwrap().best_k == 1 {
            single_hits += 1;
        }
        let mut sizes = sim_sizes(0.05, 1.0, 2_000, 7100 + seed);
        sizes.extend(sim_sizes(0.85, 1.0, 2_000, 7200 + seed));
        if select_k_bmm(&sizes, 1..=3, &cfg).unwrap().best_k == 2 {
            bimodal_hits += 1;
        }
    }
    let ok = single_hits >= 18 && bimodal_hits >= 18;
    report(
        7,
        "AIC component selection",
        ok,
        &format!("single-regime k=1 chosen {single_hits}/20, bimodal k=2 chosen {bimodal_hits}/20 (>=18 each)"),
    );
}

#[test]
fn c08_posterior_size_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    let mut ok = true;
    let mut detail = String::new();
    for inst in 0..10u64 {
        let n = 0.1 + rng.random::<f64>() * 0.7;
        let theta = 0.5 + rng.random::<f64>() * 2.5;
        let kernel = KernelParams::exponential(theta).unwrap();
        // draw a prefix with at least a little observed history
        let cfg = SimConfig::new(bf(n), kernel, 0);
        let cascade = loop {
            let mut srng = rng_for_stream(8100 + inst, rng.random::<u64>());
            let c = simulate_cascade_with(&cfg, &mut srng).cascade;
            if c.size() >= 2 {
                break c;
            }
        };
        let frac = 0.2 + rng.random::<f64>() * 0.6;
        let t_obs = (cascade.last_event_time() * frac).max(1e-3);
        let prefix = cascade.truncate(t_obs).unwrap();

        let post = posterior_size_pmf(bf(n), &kernel, &prefix, t_obs, 1e-12).unwrap();
        let closed = predict_cascade_size(bf(n), &kernel, &prefix, t_obs).unwrap();
        if (post.mean() - closed).abs() > 1e-3 * closed {
            ok = false;
            detail = format!("instance {inst}: pmf mean {} vs closed {closed}", post.mean());
            continue;
        }

        // 50k Monte-Carlo continuations of the same prefix
        let runs = 50_000usize;
        let mut counts = std::collections::HashMap::<u64, usize>::new();
        let mut sum = 0.0;
        for i in 0..runs {
            let mut crng = rng_for_stream(8200 + inst, i as u64);
            let out = simulate_continuation_with(&prefix, t_obs, &cfg, &mut crng).unwrap();
            *counts.entry(out.cascade.size() as u64).or_default() += 1;
            sum += out.cascade.size() as f64;
        }
        for m in 0..post.probs.len() {
            let p = post.probs[m];
            if p < 1e-3 {
                continue; // below MC resolution at 50k draws
            }
            let size = post.observed + m as u64;
            let freq = *counts.get(&size).unwrap_or(&0) as f64 / runs as f64;
            let sigma = (p * (1.0 - p) / runs as f64).sqrt();
            if (freq - p).abs() > 3.0 * sigma + 1e-5 {
                ok = false;
                detail = format!("instance {inst} size {size}: MC {freq} vs pmf {p} (3σ={})", 3.0 * sigma);
            }
        }
        let mc_mean = sum / runs as f64;
        if (mc_mean - closed).abs() > 0.02 * closed {
            ok = false;
            detail = format!("instance {inst}: MC mean {mc_mean} vs closed {closed} (2%)");
        }
    }
    if detail.is_empty() {
        detail = "10 instances: pmf mean within 0.1% of closed form; 50k continuations within 3σ per bin, mean within 2%".into();
    }
    report(8, "posterior size law", ok, &detail);
}

#[test]
fn c09_wasserstein_properties() {
    // ordering example: mass one bin away vs two bins away
    let a = vec![1.0, 0.0, 0.0];
    let near = vec![0.0, 1.0, 0.0];
    let far = vec![0.0, 0.0, 1.0];
    let d_near = wasserstein1(&a, &near).unwrap();
    let d_far = wasserstein1(&a, &far).unwrap();
    let mut ok = d_near == 1.0 && d_far == 2.0;
    let mut detail = format!("one-hot distances ({d_near}, {d_far}) = (1, 2) exactly");

    let mut rng = ChaCha8Rng::seed_from_u64(9000);
    let simplex = |rng: &mut ChaCha8Rng, dim: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..dim).map(|_| -(rng.random::<f64>().ln())).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    };
    for i in 0..10_000 {
        let dim = 2 + i % 9;
        let a = simplex(&mut rng, dim);
        let b = simplex(&mut rng, dim);
        let c = simplex(&mut rng, dim);
        let dab = wasserstein1(&a, &b).unwrap();
        let dba = wasserstein1(&b, &a).unwrap();
        let daa = wasserstein1(&a, &a).unwrap();
        let dac = wasserstein1(&a, &c).unwrap();
        let dcb = wasserstein1(&c, &b).unwrap();
        if daa > 1e-12 || (dab - dba).abs() > 1e-12 || dab > dac + dcb + 1e-12 {
            ok = false;
            detail = format!("triple {i}: identity/symmetry/triangle violated");
            break;
        }
    }
    report(9, "wasserstein properties", ok, &detail);
}

#[test]
fn c10_pipeline_determinism() {
    let bin = env!("CARGO_BIN_EXE_cascademix");
    let run_pipeline = |dir: &std::path::Path| {
        let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let steps: Vec<Vec<String>> = vec![
            vec![
                "simulate", "--n-star", "0.5", "--kernel", "exp", "--theta", "1.0",
                "--num-cascades", "400", "--seed", "17", "--items", "8", "--out",
                &p("casc.jsonl"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                "fit", "--input", &p("casc.jsonl"), "--kernel", "exp", "--select-k", "1..3",
                "--seed", "17", "--jobs", "2", "--out", &p("model.json"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec!["embed", "--model", &p("model.json"), "--out", &p("emb.csv")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec![
                "predict", "--model", &p("model.json"), "--publisher", "pub-0", "--observed",
                &p("casc.jsonl"), "--at-time", "2.0", "--out", &p("pred.csv"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ];
        for step in steps {
            let status = Command::new(bin).args(&step).status().unwrap();
            assert!(status.success(), "step {:?} failed", step.first().unwrap());
        }
        ["casc.jsonl", "model.json", "emb.csv", "pred.csv"]
            .map(|f| std::fs::read(dir.join(f)).unwrap())
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = run_pipeline(d1.path());
    let b = run_pipeline(d2.path());
    let ok = a == b;
    report(
        10,
        "pipeline determinism",
        ok,
        "simulate -> fit -> embed -> predict twice with the same seed: byte-identical artifacts",
    );
}

#[test]
fn c11_forecast_utility() {
    // two regimes sharing n* but with decay rates two orders apart; the
    // single pooled model is forced into a bad compromise on one of them
    let regime_a = (0.6, KernelParams::exponential(5.0).unwrap());
    let regime_b = (0.6, KernelParams::exponential(0.05).unwrap());
    let regime = |i: usize| if i.is_multiple_of(2) { regime_a } else { regime_b };

    // publisher history: 10 items x 25 cascades, regimes interleaved
    let history: Vec<Vec<Cascade>> = (0..10)
        .map(|i| {
            let (n, k) = regime(i);
            sim_group(n, k, 25, 13_000 + i as u64)
        })
        .collect();

    // dual mixture publisher model pooled from per-item k = 1 fits
    let bmm_cfg = EmConfig { seed: 11, ..EmConfig::bmm() };
    let kmm_cfg = EmConfig { seed: 11, ..EmConfig::kmm() };
    let mut item_duals = Vec::new();
    let mut counts = Vec::new();
    for group in &history {
        let sizes: Vec<u64> = group.iter().map(|c| c.size() as u64).collect();
        let (bmm, _) = fit_bmm(&sizes, 1, &bmm_cfg).unwrap();
        let kmm = match fit_kmm(group, 1, KernelFamily::Exponential, &kmm_cfg) {
            Ok((kmm, _)) => kmm,
            Err(Error::InsufficientData) => continue, // all-singleton item
            Err(e) => panic!("kernel fit: {e}"),
        };
        item_duals.push(assemble_dual(&bmm, &kmm));
        counts.push(group.len());
    }
    let pooled = pool_publisher_model(&item_duals, &counts, 10).unwrap();

    // single pooled non-mixture model: global MLEs over the flat history
    let flat: Vec<Cascade> = history.iter().flatten().cloned().collect();
    let flat_sizes: Vec<u64> = flat.iter().map(|c| c.size() as u64).collect();
    let n_single = fit_borel_mle(&flat_sizes).unwrap();
    let k_single = fit_kernel_mle(&flat, KernelFamily::Exponential).unwrap();
    let borel_1 = BorelMixture::new(vec![BorelComponent { n_star: n_single, weight: 1.0 }]).unwrap();
    let kernel_1 =
        KernelMixture::new(vec![KernelComponent { kernel: k_single, weight: 1.0 }]).unwrap();
    let dual_1 = assemble_dual(&borel_1, &kernel_1);
    let single = PublisherModel {
        borel: borel_1,
        kernel: kernel_1,
        dual: dual_1,
        avg_cascades_per_item: pooled.avg_cascades_per_item,
        source_items: vec![],
    };

    // holdout: 20 fresh items; 10 cascades observable now, and as many still
    // to come as the history average so the future-cascade term is fair
    struct Holdout {
        observed: Vec<Cascade>,
        actual: u64,
    }
    let future_count = pooled.avg_cascades_per_item.round() as usize;
    let holdout: Vec<Holdout> = (0..20)
        .map(|i| {
            let (n, k) = regime(i);
            let started = sim_group(n, k, 10, 12_000 + i as u64);
            let future = sim_group(n, k, future_count, 12_100 + i as u64);
            let actual = started.iter().chain(&future).map(|c| c.size() as u64).sum();
            Holdout { observed: started, actual }
        })
        .collect();

    // T = 10% of the median multi-event cascade duration
    let mut durations: Vec<f64> = holdout
        .iter()
        .flat_map(|h| h.observed.iter())
        .filter(|c| c.size() >= 2)
        .map(|c| c.last_event_time())
        .collect();
    durations.sort_by(f64::total_cmp);
    let t_obs = 0.1 * durations[durations.len() / 2];
    assert!(t_obs > 0.0);

    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut are_model = Vec::new();
    let mut are_base = Vec::new();
    for h in &holdout {
        let pred = predict_item_popularity(&pooled, &h.observed, t_obs).unwrap();
        let observed_only: usize = h
            .observed
            .iter()
            .map(|c| c.times().iter().take_while(|&&t| t < t_obs).count())
            .sum();
        are_model.push(absolute_relative_error(pred, h.actual).unwrap());
        are_base.push(absolute_relative_error(observed_only as f64, h.actual).unwrap());
    }
    let med_model = median(are_model);
    let med_base = median(are_base);
    let are_ok = med_model < med_base;

    // holdout log-likelihood per event: dual mixture vs the single model,
    // over cascades whose prefix identifies the regime (>= 2 observed
    // events) and that still have holdout events; median per-cascade per
    // event, matching boxplot-style reporting
    let mut per_dual = Vec::new();
    let mut per_single = Vec::new();
    for h in &holdout {
        for c in &h.observed {
            if c.last_event_time() <= t_obs
                || c.times().iter().take_while(|&&t| t < t_obs).count() < 2
            {
                continue;
            }
            let rd = expected_holdout_ll(&pooled, c, t_obs).unwrap();
            let rs = expected_holdout_ll(&single, c, t_obs).unwrap();
            if let (Some(pd), Some(ps)) = (rd.per_event, rs.per_event) {
                per_dual.push(pd);
                per_single.push(ps);
            }
        }
    }
    let scored = per_dual.len();
    let hll_dual = median(per_dual);
    let hll_single = median(per_single);
    let hll_ok = scored >= 10 && hll_dual > hll_single;

    report(
        11,
        "forecast utility",
        are_ok && hll_ok,
        &format!(
            "median ARE {med_model:.3} (model) < {med_base:.3} (observed-count baseline); median HLL/event {hll_dual:.3} (dual) > {hll_single:.3} (single) over {scored} cascades"
        ),
    );
}
