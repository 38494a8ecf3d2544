//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use cascademix::{
    assemble_dual, build_embedding, corpus_bin_edges, expected_holdout_ll, fit_bmm, fit_kmm,
    predict_item_popularity_with_variance, rng_for_stream, select_k_bmm, simulate_cascade_with,
    wasserstein1, BorelComponent, BorelMixture, BranchingFactor, Cascade, DualMixture, EmConfig,
    KernelComponent, KernelFamily, KernelMixture, KernelParams, SimConfig,
};

use crate::formats::{
    atomic_write, read_cascade_records, selection_to_parts, write_model, CascadeRecord,
    ItemModel, ModelFile, PublisherEntry, SCHEMA_VERSION,
};
use crate::{
    lib_err, AppError, DistArgs, EmbedArgs, EvalHoldoutArgs, FitArgs, KernelArg, PredictArgs,
    SimulateArgs, DATA, NUMERIC, USAGE,
};

fn kernel_from_args(kernel: KernelArg, theta: f64, c: Option<f64>) -> Result<KernelParams, AppError> {
    match kernel {
        KernelArg::Exp => {
            if c.is_some() {
                return Err(AppError::new(USAGE, "--c only applies to --kernel pl"));
            }
            KernelParams::exponential(theta).map_err(|e| AppError::new(USAGE, e.to_string()))
        }
        KernelArg::Pl => {
            let c = c.ok_or_else(|| AppError::new(USAGE, "--kernel pl requires --c"))?;
            KernelParams::power_law(theta, c).map_err(|e| AppError::new(USAGE, e.to_string()))
        }
    }
}

fn env_f64(name: &str) -> Result<Option<f64>, AppError> {
    match std::env::var(name) {
        Ok(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| AppError::new(USAGE, format!("{name} must be a number, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn env_usize(name: &str) -> Result<Option<usize>, AppError> {
    match std::env::var(name) {
        Ok(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| AppError::new(USAGE, format!("{name} must be an integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), AppError> {
    let n_star =
        BranchingFactor::new(args.n_star).map_err(|e| AppError::new(USAGE, e.to_string()))?;
    let kernel = kernel_from_args(args.kernel, args.theta, args.c)?;
    if args.items == 0 {
        return Err(AppError::new(USAGE, "--items must be >= 1"));
    }
    let cfg = SimConfig::new(n_star, kernel, args.seed);
    let mut buf = Vec::new();
    for i in 0..args.num_cascades {
        let mut rng = rng_for_stream(args.seed, i as u64);
        let out = simulate_cascade_with(&cfg, &mut rng);
        if out.truncated {
            return Err(AppError::new(
                NUMERIC,
                format!("cascade {i} hit the event cap; n* too close to 1"),
            ));
        }
        let item_id = if args.items == 1 {
            args.item_id.clone()
        } else {
            format!("item-{:04}", i % args.items)
        };
        let rec = CascadeRecord {
            item_id,
            publisher_id: args.publisher_id.clone(),
            cascade_id: format!("c{i:06}"),
            times: out.cascade.times().to_vec(),
        };
        serde_json::to_writer(&mut buf, &rec)
            .map_err(|e| AppError::new(NUMERIC, format!("serialize cascade {i}: {e}")))?;
        buf.push(b'\n');
    }
    atomic_write(&args.out, &buf)
}

struct ItemGroup {
    item_id: String,
    publisher_id: String,
    cascades: Vec<Cascade>,
}

fn group_by_item(records: &[(usize, CascadeRecord)]) -> Result<Vec<ItemGroup>, AppError> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<String, ItemGroup> = BTreeMap::new();
    for (line, rec) in records {
        let cascade = rec.to_cascade(*line)?;
        match groups.get_mut(&rec.item_id) {
            Some(g) => {
                if g.publisher_id != rec.publisher_id {
                    return Err(AppError::new(
                        DATA,
                        format!(
                            "line {line}: item {} maps to publishers {} and {}",
                            rec.item_id, g.publisher_id, rec.publisher_id
                        ),
                    ));
                }
                g.cascades.push(cascade);
            }
            None => {
                order.push(rec.item_id.clone());
                groups.insert(
                    rec.item_id.clone(),
                    ItemGroup {
                        item_id: rec.item_id.clone(),
                        publisher_id: rec.publisher_id.clone(),
                        cascades: vec![cascade],
                    },
                );
            }
        }
    }
    Ok(order.into_iter().map(|id| groups.remove(&id).unwrap()).collect())
}

fn parse_k_range(s: &str) -> Result<std::ops::RangeInclusive<usize>, AppError> {
    let err = || AppError::new(USAGE, format!("--select-k expects LO..HI, got {s:?}"));
    let (lo, hi) = s.split_once("..").ok_or_else(err)?;
    let lo: usize = lo.trim().parse().map_err(|_| err())?;
    let hi: usize = hi.trim().parse().map_err(|_| err())?;
    if lo == 0 || hi < lo {
        return Err(err());
    }
    Ok(lo..=hi)
}

fn fit_item(
    group: &ItemGroup,
    family: KernelFamily,
    fixed_k: Option<usize>,
    k_range: &std::ops::RangeInclusive<usize>,
    kmm_k: Option<usize>,
    bmm_cfg: &EmConfig,
    kmm_cfg: &EmConfig,
) -> Result<ItemModel, AppError> {
    let sizes: Vec<u64> = group.cascades.iter().map(|c| c.size() as u64).collect();
    let (selected_k, aic_table, bmm, bmm_report) = match fixed_k {
        Some(k) => {
            let (mix, report) = fit_bmm(&sizes, k, bmm_cfg).map_err(lib_err)?;
            (k, Vec::new(), mix, report)
        }
        None => selection_to_parts(select_k_bmm(&sizes, k_range.clone(), bmm_cfg).map_err(lib_err)?),
    };

    let multi = group.cascades.iter().filter(|c| c.size() >= 2).count();
    let (kmm, kmm_report, kmm_skipped_reason) = if multi == 0 {
        (None, None, Some("no multi-event cascade; kernel unidentifiable".to_string()))
    } else {
        let k = kmm_k.unwrap_or(selected_k).min(multi);
        let (mix, report) = fit_kmm(&group.cascades, k, family, kmm_cfg).map_err(lib_err)?;
        (Some(mix), Some(report), None)
    };

    Ok(ItemModel {
        item_id: group.item_id.clone(),
        publisher_id: group.publisher_id.clone(),
        cascade_count: group.cascades.len(),
        selected_k,
        aic_table,
        bmm,
        bmm_report,
        kmm,
        kmm_report,
        kmm_skipped_reason,
    })
}

/// Pools the most recent items of one publisher: each pooled item's mixture
/// enters with its weights divided by the pool size. Kernel pooling uses the
/// subset of pooled items that have a kernel mixture.
fn pool_publisher(
    publisher_id: &str,
    items: &[&ItemModel],
    max_items: usize,
) -> Result<PublisherEntry, AppError> {
    let start = items.len().saturating_sub(max_items);
    let pooled = &items[start..];
    let share = 1.0 / pooled.len() as f64;
    let mut borel_components = Vec::new();
    for item in pooled {
        for c in &item.bmm.components {
            borel_components.push(BorelComponent { n_star: c.n_star, weight: c.weight * share });
        }
    }
    let borel = BorelMixture::new(borel_components).map_err(lib_err)?;

    let with_kernel: Vec<&&ItemModel> = pooled.iter().filter(|i| i.kmm.is_some()).collect();
    let kernel = if with_kernel.is_empty() {
        None
    } else {
        let kshare = 1.0 / with_kernel.len() as f64;
        let mut components = Vec::new();
        for item in &with_kernel {
            for c in &item.kmm.as_ref().unwrap().components {
                components.push(KernelComponent { kernel: c.kernel, weight: c.weight * kshare });
            }
        }
        Some(KernelMixture::new(components).map_err(lib_err)?)
    };

    let avg = pooled.iter().map(|i| i.cascade_count).sum::<usize>() as f64 / pooled.len() as f64;
    Ok(PublisherEntry {
        publisher_id: publisher_id.to_string(),
        source_items: pooled.iter().map(|i| i.item_id.clone()).collect(),
        avg_cascades_per_item: avg,
        borel,
        kernel,
    })
}

fn item_dual(item: &ItemModel) -> Option<DualMixture> {
    item.kmm.as_ref().map(|kmm| assemble_dual(&item.bmm, kmm))
}

pub fn fit(args: &FitArgs) -> Result<(), AppError> {
    let records = read_cascade_records(&args.input)?;
    if records.is_empty() {
        return Err(AppError::new(DATA, format!("{}: no cascades", args.input.display())));
    }
    let groups = group_by_item(&records)?;
    let family: KernelFamily = args.kernel.into();

    let k_range = match &args.select_k {
        Some(s) => parse_k_range(s)?,
        None => 1..=5,
    };
    let mut bmm_cfg = EmConfig { seed: args.seed, ..EmConfig::bmm() };
    let mut kmm_cfg = EmConfig { seed: args.seed, ..EmConfig::kmm() };
    if let Some(tol) = env_f64("CASCADEMIX_EM_TOL")? {
        bmm_cfg.tol = tol;
        kmm_cfg.tol = tol;
    }
    if let Some(evals) = env_usize("CASCADEMIX_KMM_INNER_EVALS")? {
        kmm_cfg.inner_max_evals = evals;
    }
    if let Some(r) = args.restarts {
        bmm_cfg.restarts = r;
        kmm_cfg.restarts = r;
    }

    let run = |groups: &[ItemGroup]| -> Result<Vec<ItemModel>, AppError> {
        groups
            .par_iter()
            .map(|g| fit_item(g, family, args.k, &k_range, args.kmm_k, &bmm_cfg, &kmm_cfg))
            .collect()
    };
    // output order is input order: par_iter + collect preserves indices
    let items = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| AppError::new(USAGE, format!("--jobs: {e}")))?
            .install(|| run(&groups)),
        None => run(&groups),
    }?;

    // publisher pools, in first-appearance order of publishers
    let mut pub_order = Vec::new();
    let mut by_publisher: BTreeMap<&str, Vec<&ItemModel>> = BTreeMap::new();
    for item in &items {
        let entry = by_publisher.entry(item.publisher_id.as_str()).or_default();
        if entry.is_empty() {
            pub_order.push(item.publisher_id.as_str());
        }
        entry.push(item);
    }
    let publishers = pub_order
        .iter()
        .map(|p| pool_publisher(p, &by_publisher[p], args.pool_max_items))
        .collect::<Result<Vec<_>, _>>()?;

    let duals: Vec<DualMixture> = items.iter().filter_map(item_dual).collect();
    let dual_refs: Vec<&DualMixture> = duals.iter().collect();
    let embedding_bin_edges = if dual_refs.is_empty() {
        None
    } else {
        Some(corpus_bin_edges(&dual_refs, cascademix::DEFAULT_BINS).map_err(lib_err)?)
    };

    let model = ModelFile {
        schema_version: SCHEMA_VERSION,
        kernel_family: family,
        seed: args.seed,
        items,
        publishers,
        embedding_bin_edges,
    };
    write_model(&args.out, &model)
}

pub fn embed(args: &EmbedArgs) -> Result<(), AppError> {
    let model = ModelFile::load(&args.model)?;
    if args.bins == 0 {
        return Err(AppError::new(USAGE, "--bins must be >= 1"));
    }
    let with_dual: Vec<(&ItemModel, DualMixture)> = model
        .items
        .iter()
        .filter_map(|i| item_dual(i).map(|d| (i, d)))
        .collect();
    if with_dual.is_empty() {
        return Err(AppError::new(DATA, "no item has a kernel mixture; nothing to embed"));
    }
    let dual_refs: Vec<&DualMixture> = with_dual.iter().map(|(_, d)| d).collect();
    let edges = corpus_bin_edges(&dual_refs, args.bins).map_err(lib_err)?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["item_id".to_string(), "publisher_id".to_string(), "out_of_range".to_string()];
        for block in ["n_star", "c", "theta"] {
            for b in 0..args.bins {
                header.push(format!("{block}_{b}"));
            }
        }
        w.write_record(&header).map_err(|e| AppError::new(DATA, e.to_string()))?;
        for (item, dual) in &with_dual {
            let emb = build_embedding(dual, &edges).map_err(lib_err)?;
            let mut row = vec![
                item.item_id.clone(),
                item.publisher_id.clone(),
                emb.out_of_range.to_string(),
            ];
            for block in [&emb.m_n_star, &emb.m_c, &emb.m_theta] {
                row.extend(block.iter().map(|x| format!("{x}")));
            }
            w.write_record(&row).map_err(|e| AppError::new(DATA, e.to_string()))?;
        }
        w.flush().map_err(|e| AppError::new(DATA, e.to_string()))?;
    }
    atomic_write(&args.out, &buf)
}

struct EmbeddingRow {
    blocks: [Vec<f64>; 3],
}

fn read_embeddings(path: &Path) -> Result<BTreeMap<String, EmbeddingRow>, AppError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| AppError::new(DATA, format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| AppError::new(DATA, e.to_string()))?
        .clone();
    let bins = header.iter().filter(|h| h.starts_with("n_star_")).count();
    if bins == 0 || header.len() != 3 + 3 * bins {
        return Err(AppError::new(DATA, format!("{}: not an embeddings file", path.display())));
    }
    let mut rows = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AppError::new(DATA, format!("row {}: {e}", i + 1)))?;
        let parse = |range: std::ops::Range<usize>| -> Result<Vec<f64>, AppError> {
            range
                .map(|j| {
                    record[j]
                        .parse::<f64>()
                        .map_err(|e| AppError::new(DATA, format!("row {}: {e}", i + 1)))
                })
                .collect()
        };
        let row = EmbeddingRow {
            blocks: [
                parse(3..3 + bins)?,
                parse(3 + bins..3 + 2 * bins)?,
                parse(3 + 2 * bins..3 + 3 * bins)?,
            ],
        };
        rows.insert(record[0].to_string(), row);
    }
    Ok(rows)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), AppError> {
    match out {
        Some(path) => atomic_write(path, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| AppError::new(DATA, format!("stdout: {e}"))),
    }
}

pub fn dist(args: &DistArgs) -> Result<(), AppError> {
    let embeddings = read_embeddings(&args.embeddings)?;
    let pairs = fs::read_to_string(&args.pairs)
        .map_err(|e| AppError::new(DATA, format!("{}: {e}", args.pairs.display())))?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["item_a", "item_b", "distance", "status"])
            .map_err(|e| AppError::new(DATA, e.to_string()))?;
        for (i, line) in pairs.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((a, b)) = line.split_once(',') else {
                w.write_record([line, "", "", "malformed pair (expected item_a,item_b)"])
                    .map_err(|e| AppError::new(DATA, e.to_string()))?;
                continue;
            };
            let (a, b) = (a.trim(), b.trim());
            let _ = i;
            match (embeddings.get(a), embeddings.get(b)) {
                (Some(ra), Some(rb)) => {
                    let mut d = 0.0;
                    for (x, y) in ra.blocks.iter().zip(&rb.blocks) {
                        d += wasserstein1(x, y).map_err(lib_err)?;
                    }
                    w.write_record([a, b, &format!("{d}"), "ok"])
                        .map_err(|e| AppError::new(DATA, e.to_string()))?;
                }
                (ra, rb) => {
                    let mut missing = Vec::new();
                    if ra.is_none() {
                        missing.push(a);
                    }
                    if rb.is_none() {
                        missing.push(b);
                    }
                    let status = format!("missing: {}", missing.join(", "));
                    w.write_record([a, b, "", &status])
                        .map_err(|e| AppError::new(DATA, e.to_string()))?;
                }
            }
        }
        w.flush().map_err(|e| AppError::new(DATA, e.to_string()))?;
    }
    write_output(args.out.as_deref(), &buf)
}

pub fn predict(args: &PredictArgs) -> Result<(), AppError> {
    let model = ModelFile::load(&args.model)?;
    let entry = model
        .publishers
        .iter()
        .find(|p| p.publisher_id == args.publisher)
        .ok_or_else(|| {
            let known: Vec<&str> = model.known_publishers().into_iter().collect();
            AppError::new(
                DATA,
                format!("unknown publisher {:?}; known: {}", args.publisher, known.join(", ")),
            )
        })?;
    let pm = entry.to_model()?;
    if !(args.at_time > 0.0) || !args.at_time.is_finite() {
        return Err(AppError::new(USAGE, "--at-time must be a positive number"));
    }

    let records = read_cascade_records(&args.observed)?;
    let groups = group_by_item(&records)?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["item_id", "at_time", "predicted_mean", "predicted_variance", "observed_count"])
            .map_err(|e| AppError::new(DATA, e.to_string()))?;
        for g in &groups {
            let (mean, var) =
                predict_item_popularity_with_variance(&pm, &g.cascades, args.at_time)
                    .map_err(lib_err)?;
            let observed: usize = g
                .cascades
                .iter()
                .map(|c| c.times().iter().take_while(|&&t| t < args.at_time).count())
                .sum();
            w.write_record([
                g.item_id.as_str(),
                &format!("{}", args.at_time),
                &format!("{mean}"),
                &format!("{var}"),
                &observed.to_string(),
            ])
            .map_err(|e| AppError::new(DATA, e.to_string()))?;
        }
        w.flush().map_err(|e| AppError::new(DATA, e.to_string()))?;
    }
    atomic_write(&args.out, &buf)
}

pub fn eval_holdout(args: &EvalHoldoutArgs) -> Result<(), AppError> {
    let model = ModelFile::load(&args.model)?;
    if !(args.at_time > 0.0) || !args.at_time.is_finite() {
        return Err(AppError::new(USAGE, "--at-time must be a positive number"));
    }
    let records = read_cascade_records(&args.cascades)?;

    let mut pool_cache: BTreeMap<&str, cascademix::PublisherModel> = BTreeMap::new();
    for entry in &model.publishers {
        if entry.kernel.is_some() {
            pool_cache.insert(entry.publisher_id.as_str(), entry.to_model()?);
        }
    }

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "item_id",
            "cascade_id",
            "at_time",
            "holdout_events",
            "expected_hll",
            "per_event",
            "posterior_sum",
        ])
        .map_err(|e| AppError::new(DATA, e.to_string()))?;
        for (line, rec) in &records {
            let pm = pool_cache.get(rec.publisher_id.as_str()).ok_or_else(|| {
                let known: Vec<&str> = pool_cache.keys().copied().collect();
                AppError::new(
                    DATA,
                    format!(
                        "line {line}: unknown or kernel-free publisher {:?}; known: {}",
                        rec.publisher_id,
                        known.join(", ")
                    ),
                )
            })?;
            let cascade = rec.to_cascade(*line)?;
            let report = expected_holdout_ll(pm, &cascade, args.at_time).map_err(lib_err)?;
            let posterior_sum: f64 = report.posterior.iter().sum();
            w.write_record([
                rec.item_id.as_str(),
                rec.cascade_id.as_str(),
                &format!("{}", args.at_time),
                &report.holdout_events.to_string(),
                &format!("{}", report.expected_hll),
                &report.per_event.map(|p| format!("{p}")).unwrap_or_default(),
                &format!("{posterior_sum}"),
            ])
            .map_err(|e| AppError::new(DATA, e.to_string()))?;
        }
        w.flush().map_err(|e| AppError::new(DATA, e.to_string()))?;
    }
    write_output(args.out.as_deref(), &buf)
}
