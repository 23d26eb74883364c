//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without a test harness so the lines always print.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use vlbias::datamodel::{
    Attribute, DatasetManifest, Dimension, Lexicon, PromptOptions, PromptTemplateSet, Race, Valence,
};
use vlbias::embedio::EmbeddingSet;
use vlbias::fairmetrics::{ndkl, ndkl_soft, scweat_dimensions, scweat_from_similarities, uniform_distribution, WeatConfig};
use vlbias::imagestats::{brightness_match, sign_heatmap, FaceMask, GrayImage};
use vlbias::simcore::{build_similarity_table, delta_similarity, dim_similarity, PromptSpace};
use vlbias::stats::rng::stream_rng;
use vlbias::stats::{pearson, polyfit2, wilcoxon_ranksum, Alternative};
use vlbias::synthetic::causalface_manifest;
use vlbias::variation::{bootstrap_distribution, PairIndex, VariationConfig, DEFAULT_ORDINAL_GAP, VARIABLE_ATTRIBUTES};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut worst = MetricErrors::default();
    for seed in 0..200 {
        let e = metric_fixture(10_000 + seed);
        worst.skew = worst.skew.max(e.skew);
        worst.max_skew = worst.max_skew.max(e.max_skew);
        worst.ndkl = worst.ndkl.max(e.ndkl);
        worst.weat_statistic = worst.weat_statistic.max(e.weat_statistic);
        worst.weat_effect_size = worst.weat_effect_size.max(e.weat_effect_size);
        worst.weat_p = worst.weat_p.max(e.weat_p);
        worst.markedness = worst.markedness.max(e.markedness);
        worst.mean_cossim = worst.mean_cossim.max(e.mean_cossim);
    }
    let elapsed = start.elapsed();
    outcome(
        worst.max() <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("200 fixtures, max rel err {:.1e}, {:.2?} (limit 1e-10, 10 s)", worst.max(), elapsed),
    )
}

fn ndkl_ideal() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut r = stream_rng(seed, 9);
        let n_values = r.random_range(2..=5);
        let values: Vec<String> = (0..n_values).map(|i| format!("v{i}")).collect();
        let q: Vec<f64> = random_distribution(&mut r, &values).into_values().collect();
        let len = r.random_range(1..=60);
        worst = worst.max(ndkl_soft(&vec![q.clone(); len], &q).unwrap());
    }
    outcome(worst < 1e-12, format!("50 distributions, max NDKL {worst:.1e} (limit 1e-12)"))
}

fn ndkl_worked_example() -> Outcome {
    let labels = vec!["A".to_string(), "B".to_string()];
    let got = ndkl(&labels, &uniform_distribution(&["A", "B"])).unwrap();
    outcome((got - 0.425).abs() <= 0.001, format!("NDKL([A,B]) = {got:.6} (target 0.425 +/- 0.001)"))
}

fn weat_monte_carlo_vs_exact() -> Outcome {
    let mut worst_z: f64 = 0.0;
    let mut fails = 0;
    let fixtures = 30;
    for seed in 0..fixtures {
        let mut r = stream_rng(seed, 11);
        let half = r.random_range(2..=5);
        let n_d = r.random_range(1..=4);
        // Shift group A so p covers the range rather than hovering at 0.5.
        let shift = r.random::<f64>() * 0.3;
        let sims: Vec<Vec<f64>> = (0..n_d)
            .map(|_| {
                (0..2 * half)
                    .map(|j| r.random::<f64>() + if j < half { shift } else { 0.0 })
                    .collect()
            })
            .collect();
        let exact_cfg = WeatConfig::default();
        let mc_cfg = WeatConfig {
            exact_limit: 0,
            permutations: 10_000,
            rng_seed: seed,
            ..WeatConfig::default()
        };
        let exact = scweat_from_similarities(&sims, half, &exact_cfg).unwrap();
        let mc = scweat_from_similarities(&sims, half, &mc_cfg).unwrap();
        assert!(exact.exact && !mc.exact);
        let p = if exact.p_below_floor { 0.0 } else { exact.p_value };
        let q = if mc.p_below_floor { 0.0 } else { mc.p_value };
        let se = (p * (1.0 - p) / 10_000.0).sqrt();
        let diff = (p - q).abs();
        if diff > 3.0 * se {
            fails += 1;
        }
        if se > 0.0 {
            worst_z = worst_z.max(diff / se);
        }
    }
    outcome(
        fails == 0,
        format!("{fixtures} fixtures with |A u B| <= 10, worst |p_mc - p_exact| = {worst_z:.2} SE (limit 3)"),
    )
}

fn delta_consistency() -> Outcome {
    let mut r = stream_rng(21, 0);
    let fx = PromptFixture::random(&mut r, 4, 5, 4, 64);
    let space = fx.space();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let img = unit(&random_vec(&mut r, 64));
        let neutral = space.neutral_similarity(&img).unwrap();
        for d in &fx.dims {
            let delta = delta_similarity(&img, d, &space).unwrap();
            let raw = dim_similarity(&[&img], d, &space).unwrap();
            worst = worst.max((delta - (raw - neutral)).abs());
        }
    }

    // A dimension whose prompts embed exactly like the neutral prompts.
    let templates = PromptTemplateSet::default();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for t in 0..templates.len() {
        let v = random_vec(&mut r, 64);
        ids.push(templates.neutral(t));
        rows.push(v.clone());
        ids.push(templates.fill(t, "plain", PromptOptions::default()));
        rows.push(v);
    }
    let space = PromptSpace::new(
        &EmbeddingSet::from_rows(ids, &rows).unwrap(),
        templates,
        PromptOptions::default(),
    )
    .unwrap();
    let neutral_dim = Dimension {
        name: "neutral".into(),
        valence: Valence::Unsigned,
        adjectives: vec!["plain".into()],
    };
    let mut nonzero = 0;
    for _ in 0..100 {
        let img = unit(&random_vec(&mut r, 64));
        if delta_similarity(&img, &neutral_dim, &space).unwrap() != 0.0 {
            nonzero += 1;
        }
    }
    outcome(
        worst <= 1e-12 && nonzero == 0,
        format!("max |delta - (raw - neutral)| = {worst:.1e} (limit 1e-12); neutral-dimension nonzero deltas: {nonzero}"),
    )
}

fn sampler_constraints() -> Outcome {
    let seeds: Vec<u64> = (0..100).collect();
    let m = causalface_manifest(&seeds);
    let mut violations = 0u64;
    let mut checked = 0u64;
    for (i, &attr) in VARIABLE_ATTRIBUTES.iter().enumerate() {
        let gap = if attr.is_ordinal() { DEFAULT_ORDINAL_GAP } else { 0.0 };
        let index = PairIndex::build(&m, attr, gap).unwrap();
        let mut r = stream_rng(31, i as u64);
        for _ in 0..100_000 {
            let (a, b) = index.sample(&mut r);
            let (ra, rb) = (&m.records[a], &m.records[b]);
            let mut ok = ra.value(attr) != rb.value(attr);
            for other in Attribute::ALL {
                if other != attr {
                    ok &= ra.value(other) == rb.value(other);
                }
            }
            if attr.is_ordinal() {
                let (x, y) = (ra.value(attr).as_f64().unwrap(), rb.value(attr).as_f64().unwrap());
                ok &= (x - y).abs() >= 1.1;
            }
            violations += u64::from(!ok);
            checked += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{checked} pairs over {} attributes, {violations} violations", VARIABLE_ATTRIBUTES.len()),
    )
}

/// Embeddings where white faces sit `delta` higher than black and Asian faces
/// on every adjective prompt. Coordinate 0 is the shared trait direction,
/// 1..=PROMPT_DIMS hold prompt-specific directions, the rest identity.
fn injected_fixture(manifest: &DatasetManifest, delta: f64) -> (EmbeddingSet, PromptSpace, Vec<Dimension>) {
    const DIM: usize = 64;
    const PROMPT_DIMS: usize = 31;
    let a = 0.5;
    let (c_white, c_other) = (0.30 + delta / a, 0.30);
    let mut r = stream_rng(41, 0);

    let dims: Vec<Dimension> = [Lexicon::scm(), Lexicon::abc()]
        .into_iter()
        .flat_map(|l| l.dimensions)
        .collect();
    let templates = PromptTemplateSet::default();
    let prompt_part = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let mut v = vec![0.0; DIM];
        let s = unit(&random_vec(r, PROMPT_DIMS));
        v[1..=PROMPT_DIMS].copy_from_slice(&s);
        v
    };
    let mut texts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in 0..templates.len() {
        texts.insert(templates.neutral(t), prompt_part(&mut r));
        for d in &dims {
            for adj in &d.adjectives {
                let mut v: Vec<f64> = prompt_part(&mut r).iter().map(|x| x * (1.0 - a * a).sqrt()).collect();
                v[0] = a;
                texts.insert(templates.fill(t, adj, PromptOptions::default()), v);
            }
        }
    }
    let (ids, rows): (Vec<String>, Vec<Vec<f64>>) = texts.into_iter().unzip();
    let space = PromptSpace::new(
        &EmbeddingSet::from_rows(ids, &rows).unwrap(),
        templates,
        PromptOptions::default(),
    )
    .unwrap();

    // One identity per (seed, gender), shared across races and variants.
    let mut identity: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    let mut images = Vec::with_capacity(manifest.len());
    for rec in &manifest.records {
        let key = (rec.seed.unwrap_or(0), rec.gender.as_str().to_string());
        let id = identity
            .entry(key)
            .or_insert_with(|| unit(&random_vec(&mut r, DIM - 1 - PROMPT_DIMS)))
            .clone();
        let c = if rec.race == Race::White { c_white } else { c_other };
        let mut v = vec![0.0; DIM];
        v[0] = c;
        let rest = (1.0 - c * c).sqrt();
        for (slot, x) in v[1 + PROMPT_DIMS..].iter_mut().zip(&id) {
            *slot = rest * x;
        }
        // Small per-image jitter in the prompt subspace.
        for slot in v[1..=PROMPT_DIMS].iter_mut() {
            *slot += 0.01 * (r.random::<f64>() * 2.0 - 1.0);
        }
        images.push(unit(&v));
    }
    let set = EmbeddingSet::from_rows(manifest.ids().map(str::to_string).collect(), &images).unwrap();
    (set, space, dims)
}

fn bias_injection() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let m = causalface_manifest(&seeds);
    let (images, space, dims) = injected_fixture(&m, 0.02);

    let rows_of = |race: Race| -> Vec<&[f64]> {
        m.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.race == race)
            .map(|(i, _)| images.row(i))
            .take(60)
            .collect()
    };
    let (white, black) = (rows_of(Race::White), rows_of(Race::Black));
    let warmth: Vec<Dimension> = dims.iter().filter(|d| d.name == "Warmth").cloned().collect();
    let mean_gap = dim_similarity(&white, &warmth[0], &space).unwrap() - dim_similarity(&black, &warmth[0], &space).unwrap();
    let weat = scweat_dimensions(&warmth, &white, &black, &space, &WeatConfig::default()).unwrap();

    let table = build_similarity_table(&images, &m, &dims, &space).unwrap();
    let dist = |attr: Attribute| {
        let mut cfg = VariationConfig::new(attr);
        cfg.rng_seed = 5;
        bootstrap_distribution(&m, &table, &cfg).unwrap()
    };
    let race = dist(Attribute::Race);
    let lighting = dist(Attribute::Lighting);
    let test = wilcoxon_ranksum(&race.values, &lighting.values, Alternative::Greater).unwrap();
    let elapsed = start.elapsed();
    let pass = weat.effect_size > 1.0
        && race.summary.median > lighting.summary.median
        && test.p_value < 0.001
        && race.values.len() == 8000
        && elapsed < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "mean gap {mean_gap:.4}, effect size {:.2} (> 1), median race {:.4} vs lighting {:.4}, Wilcoxon p {} (< 0.001), {:.2?} (limit 30 s)",
            weat.effect_size,
            race.summary.median,
            lighting.summary.median,
            test.p_display(),
            elapsed
        ),
    )
}

fn stats_checks() -> Outcome {
    let x = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.5];
    let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.75 * v + 0.3 * v * v).collect();
    let fit = polyfit2(&x, &y).unwrap();
    let coef_err = (fit.c0 - 1.5).abs().max((fit.c1 + 0.75).abs()).max((fit.c2 - 0.3).abs());
    let w = wilcoxon_ranksum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
    let xs = [1.0, 2.0, 3.5, 4.0, 7.0];
    let up = pearson(&xs, &xs.map(|v| 2.0 * v + 1.0)).unwrap().r;
    let down = pearson(&xs, &xs.map(|v| 3.0 - v)).unwrap().r;
    let pass = coef_err <= 1e-9 && (w.p_value - 0.05).abs() < 1e-12 && w.exact && up == 1.0 && down == -1.0;
    outcome(
        pass,
        format!("quadratic coef err {coef_err:.1e}, exact rank-sum p {}, r = {up} / {down}", w.p_value),
    )
}

fn imagestats_checks() -> Outcome {
    let mut r = stream_rng(51, 0);
    let (w, h) = (16, 12);
    let quantized = |r: &mut rand_chacha::ChaCha8Rng| -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|_| f64::from(r.random_range(0u8..=255)) / 255.0).collect()).unwrap()
    };
    let pairs: Vec<(GrayImage, GrayImage)> = (0..6).map(|_| (quantized(&mut r), quantized(&mut r))).collect();
    let swapped: Vec<(GrayImage, GrayImage)> = pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
    let (fwd, bwd) = (sign_heatmap(&pairs).unwrap(), sign_heatmap(&swapped).unwrap());
    let antisymmetric = fwd.values().iter().zip(bwd.values()).all(|(a, b)| *a == -b);

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let variant = GrayImage::new(w, h, (0..w * h).map(|_| 0.1 + 0.4 * r.random::<f64>()).collect()).unwrap();
        let reference = GrayImage::new(w, h, (0..w * h).map(|_| 0.2 + 0.5 * r.random::<f64>()).collect()).unwrap();
        let mask = FaceMask::new(w, h, (0..w * h).map(|i| i % 3 != 0).collect()).unwrap();
        let m = brightness_match(&variant, &reference, &mask).unwrap();
        if m.clipped_pixels == 0 {
            let achieved = m.image.masked_mean(&mask).unwrap();
            worst = worst.max((achieved - reference.masked_mean(&mask).unwrap()).abs());
        }
    }
    outcome(
        antisymmetric && worst <= 1e-6,
        format!("heatmap antisymmetric: {antisymmetric}; max brightness residual {worst:.1e} (limit 1e-6)"),
    )
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 9] = [
        ("metric formulas vs brute force", metric_oracles),
        ("NDKL ideal case", ndkl_ideal),
        ("NDKL worked example", ndkl_worked_example),
        ("SC-WEAT Monte Carlo vs exact p", weat_monte_carlo_vs_exact),
        ("raw/delta cosine consistency", delta_consistency),
        ("variation sampler constraints", sampler_constraints),
        ("bias-injection recovery", bias_injection),
        ("stats primitives", stats_checks),
        ("imagestats invariants", imagestats_checks),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
