//! Acceptance suite. Prints one PASS/FAIL line per criterion (with indented
//! diagnostics) and exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use fewshot::config::{ConfigMap, RunConfig};
use fewshot::data::{
    episode_rng, generate_synthetic, sample_episode, split_by_class, ClassSamples, Dataset, Episode, EpisodeSpec,
    SplitFractions, SyntheticSpec,
};
use fewshot::engine::{
    evaluate, evaluate_with, grad_check, random_partition, sweep, train, EpisodeScore, Execution, Metrics,
    TrainConfig,
};
use fewshot::loss::{
    compute_margins, jsd_mi_loss, qr_loss, qr_margin_loss, LossConfig, LossKind, Partition, Polarity,
    SimilarityPartition,
};
use fewshot::model::{episode_loss, mlp_init, MlpParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if ok {
            self.notes.push(note);
        } else {
            self.passed = false;
            self.notes.push(format!("violated: {note}"));
        }
    }

    fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }
}

fn relative_partition(rng: &mut ChaCha8Rng) -> SimilarityPartition {
    match random_partition(LossKind::Qr, rng) {
        Partition::Relative(p) => p,
        Partition::CrossEntropy(_) => unreachable!("relative kind"),
    }
}

fn single(pos: &[f64], neg: &[f64]) -> SimilarityPartition {
    SimilarityPartition::from_values(&[(pos.to_vec(), neg.to_vec())])
}

fn gradient_exactness() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    for kind in LossKind::ALL {
        let r = grad_check(kind, 100, 2024).expect("grad check runs");
        out.require(
            r.sim_max_rel_error < 1e-6 && r.param_max_rel_error < 1e-4,
            format!(
                "{kind}: similarity {:.2e} < 1e-6, parameter {:.2e} < 1e-4",
                r.sim_max_rel_error, r.param_max_rel_error
            ),
        );
    }
    let elapsed = start.elapsed();
    out.require(elapsed < Duration::from_secs(30), format!("runtime {:.1}s < 30s", elapsed.as_secs_f64()));
    out
}

// The Jensen step applied to the concave log(1 + y) with weights 1/(2|P|) and
// 1/(2|N|) gives, per category,
//   −½·jsd_term ≥ −qr_term
// where jsd_term = 1/|P| Σ softplus(−s⁺) + 1/|N| Σ softplus(s⁻) is the
// minimization-form JSD term, i.e. the half-weight estimator bounds −QR from
// above. The same inequality written on minimization-form terms reverses.
fn jensen_bound() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut violations, mut reversed, mut checked) = (0, 0, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let p = relative_partition(&mut rng);
        for c in &p.categories {
            let pos: Vec<f64> = c.pos.iter().map(|e| e.sim).collect();
            let neg: Vec<f64> = c.neg.iter().map(|e| e.sim).collect();
            let cat = single(&pos, &neg);
            let half_jsd_max = -0.5 * jsd_mi_loss(&cat).unwrap().value;
            let neg_qr = -qr_loss(&cat).unwrap().value;
            checked += 1;
            worst = worst.max(neg_qr - half_jsd_max);
            if half_jsd_max < neg_qr - 1e-12 {
                violations += 1;
            }
            if -half_jsd_max < -neg_qr - 1e-12 {
                reversed += 1;
            }
        }
    }
    out.require(
        violations == 0,
        format!("half-weight estimator ≥ −QR on {checked} categories: {violations} violations (max excess {worst:.2e})"),
    );
    out.note(format!(
        "the same inequality on minimization-form terms fails on {reversed} of {checked} categories"
    ));

    let a: f64 = 0.37;
    let eq = single(&[a, a], &[-a, -a, -a]);
    let gap = (-0.5 * jsd_mi_loss(&eq).unwrap().value + qr_loss(&eq).unwrap().value).abs();
    out.require(gap < 1e-12, format!("equal exponentials give equality (gap {gap:.1e})"));

    let zero = single(&[0.0], &[0.0]);
    let full = -jsd_mi_loss(&zero).unwrap().value;
    let neg_qr = -qr_loss(&zero).unwrap().value;
    let ln2 = std::f64::consts::LN_2;
    out.require(
        (full + 2.0 * ln2).abs() < 1e-15 && (neg_qr + ln2).abs() < 1e-15 && full < neg_qr,
        format!("full-weight counterexample pos = neg = 0: {full:.6} < {neg_qr:.6}"),
    );
    out
}

fn margin_algebra() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut clean, mut shifted, mut bad) = (0, 0, 0);
    let mut oracle_mismatch = 0;
    for i in 0..10_000 {
        let mut p = relative_partition(&mut rng);
        if i % 2 == 0 {
            for c in &mut p.categories {
                c.pos.iter_mut().for_each(|e| e.sim = e.sim.abs());
                c.neg.iter_mut().for_each(|e| e.sim = -e.sim.abs());
            }
        }
        let offending = p
            .categories
            .iter()
            .any(|c| c.pos.iter().any(|e| e.sim < 0.0) || c.neg.iter().any(|e| e.sim > 0.0));
        let base = qr_loss(&p).unwrap().value;
        let margin = qr_margin_loss(&p).unwrap().value;
        if offending {
            shifted += 1;
            if margin <= base {
                bad += 1;
            }
        } else {
            clean += 1;
            if margin.to_bits() != base.to_bits() {
                bad += 1;
            }
        }

        for (c, m) in p.categories.iter().zip(compute_margins(&p)) {
            let below: Vec<f64> = c.pos.iter().map(|e| e.sim).filter(|&s| s < 0.0).collect();
            let above: Vec<f64> = c.neg.iter().map(|e| e.sim).filter(|&s| s > 0.0).collect();
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            if mean(&below).to_bits() != m.e_plus.to_bits() || mean(&above).to_bits() != m.e_minus.to_bits() {
                oracle_mismatch += 1;
            }
        }
    }
    out.require(
        bad == 0,
        format!("{clean} clean partitions equal bitwise, {shifted} with offenders strictly larger: {bad} failures"),
    );
    out.require(oracle_mismatch == 0, format!("margins match the filtered-mean oracle: {oracle_mismatch} mismatches"));
    out
}

fn reweighting() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut order_fail, mut tolerance_fail, mut pairs) = (0, 0, 0);
    for _ in 0..1_000 {
        let p = relative_partition(&mut rng);
        let r = qr_loss(&p).unwrap();
        let raised = {
            let mut q = p.clone();
            for c in &mut q.categories {
                c.neg.iter_mut().for_each(|e| e.sim += 0.1);
            }
            qr_loss(&q).unwrap()
        };
        let sims = p.values();
        for j in 0..p.num_categories() {
            for pol in [Polarity::Positive, Polarity::Negative] {
                let entries: Vec<(f64, f64)> = r
                    .grads
                    .iter()
                    .zip(&sims)
                    .filter(|(g, _)| g.category == j && g.polarity == pol)
                    .map(|(g, &s)| (s, g.grad.abs()))
                    .collect();
                for a in &entries {
                    for b in &entries {
                        if a.0 < b.0 {
                            pairs += 1;
                            let ok = match pol {
                                Polarity::Positive => a.1 > b.1,
                                Polarity::Negative => a.1 < b.1,
                            };
                            if !ok {
                                order_fail += 1;
                            }
                        }
                    }
                }
            }
        }
        for (before, after) in r.grads.iter().zip(&raised.grads) {
            if before.polarity == Polarity::Positive && after.grad.abs() >= before.grad.abs() {
                tolerance_fail += 1;
            }
        }
    }
    out.require(order_fail == 0, format!("gradient magnitude ordering on {pairs} pairs: {order_fail} failures"));
    out.require(
        tolerance_fail == 0,
        format!("raising every negative by 0.1 shrinks every positive gradient: {tolerance_fail} failures"),
    );
    out
}

fn pool_dataset(classes: usize, per_class: usize, dim: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec { n_classes: classes, dim, per_class, noise_sigma: 0.3, seed }).unwrap()
}

fn partition_shapes() -> Outcome {
    let mut out = Outcome::new();
    let d = pool_dataset(12, 12, 6, 1);
    let params = mlp_init(&[6, 8, 4], 0.01, 1).unwrap();
    for (way, shot, query, pos, neg) in [(5, 1, 5, 5, 24), (2, 3, 2, 2, 5)] {
        let spec = EpisodeSpec { way, shot, query };
        let mut wrong = 0;
        for i in 0..200 {
            let ep = sample_episode(&d, &spec, &mut episode_rng(3, i)).unwrap();
            let (_, partition, _) = episode_loss(&params, &ep, &LossConfig::new(LossKind::Qr), None).unwrap();
            let Partition::Relative(p) = partition else { unreachable!() };
            if p.num_categories() != way || p.categories.iter().any(|c| c.pos.len() != pos || c.neg.len() != neg) {
                wrong += 1;
            }
        }
        out.require(wrong == 0, format!("({way}, {shot}, {query}): |P| = {pos}, |N| = {neg} on 200 episodes"));
    }
    let ep = sample_episode(&d, &EpisodeSpec { way: 5, shot: 1, query: 5 }, &mut episode_rng(3, 0)).unwrap();
    let (_, partition, _) = episode_loss(&params, &ep, &LossConfig::new(LossKind::Ce), None).unwrap();
    let Partition::CrossEntropy(p) = partition else { unreachable!() };
    out.require(
        p.sims.len() == 25 && p.sims.iter().all(|r| r.len() == 5),
        "ce layout 25×5",
    );
    out
}

fn episode_is_valid(ep: &Episode, d: &Dataset) -> bool {
    let spec = ep.spec;
    let mut seen = ep.class_map.clone();
    seen.sort_unstable();
    seen.dedup();
    if ep.class_map.len() != spec.way || seen.len() != spec.way {
        return false;
    }
    if ep.support.len() != spec.way * spec.shot || ep.query.len() != spec.way * spec.query {
        return false;
    }
    for label in 0..spec.way {
        let class = ep.class_map[label];
        let s: Vec<_> = ep.support.iter().filter(|x| x.label == label).collect();
        let q: Vec<_> = ep.query.iter().filter(|x| x.label == label).collect();
        if s.len() != spec.shot || q.len() != spec.query {
            return false;
        }
        let mut idx: Vec<usize> = s.iter().chain(&q).map(|x| x.index).collect();
        if s.iter().chain(&q).any(|x| x.class != class || x.features != d.classes[class].samples[x.index]) {
            return false;
        }
        idx.sort_unstable();
        idx.dedup();
        if idx.len() != spec.shot + spec.query {
            return false;
        }
    }
    ep.support.windows(2).all(|w| w[0].label <= w[1].label) && ep.query.windows(2).all(|w| w[0].label <= w[1].label)
}

fn episode_protocol() -> Outcome {
    let mut out = Outcome::new();
    let d = pool_dataset(10, 12, 3, 2);
    let spec = EpisodeSpec { way: 5, shot: 1, query: 5 };
    let n = 10_000;
    let mut invalid = 0;
    let mut selected = [0usize; 10];
    let mut assigned = [[0usize; 5]; 10];
    for i in 0..n {
        let ep = sample_episode(&d, &spec, &mut episode_rng(99, i as u64)).unwrap();
        if !episode_is_valid(&ep, &d) {
            invalid += 1;
        }
        for (label, &class) in ep.class_map.iter().enumerate() {
            selected[class] += 1;
            assigned[class][label] += 1;
        }
    }
    out.require(invalid == 0, format!("{n} episodes satisfy the disjointness and bijection invariants"));

    let sel: Vec<f64> = selected.iter().map(|&c| c as f64 / n as f64).collect();
    let (lo, hi) = sel.iter().fold((1.0f64, 0.0f64), |(a, b), &f| (a.min(f), b.max(f)));
    out.require(
        sel.iter().all(|f| (f - 0.5).abs() <= 0.05 * 0.5),
        format!("class selection frequency in [{lo:.4}, {hi:.4}] within ±5% of 0.5"),
    );
    let mut dev = 0.0f64;
    for (c, row) in assigned.iter().enumerate() {
        for &k in row {
            dev = dev.max((k as f64 / selected[c] as f64 - 0.2).abs() / 0.2);
        }
    }
    out.require(dev <= 0.10, format!("label assignment max relative deviation {:.2}% ≤ 10%", 100.0 * dev));

    let params = mlp_init(&[3, 8, 4], 0.01, 3).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let par = pool.install(|| evaluate_with(&params, &d, &spec, 600, 17, Execution::Parallel).unwrap());
    let ser = evaluate_with(&params, &d, &spec, 600, 17, Execution::Serial).unwrap();
    let bits = |m: &Metrics| {
        [m.accuracy, m.macro_precision, m.macro_f1]
            .iter()
            .flat_map(|i| [i.mean.to_bits(), i.ci95.to_bits()])
            .collect::<Vec<_>>()
    };
    out.require(bits(&par) == bits(&ser), "600-episode evaluation: 4 workers bitwise equal to serial");
    out
}

fn learning_sanity() -> Outcome {
    let mut out = Outcome::new();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (raw, untrained, trained, history) = pool.install(|| {
        let rc = RunConfig::from_map(&ConfigMap::default()).unwrap();
        let (tr, va, te) = rc.load_splits().unwrap();
        let spec = rc.train.episode;
        let raw = evaluate(&MlpParams::identity(te.dim), &te, &spec, rc.eval_episodes, rc.eval_seed).unwrap();
        let init = train(&TrainConfig { train_episodes: 0, ..rc.train.clone() }, &tr, &va).unwrap();
        let untrained = evaluate(&init.params, &te, &spec, rc.eval_episodes, rc.eval_seed).unwrap();
        let run = train(&rc.train, &tr, &va).unwrap();
        let trained = evaluate(&run.params, &te, &spec, rc.eval_episodes, rc.eval_seed).unwrap();
        let untrained_val = evaluate(&init.params, &va, &spec, rc.train.val_episodes, 0).unwrap();
        (raw, untrained, trained, (run.history, untrained_val))
    });
    let elapsed = start.elapsed();
    let (acc, base) = (trained.accuracy.mean, untrained.accuracy.mean);
    out.note(format!("raw-feature nearest-centroid test accuracy {:.4} ± {:.4}", raw.accuracy.mean, raw.accuracy.ci95));
    let best = history.0.best_val_episode.unwrap_or(0);
    let curve: Vec<String> = history.0.points.iter().map(|p| format!("{}:{:.3}", p.episode, p.val.accuracy.mean)).collect();
    out.note(format!("validation curve {} (best at {best})", curve.join(" ")));
    out.note(format!("untrained validation accuracy {:.4}", history.1.accuracy.mean));
    out.require(acc >= 0.90, format!("trained test accuracy {acc:.4} ± {:.4} ≥ 0.90", trained.accuracy.ci95));
    out.require(acc >= base + 0.15, format!("gain over untrained ({base:.4}) is {:+.4} ≥ +0.15", acc - base));
    out.require(
        elapsed < Duration::from_secs(180),
        format!("single-threaded runtime {:.1}s < 180s", elapsed.as_secs_f64()),
    );
    out
}

const TREND_SEEDS: [u64; 3] = [0, 1, 2];

fn trend_reproduction() -> Outcome {
    let mut out = Outcome::new();
    let d = generate_synthetic(&SyntheticSpec { n_classes: 64, dim: 32, per_class: 40, noise_sigma: 0.3, seed: 7 })
        .unwrap();
    let (tr, va, te) = split_by_class(&d, SplitFractions::default(), 0).unwrap();
    let shots = [1, 2, 3, 4, 5];
    let ways = [2, 3, 5, 10];

    // Per seed: 5-way shot curve, 1-shot way curve, and ce at 5-way 5-shot.
    let mut shot_acc = vec![Vec::new(); shots.len()];
    let mut shot_ci = vec![Vec::new(); shots.len()];
    let mut way_acc = vec![Vec::new(); ways.len()];
    let mut way_ci = vec![Vec::new(); ways.len()];
    let mut ce_acc = Vec::new();
    for seed in TREND_SEEDS {
        let base = TrainConfig { seed, ..TrainConfig::default() };
        let eval_seed = 1000 + seed;
        let metric = |c: &fewshot::engine::SweepCell| c.outcome.clone().expect("benchmark cell trains").accuracy;
        for (i, c) in sweep(&base, &[5], &shots, &tr, &va, &te, 600, eval_seed).iter().enumerate() {
            shot_acc[i].push(metric(c).mean);
            shot_ci[i].push(metric(c).ci95);
        }
        for (i, c) in sweep(&base, &ways, &[1], &tr, &va, &te, 600, eval_seed).iter().enumerate() {
            way_acc[i].push(metric(c).mean);
            way_ci[i].push(metric(c).ci95);
        }
        let ce = TrainConfig { loss: LossConfig::new(LossKind::Ce), ..base };
        ce_acc.push(metric(&sweep(&ce, &[5], &[5], &tr, &va, &te, 600, eval_seed)[0]).mean);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let shot_m: Vec<f64> = shot_acc.iter().map(|v| mean(v)).collect();
    let shot_c: Vec<f64> = shot_ci.iter().map(|v| mean(v)).collect();
    let way_m: Vec<f64> = way_acc.iter().map(|v| mean(v)).collect();
    let way_c: Vec<f64> = way_ci.iter().map(|v| mean(v)).collect();

    let fmt = |m: &[f64]| m.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let shot_ok = (1..shots.len()).all(|i| shot_m[i] >= shot_m[i - 1] - shot_c[i].max(shot_c[i - 1]));
    out.require(shot_ok, format!("5-way accuracy over shots 1..5 non-decreasing within one CI: {}", fmt(&shot_m)));
    let way_ok = (1..ways.len()).all(|i| way_m[i] <= way_m[i - 1] + way_c[i].max(way_c[i - 1]));
    out.require(way_ok, format!("1-shot accuracy over ways 2,3,5,10 non-increasing within one CI: {}", fmt(&way_m)));
    let (qr, ce) = (shot_m[4], mean(&ce_acc));
    out.require(qr >= ce - 0.02, format!("5-way 5-shot mean accuracy qr {qr:.4} ≥ ce {ce:.4} − 0.02"));
    out
}

fn evaluation_math() -> Outcome {
    let mut out = Outcome::new();
    let scores: Vec<EpisodeScore> = [0.6, 0.8, 1.0]
        .iter()
        .map(|&a| EpisodeScore { accuracy: a, precision: a, f1: a })
        .collect();
    let m = Metrics::from_scores(&scores).unwrap();
    let expected = 1.96 * 0.2 / 3f64.sqrt();
    out.require(
        (m.accuracy.mean - 0.8).abs() < 1e-15 && (m.accuracy.ci95 - expected).abs() < 1e-15,
        format!("accuracies 0.6, 0.8, 1.0 give mean {:.4}, ci95 {:.4}", m.accuracy.mean, m.accuracy.ci95),
    );
    out.require((m.accuracy.ci95 - 0.2263).abs() < 5e-5, "ci95 ≈ 0.2263");

    let dim = 8;
    let one_hot = (0..dim)
        .map(|c| {
            let mut v = vec![0.0; dim];
            v[c] = 1.0;
            ClassSamples { name: format!("c{c}"), samples: vec![v; 10] }
        })
        .collect();
    let d = Dataset::new(one_hot, dim).unwrap();
    let spec = EpisodeSpec { way: 5, shot: 1, query: 5 };
    let m = evaluate(&MlpParams::identity(dim), &d, &spec, 600, 0).unwrap();
    let perfect = [m.accuracy, m.macro_precision, m.macro_f1].iter().all(|i| i.mean == 1.0 && i.ci95 == 0.0);
    out.require(perfect, "one-hot classes with no noise: accuracy = precision = f1 = 1, ci95 = 0");

    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let noise = (0..10)
        .map(|c| ClassSamples {
            name: format!("c{c}"),
            samples: (0..300)
                .map(|_| (0..16).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect(),
        })
        .collect();
    let d = Dataset::new(noise, 16).unwrap();
    let params = mlp_init(&[16, 32, 16], 0.01, 4).unwrap();
    let m = evaluate(&params, &d, &spec, 600, 0).unwrap();
    out.require(
        (m.accuracy.mean - 0.2).abs() <= m.accuracy.ci95,
        format!("random embeddings of unstructured data: {:.4} ± {:.4} covers 0.2", m.accuracy.mean, m.accuracy.ci95),
    );
    out
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient exactness", gradient_exactness),
        ("jensen bound", jensen_bound),
        ("margin algebra", margin_algebra),
        ("reweighting", reweighting),
        ("partition shape", partition_shapes),
        ("episode protocol", episode_protocol),
        ("learning sanity", learning_sanity),
        ("trend reproduction", trend_reproduction),
        ("evaluation math", evaluation_math),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name} ({:.1}s)", i + 1, start.elapsed().as_secs_f64());
        for n in &outcome.notes {
            println!("       {n}");
        }
        if !outcome.passed {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
