//! Acceptance suite: one test per release criterion, each printing a single
//! `criterion N (<name>): pass|fail` line (visible with `--nocapture`, or in
//! the captured output on failure). Tolerances and budgets are pinned as
//! constants next to the criterion they guard.

use std::path::Path;
use std::time::{Duration, Instant};

use itertools::Itertools;
use ndarray::{Array2, Array3, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use graphfed::aggregation::align_and_score;
use graphfed::global_nodes::init_global_nodes;
use graphfed::graph::{
    generate_sbm, load_graph, make_nonoverlapping, partition_louvain, Graph, SubgraphSpec,
};
use graphfed::model::{
    forward_instrumented, init_params, loss_and_grad, Batch, ModelConfig, ModelParams,
};
use graphfed::preprocess::{ppr_matrix, PprMethod};
use graphfed::privacy::{ldp_apply, privacy_budget, LDPConfig, LdpTarget};
use graphfed::runtime::{train, AggregationMode, RunConfig};
use graphfed::seed;
use graphfed::theory::{blob_instance, lemma_residual, random_balanced_instance};

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n} ({name}): {} [{detail}]",
        if pass { "pass" } else { "fail" }
    );
}

fn within(started: Instant, budget: Duration) -> bool {
    started.elapsed() <= budget
}

// ---------------------------------------------------------------- criterion 1

const C1_TRIALS: usize = 100;
const C1_RESIDUAL: f64 = 1e-9;
const C1_BUDGET: Duration = Duration::from_secs(5);

/// Replacing the key/value set of a balanced assignment expansion by the
/// centroids themselves must not move the attention output at all.
#[test]
fn criterion_1_exact_centroid_substitution() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for t in 0..C1_TRIALS {
        let n_g = [2, 4, 8][t % 3];
        let inst = random_balanced_instance(32, 8, 8, n_g, 8, 1000 + t as u64).unwrap();
        worst = worst.max(lemma_residual(&inst).unwrap());
    }
    let on_time = within(started, C1_BUDGET);
    let pass = worst < C1_RESIDUAL && on_time;
    report(
        1,
        "exact centroid substitution",
        pass,
        &format!("max residual {worst:.2e}, {:.2?}", started.elapsed()),
    );
    assert!(pass, "max residual {worst:e}, on_time {on_time}");
}

// ---------------------------------------------------------------- criterion 2

const C2_TRIALS: usize = 100;
const C2_BUDGET: Duration = Duration::from_secs(30);

/// With centroids fitted to blob-structured representations, the measured
/// output deviation must sit below the constant-calibrated bound every time.
#[test]
fn criterion_2_substitution_error_bound() {
    let started = Instant::now();
    let mut held = 0usize;
    let mut sigma_sum = 0.0;
    let mut min_margin = f64::INFINITY;
    for t in 0..C2_TRIALS {
        let inst = blob_instance(32, 8, 8, 4, 8, 5.0, 0.3, 5000 + t as u64).unwrap();
        let rep = graphfed::theory::bound_check(&inst, 60 + t as u64).unwrap();
        if rep.holds {
            held += 1;
        }
        sigma_sum += rep.sigma;
        min_margin = min_margin.min(rep.rhs - rep.lhs);
    }
    let on_time = within(started, C2_BUDGET);
    let pass = held == C2_TRIALS && on_time;
    report(
        2,
        "substitution error bound",
        pass,
        &format!(
            "{held}/{C2_TRIALS} held, mean sigma {:.3}, min margin {min_margin:.3e}, {:.2?}",
            sigma_sum / C2_TRIALS as f64,
            started.elapsed()
        ),
    );
    assert!(pass, "{held}/{C2_TRIALS} held, on_time {on_time}");
}

// ---------------------------------------------------------------- criterion 3

const C3_DRAWS: usize = 10;
const C3_REL_ERR: f64 = 1e-4;
const C3_FD_STEP: f64 = 1e-5;
const C3_BUDGET: Duration = Duration::from_secs(60);

fn gaussian_batch(cfg: &ModelConfig, b: usize, batch_seed: u64) -> (Batch, Array2<f64>) {
    let mut rng = seed::rng(batch_seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut tokens = Array3::zeros((b, 1 + cfg.n_s, cfg.in_dim()));
    for x in tokens.iter_mut() {
        *x = normal.sample(&mut rng);
    }
    let mut mask = Array2::from_elem((b, cfg.token_count()), true);
    // pad one neighbor slot on odd centers so masking is exercised
    for i in (1..b).step_by(2) {
        mask[(i, cfg.n_s)] = false;
        tokens.index_axis_mut(Axis(0), i).row_mut(cfg.n_s).fill(0.0);
    }
    let labels = (0..b).map(|i| Some(i % cfg.num_classes)).collect();
    let batch = Batch::new(cfg, tokens, mask, labels).unwrap();
    let globals = Array2::from_shape_simple_fn((cfg.n_g, cfg.d), || normal.sample(&mut rng));
    (batch, globals)
}

/// Analytic gradients against central finite differences on every parameter,
/// repeated over independent random draws of parameters and data.
#[test]
fn criterion_3_gradient_check() {
    let started = Instant::now();
    let cfg = ModelConfig {
        layers: 1,
        heads: 2,
        d: 8,
        feature_dim: 5,
        pe_dim: 3,
        n_s: 3,
        n_g: 2,
        num_classes: 2,
        dropout: 0.0,
    };
    let loss_of = |flat: &[f64], batch: &Batch, globals: &Array2<f64>| -> f64 {
        let params = ModelParams::unflatten(&cfg, flat).unwrap();
        loss_and_grad(&params, &cfg, batch, globals, None).unwrap().0
    };

    let mut worst = 0.0f64;
    for draw in 0..C3_DRAWS {
        let params = init_params(&cfg, 300 + draw as u64).unwrap();
        let (batch, globals) = gaussian_batch(&cfg, 4, 400 + draw as u64);
        let (_, grads, _) = loss_and_grad(&params, &cfg, &batch, &globals, None).unwrap();
        let analytic = grads.flatten();
        let flat = params.flatten();
        for idx in 0..flat.len() {
            let mut probe = flat.clone();
            probe[idx] = flat[idx] + C3_FD_STEP;
            let plus = loss_of(&probe, &batch, &globals);
            probe[idx] = flat[idx] - C3_FD_STEP;
            let minus = loss_of(&probe, &batch, &globals);
            let fd = (plus - minus) / (2.0 * C3_FD_STEP);
            let denom = analytic[idx].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic[idx] - fd).abs() / denom);
        }
    }
    let on_time = within(started, C3_BUDGET);
    let pass = worst < C3_REL_ERR && on_time;
    report(
        3,
        "gradient check",
        pass,
        &format!("worst relative error {worst:.2e}, {:.2?}", started.elapsed()),
    );
    assert!(pass, "worst relative error {worst:e}, on_time {on_time}");
}

// ---------------------------------------------------------------- criterion 4

const C4_TRIALS: usize = 100;
const C4_SCORE_TOL: f64 = 1e-9;
const C4_BUDGET: Duration = Duration::from_secs(30);

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    a.dot(&b) / (na * nb)
}

fn best_mean_cosine_by_enumeration(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    (0..n)
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| cosine(a.row(i), b.row(j)))
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The assignment solver must reproduce the exhaustive optimum over all
/// bijections for every matchable set size.
#[test]
fn criterion_4_alignment_optimality() {
    let started = Instant::now();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for n_g in 2..=7usize {
        let mut rng = seed::rng(seed::derive(44, &[n_g as u64]));
        for _ in 0..C4_TRIALS {
            let a = Array2::from_shape_simple_fn((n_g, 5), || normal.sample(&mut rng));
            let b = Array2::from_shape_simple_fn((n_g, 5), || normal.sample(&mut rng));
            let fast = align_and_score(&a, &b).unwrap().score;
            let slow = best_mean_cosine_by_enumeration(&a, &b);
            worst = worst.max((fast - slow).abs());
        }
    }
    let on_time = within(started, C4_BUDGET);
    let pass = worst <= C4_SCORE_TOL && on_time;
    report(
        4,
        "alignment optimality",
        pass,
        &format!("max |fast - exhaustive| {worst:.2e}, {:.2?}", started.elapsed()),
    );
    assert!(pass, "max score gap {worst:e}, on_time {on_time}");
}

// ---------------------------------------------------------------- criterion 5

const C5_BATCHES: usize = 200;
const C5_BATCH: usize = 32;
const C5_RADIUS: f64 = 0.3;
const C5_COUNT_TOL: f64 = 1e-9;

/// Streaming three well-separated blobs through the momentum update must
/// park one centroid on each blob while the decayed counts stay conserved.
#[test]
fn criterion_5_online_clustering() {
    let blob_means = [[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]];
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rng = seed::rng(seed::derive(0, &[1]));
    let mut gn = init_global_nodes(3, 2, 0.9, 0).unwrap();

    let mut worst_drift = 0.0f64;
    for _ in 0..C5_BATCHES {
        let batch = Array2::from_shape_fn((C5_BATCH, 2), |(i, c)| {
            blob_means[i % 3][c] + noise.sample(&mut rng)
        });
        let before: f64 = gn.counts().sum();
        gn.online_update(&batch).unwrap();
        let want = gn.gamma() * before + (1.0 - gn.gamma()) * C5_BATCH as f64;
        worst_drift = worst_drift.max((gn.counts().sum() - want).abs());
    }

    let mut used = [false; 3];
    let mut max_dist = 0.0f64;
    let mut matched = 0usize;
    for j in 0..3 {
        let row = gn.mu().row(j);
        let hit = blob_means.iter().position(|m| {
            let d2 = (row[0] - m[0]).powi(2) + (row[1] - m[1]).powi(2);
            d2.sqrt() < C5_RADIUS
        });
        if let Some(k) = hit {
            if !used[k] {
                used[k] = true;
                matched += 1;
                let d2 = (row[0] - blob_means[k][0]).powi(2) + (row[1] - blob_means[k][1]).powi(2);
                max_dist = max_dist.max(d2.sqrt());
            }
        }
    }
    let pass = matched == 3 && worst_drift < C5_COUNT_TOL;
    report(
        5,
        "online clustering",
        pass,
        &format!("{matched}/3 blobs claimed, max dist {max_dist:.3}, count drift {worst_drift:.1e}"),
    );
    assert!(pass, "matched {matched}/3, count drift {worst_drift:e}");
}

// ---------------------------------------------------------------- criterion 6

const C6_DIFF: f64 = 1e-6;
const C6_CLOSED_FORM_TOL: f64 = 1e-4;

/// Power iteration must agree with the exact linear solve, and the two-node
/// diffusion matrix must match its closed form.
#[test]
fn criterion_6_diffusion_matrix() {
    // One block at a single edge probability is an Erdős–Rényi graph.
    let g = generate_sbm(&[50], 0.15, 0.15, 4, 1.0, 42).unwrap();
    let sub = SubgraphSpec::induce(&g, 0, (0..50).collect()).unwrap();
    let exact = ppr_matrix(&sub, 0.15, PprMethod::Exact, 1e-6).unwrap();
    let power = ppr_matrix(&sub, 0.15, PprMethod::PowerIteration, 1e-9).unwrap();
    let max_diff = (exact.matrix() - power.matrix())
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));

    let pair = Graph::new(
        vec!["a".into(), "b".into()],
        Array2::zeros((2, 1)),
        vec![0, 1],
        2,
        &[(0, 1)],
    )
    .unwrap();
    let pair_sub = SubgraphSpec::induce(&pair, 0, vec![0, 1]).unwrap();
    let two = ppr_matrix(&pair_sub, 0.15, PprMethod::Exact, 1e-6).unwrap();
    let want = [[0.5405, 0.4595], [0.4595, 0.5405]];
    let mut closed_form_err = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            closed_form_err = closed_form_err.max((two.matrix()[(i, j)] - want[i][j]).abs());
        }
    }

    let pass = max_diff < C6_DIFF && closed_form_err <= C6_CLOSED_FORM_TOL;
    report(
        6,
        "diffusion matrix",
        pass,
        &format!("power vs exact {max_diff:.1e}, two-node closed form off by {closed_form_err:.1e}"),
    );
    assert!(pass, "power gap {max_diff:e}, closed form gap {closed_form_err:e}");
}

// ---------------------------------------------------------------- criterion 7

const C7_KS_SAMPLES: usize = 100_000;
const C7_KS_TOL: f64 = 0.01;

fn laplace_cdf(x: f64, lambda: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / lambda).exp()
    } else {
        1.0 - 0.5 * (-x / lambda).exp()
    }
}

/// Clamp values exactly, emit genuinely Laplace noise, and report the
/// budget the mechanism actually spends.
#[test]
fn criterion_7_privacy_mechanism() {
    // clamp only: noise scale zero leaves the clipped signal untouched
    let clamp_cfg = LDPConfig {
        delta: 0.002,
        lambda: 0.0,
        targets: LdpTarget::GlobalNodesOnly,
    };
    let clamped = ldp_apply(&[-5.0, 0.001, 3.0], &clamp_cfg, 9).unwrap();
    let clamp_exact = clamped == vec![-0.002, 0.001, 0.002];

    // pure noise: zero signal, clamp bound far away
    let lambda = 0.001;
    let noise_cfg = LDPConfig {
        delta: 1.0,
        lambda,
        targets: LdpTarget::GlobalNodesOnly,
    };
    let mut noise = ldp_apply(&vec![0.0; C7_KS_SAMPLES], &noise_cfg, 4242).unwrap();
    noise.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = noise.len() as f64;
    let mut ks = 0.0f64;
    for (i, &x) in noise.iter().enumerate() {
        let f = laplace_cdf(x, lambda);
        ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }

    let eps = privacy_budget(0.002, 0.001).unwrap();
    let eps_ok = (eps - 4.0).abs() < 1e-12;

    let pass = clamp_exact && ks < C7_KS_TOL && eps_ok;
    report(
        7,
        "privacy mechanism",
        pass,
        &format!("clamp exact {clamp_exact}, KS {ks:.4}, epsilon {eps}"),
    );
    assert!(pass, "clamp {clamp_exact}, ks {ks}, eps {eps}");
}

// ---------------------------------------------------------------- criterion 8

const C8_RATIO_LO: f64 = 1.95;
const C8_RATIO_HI: f64 = 2.05;

fn score_evals_for(n: usize, cfg: &ModelConfig, seed_base: u64) -> u64 {
    let params = init_params(cfg, 7).unwrap();
    let globals = init_global_nodes(cfg.n_g, cfg.d, 0.9, 7).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut total = 0u64;
    let mut start = 0usize;
    let mut chunk = 0u64;
    while start < n {
        let b = (n - start).min(64);
        let mut rng = seed::rng(seed::derive(seed_base, &[chunk]));
        let tokens =
            Array3::from_shape_simple_fn((b, 1 + cfg.n_s, cfg.in_dim()), || normal.sample(&mut rng));
        let mask = Array2::from_elem((b, cfg.token_count()), true);
        let labels = (0..b).map(|i| Some(i % cfg.num_classes)).collect();
        let batch = Batch::new(cfg, tokens, mask, labels).unwrap();
        let (_, _, evals) =
            forward_instrumented(&params, cfg, &batch, globals.mu(), None).unwrap();
        total += evals;
        start += b;
        chunk += 1;
    }
    total
}

/// With the context and global-node sizes fixed, the attention-score count
/// must grow linearly in how many centers are pushed through the model.
#[test]
fn criterion_8_linear_attention_cost() {
    let cfg = ModelConfig {
        layers: 2,
        heads: 4,
        d: 32,
        feature_dim: 12,
        pe_dim: 4,
        n_s: 16,
        n_g: 10,
        num_classes: 4,
        dropout: 0.0,
    };
    let evals_1k = score_evals_for(1000, &cfg, 81);
    let evals_2k = score_evals_for(2000, &cfg, 82);
    let ratio = evals_2k as f64 / evals_1k as f64;
    let pass = (C8_RATIO_LO..=C8_RATIO_HI).contains(&ratio);
    report(
        8,
        "linear attention cost",
        pass,
        &format!("counts {evals_1k} -> {evals_2k}, ratio {ratio:.4}"),
    );
    assert!(pass, "ratio {ratio}");
}

// ---------------------------------------------------------------- criterion 9

const C9_SEEDS: [u64; 3] = [0, 1, 2];
const C9_ROUNDS: usize = 30;
const C9_MIN_GAP: f64 = 0.01;
const C9_ALPHA_RATIO: f64 = 1.5;
const C9_BUDGET: Duration = Duration::from_secs(600);

const NODES_PER_CLIENT: usize = 120;
/// Clients 0 and 1 form one regime group, 2 and 3 the other.
const GROUP_OF: [usize; 4] = [0, 0, 1, 1];

/// Four client communities in two regime groups with disjoint informative
/// feature blocks: group 0 encodes the label in dims 0..4, group 1 in dims
/// 4..8 with flipped polarity, everything else is unit noise. A model
/// averaged across groups spreads its weight over both blocks and loses
/// margin on each, while within-group sharing does not. Edges are label-blind
/// so neighbor features add no class signal of their own.
fn grouped_fixture(seed: u64) -> (Graph, Vec<SubgraphSpec>) {
    let n = 4 * NODES_PER_CLIENT;
    let fdim = 8;
    let shift = 1.0;
    let mut rng = seed::rng(seed::derive(seed, &[0xC9]));
    let normal = Normal::new(0.0, 1.0).unwrap();

    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let client_of = |i: usize| i / NODES_PER_CLIENT;

    let mut feats = Array2::zeros((n, fdim));
    for i in 0..n {
        let group = GROUP_OF[client_of(i)];
        let class_sign = if labels[i] == 1 { 1.0 } else { -1.0 };
        for j in 0..fdim {
            let mean = if group == 0 && j < 4 {
                class_sign * shift
            } else if group == 1 && j >= 4 {
                -class_sign * shift
            } else {
                0.0
            };
            feats[(i, j)] = mean + normal.sample(&mut rng);
        }
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if client_of(u) == client_of(v) { 0.10 } else { 0.02 };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let ids = (0..n).map(|i| i.to_string()).collect();
    let g = Graph::new(ids, feats, labels, 2, &edges).unwrap();
    let assignment: Vec<usize> = (0..n).map(client_of).collect();
    let subs = make_nonoverlapping(&g, &assignment).unwrap();
    (g, subs)
}

fn c9_config(mode: AggregationMode, seed: u64) -> RunConfig {
    RunConfig {
        rounds: C9_ROUNDS,
        local_epochs: 3,
        batch_size: 8,
        // hot enough to resolve the narrow centroid-cosine band four clients
        // produce, cool enough not to lock onto early-round noise
        tau: 12.0,
        split: (0.2, 0.4, 0.4),
        mode,
        model: ModelConfig {
            layers: 2,
            heads: 4,
            d: 32,
            feature_dim: 8,
            pe_dim: 4,
            n_s: 8,
            n_g: 3,
            num_classes: 2,
            dropout: 0.0,
        },
        ldp: LDPConfig {
            targets: LdpTarget::Off,
            ..LDPConfig::default()
        },
        seed,
        ..RunConfig::default()
    }
}

/// Personalized mixing must beat both uniform averaging (which straddles the
/// contradictory regimes) and isolated local training, and the learned
/// mixing weights must recover the two regime groups.
#[test]
fn criterion_9_personalization_end_to_end() {
    let started = Instant::now();
    let avg = |mode: AggregationMode| -> (f64, f64, f64) {
        let mut acc_sum = 0.0;
        let mut within_sum = 0.0;
        let mut cross_sum = 0.0;
        for &s in &C9_SEEDS {
            let (g, subs) = grouped_fixture(s);
            let fed = train(&g, &subs, &c9_config(mode, s)).unwrap();
            acc_sum += fed.history.avg_test_acc_at_best_val().unwrap();
            // mixing weights judged over the second half of training, after
            // the uploaded centroids have absorbed enough local batches
            let mut within = (0.0, 0usize);
            let mut cross = (0.0, 0usize);
            for (r, alpha) in &fed.alphas {
                if *r <= C9_ROUNDS / 2 {
                    continue;
                }
                for i in 0..4 {
                    for j in 0..4 {
                        if i == j {
                            continue;
                        }
                        let cell = alpha[(i, j)];
                        if GROUP_OF[i] == GROUP_OF[j] {
                            within = (within.0 + cell, within.1 + 1);
                        } else {
                            cross = (cross.0 + cell, cross.1 + 1);
                        }
                    }
                }
            }
            if within.1 > 0 {
                within_sum += within.0 / within.1 as f64;
                cross_sum += cross.0 / cross.1 as f64;
            }
        }
        let k = C9_SEEDS.len() as f64;
        (acc_sum / k, within_sum / k, cross_sum / k)
    };

    let (acc_pers, within_alpha, cross_alpha) = avg(AggregationMode::Personalized);
    let (acc_unif, _, _) = avg(AggregationMode::Uniform);
    let (acc_local, _, _) = avg(AggregationMode::LocalOnly);

    let beats_uniform = acc_pers >= acc_unif + C9_MIN_GAP;
    let beats_local = acc_pers >= acc_local;
    let alpha_ratio = within_alpha / cross_alpha;
    let recovers_groups = alpha_ratio >= C9_ALPHA_RATIO;
    let on_time = within(started, C9_BUDGET);

    let pass = beats_uniform && beats_local && recovers_groups && on_time;
    report(
        9,
        "personalization end to end",
        pass,
        &format!(
            "personalized {acc_pers:.4}, uniform {acc_unif:.4}, local-only {acc_local:.4}, \
             alpha within/cross {within_alpha:.4}/{cross_alpha:.4} ({alpha_ratio:.2}x), {:.2?}",
            started.elapsed()
        ),
    );
    assert!(
        pass,
        "pers {acc_pers}, unif {acc_unif}, local {acc_local}, ratio {alpha_ratio}, on_time {on_time}"
    );
}

// --------------------------------------------------------------- criterion 10

const C10_TARGET_ACC: f64 = 0.8441;
const C10_BAND: f64 = 0.03;

/// Optional real-dataset run; skips unless node/edge CSVs are provided under
/// `data/cora/`. The absolute accuracy band is reported but only the
/// personalized-vs-uniform ordering can fail the suite.
#[test]
fn criterion_10_real_dataset_stretch() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cora");
    let nodes = dir.join("nodes.csv");
    let edges = dir.join("edges.csv");
    if !nodes.exists() || !edges.exists() {
        println!("criterion 10 (real-dataset stretch): skip [no CSVs under data/cora/]");
        return;
    }

    let g = load_graph(&nodes, &edges).unwrap();
    let part = partition_louvain(&g, 5, seed::derive(0, &[0xB1])).unwrap();
    let subs = make_nonoverlapping(&g, part.assignment()).unwrap();

    let run = |mode: AggregationMode| -> f64 {
        let cfg = RunConfig {
            mode,
            model: ModelConfig {
                feature_dim: g.feature_dim(),
                num_classes: g.num_classes(),
                ..RunConfig::default().model
            },
            ldp: LDPConfig {
                targets: LdpTarget::Off,
                ..LDPConfig::default()
            },
            ..RunConfig::default()
        };
        let fed = train(&g, &subs, &cfg).unwrap();
        fed.history.avg_test_acc_at_best_val().unwrap()
    };

    let acc_pers = run(AggregationMode::Personalized);
    let acc_unif = run(AggregationMode::Uniform);
    let ordering = acc_pers > acc_unif;
    let band = (acc_pers - C10_TARGET_ACC).abs() <= C10_BAND;
    report(
        10,
        "real-dataset stretch",
        ordering,
        &format!(
            "personalized {acc_pers:.4}, uniform {acc_unif:.4}, band {}",
            if band { "within" } else { "outside (reported only)" }
        ),
    );
    assert!(ordering, "personalized {acc_pers} vs uniform {acc_unif}");
}
