use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Batch, ModelConfig, ModelParams, LN_EPS};
use crate::seed;

const GELU_COEF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x)).tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x)
}

/// View a (b, t, d) tensor as (b·t, d) for matrix products.
pub(crate) fn flat(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (b, t, d) = x.dim();
    x.view()
        .into_shape_with_order((b * t, d))
        .expect("standard layout")
}

pub(crate) fn unflat(x: Array2<f64>, b: usize, t: usize) -> Array3<f64> {
    let d = x.ncols();
    x.into_shape_with_order((b, t, d)).expect("standard layout")
}

/// Tokenwise layer norm. Returns (x̂, 1/std, γ·x̂+β).
pub(crate) fn layer_norm(
    x: &Array3<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array3<f64>, Array2<f64>, Array3<f64>) {
    let mean = x.mean_axis(Axis(2)).expect("nonempty d");
    let centered = x - &mean.clone().insert_axis(Axis(2));
    let var = centered.mapv(|c| c * c).mean_axis(Axis(2)).expect("nonempty d");
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = &centered * &rstd.clone().insert_axis(Axis(2));
    let y = &xhat * gain + bias;
    (xhat, rstd, y)
}

pub(crate) struct LayerCache {
    pub xhat1: Array3<f64>,
    pub rstd1: Array2<f64>,
    pub y1: Array3<f64>,
    pub q: Array3<f64>,
    pub k: Array3<f64>,
    pub v: Array3<f64>,
    /// (b, heads, T, T) post-softmax attention
    pub probs: Array4<f64>,
    pub concat: Array3<f64>,
    pub drop1: Option<Array3<f64>>,
    pub xhat2: Array3<f64>,
    pub rstd2: Array2<f64>,
    pub z2: Array3<f64>,
    pub ff_pre: Array3<f64>,
    pub ff_act: Array3<f64>,
    pub drop2: Option<Array3<f64>>,
}

pub(crate) struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub center: Array2<f64>,
    pub logits: Array2<f64>,
    pub score_evals: u64,
}

/// Scaled keep-mask for inverted dropout, or None when inactive.
fn dropout_mask(
    cfg: &ModelConfig,
    shape: (usize, usize, usize),
    train_seed: Option<u64>,
    tag: &[u64],
) -> Option<Array3<f64>> {
    let seed_base = train_seed?;
    if cfg.dropout == 0.0 {
        return None;
    }
    let mut rng = seed::rng(seed::derive(seed_base, tag));
    let keep = 1.0 - cfg.dropout;
    Some(Array3::from_shape_simple_fn(shape, || {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    }))
}

fn apply_drop(x: Array3<f64>, mask: &Option<Array3<f64>>) -> Array3<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

/// Full forward pass keeping every intermediate needed for backprop.
pub(crate) fn forward_full(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    globals: &Array2<f64>,
    train_seed: Option<u64>,
) -> Result<ForwardCache> {
    let b = batch.len();
    let t = cfg.token_count();
    let d = cfg.d;
    let dk = cfg.d_k();
    if globals.dim() != (cfg.n_g, d) {
        return Err(Error::DimensionMismatch(format!(
            "global nodes {:?}, expected ({}, {d})",
            globals.dim(),
            cfg.n_g
        )));
    }
    if params.w_in.dim() != (cfg.in_dim(), d) || params.w_cls.dim() != (d, cfg.num_classes) {
        return Err(Error::DimensionMismatch(
            "parameter shapes do not match config".into(),
        ));
    }
    if batch.is_empty() {
        return Err(Error::invalid("batch", "no center nodes"));
    }

    // raw tokens → d-space; global nodes are injected directly in d-space
    let projected = flat(&batch.tokens).dot(&params.w_in) + &params.b_in;
    let projected = unflat(projected, b, 1 + cfg.n_s);
    let mut h = Array3::zeros((b, t, d));
    h.slice_mut(s![.., ..1 + cfg.n_s, ..]).assign(&projected);
    for j in 0..cfg.n_g {
        for i in 0..b {
            h.slice_mut(s![i, 1 + cfg.n_s + j, ..]).assign(&globals.row(j));
        }
    }

    let scale = 1.0 / (dk as f64).sqrt();
    let mut layers = Vec::with_capacity(cfg.layers);
    let mut score_evals = 0u64;
    for (li, lp) in params.layers.iter().enumerate() {
        let x_in = h;
        let (xhat1, rstd1, y1) = layer_norm(&x_in, &lp.ln1_g, &lp.ln1_b);

        let q = unflat(flat(&y1).dot(&lp.w_q), b, t);
        let k = unflat(flat(&y1).dot(&lp.w_k), b, t);
        let v = unflat(flat(&y1).dot(&lp.w_v), b, t);

        let mut probs = Array4::zeros((b, cfg.heads, t, t));
        let mut concat = Array3::zeros((b, t, d));
        for i in 0..b {
            for head in 0..cfg.heads {
                let hs = head * dk;
                let qh = q.slice(s![i, .., hs..hs + dk]);
                let kh = k.slice(s![i, .., hs..hs + dk]);
                let vh = v.slice(s![i, .., hs..hs + dk]);
                let mut scores = qh.dot(&kh.t()) * scale;
                score_evals += (t * t) as u64;
                for key in 0..t {
                    if !batch.mask[(i, key)] {
                        scores.column_mut(key).fill(f64::NEG_INFINITY);
                    }
                }
                for mut row in scores.rows_mut() {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|x| (x - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|x| x / sum);
                }
                concat
                    .slice_mut(s![i, .., hs..hs + dk])
                    .assign(&scores.dot(&vh));
                probs.slice_mut(s![i, head, .., ..]).assign(&scores);
            }
        }

        let att_out = unflat(flat(&concat).dot(&lp.w_o), b, t);
        let drop1 = dropout_mask(cfg, (b, t, d), train_seed, &[0x50, li as u64, 0]);
        let x_mid = &x_in + &apply_drop(att_out, &drop1);

        let (xhat2, rstd2, z2) = layer_norm(&x_mid, &lp.ln2_g, &lp.ln2_b);
        let ff_pre = unflat(flat(&z2).dot(&lp.w_ff1) + &lp.b_ff1, b, t);
        let ff_act = ff_pre.mapv(gelu);
        let ff_out = unflat(flat(&ff_act).dot(&lp.w_ff2) + &lp.b_ff2, b, t);
        let drop2 = dropout_mask(cfg, (b, t, d), train_seed, &[0x50, li as u64, 1]);
        h = &x_mid + &apply_drop(ff_out, &drop2);

        layers.push(LayerCache {
            xhat1,
            rstd1,
            y1,
            q,
            k,
            v,
            probs,
            concat,
            drop1,
            xhat2,
            rstd2,
            z2,
            ff_pre,
            ff_act,
            drop2,
        });
    }

    let center: Array2<f64> = h.slice(s![.., 0, ..]).to_owned();
    let logits = center.dot(&params.w_cls) + &params.b_cls;
    Ok(ForwardCache {
        layers,
        center,
        logits,
        score_evals,
    })
}

/// Forward pass: logits and final center-token representations.
pub fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    globals: &Array2<f64>,
    train_seed: Option<u64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let cache = forward_full(params, cfg, batch, globals, train_seed)?;
    Ok((cache.logits, cache.center))
}

/// Forward pass that also reports how many attention scores were evaluated.
pub fn forward_instrumented(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    globals: &Array2<f64>,
    train_seed: Option<u64>,
) -> Result<(Array2<f64>, Array2<f64>, u64)> {
    let cache = forward_full(params, cfg, batch, globals, train_seed)?;
    Ok((cache.logits, cache.center, cache.score_evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{random_batch, toy_config};
    use crate::model::init_params;

    #[test]
    fn masked_token_content_cannot_reach_logits() {
        let cfg = toy_config();
        let params = init_params(&cfg, 1).unwrap();
        let (mut batch, globals) = random_batch(&cfg, 4, 2);
        let (logits_a, _) = forward(&params, &cfg, &batch, &globals, None).unwrap();

        // center 1 has its last neighbor slot masked; poison that token
        assert!(!batch.mask[(1, cfg.n_s)]);
        for x in batch
            .tokens
            .index_axis_mut(Axis(0), 1)
            .row_mut(cfg.n_s)
            .iter_mut()
        {
            *x = 1e6;
        }
        let (logits_b, _) = forward(&params, &cfg, &batch, &globals, None).unwrap();
        assert_eq!(logits_a, logits_b);
    }

    #[test]
    fn local_token_order_does_not_matter() {
        let cfg = toy_config();
        let params = init_params(&cfg, 3).unwrap();
        let (batch, globals) = random_batch(&cfg, 3, 4);
        let (logits_a, _) = forward(&params, &cfg, &batch, &globals, None).unwrap();

        // rotate the neighbor tokens (and their mask bits) of every center
        let mut tokens = batch.tokens.clone();
        let mut mask = batch.mask.clone();
        for i in 0..batch.len() {
            for t in 0..cfg.n_s {
                let src = 1 + (t + 1) % cfg.n_s;
                let dst = 1 + t;
                let row = batch.tokens.slice(s![i, src, ..]).to_owned();
                tokens.slice_mut(s![i, dst, ..]).assign(&row);
                mask[(i, dst)] = batch.mask[(i, src)];
            }
        }
        let permuted = Batch::new(&cfg, tokens, mask, batch.labels.clone()).unwrap();
        let (logits_b, _) = forward(&params, &cfg, &permuted, &globals, None).unwrap();
        let max_diff = (&logits_a - &logits_b)
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(max_diff < 1e-10, "permutation moved logits by {max_diff}");
    }

    #[test]
    fn no_context_means_centers_are_independent() {
        let mut cfg = toy_config();
        cfg.n_s = 0;
        cfg.n_g = 0;
        let params = init_params(&cfg, 5).unwrap();
        let globals = Array2::zeros((0, cfg.d));
        let (batch_a, _) = random_batch(&cfg, 2, 6);
        let mut batch_b = batch_a.clone();
        for x in batch_b.tokens.index_axis_mut(Axis(0), 1).iter_mut() {
            *x += 3.5;
        }
        let (la, _) = forward(&params, &cfg, &batch_a, &globals, None).unwrap();
        let (lb, _) = forward(&params, &cfg, &batch_b, &globals, None).unwrap();
        assert_eq!(la.row(0), lb.row(0));
        assert_ne!(la.row(1), lb.row(1));
    }

    #[test]
    fn attention_rows_are_stochastic_and_ignore_padding() {
        let cfg = toy_config();
        let params = init_params(&cfg, 7).unwrap();
        let (batch, globals) = random_batch(&cfg, 4, 8);
        let cache = forward_full(&params, &cfg, &batch, &globals, None).unwrap();
        for (li, layer) in cache.layers.iter().enumerate() {
            for i in 0..batch.len() {
                for h in 0..cfg.heads {
                    for q in 0..cfg.token_count() {
                        let row = layer.probs.slice(s![i, h, q, ..]);
                        let sum: f64 = row.sum();
                        assert!(
                            (sum - 1.0).abs() < 1e-8,
                            "layer {li} center {i} head {h} row {q} sums to {sum}"
                        );
                        for key in 0..cfg.token_count() {
                            if !batch.mask[(i, key)] {
                                assert_eq!(row[key], 0.0);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn score_evaluations_match_token_budget() {
        let cfg = toy_config();
        let params = init_params(&cfg, 9).unwrap();
        let (batch, globals) = random_batch(&cfg, 5, 10);
        let (_, _, evals) = forward_instrumented(&params, &cfg, &batch, &globals, None).unwrap();
        let t = cfg.token_count() as u64;
        assert_eq!(evals, 5 * cfg.heads as u64 * cfg.layers as u64 * t * t);
    }

    #[test]
    fn dropout_is_seeded_and_off_at_eval() {
        let mut cfg = toy_config();
        cfg.dropout = 0.5;
        let params = init_params(&cfg, 11).unwrap();
        let (batch, globals) = random_batch(&cfg, 4, 12);
        let (train_a, _) = forward(&params, &cfg, &batch, &globals, Some(1)).unwrap();
        let (train_b, _) = forward(&params, &cfg, &batch, &globals, Some(1)).unwrap();
        let (train_c, _) = forward(&params, &cfg, &batch, &globals, Some(2)).unwrap();
        let (eval_a, _) = forward(&params, &cfg, &batch, &globals, None).unwrap();
        let (eval_b, _) = forward(&params, &cfg, &batch, &globals, None).unwrap();
        assert_eq!(train_a, train_b);
        assert_ne!(train_a, train_c);
        assert_eq!(eval_a, eval_b);
        assert_ne!(train_a, eval_a);
    }

    #[test]
    fn global_shape_mismatch_is_an_error() {
        let cfg = toy_config();
        let params = init_params(&cfg, 13).unwrap();
        let (batch, _) = random_batch(&cfg, 2, 14);
        let bad = Array2::zeros((cfg.n_g + 1, cfg.d));
        assert!(forward(&params, &cfg, &batch, &bad, None).is_err());
    }
}
