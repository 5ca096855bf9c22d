use ndarray::{s, Array1, Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::model::forward::{flat, forward_full, gelu_prime, unflat};
use crate::model::{Batch, ModelConfig, ModelParams};

/// Mean cross-entropy over labeled centers plus exact analytic gradients for
/// every parameter and the final center representations. Global-node tokens
/// are constants here; they receive no gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    globals: &Array2<f64>,
    train_seed: Option<u64>,
) -> Result<(f64, ModelParams, Array2<f64>)> {
    let labeled = batch.labels.iter().flatten().count();
    if labeled == 0 {
        return Err(Error::invalid("batch", "no labeled centers"));
    }
    let cache = forward_full(params, cfg, batch, globals, train_seed)?;
    let b = batch.len();
    let m = labeled as f64;

    let mut loss = 0.0;
    let mut dlogits = Array2::zeros((b, cfg.num_classes));
    for (i, label) in batch.labels.iter().enumerate() {
        let Some(y) = label else { continue };
        let row = cache.logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Array1<f64> = row.mapv(|x| (x - max).exp());
        let sum = exps.sum();
        loss += -(exps[*y] / sum).ln();
        let mut drow = dlogits.row_mut(i);
        drow.assign(&(&exps / (sum * m)));
        drow[*y] -= 1.0 / m;
    }
    loss /= m;

    let mut grads = ModelParams::zeros(cfg);
    grads.w_cls = cache.center.t().dot(&dlogits);
    grads.b_cls = dlogits.sum_axis(Axis(0));

    let t = cfg.token_count();
    let d = cfg.d;
    let dk = cfg.d_k();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut dh = Array3::zeros((b, t, d));
    dh.slice_mut(s![.., 0, ..])
        .assign(&dlogits.dot(&params.w_cls.t()));

    for (li, layer) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];

        // FFN block: x_out = x_mid + drop(FFN(LN2(x_mid)))
        let d_out = dh;
        let d_ff2 = match &layer.drop2 {
            Some(mask) => &d_out * mask,
            None => d_out.clone(),
        };
        lg.w_ff2 = flat(&layer.ff_act).t().dot(&flat(&d_ff2));
        lg.b_ff2 = flat(&d_ff2).sum_axis(Axis(0));
        let d_act = unflat(flat(&d_ff2).dot(&lp.w_ff2.t()), b, t);
        let d_pre = &d_act * &layer.ff_pre.mapv(gelu_prime);
        lg.w_ff1 = flat(&layer.z2).t().dot(&flat(&d_pre));
        lg.b_ff1 = flat(&d_pre).sum_axis(Axis(0));
        let d_z2 = unflat(flat(&d_pre).dot(&lp.w_ff1.t()), b, t);
        let (d_mid_ln, dg2, db2) = ln_backward(&d_z2, &layer.xhat2, &layer.rstd2, &lp.ln2_g);
        lg.ln2_g = dg2;
        lg.ln2_b = db2;
        let d_mid = &d_out + &d_mid_ln;

        // attention block: x_mid = x_in + drop(Concat·W_O), heads from LN1(x_in)
        let d_att_out = match &layer.drop1 {
            Some(mask) => &d_mid * mask,
            None => d_mid.clone(),
        };
        lg.w_o = flat(&layer.concat).t().dot(&flat(&d_att_out));
        let d_concat = unflat(flat(&d_att_out).dot(&lp.w_o.t()), b, t);

        let mut dq = Array3::zeros((b, t, d));
        let mut dkk = Array3::zeros((b, t, d));
        let mut dv = Array3::zeros((b, t, d));
        for i in 0..b {
            for head in 0..cfg.heads {
                let hs = head * dk;
                let probs = layer.probs.slice(s![i, head, .., ..]);
                let d_ctx = d_concat.slice(s![i, .., hs..hs + dk]);
                let vh = layer.v.slice(s![i, .., hs..hs + dk]);
                let qh = layer.q.slice(s![i, .., hs..hs + dk]);
                let kh = layer.k.slice(s![i, .., hs..hs + dk]);

                dv.slice_mut(s![i, .., hs..hs + dk])
                    .assign(&probs.t().dot(&d_ctx));
                let d_probs = d_ctx.dot(&vh.t());
                // softmax rows: dS = P ⊙ (dP − rowsum(dP ⊙ P))
                let inner = (&d_probs * &probs).sum_axis(Axis(1));
                let d_scores = (&d_probs - &inner.insert_axis(Axis(1))) * &probs;
                dq.slice_mut(s![i, .., hs..hs + dk])
                    .assign(&(d_scores.dot(&kh) * scale));
                dkk.slice_mut(s![i, .., hs..hs + dk])
                    .assign(&(d_scores.t().dot(&qh) * scale));
            }
        }
        lg.w_q = flat(&layer.y1).t().dot(&flat(&dq));
        lg.w_k = flat(&layer.y1).t().dot(&flat(&dkk));
        lg.w_v = flat(&layer.y1).t().dot(&flat(&dv));
        let d_y1 = unflat(
            flat(&dq).dot(&lp.w_q.t()) + flat(&dkk).dot(&lp.w_k.t()) + flat(&dv).dot(&lp.w_v.t()),
            b,
            t,
        );
        let (d_in_ln, dg1, db1) = ln_backward(&d_y1, &layer.xhat1, &layer.rstd1, &lp.ln1_g);
        lg.ln1_g = dg1;
        lg.ln1_b = db1;
        dh = &d_mid + &d_in_ln;
    }

    // input projection sees only the raw center∥neighbor tokens; gradient
    // flowing into global-node positions stops here
    let d_proj = dh.slice(s![.., ..1 + cfg.n_s, ..]).to_owned();
    grads.w_in = flat(&batch.tokens).t().dot(&flat(&d_proj));
    grads.b_in = flat(&d_proj).sum_axis(Axis(0));

    Ok((loss, grads, cache.center))
}

/// Backprop through y = γ·x̂ + β where x̂ = (x − mean)·rstd, per token row.
fn ln_backward(
    dy: &Array3<f64>,
    xhat: &Array3<f64>,
    rstd: &Array2<f64>,
    gain: &Array1<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let dg = (dy * xhat)
        .sum_axis(Axis(0))
        .sum_axis(Axis(0));
    let db = dy.sum_axis(Axis(0)).sum_axis(Axis(0));
    let dxhat = dy * gain;
    let m1 = dxhat.mean_axis(Axis(2)).expect("nonempty d");
    let m2 = (&dxhat * xhat).mean_axis(Axis(2)).expect("nonempty d");
    let dx = (&dxhat - &m1.insert_axis(Axis(2)) - xhat * &m2.insert_axis(Axis(2)))
        * &rstd.clone().insert_axis(Axis(2));
    (dx, dg, db)
}
