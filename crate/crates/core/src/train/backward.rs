//! Reverse-mode gradients of the all-positions next-token loss.
//!
//! Every forward product `C = A·B` is differentiated with two products,
//! `dA = dC·Bᵀ` and `dB = Aᵀ·dC`, each charged to the same category in the
//! backward direction. All operands in this model carry gradients, so the
//! backward matmul ledger is exactly twice the forward one.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::ledger::{Category, Direction, FlopLedger};
use crate::model::{activate_grad, forward_traced, ForwardTrace, ParameterSet};
use crate::tensor::{layer_norm_rows_backward, matmul, Matrix};

const BWD: Direction = Direction::Backward;

/// Mean cross-entropy over positions `0..m-1`, position `k` predicting
/// token `k + 1`. The last row has no target and contributes nothing.
pub fn loss_all_positions(logits: &Matrix, tokens: &[usize]) -> Result<f64> {
    Ok(loss_and_logit_grad(logits, tokens)?.0)
}

/// Loss together with `∂loss/∂logits`.
pub fn loss_and_logit_grad(logits: &Matrix, tokens: &[usize]) -> Result<(f64, Matrix)> {
    let m = tokens.len();
    if m < 2 {
        return Err(Error::InsufficientSequence { len: m });
    }
    if logits.rows() != m {
        return Err(Error::Sequence {
            len: logits.rows(),
            reason: "logit rows do not match token count",
        });
    }
    let v = logits.cols();
    let positions = (m - 1) as f64;
    let mut grad = Matrix::zeros(m, v);
    let mut total = 0.0;
    for k in 0..m - 1 {
        let target = tokens[k + 1];
        if target >= v {
            return Err(Error::Vocabulary {
                id: target,
                vocab: v,
            });
        }
        let row = logits.row(k);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[target];
        let g = grad.row_mut(k);
        for (j, x) in row.iter().enumerate() {
            g[j] = (x - lse).exp() / positions;
        }
        g[target] -= 1.0 / positions;
    }
    let loss = total / positions;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok((loss, grad))
}

/// One gradient tensor per parameter tensor, same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(ParameterSet);

impl GradientSet {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self(params.zeros_like())
    }

    pub fn as_params(&self) -> &ParameterSet {
        &self.0
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, m) in self.0.tensors_mut() {
            m.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.tensors().iter().all(|(_, m)| m.is_finite())
    }
}

impl Deref for GradientSet {
    type Target = ParameterSet;
    fn deref(&self) -> &ParameterSet {
        &self.0
    }
}

impl DerefMut for GradientSet {
    fn deref_mut(&mut self) -> &mut ParameterSet {
        &mut self.0
    }
}

fn accumulate(dst: &mut Matrix, src: &Matrix) {
    dst.add_assign(src)
        .expect("gradient shapes are congruent by construction");
}

/// Backpropagates `dlogits` through a recorded forward pass, adding into
/// `grads`.
pub fn backward_into(
    trace: &ForwardTrace,
    dlogits: &Matrix,
    params: &ParameterSet,
    grads: &mut GradientSet,
    ledger: &mut FlopLedger,
) -> Result<()> {
    if !dlogits.is_finite() {
        return Err(Error::NonFinite("logit gradient"));
    }
    let cfg = &params.cfg;
    let d_head = cfg.d_head();
    let scale = 1.0 / (d_head as f64).sqrt();

    accumulate(
        &mut grads.unembedding,
        &matmul(
            &trace.hidden.transpose(),
            dlogits,
            ledger,
            Category::LogitProjection,
            BWD,
        )?,
    );
    let mut dx = matmul(
        dlogits,
        &params.unembedding.transpose(),
        ledger,
        Category::LogitProjection,
        BWD,
    )?;

    for (l, (layer, t)) in params.layers.iter().zip(&trace.layers).enumerate().rev() {
        let g = &mut grads.0.layers[l];

        // feed-forward branch
        accumulate(
            &mut g.w2,
            &matmul(
                &t.ffn_act.transpose(),
                &dx,
                ledger,
                Category::FfnContract,
                BWD,
            )?,
        );
        let dact = matmul(
            &dx,
            &layer.w2.transpose(),
            ledger,
            Category::FfnContract,
            BWD,
        )?;
        let mut dpre = dact;
        for (dp, &pre) in dpre.data_mut().iter_mut().zip(t.ffn_pre.data()) {
            *dp *= activate_grad(cfg.activation, pre);
        }
        accumulate(
            &mut g.w1,
            &matmul(
                &t.norm2.out.transpose(),
                &dpre,
                ledger,
                Category::FfnExpand,
                BWD,
            )?,
        );
        let dnorm2 = matmul(
            &dpre,
            &layer.w1.transpose(),
            ledger,
            Category::FfnExpand,
            BWD,
        )?;
        let mut dmid = dx;
        dmid.add_assign(&layer_norm_rows_backward(
            &dnorm2,
            &t.norm2,
            &layer.norm2_gain,
            &mut g.norm2_gain,
            &mut g.norm2_bias,
            ledger,
        ))?;

        // attention branch
        let att = &t.attention;
        accumulate(
            &mut g.w_o,
            &matmul(
                &att.concat.transpose(),
                &dmid,
                ledger,
                Category::OutputProjection,
                BWD,
            )?,
        );
        let dconcat = matmul(
            &dmid,
            &layer.w_o.transpose(),
            ledger,
            Category::OutputProjection,
            BWD,
        )?;
        let a1 = &t.norm1.out;
        let a1_t = a1.transpose();
        let mut dnorm1 = Matrix::zeros(a1.rows(), a1.cols());
        for h in 0..cfg.heads {
            let dhead = dconcat.columns(h * d_head, d_head);
            let probs = &att.probs[h];
            let dprobs = matmul(
                &dhead,
                &att.v[h].transpose(),
                ledger,
                Category::AttentionValues,
                BWD,
            )?;
            let dv = matmul(
                &probs.transpose(),
                &dhead,
                ledger,
                Category::AttentionValues,
                BWD,
            )?;

            let mut dscores = Matrix::zeros(probs.rows(), probs.cols());
            for i in 0..probs.rows() {
                let p = probs.row(i);
                let dp = dprobs.row(i);
                let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
                for (j, out) in dscores.row_mut(i).iter_mut().enumerate() {
                    *out = p[j] * (dp[j] - dot) * scale;
                }
            }
            let dq = matmul(&dscores, &att.k[h], ledger, Category::AttentionScores, BWD)?;
            let dk = matmul(
                &dscores.transpose(),
                &att.q[h],
                ledger,
                Category::AttentionScores,
                BWD,
            )?;

            for (dproj, w, gw) in [
                (&dq, &layer.w_q[h], &mut g.w_q[h]),
                (&dk, &layer.w_k[h], &mut g.w_k[h]),
                (&dv, &layer.w_v[h], &mut g.w_v[h]),
            ] {
                accumulate(
                    gw,
                    &matmul(&a1_t, dproj, ledger, Category::QkvProjection, BWD)?,
                );
                accumulate(
                    &mut dnorm1,
                    &matmul(dproj, &w.transpose(), ledger, Category::QkvProjection, BWD)?,
                );
            }
        }
        let mut dinput = dmid;
        dinput.add_assign(&layer_norm_rows_backward(
            &dnorm1,
            &t.norm1,
            &layer.norm1_gain,
            &mut g.norm1_gain,
            &mut g.norm1_bias,
            ledger,
        ))?;
        dx = dinput;
    }

    for (k, &tok) in trace.tokens.iter().enumerate() {
        for (e, d) in grads.0.embedding.row_mut(tok).iter_mut().zip(dx.row(k)) {
            *e += d;
        }
    }
    Ok(())
}

/// Fresh gradients for one recorded forward pass.
pub fn backward(
    trace: &ForwardTrace,
    dlogits: &Matrix,
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    backward_into(trace, dlogits, params, &mut grads, ledger)?;
    Ok(grads)
}

/// Forward, loss and backward for one sequence.
pub fn loss_and_gradients(
    tokens: &[usize],
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<(f64, GradientSet)> {
    let trace = forward_traced(tokens, params, ledger)?;
    let (loss, dlogits) = loss_and_logit_grad(&trace.logits, tokens)?;
    let grads = backward(&trace, &dlogits, params, ledger)?;
    Ok((loss, grads))
}

/// `p ← p − lr·g` for every parameter.
pub fn sgd_step(params: &mut ParameterSet, grads: &GradientSet, learning_rate: f64) -> Result<()> {
    if !params.congruent(grads.as_params()) {
        return Err(Error::Training(
            "gradient shapes do not match parameters".into(),
        ));
    }
    for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= learning_rate * gv;
        }
    }
    Ok(())
}
