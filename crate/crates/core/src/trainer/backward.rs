//! Reverse-mode gradients of the composite objective.
//!
//! The chain runs classifier -> hop mixing softmax -> layer norm ->
//! attention softmax / LeakyReLU -> hop projections -> `W_k`. Only labeled
//! training nodes seed the pass, so unlabeled nodes are touched solely as
//! neighbors. Shell membership and candidate probabilities are constants.

use ndarray::Array2;

use crate::diffusion::{temperature, ForwardPass};
use crate::error::{DrtrError, Result};
use crate::params::ModelParams;
use crate::topology::tr_loss_omega_gradient;

use super::loss::{classification_grad, ObjectiveContext};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of [`ObjectiveContext::evaluate`] at `params`, given its forward pass.
pub fn backward(ctx: &ObjectiveContext<'_>, params: &ModelParams, fwd: &ForwardPass) -> Result<ModelParams> {
    let cfg = ctx.cfg;
    let d = &params.diffusion;
    let g = ctx.graph;
    let hops = d.hops();
    let hidden = d.hidden_dim();
    let classes = d.class_count();
    let n = g.node_count();

    let mut grads = params.zeros_like();
    let logit_grads = classification_grad(&fwd.logits, g.labels(), ctx.train_nodes)?;

    let classifier = d.classifier.as_slice().expect("standard layout");
    let attention = d.attention.as_slice().expect("contiguous");
    let (a_self, a_nbr) = attention.split_at(hidden);
    let gamma = &fwd.hop_weights;
    let taus: Vec<f64> = (1..=hops).map(|k| temperature(k, cfg)).collect();

    let mut grad_proj: Vec<Array2<f64>> = (0..hops).map(|_| Array2::zeros((n, hidden))).collect();
    let mut grad_gamma = vec![0.0; hops];
    let mut grad_attention = vec![0.0; 2 * hidden];

    {
        let gc = grads.diffusion.classifier.as_slice_mut().expect("standard layout");
        let gb = grads.diffusion.bias.as_slice_mut().expect("contiguous");
        for (&v, gl) in ctx.train_nodes.iter().zip(&logit_grads) {
            let z = fwd.embeddings.row(v);
            for i in 0..hidden {
                for c in 0..classes {
                    gc[i * classes + c] += z[i] * gl[c];
                }
            }
            for c in 0..classes {
                gb[c] += gl[c];
            }
        }
    }

    let mut g_h = vec![0.0; hidden];
    let mut g_c = vec![0.0; hidden];
    for (&v, gl) in ctx.train_nodes.iter().zip(&logit_grads) {
        let g_z: Vec<f64> = (0..hidden)
            .map(|i| dot(&classifier[i * classes..(i + 1) * classes], gl))
            .collect();
        for k in 1..=hops {
            let cache = &fwd.hops[v * hops + (k - 1)];
            grad_gamma[k - 1] += dot(&g_z, &cache.normalized);
            if cache.neighbors.is_empty() {
                continue;
            }
            // layer norm
            let denom = cache.std + cfg.layer_norm_eps;
            let g_n: Vec<f64> = g_z.iter().map(|x| gamma[k - 1] * x).collect();
            let proj_dot = dot(&g_n, &cache.centered);
            for i in 0..hidden {
                let spread = if cache.std > 0.0 {
                    proj_dot / (denom * denom) * cache.centered[i] / (hidden as f64 * cache.std)
                } else {
                    0.0
                };
                g_c[i] = g_n[i] / denom - spread;
            }
            let mean_gc = g_c.iter().sum::<f64>() / hidden as f64;
            for i in 0..hidden {
                g_h[i] = g_c[i] - mean_gc;
            }

            let proj = &fwd.projections[k - 1];
            let gp = &mut grad_proj[k - 1];
            if fwd.uniform {
                for (&u, &a) in cache.neighbors.iter().zip(&cache.alpha) {
                    for (dst, x) in gp.row_mut(u).iter_mut().zip(&g_h) {
                        *dst += a * x;
                    }
                }
                continue;
            }
            // attention softmax over the shell
            let g_alpha: Vec<f64> = cache
                .neighbors
                .iter()
                .map(|&u| dot(&g_h, proj.row(u).as_slice().expect("standard layout")))
                .collect();
            let mean_ga = dot(&cache.alpha, &g_alpha);
            let pv = proj.row(v).to_owned();
            let mut g_pv = vec![0.0; hidden];
            for (idx, &u) in cache.neighbors.iter().enumerate() {
                let a = cache.alpha[idx];
                let g_e = a * (g_alpha[idx] - mean_ga);
                let slope = if cache.scores[idx] > 0.0 { 1.0 } else { cfg.leaky_slope };
                let g_s = g_e / taus[k - 1] * slope;
                let pu = proj.row(u);
                for i in 0..hidden {
                    grad_attention[i] += g_s * pv[i];
                    grad_attention[hidden + i] += g_s * pu[i];
                    g_pv[i] += g_s * a_self[i];
                }
                let mut row = gp.row_mut(u);
                for i in 0..hidden {
                    row[i] += g_s * a_nbr[i] + a * g_h[i];
                }
            }
            let mut row = gp.row_mut(v);
            for i in 0..hidden {
                row[i] += g_pv[i];
            }
        }
    }

    // Shell distances depend on raw features only, so the DR hinge has no
    // parameter gradient; its weight is skipped here.
    let [_, l2, l3] = cfg.loss_weights;
    for k in 0..hops {
        let gw = g.features().t().dot(&grad_proj[k]);
        grads.diffusion.hop_transforms[k] = gw + &(&d.hop_transforms[k] * (2.0 * l3));
    }
    grads.diffusion.attention = ndarray::Array1::from(grad_attention);
    let mixed = dot(gamma, &grad_gamma);
    for k in 0..hops {
        grads.diffusion.hop_logits[k] = gamma[k] * (grad_gamma[k] - mixed) + 2.0 * l3 * d.hop_logits[k];
    }
    let cands = ctx.candidates_at(params);
    let g_omega = tr_loss_omega_gradient(&cands, cfg);
    grads.similarity.omega = g_omega.map(|x| l2 * x);

    for (name, values) in grads.tensors() {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(DrtrError::Numeric(format!("gradient of {name}[{i}] is not finite")));
        }
    }
    Ok(grads)
}
