//! Encoder/decoder network plans, forward passes with activation caches,
//! and hand-derived backward passes.

use num_complex::Complex64;

use super::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, relu, relu_backward, softplus,
    tconv1d_backward, tconv1d_forward,
};
use super::{CondGaussianParams, LatentStats, ModelConfig, ParamLayout, SPECTRUM_FLOOR};
use crate::error::Result;
use crate::linalg::{CirculantSpectrum, UnitaryDft};

/// Latent log-variances are clamped to this band to keep `exp` finite under
/// runaway optimization; the band is far outside normal operation.
const LOGVAR_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvStage {
    pub in_ch: usize,
    pub in_len: usize,
    pub out_ch: usize,
    pub out_len: usize,
    pub w_off: usize,
    pub b_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseStage {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w_off: usize,
    pub b_off: usize,
}

/// Geometry and parameter offsets of the full network.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NetPlan {
    pub layout: ParamLayout,
    pub antennas: usize,
    pub latent: usize,
    pub kernel: usize,
    pub pad: usize,
    pub num_blocks: usize,
    pub enc_convs: Vec<ConvStage>,
    pub enc_mu: DenseStage,
    pub enc_lv: DenseStage,
    pub dec_fc: DenseStage,
    pub dec_tconvs: Vec<ConvStage>,
}

impl NetPlan {
    pub fn build(cfg: &ModelConfig) -> Self {
        let m = cfg.antennas;
        let n = cfg.stages();
        let k = cfg.kernel;
        let pad = (k - 1) / 2;
        let mut layout = ParamLayout {
            tensors: Vec::new(),
            total: 0,
        };

        let mut enc_convs = Vec::with_capacity(n);
        let mut in_ch = 2usize;
        let mut in_len = m;
        for (i, &out_ch) in cfg.enc_channels.iter().enumerate() {
            let w_off = layout.push(&format!("enc.conv{i}.w"), out_ch * in_ch * k, in_ch * k);
            let b_off = layout.push(&format!("enc.conv{i}.b"), out_ch, in_ch * k);
            enc_convs.push(ConvStage {
                in_ch,
                in_len,
                out_ch,
                out_len: in_len / 2,
                w_off,
                b_off,
            });
            in_ch = out_ch;
            in_len /= 2;
        }
        let feat = in_ch * in_len;
        let enc_mu = DenseStage {
            in_dim: feat,
            out_dim: cfg.latent_dim,
            w_off: layout.push("enc.mu.w", cfg.latent_dim * feat, feat),
            b_off: layout.push("enc.mu.b", cfg.latent_dim, feat),
        };
        let enc_lv = DenseStage {
            in_dim: feat,
            out_dim: cfg.latent_dim,
            w_off: layout.push("enc.logvar.w", cfg.latent_dim * feat, feat),
            b_off: layout.push("enc.logvar.b", cfg.latent_dim, feat),
        };

        let bottleneck = m >> n;
        let fc_out = cfg.dec_channels[0] * bottleneck;
        let dec_fc = DenseStage {
            in_dim: cfg.latent_dim,
            out_dim: fc_out,
            w_off: layout.push("dec.fc.w", fc_out * cfg.latent_dim, cfg.latent_dim),
            b_off: layout.push("dec.fc.b", fc_out, cfg.latent_dim),
        };
        let mut dec_tconvs = Vec::with_capacity(n);
        let mut chans: Vec<usize> = cfg.dec_channels.clone();
        chans.push(3 * cfg.num_blocks);
        let mut len = bottleneck;
        for i in 0..n {
            let (ic, oc) = (chans[i], chans[i + 1]);
            // transposed conv weight layout is [in_ch, out_ch, k]
            let w_off = layout.push(&format!("dec.tconv{i}.w"), ic * oc * k, oc * k);
            let b_off = layout.push(&format!("dec.tconv{i}.b"), oc, oc * k);
            dec_tconvs.push(ConvStage {
                in_ch: ic,
                in_len: len,
                out_ch: oc,
                out_len: len * 2,
                w_off,
                b_off,
            });
            len *= 2;
        }

        NetPlan {
            layout,
            antennas: m,
            latent: cfg.latent_dim,
            kernel: k,
            pad,
            num_blocks: cfg.num_blocks,
            enc_convs,
            enc_mu,
            enc_lv,
            dec_fc,
            dec_tconvs,
        }
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

pub(crate) struct EncCache {
    /// Stacked real/imag input `[2, M]`.
    pub x0: Vec<f64>,
    /// Per-stage pre-activations.
    pub pre: Vec<Vec<f64>>,
    /// Per-stage post-ReLU activations.
    pub post: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub lv_saturated: bool,
}

impl EncCache {
    pub fn latent_stats(&self) -> LatentStats {
        LatentStats {
            mu_phi: self.mu.clone(),
            sigma_phi: self.logvar.iter().map(|lv| (0.5 * lv).exp()).collect(),
        }
    }
}

/// Forward pass from the Fourier-domain observation.
pub(crate) fn encoder_forward(
    plan: &NetPlan,
    params: &[f64],
    y_spectrum: &[Complex64],
) -> EncCache {
    let m = plan.antennas;
    let mut x0 = vec![0.0; 2 * m];
    for (i, z) in y_spectrum.iter().enumerate() {
        x0[i] = z.re;
        x0[m + i] = z.im;
    }
    let mut pre = Vec::with_capacity(plan.enc_convs.len());
    let mut post = Vec::with_capacity(plan.enc_convs.len());
    {
        let mut input: &[f64] = &x0;
        for st in &plan.enc_convs {
            let mut y = vec![0.0; st.out_ch * st.out_len];
            conv1d_forward(
                input,
                &params[st.w_off..st.w_off + st.out_ch * st.in_ch * plan.kernel],
                &params[st.b_off..st.b_off + st.out_ch],
                st.in_ch,
                st.in_len,
                st.out_ch,
                plan.kernel,
                2,
                plan.pad,
                &mut y,
            );
            let mut act = vec![0.0; y.len()];
            relu(&y, &mut act);
            pre.push(y);
            post.push(act);
            input = post.last().unwrap();
        }
    }
    let feat = post.last().map(|v| v.as_slice()).unwrap_or(&x0);
    let mut mu = vec![0.0; plan.latent];
    dense_forward(
        feat,
        &params[plan.enc_mu.w_off..plan.enc_mu.w_off + plan.enc_mu.out_dim * plan.enc_mu.in_dim],
        &params[plan.enc_mu.b_off..plan.enc_mu.b_off + plan.enc_mu.out_dim],
        plan.latent,
        &mut mu,
    );
    let mut logvar = vec![0.0; plan.latent];
    dense_forward(
        feat,
        &params[plan.enc_lv.w_off..plan.enc_lv.w_off + plan.enc_lv.out_dim * plan.enc_lv.in_dim],
        &params[plan.enc_lv.b_off..plan.enc_lv.b_off + plan.enc_lv.out_dim],
        plan.latent,
        &mut logvar,
    );
    let mut lv_saturated = false;
    for lv in logvar.iter_mut() {
        if lv.abs() > LOGVAR_CLAMP {
            *lv = lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
            lv_saturated = true;
        }
    }
    EncCache {
        x0,
        pre,
        post,
        mu,
        logvar,
        lv_saturated,
    }
}

/// Accumulates encoder parameter gradients given head gradients.
pub(crate) fn encoder_backward(
    plan: &NetPlan,
    params: &[f64],
    cache: &EncCache,
    g_mu: &[f64],
    g_logvar: &[f64],
    grad: &mut [f64],
) {
    let feat = cache.post.last().map(|v| v.as_slice()).unwrap_or(&cache.x0);
    let mut g_feat = vec![0.0; feat.len()];
    {
        let (gw, gb) = split_dense_grad(grad, &plan.enc_mu);
        dense_backward(
            feat,
            &params
                [plan.enc_mu.w_off..plan.enc_mu.w_off + plan.enc_mu.out_dim * plan.enc_mu.in_dim],
            g_mu,
            gw,
            gb,
            Some(&mut g_feat),
        );
    }
    {
        let (gw, gb) = split_dense_grad(grad, &plan.enc_lv);
        dense_backward(
            feat,
            &params
                [plan.enc_lv.w_off..plan.enc_lv.w_off + plan.enc_lv.out_dim * plan.enc_lv.in_dim],
            g_logvar,
            gw,
            gb,
            Some(&mut g_feat),
        );
    }
    // walk the conv stack backwards
    let mut g_out = g_feat;
    for (i, st) in plan.enc_convs.iter().enumerate().rev() {
        let mut g_pre = vec![0.0; cache.pre[i].len()];
        relu_backward(&cache.pre[i], &g_out, &mut g_pre);
        let input: &[f64] = if i == 0 {
            &cache.x0
        } else {
            &cache.post[i - 1]
        };
        let mut g_in = if i == 0 {
            None
        } else {
            Some(vec![0.0; input.len()])
        };
        let (gw, gb) = split_grad(grad, st, plan.kernel);
        conv1d_backward(
            input,
            &params[st.w_off..st.w_off + st.out_ch * st.in_ch * plan.kernel],
            &g_pre,
            st.in_ch,
            st.in_len,
            st.out_ch,
            plan.kernel,
            2,
            plan.pad,
            gw,
            gb,
            g_in.as_deref_mut(),
        );
        if let Some(g_in) = g_in {
            g_out = g_in;
        }
    }
}

/// Two disjoint mutable slices (weights, biases) of the flat gradient.
fn split_grad<'a>(
    grad: &'a mut [f64],
    st: &ConvStage,
    kernel: usize,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(st.w_off + st.out_ch * st.in_ch * kernel <= st.b_off);
    let (head, tail) = grad.split_at_mut(st.b_off);
    (
        &mut head[st.w_off..st.w_off + weight_len(st, kernel)],
        &mut tail[..st.out_ch],
    )
}

fn split_dense_grad<'a>(grad: &'a mut [f64], st: &DenseStage) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(st.w_off + st.out_dim * st.in_dim <= st.b_off);
    let (head, tail) = grad.split_at_mut(st.b_off);
    (
        &mut head[st.w_off..st.w_off + st.out_dim * st.in_dim],
        &mut tail[..st.out_dim],
    )
}

fn weight_len(st: &ConvStage, kernel: usize) -> usize {
    st.out_ch * st.in_ch * kernel
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

pub(crate) struct DecCache {
    pub z: Vec<f64>,
    pub fc_pre: Vec<f64>,
    pub fc_post: Vec<f64>,
    /// Raw outputs of each transposed convolution.
    pub t_pre: Vec<Vec<f64>>,
    /// Post-ReLU activations (all but the final stage).
    pub t_post: Vec<Vec<f64>>,
}

impl DecCache {
    /// Final `[3 num_blocks, M]` head output.
    pub fn output(&self) -> &[f64] {
        self.t_pre.last().unwrap()
    }
}

pub(crate) fn decoder_forward(plan: &NetPlan, params: &[f64], z: &[f64]) -> DecCache {
    let mut fc_pre = vec![0.0; plan.dec_fc.out_dim];
    dense_forward(
        z,
        &params[plan.dec_fc.w_off..plan.dec_fc.w_off + plan.dec_fc.out_dim * plan.dec_fc.in_dim],
        &params[plan.dec_fc.b_off..plan.dec_fc.b_off + plan.dec_fc.out_dim],
        plan.dec_fc.out_dim,
        &mut fc_pre,
    );
    let mut fc_post = vec![0.0; fc_pre.len()];
    relu(&fc_pre, &mut fc_post);

    let n = plan.dec_tconvs.len();
    let mut t_pre = Vec::with_capacity(n);
    let mut t_post = Vec::with_capacity(n.saturating_sub(1));
    let mut input: &[f64] = &fc_post;
    for (i, st) in plan.dec_tconvs.iter().enumerate() {
        let mut y = vec![0.0; st.out_ch * st.out_len];
        tconv1d_forward(
            input,
            &params[st.w_off..st.w_off + weight_len(st, plan.kernel)],
            &params[st.b_off..st.b_off + st.out_ch],
            st.in_ch,
            st.in_len,
            st.out_ch,
            plan.kernel,
            2,
            plan.pad,
            st.out_len,
            &mut y,
        );
        if i + 1 < n {
            let mut act = vec![0.0; y.len()];
            relu(&y, &mut act);
            t_pre.push(y);
            t_post.push(act);
            input = t_post.last().unwrap();
        } else {
            t_pre.push(y);
        }
    }
    DecCache {
        z: z.to_vec(),
        fc_pre,
        fc_post,
        t_pre,
        t_post,
    }
}

/// Accumulates decoder parameter gradients; returns the gradient w.r.t. `z`.
pub(crate) fn decoder_backward(
    plan: &NetPlan,
    params: &[f64],
    cache: &DecCache,
    g_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let n = plan.dec_tconvs.len();
    let mut g = g_out.to_vec();
    for (i, st) in plan.dec_tconvs.iter().enumerate().rev() {
        // undo the ReLU that followed stage i (none after the last stage)
        if i + 1 < n {
            let mut masked = vec![0.0; g.len()];
            relu_backward(&cache.t_pre[i], &g, &mut masked);
            g = masked;
        }
        let input: &[f64] = if i == 0 {
            &cache.fc_post
        } else {
            &cache.t_post[i - 1]
        };
        let mut g_in = vec![0.0; input.len()];
        let (gw, gb) = split_grad(grad, st, plan.kernel);
        tconv1d_backward(
            input,
            &params[st.w_off..st.w_off + weight_len(st, plan.kernel)],
            &g,
            st.in_ch,
            st.in_len,
            st.out_ch,
            plan.kernel,
            2,
            plan.pad,
            st.out_len,
            gw,
            gb,
            &mut g_in,
        );
        g = g_in;
    }
    let mut g_fc_pre = vec![0.0; cache.fc_pre.len()];
    relu_backward(&cache.fc_pre, &g, &mut g_fc_pre);
    let mut g_z = vec![0.0; plan.latent];
    let (gw, gb) = split_dense_grad(grad, &plan.dec_fc);
    dense_backward(
        &cache.z,
        &params[plan.dec_fc.w_off..plan.dec_fc.w_off + plan.dec_fc.out_dim * plan.dec_fc.in_dim],
        &g_fc_pre,
        gw,
        gb,
        Some(&mut g_z),
    );
    g_z
}

/// Converts the raw decoder head output into conditionally Gaussian moments.
pub(crate) fn moments_from_decoder(plan: &NetPlan, cache: &DecCache) -> Result<CondGaussianParams> {
    let m = plan.antennas;
    let out = cache.output();
    let plan_dft = UnitaryDft::new(m);
    let block = |b: usize| -> (Vec<Complex64>, Vec<f64>) {
        let re = &out[(3 * b) * m..(3 * b + 1) * m];
        let im = &out[(3 * b + 1) * m..(3 * b + 2) * m];
        let s = &out[(3 * b + 2) * m..(3 * b + 3) * m];
        let mu_f: Vec<Complex64> = re
            .iter()
            .zip(im)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        let c: Vec<f64> = s.iter().map(|&v| softplus(v) + SPECTRUM_FLOOR).collect();
        (mu_f, c)
    };
    let (mu1_fourier, c1) = block(0);
    let mu1 = plan_dft.inverse(&mu1_fourier);
    let (mu_int, mu_int_fourier, c_int) = if plan.num_blocks == 2 {
        let (mu_f, c) = block(1);
        (
            Some(plan_dft.inverse(&mu_f)),
            Some(mu_f),
            Some(CirculantSpectrum::new(c)?),
        )
    } else {
        (None, None, None)
    };
    Ok(CondGaussianParams {
        mu1,
        mu_int,
        c1: CirculantSpectrum::new(c1)?,
        c_int,
        mu1_fourier,
        mu_int_fourier,
    })
}
