//! Analytic one-sample ELBO and its exact gradient.
//!
//! Per block `b` the target is the Fourier transform of a noisy (or
//! noiseless, in genie mode) block observation; the model covariance is
//! circulant with spectrum `c_b`, and the known block noise variance
//! `sigma_b^2` is added to the spectrum inside the likelihood, so the
//! decoder keeps parameterizing the clean channel distribution:
//!
//! `rec = sum_b sum_m [ -ln(pi (c + s)) - |t - mu|^2 / (c + s) ]`
//!
//! `KL = 1/2 sum_i (sigma_i^2 + mu_i^2 - 1 - ln sigma_i^2)`, `ELBO = rec - KL`.

use num_complex::Complex64;

use super::layers::sigmoid;
use super::net;
use super::VaeModel;
use crate::error::{Error, Result};
use crate::linalg::UnitaryDft;
use crate::scenario::DatasetRecord;

/// Training sample: encoder input plus per-block targets, all pre-transformed
/// to the Fourier domain once (they are fixed across epochs).
#[derive(Debug, Clone, PartialEq)]
pub struct ElboSample {
    /// Fourier-domain encoder input.
    pub encoder_spectrum: Vec<Complex64>,
    /// Per-block Fourier-domain targets.
    pub target_spectra: Vec<Vec<Complex64>>,
    /// Per-block noise variances (entries of the known noise covariance).
    pub noise_vars: Vec<f64>,
}

impl ElboSample {
    pub fn new(
        encoder_input: &[Complex64],
        targets: &[&[Complex64]],
        noise_vars: &[f64],
    ) -> Result<Self> {
        if encoder_input.is_empty() || targets.is_empty() || targets.len() != noise_vars.len() {
            return Err(Error::DimensionMismatch {
                expected: targets.len(),
                got: noise_vars.len(),
            });
        }
        let plan = UnitaryDft::new(encoder_input.len());
        Ok(Self {
            encoder_spectrum: plan.forward(encoder_input),
            target_spectra: targets.iter().map(|t| plan.forward(t)).collect(),
            noise_vars: noise_vars.to_vec(),
        })
    }

    /// Builds the training view of one record. Noisy mode: encoder sees the
    /// contaminated observation, targets are the noisy pair with their noise
    /// variances. Genie mode: encoder sees the noiseless sum, targets are
    /// the clean channels and the noise covariance is zero.
    pub fn from_record(rec: &DatasetRecord, genie: bool, num_blocks: usize) -> Result<Self> {
        let noise = rec.noise_cov();
        let (input, block1, block2, s1, s2): (
            Vec<Complex64>,
            &[Complex64],
            &[Complex64],
            f64,
            f64,
        ) = if genie {
            (rec.noiseless_observation(), &rec.h1, &rec.h_int, 0.0, 0.0)
        } else {
            (
                rec.y.clone(),
                &rec.y1,
                &rec.y2,
                noise.sigma1_sq,
                noise.sigma2_sq,
            )
        };
        match num_blocks {
            1 => Self::new(&input, &[block1], &[s1]),
            2 => Self::new(&input, &[block1, block2], &[s1, s2]),
            n => Err(Error::InvalidConfig(format!("unsupported block count {n}"))),
        }
    }

    pub fn antennas(&self) -> usize {
        self.encoder_spectrum.len()
    }
}

/// Scalar terms of one ELBO evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboEval {
    pub elbo: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// One-sample ELBO at fixed latent noise `eps`; optionally accumulates the
/// exact gradient w.r.t. the flat parameter vector.
pub(super) fn elbo(
    model: &VaeModel,
    sample: &ElboSample,
    eps: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<ElboEval> {
    let plan = model.plan();
    let m = plan.antennas;
    if sample.antennas() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: sample.antennas(),
        });
    }
    if sample.target_spectra.len() != plan.num_blocks {
        return Err(Error::ShapeMismatch(format!(
            "sample has {} blocks, model expects {}",
            sample.target_spectra.len(),
            plan.num_blocks
        )));
    }
    if eps.len() != plan.latent {
        return Err(Error::DimensionMismatch {
            expected: plan.latent,
            got: eps.len(),
        });
    }

    let params = &model.params.values;
    let enc = net::encoder_forward(plan, params, &sample.encoder_spectrum);
    let sigma: Vec<f64> = enc.logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
    let z: Vec<f64> = enc
        .mu
        .iter()
        .zip(&sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect();
    let dec = net::decoder_forward(plan, params, &z);
    let out = dec.output();

    let mut reconstruction = 0.0;
    for (b, (targets, &noise)) in sample
        .target_spectra
        .iter()
        .zip(&sample.noise_vars)
        .enumerate()
    {
        let re = &out[(3 * b) * m..(3 * b + 1) * m];
        let im = &out[(3 * b + 1) * m..(3 * b + 2) * m];
        let s = &out[(3 * b + 2) * m..(3 * b + 3) * m];
        for i in 0..m {
            let c = super::layers::softplus(s[i]) + super::SPECTRUM_FLOOR;
            let d = c + noise;
            let dr = targets[i].re - re[i];
            let di = targets[i].im - im[i];
            reconstruction += -(std::f64::consts::PI * d).ln() - (dr * dr + di * di) / d;
        }
    }
    let mut kl = 0.0;
    for (mu, lv) in enc.mu.iter().zip(&enc.logvar) {
        kl += 0.5 * (lv.exp() + mu * mu - 1.0 - lv);
    }
    let elbo = reconstruction - kl;
    if !elbo.is_finite() {
        return Err(Error::NonFinite {
            context: "ELBO evaluation".into(),
        });
    }

    if let Some(grad) = grad {
        let mut g_out = vec![0.0; out.len()];
        for (b, (targets, &noise)) in sample
            .target_spectra
            .iter()
            .zip(&sample.noise_vars)
            .enumerate()
        {
            let re = &out[(3 * b) * m..(3 * b + 1) * m];
            let im = &out[(3 * b + 1) * m..(3 * b + 2) * m];
            let s = &out[(3 * b + 2) * m..(3 * b + 3) * m];
            for i in 0..m {
                let c = super::layers::softplus(s[i]) + super::SPECTRUM_FLOOR;
                let d = c + noise;
                let dr = targets[i].re - re[i];
                let di = targets[i].im - im[i];
                g_out[(3 * b) * m + i] = 2.0 * dr / d;
                g_out[(3 * b + 1) * m + i] = 2.0 * di / d;
                let g_c = -1.0 / d + (dr * dr + di * di) / (d * d);
                g_out[(3 * b + 2) * m + i] = g_c * sigmoid(s[i]);
            }
        }
        let g_z = net::decoder_backward(plan, params, &dec, &g_out, grad);
        let mut g_mu = vec![0.0; plan.latent];
        let mut g_lv = vec![0.0; plan.latent];
        for i in 0..plan.latent {
            g_mu[i] = g_z[i] - enc.mu[i];
            let g_sigma_path = g_z[i] * eps[i] * sigma[i] * 0.5;
            g_lv[i] = if enc.lv_saturated && enc.logvar[i].abs() >= 30.0 {
                0.0
            } else {
                g_sigma_path - 0.5 * (enc.logvar[i].exp() - 1.0)
            };
        }
        net::encoder_backward(plan, params, &enc, &g_mu, &g_lv, grad);
    }

    Ok(ElboEval {
        elbo,
        reconstruction,
        kl,
    })
}
