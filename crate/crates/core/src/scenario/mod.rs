//! Pilot-contaminated dataset synthesis.
//!
//! Builds full datasets record by record: pilot matrices, despreading, the
//! contaminated observation `y = h1 + h_int + n`, the noisy training pair
//! `(y1, y2) = (h1 + n1, h_int + n2)`, dataset-level normalization, and the
//! binary dataset file format (also the ingestion path for externally
//! generated channel data).
//!
//! Channels and noisy pairs are quantized to the f32 grid at synthesis time
//! so that the file format round-trips losslessly and externally re-ingested
//! channels reproduce the internal pipeline bit for bit. The observation `y`
//! is never stored authoritatively: it is always the exact f64 sum
//! `y1 + y2`, and the loader recomputes and cross-checks it.

pub(crate) mod format;

pub use format::{load_any, load_dataset, save_channel_draws, save_dataset, LoadedDataset};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_ccm, sample_cell_channel, sample_delta, AngularPrior, ClusterParams};
use crate::error::{Error, Result};
use crate::rng::{complex_standard_normal, stream_rng};

/// System-level scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Base-station antennas M.
    pub antennas: usize,
    /// Number of cells L (cell 1 is the cell of interest).
    pub cells: usize,
    /// Users per cell K.
    pub users: usize,
    /// Pilot sequence length T_tr.
    pub pilot_len: usize,
    /// Training SNR range in dB (one SNR drawn per record).
    pub snr_range_db: [f64; 2],
    /// Records in the train/validation/test splits.
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Angle-of-arrival prior per cell (length L).
    pub priors: Vec<AngularPrior>,
    /// Power-angular-spectrum cluster knobs.
    #[serde(default)]
    pub clusters: ClusterParams,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::InvalidConfig("antennas must be >= 1".into()));
        }
        if self.cells == 0 {
            return Err(Error::InvalidConfig("cells must be >= 1".into()));
        }
        if self.pilot_len < self.users {
            return Err(Error::InvalidConfig(format!(
                "pilot length T_tr = {} must be >= users K = {} (orthogonal pilots)",
                self.pilot_len, self.users
            )));
        }
        if self.snr_range_db[0] > self.snr_range_db[1] {
            return Err(Error::InvalidConfig(format!(
                "snr range low {} exceeds high {}",
                self.snr_range_db[0], self.snr_range_db[1]
            )));
        }
        if self.priors.len() != self.cells {
            return Err(Error::InvalidConfig(format!(
                "need one prior per cell: {} priors for {} cells",
                self.priors.len(),
                self.cells
            )));
        }
        for p in &self.priors {
            p.validate()?;
        }
        self.clusters.validate()?;
        Ok(())
    }
}

/// Orthonormal pilot matrix: the first K columns of the unitary T_tr-point
/// DFT matrix. Entries are unimodular with magnitude 1/sqrt(T_tr).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    pub pilot_len: usize,
    pub columns: Vec<Vec<Complex64>>,
}

impl PilotMatrix {
    pub fn as_matrix(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_fn(self.pilot_len, self.columns.len(), |t, k| {
            self.columns[k][t]
        })
    }
}

/// Pairwise-orthonormal pilots for K users of length T_tr.
pub fn gen_pilots(pilot_len: usize, users: usize) -> Result<PilotMatrix> {
    if users > pilot_len {
        return Err(Error::PilotOverflow { users, pilot_len });
    }
    if pilot_len == 0 {
        return Err(Error::EmptyVector);
    }
    let scale = 1.0 / (pilot_len as f64).sqrt();
    let columns = (0..users)
        .map(|k| {
            (0..pilot_len)
                .map(|t| {
                    let ang =
                        -2.0 * std::f64::consts::PI * (t as f64) * (k as f64) / pilot_len as f64;
                    Complex64::from_polar(scale, ang)
                })
                .collect()
        })
        .collect();
    Ok(PilotMatrix { pilot_len, columns })
}

/// Correlates a received pilot block with one pilot sequence: returns `Y psi`.
pub fn despread(
    y_matrix: &nalgebra::DMatrix<Complex64>,
    pilot: &[Complex64],
) -> Result<Vec<Complex64>> {
    if y_matrix.ncols() != pilot.len() {
        return Err(Error::DimensionMismatch {
            expected: y_matrix.ncols(),
            got: pilot.len(),
        });
    }
    let p = nalgebra::DVector::from_column_slice(pilot);
    Ok((y_matrix * p).as_slice().to_vec())
}

/// Per-observation noise level selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrMode {
    /// Fixed SNR in dB for every record.
    FixedDb(f64),
    /// Per-record SNR drawn uniformly in dB.
    UniformDb { low: f64, high: f64 },
    /// Noiseless records (genie data): `y = h1 + h_int` exactly.
    Noiseless,
}

/// Ground-truth channels of one record before observations are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub h1: Vec<Complex64>,
    pub h_int: Vec<Complex64>,
    /// Per-cell CCM first rows (cell of interest first). Absent for
    /// externally generated channels.
    pub ccm_rows: Option<Vec<Vec<Complex64>>>,
}

/// Covariance of the zero-mean noise in the training pair:
/// `Sigma = diag([sigma1^2 1^T, sigma2^2 1^T])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCov {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// Channel of interest.
    pub h1: Vec<Complex64>,
    /// Summed interference channel.
    pub h_int: Vec<Complex64>,
    /// Per-cell CCM first rows, if the channel model provides them.
    pub ccm_rows: Option<Vec<Vec<Complex64>>>,
    /// Contaminated observation; always exactly `y1 + y2`.
    pub y: Vec<Complex64>,
    /// Noisy signal block `h1 + n1`.
    pub y1: Vec<Complex64>,
    /// Noisy interference block `h_int + n2`.
    pub y2: Vec<Complex64>,
    /// Noise variance of `y`.
    pub sigma_sq: f64,
    /// Noise variance of `y1` (= sigma_sq / 2).
    pub sigma1_sq: f64,
    /// Noise variance of `y2` (= sigma_sq / 2).
    pub sigma2_sq: f64,
}

impl DatasetRecord {
    pub fn antennas(&self) -> usize {
        self.h1.len()
    }

    /// Noiseless contaminated observation `h1 + h_int` (genie encoder input).
    pub fn noiseless_observation(&self) -> Vec<Complex64> {
        self.h1
            .iter()
            .zip(&self.h_int)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// The known noise covariance of the training pair.
    pub fn noise_cov(&self) -> NoiseCov {
        NoiseCov {
            sigma1_sq: self.sigma1_sq,
            sigma2_sq: self.sigma2_sq,
        }
    }
}

/// A full dataset split plus the metadata the file format persists.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub antennas: usize,
    pub cells: usize,
    pub priors: Vec<AngularPrior>,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Ground-truth channels with observations stripped (the interchange
    /// payload for external channel generators).
    pub fn channel_draws(&self) -> Vec<ChannelDraw> {
        self.records
            .iter()
            .map(|r| ChannelDraw {
                h1: r.h1.clone(),
                h_int: r.h_int.clone(),
                ccm_rows: r.ccm_rows.clone(),
            })
            .collect()
    }
}

fn quantize(v: &mut [Complex64]) {
    for z in v.iter_mut() {
        *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
    }
}

/// Draws fresh cluster sets and channels for every cell of one record.
/// Values are quantized to the f32 grid (the storage resolution).
pub fn draw_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelDraw> {
    let m = cfg.antennas;
    let mut h1 = vec![Complex64::new(0.0, 0.0); m];
    let mut h_int = vec![Complex64::new(0.0, 0.0); m];
    let mut rows = Vec::with_capacity(cfg.cells);
    for (cell, prior) in cfg.priors.iter().enumerate() {
        let delta = sample_delta(prior, &cfg.clusters, rng);
        let ccm = build_ccm(&delta, m)?;
        let h = sample_cell_channel(&ccm, rng)?;
        let mut row = ccm.first_row.row().to_vec();
        quantize(&mut row);
        rows.push(row);
        if cell == 0 {
            h1.copy_from_slice(&h);
        } else {
            for (acc, v) in h_int.iter_mut().zip(&h) {
                *acc += v;
            }
        }
    }
    quantize(&mut h1);
    quantize(&mut h_int);
    Ok(ChannelDraw {
        h1,
        h_int,
        ccm_rows: Some(rows),
    })
}

fn sample_sigma_sq<R: Rng + ?Sized>(snr: SnrMode, rng: &mut R) -> f64 {
    match snr {
        SnrMode::FixedDb(db) => 10f64.powf(-db / 10.0),
        SnrMode::UniformDb { low, high } => {
            let db = low + (high - low) * rng.random::<f64>();
            10f64.powf(-db / 10.0)
        }
        SnrMode::Noiseless => 0.0,
    }
}

/// Attaches the contaminated observation and the noisy training pair to a
/// channel draw. The noise split is `sigma1^2 = sigma2^2 = sigma^2 / 2`, so
/// `y = y1 + y2` carries exactly the nominal observation noise.
pub fn attach_observations<R: Rng + ?Sized>(
    channels: ChannelDraw,
    snr: SnrMode,
    rng: &mut R,
) -> DatasetRecord {
    let m = channels.h1.len();
    let sigma_sq = sample_sigma_sq(snr, rng);
    let half = (sigma_sq / 2.0).sqrt();
    let mut y1 = Vec::with_capacity(m);
    let mut y2 = Vec::with_capacity(m);
    for i in 0..m {
        y1.push(channels.h1[i] + complex_standard_normal(rng) * half);
    }
    for i in 0..m {
        y2.push(channels.h_int[i] + complex_standard_normal(rng) * half);
    }
    quantize(&mut y1);
    quantize(&mut y2);
    let y = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
    DatasetRecord {
        h1: channels.h1,
        h_int: channels.h_int,
        ccm_rows: channels.ccm_rows,
        y,
        y1,
        y2,
        sigma_sq,
        sigma1_sq: sigma_sq / 2.0,
        sigma2_sq: sigma_sq / 2.0,
    }
}

/// Synthesizes one record (fresh cluster sets, channels and noise) from a
/// single generator.
pub fn synthesize_record(
    cfg: &SystemConfig,
    snr: SnrMode,
    rng: &mut ChaCha8Rng,
) -> Result<DatasetRecord> {
    cfg.validate()?;
    let channels = draw_channels(cfg, rng)?;
    Ok(attach_observations(channels, snr, rng))
}

/// Record `i` of a dataset uses streams `2 i` (channels) and `2 i + 1`
/// (SNR draw and noise) of the split seed, so generation parallelizes
/// without affecting the result and external ingestion can re-synthesize
/// identical observations.
pub fn synthesize_dataset(
    cfg: &SystemConfig,
    count: usize,
    snr: SnrMode,
    seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    let records: Result<Vec<DatasetRecord>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut ch_rng = stream_rng(seed, 2 * i as u64);
            let channels = draw_channels(cfg, &mut ch_rng)?;
            let mut noise_rng = stream_rng(seed, 2 * i as u64 + 1);
            Ok(attach_observations(channels, snr, &mut noise_rng))
        })
        .collect();
    Ok(Dataset {
        antennas: cfg.antennas,
        cells: cfg.cells,
        priors: cfg.priors.clone(),
        records: records?,
    })
}

/// Outcome of dataset-level normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleReport {
    /// Scalar applied to every channel and observation.
    pub scale: f64,
    /// Mean per-antenna signal power before scaling.
    pub mean_signal_power: f64,
}

/// Applies one global scalar to all channels and observations so the mean
/// per-antenna power of the channel of interest is 1. Covariance rows scale
/// quadratically, noise variances follow the observations, and the
/// signal-to-interference ratio is untouched.
pub fn normalize_dataset(ds: &mut Dataset) -> Result<ScaleReport> {
    if ds.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for r in &ds.records {
        acc += r.h1.iter().map(|z| z.norm_sqr()).sum::<f64>();
        n += r.h1.len();
    }
    let mean_signal_power = acc / n as f64;
    if mean_signal_power == 0.0 {
        return Err(Error::InvalidConfig(
            "cannot normalize an all-zero dataset".into(),
        ));
    }
    let s = 1.0 / mean_signal_power.sqrt();
    apply_scale(ds, s);
    Ok(ScaleReport {
        scale: s,
        mean_signal_power,
    })
}

/// Rescales a dataset by a fixed scalar (e.g. the normalization constant of
/// a sibling split, so train/val/test share one global scale).
pub fn apply_scale(ds: &mut Dataset, s: f64) {
    let s2 = s * s;
    for r in ds.records.iter_mut() {
        for v in [&mut r.h1, &mut r.h_int, &mut r.y1, &mut r.y2] {
            for z in v.iter_mut() {
                *z *= s;
            }
        }
        r.y = r.y1.iter().zip(&r.y2).map(|(a, b)| a + b).collect();
        if let Some(rows) = r.ccm_rows.as_mut() {
            for row in rows.iter_mut() {
                for z in row.iter_mut() {
                    *z *= s2;
                }
            }
        }
        r.sigma_sq *= s2;
        r.sigma1_sq *= s2;
        r.sigma2_sq *= s2;
    }
}

/// How externally generated channel pairs are normalized on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestNormalization {
    /// Scale each (h1, h_int) pair by the inverse square root of its mean
    /// per-antenna cumulative gain; preserves the within-observation ratio.
    CumulativePathGain,
    None,
}

/// Mean per-antenna cumulative gain of one channel pair.
pub fn cumulative_pair_gain(h1: &[Complex64], h_int: &[Complex64]) -> f64 {
    let p: f64 = h1.iter().chain(h_int.iter()).map(|z| z.norm_sqr()).sum();
    p / (h1.len() + h_int.len()) as f64
}

/// Per-pair scaling applied under cumulative-path-gain normalization.
pub fn cumulative_gain_scale(h1: &[Complex64], h_int: &[Complex64]) -> f64 {
    let g = cumulative_pair_gain(h1, h_int);
    if g > 0.0 {
        1.0 / g.sqrt()
    } else {
        1.0
    }
}

/// Ingests a channels-only dataset file: optionally applies per-observation
/// cumulative-path-gain scaling, then synthesizes observations with the noise
/// streams of `seed` (stream `2 i + 1` for record `i`).
pub fn ingest_external(
    path: &std::path::Path,
    normalization: IngestNormalization,
    snr: SnrMode,
    seed: u64,
) -> Result<Dataset> {
    let (antennas, cells, priors, mut draws) = match load_any(path)? {
        LoadedDataset::ChannelsOnly {
            antennas,
            cells,
            priors,
            draws,
        } => (antennas, cells, priors, draws),
        LoadedDataset::Full(ds) => (ds.antennas, ds.cells, ds.priors.clone(), ds.channel_draws()),
    };
    if normalization == IngestNormalization::CumulativePathGain {
        for d in draws.iter_mut() {
            let s = cumulative_gain_scale(&d.h1, &d.h_int);
            for z in d.h1.iter_mut() {
                *z *= s;
            }
            for z in d.h_int.iter_mut() {
                *z *= s;
            }
            let s2 = s * s;
            if let Some(rows) = d.ccm_rows.as_mut() {
                for row in rows.iter_mut() {
                    for z in row.iter_mut() {
                        *z *= s2;
                    }
                }
            }
        }
    }
    let records: Vec<DatasetRecord> = draws
        .into_par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut noise_rng = stream_rng(seed, 2 * i as u64 + 1);
            attach_observations(d, snr, &mut noise_rng)
        })
        .collect();
    Ok(Dataset {
        antennas,
        cells,
        priors,
        records,
    })
}
