//! Channel estimators: the shared LMMSE core, the classical baselines (LS,
//! sample covariance, genie covariance) and the VAE-based family.
//!
//! Every model-based estimator evaluates
//!
//! `h1_hat = mu1 + C1 (C1 + C_int + sigma^2 I)^{-1} (y - mu1 - mu_int)`
//!
//! through [`lmmse_core`]. When both covariances are circulant the solve is
//! elementwise in the Fourier domain; any dense operand falls back to a
//! Hermitian solve with the shared jitter policy.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_solve, hermitian_solve_matrix, CirculantSpectrum, ToeplitzFirstRow, UnitaryDft,
};
use crate::scenario::DatasetRecord;
use crate::vae::VaeModel;

/// Estimator labels as they appear in reports and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ls,
    Scov,
    GenieCov,
    Vae,
    VaeGenie,
    VaeIgnore,
    VaeAwgn,
    VaeScov,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::Ls,
        EstimatorKind::Scov,
        EstimatorKind::GenieCov,
        EstimatorKind::Vae,
        EstimatorKind::VaeGenie,
        EstimatorKind::VaeIgnore,
        EstimatorKind::VaeAwgn,
        EstimatorKind::VaeScov,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Ls => "ls",
            EstimatorKind::Scov => "scov",
            EstimatorKind::GenieCov => "genie-cov",
            EstimatorKind::Vae => "vae",
            EstimatorKind::VaeGenie => "vae-genie",
            EstimatorKind::VaeIgnore => "vae-ignore",
            EstimatorKind::VaeAwgn => "vae-awgn",
            EstimatorKind::VaeScov => "vae-scov",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

// ---------------------------------------------------------------------------
// Sample statistics
// ---------------------------------------------------------------------------

/// Sample mean and covariance of one cell's training channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub mu_hat: DVector<Complex64>,
    pub c_hat: DMatrix<Complex64>,
}

/// Per-cell first and second sample moments over `count` realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub cells: Vec<CellStats>,
    pub count: usize,
}

impl SampleStats {
    /// Fits moments from per-cell channel lists.
    pub fn fit_from_channels(per_cell: &[Vec<Vec<Complex64>>]) -> Result<Self> {
        if per_cell.is_empty() || per_cell.iter().any(|c| c.is_empty()) {
            return Err(Error::EmptyDataset);
        }
        let count = per_cell[0].len();
        let m = per_cell[0][0].len();
        let mut cells = Vec::with_capacity(per_cell.len());
        for channels in per_cell {
            if channels.len() != count {
                return Err(Error::DimensionMismatch {
                    expected: count,
                    got: channels.len(),
                });
            }
            let mut mu = DVector::<Complex64>::zeros(m);
            let mut c = DMatrix::<Complex64>::zeros(m, m);
            for h in channels {
                let v = DVector::from_column_slice(h);
                c += &v * v.adjoint();
                mu += v;
            }
            let n = Complex64::new(count as f64, 0.0);
            cells.push(CellStats {
                mu_hat: mu / n,
                c_hat: c / n,
            });
        }
        Ok(Self { cells, count })
    }

    /// Fits moments from a dataset's ground-truth channels. The channel of
    /// interest is cell 0; all interferers are aggregated into cell 1 (the
    /// estimator formulas only ever use the interference sum).
    pub fn fit(records: &[DatasetRecord]) -> Result<Self> {
        let h1: Vec<Vec<Complex64>> = records.iter().map(|r| r.h1.clone()).collect();
        let h_int: Vec<Vec<Complex64>> = records.iter().map(|r| r.h_int.clone()).collect();
        Self::fit_from_channels(&[h1, h_int])
    }

    /// Summed interference moments (cells 1..L).
    pub fn interference(&self) -> (DVector<Complex64>, DMatrix<Complex64>) {
        let m = self.cells[0].mu_hat.len();
        let mut mu = DVector::<Complex64>::zeros(m);
        let mut c = DMatrix::<Complex64>::zeros(m, m);
        for cell in &self.cells[1..] {
            mu += &cell.mu_hat;
            c += &cell.c_hat;
        }
        (mu, c)
    }
}

// ---------------------------------------------------------------------------
// LMMSE core
// ---------------------------------------------------------------------------

/// Covariance operand for [`lmmse_core`].
#[derive(Debug, Clone)]
pub enum CovOperand<'a> {
    Circulant(&'a CirculantSpectrum),
    Dense(&'a DMatrix<Complex64>),
}

impl CovOperand<'_> {
    fn dim(&self) -> usize {
        match self {
            CovOperand::Circulant(c) => c.len(),
            CovOperand::Dense(d) => d.nrows(),
        }
    }
}

/// `mu1 + C1 (C1 + C_int + sigma^2 I)^{-1} (y - mu1 - mu_int)`.
///
/// Two circulant operands take the Fourier fast path (elementwise), anything
/// dense falls back to a Hermitian solve with the shared jitter policy.
pub fn lmmse_core(
    mu1: &[Complex64],
    c1: CovOperand,
    mu_int: &[Complex64],
    c_int: CovOperand,
    sigma_sq: f64,
    y: &[Complex64],
) -> Result<Vec<Complex64>> {
    let m = y.len();
    if mu1.len() != m || mu_int.len() != m || c1.dim() != m || c_int.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: mu1.len().min(mu_int.len()).min(c1.dim()).min(c_int.dim()),
        });
    }
    let innovation: Vec<Complex64> = (0..m).map(|i| y[i] - mu1[i] - mu_int[i]).collect();
    match (&c1, &c_int) {
        (CovOperand::Circulant(s1), CovOperand::Circulant(s2)) => {
            let mean_denom: f64 = (s1.trace() + s2.trace()) / m as f64 + sigma_sq;
            if !mean_denom.is_finite() || mean_denom <= 0.0 {
                return Err(Error::SingularSpectrum);
            }
            let floor = crate::linalg::PSD_JITTER_REL * mean_denom;
            let plan = UnitaryDft::new(m);
            let mut buf = innovation;
            plan.forward_in_place(&mut buf);
            for ((x, &e1), &e2) in buf.iter_mut().zip(s1.eigenvalues()).zip(s2.eigenvalues()) {
                let d = (e1 + e2 + sigma_sq).max(floor);
                *x *= e1 / d;
            }
            plan.inverse_in_place(&mut buf);
            for (out, &mu) in buf.iter_mut().zip(mu1) {
                *out += mu;
            }
            Ok(buf)
        }
        _ => {
            let c1d = match &c1 {
                CovOperand::Dense(d) => (*d).clone(),
                CovOperand::Circulant(s) => s.to_dense(),
            };
            let c2d = match &c_int {
                CovOperand::Dense(d) => (*d).clone(),
                CovOperand::Circulant(s) => s.to_dense(),
            };
            let mut cy = &c1d + &c2d;
            for i in 0..m {
                cy[(i, i)] += Complex64::new(sigma_sq, 0.0);
            }
            let x = hermitian_solve(&cy, &innovation)?;
            let filtered = &c1d * DVector::from_column_slice(&x);
            Ok((0..m).map(|i| mu1[i] + filtered[i]).collect())
        }
    }
}

/// Least-squares estimate: the observation itself.
pub fn ls_estimate(y: &[Complex64]) -> Vec<Complex64> {
    y.to_vec()
}

/// Sample-covariance LMMSE estimate from fitted moments.
pub fn scov_estimate(
    stats: &SampleStats,
    sigma_sq: f64,
    y: &[Complex64],
) -> Result<Vec<Complex64>> {
    let (mu_int, c_int) = stats.interference();
    lmmse_core(
        stats.cells[0].mu_hat.as_slice(),
        CovOperand::Dense(&stats.cells[0].c_hat),
        mu_int.as_slice(),
        CovOperand::Dense(&c_int),
        sigma_sq,
        y,
    )
}

fn record_toeplitz_covs(rec: &DatasetRecord) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let rows = rec.ccm_rows.as_ref().ok_or(Error::MissingCcm)?;
    if rows.is_empty() {
        return Err(Error::MissingCcm);
    }
    let c1 = ToeplitzFirstRow::new(rows[0].clone())?.to_dense();
    let m = rec.antennas();
    let mut c_int = DMatrix::<Complex64>::zeros(m, m);
    for row in &rows[1..] {
        c_int += ToeplitzFirstRow::new(row.clone())?.to_dense();
    }
    Ok((c1, c_int))
}

/// LMMSE with the record's ground-truth covariance matrices and zero means.
pub fn genie_cov_estimate(rec: &DatasetRecord, sigma_sq: f64) -> Result<Vec<Complex64>> {
    let (c1, c_int) = record_toeplitz_covs(rec)?;
    let zeros = vec![Complex64::new(0.0, 0.0); rec.antennas()];
    lmmse_core(
        &zeros,
        CovOperand::Dense(&c1),
        &zeros,
        CovOperand::Dense(&c_int),
        sigma_sq,
        &rec.y,
    )
}

/// Per-record analytic MSE of the genie-covariance estimator:
/// `tr(C1 - C1 C_y^{-1} C1) / M`.
pub fn genie_cov_analytic_mse(rec: &DatasetRecord, sigma_sq: f64) -> Result<f64> {
    let (c1, c_int) = record_toeplitz_covs(rec)?;
    let m = rec.antennas();
    let mut cy = &c1 + &c_int;
    for i in 0..m {
        cy[(i, i)] += Complex64::new(sigma_sq, 0.0);
    }
    let x = hermitian_solve_matrix(&cy, &c1)?;
    // tr(C1) - tr(C1 C_y^{-1} C1)
    let mut trace = 0.0;
    for i in 0..m {
        trace += c1[(i, i)].re;
        let mut filt = Complex64::new(0.0, 0.0);
        for k in 0..m {
            filt += c1[(i, k)] * x[(k, i)];
        }
        trace -= filt.re;
    }
    Ok(trace / m as f64)
}

// ---------------------------------------------------------------------------
// Estimator dispatch
// ---------------------------------------------------------------------------

/// A ready-to-run estimator: kind plus whatever fitted state it needs.
pub enum Estimator {
    Ls,
    Scov(SampleStats),
    GenieCov,
    Vae(VaeModel),
    VaeGenie(VaeModel),
    VaeIgnore(VaeModel),
    VaeAwgn { model: VaeModel, alpha_sq: f64 },
    VaeScov { model: VaeModel, stats: SampleStats },
}

fn require_blocks(model: &VaeModel, blocks: usize, genie: bool, kind: EstimatorKind) -> Result<()> {
    if model.config.num_blocks != blocks {
        return Err(Error::EstimatorInput {
            kind: kind.to_string(),
            what: format!(
                "a {blocks}-block checkpoint (got {} blocks)",
                model.config.num_blocks
            ),
        });
    }
    if model.config.genie != genie {
        return Err(Error::EstimatorInput {
            kind: kind.to_string(),
            what: format!("a checkpoint with genie = {genie}"),
        });
    }
    Ok(())
}

impl Estimator {
    pub fn ls() -> Self {
        Estimator::Ls
    }

    pub fn scov(stats: SampleStats) -> Self {
        Estimator::Scov(stats)
    }

    pub fn genie_cov() -> Self {
        Estimator::GenieCov
    }

    /// Multi-cell VAE estimator (noisy training).
    pub fn vae(model: VaeModel) -> Result<Self> {
        require_blocks(&model, 2, false, EstimatorKind::Vae)?;
        Ok(Estimator::Vae(model))
    }

    /// Multi-cell VAE trained and evaluated on noiseless encoder inputs.
    pub fn vae_genie(model: VaeModel) -> Result<Self> {
        require_blocks(&model, 2, true, EstimatorKind::VaeGenie)?;
        Ok(Estimator::VaeGenie(model))
    }

    /// Single-cell VAE, interference ignored entirely.
    pub fn vae_ignore(model: VaeModel) -> Result<Self> {
        require_blocks(&model, 1, false, EstimatorKind::VaeIgnore)?;
        Ok(Estimator::VaeIgnore(model))
    }

    /// Single-cell VAE with white-interference covariance matched to the
    /// interference sample trace.
    pub fn vae_awgn(model: VaeModel, stats: &SampleStats) -> Result<Self> {
        require_blocks(&model, 1, false, EstimatorKind::VaeAwgn)?;
        let (_, c_int) = stats.interference();
        let m = c_int.nrows();
        let alpha_sq = (0..m).map(|i| c_int[(i, i)].re).sum::<f64>() / m as f64;
        Ok(Estimator::VaeAwgn { model, alpha_sq })
    }

    /// Single-cell VAE with the interference sample moments.
    pub fn vae_scov(model: VaeModel, stats: SampleStats) -> Result<Self> {
        require_blocks(&model, 1, false, EstimatorKind::VaeScov)?;
        Ok(Estimator::VaeScov { model, stats })
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Ls => EstimatorKind::Ls,
            Estimator::Scov(_) => EstimatorKind::Scov,
            Estimator::GenieCov => EstimatorKind::GenieCov,
            Estimator::Vae(_) => EstimatorKind::Vae,
            Estimator::VaeGenie(_) => EstimatorKind::VaeGenie,
            Estimator::VaeIgnore(_) => EstimatorKind::VaeIgnore,
            Estimator::VaeAwgn { .. } => EstimatorKind::VaeAwgn,
            Estimator::VaeScov { .. } => EstimatorKind::VaeScov,
        }
    }

    /// Estimates the channel of interest from one record's observation,
    /// using the record's nominal noise level.
    pub fn estimate(&self, rec: &DatasetRecord) -> Result<Vec<Complex64>> {
        let m = rec.antennas();
        let sigma_sq = rec.sigma_sq;
        match self {
            Estimator::Ls => Ok(ls_estimate(&rec.y)),
            Estimator::Scov(stats) => scov_estimate(stats, sigma_sq, &rec.y),
            Estimator::GenieCov => genie_cov_estimate(rec, sigma_sq),
            Estimator::Vae(model) => {
                let mom = model.infer_moments(&rec.y)?;
                lmmse_core(
                    &mom.mu1,
                    CovOperand::Circulant(&mom.c1),
                    mom.mu_int.as_ref().unwrap(),
                    CovOperand::Circulant(mom.c_int.as_ref().unwrap()),
                    sigma_sq,
                    &rec.y,
                )
            }
            Estimator::VaeGenie(model) => {
                let mom = model.infer_moments(&rec.noiseless_observation())?;
                lmmse_core(
                    &mom.mu1,
                    CovOperand::Circulant(&mom.c1),
                    mom.mu_int.as_ref().unwrap(),
                    CovOperand::Circulant(mom.c_int.as_ref().unwrap()),
                    sigma_sq,
                    &rec.y,
                )
            }
            Estimator::VaeIgnore(model) => {
                let mom = model.infer_moments(&rec.y)?;
                let zero_mu = vec![Complex64::new(0.0, 0.0); m];
                let zero_c = CirculantSpectrum::constant(0.0, m)?;
                lmmse_core(
                    &mom.mu1,
                    CovOperand::Circulant(&mom.c1),
                    &zero_mu,
                    CovOperand::Circulant(&zero_c),
                    sigma_sq,
                    &rec.y,
                )
            }
            Estimator::VaeAwgn { model, alpha_sq } => {
                let mom = model.infer_moments(&rec.y)?;
                let zero_mu = vec![Complex64::new(0.0, 0.0); m];
                let white = CirculantSpectrum::constant(*alpha_sq, m)?;
                lmmse_core(
                    &mom.mu1,
                    CovOperand::Circulant(&mom.c1),
                    &zero_mu,
                    CovOperand::Circulant(&white),
                    sigma_sq,
                    &rec.y,
                )
            }
            Estimator::VaeScov { model, stats } => {
                let mom = model.infer_moments(&rec.y)?;
                let (mu_int, c_int) = stats.interference();
                lmmse_core(
                    &mom.mu1,
                    CovOperand::Circulant(&mom.c1),
                    mu_int.as_slice(),
                    CovOperand::Dense(&c_int),
                    sigma_sq,
                    &rec.y,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests;
