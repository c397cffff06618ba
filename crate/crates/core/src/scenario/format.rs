//! Binary dataset file format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic  "MCCE"                          4 bytes
//! version u16 (= 1), flags u16           bit 0: observations present
//!                                        bit 1: CCM first rows present
//! M u32, L u32, record count u64
//! prior descriptors, one per cell:       kind u8 (0 uniform, 1 gaussian),
//!                                        center f64, std f64
//! records (see below)
//! crc32 u32 over every preceding byte
//! ```
//!
//! Each record stores f32-interleaved (re, im) arrays `h1[M]`, `h_int[M]`,
//! the per-cell CCM first rows `[L x M]` (if present), and — when
//! observations are present — `y[M]`, `y1[M]`, `y2[M]` followed by f64
//! `sigma_sq`, `sigma1_sq`, `sigma2_sq`. The observation `y` is redundant by
//! construction (`y = y1 + y2`); the loader recomputes the exact sum and
//! cross-checks the stored array.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::channel::AngularPrior;
use crate::error::{Error, Result};

use super::{ChannelDraw, Dataset, DatasetRecord};

const MAGIC: [u8; 4] = *b"MCCE";
const VERSION: u16 = 1;
const FLAG_OBSERVATIONS: u16 = 1;
const FLAG_CCM_ROWS: u16 = 2;

// ---------------------------------------------------------------------------
// CRC32 (IEEE 802.3, reflected)
// ---------------------------------------------------------------------------

pub(crate) struct Crc32 {
    table: [u32; 256],
    state: u32,
}

impl Crc32 {
    pub fn new() -> Self {
        let mut table = [0u32; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 {
                    0xEDB8_8320 ^ (c >> 1)
                } else {
                    c >> 1
                };
            }
            *slot = c;
        }
        Self {
            table,
            state: 0xFFFF_FFFF,
        }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state = self.table[((self.state ^ b as u32) & 0xFF) as usize] ^ (self.state >> 8);
        }
    }

    pub fn finalize(&self) -> u32 {
        self.state ^ 0xFFFF_FFFF
    }
}

struct CrcWriter<W: Write> {
    inner: W,
    crc: Crc32,
}

impl<W: Write> CrcWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            crc: Crc32::new(),
        }
    }

    fn write_all(&mut self, bytes: &[u8]) -> Result<()> {
        self.crc.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn u16(&mut self, v: u16) -> Result<()> {
        self.write_all(&v.to_le_bytes())
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.write_all(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.write_all(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.write_all(&v.to_le_bytes())
    }

    fn complex_f32_array(&mut self, v: &[Complex64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        for z in v {
            buf.extend_from_slice(&(z.re as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        self.write_all(&buf)
    }
}

struct CrcReader<R: Read> {
    inner: R,
    crc: Crc32,
}

impl<R: Read> CrcReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            crc: Crc32::new(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8], record: usize) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::Truncated { record })?;
        self.crc.update(buf);
        Ok(())
    }

    fn u16(&mut self, record: usize) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b, record)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, record: usize) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, record)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, record: usize) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, record)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, record: usize) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, record)?;
        Ok(f64::from_le_bytes(b))
    }

    fn complex_f32_array(&mut self, len: usize, record: usize) -> Result<Vec<Complex64>> {
        let mut buf = vec![0u8; len * 8];
        self.read_exact(&mut buf, record)?;
        let mut out = Vec::with_capacity(len);
        for chunk in buf.chunks_exact(8) {
            let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("record {record}"),
                });
            }
            out.push(Complex64::new(re as f64, im as f64));
        }
        Ok(out)
    }
}

fn write_prior<W: Write>(w: &mut CrcWriter<W>, prior: &AngularPrior) -> Result<()> {
    match prior {
        AngularPrior::UniformFullCircle => {
            w.write_all(&[0u8])?;
            w.f64(0.0)?;
            w.f64(0.0)
        }
        AngularPrior::Gaussian {
            center_deg,
            std_deg,
        } => {
            w.write_all(&[1u8])?;
            w.f64(*center_deg)?;
            w.f64(*std_deg)
        }
    }
}

fn read_prior<R: Read>(r: &mut CrcReader<R>) -> Result<AngularPrior> {
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind, 0)?;
    let center = r.f64(0)?;
    let std = r.f64(0)?;
    match kind[0] {
        0 => Ok(AngularPrior::UniformFullCircle),
        1 => Ok(AngularPrior::Gaussian {
            center_deg: center,
            std_deg: std,
        }),
        k => Err(Error::InvalidConfig(format!("unknown prior kind {k}"))),
    }
}

fn round32(v: &[Complex64]) -> Vec<Complex64> {
    v.iter()
        .map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
        .collect()
}

/// Result of loading a dataset file of either flavor.
pub enum LoadedDataset {
    Full(Dataset),
    ChannelsOnly {
        antennas: usize,
        cells: usize,
        priors: Vec<AngularPrior>,
        draws: Vec<ChannelDraw>,
    },
}

fn write_header<W: Write>(
    w: &mut CrcWriter<W>,
    antennas: usize,
    cells: usize,
    priors: &[AngularPrior],
    count: usize,
    flags: u16,
) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.u16(VERSION)?;
    w.u16(flags)?;
    w.u32(antennas as u32)?;
    w.u32(cells as u32)?;
    w.u64(count as u64)?;
    for p in priors {
        write_prior(w, p)?;
    }
    Ok(())
}

/// Saves a full dataset (channels, observations, noise variances, and CCM
/// rows when every record carries them).
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let has_ccm = ds.records.iter().all(|r| r.ccm_rows.is_some());
    let flags = FLAG_OBSERVATIONS | if has_ccm { FLAG_CCM_ROWS } else { 0 };
    let mut w = CrcWriter::new(BufWriter::new(File::create(path)?));
    write_header(&mut w, ds.antennas, ds.cells, &ds.priors, ds.len(), flags)?;
    for r in &ds.records {
        w.complex_f32_array(&r.h1)?;
        w.complex_f32_array(&r.h_int)?;
        if has_ccm {
            for row in r.ccm_rows.as_ref().unwrap() {
                w.complex_f32_array(row)?;
            }
        }
        // the stored observation is the sum of the blocks at storage
        // resolution, so the loader's recomputed `y1 + y2` always matches
        let y_stored: Vec<Complex64> =
            r.y1.iter()
                .zip(&r.y2)
                .map(|(a, b)| {
                    Complex64::new(
                        a.re as f32 as f64 + b.re as f32 as f64,
                        a.im as f32 as f64 + b.im as f32 as f64,
                    )
                })
                .collect();
        w.complex_f32_array(&y_stored)?;
        w.complex_f32_array(&r.y1)?;
        w.complex_f32_array(&r.y2)?;
        w.f64(r.sigma_sq)?;
        w.f64(r.sigma1_sq)?;
        w.f64(r.sigma2_sq)?;
    }
    let crc = w.crc.finalize();
    w.inner.write_all(&crc.to_le_bytes())?;
    w.inner.flush()?;
    Ok(())
}

/// Saves ground-truth channels only (no observations) — the interchange
/// format consumed by [`super::ingest_external`].
pub fn save_channel_draws(
    antennas: usize,
    cells: usize,
    priors: &[AngularPrior],
    draws: &[ChannelDraw],
    path: &Path,
) -> Result<()> {
    let has_ccm = draws.iter().all(|d| d.ccm_rows.is_some());
    let flags = if has_ccm { FLAG_CCM_ROWS } else { 0 };
    let mut w = CrcWriter::new(BufWriter::new(File::create(path)?));
    write_header(&mut w, antennas, cells, priors, draws.len(), flags)?;
    for d in draws {
        w.complex_f32_array(&d.h1)?;
        w.complex_f32_array(&d.h_int)?;
        if has_ccm {
            for row in d.ccm_rows.as_ref().unwrap() {
                w.complex_f32_array(row)?;
            }
        }
    }
    let crc = w.crc.finalize();
    w.inner.write_all(&crc.to_le_bytes())?;
    w.inner.flush()?;
    Ok(())
}

/// Loads either flavor of dataset file, verifying magic, version, record
/// boundaries, observation consistency and the trailing checksum.
pub fn load_any(path: &Path) -> Result<LoadedDataset> {
    let mut r = CrcReader::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, 0)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            got: magic,
        });
    }
    let version = r.u16(0)?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            got: version,
        });
    }
    let flags = r.u16(0)?;
    let antennas = r.u32(0)? as usize;
    let cells = r.u32(0)? as usize;
    let count = r.u64(0)? as usize;
    if antennas == 0 || cells == 0 {
        return Err(Error::InvalidConfig(
            "dataset header has zero antennas or cells".into(),
        ));
    }
    let priors: Vec<AngularPrior> = (0..cells)
        .map(|_| read_prior(&mut r))
        .collect::<Result<_>>()?;
    let has_obs = flags & FLAG_OBSERVATIONS != 0;
    let has_ccm = flags & FLAG_CCM_ROWS != 0;

    let mut draws = Vec::with_capacity(count);
    let mut records = Vec::with_capacity(if has_obs { count } else { 0 });
    for i in 0..count {
        let h1 = r.complex_f32_array(antennas, i)?;
        let h_int = r.complex_f32_array(antennas, i)?;
        let ccm_rows = if has_ccm {
            let mut rows = Vec::with_capacity(cells);
            for _ in 0..cells {
                rows.push(r.complex_f32_array(antennas, i)?);
            }
            Some(rows)
        } else {
            None
        };
        if has_obs {
            let y_stored = r.complex_f32_array(antennas, i)?;
            let y1 = r.complex_f32_array(antennas, i)?;
            let y2 = r.complex_f32_array(antennas, i)?;
            let sigma_sq = r.f64(i)?;
            let sigma1_sq = r.f64(i)?;
            let sigma2_sq = r.f64(i)?;
            let y: Vec<Complex64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
            if round32(&y) != y_stored {
                return Err(Error::InvalidConfig(format!(
                    "record {i}: stored observation differs from y1 + y2"
                )));
            }
            records.push(DatasetRecord {
                h1,
                h_int,
                ccm_rows,
                y,
                y1,
                y2,
                sigma_sq,
                sigma1_sq,
                sigma2_sq,
            });
        } else {
            draws.push(ChannelDraw {
                h1,
                h_int,
                ccm_rows,
            });
        }
    }
    let computed = r.crc.finalize();
    let mut crc_bytes = [0u8; 4];
    r.inner
        .read_exact(&mut crc_bytes)
        .map_err(|_| Error::Truncated { record: count })?;
    let stored = u32::from_le_bytes(crc_bytes);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    if has_obs {
        Ok(LoadedDataset::Full(Dataset {
            antennas,
            cells,
            priors,
            records,
        }))
    } else {
        Ok(LoadedDataset::ChannelsOnly {
            antennas,
            cells,
            priors,
            draws,
        })
    }
}

/// Loads a full dataset; channels-only files must go through
/// [`super::ingest_external`] instead.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    match load_any(path)? {
        LoadedDataset::Full(ds) => Ok(ds),
        LoadedDataset::ChannelsOnly { .. } => Err(Error::InvalidConfig(
            "file contains channels only; ingest it to synthesize observations".into(),
        )),
    }
}
