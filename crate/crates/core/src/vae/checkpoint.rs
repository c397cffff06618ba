//! Versioned checkpoint format ("MCVA"): model configuration, parameters,
//! optimizer state, training progress and the best validation weights, with
//! a trailing CRC32. Little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::format::Crc32;

use super::adam::{AdamHyperParams, AdamState};
use super::train::{EarlyStopping, TrainSchedule, Trainer};
use super::{ModelConfig, ModelParams, VaeModel};

const MAGIC: [u8; 4] = *b"MCVA";
const VERSION: u16 = 1;

struct W<'a, T: Write> {
    inner: &'a mut T,
    crc: Crc32,
}

impl<'a, T: Write> W<'a, T> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.crc.update(b);
        self.inner.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u16(&mut self, v: u16) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64_slice(&mut self, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.bytes(&buf)
    }
}

struct R<T: Read> {
    inner: T,
    crc: Crc32,
}

impl<T: Read> R<T> {
    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::Truncated { record: 0 })?;
        self.crc.update(buf);
        Ok(())
    }
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.bytes(&mut b)?;
        Ok(b[0])
    }
    fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.bytes(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64_vec(&mut self, len: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        self.bytes(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Persists the full trainer state (resumable).
pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    let mut w = W {
        inner: &mut file,
        crc: Crc32::new(),
    };
    w.bytes(&MAGIC)?;
    w.u16(VERSION)?;

    let cfg = &trainer.model.config;
    w.u32(cfg.antennas as u32)?;
    w.u8(cfg.num_blocks as u8)?;
    w.u32(cfg.latent_dim as u32)?;
    w.u32(cfg.kernel as u32)?;
    w.u8(cfg.genie as u8)?;
    w.u64(cfg.init_seed)?;
    w.u8(cfg.enc_channels.len() as u8)?;
    for &c in &cfg.enc_channels {
        w.u32(c as u32)?;
    }
    for &c in &cfg.dec_channels {
        w.u32(c as u32)?;
    }

    let s = &trainer.schedule;
    w.f64(s.lr)?;
    w.u32(s.batch_size as u32)?;
    w.u32(s.patience as u32)?;
    w.u32(s.max_epochs as u32)?;
    w.u64(s.seed)?;
    w.f64(s.lr_decay_factor)?;
    w.u8(s.lr_decay_epochs.len() as u8)?;
    for &e in &s.lr_decay_epochs {
        w.u32(e as u32)?;
    }

    w.u64(trainer.epoch as u64)?;
    w.f64(trainer.early.best())?;
    w.u64(trainer.early.epochs_since_improvement() as u64)?;

    let params = &trainer.model.params.values;
    w.u64(params.len() as u64)?;
    w.f64_slice(params)?;
    w.u64(trainer.adam.step)?;
    w.f64(trainer.adam.hp.beta1)?;
    w.f64(trainer.adam.hp.beta2)?;
    w.f64(trainer.adam.hp.epsilon)?;
    w.f64_slice(&trainer.adam.m)?;
    w.f64_slice(&trainer.adam.v)?;
    w.f64_slice(trainer.best_params())?;

    let crc = w.crc.finalize();
    file.write_all(&crc.to_le_bytes())?;
    file.flush()?;
    Ok(())
}

/// Restores a trainer from a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let mut r = R {
        inner: BufReader::new(File::open(path)?),
        crc: Crc32::new(),
    };
    let mut magic = [0u8; 4];
    r.bytes(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            got: magic,
        });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            got: version,
        });
    }

    let antennas = r.u32()? as usize;
    let num_blocks = r.u8()? as usize;
    let latent_dim = r.u32()? as usize;
    let kernel = r.u32()? as usize;
    let genie = r.u8()? != 0;
    let init_seed = r.u64()?;
    let stages = r.u8()? as usize;
    let mut enc_channels = Vec::with_capacity(stages);
    for _ in 0..stages {
        enc_channels.push(r.u32()? as usize);
    }
    let mut dec_channels = Vec::with_capacity(stages);
    for _ in 0..stages {
        dec_channels.push(r.u32()? as usize);
    }
    let config = ModelConfig {
        antennas,
        num_blocks,
        latent_dim,
        enc_channels,
        dec_channels,
        kernel,
        genie,
        init_seed,
    };

    let lr = r.f64()?;
    let batch_size = r.u32()? as usize;
    let patience = r.u32()? as usize;
    let max_epochs = r.u32()? as usize;
    let seed = r.u64()?;
    let lr_decay_factor = r.f64()?;
    let n_decay = r.u8()? as usize;
    let mut lr_decay_epochs = Vec::with_capacity(n_decay);
    for _ in 0..n_decay {
        lr_decay_epochs.push(r.u32()? as usize);
    }
    let schedule = TrainSchedule {
        lr,
        batch_size,
        patience,
        max_epochs,
        seed,
        lr_decay_epochs,
        lr_decay_factor,
    };

    let epoch = r.u64()? as usize;
    let best_val = r.f64()?;
    let since = r.u64()? as usize;

    let count = r.u64()? as usize;
    let values = r.f64_vec(count)?;
    let adam_step = r.u64()?;
    let hp = AdamHyperParams {
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let m = r.f64_vec(count)?;
    let v = r.f64_vec(count)?;
    let best_params = r.f64_vec(count)?;

    let computed = r.crc.finalize();
    let mut crc_bytes = [0u8; 4];
    r.inner
        .read_exact(&mut crc_bytes)
        .map_err(|_| Error::Truncated { record: 0 })?;
    let stored = u32::from_le_bytes(crc_bytes);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let model = VaeModel::from_parts(config, ModelParams { values })?;
    if best_params.len() != model.param_count() || m.len() != model.param_count() {
        return Err(Error::ShapeMismatch(
            "checkpoint parameter blocks disagree with the architecture".into(),
        ));
    }
    let adam = AdamState {
        step: adam_step,
        m,
        v,
        hp,
    };
    Ok(Trainer::from_parts(
        model,
        schedule,
        adam,
        epoch,
        EarlyStopping::resume(best_val, since),
        best_params,
    ))
}
