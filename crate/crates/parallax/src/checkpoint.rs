//! Versioned binary checkpoint container. Round trips are bit-exact: the
//! header carries a magic, version, dtype tag and config hash; then the
//! architecture manifest, all parameter tensors (length-prefixed
//! little-endian floats), optimizer state, stage/epoch counters, the RNG
//! state and the loss history.

use crate::error::{Error, Result};
use crate::net::{Network, NetworkConfig, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{EpochRecord, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

const MAGIC: &[u8; 8] = b"PLXCKPT\x01";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint<F: Scalar> {
    pub config_hash: String,
    pub network_config: NetworkConfig,
    pub active_stages: usize,
    pub params: Vec<Param<F>>,
    pub stage: usize,
    pub epoch: usize,
    pub velocity: Vec<Tensor<F>>,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub history: Vec<EpochRecord>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn capture(net: &Network<F>, state: &TrainState<F>, config_hash: &str) -> Self {
        Checkpoint {
            config_hash: config_hash.to_string(),
            network_config: net.config().clone(),
            active_stages: net.active_stages(),
            params: net.params().to_vec(),
            stage: state.stage,
            epoch: state.epoch,
            velocity: state.velocity.clone(),
            rng_seed: state.rng.get_seed(),
            rng_stream: state.rng.get_stream(),
            rng_word_pos: state.rng.get_word_pos(),
            history: state.history.clone(),
        }
    }

    /// Rebuilds the network and optimizer state exactly as captured.
    pub fn restore(self) -> Result<(Network<F>, TrainState<F>)> {
        let net = Network::from_parts(self.network_config, self.active_stages, self.params)?;
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        let state = TrainState {
            stage: self.stage,
            epoch: self.epoch,
            velocity: self.velocity,
            rng,
            history: self.history,
        };
        Ok((net, state))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(F::DTYPE_TAG);
        write_str(&mut out, &self.config_hash);
        let arch = toml::to_string(&self.network_config)
            .map_err(|e| Error::Format(format!("architecture serialize: {e}")))?;
        write_str(&mut out, &arch);
        write_u32(&mut out, self.active_stages as u32);
        write_u32(&mut out, self.stage as u32);
        write_u32(&mut out, self.epoch as u32);
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_stream.to_le_bytes());
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());

        write_u32(&mut out, self.params.len() as u32);
        for p in &self.params {
            write_str(&mut out, &p.name);
            write_tensor(&mut out, &p.value);
        }
        write_u32(&mut out, self.velocity.len() as u32);
        for v in &self.velocity {
            write_tensor(&mut out, v);
        }
        write_u32(&mut out, self.history.len() as u32);
        for r in &self.history {
            write_u32(&mut out, r.stage as u32);
            write_u32(&mut out, r.epoch as u32);
            out.extend_from_slice(&r.lr.to_le_bytes());
            out.extend_from_slice(&r.recons.to_le_bytes());
            out.extend_from_slice(&r.smooth.to_le_bytes());
            out.extend_from_slice(&r.total.to_le_bytes());
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path: path.display().to_string(),
        };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("{}: not a checkpoint", r.path)));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint version {version}",
                r.path
            )));
        }
        let tag = r.take(1)?[0];
        if tag != F::DTYPE_TAG {
            return Err(Error::Format(format!(
                "{}: checkpoint holds {}-byte floats, this build reads {}-byte",
                r.path, tag, F::DTYPE_TAG
            )));
        }
        let config_hash = r.string()?;
        let arch = r.string()?;
        let network_config: NetworkConfig = toml::from_str(&arch)
            .map_err(|e| Error::Format(format!("{}: architecture manifest: {e}", r.path)))?;
        let active_stages = r.u32()? as usize;
        let stage = r.u32()? as usize;
        let epoch = r.u32()? as usize;
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(r.take(32)?);
        let rng_stream = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let rng_word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());

        let n_params = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = r.string()?;
            let value = r.tensor::<F>()?;
            params.push(Param { name, value });
        }
        let n_vel = r.u32()? as usize;
        let mut velocity = Vec::with_capacity(n_vel);
        for _ in 0..n_vel {
            velocity.push(r.tensor::<F>()?);
        }
        let n_hist = r.u32()? as usize;
        let mut history = Vec::with_capacity(n_hist);
        for _ in 0..n_hist {
            history.push(EpochRecord {
                stage: r.u32()? as usize,
                epoch: r.u32()? as usize,
                lr: r.f64()?,
                recons: r.f64()?,
                smooth: r.f64()?,
                total: r.f64()?,
            });
        }
        Ok(Checkpoint {
            config_hash,
            network_config,
            active_stages,
            params,
            stage,
            epoch,
            velocity,
            rng_seed,
            rng_stream,
            rng_word_pos,
            history,
        })
    }
}

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn write_tensor<F: Scalar>(out: &mut Vec<u8>, t: &Tensor<F>) {
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        write_u32(out, d as u32);
    }
    write_u32(out, t.numel() as u32);
    for &v in t.data() {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format(format!("{}: truncated checkpoint", self.path)))?;
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format(format!("{}: malformed string", self.path)))
    }

    fn tensor<F: Scalar>(&mut self) -> Result<Tensor<F>> {
        let ndim = self.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32()? as usize);
        }
        let numel = self.u32()? as usize;
        if numel != shape.iter().product::<usize>() {
            return Err(Error::Format(format!(
                "{}: tensor shape/length mismatch",
                self.path
            )));
        }
        let raw = self.take(numel * F::BYTES)?;
        let data = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
        Tensor::from_vec(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkConfig;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_bitwise_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = Network::<f32>::build(NetworkConfig::desk(1), &mut rng).unwrap();
        net.grow_stage().unwrap();
        let mut state = TrainState::new(ChaCha8Rng::seed_from_u64(5));
        state.sync_with(&net);
        state.stage = 1;
        state.epoch = 17;
        state.history.push(EpochRecord {
            stage: 0,
            epoch: 1,
            lr: 0.01,
            recons: 0.5,
            smooth: 0.1,
            total: 0.501,
        });

        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let ckpt = Checkpoint::capture(&net, &state, "hash123");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::<f32>::load(&path).unwrap();
        assert_eq!(loaded.config_hash, "hash123");
        assert_eq!(loaded.params.len(), net.params().len());
        for (a, b) in loaded.params.iter().zip(net.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
        let path2 = dir.path().join("t2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );

        let (net2, state2) = Checkpoint::<f32>::load(&path).unwrap().restore().unwrap();
        assert_eq!(net2.active_stages(), 1);
        assert_eq!(state2.stage, 1);
        assert_eq!(state2.epoch, 17);
        assert_eq!(state2.history, state.history);
        for (a, b) in net2.params().iter().zip(net.params()) {
            assert_eq!(a.value.data(), b.value.data());
        }
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::<f32>::build(NetworkConfig::desk(1), &mut rng).unwrap();
        let state = TrainState::new(ChaCha8Rng::seed_from_u64(2));
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        Checkpoint::capture(&net, &state, "h").save(&path).unwrap();
        assert!(Checkpoint::<f64>::load(&path).is_err());
    }
}
