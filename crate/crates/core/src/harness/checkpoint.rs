//! Binary checkpoint: little-endian, 32-bit reals, fixed section order.
//!
//! ```text
//! "SIAM1" | u32 version | u32 len + config text
//! u32 count | count × (u32 len + name, u32 rank, rank × u32 extent, f32 data)   trainable
//! u32 count | same layout                                                       buffers
//! u8 has_backend | [f64 w, f64 b]
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};
use crate::predictor::LogisticModel;
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 5] = b"SIAM1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub params: Vec<NamedTensor>,
    pub buffers: Vec<NamedTensor>,
    pub logistic: Option<LogisticModel>,
}

fn snapshot<T: Real>(store: &ParamStore<T>, ids: impl Iterator<Item = ParamId>) -> Vec<NamedTensor> {
    ids.map(|id| {
        let t = store.get(id);
        NamedTensor {
            name: store.name(id).to_string(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
        }
    })
    .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: at,
            message: format!("{what} is not UTF-8"),
        })
    }

    fn tensors(&mut self, what: &str) -> Result<Vec<NamedTensor>> {
        let count = self.u32(what)? as usize;
        let mut out = Vec::new();
        for _ in 0..count {
            let at = self.pos;
            let name = self.string("tensor name")?;
            let rank = self.u32("tensor rank")? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::Format {
                    offset: at,
                    message: format!("tensor {name:?} has rank {rank}"),
                });
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32("tensor extent")? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &e| if e == 0 { None } else { acc.checked_mul(e) })
                .ok_or_else(|| Error::Format {
                    offset: at,
                    message: format!("tensor {name:?} has invalid shape {shape:?}"),
                })?;
            let raw = self.take(len.saturating_mul(4), "tensor data")?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            out.push(NamedTensor { name, shape, data });
        }
        Ok(out)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend((v as u32).to_le_bytes());
}

fn put_tensors(out: &mut Vec<u8>, ts: &[NamedTensor]) {
    put_u32(out, ts.len());
    for t in ts {
        put_u32(out, t.name.len());
        out.extend(t.name.as_bytes());
        put_u32(out, t.shape.len());
        for &e in &t.shape {
            put_u32(out, e);
        }
        for v in &t.data {
            out.extend(v.to_le_bytes());
        }
    }
}

impl Checkpoint {
    pub fn capture<T: Real>(config: String, store: &ParamStore<T>, logistic: Option<LogisticModel>) -> Self {
        Checkpoint {
            config,
            params: snapshot(store, store.trainable()),
            buffers: snapshot(store, store.buffers()),
            logistic,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend(VERSION.to_le_bytes());
        put_u32(&mut out, self.config.len());
        out.extend(self.config.as_bytes());
        put_tensors(&mut out, &self.params);
        put_tensors(&mut out, &self.buffers);
        match self.logistic {
            Some(m) => {
                out.push(1);
                out.extend(m.w.to_le_bytes());
                out.extend(m.b.to_le_bytes());
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5, "magic")? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, not a checkpoint".into(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 5,
                message: format!("unsupported version {version}, expected {VERSION}"),
            });
        }
        let config = r.string("config")?;
        let params = r.tensors("parameters")?;
        let buffers = r.tensors("buffers")?;
        let at = r.pos;
        let logistic = match r.take(1, "backend flag")?[0] {
            0 => None,
            1 => Some(LogisticModel {
                w: r.f64("backend slope")?,
                b: r.f64("backend intercept")?,
            }),
            other => {
                return Err(Error::Format {
                    offset: at,
                    message: format!("backend flag {other}"),
                })
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            config,
            params,
            buffers,
            logistic,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copies every saved tensor into `store`. The store is untouched unless all
    /// names and shapes match.
    pub fn restore<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let expected: Vec<ParamId> = store.trainable().chain(store.buffers()).collect();
        let saved: Vec<&NamedTensor> = self.params.iter().chain(&self.buffers).collect();
        if expected.len() != saved.len() {
            return Err(Error::config(format!(
                "checkpoint holds {} tensors, model expects {}",
                saved.len(),
                expected.len()
            )));
        }
        let mut updates = Vec::with_capacity(saved.len());
        for (&id, t) in expected.iter().zip(&saved) {
            if store.name(id) != t.name || store.get(id).shape() != t.shape.as_slice() {
                return Err(Error::config(format!(
                    "checkpoint tensor {:?} {:?} does not match model tensor {:?} {:?}",
                    t.name,
                    t.shape,
                    store.name(id),
                    store.get(id).shape()
                )));
            }
            let data = t.data.iter().map(|&v| T::of(v as f64)).collect();
            updates.push((id, Tensor::new(t.shape.clone(), data)?));
        }
        for (id, t) in updates {
            store.set(id, t)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Init, ParamRole};

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.declare("a.weight", &[2, 3], Init::HeNormal { fan_in: 3 }, ParamRole::Trainable).unwrap();
        s.declare("a.running_var", &[2], Init::Ones, ParamRole::Buffer).unwrap();
        s.init_parameters(4);
        s
    }

    #[test]
    fn bytes_round_trip() {
        let ck = Checkpoint::capture("seed = 1\n".into(), &store(), Some(LogisticModel { w: 1.25, b: -0.5 }));
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = Checkpoint::capture(String::new(), &store(), None).to_bytes();
        for cut in 0..bytes.len() {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
    }

    #[test]
    fn restore_checks_names() {
        let ck = Checkpoint::capture(String::new(), &store(), None);
        let mut other = ParamStore::<f32>::new();
        other.declare("b.weight", &[2, 3], Init::Zeros, ParamRole::Trainable).unwrap();
        other.declare("a.running_var", &[2], Init::Ones, ParamRole::Buffer).unwrap();
        assert!(ck.restore(&mut other).is_err());
        let mut same = store();
        same.init_parameters(99);
        ck.restore(&mut same).unwrap();
        assert_eq!(Checkpoint::capture(String::new(), &same, None), ck);
    }
}
