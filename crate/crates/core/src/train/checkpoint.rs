//! Single-file binary checkpoints.
//!
//! Layout (little endian): magic, `u32` version, `u32`-length-prefixed
//! `key=value` header text, `u32` tensor count, then per tensor a
//! `u32`-prefixed name, `u8` rank, `u64` dims and raw `f64` values. An
//! optional Adam section follows: `u8` flag, `u64` step, `u64` skip count,
//! then first and second moments in tensor order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Shape, Tensor};

use super::optim::Adam;

const MAGIC: &[u8; 8] = b"MEMSUMCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
    pub optimizer: Option<Adam>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    /// Snapshot of every parameter in registration order.
    pub fn capture(store: &ParamStore, header: BTreeMap<String, String>, optimizer: Option<&Adam>) -> Self {
        Checkpoint {
            header,
            tensors: store.ids().map(|id| (store.name(id).to_string(), store.get(id).clone())).collect(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header: String = self.header.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_str(&mut out, &header);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            match t.shape() {
                Shape::Vector(n) => {
                    out.push(1);
                    out.extend_from_slice(&(n as u64).to_le_bytes());
                }
                Shape::Matrix(r, c) => {
                    out.push(2);
                    out.extend_from_slice(&(r as u64).to_le_bytes());
                    out.extend_from_slice(&(c as u64).to_le_bytes());
                }
            }
            put_f64s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                out.extend_from_slice(&adam.t.to_le_bytes());
                out.extend_from_slice(&adam.skipped.to_le_bytes());
                for (m, v) in adam.m.iter().zip(&adam.v) {
                    put_f64s(&mut out, m);
                    put_f64s(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let mut header = BTreeMap::new();
        for line in r.string()?.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| corrupt(format!("bad header line {line:?}")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let shape = match r.u8()? {
                1 => Shape::Vector(r.len()?),
                2 => Shape::Matrix(r.len()?, r.len()?),
                k => return Err(corrupt(format!("tensor {name}: bad rank {k}"))),
            };
            let data = r.f64s(shape.len())?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let t = r.u64()?;
                let skipped = r.u64()?;
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for (_, x) in &tensors {
                    m.push(r.f64s(x.len())?);
                    v.push(r.f64s(x.len())?);
                }
                Some(Adam {
                    t,
                    skipped,
                    m,
                    v,
                    ..Adam::new(&ParamStore::new())
                })
            }
            k => return Err(corrupt(format!("bad optimizer flag {k}"))),
        };
        if r.pos != buf.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Checkpoint {
            header,
            tensors,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Copies tensors into `store` by name; every store parameter must be
    /// present with the same shape.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        let by_name: BTreeMap<&str, &Tensor> = self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let t = by_name.get(name.as_str()).ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
            if t.shape() != store.get(id).shape() {
                return Err(corrupt(format!(
                    "tensor {name}: shape {} in file, {} in model",
                    t.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = (*t).clone();
        }
        if by_name.len() != store.len() {
            return Err(corrupt(format!("{} tensors in file, {} in model", by_name.len(), store.len())));
        }
        Ok(())
    }

    /// Optimizer state, if present and aligned with `store`.
    pub fn optimizer_for(&self, store: &ParamStore) -> Option<Adam> {
        let adam = self.optimizer.as_ref()?;
        let aligned = self.tensors.len() == store.len()
            && store.ids().zip(&self.tensors).all(|(id, (n, _))| store.name(id) == n);
        aligned.then(|| adam.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ParamStore, Checkpoint) {
        let mut store = ParamStore::new();
        store.add("a", Tensor::vector(vec![1.0, -2.5])).unwrap();
        store.add("b", Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap()).unwrap();
        let mut adam = Adam::new(&store);
        adam.t = 3;
        adam.m[0] = vec![0.5, 0.25];
        let header = BTreeMap::from([("variant".to_string(), "improved".to_string())]);
        let ck = Checkpoint::capture(&store, header, Some(&adam));
        (store, ck)
    }

    #[test]
    fn byte_round_trip() {
        let (_, ck) = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.header_value("variant"), Some("improved"));
    }

    #[test]
    fn restore_by_name_and_shape() {
        let (mut store, ck) = sample();
        store.get_mut(store.find("a").unwrap()).data_mut()[0] = 99.0;
        ck.restore(&mut store).unwrap();
        assert_eq!(store.get(store.find("a").unwrap()).data()[0], 1.0);
        assert!(ck.optimizer_for(&store).is_some());

        let mut other = ParamStore::new();
        other.add("a", Tensor::vector(vec![0.0; 3])).unwrap();
        assert!(ck.restore(&mut other).is_err());
    }

    #[test]
    fn corrupt_files_rejected() {
        let (_, ck) = sample();
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
