use super::{count_u32, put_f32, put_u32, Reader};
use crate::error::{Error, Result};
use crate::nn::{AdamW, ParamStore, Tensor};
use crate::rng::digest_hex;

const MAGIC: &[u8; 8] = b"SFCK0001";

/// Records under this prefix hold optimizer moments and schedule state.
pub const OPTIMIZER_PREFIX: &str = "optim/";
/// Records under this prefix hold model metadata (normalizers and the like).
pub const META_PREFIX: &str = "meta/";

const OPT_FIRST: &str = "optim/m/";
const OPT_SECOND: &str = "optim/v/";
const OPT_STATE: &str = "optim/state";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Record {
    fn from_tensor(name: String, t: &Tensor<f32>) -> Result<Self> {
        let dims = t.shape().iter().map(|&d| count_u32(d, "tensor dimension")).collect::<Result<_>>()?;
        Ok(Self { name, dims, data: t.data().to_vec() })
    }

    fn to_tensor(&self) -> Result<Tensor<f32>> {
        Tensor::new(self.dims.iter().map(|&d| d as usize).collect(), self.data.clone())
    }
}

/// Named tensors in a fixed order: parameters, then optimizer state, then metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn from_params(store: &ParamStore<f32>) -> Result<Self> {
        let records = store
            .iter()
            .map(|p| Record::from_tensor(p.name.clone(), &p.value))
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    pub fn push_optimizer(&mut self, optimizer: &AdamW<f32>, store: &ParamStore<f32>) -> Result<()> {
        let (first, second) = optimizer.moments();
        for (p, m) in store.iter().zip(first) {
            self.records.push(Record::from_tensor(format!("{OPT_FIRST}{}", p.name), m)?);
        }
        for (p, v) in store.iter().zip(second) {
            self.records.push(Record::from_tensor(format!("{OPT_SECOND}{}", p.name), v)?);
        }
        let state: Vec<f32> = optimizer.state_vector().into_iter().map(|v| v as f32).collect();
        self.records.push(Record { name: OPT_STATE.into(), dims: vec![state.len() as u32], data: state });
        Ok(())
    }

    pub fn push_meta(&mut self, name: &str, values: Vec<f32>) {
        self.records.push(Record {
            name: format!("{META_PREFIX}{name}"),
            dims: vec![values.len() as u32],
            data: values,
        });
    }

    pub fn meta(&self, name: &str) -> Option<&[f32]> {
        let full = format!("{META_PREFIX}{name}");
        self.records.iter().find(|r| r.name == full).map(|r| r.data.as_slice())
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Parameter records only.
    pub fn parameters(&self) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .filter(|r| !r.name.starts_with(OPTIMIZER_PREFIX) && !r.name.starts_with(META_PREFIX))
    }

    /// Copy parameter values into a store with matching names and shapes.
    pub fn restore_params(&self, store: &mut ParamStore<f32>) -> Result<()> {
        let mut loaded = ParamStore::new();
        for r in self.parameters() {
            loaded.add(r.name.clone(), r.to_tensor()?)?;
        }
        store.load_values(&loaded)
    }

    pub fn restore_optimizer(&self, store: &ParamStore<f32>) -> Result<Option<AdamW<f32>>> {
        let Some(state) = self.get(OPT_STATE) else { return Ok(None) };
        let moment = |prefix: &str| -> Result<Vec<Tensor<f32>>> {
            store
                .iter()
                .map(|p| {
                    self.get(&format!("{prefix}{}", p.name))
                        .ok_or_else(|| Error::invalid_data(format!("missing optimizer moment for {:?}", p.name)))?
                        .to_tensor()
                })
                .collect()
        };
        let state: Vec<f64> = state.data.iter().map(|&v| v as f64).collect();
        AdamW::from_parts(&state, moment(OPT_FIRST)?, moment(OPT_SECOND)?).map(Some)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, count_u32(self.records.len(), "record count")?);
        for r in &self.records {
            let name = r.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::invalid_data(format!("record name {:?} too long", r.name)))?;
            let rank = u8::try_from(r.dims.len())
                .map_err(|_| Error::invalid_data(format!("record {:?} has too many dimensions", r.name)))?;
            let expected: usize = r.dims.iter().map(|&d| d as usize).product();
            if expected != r.data.len() {
                return Err(Error::invalid_data(format!("record {:?} payload does not match its dims", r.name)));
            }
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(rank);
            r.dims.iter().for_each(|&d| put_u32(&mut out, d));
            r.data.iter().for_each(|&v| put_f32(&mut out, v));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "SFCK");
        r.magic(MAGIC)?;
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::invalid_data("SFCK: record name is not UTF-8"))?;
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()?);
            }
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let data = r.f32s(n)?;
            records.push(Record { name, dims, data });
        }
        r.finish()?;
        Ok(Self { records })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> Result<String> {
        Ok(digest_hex(&self.to_bytes()?))
    }
}
