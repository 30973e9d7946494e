use super::{count_u32, put_f32, put_u32, Reader};
use crate::error::Result;
use crate::featurestore::FeatureField;

const MAGIC: &[u8; 8] = b"SFVX0001";

pub fn write_sfvx(field: &FeatureField) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + field.active_count() * (6 + 4 * field.dim()));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, field.grid_side());
    put_u32(&mut out, count_u32(field.active_count(), "active voxel count")?);
    put_u32(&mut out, count_u32(field.dim(), "feature dimension")?);
    for c in field.coords() {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for t in field.tokens() {
        t.iter().for_each(|&v| put_f32(&mut out, v));
    }
    Ok(out)
}

pub fn read_sfvx(bytes: &[u8]) -> Result<FeatureField> {
    let mut r = Reader::new(bytes, "SFVX");
    r.magic(MAGIC)?;
    let side = r.u32()?;
    let active = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut coords = Vec::with_capacity(active);
    for _ in 0..active {
        coords.push([r.u16()?, r.u16()?, r.u16()?]);
    }
    let tokens = if dim == 0 {
        vec![Vec::new(); active]
    } else {
        r.f32s(active * dim)?.chunks_exact(dim).map(<[f32]>::to_vec).collect()
    };
    r.finish()?;
    FeatureField::new(side, coords, tokens)
}
