use super::{count_u32, put_f32, put_u32, Reader};
use crate::error::Result;
use crate::meshsim::MeshGraphSequence;

const MAGIC: &[u8; 8] = b"SFMS0001";

pub fn write_sfms(seq: &MeshGraphSequence) -> Result<Vec<u8>> {
    let n = seq.node_count();
    let f = seq.feature_channels();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, count_u32(n, "node count")?);
    put_u32(&mut out, count_u32(seq.edges.len(), "edge count")?);
    put_u32(&mut out, count_u32(seq.field_channels, "field channels")?);
    put_u32(&mut out, count_u32(f, "feature channels")?);
    put_u32(&mut out, count_u32(seq.step_count(), "step count")?);
    for p in &seq.positions {
        p.iter().for_each(|&v| put_f32(&mut out, v as f32));
    }
    for e in &seq.edges {
        put_u32(&mut out, e[0]);
        put_u32(&mut out, e[1]);
    }
    if let Some(features) = &seq.features {
        for row in features {
            row.iter().for_each(|&v| put_f32(&mut out, v));
        }
    }
    for step in &seq.fields {
        step.iter().for_each(|&v| put_f32(&mut out, v as f32));
    }
    Ok(out)
}

pub fn read_sfms(bytes: &[u8]) -> Result<MeshGraphSequence> {
    let mut r = Reader::new(bytes, "SFMS");
    r.magic(MAGIC)?;
    let n = r.u32()? as usize;
    let e = r.u32()? as usize;
    let c = r.u32()? as usize;
    let f = r.u32()? as usize;
    let t = r.u32()? as usize;
    let positions = r
        .f32s(n * 3)?
        .chunks_exact(3)
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    let mut edges = Vec::with_capacity(e);
    for _ in 0..e {
        edges.push([r.u32()?, r.u32()?]);
    }
    let features = if f > 0 {
        Some(r.f32s(n * f)?.chunks_exact(f).map(<[f32]>::to_vec).collect())
    } else {
        None
    };
    let mut fields = Vec::with_capacity(t);
    for _ in 0..t {
        fields.push(r.f32s(n * c)?.into_iter().map(f64::from).collect());
    }
    r.finish()?;
    MeshGraphSequence::new(positions, edges, c, features, fields)
}
