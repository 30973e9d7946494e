use super::{count_u32, put_f32, put_u32, Reader};
use crate::error::{Error, Result};
use crate::featurestore::LabeledCloud;
use crate::geometry::{PointCloud, Vec3};

const MAGIC: &[u8; 8] = b"SFPC0001";
const HAS_NORMALS: u8 = 1;
const HAS_POINT_LABELS: u8 = 1 << 1;
const HAS_OBJECT_LABEL: u8 = 1 << 2;

pub fn write_sfpc(obj: &LabeledCloud) -> Result<Vec<u8>> {
    let n = obj.cloud.count();
    let dim = obj.feature_dim();
    let mut out = Vec::with_capacity(24 + n * (6 + dim) * 4 + n + 1);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, count_u32(n, "point count")?);
    put_u32(&mut out, count_u32(dim, "feature dimension")?);
    let mut flags = 0;
    if obj.cloud.normals().is_some() {
        flags |= HAS_NORMALS;
    }
    if obj.point_labels.is_some() {
        flags |= HAS_POINT_LABELS;
    }
    if obj.object_label.is_some() {
        flags |= HAS_OBJECT_LABEL;
    }
    out.extend_from_slice(&[flags, 0, 0, 0]);
    for p in obj.cloud.positions() {
        p.iter().for_each(|&v| put_f32(&mut out, v as f32));
    }
    if let Some(normals) = obj.cloud.normals() {
        for p in normals {
            p.iter().for_each(|&v| put_f32(&mut out, v as f32));
        }
    }
    if let Some(features) = &obj.features {
        for row in features {
            row.iter().for_each(|&v| put_f32(&mut out, v));
        }
    }
    if let Some(labels) = &obj.point_labels {
        out.extend_from_slice(labels);
    }
    if let Some(label) = obj.object_label {
        out.push(label);
    }
    Ok(out)
}

fn vec3s(r: &mut Reader<'_>, n: usize) -> Result<Vec<Vec3>> {
    Ok(r.f32s(n * 3)?
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect())
}

pub fn read_sfpc(bytes: &[u8]) -> Result<LabeledCloud> {
    let mut r = Reader::new(bytes, "SFPC");
    r.magic(MAGIC)?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let flags = r.u8()?;
    if flags & !(HAS_NORMALS | HAS_POINT_LABELS | HAS_OBJECT_LABEL) != 0 {
        return Err(Error::invalid_data(format!("SFPC: unknown flag bits {flags:#04x}")));
    }
    if r.take(3)? != [0, 0, 0] {
        return Err(Error::invalid_data("SFPC: non-zero padding"));
    }
    let positions = vec3s(&mut r, n)?;
    let normals = if flags & HAS_NORMALS != 0 { Some(vec3s(&mut r, n)?) } else { None };
    let features = if dim > 0 {
        Some(r.f32s(n * dim)?.chunks_exact(dim).map(<[f32]>::to_vec).collect())
    } else {
        None
    };
    let point_labels = if flags & HAS_POINT_LABELS != 0 { Some(r.take(n)?.to_vec()) } else { None };
    let object_label = if flags & HAS_OBJECT_LABEL != 0 { Some(r.u8()?) } else { None };
    r.finish()?;
    LabeledCloud::new(PointCloud::new(positions, normals)?, features, point_labels, object_label)
}
