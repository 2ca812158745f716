use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Boundary, GridDataset, QuantityDecl};
use crate::error::{CtsrError, Result};

const MAGIC: &[u8; 8] = b"CTSRGRID";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    endianness: String,
    spatial_dim: usize,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    dt: f64,
    times: usize,
    boundary: Vec<Boundary>,
    quantities: Vec<QuantityDecl>,
    /// Field names in payload order.
    fields: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// Layout: magic, u64 little-endian header length, JSON header, then every
/// field's values as little-endian f64 in manifest order, snapshot-major.
pub fn save_dataset(ds: &GridDataset, path: impl AsRef<Path>) -> Result<()> {
    ds.validate()?;
    let header = Header {
        format_version: FORMAT_VERSION,
        endianness: "little".into(),
        spatial_dim: ds.spatial_dim,
        shape: ds.shape.clone(),
        spacing: ds.spacing.clone(),
        dt: ds.dt,
        times: ds.times,
        boundary: ds.boundary.clone(),
        quantities: ds.quantities.clone(),
        fields: ds.fields.keys().cloned().collect(),
        metadata: ds.metadata.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for values in ds.fields.values() {
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<GridDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| CtsrError::Format("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(CtsrError::Format("not a grid dataset (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| CtsrError::Format("file too short for header".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| CtsrError::Format(format!("header truncated (expected {len} bytes)")))?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| CtsrError::Format(format!("malformed header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CtsrError::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.endianness != "little" {
        return Err(CtsrError::Format(format!(
            "unsupported endianness `{}`",
            header.endianness
        )));
    }

    let mut ds = GridDataset {
        spatial_dim: header.spatial_dim,
        shape: header.shape,
        spacing: header.spacing,
        dt: header.dt,
        times: header.times,
        boundary: header.boundary,
        quantities: header.quantities,
        fields: IndexMap::new(),
        metadata: header.metadata,
    };
    ds.validate()?;

    let per_field = ds.points() * ds.times;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = per_field * header.fields.len() * 8;
    if payload.len() != expected {
        return Err(CtsrError::Format(format!(
            "payload size mismatch: header describes {} fields of {:?} x {} snapshots ({expected} bytes), found {} bytes",
            header.fields.len(),
            ds.shape,
            ds.times,
            payload.len()
        )));
    }
    for (name, chunk) in header.fields.into_iter().zip(payload.chunks_exact(per_field * 8)) {
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        if ds.fields.insert(name.clone(), values).is_some() {
            return Err(CtsrError::Format(format!("duplicate field `{name}`")));
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ComponentKey;

    fn dataset(n: usize) -> GridDataset {
        let mut ds = GridDataset::new(vec![n, n], vec![0.1, 0.2], 0.02, 3, vec![Boundary::Periodic, Boundary::Clamped]).unwrap();
        ds.declare(QuantityDecl::new("u", 1));
        for c in 0..2u8 {
            let values = (0..ds.points() * 3).map(|i| (i as f64 * 0.37 + c as f64).sin()).collect();
            ds.insert(&ComponentKey::new("u", &[c]), values).unwrap();
        }
        ds.metadata.insert("seed".into(), "7".into());
        ds
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ctsr");
        let mut ds = dataset(8);
        ds.fields.get_mut("u.0").unwrap()[3] = -0.0;
        ds.fields.get_mut("u.1").unwrap()[5] = f64::MIN_POSITIVE / 3.0;
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.shape, ds.shape);
        for (a, b) in ds.fields.values().zip(back.fields.values()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ctsr");
        save_dataset(&dataset(8), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("payload size mismatch"), "{err}");
    }

    #[test]
    fn header_shape_disagrees_with_payload() {
        let dir = tempfile::tempdir().unwrap();
        let small = dir.path().join("small.ctsr");
        save_dataset(&dataset(32), &small).unwrap();
        let bytes = std::fs::read(&small).unwrap();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[16..16 + len]).unwrap().replace("[32,32]", "[64,64]");
        let mut forged = Vec::new();
        forged.extend_from_slice(MAGIC);
        forged.extend_from_slice(&(header.len() as u64).to_le_bytes());
        forged.extend_from_slice(header.as_bytes());
        forged.extend_from_slice(&bytes[16 + len..]);
        let path = dir.path().join("forged.ctsr");
        std::fs::write(&path, forged).unwrap();
        assert!(load_dataset(&path).unwrap_err().to_string().contains("payload size mismatch"));
    }

    #[test]
    fn malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ctsr");
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&5u64.to_le_bytes());
        bytes.extend_from_slice(b"{oops");
        std::fs::write(&path, bytes).unwrap();
        assert!(load_dataset(&path).unwrap_err().to_string().contains("malformed header"));
        std::fs::write(&path, b"NOTAGRID").unwrap();
        assert!(load_dataset(&path).unwrap_err().to_string().contains("bad magic"));
    }
}
