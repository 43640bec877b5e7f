//! Flat binary weight container.
//!
//! Layout, all little-endian: magic `SALF`, `u32` version, then records until
//! end of stream. Each record is `u32` name length, UTF-8 name bytes, `u32`
//! rank, `rank` x `u32` dims, and the payload as `f32` values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::ParamStore;

pub const MAGIC: [u8; 4] = *b"SALF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"SALF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("record `{name}`: {msg}")]
    Record { name: String, msg: String },
    #[error("parameter `{0}` missing from weights file")]
    Missing(String),
    #[error("weights file has unknown parameter `{0}`")]
    Unexpected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub payload: Vec<f32>,
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for r in records {
        w.write_all(&(r.name.len() as u32).to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        w.write_all(&(r.dims.len() as u32).to_le_bytes())?;
        for d in &r.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &r.payload {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a `u32`, or `None` on a clean end of stream.
fn read_u32_or_eof<R: Read>(r: &mut R) -> io::Result<Option<u32>> {
    let mut b = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut b[filled..])?;
        if n == 0 {
            return if filled == 0 {
                Ok(None)
            } else {
                Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated record header"))
            };
        }
        filled += n;
    }
    Ok(Some(u32::from_le_bytes(b)))
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>, WeightsError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(WeightsError::BadMagic(magic));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(WeightsError::Version(version));
    }
    let mut out = Vec::new();
    while let Some(len) = read_u32_or_eof(&mut r)? {
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| WeightsError::Record {
            name: String::from_utf8_lossy(e.as_bytes()).into_owned(),
            msg: "name is not UTF-8".into(),
        })?;
        let rank = read_u32(&mut r)?;
        let dims = (0..rank).map(|_| read_u32(&mut r)).collect::<io::Result<Vec<_>>>()?;
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let payload = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push(Record { name, dims, payload });
    }
    Ok(out)
}

pub fn store_records(store: &ParamStore) -> Vec<Record> {
    store
        .iter()
        .map(|(_, p)| Record {
            name: p.name.clone(),
            dims: p.value.shape().iter().map(|&d| d as u32).collect(),
            payload: p.value.data().iter().map(|&v| v as f32).collect(),
        })
        .collect()
}

pub fn save(store: &ParamStore, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    let w = BufWriter::new(File::create(path)?);
    write_records(w, &store_records(store))?;
    Ok(())
}

/// Overwrites every parameter of `store` from `records`. Names and shapes must
/// match exactly in both directions.
pub fn apply_records(store: &mut ParamStore, records: &[Record]) -> Result<(), WeightsError> {
    for r in records {
        if store.id(&r.name).is_none() {
            return Err(WeightsError::Unexpected(r.name.clone()));
        }
    }
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.get(id).name.clone();
        let rec = records.iter().find(|r| r.name == name).ok_or_else(|| WeightsError::Missing(name.clone()))?;
        let shape: Vec<u32> = store.get(id).value.shape().iter().map(|&d| d as u32).collect();
        if rec.dims != shape {
            return Err(WeightsError::Record {
                name,
                msg: format!("dims {:?} do not match parameter shape {:?}", rec.dims, shape),
            });
        }
        let data = rec.payload.iter().map(|&v| v as f64).collect();
        store.set_value(&name, data).map_err(|e| WeightsError::Record { name: name.clone(), msg: e.to_string() })?;
    }
    Ok(())
}

pub fn load_into(store: &mut ParamStore, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    let records = read_records(BufReader::new(File::open(path)?))?;
    apply_records(store, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn records_round_trip(
            recs in proptest::collection::vec(
                ("[a-z.0-9]{1,12}", proptest::collection::vec(1u32..4, 0..4)),
                0..5,
            ),
            seed in any::<u32>(),
        ) {
            let records: Vec<Record> = recs
                .into_iter()
                .enumerate()
                .map(|(i, (name, dims))| {
                    let n: u32 = dims.iter().product();
                    Record {
                        name: format!("{name}{i}"),
                        payload: (0..n).map(|k| (k as f32 + seed as f32) * 0.37).collect(),
                        dims,
                    }
                })
                .collect();
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            prop_assert_eq!(read_records(&buf[..]).unwrap(), records);
        }
    }

    #[test]
    fn header_layout() {
        let rec = Record { name: "ab".into(), dims: vec![2], payload: vec![1.0, -2.0] };
        let mut buf = Vec::new();
        write_records(&mut buf, &[rec]).unwrap();
        assert_eq!(&buf[..4], b"SALF");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..14], b"ab");
        assert_eq!(&buf[14..18], &1u32.to_le_bytes());
        assert_eq!(&buf[18..22], &2u32.to_le_bytes());
        assert_eq!(&buf[22..26], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 30);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read_records(&b"SALX\x01\0\0\0"[..]), Err(WeightsError::BadMagic(_))));
        assert!(matches!(read_records(&b"SALF\x02\0\0\0"[..]), Err(WeightsError::Version(2))));
        assert!(read_records(&b"SALF\x01\0\0\0\x05\0"[..]).is_err());
    }
}
