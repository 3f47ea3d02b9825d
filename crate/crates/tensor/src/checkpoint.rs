//! Binary tensor container.
//!
//! Layout (all integers little-endian):
//!   magic   b"BMOS"
//!   version u32 (currently 1)
//!   records, each:
//!     name_len u32
//!     name     UTF-8 bytes
//!     rank     u32
//!     shape    rank x u64
//!     payload  product(shape) x f64
//!
//! Records run to end-of-file. Truncation or garbage mid-record reports the
//! offending record by name.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};

pub const MAGIC: [u8; 4] = *b"BMOS";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_records(path: &Path, records: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, shape, data) in records {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Checkpoint {
                record: name.clone(),
                message: format!("shape {:?} does not match {} values", shape, data.len()),
            });
        }
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact_ctx(&mut r, &mut magic, "<header>", "magic")?;
    if magic != MAGIC {
        return Err(TensorError::Checkpoint {
            record: "<header>".into(),
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = read_u32(&mut r, "<header>", "version")?;
    if version != VERSION {
        return Err(TensorError::Checkpoint {
            record: "<header>".into(),
            message: format!("unsupported version {version}"),
        });
    }

    let mut records = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read(&mut len_buf)? {
            0 => break, // clean end of file
            4 => {}
            k => {
                // partial length word: finish reading to report precisely
                let mut rest = vec![0u8; 4 - k];
                if r.read(&mut rest)? != rest.len() {
                    return Err(TensorError::Checkpoint {
                        record: format!("<record {}>", records.len()),
                        message: "truncated name length".into(),
                    });
                }
                len_buf[k..].copy_from_slice(&rest);
            }
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact_ctx(
            &mut r,
            &mut name_bytes,
            &format!("<record {}>", records.len()),
            "name",
        )?;
        let name = String::from_utf8(name_bytes).map_err(|_| TensorError::Checkpoint {
            record: format!("<record {}>", records.len()),
            message: "name is not valid UTF-8".into(),
        })?;
        let rank = read_u32(&mut r, &name, "rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact_ctx(&mut r, &mut b, &name, "shape")?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut payload = vec![0u8; numel * 8];
        read_exact_ctx(&mut r, &mut payload, &name, "payload")?;
        for chunk in payload.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        records.push(Record { name, shape, data });
    }
    Ok(records)
}

fn read_u32(r: &mut impl Read, record: &str, field: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_ctx(r, &mut b, record, field)?;
    Ok(u32::from_le_bytes(b))
}

fn read_exact_ctx(r: &mut impl Read, buf: &mut [u8], record: &str, field: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| TensorError::Checkpoint {
        record: record.to_string(),
        message: format!("truncated {field}: {e}"),
    })
}
