use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::params::RhmParams;
use crate::sample::{Dataset, DatasetRecord, Split};

pub const DATA_SCHEMA: &str = "rhm-data/1";
pub const ONEHOT_MAGIC: &[u8; 4] = b"RHM1";

#[derive(Serialize, Deserialize)]
struct DataMeta {
    schema: String,
    params: RhmParams,
    grammar_hash: u64,
    count: usize,
    with_derivations: bool,
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    os.into()
}

/// One JSON record per line (`tokens`, `label`, optional `derivation`,
/// `split`), plus a `<path>.meta.json` sidecar carrying the grammar reference.
pub fn export_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in &ds.records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let meta = DataMeta {
        schema: DATA_SCHEMA.to_string(),
        params: ds.params,
        grammar_hash: ds.grammar_hash,
        count: ds.records.len(),
        with_derivations: ds.records.iter().any(|r| r.derivation.is_some()),
    };
    let mut mw = BufWriter::new(File::create(meta_path(path))?);
    serde_json::to_writer_pretty(&mut mw, &meta)?;
    mw.flush()?;
    Ok(())
}

pub fn ingest_jsonl(path: &Path) -> Result<Dataset> {
    let meta_text = std::fs::read_to_string(meta_path(path))
        .map_err(|e| RhmError::Schema(format!("missing sidecar meta: {e}")))?;
    let meta: DataMeta = serde_json::from_str(&meta_text)?;
    if meta.schema != DATA_SCHEMA {
        return Err(RhmError::Schema(format!(
            "unsupported schema tag {:?}, expected {DATA_SCHEMA:?}",
            meta.schema
        )));
    }
    meta.params.validate()?;
    let d = meta.params.d();
    let v = meta.params.v;
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::with_capacity(meta.count);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| RhmError::Schema(format!("record {i}: {e}")))?;
        if rec.tokens.len() != d {
            return Err(RhmError::Schema(format!(
                "record {i}: {} tokens, expected d = {d}",
                rec.tokens.len()
            )));
        }
        if rec.tokens.iter().any(|&t| (t as usize) >= v) || (rec.label as usize) >= v {
            return Err(RhmError::Schema(format!("record {i}: symbol outside 0..{v}")));
        }
        records.push(rec);
    }
    if records.len() != meta.count {
        return Err(RhmError::Schema(format!(
            "record count {} differs from meta count {}",
            records.len(),
            meta.count
        )));
    }
    Ok(Dataset { params: meta.params, grammar_hash: meta.grammar_hash, records })
}

/// Flat binary one-hot tensor: magic bytes, little-endian `u32` header
/// `{P, d, v}`, then `P*d*v` indicator bytes in row-major order.
pub fn export_onehot(ds: &Dataset, path: &Path) -> Result<()> {
    let p = ds.records.len();
    let d = ds.params.d();
    let v = ds.params.v;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ONEHOT_MAGIC)?;
    w.write_all(&(p as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(v as u32).to_le_bytes())?;
    for rec in &ds.records {
        let seq = crate::sample::Sequence { tokens: rec.tokens.clone() };
        w.write_all(&seq.one_hot(v))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the one-hot tensor back into token sequences (labels are not part
/// of the tensor format).
pub fn ingest_onehot(path: &Path) -> Result<(u32, u32, u32, Vec<Vec<u16>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ONEHOT_MAGIC {
        return Err(RhmError::Schema("bad magic bytes".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let p = u32::from_le_bytes(buf4);
    r.read_exact(&mut buf4)?;
    let d = u32::from_le_bytes(buf4);
    r.read_exact(&mut buf4)?;
    let v = u32::from_le_bytes(buf4);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let expected = p as usize * d as usize * v as usize;
    if body.len() != expected {
        return Err(RhmError::Schema(format!(
            "tensor body has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let mut out = Vec::with_capacity(p as usize);
    for i in 0..p as usize {
        let mut seq = Vec::with_capacity(d as usize);
        for j in 0..d as usize {
            let row = &body[(i * d as usize + j) * v as usize..][..v as usize];
            if row.iter().map(|&b| b as usize).sum::<usize>() != 1 {
                return Err(RhmError::Schema(format!("row ({i},{j}) is not one-hot")));
            }
            seq.push(row.iter().position(|&b| b == 1).unwrap() as u16);
        }
        out.push(seq);
    }
    Ok((p, d, v, out))
}

#[allow(dead_code)]
fn split_label(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}
