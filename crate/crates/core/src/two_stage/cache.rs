//! Binary cache of lab tables.
//!
//! Layout, little-endian: magic, format version, `M`, `n`, config digest,
//! lab count, then per lab its id, data digest, composition count, `ln G`
//! values and `D` rows; a SHA-256 of everything before it closes the file.
//! Compositions are not stored; they are regenerated from the data, which the
//! data digest pins down.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::dtable::{config_hash, lab_hash, DTable, LabTable};
use super::{GroupedDataset, QuadConfig, TwoStageSpec};
use crate::alpha::{alpha_partition, generate_compositions};
use crate::error::{Error, Result};
use crate::subset::Subset;

const MAGIC: &[u8; 8] = b"ILCDTAB\0";
pub const CACHE_FORMAT_VERSION: u32 = 1;

pub fn write_cache(path: &Path, table: &DTable) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.universe as u32).to_le_bytes());
    buf.extend_from_slice(&(table.n as u32).to_le_bytes());
    buf.extend_from_slice(&table.config_hash);
    buf.extend_from_slice(&(table.labs.len() as u32).to_le_bytes());
    for lab in &table.labs {
        buf.extend_from_slice(&(lab.lab_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(lab.lab_id.as_bytes());
        buf.extend_from_slice(&lab.data_hash);
        buf.extend_from_slice(&(lab.num_compositions() as u64).to_le_bytes());
        for v in lab.log_g.iter().chain(&lab.d) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&digest);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CacheMismatch("file is truncated".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn hash(&mut self) -> Result<[u8; 32]> {
        Ok(self.take(32)?.try_into().unwrap())
    }
}

/// Loads tables written by [`write_cache`], rejecting them unless they were
/// built from exactly `data` under `spec` and `quad`.
pub fn read_cache(
    path: &Path,
    data: &GroupedDataset,
    spec: &TwoStageSpec,
    quad: &QuadConfig,
) -> Result<DTable> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CacheMismatch("not a table cache file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CacheMismatch("checksum does not match the contents".into()));
    }
    let mut c = Cursor {
        bytes: body,
        at: MAGIC.len(),
    };
    let version = c.u32()?;
    if version != CACHE_FORMAT_VERSION {
        return Err(Error::CacheMismatch(format!(
            "format version {version}, expected {CACHE_FORMAT_VERSION}"
        )));
    }
    let (m, n) = (c.u32()? as usize, c.u32()? as usize);
    if m != data.universe() || n != data.n() {
        return Err(Error::CacheMismatch(format!(
            "cache is for M={m}, n={n}; data has M={}, n={}",
            data.universe(),
            data.n()
        )));
    }
    if c.hash()? != config_hash(&spec.lab, quad) {
        return Err(Error::CacheMismatch(
            "cache was built with a different lab-level model or quadrature".into(),
        ));
    }
    let labs = c.u32()? as usize;
    if labs != data.num_labs() {
        return Err(Error::CacheMismatch(format!(
            "cache has {labs} laboratories; data has {}",
            data.num_labs()
        )));
    }
    let budget = quad.budget();
    let mut tables = Vec::with_capacity(labs);
    for lab in data.labs() {
        let id_len = c.u32()? as usize;
        let id = String::from_utf8(c.take(id_len)?.to_vec())
            .map_err(|_| Error::CacheMismatch("laboratory id is not UTF-8".into()))?;
        let data_hash = c.hash()?;
        if id != lab.id || data_hash != lab_hash(lab, m, n) {
            return Err(Error::CacheMismatch(format!(
                "data of laboratory {:?} does not match the cache",
                lab.id
            )));
        }
        let count = c.u64()? as usize;
        let refs: Vec<Subset> = lab.observations.iter().map(|o| o.subset).collect();
        let alpha = alpha_partition(&refs, budget.max_references)?;
        let index = generate_compositions(&alpha, n, budget.max_compositions)?;
        if index.len() != count {
            return Err(Error::CacheMismatch(format!(
                "laboratory {:?} has {} compositions, cache has {count}",
                lab.id,
                index.len()
            )));
        }
        let log_g = (0..count).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let d = (0..count * (n + 1)).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        tables.push(LabTable {
            lab_id: id,
            alpha,
            index,
            log_g,
            d,
            data_hash,
            n,
        });
    }
    if c.at != body.len() {
        return Err(Error::CacheMismatch("trailing bytes after the last table".into()));
    }
    Ok(DTable {
        universe: m,
        n,
        config_hash: config_hash(&spec.lab, quad),
        labs: tables,
    })
}
