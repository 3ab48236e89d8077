//! Versioned, checksummed binary snapshots of an [`Engine`].
//!
//! ```text
//! magic     8 bytes   "LETHESNP"
//! version   u32 LE
//! count     u32 LE    number of sections
//! section*  name_len u16 LE | name (UTF-8) | payload_len u64 LE
//!           | sha256(payload) 32 bytes | payload (JSON)
//! trailer   sha256 of every preceding byte, 32 bytes
//! ```
//!
//! The trailer is the file checksum; `Engine::content_hash` digests only
//! retrieval state. Sections are written
//! in a fixed order and every map is ordered, so equal engines produce
//! byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::deindex::{Ledger, Tombstone};
use crate::digest::sha256;
use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::text::Document;

pub const MAGIC: &[u8; 8] = b"LETHESNP";
pub const VERSION: u32 = 1;

pub const SECTIONS: [&str; 7] = ["config", "corpus", "index", "tdm", "ledger", "embeddings", "kb"];

#[derive(serde::Serialize, serde::Deserialize)]
struct Corpus {
    documents: Vec<Document>,
    deindexed: BTreeSet<String>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LedgerSection {
    ledger: Ledger,
    tombstones: BTreeMap<String, Tombstone>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EmbeddingSection {
    model: crate::embeddings::EmbeddingModel,
    doc_vectors: BTreeMap<String, Vec<f64>>,
}

fn payload<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("in-memory structures serialize")
}

/// Serialize `engine` to the snapshot byte layout.
pub fn encode(engine: &Engine) -> Vec<u8> {
    let payloads: [Vec<u8>; 7] = [
        payload(&engine.config),
        payload(&Corpus {
            documents: engine.documents.clone(),
            deindexed: engine.deindexed.clone(),
        }),
        payload(&engine.index),
        payload(&engine.tdm),
        payload(&LedgerSection {
            ledger: engine.ledger.clone(),
            tombstones: engine.tombstones.clone(),
        }),
        payload(&EmbeddingSection {
            model: engine.embeddings.clone(),
            doc_vectors: engine.doc_vectors.clone(),
        }),
        payload(&engine.kb),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(SECTIONS.len() as u32).to_le_bytes());
    for (name, body) in SECTIONS.iter().zip(&payloads) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&sha256(body));
        out.extend_from_slice(body);
    }
    let trailer = sha256(&out);
    out.extend_from_slice(&trailer);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(integrity(section, "truncated")),
        }
    }

    fn u16(&mut self, section: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, section)?.try_into().unwrap()))
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }
}

fn integrity(section: &str, detail: impl Into<String>) -> Error {
    Error::Integrity {
        section: section.to_string(),
        detail: detail.into(),
    }
}

fn parse<T: DeserializeOwned>(sections: &BTreeMap<String, &[u8]>, name: &str) -> Result<T> {
    let body = sections
        .get(name)
        .ok_or_else(|| integrity(name, "section missing"))?;
    serde_json::from_slice(body).map_err(|e| integrity(name, format!("malformed payload: {e}")))
}

/// Decode and validate a snapshot.
pub fn decode(bytes: &[u8]) -> Result<Engine> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "header")? != MAGIC {
        return Err(integrity("header", "bad magic"));
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let count = r.u32("header")?;
    let mut sections: BTreeMap<String, &[u8]> = BTreeMap::new();
    for i in 0..count {
        let label = format!("section #{i}");
        let name_len = r.u16(&label)? as usize;
        let name = std::str::from_utf8(r.take(name_len, &label)?)
            .map_err(|_| integrity(&label, "section name is not UTF-8"))?
            .to_string();
        let len = r.u64(&name)?;
        let digest = r.take(32, &name)?;
        let len = usize::try_from(len).map_err(|_| integrity(&name, "truncated"))?;
        let body = r.take(len, &name)?;
        if sha256(body) != digest {
            return Err(integrity(&name, "checksum mismatch"));
        }
        sections.insert(name, body);
    }
    let covered = r.pos;
    let trailer = r.take(32, "trailer")?;
    if r.pos != bytes.len() {
        return Err(integrity("trailer", "trailing bytes after snapshot"));
    }
    if sha256(&bytes[..covered]) != trailer {
        return Err(integrity("trailer", "checksum mismatch"));
    }

    let config: EngineConfig = parse(&sections, "config")?;
    let corpus: Corpus = parse(&sections, "corpus")?;
    let ledger: LedgerSection = parse(&sections, "ledger")?;
    let emb: EmbeddingSection = parse(&sections, "embeddings")?;
    Ok(Engine {
        config,
        documents: corpus.documents,
        deindexed: corpus.deindexed,
        index: parse(&sections, "index")?,
        tdm: parse(&sections, "tdm")?,
        embeddings: emb.model,
        doc_vectors: emb.doc_vectors,
        kb: parse(&sections, "kb")?,
        ledger: ledger.ledger,
        tombstones: ledger.tombstones,
    })
}

/// Write atomically: a sibling temp file is renamed over `path`.
pub fn save(engine: &Engine, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = encode(engine);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(hex::encode(&bytes[bytes.len() - 32..]))
}

pub fn load(path: impl AsRef<Path>) -> Result<Engine> {
    decode(&fs::read(path)?)
}

/// Hex trailer of the snapshot encoding of `engine`.
pub fn checksum(engine: &Engine) -> String {
    let bytes = encode(engine);
    hex::encode(&bytes[bytes.len() - 32..])
}
