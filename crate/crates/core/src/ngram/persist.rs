//! Binary index file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "MIANGRAM" | version u32 | backend u8 (0 bloom, 1 exact) | n u32
//! shard_count u32 | target_fpr f64 | item_count_estimate u64
//! tokenizer_tag (u32 len, utf-8) | doc id count u64, each (u32 len, utf-8)
//! per shard header:  bloom: bit_len u64, hash_count u32, inserted u64
//!                    exact: entry_count u64
//! per shard body:    bloom: ceil(bit_len / 64) u64 words
//!                    exact: entries in sorted order, each (u32 len, utf-8)
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{BloomShard, NgramIndex, Shards};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MIANGRAM";
const VERSION: u32 = 1;

pub fn write_index(idx: &NgramIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(idx, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_index(path: impl AsRef<Path>) -> Result<NgramIndex> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(&mut BufReader::new(file)).map_err(|e| match e {
        DecodeError::Io(e) if e.kind() == io::ErrorKind::UnexpectedEof => Error::IndexFormat {
            path: path.to_owned(),
            message: "truncated file".into(),
        },
        DecodeError::Io(e) => Error::io(path, e),
        DecodeError::Format(message) => Error::IndexFormat {
            path: path.to_owned(),
            message,
        },
    })
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn encode(idx: &NgramIndex, w: &mut impl Write) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u8(match idx.shards {
        Shards::Bloom(_) => 0,
        Shards::Exact(_) => 1,
    })?;
    w.write_u32::<LE>(idx.n as u32)?;
    w.write_u32::<LE>(idx.shard_count() as u32)?;
    w.write_f64::<LE>(idx.target_fpr)?;
    w.write_u64::<LE>(idx.item_count_estimate)?;
    write_str(w, &idx.tokenizer_tag)?;
    w.write_u64::<LE>(idx.doc_ids.len() as u64)?;
    for id in &idx.doc_ids {
        write_str(w, id)?;
    }
    match &idx.shards {
        Shards::Bloom(shards) => {
            for s in shards {
                w.write_u64::<LE>(s.bit_len)?;
                w.write_u32::<LE>(s.hash_count)?;
                w.write_u64::<LE>(s.inserted)?;
            }
            for s in shards {
                for &word in &s.words {
                    w.write_u64::<LE>(word)?;
                }
            }
        }
        Shards::Exact(sets) => {
            for s in sets {
                w.write_u64::<LE>(s.len() as u64)?;
            }
            for s in sets {
                let mut entries: Vec<&str> = s.iter().map(|e| &**e).collect();
                entries.sort_unstable();
                for e in entries {
                    write_str(w, e)?;
                }
            }
        }
    }
    Ok(())
}

enum DecodeError {
    Io(io::Error),
    Format(String),
}

impl From<io::Error> for DecodeError {
    fn from(e: io::Error) -> Self {
        DecodeError::Io(e)
    }
}

fn read_str(r: &mut impl Read) -> Result<String, DecodeError> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| DecodeError::Format("invalid utf-8 string".into()))
}

fn decode(r: &mut impl Read) -> Result<NgramIndex, DecodeError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DecodeError::Format("bad magic; not an n-gram index".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(DecodeError::Format(format!("unsupported version {version}")));
    }
    let backend = r.read_u8()?;
    let n = r.read_u32::<LE>()? as usize;
    let shard_count = r.read_u32::<LE>()? as usize;
    let target_fpr = r.read_f64::<LE>()?;
    let item_count_estimate = r.read_u64::<LE>()?;
    if n == 0 || shard_count == 0 {
        return Err(DecodeError::Format("n and shard_count must be positive".into()));
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(DecodeError::Format(format!("invalid target_fpr {target_fpr}")));
    }
    let tokenizer_tag = read_str(r)?;
    let doc_count = r.read_u64::<LE>()?;
    let doc_ids = (0..doc_count).map(|_| read_str(r)).collect::<Result<Vec<_>, _>>()?;

    let shards = match backend {
        0 => {
            let mut headers = Vec::with_capacity(shard_count);
            for _ in 0..shard_count {
                let bit_len = r.read_u64::<LE>()?;
                let hash_count = r.read_u32::<LE>()?;
                let inserted = r.read_u64::<LE>()?;
                if bit_len == 0 || hash_count == 0 {
                    return Err(DecodeError::Format("empty bloom shard header".into()));
                }
                headers.push((bit_len, hash_count, inserted));
            }
            let mut shards = Vec::with_capacity(shard_count);
            for (bit_len, hash_count, inserted) in headers {
                let mut s = BloomShard::with_params(bit_len, hash_count);
                r.read_u64_into::<LE>(&mut s.words)?;
                s.inserted = inserted;
                shards.push(s);
            }
            Shards::Bloom(shards)
        }
        1 => {
            let counts = (0..shard_count)
                .map(|_| r.read_u64::<LE>())
                .collect::<io::Result<Vec<_>>>()?;
            let mut sets = Vec::with_capacity(shard_count);
            for c in counts {
                let mut set = HashSet::with_capacity(c as usize);
                for _ in 0..c {
                    set.insert(read_str(r)?.into_boxed_str());
                }
                sets.push(set);
            }
            Shards::Exact(sets)
        }
        other => return Err(DecodeError::Format(format!("unknown backend tag {other}"))),
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DecodeError::Format("trailing bytes after shard data".into()));
    }
    Ok(NgramIndex {
        n,
        shards,
        target_fpr,
        item_count_estimate,
        tokenizer_tag,
        doc_ids,
    })
}
