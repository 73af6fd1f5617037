//! On-disk corpus: the binary index plus a JSON-lines passage sidecar.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use finrag_core::{Corpus, Passage, VectorIndex};

/// `<index>.passages.jsonl`, next to the index file.
pub fn passages_path(index: &Path) -> PathBuf {
    let mut name: OsString = index.as_os_str().to_owned();
    name.push(".passages.jsonl");
    PathBuf::from(name)
}

/// Writes `path` through a temp file in the same directory and an atomic rename.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temp file in {}", dir.display()))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        write(&mut out)?;
        out.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn save_corpus(index_path: &Path, index: &VectorIndex, passages: &[Passage]) -> Result<()> {
    write_atomic(&passages_path(index_path), |out| {
        for p in passages {
            serde_json::to_writer(&mut *out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })?;
    write_atomic(index_path, |out| {
        index.save(out)?;
        Ok(())
    })
}

pub fn load_corpus(index_path: &Path) -> Result<Corpus> {
    let file = File::open(index_path)
        .with_context(|| format!("cannot open index {}", index_path.display()))?;
    let index = VectorIndex::load(BufReader::new(file))
        .with_context(|| format!("cannot load index {}", index_path.display()))?;
    let sidecar = passages_path(index_path);
    let reader = BufReader::new(
        File::open(&sidecar).with_context(|| format!("cannot open {}", sidecar.display()))?,
    );
    let mut passages = Vec::with_capacity(index.len());
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Passage = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed passage", sidecar.display(), i + 1))?;
        passages.push(p);
    }
    Ok(Corpus::new(index, passages)?)
}
