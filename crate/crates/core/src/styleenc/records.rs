use std::fs;
use std::path::Path;

use super::model::{DesignEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};

/// One embedded portrait. `design` is the ground truth when known.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub production: String,
    pub design: Option<String>,
    pub embedding: DesignEmbedding,
}

const UNKNOWN: &str = "-";

/// Tab-separated: id, production, design (`-` when unknown), 32 floats.
pub fn format_embeddings(records: &[EmbeddingRecord]) -> String {
    let mut out = String::from("id\tproduction\tdesign");
    for d in 0..EMBEDDING_DIM {
        out.push_str(&format!("\te{d}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{}\t{}\t{}", r.id, r.production, r.design.as_deref().unwrap_or(UNKNOWN)));
        for v in r.embedding.0 {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, format_embeddings(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_embeddings(text: &str, shown: &str) -> Result<Vec<EmbeddingRecord>> {
    let fail = |line: usize, message: String| Error::Format { path: shown.to_string(), line, message };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (n == 0 && line.starts_with("id\t")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 + EMBEDDING_DIM {
            return Err(fail(n + 1, format!("expected {} fields, found {}", 3 + EMBEDDING_DIM, f.len())));
        }
        let values = f[3..]
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| fail(n + 1, format!("bad number {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let embedding = DesignEmbedding::new(&values).map_err(|e| fail(n + 1, e.to_string()))?;
        let design = (f[2] != UNKNOWN).then(|| f[2].to_string());
        out.push(EmbeddingRecord { id: f[0].into(), production: f[1].into(), design, embedding });
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string())
}
