//! Paired-corpus and prompt-file loading.
//!
//! The pairwise corpus is UTF-8 TSV with a required `toxic<TAB>neutral`
//! header and one sentence pair per row. Prompt files are either plain text
//! (one prompt per line) or JSON-lines with a `prompt` field.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// One aligned toxic/neutral sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub toxic: String,
    pub neutral: String,
}

/// Load aligned sentence pairs, preserving row order.
pub fn load_paired_corpus(path: impl AsRef<Path>) -> Result<Vec<SentencePair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("read corpus {}", path.display()), e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| {
        Error::Validation(format!("corpus {} is empty", path.display()))
    })?;
    if header.trim_end_matches('\r') != "toxic\tneutral" {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("expected header `toxic<TAB>neutral`, got `{header}`"),
        });
    }

    let mut pairs = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let toxic = cols.next().unwrap_or_default();
        let neutral = cols.next().ok_or_else(|| Error::MalformedRow {
            path: path.to_path_buf(),
            line: idx + 1,
            detail: "row has one column, expected toxic<TAB>neutral".to_string(),
        })?;
        if cols.next().is_some() {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: "row has more than two columns".to_string(),
            });
        }
        if toxic.is_empty() || neutral.is_empty() {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: "empty sentence in pair".to_string(),
            });
        }
        pairs.push(SentencePair {
            toxic: toxic.to_string(),
            neutral: neutral.to_string(),
        });
    }

    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "corpus {} has a header but no data rows",
            path.display()
        )));
    }
    Ok(pairs)
}

/// Write pairs in the same TSV format. Sentences containing tabs or newlines
/// cannot be represented and are rejected.
pub fn save_paired_corpus(pairs: &[SentencePair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("create corpus {}", path.display()), e))?;
    writeln!(file, "toxic\tneutral").map_err(|e| Error::io("write corpus header", e))?;
    for (i, pair) in pairs.iter().enumerate() {
        for (side, text) in [("toxic", &pair.toxic), ("neutral", &pair.neutral)] {
            if text.contains('\t') || text.contains('\n') {
                return Err(Error::Validation(format!(
                    "pair {i} {side} sentence contains a tab or newline; not representable in TSV"
                )));
            }
        }
        writeln!(file, "{}\t{}", pair.toxic, pair.neutral)
            .map_err(|e| Error::io("write corpus row", e))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct PromptRow {
    prompt: String,
}

/// Load prompts: JSON-lines rows must carry a `prompt` field; any other
/// non-empty line is taken verbatim.
pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("read prompts {}", path.display()), e))?;
    let mut prompts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') {
            let row: PromptRow =
                serde_json::from_str(line).map_err(|e| Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    detail: format!("invalid JSON-lines prompt row: {e}"),
                })?;
            prompts.push(row.prompt);
        } else {
            prompts.push(line.to_string());
        }
    }
    if prompts.is_empty() {
        return Err(Error::Validation(format!(
            "prompts file {} contains no prompts",
            path.display()
        )));
    }
    Ok(prompts)
}
