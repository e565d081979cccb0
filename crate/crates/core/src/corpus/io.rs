//! JSON Lines persistence. One record per line, discriminated by `kind`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    chunk_document, validate_corpus, ChangeLogEntry, ChunkOptions, Corpus, CorpusError,
    InstructionFragment, SafetyOverlay, ToolSpec, DEFAULT_ROUTING_NOTE,
};
use crate::tokenize::TokenCounter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusRecord {
    Fragment(InstructionFragment),
    Tool(ToolSpec),
    Overlay(SafetyOverlay),
    RoutingNote { text: String },
    Change(ChangeLogEntry),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_jsonl(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let records = corpus
        .fragments
        .iter()
        .cloned()
        .map(CorpusRecord::Fragment)
        .chain(corpus.tools.iter().cloned().map(CorpusRecord::Tool))
        .chain(corpus.safety_overlay.clone().map(CorpusRecord::Overlay))
        .chain(std::iter::once(CorpusRecord::RoutingNote {
            text: corpus.routing_note.clone(),
        }))
        .chain(corpus.change_log.iter().cloned().map(CorpusRecord::Change));
    for record in records {
        let line = serde_json::to_string(&record).expect("corpus records serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads one JSONL file. Token costs are recomputed with `counter`.
pub fn load_jsonl(path: &Path, counter: &dyn TokenCounter) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    read_records(path, &mut corpus)?;
    Ok(corpus.recount(counter))
}

/// Loads every `*.jsonl` file in `dir` (sorted by file name) and, if given,
/// chunks a raw system-prompt text file into additional fragments.
///
/// Fails on validation errors (duplicate ids, missing overlay); warnings are
/// logged.
pub fn load_dir(
    dir: &Path,
    system_prompt: Option<&Path>,
    chunking: &ChunkOptions,
    counter: &dyn TokenCounter,
) -> Result<Corpus, CorpusError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();

    let mut corpus = Corpus::default();
    for path in &paths {
        read_records(path, &mut corpus)?;
    }
    if let Some(prompt_path) = system_prompt {
        let doc = fs::read_to_string(prompt_path).map_err(io_err(prompt_path))?;
        let doc_id = prompt_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        corpus
            .fragments
            .extend(chunk_document(&doc_id, &doc, chunking, counter)?);
    }
    let corpus = corpus.recount(counter);

    let report = validate_corpus(&corpus);
    for issue in report.issues.iter() {
        tracing::warn!(?issue, "corpus validation");
    }
    if report.has_errors() {
        let msg = report
            .errors()
            .map(|i| serde_json::to_string(i).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CorpusError::Invalid(msg));
    }
    Ok(corpus)
}

fn read_records(path: &Path, corpus: &mut Corpus) -> Result<(), CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut note = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|source| CorpusError::Record {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        match record {
            CorpusRecord::Fragment(f) => corpus.fragments.push(f),
            CorpusRecord::Tool(t) => corpus.tools.push(t),
            CorpusRecord::Overlay(o) => corpus.safety_overlay = Some(o),
            CorpusRecord::RoutingNote { text } => note = Some(text),
            CorpusRecord::Change(c) => corpus.change_log.push(c),
        }
    }
    if let Some(note) = note {
        corpus.routing_note = note;
    } else if corpus.routing_note.is_empty() {
        corpus.routing_note = DEFAULT_ROUTING_NOTE.to_string();
    }
    Ok(())
}
