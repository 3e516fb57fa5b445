//! Document preprocessing: blocks → cleaned paragraphs → bounded chunks,
//! plus pipe tables summarized for indexing.
//!
//! Input is already-extracted UTF-8 text or markdown. Offsets (spans, page
//! markers) are byte offsets into `raw_text`; chunk limits count characters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::index::{embed_all, EmbeddingProvider, EntryKind, IndexEntry, IndexError, VectorStore};
use crate::service::{CompletionRequest, TextService};

pub const DEFAULT_MAX_CHUNK_LEN: usize = 1024;
pub const MIN_CHUNK_LEN: usize = 64;

const CLEANING_INSTRUCTION: &str = "You clean text extracted from technical equipment documents. \
Remove page headers and footers, footnotes, figure and table captions, and page numbers. \
Rejoin words and sentences that were broken across lines or pages. \
Return the remaining content as cohesive paragraphs separated by one blank line. \
Do not summarize, reword, or add content.";

const TABLE_SUMMARY_INSTRUCTION: &str = "You summarize tables from technical equipment documents. \
Write one short paragraph describing what the table lists so it can be found by search. \
Mention the kinds of components, quantities, or intervals it covers. Reply with the paragraph only.";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("page markers must be strictly increasing offsets inside the document")]
    InvalidPageMarkers,
    #[error("max chunk length {0} is below the minimum of {MIN_CHUNK_LEN}")]
    ChunkLimitTooSmall(usize),
    #[error("table markdown is not a rectangular pipe table: {0}")]
    MalformedTable(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(String);

impl DocumentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// Content address: the same title and text always get the same id, so
    /// re-uploading a document replaces its earlier entries.
    pub fn from_content(title: &str, raw_text: &str) -> Self {
        let mut h = Sha256::new();
        h.update(title.trim().as_bytes());
        h.update([0u8]);
        h.update(raw_text.as_bytes());
        let digest = h.finalize();
        Self(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    PlainText,
    Markdown,
}

impl DocumentFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DocumentFormat::PlainText => "plain_text",
            DocumentFormat::Markdown => "markdown",
        }
    }

    /// Guess from a file extension; anything but `.md`/`.markdown` is text.
    pub fn from_extension(ext: &str) -> Self {
        match ext.to_ascii_lowercase().as_str() {
            "md" | "markdown" => DocumentFormat::Markdown,
            _ => DocumentFormat::PlainText,
        }
    }
}

impl FromStr for DocumentFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain_text" | "plaintext" | "text" | "txt" => Ok(DocumentFormat::PlainText),
            "markdown" | "md" => Ok(DocumentFormat::Markdown),
            other => Err(format!("unknown document format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub document_id: DocumentId,
    pub title: String,
    pub raw_text: String,
    pub format: DocumentFormat,
    /// Byte offsets where pages start.
    pub page_markers: Option<Vec<usize>>,
}

impl Document {
    /// Builds a document, taking page boundaries from form-feed characters
    /// when the text has any.
    pub fn new(title: impl Into<String>, raw_text: impl Into<String>, format: DocumentFormat) -> Result<Self, IngestError> {
        let title = title.into();
        let raw_text = raw_text.into();
        if raw_text.trim().is_empty() {
            return Err(IngestError::EmptyDocument);
        }
        let feeds: Vec<usize> = raw_text.match_indices('\u{c}').map(|(i, _)| i + 1).collect();
        let page_markers = (!feeds.is_empty()).then(|| std::iter::once(0).chain(feeds).collect());
        Ok(Self { document_id: DocumentId::from_content(&title, &raw_text), title, raw_text, format, page_markers })
    }

    pub fn with_page_markers(mut self, markers: Vec<usize>) -> Result<Self, IngestError> {
        validate_markers(&markers, self.raw_text.len())?;
        self.page_markers = Some(markers);
        Ok(self)
    }
}

fn validate_markers(markers: &[usize], len: usize) -> Result<(), IngestError> {
    let increasing = markers.windows(2).all(|w| w[0] < w[1]);
    if !increasing || markers.iter().any(|&m| m > len) {
        return Err(IngestError::InvalidPageMarkers);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Text,
    Table,
    Heading,
    PageFurniture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: String,
    pub kind: BlockKind,
    /// Raw slice for text blocks; normalized markdown for tables.
    pub content: String,
    pub source_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestWarning {
    /// A pipe-table row whose cell count differs from the header. The row
    /// is emitted as a text block.
    MalformedTable { offset: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedDocument {
    pub blocks: Vec<Block>,
    pub warnings: Vec<IngestWarning>,
}

/// A rectangular GitHub-style pipe table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipeTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn split_cells(line: &str) -> Vec<String> {
    let t = line.trim();
    let t = t.strip_prefix('|').unwrap_or(t);
    let t = t.strip_suffix('|').unwrap_or(t);
    t.split('|').map(|c| c.trim().to_string()).collect()
}

fn is_separator_row(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| {
            let c = c.trim_start_matches(':').trim_end_matches(':');
            !c.is_empty() && c.chars().all(|ch| ch == '-')
        })
}

impl PipeTable {
    pub fn parse(markdown: &str) -> Result<Self, IngestError> {
        let lines: Vec<&str> = markdown.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.len() < 2 || !lines.iter().all(|l| l.starts_with('|')) {
            return Err(IngestError::MalformedTable("expected header and separator rows".into()));
        }
        let header = split_cells(lines[0]);
        let sep = split_cells(lines[1]);
        if !is_separator_row(&sep) || sep.len() != header.len() {
            return Err(IngestError::MalformedTable("bad separator row".into()));
        }
        let mut rows = Vec::new();
        for line in &lines[2..] {
            let cells = split_cells(line);
            if cells.len() != header.len() {
                return Err(IngestError::MalformedTable(format!(
                    "row has {} cells, header has {}",
                    cells.len(),
                    header.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Self { header, rows })
    }

    pub fn columns(&self) -> usize {
        self.header.len()
    }

    pub fn to_markdown(&self) -> String {
        let row = |cells: &[String]| format!("| {} |", cells.join(" | "));
        let mut out = vec![row(&self.header), row(&vec!["---".to_string(); self.header.len()])];
        out.extend(self.rows.iter().map(|r| row(r)));
        out.join("\n")
    }
}

fn page_number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^page\s+\d+(\s+of\s+\d+)?$").unwrap())
}

fn footnote_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(†|\*[^\s*]|\[\d+\])").unwrap())
}

fn caption_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(table|tab\.)\s*[0-9A-Za-z.\-]*\s*[:.\-–—]\s*(.+)$").unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind {
    Blank,
    Text,
    Heading,
    Furniture,
    Pipe,
}

struct Line<'a> {
    start: usize,
    end: usize,
    text: &'a str,
    kind: LineKind,
}

fn scan_lines(raw: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for piece in raw.split_inclusive('\n') {
        let body = piece.trim_end_matches(['\n', '\r']);
        let lead = body.len() - body.trim_start().len();
        let text = body.trim();
        let start = offset + lead;
        out.push(Line { start, end: start + text.len(), text, kind: LineKind::Blank });
        offset += piece.len();
    }
    out
}

fn page_of(markers: &[usize], offset: usize) -> usize {
    markers.partition_point(|&m| m <= offset)
}

/// Splits raw text into ordered blocks. Pipe tables are only recognized in
/// markdown documents.
pub fn parse_document(
    raw_text: &str,
    format: DocumentFormat,
    page_markers: Option<&[usize]>,
) -> Result<ParsedDocument, IngestError> {
    if raw_text.trim().is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let markers: Vec<usize> = match page_markers {
        Some(m) => {
            validate_markers(m, raw_text.len())?;
            m.to_vec()
        }
        None => raw_text.match_indices('\u{c}').map(|(i, _)| i + 1).collect(),
    };
    let markdown = format == DocumentFormat::Markdown;

    let mut lines = scan_lines(raw_text);
    // pages on which each distinct line text appears
    let mut pages_seen: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for l in lines.iter().filter(|l| !l.text.is_empty()) {
        pages_seen.entry(l.text).or_default().insert(page_of(&markers, l.start));
    }
    for l in &mut lines {
        let t = l.text.trim_matches('\u{c}').trim();
        l.kind = if t.is_empty() {
            LineKind::Blank
        } else if markdown && t.starts_with('|') {
            LineKind::Pipe
        } else if page_number_re().is_match(t)
            || t.chars().all(|c| c.is_ascii_digit())
            || (footnote_re().is_match(t) && t.chars().count() < 80)
            || pages_seen.get(l.text).is_some_and(|p| p.len() >= 3)
        {
            LineKind::Furniture
        } else if markdown && t.starts_with('#') && t.trim_start_matches('#').starts_with(' ') {
            LineKind::Heading
        } else {
            LineKind::Text
        };
        if l.kind != LineKind::Blank {
            // form feeds belong to the page break, not the content
            let lead = l.text.len() - l.text.trim_start_matches(['\u{c}', ' ', '\t']).len();
            let trail = l.text.len() - l.text.trim_end_matches(['\u{c}', ' ', '\t']).len();
            l.start += lead;
            l.end -= trail;
            l.text = &l.text[lead..l.text.len() - trail];
        }
    }

    let mut builder = BlockBuilder { raw: raw_text, out: ParsedDocument::default() };
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        match line.kind {
            LineKind::Blank => i += 1,
            LineKind::Furniture => {
                builder.push(BlockKind::PageFurniture, line.start, line.end, None);
                i += 1;
            }
            LineKind::Heading => {
                builder.push(BlockKind::Heading, line.start, line.end, None);
                i += 1;
            }
            LineKind::Text => {
                let start = line.start;
                let mut j = i;
                while j + 1 < lines.len() && lines[j + 1].kind == LineKind::Text {
                    j += 1;
                }
                builder.push(BlockKind::Text, start, lines[j].end, None);
                i = j + 1;
            }
            LineKind::Pipe => {
                let mut j = i;
                while j + 1 < lines.len() && lines[j + 1].kind == LineKind::Pipe {
                    j += 1;
                }
                builder.table_run(&lines[i..=j]);
                i = j + 1;
            }
        }
    }
    Ok(builder.out)
}

struct BlockBuilder<'a> {
    raw: &'a str,
    out: ParsedDocument,
}

impl BlockBuilder<'_> {
    fn push(&mut self, kind: BlockKind, start: usize, end: usize, content: Option<String>) {
        let block_id = format!("b{:04}", self.out.blocks.len());
        let content = content.unwrap_or_else(|| self.raw[start..end].to_string());
        self.out.blocks.push(Block { block_id, kind, content, source_span: (start, end) });
    }

    fn table_run(&mut self, lines: &[Line<'_>]) {
        let header = split_cells(lines[0].text);
        let well_formed = lines.len() >= 2 && {
            let sep = split_cells(lines[1].text);
            is_separator_row(&sep) && sep.len() == header.len()
        };
        if !well_formed {
            self.push(BlockKind::Text, lines[0].start, lines[lines.len() - 1].end, None);
            return;
        }

        let mut seg_start = lines[0].start;
        let mut seg_end = lines[1].end;
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut first_segment = true;
        let flush = |this: &mut Self, start: usize, end: usize, rows: &mut Vec<Vec<String>>, first: bool| {
            if first || !rows.is_empty() {
                let table = PipeTable { header: header.clone(), rows: std::mem::take(rows) };
                this.push(BlockKind::Table, start, end, Some(table.to_markdown()));
            }
        };
        for line in &lines[2..] {
            let cells = split_cells(line.text);
            if cells.len() == header.len() {
                if rows.is_empty() && !first_segment {
                    seg_start = line.start;
                }
                rows.push(cells);
                seg_end = line.end;
            } else {
                flush(self, seg_start, seg_end, &mut rows, first_segment);
                first_segment = false;
                self.out.warnings.push(IngestWarning::MalformedTable {
                    offset: line.start,
                    expected: header.len(),
                    found: cells.len(),
                });
                self.push(BlockKind::Text, line.start, line.end, None);
            }
        }
        flush(self, seg_start, seg_end, &mut rows, first_segment);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub paragraph_id: String,
    pub text: String,
    pub source_block_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterOutcome {
    pub paragraphs: Vec<Paragraph>,
    /// Set when the rule-based fallback replaced the service for any group.
    pub degraded: bool,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Unwraps hard line breaks, rejoining words hyphenated across lines.
fn unwrap_lines(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        join_fragment(&mut out, line);
    }
    out
}

fn join_fragment(out: &mut String, next: &str) {
    if out.is_empty() {
        out.push_str(next);
        return;
    }
    let hyphen_break = out.ends_with('-')
        && out[..out.len() - 1].chars().next_back().is_some_and(char::is_alphabetic)
        && next.chars().next().is_some_and(char::is_lowercase);
    if hyphen_break {
        out.pop();
    } else {
        out.push(' ');
    }
    out.push_str(next);
}

/// Groups of consecutive text blocks; furniture is dropped without ending a
/// group, anything else ends it. Headings come back as their own group.
fn text_groups(blocks: &[Block]) -> Vec<Group<'_>> {
    let mut groups = Vec::new();
    let mut current: Vec<(&Block, bool)> = Vec::new();
    let mut furniture_since_last = false;
    for b in blocks {
        match b.kind {
            BlockKind::PageFurniture => furniture_since_last = true,
            BlockKind::Text => {
                current.push((b, furniture_since_last));
                furniture_since_last = false;
            }
            BlockKind::Heading | BlockKind::Table => {
                if !current.is_empty() {
                    groups.push(Group::Text(std::mem::take(&mut current)));
                }
                if b.kind == BlockKind::Heading {
                    groups.push(Group::Heading(b));
                }
                furniture_since_last = false;
            }
        }
    }
    if !current.is_empty() {
        groups.push(Group::Text(current));
    }
    groups
}

enum Group<'a> {
    Heading(&'a Block),
    /// Blocks with a flag for "page furniture came right before this one".
    Text(Vec<(&'a Block, bool)>),
}

fn rule_based_paragraphs(group: &[(&Block, bool)]) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for (block, after_furniture) in group {
        let text = unwrap_lines(&block.content);
        if text.is_empty() {
            continue;
        }
        let continues = out.last().is_some_and(|(prev, _)| {
            let open = !prev.ends_with(['.', '!', '?', ':']);
            let lower_start = text.chars().next().is_some_and(char::is_lowercase);
            open && (lower_start || *after_furniture)
        });
        match out.last_mut() {
            Some((prev, ids)) if continues => {
                join_fragment(prev, &text);
                ids.push(block.block_id.clone());
            }
            _ => out.push((text, vec![block.block_id.clone()])),
        }
    }
    out.into_iter().map(|(t, ids)| (collapse_ws(&t), ids)).collect()
}

fn heading_text(block: &Block) -> String {
    collapse_ws(block.content.trim_start_matches('#'))
}

/// Drops page furniture and turns text blocks into cohesive paragraphs.
///
/// Each run of text blocks is sent to the service with a fixed cleaning
/// instruction; the reply's blank-line-separated paragraphs replace the run.
/// When the service fails, a rule-based merge stands in and the outcome is
/// flagged degraded. Tables are not paragraphs and are skipped here.
pub fn filter_noise(blocks: &[Block], text_service: &dyn TextService) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    let push = |outcome: &mut FilterOutcome, text: String, ids: Vec<String>| {
        if !text.is_empty() {
            let paragraph_id = format!("p{:04}", outcome.paragraphs.len());
            outcome.paragraphs.push(Paragraph { paragraph_id, text, source_block_ids: ids });
        }
    };
    for group in text_groups(blocks) {
        match group {
            Group::Heading(b) => push(&mut outcome, heading_text(b), vec![b.block_id.clone()]),
            Group::Text(members) => {
                let user_content =
                    members.iter().map(|(b, _)| b.content.as_str()).collect::<Vec<_>>().join("\n");
                let request = CompletionRequest {
                    system_instruction: CLEANING_INSTRUCTION.to_string(),
                    max_output_chars: user_content.chars().count() + 256,
                    user_content,
                };
                let ids: Vec<String> = members.iter().map(|(b, _)| b.block_id.clone()).collect();
                match text_service.complete(&request) {
                    Ok(reply) => {
                        for para in split_paragraphs(&reply.text) {
                            push(&mut outcome, para, ids.clone());
                        }
                    }
                    Err(_) => {
                        outcome.degraded = true;
                        for (text, ids) in rule_based_paragraphs(&members) {
                            push(&mut outcome, text, ids);
                        }
                    }
                }
            }
        }
    }
    outcome
}

fn split_paragraphs(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\n[ \t]*\n").unwrap());
    re.split(text).map(collapse_ws).filter(|p| !p.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub document_id: DocumentId,
    pub text: String,
    pub char_length: usize,
    pub ordinal: usize,
}

/// Splits `text` into pieces of at most `max` characters. Prefers the last
/// sentence end, then the last whitespace, then a hard cut. The single
/// whitespace character at a soft split point is dropped.
fn split_long(text: &str, max: usize) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut rest = text;
    loop {
        let Some((limit, _)) = rest.char_indices().nth(max) else {
            if !rest.is_empty() {
                pieces.push(rest);
            }
            return pieces;
        };
        let mut sentence = None;
        let mut space = None;
        let mut prev: Option<char> = None;
        for (i, c) in rest.char_indices() {
            if i > limit {
                break;
            }
            if c.is_whitespace() && i > 0 {
                space = Some((i, c.len_utf8()));
                if matches!(prev, Some('.' | '!' | '?')) {
                    sentence = Some((i, c.len_utf8()));
                }
            }
            prev = Some(c);
        }
        match sentence.or(space) {
            Some((at, width)) => {
                pieces.push(&rest[..at]);
                rest = &rest[at + width..];
            }
            None => {
                pieces.push(&rest[..limit]);
                rest = &rest[limit..];
            }
        }
    }
}

/// Packs paragraphs into chunks of at most `max_chunk_len` characters,
/// joining whole paragraphs with a single newline where they fit.
pub fn chunk_paragraphs(
    document_id: &DocumentId,
    paragraphs: &[Paragraph],
    max_chunk_len: usize,
) -> Result<Vec<Chunk>, IngestError> {
    if max_chunk_len < MIN_CHUNK_LEN {
        return Err(IngestError::ChunkLimitTooSmall(max_chunk_len));
    }
    let mut texts: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_len = 0;
    for para in paragraphs.iter().filter(|p| !p.text.is_empty()) {
        let pieces = split_long(&para.text, max_chunk_len);
        for (pi, piece) in pieces.into_iter().enumerate() {
            let len = piece.chars().count();
            let fits = pi == 0 && !current.is_empty() && current_len + 1 + len <= max_chunk_len;
            if fits {
                current.push('\n');
                current.push_str(piece);
                current_len += 1 + len;
            } else {
                if !current.is_empty() {
                    texts.push(std::mem::take(&mut current));
                }
                current.push_str(piece);
                current_len = len;
            }
        }
    }
    if !current.is_empty() {
        texts.push(current);
    }
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| Chunk {
            chunk_id: format!("{document_id}#c{ordinal:04}"),
            document_id: document_id.clone(),
            char_length: text.chars().count(),
            text,
            ordinal,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableArtifact {
    pub table_id: String,
    pub document_id: DocumentId,
    pub markdown: String,
    pub caption: Option<String>,
    pub summary: String,
}

impl TableArtifact {
    pub fn new(
        table_id: impl Into<String>,
        document_id: DocumentId,
        markdown: impl Into<String>,
        caption: Option<String>,
    ) -> Result<Self, IngestError> {
        let markdown = markdown.into();
        PipeTable::parse(&markdown)?;
        Ok(Self { table_id: table_id.into(), document_id, markdown, caption, summary: String::new() })
    }

    /// Text stored as the retrieval payload.
    pub fn payload(&self) -> String {
        match &self.caption {
            Some(c) => format!("{c}\n{}", self.markdown),
            None => self.markdown.clone(),
        }
    }

    fn fallback_summary(&self) -> String {
        if let Some(c) = self.caption.as_deref().filter(|c| !c.trim().is_empty()) {
            return c.trim().to_string();
        }
        PipeTable::parse(&self.markdown).map(|t| t.header.join(", ")).unwrap_or_default()
    }
}

/// Table artifacts for every table block, with captions taken from a
/// one-line "Table N: ..." text block right before the table. Returns the
/// artifacts and the ids of the caption blocks they consumed.
pub fn extract_tables(document_id: &DocumentId, blocks: &[Block]) -> (Vec<TableArtifact>, BTreeSet<String>) {
    let mut tables = Vec::new();
    let mut consumed = BTreeSet::new();
    for (i, b) in blocks.iter().enumerate() {
        if b.kind != BlockKind::Table {
            continue;
        }
        let prev = blocks[..i].iter().rev().find(|p| p.kind != BlockKind::PageFurniture);
        let caption = prev.filter(|p| p.kind == BlockKind::Text && !p.content.contains('\n')).and_then(|p| {
            caption_re().captures(p.content.trim()).map(|c| {
                consumed.insert(p.block_id.clone());
                c[2].trim().to_string()
            })
        });
        let table_id = format!("{document_id}#t{:02}", tables.len());
        // table blocks carry normalized markdown, so this cannot fail
        if let Ok(t) = TableArtifact::new(table_id, document_id.clone(), b.content.clone(), caption) {
            tables.push(t);
        }
    }
    (tables, consumed)
}

/// Asks the service for a one-paragraph summary used as the index key.
/// Falls back to the caption, else the header cells joined by commas; the
/// flag reports whether the fallback was used.
pub fn summarize_table(table: &TableArtifact, text_service: &dyn TextService) -> (TableArtifact, bool) {
    let mut user_content = String::new();
    if let Some(c) = &table.caption {
        user_content.push_str(&format!("Caption: {c}\n\n"));
    }
    user_content.push_str(&table.markdown);
    let request = CompletionRequest {
        system_instruction: TABLE_SUMMARY_INSTRUCTION.to_string(),
        user_content,
        max_output_chars: 600,
    };
    let mut out = table.clone();
    match text_service.complete(&request).map(|r| collapse_ws(&r.text)) {
        Ok(summary) if !summary.is_empty() => {
            out.summary = summary;
            (out, false)
        }
        _ => {
            out.summary = table.fallback_summary();
            (out, true)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionReceipt {
    pub document_id: DocumentId,
    pub chunk_count: usize,
    pub table_count: usize,
    pub degraded: bool,
}

/// Everything preprocessing produced for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedDocument {
    pub document_id: DocumentId,
    pub title: String,
    pub format: DocumentFormat,
    pub paragraphs: Vec<Paragraph>,
    pub chunks: Vec<Chunk>,
    pub tables: Vec<TableArtifact>,
}

impl ProcessedDocument {
    /// Cleaned paragraphs joined by newlines; what long-context prompts see.
    pub fn full_text(&self) -> String {
        self.paragraphs.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

/// Lookup of cleaned document text by id.
pub trait DocumentSource: Send + Sync {
    fn processed_text(&self, document_id: &DocumentId) -> Option<String>;
}

/// In-memory catalog of processed documents.
#[derive(Debug, Default)]
pub struct DocumentLibrary {
    docs: RwLock<BTreeMap<DocumentId, ProcessedDocument>>,
}

impl DocumentLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, doc: ProcessedDocument) {
        self.docs.write().unwrap().insert(doc.document_id.clone(), doc);
    }

    pub fn get(&self, id: &DocumentId) -> Option<ProcessedDocument> {
        self.docs.read().unwrap().get(id).cloned()
    }

    pub fn contains(&self, id: &DocumentId) -> bool {
        self.docs.read().unwrap().contains_key(id)
    }

    pub fn list(&self) -> Vec<ProcessedDocument> {
        self.docs.read().unwrap().values().cloned().collect()
    }
}

impl DocumentSource for DocumentLibrary {
    fn processed_text(&self, document_id: &DocumentId) -> Option<String> {
        self.get(document_id).map(|d| d.full_text())
    }
}

/// Runs the whole preprocessing pipeline for one document at a time.
#[derive(Clone)]
pub struct Ingestor {
    pub text_service: Arc<dyn TextService>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub max_chunk_len: usize,
}

#[derive(Debug, Clone)]
pub struct IngestionOutput {
    pub receipt: IngestionReceipt,
    pub processed: ProcessedDocument,
    pub warnings: Vec<IngestWarning>,
}

impl Ingestor {
    pub fn new(text_service: Arc<dyn TextService>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self { text_service, embedder, max_chunk_len: DEFAULT_MAX_CHUNK_LEN }
    }

    /// Parse, filter, chunk, summarize tables, embed, and replace the
    /// document's entries in `store` as one batch. Running it twice on the
    /// same document leaves the store unchanged.
    pub fn ingest(&self, document: &Document, store: &VectorStore) -> Result<IngestionOutput, IngestError> {
        let parsed = parse_document(&document.raw_text, document.format, document.page_markers.as_deref())?;
        let (tables, captions) = extract_tables(&document.document_id, &parsed.blocks);
        let text_blocks: Vec<Block> =
            parsed.blocks.iter().filter(|b| !captions.contains(&b.block_id)).cloned().collect();

        let filtered = filter_noise(&text_blocks, self.text_service.as_ref());
        let chunks = chunk_paragraphs(&document.document_id, &filtered.paragraphs, self.max_chunk_len)?;

        let mut degraded = filtered.degraded;
        let tables: Vec<TableArtifact> = tables
            .iter()
            .map(|t| {
                let (t, fell_back) = summarize_table(t, self.text_service.as_ref());
                degraded |= fell_back;
                t
            })
            .collect();

        let mut texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        texts.extend(tables.iter().map(|t| t.summary.as_str()));
        let vectors = if texts.is_empty() { Vec::new() } else { embed_all(&texts, self.embedder.as_ref())? };
        let mut vectors = vectors.into_iter();

        let mut entries = Vec::with_capacity(chunks.len() + tables.len());
        for c in &chunks {
            entries.push(IndexEntry {
                entry_id: c.chunk_id.clone(),
                document_id: c.document_id.clone(),
                vector: vectors.next().expect("one vector per text"),
                payload: c.text.clone(),
                kind: EntryKind::Chunk,
            });
        }
        for t in &tables {
            entries.push(IndexEntry {
                entry_id: t.table_id.clone(),
                document_id: t.document_id.clone(),
                vector: vectors.next().expect("one vector per text"),
                payload: t.payload(),
                kind: EntryKind::Table,
            });
        }
        store.replace_document(&document.document_id, entries)?;

        Ok(IngestionOutput {
            receipt: IngestionReceipt {
                document_id: document.document_id.clone(),
                chunk_count: chunks.len(),
                table_count: tables.len(),
                degraded,
            },
            processed: ProcessedDocument {
                document_id: document.document_id.clone(),
                title: document.title.clone(),
                format: document.format,
                paragraphs: filtered.paragraphs,
                chunks,
                tables,
            },
            warnings: parsed.warnings,
        })
    }
}

/// Convenience wrapper matching the one-call pipeline shape.
pub fn index_document(
    document: &Document,
    text_service: Arc<dyn TextService>,
    embedder: Arc<dyn EmbeddingProvider>,
    store: &VectorStore,
) -> Result<IngestionReceipt, IngestError> {
    Ingestor::new(text_service, embedder).ingest(document, store).map(|o| o.receipt)
}
