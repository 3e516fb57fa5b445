//! Embedding providers and an exact top-k cosine similarity store.
//!
//! Chunk entries and table-summary entries live in one store and compete in
//! one ranking. Search is a brute-force scan: stores here hold a few
//! thousand entries at most, and callers rely on exact results.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::DocumentId;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot take cosine similarity of a zero vector")]
    ZeroVector,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("store file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, IndexError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

/// Cosine similarity, `dot(a, b) / (|a| |b|)`, computed in f64.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, IndexError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, IndexError> {
        (**self).embed_batch(texts)
    }
}

/// Embeds one non-empty text and checks the provider kept its promised dim.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, IndexError> {
    if text.trim().is_empty() {
        return Err(IndexError::EmptyText);
    }
    let mut out = embed_all(&[text], provider)?;
    Ok(out.remove(0))
}

pub(crate) fn embed_all(texts: &[&str], provider: &dyn EmbeddingProvider) -> Result<Vec<EmbeddingVector>, IndexError> {
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(IndexError::ProviderUnavailable(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    for v in &vectors {
        if v.dim() != provider.dim() {
            return Err(IndexError::DimensionMismatch { expected: provider.dim(), found: v.dim() });
        }
    }
    Ok(vectors)
}

/// Bag of hashed tokens with signed feature hashing, L2-normalized.
///
/// Tokens are lowercase alphanumeric runs. Identical token bags always embed
/// identically, so the whole system runs offline and deterministically.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0f32; self.dim];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector(values)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, IndexError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// Text → vector lookup table. Unknown texts are an error unless a
/// fallback provider is attached.
#[derive(Default)]
pub struct ScriptedEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
    fallback: Option<Box<dyn EmbeddingProvider>>,
}

#[derive(Deserialize)]
struct ScriptedEmbedderFile {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl ScriptedEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim, table: HashMap::new(), fallback: None }
    }

    pub fn with(mut self, text: impl Into<String>, vector: Vec<f32>) -> Self {
        self.insert(text, vector);
        self
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f32>) {
        self.table.insert(text.into(), vector);
    }

    pub fn with_fallback(mut self, provider: impl EmbeddingProvider + 'static) -> Self {
        self.fallback = Some(Box::new(provider));
        self
    }

    /// Reads `{"dim": n, "vectors": {"text": [..], ...}}`.
    pub fn from_json_str(json: &str) -> Result<Self, IndexError> {
        let file: ScriptedEmbedderFile =
            serde_json::from_str(json).map_err(|e| IndexError::Format(e.to_string()))?;
        Ok(Self { dim: file.dim, table: file.vectors, fallback: None })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

impl EmbeddingProvider for ScriptedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, IndexError> {
        texts
            .iter()
            .map(|t| match (self.table.get(*t), &self.fallback) {
                (Some(v), _) => EmbeddingVector::new(v.clone()),
                (None, Some(fb)) => embed_all(&[t], fb.as_ref()).map(|mut v| v.remove(0)),
                (None, None) => Err(IndexError::ProviderUnavailable(format!("no scripted vector for {t:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Chunk,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub entry_id: String,
    pub document_id: DocumentId,
    pub vector: EmbeddingVector,
    /// Text handed to the prompt on a retrieval hit.
    pub payload: String,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub entry_id: String,
    pub document_id: DocumentId,
    pub score: f64,
    pub payload: String,
    pub kind: EntryKind,
}

/// Descending score, then ascending entry id.
pub fn ranking_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.entry_id.cmp(&b.entry_id))
}

/// In-memory store of entries keyed by entry id.
///
/// Readers share the lock; a batch takes it exclusively, so searches see
/// either all of a batch or none of it.
#[derive(Debug)]
pub struct VectorStore {
    dim: usize,
    entries: RwLock<BTreeMap<String, IndexEntry>>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: RwLock::new(BTreeMap::new()) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, entry_id: &str) -> Option<IndexEntry> {
        self.entries.read().unwrap().get(entry_id).cloned()
    }

    /// All entries ordered by entry id.
    pub fn entries(&self) -> Vec<IndexEntry> {
        self.entries.read().unwrap().values().cloned().collect()
    }

    pub fn document_ids(&self) -> BTreeSet<DocumentId> {
        self.entries.read().unwrap().values().map(|e| e.document_id.clone()).collect()
    }

    fn check_dims(&self, entries: &[IndexEntry]) -> Result<(), IndexError> {
        match entries.iter().find(|e| e.vector.dim() != self.dim) {
            Some(bad) => Err(IndexError::DimensionMismatch { expected: self.dim, found: bad.vector.dim() }),
            None => Ok(()),
        }
    }

    /// Inserts or replaces by entry id, all or nothing.
    pub fn upsert_batch(&self, entries: Vec<IndexEntry>) -> Result<usize, IndexError> {
        self.check_dims(&entries)?;
        let n = entries.len();
        let mut map = self.entries.write().unwrap();
        for e in entries {
            map.insert(e.entry_id.clone(), e);
        }
        Ok(n)
    }

    /// Drops every entry of `document_id` and inserts `entries` in one step.
    pub fn replace_document(&self, document_id: &DocumentId, entries: Vec<IndexEntry>) -> Result<usize, IndexError> {
        self.check_dims(&entries)?;
        let n = entries.len();
        let mut map = self.entries.write().unwrap();
        map.retain(|_, e| &e.document_id != document_id);
        for e in entries {
            map.insert(e.entry_id.clone(), e);
        }
        Ok(n)
    }

    /// Exact top-k by cosine similarity. Zero-norm vectors score 0.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        document_filter: Option<&BTreeSet<DocumentId>>,
    ) -> Result<Vec<RetrievalResult>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, found: query.dim() });
        }
        let map = self.entries.read().unwrap();
        let mut scored: Vec<RetrievalResult> = map
            .values()
            .filter(|e| document_filter.is_none_or(|f| f.contains(&e.document_id)))
            .map(|e| RetrievalResult {
                entry_id: e.entry_id.clone(),
                document_id: e.document_id.clone(),
                score: match cosine_similarity(query, &e.vector) {
                    Ok(s) => s,
                    Err(_) => 0.0,
                },
                payload: e.payload.clone(),
                kind: e.kind,
            })
            .collect();
        drop(map);

        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, ranking_order);
            scored.truncate(k);
        }
        scored.sort_by(ranking_order);
        Ok(scored)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = io::BufWriter::new(fs::File::create(&tmp)?);
            self.write_to(&mut f)?;
            f.flush()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let mut f = io::BufReader::new(fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    /// Serializes to the store file layout described in
    /// `docs/vector-store-format.md`.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), IndexError> {
        let map = self.entries.read().unwrap();
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(map.len() as u64).to_le_bytes())?;
        for e in map.values() {
            write_str(w, &e.entry_id)?;
            write_str(w, e.document_id.as_str())?;
            w.write_all(&[match e.kind {
                EntryKind::Chunk => 0,
                EntryKind::Table => 1,
            }])?;
            for v in e.vector.values() {
                w.write_all(&v.to_le_bytes())?;
            }
            write_str(w, &e.payload)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != STORE_VERSION {
            return Err(IndexError::Format(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(read_array(r)?) as usize;
        let count = u64::from_le_bytes(read_array(r)?);
        let mut map = BTreeMap::new();
        for _ in 0..count {
            let entry_id = read_str(r)?;
            let document_id = DocumentId::new(read_str(r)?);
            let kind = match read_array::<1>(r)?[0] {
                0 => EntryKind::Chunk,
                1 => EntryKind::Table,
                other => return Err(IndexError::Format(format!("unknown entry kind {other}"))),
            };
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(f32::from_le_bytes(read_array(r)?));
            }
            let payload = read_str(r)?;
            map.insert(
                entry_id.clone(),
                IndexEntry { entry_id, document_id, vector: EmbeddingVector(values), payload, kind },
            );
        }
        if map.len() as u64 != count {
            return Err(IndexError::Format("duplicate entry ids".into()));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(IndexError::Format("trailing bytes after last entry".into()));
        }
        Ok(Self { dim, entries: RwLock::new(map) })
    }
}

const STORE_MAGIC: &[u8; 4] = b"FMVS";
const STORE_VERSION: u16 = 1;

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str(r: &mut impl Read) -> Result<String, IndexError> {
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| IndexError::Format(e.to_string()))
}

/// Embeds `query_text` and returns the exact top-k entries.
pub fn query(
    query_text: &str,
    k: usize,
    document_filter: Option<&BTreeSet<DocumentId>>,
    provider: &dyn EmbeddingProvider,
    store: &VectorStore,
) -> Result<Vec<RetrievalResult>, IndexError> {
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    if store.is_empty() {
        return Ok(Vec::new());
    }
    let q = embed(query_text, provider)?;
    if q.dim() != store.dim() {
        return Err(IndexError::DimensionMismatch { expected: store.dim(), found: q.dim() });
    }
    store.search(&q, k, document_filter)
}
