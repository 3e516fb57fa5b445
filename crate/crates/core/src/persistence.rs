//! SQLite storage for studies, processed documents and committed trees.
//!
//! Each tree level has its own table with a foreign key to the level above,
//! so deleting a study cascades all the way down. Trees are saved by full
//! replacement inside one transaction.

use std::path::Path;
use std::str::FromStr;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, ErrorCode, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{Chunk, DocumentFormat, DocumentId, DocumentSource, Paragraph, ProcessedDocument, TableArtifact};
use crate::model::{
    name_key, Boundary, FlatNode, FmeaTree, GenerationStep, NodeId, Origin, ProvenanceTag, Study, StudyId,
};

/// Ordered schema migrations; the position is the `user_version` they bring
/// the database to.
const MIGRATIONS: [&str; 1] = [include_str!("../migrations/0001_init.sql")];

pub const CSV_HEADER: [&str; 5] =
    ["asset", "failure_location", "degradation_mechanism", "degradation_influence", "preventive_task"];

#[derive(Debug, Error)]
pub enum PersistenceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("study has no committed FMEA content")]
    EmptyTree,
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
}

impl From<rusqlite::Error> for PersistenceError {
    fn from(e: rusqlite::Error) -> Self {
        match e.sqlite_error_code() {
            Some(ErrorCode::ConstraintViolation) => PersistenceError::IntegrityViolation(e.to_string()),
            _ => PersistenceError::StorageUnavailable(e.to_string()),
        }
    }
}

pub type Result<T, E = PersistenceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Json => "application/json",
            ExportFormat::Csv => "text/csv; charset=utf-8",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(format!("unknown export format `{other}` (expected csv or json)")),
        }
    }
}

/// Row counts per tree table for one study.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RowCounts {
    pub boundary_parts: usize,
    pub failure_locations: usize,
    pub degradation_mechanisms: usize,
    pub degradation_influences: usize,
    pub preventive_tasks: usize,
    pub node_provenance: usize,
}

/// Connection to the study database. All access is serialized through one
/// connection, so writes are single-writer and each read sees a committed
/// state.
#[derive(Debug)]
pub struct Database {
    conn: Mutex<Connection>,
}

impl Database {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(mut conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        let version: usize = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
        if version > MIGRATIONS.len() {
            return Err(PersistenceError::Corrupt(format!(
                "database schema version {version} is newer than this build ({})",
                MIGRATIONS.len()
            )));
        }
        for (i, sql) in MIGRATIONS.iter().enumerate().skip(version) {
            let tx = conn.transaction()?;
            tx.execute_batch(sql)?;
            tx.pragma_update(None, "user_version", i + 1)?;
            tx.commit()?;
        }
        Ok(Self { conn: Mutex::new(conn) })
    }

    pub fn schema_version(&self) -> Result<usize> {
        Ok(self.lock().pragma_query_value(None, "user_version", |r| r.get(0))?)
    }

    fn lock(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    // studies

    /// Inserts or updates a study and its document selection.
    pub fn save_study(&self, study: &Study) -> Result<()> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO studies (study_id, asset_name, asset_description, current_step, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5)
             ON CONFLICT (study_id) DO UPDATE SET
                asset_name = excluded.asset_name,
                asset_description = excluded.asset_description,
                current_step = excluded.current_step",
            params![
                study.study_id.as_str(),
                study.asset_name,
                study.asset_description,
                study.current_step.as_str(),
                study.created_at.to_rfc3339(),
            ],
        )?;
        tx.execute("DELETE FROM study_documents WHERE study_id = ?1", [study.study_id.as_str()])?;
        for doc in &study.selected_document_ids {
            tx.execute(
                "INSERT INTO study_documents (study_id, document_id) VALUES (?1, ?2)",
                params![study.study_id.as_str(), doc.as_str()],
            )
            .map_err(|e| match PersistenceError::from(e) {
                PersistenceError::IntegrityViolation(_) => PersistenceError::NotFound(format!("document `{doc}`")),
                other => other,
            })?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_study(&self, study_id: &StudyId) -> Result<Study> {
        let conn = self.lock();
        load_study_in(&conn, study_id)
    }

    pub fn list_studies(&self) -> Result<Vec<Study>> {
        let conn = self.lock();
        let ids: Vec<String> = conn
            .prepare("SELECT study_id FROM studies ORDER BY created_at, study_id")?
            .query_map([], |r| r.get(0))?
            .collect::<rusqlite::Result<_>>()?;
        ids.into_iter().map(|id| load_study_in(&conn, &StudyId::new(id))).collect()
    }

    /// Removes a study and, by cascade, its whole tree.
    pub fn delete_study(&self, study_id: &StudyId) -> Result<()> {
        let n = self.lock().execute("DELETE FROM studies WHERE study_id = ?1", [study_id.as_str()])?;
        if n == 0 {
            return Err(PersistenceError::NotFound(format!("study `{study_id}`")));
        }
        Ok(())
    }

    // documents

    /// Stores a processed document with its chunks and tables, replacing any
    /// earlier version with the same id.
    pub fn save_document(&self, doc: &ProcessedDocument) -> Result<()> {
        let paragraphs = serde_json::to_string(&doc.paragraphs).map_err(|e| PersistenceError::Corrupt(e.to_string()))?;
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO documents (document_id, title, format, processed_text, paragraphs_json)
             VALUES (?1, ?2, ?3, ?4, ?5)
             ON CONFLICT (document_id) DO UPDATE SET
                title = excluded.title, format = excluded.format,
                processed_text = excluded.processed_text, paragraphs_json = excluded.paragraphs_json",
            params![doc.document_id.as_str(), doc.title, doc.format.as_str(), doc.full_text(), paragraphs],
        )?;
        tx.execute("DELETE FROM chunks WHERE document_id = ?1", [doc.document_id.as_str()])?;
        tx.execute("DELETE FROM tables_artifacts WHERE document_id = ?1", [doc.document_id.as_str()])?;
        for c in &doc.chunks {
            tx.execute(
                "INSERT INTO chunks (chunk_id, document_id, ordinal, text, char_length) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![c.chunk_id, doc.document_id.as_str(), c.ordinal as i64, c.text, c.char_length as i64],
            )?;
        }
        for t in &doc.tables {
            tx.execute(
                "INSERT INTO tables_artifacts (table_id, document_id, markdown, caption, summary)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![t.table_id, doc.document_id.as_str(), t.markdown, t.caption, t.summary],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_document(&self, document_id: &DocumentId) -> Result<ProcessedDocument> {
        let conn = self.lock();
        let row: Option<(String, String, String)> = conn
            .query_row(
                "SELECT title, format, paragraphs_json FROM documents WHERE document_id = ?1",
                [document_id.as_str()],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
            )
            .optional()?;
        let (title, format, paragraphs) =
            row.ok_or_else(|| PersistenceError::NotFound(format!("document `{document_id}`")))?;
        let format = DocumentFormat::from_str(&format).map_err(PersistenceError::Corrupt)?;
        let paragraphs: Vec<Paragraph> =
            serde_json::from_str(&paragraphs).map_err(|e| PersistenceError::Corrupt(e.to_string()))?;

        let chunks = conn
            .prepare("SELECT chunk_id, ordinal, text, char_length FROM chunks WHERE document_id = ?1 ORDER BY ordinal")?
            .query_map([document_id.as_str()], |r| {
                Ok(Chunk {
                    chunk_id: r.get(0)?,
                    document_id: document_id.clone(),
                    ordinal: r.get::<_, i64>(1)? as usize,
                    text: r.get(2)?,
                    char_length: r.get::<_, i64>(3)? as usize,
                })
            })?
            .collect::<rusqlite::Result<_>>()?;
        let tables = conn
            .prepare(
                "SELECT table_id, markdown, caption, summary FROM tables_artifacts
                 WHERE document_id = ?1 ORDER BY table_id",
            )?
            .query_map([document_id.as_str()], |r| {
                Ok(TableArtifact {
                    table_id: r.get(0)?,
                    document_id: document_id.clone(),
                    markdown: r.get(1)?,
                    caption: r.get(2)?,
                    summary: r.get(3)?,
                })
            })?
            .collect::<rusqlite::Result<_>>()?;
        Ok(ProcessedDocument { document_id: document_id.clone(), title, format, paragraphs, chunks, tables })
    }

    pub fn document_exists(&self, document_id: &DocumentId) -> Result<bool> {
        Ok(self
            .lock()
            .query_row("SELECT 1 FROM documents WHERE document_id = ?1", [document_id.as_str()], |_| Ok(()))
            .optional()?
            .is_some())
    }

    pub fn list_documents(&self) -> Result<Vec<DocumentSummary>> {
        let conn = self.lock();
        let rows = conn
            .prepare(
                "SELECT d.document_id, d.title, d.format,
                        (SELECT count(*) FROM chunks c WHERE c.document_id = d.document_id),
                        (SELECT count(*) FROM tables_artifacts t WHERE t.document_id = d.document_id)
                 FROM documents d ORDER BY d.document_id",
            )?
            .query_map([], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, i64>(3)?, r.get::<_, i64>(4)?))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter()
            .map(|(id, title, format, chunks, tables)| {
                Ok(DocumentSummary {
                    document_id: DocumentId::new(id),
                    title,
                    format: DocumentFormat::from_str(&format).map_err(PersistenceError::Corrupt)?,
                    chunk_count: chunks as usize,
                    table_count: tables as usize,
                })
            })
            .collect()
    }

    // trees

    /// Replaces the study's committed tree in one transaction.
    pub fn save_tree(&self, study_id: &StudyId, tree: &FmeaTree) -> Result<()> {
        tree.validate().map_err(|e| PersistenceError::IntegrityViolation(e.to_string()))?;
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        write_tree(&tx, study_id, tree)?;
        tx.commit()?;
        Ok(())
    }

    /// Saves the study row and its tree together, so a commit either lands
    /// in full or not at all.
    pub fn save_study_and_tree(&self, study: &Study, tree: &FmeaTree) -> Result<()> {
        tree.validate().map_err(|e| PersistenceError::IntegrityViolation(e.to_string()))?;
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let n = tx.execute(
            "UPDATE studies SET asset_name = ?2, asset_description = ?3, current_step = ?4 WHERE study_id = ?1",
            params![study.study_id.as_str(), study.asset_name, study.asset_description, study.current_step.as_str()],
        )?;
        if n == 0 {
            return Err(PersistenceError::NotFound(format!("study `{}`", study.study_id)));
        }
        write_tree(&tx, &study.study_id, tree)?;
        tx.commit()?;
        Ok(())
    }

    /// The committed tree; a study that has never committed anything
    /// yields an empty tree.
    pub fn load_tree(&self, study_id: &StudyId) -> Result<FmeaTree> {
        let conn = self.lock();
        read_tree(&conn, study_id)
    }

    pub fn row_counts(&self, study_id: &StudyId) -> Result<RowCounts> {
        let conn = self.lock();
        let count = |sql: &str| -> Result<usize> {
            Ok(conn.query_row(sql, [study_id.as_str()], |r| r.get::<_, i64>(0))? as usize)
        };
        Ok(RowCounts {
            boundary_parts: count("SELECT count(*) FROM boundary_parts WHERE study_id = ?1")?,
            failure_locations: count("SELECT count(*) FROM failure_locations WHERE study_id = ?1")?,
            degradation_mechanisms: count(
                "SELECT count(*) FROM degradation_mechanisms m
                 JOIN failure_locations l ON m.location_id = l.node_id WHERE l.study_id = ?1",
            )?,
            degradation_influences: count(
                "SELECT count(*) FROM degradation_influences i
                 JOIN degradation_mechanisms m ON i.mechanism_id = m.node_id
                 JOIN failure_locations l ON m.location_id = l.node_id WHERE l.study_id = ?1",
            )?,
            preventive_tasks: count(
                "SELECT count(*) FROM preventive_tasks t
                 JOIN degradation_influences i ON t.influence_id = i.node_id
                 JOIN degradation_mechanisms m ON i.mechanism_id = m.node_id
                 JOIN failure_locations l ON m.location_id = l.node_id WHERE l.study_id = ?1",
            )?,
            node_provenance: count("SELECT count(*) FROM node_provenance WHERE study_id = ?1")?,
        })
    }

    /// Rows that point at a missing parent, plus provenance rows with no
    /// node. Zero on a healthy database.
    pub fn orphan_count(&self) -> Result<usize> {
        let conn = self.lock();
        let fk: usize = conn.prepare("PRAGMA foreign_key_check")?.query_map([], |_| Ok(()))?.count();
        let provenance: i64 = conn.query_row(
            "SELECT count(*) FROM node_provenance p WHERE
                NOT EXISTS (SELECT 1 FROM failure_locations WHERE node_id = p.node_id) AND
                NOT EXISTS (SELECT 1 FROM degradation_mechanisms WHERE node_id = p.node_id) AND
                NOT EXISTS (SELECT 1 FROM degradation_influences WHERE node_id = p.node_id) AND
                NOT EXISTS (SELECT 1 FROM preventive_tasks WHERE node_id = p.node_id)",
            [],
            |r| r.get(0),
        )?;
        Ok(fk + provenance as usize)
    }

    /// Renders the committed FMEA as canonical JSON or as CSV.
    pub fn export_fmea(&self, study_id: &StudyId, format: ExportFormat) -> Result<Vec<u8>> {
        let (study, tree) = {
            let conn = self.lock();
            (load_study_in(&conn, study_id)?, read_tree(&conn, study_id)?)
        };
        if tree.is_empty() {
            return Err(PersistenceError::EmptyTree);
        }
        match format {
            ExportFormat::Json => Ok(tree_to_json(&tree)),
            ExportFormat::Csv => tree_to_csv(&study.asset_name, &tree),
        }
    }
}

/// Listing entry for a stored document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub document_id: DocumentId,
    pub title: String,
    pub format: DocumentFormat,
    pub chunk_count: usize,
    pub table_count: usize,
}

impl DocumentSource for Database {
    fn processed_text(&self, document_id: &DocumentId) -> Option<String> {
        self.lock()
            .query_row("SELECT processed_text FROM documents WHERE document_id = ?1", [document_id.as_str()], |r| {
                r.get(0)
            })
            .optional()
            .ok()
            .flatten()
    }
}

fn load_study_in(conn: &Connection, study_id: &StudyId) -> Result<Study> {
    let row: Option<(String, String, String, String)> = conn
        .query_row(
            "SELECT asset_name, asset_description, current_step, created_at FROM studies WHERE study_id = ?1",
            [study_id.as_str()],
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
        )
        .optional()?;
    let (asset_name, asset_description, step, created_at) =
        row.ok_or_else(|| PersistenceError::NotFound(format!("study `{study_id}`")))?;
    let selected_document_ids = conn
        .prepare("SELECT document_id FROM study_documents WHERE study_id = ?1 ORDER BY document_id")?
        .query_map([study_id.as_str()], |r| r.get::<_, String>(0).map(DocumentId::new))?
        .collect::<rusqlite::Result<_>>()?;
    Ok(Study {
        study_id: study_id.clone(),
        asset_name,
        asset_description,
        selected_document_ids,
        current_step: GenerationStep::from_str(&step).map_err(|e| PersistenceError::Corrupt(e.to_string()))?,
        created_at: DateTime::parse_from_rfc3339(&created_at)
            .map_err(|e| PersistenceError::Corrupt(e.to_string()))?
            .with_timezone(&Utc),
    })
}

fn write_tree(tx: &Transaction<'_>, study_id: &StudyId, tree: &FmeaTree) -> Result<()> {
    let sid = study_id.as_str();
    let n = tx.execute("UPDATE studies SET boundary_overview = ?2 WHERE study_id = ?1", params![
        sid,
        tree.boundary.functional_overview
    ])?;
    if n == 0 {
        return Err(PersistenceError::NotFound(format!("study `{study_id}`")));
    }
    // children go with their locations via ON DELETE CASCADE
    tx.execute("DELETE FROM failure_locations WHERE study_id = ?1", [sid])?;
    tx.execute("DELETE FROM boundary_parts WHERE study_id = ?1", [sid])?;
    tx.execute("DELETE FROM node_provenance WHERE study_id = ?1", [sid])?;

    {
        let mut part = tx.prepare("INSERT INTO boundary_parts (study_id, position, name, name_key) VALUES (?1, ?2, ?3, ?4)")?;
        for (i, name) in tree.boundary.main_parts.iter().enumerate() {
            part.execute(params![sid, i as i64, name, name_key(name)])?;
        }
    }

    let mut loc = tx.prepare(
        "INSERT INTO failure_locations (node_id, study_id, position, name, name_key) VALUES (?1, ?2, ?3, ?4, ?5)",
    )?;
    let mut mech = tx.prepare(
        "INSERT INTO degradation_mechanisms (node_id, location_id, position, name, name_key) VALUES (?1, ?2, ?3, ?4, ?5)",
    )?;
    let mut infl = tx.prepare(
        "INSERT INTO degradation_influences (node_id, mechanism_id, position, name, name_key) VALUES (?1, ?2, ?3, ?4, ?5)",
    )?;
    let mut task =
        tx.prepare("INSERT INTO preventive_tasks (node_id, influence_id, position, description) VALUES (?1, ?2, ?3, ?4)")?;
    let mut prov = tx.prepare(
        "INSERT INTO node_provenance (node_id, study_id, origin, source_chunk_ids) VALUES (?1, ?2, ?3, ?4)",
    )?;

    for node in tree.flatten() {
        let id = node.node_id.as_str();
        let parent = node.parent_id.as_ref().map(NodeId::as_str);
        let pos = node.position as i64;
        match node.level {
            GenerationStep::FailureLocations => loc.execute(params![id, sid, pos, node.text, name_key(&node.text)])?,
            GenerationStep::DegradationMechanisms => {
                mech.execute(params![id, parent, pos, node.text, name_key(&node.text)])?
            }
            GenerationStep::DegradationInfluences => {
                infl.execute(params![id, parent, pos, node.text, name_key(&node.text)])?
            }
            GenerationStep::PreventiveTasks => task.execute(params![id, parent, pos, node.text])?,
            GenerationStep::Boundary => unreachable!("flatten never yields boundary nodes"),
        };
        let sources = serde_json::to_string(&node.provenance.source_chunk_ids)
            .map_err(|e| PersistenceError::Corrupt(e.to_string()))?;
        prov.execute(params![id, sid, node.provenance.origin.as_str(), sources])?;
    }
    Ok(())
}

fn read_tree(conn: &Connection, study_id: &StudyId) -> Result<FmeaTree> {
    let sid = study_id.as_str();
    let overview: Option<String> = conn
        .query_row("SELECT boundary_overview FROM studies WHERE study_id = ?1", [sid], |r| r.get(0))
        .optional()?;
    let functional_overview = overview.ok_or_else(|| PersistenceError::NotFound(format!("study `{study_id}`")))?;
    let main_parts = conn
        .prepare("SELECT name FROM boundary_parts WHERE study_id = ?1 ORDER BY position")?
        .query_map([sid], |r| r.get(0))?
        .collect::<rusqlite::Result<_>>()?;

    // one query for every node in the study, joined with its provenance
    let sql = "
        SELECT p.node_id, NULL, 1, l.position, l.name, p.origin, p.source_chunk_ids
          FROM failure_locations l JOIN node_provenance p ON p.node_id = l.node_id
         WHERE l.study_id = ?1
        UNION ALL
        SELECT p.node_id, m.location_id, 2, m.position, m.name, p.origin, p.source_chunk_ids
          FROM degradation_mechanisms m JOIN node_provenance p ON p.node_id = m.node_id
         WHERE p.study_id = ?1
        UNION ALL
        SELECT p.node_id, i.mechanism_id, 3, i.position, i.name, p.origin, p.source_chunk_ids
          FROM degradation_influences i JOIN node_provenance p ON p.node_id = i.node_id
         WHERE p.study_id = ?1
        UNION ALL
        SELECT p.node_id, t.influence_id, 4, t.position, t.description, p.origin, p.source_chunk_ids
          FROM preventive_tasks t JOIN node_provenance p ON p.node_id = t.node_id
         WHERE p.study_id = ?1";
    let rows = conn
        .prepare(sql)?
        .query_map([sid], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, Option<String>>(1)?,
                r.get::<_, i64>(2)?,
                r.get::<_, i64>(3)?,
                r.get::<_, String>(4)?,
                r.get::<_, String>(5)?,
                r.get::<_, String>(6)?,
            ))
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;

    let corrupt = |m: String| PersistenceError::Corrupt(m);
    let nodes = rows
        .into_iter()
        .map(|(id, parent, level, position, text, origin, sources)| {
            Ok(FlatNode {
                node_id: NodeId::new(id),
                parent_id: parent.map(NodeId::new),
                level: GenerationStep::ALL[level as usize],
                position: position as usize,
                text,
                provenance: ProvenanceTag {
                    origin: Origin::parse(&origin).ok_or_else(|| corrupt(format!("unknown origin `{origin}`")))?,
                    source_chunk_ids: serde_json::from_str(&sources).map_err(|e| corrupt(e.to_string()))?,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FmeaTree::from_flat(Boundary { functional_overview, main_parts }, nodes).map_err(|e| corrupt(e.to_string()))
}

/// Canonical JSON: pretty-printed, fields in declaration order, arrays in
/// tree order, trailing newline.
pub fn tree_to_json(tree: &FmeaTree) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(tree).expect("tree serializes");
    out.push(b'\n');
    out
}

/// Parses a JSON export back into a validated tree.
pub fn tree_from_json(bytes: &[u8]) -> Result<FmeaTree> {
    let tree: FmeaTree = serde_json::from_slice(bytes).map_err(|e| PersistenceError::Corrupt(e.to_string()))?;
    tree.validate().map_err(|e| PersistenceError::IntegrityViolation(e.to_string()))?;
    Ok(tree)
}

/// One row per (influence, task) pair and one row, with an empty task, per
/// influence that has no tasks. Locations or mechanisms with nothing below
/// them produce no rows.
pub fn tree_to_csv(asset_name: &str, tree: &FmeaTree) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| PersistenceError::StorageUnavailable(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for loc in &tree.locations {
        for mech in &loc.mechanisms {
            for infl in &mech.influences {
                let prefix = [asset_name, loc.name.as_str(), mech.name.as_str(), infl.name.as_str()];
                if infl.tasks.is_empty() {
                    w.write_record(prefix.iter().copied().chain([""])).map_err(io)?;
                }
                for task in &infl.tasks {
                    w.write_record(prefix.iter().copied().chain([task.description.as_str()])).map_err(io)?;
                }
            }
        }
    }
    w.into_inner().map_err(|e| PersistenceError::StorageUnavailable(e.to_string()))
}

/// Number of data rows [`tree_to_csv`] emits.
pub fn expected_csv_rows(tree: &FmeaTree) -> usize {
    tree.locations
        .iter()
        .flat_map(|l| &l.mechanisms)
        .flat_map(|m| &m.influences)
        .map(|i| i.tasks.len().max(1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DegradationInfluence, DegradationMechanism, FailureLocation, PreventiveTask};

    fn node(name: &str) -> (NodeId, String, ProvenanceTag) {
        (NodeId::generate(), name.to_string(), ProvenanceTag::generated(vec!["d#c0000".into()]))
    }

    fn task(desc: &str) -> PreventiveTask {
        let (node_id, description, provenance) = node(desc);
        PreventiveTask { node_id, description, provenance }
    }

    fn influence(name: &str, tasks: Vec<PreventiveTask>) -> DegradationInfluence {
        let (node_id, name, provenance) = node(name);
        DegradationInfluence { node_id, name, tasks, provenance }
    }

    fn mechanism(name: &str, influences: Vec<DegradationInfluence>) -> DegradationMechanism {
        let (node_id, name, provenance) = node(name);
        DegradationMechanism { node_id, name, influences, provenance }
    }

    fn location(name: &str, mechanisms: Vec<DegradationMechanism>) -> FailureLocation {
        let (node_id, name, provenance) = node(name);
        FailureLocation { node_id, name, mechanisms, provenance }
    }

    fn sample_tree() -> FmeaTree {
        FmeaTree {
            boundary: Boundary { functional_overview: "Pumps water".into(), main_parts: vec!["Motor".into(), "Pump".into()] },
            locations: vec![
                location(
                    "Bearing",
                    vec![
                        mechanism(
                            "Fatigue",
                            vec![influence("Overload", vec![task("Check load")]), influence("Misalignment", vec![])],
                        ),
                        mechanism("Wear", vec![]),
                    ],
                ),
                location("Seal", vec![mechanism("Abrasion", vec![influence("Dirty fluid", vec![task("Filter, weekly"), task("Inspect \"lip\"")])])]),
            ],
        }
    }

    fn db_with_study() -> (Database, Study) {
        let db = Database::open_in_memory().unwrap();
        let study = Study::new("Centrifugal pump", "Water pump", []).unwrap();
        db.save_study(&study).unwrap();
        (db, study)
    }

    #[test]
    fn migration_sets_version() {
        let db = Database::open_in_memory().unwrap();
        assert_eq!(db.schema_version().unwrap(), 1);
    }

    #[test]
    fn study_round_trip() {
        let (db, mut study) = db_with_study();
        study.advance();
        db.save_study(&study).unwrap();
        let loaded = db.load_study(&study.study_id).unwrap();
        assert_eq!(loaded.current_step, GenerationStep::FailureLocations);
        assert_eq!(loaded.created_at.timestamp_micros(), study.created_at.timestamp_micros());
        assert!(matches!(db.load_study(&StudyId::new("nope")), Err(PersistenceError::NotFound(_))));
    }

    #[test]
    fn unknown_selected_document_is_not_found() {
        let db = Database::open_in_memory().unwrap();
        let study = Study::new("Pump", "", [DocumentId::new("ghost")]).unwrap();
        assert!(matches!(db.save_study(&study), Err(PersistenceError::NotFound(_))));
    }

    #[test]
    fn boundary_only_tree_has_no_child_rows() {
        let (db, study) = db_with_study();
        let tree = FmeaTree::new(Boundary { functional_overview: "x".into(), main_parts: vec!["Motor".into()] });
        db.save_tree(&study.study_id, &tree).unwrap();
        let c = db.row_counts(&study.study_id).unwrap();
        assert_eq!((c.failure_locations, c.degradation_mechanisms, c.degradation_influences, c.preventive_tasks), (0, 0, 0, 0));
        assert_eq!(db.load_tree(&study.study_id).unwrap(), tree);
    }

    #[test]
    fn rows_match_node_counts() {
        let (db, study) = db_with_study();
        let tree = sample_tree();
        db.save_tree(&study.study_id, &tree).unwrap();
        let c = db.row_counts(&study.study_id).unwrap();
        assert_eq!(c.boundary_parts, 2);
        assert_eq!(c.failure_locations, 2);
        assert_eq!(c.degradation_mechanisms, 3);
        assert_eq!(c.degradation_influences, 3);
        assert_eq!(c.preventive_tasks, 3);
        assert_eq!(c.node_provenance, 11);
        assert_eq!(db.load_tree(&study.study_id).unwrap(), tree);
    }

    #[test]
    fn second_save_replaces_first() {
        let (db, study) = db_with_study();
        let mut tree = sample_tree();
        db.save_tree(&study.study_id, &tree).unwrap();
        tree.locations.remove(0);
        tree.locations[0].name = "Shaft seal".into();
        db.save_tree(&study.study_id, &tree).unwrap();
        assert_eq!(db.load_tree(&study.study_id).unwrap(), tree);
        assert_eq!(db.row_counts(&study.study_id).unwrap().failure_locations, 1);
        assert_eq!(db.orphan_count().unwrap(), 0);
    }

    #[test]
    fn ten_siblings_keep_order() {
        let (db, study) = db_with_study();
        let names = ["j", "c", "a", "h", "b", "i", "e", "g", "d", "f"];
        let tree = FmeaTree {
            boundary: Boundary::default(),
            locations: vec![location("Shaft", vec![mechanism("Wear", names.iter().map(|n| influence(n, vec![])).collect())])],
        };
        db.save_tree(&study.study_id, &tree).unwrap();
        let back = db.load_tree(&study.study_id).unwrap();
        let got: Vec<_> = back.locations[0].mechanisms[0].influences.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(got, names);
    }

    #[test]
    fn unknown_study_tree_is_not_found() {
        let db = Database::open_in_memory().unwrap();
        assert!(matches!(db.load_tree(&StudyId::new("x")), Err(PersistenceError::NotFound(_))));
        assert!(matches!(db.save_tree(&StudyId::new("x"), &sample_tree()), Err(PersistenceError::NotFound(_))));
    }

    #[test]
    fn csv_export_rows() {
        let (db, study) = db_with_study();
        let tree = sample_tree();
        db.save_tree(&study.study_id, &tree).unwrap();
        let csv = String::from_utf8(db.export_fmea(&study.study_id, ExportFormat::Csv).unwrap()).unwrap();
        let expected = "asset,failure_location,degradation_mechanism,degradation_influence,preventive_task\n\
Centrifugal pump,Bearing,Fatigue,Overload,Check load\n\
Centrifugal pump,Bearing,Fatigue,Misalignment,\n\
Centrifugal pump,Seal,Abrasion,Dirty fluid,\"Filter, weekly\"\n\
Centrifugal pump,Seal,Abrasion,Dirty fluid,\"Inspect \"\"lip\"\"\"\n";
        assert_eq!(csv, expected);
        assert_eq!(expected_csv_rows(&tree), 4);
    }

    #[test]
    fn two_influences_one_task_each() {
        let tree = FmeaTree {
            boundary: Boundary::default(),
            locations: vec![location(
                "Bearing",
                vec![mechanism("Wear", vec![influence("Dust", vec![task("Clean")]), influence("Heat", vec![task("Cool")])])],
            )],
        };
        let csv = tree_to_csv("Pump", &tree).unwrap();
        assert_eq!(csv.iter().filter(|&&b| b == b'\n').count(), 3);
    }

    #[test]
    fn json_export_reimports() {
        let (db, study) = db_with_study();
        let tree = sample_tree();
        db.save_tree(&study.study_id, &tree).unwrap();
        let json = db.export_fmea(&study.study_id, ExportFormat::Json).unwrap();
        assert_eq!(tree_from_json(&json).unwrap(), tree);
        assert_eq!(json, tree_to_json(&tree));
    }

    #[test]
    fn empty_tree_export_fails() {
        let (db, study) = db_with_study();
        assert!(matches!(db.export_fmea(&study.study_id, ExportFormat::Json), Err(PersistenceError::EmptyTree)));
        assert!(matches!(db.export_fmea(&StudyId::new("x"), ExportFormat::Csv), Err(PersistenceError::NotFound(_))));
    }

    #[test]
    fn deleting_study_cascades() {
        let (db, study) = db_with_study();
        db.save_tree(&study.study_id, &sample_tree()).unwrap();
        db.delete_study(&study.study_id).unwrap();
        assert_eq!(db.row_counts(&study.study_id).unwrap(), RowCounts::default());
        let conn = db.lock();
        let tasks: i64 = conn.query_row("SELECT count(*) FROM preventive_tasks", [], |r| r.get(0)).unwrap();
        assert_eq!(tasks, 0);
    }

    #[test]
    fn invalid_tree_rejected_before_writing() {
        let (db, study) = db_with_study();
        let good = sample_tree();
        db.save_tree(&study.study_id, &good).unwrap();
        let mut bad = good.clone();
        bad.locations[1].name = "BEARING ".into();
        assert!(matches!(db.save_tree(&study.study_id, &bad), Err(PersistenceError::IntegrityViolation(_))));
        assert_eq!(db.load_tree(&study.study_id).unwrap(), good);
    }

    #[test]
    fn export_format_parse() {
        assert_eq!("CSV".parse::<ExportFormat>().unwrap(), ExportFormat::Csv);
        assert!("xml".parse::<ExportFormat>().is_err());
    }
}
