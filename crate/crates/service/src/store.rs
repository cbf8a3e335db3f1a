//! File-backed board storage.
//!
//! Layout under the data directory:
//!
//! ```text
//! boards/{id}/board.json      current board document (includes rules)
//! boards/{id}/rules.json      the board's rule set
//! boards/{id}/events.ndjson   append-only event log
//! knowledge/overlay.json      catalog extensions
//! ```
//!
//! Events are appended and synced before the board document is replaced,
//! so the log is always at least as new as `board.json`. On load the board
//! is rebuilt from the log and `board.json` is rewritten if it lags behind.
//! The store is synchronous and does no locking of its own; callers
//! serialize mutations per board.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use riskboard_core::board::{parse_event_log, render_event_log, Event};
use riskboard_core::knowledge::{CatalogEntry, KnowledgeError, KnowledgeOverlay};
use riskboard_core::{Board, BoardError, KnowledgeBase};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("board `{0}` not found")]
    NotFound(String),
    #[error("board `{0}` already exists")]
    AlreadyExists(String),
    #[error("invalid board id `{0}`: use letters, digits, `-` and `_`")]
    InvalidId(String),
    #[error("corrupt board `{id}`: {message}")]
    Corrupt { id: String, message: String },
    #[error("knowledge base: {0}")]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn valid_board_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Write `contents` to `path` via a synced temporary file and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    /// Open (and create if needed) a data directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in [root.join("boards"), root.join("knowledge")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn board_dir(&self, id: &str) -> PathBuf {
        self.root.join("boards").join(id)
    }

    pub fn events_path(&self, id: &str) -> PathBuf {
        self.board_dir(id).join("events.ndjson")
    }

    pub fn document_path(&self, id: &str) -> PathBuf {
        self.board_dir(id).join("board.json")
    }

    fn overlay_path(&self) -> PathBuf {
        self.root.join("knowledge").join("overlay.json")
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_board_id(id) && self.events_path(id).exists()
    }

    /// Ids of all stored boards, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("boards");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if self.exists(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Persist a new board. Without an explicit id a fresh one is generated.
    pub fn create(&self, id: Option<&str>, board: &Board) -> Result<String, StoreError> {
        let id = match id {
            Some(id) if !valid_board_id(id) => return Err(StoreError::InvalidId(id.into())),
            Some(id) => id.to_string(),
            None => uuid::Uuid::new_v4().simple().to_string()[..12].to_string(),
        };
        let dir = self.board_dir(&id);
        if dir.exists() {
            return Err(StoreError::AlreadyExists(id));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let rules = serde_json::to_string_pretty(board.rules()).expect("rules serialize") + "\n";
        write_atomic(&dir.join("rules.json"), &rules)?;
        self.append(&id, board, board.events())?;
        Ok(id)
    }

    /// Append newly produced events, then replace the board document.
    pub fn append(&self, id: &str, board: &Board, events: &[Event]) -> Result<(), StoreError> {
        let path = self.events_path(id);
        if !events.is_empty() {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            file.write_all(render_event_log(events).as_bytes())
                .map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
        }
        write_atomic(&self.document_path(id), &board.to_document_json())
    }

    /// Rebuild a board from its event log. A torn final line left by an
    /// interrupted append is discarded.
    pub fn load(&self, id: &str) -> Result<Board, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let path = self.events_path(id);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let complete = match text.rfind('\n') {
            Some(end) => &text[..=end],
            None => "",
        };
        let events = parse_event_log(complete).map_err(|e| StoreError::Corrupt {
            id: id.to_string(),
            message: e.to_string(),
        })?;
        if complete.len() != text.len() {
            let file = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(io_err(&path))?;
            file.set_len(complete.len() as u64).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        }
        let board = Board::replay(events)?;
        let doc_path = self.document_path(id);
        let rendered = board.to_document_json();
        if fs::read_to_string(&doc_path).ok().as_deref() != Some(rendered.as_str()) {
            write_atomic(&doc_path, &rendered)?;
        }
        Ok(board)
    }

    pub fn read_overlay(&self) -> Result<KnowledgeOverlay, StoreError> {
        let path = self.overlay_path();
        match fs::read_to_string(&path) {
            Ok(text) => Ok(KnowledgeOverlay::parse(&text)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(KnowledgeOverlay::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// The base catalog (a file, or the built-in one) with the stored
    /// overlay applied.
    pub fn knowledge_base(&self, base: Option<&Path>) -> Result<KnowledgeBase, StoreError> {
        let base = match base {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                KnowledgeBase::load(&text)?
            }
            None => KnowledgeBase::builtin(),
        };
        Ok(base.apply_overlay(&self.read_overlay()?)?)
    }

    /// Validate `entries` against `current` and append them to the stored
    /// overlay. Returns the extended knowledge base.
    pub fn extend_knowledge(
        &self,
        current: &KnowledgeBase,
        entries: Vec<CatalogEntry>,
    ) -> Result<KnowledgeBase, StoreError> {
        let addition = KnowledgeOverlay {
            entries,
            ..KnowledgeOverlay::default()
        };
        let extended = current.apply_overlay(&addition)?;
        let mut overlay = self.read_overlay()?;
        overlay.entries.extend(addition.entries);
        write_atomic(&self.overlay_path(), &(overlay.to_json() + "\n"))?;
        Ok(extended)
    }
}
