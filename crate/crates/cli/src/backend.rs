//! Where commands are executed: a local data directory or a remote service.

use std::path::PathBuf;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use riskboard_core::board::{BoardDefinition, BoardSnapshot};
use riskboard_core::knowledge::{CatalogEntry, ControlEntry, ControlRecommendation, ThreatEntry};
use riskboard_core::{
    apply_command, ArchitectureModel, Board, CommandError, CommandOutcome, CriLevel, KnowledgeBase,
    MutationCommand, ReportFormat, Rule,
};
use riskboard_service::{FileStore, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

impl From<StoreError> for BackendError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::NotFound(_) => Self::NotFound(err.to_string()),
            StoreError::InvalidId(_) | StoreError::AlreadyExists(_) => {
                Self::Invalid(err.to_string())
            }
            StoreError::Board(_) | StoreError::Knowledge(_) => Self::Invalid(err.to_string()),
            other => Self::Failed(other.to_string()),
        }
    }
}

impl From<CommandError> for BackendError {
    fn from(err: CommandError) -> Self {
        match err {
            CommandError::Conflict { .. } => Self::Conflict(err.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardSummary {
    pub board_id: String,
    pub name: String,
    pub revision: u64,
    pub cards: usize,
}

pub struct NewBoard {
    pub model: ArchitectureModel,
    pub rules: Option<Vec<Rule>>,
    pub board_id: Option<String>,
    pub name: Option<String>,
}

pub trait Backend {
    fn create_board(&mut self, req: NewBoard, actor: &str) -> Result<(String, u64), BackendError>;
    fn list_boards(&mut self) -> Result<Vec<BoardSummary>, BackendError>;
    fn board(&mut self, id: &str) -> Result<BoardSnapshot, BackendError>;
    /// Apply a command; a missing expected revision means "the current one".
    fn command(&mut self, id: &str, cmd: MutationCommand) -> Result<CommandOutcome, BackendError>;
    fn report(&mut self, id: &str, format: ReportFormat) -> Result<String, BackendError>;
    fn threats(&mut self, asset_type: Option<&str>) -> Result<Vec<ThreatEntry>, BackendError>;
    fn controls(&mut self) -> Result<Vec<ControlEntry>, BackendError>;
    fn recommend_controls(
        &mut self,
        threat_id: &str,
        level: CriLevel,
    ) -> Result<ControlRecommendation, BackendError>;
    fn extend_knowledge(&mut self, entries: Vec<CatalogEntry>) -> Result<Value, BackendError>;
    /// Board used when none is named explicitly.
    fn default_board(&mut self) -> Result<String, BackendError>;
}

pub struct LocalBackend {
    store: FileStore,
    kb_path: Option<PathBuf>,
}

const CURRENT_FILE: &str = "CURRENT";

impl LocalBackend {
    pub fn open(data_dir: PathBuf, kb_path: Option<PathBuf>) -> Result<Self, BackendError> {
        Ok(Self {
            store: FileStore::open(data_dir)?,
            kb_path,
        })
    }

    fn knowledge(&self) -> Result<KnowledgeBase, BackendError> {
        Ok(self.store.knowledge_base(self.kb_path.as_deref())?)
    }
}

impl Backend for LocalBackend {
    fn create_board(&mut self, req: NewBoard, actor: &str) -> Result<(String, u64), BackendError> {
        let name = req.name.unwrap_or_else(|| req.model.name.clone());
        let rules = req
            .rules
            .unwrap_or_else(riskboard_core::rules::default_ruleset);
        let mut board = Board::new(&name, BoardDefinition::default_four_column(), rules, actor)
            .map_err(|e| BackendError::Invalid(e.to_string()))?;
        board
            .import_assets(&req.model, actor)
            .map_err(|e| BackendError::Invalid(e.to_string()))?;
        let id = self.store.create(req.board_id.as_deref(), &board)?;
        let current = self.store.root().join(CURRENT_FILE);
        std::fs::write(&current, format!("{id}\n"))
            .map_err(|e| BackendError::Failed(format!("{}: {e}", current.display())))?;
        Ok((id, board.revision()))
    }

    fn list_boards(&mut self) -> Result<Vec<BoardSummary>, BackendError> {
        let mut out = Vec::new();
        for id in self.store.list()? {
            let board = self.store.load(&id)?;
            out.push(BoardSummary {
                board_id: id,
                name: board.name().to_string(),
                revision: board.revision(),
                cards: board.cards().len(),
            });
        }
        Ok(out)
    }

    fn board(&mut self, id: &str) -> Result<BoardSnapshot, BackendError> {
        Ok(self.store.load(id)?.snapshot().clone())
    }

    fn command(
        &mut self,
        id: &str,
        mut cmd: MutationCommand,
    ) -> Result<CommandOutcome, BackendError> {
        let kb = self.knowledge()?;
        let mut board = self.store.load(id)?;
        cmd.expected_revision.get_or_insert(board.revision());
        let outcome = apply_command(&mut board, &kb, &cmd)?;
        self.store.append(id, &board, &outcome.events)?;
        Ok(outcome)
    }

    fn report(&mut self, id: &str, format: ReportFormat) -> Result<String, BackendError> {
        let kb = self.knowledge()?;
        let board = self.store.load(id)?;
        Ok(riskboard_core::report::board_report(&board, &kb).render(format))
    }

    fn threats(&mut self, asset_type: Option<&str>) -> Result<Vec<ThreatEntry>, BackendError> {
        let kb = self.knowledge()?;
        Ok(match asset_type {
            Some(t) => kb.recommend_threats(t).into_iter().cloned().collect(),
            None => kb.threats().cloned().collect(),
        })
    }

    fn controls(&mut self) -> Result<Vec<ControlEntry>, BackendError> {
        Ok(self.knowledge()?.controls().cloned().collect())
    }

    fn recommend_controls(
        &mut self,
        threat_id: &str,
        level: CriLevel,
    ) -> Result<ControlRecommendation, BackendError> {
        self.knowledge()?
            .recommend_controls(threat_id, level)
            .map_err(|e| BackendError::NotFound(e.to_string()))
    }

    fn extend_knowledge(&mut self, entries: Vec<CatalogEntry>) -> Result<Value, BackendError> {
        let added = entries.len();
        let kb = self.store.extend_knowledge(&self.knowledge()?, entries)?;
        Ok(json!({
            "added": added,
            "threats": kb.threats().count(),
            "controls": kb.controls().count(),
            "mappings": kb.mappings().len(),
        }))
    }

    fn default_board(&mut self) -> Result<String, BackendError> {
        let path = self.store.root().join(CURRENT_FILE);
        match std::fs::read_to_string(&path) {
            Ok(id) if !id.trim().is_empty() => Ok(id.trim().to_string()),
            _ => single_board(self.list_boards()?),
        }
    }
}

fn single_board(boards: Vec<BoardSummary>) -> Result<String, BackendError> {
    match boards.as_slice() {
        [only] => Ok(only.board_id.clone()),
        [] => Err(BackendError::NotFound(
            "no boards; run `board create` first".into(),
        )),
        _ => Err(BackendError::Invalid(
            "several boards exist; choose one with --board".into(),
        )),
    }
}

pub struct RemoteBackend {
    base: String,
    client: Client,
    actor: String,
}

impl RemoteBackend {
    pub fn new(base: &str, actor: &str) -> Self {
        Self {
            base: base.trim_end_matches('/').to_string(),
            client: Client::new(),
            actor: actor.to_string(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send(&self, request: reqwest::blocking::RequestBuilder) -> Result<Response, BackendError> {
        let resp = request
            .header("x-actor", &self.actor)
            .send()
            .map_err(|e| BackendError::Failed(format!("request failed: {e}")))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let body: Value = resp.json().unwrap_or(Value::Null);
        let message = body["error"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| format!("server answered {status}"));
        Err(match status {
            StatusCode::NOT_FOUND => BackendError::NotFound(message),
            StatusCode::CONFLICT => BackendError::Conflict(message),
            s if s.is_client_error() => BackendError::Invalid(message),
            _ => BackendError::Failed(message),
        })
    }

    fn json<T: for<'de> Deserialize<'de>>(resp: Response) -> Result<T, BackendError> {
        resp.json()
            .map_err(|e| BackendError::Failed(format!("unexpected response: {e}")))
    }
}

impl Backend for RemoteBackend {
    fn create_board(&mut self, req: NewBoard, _actor: &str) -> Result<(String, u64), BackendError> {
        let body = json!({
            "model": req.model,
            "rules": req.rules,
            "board_id": req.board_id,
            "name": req.name,
        });
        let resp: Value =
            Self::json(self.send(self.client.post(self.url("/v1/boards")).json(&body))?)?;
        let id = resp["board_id"].as_str().unwrap_or_default().to_string();
        Ok((id, resp["revision"].as_u64().unwrap_or_default()))
    }

    fn list_boards(&mut self) -> Result<Vec<BoardSummary>, BackendError> {
        #[derive(Deserialize)]
        struct Listing {
            boards: Vec<BoardSummary>,
        }
        let listing: Listing = Self::json(self.send(self.client.get(self.url("/v1/boards")))?)?;
        Ok(listing.boards)
    }

    fn board(&mut self, id: &str) -> Result<BoardSnapshot, BackendError> {
        Self::json(self.send(self.client.get(self.url(&format!("/v1/boards/{id}"))))?)
    }

    fn command(
        &mut self,
        id: &str,
        mut cmd: MutationCommand,
    ) -> Result<CommandOutcome, BackendError> {
        if cmd.expected_revision.is_none() {
            cmd.expected_revision = Some(self.board(id)?.revision);
        }
        let url = self.url(&format!("/v1/boards/{id}/commands"));
        Self::json(self.send(self.client.post(url).json(&cmd))?)
    }

    fn report(&mut self, id: &str, format: ReportFormat) -> Result<String, BackendError> {
        let fmt = match format {
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        };
        let url = self.url(&format!("/v1/boards/{id}/report?format={fmt}"));
        self.send(self.client.get(url))?
            .text()
            .map_err(|e| BackendError::Failed(e.to_string()))
    }

    fn threats(&mut self, asset_type: Option<&str>) -> Result<Vec<ThreatEntry>, BackendError> {
        let mut req = self.client.get(self.url("/v1/knowledge/threats"));
        if let Some(t) = asset_type {
            req = req.query(&[("asset_type", t)]);
        }
        Self::json(self.send(req)?)
    }

    fn controls(&mut self) -> Result<Vec<ControlEntry>, BackendError> {
        Self::json(self.send(self.client.get(self.url("/v1/knowledge/controls")))?)
    }

    fn recommend_controls(
        &mut self,
        threat_id: &str,
        level: CriLevel,
    ) -> Result<ControlRecommendation, BackendError> {
        let req = self
            .client
            .get(self.url("/v1/knowledge/controls"))
            .query(&[("threat", threat_id), ("level", level.as_str())]);
        Self::json(self.send(req)?)
    }

    fn extend_knowledge(&mut self, entries: Vec<CatalogEntry>) -> Result<Value, BackendError> {
        let req = self
            .client
            .post(self.url("/v1/knowledge/extensions"))
            .json(&json!({ "entries": entries }));
        Self::json(self.send(req)?)
    }

    fn default_board(&mut self) -> Result<String, BackendError> {
        single_board(self.list_boards()?)
    }
}
