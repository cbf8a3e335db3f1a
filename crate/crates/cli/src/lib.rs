//! Command-line driver for risk-assessment boards.
//!
//! Works against a local data directory or a running service. Exit codes:
//! 0 on success, 2 when the board's rules reject a move, 1 on any error.

pub mod backend;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use riskboard_core::command::ColumnRef;
use riskboard_core::knowledge::{CatalogEntry, KnowledgeOverlay};
use riskboard_core::scoring::FactorGroup;
use riskboard_core::{
    ArchitectureModel, Band, Command, CommandOutcome, CriLevel, FactorSet, KnowledgeBase,
    MutationCommand, ReportFormat, RoamKind, Rule, StrideCategory,
};
use serde::Serialize;

use backend::{Backend, BackendError, LocalBackend, NewBoard, RemoteBackend};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "riskboard",
    version,
    about = "Rule-gated Kanban board for component risk assessment"
)]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Identity recorded on events.
    #[arg(long, global = true, env = "RISKBOARD_ACTOR")]
    pub actor: Option<String>,
    /// Local data directory (default: ./riskboard-data).
    #[arg(
        long,
        global = true,
        env = "RISKBOARD_DATA_DIR",
        conflicts_with = "url"
    )]
    pub data_dir: Option<PathBuf>,
    /// Base URL of a riskboard service.
    #[arg(long, global = true, env = "RISKBOARD_URL")]
    pub url: Option<String>,
    /// Board id; defaults to the last created (local) or the only board.
    #[arg(long, global = true, env = "RISKBOARD_BOARD")]
    pub board: Option<String>,
    /// Knowledge-base file for local mode (default: built-in catalog).
    #[arg(long, global = true, env = "RISKBOARD_KB")]
    pub kb: Option<PathBuf>,
    /// Fail with a conflict unless the board is at this revision.
    #[arg(long, global = true)]
    pub expect_revision: Option<u64>,
    #[command(subcommand)]
    pub command: TopCommand,
}

#[derive(Debug, Subcommand)]
pub enum TopCommand {
    #[command(subcommand)]
    Board(BoardCmd),
    #[command(subcommand)]
    Card(CardCmd),
    #[command(subcommand)]
    Risk(RiskCmd),
    #[command(subcommand)]
    Control(ControlCmd),
    #[command(subcommand)]
    Kb(KbCmd),
    /// Print the risk-assessment report.
    Report {
        #[arg(long, default_value = "md")]
        format: ReportFormat,
    },
}

#[derive(Debug, Subcommand)]
pub enum BoardCmd {
    /// Create a board and import the model's components as cards.
    Create {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        name: Option<String>,
        /// Explicit board id.
        #[arg(long)]
        id: Option<String>,
        /// Rule-set JSON file (default rules otherwise).
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    Show,
    List,
}

#[derive(Debug, Subcommand)]
pub enum CardCmd {
    /// Import the components of a model into an existing board.
    Import {
        #[arg(long)]
        model: PathBuf,
    },
    List,
    /// Request a move; the board's rules decide.
    Move {
        card: String,
        /// Column index, key or name.
        #[arg(long)]
        to: String,
        /// Recorded approvals, for rules that require them.
        #[arg(long = "approve")]
        approvals: Vec<String>,
    },
    /// Declare that no threats apply to a component.
    Attest {
        card: String,
        #[arg(long)]
        note: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum RiskCmd {
    /// Attach catalog threats to a card.
    Add {
        card: String,
        #[arg(required = true)]
        threats: Vec<String>,
    },
    /// Score one risk from bands or from factor groups.
    Score(ScoreArgs),
    /// Score all risks of a STRIDE category without a per-threat score.
    ScoreCategory {
        card: String,
        #[arg(long)]
        category: String,
        #[arg(long)]
        likelihood: u8,
        #[arg(long)]
        impact: u8,
    },
    /// Exclude a risk from movement gates (or include it again with --undo).
    Defer {
        card: String,
        risk: String,
        #[arg(long)]
        undo: bool,
    },
    /// Set the ROAM status: resolved, owned, accepted, mitigated or unset.
    Roam {
        card: String,
        risk: String,
        status: String,
        #[arg(long)]
        owner: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub card: String,
    pub risk: String,
    #[arg(long, requires = "impact")]
    pub likelihood: Option<u8>,
    #[arg(long, requires = "likelihood")]
    pub impact: Option<u8>,
    /// Four comma-separated values in [0, 9].
    #[arg(long, conflicts_with_all = ["likelihood", "impact"])]
    pub threat_agent: Option<String>,
    #[arg(long, conflicts_with_all = ["likelihood", "impact"])]
    pub vulnerability: Option<String>,
    #[arg(long, conflicts_with_all = ["likelihood", "impact"])]
    pub technical_impact: Option<String>,
    #[arg(long, conflicts_with_all = ["likelihood", "impact"])]
    pub business_impact: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ControlCmd {
    /// Attach catalog controls to a scored risk.
    Add {
        card: String,
        risk: String,
        #[arg(required = true)]
        controls: Vec<String>,
    },
    /// Show required and optional controls for a risk at its CRI level.
    Suggest { card: String, risk: String },
}

#[derive(Debug, Subcommand)]
pub enum KbCmd {
    /// Check a knowledge-base or overlay file.
    Validate { file: PathBuf },
    /// Add catalog entries from an overlay file.
    Extend { file: PathBuf },
    Threats {
        #[arg(long)]
        asset_type: Option<String>,
    },
    Controls {
        #[arg(long, requires = "level")]
        threat: Option<String>,
        #[arg(long, requires = "threat")]
        level: Option<String>,
    },
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub output: String,
}

impl Outcome {
    fn ok(output: String) -> Self {
        Self {
            code: EXIT_OK,
            output,
        }
    }

    fn error(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_ERROR,
            output: format!("error: {message}\n"),
        }
    }
}

/// Parse `argv` (including the program name) and run the command.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_OK
            };
            return Outcome {
                code,
                output: err.render().to_string(),
            };
        }
    };
    let actor = cli
        .actor
        .clone()
        .or_else(|| std::env::var("USER").ok())
        .unwrap_or_else(|| "cli".into());
    let mut backend: Box<dyn Backend> = match &cli.url {
        Some(url) => Box::new(RemoteBackend::new(url, &actor)),
        None => {
            let dir = cli
                .data_dir
                .clone()
                .unwrap_or_else(|| "riskboard-data".into());
            match LocalBackend::open(dir, cli.kb.clone()) {
                Ok(b) => Box::new(b),
                Err(e) => return Outcome::error(e),
            }
        }
    };
    let session = Session { cli: &cli, actor };
    match session.dispatch(backend.as_mut()) {
        Ok(outcome) => outcome,
        Err(err) => Outcome::error(err),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Input(String),
}

fn input(message: impl std::fmt::Display) -> CliError {
    CliError::Input(message.to_string())
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn band(n: u8) -> Result<Band, CliError> {
    Band::new(n).map_err(input)
}

fn group(text: &str) -> Result<FactorGroup, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| input(format!("not a number: `{v}`")))
        })
        .collect::<Result<_, _>>()?;
    FactorGroup::try_from(values).map_err(input)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

struct Session<'a> {
    cli: &'a Cli,
    actor: String,
}

impl Session<'_> {
    fn board_id(&self, backend: &mut dyn Backend) -> Result<String, CliError> {
        match &self.cli.board {
            Some(id) => Ok(id.clone()),
            None => Ok(backend.default_board()?),
        }
    }

    fn mutate(
        &self,
        backend: &mut dyn Backend,
        command: Command,
    ) -> Result<CommandOutcome, CliError> {
        let id = self.board_id(backend)?;
        let cmd = MutationCommand {
            expected_revision: self.cli.expect_revision,
            actor: Some(self.actor.clone()),
            command,
        };
        Ok(backend.command(&id, cmd)?)
    }

    /// Run a mutation and describe its result.
    fn mutate_and_say(
        &self,
        backend: &mut dyn Backend,
        command: Command,
        say: impl FnOnce(&CommandOutcome) -> String,
    ) -> Result<Outcome, CliError> {
        let outcome = self.mutate(backend, command)?;
        let output = if self.cli.json {
            to_json(&outcome)
        } else {
            say(&outcome)
        };
        Ok(Outcome::ok(output))
    }

    fn dispatch(&self, backend: &mut dyn Backend) -> Result<Outcome, CliError> {
        match &self.cli.command {
            TopCommand::Board(cmd) => self.board(backend, cmd),
            TopCommand::Card(cmd) => self.card(backend, cmd),
            TopCommand::Risk(cmd) => self.risk(backend, cmd),
            TopCommand::Control(cmd) => self.control(backend, cmd),
            TopCommand::Kb(cmd) => self.kb(backend, cmd),
            TopCommand::Report { format } => {
                let id = self.board_id(backend)?;
                let format = if self.cli.json {
                    ReportFormat::Json
                } else {
                    *format
                };
                Ok(Outcome::ok(backend.report(&id, format)?))
            }
        }
    }

    fn board(&self, backend: &mut dyn Backend, cmd: &BoardCmd) -> Result<Outcome, CliError> {
        match cmd {
            BoardCmd::Create {
                model,
                name,
                id,
                rules,
            } => {
                let model = ArchitectureModel::parse(&read_file(model)?).map_err(input)?;
                let rules: Option<Vec<Rule>> = match rules {
                    Some(path) => Some(serde_json::from_str(&read_file(path)?).map_err(input)?),
                    None => None,
                };
                let cards = model.components.len();
                let req = NewBoard {
                    model,
                    rules,
                    board_id: id.clone(),
                    name: name.clone(),
                };
                let (id, revision) = backend.create_board(req, &self.actor)?;
                Ok(Outcome::ok(if self.cli.json {
                    to_json(&serde_json::json!({ "board_id": id, "revision": revision }))
                } else {
                    format!("{id}\ncreated board {id} with {cards} cards (revision {revision})\n")
                }))
            }
            BoardCmd::Show => {
                let id = self.board_id(backend)?;
                let snap = backend.board(&id)?;
                if self.cli.json {
                    return Ok(Outcome::ok(to_json(&snap)));
                }
                let mut out = format!("{} [{id}] revision {}\n", snap.name, snap.revision);
                for (i, column) in snap.definition.columns.iter().enumerate() {
                    let _ = writeln!(out, "\n{i}. {} ({})", column.name, column.key);
                    for card in snap.cards.iter().filter(|c| c.column_index == i) {
                        let mark = if card.fully_addressed {
                            " [addressed]"
                        } else {
                            ""
                        };
                        let _ = writeln!(
                            out,
                            "   - {} ({}, {} risks){mark}",
                            card.id,
                            card.asset_type,
                            card.risks.len()
                        );
                    }
                }
                Ok(Outcome::ok(out))
            }
            BoardCmd::List => {
                let boards = backend.list_boards()?;
                if self.cli.json {
                    return Ok(Outcome::ok(to_json(&boards)));
                }
                let mut out = String::new();
                for b in boards {
                    let _ = writeln!(
                        out,
                        "{}\t{}\trevision {}\t{} cards",
                        b.board_id, b.name, b.revision, b.cards
                    );
                }
                Ok(Outcome::ok(out))
            }
        }
    }

    fn card(&self, backend: &mut dyn Backend, cmd: &CardCmd) -> Result<Outcome, CliError> {
        match cmd {
            CardCmd::Import { model } => {
                let model = ArchitectureModel::parse(&read_file(model)?).map_err(input)?;
                self.mutate_and_say(backend, Command::ImportAssets { model }, |o| {
                    format!("imported {} (revision {})\n", o.ids.join(", "), o.revision)
                })
            }
            CardCmd::List => {
                let id = self.board_id(backend)?;
                let snap = backend.board(&id)?;
                if self.cli.json {
                    return Ok(Outcome::ok(to_json(&snap.cards)));
                }
                let mut out = String::new();
                for card in &snap.cards {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{} risks\t{}",
                        card.id,
                        card.asset_type,
                        snap.definition.name_at(card.column_index),
                        card.risks.len(),
                        if card.fully_addressed {
                            "fully addressed"
                        } else {
                            "open"
                        }
                    );
                }
                Ok(Outcome::ok(out))
            }
            CardCmd::Move {
                card,
                to,
                approvals,
            } => {
                let to = match to.parse::<usize>() {
                    Ok(i) => ColumnRef::Index(i),
                    Err(_) => ColumnRef::Handle(to.clone()),
                };
                let outcome = self.mutate(
                    backend,
                    Command::Move {
                        card_id: card.clone(),
                        to,
                        approvals: approvals.iter().cloned().collect::<BTreeSet<_>>(),
                    },
                )?;
                let verdict = outcome
                    .verdict
                    .clone()
                    .unwrap_or_else(riskboard_core::Verdict::approve);
                let code = if verdict.approved() {
                    EXIT_OK
                } else {
                    EXIT_REJECTED
                };
                let output = if self.cli.json {
                    to_json(&outcome)
                } else if verdict.approved() {
                    format!("moved {card} (revision {})\n", outcome.revision)
                } else {
                    format!("move of {card} {verdict}")
                };
                Ok(Outcome { code, output })
            }
            CardCmd::Attest { card, note } => self.mutate_and_say(
                backend,
                Command::AttestNoThreats {
                    card_id: card.clone(),
                    note: note.clone(),
                },
                |o| format!("attested {card} (revision {})\n", o.revision),
            ),
        }
    }

    fn risk(&self, backend: &mut dyn Backend, cmd: &RiskCmd) -> Result<Outcome, CliError> {
        match cmd {
            RiskCmd::Add { card, threats } => self.mutate_and_say(
                backend,
                Command::AttachThreats {
                    card_id: card.clone(),
                    threat_ids: threats.clone(),
                },
                |o| o.ids.iter().map(|id| format!("{id}\n")).collect(),
            ),
            RiskCmd::Score(args) => {
                let (factors, likelihood, impact) = match (args.likelihood, args.impact) {
                    (Some(l), Some(i)) => (None, Some(band(l)?), Some(band(i)?)),
                    _ => {
                        let parse = |g: &Option<String>| g.as_deref().map(group).transpose();
                        let set = FactorSet {
                            threat_agent: parse(&args.threat_agent)?,
                            vulnerability: parse(&args.vulnerability)?,
                            technical_impact: parse(&args.technical_impact)?,
                            business_impact: parse(&args.business_impact)?,
                        };
                        (Some(set), None, None)
                    }
                };
                let risk = args.risk.clone();
                let card = args.card.clone();
                let outcome = self.mutate(
                    backend,
                    Command::ScoreRisk {
                        card_id: card.clone(),
                        risk_id: risk.clone(),
                        factors,
                        likelihood,
                        impact,
                    },
                )?;
                if self.cli.json {
                    return Ok(Outcome::ok(to_json(&outcome)));
                }
                let id = self.board_id(backend)?;
                let snap = backend.board(&id)?;
                let score = snap
                    .cards
                    .iter()
                    .find(|c| c.id == card)
                    .and_then(|c| c.risk(&risk))
                    .and_then(|r| r.score);
                Ok(Outcome::ok(match score {
                    Some(s) => format!("{risk}: {s} (revision {})\n", outcome.revision),
                    None => format!("{risk} scored (revision {})\n", outcome.revision),
                }))
            }
            RiskCmd::ScoreCategory {
                card,
                category,
                likelihood,
                impact,
            } => {
                let category: StrideCategory = category.parse().map_err(input)?;
                self.mutate_and_say(
                    backend,
                    Command::ApplyCategoryScore {
                        card_id: card.clone(),
                        category,
                        likelihood: band(*likelihood)?,
                        impact: band(*impact)?,
                    },
                    |o| {
                        if o.ids.is_empty() {
                            format!(
                                "no risks without a per-threat score (revision {})\n",
                                o.revision
                            )
                        } else {
                            format!("scored {} (revision {})\n", o.ids.join(", "), o.revision)
                        }
                    },
                )
            }
            RiskCmd::Defer { card, risk, undo } => self.mutate_and_say(
                backend,
                Command::MarkDeferred {
                    card_id: card.clone(),
                    risk_id: risk.clone(),
                    deferred: !undo,
                },
                |o| {
                    let what = if *undo { "undeferred" } else { "deferred" };
                    format!("{what} {risk} (revision {})\n", o.revision)
                },
            ),
            RiskCmd::Roam {
                card,
                risk,
                status,
                owner,
            } => {
                let status: RoamKind = status.parse().map_err(input)?;
                self.mutate_and_say(
                    backend,
                    Command::SetRoam {
                        card_id: card.clone(),
                        risk_id: risk.clone(),
                        status,
                        owner: owner.clone(),
                    },
                    |o| {
                        let note = if status == RoamKind::Resolved {
                            "; risk eliminated"
                        } else {
                            ""
                        };
                        format!("{risk} -> {status}{note} (revision {})\n", o.revision)
                    },
                )
            }
        }
    }

    fn control(&self, backend: &mut dyn Backend, cmd: &ControlCmd) -> Result<Outcome, CliError> {
        match cmd {
            ControlCmd::Add {
                card,
                risk,
                controls,
            } => self.mutate_and_say(
                backend,
                Command::AttachControls {
                    card_id: card.clone(),
                    risk_id: risk.clone(),
                    control_ids: controls.clone(),
                },
                |o| format!("controls attached to {risk} (revision {})\n", o.revision),
            ),
            ControlCmd::Suggest { card, risk } => {
                let id = self.board_id(backend)?;
                let snap = backend.board(&id)?;
                let r = snap
                    .cards
                    .iter()
                    .find(|c| &c.id == card)
                    .ok_or_else(|| input(format!("unknown card `{card}`")))?
                    .risk(risk)
                    .ok_or_else(|| input(format!("unknown risk `{risk}`")))?;
                let level = r
                    .level()
                    .ok_or_else(|| input("score before selecting controls"))?;
                let rec = backend.recommend_controls(&r.threat_id, level)?;
                if self.cli.json {
                    return Ok(Outcome::ok(to_json(&rec)));
                }
                let mut out = format!("{risk} ({}, {level}):\n", r.threat_id);
                let list =
                    |out: &mut String,
                     label: &str,
                     items: &[riskboard_core::knowledge::ControlEntry]| {
                        let _ = writeln!(out, "{label}:");
                        if items.is_empty() {
                            out.push_str("  (none)\n");
                        }
                        for c in items {
                            let _ = writeln!(out, "  {} {}", c.id, c.title);
                        }
                    };
                list(&mut out, "required", &rec.required);
                list(&mut out, "optional", &rec.optional);
                Ok(Outcome::ok(out))
            }
        }
    }

    fn kb(&self, backend: &mut dyn Backend, cmd: &KbCmd) -> Result<Outcome, CliError> {
        match cmd {
            KbCmd::Validate { file } => {
                let text = read_file(file)?;
                let summary = match KnowledgeBase::load(&text) {
                    Ok(kb) => format!(
                        "valid knowledge base: {} threats, {} controls, {} mappings\n",
                        kb.threats().count(),
                        kb.controls().count(),
                        kb.mappings().len()
                    ),
                    Err(base_err) => {
                        let overlay =
                            KnowledgeOverlay::parse(&text).map_err(|_| input(base_err))?;
                        KnowledgeBase::builtin()
                            .apply_overlay(&overlay)
                            .map_err(input)?;
                        format!("valid overlay: {} entries\n", overlay.entries.len())
                    }
                };
                Ok(Outcome::ok(summary))
            }
            KbCmd::Extend { file } => {
                let text = read_file(file)?;
                let entries: Vec<CatalogEntry> = match KnowledgeOverlay::parse(&text) {
                    Ok(overlay) => overlay.entries,
                    Err(_) => serde_json::from_str(&text).map_err(input)?,
                };
                let summary = backend.extend_knowledge(entries)?;
                Ok(Outcome::ok(if self.cli.json {
                    to_json(&summary)
                } else {
                    format!(
                        "added {} entries; catalog now has {} threats and {} controls\n",
                        summary["added"], summary["threats"], summary["controls"]
                    )
                }))
            }
            KbCmd::Threats { asset_type } => {
                let threats = backend.threats(asset_type.as_deref())?;
                if self.cli.json {
                    return Ok(Outcome::ok(to_json(&threats)));
                }
                let mut out = String::new();
                for t in threats {
                    let _ = writeln!(out, "{}\t{}\t{}", t.id, t.stride.label(), t.title);
                }
                Ok(Outcome::ok(out))
            }
            KbCmd::Controls { threat, level } => match (threat, level) {
                (Some(threat), Some(level)) => {
                    let level: CriLevel = level.parse().map_err(input)?;
                    let rec = backend.recommend_controls(threat, level)?;
                    if self.cli.json {
                        return Ok(Outcome::ok(to_json(&rec)));
                    }
                    let mut out = String::new();
                    for c in &rec.required {
                        let _ = writeln!(out, "required\t{}\t{}", c.id, c.title);
                    }
                    for c in &rec.optional {
                        let _ = writeln!(out, "optional\t{}\t{}", c.id, c.title);
                    }
                    Ok(Outcome::ok(out))
                }
                _ => {
                    let controls = backend.controls()?;
                    if self.cli.json {
                        return Ok(Outcome::ok(to_json(&controls)));
                    }
                    let mut out = String::new();
                    for c in controls {
                        let ccm: Vec<_> = c.ccm_ids.iter().cloned().collect();
                        let _ = writeln!(out, "{}\t{}\tCCM {}", c.id, c.title, ccm.join(","));
                    }
                    Ok(Outcome::ok(out))
                }
            },
        }
    }
}
