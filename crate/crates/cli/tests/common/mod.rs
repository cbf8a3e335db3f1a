#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use riskboard_cli::{run, Outcome};
use riskboard_service::{router, AppState, FileStore};
use serde_json::Value;

pub const ACTOR: &str = "tester";

pub fn model_path(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data/models")
        .join(file)
}

/// Where a scripted session sends its commands.
#[derive(Debug, Clone)]
pub enum Target {
    Local(PathBuf),
    Remote(String),
}

/// Runs CLI invocations against one target, timing each call.
pub struct Session {
    target: Target,
    board: Option<String>,
    pub elapsed: Duration,
}

impl Session {
    pub fn new(target: Target) -> Self {
        Self {
            target,
            board: None,
            elapsed: Duration::ZERO,
        }
    }

    pub fn raw(&mut self, args: &[&str]) -> Outcome {
        let mut argv: Vec<String> = vec!["riskboard".into(), "--actor".into(), ACTOR.into()];
        match &self.target {
            Target::Local(dir) => {
                argv.push("--data-dir".into());
                argv.push(dir.display().to_string());
            }
            Target::Remote(url) => {
                argv.push("--url".into());
                argv.push(url.clone());
            }
        }
        if let Some(board) = &self.board {
            argv.push("--board".into());
            argv.push(board.clone());
        }
        argv.extend(args.iter().map(|a| a.to_string()));
        let start = Instant::now();
        let out = run(argv);
        self.elapsed += start.elapsed();
        out
    }

    /// Run and require exit code 0.
    pub fn ok(&mut self, args: &[&str]) -> String {
        let out = self.raw(args);
        assert_eq!(out.code, 0, "riskboard {args:?} failed: {}", out.output);
        out.output
    }

    pub fn json(&mut self, args: &[&str]) -> Value {
        let mut with_flag = args.to_vec();
        with_flag.push("--json");
        let text = self.ok(&with_flag);
        serde_json::from_str(&text).unwrap_or_else(|e| panic!("{args:?}: {e}: {text}"))
    }

    pub fn create(&mut self, model: &Path, id: &str) -> String {
        let path = model.display().to_string();
        let out = self.ok(&["board", "create", "--model", &path, "--id", id]);
        let board = out.lines().next().unwrap_or_default().to_string();
        self.board = Some(board.clone());
        board
    }
}

/// Start the HTTP service on its own runtime thread and return its base URL.
pub fn spawn_server(dir: &Path) -> String {
    let state = AppState::new(FileStore::open(dir).unwrap(), None).unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// Take every card of a freshly created board through all four columns:
/// two threats per card, one Low risk Accepted and one High risk Mitigated,
/// controls from the catalog suggestions.
pub fn full_scenario(s: &mut Session) {
    let cards = s.json(&["card", "list"]);
    for card in cards.as_array().unwrap() {
        let id = card["id"].as_str().unwrap();
        let asset_type = card["asset_type"].as_str().unwrap();
        s.ok(&["card", "move", id, "--to", "risks"]);

        let threats = s.json(&["kb", "threats", "--asset-type", asset_type]);
        let threats: Vec<&str> = threats
            .as_array()
            .unwrap()
            .iter()
            .take(2)
            .map(|t| t["id"].as_str().unwrap())
            .collect();
        assert_eq!(threats.len(), 2, "catalog has two threats for {asset_type}");
        let mut add = vec!["risk", "add", id];
        add.extend(&threats);
        let risks: Vec<String> = s.ok(&add).lines().map(str::to_string).collect();
        assert_eq!(risks.len(), 2);

        s.ok(&[
            "risk",
            "score",
            id,
            &risks[0],
            "--likelihood",
            "1",
            "--impact",
            "2",
        ]);
        s.ok(&[
            "risk",
            "score",
            id,
            &risks[1],
            "--threat-agent",
            "7,8,6,9",
            "--vulnerability",
            "6,7,8,7",
            "--technical-impact",
            "8,8,7,9",
            "--business-impact",
            "6,9,8,7",
        ]);
        s.ok(&["card", "move", id, "--to", "controls"]);

        for (risk, status) in risks.iter().zip(["accepted", "mitigated"]) {
            let rec = s.json(&["control", "suggest", id, risk]);
            let pick = rec["required"]
                .as_array()
                .unwrap()
                .first()
                .or_else(|| rec["optional"].as_array().unwrap().first())
                .expect("catalog has controls");
            let control = pick["id"].as_str().unwrap().to_string();
            s.ok(&["control", "add", id, risk, &control]);
            s.ok(&["risk", "roam", id, risk, status]);
        }
        s.ok(&["card", "move", id, "--to", "validation"]);
    }
}

/// Check the final report of `full_scenario`; returns the number of cards.
pub fn assert_fully_addressed(report: &Value) -> usize {
    let cards = report["cards"].as_array().unwrap();
    for card in cards {
        assert_eq!(card["fully_addressed"], true, "{}", card["card_id"]);
        assert_eq!(card["column"], "Validation");
        let risks = card["risks"].as_array().unwrap();
        assert!(risks.len() >= 2);
        for risk in risks {
            let status = risk["roam"]["status"].as_str().unwrap();
            assert!(status == "Accepted" || status == "Mitigated", "{risk}");
            assert!(!risk["controls"].as_array().unwrap().is_empty(), "{risk}");
        }
    }
    cards.len()
}
