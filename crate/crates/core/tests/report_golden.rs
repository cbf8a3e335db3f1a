use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use riskboard_core::board::{BoardDefinition, Clock};
use riskboard_core::report::board_report;
use riskboard_core::rules::default_ruleset;
use riskboard_core::{ArchitectureModel, Band, Board, KnowledgeBase, RoamStatus, ScoreInput};

fn scenario() -> Board {
    let kb = KnowledgeBase::builtin();
    let clock = Clock::Fixed(Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap());
    let mut board = Board::with_clock(
        "golden",
        BoardDefinition::default_four_column(),
        default_ruleset(),
        "alice",
        clock,
    )
    .unwrap();
    let model =
        ArchitectureModel::parse(include_str!("../data/models/smart-mobility.yaml")).unwrap();
    board.import_assets(&model, "alice").unwrap();
    let mv = |b: &mut Board, card: &str, to: usize| {
        assert!(b
            .move_card(card, to, "alice", BTreeSet::new())
            .unwrap()
            .approved());
    };
    let bands = |l: u8, i: u8| ScoreInput::Bands {
        likelihood: Band::new(l).unwrap(),
        impact: Band::new(i).unwrap(),
    };

    mv(&mut board, "database", 1);
    board
        .attach_threats(
            "database",
            &["T-I2".into(), "T-T1".into(), "T-D1".into()],
            &kb,
            "alice",
        )
        .unwrap();
    board
        .score_risk("database", "database.R1", bands(4, 5), "alice")
        .unwrap();
    board
        .score_risk("database", "database.R2", bands(2, 3), "alice")
        .unwrap();
    board
        .mark_deferred("database", "database.R3", true, "bob")
        .unwrap();
    mv(&mut board, "database", 2);
    board
        .attach_controls(
            "database",
            "database.R1",
            &["SC-28".into(), "AC-3".into()],
            &kb,
            "alice",
        )
        .unwrap();
    board
        .set_roam("database", "database.R1", RoamStatus::Mitigated, "alice")
        .unwrap();
    board
        .set_roam("database", "database.R2", RoamStatus::Resolved, "bob")
        .unwrap();

    mv(&mut board, "planner", 1);
    board
        .attest_no_threats("planner", "stateless | internal only", "carol")
        .unwrap();
    board
}

#[test]
fn markdown_report_matches_golden_file() {
    let kb = KnowledgeBase::builtin();
    let rendered = board_report(&scenario(), &kb).to_markdown();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.md");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(rendered, expected);
}

#[test]
fn report_is_deterministic() {
    let kb = KnowledgeBase::builtin();
    let a = board_report(&scenario(), &kb).to_json();
    let b = board_report(&scenario(), &kb).to_json();
    assert_eq!(a, b);
}
