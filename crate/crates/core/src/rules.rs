//! Movement approval.
//!
//! Every card movement between columns is checked against a rule set. A rule
//! guards entry into one column (or every forward move, for target `any`)
//! with a condition from a closed vocabulary. Conditions that depend on the
//! card's contents are decided by running [`Query`] values against a
//! [`BoardStore`]; conditions decidable from the request alone generate no
//! queries.
//!
//! Backward moves are always approved without evaluating any rule.
//! Deferred risks are invisible to every gate check.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{AssetCard, BoardDefinition};
use crate::domain::RoamKind;

/// Target of rules evaluated on every forward move.
pub const ANY_TARGET: &str = "any";

pub const RULE_NO_SKIP: &str = "no-skip";
pub const RULE_ALL_SCORED: &str = "all-risks-scored";
pub const RULE_ALL_CONTROLLED: &str = "all-risks-controlled";
pub const RULE_ALL_ADDRESSED: &str = "all-roam-addressed";
pub const RULE_ATTESTATION: &str = "attestation-if-empty";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RulesError {
    #[error("unknown card `{0}`")]
    UnknownCard(String),
    #[error("column index {0} does not exist")]
    UnknownColumn(usize),
    #[error("card `{card}` is in column {actual}, not {claimed}")]
    StaleOrigin {
        card: String,
        claimed: usize,
        actual: usize,
    },
    #[error("source and target column are the same ({0})")]
    SameColumn(usize),
    #[error("rule `{rule}` targets unknown column `{target}`")]
    UnknownTarget { rule: String, target: String },
    #[error("invalid rule `{rule}`: {reason}")]
    InvalidRule { rule: String, reason: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateRule(String),
}

/// The closed condition vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Condition {
    /// A forward move may advance at most `k` columns.
    MaxForwardStep { k: u32 },
    /// Every non-deferred risk has a CRI.
    AllRisksScored,
    /// Every non-deferred scored risk has at least one control, except
    /// Accepted risks at Low level.
    AllRisksControlled,
    /// Every non-deferred risk has one of `statuses`.
    AllRoamIn { statuses: BTreeSet<RoamKind> },
    /// A card without risks needs a no-threat attestation.
    RequiresAttestationIfEmpty,
    /// The move carries an approval from `identity`.
    ApprovalBy { identity: String },
}

impl Condition {
    fn validate(&self) -> Result<(), String> {
        match self {
            Condition::MaxForwardStep { k } if *k == 0 => Err("k must be at least 1".into()),
            Condition::AllRoamIn { statuses } if statuses.is_empty() => {
                Err("status set must not be empty".into())
            }
            Condition::ApprovalBy { identity } if identity.trim().is_empty() => {
                Err("approver identity must not be empty".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    /// Column name whose entry this rule guards, or `any`.
    pub target: String,
    pub condition: Condition,
    /// Justification template. Placeholders: `{rule}`, `{card}`, `{from}`,
    /// `{to}`, `{elements}`.
    pub message: String,
}

impl Rule {
    pub fn new(
        id: impl Into<String>,
        target: impl Into<String>,
        condition: Condition,
        message: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            target: target.into(),
            condition,
            message: message.into(),
        }
    }

    fn is_any(&self) -> bool {
        self.target == ANY_TARGET
    }
}

/// The rules shipped with the default board.
pub fn default_ruleset() -> Vec<Rule> {
    let all_addressed: BTreeSet<RoamKind> = [RoamKind::Accepted, RoamKind::Mitigated].into();
    vec![
        Rule::new(
            RULE_NO_SKIP,
            ANY_TARGET,
            Condition::MaxForwardStep { k: 1 },
            "{rule}: {card} cannot jump from '{from}' to '{to}'; columns must be advanced one at a time",
        ),
        Rule::new(
            RULE_ALL_SCORED,
            "Security controls definition",
            Condition::AllRisksScored,
            "{rule}: every risk of {card} needs a computed CRI before entering '{to}'; unscored: {elements}",
        ),
        Rule::new(
            RULE_ALL_CONTROLLED,
            "Validation",
            Condition::AllRisksControlled,
            "{rule}: every risk of {card} needs at least one security control before entering '{to}'; uncontrolled: {elements}",
        ),
        Rule::new(
            RULE_ALL_ADDRESSED,
            "Validation",
            Condition::AllRoamIn {
                statuses: all_addressed,
            },
            "{rule}: every risk of {card} must be Accepted or Mitigated before entering '{to}'; pending: {elements}",
        ),
        Rule::new(
            RULE_ATTESTATION,
            "Validation",
            Condition::RequiresAttestationIfEmpty,
            "{rule}: {card} has no risks; record a no-threat attestation before entering '{to}'",
        ),
    ]
}

/// Check ids are unique, conditions well-formed and targets resolvable.
pub fn validate_ruleset(rules: &[Rule], definition: &BoardDefinition) -> Result<(), RulesError> {
    let mut seen = BTreeSet::new();
    for rule in rules {
        if !seen.insert(rule.id.as_str()) {
            return Err(RulesError::DuplicateRule(rule.id.clone()));
        }
        rule.condition
            .validate()
            .map_err(|reason| RulesError::InvalidRule {
                rule: rule.id.clone(),
                reason,
            })?;
        if !rule.is_any() && definition.column_by_name(&rule.target).is_none() {
            return Err(RulesError::UnknownTarget {
                rule: rule.id.clone(),
                target: rule.target.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementRequest {
    pub card_id: String,
    pub from_index: usize,
    pub to_index: usize,
    pub actor: String,
    #[serde(default)]
    pub approvals: BTreeSet<String>,
}

impl MovementRequest {
    pub fn is_backward(&self) -> bool {
        self.to_index < self.from_index
    }
}

/// One failed rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub rule_id: String,
    pub justification: String,
    #[serde(default)]
    pub offending: Vec<String>,
}

/// Outcome of a movement evaluation. `approved` holds exactly when there are
/// no failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct Verdict {
    approved: bool,
    failures: Vec<Failure>,
}

#[derive(Deserialize)]
struct RawVerdict {
    approved: bool,
    #[serde(default)]
    failures: Vec<Failure>,
}

impl TryFrom<RawVerdict> for Verdict {
    type Error = String;

    fn try_from(raw: RawVerdict) -> Result<Self, Self::Error> {
        if raw.approved != raw.failures.is_empty() {
            return Err("verdict approval flag disagrees with failure list".into());
        }
        Ok(Verdict::from_failures(raw.failures))
    }
}

impl Verdict {
    pub fn approve() -> Self {
        Self::from_failures(Vec::new())
    }

    pub fn from_failures(failures: Vec<Failure>) -> Self {
        Self {
            approved: failures.is_empty(),
            failures,
        }
    }

    pub fn approved(&self) -> bool {
        self.approved
    }

    pub fn failures(&self) -> &[Failure] {
        &self.failures
    }

    pub fn failed_rule_ids(&self) -> Vec<&str> {
        self.failures.iter().map(|f| f.rule_id.as_str()).collect()
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.approved {
            return f.write_str("approved");
        }
        writeln!(f, "rejected:")?;
        for failure in &self.failures {
            writeln!(f, "  - [{}] {}", failure.rule_id, failure.justification)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "selector", rename_all = "snake_case")]
pub enum Selector {
    RisksWithoutScore,
    /// Scored risks with no control, excluding Accepted Low-level risks.
    ScoredRisksWithoutControls,
    RisksWithRoamNotIn {
        statuses: BTreeSet<RoamKind>,
    },
    RiskCount,
    AttestationPresent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub card_id: String,
    pub selector: Selector,
    pub include_deferred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Elements(Vec<String>),
    Count(usize),
    Flag(bool),
}

/// Read access the approval module needs from the board store.
pub trait BoardStore {
    fn definition(&self) -> &BoardDefinition;
    fn card(&self, card_id: &str) -> Option<&AssetCard>;
}

/// Queries that decide `condition` for `request`.
///
/// Element selectors never include deferred risks. `RiskCount` counts every
/// risk on the card: deferring a risk hides it from checks but does not make
/// the card risk-free.
pub fn generate_query(condition: &Condition, request: &MovementRequest) -> Vec<Query> {
    let q = |selector: Selector, include_deferred: bool| Query {
        card_id: request.card_id.clone(),
        selector,
        include_deferred,
    };
    match condition {
        Condition::MaxForwardStep { .. } | Condition::ApprovalBy { .. } => Vec::new(),
        Condition::AllRisksScored => vec![q(Selector::RisksWithoutScore, false)],
        Condition::AllRisksControlled => vec![q(Selector::ScoredRisksWithoutControls, false)],
        Condition::AllRoamIn { statuses } => vec![q(
            Selector::RisksWithRoamNotIn {
                statuses: statuses.clone(),
            },
            false,
        )],
        Condition::RequiresAttestationIfEmpty => vec![
            q(Selector::RiskCount, true),
            q(Selector::AttestationPresent, false),
        ],
    }
}

/// Run a query against a card.
pub fn execute_query(card: &AssetCard, query: &Query) -> Answer {
    let visible = || {
        card.risks
            .iter()
            .filter(move |r| query.include_deferred || !r.deferred)
    };
    let ids = |pred: &dyn Fn(&crate::domain::RiskAssessment) -> bool| {
        Answer::Elements(
            visible()
                .filter(|r| pred(r))
                .map(|r| r.id.clone())
                .collect(),
        )
    };
    match &query.selector {
        Selector::RisksWithoutScore => ids(&|r| !r.is_scored()),
        Selector::ScoredRisksWithoutControls => {
            ids(&|r| r.is_scored() && r.controls.is_empty() && !r.exempt_from_controls())
        }
        Selector::RisksWithRoamNotIn { statuses } => ids(&|r| !statuses.contains(&r.roam.kind())),
        Selector::RiskCount => Answer::Count(visible().count()),
        Selector::AttestationPresent => Answer::Flag(card.no_threat_attestation.is_some()),
    }
}

/// Evaluate a movement request. Pure: the store is only read.
pub fn evaluate_movement(
    request: &MovementRequest,
    rules: &[Rule],
    store: &dyn BoardStore,
) -> Result<Verdict, RulesError> {
    let definition = store.definition();
    let card = store
        .card(&request.card_id)
        .ok_or_else(|| RulesError::UnknownCard(request.card_id.clone()))?;
    for idx in [request.from_index, request.to_index] {
        if idx >= definition.columns.len() {
            return Err(RulesError::UnknownColumn(idx));
        }
    }
    if card.column_index != request.from_index {
        return Err(RulesError::StaleOrigin {
            card: card.id.clone(),
            claimed: request.from_index,
            actual: card.column_index,
        });
    }
    if request.from_index == request.to_index {
        return Err(RulesError::SameColumn(request.to_index));
    }
    if request.is_backward() {
        return Ok(Verdict::approve());
    }

    let mut failures = Vec::new();
    for rule in rules {
        if !rule.is_any() {
            let target = definition.column_by_name(&rule.target).ok_or_else(|| {
                RulesError::UnknownTarget {
                    rule: rule.id.clone(),
                    target: rule.target.clone(),
                }
            })?;
            if target != request.to_index {
                continue;
            }
        }
        if let Some(failure) = check_rule(rule, request, card, definition) {
            failures.push(failure);
        }
    }
    Ok(Verdict::from_failures(failures))
}

/// Decide one rule for one request, regardless of its target.
pub fn check_rule(
    rule: &Rule,
    request: &MovementRequest,
    card: &AssetCard,
    definition: &BoardDefinition,
) -> Option<Failure> {
    let answers: Vec<Answer> = generate_query(&rule.condition, request)
        .iter()
        .map(|q| execute_query(card, q))
        .collect();
    let offending: Vec<String> = match (&rule.condition, answers.as_slice()) {
        (Condition::MaxForwardStep { k }, []) => {
            let step = request.to_index.saturating_sub(request.from_index);
            if step as u64 > u64::from(*k) {
                vec![card.id.clone()]
            } else {
                return None;
            }
        }
        (Condition::ApprovalBy { identity }, []) => {
            if request.approvals.contains(identity) {
                return None;
            }
            vec![identity.clone()]
        }
        (
            Condition::AllRisksScored | Condition::AllRisksControlled | Condition::AllRoamIn { .. },
            [Answer::Elements(elements)],
        ) => {
            if elements.is_empty() {
                return None;
            }
            elements.clone()
        }
        (Condition::RequiresAttestationIfEmpty, [Answer::Count(n), Answer::Flag(attested)]) => {
            if *n > 0 || *attested {
                return None;
            }
            vec![card.id.clone()]
        }
        _ => unreachable!("generate_query and execute_query disagree"),
    };
    let column_name = |i: usize| {
        definition
            .columns
            .get(i)
            .map(|c| c.name.as_str())
            .unwrap_or("?")
    };
    let justification = rule
        .message
        .replace("{rule}", &rule.id)
        .replace("{card}", &card.id)
        .replace("{from}", column_name(request.from_index))
        .replace("{to}", column_name(request.to_index))
        .replace("{elements}", &offending.join(", "));
    Some(Failure {
        rule_id: rule.id.clone(),
        justification,
        offending,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{AssetCard, Attestation, BoardDefinition};
    use crate::domain::{RiskAssessment, RoamStatus, StrideCategory};
    use crate::scoring::{compute_cri, Band};

    struct OneCard {
        definition: BoardDefinition,
        card: AssetCard,
    }

    impl BoardStore for OneCard {
        fn definition(&self) -> &BoardDefinition {
            &self.definition
        }

        fn card(&self, card_id: &str) -> Option<&AssetCard> {
            (card_id == self.card.id).then_some(&self.card)
        }
    }

    fn risk(n: u32, scored: bool) -> RiskAssessment {
        RiskAssessment {
            id: format!("c.R{n}"),
            threat_id: format!("T{n}"),
            title: "t".into(),
            stride: StrideCategory::Tampering,
            factors: None,
            score: scored.then(|| compute_cri(Band::new(3).unwrap(), Band::new(3).unwrap())),
            basis: None,
            roam: RoamStatus::Unset,
            controls: BTreeSet::new(),
            deferred: false,
        }
    }

    fn store(column: usize, risks: Vec<RiskAssessment>) -> OneCard {
        let mut card = AssetCard::new_for_test("c", column);
        card.risks = risks;
        OneCard {
            definition: BoardDefinition::default_four_column(),
            card,
        }
    }

    fn request(from: usize, to: usize) -> MovementRequest {
        MovementRequest {
            card_id: "c".into(),
            from_index: from,
            to_index: to,
            actor: "tester".into(),
            approvals: BTreeSet::new(),
        }
    }

    fn eval(s: &OneCard, from: usize, to: usize) -> Verdict {
        evaluate_movement(&request(from, to), &default_ruleset(), s).unwrap()
    }

    #[test]
    fn default_ruleset_shape() {
        let rules = default_ruleset();
        assert_eq!(rules.len(), 5);
        let ids: Vec<_> = rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                RULE_NO_SKIP,
                RULE_ALL_SCORED,
                RULE_ALL_CONTROLLED,
                RULE_ALL_ADDRESSED,
                RULE_ATTESTATION
            ]
        );
        assert_eq!(rules[0].condition, Condition::MaxForwardStep { k: 1 });
        assert_eq!(
            rules[3].condition,
            Condition::AllRoamIn {
                statuses: [RoamKind::Accepted, RoamKind::Mitigated].into()
            }
        );
        validate_ruleset(&rules, &BoardDefinition::default_four_column()).unwrap();
    }

    #[test]
    fn query_generation() {
        let req = request(1, 2);
        assert_eq!(
            generate_query(&Condition::AllRisksScored, &req),
            vec![Query {
                card_id: "c".into(),
                selector: Selector::RisksWithoutScore,
                include_deferred: false
            }]
        );
        assert!(generate_query(&Condition::MaxForwardStep { k: 1 }, &req).is_empty());
        let am: BTreeSet<_> = [RoamKind::Accepted, RoamKind::Mitigated].into();
        let qs = generate_query(
            &Condition::AllRoamIn {
                statuses: am.clone(),
            },
            &req,
        );
        assert_eq!(qs.len(), 1);
        assert_eq!(
            qs[0].selector,
            Selector::RisksWithRoamNotIn { statuses: am }
        );
        assert!(!qs[0].include_deferred);
    }

    #[test]
    fn skip_is_rejected() {
        let v = eval(&store(0, vec![]), 0, 2);
        assert!(!v.approved());
        assert_eq!(v.failed_rule_ids(), [RULE_NO_SKIP]);
        assert!(v.failures()[0].justification.contains("no-skip"));
    }

    #[test]
    fn adjacent_forward_with_no_obligations() {
        assert!(eval(&store(0, vec![]), 0, 1).approved());
    }

    #[test]
    fn unscored_risk_blocks_controls_column() {
        let s = store(1, vec![risk(1, true), risk(2, false)]);
        let v = eval(&s, 1, 2);
        assert_eq!(v.failed_rule_ids(), [RULE_ALL_SCORED]);
        assert_eq!(v.failures()[0].offending, ["c.R2"]);
    }

    #[test]
    fn deferred_unscored_risk_is_omitted() {
        let mut r = risk(2, false);
        r.deferred = true;
        let s = store(1, vec![risk(1, true), r]);
        assert!(eval(&s, 1, 2).approved());
    }

    #[test]
    fn backward_moves_always_approved() {
        let s = store(3, vec![risk(1, false)]);
        for to in 0..3 {
            assert!(eval(&s, 3, to).approved());
        }
    }

    #[test]
    fn validation_gates() {
        let mut r = risk(1, true);
        let s = store(2, vec![r.clone()]);
        assert_eq!(
            eval(&s, 2, 3).failed_rule_ids(),
            [RULE_ALL_CONTROLLED, RULE_ALL_ADDRESSED]
        );
        r.controls.insert("AC-3".into());
        r.roam = RoamStatus::Mitigated;
        assert!(eval(&store(2, vec![r]), 2, 3).approved());

        let empty = store(2, vec![]);
        assert_eq!(eval(&empty, 2, 3).failed_rule_ids(), [RULE_ATTESTATION]);
        let mut attested = store(2, vec![]);
        attested.card.no_threat_attestation = Some(Attestation {
            actor: "a".into(),
            note: "static asset".into(),
        });
        assert!(eval(&attested, 2, 3).approved());
    }

    #[test]
    fn accepted_low_needs_no_control() {
        let mut r = risk(1, false);
        r.score = Some(compute_cri(Band::new(1).unwrap(), Band::new(2).unwrap()));
        r.roam = RoamStatus::Accepted;
        assert!(eval(&store(2, vec![r.clone()]), 2, 3).approved());
        r.roam = RoamStatus::Mitigated;
        assert_eq!(
            eval(&store(2, vec![r]), 2, 3).failed_rule_ids(),
            [RULE_ALL_CONTROLLED]
        );
    }

    #[test]
    fn approval_rule() {
        let mut rules = default_ruleset();
        rules.push(Rule::new(
            "lead-signoff",
            "Risks definition",
            Condition::ApprovalBy {
                identity: "lead".into(),
            },
            "{rule}: needs approval",
        ));
        let s = store(0, vec![]);
        let v = evaluate_movement(&request(0, 1), &rules, &s).unwrap();
        assert_eq!(v.failed_rule_ids(), ["lead-signoff"]);
        let mut req = request(0, 1);
        req.approvals.insert("lead".into());
        assert!(evaluate_movement(&req, &rules, &s).unwrap().approved());
    }

    #[test]
    fn request_errors_are_not_rejections() {
        let s = store(1, vec![]);
        let rules = default_ruleset();
        let mut req = request(1, 2);
        req.card_id = "ghost".into();
        assert_eq!(
            evaluate_movement(&req, &rules, &s),
            Err(RulesError::UnknownCard("ghost".into()))
        );
        assert_eq!(
            evaluate_movement(&request(1, 9), &rules, &s),
            Err(RulesError::UnknownColumn(9))
        );
        assert_eq!(
            evaluate_movement(&request(1, 1), &rules, &s),
            Err(RulesError::SameColumn(1))
        );
        assert!(matches!(
            evaluate_movement(&request(0, 1), &rules, &s),
            Err(RulesError::StaleOrigin { .. })
        ));
    }

    #[test]
    fn ruleset_validation() {
        let def = BoardDefinition::default_four_column();
        let mut rules = default_ruleset();
        rules[1].target = "Nowhere".into();
        assert!(matches!(
            validate_ruleset(&rules, &def),
            Err(RulesError::UnknownTarget { .. })
        ));
        let mut rules = default_ruleset();
        rules[0].condition = Condition::MaxForwardStep { k: 0 };
        assert!(matches!(
            validate_ruleset(&rules, &def),
            Err(RulesError::InvalidRule { .. })
        ));
        let mut rules = default_ruleset();
        rules.push(rules[0].clone());
        assert!(matches!(
            validate_ruleset(&rules, &def),
            Err(RulesError::DuplicateRule(_))
        ));
    }

    #[test]
    fn verdict_json_checks_consistency() {
        assert!(serde_json::from_str::<Verdict>(r#"{"approved":true,"failures":[]}"#).is_ok());
        let bad = r#"{"approved":true,"failures":[{"rule_id":"x","justification":"y"}]}"#;
        assert!(serde_json::from_str::<Verdict>(bad).is_err());
    }

    #[test]
    fn rule_json_shape() {
        let json = serde_json::to_value(&default_ruleset()[0]).unwrap();
        assert_eq!(json["target"], "any");
        assert_eq!(json["condition"]["type"], "max_forward_step");
        assert_eq!(json["condition"]["k"], 1);
    }
}
