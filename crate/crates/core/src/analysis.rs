//! Cost and usability arithmetic: phase-time tables, manual vs robot
//! comparison, return on investment and SUS scoring.

use crate::session::OperationRecord;
use crate::skills::PhaseKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOOL_CHANGE_LABEL: &str = "Tool change";
pub const DEFAULT_TOOL_CHANGE_BUDGET_S: f64 = 13.75;

/// Allowed slack on a Likert distribution, in percent.
pub const DISTRIBUTION_SLACK_PCT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("investment cost must be positive, got {0}")]
    ZeroInvestment(f64),
    #[error("negative amount for {label}: {eur}")]
    NegativeAmount { label: String, eur: f64 },
    #[error("row labels differ at row {row}: {manual:?} vs {robot:?}")]
    LabelMismatch {
        row: usize,
        manual: Option<String>,
        robot: Option<String>,
    },
    #[error("question {question}: response {value} is outside 1..=5")]
    RangeError { question: usize, value: u8 },
    #[error("question {question}: distribution {reason}")]
    DistributionError { question: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentItem {
    pub label: String,
    pub eur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub investment_items: Vec<InvestmentItem>,
    pub net_savings_eur_per_year: f64,
    /// Used for the return on investment. Not necessarily the item sum.
    pub investment_cost_eur: f64,
    #[serde(default = "default_budget")]
    pub tool_change_budget_s: f64,
}

fn default_budget() -> f64 {
    DEFAULT_TOOL_CHANGE_BUDGET_S
}

impl CostModel {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let named = self
            .investment_items
            .iter()
            .map(|i| (i.label.as_str(), i.eur))
            .chain([
                ("net savings", self.net_savings_eur_per_year),
                ("investment cost", self.investment_cost_eur),
                ("tool change budget", self.tool_change_budget_s),
            ]);
        for (label, eur) in named {
            if !(eur >= 0.0) {
                return Err(AnalysisError::NegativeAmount { label: label.into(), eur });
            }
        }
        Ok(())
    }

    pub fn items_total_eur(&self) -> f64 {
        self.investment_items.iter().map(|i| i.eur).sum()
    }

    pub fn roi(&self) -> Result<f64, AnalysisError> {
        roi(self.net_savings_eur_per_year, self.investment_cost_eur)
    }
}

/// (NS − IC) / IC as a fraction.
pub fn roi(ns_eur: f64, ic_eur: f64) -> Result<f64, AnalysisError> {
    if !(ic_eur > 0.0) {
        return Err(AnalysisError::ZeroInvestment(ic_eur));
    }
    Ok((ns_eur - ic_eur) / ic_eur)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub label: String,
    /// `None` for rows that were not timed.
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRows", into = "TableRows")]
pub struct PhaseTimeTable {
    rows: Vec<PhaseRow>,
}

// On disk a table carries its total for readers; it is recomputed on load.
#[derive(Serialize, Deserialize)]
struct TableRows {
    rows: Vec<PhaseRow>,
    #[serde(default, skip_deserializing)]
    total_s: f64,
}

impl From<TableRows> for PhaseTimeTable {
    fn from(t: TableRows) -> Self {
        PhaseTimeTable { rows: t.rows }
    }
}

impl From<PhaseTimeTable> for TableRows {
    fn from(t: PhaseTimeTable) -> Self {
        TableRows {
            total_s: t.total_s(),
            rows: t.rows,
        }
    }
}

impl PhaseTimeTable {
    pub fn new(rows: Vec<PhaseRow>) -> Self {
        PhaseTimeTable { rows }
    }

    pub fn from_pairs(pairs: &[(&str, Option<f64>)]) -> Self {
        PhaseTimeTable::new(
            pairs
                .iter()
                .map(|(l, s)| PhaseRow { label: l.to_string(), seconds: *s })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[PhaseRow] {
        &self.rows
    }

    pub fn total_s(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.seconds).sum()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).and_then(|r| r.seconds)
    }

    /// Charge every untimed tool-change row at `budget_s`.
    pub fn with_tool_change_budget(&self, budget_s: f64) -> Self {
        let mut t = self.clone();
        for r in &mut t.rows {
            if r.label == TOOL_CHANGE_LABEL && r.seconds.is_none() {
                r.seconds = Some(budget_s);
            }
        }
        t
    }

    pub fn without(&self, label: &str) -> Self {
        PhaseTimeTable::new(self.rows.iter().filter(|r| r.label != label).cloned().collect())
    }
}

/// Phase times of the completed records. A record that starts with a tool
/// change contributes a "Tool change" row at `tool_change_budget_s`; its
/// skill time goes to the row of its phase label, which is created on first
/// use.
pub fn phase_table_from_log(records: &[OperationRecord], tool_change_budget_s: f64) -> PhaseTimeTable {
    let mut rows: Vec<PhaseRow> = Vec::new();
    for rec in records.iter().filter(|r| r.is_completed()) {
        if rec.phases.iter().any(|p| p.kind == PhaseKind::ToolChange) {
            rows.push(PhaseRow {
                label: TOOL_CHANGE_LABEL.into(),
                seconds: Some(tool_change_budget_s),
            });
        }
        let skill: f64 = rec
            .phases
            .iter()
            .filter(|p| p.kind == PhaseKind::Skill)
            .map(|p| p.duration_s)
            .sum();
        match rows.iter_mut().find(|r| r.label == rec.phase_label) {
            Some(r) => *r.seconds.get_or_insert(0.0) += skill,
            None => rows.push(PhaseRow {
                label: rec.phase_label.clone(),
                seconds: Some(skill),
            }),
        }
    }
    PhaseTimeTable::new(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub manual_s: Option<f64>,
    pub robot_s: Option<f64>,
    /// robot / manual
    pub ratio: Option<f64>,
    pub delta_s: Option<f64>,
    pub robot_slower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub manual_total_s: f64,
    pub robot_total_s: f64,
    pub total_ratio: Option<f64>,
}

impl Comparison {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn slower(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.robot_slower)
    }
}

/// Row-by-row comparison. Labels must agree in order (compared without
/// regard to case).
pub fn compare_tables(manual: &PhaseTimeTable, robot: &PhaseTimeTable) -> Result<Comparison, AnalysisError> {
    let n = manual.rows.len().max(robot.rows.len());
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let (m, r) = match (manual.rows.get(i), robot.rows.get(i)) {
            (Some(m), Some(r)) if m.label.eq_ignore_ascii_case(&r.label) => (m, r),
            (m, r) => {
                return Err(AnalysisError::LabelMismatch {
                    row: i,
                    manual: m.map(|x| x.label.clone()),
                    robot: r.map(|x| x.label.clone()),
                })
            }
        };
        let (ratio, delta) = match (m.seconds, r.seconds) {
            (Some(a), Some(b)) if a > 0.0 => (Some(b / a), Some(b - a)),
            (Some(a), Some(b)) => (None, Some(b - a)),
            _ => (None, None),
        };
        rows.push(ComparisonRow {
            label: m.label.clone(),
            manual_s: m.seconds,
            robot_s: r.seconds,
            ratio,
            delta_s: delta,
            robot_slower: delta.is_some_and(|d| d > 0.0),
        });
    }
    let (mt, rt) = (manual.total_s(), robot.total_s());
    Ok(Comparison {
        rows,
        manual_total_s: mt,
        robot_total_s: rt,
        total_ratio: (mt > 0.0).then(|| rt / mt),
    })
}

/// A printed total set against the sum of its rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalCheck {
    pub row_sum: f64,
    pub printed: f64,
    pub consistent: bool,
}

pub fn check_total(row_sum: f64, printed: f64) -> TotalCheck {
    TotalCheck {
        row_sum,
        printed,
        consistent: (row_sum - printed).abs() <= 1e-9 * printed.abs().max(1.0),
    }
}

/// One questionnaire, items 1 to 10, each on a 1..=5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SusResponse(pub [u8; 10]);

pub fn sus_score(r: &SusResponse) -> Result<f64, AnalysisError> {
    let mut sum = 0u32;
    for (i, &v) in r.0.iter().enumerate() {
        if !(1..=5).contains(&v) {
            return Err(AnalysisError::RangeError { question: i + 1, value: v });
        }
        // Items are numbered from 1, so even indices are the odd items.
        sum += if i % 2 == 0 { v as u32 - 1 } else { 5 - v as u32 };
    }
    Ok(sum as f64 * 2.5)
}

pub fn sus_mean(responses: &[SusResponse]) -> Result<Option<f64>, AnalysisError> {
    if responses.is_empty() {
        return Ok(None);
    }
    let mut s = 0.0;
    for r in responses {
        s += sus_score(r)?;
    }
    Ok(Some(s / responses.len() as f64))
}

/// Percentages of answers per Likert level, strongly disagree first.
pub type LikertDistribution = [f64; 5];

/// SUS formula applied to the expected answer of each item.
pub fn sus_mean_from_distribution(dists: &[LikertDistribution; 10]) -> Result<f64, AnalysisError> {
    let mut sum = 0.0;
    for (i, d) in dists.iter().enumerate() {
        let question = i + 1;
        if d.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(AnalysisError::DistributionError {
                question,
                reason: format!("has an invalid share: {d:?}"),
            });
        }
        let total: f64 = d.iter().sum();
        if (total - 100.0).abs() > DISTRIBUTION_SLACK_PCT {
            return Err(AnalysisError::DistributionError {
                question,
                reason: format!("sums to {total}%"),
            });
        }
        let expected: f64 = d.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum::<f64>() / total;
        sum += if i % 2 == 0 { expected - 1.0 } else { 5.0 - expected };
    }
    Ok(sum * 2.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub robot: PhaseTimeTable,
    pub comparison: Option<Comparison>,
    pub manual_total: Option<TotalCheck>,
    pub items_total_eur: f64,
    pub investment_cost_eur: f64,
    /// Whether the investment cost equals the item sum.
    pub investment_matches_items: bool,
    pub roi: f64,
}

/// Everything `twin analyze` reports for one run. The comparison only
/// covers the manual table's rows; robot rows it lacks are dropped from it.
pub fn analyze(
    records: &[OperationRecord],
    costs: &CostModel,
    manual: Option<(&PhaseTimeTable, Option<f64>)>,
) -> Result<AnalysisReport, AnalysisError> {
    costs.validate()?;
    let robot = phase_table_from_log(records, costs.tool_change_budget_s);
    let (comparison, manual_total) = match manual {
        Some((m, printed)) => {
            let keep = PhaseTimeTable::new(
                robot
                    .rows()
                    .iter()
                    .filter(|r| m.rows().iter().any(|x| x.label.eq_ignore_ascii_case(&r.label)))
                    .cloned()
                    .collect(),
            );
            (
                Some(compare_tables(m, &keep)?),
                printed.map(|p| check_total(m.total_s(), p)),
            )
        }
        None => (None, None),
    };
    let items = costs.items_total_eur();
    Ok(AnalysisReport {
        robot,
        comparison,
        manual_total,
        items_total_eur: items,
        investment_cost_eur: costs.investment_cost_eur,
        investment_matches_items: check_total(items, costs.investment_cost_eur).consistent,
        roi: costs.roi()?,
    })
}

/// Reference figures from the pilot cell.
pub mod reference {
    use super::*;

    pub const MANUAL_PRINTED_TOTAL_S: f64 = 258.0;
    pub const ROBOT_PRINTED_TOTAL_S: f64 = 474.0;
    pub const NET_SAVINGS_EUR: f64 = 100_000.0;
    pub const INVESTMENT_COST_EUR: f64 = 108_256.0;

    const PHASES: [&str; 4] = [
        "Cover screw removal",
        "Battery cover removal",
        "Wiring connectors detach",
        "Battery module screws removal",
    ];

    fn interleaved(times: [f64; 4]) -> PhaseTimeTable {
        let mut pairs = Vec::new();
        for (label, t) in PHASES.iter().zip(times) {
            pairs.push((*label, Some(t)));
            pairs.push((TOOL_CHANGE_LABEL, None));
        }
        PhaseTimeTable::from_pairs(&pairs)
    }

    /// Two workers; tool changes were not timed.
    pub fn manual_times() -> PhaseTimeTable {
        interleaved([645.0, 6.0, 71.0, 76.0])
    }

    /// Tool changes not timed.
    pub fn robot_times() -> PhaseTimeTable {
        interleaved([75.0, 12.0, 240.0, 92.0])
    }

    pub fn cost_model() -> CostModel {
        let items = [
            ("Robot and linear track", 39_500.0),
            ("Steel frame", 2_600.0),
            ("Automatic tool changer", 2_808.0),
            ("Vacuum gripper", 1_140.0),
            ("Wiring connector detach gripper", 2_300.0),
            ("EVB reverse design", 1_100.0),
            ("Digital twin creation", 8_300.0),
            ("User interface programming", 5_600.0),
        ];
        CostModel {
            investment_items: items
                .iter()
                .map(|(l, e)| InvestmentItem { label: l.to_string(), eur: *e })
                .collect(),
            net_savings_eur_per_year: NET_SAVINGS_EUR,
            investment_cost_eur: INVESTMENT_COST_EUR,
            tool_change_budget_s: DEFAULT_TOOL_CHANGE_BUDGET_S,
        }
    }

    /// Pilot survey, items 1 to 10.
    pub fn survey() -> [LikertDistribution; 10] {
        [
            [3.1, 21.9, 31.3, 40.6, 3.1],
            [18.7, 50.0, 21.9, 6.3, 3.1],
            [0.0, 20.0, 16.7, 43.3, 20.0],
            [25.8, 58.1, 6.4, 9.7, 0.0],
            [0.0, 20.0, 13.3, 66.7, 0.0],
            [16.7, 50.0, 16.6, 10.0, 6.7],
            [0.0, 9.7, 9.7, 51.6, 29.0],
            [9.7, 41.9, 12.9, 25.8, 9.7],
            [3.4, 23.3, 33.3, 33.3, 6.7],
            [28.1, 43.8, 12.5, 15.6, 0.0],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_examples() {
        assert_eq!(roi(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(roi(10.0, 5.0).unwrap(), 1.0);
        assert!(matches!(roi(1.0, 0.0), Err(AnalysisError::ZeroInvestment(_))));
    }

    #[test]
    fn sus_corners() {
        assert_eq!(sus_score(&SusResponse([5, 1, 5, 1, 5, 1, 5, 1, 5, 1])).unwrap(), 100.0);
        assert_eq!(sus_score(&SusResponse([1, 5, 1, 5, 1, 5, 1, 5, 1, 5])).unwrap(), 0.0);
        assert_eq!(sus_score(&SusResponse([3; 10])).unwrap(), 50.0);
        assert!(matches!(
            sus_score(&SusResponse([3, 3, 0, 3, 3, 3, 3, 3, 3, 3])),
            Err(AnalysisError::RangeError { question: 3, value: 0 })
        ));
    }

    #[test]
    fn table_serializes_its_total() {
        let t = reference::robot_times().with_tool_change_budget(10.0);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["total_s"], 459.0);
        let mut v = v;
        v["total_s"] = 1.0.into();
        let back: PhaseTimeTable = serde_json::from_value(v).unwrap();
        assert_eq!(back.total_s(), 459.0);
    }
}
