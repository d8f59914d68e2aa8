use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::land::{Accounts, LandState, PolicyLevers, StepReport};

pub const CSV_HEADER: &str =
    "tick,phase,meat_supply,goal_meat,pa_coverage,goal_pa,share_agri,share_env,surplus_agri,surplus_env";

/// State after one environment tick, with the tick's budget flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub phase: u32,
    pub meat_supply: f64,
    pub goal_meat: f64,
    pub pa_coverage: f64,
    pub goal_pa: f64,
    pub share_agri: f64,
    pub share_env: f64,
    pub surplus_agri: f64,
    pub surplus_env: f64,
    pub inflow_agri: f64,
    pub inflow_env: f64,
    pub expenditure_agri: f64,
    pub expenditure_env: f64,
}

impl TickRecord {
    pub fn new(
        phase: u32,
        land: &LandState,
        levers: &PolicyLevers,
        accounts: &Accounts,
        report: &StepReport,
    ) -> Self {
        Self {
            tick: land.tick,
            phase,
            meat_supply: land.supply.meat,
            goal_meat: levers.goal_meat,
            pa_coverage: land.pa_coverage,
            goal_pa: levers.goal_pa,
            share_agri: accounts.agri.share,
            share_env: accounts.env.share,
            surplus_agri: accounts.agri.surplus,
            surplus_env: accounts.env.surplus,
            inflow_agri: report.inflow_agri,
            inflow_env: report.inflow_env,
            expenditure_agri: report.expenditure_agri,
            expenditure_env: report.expenditure_env,
        }
    }

    /// One CSV line, fixed-point with six decimals, no trailing newline.
    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{}", self.tick, self.phase);
        for v in [
            self.meat_supply,
            self.goal_meat,
            self.pa_coverage,
            self.goal_pa,
            self.share_agri,
            self.share_env,
            self.surplus_agri,
            self.surplus_env,
        ] {
            write!(row, ",{v:.6}").unwrap();
        }
        row
    }
}

/// The full CSV document for `records`.
pub fn series_csv(records: &[TickRecord]) -> String {
    let mut out = String::with_capacity(96 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn percent_of(value: f64, goal: f64) -> String {
    if goal > 0.0 {
        format!("{:.1}% of goal", 100.0 * value / goal)
    } else {
        "no goal set".into()
    }
}

/// Plain-text summary of the environment handed to the data gatekeeper at a
/// phase boundary. `records` holds every tick so far.
pub fn env_digest(
    phase: u32,
    land: &LandState,
    levers: &PolicyLevers,
    accounts: &Accounts,
    records: &[TickRecord],
    lag: u32,
) -> String {
    let mut d = String::new();
    writeln!(d, "Tick {} (start of phase {phase}).", land.tick).unwrap();
    writeln!(
        d,
        "Meat supply: {:.2} per tick; goal {:.2} ({}).",
        land.supply.meat,
        levers.goal_meat,
        percent_of(land.supply.meat, levers.goal_meat)
    )
    .unwrap();
    writeln!(
        d,
        "Protected-area coverage: {:.3}; goal {:.3} ({}).",
        land.pa_coverage,
        levers.goal_pa,
        percent_of(land.pa_coverage, levers.goal_pa)
    )
    .unwrap();
    writeln!(
        d,
        "Budget shares: agricultural {:.1}%, environmental {:.1}%.",
        100.0 * accounts.agri.share,
        100.0 * accounts.env.share
    )
    .unwrap();
    writeln!(
        d,
        "Budget surplus: agricultural {:.2}, environmental {:.2} (negative means deficit).",
        accounts.agri.surplus, accounts.env.surplus
    )
    .unwrap();
    let start = records.len().saturating_sub(lag as usize);
    if let (Some(first), Some(last)) = (records.get(start), records.last()) {
        let lowest = records[start..]
            .iter()
            .map(|r| r.surplus_agri)
            .fold(f64::INFINITY, f64::min);
        writeln!(
            d,
            "Over the last {} ticks: meat supply changed by {:+.2}, protected coverage by {:+.3}, lowest agricultural surplus {:.2}.",
            records.len() - start,
            last.meat_supply - first.meat_supply,
            last.pa_coverage - first.pa_coverage,
            lowest
        )
        .unwrap();
    }
    writeln!(
        d,
        "Other services per tick: crops {:.2}, carbon {:.2}, recreation {:.2}.",
        land.supply.crops, land.supply.carbon, land.supply.recreation
    )
    .unwrap();
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> TickRecord {
        TickRecord {
            tick: 3,
            phase: 0,
            meat_supply: 12.3456789,
            goal_meat: 20.0,
            pa_coverage: 0.05,
            goal_pa: 0.1,
            share_agri: 0.5,
            share_env: 0.5,
            surplus_agri: -1.0 / 3.0,
            surplus_env: 150.0,
            inflow_agri: 50.0,
            inflow_env: 50.0,
            expenditure_agri: 3.0,
            expenditure_env: 1.0,
        }
    }

    #[test]
    fn row_is_fixed_point() {
        assert_eq!(
            record().csv_row(),
            "3,0,12.345679,20.000000,0.050000,0.100000,0.500000,0.500000,-0.333333,150.000000"
        );
    }

    #[test]
    fn document_has_header_and_rows() {
        let csv = series_csv(&[record(), record()]);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert!(csv.ends_with('\n'));
    }
}
