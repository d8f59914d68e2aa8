use serde::{Deserialize, Serialize};

use super::{
    perceived_utility, production, Accounts, AftId, AftSpec, Cell, LandParams, LandState,
    PolicyLevers, ServiceMap,
};

/// Outcome of a protected-area designation request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Designation {
    pub designated: usize,
    /// Requested cells that could not be protected because none were left.
    pub shortfall: usize,
}

/// Book-keeping of one environment tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Tick value after the step.
    pub tick: u64,
    /// Levers actually applied, including the controlled meat subsidy.
    pub effective: PolicyLevers,
    pub designated: usize,
    pub takeovers: usize,
    pub inflow_agri: f64,
    pub inflow_env: f64,
    pub expenditure_agri: f64,
    pub expenditure_env: f64,
}

pub fn aggregate_supply(state: &LandState, afts: &[AftSpec]) -> ServiceMap {
    let mut total = ServiceMap::default();
    for cell in &state.cells {
        let p = production(cell, &afts[cell.aft.0 as usize]);
        for (s, v) in p.iter() {
            total[s] += v;
        }
    }
    total
}

/// Best AFT allowed on `cell`, skipping `exclude`. Ties go to the lowest id.
fn best_eligible(
    cell: &Cell,
    afts: &[AftSpec],
    levers: &PolicyLevers,
    prices: &ServiceMap,
    exclude: Option<AftId>,
) -> Option<(AftId, f64)> {
    let mut best: Option<(AftId, f64)> = None;
    for aft in afts {
        if Some(aft.id) == exclude || !aft.allowed_on(cell) {
            continue;
        }
        let u = perceived_utility(cell, aft, levers, prices);
        if best.is_none_or(|(_, bu)| u > bu) {
            best = Some((aft.id, u));
        }
    }
    best
}

/// Protects up to `n` more cells, highest value of capital `natural_capital`
/// first (ties by lowest cell index). Restricted occupants of newly protected
/// cells are replaced by the best eligible AFT under `levers`.
pub fn designate_protected(
    state: &LandState,
    n: usize,
    natural_capital: usize,
    afts: &[AftSpec],
    levers: &PolicyLevers,
    prices: &ServiceMap,
) -> (LandState, Designation) {
    let mut next = state.clone();
    let mut candidates: Vec<usize> = (0..next.cells.len())
        .filter(|&i| !next.cells[i].protected)
        .collect();
    let available = candidates.len();
    let take = n.min(available);
    let score = |i: usize| {
        next.cells[i]
            .capitals
            .get(natural_capital)
            .copied()
            .unwrap_or(0.0)
    };
    candidates.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    for &i in &candidates[..take] {
        let cell = &mut next.cells[i];
        cell.protected = true;
        if !afts[cell.aft.0 as usize].allowed_on(cell) {
            let (id, _) = best_eligible(cell, afts, levers, prices, None)
                .expect("validated AFT table has an unrestricted type");
            cell.aft = id;
        }
    }
    if take > 0 {
        next.refresh(afts);
    }
    (
        next,
        Designation {
            designated: take,
            shortfall: n - take,
        },
    )
}

/// Meat subsidy set by the agricultural institution's proportional controller.
fn controlled_meat_subsidy(
    state: &LandState,
    levers: &PolicyLevers,
    accounts: &Accounts,
    params: &LandParams,
) -> f64 {
    if accounts.agri.surplus < -params.deficit_cap {
        return 0.0;
    }
    let gap = (levers.goal_meat - state.supply.meat).max(0.0);
    (params.kappa_agri * gap / levers.goal_meat.max(params.eps_goal)).clamp(0.0, params.s_max)
}

/// Cells the environmental institution wants to protect this tick, before
/// affordability and availability limits.
fn wanted_designations(state: &LandState, levers: &PolicyLevers, params: &LandParams) -> usize {
    let gap = (levers.goal_pa - state.pa_coverage).max(0.0);
    let raw = params.kappa_env * gap * state.cell_count() as f64;
    // 1e-9 keeps float noise (e.g. 20.000000000004) from rounding up a whole cell.
    (raw - 1e-9).ceil().max(0.0) as usize
}

fn affordable_designations(accounts: &Accounts, params: &LandParams) -> usize {
    if params.designation_cost <= 0.0 {
        return usize::MAX;
    }
    let funds = accounts.env.surplus + accounts.env.inflow_rate + params.deficit_cap;
    (funds.max(0.0) / params.designation_cost).floor() as usize
}

/// Advances the environment by one tick.
///
/// Order: subsidy controller, designation, row-major competition sweep,
/// supply recomputation, account settlement, tick increment.
pub fn step(
    state: &LandState,
    levers: &PolicyLevers,
    accounts: &Accounts,
    prices: &ServiceMap,
    params: &LandParams,
    afts: &[AftSpec],
) -> (LandState, Accounts, StepReport) {
    let mut effective = *levers;
    effective.subsidy.meat += controlled_meat_subsidy(state, levers, accounts, params);

    let unprotected = state.cell_count() - state.protected_count();
    let n = wanted_designations(state, levers, params)
        .min(affordable_designations(accounts, params))
        .min(unprotected);
    let (mut next, designation) =
        designate_protected(state, n, params.natural_capital, afts, &effective, prices);

    let mut takeovers = 0;
    for cell in next.cells.iter_mut() {
        let incumbent = perceived_utility(cell, &afts[cell.aft.0 as usize], &effective, prices);
        if let Some((challenger, u)) = best_eligible(cell, afts, &effective, prices, Some(cell.aft))
        {
            // Margin on |u| so a negative incumbent is never displaced by a worse challenger.
            if u > incumbent + params.eps_takeover * incumbent.abs() {
                cell.aft = challenger;
                takeovers += 1;
            }
        }
    }
    next.refresh(afts);

    let expenditure_agri: f64 = next
        .supply
        .iter()
        .map(|(s, v)| effective.subsidy[s] * v)
        .sum();
    let expenditure_env = params.designation_cost * designation.designated as f64
        + params.maintenance_cost * next.protected_count() as f64;

    let mut settled = *accounts;
    settled.agri.surplus += settled.agri.inflow_rate - expenditure_agri;
    settled.env.surplus += settled.env.inflow_rate - expenditure_env;
    next.tick = state.tick + 1;

    let report = StepReport {
        tick: next.tick,
        effective,
        designated: designation.designated,
        takeovers,
        inflow_agri: accounts.agri.inflow_rate,
        inflow_env: accounts.env.inflow_rate,
        expenditure_agri,
        expenditure_env,
    };
    (next, settled, report)
}
