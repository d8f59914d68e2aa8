//! Stylized land-use environment.
//!
//! Agent functional types (AFTs) compete for grid cells by perceived utility.
//! Each occupied cell produces ecosystem services from its capital endowment,
//! and two operational institutions steer the system through a meat subsidy
//! controller and protected-area designation, paid from budget accounts.

mod step;
mod world;

pub use step::{aggregate_supply, designate_protected, step, Designation, StepReport};
pub use world::{default_afts, WorldConfig};

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandError {
    #[error("AFT {aft}: capital weights for {service} sum to {sum}, expected 1")]
    WeightSum {
        aft: String,
        service: ServiceId,
        sum: f64,
    },
    #[error("AFT {aft}: {what} must be finite and non-negative")]
    BadCoefficient { aft: String, what: String },
    #[error("AFT {aft}: expected {expected} capital weights, found {found}")]
    CapitalArity {
        aft: String,
        expected: usize,
        found: usize,
    },
    #[error("at least one AFT must be allowed on protected cells")]
    NoUnrestrictedAft,
    #[error("AFT ids must be 0..n in order; found {found} at position {position}")]
    AftIdOrder { position: usize, found: u16 },
    #[error("invalid world configuration: {0}")]
    Config(String),
}

/// Ecosystem services produced by land.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceId {
    Meat,
    Crops,
    Carbon,
    Recreation,
}

impl ServiceId {
    pub const ALL: [ServiceId; 4] = [
        ServiceId::Meat,
        ServiceId::Crops,
        ServiceId::Carbon,
        ServiceId::Recreation,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ServiceId::Meat => "meat",
            ServiceId::Crops => "crops",
            ServiceId::Carbon => "carbon",
            ServiceId::Recreation => "recreation",
        }
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A dense per-service vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceMap {
    #[serde(default)]
    pub meat: f64,
    #[serde(default)]
    pub crops: f64,
    #[serde(default)]
    pub carbon: f64,
    #[serde(default)]
    pub recreation: f64,
}

impl ServiceMap {
    pub fn splat(v: f64) -> Self {
        Self::from_fn(|_| v)
    }

    pub fn from_fn(mut f: impl FnMut(ServiceId) -> f64) -> Self {
        Self {
            meat: f(ServiceId::Meat),
            crops: f(ServiceId::Crops),
            carbon: f(ServiceId::Carbon),
            recreation: f(ServiceId::Recreation),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ServiceId, f64)> + '_ {
        ServiceId::ALL.into_iter().map(move |s| (s, self[s]))
    }
}

impl Index<ServiceId> for ServiceMap {
    type Output = f64;

    fn index(&self, s: ServiceId) -> &f64 {
        match s {
            ServiceId::Meat => &self.meat,
            ServiceId::Crops => &self.crops,
            ServiceId::Carbon => &self.carbon,
            ServiceId::Recreation => &self.recreation,
        }
    }
}

impl IndexMut<ServiceId> for ServiceMap {
    fn index_mut(&mut self, s: ServiceId) -> &mut f64 {
        match s {
            ServiceId::Meat => &mut self.meat,
            ServiceId::Crops => &mut self.crops,
            ServiceId::Carbon => &mut self.carbon,
            ServiceId::Recreation => &mut self.recreation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AftId(pub u16);

impl fmt::Display for AftId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "aft#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub capitals: Vec<f64>,
    pub aft: AftId,
    pub protected: bool,
}

/// Land-user archetype with a fixed production recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftSpec {
    pub id: AftId,
    pub name: String,
    /// Service units per tick per cell at full capital.
    pub efficiency: ServiceMap,
    /// `capital_weights[s][k]`: share of capital `k` in producing service `s`.
    /// Indexed in `ServiceId::ALL` order.
    pub capital_weights: [Vec<f64>; 4],
    #[serde(default)]
    pub restricted_on_protected: bool,
    pub base_cost: f64,
}

impl AftSpec {
    pub fn validate(&self, capital_count: usize) -> Result<(), LandError> {
        let aft = || self.name.clone();
        if !(self.base_cost.is_finite() && self.base_cost >= 0.0) {
            return Err(LandError::BadCoefficient {
                aft: aft(),
                what: "base_cost".into(),
            });
        }
        for (s, m) in self.efficiency.iter() {
            if !(m.is_finite() && m >= 0.0) {
                return Err(LandError::BadCoefficient {
                    aft: aft(),
                    what: format!("efficiency[{s}]"),
                });
            }
            let row = &self.capital_weights[s.index()];
            if row.len() != capital_count {
                return Err(LandError::CapitalArity {
                    aft: aft(),
                    expected: capital_count,
                    found: row.len(),
                });
            }
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(LandError::BadCoefficient {
                    aft: aft(),
                    what: format!("weights[{s}]"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(LandError::WeightSum {
                    aft: aft(),
                    service: s,
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn allowed_on(&self, cell: &Cell) -> bool {
        !(cell.protected && self.restricted_on_protected)
    }
}

/// Per-service production of `aft` on `cell`: `m[s] * sum_k w[s][k] * capital[k]`.
pub fn production(cell: &Cell, aft: &AftSpec) -> ServiceMap {
    ServiceMap::from_fn(|s| {
        let weighted: f64 = aft.capital_weights[s.index()]
            .iter()
            .zip(&cell.capitals)
            .map(|(w, c)| w * c)
            .sum();
        aft.efficiency[s] * weighted
    })
}

/// Levers the institutions pull on the land system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyLevers {
    /// Payment per unit produced, in utility units.
    pub subsidy: ServiceMap,
    /// Target aggregate meat supply (units per tick).
    pub goal_meat: f64,
    /// Target protected-area coverage fraction.
    pub goal_pa: f64,
}

impl PolicyLevers {
    pub fn validate(&self) -> Result<(), LandError> {
        if self
            .subsidy
            .iter()
            .any(|(_, v)| !(v.is_finite() && v >= 0.0))
        {
            return Err(LandError::Config("subsidies must be non-negative".into()));
        }
        if !(self.goal_meat.is_finite() && self.goal_meat >= 0.0) {
            return Err(LandError::Config("goal_meat must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_pa) {
            return Err(LandError::Config("goal_pa must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `sum_s (price[s] + subsidy[s]) * production[s] - base_cost`.
pub fn perceived_utility(
    cell: &Cell,
    aft: &AftSpec,
    levers: &PolicyLevers,
    prices: &ServiceMap,
) -> f64 {
    let output = production(cell, aft);
    let revenue: f64 = output
        .iter()
        .map(|(s, p)| (prices[s] + levers.subsidy[s]) * p)
        .sum();
    revenue - aft.base_cost
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Institution {
    Agricultural,
    Environmental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAccount {
    pub institution: Institution,
    pub share: f64,
    /// Utility units per tick; `share * budget_rate`.
    pub inflow_rate: f64,
    /// Cumulative signed balance. Negative means deficit.
    pub surplus: f64,
}

/// The two operational institutions' accounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accounts {
    pub agri: BudgetAccount,
    pub env: BudgetAccount,
}

impl Accounts {
    pub fn even(budget_rate: f64) -> Self {
        let mut acc = Accounts {
            agri: BudgetAccount {
                institution: Institution::Agricultural,
                share: 0.5,
                inflow_rate: 0.0,
                surplus: 0.0,
            },
            env: BudgetAccount {
                institution: Institution::Environmental,
                share: 0.5,
                inflow_rate: 0.0,
                surplus: 0.0,
            },
        };
        acc.set_shares(0.5, 0.5, budget_rate);
        acc
    }

    /// Reallocate inflow. Surpluses carry over unchanged.
    pub fn set_shares(&mut self, share_agri: f64, share_env: f64, budget_rate: f64) {
        self.agri.share = share_agri;
        self.env.share = share_env;
        self.agri.inflow_rate = share_agri * budget_rate;
        self.env.inflow_rate = share_env * budget_rate;
    }

    pub fn shares_valid(&self) -> bool {
        (self.agri.share + self.env.share - 1.0).abs() <= 1e-9
    }
}

/// Tunable constants of the land dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandParams {
    /// Relative utility margin a challenger needs to take over a cell.
    pub eps_takeover: f64,
    /// Gain of the agricultural subsidy controller.
    pub kappa_agri: f64,
    /// Gain of the environmental designation controller.
    pub kappa_env: f64,
    /// Upper bound on the controlled meat subsidy.
    pub s_max: f64,
    /// Floor for the goal in the relative-gap denominator.
    pub eps_goal: f64,
    /// Deficit depth below which subsidies stop and designation halts.
    pub deficit_cap: f64,
    pub budget_rate: f64,
    pub designation_cost: f64,
    pub maintenance_cost: f64,
    /// Which capital index ranks cells for protection.
    pub natural_capital: usize,
}

impl Default for LandParams {
    fn default() -> Self {
        Self {
            eps_takeover: 0.05,
            kappa_agri: 0.5,
            kappa_env: 0.5,
            s_max: 1.0,
            eps_goal: 1e-9,
            deficit_cap: 500.0,
            budget_rate: 100.0,
            designation_cost: 5.0,
            maintenance_cost: 0.05,
            natural_capital: 1,
        }
    }
}

impl LandParams {
    pub fn validate(&self) -> Result<(), LandError> {
        let nonneg = [
            ("eps_takeover", self.eps_takeover),
            ("kappa_agri", self.kappa_agri),
            ("kappa_env", self.kappa_env),
            ("s_max", self.s_max),
            ("deficit_cap", self.deficit_cap),
            ("budget_rate", self.budget_rate),
            ("designation_cost", self.designation_cost),
            ("maintenance_cost", self.maintenance_cost),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LandError::Config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if !(self.eps_goal.is_finite() && self.eps_goal > 0.0) {
            return Err(LandError::Config("eps_goal must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandState {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub cells: Vec<Cell>,
    pub tick: u64,
    pub supply: ServiceMap,
    pub pa_coverage: f64,
}

impl LandState {
    /// Builds a state and computes the derived supply and coverage.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<Cell>,
        afts: &[AftSpec],
    ) -> Result<Self, LandError> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(LandError::Config(format!(
                "grid {width}x{height} needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        for cell in &cells {
            if cell.capitals.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(LandError::Config("capitals must lie in [0, 1]".into()));
            }
            let Some(aft) = afts.get(cell.aft.0 as usize) else {
                return Err(LandError::Config(format!("unknown {}", cell.aft)));
            };
            if !aft.allowed_on(cell) {
                return Err(LandError::Config(format!(
                    "{} is restricted on protected cells",
                    aft.name
                )));
            }
        }
        let mut state = LandState {
            width,
            height,
            cells,
            tick: 0,
            supply: ServiceMap::default(),
            pa_coverage: 0.0,
        };
        state.refresh(afts);
        Ok(state)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn protected_count(&self) -> usize {
        self.cells.iter().filter(|c| c.protected).count()
    }

    pub(crate) fn refresh(&mut self, afts: &[AftSpec]) {
        self.supply = aggregate_supply(self, afts);
        self.pa_coverage = self.protected_count() as f64 / self.cell_count() as f64;
    }
}

/// Checks that an AFT table is usable: ids `0..n`, valid recipes, and at
/// least one type that may occupy protected land.
pub fn validate_afts(afts: &[AftSpec], capital_count: usize) -> Result<(), LandError> {
    for (position, aft) in afts.iter().enumerate() {
        if aft.id.0 as usize != position {
            return Err(LandError::AftIdOrder {
                position,
                found: aft.id.0,
            });
        }
        aft.validate(capital_count)?;
    }
    if !afts.iter().any(|a| !a.restricted_on_protected) {
        return Err(LandError::NoUnrestrictedAft);
    }
    Ok(())
}
