use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    perceived_utility, validate_afts, AftId, AftSpec, Cell, LandError, LandParams, LandState,
    PolicyLevers, ServiceMap,
};

/// Everything needed to build the initial land state from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    /// Names of the capitals; index `params.natural_capital` drives protection.
    pub capitals: Vec<String>,
    /// Productive and natural capital are anti-correlated; this is the noise
    /// half-width added to `1 - productive`.
    pub capital_noise: f64,
    pub afts: Vec<AftSpec>,
    pub prices: ServiceMap,
    /// Standing subsidies paid on top of the controlled meat subsidy.
    pub base_subsidy: ServiceMap,
    /// Initial meat goal as a multiple of the initial meat supply.
    pub goal_meat_ratio: f64,
    pub goal_pa: f64,
    pub params: LandParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 20,
            height: 20,
            capitals: vec!["productive".into(), "natural".into()],
            capital_noise: 0.32,
            afts: default_afts(),
            prices: ServiceMap {
                meat: 0.63,
                crops: 0.8,
                carbon: 0.8,
                recreation: 0.5,
            },
            base_subsidy: ServiceMap::default(),
            goal_meat_ratio: 2.5,
            goal_pa: 0.1,
            params: LandParams::default(),
        }
    }
}

fn aft(
    id: u16,
    name: &str,
    efficiency: ServiceMap,
    weights: [[f64; 2]; 4],
    restricted_on_protected: bool,
    base_cost: f64,
) -> AftSpec {
    AftSpec {
        id: AftId(id),
        name: name.into(),
        efficiency,
        capital_weights: weights.map(|w| w.to_vec()),
        restricted_on_protected,
        base_cost,
    }
}

/// Intensive livestock, crop farmer, mixed farmer, conservationist.
/// Weight rows are in `ServiceId::ALL` order over (productive, natural).
pub fn default_afts() -> Vec<AftSpec> {
    const P: [f64; 2] = [1.0, 0.0];
    const N: [f64; 2] = [0.0, 1.0];
    vec![
        aft(
            0,
            "intensive_livestock",
            ServiceMap {
                meat: 5.69,
                ..Default::default()
            },
            [[0.98, 0.02], P, N, N],
            true,
            0.87,
        ),
        aft(
            1,
            "crop_farmer",
            ServiceMap {
                crops: 3.36,
                ..Default::default()
            },
            [P, P, N, N],
            true,
            0.08,
        ),
        aft(
            2,
            "mixed_farmer",
            ServiceMap {
                meat: 0.34,
                crops: 1.05,
                carbon: 1.0,
                ..Default::default()
            },
            [[0.5, 0.5], [0.5, 0.5], N, N],
            false,
            0.81,
        ),
        aft(
            3,
            "conservationist",
            ServiceMap {
                carbon: 2.5,
                recreation: 2.0,
                ..Default::default()
            },
            [P, P, N, N],
            false,
            0.25,
        ),
    ]
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), LandError> {
        if self.width == 0 || self.height == 0 {
            return Err(LandError::Config("grid must be at least 1x1".into()));
        }
        if self.params.natural_capital >= self.capitals.len() {
            return Err(LandError::Config(
                "natural_capital index out of range".into(),
            ));
        }
        if !(self.goal_meat_ratio.is_finite() && self.goal_meat_ratio >= 0.0) {
            return Err(LandError::Config(
                "goal_meat_ratio must be non-negative".into(),
            ));
        }
        self.params.validate()?;
        validate_afts(&self.afts, self.capitals.len())?;
        self.base_levers(0.0).validate()
    }

    pub fn base_levers(&self, goal_meat: f64) -> PolicyLevers {
        PolicyLevers {
            subsidy: self.base_subsidy,
            goal_meat,
            goal_pa: self.goal_pa,
        }
    }

    /// Seeded capitals; every cell starts with its best AFT under the
    /// standing subsidies. Returns the state and the initial levers.
    pub fn initialize(&self, seed: u64) -> Result<(LandState, PolicyLevers), LandError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.capitals.len();
        let natural = self.params.natural_capital;
        let levers = self.base_levers(0.0);
        let mut cells = Vec::with_capacity(self.width * self.height);
        for _ in 0..self.width * self.height {
            let mut capitals: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
            if k >= 2 {
                // natural value is high where productivity is low
                let productive = capitals[if natural == 0 { 1 } else { 0 }];
                let noise = rng.random_range(-self.capital_noise..=self.capital_noise);
                capitals[natural] = (1.0 - productive + noise).clamp(0.0, 1.0);
            }
            let mut cell = Cell {
                capitals,
                aft: AftId(0),
                protected: false,
            };
            cell.aft = self
                .afts
                .iter()
                .map(|a| (a.id, perceived_utility(&cell, a, &levers, &self.prices)))
                .fold(None::<(AftId, f64)>, |best, (id, u)| match best {
                    Some((_, bu)) if bu >= u => best,
                    _ => Some((id, u)),
                })
                .map(|(id, _)| id)
                .expect("non-empty AFT table");
            cells.push(cell);
        }
        let state = LandState::new(self.width, self.height, cells, &self.afts)?;
        let levers = self.base_levers(state.supply.meat * self.goal_meat_ratio);
        Ok((state, levers))
    }
}
