use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{FlashSchedule, InformedSchedule, LtParams, MmParams, ObservationScales, ZiParams};
use crate::exchange::{LatencyModel, DEFAULT_SHORT_BOUND};
use crate::lob::{Shares, Ticks};
use crate::rl::PpoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Stepped,
    Realtime,
}

/// Experimental cohort. ContinualTraining and Testing start from stored
/// checkpoints; Untrained keeps its seeded random initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    ContinualTraining,
    Testing,
    #[default]
    Untrained,
}

impl Group {
    pub fn loads_checkpoints(self) -> bool {
        !matches!(self, Group::Untrained)
    }

    pub fn trains(self) -> bool {
        matches!(self, Group::ContinualTraining)
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::ContinualTraining => "A",
            Group::Testing => "B",
            Group::Untrained => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endowment {
    /// Uniform range of starting cash in dollars.
    pub cash_dollars: (f64, f64),
    /// Uniform range of starting inventory in lots.
    pub inventory_lots: (i64, i64),
}

impl Default for Endowment {
    fn default() -> Self {
        Endowment {
            cash_dollars: (500_000.0, 2_000_000.0),
            inventory_lots: (-100, 100),
        }
    }
}

/// Opening ladder owned by a passive utility account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BookSeed {
    pub levels: usize,
    pub lots_per_level: u64,
}

impl Default for BookSeed {
    fn default() -> Self {
        BookSeed {
            levels: 5,
            lots_per_level: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct ZiSection {
    pub count: usize,
    #[serde(flatten)]
    pub params: ZiParams,
}


/// Network shape and training settings shared by all RL agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Relative jitter applied to ω, γ_inv and α of every RL agent.
    pub jitter: f64,
    pub scales: ObservationScales,
    pub ppo: PpoConfig,
}

impl Default for RlSection {
    fn default() -> Self {
        RlSection {
            hidden: vec![64, 64],
            init_log_std: -0.5,
            jitter: 0.1,
            scales: ObservationScales::default(),
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordSection {
    /// Steps between depth snapshots; 0 disables them.
    pub snapshot_every: u64,
    /// Steps between account rows; 0 disables them.
    pub accounts_every: u64,
    /// Log market-maker observations for policy probing.
    pub states: bool,
    /// Keep the full market event stream.
    pub events: bool,
}

impl Default for RecordSection {
    fn default() -> Self {
        RecordSection {
            snapshot_every: 1,
            accounts_every: 1,
            states: true,
            events: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealtimeSection {
    /// Wall-clock length of one step.
    pub step_millis: u64,
}

impl Default for RealtimeSection {
    fn default() -> Self {
        RealtimeSection { step_millis: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub n_steps: u64,
    pub mode: Mode,
    pub group: Group,
    /// Must agree with the group when given.
    pub training: Option<bool>,
    /// Directory of checkpoints to load (required by groups A and B).
    pub checkpoints: Option<PathBuf>,
    pub pretrain_steps: u64,
    /// Keep flash and informed schedules active while pretraining.
    pub pretrain_with_schedules: bool,
    pub initial_price: Ticks,
    pub short_bound: Shares,
    pub latency: LatencyModel,
    pub endowment: Endowment,
    pub book: BookSeed,
    pub zi: ZiSection,
    pub market_makers: Vec<MmParams>,
    pub liquidity_takers: Vec<LtParams>,
    pub flash: Option<FlashSchedule>,
    pub informed: Option<InformedSchedule>,
    pub rl: RlSection,
    pub record: RecordSection,
    pub realtime: RealtimeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            seed: 0,
            n_steps: 1_000,
            mode: Mode::Stepped,
            group: Group::Untrained,
            training: None,
            checkpoints: None,
            pretrain_steps: 5_000,
            pretrain_with_schedules: false,
            initial_price: 10_000,
            short_bound: DEFAULT_SHORT_BOUND,
            latency: LatencyModel::None,
            endowment: Endowment::default(),
            book: BookSeed::default(),
            zi: ZiSection::default(),
            market_makers: Vec::new(),
            liquidity_takers: Vec::new(),
            flash: None,
            informed: None,
            rl: RlSection::default(),
            record: RecordSection::default(),
            realtime: RealtimeSection::default(),
        }
    }
}

pub const PRESETS: [&str; 4] = ["zi_desk", "rl_desk", "flash_sale", "informed_lt"];

fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "zi_desk" => Some(include_str!("../../../../configs/zi_desk.toml")),
        "rl_desk" => Some(include_str!("../../../../configs/rl_desk.toml")),
        "flash_sale" => Some(include_str!("../../../../configs/flash_sale.toml")),
        "informed_lt" => Some(include_str!("../../../../configs/informed_lt.toml")),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn preset(name: &str) -> Result<Self, HarnessError> {
        let src = preset_source(name)
            .ok_or_else(|| HarnessError::ConfigInvalid(format!("unknown preset {name:?}")))?;
        Self::from_toml(src)
    }

    /// A preset name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self, HarnessError> {
        if preset_source(name_or_path).is_some() {
            return Self::preset(name_or_path);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Whether RL agents update their parameters during the run.
    pub fn training_enabled(&self) -> bool {
        self.training.unwrap_or(self.group.trains())
    }

    pub fn rl_agent_count(&self) -> usize {
        self.market_makers.len() + self.liquidity_takers.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if self.initial_price <= self.book.levels as Ticks {
            return bad(format!("initial price {} ticks is too low for the seeded ladder", self.initial_price));
        }
        if self.book.levels == 0 || self.book.lots_per_level == 0 {
            return bad("seeded book needs at least one level with one lot".into());
        }
        let (lo, hi) = self.endowment.cash_dollars;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("cash range [{lo}, {hi}] is invalid"));
        }
        let (ilo, ihi) = self.endowment.inventory_lots;
        if ilo > ihi {
            return bad(format!("inventory range [{ilo}, {ihi}] is invalid"));
        }
        if let Some(training) = self.training {
            if training != self.group.trains() {
                return bad(format!(
                    "training = {training} contradicts group {:?}",
                    self.group
                ));
            }
        }
        if self.group.loads_checkpoints() {
            if self.checkpoints.is_none() {
                return bad(format!("group {:?} requires a checkpoints directory", self.group));
            }
        } else if self.checkpoints.is_some() {
            return bad("the untrained group must not load checkpoints".into());
        }
        if let LatencyModel::Uniform { lo_steps, hi_steps } = self.latency {
            if lo_steps > hi_steps {
                return bad("latency lo_steps exceeds hi_steps".into());
            }
        }
        if !(0.0..1.0).contains(&self.rl.jitter) {
            return bad(format!("jitter must lie in [0, 1), got {}", self.rl.jitter));
        }
        if self.rl.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        self.rl.ppo.validate().map_err(HarnessError::ConfigInvalid)?;
        self.zi.params.validate().map_err(HarnessError::ConfigInvalid)?;
        for p in &self.market_makers {
            p.validate().map_err(HarnessError::ConfigInvalid)?;
        }
        for p in &self.liquidity_takers {
            p.validate().map_err(HarnessError::ConfigInvalid)?;
        }
        if let Some(f) = &self.flash {
            if f.active == 0 || f.lots == 0 {
                return bad("flash schedule needs active steps and a positive size".into());
            }
        }
        if let Some(s) = &self.informed {
            if s.phases.is_empty() || s.phase_len == 0 {
                return bad("informed schedule needs at least one phase of positive length".into());
            }
            if s.phases.iter().any(|(b, a)| !(0.0..=1.0).contains(b) || !(0.0..=1.0).contains(a)) {
                return bad("informed fractions must lie in [0, 1]".into());
            }
        }
        if self.mode == Mode::Realtime && self.realtime.step_millis == 0 {
            return bad("realtime step_millis must be positive".into());
        }
        Ok(())
    }
}
