//! Sequence policy: two stacks of causal decoder layers over rewards and
//! states, an action head, and the wrapped-angle loss it is trained with.

mod attention;
mod loss;
mod step;
mod train;

pub use attention::{attention, decoder_layer, positional_embedding, LayerCache};
pub use loss::{geo_loss, geo_loss_var, GeoLossMode};
pub use step::{action_head, init_policy, policy_step, predict_action, EpisodeContext, FrozenContext};
pub use train::{episode_loss, evaluate_policy, train_policy, Episode, Evaluation, FixedEpisode, PolicyMetrics, PolicyTrainConfig};

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::{azimuth_deg, haversine_km, normalize_deg, GeoPoint};

pub const DEFAULT_D_MODEL: usize = 64;
pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_R_MAX_KM: f64 = 5.0;

/// A relocation: distance as a fraction of `R_max` and a compass bearing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub dis_norm: f64,
    pub deg: f64,
}

impl Action {
    pub const STAY: Action = Action { dis_norm: 0.0, deg: 0.0 };

    pub fn new(dis_norm: f64, deg: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&dis_norm) || !(0.0..360.0).contains(&deg) {
            return Err(Error::Argument(format!("action ({dis_norm}, {deg}) out of range")));
        }
        Ok(Self { dis_norm, deg })
    }

    /// The move from `from` to `to`, with distance clipped to `r_max_km`.
    /// A zero move points north.
    pub fn between(from: GeoPoint, to: GeoPoint, r_max_km: f64) -> Self {
        let dis = haversine_km(from, to);
        let deg = azimuth_deg(from, to).map(normalize_deg).unwrap_or(0.0);
        Self {
            dis_norm: (dis / r_max_km).min(1.0),
            deg,
        }
    }

    pub fn distance_km(&self, r_max_km: f64) -> f64 {
        self.dis_norm * r_max_km
    }
}

/// Attention context: over the episode so far, or the current step only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextMode {
    #[default]
    Causal,
    Step,
}

impl FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal" => Ok(Self::Causal),
            "step" => Ok(Self::Step),
            other => Err(Error::Parse(format!("unknown context mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub layers: usize,
    pub state_dim: usize,
    pub dropout: f64,
    pub context: ContextMode,
    pub loss_mode: GeoLossMode,
    pub angle_weight: f64,
    pub r_max_km: f64,
}

impl PolicyConfig {
    pub fn new(state_dim: usize) -> Self {
        Self {
            d_model: DEFAULT_D_MODEL,
            layers: DEFAULT_LAYERS,
            state_dim,
            dropout: 0.0,
            context: ContextMode::Causal,
            loss_mode: GeoLossMode::Symmetric,
            angle_weight: 1.0,
            r_max_km: DEFAULT_R_MAX_KM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.layers == 0 || self.state_dim == 0 {
            return Err(Error::Config(format!("degenerate policy dimensions {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.r_max_km > 0.0 && self.angle_weight >= 0.0) {
            return Err(Error::Config("R_max must be positive and the angle weight non-negative".into()));
        }
        Ok(())
    }
}
