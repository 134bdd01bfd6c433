//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; every other line must set a
//! known key. Keys left out keep their defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::AdamConfig;
use crate::behavior::BehaviorLoss;
use crate::error::{Error, Result};
use crate::hexgraph::{HopVisibility, Level, ViewSpec};
use crate::policy::{ContextMode, GeoLossMode, PolicyConfig};
use crate::represent::{GcnMode, ViewMask};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub micro_km: f64,
    pub meso_km: f64,
    pub macro_km: f64,
    pub views: ViewMask,
    pub gcn: GcnMode,
    pub d_g: usize,
    pub precision: usize,
    pub hops: bool,
    pub hop: HopVisibility,

    pub hidden: usize,
    pub behavior_loss: BehaviorLoss,
    pub pretrain_epochs: usize,
    pub behavior_segments: usize,
    pub behavior_leng: usize,

    pub alpha: f64,
    /// Discount factor; accepted for completeness, the reward is per step.
    pub gamma: f64,

    pub d_model: usize,
    pub layers: usize,
    pub dropout: f64,
    pub context: ContextMode,
    pub geo_loss: GeoLossMode,
    pub angle_weight: f64,
    pub r_max_km: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub keep_best: bool,
    pub adam: AdamConfig,

    pub leng: usize,
    pub segments: usize,
    pub split: [usize; 3],
    pub speed_limit_kmh: f64,

    pub seed: u64,
    pub vehicles: usize,
    pub orders: usize,
    pub horizon_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            micro_km: 2.0,
            meso_km: 5.0,
            macro_km: 10.0,
            views: [true; 3],
            gcn: GcnMode::SelfLoops,
            d_g: 128,
            precision: crate::geo::DEFAULT_PRECISION,
            hops: true,
            hop: HopVisibility::default(),
            hidden: crate::behavior::DEFAULT_HIDDEN,
            behavior_loss: BehaviorLoss::Bce,
            pretrain_epochs: 30,
            behavior_segments: 1000,
            behavior_leng: 64,
            alpha: crate::behavior::DEFAULT_ALPHA,
            gamma: 0.99,
            d_model: crate::policy::DEFAULT_D_MODEL,
            layers: crate::policy::DEFAULT_LAYERS,
            dropout: 0.5,
            context: ContextMode::Causal,
            geo_loss: GeoLossMode::Symmetric,
            angle_weight: 1.0,
            r_max_km: crate::policy::DEFAULT_R_MAX_KM,
            epochs: 20,
            batch_size: 16,
            keep_best: true,
            adam: AdamConfig::default(),
            leng: 1024,
            segments: 1000,
            split: [6, 3, 1],
            speed_limit_kmh: 60.0,
            seed: 0,
            vehicles: 20,
            orders: 200,
            horizon_s: 7200.0,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn parse_views(v: &str) -> Option<ViewMask> {
    let mut mask = [false; 3];
    for part in v.split(',').map(str::trim) {
        let level: Level = part.parse().ok()?;
        mask[level.index()] = true;
    }
    Some(mask)
}

fn parse_split(v: &str) -> Option<[usize; 3]> {
    let parts: Vec<usize> = v.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

impl RunConfig {
    /// Every key `set` accepts, in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "micro_km", "meso_km", "macro_km", "views", "gcn", "d_g", "precision", "hops",
        "hop_delay_min_ms", "hop_delay_max_ms", "hop_budget_ms", "hidden", "behavior_loss",
        "pretrain_epochs", "behavior_segments", "behavior_leng", "alpha", "gamma", "d_model",
        "layers", "dropout", "context", "geo_loss", "angle_weight", "r_max_km", "epochs",
        "batch_size", "keep_best", "lr", "beta1", "beta2", "eps", "leng", "segments", "split",
        "speed_limit_kmh", "seed", "vehicles", "orders", "horizon_s",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid value {value:?} for {key}"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "micro_km" => self.micro_km = f()?,
            "meso_km" => self.meso_km = f()?,
            "macro_km" => self.macro_km = f()?,
            "views" => self.views = parse_views(value).ok_or_else(bad)?,
            "gcn" => {
                self.gcn = match value {
                    "self_loops" => GcnMode::SelfLoops,
                    "literal" => GcnMode::Literal,
                    _ => return Err(bad()),
                }
            }
            "d_g" => self.d_g = u()?,
            "precision" => self.precision = u()?,
            "hops" => self.hops = parse_bool(value).ok_or_else(bad)?,
            "hop_delay_min_ms" => self.hop.delay_min_ms = f()?,
            "hop_delay_max_ms" => self.hop.delay_max_ms = f()?,
            "hop_budget_ms" => self.hop.budget_ms = f()?,
            "hidden" => self.hidden = u()?,
            "behavior_loss" => {
                self.behavior_loss = match value {
                    "bce" => BehaviorLoss::Bce,
                    "literal" => BehaviorLoss::Literal,
                    _ => return Err(bad()),
                }
            }
            "pretrain_epochs" => self.pretrain_epochs = u()?,
            "behavior_segments" => self.behavior_segments = u()?,
            "behavior_leng" => self.behavior_leng = u()?,
            "alpha" => self.alpha = f()?,
            "gamma" => self.gamma = f()?,
            "d_model" => self.d_model = u()?,
            "layers" => self.layers = u()?,
            "dropout" => self.dropout = f()?,
            "context" => self.context = value.parse().map_err(|_| bad())?,
            "geo_loss" => {
                self.geo_loss = match value {
                    "symmetric" => GeoLossMode::Symmetric,
                    "literal" => GeoLossMode::Literal,
                    _ => return Err(bad()),
                }
            }
            "angle_weight" => self.angle_weight = f()?,
            "r_max_km" => self.r_max_km = f()?,
            "epochs" => self.epochs = u()?,
            "batch_size" => self.batch_size = u()?,
            "keep_best" => self.keep_best = parse_bool(value).ok_or_else(bad)?,
            "lr" => self.adam.lr = f()?,
            "beta1" => self.adam.beta1 = f()?,
            "beta2" => self.adam.beta2 = f()?,
            "eps" => self.adam.eps = f()?,
            "leng" => self.leng = u()?,
            "segments" => self.segments = u()?,
            "split" => self.split = parse_split(value).ok_or_else(bad)?,
            "speed_limit_kmh" => self.speed_limit_kmh = f()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "vehicles" => self.vehicles = u()?,
            "orders" => self.orders = u()?,
            "horizon_s" => self.horizon_s = f()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text with every key; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let views: Vec<&str> = Level::ALL
            .iter()
            .filter(|l| self.views[l.index()])
            .map(|l| l.as_str())
            .collect();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("micro_km", self.micro_km.to_string());
        kv("meso_km", self.meso_km.to_string());
        kv("macro_km", self.macro_km.to_string());
        kv("views", views.join(","));
        kv("gcn", match self.gcn { GcnMode::SelfLoops => "self_loops", GcnMode::Literal => "literal" }.into());
        kv("d_g", self.d_g.to_string());
        kv("precision", self.precision.to_string());
        kv("hops", self.hops.to_string());
        kv("hop_delay_min_ms", self.hop.delay_min_ms.to_string());
        kv("hop_delay_max_ms", self.hop.delay_max_ms.to_string());
        kv("hop_budget_ms", self.hop.budget_ms.to_string());
        kv("hidden", self.hidden.to_string());
        kv("behavior_loss", match self.behavior_loss { BehaviorLoss::Bce => "bce", BehaviorLoss::Literal => "literal" }.into());
        kv("pretrain_epochs", self.pretrain_epochs.to_string());
        kv("behavior_segments", self.behavior_segments.to_string());
        kv("behavior_leng", self.behavior_leng.to_string());
        kv("alpha", self.alpha.to_string());
        kv("gamma", self.gamma.to_string());
        kv("d_model", self.d_model.to_string());
        kv("layers", self.layers.to_string());
        kv("dropout", self.dropout.to_string());
        kv("context", match self.context { ContextMode::Causal => "causal", ContextMode::Step => "step" }.into());
        kv("geo_loss", match self.geo_loss { GeoLossMode::Symmetric => "symmetric", GeoLossMode::Literal => "literal" }.into());
        kv("angle_weight", self.angle_weight.to_string());
        kv("r_max_km", self.r_max_km.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("keep_best", self.keep_best.to_string());
        kv("lr", self.adam.lr.to_string());
        kv("beta1", self.adam.beta1.to_string());
        kv("beta2", self.adam.beta2.to_string());
        kv("eps", self.adam.eps.to_string());
        kv("leng", self.leng.to_string());
        kv("segments", self.segments.to_string());
        kv("split", format!("{}:{}:{}", self.split[0], self.split[1], self.split[2]));
        kv("speed_limit_kmh", self.speed_limit_kmh.to_string());
        kv("seed", self.seed.to_string());
        kv("vehicles", self.vehicles.to_string());
        kv("orders", self.orders.to_string());
        kv("horizon_s", self.horizon_s.to_string());
        out
    }

    pub fn view_specs(&self) -> Result<[ViewSpec; 3]> {
        Ok([
            ViewSpec::new(Level::Micro, self.micro_km)?,
            ViewSpec::new(Level::Meso, self.meso_km)?,
            ViewSpec::new(Level::Macro, self.macro_km)?,
        ])
    }

    pub fn state_dim(&self) -> usize {
        crate::represent::state_dim(self.d_g, self.precision)
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            d_model: self.d_model,
            layers: self.layers,
            state_dim: self.state_dim(),
            dropout: self.dropout,
            context: self.context,
            loss_mode: self.geo_loss,
            angle_weight: self.angle_weight,
            r_max_km: self.r_max_km,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        self.view_specs()?;
        if !self.views.iter().any(|v| *v) {
            return fail("at least one view must be enabled");
        }
        if self.d_g == 0 || self.hidden == 0 || self.d_model == 0 || self.layers == 0 {
            return fail("dimensions and layer counts must be positive");
        }
        if !(1..=crate::geo::MAX_PRECISION).contains(&self.precision) {
            return fail("precision must lie in 1..=16");
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.gamma) {
            return fail("alpha and gamma must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.angle_weight >= 0.0 && self.r_max_km > 0.0 && self.speed_limit_kmh > 0.0) {
            return fail("angle weight, r_max_km and speed limit must be positive");
        }
        if self.leng < 2 || self.behavior_leng < 2 {
            return fail("sequence lengths must be at least 2");
        }
        if self.batch_size == 0 || self.split.iter().sum::<usize>() == 0 {
            return fail("batch size and split must be positive");
        }
        if !(self.adam.lr > 0.0 && (0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2) && self.adam.eps > 0.0) {
            return fail("invalid Adam constants");
        }
        if !(0.0 <= self.hop.delay_min_ms && self.hop.delay_min_ms <= self.hop.delay_max_ms && self.hop.budget_ms >= 0.0) {
            return fail("invalid hop channel");
        }
        if self.vehicles == 0 || self.horizon_s <= 600.0 {
            return fail("city needs vehicles and a horizon beyond the pickup deadline");
        }
        self.policy_config().validate()
    }
}
