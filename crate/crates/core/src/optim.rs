//! Adam and momentum SGD with per-group learning rates and step-decay
//! milestones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
        }
    }
}

/// Learning rate divided by `factor` once per crossed milestone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub milestones: Vec<u64>,
    pub factor: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            milestones: vec![30, 45],
            factor: 10.0,
        }
    }
}

impl Schedule {
    pub fn constant() -> Self {
        Schedule {
            milestones: Vec::new(),
            factor: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("schedule.milestones", "must be strictly increasing"));
        }
        if !(self.factor.is_finite() && self.factor > 0.0) {
            return Err(Error::config("schedule.factor", "must be positive"));
        }
        Ok(())
    }

    fn crossed(&self, time: u64) -> usize {
        self.milestones.iter().filter(|&&m| m <= time).count()
    }
}

/// Name, learning-rate group and shape of one optimized tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub group: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub hyper: Hyper,
    pub schedule: Schedule,
    pub(crate) specs: Vec<ParamSpec>,
    pub(crate) base_lrs: Vec<f64>,
    pub(crate) step: u64,
    pub(crate) crossed: usize,
    pub(crate) last_time: Option<u64>,
    /// First moments (Adam) or velocities (SGD).
    pub(crate) first: Vec<Tensor>,
    /// Second moments; empty for SGD.
    pub(crate) second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(
        kind: OptimizerKind,
        hyper: Hyper,
        schedule: Schedule,
        group_lrs: Vec<f64>,
        specs: Vec<ParamSpec>,
    ) -> Result<Self> {
        schedule.validate()?;
        if let Some(bad) = specs.iter().find(|s| s.group >= group_lrs.len()) {
            return Err(Error::config(
                "optimizer",
                format!("parameter {} has no learning-rate group", bad.name),
            ));
        }
        if group_lrs.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return Err(Error::config("optimizer.lr", "learning rates must be finite and >= 0"));
        }
        let first = specs.iter().map(|s| Tensor::zeros(&s.shape)).collect();
        let second = match kind {
            OptimizerKind::Adam => specs.iter().map(|s| Tensor::zeros(&s.shape)).collect(),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Ok(OptimizerState {
            kind,
            hyper,
            schedule,
            specs,
            base_lrs: group_lrs,
            step: 0,
            crossed: 0,
            last_time: None,
            first,
            second,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Current learning rate of each group.
    pub fn lrs(&self) -> Vec<f64> {
        let decay = self.schedule.factor.powi(self.crossed as i32);
        self.base_lrs.iter().map(|lr| lr / decay).collect()
    }

    pub fn lr(&self, group: usize) -> f64 {
        self.lrs()[group]
    }

    /// Advances the schedule clock; each milestone reduces the rates once.
    pub fn apply_schedule(&mut self, time: u64) -> Result<()> {
        if let Some(last) = self.last_time {
            if time < last {
                return Err(Error::invalid(
                    "apply_schedule",
                    format!("time moved backwards from {last} to {time}"),
                ));
            }
        }
        self.last_time = Some(time);
        self.crossed = self.schedule.crossed(time);
        Ok(())
    }

    fn check(&self, params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.specs.len() || grads.len() != self.specs.len() {
            return Err(Error::invalid(
                "optimizer_step",
                format!(
                    "expected {} parameters, got {} parameters and {} gradients",
                    self.specs.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for ((spec, p), g) in self.specs.iter().zip(params).zip(grads) {
            if p.shape() != spec.shape.as_slice() || g.shape() != spec.shape.as_slice() {
                return Err(Error::shape("optimizer_step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", spec.name)));
            }
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => self.adam_step(params, grads),
            OptimizerKind::SgdMomentum => self.sgd_momentum_step(params, grads),
        }
    }

    /// Bias-corrected Adam update.
    pub fn adam_step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if self.kind != OptimizerKind::Adam {
            return Err(Error::invalid("adam_step", "optimizer state is not Adam"));
        }
        self.check(params, grads)?;
        self.step += 1;
        let Hyper { beta1, beta2, eps, .. } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let lrs = self.lrs();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let lr = lrs[self.specs[i].group];
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// `v ← μ·v + g; θ ← θ - lr·v`.
    pub fn sgd_momentum_step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if self.kind != OptimizerKind::SgdMomentum {
            return Err(Error::invalid(
                "sgd_momentum_step",
                "optimizer state is not SGD with momentum",
            ));
        }
        self.check(params, grads)?;
        self.step += 1;
        let mu = self.hyper.momentum;
        let lrs = self.lrs();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let lr = lrs[self.specs[i].group];
            for ((w, &gv), vel) in p.data_mut().iter_mut().zip(g.data()).zip(self.first[i].data_mut()) {
                *vel = mu * *vel + gv;
                *w -= lr * *vel;
            }
        }
        Ok(())
    }
}
