use crate::error::{Error, Result};
use crate::signal::{Controller, Decision, DecisionContext};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SotlConfig {
    pub g_min: u32,
    /// Vehicle-seconds threshold on the red approaches.
    pub theta: f64,
    /// Distance from the stop line that counts as "approaching", metres.
    pub omega: f64,
    /// Platoons larger than this may be cut.
    pub mu: u32,
}

impl SotlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_min == 0 || !(self.theta > 0.0) || !(self.omega > 0.0) || self.mu == 0 {
            return Err(Error::Config("SOTL hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

/// Vehicle counts within `omega` of the stop line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SotlInputs {
    /// Over incoming lanes not served by the current green.
    pub red: u32,
    /// Over the current green's incoming lanes.
    pub green: u32,
}

/// One second of SOTL: returns the decision and the updated accumulator.
pub fn sotl_decide(
    inputs: SotlInputs,
    cfg: &SotlConfig,
    t_p: u32,
    kappa: f64,
    current: usize,
    num_phases: usize,
) -> (Decision, f64) {
    let kappa = kappa + inputs.red as f64;
    if t_p > cfg.g_min {
        let n = inputs.green;
        if (n > cfg.mu || n == 0) && kappa > cfg.theta {
            return (Decision::NextPhase((current + 1) % num_phases), 0.0);
        }
    }
    (Decision::Hold, kappa)
}

#[derive(Debug, Clone)]
pub struct Sotl {
    pub cfg: SotlConfig,
    kappa: f64,
}

impl Sotl {
    pub fn new(cfg: SotlConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Sotl { cfg, kappa: 0.0 })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl Controller for Sotl {
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision> {
        let inter = ctx.inter();
        let Some(p) = ctx.signal.current_green() else {
            self.kappa = 0.0;
            let next = ctx.signal.last_green().map(|p| inter.cycle_successor(p)).unwrap_or(0);
            return Ok(Decision::NextPhase(next));
        };
        let phase = &inter.phases[p];
        let mut inputs = SotlInputs { red: 0, green: 0 };
        for &lane in &inter.incoming {
            let c = ctx.sim.count_near_stop_line(lane, self.cfg.omega) as u32;
            if phase.incoming.contains(&lane) {
                inputs.green += c;
            } else {
                inputs.red += c;
            }
        }
        let (d, k) = sotl_decide(inputs, &self.cfg, ctx.signal.t_p(), self.kappa, p, inter.num_phases());
        self.kappa = k;
        Ok(d)
    }

    fn end_episode(&mut self) {
        self.kappa = 0.0;
    }
}
