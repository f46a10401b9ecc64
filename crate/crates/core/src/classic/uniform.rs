use crate::error::Result;
use crate::signal::{Controller, Decision, DecisionContext};

/// Same green duration `u` for every phase, phases served in cycle order.
pub fn uniform_decide(t_p: u32, u: u32, current: usize, num_phases: usize) -> Decision {
    if t_p < u {
        Decision::Hold
    } else {
        Decision::NextPhase((current + 1) % num_phases)
    }
}

#[derive(Debug, Clone)]
pub struct Uniform {
    pub green_s: u32,
}

impl Uniform {
    pub fn new(green_s: u32) -> Self {
        Uniform { green_s: green_s.max(1) }
    }
}

impl Controller for Uniform {
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision> {
        Ok(match ctx.signal.current_green() {
            Some(p) => uniform_decide(ctx.signal.t_p(), self.green_s, p, ctx.inter().num_phases()),
            None => Decision::NextPhase(ctx.signal.last_green().map(|p| ctx.inter().cycle_successor(p)).unwrap_or(0)),
        })
    }
}
