use crate::error::{Error, Result};

/// Linear interpolation from `start` to `end` over `steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64, steps: u64) -> Self {
        LinearSchedule { start, end, steps }
    }

    pub fn constant(value: f64) -> Self {
        LinearSchedule { start: value, end: value, steps: 0 }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.steps as f64
    }

    /// Value for actor `actor` out of `actors`: actor 0 follows the schedule,
    /// actor `k` explores at `1 / (1 + k)` of it.
    pub fn for_actor(&self, step: u64, actor: usize) -> f64 {
        self.value(step) / (1 + actor) as f64
    }

    pub fn validate(&self, lo: f64, hi: f64, what: &str) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= lo && v <= hi;
        if !ok(self.start) || !ok(self.end) {
            return Err(Error::Config(alloc::format!("{what} schedule must stay within [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_then_flat() {
        let s = LinearSchedule::new(1.0, 0.1, 10);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(5) - 0.55).abs() < 1e-12);
        assert_eq!(s.value(10), 0.1);
        assert_eq!(s.value(1000), 0.1);
        assert_eq!(s.for_actor(0, 0), 1.0);
        assert_eq!(s.for_actor(0, 3), 0.25);
        assert_eq!(LinearSchedule::constant(0.3).value(0), 0.3);
    }
}
