/// Concrete temperature: linear from `start` to `end` over `anneal_steps`, then
/// constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: usize,
}

impl TemperatureSchedule {
    pub fn at(&self, step: usize) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}
