/// Scales rewards by the running standard deviation of the discounted
/// return. Pass-through outside training mode.
#[derive(Debug, Clone)]
pub struct RewardNormalizer {
    gamma: f64,
    ret: f64,
    mean: f64,
    var: f64,
    count: f64,
    training: bool,
}

const EPS: f64 = 1e-8;

impl RewardNormalizer {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, ret: 0.0, mean: 0.0, var: 1.0, count: 1e-4, training: true }
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn reset(&mut self) {
        *self = Self { training: self.training, ..Self::new(self.gamma) };
    }

    pub fn variance(&self) -> f64 {
        self.var
    }

    fn update(&mut self, x: f64) {
        let total = self.count + 1.0;
        let delta = x - self.mean;
        self.mean += delta / total;
        let m2 = self.var * self.count + delta * delta * self.count / total;
        self.var = m2 / total;
        self.count = total;
    }

    pub fn normalize(&mut self, reward: f64, done: bool) -> f64 {
        if !self.training {
            return reward;
        }
        self.ret = self.ret * self.gamma + reward;
        self.update(self.ret);
        let out = reward / (self.var + EPS).sqrt();
        if done {
            self.ret = 0.0;
        }
        out
    }
}
