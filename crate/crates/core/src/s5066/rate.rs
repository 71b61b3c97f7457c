/// Steps the data rate down after two consecutive lossy cycles and up
/// after four consecutive clean ones, clamped at the ends of the ladder.
#[derive(Clone, Debug)]
pub struct RateAdapter {
    ladder: Vec<u32>,
    lossy_streak: u32,
    clean_streak: u32,
}

const DOWN_LOSS: f64 = 0.3;
const UP_LOSS: f64 = 0.05;
const DOWN_AFTER: u32 = 2;
const UP_AFTER: u32 = 4;

impl RateAdapter {
    pub fn new(ladder: Vec<u32>) -> Self {
        assert!(!ladder.is_empty(), "rate ladder must not be empty");
        RateAdapter {
            ladder,
            lossy_streak: 0,
            clean_streak: 0,
        }
    }

    /// Feeds one cycle's frame loss ratio; returns the rate to use next.
    pub fn rate_adapt_step(&mut self, current_rate: u32, loss_ratio: f64) -> u32 {
        let idx = self
            .ladder
            .iter()
            .position(|&r| r == current_rate)
            .unwrap_or_else(|| panic!("rate {current_rate} not on the adaptation ladder"));
        if loss_ratio > DOWN_LOSS {
            self.clean_streak = 0;
            self.lossy_streak += 1;
            if self.lossy_streak >= DOWN_AFTER {
                self.lossy_streak = 0;
                return self.ladder[idx.saturating_sub(1)];
            }
        } else if loss_ratio < UP_LOSS {
            self.lossy_streak = 0;
            self.clean_streak += 1;
            if self.clean_streak >= UP_AFTER {
                self.clean_streak = 0;
                return self.ladder[(idx + 1).min(self.ladder.len() - 1)];
            }
        } else {
            self.lossy_streak = 0;
            self.clean_streak = 0;
        }
        current_rate
    }
}
