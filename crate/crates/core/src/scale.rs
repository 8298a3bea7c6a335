//! One-dimensional comparator-adaptive scale learner.
//!
//! Coin betting on normalized gradients: the learner holds a wealth (initially
//! 1, measured in loss units) and bets a fraction `β ∈ [-1/2, 1/2]` of it each
//! round, scaled by `1/L_V`. The fraction is
//! updated by an online Newton step on the log-loss `-ln(1 - β g)`. Bounded
//! segments are handled by playing the clipped bet and zeroing gradients that
//! push further out of the segment, which preserves the regret of the
//! unconstrained bettor against every comparator inside the segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Wealth saturates here so that bets remain finite under long runs of one-signed gradients.
pub const MAX_WEALTH: f64 = 1e150;

const MAX_FRACTION: f64 = 0.5;

/// A closed interval of the real line; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub low: f64,
    pub high: f64,
}

impl Segment {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if low.is_nan() || high.is_nan() || !(low < high) {
            return Err(Error::arg(format!(
                "segment requires low < high, got [{low}, {high}]"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn real_line() -> Self {
        Self {
            low: f64::NEG_INFINITY,
            high: f64::INFINITY,
        }
    }

    pub fn nonnegative() -> Self {
        Self {
            low: 0.0,
            high: f64::INFINITY,
        }
    }

    pub fn unit() -> Self {
        Self {
            low: 0.0,
            high: 1.0,
        }
    }

    /// `(0, 1]` realized as `[floor, 1]`.
    pub fn unit_open_at_zero(floor: f64) -> Result<Self> {
        Self::new(floor, 1.0)
    }

    /// Raises the lower end to `floor` (used to keep `v_t` away from zero).
    pub fn with_floor(self, floor: f64) -> Result<Self> {
        Self::new(self.low.max(floor), self.high)
    }

    /// Lowers the upper end to `cap`.
    pub fn with_cap(self, cap: f64) -> Result<Self> {
        Self::new(self.low, self.high.min(cap))
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }
}

/// State of the coin-betting scale learner.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLearner {
    segment: Segment,
    lipschitz: f64,
    wealth: CompensatedSum,
    fraction: f64,
    /// `1 + Σ z_s²` for the online Newton step on the betting fraction.
    curvature: f64,
    round: u64,
    lipschitz_violations: u64,
    last_bet: Option<f64>,
}

impl ScaleLearner {
    pub const INITIAL_WEALTH: f64 = 1.0;

    pub fn new(segment: Segment, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::arg(format!(
                "scale learner needs a positive finite gradient bound, got {lipschitz}"
            )));
        }
        Ok(Self {
            segment,
            lipschitz,
            wealth: CompensatedSum::with_value(Self::INITIAL_WEALTH),
            fraction: 0.0,
            curvature: 1.0,
            round: 0,
            lipschitz_violations: 0,
            last_bet: None,
        })
    }

    pub fn segment(&self) -> Segment {
        self.segment
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn wealth(&self) -> f64 {
        self.wealth.value()
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn lipschitz_violations(&self) -> u64 {
        self.lipschitz_violations
    }

    /// The unconstrained bet `β · wealth / L_V`.
    pub fn bet(&self) -> f64 {
        self.fraction * self.wealth() / self.lipschitz
    }

    /// The played scale `v_t`, the bet clipped to the segment.
    pub fn predict(&mut self) -> f64 {
        let bet = self.bet();
        self.last_bet = Some(bet);
        self.segment.clip(bet)
    }

    /// Consumes the gradient of the round's loss at the played `v_t`.
    pub fn update(&mut self, gradient: f64) -> Result<()> {
        if !gradient.is_finite() {
            return Err(Error::Numerical(format!(
                "scale learner received non-finite gradient {gradient}"
            )));
        }
        let bet = self.last_bet.take().unwrap_or_else(|| self.bet());
        let played = self.segment.clip(bet);
        let mut g = gradient;
        if g.abs() > self.lipschitz {
            self.lipschitz_violations += 1;
            g = g.clamp(-self.lipschitz, self.lipschitz);
        }
        let mut gn = g / self.lipschitz;
        // Clipped at the low end with a gradient that would push lower still,
        // or at the high end with one that would push higher: drop it.
        if (bet < played && gn > 0.0) || (bet > played && gn < 0.0) {
            gn = 0.0;
        }

        self.wealth.add(-bet * gn * self.lipschitz);
        let w = self.wealth.value();
        if w > MAX_WEALTH {
            self.wealth = CompensatedSum::with_value(MAX_WEALTH);
        } else if !(w > 0.0) {
            // Only reachable through underflow; |β g| ≤ 1/2 keeps wealth positive otherwise.
            self.wealth = CompensatedSum::with_value(f64::MIN_POSITIVE);
        }

        let z = gn / (1.0 - gn * self.fraction);
        self.curvature += z * z;
        let step = 2.0 / (2.0 - 3f64.ln());
        self.fraction =
            (self.fraction - step * z / self.curvature).clamp(-MAX_FRACTION, MAX_FRACTION);
        self.round += 1;
        Ok(())
    }
}

/// `Σ (v_t − comparator) g_t` with compensated summation.
pub fn scale_regret(trace: &[(f64, f64)], comparator: f64) -> f64 {
    trace
        .iter()
        .map(|(v, g)| (v - comparator) * g)
        .collect::<CompensatedSum>()
        .value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn learner_with(wealth: f64, fraction: f64, segment: Segment) -> ScaleLearner {
        let mut s = ScaleLearner::new(segment, 1.0).unwrap();
        s.wealth = CompensatedSum::with_value(wealth);
        s.fraction = fraction;
        s
    }

    #[test]
    fn predict_examples() {
        let mut fresh = ScaleLearner::new(Segment::nonnegative(), 1.0).unwrap();
        assert_eq!(fresh.predict(), 0.0);
        assert_eq!(learner_with(2.0, 0.25, Segment::unit()).predict(), 0.5);
        assert_eq!(learner_with(10.0, 0.5, Segment::unit()).predict(), 1.0);
    }

    #[test]
    fn zero_gradient_only_advances_round() {
        let mut s = ScaleLearner::new(Segment::nonnegative(), 3.0).unwrap();
        let before = s.clone();
        s.predict();
        s.update(0.0).unwrap();
        assert_eq!(s.wealth(), before.wealth());
        assert_eq!(s.fraction(), before.fraction());
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn first_positive_gradient_turns_bet_negative() {
        let lv = 2.0;
        let mut s = ScaleLearner::new(Segment::nonnegative(), lv).unwrap();
        assert_eq!(s.predict(), 0.0);
        s.update(lv).unwrap();
        assert_eq!(s.wealth(), 1.0);
        assert!(s.fraction() < 0.0);
        assert!(s.bet() < 0.0);
        assert_eq!(s.predict(), 0.0);
    }

    #[test]
    fn oversized_gradient_is_clipped_and_counted() {
        let mut s = ScaleLearner::new(Segment::real_line(), 1.0).unwrap();
        s.predict();
        s.update(5.0).unwrap();
        assert_eq!(s.lipschitz_violations(), 1);
        assert!(s.fraction() >= -0.5);
    }

    #[test]
    fn invalid_construction() {
        assert!(ScaleLearner::new(Segment::unit(), 0.0).is_err());
        assert!(Segment::new(1.0, 1.0).is_err());
        assert!(Segment::unit().with_floor(2.0).is_err());
    }

    #[test]
    fn regret_examples() {
        assert_eq!(scale_regret(&[], 3.0), 0.0);
        assert_eq!(scale_regret(&[(1.0, 2.0)], 0.0), 2.0);
        assert_eq!(scale_regret(&[(1.0, 2.0), (0.5, -1.0)], 1.0), 0.5);
    }

    fn run(seq: &[f64], segment: Segment, lv: f64) -> (ScaleLearner, Vec<(f64, f64)>) {
        let mut s = ScaleLearner::new(segment, lv).unwrap();
        let mut trace = Vec::with_capacity(seq.len());
        for &g in seq {
            let v = s.predict();
            assert!(segment.contains(v));
            s.update(g).unwrap();
            trace.push((v, g));
        }
        (s, trace)
    }

    #[test]
    fn constant_negative_gradients_against_comparator_grid() {
        let lv = 1.0;
        let t = 1000;
        let seq = vec![-lv; t];
        let (_, trace) = run(&seq, Segment::nonnegative(), lv);
        // Brute force over 10^4 comparators in [0, 100].
        let worst = (0..=10_000)
            .map(|k| scale_regret(&trace, 100.0 * k as f64 / 10_000.0))
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = 25.0 * (t as f64).sqrt() * (t as f64).ln();
        assert!(worst <= bound, "regret {worst} exceeds {bound}");
    }

    #[test]
    fn bounded_segment_feasibility_and_zero_comparator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for segment in [
            Segment::unit(),
            Segment::unit_open_at_zero(1e-3).unwrap(),
            Segment::nonnegative().with_cap(5.0).unwrap(),
        ] {
            let seq: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (s, trace) = run(&seq, segment, 1.0);
            assert!(s.wealth() > 0.0);
            if segment.contains(0.0) {
                assert!(scale_regret(&trace, 0.0) <= ScaleLearner::INITIAL_WEALTH + 1e-9);
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, a) = run(&seq, Segment::nonnegative(), 1.0);
        let (_, b) = run(&seq, Segment::nonnegative(), 1.0);
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn wealth_stays_positive(seq in proptest::collection::vec(-1.0f64..=1.0, 1..400), lv in 0.1f64..10.0) {
            let scaled: Vec<f64> = seq.iter().map(|g| g * lv).collect();
            let (s, trace) = run(&scaled, Segment::real_line(), lv);
            proptest::prop_assert!(s.wealth() > 0.0);
            // Regret against zero never exceeds the initial wealth on the real line.
            proptest::prop_assert!(scale_regret(&trace, 0.0) <= 1.0 + 1e-9);
        }
    }
}
