//! Privacy budget ledger with basic composition for pure-epsilon steps and a
//! Rényi accountant for Gaussian steps.
//!
//! Totals reported for a ledger come in two views:
//!
//! * per-user: the budget any one individual spends. In the local model every
//!   record belongs to a distinct individual, so an entry's `count` does not
//!   multiply its cost here.
//! * composed: the worst case where all `count` invocations touch the same
//!   individual. Pure entries add up via basic composition, Gaussian entries
//!   through the Rényi curve, and the two parts are summed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MechanismKind;

/// Rényi orders to minimise over when converting to `(epsilon, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpOptions {
    alphas: Vec<f64>,
}

impl RdpOptions {
    pub const DEFAULT_ALPHAS: [f64; 17] = [
        1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 32.0, 64.0, 128.0,
    ];

    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidConfig("alpha grid must be non-empty".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 1.0)) {
            return Err(Error::InvalidConfig(format!("Rényi order {a} must be > 1")));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

impl Default for RdpOptions {
    fn default() -> Self {
        Self {
            alphas: Self::DEFAULT_ALPHAS.to_vec(),
        }
    }
}

/// One ledger line: `count` invocations of a mechanism with shared parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub mechanism: MechanismKind,
    #[serde(with = "crate::extended_float")]
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub sensitivity: f64,
    pub count: u64,
}

impl BudgetEntry {
    pub fn pure(mechanism: MechanismKind, epsilon: f64, count: u64) -> Self {
        Self {
            mechanism,
            epsilon,
            delta: 0.0,
            sigma: None,
            sensitivity: 1.0,
            count,
        }
    }

    pub fn gaussian(epsilon: f64, delta: f64, sigma: f64, sensitivity: f64, count: u64) -> Self {
        Self {
            mechanism: MechanismKind::Gaussian,
            epsilon,
            delta,
            sigma: Some(sigma),
            sensitivity,
            count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidEntry(m.to_string()));
        if self.count == 0 {
            return bad("count must be positive");
        }
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return bad("sensitivity must be positive");
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be >= 0");
        }
        if self.epsilon.is_infinite() && self.mechanism != MechanismKind::None {
            return bad("only mechanism none may carry an infinite epsilon");
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad("delta must lie in [0, 1)");
        }
        match self.mechanism {
            MechanismKind::Gaussian => match self.sigma {
                Some(s) if s.is_finite() && s > 0.0 => {}
                Some(_) => return bad("sigma must be positive"),
                None => return bad("gaussian entries require sigma"),
            },
            _ => {
                if self.delta != 0.0 {
                    return bad("non-gaussian entries carry delta = 0");
                }
                if self.sigma.is_some() {
                    return bad("only gaussian entries carry sigma");
                }
            }
        }
        Ok(())
    }
}

/// Which total a budget cap is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapBasis {
    PerUser,
    Composed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCap {
    pub epsilon: f64,
    pub delta: f64,
    pub basis: CapBasis,
}

/// Append-only privacy ledger.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    entries: Vec<BudgetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cap: Option<BudgetCap>,
    #[serde(default)]
    rdp: RdpOptions,
    /// Reports passed through the shuffler. Recorded only; epsilon is not
    /// adjusted for amplification.
    #[serde(default)]
    shuffled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    #[serde(with = "crate::extended_float")]
    pub per_user_epsilon: f64,
    pub per_user_delta: f64,
    #[serde(with = "crate::extended_float")]
    pub composed_epsilon: f64,
    pub composed_delta: f64,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cap(epsilon: f64, delta: f64, basis: CapBasis) -> Self {
        Self {
            cap: Some(BudgetCap { epsilon, delta, basis }),
            ..Self::default()
        }
    }

    pub fn with_rdp_options(mut self, opts: RdpOptions) -> Self {
        self.rdp = opts;
        self
    }

    pub fn entries(&self) -> &[BudgetEntry] {
        &self.entries
    }

    pub fn cap(&self) -> Option<BudgetCap> {
        self.cap
    }

    pub fn shuffled(&self) -> bool {
        self.shuffled
    }

    pub fn mark_shuffled(&mut self) {
        self.shuffled = true;
    }

    /// Appends `entry` unless doing so would push the capped total over its
    /// limit, in which case the ledger is left unchanged.
    pub fn charge(&mut self, entry: BudgetEntry) -> Result<()> {
        entry.validate()?;
        if let Some(cap) = self.cap {
            self.entries.push(entry);
            let totals = self.totals();
            let (eps, delta) = match cap.basis {
                CapBasis::PerUser => (totals.per_user_epsilon, totals.per_user_delta),
                CapBasis::Composed => (totals.composed_epsilon, totals.composed_delta),
            };
            // Relative slack so that 0.5 + 0.5 does not trip a cap of 1.0.
            let over = |v: f64, limit: f64| v > limit + 1e-12 * limit.abs().max(1.0);
            if over(eps, cap.epsilon) || over(delta, cap.delta) {
                self.entries.pop();
                return Err(Error::BudgetExceeded { epsilon: eps, delta });
            }
            return Ok(());
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn totals(&self) -> LedgerTotals {
        let per_user_epsilon = self.entries.iter().map(|e| e.epsilon).sum();
        let per_user_delta = self.entries.iter().map(|e| e.delta).sum();
        let (composed_epsilon, composed_delta) = compose_mixed(self);
        LedgerTotals {
            per_user_epsilon,
            per_user_delta,
            composed_epsilon,
            composed_delta,
        }
    }
}

/// Basic composition: `(sum count_i * eps_i, sum count_i * delta_i)`.
pub fn compose_basic(ledger: &BudgetLedger) -> (f64, f64) {
    ledger.entries.iter().fold((0.0, 0.0), |(e, d), entry| {
        let n = entry.count as f64;
        (e + n * entry.epsilon, d + n * entry.delta)
    })
}

/// `(epsilon, delta)` conversion of a summed Gaussian Rényi curve with
/// per-order cost `rdp_slope * alpha`.
fn convert_rdp(rdp_slope: f64, delta: f64, opts: &RdpOptions) -> f64 {
    let log_inv_delta = (1.0 / delta).ln();
    opts.alphas
        .iter()
        .map(|&a| rdp_slope * a + log_inv_delta / (a - 1.0))
        .fold(f64::INFINITY, f64::min)
}

/// Epsilon for `steps` Gaussian releases converted at `delta`:
/// `min over alpha of steps * alpha * sens^2 / (2 sigma^2) + ln(1/delta) / (alpha - 1)`.
pub fn compose_rdp_gaussian(
    sigma: f64,
    sensitivity: f64,
    steps: u64,
    delta: f64,
    opts: &RdpOptions,
) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(Error::InvalidSensitivity(sensitivity));
    }
    if steps == 0 {
        return Ok(0.0);
    }
    let slope = steps as f64 * sensitivity * sensitivity / (2.0 * sigma * sigma);
    Ok(convert_rdp(slope, delta, opts))
}

/// Pure entries by basic composition plus Gaussian entries through one
/// summed Rényi curve, converted at the summed Gaussian delta.
fn compose_mixed(ledger: &BudgetLedger) -> (f64, f64) {
    let mut pure_eps = 0.0;
    let mut slope = 0.0;
    let mut gauss_delta = 0.0;
    for e in &ledger.entries {
        match (e.mechanism, e.sigma) {
            (MechanismKind::Gaussian, Some(sigma)) => {
                slope += e.count as f64 * e.sensitivity * e.sensitivity / (2.0 * sigma * sigma);
                gauss_delta += e.delta;
            }
            _ => pure_eps += e.count as f64 * e.epsilon,
        }
    }
    if slope == 0.0 {
        return (pure_eps, 0.0);
    }
    let gauss_delta = gauss_delta.min(1.0 - f64::EPSILON);
    (pure_eps + convert_rdp(slope, gauss_delta, &ledger.rdp), gauss_delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rr(eps: f64) -> BudgetEntry {
        BudgetEntry::pure(MechanismKind::RandomizedResponse, eps, 1)
    }

    #[test]
    fn basic_composition_examples() {
        assert_eq!(compose_basic(&BudgetLedger::new()), (0.0, 0.0));
        let mut l = BudgetLedger::new();
        l.charge(rr(0.5)).unwrap();
        l.charge(rr(0.5)).unwrap();
        assert_eq!(compose_basic(&l).0, 1.0);

        let mut l = BudgetLedger::new();
        l.charge(BudgetEntry::gaussian(1.0, 1.5e-7, 5.6, 1.0, 3)).unwrap();
        let (e, d) = compose_basic(&l);
        assert_eq!(e, 3.0);
        assert!((d - 4.5e-7).abs() < 1e-20);
    }

    #[test]
    fn cap_enforced_without_partial_charge() {
        let mut l = BudgetLedger::with_cap(1.0, 1e-6, CapBasis::Composed);
        l.charge(rr(0.5)).unwrap();
        l.charge(rr(0.5)).unwrap();
        assert!(matches!(l.charge(rr(0.5)), Err(Error::BudgetExceeded { .. })));
        assert_eq!(l.entries().len(), 2);

        let mut open = BudgetLedger::new();
        for _ in 0..100 {
            open.charge(rr(10.0)).unwrap();
        }
    }

    #[test]
    fn per_user_cap_ignores_count() {
        let mut l = BudgetLedger::with_cap(1.0, 0.0, CapBasis::PerUser);
        l.charge(BudgetEntry::pure(MechanismKind::RandomizedResponse, 1.0, 10_000)).unwrap();
        let t = l.totals();
        assert_eq!(t.per_user_epsilon, 1.0);
        assert_eq!(t.composed_epsilon, 10_000.0);
        assert!(l.charge(rr(0.1)).is_err());
    }

    #[test]
    fn entry_validation() {
        let mut e = BudgetEntry::gaussian(1.0, 1e-6, 1.0, 1.0, 1);
        e.sigma = None;
        assert!(matches!(BudgetLedger::new().charge(e), Err(Error::InvalidEntry(_))));
        let mut e = rr(1.0);
        e.delta = 0.1;
        assert!(e.validate().is_err());
        let mut e = rr(1.0);
        e.count = 0;
        assert!(e.validate().is_err());
        assert!(rr(f64::INFINITY).validate().is_err());
        assert!(BudgetEntry::pure(MechanismKind::None, f64::INFINITY, 4).validate().is_ok());
    }

    #[test]
    fn rdp_examples() {
        let opts = RdpOptions::default();
        assert_eq!(compose_rdp_gaussian(1.0, 1.0, 0, 1e-5, &opts).unwrap(), 0.0);
        // Dense-grid oracle over alpha in (1, 200], step 0.01: 5.298526 at alpha 5.80.
        let eps = compose_rdp_gaussian(1.0, 1.0, 1, 1e-5, &opts).unwrap();
        assert!((eps - 5.298526138535465).abs() < 1e-2, "{eps}");
        // Same oracle at sigma = 5.645489, 100 steps, delta = 1e-6: 10.879812.
        let eps = compose_rdp_gaussian(5.645489189461683, 1.0, 100, 1e-6, &opts).unwrap();
        assert!((eps - 10.879812493920682).abs() < 1e-2, "{eps}");
        assert!(eps < 100.0);
        assert!(compose_rdp_gaussian(0.0, 1.0, 1, 1e-5, &opts).is_err());
        assert!(compose_rdp_gaussian(1.0, 1.0, 1, 1.0, &opts).is_err());
    }

    #[test]
    fn rdp_beats_basic_from_step_ten() {
        let opts = RdpOptions::default();
        let delta: f64 = 1e-5;
        // Epsilon at which the classical calibration gives sigma = 1.
        let eps_one = (2.0 * (1.25 / delta).ln()).sqrt();
        for steps in [10u64, 20, 50, 100, 1000] {
            let rdp = compose_rdp_gaussian(1.0, 1.0, steps, delta, &opts).unwrap();
            assert!(rdp < steps as f64 * eps_one);
        }
    }

    #[test]
    fn rdp_options_validation() {
        assert!(RdpOptions::new(vec![]).is_err());
        assert!(RdpOptions::new(vec![1.0, 2.0]).is_err());
        assert!(RdpOptions::new(vec![1.5]).is_ok());
    }

    #[test]
    fn mixed_composition_sums_parts() {
        let mut l = BudgetLedger::new();
        l.charge(BudgetEntry::pure(MechanismKind::Exponential, 0.5, 4)).unwrap();
        l.charge(BudgetEntry::gaussian(1.0, 1e-5, 1.0, 1.0, 1)).unwrap();
        let t = l.totals();
        let rdp = compose_rdp_gaussian(1.0, 1.0, 1, 1e-5, &RdpOptions::default()).unwrap();
        assert!((t.composed_epsilon - (2.0 + rdp)).abs() < 1e-12);
        assert_eq!(t.per_user_epsilon, 1.5);
    }

    #[test]
    fn ledger_json_round_trip() {
        let mut l = BudgetLedger::new();
        l.charge(BudgetEntry::pure(MechanismKind::None, f64::INFINITY, 2)).unwrap();
        l.mark_shuffled();
        let json = serde_json::to_string(&l).unwrap();
        let back: BudgetLedger = serde_json::from_str(&json).unwrap();
        assert_eq!(back, l);
    }

    proptest! {
        #[test]
        fn basic_is_permutation_invariant_and_additive(
            eps in proptest::collection::vec((0.0f64..5.0, 1u64..50), 0..12),
            seed in any::<u64>(),
        ) {
            let entries: Vec<_> = eps.iter().map(|&(e, c)| BudgetEntry::pure(MechanismKind::RandomizedResponse, e, c)).collect();
            let mut a = BudgetLedger::new();
            for e in &entries { a.charge(e.clone()).unwrap(); }
            let mut shuffled = entries.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut crate::rng::RngStream::new(seed));
            let mut b = BudgetLedger::new();
            for e in &shuffled { b.charge(e.clone()).unwrap(); }
            let (ea, eb) = (compose_basic(&a).0, compose_basic(&b).0);
            prop_assert!((ea - eb).abs() <= 1e-9 * ea.max(1.0));

            let split = entries.len() / 2;
            let (mut l1, mut l2) = (BudgetLedger::new(), BudgetLedger::new());
            for e in &entries[..split] { l1.charge(e.clone()).unwrap(); }
            for e in &entries[split..] { l2.charge(e.clone()).unwrap(); }
            let sum = compose_basic(&l1).0 + compose_basic(&l2).0;
            prop_assert!((sum - ea).abs() <= 1e-9 * ea.max(1.0));
        }

        #[test]
        fn rdp_subadditive_and_monotone(sigma in 0.3f64..20.0, dexp in 2.0f64..10.0, k in 1u64..500) {
            let opts = RdpOptions::default();
            let delta = 10f64.powf(-dexp);
            let one = compose_rdp_gaussian(sigma, 1.0, 1, delta, &opts).unwrap();
            let many = compose_rdp_gaussian(sigma, 1.0, k, delta, &opts).unwrap();
            let more = compose_rdp_gaussian(sigma, 1.0, k + 1, delta, &opts).unwrap();
            prop_assert!(many <= k as f64 * one + 1e-9);
            prop_assert!(more >= many);
        }

        #[test]
        fn wider_grid_never_worse(sigma in 0.3f64..20.0, k in 1u64..200, extra in proptest::collection::vec(1.01f64..500.0, 1..6)) {
            let base = RdpOptions::default();
            let mut alphas = base.alphas().to_vec();
            alphas.extend(extra);
            let wide = RdpOptions::new(alphas).unwrap();
            let a = compose_rdp_gaussian(sigma, 1.0, k, 1e-6, &base).unwrap();
            let b = compose_rdp_gaussian(sigma, 1.0, k, 1e-6, &wide).unwrap();
            prop_assert!(b <= a);
        }

        #[test]
        fn composed_totals_monotone(eps in proptest::collection::vec(0.0f64..3.0, 1..10)) {
            let mut l = BudgetLedger::new();
            let mut prev = l.totals();
            for e in eps {
                l.charge(rr(e)).unwrap();
                let t = l.totals();
                prop_assert!(t.composed_epsilon >= prev.composed_epsilon);
                prop_assert!(t.per_user_epsilon >= prev.per_user_epsilon);
                prev = t;
            }
        }
    }
}
