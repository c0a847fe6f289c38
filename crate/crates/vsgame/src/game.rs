//! Discrete action spaces, the attack-outcome model, budget constraints, and
//! the clipped utility functions of the security-investment game.
//!
//! Investment levels live on the grid {0, 1/(L−1), …, 1} and are stored as
//! integer numerators so budget feasibility checks do not drift. For the
//! attacker a level is the per-load success probability; for the defender it
//! is the deployed fraction of the compensation cap.

use crate::stability::StabilityModel;
use thiserror::Error;

/// Value tolerance for ℓ₁ budget feasibility after rational-to-float conversion.
pub const BUDGET_TOL: f64 = 1e-12;
/// Default cap on enumerated actions per player.
pub const ACTION_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("feasible action space exceeds cap ({cap}); use a load subset")]
    ActionSpaceCap { cap: usize },
    #[error("strategy-pair count {count} exceeds oracle cap ({cap})")]
    PairCap { count: usize, cap: usize },
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Attacker,
    Defender,
}

/// One player's pure strategy: a level per targeted load, stored exactly as
/// numerators over `denom` = L − 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVector {
    pub numerators: Vec<u32>,
    pub denom: u32,
    pub owner: Owner,
}

impl ActionVector {
    pub fn zero(k: usize, levels: usize, owner: Owner) -> Self {
        ActionVector {
            numerators: vec![0; k],
            denom: (levels - 1) as u32,
            owner,
        }
    }

    /// Levels as fractions in [0, 1].
    pub fn levels(&self) -> Vec<f64> {
        self.numerators
            .iter()
            .map(|&n| n as f64 / self.denom as f64)
            .collect()
    }

    /// ℓ₁ norm of the level vector.
    pub fn l1(&self) -> f64 {
        self.numerators.iter().map(|&n| n as f64).sum::<f64>() / self.denom as f64
    }

    pub fn is_zero(&self) -> bool {
        self.numerators.iter().all(|&n| n == 0)
    }

    /// Slash-separated numerator string, e.g. `2/2/2/1/2/1`.
    pub fn numerator_string(&self) -> String {
        self.numerators
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("/")
    }
}

/// One of the 2^K success/failure patterns of the attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    /// Bit k set iff the attack on subset position k succeeds.
    pub mask: usize,
}

impl Outcome {
    pub fn succeeded(&self, k: usize) -> bool {
        (self.mask >> k) & 1 == 1
    }

    /// All 2^K outcomes in ascending mask order.
    pub fn all(k: usize) -> impl Iterator<Item = Outcome> {
        (0..1usize << k).map(|mask| Outcome { mask })
    }
}

/// Per-outcome attacker utilities for one fixed defender action.
#[derive(Debug, Clone)]
pub struct UtilityTable {
    pub per_outcome: Vec<f64>,
    pub defender_action: ActionVector,
}

/// Full description of one game instance over a load subset of a stability model.
#[derive(Debug, Clone)]
pub struct GameSpec<'a> {
    pub model: &'a StabilityModel,
    /// Indices into the model's load vector.
    pub load_subset: Vec<usize>,
    pub gamma_a: f64,
    pub gamma_d: f64,
    pub levels_a: usize,
    pub levels_d: usize,
    /// Covert attack magnitudes per subset load, pu.
    pub qa_max: Vec<f64>,
    /// Compensation caps per subset load, pu.
    pub qd_max: Vec<f64>,
}

impl<'a> GameSpec<'a> {
    pub fn new(
        model: &'a StabilityModel,
        load_subset: Vec<usize>,
        gamma_a: f64,
        gamma_d: f64,
        levels_a: usize,
        levels_d: usize,
        qa_max: Vec<f64>,
        qd_max: Vec<f64>,
    ) -> Result<Self, GameError> {
        if !(gamma_a > 0.0 && gamma_d > 0.0) {
            return Err(GameError::InvalidSpec("costs must be positive".into()));
        }
        if levels_a < 2 || levels_d < 2 {
            return Err(GameError::InvalidSpec("levels must be at least 2".into()));
        }
        let k = load_subset.len();
        if qa_max.len() != k || qd_max.len() != k {
            return Err(GameError::InvalidSpec(
                "qa_max/qd_max must match subset size".into(),
            ));
        }
        if qa_max.iter().chain(qd_max.iter()).any(|&q| q < 0.0) {
            return Err(GameError::InvalidSpec("magnitude caps must be nonnegative".into()));
        }
        let mut seen = vec![false; model.n_loads()];
        for &i in &load_subset {
            if i >= model.n_loads() || seen[i] {
                return Err(GameError::InvalidSpec(format!(
                    "load subset entry {i} invalid or repeated"
                )));
            }
            seen[i] = true;
        }
        Ok(GameSpec {
            model,
            load_subset,
            gamma_a,
            gamma_d,
            levels_a,
            levels_d,
            qa_max,
            qd_max,
        })
    }

    pub fn k_loads(&self) -> usize {
        self.load_subset.len()
    }

    pub fn gamma(&self, owner: Owner) -> f64 {
        match owner {
            Owner::Attacker => self.gamma_a,
            Owner::Defender => self.gamma_d,
        }
    }

    pub fn levels(&self, owner: Owner) -> usize {
        match owner {
            Owner::Attacker => self.levels_a,
            Owner::Defender => self.levels_d,
        }
    }

    /// Budget feasibility γ·‖v‖₁ ≤ 1 (+tolerance).
    pub fn feasible(&self, action: &ActionVector) -> bool {
        self.gamma(action.owner) * action.l1() <= 1.0 + BUDGET_TOL
    }
}

/// All grid actions with γ·‖v‖₁ ≤ 1, ascending lexicographic order over
/// numerators. Prunes on prefix cost; refuses if the feasible count exceeds `cap`.
pub fn enumerate_feasible_actions(
    spec: &GameSpec,
    owner: Owner,
    cap: usize,
) -> Result<Vec<ActionVector>, GameError> {
    let k = spec.k_loads();
    let levels = spec.levels(owner);
    let denom = (levels - 1) as u32;
    let gamma = spec.gamma(owner);
    // largest affordable numerator total: gamma * total/denom <= 1 + tol
    let budget_num = ((1.0 + BUDGET_TOL) * denom as f64 / gamma).floor() as u64;
    let mut out = Vec::new();
    let mut current = vec![0u32; k];
    fn rec(
        pos: usize,
        used: u64,
        k: usize,
        levels: usize,
        budget_num: u64,
        current: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
        cap: usize,
    ) -> bool {
        if pos == k {
            out.push(current.clone());
            return out.len() <= cap;
        }
        for n in 0..levels as u32 {
            if used + n as u64 > budget_num {
                break;
            }
            current[pos] = n;
            if !rec(pos + 1, used + n as u64, k, levels, budget_num, current, out, cap) {
                return false;
            }
        }
        current[pos] = 0;
        true
    }
    let mut raw = Vec::new();
    if !rec(0, 0, k, levels, budget_num, &mut current, &mut raw, cap) {
        return Err(GameError::ActionSpaceCap { cap });
    }
    out.extend(raw.into_iter().map(|numerators| ActionVector {
        numerators,
        denom,
        owner,
    }));
    Ok(out)
}

/// P(outcome) = ∏_{success} a_k · ∏_{failure} (1 − a_k).
pub fn outcome_probability(a: &ActionVector, o: Outcome) -> f64 {
    debug_assert_eq!(a.owner, Owner::Attacker);
    let mut p = 1.0;
    for (k, &n) in a.numerators.iter().enumerate() {
        let ak = n as f64 / a.denom as f64;
        p *= if o.succeeded(k) { ak } else { 1.0 - ak };
    }
    p
}

/// Attack demand vector for an outcome: mask ⊙ qa_max.
pub fn outcome_demand(o: Outcome, qa_max: &[f64]) -> Vec<f64> {
    qa_max
        .iter()
        .enumerate()
        .map(|(k, &q)| if o.succeeded(k) { q } else { 0.0 })
        .collect()
}

/// Deployed compensation: d_k · qd_max_k.
pub fn defender_compensation(d: &ActionVector, qd_max: &[f64]) -> Vec<f64> {
    debug_assert_eq!(d.owner, Owner::Defender);
    d.numerators
        .iter()
        .zip(qd_max)
        .map(|(&n, &q)| n as f64 / d.denom as f64 * q)
        .collect()
}

/// Clip to [lo, hi].
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Per-outcome attacker utilities against one defender action:
/// U_i = Clip(stress(Q_L0 + q_a^i − q_d); Δ⁰, 1) − Δ⁰, in [0, 1 − Δ⁰].
///
/// Demands of loads outside the subset stay at nominal; the stress is still
/// measured over the full system. Directional stress is used so that
/// over-compensating an un-attacked load reads as stabilizing, not as new
/// stress (see [`crate::stability::stress_index`]).
pub fn per_outcome_utility(spec: &GameSpec, d: &ActionVector) -> UtilityTable {
    let model = spec.model;
    let k_sub = spec.k_loads();
    let k_full = model.n_loads();
    let d0 = model.delta0;
    let comp = defender_compensation(d, &spec.qd_max);

    // stress(Q) = max_j (−Qinv·Q)_j; precompute the base vector with the
    // compensation applied, plus one −Qinv column per subset load.
    let mut base = vec![0.0_f64; k_full];
    let cols: Vec<Vec<f64>> = spec
        .load_subset
        .iter()
        .map(|&lk| {
            (0..k_full)
                .map(|j| -model.q_crit_inv[(j, lk)])
                .collect::<Vec<f64>>()
        })
        .collect();
    for j in 0..k_full {
        let mut s = 0.0;
        for l in 0..k_full {
            s += -model.q_crit_inv[(j, l)] * model.q_nominal[l];
        }
        base[j] = s;
    }
    for (k, &c) in comp.iter().enumerate() {
        for j in 0..k_full {
            base[j] -= c * cols[k][j];
        }
    }

    let per_outcome = Outcome::all(k_sub)
        .map(|o| {
            let mut best = f64::NEG_INFINITY;
            for j in 0..k_full {
                let mut s = base[j];
                for k in 0..k_sub {
                    if o.succeeded(k) {
                        s += spec.qa_max[k] * cols[k][j];
                    }
                }
                if s > best {
                    best = s;
                }
            }
            clip(best, d0, 1.0) - d0
        })
        .collect();
    UtilityTable {
        per_outcome,
        defender_action: d.clone(),
    }
}

/// Expected attacker utility Σ_i P_a(O^i)·U_i; the defender's utility is the
/// exact negation.
pub fn expected_attacker_utility(_spec: &GameSpec, a: &ActionVector, table: &UtilityTable) -> f64 {
    let k = a.numerators.len();
    debug_assert_eq!(table.per_outcome.len(), 1 << k);
    Outcome::all(k)
        .map(|o| outcome_probability(a, o) * table.per_outcome[o.mask])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn toy_model() -> StabilityModel {
        // -Qinv entrywise positive, nominal delta0 = 0.3
        let q_inv = DMatrix::from_row_slice(2, 2, &[-1.0, -0.2, -0.2, -0.8]);
        StabilityModel::synthetic(q_inv, vec![0.25, 0.1])
    }

    fn toy_spec(model: &StabilityModel, ga: f64, gd: f64, la: usize, ld: usize) -> GameSpec<'_> {
        GameSpec::new(
            model,
            vec![0, 1],
            ga,
            gd,
            la,
            ld,
            vec![0.5, 0.4],
            vec![0.3, 0.3],
        )
        .unwrap()
    }

    #[test]
    fn enumeration_budget_and_order() {
        let m = toy_model();
        let spec = toy_spec(&m, 0.6, 0.6, 2, 2);
        let acts = enumerate_feasible_actions(&spec, Owner::Attacker, ACTION_CAP).unwrap();
        let nums: Vec<Vec<u32>> = acts.iter().map(|a| a.numerators.clone()).collect();
        // budget 0.6 excludes (1,1): 0.6·2 > 1
        assert_eq!(nums, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn enumeration_tight_budget_only_zero() {
        let m = toy_model();
        let spec = toy_spec(&m, 2.1, 2.1, 3, 3);
        let acts = enumerate_feasible_actions(&spec, Owner::Attacker, ACTION_CAP).unwrap();
        assert_eq!(acts.len(), 1);
        assert!(acts[0].is_zero());
    }

    #[test]
    fn enumeration_unconstrained_count() {
        let m = toy_model();
        let spec = toy_spec(&m, 1e-9, 1e-9, 3, 3);
        let acts = enumerate_feasible_actions(&spec, Owner::Attacker, ACTION_CAP).unwrap();
        assert_eq!(acts.len(), 9); // 3^2
    }

    #[test]
    fn enumeration_cap_refusal() {
        let m = toy_model();
        let spec = toy_spec(&m, 1e-9, 1e-9, 3, 3);
        assert!(matches!(
            enumerate_feasible_actions(&spec, Owner::Attacker, 4),
            Err(GameError::ActionSpaceCap { cap: 4 })
        ));
    }

    #[test]
    fn probabilities_degenerate_and_fair() {
        let m = toy_model();
        let spec = toy_spec(&m, 0.1, 0.1, 3, 3);
        let zero = ActionVector::zero(2, 3, Owner::Attacker);
        assert_eq!(outcome_probability(&zero, Outcome { mask: 0 }), 1.0);
        assert_eq!(outcome_probability(&zero, Outcome { mask: 3 }), 0.0);
        let ones = ActionVector {
            numerators: vec![2, 2],
            denom: 2,
            owner: Owner::Attacker,
        };
        assert_eq!(outcome_probability(&ones, Outcome { mask: 3 }), 1.0);
        let half = ActionVector {
            numerators: vec![1, 1],
            denom: 2,
            owner: Owner::Attacker,
        };
        for o in Outcome::all(2) {
            assert_abs_diff_eq!(outcome_probability(&half, o), 0.25, epsilon = 1e-15);
        }
        let _ = spec;
    }

    #[test]
    fn outcome_demand_masks() {
        let qa = [0.2, 0.3, 0.4];
        assert_eq!(outcome_demand(Outcome { mask: 0 }, &qa), vec![0.0, 0.0, 0.0]);
        assert_eq!(outcome_demand(Outcome { mask: 7 }, &qa), qa.to_vec());
        assert_eq!(outcome_demand(Outcome { mask: 0b101 }, &qa), vec![0.2, 0.0, 0.4]);
    }

    #[test]
    fn zero_outcome_zero_defense_utility_floor() {
        let m = toy_model();
        let spec = toy_spec(&m, 0.1, 0.1, 3, 3);
        let d = ActionVector::zero(2, 3, Owner::Defender);
        let table = per_outcome_utility(&spec, &d);
        assert_abs_diff_eq!(table.per_outcome[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn expected_utility_mean_of_fair_coin() {
        let m = toy_model();
        let spec = toy_spec(&m, 0.1, 0.1, 3, 3);
        let d = ActionVector::zero(2, 3, Owner::Defender);
        let table = per_outcome_utility(&spec, &d);
        let half = ActionVector {
            numerators: vec![1, 1],
            denom: 2,
            owner: Owner::Attacker,
        };
        let u = expected_attacker_utility(&spec, &half, &table);
        let mean = table.per_outcome.iter().sum::<f64>() / 4.0;
        assert_abs_diff_eq!(u, mean, epsilon = 1e-15);
    }

    #[test]
    fn collapse_outcome_hits_ceiling() {
        let m = toy_model();
        let mut spec = toy_spec(&m, 0.1, 0.1, 3, 3);
        spec.qa_max = vec![5.0, 5.0]; // push stress past 1
        let d = ActionVector::zero(2, 3, Owner::Defender);
        let table = per_outcome_utility(&spec, &d);
        assert_abs_diff_eq!(table.per_outcome[3], 1.0 - m.delta0, epsilon = 1e-12);
    }
}
