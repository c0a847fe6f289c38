//! Cost-based backward induction (CBBI), the Stackelberg-equilibrium
//! enumeration oracle, importance ranking, subset selection, the
//! individual-optimization baseline, and cost sweeps.

use crate::game::{
    enumerate_feasible_actions, expected_attacker_utility, per_outcome_utility, ActionVector,
    GameError, GameSpec, Outcome, Owner, UtilityTable, ACTION_CAP,
};
use crate::stability::StabilityModel;

/// Payoff comparison tolerance.
pub const VALUE_TOL: f64 = 1e-9;
/// Cost (ℓ₁) comparison tolerance.
pub const COST_TOL: f64 = 1e-12;
/// Cap on |A|·|D| for the exhaustive SE oracle.
pub const PAIR_CAP: usize = 100_000;

/// Whether to spread independent defender/cell computations across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

fn map_indexed<T, F>(n: usize, mode: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// The attacker's best-response set 𝒢(d) against one defender action.
#[derive(Debug, Clone)]
pub struct BestResponseSet {
    pub defender_action: ActionVector,
    pub responses: Vec<ActionVector>,
    pub best_value: f64,
}

/// A solved cost-based Stackelberg equilibrium.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub attacker_action: ActionVector,
    pub defender_action: ActionVector,
    pub attacker_utility: f64,
    /// Δ of the full-success outcome under the equilibrium defense (clipped to [Δ⁰, 1]).
    pub post_attack_delta_max: f64,
    pub attacker_cost: f64,
    pub defender_cost: f64,
    /// Number of payoff-optimal defender strategies |𝒟| before cost filtering.
    pub defender_candidates: usize,
}

/// One sweep cell; per-cell failures are recorded, the sweep continues.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub gamma_a: f64,
    pub gamma_d: f64,
    pub levels_a: usize,
    pub levels_d: usize,
    pub outcome: Result<Equilibrium, String>,
}

/// Cost-sweep surface, row-major by γ_a then γ_d.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub gamma_a_grid: Vec<f64>,
    pub gamma_d_grid: Vec<f64>,
    pub cells: Vec<SweepCell>,
    pub case_name: String,
    pub subset: Vec<usize>,
}

/// Per-load importance scores and descending orders (rank 1 = most important).
#[derive(Debug, Clone)]
pub struct ImportanceRanking {
    /// Δ(Q⁰ + qa_max_k·e_k) − Δ⁰ per load.
    pub attacker_scores: Vec<f64>,
    /// Stress-relief potential probed with a fixed reactive increment per load.
    pub defender_scores: Vec<f64>,
    /// Load indices sorted by descending attacker score, ties by ascending index.
    pub attacker_order: Vec<usize>,
    pub defender_order: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Internal engine: enumerated actions + probability table, reused per solve.
// ---------------------------------------------------------------------------

struct Engine {
    attacker_actions: Vec<ActionVector>,
    defender_actions: Vec<ActionVector>,
    /// prob[a][mask] — outcome distribution of each attacker action.
    prob: Vec<Vec<f64>>,
}

impl Engine {
    fn build(spec: &GameSpec) -> Result<Self, GameError> {
        let attacker_actions = enumerate_feasible_actions(spec, Owner::Attacker, ACTION_CAP)?;
        let defender_actions = enumerate_feasible_actions(spec, Owner::Defender, ACTION_CAP)?;
        let k = spec.k_loads();
        let prob = attacker_actions
            .iter()
            .map(|a| {
                Outcome::all(k)
                    .map(|o| crate::game::outcome_probability(a, o))
                    .collect()
            })
            .collect();
        Ok(Engine {
            attacker_actions,
            defender_actions,
            prob,
        })
    }

    fn value(&self, a_idx: usize, table: &UtilityTable) -> f64 {
        self.prob[a_idx]
            .iter()
            .zip(&table.per_outcome)
            .map(|(p, u)| p * u)
            .sum()
    }

    /// (index of g_o(d), best value, ℓ₁ cost of g_o(d)).
    fn best_response(&self, table: &UtilityTable) -> (usize, f64, f64) {
        let values: Vec<f64> = (0..self.attacker_actions.len())
            .map(|i| self.value(i, table))
            .collect();
        let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut min_cost = f64::INFINITY;
        for (i, &v) in values.iter().enumerate() {
            if v >= vmax - VALUE_TOL {
                min_cost = min_cost.min(self.attacker_actions[i].l1());
            }
        }
        let idx = values
            .iter()
            .enumerate()
            .find(|&(i, &v)| {
                v >= vmax - VALUE_TOL && self.attacker_actions[i].l1() <= min_cost + COST_TOL
            })
            .map(|(i, _)| i)
            .expect("zero action is always feasible");
        (idx, vmax, self.attacker_actions[idx].l1())
    }
}

/// Exhaustive best-response set of the attacker against `d` (Eq. 15).
pub fn best_response_set(spec: &GameSpec, d: &ActionVector) -> Result<BestResponseSet, GameError> {
    let engine = Engine::build(spec)?;
    let table = per_outcome_utility(spec, d);
    let values: Vec<f64> = (0..engine.attacker_actions.len())
        .map(|i| engine.value(i, &table))
        .collect();
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let responses = values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= vmax - VALUE_TOL)
        .map(|(i, _)| engine.attacker_actions[i].clone())
        .collect();
    Ok(BestResponseSet {
        defender_action: d.clone(),
        responses,
        best_value: vmax,
    })
}

/// Minimum-cost element of 𝒢(d); remaining ties broken by ascending
/// lexicographic numerator order (the enumeration order).
pub fn min_cost_best_response(brs: &BestResponseSet) -> ActionVector {
    let min_cost = brs
        .responses
        .iter()
        .map(ActionVector::l1)
        .fold(f64::INFINITY, f64::min);
    brs.responses
        .iter()
        .find(|a| a.l1() <= min_cost + COST_TOL)
        .expect("responses nonempty")
        .clone()
}

/// Solve the cost-based Stackelberg equilibrium (Eqs. 15–19).
pub fn solve_cbse(spec: &GameSpec) -> Result<Equilibrium, GameError> {
    solve_cbse_with(spec, Execution::default())
}

/// [`solve_cbse`] with explicit execution mode (used by benchmarks and `--jobs 1`).
pub fn solve_cbse_with(spec: &GameSpec, mode: Execution) -> Result<Equilibrium, GameError> {
    let engine = Engine::build(spec)?;
    // For each feasible d: attacker's cost-based best response and its value.
    let per_d: Vec<(usize, f64, f64)> = map_indexed(engine.defender_actions.len(), mode, |di| {
        let table = per_outcome_utility(spec, &engine.defender_actions[di]);
        engine.best_response(&table)
    });
    let vmin = per_d
        .iter()
        .map(|&(_, v, _)| v)
        .fold(f64::INFINITY, f64::min);
    // 𝒟: payoff-optimal defender strategies.
    let candidates: Vec<usize> = (0..per_d.len())
        .filter(|&di| per_d[di].1 <= vmin + VALUE_TOL)
        .collect();
    let defender_candidates = candidates.len();
    // cheapest defense
    let min_dcost = candidates
        .iter()
        .map(|&di| engine.defender_actions[di].l1())
        .fold(f64::INFINITY, f64::min);
    let cheap: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&di| engine.defender_actions[di].l1() <= min_dcost + COST_TOL)
        .collect();
    // then the one inducing the cheapest attack, then lexicographic (order preserved)
    let min_acost = cheap
        .iter()
        .map(|&di| per_d[di].2)
        .fold(f64::INFINITY, f64::min);
    let d_idx = cheap
        .into_iter()
        .find(|&di| per_d[di].2 <= min_acost + COST_TOL)
        .expect("candidate set nonempty");

    let d_star = engine.defender_actions[d_idx].clone();
    let (a_idx, value, _) = per_d[d_idx];
    let a_star = engine.attacker_actions[a_idx].clone();
    let table = per_outcome_utility(spec, &d_star);
    let full_mask = (1usize << spec.k_loads()) - 1;
    let post_attack_delta_max = table.per_outcome[full_mask] + spec.model.delta0;
    Ok(Equilibrium {
        attacker_cost: spec.gamma_a * a_star.l1(),
        defender_cost: spec.gamma_d * d_star.l1(),
        attacker_action: a_star,
        defender_action: d_star,
        attacker_utility: value,
        post_attack_delta_max,
        defender_candidates,
    })
}

/// Exhaustive SE oracle: every (g(d), d) pair with d payoff-optimal and
/// g(d) ∈ 𝒢(d), without cost-based filtering. Capped at [`PAIR_CAP`] pairs.
pub fn enumerate_all_ses(
    spec: &GameSpec,
) -> Result<Vec<(ActionVector, ActionVector, f64)>, GameError> {
    let engine = Engine::build(spec)?;
    let count = engine.attacker_actions.len() * engine.defender_actions.len();
    if count > PAIR_CAP {
        return Err(GameError::PairCap {
            count,
            cap: PAIR_CAP,
        });
    }
    let mut per_d: Vec<(f64, Vec<usize>)> = Vec::with_capacity(engine.defender_actions.len());
    for d in &engine.defender_actions {
        let table = per_outcome_utility(spec, d);
        let values: Vec<f64> = (0..engine.attacker_actions.len())
            .map(|i| engine.value(i, &table))
            .collect();
        let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tie: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v >= vmax - VALUE_TOL)
            .map(|(i, _)| i)
            .collect();
        per_d.push((vmax, tie));
    }
    let vmin = per_d
        .iter()
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for (di, (v, tie)) in per_d.iter().enumerate() {
        if *v <= vmin + VALUE_TOL {
            for &ai in tie {
                out.push((
                    engine.attacker_actions[ai].clone(),
                    engine.defender_actions[di].clone(),
                    *v,
                ));
            }
        }
    }
    Ok(out)
}

/// Table-I style importance scores over all loads of the model.
///
/// Attacker score k = Δ(Q⁰ + qa_max_k·e_k) − Δ⁰. Defender score k probes the
/// stress increment a fixed `qd_probe` of extra demand would cause at load k,
/// i.e. how much a compensator placed there can relieve.
pub fn importance_ranking(
    model: &StabilityModel,
    qa_max: &[f64],
    qd_probe: f64,
) -> ImportanceRanking {
    let k = model.n_loads();
    assert_eq!(qa_max.len(), k);
    assert!(qd_probe > 0.0);
    let score = |bump: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..k)
            .map(|i| {
                let mut q = model.q_nominal.clone();
                q[i] += bump(i);
                model.delta(&q).0 - model.delta0
            })
            .collect()
    };
    let attacker_scores = score(&|i| qa_max[i]);
    let defender_scores = score(&|_| qd_probe);
    let order = |scores: &[f64]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        idx
    };
    ImportanceRanking {
        attacker_order: order(&attacker_scores),
        defender_order: order(&defender_scores),
        attacker_scores,
        defender_scores,
    }
}

/// Union of each player's top-n loads, ascending internal index order.
pub fn select_subset(ranking: &ImportanceRanking, n_per_player: usize) -> Vec<usize> {
    let mut subset: Vec<usize> = ranking
        .attacker_order
        .iter()
        .take(n_per_player)
        .chain(ranking.defender_order.iter().take(n_per_player))
        .copied()
        .collect();
    subset.sort_unstable();
    subset.dedup();
    subset
}

/// Individual-optimization baseline: each player optimizes ignoring the
/// opponent. Attacker best-responds to zero defense; defender minimizes the
/// full-success-outcome utility; both with min-cost/lexicographic tie-breaks.
/// Returns the pair and the realized U^a when played together.
pub fn individual_optimization_baseline(
    spec: &GameSpec,
) -> Result<(ActionVector, ActionVector, f64), GameError> {
    let engine = Engine::build(spec)?;
    let zero_d = ActionVector::zero(spec.k_loads(), spec.levels_d, Owner::Defender);
    let table_zero = per_outcome_utility(spec, &zero_d);
    let (a_idx, _, _) = engine.best_response(&table_zero);
    let a_io = engine.attacker_actions[a_idx].clone();

    let full_mask = (1usize << spec.k_loads()) - 1;
    let d_vals: Vec<f64> = engine
        .defender_actions
        .iter()
        .map(|d| per_outcome_utility(spec, d).per_outcome[full_mask])
        .collect();
    let vmin = d_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let min_cost = d_vals
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v <= vmin + VALUE_TOL)
        .map(|(i, _)| engine.defender_actions[i].l1())
        .fold(f64::INFINITY, f64::min);
    let d_idx = d_vals
        .iter()
        .enumerate()
        .find(|&(i, &v)| {
            v <= vmin + VALUE_TOL && engine.defender_actions[i].l1() <= min_cost + COST_TOL
        })
        .map(|(i, _)| i)
        .expect("zero defense always feasible");
    let d_io = engine.defender_actions[d_idx].clone();

    let realized = expected_attacker_utility(spec, &a_io, &per_outcome_utility(spec, &d_io));
    Ok((a_io, d_io, realized))
}

/// Solve a CBSE per (γ_a, γ_d) grid point; cells independent, output
/// row-major by γ_a then γ_d. Per-cell failures are recorded in the cell.
pub fn cost_sweep(
    template: &GameSpec,
    gamma_a_grid: &[f64],
    gamma_d_grid: &[f64],
    case_name: &str,
    mode: Execution,
) -> SweepResult {
    assert!(!gamma_a_grid.is_empty() && !gamma_d_grid.is_empty());
    assert!(gamma_a_grid.iter().chain(gamma_d_grid).all(|&g| g > 0.0));
    let nd = gamma_d_grid.len();
    let total = gamma_a_grid.len() * nd;
    let cells = map_indexed(total, mode, |idx| {
        let ga = gamma_a_grid[idx / nd];
        let gd = gamma_d_grid[idx % nd];
        let mut spec = template.clone();
        spec.gamma_a = ga;
        spec.gamma_d = gd;
        SweepCell {
            gamma_a: ga,
            gamma_d: gd,
            levels_a: spec.levels_a,
            levels_d: spec.levels_d,
            outcome: solve_cbse_with(&spec, Execution::Sequential).map_err(|e| e.to_string()),
        }
    });
    SweepResult {
        gamma_a_grid: gamma_a_grid.to_vec(),
        gamma_d_grid: gamma_d_grid.to_vec(),
        cells,
        case_name: case_name.to_string(),
        subset: template.load_subset.clone(),
    }
}

/// Theorem 1(c) audit: attacker utility non-increasing in γ_a (fixed γ_d) and
/// non-decreasing in γ_d (fixed γ_a). Returns the first violating pair if any.
pub fn audit_monotonicity(sweep: &SweepResult) -> Result<(), String> {
    let na = sweep.gamma_a_grid.len();
    let nd = sweep.gamma_d_grid.len();
    let u = |i: usize, j: usize| -> Option<f64> {
        sweep.cells[i * nd + j]
            .outcome
            .as_ref()
            .ok()
            .map(|e| e.attacker_utility)
    };
    for j in 0..nd {
        for i in 1..na {
            if let (Some(prev), Some(cur)) = (u(i - 1, j), u(i, j)) {
                if cur > prev + VALUE_TOL {
                    return Err(format!(
                        "utility rose with gamma_a at (gamma_a={}, gamma_d={}): {prev} -> {cur}",
                        sweep.gamma_a_grid[i], sweep.gamma_d_grid[j]
                    ));
                }
            }
        }
    }
    for i in 0..na {
        for j in 1..nd {
            if let (Some(prev), Some(cur)) = (u(i, j - 1), u(i, j)) {
                if cur < prev - VALUE_TOL {
                    return Err(format!(
                        "utility fell with gamma_d at (gamma_a={}, gamma_d={}): {prev} -> {cur}",
                        sweep.gamma_a_grid[i], sweep.gamma_d_grid[j]
                    ));
                }
            }
        }
    }
    Ok(())
}
