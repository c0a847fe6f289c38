//! Cross-checks against an independent reference implementation: nominal
//! indices, power-flow voltages, covert limits, importance scores, and
//! selected equilibrium values were computed with a separate numerical tool
//! and frozen here.

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use vsgame::case_model::{parse_native_case, to_native_json};
use vsgame::game::GameSpec;
use vsgame::solver::{
    cost_sweep, importance_ranking, individual_optimization_baseline, select_subset, solve_cbse,
    Execution,
};
use vsgame::stability::{solve_power_flow, PowerFlowOptions};

const QA9: [f64; 6] = [
    3.842086792,
    0.901260376,
    1.1112213135,
    2.4450683594,
    1.3112640381,
    2.1208953857,
];

#[test]
fn parser_equivalence_bundled_cases() {
    for name in ["case9", "case39"] {
        let native = load_native(name);
        let matpower = load_matpower(name);
        assert_eq!(native.buses.len(), matpower.buses.len());
        assert_eq!(native.branches.len(), matpower.branches.len());
        for (a, b) in native.buses.iter().zip(&matpower.buses) {
            assert_eq!(a.id, b.id, "{name}: bus order mismatch");
            assert_eq!(a.kind, b.kind);
            assert_abs_diff_eq!(a.p_demand, b.p_demand, epsilon = 1e-12);
            assert_abs_diff_eq!(a.q_demand, b.q_demand, epsilon = 1e-12);
            assert_abs_diff_eq!(a.shunt_b, b.shunt_b, epsilon = 1e-12);
            assert_abs_diff_eq!(a.v_setpoint, b.v_setpoint, epsilon = 1e-12);
            assert_abs_diff_eq!(a.v_min, b.v_min, epsilon = 1e-12);
            assert_abs_diff_eq!(a.v_max, b.v_max, epsilon = 1e-12);
        }
        for (a, b) in native.branches.iter().zip(&matpower.branches) {
            assert_eq!((a.from_bus, a.to_bus), (b.from_bus, b.to_bus));
            assert_abs_diff_eq!(a.r, b.r, epsilon = 1e-12);
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.b_charging, b.b_charging, epsilon = 1e-12);
            assert_abs_diff_eq!(a.tap_ratio, b.tap_ratio, epsilon = 1e-12);
        }
    }
}

#[test]
fn round_trip_bundled_cases() {
    for name in ["case9", "case39"] {
        let case = load_native(name);
        let reparsed = parse_native_case(&to_native_json(&case)).unwrap();
        assert_eq!(case, reparsed);
    }
}

#[test]
fn nominal_indices_and_stressed_nodes() {
    let m9 = model(&load_native("case9"));
    assert_abs_diff_eq!(m9.delta0, 0.1935132808, epsilon = 1e-8);
    let (_, argmax9) = m9.delta(&m9.q_nominal);
    assert_eq!(m9.load_ids[argmax9], 5);

    let m39 = model(&load_native("case39"));
    assert_abs_diff_eq!(m39.delta0, 0.5559987088, epsilon = 1e-8);
    let (_, argmax39) = m39.delta(&m39.q_nominal);
    assert_eq!(m39.load_ids[argmax39], 7);
}

#[test]
fn open_circuit_voltages_9bus() {
    let m = model(&load_native("case9"));
    let expected = [
        1.0584795108,
        1.0746695371,
        1.0775769716,
        1.0557384482,
        1.0666783082,
        1.0618659606,
    ];
    for (v, e) in m.v_open.iter().zip(expected) {
        assert_abs_diff_eq!(*v, e, epsilon = 1e-8);
    }
}

#[test]
fn nominal_power_flow_voltages_9bus() {
    let case = load_native("case9");
    let sol = solve_power_flow(&case, &[0.0; 6], PowerFlowOptions::default());
    assert!(sol.converged);
    let expected = [
        1.0295148602,
        0.9941974299,
        1.0122560338,
        1.0257377428,
        1.0164916748,
        1.0326200108,
    ];
    for (v, e) in sol.v_mag[..6].iter().zip(expected) {
        assert_abs_diff_eq!(*v, e, epsilon = 1e-5);
    }
}

#[test]
fn covert_limits_9bus_frozen() {
    let case = load_native("case9");
    let qa = covert_limits(&case);
    for (q, e) in qa.iter().zip(QA9) {
        assert_abs_diff_eq!(*q, e, epsilon = 5e-4);
    }
}

#[test]
fn importance_scores_9bus_frozen() {
    let case = load_native("case9");
    let m = model(&case);
    let qa = covert_limits(&case);
    let r = importance_ranking(&m, &qa, 0.8);
    let att = [
        0.2884924767,
        0.2763471194,
        0.3042586075,
        0.2803567389,
        0.2922570188,
        0.3019993284,
    ];
    let dec = [
        0.0600699552,
        0.2452983637,
        0.2089557778,
        0.0561179744,
        0.1535835582,
        0.0416450553,
    ];
    for k in 0..6 {
        assert_abs_diff_eq!(r.attacker_scores[k], att[k], epsilon = 1e-3);
        assert_abs_diff_eq!(r.defender_scores[k], dec[k], epsilon = 1e-3);
    }
}

#[test]
fn importance_orders_and_subset_39bus() {
    let case = load_native("case39");
    let m = model(&case);
    let qa = covert_limits(&case);
    let r = importance_ranking(&m, &qa, 0.8);
    let ids = |order: &[usize], n: usize| -> Vec<u32> {
        order.iter().take(n).map(|&i| m.load_ids[i]).collect()
    };
    assert_eq!(ids(&r.attacker_order, 5), vec![11, 6, 5, 10, 13]);
    assert_eq!(ids(&r.defender_order, 5), vec![7, 8, 5, 6, 11]);
    let subset: Vec<u32> = select_subset(&r, 5)
        .into_iter()
        .map(|i| m.load_ids[i])
        .collect();
    assert_eq!(subset, vec![5, 6, 7, 8, 10, 11, 13]);
}

#[test]
fn equilibrium_strategy_detail_9bus() {
    let case = load_native("case9");
    let m = model(&case);
    let spec = GameSpec::new(
        &m,
        (0..6).collect(),
        0.10,
        0.2,
        3,
        3,
        QA9.to_vec(),
        vec![2.0; 6],
    )
    .unwrap();
    let eq = solve_cbse(&spec).unwrap();
    assert_abs_diff_eq!(eq.attacker_utility, 0.0384903062, epsilon = 1e-6);
    assert_eq!(eq.defender_action.numerators, vec![2, 2, 2, 1, 2, 1]);
    assert_eq!(eq.attacker_action.numerators, vec![2, 2, 2, 2, 2, 2]);
}

#[test]
fn subset_game_cells_39bus_frozen() {
    let case = load_native("case39");
    let m = model(&case);
    let qa = covert_limits(&case);
    let subset_ids = [5u32, 6, 7, 8, 10, 11, 13];
    let subset: Vec<usize> = subset_ids
        .iter()
        .map(|id| m.load_ids.iter().position(|&b| b == *id).unwrap())
        .collect();
    let qa_sub: Vec<f64> = subset.iter().map(|&i| qa[i]).collect();
    let qa_frozen = [
        2.3162078857,
        2.5012207031,
        0.5450439453,
        1.3845062256,
        3.6583709717,
        3.4605407715,
        2.9821014404,
    ];
    for (q, e) in qa_sub.iter().zip(qa_frozen) {
        assert_abs_diff_eq!(*q, e, epsilon = 5e-4);
    }
    let spec = GameSpec::new(&m, subset, 0.05, 1.5, 2, 2, qa_sub, vec![2.5; 7]).unwrap();
    let cells = [
        (0.05, 1.5, 0.4440012912),
        (0.20, 1.5, 0.3669655442),
        (0.50, 0.5, 0.0249644502),
        (1.00, 1.5, 0.0823359165),
        (0.05, 0.05, 0.0),
    ];
    for (ga, gd, expected) in cells {
        let mut s = spec.clone();
        s.gamma_a = ga;
        s.gamma_d = gd;
        let eq = solve_cbse(&s).unwrap();
        assert_abs_diff_eq!(eq.attacker_utility, expected, epsilon = 1e-5);
    }
}

#[test]
fn defender_level_refinement_chain_9bus() {
    let case = load_native("case9");
    let m = model(&case);
    // L_a = 2, gamma_d = 0.5; finer defender grids never help the attacker
    let frozen = [
        (2, 0.6816651114),
        (3, 0.5011805218),
        (4, 0.4855722249),
        (5, 0.4629080068),
    ];
    for (ld, expected) in frozen {
        let spec = GameSpec::new(
            &m,
            (0..6).collect(),
            0.1,
            0.5,
            2,
            ld,
            QA9.to_vec(),
            vec![2.0; 6],
        )
        .unwrap();
        let eq = solve_cbse(&spec).unwrap();
        assert_abs_diff_eq!(eq.attacker_utility, expected, epsilon = 1e-6);
    }
}

#[test]
fn io_baseline_cell_9bus_frozen() {
    let case = load_native("case9");
    let m = model(&case);
    let spec = GameSpec::new(
        &m,
        (0..6).collect(),
        0.05,
        0.45,
        3,
        3,
        QA9.to_vec(),
        vec![2.0; 6],
    )
    .unwrap();
    let (_, _, realized) = individual_optimization_baseline(&spec).unwrap();
    assert_abs_diff_eq!(realized, 0.3207240819, epsilon = 1e-6);
    let eq = solve_cbse(&spec).unwrap();
    assert_abs_diff_eq!(eq.attacker_utility, 0.5011805218, epsilon = 1e-6);
}

#[test]
fn sequential_and_parallel_solves_agree() {
    let case = load_native("case9");
    let m = model(&case);
    let spec = GameSpec::new(
        &m,
        (0..6).collect(),
        0.1,
        0.2,
        3,
        3,
        QA9.to_vec(),
        vec![2.0; 6],
    )
    .unwrap();
    let seq = vsgame::solver::solve_cbse_with(&spec, Execution::Sequential).unwrap();
    let par = vsgame::solver::solve_cbse_with(&spec, Execution::Parallel).unwrap();
    assert_eq!(seq.attacker_action, par.attacker_action);
    assert_eq!(seq.defender_action, par.defender_action);
    assert_eq!(seq.attacker_utility, par.attacker_utility);
    let sweep_s = cost_sweep(&spec, &[0.1, 0.3], &[0.2, 0.6], "case9", Execution::Sequential);
    let sweep_p = cost_sweep(&spec, &[0.1, 0.3], &[0.2, 0.6], "case9", Execution::Parallel);
    for (a, b) in sweep_s.cells.iter().zip(&sweep_p.cells) {
        let (ea, eb) = (a.outcome.as_ref().unwrap(), b.outcome.as_ref().unwrap());
        assert_eq!(ea.attacker_utility, eb.attacker_utility);
    }
}
