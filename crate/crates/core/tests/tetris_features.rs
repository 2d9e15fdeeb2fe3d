//! Regression guard on the tetris feature map: a linear critic fit to Q*
//! must induce a near-optimal greedy policy, otherwise every linear learner
//! on this environment is hobbled from the start.

#![allow(clippy::needless_range_loop)]

use acbench_core::approx::ridge_fit;
use acbench_core::envs::{build_env, preset};
use acbench_core::mdp::{dp_policy_eval, dp_solve_optimal, PolicyTable};
use acbench_core::policy::greedy_table_from_values;

#[test]
fn linear_fit_of_q_star_acts_near_optimally() {
    let env = build_env(&preset("tetris-small").unwrap()).unwrap();
    let lin = env.linear().unwrap();
    let mdp = env.tabular();
    let vt = dp_solve_optimal(mdp);
    let v_star = vt.initial_value(mdp);
    let uniform = PolicyTable::uniform(mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let v_unif = dp_policy_eval(mdp, &uniform).unwrap().initial_value(mdp);

    let mut tables = vec![vec![vec![0.0; mdp.n_actions()]; mdp.n_states()]; mdp.horizon()];
    for h in 0..mdp.horizon() {
        let mut rows: Vec<&[f64]> = Vec::new();
        let mut ys = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                rows.push(lin.features(h, s, a));
                ys.push(vt.q[h][s][a]);
            }
        }
        let w = ridge_fit(&rows, &ys, 1e-8).unwrap();
        let mut idx = 0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                tables[h][s][a] = rows[idx].iter().zip(&w).map(|(x, wi)| x * wi).sum();
                idx += 1;
            }
        }
    }
    let greedy = greedy_table_from_values(&tables);
    let v_ceiling = dp_policy_eval(mdp, &greedy).unwrap().initial_value(mdp);
    assert!(
        v_ceiling >= 0.9 * v_star,
        "linear ceiling {v_ceiling:.3} below 0.9 V* = {:.3} (uniform {v_unif:.3})",
        0.9 * v_star
    );
    assert!(v_ceiling > v_unif, "ceiling no better than uniform");
}
