//! Property tests for the structural invariants: occupancy normalization and
//! the exact policy-value identity, softmax shift invariance, TD-loss order
//! invariance, and logit accumulation.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use acbench_core::approx::{td_loss_tables, StepDataset, TdTargetMode};
use acbench_core::mdp::{
    dp_policy_eval, occupancy_measures, Env, PolicyTable, TabularMdp, Transition,
};
use acbench_core::policy::SoftmaxPolicy;

/// A small random MDP from raw positive weights.
fn arb_mdp() -> impl Strategy<Value = TabularMdp> {
    let dims = (2usize..=4, 2usize..=3, 2usize..=4);
    dims.prop_flat_map(|(n_s, n_a, hor)| {
        let cells = hor * n_s * n_a;
        (
            Just((n_s, n_a, hor)),
            proptest::collection::vec(0.01f64..1.0, cells * n_s),
            proptest::collection::vec(0.0f64..1.0, cells),
        )
    })
    .prop_map(|((n_s, n_a, hor), raw_p, raw_r)| {
        let mut transitions = vec![vec![vec![vec![0.0; n_s]; n_a]; n_s]; hor];
        let mut rewards = vec![vec![vec![0.0; n_a]; n_s]; hor];
        let mut idx = 0;
        for h in 0..hor {
            for s in 0..n_s {
                for a in 0..n_a {
                    let row = &raw_p[idx * n_s..(idx + 1) * n_s];
                    let sum: f64 = row.iter().sum();
                    for sp in 0..n_s {
                        transitions[h][s][a][sp] = row[sp] / sum;
                    }
                    rewards[h][s][a] = raw_r[idx];
                    idx += 1;
                }
            }
        }
        TabularMdp::new(transitions, rewards, 0).unwrap()
    })
}

fn policy_for(mdp: &TabularMdp, logits: &[f64]) -> PolicyTable {
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut p = SoftmaxPolicy::uniform_tabular(n_s, n_a, hor, 1.0);
    let mut tables = vec![vec![vec![0.0; n_a]; n_s]; hor];
    let mut i = 0;
    for h in 0..hor {
        for s in 0..n_s {
            for a in 0..n_a {
                tables[h][s][a] = logits[i % logits.len()];
                i += 1;
            }
        }
    }
    p.ascend_tables(&tables, 1.0).unwrap();
    p.table(&Env::Tabular(mdp.clone()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Occupancy rows are distributions and reproduce the exact policy value.
    #[test]
    fn occupancy_normalizes_and_reproduces_value(
        mdp in arb_mdp(),
        logits in proptest::collection::vec(-2.0f64..2.0, 8),
    ) {
        let policy = policy_for(&mdp, &logits);
        let occ = occupancy_measures(&mdp, &policy).unwrap();
        let pe = dp_policy_eval(&mdp, &policy).unwrap();
        let mut total = 0.0;
        for h in 0..mdp.horizon() {
            let step_sum: f64 = occ[h].iter().flatten().sum();
            prop_assert!((step_sum - 1.0).abs() < 1e-9);
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    total += occ[h][s][a] * mdp.reward(h, s, a);
                }
            }
        }
        prop_assert!((total - pe.initial_value(&mdp)).abs() < 1e-10);
    }

    /// Adding a per-state constant to the critic leaves the softmax
    /// probabilities unchanged.
    #[test]
    fn softmax_shift_invariance(
        base in proptest::collection::vec(-3.0f64..3.0, 3),
        shift in -5.0f64..5.0,
        eta in 0.01f64..2.0,
    ) {
        let env = {
            let transitions = vec![vec![vec![vec![1.0]; 3]; 1]];
            let rewards = vec![vec![vec![0.0; 3]; 1]];
            Env::Tabular(TabularMdp::new(transitions, rewards, 0).unwrap())
        };
        let mut a = SoftmaxPolicy::uniform_tabular(1, 3, 1, eta);
        let mut b = SoftmaxPolicy::uniform_tabular(1, 3, 1, eta);
        a.ascend_tables(&[vec![base.clone()]], eta).unwrap();
        let shifted: Vec<f64> = base.iter().map(|x| x + shift).collect();
        b.ascend_tables(&[vec![shifted]], eta).unwrap();
        let pa = a.action_probs(&env, 0, 0);
        let pb = b.action_probs(&env, 0, 0);
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    /// TD loss is independent of sample order.
    #[test]
    fn td_loss_order_invariance(
        rewards in proptest::collection::vec(0.0f64..1.0, 1..30),
        perm_seed in 0u64..1000,
    ) {
        let n = rewards.len();
        let tables = vec![vec![vec![0.3, 0.9]; 2]; 2];
        let mut fwd = StepDataset::new(0);
        let mut transitions = Vec::new();
        for (i, &r) in rewards.iter().enumerate() {
            let t = Transition {
                step: 0,
                state: i % 2,
                action: (i / 2) % 2,
                reward: r,
                next_state: Some((i * 7 + 1) % 2),
            };
            transitions.push(t);
            fwd.push(t).unwrap();
        }
        // Deterministic pseudo-shuffle.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (i as u64).wrapping_mul(perm_seed * 2 + 1) % 101);
        let mut shuffled = StepDataset::new(0);
        for &i in &order {
            shuffled.push(transitions[i]).unwrap();
        }
        let a = td_loss_tables(&tables, 0, &TdTargetMode::Greedy, &fwd).unwrap();
        let b = td_loss_tables(&tables, 0, &TdTargetMode::Greedy, &shuffled).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    /// Logits equal η times the running sum of critic tables exactly.
    #[test]
    fn logit_accumulation_identity(
        updates in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 4), 1..12),
        eta in 0.05f64..1.0,
    ) {
        let mut policy = SoftmaxPolicy::uniform_tabular(2, 2, 1, eta);
        let mut sums = [0.0; 4];
        for u in &updates {
            let table = vec![vec![vec![u[0], u[1]], vec![u[2], u[3]]]];
            policy.ascend_tables(&table, eta).unwrap();
            for (acc, v) in sums.iter_mut().zip(u) {
                *acc += eta * v;
            }
        }
        match policy.params() {
            acbench_core::policy::PolicyParams::TabularLogits(l) => {
                prop_assert!((l[0][0][0] - sums[0]).abs() < 1e-12);
                prop_assert!((l[0][0][1] - sums[1]).abs() < 1e-12);
                prop_assert!((l[0][1][0] - sums[2]).abs() < 1e-12);
                prop_assert!((l[0][1][1] - sums[3]).abs() < 1e-12);
            }
            _ => prop_assert!(false),
        }
    }
}
