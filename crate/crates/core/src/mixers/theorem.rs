//! Brute-force oracles over small tabular instances: the factorization
//! condition with per-agent correction factors, and IGM itself.
//!
//! Joint actions are enumerated with agent 0 as the most significant digit,
//! so `q_tot[a_0 * |A|^(N-1) + ... + a_{N-1}]`.

use rand::Rng;
use serde::Serialize;

use crate::agent::argmax;

pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularInstance {
    /// `q[i][a]`: agent `i`'s utility for action `a`.
    pub q: Vec<Vec<f64>>,
    /// One correction factor per agent.
    pub phi: Vec<f64>,
    /// Joint value for every joint action.
    pub q_tot: Vec<f64>,
}

impl TabularInstance {
    pub fn num_agents(&self) -> usize {
        self.q.len()
    }

    pub fn num_actions(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    pub fn is_well_formed(&self) -> bool {
        let (n, a) = (self.num_agents(), self.num_actions());
        n > 0
            && a > 0
            && self.q.iter().all(|qi| qi.len() == a)
            && self.phi.len() == n
            && Some(self.q_tot.len()) == a.checked_pow(n as u32)
    }
}

/// Decodes a flat joint-action index.
pub fn joint_action(mut index: usize, num_agents: usize, num_actions: usize) -> Vec<usize> {
    let mut out = vec![0; num_agents];
    for slot in out.iter_mut().rev() {
        *slot = index % num_actions;
        index /= num_actions;
    }
    out
}

pub fn joint_index(actions: &[usize], num_actions: usize) -> usize {
    actions.iter().fold(0, |acc, &a| acc * num_actions + a)
}

/// Per-agent greedy actions, lowest index on ties.
pub fn individual_greedy(q: &[Vec<f64>]) -> Vec<usize> {
    q.iter().map(|qi| argmax(qi).unwrap_or(0)).collect()
}

fn additive(q: &[Vec<f64>], joint: &[usize]) -> f64 {
    q.iter().zip(joint).map(|(qi, &a)| qi[a]).sum()
}

/// The factorization condition: `sum_i (Q_i + phi_i) - Q_tot` is zero at the
/// individually greedy joint action and non-negative elsewhere, and
/// `sum_i phi_i = max Q_tot - sum_i Q_i(greedy)`.
pub fn theorem1_verify(inst: &TabularInstance) -> bool {
    if !inst.is_well_formed() {
        return false;
    }
    let (n, a) = (inst.num_agents(), inst.num_actions());
    let greedy = individual_greedy(&inst.q);
    let greedy_idx = joint_index(&greedy, a);
    let phi_sum: f64 = inst.phi.iter().sum();
    for (idx, &qt) in inst.q_tot.iter().enumerate() {
        let gap = additive(&inst.q, &joint_action(idx, n, a)) + phi_sum - qt;
        let ok = if idx == greedy_idx {
            gap.abs() <= TOLERANCE
        } else {
            gap >= -TOLERANCE
        };
        if !ok {
            return false;
        }
    }
    let max_tot = inst.q_tot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (phi_sum - (max_tot - additive(&inst.q, &greedy))).abs() <= TOLERANCE
}

/// The joint greedy action of `q_tot` equals the tuple of individual greedy
/// actions (lowest index on ties on both sides).
pub fn igm_check(q: &[Vec<f64>], q_tot: &[f64]) -> bool {
    let Some(a) = q.first().map(Vec::len) else {
        return false;
    };
    match argmax(q_tot) {
        Some(best) => joint_action(best, q.len(), a) == individual_greedy(q),
        None => false,
    }
}

/// Joint greedy action of `sum_i (Q_i + phi_i)` by exhaustive enumeration.
pub fn shifted_joint_greedy(q: &[Vec<f64>], phi: &[f64]) -> Vec<usize> {
    let (n, a) = (q.len(), q.first().map_or(0, Vec::len));
    let totals: Vec<f64> = (0..a.pow(n as u32))
        .map(|idx| {
            let joint = joint_action(idx, n, a);
            q.iter().zip(phi).zip(&joint).map(|((qi, p), &ai)| qi[ai] + p).sum()
        })
        .collect();
    joint_action(argmax(&totals).unwrap_or(0), n, a)
}

fn random_utilities<R: Rng>(n: usize, a: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..a).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect()
}

/// An instance satisfying the condition by construction: `Q_tot` is the
/// shifted sum minus a strictly positive slack away from the greedy action.
pub fn constructed_instance<R: Rng>(n: usize, a: usize, rng: &mut R) -> TabularInstance {
    let q = random_utilities(n, a, rng);
    let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let phi_sum: f64 = phi.iter().sum();
    let greedy_idx = joint_index(&individual_greedy(&q), a);
    let q_tot = (0..a.pow(n as u32))
        .map(|idx| {
            let base = additive(&q, &joint_action(idx, n, a)) + phi_sum;
            if idx == greedy_idx {
                base
            } else {
                base - rng.gen_range(0.01..20.0)
            }
        })
        .collect();
    TabularInstance { q, phi, q_tot }
}

/// A constructed instance with one joint value nudged by up to +-1, which
/// may or may not break the condition.
pub fn perturbed_instance<R: Rng>(n: usize, a: usize, rng: &mut R) -> TabularInstance {
    let mut inst = constructed_instance(n, a, rng);
    let idx = rng.gen_range(0..inst.q_tot.len());
    inst.q_tot[idx] += rng.gen_range(-1.0..1.0);
    inst
}

/// Independent random utilities, factors and joint values.
pub fn random_instance<R: Rng>(n: usize, a: usize, rng: &mut R) -> TabularInstance {
    TabularInstance {
        q: random_utilities(n, a, rng),
        phi: (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        q_tot: (0..a.pow(n as u32)).map(|_| rng.gen_range(-30.0..30.0)).collect(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImplicationReport {
    pub num_agents: usize,
    pub num_actions: usize,
    pub instances: usize,
    /// Instances that satisfied the factorization condition.
    pub verified: usize,
    /// Verified instances for which IGM nevertheless failed.
    pub failures: usize,
}

/// Runs `instances` draws, cycling through constructed, perturbed and fully
/// random generators, and counts violations of "condition holds => IGM".
pub fn implication_suite<R: Rng>(n: usize, a: usize, instances: usize, rng: &mut R) -> ImplicationReport {
    let mut report = ImplicationReport {
        num_agents: n,
        num_actions: a,
        instances,
        ..Default::default()
    };
    for k in 0..instances {
        let inst = match k % 3 {
            0 => constructed_instance(n, a, rng),
            1 => perturbed_instance(n, a, rng),
            _ => random_instance(n, a, rng),
        };
        if theorem1_verify(&inst) {
            report.verified += 1;
            if !igm_check(&inst.q, &inst.q_tot) {
                report.failures += 1;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::PAYOFF;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_instance_verifies() {
        let inst = TabularInstance {
            q: vec![vec![0.0; 3]; 2],
            phi: vec![0.0; 2],
            q_tot: vec![0.0; 9],
        };
        assert!(theorem1_verify(&inst));
        assert!(igm_check(&inst.q, &inst.q_tot));
    }

    #[test]
    fn breaking_the_equality_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut inst = constructed_instance(2, 3, &mut rng);
        assert!(theorem1_verify(&inst));
        let g = joint_index(&individual_greedy(&inst.q), 3);
        inst.q_tot[g] += 1.0;
        assert!(!theorem1_verify(&inst));
    }

    #[test]
    fn index_encoding_round_trips() {
        for idx in 0..27 {
            assert_eq!(joint_index(&joint_action(idx, 3, 3), 3), idx);
        }
        assert_eq!(joint_action(5, 2, 3), vec![1, 2]);
    }

    #[test]
    fn additive_tables_satisfy_igm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = random_utilities(2, 4, &mut rng);
            let q_tot: Vec<f64> = (0..16).map(|i| additive(&q, &joint_action(i, 2, 4))).collect();
            assert!(igm_check(&q, &q_tot));
        }
    }

    #[test]
    fn payoff_matrix_igm() {
        let q_tot: Vec<f64> = PAYOFF.iter().flatten().copied().collect();
        assert!(igm_check(&[vec![1.0, 0.0, 0.0], vec![2.0, 1.0, 1.0]], &q_tot));
        assert!(!igm_check(&[vec![0.0, 1.0, 0.0], vec![2.0, 1.0, 1.0]], &q_tot));
    }

    #[test]
    fn off_diagonal_optimum_fails_igm() {
        // joint optimum at (A, B), individual greedy at (A, A)
        let q = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(!igm_check(&q, &[0.0, 5.0, 0.0, 0.0]));
    }

    #[test]
    fn malformed_instances_are_rejected() {
        let inst = TabularInstance {
            q: vec![vec![0.0; 2]; 2],
            phi: vec![0.0],
            q_tot: vec![0.0; 4],
        };
        assert!(!theorem1_verify(&inst));
    }

    #[test]
    fn suite_mixes_passing_and_failing_instances() {
        let r = implication_suite(2, 3, 300, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(r.failures, 0);
        assert!(r.verified >= 100 && r.verified < 300, "{r:?}");
    }
}
