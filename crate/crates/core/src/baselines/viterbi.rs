//! Max-product decoding of a discrete HMM.

use crate::error::{Error, Result};

/// Most likely state sequence under `log_prior[s0] + sum log_emissions[t][s_t]
/// + sum log_transitions[s_{t-1}][s_t]`.
///
/// Ties are broken towards the lexicographically smallest sequence. Suffix
/// scores are computed backwards, then the sequence is chosen front to back by
/// taking the smallest state that attains the optimum at each step.
/// Returns the sequence and its score.
pub fn viterbi(
    log_emissions: &[Vec<f64>],
    log_transitions: &[Vec<f64>],
    log_prior: &[f64],
) -> Result<(Vec<usize>, f64)> {
    let s = log_prior.len();
    let t_len = log_emissions.len();
    if t_len == 0 || s == 0 {
        return Err(Error::Validation("viterbi needs at least one step and one state".into()));
    }
    if log_emissions.iter().any(|row| row.len() != s)
        || log_transitions.len() != s
        || log_transitions.iter().any(|row| row.len() != s)
    {
        return Err(Error::Validation("viterbi matrix dimensions disagree".into()));
    }

    // suffix[t][i]: best score of steps t.. given state i at step t.
    let mut suffix = vec![vec![f64::NEG_INFINITY; s]; t_len];
    suffix[t_len - 1].clone_from(&log_emissions[t_len - 1]);
    for t in (0..t_len - 1).rev() {
        for i in 0..s {
            let best = (0..s)
                .map(|j| log_transitions[i][j] + suffix[t + 1][j])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[t][i] = log_emissions[t][i] + best;
        }
    }

    let first = pick(s, |i| log_prior[i] + suffix[0][i]);
    let score = log_prior[first] + suffix[0][first];
    if score == f64::NEG_INFINITY {
        return Err(Error::NoFeasiblePath);
    }
    let mut states = vec![first];
    for t in 1..t_len {
        let prev = states[t - 1];
        states.push(pick(s, |j| log_transitions[prev][j] + suffix[t][j]));
    }
    Ok((states, score))
}

/// Smallest index maximizing `f`.
fn pick(n: usize, f: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_val = f(0);
    for i in 1..n {
        let v = f(i);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scores every state sequence in lexicographic order; keeps the first
    /// strict improvement.
    pub(crate) fn brute_force(em: &[Vec<f64>], tr: &[Vec<f64>], prior: &[f64]) -> Option<Vec<usize>> {
        let (t_len, s) = (em.len(), prior.len());
        let total = s.pow(t_len as u32);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for code in 0..total {
            let mut seq = vec![0; t_len];
            let mut c = code;
            for t in (0..t_len).rev() {
                seq[t] = c % s;
                c /= s;
            }
            let mut score = prior[seq[0]] + em[0][seq[0]];
            for t in 1..t_len {
                score += tr[seq[t - 1]][seq[t]] + em[t][seq[t]];
            }
            if score > f64::NEG_INFINITY && best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, seq));
            }
        }
        best.map(|b| b.1)
    }

    fn random_instance(rng: &mut ChaCha8Rng, integer: bool) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let t_len = rng.random_range(1..=6);
        let s = rng.random_range(1..=5);
        let val = |rng: &mut ChaCha8Rng, forbid: f64| {
            if rng.random::<f64>() < forbid {
                f64::NEG_INFINITY
            } else if integer {
                -(rng.random_range(0..4) as f64)
            } else {
                -rng.random::<f64>() * 5.0
            }
        };
        let em = (0..t_len).map(|_| (0..s).map(|_| val(rng, 0.1)).collect()).collect();
        let tr = (0..s).map(|_| (0..s).map(|_| val(rng, 0.3)).collect()).collect();
        let prior = (0..s).map(|_| val(rng, 0.1)).collect();
        (em, tr, prior)
    }

    #[test]
    fn single_state_repeats() {
        let em = vec![vec![-1.0]; 4];
        let (seq, _) = viterbi(&em, &[vec![0.0]], &[0.0]).unwrap();
        assert_eq!(seq, vec![0; 4]);
    }

    #[test]
    fn global_optimum_beats_greedy() {
        // Greedy picks state 0 at t=0 (-0.1 vs -0.2) but 0 -> 0 and 0 -> 1 are expensive.
        let em = vec![vec![-0.1, -0.2], vec![-1.0, -1.0]];
        let tr = vec![vec![-5.0, -5.0], vec![-0.1, -0.1]];
        let (seq, score) = viterbi(&em, &tr, &[0.0, 0.0]).unwrap();
        assert_eq!(seq, vec![1, 0]);
        assert_eq!(Some(seq), brute_force(&em, &tr, &[0.0, 0.0]));
        assert!((score - (-0.2 - 0.1 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_emissions_follow_prior_and_transitions() {
        let em = vec![vec![0.0; 3]; 3];
        let tr = vec![
            vec![-1.0, -0.1, -3.0],
            vec![-2.0, -2.0, -0.2],
            vec![-0.5, -0.5, -0.5],
        ];
        let prior = vec![-0.1, -1.0, -1.0];
        let (seq, _) = viterbi(&em, &tr, &prior).unwrap();
        assert_eq!(Some(seq.clone()), brute_force(&em, &tr, &prior));
        assert_eq!(seq, vec![0, 1, 2]);
    }

    #[test]
    fn all_forbidden_is_infeasible() {
        let em = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let tr = vec![vec![f64::NEG_INFINITY; 2]; 2];
        assert!(matches!(viterbi(&em, &tr, &[0.0, 0.0]), Err(Error::NoFeasiblePath)));
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let em = vec![vec![0.0; 3]; 4];
        let tr = vec![vec![0.0; 3]; 3];
        assert_eq!(viterbi(&em, &tr, &[0.0; 3]).unwrap().0, vec![0; 4]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        for integer in [true, false] {
            let mut rng = ChaCha8Rng::seed_from_u64(if integer { 1 } else { 2 });
            for _ in 0..300 {
                let (em, tr, prior) = random_instance(&mut rng, integer);
                let expected = brute_force(&em, &tr, &prior);
                match viterbi(&em, &tr, &prior) {
                    Ok((seq, _)) => assert_eq!(Some(seq), expected),
                    Err(Error::NoFeasiblePath) => assert_eq!(expected, None),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}
