//! Generalized advantage estimation with episode-boundary masking.

use crate::LearnError;

/// `rewards`/`dones` are T x N (step-major), `values` is (T+1) x N.
/// A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1} with
/// delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t.
pub fn gae(
    rewards: &[Vec<f64>],
    values: &[Vec<f64>],
    dones: &[Vec<bool>],
    discount: f64,
    lambda: f64,
) -> Result<Vec<Vec<f64>>, LearnError> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 || dones.len() != t_len {
        return Err(LearnError::ShapeMismatch(format!(
            "rewards T={} values={} dones={}",
            t_len,
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.first().map(|r| r.len()).unwrap_or(0);
    for (t, row) in rewards.iter().enumerate() {
        if row.len() != n || dones[t].len() != n || values[t].len() != n {
            return Err(LearnError::ShapeMismatch(format!("row {t} width")));
        }
    }
    if values[t_len].len() != n {
        return Err(LearnError::ShapeMismatch("bootstrap row width".into()));
    }

    let mut advantages = vec![vec![0.0; n]; t_len];
    for i in 0..n {
        let mut acc = 0.0;
        for t in (0..t_len).rev() {
            let not_done = if dones[t][i] { 0.0 } else { 1.0 };
            let delta = rewards[t][i] + discount * values[t + 1][i] * not_done - values[t][i];
            acc = delta + discount * lambda * not_done * acc;
            advantages[t][i] = acc;
        }
    }
    Ok(advantages)
}
