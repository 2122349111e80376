use crate::error::{Error, Result};

/// Generalized advantage estimation over a flat sequence of transitions.
/// The value after a `done` transition is taken as 0; the sequence must
/// end on a `done` (finite horizon, no bootstrap past it).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::LengthMismatch(format!(
            "rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        adv[t] = delta + gamma * lambda * live * next_adv;
        next_adv = adv[t];
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_example() {
        let (adv, ret) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[false, true], 0.99, 0.95).unwrap();
        assert!((adv[1] - 1.0).abs() < 1e-15);
        assert!((adv[0] - 1.9405).abs() < 1e-12);
        assert_eq!(adv, ret);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.3, -0.2];
        let (adv, _) = compute_gae(&r, &v, &[false, false, true], 0.9, 0.0).unwrap();
        assert!((adv[0] - (0.5 + 0.9 * 0.3 - 0.1)).abs() < 1e-15);
        assert!((adv[1] - (-1.0 + 0.9 * -0.2 - 0.3)).abs() < 1e-15);
        assert!((adv[2] - (2.0 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn lambda_one_is_reward_to_go() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let d = [false, true, false, true];
        let (adv, _) = compute_gae(&r, &[0.0; 4], &d, 0.5, 1.0).unwrap();
        assert_eq!(adv, vec![2.0, 2.0, 5.0, 4.0]);
    }

    #[test]
    fn length_check() {
        assert!(matches!(compute_gae(&[1.0], &[], &[true], 0.9, 0.9), Err(Error::LengthMismatch(_))));
    }
}
