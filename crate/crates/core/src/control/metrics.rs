use super::TrajectoryLog;

/// Trapezoidal integral of `|e(t)|`.
pub fn iae_signal(times: &[f64], errors: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(errors.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0].abs() + e[1].abs()))
        .sum()
}

/// Earliest time after which every `|e|` is strictly below `band`.
pub fn settling_time_signal(times: &[f64], errors: &[f64], band: f64) -> Option<f64> {
    let last_out = errors.iter().rposition(|e| !(e.abs() < band));
    match last_out {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// `max_i |x_i − setpoint_i| / scale_i` for every logged row.
pub fn scaled_error_norms(log: &TrajectoryLog, setpoint: &[f64], scale: &[f64]) -> Vec<f64> {
    log.rows
        .iter()
        .map(|r| {
            r.x.iter()
                .zip(setpoint)
                .zip(scale)
                .map(|((x, s), c)| (x - s).abs() / c)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Sum over state components of the IAE of `(x_i − setpoint_i) / scale_i`.
pub fn iae(log: &TrajectoryLog, setpoint: &[f64], scale: &[f64]) -> f64 {
    let times = log.times();
    (0..setpoint.len())
        .map(|i| {
            let e: Vec<f64> = log.rows.iter().map(|r| (r.x[i] - setpoint[i]) / scale[i]).collect();
            iae_signal(&times, &e)
        })
        .sum()
}

/// Settling time of the scaled ∞-norm error into `band`.
pub fn settling_time(log: &TrajectoryLog, setpoint: &[f64], scale: &[f64], band: f64) -> Option<f64> {
    settling_time_signal(&log.times(), &scaled_error_norms(log, setpoint, scale), band)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn constant_error() {
        let t = grid(21, 0.1);
        assert!((iae_signal(&t, &[0.5; 21]) - 1.0).abs() < 1e-12);
        assert_eq!(iae_signal(&t, &[0.0; 21]), 0.0);
    }

    #[test]
    fn triangle_decay() {
        let t = grid(11, 0.1);
        let e: Vec<f64> = t.iter().map(|t| 1.0 - t).collect();
        assert!((iae_signal(&t, &e) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn settling_examples() {
        let t = grid(10, 0.01);
        assert_eq!(settling_time_signal(&t, &[0.01; 10], 0.1), Some(0.0));
        let mut e = vec![1.0; 10];
        e[7..].fill(0.0);
        assert_eq!(settling_time_signal(&t, &e, 0.1), Some(t[7]));
        let e = [1.0, 0.05, 0.05, 0.5, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05];
        assert_eq!(settling_time_signal(&t, &e, 0.1), Some(t[4]));
        assert_eq!(settling_time_signal(&t, &[1.0; 10], 0.1), None);
    }
}
