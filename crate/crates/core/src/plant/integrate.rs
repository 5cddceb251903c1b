use crate::error::{Error, Result};

/// Continuous-time dynamics `ẋ = f(x, u)`.
pub trait OdeSystem {
    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;

    /// Whether `x` lies in the set where the model is meaningful.
    fn is_valid_state(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
    }
}

/// One classical Runge–Kutta step of length `h`.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, x: &[f64], u: &[f64], h: f64) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], s: f64, k: &[f64]| -> Vec<f64> { a.iter().zip(k).map(|(a, k)| a + s * k).collect() };
    let k1 = sys.rhs(x, u)?;
    let k2 = sys.rhs(&axpy(x, 0.5 * h, &k1), u)?;
    let k3 = sys.rhs(&axpy(x, 0.5 * h, &k2), u)?;
    let k4 = sys.rhs(&axpy(x, h, &k3), u)?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates over `dt` with `u` held constant, in `substeps` equal RK4 steps.
pub fn integrate_hold<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    u: &[f64],
    dt: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let h = dt / substeps as f64;
    let mut x = x0.to_vec();
    for _ in 0..substeps {
        x = rk4_step(sys, &x, u, h)?;
        if !sys.is_valid_state(&x) {
            return Err(Error::NonPhysical(format!("state left the valid set: {x:?}")));
        }
    }
    Ok(x)
}
