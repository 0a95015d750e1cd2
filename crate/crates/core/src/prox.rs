//! Closed-form proximal operators and projections.

/// Coordinatewise soft-thresholding, the prox of `tau * ‖·‖₁`.
pub fn prox_l1(x: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau >= 0.0);
    x.iter().map(|&v| soft_threshold(v, tau)).collect()
}

#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Prox of `eta * (lambda/2)‖·‖²`: a uniform shrink.
pub fn prox_sql2(x: &[f64], eta: f64, lambda: f64) -> Vec<f64> {
    let s = 1.0 / (1.0 + eta * lambda);
    x.iter().map(|v| v * s).collect()
}

/// Euclidean projection onto `{y : ‖y‖₁ ≤ radius}` via the sort-based threshold.
///
/// Points already inside the ball are returned unchanged.
pub fn project_l1_ball(z: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = z.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return z.to_vec();
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    z.iter().map(|&v| soft_threshold(v, tau)).collect()
}

/// Euclidean projection onto `{y : ‖y‖₂ ≤ radius}`.
pub fn project_l2_ball(z: &[f64], radius: f64) -> Vec<f64> {
    let n = crate::linalg::norm(z);
    if n <= radius {
        z.to_vec()
    } else {
        z.iter().map(|v| v * radius / n).collect()
    }
}
