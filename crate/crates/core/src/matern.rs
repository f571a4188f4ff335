//! Matérn correlation with smoothness ν = 1 and the modified Bessel
//! function K₁ it needs.

use std::f64::consts::LN_2;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Modified Bessel function of the second kind, order one, for x > 0.
pub fn bessel_k1(x: f64) -> f64 {
    if !(x > 0.0) {
        return if x == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    if x <= 2.0 {
        k1_series(x)
    } else if x > 700.0 {
        0.0
    } else {
        k1_integral(x)
    }
}

/// K₁(x) = 1/x + ln(x/2) I₁(x) − (x/4) Σ (ψ(k+1) + ψ(k+2)) (x²/4)^k / (k!(k+1)!)
fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let log_half = x.ln() - LN_2;
    let mut term = 1.0; // (x²/4)^k / (k!(k+1)!)
    let mut psi_k1 = -EULER_GAMMA; // ψ(k+1)
    let mut i1 = 0.0;
    let mut s = 0.0;
    for k in 0..60 {
        let psi_k2 = psi_k1 + 1.0 / (k as f64 + 1.0);
        i1 += term;
        s += (psi_k1 + psi_k2) * term;
        psi_k1 = psi_k2;
        term *= q / ((k as f64 + 1.0) * (k as f64 + 2.0));
        if term < 1e-18 * i1 {
            break;
        }
    }
    1.0 / x + log_half * (0.5 * x * i1) - 0.25 * x * s
}

/// Trapezoidal rule on K₁(x) = ∫₀^∞ exp(−x cosh t) cosh t dt, which converges
/// geometrically for this analytic, rapidly decaying integrand.
fn k1_integral(x: f64) -> f64 {
    let h = 0.05;
    // Scale out exp(-x) to avoid underflow in the partial sums.
    let f = |t: f64| (-x * (t.cosh() - 1.0)).exp() * t.cosh();
    let mut sum = 0.5 * f(0.0);
    let mut t = h;
    loop {
        let v = f(t);
        sum += v;
        if v < 1e-18 * sum {
            break;
        }
        t += h;
    }
    sum * h * (-x).exp()
}

/// Matérn ν = 1 correlation at distance `d` for scale κ: (κd) K₁(κd).
pub fn matern_correlation(d: f64, kappa: f64) -> f64 {
    let r = kappa * d.abs();
    if r < 1e-12 {
        1.0
    } else {
        r * bessel_k1(r)
    }
}
