//! Infinite-delay decay analysis.
//!
//! With the full path history (cut-off H = inf) the comparison dynamics obey
//! the integro-differential equation
//!
//!   d phi/dt = -lambda1 phi + lambda2 (1/t) int_0^t phi(s) ds,
//!
//! whose regular solution transforms, via u(t) = exp(lambda1 t) phi(t) and
//! tau = lambda1 t, into Kummer's equation
//!
//!   tau u'' + (1 - tau) u' - L u = 0,   L = lambda2/lambda1 in [0, 1),
//!
//! solved by the confluent hypergeometric function M(L, 1, tau). The
//! asymptotics M ~ exp(tau) tau^(L-1) / Gamma(L) turn the exponential bound
//! into polynomial decay t^(L-1).
//!
//! M(L, 1, tau) carries the standard second-parameter normalization
//! sum_n (L)_n tau^n / (n!)^2; this is the series that actually satisfies
//! the equation above (checked by the ODE residual tests below).

use crate::error::{Error, Result};
use crate::trace::{loglog_slope_fit, DecayTrace};

/// Where the series hands over to the asymptotic expansion.
const ASYMPTOTIC_SWITCH: f64 = 50.0;

/// Parameters of the infinite-delay comparison solution.
#[derive(Debug, Clone, Copy)]
pub struct KummerParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub y0: f64,
    pub t0: f64,
}

impl KummerParams {
    pub fn new(lambda1: f64, lambda2: f64, y0: f64, t0: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || !lambda1.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda1 must be positive, got {lambda1}"
            )));
        }
        if !(lambda2 >= 0.0) || !lambda2.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda2 must be nonnegative, got {lambda2}"
            )));
        }
        if lambda2 / lambda1 >= 1.0 {
            return Err(Error::OutOfDomain(format!(
                "lambda2/lambda1 must lie in [0, 1), got {}",
                lambda2 / lambda1
            )));
        }
        if !(y0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "initial value must be positive, got {y0}"
            )));
        }
        if !(t0 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "initial time must be nonnegative, got {t0}"
            )));
        }
        Ok(KummerParams {
            lambda1,
            lambda2,
            y0,
            t0,
        })
    }

    /// The ratio L = lambda2/lambda1; the polynomial decay exponent is L - 1.
    pub fn ratio(&self) -> f64 {
        self.lambda2 / self.lambda1
    }
}

/// Gamma function via the Lanczos approximation (g = 7, 9 coefficients),
/// accurate to well below 1e-10 relative on (0, 1].
pub fn gamma_lanczos(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "gamma requires x > 0, got {x}"
        )));
    }
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    // Recurse into x >= 1 where the approximation is evaluated directly.
    if x < 1.0 {
        return Ok(gamma_lanczos(x + 1.0)? / x);
    }
    let z = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    Ok((2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc)
}

fn check_m_domain(lam: f64, tau: f64) -> Result<()> {
    // The closed interval [0, 1] is accepted: L = 1 is the boundary case
    // M(1, 1, tau) = exp(tau), useful as a sanity limit.
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::OutOfDomain(format!(
            "series parameter must lie in [0, 1], got {lam}"
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::OutOfDomain(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    Ok(())
}

/// Direct series sum_n (lam)_n tau^n / (n!)^2, terms stopped at relative
/// 1e-14. All terms are positive, so there is no cancellation.
pub(crate) fn m_series(lam: f64, tau: f64) -> f64 {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut n = 0.0_f64;
    loop {
        term *= (lam + n) * tau / ((n + 1.0) * (n + 1.0));
        sum += term;
        n += 1.0;
        if term <= 1e-14 * sum || n > 10_000.0 {
            return sum;
        }
    }
}

/// Leading asymptotic branch exp(tau) tau^(lam - 1) / Gamma(lam) with the
/// full inverse-power correction series; valid for lam in (0, 1] and large
/// tau. Returned in the exponentially scaled form exp(-tau) M.
pub(crate) fn m_asymptotic_scaled(lam: f64, tau: f64) -> f64 {
    // Correction series sum_k [(1 - lam)_k]^2 / (k! tau^k); asymptotic, so
    // truncate when terms stop decreasing.
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 0.0_f64;
    loop {
        let next = term * (1.0 - lam + k) * (1.0 - lam + k) / ((k + 1.0) * tau);
        if next.abs() >= term.abs() || next.abs() <= 1e-16 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    let gamma = gamma_lanczos(lam).expect("lam in (0, 1] checked by caller");
    tau.powf(lam - 1.0) / gamma * sum
}

/// Kummer's function M(lam, 1, tau) for lam in [0, 1], tau >= 0.
///
/// Series below tau = 50, asymptotic branch above. Overflows to infinity
/// for tau beyond ~709 + |ln tau|; use [`kummer_m_scaled`] in that regime.
pub fn kummer_m(lam: f64, tau: f64) -> Result<f64> {
    Ok(kummer_m_scaled(lam, tau)? * tau.exp())
}

/// exp(-tau) M(lam, 1, tau): the exponentially scaled Kummer function,
/// finite for every tau >= 0. This is the natural object for the decay
/// solution phi.
pub fn kummer_m_scaled(lam: f64, tau: f64) -> Result<f64> {
    check_m_domain(lam, tau)?;
    if lam == 0.0 {
        return Ok((-tau).exp());
    }
    if tau <= ASYMPTOTIC_SWITCH {
        Ok(m_series(lam, tau) * (-tau).exp())
    } else {
        Ok(m_asymptotic_scaled(lam, tau))
    }
}

/// The infinite-delay comparison solution through (t0, y0):
/// phi(t) = y0 * e^(-l1 t) M(L, 1, l1 t) / (e^(-l1 t0) M(L, 1, l1 t0)).
///
/// This is the solution of t phi'' + (1 + l1 t) phi' + (l1 - l2) phi = 0
/// that is regular at t = 0, normalized to phi(t0) = y0. For lambda2 = 0 it
/// reduces to the pure exponential y0 exp(-l1 (t - t0)).
pub fn phi_infinite_delay(params: &KummerParams, t: f64) -> Result<f64> {
    if t < params.t0 {
        return Err(Error::InvalidInput(format!(
            "t = {t} precedes the initial time t0 = {}",
            params.t0
        )));
    }
    let lam = params.ratio();
    let numer = kummer_m_scaled(lam, params.lambda1 * t)?;
    let denom = kummer_m_scaled(lam, params.lambda1 * params.t0)?;
    Ok(params.y0 * numer / denom)
}

/// RK4 integration of the integro-differential comparison equation
/// d phi/dt = -l1 phi + l2 (1/t) I,  I' = phi, from t0 > 0, with the
/// running integral seeded by the constant history phi = y0 on (0, t0].
pub fn integro_ode_solve(
    lambda1: f64,
    lambda2: f64,
    y0: f64,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> Result<DecayTrace> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(t0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "t0 must be positive (the 1/t average needs seeded history), got {t0}"
        )));
    }
    if !(t_final > t0) {
        return Err(Error::InvalidInput(format!(
            "t_final = {t_final} must exceed t0 = {t0}"
        )));
    }
    if !(lambda1 > 0.0) || lambda2 < 0.0 || lambda2 > lambda1 {
        return Err(Error::OutOfDomain(format!(
            "need 0 <= lambda2 <= lambda1 with lambda1 > 0, got {lambda1}, {lambda2}"
        )));
    }
    let rhs = |t: f64, phi: f64, integral: f64| -> (f64, f64) {
        (-lambda1 * phi + lambda2 * integral / t, phi)
    };
    let steps = ((t_final - t0) / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut t = t0;
    let mut phi = y0;
    // Constant seeding on (0, t0].
    let mut integral = y0 * t0;
    times.push(t);
    values.push(phi);
    for _ in 0..steps {
        let h = dt.min(t_final - t);
        if h <= 0.0 {
            break;
        }
        let (k1p, k1i) = rhs(t, phi, integral);
        let (k2p, k2i) = rhs(t + 0.5 * h, phi + 0.5 * h * k1p, integral + 0.5 * h * k1i);
        let (k3p, k3i) = rhs(t + 0.5 * h, phi + 0.5 * h * k2p, integral + 0.5 * h * k2i);
        let (k4p, k4i) = rhs(t + h, phi + h * k3p, integral + h * k3i);
        phi += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        integral += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
        t += h;
        times.push(t);
        values.push(phi);
    }
    DecayTrace::new(times, values, "integro_comparison")
}

/// Least-squares slope of log phi against log t on [window_lo, window_hi];
/// for the comparison solution the expected value is L - 1.
pub fn decay_exponent_fit(trace: &DecayTrace, window_lo: f64, window_hi: f64) -> Result<f64> {
    Ok(loglog_slope_fit(trace, window_lo, window_hi)?.slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_reference_values() {
        assert!((gamma_lanczos(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((gamma_lanczos(0.5).unwrap() - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((gamma_lanczos(5.0).unwrap() - 24.0).abs() < 1e-10);
        // Reflection-free range used by the asymptotics: (0, 1).
        for x in [0.1, 0.25, 0.75, 0.9] {
            let g = gamma_lanczos(x).unwrap();
            let recurrence = gamma_lanczos(x + 1.0).unwrap() / x;
            assert!((g - recurrence).abs() <= 1e-10 * g.abs());
        }
    }

    #[test]
    fn m_at_zero_and_parameter_zero() {
        assert_eq!(kummer_m(0.3, 0.0).unwrap(), 1.0);
        for tau in [0.0, 1.0, 10.0, 100.0] {
            assert!((kummer_m_scaled(0.0, tau).unwrap() - (-tau).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn m_at_parameter_one_is_exponential() {
        for tau in [0.1, 1.0, 10.0, 49.0, 60.0, 200.0] {
            let scaled = kummer_m_scaled(1.0, tau).unwrap();
            assert!(
                (scaled - 1.0).abs() <= 1e-12,
                "tau = {tau}: exp(-tau) M(1,1,tau) = {scaled}"
            );
        }
    }

    #[test]
    fn m_rejects_out_of_domain() {
        assert!(kummer_m(-0.1, 1.0).is_err());
        assert!(kummer_m(1.1, 1.0).is_err());
        assert!(kummer_m(0.5, -1.0).is_err());
    }

    #[test]
    fn m_satisfies_kummer_ode_residual() {
        // tau u'' + (1 - tau) u' - L u = 0 checked by central differences.
        let h = 1e-4;
        for lam in [0.3, 0.7] {
            for tau in [0.5, 1.0, 5.0, 20.0] {
                let u = |x: f64| kummer_m(lam, x).unwrap();
                let u0 = u(tau);
                let up = (u(tau + h) - u(tau - h)) / (2.0 * h);
                let upp = (u(tau + h) - 2.0 * u0 + u(tau - h)) / (h * h);
                let residual = tau * upp + (1.0 - tau) * up - lam * u0;
                assert!(
                    residual.abs() <= 1e-5 * u0.abs().max(1.0),
                    "lam = {lam}, tau = {tau}: residual {residual}"
                );
            }
        }
    }

    #[test]
    fn m_monotone_in_tau_and_lam() {
        let taus = [0.5, 1.0, 2.0, 5.0, 10.0, 40.0];
        for lam in [0.1, 0.5, 0.9] {
            for w in taus.windows(2) {
                assert!(kummer_m(lam, w[1]).unwrap() > kummer_m(lam, w[0]).unwrap());
            }
        }
        for tau in taus {
            for lams in [0.1_f64, 0.3, 0.5, 0.7, 0.9].windows(2) {
                assert!(kummer_m(lams[1], tau).unwrap() > kummer_m(lams[0], tau).unwrap());
            }
        }
    }

    #[test]
    fn series_and_asymptotic_agree_at_switchover() {
        for lam in [0.1, 0.5, 0.9] {
            let tau = ASYMPTOTIC_SWITCH;
            let series = m_series(lam, tau) * (-tau).exp();
            let asym = m_asymptotic_scaled(lam, tau);
            let rel = (series - asym).abs() / series.abs();
            assert!(rel <= 1e-6, "lam = {lam}: relative gap {rel:.3e}");
        }
    }

    #[test]
    fn phi_reduces_to_exponential_without_delay_term() {
        let p = KummerParams::new(0.8, 0.0, 2.0, 1.0).unwrap();
        for t in [1.0, 2.0, 5.0, 30.0] {
            let phi = phi_infinite_delay(&p, t).unwrap();
            let exact = 2.0 * (-0.8 * (t - 1.0)).exp();
            assert!((phi - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn phi_matches_initial_value_and_rejects_earlier_times() {
        let p = KummerParams::new(1.0, 0.5, 3.0, 2.0).unwrap();
        assert!((phi_infinite_delay(&p, 2.0).unwrap() - 3.0).abs() < 1e-14);
        assert!(phi_infinite_delay(&p, 1.0).is_err());
    }

    #[test]
    fn phi_satisfies_transformed_ode_residual() {
        // t phi'' + (1 + l1 t) phi' + (l1 - l2) phi = 0 by finite differences.
        // The step grows with t: second differences amplify the ~1e-13
        // relative rounding of the asymptotic branch by 1/h^2.
        let p = KummerParams::new(1.0, 0.5, 1.0, 0.5).unwrap();
        for t in [1.0_f64, 3.0, 10.0, 60.0, 150.0] {
            let h = 1e-4 * (t / 10.0).max(1.0);
            let f = |x: f64| phi_infinite_delay(&p, x).unwrap();
            let f0 = f(t);
            let fp = (f(t + h) - f(t - h)) / (2.0 * h);
            let fpp = (f(t + h) - 2.0 * f0 + f(t - h)) / (h * h);
            let residual = t * fpp + (1.0 + p.lambda1 * t) * fp + (p.lambda1 - p.lambda2) * f0;
            assert!(
                residual.abs() <= 1e-6 * f0.abs().max(1e-6),
                "t = {t}: residual {residual:.3e}, phi {f0:.3e}"
            );
        }
    }

    #[test]
    fn phi_agrees_with_integro_ode_solution() {
        // Solver started near zero selects the regular branch.
        let t0 = 1e-4;
        for (l1, l2) in [(1.0, 0.25), (1.0, 0.5), (1.0, 0.9)] {
            let trace = integro_ode_solve(l1, l2, 1.0, t0, 21.0, 1e-4).unwrap();
            let p = KummerParams::new(l1, l2, 1.0, t0).unwrap();
            let mut worst = 0.0_f64;
            for (i, &t) in trace.times.iter().enumerate() {
                if t < 1.0 {
                    continue;
                }
                let phi = phi_infinite_delay(&p, t).unwrap();
                let rel = (trace.values[i] - phi).abs() / phi;
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-6, "(l1, l2) = ({l1}, {l2}): worst rel {worst:.3e}");
        }
    }

    #[test]
    fn integro_without_delay_term_is_exponential() {
        let trace = integro_ode_solve(1.3, 0.0, 2.0, 0.5, 10.0, 1e-3).unwrap();
        for (i, &t) in trace.times.iter().enumerate() {
            let exact = 2.0 * (-1.3 * (t - 0.5)).exp();
            assert!((trace.values[i] - exact).abs() <= 1e-8 * exact.max(1e-12));
        }
    }

    #[test]
    fn integro_boundary_ratio_one_approaches_constant() {
        // L = 1: the decay exponent L - 1 vanishes; phi levels off.
        let trace = integro_ode_solve(1.0, 1.0, 1.0, 1e-3, 300.0, 1e-3).unwrap();
        assert!(trace.values.iter().all(|&v| v > 0.0));
        let slope = decay_exponent_fit(&trace, 100.0, 300.0).unwrap();
        assert!(slope.abs() < 0.05, "late slope {slope}");
    }

    #[test]
    fn integro_trace_positive_and_eventually_decreasing() {
        let trace = integro_ode_solve(1.0, 0.5, 1.0, 1e-3, 50.0, 1e-3).unwrap();
        assert!(trace.values.iter().all(|&v| v > 0.0));
        let after: Vec<&f64> = trace
            .times
            .iter()
            .zip(&trace.values)
            .filter(|(t, _)| **t > 1.0)
            .map(|(_, v)| v)
            .collect();
        for w in after.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn integro_rejects_bad_steps() {
        assert!(integro_ode_solve(1.0, 0.5, 1.0, 0.1, 10.0, 0.0).is_err());
        assert!(integro_ode_solve(1.0, 0.5, 1.0, 0.0, 10.0, 1e-3).is_err());
        assert!(integro_ode_solve(1.0, 1.5, 1.0, 0.1, 10.0, 1e-3).is_err());
    }

    #[test]
    fn exponent_fit_on_synthetic_power_law() {
        let times: Vec<f64> = (1..=2000).map(|k| 0.5 * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| t.powf(-0.5)).collect();
        let trace = DecayTrace::new(times, values, "synthetic").unwrap();
        let slope = decay_exponent_fit(&trace, 50.0, 1000.0).unwrap();
        assert!((slope + 0.5).abs() < 1e-6);
    }

    #[test]
    fn exponent_fit_recovers_comparison_exponent() {
        let trace = integro_ode_solve(1.0, 0.5, 1.0, 1e-3, 500.0, 1e-3).unwrap();
        let slope = decay_exponent_fit(&trace, 50.0, 500.0).unwrap();
        assert!((slope - (-0.5)).abs() <= 0.05, "slope {slope}");
    }

    #[test]
    fn exponent_fit_flags_exponential_trace() {
        // Pure exponential: on a log-log window far out the local slope is
        // strongly below -1, nothing like a power law.
        let times: Vec<f64> = (1..=500).map(|k| 0.1 * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let trace = DecayTrace::new(times, values, "exp").unwrap();
        let slope = decay_exponent_fit(&trace, 10.0, 50.0).unwrap();
        assert!(slope < -1.0, "slope {slope}");
    }

    #[test]
    fn params_validate_ratio_domain() {
        assert!(KummerParams::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(KummerParams::new(1.0, 0.99, 1.0, 0.0).is_ok());
        assert!(KummerParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(KummerParams::new(1.0, 0.5, 0.0, 0.0).is_err());
    }
}
