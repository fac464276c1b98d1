//! Closed-form decay rates for the delay kinetic system.
//!
//! Everything in this module is a pure function: the principal branch of the
//! Lambert W function, the decay rate of the delay comparison equation, the
//! rate pair (lambda1, lambda2) of the contraction estimate, the combined
//! rate with its cut-off dependence, and the intermediate constants of the
//! derivation with their cross-checks.

use crate::error::{Error, Result};

/// Parameters of the rate analysis. `b` is the velocity weight of the
/// quadratic form; the maximizing choice is `b = 2/gamma`.
#[derive(Debug, Clone, Copy)]
pub struct RateParameters {
    pub gamma: f64,
    pub eta: f64,
    pub cutoff: f64,
    pub b: f64,
}

/// Which validity inequalities hold for a given (gamma, eta, b).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidityFlags {
    /// eta < 1 + gamma - sqrt(1 + gamma^2)
    pub eta_window_nonempty: bool,
    /// 2/(2*gamma - eta) < b < 2*(1 - eta)/eta (upper bound vacuous at eta = 0)
    pub b_in_window: bool,
    /// eta < gamma/(1 + gamma)
    pub eta_contraction: bool,
    /// eta <= 2*gamma/(3*(1 + gamma))
    pub eta_below_bar: bool,
}

impl ValidityFlags {
    pub fn all(&self) -> bool {
        self.eta_window_nonempty && self.b_in_window && self.eta_contraction && self.eta_below_bar
    }
}

impl RateParameters {
    pub fn new(gamma: f64, eta: f64, cutoff: f64) -> Result<Self> {
        let mut p = RateParameters {
            gamma,
            eta,
            cutoff,
            b: 0.0,
        };
        p.b = optimal_b(gamma)?;
        p.check_basic()?;
        Ok(p)
    }

    pub fn with_b(gamma: f64, eta: f64, cutoff: f64, b: f64) -> Result<Self> {
        let p = RateParameters {
            gamma,
            eta,
            cutoff,
            b,
        };
        p.check_basic()?;
        Ok(p)
    }

    fn check_basic(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "eta must be nonnegative and finite, got {}",
                self.eta
            )));
        }
        if self.cutoff.is_nan() || self.cutoff < 0.0 {
            return Err(Error::InvalidInput(format!(
                "cutoff must be in [0, inf], got {}",
                self.cutoff
            )));
        }
        if !(self.b > 0.0) {
            return Err(Error::InvalidInput(format!(
                "b must be positive, got {}",
                self.b
            )));
        }
        Ok(())
    }

    pub fn validity(&self) -> ValidityFlags {
        let g = self.gamma;
        let e = self.eta;
        let b = self.b;
        let eta_window_nonempty = e < 1.0 + g - (1.0 + g * g).sqrt();
        let lower_ok = 2.0 * g - e > 0.0 && b > 2.0 / (2.0 * g - e);
        let upper_ok = if e == 0.0 {
            true
        } else {
            b < 2.0 * (1.0 - e) / e
        };
        ValidityFlags {
            eta_window_nonempty,
            b_in_window: lower_ok && upper_ok,
            eta_contraction: e < g / (1.0 + g),
            eta_below_bar: e <= eta_bar(g),
        }
    }

    /// Name of the first violated inequality, if any.
    pub fn first_violation(&self) -> Option<String> {
        let f = self.validity();
        if !f.eta_window_nonempty {
            return Some(format!(
                "eta < 1 + gamma - sqrt(1 + gamma^2) fails: {} >= {}",
                self.eta,
                1.0 + self.gamma - (1.0 + self.gamma * self.gamma).sqrt()
            ));
        }
        if !f.b_in_window {
            return Some(format!(
                "2/(2 gamma - eta) < b < 2 (1 - eta)/eta fails for b = {}",
                self.b
            ));
        }
        if !f.eta_contraction {
            return Some(format!(
                "eta < gamma/(1 + gamma) fails: {} >= {}",
                self.eta,
                self.gamma / (1.0 + self.gamma)
            ));
        }
        if !f.eta_below_bar {
            return Some(format!(
                "eta <= 2 gamma/(3 (1 + gamma)) fails: {} > {}",
                self.eta,
                eta_bar(self.gamma)
            ));
        }
        None
    }
}

/// Intermediate constants of the contraction derivation for explicit
/// (b, gamma, eta), together with cross-check residuals.
///
/// The two epsilon residuals record both sign variants of the equation that
/// fixes epsilon; the variant with `1 + d3` is the one solved exactly by the
/// closed-form epsilon, the `1 - d3` variant is kept as a reported residual
/// rather than silently dropped.
#[derive(Debug, Clone, Copy)]
pub struct RateDerivation {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Weights of the four Young inequalities: delta1 = delta3 = delta4 = 1,
    /// delta2 = 2 + b.
    pub deltas: [f64; 4],
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub epsilon: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Residual of `(1 - eps) - (1 - d3 - 1/eps) d2^2` (as printed).
    pub eps_residual_minus: f64,
    /// Residual of `(1 - eps) - (1 + d3 - 1/eps) d2^2` (sign-fixed).
    pub eps_residual_plus: f64,
    /// `(lambda1 - lambda1_closed, lambda2 - lambda2_closed)` against the
    /// closed forms in (gamma, eta); only meaningful at b = 2/gamma.
    pub closed_form_gap: Option<(f64, f64)>,
}

/// Principal branch of the Lambert W function on [0, inf).
///
/// Halley iteration from the initial guess ln(1 + z); falls back to bisection
/// if the iteration ever leaves the bracket [0, ln(1 + z) + 1]. Relative
/// residual of `w exp(w) = z` is at most 1e-12.
pub fn lambert_w0(z: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "lambert_w0 requires z >= 0 (principal branch), got {z}"
        )));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(f64::INFINITY);
    }
    // For very large z solve in logarithmic form to avoid exp overflow in
    // the residual; ln(z) is exact here since z is finite.
    if z > 1e300 {
        return lambert_w0_from_log(z.ln());
    }
    let mut w = z.ln_1p();
    for _ in 0..64 {
        // Halley step with the common exp(w) factor divided out, so large
        // arguments do not overflow the intermediate products.
        let q = z * (-w).exp();
        let r = (w - q) / (w + 1.0);
        let step = r / (1.0 - r * (w + 2.0) / (2.0 * (w + 1.0)));
        let next = w - step;
        if !next.is_finite() || next < 0.0 {
            return lambert_w0_bisect(z);
        }
        if (next - w).abs() <= 1e-16 * next.abs().max(1e-300) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// W(exp(y)) for any real y where exp(y) may overflow: solves
/// w + ln(w) = y by Newton iteration.
pub fn lambert_w0_from_log(y: f64) -> Result<f64> {
    if y.is_nan() {
        return Err(Error::OutOfDomain("lambert_w0_from_log: NaN".into()));
    }
    if y < 30.0 {
        return lambert_w0(y.exp());
    }
    let mut w = y - y.ln();
    for _ in 0..64 {
        let f = w + w.ln() - y;
        let fp = 1.0 + 1.0 / w;
        let next = w - f / fp;
        if (next - w).abs() <= 1e-16 * next.abs() {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

fn lambert_w0_bisect(z: f64) -> Result<f64> {
    let mut lo = 0.0_f64;
    let mut hi = z.ln_1p() + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() > z {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Decay rate of the delay comparison equation
/// `d phi/dt = -a phi + b sup over [t - H, t] of phi`:
/// `lambda = a - W(b H exp(a H)) / H`.
///
/// Requires a > b >= 0. The limits are handled explicitly: H = 0 gives
/// a - b, H = inf gives 0.
pub fn halanay_rate(a: f64, b: f64, cutoff: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() || b < 0.0 || a <= b {
        return Err(Error::NoPositiveRate(format!(
            "delay comparison rate needs a > b >= 0, got a = {a}, b = {b}"
        )));
    }
    if cutoff.is_nan() || cutoff < 0.0 {
        return Err(Error::InvalidInput(format!(
            "cutoff must be in [0, inf], got {cutoff}"
        )));
    }
    if cutoff == 0.0 {
        return Ok(a - b);
    }
    if cutoff.is_infinite() {
        return Ok(0.0);
    }
    if b == 0.0 {
        return Ok(a);
    }
    // W(b H exp(a H)) computed in log form: the argument overflows f64
    // already for moderate a H.
    let log_arg = b.ln() + cutoff.ln() + a * cutoff;
    let w = lambert_w0_from_log(log_arg)?;
    Ok(a - w / cutoff)
}

/// The rate pair of the contraction estimate at the maximizing form
/// parameter b = 2/gamma:
///
/// lambda1 = gamma - (1 + 2 gamma/(4 + gamma^2)) eta
///           - gamma/(4 + gamma^2) sqrt(4 eta^2 + (4 + gamma^2)(gamma - eta)^2)
/// lambda2 = (2 + gamma)^2 / ((1 + gamma)(4 + gamma^2)) * eta/2
///
/// Valid for 0 <= eta < gamma/(1 + gamma).
pub fn lambdas(gamma: f64, eta: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "eta must be nonnegative, got {eta}"
        )));
    }
    if eta >= gamma / (1.0 + gamma) {
        return Err(Error::OutOfValidity(format!(
            "eta < gamma/(1 + gamma) required: {} >= {}",
            eta,
            gamma / (1.0 + gamma)
        )));
    }
    let g2 = gamma * gamma;
    let q = 4.0 + g2;
    let root = (4.0 * eta * eta + q * (gamma - eta) * (gamma - eta)).sqrt();
    let lambda1 = gamma - (1.0 + 2.0 * gamma / q) * eta - gamma / q * root;
    let lambda2 = (2.0 + gamma) * (2.0 + gamma) / ((1.0 + gamma) * q) * eta / 2.0;
    Ok((lambda1, lambda2))
}

/// Combined decay rate lambda = lambda1 - W(lambda2 H exp(lambda1 H))/H.
///
/// H = 0 gives lambda1 - lambda2; H = inf gives 0.
pub fn overall_rate(gamma: f64, eta: f64, cutoff: f64) -> Result<f64> {
    let (l1, l2) = lambdas(gamma, eta)?;
    if l1 <= l2 {
        return Err(Error::NoPositiveRate(format!(
            "lambda1 = {l1} <= lambda2 = {l2}; choose eta <= eta_bar(gamma)"
        )));
    }
    if eta == 0.0 {
        // lambda2 = 0: the comparison equation has no delay term.
        return Ok(match cutoff {
            c if c.is_infinite() => 0.0,
            _ => l1,
        });
    }
    halanay_rate(l1, l2, cutoff)
}

/// Largest eta for which the combined rate stays positive at every cut-off:
/// eta_bar(gamma) = 2 gamma / (3 (1 + gamma)).
pub fn eta_bar(gamma: f64) -> f64 {
    2.0 * gamma / (3.0 * (1.0 + gamma))
}

/// Decay rate of the non-interacting system (eta = 0):
/// lambda(gamma) = gamma (1 - sqrt(gamma^2 / (4 + gamma^2))).
pub fn hypocoercive_rate(gamma: f64) -> f64 {
    gamma * (1.0 - (gamma * gamma / (4.0 + gamma * gamma)).sqrt())
}

/// Friction that maximizes the hypocoercive rate: sqrt(2 (sqrt(5) - 1)).
pub fn optimal_friction() -> f64 {
    (2.0 * (5.0_f64.sqrt() - 1.0)).sqrt()
}

/// Form parameter maximizing lambda1 at eta = 0: b = 2/gamma.
pub fn optimal_b(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(2.0 / gamma)
}

/// All intermediate constants of the contraction derivation for explicit
/// (b, gamma, eta), with the epsilon-equation residuals for both printed
/// sign variants and the gap against the closed forms at b = 2/gamma.
pub fn derivation_constants(b: f64, gamma: f64, eta: f64) -> Result<RateDerivation> {
    let params = RateParameters::with_b(gamma, eta, 0.0, b)?;
    if let Some(violation) = params.first_violation() {
        return Err(Error::OutOfValidity(violation));
    }
    let a = b + gamma;
    if b * a <= 1.0 {
        return Err(Error::OutOfValidity(format!(
            "b (b + gamma) > 1 required, got {}",
            b * a
        )));
    }
    let d1 = (2.0 - (2.0 + b) * eta) / a;
    let d2 = 1.0 / (b * a - 1.0).sqrt();
    let d3 = a / d1 * (2.0 * b * gamma - 2.0 - b * eta);
    let d4 = (1.0 + b) * (1.0 + b) / ((2.0 + b) * a) * eta / 2.0;
    let d2sq = d2 * d2;
    let s = 1.0 - (1.0 + d3) * d2sq;
    let disc = (4.0 * d2sq + s * s).sqrt();
    let epsilon = 0.5 * (s + disc);
    let lambda1 = d1 / 2.0 * (1.0 + (1.0 + d3) * d2sq - disc);
    let lambda2 = d4 * (1.0 + d2sq);
    let eps_residual_minus = (1.0 - epsilon) - (1.0 - d3 - 1.0 / epsilon) * d2sq;
    let eps_residual_plus = (1.0 - epsilon) - (1.0 + d3 - 1.0 / epsilon) * d2sq;
    let closed_form_gap = if eta < gamma / (1.0 + gamma) {
        let (l1c, l2c) = lambdas(gamma, eta)?;
        Some((lambda1 - l1c, lambda2 - l2c))
    } else {
        None
    };
    Ok(RateDerivation {
        a,
        b,
        gamma,
        eta,
        deltas: [1.0, 2.0 + b, 1.0, 1.0],
        d1,
        d2,
        d3,
        d4,
        epsilon,
        lambda1,
        lambda2,
        eps_residual_minus,
        eps_residual_plus,
        closed_form_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle for W(z): bisection on w exp(w) = z.
    fn lambert_oracle(z: f64) -> f64 {
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        while hi * hi.exp() < z {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > z {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Independent oracle for the delay comparison rate: bisection on the
    /// strictly increasing f(l) = -a + l + b exp(l H) over l in (0, a].
    fn halanay_oracle(a: f64, b: f64, h: f64) -> f64 {
        let f = |l: f64| -a + l + b * (l * h).exp();
        let mut lo = 0.0;
        let mut hi = a;
        assert!(f(lo) < 0.0 && f(hi) > 0.0, "oracle bracket must hold");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_w0_at_zero_and_e() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        let w = lambert_w0(std::f64::consts::E).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lambert_w0_at_one_matches_oracle() {
        let w = lambert_w0(1.0).unwrap();
        assert!((w - 0.5671432904).abs() < 1e-9);
        assert!((w - lambert_oracle(1.0)).abs() < 1e-12);
    }

    #[test]
    fn lambert_w0_rejects_negative() {
        assert!(matches!(lambert_w0(-0.1), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn lambert_w0_residual_over_range() {
        // |w exp(w) - z| <= 1e-12 max(1, z) for z in [0, 1e6].
        let mut z = 1e-8;
        while z < 1e6 {
            let w = lambert_w0(z).unwrap();
            let residual = (w * w.exp() - z).abs();
            assert!(
                residual <= 1e-12 * z.max(1.0),
                "z = {z}, residual = {residual}"
            );
            z *= 1.37;
        }
    }

    #[test]
    fn lambert_w0_log_form_agrees_with_direct() {
        for y in [1.0, 5.0, 29.0, 31.0, 100.0, 600.0] {
            let via_log = lambert_w0_from_log(y).unwrap();
            if y < 700.0 {
                let direct = lambert_w0(y.exp()).unwrap();
                assert!(
                    (via_log - direct).abs() <= 1e-12 * direct.max(1.0),
                    "y = {y}: {via_log} vs {direct}"
                );
            }
            // w + ln w = y
            let res = via_log + via_log.ln() - y;
            assert!(res.abs() <= 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn halanay_rate_b_zero_gives_a() {
        assert!((halanay_rate(1.0, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn halanay_rate_small_cutoff_limit() {
        // H -> 0 gives a - b; checked at H = 1e-8.
        let lam = halanay_rate(2.0, 1.0, 1e-8).unwrap();
        assert!((lam - 1.0).abs() < 1e-6);
        assert_eq!(halanay_rate(2.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn halanay_rate_unit_cutoff_matches_characteristic_equation() {
        let lam = halanay_rate(2.0, 1.0, 1.0).unwrap();
        assert!((lam - 0.4429).abs() < 1e-4);
        assert!((-2.0 + lam + lam.exp()).abs() <= 1e-10);
        assert!((lam - halanay_oracle(2.0, 1.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn halanay_rate_rejects_a_le_b() {
        assert!(matches!(
            halanay_rate(1.0, 1.0, 1.0),
            Err(Error::NoPositiveRate(_))
        ));
        assert!(matches!(
            halanay_rate(0.5, 1.0, 1.0),
            Err(Error::NoPositiveRate(_))
        ));
    }

    #[test]
    fn halanay_rate_infinite_cutoff_is_zero() {
        assert_eq!(halanay_rate(2.0, 1.0, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn halanay_rate_random_parameters_satisfy_characteristic_equation() {
        let mut rng = crate::rng::CounterRng::substream(2024, 17);
        for _ in 0..50 {
            let b = rng.uniform_in(0.0, 3.0);
            let a = b + rng.uniform_in(0.05, 3.0);
            let h = rng.uniform_in(0.01, 20.0);
            let lam = halanay_rate(a, b, h).unwrap();
            assert!(lam > 0.0 && lam <= a, "a={a} b={b} h={h} lam={lam}");
            let res = -a + lam + b * (lam * h).exp();
            assert!(res.abs() <= 1e-10, "a={a} b={b} h={h} residual={res}");
        }
    }

    #[test]
    fn lambdas_at_eta_zero_match_hypocoercive_closed_form() {
        let (l1, l2) = lambdas(2.0, 0.0).unwrap();
        assert!((l1 - (2.0 - 2.0_f64.sqrt())).abs() < 1e-14);
        assert_eq!(l2, 0.0);
        for gamma in [0.1, 0.5, 1.0, 1.5723, 3.0, 10.0, 50.0] {
            let (l1, _) = lambdas(gamma, 0.0).unwrap();
            assert!(
                (l1 - hypocoercive_rate(gamma)).abs() <= 1e-12,
                "gamma = {gamma}"
            );
        }
    }

    #[test]
    fn lambdas_hand_evaluated_point() {
        // gamma = 1, eta = 1/4: the square root is sqrt(0.25 + 2.8125) = 1.75.
        let (l1, l2) = lambdas(1.0, 0.25).unwrap();
        assert!((l1 - 0.30).abs() < 1e-14, "lambda1 = {l1}");
        assert!((l2 - 0.1125).abs() < 1e-14, "lambda2 = {l2}");
    }

    #[test]
    fn lambdas_rejects_eta_at_boundary() {
        assert!(matches!(
            lambdas(1.0, 0.5),
            Err(Error::OutOfValidity(_))
        ));
    }

    #[test]
    fn overall_rate_limits_and_interior_point() {
        assert!((overall_rate(1.0, 0.25, 0.0).unwrap() - 0.1875).abs() < 1e-15);
        assert_eq!(overall_rate(1.0, 0.25, f64::INFINITY).unwrap(), 0.0);
        // Interior point cross-checked through the Lambert oracle:
        // lambda = 0.3 - W(0.1125 e^{0.3}).
        let expected = 0.3 - lambert_oracle(0.1125 * 0.3_f64.exp());
        let lam = overall_rate(1.0, 0.25, 1.0).unwrap();
        assert!((lam - expected).abs() < 1e-12);
        assert!((lam - 0.167).abs() < 1e-3);
    }

    #[test]
    fn overall_rate_monotone_in_cutoff_and_eta() {
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let h = 10f64.powf(-3.0 + 6.0 * k as f64 / 199.0);
            let lam = overall_rate(1.0, 0.25, h).unwrap();
            assert!(lam <= prev + 1e-15, "h = {h}");
            prev = lam;
        }
        let mut prev = f64::INFINITY;
        let bar = eta_bar(1.0);
        for k in 0..=50 {
            let eta = bar * k as f64 / 50.0;
            let lam = overall_rate(1.0, eta, 0.5).unwrap();
            assert!(lam <= prev + 1e-15, "eta = {eta}");
            prev = lam;
        }
    }

    #[test]
    fn eta_bar_values_and_dominance() {
        assert!((eta_bar(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((eta_bar(2.0) - 4.0 / 9.0).abs() < 1e-15);
        assert!(eta_bar(1e-9) < 1e-9);
        for k in 0..200 {
            let gamma = 10f64.powf(-2.0 + 4.0 * k as f64 / 199.0);
            let bar = eta_bar(gamma);
            assert!(bar < gamma / (1.0 + gamma));
            assert!(bar < 1.0 + gamma - (1.0 + gamma * gamma).sqrt(), "gamma = {gamma}");
        }
    }

    #[test]
    fn lambda_ordering_inside_validity_region() {
        for k in 0..100 {
            let gamma = 0.05 + (50.0 - 0.05) * k as f64 / 99.0;
            for frac in [0.01, 0.25, 0.5, 0.75, 1.0] {
                let eta = eta_bar(gamma) * frac;
                let (l1, l2) = lambdas(gamma, eta).unwrap();
                assert!(l1 > l2, "gamma = {gamma}, eta = {eta}: {l1} vs {l2}");
                assert!(l2 > 0.0);
            }
        }
    }

    #[test]
    fn hypocoercive_rate_maximizer_location() {
        // Golden-section search oracle over gamma in [0.1, 5].
        let f = hypocoercive_rate;
        let (mut a, mut b) = (0.1_f64, 5.0_f64);
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if f(x1) < f(x2) {
                a = x1;
            } else {
                b = x2;
            }
        }
        let gamma_star = 0.5 * (a + b);
        assert!(
            (gamma_star - optimal_friction()).abs() < 1e-6,
            "searched {gamma_star} vs closed form {}",
            optimal_friction()
        );
        assert!((optimal_friction() - 1.5723).abs() < 1e-4);
    }

    #[test]
    fn optimal_b_values_and_grid_search() {
        assert_eq!(optimal_b(1.0).unwrap(), 2.0);
        assert_eq!(optimal_b(2.0).unwrap(), 1.0);
        // Grid + local refinement oracle: lambda1 over b at gamma = 1, eta = 0.
        let lambda1_of_b = |b: f64| derivation_constants(b, 1.0, 0.0).unwrap().lambda1;
        let mut best_b = 0.0;
        let mut best = f64::NEG_INFINITY;
        let mut b = 1.2;
        while b <= 5.0 {
            let v = lambda1_of_b(b);
            if v > best {
                best = v;
                best_b = b;
            }
            b += 1e-3;
        }
        assert!((best_b - 2.0).abs() < 1e-3, "grid maximizer at {best_b}");
    }

    #[test]
    fn derivation_constants_at_reference_point() {
        let d = derivation_constants(2.0, 1.0, 0.0).unwrap();
        assert!((d.d1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.d2 - 1.0 / 5.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.d4, 0.0);
        assert_eq!(d.lambda2, 0.0);
        // Printed compact form at eta = 0: d3 = (b + gamma)^2 (b gamma - 1).
        assert!((d.d3 - 9.0).abs() < 1e-12);
        // lambda1 = d1 (1 - epsilon) by construction of epsilon.
        assert!((d.lambda1 - d.d1 * (1.0 - d.epsilon)).abs() < 1e-14);
    }

    #[test]
    fn derivation_matches_closed_forms_at_optimal_b() {
        for (gamma, frac) in [(0.5, 0.3), (1.0, 0.0), (1.0, 0.75), (2.0, 0.5), (5.0, 1.0)] {
            let eta = eta_bar(gamma) * frac;
            let b = optimal_b(gamma).unwrap();
            let d = derivation_constants(b, gamma, eta).unwrap();
            let (gap1, gap2) = d.closed_form_gap.unwrap();
            assert!(
                gap1.abs() <= 1e-12 * d.lambda1.max(1.0),
                "gamma={gamma} eta={eta} gap1={gap1}"
            );
            assert!(
                gap2.abs() <= 1e-12 * d.lambda2.max(1.0),
                "gamma={gamma} eta={eta} gap2={gap2}"
            );
        }
    }

    #[test]
    fn epsilon_equation_residuals_expose_the_sign_variant() {
        let d = derivation_constants(2.0, 1.0, 0.2).unwrap();
        // The closed-form epsilon solves the `1 + d3` variant exactly.
        assert!(d.eps_residual_plus.abs() < 1e-12, "{}", d.eps_residual_plus);
        // The `1 - d3` variant as printed does not vanish for d3 > 0.
        assert!(d.eps_residual_minus.abs() > 1e-3);
        assert!(
            (d.eps_residual_minus - 2.0 * d.d3 * d.d2 * d.d2).abs() < 1e-12,
            "residual gap must be exactly 2 d3 d2^2"
        );
    }

    #[test]
    fn derivation_positivity_inside_validity() {
        for (gamma, frac) in [(0.5, 0.5), (1.0, 0.9), (2.0, 0.2), (10.0, 0.99)] {
            let eta = eta_bar(gamma) * frac;
            let b = optimal_b(gamma).unwrap();
            let d = derivation_constants(b, gamma, eta).unwrap();
            assert!(d.d1 > 0.0 && d.d2 > 0.0 && d.d3 > 0.0 && d.epsilon > 0.0);
            assert!(d.d4 >= 0.0);
            assert!(d.lambda1 > d.lambda2 && d.lambda2 >= 0.0);
        }
    }

    #[test]
    fn derivation_rejects_invalid_eta_naming_inequality() {
        let err = derivation_constants(2.0, 1.0, 0.9).unwrap_err();
        match err {
            Error::OutOfValidity(msg) => assert!(msg.contains("eta")),
            other => panic!("expected OutOfValidity, got {other:?}"),
        }
    }

    #[test]
    fn rate_parameters_default_b_and_flags() {
        let p = RateParameters::new(1.0, 0.25, 1.0).unwrap();
        assert_eq!(p.b, 2.0);
        assert!(p.validity().all());
        let p = RateParameters::with_b(1.0, 0.25, 1.0, 100.0).unwrap();
        assert!(!p.validity().b_in_window);
        assert!(p.first_violation().unwrap().contains("b"));
    }
}
