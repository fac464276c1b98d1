//! Model definitions: the confining drift A(x) = -alpha x + g(x), the pair
//! interaction B(x, xhat), and the potential-derived canonical instance
//! A = -grad(Phi), B(x, xhat) = -grad(U)(x - xhat).
//!
//! Lipschitz constants are declared by the model author and audited by
//! sampling; gradients of potentials are supplied analytically and audited
//! against central finite differences. The contraction analysis is
//! sign-sensitive, so both audits are part of the public surface.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type PairVectorFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Lipschitz perturbation g of the linear confinement.
#[derive(Clone)]
pub enum Perturbation {
    None,
    Custom { f: VectorFn, lipschitz: f64 },
}

/// Pair interaction B(x, xhat) with its declared two-point Lipschitz
/// constant c_B.
#[derive(Clone)]
pub enum Interaction {
    None,
    /// B(x, xhat) = -coeff (x - xhat), the gradient force of the quadratic
    /// interaction potential (coeff/2)|x|^2. The simulator exploits this
    /// form: the ensemble average collapses to the spatial mean.
    Linear { coeff: f64 },
    Custom { f: PairVectorFn, lipschitz: f64 },
}

/// The drift pair (A, B) with structural constants; the single source of
/// model truth for the simulator, the rate formulas, and the stationary
/// solver. Immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct DriftModel {
    dimension: usize,
    confinement_strength: f64,
    friction: f64,
    noise: f64,
    cutoff: f64,
    perturbation: Perturbation,
    interaction: Interaction,
}

impl fmt::Debug for DriftModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftModel")
            .field("dimension", &self.dimension)
            .field("confinement_strength", &self.confinement_strength)
            .field("friction", &self.friction)
            .field("noise", &self.noise)
            .field("cutoff", &self.cutoff)
            .field("c_g", &self.perturbation_lipschitz())
            .field("c_b", &self.interaction_lipschitz())
            .finish()
    }
}

impl DriftModel {
    pub fn new(
        dimension: usize,
        confinement_strength: f64,
        friction: f64,
        noise: f64,
        cutoff: f64,
        perturbation: Perturbation,
        interaction: Interaction,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        if !(confinement_strength > 0.0) || !confinement_strength.is_finite() {
            return Err(Error::InvalidInput(format!(
                "confinement strength alpha must be positive, got {confinement_strength}"
            )));
        }
        // The decay analysis needs gamma > 0 (enforced by the rate layer);
        // the integrator itself is well defined for gamma = 0, which the
        // frictionless oscillator tests rely on.
        if !(friction >= 0.0) || !friction.is_finite() {
            return Err(Error::InvalidInput(format!(
                "friction gamma must be nonnegative, got {friction}"
            )));
        }
        if !(noise >= 0.0) || !noise.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise sigma must be nonnegative, got {noise}"
            )));
        }
        if cutoff.is_nan() || cutoff < 0.0 {
            return Err(Error::InvalidInput(format!(
                "cutoff H must be in [0, inf], got {cutoff}"
            )));
        }
        let c_g = match &perturbation {
            Perturbation::None => 0.0,
            Perturbation::Custom { lipschitz, .. } => *lipschitz,
        };
        let c_b = match &interaction {
            Interaction::None => 0.0,
            Interaction::Linear { coeff } => coeff.abs(),
            Interaction::Custom { lipschitz, .. } => *lipschitz,
        };
        if c_g < 0.0 || !c_g.is_finite() || c_b < 0.0 || !c_b.is_finite() {
            return Err(Error::InvalidInput(
                "declared Lipschitz constants must be finite and nonnegative".into(),
            ));
        }
        Ok(DriftModel {
            dimension,
            confinement_strength,
            friction,
            noise,
            cutoff,
            perturbation,
            interaction,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn confinement_strength(&self) -> f64 {
        self.confinement_strength
    }
    pub fn friction(&self) -> f64 {
        self.friction
    }
    pub fn noise(&self) -> f64 {
        self.noise
    }
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
    pub fn interaction(&self) -> &Interaction {
        &self.interaction
    }

    pub fn perturbation_lipschitz(&self) -> f64 {
        match &self.perturbation {
            Perturbation::None => 0.0,
            Perturbation::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn interaction_lipschitz(&self) -> f64 {
        match &self.interaction {
            Interaction::None => 0.0,
            Interaction::Linear { coeff } => coeff.abs(),
            Interaction::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// eta = c_g + 2 c_B, the perturbation size entering the rate formulas.
    pub fn eta(&self) -> f64 {
        self.perturbation_lipschitz() + 2.0 * self.interaction_lipschitz()
    }

    fn check_point(&self, x: &[f64], name: &str) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::InvalidInput(format!(
                "{name} has dimension {}, model has {}",
                x.len(),
                self.dimension
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name} has non-finite components"
            )));
        }
        Ok(())
    }

    /// A(x) = -alpha x + g(x), written into `out`.
    pub fn eval_a_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.perturbation {
            Perturbation::None => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -self.confinement_strength * xi;
                }
            }
            Perturbation::Custom { f, .. } => {
                f(x, out);
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o -= self.confinement_strength * xi;
                }
            }
        }
    }

    pub fn eval_a(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, "x")?;
        let mut out = vec![0.0; self.dimension];
        self.eval_a_into(x, &mut out);
        Ok(out)
    }

    /// B(x, xhat), written into `out`.
    pub fn eval_b_into(&self, x: &[f64], xhat: &[f64], out: &mut [f64]) {
        match &self.interaction {
            Interaction::None => out.fill(0.0),
            Interaction::Linear { coeff } => {
                for ((o, &xi), &xh) in out.iter_mut().zip(x).zip(xhat) {
                    *o = -coeff * (xi - xh);
                }
            }
            Interaction::Custom { f, .. } => f(x, xhat, out),
        }
    }

    pub fn eval_b(&self, x: &[f64], xhat: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, "x")?;
        self.check_point(xhat, "xhat")?;
        let mut out = vec![0.0; self.dimension];
        self.eval_b_into(x, xhat, &mut out);
        Ok(out)
    }

    /// Equivalent model in rescaled time tau = sqrt(alpha) t with unit
    /// confinement strength. The map is
    ///
    ///   alpha' = 1,  gamma' = gamma/sqrt(alpha),  sigma' = sigma/alpha^(3/2),
    ///   H' = H sqrt(alpha),  g' = g/alpha,  B' = B/alpha,
    ///
    /// so that A'(x) = A(x)/alpha and the stationary state is preserved:
    /// the velocity marginal variance scales as theta'^2 = theta^2/alpha
    /// (velocities are rescaled by 1/sqrt(alpha)) and the spatial density is
    /// unchanged since Phi'/theta'^2 = Phi/theta^2.
    pub fn rescale_time(&self) -> DriftModel {
        let alpha = self.confinement_strength;
        if alpha == 1.0 {
            return self.clone();
        }
        let root = alpha.sqrt();
        let perturbation = match &self.perturbation {
            Perturbation::None => Perturbation::None,
            Perturbation::Custom { f, lipschitz } => {
                let inner = f.clone();
                Perturbation::Custom {
                    f: Arc::new(move |x: &[f64], out: &mut [f64]| {
                        inner(x, out);
                        for o in out.iter_mut() {
                            *o /= alpha;
                        }
                    }),
                    lipschitz: lipschitz / alpha,
                }
            }
        };
        let interaction = match &self.interaction {
            Interaction::None => Interaction::None,
            Interaction::Linear { coeff } => Interaction::Linear {
                coeff: coeff / alpha,
            },
            Interaction::Custom { f, lipschitz } => {
                let inner = f.clone();
                Interaction::Custom {
                    f: Arc::new(move |x: &[f64], xhat: &[f64], out: &mut [f64]| {
                        inner(x, xhat, out);
                        for o in out.iter_mut() {
                            *o /= alpha;
                        }
                    }),
                    lipschitz: lipschitz / alpha,
                }
            }
        };
        DriftModel {
            dimension: self.dimension,
            confinement_strength: 1.0,
            friction: self.friction / root,
            noise: self.noise / (alpha * root),
            cutoff: self.cutoff * root,
            perturbation,
            interaction,
        }
    }

    /// Sampled two-point audit of the declared perturbation constant:
    /// max quotient |g(x) - g(y)| / |x - y| over random pairs in the box
    /// [-half_width, half_width]^d. Errors if the declared constant is
    /// exceeded by more than 1e-9 relative.
    pub fn audit_perturbation_lipschitz(
        &self,
        half_width: f64,
        pairs: usize,
        seed: u64,
    ) -> Result<f64> {
        let g = match &self.perturbation {
            Perturbation::None => return Ok(0.0),
            Perturbation::Custom { f, .. } => f.clone(),
        };
        let declared = self.perturbation_lipschitz();
        let d = self.dimension;
        let mut rng = CounterRng::substream(seed, 0xa0d1);
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
        let mut max_quotient: f64 = 0.0;
        for _ in 0..pairs {
            for i in 0..d {
                x[i] = rng.uniform_in(-half_width, half_width);
                y[i] = rng.uniform_in(-half_width, half_width);
            }
            let dist = norm_diff(&x, &y);
            if dist < 1e-12 {
                continue;
            }
            g(&x, &mut gx);
            g(&y, &mut gy);
            let quotient = norm_diff(&gx, &gy) / dist;
            max_quotient = max_quotient.max(quotient);
        }
        if max_quotient > declared * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "declared c_g = {declared} exceeded: sampled quotient {max_quotient}"
            )));
        }
        Ok(max_quotient)
    }

    /// Sampled audit of the declared interaction constant via
    /// |B(x,xh) - B(y,xh)| + |B(x,xh) - B(x,yh)| <= c_B (|x-y| + |xh-yh|).
    pub fn audit_interaction_lipschitz(
        &self,
        half_width: f64,
        pairs: usize,
        seed: u64,
    ) -> Result<f64> {
        if matches!(self.interaction, Interaction::None) {
            return Ok(0.0);
        }
        let declared = self.interaction_lipschitz();
        let d = self.dimension;
        let mut rng = CounterRng::substream(seed, 0xb0d2);
        let (mut x, mut y, mut xh, mut yh) =
            (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let (mut b0, mut b1, mut b2) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut max_quotient: f64 = 0.0;
        for _ in 0..pairs {
            for i in 0..d {
                x[i] = rng.uniform_in(-half_width, half_width);
                y[i] = rng.uniform_in(-half_width, half_width);
                xh[i] = rng.uniform_in(-half_width, half_width);
                yh[i] = rng.uniform_in(-half_width, half_width);
            }
            let denom = norm_diff(&x, &y) + norm_diff(&xh, &yh);
            if denom < 1e-12 {
                continue;
            }
            self.eval_b_into(&x, &xh, &mut b0);
            self.eval_b_into(&y, &xh, &mut b1);
            self.eval_b_into(&x, &yh, &mut b2);
            let quotient = (norm_diff(&b0, &b1) + norm_diff(&b0, &b2)) / denom;
            max_quotient = max_quotient.max(quotient);
        }
        if max_quotient > declared * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "declared c_B = {declared} exceeded: sampled quotient {max_quotient}"
            )));
        }
        Ok(max_quotient)
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// A scalar potential with its analytic gradient.
#[derive(Clone)]
pub struct ScalarPotential {
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

impl ScalarPotential {
    pub fn quadratic(strength: f64) -> Self {
        ScalarPotential {
            value: Arc::new(move |x: &[f64]| {
                0.5 * strength * x.iter().map(|v| v * v).sum::<f64>()
            }),
            gradient: Arc::new(move |x: &[f64], out: &mut [f64]| {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = strength * xi;
                }
            }),
        }
    }

    /// (alpha/2)|x|^2 + kappa cos(x_1)
    pub fn quadratic_cosine(alpha: f64, kappa: f64) -> Self {
        ScalarPotential {
            value: Arc::new(move |x: &[f64]| {
                0.5 * alpha * x.iter().map(|v| v * v).sum::<f64>() + kappa * x[0].cos()
            }),
            gradient: Arc::new(move |x: &[f64], out: &mut [f64]| {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = alpha * xi;
                }
                out[0] -= kappa * x[0].sin();
            }),
        }
    }

    /// (alpha/2)|x|^2 + (beta/4)|x|^4
    pub fn quartic(alpha: f64, beta: f64) -> Self {
        ScalarPotential {
            value: Arc::new(move |x: &[f64]| {
                let r2 = x.iter().map(|v| v * v).sum::<f64>();
                0.5 * alpha * r2 + 0.25 * beta * r2 * r2
            }),
            gradient: Arc::new(move |x: &[f64], out: &mut [f64]| {
                let r2 = x.iter().map(|v| v * v).sum::<f64>();
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = (alpha + beta * r2) * xi;
                }
            }),
        }
    }

    /// kappa exp(-|x|^2 / 2)
    pub fn gaussian_bump(kappa: f64) -> Self {
        ScalarPotential {
            value: Arc::new(move |x: &[f64]| {
                let r2 = x.iter().map(|v| v * v).sum::<f64>();
                kappa * (-0.5 * r2).exp()
            }),
            gradient: Arc::new(move |x: &[f64], out: &mut [f64]| {
                let r2 = x.iter().map(|v| v * v).sum::<f64>();
                let w = kappa * (-0.5 * r2).exp();
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -w * xi;
                }
            }),
        }
    }
}

/// A confinement/interaction potential pair that induces a DriftModel with
/// A = -grad(Phi) and B(x, xhat) = -grad(U)(x - xhat).
#[derive(Clone)]
pub struct PotentialInstance {
    pub dimension: usize,
    pub confinement: ScalarPotential,
    /// None means U = 0.
    pub interaction: Option<ScalarPotential>,
    pub interaction_even: bool,
    /// Coefficient alpha of the linear part of -grad(Phi).
    pub confinement_strength: f64,
    /// Declared Lipschitz constant of g = alpha x - grad(Phi).
    pub perturbation_lipschitz: f64,
    /// Declared two-point Lipschitz constant of B.
    pub interaction_lipschitz: f64,
}

impl PotentialInstance {
    /// The induced drift model with the given dynamics parameters.
    pub fn induce(&self, friction: f64, noise: f64, cutoff: f64) -> Result<DriftModel> {
        let alpha = self.confinement_strength;
        let perturbation = if self.perturbation_lipschitz == 0.0 {
            Perturbation::None
        } else {
            let grad = self.confinement.gradient.clone();
            Perturbation::Custom {
                f: Arc::new(move |x: &[f64], out: &mut [f64]| {
                    grad(x, out);
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = alpha * xi - *o;
                    }
                }),
                lipschitz: self.perturbation_lipschitz,
            }
        };
        let interaction = match &self.interaction {
            None => Interaction::None,
            Some(u) => {
                let grad = u.gradient.clone();
                Interaction::Custom {
                    f: Arc::new(move |x: &[f64], xhat: &[f64], out: &mut [f64]| {
                        let diff: Vec<f64> = x.iter().zip(xhat).map(|(&a, &b)| a - b).collect();
                        grad(&diff, out);
                        for o in out.iter_mut() {
                            *o = -*o;
                        }
                    }),
                    lipschitz: self.interaction_lipschitz,
                }
            }
        };
        DriftModel::new(
            self.dimension,
            alpha,
            friction,
            noise,
            cutoff,
            perturbation,
            interaction,
        )
    }

    /// Central finite-difference audit of both analytic gradients (step
    /// 1e-5, tolerance 1e-6 relative) at random points in the box. Returns
    /// the worst relative deviation.
    pub fn audit_gradients(&self, half_width: f64, samples: usize, seed: u64) -> Result<f64> {
        let mut worst = 0.0_f64;
        worst = worst.max(audit_gradient_of(
            &self.confinement,
            self.dimension,
            half_width,
            samples,
            seed,
        )?);
        if let Some(u) = &self.interaction {
            worst = worst.max(audit_gradient_of(u, self.dimension, half_width, samples, seed ^ 1)?);
        }
        Ok(worst)
    }
}

fn audit_gradient_of(
    pot: &ScalarPotential,
    dimension: usize,
    half_width: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-6;
    let mut rng = CounterRng::substream(seed, 0x9fad);
    let mut x = vec![0.0; dimension];
    let mut grad = vec![0.0; dimension];
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        for xi in x.iter_mut() {
            *xi = rng.uniform_in(-half_width, half_width);
        }
        (pot.gradient)(&x, &mut grad);
        let scale = grad.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
        for i in 0..dimension {
            let keep = x[i];
            x[i] = keep + STEP;
            let plus = (pot.value)(&x);
            x[i] = keep - STEP;
            let minus = (pot.value)(&x);
            x[i] = keep;
            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = (numeric - grad[i]).abs() / scale;
            worst = worst.max(rel);
            if rel > TOL {
                return Err(Error::InvalidInput(format!(
                    "analytic gradient disagrees with finite differences: component {i}, \
                     relative deviation {rel:.3e}"
                )));
            }
        }
    }
    Ok(worst)
}

/// Serializable model description: the `model.*` keys of the experiment
/// config. Custom drifts are available only through code.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Spatial dimension.
    pub d: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Confinement potential: "quadratic" | "quadratic+cosine" | "quartic".
    pub potential: String,
    /// Amplitude of the cosine ripple or the quartic coefficient.
    pub kappa: f64,
    /// Half-width of the box on which declared constants are audited
    /// (the quartic drift is only Lipschitz on a bounded box).
    pub box_radius: f64,
    /// Interaction potential: "none" | "quadratic" | "gaussian".
    pub interaction: String,
    /// Strength of the interaction potential.
    pub interaction_strength: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 1,
            alpha: 1.0,
            gamma: 1.0,
            sigma: 1.0,
            potential: "quadratic".into(),
            kappa: 0.0,
            box_radius: 6.0,
            interaction: "none".into(),
            interaction_strength: 0.0,
        }
    }
}

impl ModelConfig {
    /// The potential pair named by the config.
    pub fn build_potentials(&self) -> Result<PotentialInstance> {
        let (confinement, c_g) = match self.potential.as_str() {
            "quadratic" => (ScalarPotential::quadratic(self.alpha), 0.0),
            "quadratic+cosine" => (
                ScalarPotential::quadratic_cosine(self.alpha, self.kappa),
                self.kappa.abs(),
            ),
            "quartic" => {
                let radius = self.box_radius * (self.d as f64).sqrt();
                (
                    ScalarPotential::quartic(self.alpha, self.kappa),
                    3.0 * self.kappa.abs() * radius * radius,
                )
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown potential {other:?}; expected quadratic, quadratic+cosine or quartic"
                )))
            }
        };
        let (interaction, c_b, even) = match self.interaction.as_str() {
            "none" => (None, 0.0, true),
            "quadratic" => (
                Some(ScalarPotential::quadratic(self.interaction_strength)),
                self.interaction_strength.abs(),
                true,
            ),
            "gaussian" => (
                Some(ScalarPotential::gaussian_bump(self.interaction_strength)),
                self.interaction_strength.abs(),
                true,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown interaction {other:?}; expected none, quadratic or gaussian"
                )))
            }
        };
        Ok(PotentialInstance {
            dimension: self.d,
            confinement,
            interaction,
            interaction_even: even,
            confinement_strength: self.alpha,
            perturbation_lipschitz: c_g,
            interaction_lipschitz: c_b,
        })
    }

    /// The drift model named by the config with delay cut-off `cutoff`.
    /// Quadratic interactions take the linear fast path.
    pub fn build(&self, cutoff: f64) -> Result<DriftModel> {
        let instance = self.build_potentials()?;
        let model = instance.induce(self.gamma, self.sigma, cutoff)?;
        if self.interaction == "quadratic" {
            // Re-tag the linear kernel so the simulator can collapse the
            // ensemble average to the spatial mean.
            return DriftModel::new(
                model.dimension(),
                model.confinement_strength(),
                model.friction(),
                model.noise(),
                model.cutoff(),
                model.perturbation.clone(),
                Interaction::Linear {
                    coeff: self.interaction_strength,
                },
            );
        }
        Ok(model)
    }
}
