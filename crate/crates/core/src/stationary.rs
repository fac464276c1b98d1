//! The stationary state: a Maxwellian velocity marginal with variance
//! theta^2 = sigma/gamma, and a spatial density solving the fixed-point
//! equation
//!
//!   rho = exp(-(Phi + U * rho)/theta^2) / Z,
//!
//! where * is convolution and Z normalizes the mass to one. The solver is a
//! damped fixed-point iteration on a uniform grid with direct-summation
//! convolution (O(M^2) in the cell count, grids capped accordingly).

use crate::error::{Error, Result};
use crate::model::DriftModel;
use crate::rng::CounterRng;
use crate::simulator::{run, EnsembleState, SimConfig};

/// Maximum grid cells per axis accepted by the solver.
pub const GRID_CAP: usize = 256;

/// Uniform grid over the box [-L, L]^dx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dimension: usize,
    pub half_width: f64,
    pub cells: usize,
}

impl GridSpec {
    pub fn new(dimension: usize, half_width: f64, cells: usize) -> Result<Self> {
        if dimension == 0 || dimension > 2 {
            return Err(Error::InvalidInput(
                "grid solver supports dimension 1 or 2".into(),
            ));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if cells < 2 || cells > GRID_CAP {
            return Err(Error::InvalidInput(format!(
                "cells per axis must lie in [2, {GRID_CAP}], got {cells}"
            )));
        }
        Ok(GridSpec {
            dimension,
            half_width,
            cells,
        })
    }

    pub fn delta(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn cell_count(&self) -> usize {
        self.cells.pow(self.dimension as u32)
    }

    /// Quadrature weight of one cell.
    pub fn weight(&self) -> f64 {
        self.delta().powi(self.dimension as i32)
    }

    /// Center of cell `idx` (row-major for dimension 2).
    pub fn center(&self, idx: usize, out: &mut [f64]) {
        let delta = self.delta();
        let m = self.cells;
        match self.dimension {
            1 => out[0] = -self.half_width + (idx as f64 + 0.5) * delta,
            2 => {
                let i = idx / m;
                let j = idx % m;
                out[0] = -self.half_width + (i as f64 + 0.5) * delta;
                out[1] = -self.half_width + (j as f64 + 0.5) * delta;
            }
            _ => unreachable!(),
        }
    }
}

/// Nonnegative density values on a grid, normalized to unit mass.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(spec: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::InvalidInput(format!(
                "grid needs {} values, got {}",
                spec.cell_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = values.iter().sum::<f64>() * spec.weight();
        if mass <= 0.0 {
            return Err(Error::InvalidInput("density has zero mass".into()));
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(DensityGrid { spec, values })
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.weight()
    }

    /// Grid integral of f against the density.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut x = [0.0; 2];
        let d = self.spec.dimension;
        let w = self.spec.weight();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &rho)| {
                self.spec.center(i, &mut x[..d]);
                f(&x[..d]) * rho * w
            })
            .sum()
    }

    /// Draw a position by inverse transform over the cells (uniform within
    /// the selected cell).
    pub fn sample_position(&self, rng: &mut CounterRng, out: &mut [f64]) {
        let w = self.spec.weight();
        let total: f64 = self.values.iter().sum::<f64>() * w;
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut chosen = self.values.len() - 1;
        for (i, &v) in self.values.iter().enumerate() {
            acc += v * w;
            if acc >= target {
                chosen = i;
                break;
            }
        }
        let d = self.spec.dimension;
        self.spec.center(chosen, out);
        let delta = self.spec.delta();
        for o in out.iter_mut().take(d) {
            *o += (rng.uniform() - 0.5) * delta;
        }
    }
}

/// Maxwellian density (2 pi theta^2)^(-d/2) exp(-|v|^2/(2 theta^2)).
pub fn maxwellian(v: &[f64], theta2: f64) -> Result<f64> {
    if !(theta2 > 0.0) || !theta2.is_finite() {
        return Err(Error::InvalidInput(format!(
            "theta^2 must be positive, got {theta2}"
        )));
    }
    let d = v.len() as f64;
    let norm = (2.0 * std::f64::consts::PI * theta2).powf(-0.5 * d);
    let r2: f64 = v.iter().map(|u| u * u).sum();
    Ok(norm * (-0.5 * r2 / theta2).exp())
}

/// Converged output of the spatial fixed point.
#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub rho: DensityGrid,
    pub theta2: f64,
    /// sup |rho - T(rho)| at the accepted iterate.
    pub residual: f64,
    pub free_energy: f64,
    pub iterations: usize,
}

/// Precomputed interaction kernel on center differences (Toeplitz in the
/// cell index).
struct ConvKernel {
    values: Vec<f64>,
    m: usize,
    dimension: usize,
}

impl ConvKernel {
    fn build(spec: &GridSpec, u: &dyn Fn(&[f64]) -> f64) -> ConvKernel {
        let m = spec.cells;
        let delta = spec.delta();
        match spec.dimension {
            1 => {
                let mut values = vec![0.0; 2 * m - 1];
                for (k, value) in values.iter_mut().enumerate() {
                    let di = k as isize - (m as isize - 1);
                    *value = u(&[di as f64 * delta]);
                }
                ConvKernel {
                    values,
                    m,
                    dimension: 1,
                }
            }
            2 => {
                let side = 2 * m - 1;
                let mut values = vec![0.0; side * side];
                for a in 0..side {
                    for b in 0..side {
                        let di = a as isize - (m as isize - 1);
                        let dj = b as isize - (m as isize - 1);
                        values[a * side + b] = u(&[di as f64 * delta, dj as f64 * delta]);
                    }
                }
                ConvKernel {
                    values,
                    m,
                    dimension: 2,
                }
            }
            _ => unreachable!(),
        }
    }

    /// (U * rho)(x_i) = sum_j U(x_i - x_j) rho_j weight.
    fn convolve(&self, rho: &[f64], weight: f64, out: &mut [f64]) {
        let m = self.m;
        match self.dimension {
            1 => {
                for (i, o) in out.iter_mut().enumerate().take(m) {
                    let mut acc = 0.0;
                    for (j, &r) in rho.iter().enumerate() {
                        let k = (i as isize - j as isize + m as isize - 1) as usize;
                        acc += self.values[k] * r;
                    }
                    *o = acc * weight;
                }
            }
            2 => {
                let side = 2 * m - 1;
                for ii in 0..m {
                    for ij in 0..m {
                        let mut acc = 0.0;
                        for ji in 0..m {
                            let a = (ii as isize - ji as isize + m as isize - 1) as usize;
                            for jj in 0..m {
                                let b = (ij as isize - jj as isize + m as isize - 1) as usize;
                                acc += self.values[a * side + b] * rho[ji * m + jj];
                            }
                        }
                        out[ii * m + ij] = acc * weight;
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Damped fixed-point iteration rho <- (1 - damping) rho + damping T(rho)
/// with T(rho) = exp(-(Phi + U * rho)/theta^2)/Z. Starts from the bare
/// confinement Gibbs density. `interaction = None` means U = 0, in which
/// case a single application is exact.
pub fn fixed_point_rho(
    spec: &GridSpec,
    confinement: &dyn Fn(&[f64]) -> f64,
    interaction: Option<&dyn Fn(&[f64]) -> f64>,
    theta2: f64,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryResult> {
    if !(theta2 > 0.0) || !theta2.is_finite() {
        return Err(Error::InvalidInput(format!(
            "theta^2 must be positive, got {theta2}"
        )));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "damping must lie in (0, 1], got {damping}"
        )));
    }
    let count = spec.cell_count();
    let w = spec.weight();
    let d = spec.dimension;
    let mut x = [0.0; 2];
    let mut phi = vec![0.0; count];
    for (i, p) in phi.iter_mut().enumerate() {
        spec.center(i, &mut x[..d]);
        *p = confinement(&x[..d]);
    }
    let kernel = interaction.map(|u| ConvKernel::build(spec, u));
    let gibbs = |potential: &[f64]| -> Result<Vec<f64>> {
        // Shift by the minimum before exponentiating; Z underflow then only
        // happens when the box truly misses the support.
        let min = potential.iter().cloned().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::BoxTooSmall(
                "potential is not finite anywhere on the box".into(),
            ));
        }
        let vals: Vec<f64> = potential
            .iter()
            .map(|&p| (-(p - min) / theta2).exp())
            .collect();
        let z: f64 = vals.iter().sum::<f64>() * w;
        if !z.is_finite() || z <= 1e-300 {
            return Err(Error::BoxTooSmall(format!(
                "normalization underflow (Z = {z}); enlarge the box"
            )));
        }
        Ok(vals.into_iter().map(|v| v / z).collect())
    };
    // Initial iterate: confinement-only Gibbs density.
    let mut rho = gibbs(&phi)?;
    let mut conv = vec![0.0; count];
    let mut potential = vec![0.0; count];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let mapped = match &kernel {
            Some(k) => {
                k.convolve(&rho, w, &mut conv);
                for i in 0..count {
                    potential[i] = phi[i] + conv[i];
                }
                gibbs(&potential)?
            }
            None => gibbs(&phi)?,
        };
        residual = rho
            .iter()
            .zip(&mapped)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        for (r, m) in rho.iter_mut().zip(&mapped) {
            *r = (1.0 - damping) * *r + damping * m;
        }
        // The convex combination of normalized iterates keeps unit mass up
        // to rounding; renormalize so the invariant is exact.
        let mass: f64 = rho.iter().sum::<f64>() * w;
        for r in rho.iter_mut() {
            *r /= mass;
        }
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    let rho = DensityGrid::new(*spec, rho)?;
    let free_energy = free_energy(&rho, confinement, interaction, theta2)?;
    Ok(StationaryResult {
        rho,
        theta2,
        residual,
        free_energy,
        iterations,
    })
}

/// Free energy F(rho) = int theta^2 (log rho - 1) rho + int Phi rho
/// + (1/2) int (U * rho) rho by grid quadrature. Cells with rho = 0
/// contribute zero entropy (the x log x limit).
pub fn free_energy(
    rho: &DensityGrid,
    confinement: &dyn Fn(&[f64]) -> f64,
    interaction: Option<&dyn Fn(&[f64]) -> f64>,
    theta2: f64,
) -> Result<f64> {
    if rho.values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("negative density".into()));
    }
    let spec = &rho.spec;
    let w = spec.weight();
    let d = spec.dimension;
    let mut x = [0.0; 2];
    let mut entropy = 0.0;
    let mut potential = 0.0;
    for (i, &r) in rho.values.iter().enumerate() {
        if r > 0.0 {
            entropy += theta2 * (r.ln() - 1.0) * r * w;
        }
        spec.center(i, &mut x[..d]);
        potential += confinement(&x[..d]) * r * w;
    }
    let mut interaction_energy = 0.0;
    if let Some(u) = interaction {
        let kernel = ConvKernel::build(spec, u);
        let mut conv = vec![0.0; rho.values.len()];
        kernel.convolve(&rho.values, w, &mut conv);
        for (c, &r) in conv.iter().zip(&rho.values) {
            interaction_energy += 0.5 * c * r * w;
        }
    }
    Ok(entropy + potential + interaction_energy)
}

/// One moment of the sampled ensemble at the start and end of the run.
#[derive(Debug, Clone)]
pub struct MomentDrift {
    pub name: String,
    pub initial: f64,
    pub end: f64,
    /// Monte Carlo standard error of the drift (initial and final combined).
    pub se: f64,
    /// |end - initial| / se.
    pub sigmas: f64,
}

/// Report of `verify_stationarity`.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub moments: Vec<MomentDrift>,
    pub max_sigmas: f64,
    /// Empirical velocity variance (mean over components) at the end.
    pub velocity_variance: f64,
    pub velocity_variance_se: f64,
}

fn moment_rows(state: &EnsembleState) -> Vec<(String, f64, f64)> {
    // (name, value, MC standard error) for first and second moments of X, V.
    let n = state.len();
    let d = state.dim();
    let mut rows = Vec::new();
    for (label, data) in [("x", &state.x), ("v", &state.v)] {
        for k in 0..d {
            let column: Vec<f64> = (0..n).map(|i| data[i * d + k]).collect();
            let mean = column.iter().sum::<f64>() / n as f64;
            let var = column.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (n - 1) as f64;
            rows.push((format!("mean_{label}{k}"), mean, (var / n as f64).sqrt()));
            let squares: Vec<f64> = column.iter().map(|u| u * u).collect();
            let mean_sq = squares.iter().sum::<f64>() / n as f64;
            let var_sq = squares
                .iter()
                .map(|u| (u - mean_sq) * (u - mean_sq))
                .sum::<f64>()
                / (n - 1) as f64;
            rows.push((
                format!("second_{label}{k}"),
                mean_sq,
                (var_sq / n as f64).sqrt(),
            ));
        }
    }
    rows
}

/// Sample N particles from the product of the grid density and the
/// Maxwellian, run the ensemble for the configured horizon, and report the
/// drift of empirical moments against Monte Carlo error bars.
pub fn verify_stationarity(
    result: &StationaryResult,
    model: &DriftModel,
    config: &SimConfig,
) -> Result<StationarityReport> {
    if model.noise() == 0.0 {
        return Err(Error::InvalidInput(
            "sigma = 0 has no Maxwellian marginal (theta^2 = 0)".into(),
        ));
    }
    let theta2 = model.noise() / model.friction();
    if (theta2 - result.theta2).abs() > 1e-12 * theta2.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "model theta^2 = {theta2} does not match the solved density ({})",
            result.theta2
        )));
    }
    if model.dimension() != result.rho.spec.dimension {
        return Err(Error::InvalidInput(
            "model dimension does not match the density grid".into(),
        ));
    }
    let theta = theta2.sqrt();
    let rho = &result.rho;
    let out = run(
        config,
        model,
        |rng, _i, x, v| {
            rho.sample_position(rng, x);
            for vi in v.iter_mut() {
                *vi = theta * rng.standard_normal();
            }
        },
        None,
    )?;
    let first = out
        .snapshots
        .first()
        .ok_or_else(|| Error::Internal("run produced no snapshots".into()))?;
    let last = out
        .snapshots
        .last()
        .ok_or_else(|| Error::Internal("run produced no snapshots".into()))?;
    let rows0 = moment_rows(first);
    let rows1 = moment_rows(last);
    let mut moments = Vec::new();
    let mut max_sigmas = 0.0_f64;
    for ((name, v0, se0), (_, v1, se1)) in rows0.into_iter().zip(rows1) {
        let se = (se0 * se0 + se1 * se1).sqrt();
        let sigmas = if se > 0.0 { (v1 - v0).abs() / se } else { 0.0 };
        max_sigmas = max_sigmas.max(sigmas);
        moments.push(MomentDrift {
            name,
            initial: v0,
            end: v1,
            se,
            sigmas,
        });
    }
    let n = last.len();
    let d = last.dim();
    let vv: Vec<f64> = last.v.iter().map(|u| u * u).collect();
    let velocity_variance = vv.iter().sum::<f64>() / (n * d) as f64;
    let mean = velocity_variance;
    let var = vv.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / ((n * d) - 1) as f64;
    let velocity_variance_se = (var / (n * d) as f64).sqrt();
    Ok(StationarityReport {
        moments,
        max_sigmas,
        velocity_variance,
        velocity_variance_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn quadratic(x: &[f64]) -> f64 {
        0.5 * x.iter().map(|u| u * u).sum::<f64>()
    }

    fn std_gaussian(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn maxwellian_reference_values() {
        let v = maxwellian(&[0.0], 1.0).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!(maxwellian(&[0.0], 0.0).is_err());
    }

    #[test]
    fn maxwellian_grid_integral_and_second_moment() {
        let theta2 = 0.7_f64;
        let spec = GridSpec::new(1, 8.0 * theta2.sqrt(), 200).unwrap();
        let mut x = [0.0];
        let w = spec.weight();
        let mut mass = 0.0;
        let mut second = 0.0;
        for i in 0..spec.cell_count() {
            spec.center(i, &mut x);
            let m = maxwellian(&x, theta2).unwrap();
            mass += m * w;
            second += x[0] * x[0] * m * w;
        }
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        assert!((second - theta2).abs() < 1e-6, "second {second}");
    }

    #[test]
    fn fixed_point_without_interaction_is_single_application() {
        let spec = GridSpec::new(1, 6.0, 200).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        assert!(res.residual <= 1e-12);
        assert!(res.iterations <= 2);
        assert!((res.rho.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_benchmark_sup_error() {
        // Phi = x^2/2, theta^2 = 1: the fixed point is the standard normal.
        let spec = GridSpec::new(1, 6.0, 240).unwrap();
        assert!((spec.delta() - 0.05).abs() < 1e-12);
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        let mut x = [0.0];
        let mut sup = 0.0_f64;
        for (i, &r) in res.rho.values.iter().enumerate() {
            res.rho.spec.center(i, &mut x);
            sup = sup.max((r - std_gaussian(x[0])).abs());
        }
        assert!(sup <= 5e-4, "sup error {sup}");
    }

    #[test]
    fn halving_delta_improves_cell_average_error_quadratically() {
        // Against the analytic cell averages the center-value density is a
        // second-order representation.
        let mut errors = Vec::new();
        for cells in [60usize, 120, 240] {
            let spec = GridSpec::new(1, 6.0, cells).unwrap();
            let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
            let delta = spec.delta();
            let mut x = [0.0];
            let mut sup = 0.0_f64;
            for (i, &r) in res.rho.values.iter().enumerate() {
                spec.center(i, &mut x);
                // Simpson on the cell approximates the analytic cell average
                // to O(delta^4), far below the O(delta^2) signal.
                let a = x[0] - 0.5 * delta;
                let b = x[0] + 0.5 * delta;
                let avg = (std_gaussian(a) + 4.0 * std_gaussian(x[0]) + std_gaussian(b)) / 6.0;
                sup = sup.max((r - avg).abs());
            }
            errors.push(sup);
        }
        let r1 = errors[0] / errors[1];
        let r2 = errors[1] / errors[2];
        assert!(r1 > 3.0 && r1 < 5.0, "errors {errors:?}");
        assert!(r2 > 3.0 && r2 < 5.0, "errors {errors:?}");
    }

    #[test]
    fn even_potentials_give_even_density() {
        let cfg = ModelConfig {
            d: 1,
            interaction: "gaussian".into(),
            interaction_strength: 0.4,
            ..ModelConfig::default()
        };
        let inst = cfg.build_potentials().unwrap();
        let spec = GridSpec::new(1, 6.0, 180).unwrap();
        let conf = |x: &[f64]| (inst.confinement.value)(x);
        let inter = |x: &[f64]| (inst.interaction.as_ref().unwrap().value)(x);
        let res = fixed_point_rho(&spec, &conf, Some(&inter), 1.0, 0.5, 1e-11, 500).unwrap();
        let v = &res.rho.values;
        let m = v.len();
        for i in 0..m / 2 {
            assert!(
                (v[i] - v[m - 1 - i]).abs() < 1e-10,
                "cell {i}: {} vs {}",
                v[i],
                v[m - 1 - i]
            );
        }
    }

    #[test]
    fn fixed_point_with_interaction_converges_and_is_self_consistent() {
        let spec = GridSpec::new(1, 6.0, 160).unwrap();
        let u = |x: &[f64]| 0.3 * (-0.5 * x.iter().map(|a| a * a).sum::<f64>()).exp();
        let theta2 = 0.8;
        let res = fixed_point_rho(&spec, &quadratic, Some(&u), theta2, 0.5, 1e-11, 2000).unwrap();
        assert!(res.residual <= 1e-11);
        // theta^2 log rho + Phi + U * rho must be constant where rho is not
        // negligible.
        let kernel = ConvKernel::build(&spec, &u);
        let mut conv = vec![0.0; res.rho.values.len()];
        kernel.convolve(&res.rho.values, spec.weight(), &mut conv);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut x = [0.0];
        for (i, &r) in res.rho.values.iter().enumerate() {
            if r <= (-30.0_f64).exp() {
                continue;
            }
            spec.center(i, &mut x);
            let value = theta2 * r.ln() + quadratic(&x) + conv[i];
            lo = lo.min(value);
            hi = hi.max(value);
        }
        assert!(hi - lo <= 1e-8 * theta2.max(1.0), "spread {}", hi - lo);
    }

    #[test]
    fn two_dimensional_grid_fixed_point() {
        let spec = GridSpec::new(2, 5.0, 40).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        assert!((res.rho.mass() - 1.0).abs() < 1e-10);
        // Product structure: marginal second moments match theta^2.
        let second_x0 = res.rho.expect(|x| x[0] * x[0]);
        let second_x1 = res.rho.expect(|x| x[1] * x[1]);
        assert!((second_x0 - 1.0).abs() < 1e-3, "{second_x0}");
        assert!((second_x1 - 1.0).abs() < 1e-3, "{second_x1}");
    }

    #[test]
    fn box_too_small_is_reported() {
        let spec = GridSpec::new(1, 2.0, 50).unwrap();
        let hard_wall = |_x: &[f64]| f64::INFINITY;
        assert!(matches!(
            fixed_point_rho(&spec, &hard_wall, None, 1.0, 1.0, 1e-12, 5),
            Err(Error::BoxTooSmall(_))
        ));
    }

    #[test]
    fn free_energy_gaussian_closed_form() {
        // U = 0, Phi = x^2/2, theta^2 = 1, rho the standard normal:
        // F = -theta^2 (1 + (1/2) log(2 pi theta^2)).
        let spec = GridSpec::new(1, 8.0, 256).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        let expected = -(0.5 * (2.0 * std::f64::consts::PI).ln()) - 1.0;
        assert!(
            (res.free_energy - expected).abs() < 1e-6,
            "{} vs {}",
            res.free_energy,
            expected
        );
    }

    #[test]
    fn free_energy_shift_by_constant_is_exact() {
        let spec = GridSpec::new(1, 6.0, 100).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        let c = 2.7;
        let shifted = |x: &[f64]| quadratic(x) + c;
        let f0 = free_energy(&res.rho, &quadratic, None, 1.0).unwrap();
        let f1 = free_energy(&res.rho, &shifted, None, 1.0).unwrap();
        assert!((f1 - f0 - c).abs() < 1e-12, "{}", f1 - f0);
    }

    #[test]
    fn fixed_point_minimizes_free_energy_against_perturbations() {
        let spec = GridSpec::new(1, 6.0, 120).unwrap();
        let u = |x: &[f64]| 0.2 * (-0.5 * x.iter().map(|a| a * a).sum::<f64>()).exp();
        let res = fixed_point_rho(&spec, &quadratic, Some(&u), 1.0, 0.5, 1e-11, 2000).unwrap();
        let base = res.free_energy;
        let mut rng = CounterRng::substream(31, 4);
        for trial in 0..20 {
            let eps = 0.05;
            let perturbed: Vec<f64> = res
                .rho
                .values
                .iter()
                .map(|&r| r * (1.0 + eps * (rng.uniform() - 0.5)))
                .collect();
            let grid = DensityGrid::new(spec, perturbed).unwrap();
            let f = free_energy(&grid, &quadratic, Some(&u), 1.0).unwrap();
            assert!(
                f >= base - 1e-10,
                "trial {trial}: perturbed {f} below minimum {base}"
            );
        }
    }

    #[test]
    fn sampled_positions_match_grid_moments() {
        let spec = GridSpec::new(1, 6.0, 150).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        let mut rng = CounterRng::substream(8, 2);
        let n = 200_000;
        let mut x = [0.0];
        let mut mean = 0.0;
        let mut second = 0.0;
        for _ in 0..n {
            res.rho.sample_position(&mut rng, &mut x);
            mean += x[0];
            second += x[0] * x[0];
        }
        mean /= n as f64;
        second /= n as f64;
        let grid_second = res.rho.expect(|x| x[0] * x[0]);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!(
            (second - grid_second).abs() < 0.02,
            "{second} vs {grid_second}"
        );
    }

    #[test]
    fn verify_stationarity_rejects_zero_noise() {
        let cfg = ModelConfig {
            sigma: 0.0,
            ..ModelConfig::default()
        };
        let model = cfg.build(0.0).unwrap();
        let spec = GridSpec::new(1, 6.0, 100).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        let sim = SimConfig::new(1e-3, 0.1, 100, 3).unwrap();
        assert!(matches!(
            verify_stationarity(&res, &model, &sim),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn verify_stationarity_linear_case_moments_hold() {
        let cfg = ModelConfig::default(); // quadratic, sigma = gamma = 1
        let model = cfg.build(0.0).unwrap();
        let spec = GridSpec::new(1, 6.0, 200).unwrap();
        let res = fixed_point_rho(&spec, &quadratic, None, 1.0, 1.0, 1e-12, 5).unwrap();
        let sim = SimConfig::new(1e-3, 2.0, 4000, 77)
            .unwrap()
            .with_stride(2000);
        let report = verify_stationarity(&res, &model, &sim).unwrap();
        assert!(
            report.max_sigmas <= 4.0,
            "worst drift {} sigmas",
            report.max_sigmas
        );
        let theta2 = 1.0;
        assert!(
            (report.velocity_variance - theta2).abs()
                <= 3.0 * report.velocity_variance_se.max(1e-6),
            "variance {} vs {theta2}",
            report.velocity_variance
        );
    }
}
