//! Numerical embodiment of the comparison machinery: a delay-ODE solver for
//! the comparison equation with a windowed supremum, a discrete checker for
//! the differential inequality satisfied by the coupled functional, and the
//! fixed-point (Picard) iteration that constructs the self-consistent
//! dynamics by freezing the interaction marginal.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::kummer;
use crate::model::{DriftModel, Interaction};
use crate::rng::CounterRng;
use crate::simulator::{cutoff_h, EnsembleState, SimConfig};
use crate::trace::DecayTrace;

/// How the history on [t0 - H, t0] is seeded.
///
/// `Constant` is the comparison setup: phi = y0 on the whole initial
/// window. The resulting solution decays strictly faster than the
/// closed-form exponential over the first window (the windowed sup stays at
/// y0 there), which is the correct comparison bound but not the closed-form
/// solution itself. `ClosedFormRate` seeds phi(s) = y0 exp(-lambda (s - t0))
/// with lambda the closed-form decay rate, the unique seeding for which the
/// exponential solves the equation for every t >= t0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistorySeed {
    Constant,
    ClosedFormRate,
}

/// Heun (predictor-corrector) integration of
///
///   d phi/dt = -a phi(t) + b sup over s in [t - H, t] of phi(s)
///
/// with the initial history on [t0 - H, t0] chosen by `seed`. The running
/// supremum is maintained with a monotone deque, so long horizons stay
/// cheap; the exact window endpoint is interpolated from the raw nodes.
pub fn halanay_compare_solve(
    a: f64,
    b: f64,
    cutoff: f64,
    y0: f64,
    t0: f64,
    t_final: f64,
    dt: f64,
    seed: HistorySeed,
) -> Result<DecayTrace> {
    if !(a > b && b >= 0.0) {
        return Err(Error::NoPositiveRate(format!(
            "comparison equation needs a > b >= 0, got a = {a}, b = {b}"
        )));
    }
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::InvalidInput(format!(
            "window H must be positive and finite, got {cutoff}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if dt > cutoff {
        return Err(Error::StepTooLarge(format!(
            "dt = {dt} exceeds the window H = {cutoff}"
        )));
    }
    if !(t_final > t0) {
        return Err(Error::InvalidInput(format!(
            "t_final = {t_final} must exceed t0 = {t0}"
        )));
    }
    // Raw nodes for endpoint interpolation plus a monotone max deque.
    let mut nodes: VecDeque<(f64, f64)> = VecDeque::new();
    let mut maxima: VecDeque<(f64, f64)> = VecDeque::new();
    fn push(
        nodes: &mut VecDeque<(f64, f64)>,
        maxima: &mut VecDeque<(f64, f64)>,
        t: f64,
        v: f64,
    ) {
        nodes.push_back((t, v));
        while maxima.back().is_some_and(|&(_, back)| back <= v) {
            maxima.pop_back();
        }
        maxima.push_back((t, v));
    }
    fn lerp_at(nodes: &VecDeque<(f64, f64)>, s: f64) -> f64 {
        let mut prev = nodes[0];
        for &(tk, vk) in nodes.iter() {
            if tk >= s {
                let (tp, vp) = prev;
                if tk == tp {
                    return vk;
                }
                let theta = (s - tp) / (tk - tp);
                return (1.0 - theta) * vp + theta * vk;
            }
            prev = (tk, vk);
        }
        prev.1
    }
    fn window_sup(
        nodes: &mut VecDeque<(f64, f64)>,
        maxima: &mut VecDeque<(f64, f64)>,
        left: f64,
    ) -> f64 {
        while maxima.front().is_some_and(|&(t, _)| t < left - 1e-12) {
            maxima.pop_front();
        }
        // Keep one raw node below the endpoint for interpolation.
        while nodes.len() >= 2 && nodes[1].0 <= left - 1e-12 {
            nodes.pop_front();
        }
        let deque_max = maxima.front().map_or(f64::NEG_INFINITY, |&(_, v)| v);
        deque_max.max(lerp_at(nodes, left))
    }
    match seed {
        HistorySeed::Constant => {
            push(&mut nodes, &mut maxima, t0 - cutoff, y0);
            push(&mut nodes, &mut maxima, t0, y0);
        }
        HistorySeed::ClosedFormRate => {
            let lambda = crate::rates::halanay_rate(a, b, cutoff)?;
            let seed_steps = (cutoff / dt).ceil() as usize;
            for k in (0..=seed_steps).rev() {
                let s = t0 - (k as f64 / seed_steps as f64) * cutoff;
                push(&mut nodes, &mut maxima, s, y0 * (-lambda * (s - t0)).exp());
            }
        }
    }
    let steps = ((t_final - t0) / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut phi = y0;
    times.push(t0);
    values.push(phi);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let h = dt.min(t_final - t);
        if h <= 0.0 {
            break;
        }
        let sup1 = window_sup(&mut nodes, &mut maxima, t - cutoff);
        let k1 = -a * phi + b * sup1;
        let predictor = phi + h * k1;
        let sup2 = window_sup(&mut nodes, &mut maxima, t + h - cutoff).max(predictor);
        let k2 = -a * predictor + b * sup2;
        phi += 0.5 * h * (k1 + k2);
        let t_next = t + h;
        push(&mut nodes, &mut maxima, t_next, phi);
        times.push(t_next);
        values.push(phi);
    }
    DecayTrace::new(times, values, "delay_comparison")
}

/// Infinite-window comparison: the sup is replaced by the running time
/// average (1/t) int_0^t. Delegates to the Kummer-side solver so the H = inf
/// checks pair with `check_inequality`.
pub fn integro_compare_solve(
    lambda1: f64,
    lambda2: f64,
    y0: f64,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> Result<DecayTrace> {
    kummer::integro_ode_solve(lambda1, lambda2, y0, t0, t_final, dt)
}

/// How the violation threshold of `check_inequality` is set.
#[derive(Debug, Clone, Copy)]
pub enum SlackPolicy {
    Absolute(f64),
    /// Multiple of the batch-means standard error of the residual
    /// (requires batch traces).
    BatchSigma(f64),
}

#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub checked: usize,
    pub violations: usize,
    pub fraction: f64,
    /// Largest residual above the local slack.
    pub max_excess: f64,
}

/// Windowed trapezoidal average (1/h) int_{t-h}^t y ds on an arbitrary
/// strictly increasing grid, interpolating both endpoints.
fn window_average_1d(times: &[f64], values: &[f64], t: f64, h: f64) -> f64 {
    if h == 0.0 {
        let k = times.partition_point(|&s| s < t).min(times.len() - 1);
        return values[k];
    }
    let left = t - h;
    let lerp = |s: f64| -> f64 {
        match times.binary_search_by(|probe| probe.partial_cmp(&s).unwrap()) {
            Ok(k) => values[k],
            Err(k) => {
                if k == 0 {
                    values[0]
                } else if k >= times.len() {
                    values[times.len() - 1]
                } else {
                    let theta = (s - times[k - 1]) / (times[k] - times[k - 1]);
                    (1.0 - theta) * values[k - 1] + theta * values[k]
                }
            }
        }
    };
    let mut acc = 0.0;
    let mut prev_t = left;
    let mut prev_v = lerp(left);
    for (k, &tk) in times.iter().enumerate() {
        if tk <= left {
            continue;
        }
        if tk >= t {
            break;
        }
        acc += 0.5 * (tk - prev_t) * (prev_v + values[k]);
        prev_t = tk;
        prev_v = values[k];
    }
    let end_v = lerp(t);
    acc += 0.5 * (t - prev_t) * (prev_v + end_v);
    acc / h
}

/// Flags the interior times where the discrete derivative of the coupled
/// functional exceeds -lambda1 J + lambda2 avg + slack, with avg the
/// windowed time average of J over [t - h(t), t].
pub fn check_inequality(
    trace: &DecayTrace,
    batches: Option<&[Vec<f64>]>,
    lambda1: f64,
    lambda2: f64,
    cutoff: f64,
    slack: SlackPolicy,
) -> Result<InequalityReport> {
    if trace.len() < 3 {
        return Err(Error::InvalidInput(
            "inequality check needs at least 3 trace points".into(),
        ));
    }
    let times = &trace.times;
    let values = &trace.values;
    let residual_of = |vals: &[f64], k: usize| -> Result<f64> {
        let dj = (vals[k + 1] - vals[k - 1]) / (times[k + 1] - times[k - 1]);
        let h = cutoff_h(times[k], cutoff)?;
        let avg = window_average_1d(times, vals, times[k], h);
        Ok(dj - (-lambda1 * vals[k] + lambda2 * avg))
    };
    let mut checked = 0;
    let mut violations = 0;
    let mut max_excess = 0.0_f64;
    for k in 1..times.len() - 1 {
        let residual = residual_of(values, k)?;
        let local_slack = match slack {
            SlackPolicy::Absolute(s) => s,
            SlackPolicy::BatchSigma(multiple) => {
                let rows = batches.ok_or_else(|| {
                    Error::InvalidInput("BatchSigma slack needs per-batch traces".into())
                })?;
                let mut acc = 0.0;
                let mut acc2 = 0.0;
                for row in rows {
                    let r = residual_of(row, k)?;
                    acc += r;
                    acc2 += r * r;
                }
                let nb = rows.len() as f64;
                let var = (acc2 / nb - (acc / nb) * (acc / nb)).max(0.0) * nb / (nb - 1.0);
                // Floor keeps exact-zero traces from flagging on rounding.
                multiple * (var / nb).sqrt() + 1e-12 * values[k].abs().max(1e-12)
            }
        };
        checked += 1;
        if residual > local_slack {
            violations += 1;
            max_excess = max_excess.max(residual - local_slack);
        }
    }
    Ok(InequalityReport {
        checked,
        violations,
        fraction: violations as f64 / checked.max(1) as f64,
        max_excess,
    })
}

/// Time-indexed ensemble snapshots acting as the frozen interaction
/// marginal of one Picard iterate.
#[derive(Debug, Clone)]
pub struct FrozenDensity {
    times: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Full positions per node, kept only for general kernels.
    snaps: Option<Vec<Vec<f64>>>,
    d: usize,
    n: usize,
}

impl FrozenDensity {
    pub fn from_snapshots(snapshots: &[EnsembleState], keep_positions: bool) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidInput("no snapshots supplied".into()));
        }
        let d = snapshots[0].dim();
        let n = snapshots[0].len();
        let mut times = Vec::with_capacity(snapshots.len());
        let mut means = Vec::with_capacity(snapshots.len());
        let mut snaps = keep_positions.then(Vec::new);
        for s in snapshots {
            if s.dim() != d || s.len() != n {
                return Err(Error::InvalidInput(
                    "snapshots must share one ensemble shape".into(),
                ));
            }
            if let Some(&last) = times.last() {
                if s.t <= last {
                    return Err(Error::InvalidInput(
                        "snapshot times must be strictly increasing".into(),
                    ));
                }
            }
            times.push(s.t);
            means.push(s.spatial_mean());
            if let Some(store) = snaps.as_mut() {
                store.push(s.x.clone());
            }
        }
        Ok(FrozenDensity {
            times,
            means,
            snaps,
            d,
            n,
        })
    }

    /// Constant-in-time frozen density: the initial law transported
    /// statically onto the output grid.
    pub fn static_from_initial(
        initial: &EnsembleState,
        t_final: f64,
        dt: f64,
        keep_positions: bool,
    ) -> Result<Self> {
        let steps = (t_final / dt).round() as usize;
        let mut clones = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let mut s = initial.clone();
            s.t = k as f64 * dt;
            s.step_index = k;
            clones.push(s);
        }
        FrozenDensity::from_snapshots(&clones, keep_positions)
    }

    pub fn coverage(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn check_coverage(&self, left: f64, right: f64) -> Result<()> {
        let (lo, hi) = self.coverage();
        if left < lo - 1e-9 || right > hi + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "frozen density covers [{lo}, {hi}], window needs [{left}, {right}]"
            )));
        }
        Ok(())
    }

    fn lerp_nodes(&self, s: f64) -> (usize, usize, f64) {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(k) => (k, k, 0.0),
            Err(k) => {
                if k == 0 {
                    (0, 0, 0.0)
                } else if k >= self.times.len() {
                    let last = self.times.len() - 1;
                    (last, last, 0.0)
                } else {
                    let theta = (s - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
                    (k - 1, k, theta)
                }
            }
        }
    }

    /// (1/h) int_{t-h}^t meanY(s) ds with both endpoints interpolated.
    fn window_mean_average(&self, t: f64, h: f64, out: &mut [f64]) -> Result<()> {
        if h == 0.0 {
            let (a, b, theta) = self.lerp_nodes(t);
            for k in 0..self.d {
                out[k] = (1.0 - theta) * self.means[a][k] + theta * self.means[b][k];
            }
            return Ok(());
        }
        let left = t - h;
        self.check_coverage(left, t)?;
        let lerp = |s: f64, out_loc: &mut [f64]| {
            let (a, b, theta) = self.lerp_nodes(s);
            for k in 0..self.d {
                out_loc[k] = (1.0 - theta) * self.means[a][k] + theta * self.means[b][k];
            }
        };
        out.fill(0.0);
        let mut prev_t = left;
        let mut prev_v = vec![0.0; self.d];
        lerp(left, &mut prev_v);
        for (k, &tk) in self.times.iter().enumerate() {
            if tk <= left {
                continue;
            }
            if tk >= t {
                break;
            }
            let w = 0.5 * (tk - prev_t);
            for j in 0..self.d {
                out[j] += w * (prev_v[j] + self.means[k][j]);
            }
            prev_t = tk;
            prev_v.copy_from_slice(&self.means[k]);
        }
        let mut end_v = vec![0.0; self.d];
        lerp(t, &mut end_v);
        let w = 0.5 * (t - prev_t);
        for j in 0..self.d {
            out[j] += w * (prev_v[j] + end_v[j]);
            out[j] /= h;
        }
        Ok(())
    }

    /// General-kernel window average of (1/N) sum_j B(x_i, Y_s^j).
    fn window_interaction_average(
        &self,
        model: &DriftModel,
        x_i: &[f64],
        t: f64,
        h: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let snaps = self.snaps.as_ref().ok_or_else(|| {
            Error::Internal("frozen density kept means only for a general kernel".into())
        })?;
        let d = self.d;
        let n = self.n;
        let mut b = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut integrand_at = |s: f64, out_loc: &mut [f64]| {
            let (ka, kb, theta) = self.lerp_nodes(s);
            out_loc.fill(0.0);
            for j in 0..n {
                for k in 0..d {
                    y[k] = (1.0 - theta) * snaps[ka][j * d + k] + theta * snaps[kb][j * d + k];
                }
                model.eval_b_into(x_i, &y, &mut b);
                for k in 0..d {
                    out_loc[k] += b[k];
                }
            }
            for o in out_loc.iter_mut() {
                *o /= n as f64;
            }
        };
        if h == 0.0 {
            integrand_at(t, out);
            return Ok(());
        }
        let left = t - h;
        self.check_coverage(left, t)?;
        out.fill(0.0);
        let mut prev_t = left;
        let mut prev_v = vec![0.0; d];
        integrand_at(left, &mut prev_v);
        let mut cur = vec![0.0; d];
        for (k, &tk) in self.times.clone().iter().enumerate() {
            let _ = k;
            if tk <= left {
                continue;
            }
            if tk >= t {
                break;
            }
            integrand_at(tk, &mut cur);
            let w = 0.5 * (tk - prev_t);
            for j in 0..d {
                out[j] += w * (prev_v[j] + cur[j]);
            }
            prev_t = tk;
            prev_v.copy_from_slice(&cur);
        }
        integrand_at(t, &mut cur);
        let w = 0.5 * (t - prev_t);
        for j in 0..d {
            out[j] += w * (prev_v[j] + cur[j]);
            out[j] /= h;
        }
        Ok(())
    }
}

/// Solve the linear system obtained by freezing the interaction marginal:
/// the delay force integrates B against the frozen snapshots, while drift,
/// friction and noise act as in the self-consistent dynamics. The noise
/// stream is keyed exactly as in the simulator, so iterates sharing a seed
/// share their noise.
pub fn picard_iterate<F>(
    config: &SimConfig,
    model: &DriftModel,
    frozen: &FrozenDensity,
    init: F,
) -> Result<Vec<EnsembleState>>
where
    F: FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]),
{
    config.validate()?;
    let (_, hi) = frozen.coverage();
    if hi + 1e-9 < config.t_final {
        return Err(Error::InvalidInput(format!(
            "frozen density covers up to {hi}, run needs {}",
            config.t_final
        )));
    }
    let d = model.dimension();
    if frozen.d != d {
        return Err(Error::InvalidInput(
            "frozen density dimension does not match the model".into(),
        ));
    }
    let n = config.n;
    let mut init = init;
    let mut x = vec![0.0; n * d];
    let mut v = vec![0.0; n * d];
    for i in 0..n {
        let mut rng = CounterRng::keyed(config.seed, u64::MAX, i as u64);
        init(
            &mut rng,
            i,
            &mut x[i * d..(i + 1) * d],
            &mut v[i * d..(i + 1) * d],
        );
    }
    let mut state = EnsembleState::new(n, d, x, v)?;
    let steps = config.steps();
    let gamma = model.friction();
    let dt = config.dt;
    let noise_scale = (2.0 * model.noise() * dt).sqrt();
    let mut snapshots = Vec::with_capacity(steps / config.stride + 1);
    snapshots.push(state.clone());
    let mut drift = vec![0.0; d];
    let mut delay = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut shared_avg = vec![0.0; d];
    for step in 1..=steps {
        let t = state.t;
        let h = cutoff_h(t, model.cutoff())?;
        if let Interaction::Linear { .. } = model.interaction() {
            frozen.window_mean_average(t, h, &mut shared_avg)?;
        }
        let mut new_x = vec![0.0; n * d];
        let mut new_v = vec![0.0; n * d];
        let mut health = 0.0_f64;
        for i in 0..n {
            let x_i = state.position(i);
            let v_i = state.velocity(i);
            model.eval_a_into(x_i, &mut drift);
            match model.interaction() {
                Interaction::None => delay.fill(0.0),
                Interaction::Linear { coeff } => {
                    for k in 0..d {
                        delay[k] = -coeff * (x_i[k] - shared_avg[k]);
                    }
                }
                Interaction::Custom { .. } => {
                    frozen.window_interaction_average(model, x_i, t, h, &mut delay)?;
                }
            }
            if noise_scale > 0.0 {
                CounterRng::keyed(config.seed, state.step_index as u64, i as u64)
                    .fill_standard_normal(&mut xi);
            }
            for k in 0..d {
                let idx = i * d + k;
                new_x[idx] = x_i[k] + v_i[k] * dt;
                new_v[idx] = v_i[k]
                    + (drift[k] + delay[k] - gamma * v_i[k]) * dt
                    + if noise_scale > 0.0 {
                        noise_scale * xi[k]
                    } else {
                        0.0
                    };
                health += new_x[idx] + new_v[idx];
            }
        }
        if !health.is_finite() {
            return Err(Error::Divergence {
                step: state.step_index,
                detail: "non-finite state in frozen-marginal solve".into(),
            });
        }
        state.x = new_x;
        state.v = new_v;
        state.step_index += 1;
        state.t = state.step_index as f64 * dt;
        if step % config.stride == 0 {
            snapshots.push(state.clone());
        }
    }
    Ok(snapshots)
}

/// Successive iterate distances of the fixed-point construction.
#[derive(Debug, Clone)]
pub struct PicardTrace {
    /// E_k = sup over output times of the index-coupled mean squared
    /// phase-space distance between iterates k and k+1.
    pub distances: Vec<f64>,
    /// Snapshots of every iterate (last entry is the accepted one).
    pub iterates: Vec<Vec<EnsembleState>>,
    pub converged: bool,
}

/// Index-coupled mean squared phase-space distance between two matched
/// snapshot sets, taken at matched times; an upper bound for dist2^2.
pub fn iterate_distance(a: &[EnsembleState], b: &[EnsembleState]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("iterate lengths differ".into()));
    }
    let mut sup = 0.0_f64;
    for (sa, sb) in a.iter().zip(b) {
        if sa.len() != sb.len() || sa.dim() != sb.dim() {
            return Err(Error::InvalidInput("iterate shapes differ".into()));
        }
        let n = sa.len();
        let mut acc = 0.0;
        for ((xa, xb), (va, vb)) in sa.x.iter().zip(&sb.x).zip(sa.v.iter().zip(&sb.v)) {
            acc += (xa - xb) * (xa - xb) + (va - vb) * (va - vb);
        }
        sup = sup.max(acc / n as f64);
    }
    Ok(sup)
}

/// Iterate the frozen-marginal solve from the statically transported
/// initial law until successive iterates are closer than `tol` (in the
/// index-coupled mean squared distance) or `k_max` is reached.
/// Non-convergence is reported in the trace, not as an error.
pub fn picard_converge<F>(
    config: &SimConfig,
    model: &DriftModel,
    mut init: F,
    k_max: usize,
    tol: f64,
) -> Result<PicardTrace>
where
    F: FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]) + Clone,
{
    let keep_positions = matches!(model.interaction(), Interaction::Custom { .. });
    let d = model.dimension();
    let n = config.n;
    let mut x = vec![0.0; n * d];
    let mut v = vec![0.0; n * d];
    for i in 0..n {
        let mut rng = CounterRng::keyed(config.seed, u64::MAX, i as u64);
        init(
            &mut rng,
            i,
            &mut x[i * d..(i + 1) * d],
            &mut v[i * d..(i + 1) * d],
        );
    }
    let initial = EnsembleState::new(n, d, x, v)?;
    let mut frozen = FrozenDensity::static_from_initial(
        &initial,
        config.t_final,
        config.dt * config.stride as f64,
        keep_positions,
    )?;
    let mut iterates: Vec<Vec<EnsembleState>> = Vec::new();
    let mut distances = Vec::new();
    let mut converged = false;
    for _k in 0..k_max {
        let snaps = picard_iterate(config, model, &frozen, init.clone())?;
        if let Some(prev) = iterates.last() {
            let dist = iterate_distance(prev, &snaps)?;
            distances.push(dist);
            if dist <= tol {
                iterates.push(snaps);
                converged = true;
                break;
            }
        }
        frozen = FrozenDensity::from_snapshots(&snaps, keep_positions)?;
        iterates.push(snaps);
    }
    Ok(PicardTrace {
        distances,
        iterates,
        converged,
    })
}
