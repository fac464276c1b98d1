//! Euler-Maruyama integration of the N-particle stochastic delay system
//!
//!   dX_i = V_i dt
//!   dV_i = [A(X_i) + (1/h(t)) int_{t-h(t)}^t (1/N) sum_j B(X_i, X_s^j) ds
//!           - gamma V_i] dt + sqrt(2 sigma dt) xi,
//!
//! with the window h(t) = min(t, H). Noise is a pure function of
//! (seed, step, particle), so runs are bit-reproducible and two ensembles
//! can be coupled synchronously by construction.
//!
//! The time-averaged interaction is a trapezoidal quadrature over the stored
//! snapshot grid. For the linear kernel B(x, xhat) = -c (x - xhat) the
//! ensemble sum collapses to the spatial mean, so only the mean history is
//! kept; with H = inf this further reduces to a running integral. General
//! kernels with H = inf keep the full history at a documented
//! O(T/dt * N * d) memory cost.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::metrics::{PointCloud, QuadraticForm};
use crate::model::{DriftModel, Interaction};
use crate::rng::CounterRng;
use crate::trace::DecayTrace;

/// Particle batches used for Monte Carlo error bars on ensemble functionals.
pub const FUNCTIONAL_BATCHES: usize = 10;

/// The delay window h(t) = t for t <= H, else H.
pub fn cutoff_h(t: f64, cutoff: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    if cutoff.is_nan() || cutoff < 0.0 {
        return Err(Error::InvalidInput(format!(
            "cutoff must be in [0, inf], got {cutoff}"
        )));
    }
    Ok(t.min(cutoff))
}

/// Step-size rule used when a config does not pin dt.
pub fn default_dt(model: &DriftModel) -> f64 {
    let gamma = model.friction();
    let alpha = model.confinement_strength();
    let mut dt = 0.01_f64;
    if gamma > 0.0 {
        dt = dt.min(0.1 / gamma);
    }
    dt.min(0.1 / alpha.sqrt())
}

/// Positions and velocities of N particles at one time.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub t: f64,
    pub step_index: usize,
    n: usize,
    d: usize,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl EnsembleState {
    pub fn new(n: usize, d: usize, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("need n >= 1 and d >= 1".into()));
        }
        if x.len() != n * d || v.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "state arrays must both be {} long, got {} and {}",
                n * d,
                x.len(),
                v.len()
            )));
        }
        if x.iter().chain(v.iter()).any(|u| !u.is_finite()) {
            return Err(Error::InvalidInput("state has non-finite entries".into()));
        }
        Ok(EnsembleState {
            t: 0.0,
            step_index: 0,
            n,
            d,
            x,
            v,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn position(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v[i * self.d..(i + 1) * self.d]
    }

    /// Mean position over the ensemble.
    pub fn spatial_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, &xi) in mean.iter_mut().zip(self.position(i)) {
                *m += xi;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.n as f64;
        }
        mean
    }

    /// Phase-space cloud (positions first, then velocities) for the metric
    /// operations.
    pub fn cloud(&self) -> PointCloud {
        let mut data = Vec::with_capacity(self.n * 2 * self.d);
        for i in 0..self.n {
            data.extend_from_slice(self.position(i));
            data.extend_from_slice(self.velocity(i));
        }
        PointCloud::new(self.n, 2 * self.d, data).expect("state entries are finite")
    }
}

/// Retention policy for the position history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryPolicy {
    /// Keep exactly what the delay window needs (ring buffer for finite H,
    /// a running mean integral for infinite H with a linear kernel).
    #[default]
    Windowed,
    /// Keep every snapshot regardless of the window.
    Full,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub n: usize,
    pub seed: u64,
    /// Record functionals/snapshots every this many steps.
    pub stride: usize,
    pub history: HistoryPolicy,
    /// Whether `run`/`run_coupled` keep stride snapshots (traces are always
    /// recorded). Campaigns at large N switch this off.
    pub record_snapshots: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64, n: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            dt,
            t_final,
            n,
            seed,
            stride: 1,
            history: HistoryPolicy::Windowed,
            record_snapshots: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_snapshots(mut self, record: bool) -> Self {
        self.record_snapshots = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput(format!(
                "t_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidInput("stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Ring buffer of position snapshots covering the delay window, together
/// with per-snapshot spatial means and (for the infinite-window linear case)
/// the running trapezoidal integral of the mean.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dt: f64,
    cutoff: f64,
    d: usize,
    keep_snapshots: bool,
    evict: bool,
    times: VecDeque<f64>,
    snaps: VecDeque<Vec<f64>>,
    means: VecDeque<Vec<f64>>,
    /// Trapezoidal prefix integral of the spatial mean over [0, t];
    /// maintained only in the infinite-window mean-only mode.
    mean_integral: Vec<f64>,
    mean_only: bool,
}

impl HistoryBuffer {
    pub fn for_model(model: &DriftModel, config: &SimConfig) -> Self {
        let cutoff = model.cutoff();
        let needs_snapshots = matches!(model.interaction(), Interaction::Custom { .. });
        let full = config.history == HistoryPolicy::Full;
        let infinite = cutoff.is_infinite();
        HistoryBuffer {
            dt: config.dt,
            cutoff,
            d: model.dimension(),
            keep_snapshots: needs_snapshots || full,
            evict: !full && !infinite && cutoff > 0.0,
            times: VecDeque::new(),
            snaps: VecDeque::new(),
            means: VecDeque::new(),
            mean_integral: vec![0.0; model.dimension()],
            mean_only: infinite && !needs_snapshots && !full,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append the snapshot at time t. The H = 0 window never reads history,
    /// so nothing is stored in that case.
    pub fn push(&mut self, t: f64, state: &EnsembleState) -> Result<()> {
        if self.cutoff == 0.0 {
            return Ok(());
        }
        if let Some(&last) = self.times.back() {
            if t <= last {
                return Err(Error::Internal(format!(
                    "history timestamps must increase: {t} after {last}"
                )));
            }
            if ((t - last) - self.dt).abs() > 1e-9 * self.dt.max(1.0) {
                return Err(Error::Internal(format!(
                    "history spacing {} does not match dt = {}",
                    t - last,
                    self.dt
                )));
            }
        }
        let mean = state.spatial_mean();
        if self.mean_only {
            if let (Some(&last_t), Some(last_mean)) = (self.times.back(), self.means.back()) {
                let w = 0.5 * (t - last_t);
                for k in 0..self.d {
                    self.mean_integral[k] += w * (last_mean[k] + mean[k]);
                }
            }
            // Only the most recent node is retained.
            self.times.push_back(t);
            self.means.push_back(mean);
            while self.times.len() > 1 {
                self.times.pop_front();
                self.means.pop_front();
            }
            return Ok(());
        }
        self.times.push_back(t);
        self.means.push_back(mean);
        if self.keep_snapshots {
            self.snaps.push_back(state.x.clone());
        }
        if self.evict {
            // Keep one node at or below t - H for endpoint interpolation.
            let left = t - self.cutoff;
            while self.times.len() >= 2 && self.times[1] <= left + 1e-9 * self.dt {
                self.times.pop_front();
                self.means.pop_front();
                if self.keep_snapshots {
                    self.snaps.pop_front();
                }
            }
        }
        Ok(())
    }

    fn coverage_check(&self, left: f64) -> Result<()> {
        match self.times.front() {
            Some(&t0) if t0 <= left + 1e-9 * self.dt.max(1.0) => Ok(()),
            Some(&t0) => Err(Error::Internal(format!(
                "history starts at {t0}, window needs {left}"
            ))),
            None => Err(Error::Internal("history buffer is empty".into())),
        }
    }

    /// (1/h) int_{t-h}^t mean(s) ds by trapezoid on the stored grid, with
    /// the left endpoint interpolated linearly when t - h is off-grid.
    pub fn window_mean_average(&self, t: f64, h: f64, out: &mut [f64]) -> Result<()> {
        if self.mean_only {
            // h == t here: the infinite window averages over all history.
            let last_t = *self
                .times
                .back()
                .ok_or_else(|| Error::Internal("history buffer is empty".into()))?;
            if (last_t - t).abs() > 1e-9 * self.dt.max(1.0) {
                return Err(Error::Internal(format!(
                    "running integral is at {last_t}, window asks for {t}"
                )));
            }
            for (o, &acc) in out.iter_mut().zip(&self.mean_integral) {
                *o = acc / t;
            }
            return Ok(());
        }
        let left = t - h;
        self.coverage_check(left)?;
        let m = self.times.len();
        debug_assert_eq!(self.means.len(), m);
        let mut k0 = 0;
        while k0 + 1 < m && self.times[k0 + 1] <= left + 1e-9 * self.dt {
            k0 += 1;
        }
        out.fill(0.0);
        let on_grid = (self.times[k0] - left).abs() <= 1e-9 * self.dt;
        let start = if on_grid {
            k0
        } else {
            // Virtual node at `left` interpolated between k0 and k0 + 1.
            let t_lo = self.times[k0];
            let t_hi = self.times[k0 + 1];
            let theta = (left - t_lo) / (t_hi - t_lo);
            let w = 0.5 * (t_hi - left);
            let lo = &self.means[k0];
            let hi = &self.means[k0 + 1];
            for k in 0..self.d {
                let v_left = (1.0 - theta) * lo[k] + theta * hi[k];
                out[k] += w * (v_left + hi[k]);
            }
            k0 + 1
        };
        for j in start..m.saturating_sub(1) {
            let w = 0.5 * (self.times[j + 1] - self.times[j]);
            let a = &self.means[j];
            let b = &self.means[j + 1];
            for k in 0..self.d {
                out[k] += w * (a[k] + b[k]);
            }
        }
        for o in out.iter_mut() {
            *o /= h;
        }
        Ok(())
    }

    /// (1/h) int (1/N) sum_j B(x_i, X_s^j) ds for a general kernel,
    /// evaluated on the stored snapshots; the snapshot at the off-grid left
    /// endpoint is interpolated linearly in position.
    pub fn window_interaction_average(
        &self,
        model: &DriftModel,
        x_i: &[f64],
        t: f64,
        h: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if !self.keep_snapshots {
            return Err(Error::Internal(
                "general kernels need stored snapshots; history keeps means only".into(),
            ));
        }
        let left = t - h;
        self.coverage_check(left)?;
        let m = self.times.len();
        let d = self.d;
        let n = self.snaps[0].len() / d;
        let mut k0 = 0;
        while k0 + 1 < m && self.times[k0 + 1] <= left + 1e-9 * self.dt {
            k0 += 1;
        }
        let mut b = vec![0.0; d];
        let mut integrand = |xs: &[f64], out_loc: &mut [f64]| {
            out_loc.fill(0.0);
            for j in 0..n {
                model.eval_b_into(x_i, &xs[j * d..(j + 1) * d], &mut b);
                for k in 0..d {
                    out_loc[k] += b[k];
                }
            }
            for o in out_loc.iter_mut() {
                *o /= n as f64;
            }
        };
        out.fill(0.0);
        let mut f_cur = vec![0.0; d];
        let mut f_next = vec![0.0; d];
        let on_grid = (self.times[k0] - left).abs() <= 1e-9 * self.dt;
        let start = if on_grid {
            integrand(&self.snaps[k0], &mut f_cur);
            k0
        } else {
            let t_lo = self.times[k0];
            let t_hi = self.times[k0 + 1];
            let theta = (left - t_lo) / (t_hi - t_lo);
            let lo = &self.snaps[k0];
            let hi = &self.snaps[k0 + 1];
            let interior: Vec<f64> = lo
                .iter()
                .zip(hi)
                .map(|(&a, &bb)| (1.0 - theta) * a + theta * bb)
                .collect();
            integrand(&interior, &mut f_cur);
            integrand(hi, &mut f_next);
            let w = 0.5 * (t_hi - left);
            for k in 0..d {
                out[k] += w * (f_cur[k] + f_next[k]);
            }
            std::mem::swap(&mut f_cur, &mut f_next);
            k0 + 1
        };
        for j in start..m.saturating_sub(1) {
            integrand(&self.snaps[j + 1], &mut f_next);
            let w = 0.5 * (self.times[j + 1] - self.times[j]);
            for k in 0..d {
                out[k] += w * (f_cur[k] + f_next[k]);
            }
            std::mem::swap(&mut f_cur, &mut f_next);
        }
        for o in out.iter_mut() {
            *o /= h;
        }
        Ok(())
    }
}

/// The time-averaged interaction force on particle `i`: the term added to
/// dV (already carrying the -grad U sign for potential models). At t = 0 or
/// H = 0 this is the instantaneous ensemble average.
pub fn delay_force(
    i: usize,
    state: &EnsembleState,
    hist: &HistoryBuffer,
    model: &DriftModel,
) -> Result<Vec<f64>> {
    let d = state.dim();
    let mut out = vec![0.0; d];
    let h = cutoff_h(state.t, model.cutoff())?;
    delay_force_into(i, state, hist, model, h, &mut out)?;
    Ok(out)
}

fn delay_force_into(
    i: usize,
    state: &EnsembleState,
    hist: &HistoryBuffer,
    model: &DriftModel,
    h: f64,
    out: &mut [f64],
) -> Result<()> {
    let d = state.dim();
    match model.interaction() {
        Interaction::None => {
            out.fill(0.0);
            Ok(())
        }
        Interaction::Linear { coeff } => {
            let x_i = state.position(i);
            if h == 0.0 {
                let mean = state.spatial_mean();
                for k in 0..d {
                    out[k] = -coeff * (x_i[k] - mean[k]);
                }
                return Ok(());
            }
            let mut avg = vec![0.0; d];
            hist.window_mean_average(state.t, h, &mut avg)?;
            for k in 0..d {
                out[k] = -coeff * (x_i[k] - avg[k]);
            }
            Ok(())
        }
        Interaction::Custom { .. } => {
            let x_i = state.position(i);
            if h == 0.0 {
                let mut b = vec![0.0; d];
                out.fill(0.0);
                for j in 0..state.len() {
                    model.eval_b_into(x_i, state.position(j), &mut b);
                    for k in 0..d {
                        out[k] += b[k];
                    }
                }
                for o in out.iter_mut() {
                    *o /= state.len() as f64;
                }
                return Ok(());
            }
            hist.window_interaction_average(model, x_i, state.t, h, out)
        }
    }
}

/// Shared per-step context: the linear-kernel window average is identical
/// for every particle, so it is hoisted out of the particle loop.
enum SharedDelay {
    None,
    LinearAvg { coeff: f64, avg: Vec<f64> },
    LinearInstant { coeff: f64, mean: Vec<f64> },
    PerParticle { h: f64 },
}

fn prepare_shared_delay(
    state: &EnsembleState,
    hist: &HistoryBuffer,
    model: &DriftModel,
) -> Result<SharedDelay> {
    let h = cutoff_h(state.t, model.cutoff())?;
    Ok(match model.interaction() {
        Interaction::None => SharedDelay::None,
        Interaction::Linear { coeff } => {
            if h == 0.0 {
                SharedDelay::LinearInstant {
                    coeff: *coeff,
                    mean: state.spatial_mean(),
                }
            } else {
                let mut avg = vec![0.0; state.dim()];
                hist.window_mean_average(state.t, h, &mut avg)?;
                SharedDelay::LinearAvg { coeff: *coeff, avg }
            }
        }
        Interaction::Custom { .. } => SharedDelay::PerParticle { h },
    })
}

/// One ensemble marching under the model with its own history.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: DriftModel,
    dt: f64,
    seed: u64,
    pub state: EnsembleState,
    pub hist: HistoryBuffer,
}

impl Simulator {
    /// `init_tag` separates the initial-sampling streams of the ensembles in
    /// a coupled run; it never enters the dynamics noise.
    pub fn new<F>(model: &DriftModel, config: &SimConfig, init_tag: u64, mut init: F) -> Result<Self>
    where
        F: FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]),
    {
        config.validate()?;
        let n = config.n;
        let d = model.dimension();
        let mut x = vec![0.0; n * d];
        let mut v = vec![0.0; n * d];
        for i in 0..n {
            let mut rng = CounterRng::keyed(config.seed, u64::MAX - init_tag, i as u64);
            init(
                &mut rng,
                i,
                &mut x[i * d..(i + 1) * d],
                &mut v[i * d..(i + 1) * d],
            );
        }
        let state = EnsembleState::new(n, d, x, v)?;
        let mut hist = HistoryBuffer::for_model(model, config);
        hist.push(0.0, &state)?;
        Ok(Simulator {
            model: model.clone(),
            dt: config.dt,
            seed: config.seed,
            state,
            hist,
        })
    }

    pub fn model(&self) -> &DriftModel {
        &self.model
    }

    /// One Euler-Maruyama step: X += V dt, then
    /// V += [A(X) + delay - gamma V] dt + sqrt(2 sigma dt) xi, both from the
    /// pre-step state. The noise cell for (step, particle) comes from the
    /// counter stream, so scheduling cannot perturb it.
    pub fn step(&mut self) -> Result<()> {
        let d = self.state.dim();
        let n = self.state.len();
        let dt = self.dt;
        let gamma = self.model.friction();
        let noise_scale = (2.0 * self.model.noise() * dt).sqrt();
        let shared = prepare_shared_delay(&self.state, &self.hist, &self.model)?;
        let mut drift = vec![0.0; d];
        let mut delay = vec![0.0; d];
        let mut xi = vec![0.0; d];
        let mut new_x = vec![0.0; n * d];
        let mut new_v = vec![0.0; n * d];
        let mut health = 0.0_f64;
        for i in 0..n {
            let x_i = self.state.position(i);
            let v_i = self.state.velocity(i);
            self.model.eval_a_into(x_i, &mut drift);
            match &shared {
                SharedDelay::None => delay.fill(0.0),
                SharedDelay::LinearAvg { coeff, avg } => {
                    for k in 0..d {
                        delay[k] = -coeff * (x_i[k] - avg[k]);
                    }
                }
                SharedDelay::LinearInstant { coeff, mean } => {
                    for k in 0..d {
                        delay[k] = -coeff * (x_i[k] - mean[k]);
                    }
                }
                SharedDelay::PerParticle { h } => {
                    delay_force_into(i, &self.state, &self.hist, &self.model, *h, &mut delay)?
                }
            }
            if noise_scale > 0.0 {
                CounterRng::keyed(self.seed, self.state.step_index as u64, i as u64)
                    .fill_standard_normal(&mut xi);
            }
            for k in 0..d {
                let idx = i * d + k;
                new_x[idx] = x_i[k] + v_i[k] * dt;
                new_v[idx] = v_i[k]
                    + (drift[k] + delay[k] - gamma * v_i[k]) * dt
                    + if noise_scale > 0.0 { noise_scale * xi[k] } else { 0.0 };
                health += new_x[idx] + new_v[idx];
            }
        }
        if !health.is_finite() {
            return Err(Error::Divergence {
                step: self.state.step_index,
                detail: "non-finite state after update".into(),
            });
        }
        self.state.x = new_x;
        self.state.v = new_v;
        self.state.step_index += 1;
        self.state.t = self.state.step_index as f64 * dt;
        self.hist.push(self.state.t, &self.state)?;
        Ok(())
    }
}

/// Output of a single-ensemble run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<EnsembleState>,
    pub trace: Option<DecayTrace>,
}

/// Integrate one ensemble, recording snapshots and an optional scalar
/// functional every `stride` steps (the initial state is always recorded).
pub fn run<F>(
    config: &SimConfig,
    model: &DriftModel,
    init: F,
    functional: Option<(&str, &dyn Fn(&EnsembleState) -> f64)>,
) -> Result<RunOutput>
where
    F: FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]),
{
    let mut sim = Simulator::new(model, config, 0, init)?;
    let steps = config.steps();
    let mut snapshots = Vec::new();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let record =
        |sim: &Simulator, times: &mut Vec<f64>, values: &mut Vec<f64>, snaps: &mut Vec<EnsembleState>| {
            if config.record_snapshots {
                snaps.push(sim.state.clone());
            }
            if let Some((_, f)) = functional {
                times.push(sim.state.t);
                values.push(f(&sim.state));
            }
        };
    record(&sim, &mut times, &mut values, &mut snapshots);
    for step in 1..=steps {
        sim.step()?;
        if step % config.stride == 0 {
            record(&sim, &mut times, &mut values, &mut snapshots);
        }
    }
    let trace = match functional {
        Some((label, _)) => Some(DecayTrace::new(times, values, label)?),
        None => None,
    };
    Ok(RunOutput { snapshots, trace })
}

/// Output of a synchronously coupled pair of runs.
#[derive(Debug, Clone)]
pub struct CoupledOutput {
    pub times: Vec<f64>,
    /// (1/N) sum_i Q(z_i^A - z_i^B) at each recorded time.
    pub j: Vec<f64>,
    /// The same functional over particle batches (FUNCTIONAL_BATCHES rows),
    /// for Monte Carlo error bars.
    pub j_batches: Vec<Vec<f64>>,
    pub snapshots_a: Vec<EnsembleState>,
    pub snapshots_b: Vec<EnsembleState>,
}

impl CoupledOutput {
    pub fn j_trace(&self) -> Result<DecayTrace> {
        DecayTrace::new(self.times.clone(), self.j.clone(), "coupled_q_functional")
    }

    /// Batch-means standard error of J at each recorded time.
    pub fn j_standard_error(&self) -> Vec<f64> {
        let b = self.j_batches.len();
        if b < 2 {
            return vec![0.0; self.times.len()];
        }
        (0..self.times.len())
            .map(|k| {
                let mean = self.j_batches.iter().map(|row| row[k]).sum::<f64>() / b as f64;
                let var = self
                    .j_batches
                    .iter()
                    .map(|row| (row[k] - mean) * (row[k] - mean))
                    .sum::<f64>()
                    / (b - 1) as f64;
                (var / b as f64).sqrt()
            })
            .collect()
    }
}

/// Evolve two ensembles with the identical noise stream (particle i of A is
/// coupled to particle i of B) and record the empirical Q-functional of the
/// difference.
pub fn run_coupled<FA, FB>(
    config: &SimConfig,
    model: &DriftModel,
    init_a: FA,
    init_b: FB,
    form: &QuadraticForm,
) -> Result<CoupledOutput>
where
    FA: FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]),
    FB: FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]),
{
    let mut sim_a = Simulator::new(model, config, 0, init_a)?;
    let mut sim_b = Simulator::new(model, config, 1, init_b)?;
    if sim_a.state.len() != sim_b.state.len() {
        return Err(Error::InvalidInput(
            "coupled ensembles must have equal particle counts".into(),
        ));
    }
    let steps = config.steps();
    let mut out = CoupledOutput {
        times: Vec::new(),
        j: Vec::new(),
        j_batches: vec![Vec::new(); FUNCTIONAL_BATCHES],
        snapshots_a: Vec::new(),
        snapshots_b: Vec::new(),
    };
    record_coupled(&sim_a, &sim_b, form, config, &mut out);
    for step in 1..=steps {
        // Both ensembles consume the identical (seed, step, particle) noise
        // cells; the coupling is synchronous by construction.
        sim_a.step()?;
        sim_b.step()?;
        if step % config.stride == 0 {
            record_coupled(&sim_a, &sim_b, form, config, &mut out);
        }
    }
    Ok(out)
}

fn record_coupled(
    sim_a: &Simulator,
    sim_b: &Simulator,
    form: &QuadraticForm,
    config: &SimConfig,
    out: &mut CoupledOutput,
) {
    let n = sim_a.state.len();
    let d = sim_a.state.dim();
    let mut za = vec![0.0; 2 * d];
    let mut zb = vec![0.0; 2 * d];
    let mut total = 0.0;
    let mut batch_sums = vec![0.0; FUNCTIONAL_BATCHES];
    let mut batch_counts = vec![0usize; FUNCTIONAL_BATCHES];
    for i in 0..n {
        za[..d].copy_from_slice(sim_a.state.position(i));
        za[d..].copy_from_slice(sim_a.state.velocity(i));
        zb[..d].copy_from_slice(sim_b.state.position(i));
        zb[d..].copy_from_slice(sim_b.state.velocity(i));
        let q = form.eval_diff(&za, &zb);
        total += q;
        let b = i * FUNCTIONAL_BATCHES / n;
        batch_sums[b] += q;
        batch_counts[b] += 1;
    }
    out.times.push(sim_a.state.t);
    out.j.push(total / n as f64);
    for b in 0..FUNCTIONAL_BATCHES {
        out.j_batches[b].push(if batch_counts[b] > 0 {
            batch_sums[b] / batch_counts[b] as f64
        } else {
            0.0
        });
    }
    if config.record_snapshots {
        out.snapshots_a.push(sim_a.state.clone());
        out.snapshots_b.push(sim_b.state.clone());
    }
}

/// Gaussian initial sampler: positions N(center_x, spread_x^2 I),
/// velocities N(center_v, spread_v^2 I).
pub fn gaussian_init(
    center_x: f64,
    spread_x: f64,
    center_v: f64,
    spread_v: f64,
) -> impl FnMut(&mut CounterRng, usize, &mut [f64], &mut [f64]) + Clone {
    move |rng, _i, x, v| {
        for xi in x.iter_mut() {
            *xi = center_x + spread_x * rng.standard_normal();
        }
        for vi in v.iter_mut() {
            *vi = center_v + spread_v * rng.standard_normal();
        }
    }
}
