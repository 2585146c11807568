//! Direct time propagation `ψ(t) = e^{−iHt}ψ(0)` for tridiagonal effective
//! matrices, and adaptive quadrature of the survival probability along the
//! propagated trajectory. Nothing here uses an eigen-decomposition, so these
//! routines double as an independent check of the spectral formulas.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::Tridiagonal;
use crate::error::{Error, Result};

const TAYLOR_TOL: f64 = 1e-17;
/// Largest `‖H‖h` taken in one Taylor step.
const MAX_STEP_NORM: f64 = 2.0;

/// Complex state vector stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl State {
    pub fn zeros(n: usize) -> Self {
        State {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    /// Excitation localized on `site` (0-based).
    pub fn site(n: usize, site: usize) -> Self {
        let mut s = State::zeros(n);
        s.re[site] = 1.0;
        s
    }

    pub fn from_complex(v: &[Complex64]) -> Self {
        State {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    pub fn norm_sqr_at(&self, site: usize) -> f64 {
        self.re[site] * self.re[site] + self.im[site] * self.im[site]
    }
}

/// Propagator for a tridiagonal matrix with real symmetric hopping and complex diagonal.
#[derive(Debug, Clone)]
pub struct Propagator {
    /// `hop_left[i] = H_{i,i−1}`, zero for the first site.
    hop_left: Vec<f64>,
    /// `hop_right[i] = H_{i,i+1}`, zero for the last site.
    hop_right: Vec<f64>,
    diag_re: Vec<f64>,
    diag_im: Vec<f64>,
    norm_bound: f64,
}

/// Fixed step `h` split into `substeps` Taylor steps of order `order`.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    h: f64,
    substeps: usize,
    order: usize,
}

/// Scratch vectors for Taylor stepping, padded with a zero at each end.
#[derive(Debug, Clone)]
pub struct Workspace {
    term_re: Vec<f64>,
    term_im: Vec<f64>,
    next_re: Vec<f64>,
    next_im: Vec<f64>,
}

impl Propagator {
    pub fn new(matrix: &Tridiagonal<Complex64>) -> Result<Self> {
        let n = matrix.dim();
        if n == 0 {
            return Err(Error::Propagation("empty matrix".into()));
        }
        let mut hop = Vec::with_capacity(n - 1);
        for (lo, up) in matrix.sub.iter().zip(&matrix.sup) {
            if lo.im != 0.0 || up.im != 0.0 || lo.re != up.re {
                return Err(Error::Propagation(
                    "hopping terms must be real and symmetric".into(),
                ));
            }
            hop.push(lo.re);
        }
        let hop_left: Vec<f64> = (0..n)
            .map(|i| if i > 0 { hop[i - 1] } else { 0.0 })
            .collect();
        let hop_right: Vec<f64> = (0..n)
            .map(|i| if i + 1 < n { hop[i] } else { 0.0 })
            .collect();
        let norm_bound = (0..n)
            .map(|i| matrix.diag[i].norm() + hop_left[i].abs() + hop_right[i].abs())
            .fold(0.0f64, f64::max);
        Ok(Propagator {
            hop_left,
            hop_right,
            diag_re: matrix.diag.iter().map(|d| d.re).collect(),
            diag_im: matrix.diag.iter().map(|d| d.im).collect(),
            norm_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag_re.len()
    }

    /// Gershgorin bound on `‖H‖`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// Sink rate `Γ = −2 Im H_{NN}`.
    pub fn gamma(&self) -> f64 {
        -2.0 * self.diag_im[self.dim() - 1]
    }

    pub fn stepper(&self, h: f64) -> Stepper {
        let x_total = self.norm_bound * h.abs();
        let substeps = ((x_total / MAX_STEP_NORM).ceil() as usize).max(1);
        let x = x_total / substeps as f64;
        let mut order = 1;
        let mut term = x;
        while term > TAYLOR_TOL && order < 60 {
            order += 1;
            term *= x / order as f64;
        }
        Stepper { h, substeps, order }
    }

    pub fn workspace(&self) -> Workspace {
        let n = self.dim() + 2;
        Workspace {
            term_re: vec![0.0; n],
            term_im: vec![0.0; n],
            next_re: vec![0.0; n],
            next_im: vec![0.0; n],
        }
    }

    /// Advances `psi` by the stepper's step.
    pub fn step(&self, stepper: &Stepper, psi: &mut State, work: &mut Workspace) {
        if stepper.h == 0.0 {
            return;
        }
        let n = self.dim();
        let dt = stepper.h / stepper.substeps as f64;
        let (hl, hr) = (&self.hop_left[..n], &self.hop_right[..n]);
        let (dr, di) = (&self.diag_re[..n], &self.diag_im[..n]);
        for _ in 0..stepper.substeps {
            work.term_re[1..=n].copy_from_slice(&psi.re);
            work.term_im[1..=n].copy_from_slice(&psi.im);
            for k in 1..=stepper.order {
                let c = dt / k as f64;
                let (xr, xi) = (&work.term_re[..n + 2], &work.term_im[..n + 2]);
                let (yr, yi) = (&mut work.next_re[1..=n], &mut work.next_im[1..=n]);
                let (pr, pi) = (&mut psi.re[..n], &mut psi.im[..n]);
                // y = −i c H x, accumulated into ψ in the same pass.
                for i in 0..n {
                    let ar =
                        hl[i] * xr[i] + hr[i] * xr[i + 2] + dr[i] * xr[i + 1] - di[i] * xi[i + 1];
                    let ai =
                        hl[i] * xi[i] + hr[i] * xi[i + 2] + dr[i] * xi[i + 1] + di[i] * xr[i + 1];
                    let (nr, ni) = (c * ai, -c * ar);
                    yr[i] = nr;
                    yi[i] = ni;
                    pr[i] += nr;
                    pi[i] += ni;
                }
                std::mem::swap(&mut work.term_re, &mut work.next_re);
                std::mem::swap(&mut work.term_im, &mut work.next_im);
            }
        }
    }

    /// Advances `psi` by `t` in one call.
    pub fn evolve(&self, psi: &mut State, t: f64) {
        let stepper = self.stepper(t);
        let mut work = self.workspace();
        self.step(&stepper, psi, &mut work);
    }
}

/// Observable sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `n` evenly spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` log-spaced points from `start` to `end` inclusive.
pub fn logspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    linspace(start.ln(), end.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidInput(
            "time grid must be finite and non-negative".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "time grid must be non-decreasing".into(),
        ));
    }
    Ok(())
}

/// Propagates `|initial_site⟩` across `grid` and returns the survival
/// probability `‖ψ(t)‖²` and the tick density `Γ|ψ_N(t)|²`.
pub fn propagate_timeseries(
    matrix: &Tridiagonal<Complex64>,
    initial_site: usize,
    grid: &[f64],
) -> Result<(TimeSeries, TimeSeries)> {
    check_grid(grid)?;
    let prop = Propagator::new(matrix)?;
    let n = prop.dim();
    if initial_site >= n {
        return Err(Error::InvalidInput(format!(
            "initial site {initial_site} outside chain of {n}"
        )));
    }
    let gamma = prop.gamma();
    let mut psi = State::site(n, initial_site);
    let mut work = prop.workspace();
    let mut now = 0.0;
    let mut survival = Vec::with_capacity(grid.len());
    let mut tick = Vec::with_capacity(grid.len());
    let mut cached: Option<(f64, Stepper)> = None;
    for &t in grid {
        let dt = t - now;
        if dt > 0.0 {
            let stepper = match cached {
                Some((h, s)) if h == dt => s,
                _ => {
                    let s = prop.stepper(dt);
                    cached = Some((dt, s));
                    s
                }
            };
            prop.step(&stepper, &mut psi, &mut work);
            now = t;
        }
        let s = psi.norm_sqr();
        if !s.is_finite() {
            return Err(Error::Propagation(format!("state diverged at t = {t}")));
        }
        survival.push(s);
        tick.push(gamma * psi.norm_sqr_at(n - 1));
    }
    Ok((
        TimeSeries {
            times: grid.to_vec(),
            values: survival,
        },
        TimeSeries {
            times: grid.to_vec(),
            values: tick,
        },
    ))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    /// Per-panel tolerance relative to the accumulated integral.
    pub rel_tol: f64,
    /// With no end time, integration stops once `S(t)` falls below this.
    pub survival_floor: f64,
    /// Hard limit on the integration time with no end time.
    pub max_time: f64,
    pub order: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            rel_tol: 1e-12,
            survival_floor: 1e-14,
            max_time: 1e6,
            order: 10,
        }
    }
}

/// `∫S dt` and `∫t S dt` over `[start, end]`, plus the state at `end`.
#[derive(Debug, Clone)]
pub struct SurvivalIntegrals {
    pub start: f64,
    pub end: f64,
    pub int_s: f64,
    pub int_ts: f64,
    pub s_end: f64,
    pub state_end: State,
}

/// Adaptive composite Gauss–Legendre quadrature of the survival probability
/// along the trajectory started from `psi` at time `start`.
///
/// Each panel is accepted when the whole-panel rule agrees with the two
/// half-panel rules. With `end = None` integration continues until the
/// survival drops below the floor and an exponential tail is added.
pub fn integrate_survival(
    prop: &Propagator,
    psi: State,
    start: f64,
    end: Option<f64>,
    opts: &QuadratureOptions,
) -> Result<SurvivalIntegrals> {
    let (gx, gw) = gauss_legendre(opts.order);
    let mut work = prop.workspace();
    let mut a = start;
    let mut psi_a = psi;
    let mut s_a = psi_a.norm_sqr();
    let mut width = 1.0 / prop.norm_bound().max(1e-3);
    let min_width = 1e-9;
    let (mut int_s, mut int_ts) = (0.0, 0.0);

    loop {
        if let Some(e) = end {
            if a >= e {
                break;
            }
            width = width.min(e - a);
        }
        let b = a + width;
        let mid = a + 0.5 * width;
        // (time, panel id: 0 whole, 1 left, 2 right, 3 endpoint, weight index)
        let mut nodes: Vec<(f64, u8, usize)> = Vec::with_capacity(3 * gx.len() + 1);
        for (i, &x) in gx.iter().enumerate() {
            nodes.push((a + 0.5 * width * (x + 1.0), 0, i));
            nodes.push((a + 0.25 * width * (x + 1.0), 1, i));
            nodes.push((mid + 0.25 * width * (x + 1.0), 2, i));
        }
        nodes.push((b, 3, 0));
        nodes.sort_by(|p, q| p.0.total_cmp(&q.0));

        let mut psi = psi_a.clone();
        let mut now = a;
        let (mut whole_s, mut whole_ts, mut half_s, mut half_ts) = (0.0, 0.0, 0.0, 0.0);
        for &(t, panel, i) in &nodes {
            let stepper = prop.stepper(t - now);
            prop.step(&stepper, &mut psi, &mut work);
            now = t;
            let s = psi.norm_sqr();
            match panel {
                0 => {
                    whole_s += gw[i] * s;
                    whole_ts += gw[i] * t * s;
                }
                1 | 2 => {
                    half_s += gw[i] * s;
                    half_ts += gw[i] * t * s;
                }
                _ => {}
            }
        }
        let (whole_s, whole_ts) = (0.5 * width * whole_s, 0.5 * width * whole_ts);
        let (half_s, half_ts) = (0.25 * width * half_s, 0.25 * width * half_ts);
        let s_b = psi.norm_sqr();
        if !s_b.is_finite() {
            return Err(Error::Propagation(format!("state diverged near t = {b}")));
        }

        let err_s = (whole_s - half_s).abs();
        let err_ts = (whole_ts - half_ts).abs();
        let tol_s = opts.rel_tol * (int_s + half_s).abs().max(1e-300);
        let tol_ts = opts.rel_tol * (int_ts + half_ts).abs().max(1e-300);
        if (err_s <= tol_s && err_ts <= tol_ts) || width <= min_width {
            int_s += half_s;
            int_ts += half_ts;
            let s_prev = s_a;
            let accepted = b - a;
            a = b;
            psi_a = psi;
            s_a = s_b;
            if err_s <= tol_s / 1024.0 && err_ts <= tol_ts / 1024.0 {
                width *= 2.0;
            }
            if end.is_none() {
                if s_a < opts.survival_floor {
                    if s_a > 0.0 && s_a < s_prev {
                        let rate = ((s_prev / s_a).ln() / accepted).max(1e-300);
                        int_s += s_a / rate;
                        int_ts += s_a * (a / rate + 1.0 / (rate * rate));
                    }
                    break;
                }
                if a > opts.max_time {
                    return Err(Error::Propagation(format!(
                        "survival {s_a:e} has not decayed by t = {a:e}"
                    )));
                }
            }
        } else {
            width *= 0.5;
        }
    }

    Ok(SurvivalIntegrals {
        start,
        end: a,
        int_s,
        int_ts,
        s_end: s_a,
        state_end: psi_a,
    })
}
