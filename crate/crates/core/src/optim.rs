//! Isotropic total variation, its proximal operator (FGP on the dual) and a
//! SpaRSA-style proximal-gradient solver with Barzilai-Borwein steps and a
//! nonmonotone acceptance test.

use serde::{Deserialize, Serialize};

use crate::{DataFit, Error, Image, ReparamFamily, Result};

/// Discrete isotropic TV: Euclidean norms of forward differences on the
/// `(rows−1) × (cols−1)` interior, plus 1-D absolute differences along the
/// last column and the last row.
pub fn tv_norm(x: &Image) -> f64 {
    tv_raw(x.data(), x.rows(), x.cols())
}

fn tv_raw(x: &[f64], m: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..m {
        let row = &x[i * n..(i + 1) * n];
        if i + 1 < m {
            let below = &x[(i + 1) * n..(i + 2) * n];
            for j in 0..n - 1 {
                let dv = row[j] - below[j];
                let dh = row[j] - row[j + 1];
                total += (dv * dv + dh * dh).sqrt();
            }
            total += (row[n - 1] - below[n - 1]).abs();
        } else {
            for j in 0..n - 1 {
                total += (row[j] - row[j + 1]).abs();
            }
        }
    }
    total
}

/// FGP state for `argmin_θ ½‖θ − s‖² + w·TV(θ)`.
///
/// Dual variables `p` (vertical) and `q` (horizontal) are stored on the full
/// grid; `p` on the last row and `q` on the last column stay zero. The
/// dual is kept between calls so consecutive solves warm-start.
#[derive(Debug, Clone)]
pub struct TvProx {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    s: Vec<f64>,
    x: Vec<f64>,
}

impl TvProx {
    pub fn new(rows: usize, cols: usize) -> Self {
        let len = rows * cols;
        Self {
            rows,
            cols,
            p: vec![0.0; len],
            q: vec![0.0; len],
            r: vec![0.0; len],
            s: vec![0.0; len],
            x: vec![0.0; len],
        }
    }

    pub fn reset(&mut self) {
        self.p.fill(0.0);
        self.q.fill(0.0);
    }

    /// `out = b − w·L(p, q)` where `L` is the adjoint of the difference map.
    fn primal(b: &[f64], p: &[f64], q: &[f64], w: f64, n: usize, out: &mut [f64]) {
        for (i, ((orow, brow), (prow, qrow))) in out
            .chunks_exact_mut(n)
            .zip(b.chunks_exact(n))
            .zip(p.chunks_exact(n).zip(q.chunks_exact(n)))
            .enumerate()
        {
            orow[0] = brow[0] - w * (prow[0] + qrow[0]);
            for j in 1..n {
                orow[j] = brow[j] - w * (prow[j] + qrow[j] - qrow[j - 1]);
            }
            if i > 0 {
                let above = &p[(i - 1) * n..i * n];
                for (o, a) in orow.iter_mut().zip(above) {
                    *o += w * a;
                }
            }
        }
    }

    /// Runs `iters` FGP iterations and writes the primal estimate to `out`.
    /// A nonpositive weight returns `b` unchanged.
    pub fn prox(&mut self, b: &[f64], weight: f64, iters: usize, out: &mut [f64]) {
        let (m, n) = (self.rows, self.cols);
        assert_eq!(b.len(), m * n);
        assert_eq!(out.len(), m * n);
        if weight <= 0.0 || (m == 1 && n == 1) {
            out.copy_from_slice(b);
            return;
        }
        let step = 1.0 / (8.0 * weight);
        self.r.copy_from_slice(&self.p);
        self.s.copy_from_slice(&self.q);
        let mut t = 1.0f64;
        for _ in 0..iters {
            Self::primal(b, &self.r, &self.s, weight, n, &mut self.x);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let mom = (t - 1.0) / t_next;
            let x = &self.x;
            for i in 0..m {
                let row = i * n..(i + 1) * n;
                let xr = &x[row.clone()];
                let p = &mut self.p[row.clone()];
                let q = &mut self.q[row.clone()];
                let r = &mut self.r[row.clone()];
                let s = &mut self.s[row];
                if i + 1 < m {
                    let xb = &x[(i + 1) * n..(i + 2) * n];
                    for j in 0..n - 1 {
                        let pv = r[j] + step * (xr[j] - xb[j]);
                        let qv = s[j] + step * (xr[j] - xr[j + 1]);
                        let scale = (pv * pv + qv * qv).sqrt().max(1.0);
                        let (pn, qn) = (pv / scale, qv / scale);
                        r[j] = pn + mom * (pn - p[j]);
                        s[j] = qn + mom * (qn - q[j]);
                        p[j] = pn;
                        q[j] = qn;
                    }
                    let j = n - 1;
                    let pn = (r[j] + step * (xr[j] - xb[j])).clamp(-1.0, 1.0);
                    r[j] = pn + mom * (pn - p[j]);
                    p[j] = pn;
                } else {
                    for j in 0..n - 1 {
                        let qn = (s[j] + step * (xr[j] - xr[j + 1])).clamp(-1.0, 1.0);
                        s[j] = qn + mom * (qn - q[j]);
                        q[j] = qn;
                    }
                }
            }
            t = t_next;
        }
        Self::primal(b, &self.p, &self.q, weight, n, out);
    }
}

/// Approximate `argmin_θ ½‖θ − s‖² + weight·TV(θ)` from a cold start.
pub fn tv_prox(s: &Image, weight: f64, inner_iters: usize) -> Image {
    let mut prox = TvProx::new(s.rows(), s.cols());
    let mut out = vec![0.0; s.len()];
    prox.prox(s.data(), weight, inner_iters, &mut out);
    Image::from_raw(s.rows(), s.cols(), out)
}

/// `½‖θ − s‖² + weight·TV(θ)`.
pub fn prox_objective(theta: &Image, s: &Image, weight: f64) -> f64 {
    let fit: f64 = theta
        .data()
        .iter()
        .zip(s.data())
        .map(|(a, b)| 0.5 * (a - b) * (a - b))
        .sum();
    fit + weight * tv_norm(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Regularization weight τ.
    pub tau: f64,
    pub max_outer_iters: usize,
    /// Stop when `‖θᵗ⁺¹ − θᵗ‖ / max(‖θᵗ‖, 1)` drops below this.
    pub rel_tol: f64,
    /// FGP iterations per proximal step.
    pub inner_iters: usize,
    pub alpha_min: f64,
    /// Lower bound on α as a fraction of the fit's gradient-Lipschitz bound,
    /// applied when that bound is finite. Keeps a near-flat region of the
    /// objective from setting a step that throws steep pixels far away.
    pub lipschitz_floor: f64,
    pub alpha_max: f64,
    /// Step-size curvature used on the first iteration.
    pub alpha_init: f64,
    /// Backtracking factor applied to α on rejection.
    pub eta: f64,
    /// Window of past objective values for the nonmonotone test.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub sigma: f64,
    /// Rejections allowed per outer iteration before the solver gives up.
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            max_outer_iters: 500,
            rel_tol: 1e-5,
            inner_iters: 50,
            alpha_min: 1e-30,
            lipschitz_floor: 0.05,
            alpha_max: 1e30,
            alpha_init: 1.0,
            eta: 2.0,
            memory: 5,
            sigma: 1e-5,
            max_backtracks: 40,
        }
    }
}

impl SolverConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("solver config: {msg}")));
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return bad("tau must be finite and nonnegative");
        }
        if self.max_outer_iters == 0 || self.inner_iters == 0 || self.memory == 0 {
            return bad("iteration counts and memory must be positive");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max) {
            return bad("need 0 < alpha_min < alpha_max");
        }
        if !(self.lipschitz_floor >= 0.0 && self.lipschitz_floor <= 1.0) {
            return bad("lipschitz_floor must lie in [0, 1]");
        }
        if !(self.alpha_init > 0.0) {
            return bad("alpha_init must be positive");
        }
        if !(self.eta > 1.0) {
            return bad("eta must exceed 1");
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad("sigma must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative step fell below `rel_tol`.
    Converged,
    MaxIterations,
    /// No step passed the acceptance test within the backtracking budget.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub theta_hat: Image,
    pub x_hat: Image,
    /// Objective `φ + τ·TV` at `θ⁰` and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Minimizes `φ(f(θ), y) + τ·TV(θ)` starting from `theta0`.
pub fn solve(
    fit: &DataFit,
    family: ReparamFamily,
    config: &SolverConfig,
    theta0: &Image,
) -> Result<SolveResult> {
    if fit.family() != family {
        return Err(Error::InvalidArgument(format!(
            "fit composes with {} but solve was asked for {family}",
            fit.family()
        )));
    }
    run(fit, family, config, theta0.clone(), None)
}

/// Minimizes `φ(x, y) + τ·TV(x)` over intensities, projecting every
/// iterate onto the fit's domain box.
pub fn solve_baseline(fit: &DataFit, config: &SolverConfig, x0: &Image) -> Result<SolveResult> {
    let Some((lo, hi)) = fit.baseline_domain() else {
        return Err(Error::InvalidArgument(format!(
            "{:?} is not an intensity-domain baseline",
            fit.kind()
        )));
    };
    run(
        fit,
        ReparamFamily::Identity,
        config,
        x0.clamp(lo, hi),
        Some((lo, hi)),
    )
}

/// Solves from the default starting point (or `start` when given),
/// dispatching baselines to [`solve_baseline`].
///
/// `start` is a θ image for reparameterized fits and an intensity image for
/// baselines.
pub fn denoise(fit: &DataFit, config: &SolverConfig, start: Option<&Image>) -> Result<SolveResult> {
    let y = fit.observations();
    if fit.is_baseline() {
        solve_baseline(fit, config, start.unwrap_or(y))
    } else {
        let family = fit.family();
        match start {
            Some(theta0) => solve(fit, family, config, theta0),
            None => solve(fit, family, config, &family.initial_theta(y)?),
        }
    }
}

fn run(
    fit: &DataFit,
    family: ReparamFamily,
    config: &SolverConfig,
    theta0: Image,
    bounds: Option<(f64, f64)>,
) -> Result<SolveResult> {
    config.validate()?;
    theta0.same_dims(fit.observations())?;
    let (m, n) = theta0.dims();
    let len = m * n;
    let tau = config.tau;

    let mut theta = theta0;
    let mut grad = vec![0.0; len];
    let f0 = fit
        .value_and_gradient_raw(&theta, &mut grad)
        .ok_or_else(|| Error::Numeric("objective is not finite at the starting point".into()))?;
    let mut trace = vec![f0 + tau * tv_norm(&theta)];

    let mut prox = TvProx::new(m, n);
    let mut step = vec![0.0; len];
    let mut cand = vec![0.0; len];
    let mut cand_grad = vec![0.0; len];
    let lipschitz = fit.lipschitz_bound();
    let alpha_min = if lipschitz.is_finite() {
        (config.lipschitz_floor * lipschitz).clamp(config.alpha_min, config.alpha_max)
    } else {
        config.alpha_min
    };
    let mut alpha = config.alpha_init.clamp(alpha_min, config.alpha_max);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: for _ in 0..config.max_outer_iters {
        let reference = trace[trace.len().saturating_sub(config.memory)..]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut saw_finite = false;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            for ((s, &t), &g) in step.iter_mut().zip(theta.data()).zip(&grad) {
                *s = t - g / alpha;
            }
            prox.prox(&step, tau / alpha, config.inner_iters, &mut cand);
            if let Some((lo, hi)) = bounds {
                cand.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
            }
            let cand_img = Image::from_raw(m, n, std::mem::take(&mut cand));
            let value = fit.value_and_gradient_raw(&cand_img, &mut cand_grad);
            cand = cand_img.into_data();
            if let Some(f) = value {
                saw_finite = true;
                let obj = f + tau * tv_raw(&cand, m, n);
                let dist2: f64 = cand
                    .iter()
                    .zip(theta.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if obj <= reference - 0.5 * config.sigma * alpha * dist2 {
                    accepted = Some((obj, dist2));
                    break;
                }
            }
            alpha *= config.eta;
            if alpha > config.alpha_max {
                break;
            }
        }
        let Some((obj, dist2)) = accepted else {
            if !saw_finite {
                return Err(Error::Numeric(
                    "every trial step left the data-fit domain".into(),
                ));
            }
            termination = Termination::Stalled;
            break 'outer;
        };

        iterations += 1;
        let rel = dist2.sqrt() / theta.norm().max(1.0);

        // Barzilai-Borwein curvature along the accepted step
        let mut dx_dg = 0.0;
        for idx in 0..len {
            dx_dg += (cand[idx] - theta.data()[idx]) * (cand_grad[idx] - grad[idx]);
        }
        if dist2 > 0.0 {
            let bb = dx_dg / dist2;
            // nonpositive curvature (nonconvex fits): keep the last accepted α
            if bb > 0.0 && bb.is_finite() {
                alpha = bb.clamp(alpha_min, config.alpha_max);
            }
        }

        let next = Image::from_raw(m, n, std::mem::replace(&mut cand, theta.into_data()));
        theta = next;
        std::mem::swap(&mut grad, &mut cand_grad);
        trace.push(obj);

        // a tiny step taken under a huge α is not a stationary point: the
        // objective must also have flattened over the acceptance window
        let window = &trace[trace.len().saturating_sub(config.memory + 1)..];
        let drop = window.iter().copied().fold(f64::NEG_INFINITY, f64::max) - obj;
        if rel < config.rel_tol && drop <= config.rel_tol * obj.abs().max(1.0) {
            termination = Termination::Converged;
            break;
        }
    }

    let x_hat = Image::new(
        m,
        n,
        theta
            .data()
            .iter()
            .map(|&t| family.forward_scalar(t))
            .collect(),
    )
    .map_err(|e| Error::Numeric(format!("estimate left the intensity range: {e}")))?;
    Ok(SolveResult {
        theta_hat: theta,
        x_hat,
        objective_trace: trace,
        iterations,
        converged: termination == Termination::Converged,
        termination,
    })
}
