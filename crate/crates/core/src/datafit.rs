//! Smooth data-fit terms `φ(f(θ), y)`.
//!
//! All fits are separable: `φ = Σᵢ φᵢ(θᵢ, yᵢ)`. The reparameterized fits
//! are convex in `θ` with bounded second derivative, which is what lets the
//! outer solver take long gradient steps. The baselines are the plain
//! negative log-likelihoods in the intensities `x` and have unbounded
//! curvature at the edge of their domain.

use std::sync::OnceLock;

use crate::reparam::{sigmoid, softplus, BernoulliTails, ReparamFamily};
use crate::{Error, Image, NoiseModel, Result};

/// Exponential-family ingredients for `φ = Σ A(g(f(θ))) − g(f(θ)) T(y)`.
///
/// The base measure is θ-independent and is left out.
#[derive(Debug, Clone, Copy)]
pub struct ExpFamilySpec {
    pub name: &'static str,
    /// Log-partition `A(η)`.
    pub log_partition: fn(f64) -> f64,
    /// `A′(η)`.
    pub log_partition_deriv: fn(f64) -> f64,
    /// Sufficient statistic `T(y)`.
    pub sufficient_stat: fn(f64) -> f64,
    /// Natural parameter `η = g(x)`.
    pub natural: fn(f64) -> f64,
    /// `g′(x)`.
    pub natural_deriv: fn(f64) -> f64,
    /// `x = g⁻¹(η)`.
    pub natural_inv: fn(f64) -> f64,
}

impl ExpFamilySpec {
    pub fn bernoulli() -> Self {
        Self {
            name: "bernoulli",
            log_partition: softplus,
            log_partition_deriv: sigmoid,
            sufficient_stat: |y| y,
            natural: crate::reparam::logit,
            natural_deriv: |x| 1.0 / (x * (1.0 - x)),
            natural_inv: sigmoid,
        }
    }

    pub fn poisson() -> Self {
        Self {
            name: "poisson",
            log_partition: f64::exp,
            log_partition_deriv: f64::exp,
            sufficient_stat: |y| y,
            natural: f64::ln,
            natural_deriv: |x| 1.0 / x,
            natural_inv: f64::exp,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FitKind {
    BernoulliReparam {
        k: f64,
    },
    PoissonLogExp {
        k: f64,
    },
    PoissonPiecewise {
        k: f64,
    },
    SpeckleReparam {
        k: f64,
        looks: u32,
    },
    BernoulliBaseline,
    PoissonBaseline,
    SpeckleBaseline {
        looks: u32,
    },
    ExpFamily {
        spec: ExpFamilySpec,
        family: ReparamFamily,
    },
}

/// A data-fit bound to fixed observations `y`.
#[derive(Debug, Clone)]
pub struct DataFit {
    kind: FitKind,
    y: Image,
    y_max: f64,
}

/// Curvature of `−log(k·log(1+eᶿ))` per unit of `y`:
/// `σ(σ − (1−σ)·sp) / sp²`. Nonnegative, vanishing in both tails.
fn log_exp_curvature_per_count(t: f64) -> f64 {
    let s = sigmoid(t);
    let sp = softplus(t);
    if sp == 0.0 {
        return 0.0;
    }
    s * (s - (1.0 - s) * sp) / (sp * sp)
}

/// Supremum over θ of [`log_exp_curvature_per_count`], found once by a
/// dense scan plus golden-section refinement.
fn log_exp_curvature_sup() -> f64 {
    static SUP: OnceLock<f64> = OnceLock::new();
    *SUP.get_or_init(|| {
        let f = log_exp_curvature_per_count;
        let (mut best_t, mut best) = (0.0, f(0.0));
        let mut t = -40.0;
        while t <= 40.0 {
            let v = f(t);
            if v > best {
                best = v;
                best_t = t;
            }
            t += 1e-3;
        }
        let (mut a, mut b) = (best_t - 1e-3, best_t + 1e-3);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(f(0.5 * (a + b))) * (1.0 + 1e-9)
    })
}

impl DataFit {
    pub fn new(kind: FitKind, y: Image) -> Result<Self> {
        let check_k = |k: f64| {
            if k.is_finite() && k > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "k must be positive, got {k}"
                )))
            }
        };
        let check_looks = |s: u32| {
            if s >= 1 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(
                    "speckle needs at least one look".into(),
                ))
            }
        };
        let bernoulli_y = || {
            if y.data().iter().all(|v| (0.0..=1.0).contains(v)) {
                Ok(())
            } else {
                Err(Error::Domain(
                    "Bernoulli observations must lie in [0, 1]".into(),
                ))
            }
        };
        let nonneg_y = || {
            if y.data().iter().all(|&v| v >= 0.0) {
                Ok(())
            } else {
                Err(Error::Domain("observations must be nonnegative".into()))
            }
        };
        match kind {
            FitKind::BernoulliReparam { k } => {
                ReparamFamily::bernoulli(k)?;
                bernoulli_y()?;
            }
            FitKind::PoissonLogExp { k } | FitKind::PoissonPiecewise { k } => {
                check_k(k)?;
                nonneg_y()?;
            }
            FitKind::SpeckleReparam { k, looks } => {
                check_k(k)?;
                check_looks(looks)?;
                nonneg_y()?;
            }
            FitKind::BernoulliBaseline => bernoulli_y()?,
            FitKind::PoissonBaseline => nonneg_y()?,
            FitKind::SpeckleBaseline { looks } => {
                check_looks(looks)?;
                nonneg_y()?;
            }
            FitKind::ExpFamily { family, .. } => family.validate()?,
        }
        let y_max = y.max();
        Ok(Self { kind, y, y_max })
    }

    pub fn bernoulli_reparam(k: f64, y: Image) -> Result<Self> {
        Self::new(FitKind::BernoulliReparam { k }, y)
    }

    pub fn poisson_log_exp(k: f64, y: Image) -> Result<Self> {
        Self::new(FitKind::PoissonLogExp { k }, y)
    }

    pub fn poisson_piecewise(k: f64, y: Image) -> Result<Self> {
        Self::new(FitKind::PoissonPiecewise { k }, y)
    }

    pub fn speckle_reparam(k: f64, looks: u32, y: Image) -> Result<Self> {
        Self::new(FitKind::SpeckleReparam { k, looks }, y)
    }

    pub fn bernoulli_baseline(y: Image) -> Result<Self> {
        Self::new(FitKind::BernoulliBaseline, y)
    }

    pub fn poisson_baseline(y: Image) -> Result<Self> {
        Self::new(FitKind::PoissonBaseline, y)
    }

    pub fn speckle_baseline(looks: u32, y: Image) -> Result<Self> {
        Self::new(FitKind::SpeckleBaseline { looks }, y)
    }

    pub fn exp_family(spec: ExpFamilySpec, family: ReparamFamily, y: Image) -> Result<Self> {
        Self::new(FitKind::ExpFamily { spec, family }, y)
    }

    /// The proposed fit for `model` under `family`; `Identity` selects the
    /// intensity-domain baseline.
    pub fn for_model(model: NoiseModel, family: ReparamFamily, y: Image) -> Result<Self> {
        let kind = match (model, family) {
            (NoiseModel::Bernoulli, ReparamFamily::Identity) => FitKind::BernoulliBaseline,
            (NoiseModel::Poisson, ReparamFamily::Identity) => FitKind::PoissonBaseline,
            (NoiseModel::Speckle { looks }, ReparamFamily::Identity) => {
                FitKind::SpeckleBaseline { looks }
            }
            (NoiseModel::Bernoulli, ReparamFamily::BernoulliK(k)) => {
                FitKind::BernoulliReparam { k }
            }
            (NoiseModel::Poisson, ReparamFamily::PoissonLogExpK(k)) => FitKind::PoissonLogExp { k },
            (NoiseModel::Poisson, ReparamFamily::PoissonPiecewiseK(k)) => {
                FitKind::PoissonPiecewise { k }
            }
            (NoiseModel::Speckle { looks }, ReparamFamily::SpeckleK(k)) => {
                FitKind::SpeckleReparam { k, looks }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "no {} data-fit composes with {family}",
                    model.name()
                )))
            }
        };
        Self::new(kind, y)
    }

    pub fn kind(&self) -> &FitKind {
        &self.kind
    }

    pub fn observations(&self) -> &Image {
        &self.y
    }

    pub fn is_baseline(&self) -> bool {
        matches!(
            self.kind,
            FitKind::BernoulliBaseline | FitKind::PoissonBaseline | FitKind::SpeckleBaseline { .. }
        )
    }

    /// The reparameterization `f` this fit composes with.
    pub fn family(&self) -> ReparamFamily {
        match self.kind {
            FitKind::BernoulliReparam { k } => ReparamFamily::BernoulliK(k),
            FitKind::PoissonLogExp { k } => ReparamFamily::PoissonLogExpK(k),
            FitKind::PoissonPiecewise { k } => ReparamFamily::PoissonPiecewiseK(k),
            FitKind::SpeckleReparam { k, .. } => ReparamFamily::SpeckleK(k),
            FitKind::ExpFamily { family, .. } => family,
            FitKind::BernoulliBaseline
            | FitKind::PoissonBaseline
            | FitKind::SpeckleBaseline { .. } => ReparamFamily::Identity,
        }
    }

    /// Box the baseline iterates are projected onto after each prox step.
    pub fn baseline_domain(&self) -> Option<(f64, f64)> {
        const EPS: f64 = 1e-8;
        match self.kind {
            FitKind::BernoulliBaseline => Some((EPS, 1.0 - EPS)),
            FitKind::PoissonBaseline | FitKind::SpeckleBaseline { .. } => {
                Some((EPS, f64::INFINITY))
            }
            _ => None,
        }
    }

    /// Per-pixel `(φᵢ, ∂φᵢ/∂θᵢ)`. A non-finite value marks a domain violation.
    #[inline]
    pub fn pixel(&self, t: f64, y: f64) -> (f64, f64) {
        match self.kind {
            FitKind::BernoulliReparam { k } => {
                let tails = BernoulliTails::new(k);
                match tails.tail_eta(t) {
                    // softplus(η) − yη and σ(η) − y without cancellation in the tails
                    Some(eta) => (
                        (1.0 - y) * softplus(eta) + y * softplus(-eta),
                        ((1.0 - y) * sigmoid(eta) - y * sigmoid(-eta)) * tails.slope,
                    ),
                    None => (
                        -(1.0 - y) * (-t).ln_1p() - y * t.ln(),
                        (1.0 - y) / (1.0 - t) - y / t,
                    ),
                }
            }
            FitKind::PoissonLogExp { k } => {
                let e = (-t.abs()).exp();
                let sp = t.max(0.0) + e.ln_1p();
                let sig = if t >= 0.0 {
                    1.0 / (1.0 + e)
                } else {
                    e / (1.0 + e)
                };
                // log sp and σ/sp lose all digits once sp underflows toward eᵗ
                let (ln_sp, ratio) = if t < -30.0 {
                    (t - 0.5 * e, 1.0 - 0.5 * e)
                } else {
                    (sp.ln(), sig / sp)
                };
                (k * sp - y * (k.ln() + ln_sp), k * sig - y * ratio)
            }
            FitKind::PoissonPiecewise { k } => {
                if t <= 1.0 / k {
                    let eta = k * t - k.ln() - 1.0;
                    let e = eta.exp();
                    (e - y * eta, k * (e - y))
                } else {
                    (t - y * t.ln(), 1.0 - y / t)
                }
            }
            FitKind::SpeckleReparam { k, looks } => {
                let s = f64::from(looks);
                if t <= 0.0 {
                    let e = t.exp();
                    (s * (y * k * e - t - k.ln()), s * (y * k * e - 1.0))
                } else {
                    let u = 1.0 + t;
                    (s * (y * k * u - u.ln() - k.ln()), s * (y * k - 1.0 / u))
                }
            }
            FitKind::BernoulliBaseline => {
                let (mut v, mut g) = (0.0, 0.0);
                if y > 0.0 {
                    v -= y * t.ln();
                    g -= y / t;
                }
                if y < 1.0 {
                    v -= (1.0 - y) * (-t).ln_1p();
                    g += (1.0 - y) / (1.0 - t);
                }
                if !(0.0..=1.0).contains(&t) {
                    v = f64::NAN;
                }
                (v, g)
            }
            FitKind::PoissonBaseline => {
                if t < 0.0 {
                    (f64::NAN, f64::NAN)
                } else if y > 0.0 {
                    (t - y * t.ln(), 1.0 - y / t)
                } else {
                    (t, 1.0)
                }
            }
            FitKind::SpeckleBaseline { looks } => {
                let s = f64::from(looks);
                if t <= 0.0 {
                    (f64::NAN, f64::NAN)
                } else {
                    (s * (t.ln() + y / t), s * (1.0 / t - y / (t * t)))
                }
            }
            FitKind::ExpFamily { spec, family } => {
                if !family.in_domain(t) {
                    return (f64::NAN, f64::NAN);
                }
                let x = family.forward_scalar(t);
                let eta = (spec.natural)(x);
                let ty = (spec.sufficient_stat)(y);
                let v = (spec.log_partition)(eta) - eta * ty;
                let g = ((spec.log_partition_deriv)(eta) - ty)
                    * (spec.natural_deriv)(x)
                    * family.derivative_scalar(t);
                (v, g)
            }
        }
    }

    fn check_dims(&self, theta: &Image) -> Result<()> {
        theta.same_dims(&self.y)
    }

    /// Value and gradient in one sweep; `None` on a domain violation.
    pub(crate) fn value_and_gradient_raw(&self, theta: &Image, grad: &mut [f64]) -> Option<f64> {
        let mut total = 0.0;
        for ((g, &t), &y) in grad.iter_mut().zip(theta.data()).zip(self.y.data()) {
            let (v, d) = self.pixel(t, y);
            total += v;
            *g = d;
        }
        (total.is_finite() && grad.iter().all(|g| g.is_finite())).then_some(total)
    }

    pub fn value(&self, theta: &Image) -> Result<f64> {
        self.check_dims(theta)?;
        let mut total = 0.0;
        for (idx, (&t, &y)) in theta.data().iter().zip(self.y.data()).enumerate() {
            let (v, _) = self.pixel(t, y);
            if !v.is_finite() {
                return Err(self.domain_error(idx, t, y));
            }
            total += v;
        }
        Ok(total)
    }

    pub fn gradient(&self, theta: &Image) -> Result<Image> {
        self.value_and_gradient(theta).map(|(_, g)| g)
    }

    pub fn value_and_gradient(&self, theta: &Image) -> Result<(f64, Image)> {
        self.check_dims(theta)?;
        let mut grad = vec![0.0; theta.len()];
        match self.value_and_gradient_raw(theta, &mut grad) {
            Some(v) => Ok((v, Image::from_raw(theta.rows(), theta.cols(), grad))),
            None => {
                let idx = theta
                    .data()
                    .iter()
                    .zip(self.y.data())
                    .position(|(&t, &y)| {
                        let (v, g) = self.pixel(t, y);
                        !(v.is_finite() && g.is_finite())
                    })
                    .unwrap_or(0);
                Err(self.domain_error(idx, theta.data()[idx], self.y.data()[idx]))
            }
        }
    }

    fn domain_error(&self, idx: usize, t: f64, y: f64) -> Error {
        Error::Domain(format!(
            "data-fit {:?} undefined at θ = {t}, y = {y} (pixel {idx})",
            self.kind
        ))
    }

    /// Upper bound on `sup_θ maxᵢ ∂²φᵢ/∂θᵢ²`; `+∞` for the baselines.
    pub fn lipschitz_bound(&self) -> f64 {
        let y_max = self.y_max.max(0.0);
        match self.kind {
            FitKind::BernoulliReparam { k } => {
                let c = k * (1.0 - k);
                let tails = 1.0 / c;
                // identity segment: (1−y)/(1−θ)² + y/θ², convex in θ, so the
                // sup sits at θ = k or θ = 1−k; affine in y, so at y ∈ {min, max}
                let y_min = self.y.min().max(0.0);
                let middle = [y_min, y_max]
                    .iter()
                    .flat_map(|&y| {
                        [
                            (1.0 - y) / ((1.0 - k) * (1.0 - k)) + y / (k * k),
                            (1.0 - y) / (k * k) + y / ((1.0 - k) * (1.0 - k)),
                        ]
                    })
                    .fold(0.0, f64::max);
                tails.max(middle)
            }
            FitKind::PoissonLogExp { k } => k / 4.0 + y_max * log_exp_curvature_sup(),
            FitKind::PoissonPiecewise { k } => k.max(y_max * k * k),
            FitKind::SpeckleReparam { k, looks } => f64::from(looks) * (k * y_max).max(1.0),
            FitKind::BernoulliBaseline
            | FitKind::PoissonBaseline
            | FitKind::SpeckleBaseline { .. } => f64::INFINITY,
            FitKind::ExpFamily { .. } => self.grid_curvature_bound(),
        }
    }

    /// Largest second difference of `φᵢ` over θ ∈ [−50, 50] (step 0.01)
    /// for up to 64 representative observation values, padded by 10%.
    fn grid_curvature_bound(&self) -> f64 {
        let mut ys: Vec<f64> = self.y.data().to_vec();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        if ys.len() > 64 {
            let n = ys.len();
            ys = (0..64).map(|i| ys[i * (n - 1) / 63]).collect();
        }
        let h = 0.01;
        let mut best = 0.0f64;
        for &y in &ys {
            let mut prev2 = self.pixel(-50.0, y).0;
            let mut prev1 = self.pixel(-50.0 + h, y).0;
            for step in 2..=10_000 {
                let cur = self.pixel(-50.0 + step as f64 * h, y).0;
                let d2 = (cur - 2.0 * prev1 + prev2) / (h * h);
                if !d2.is_finite() {
                    return f64::INFINITY;
                }
                best = best.max(d2);
                prev2 = prev1;
                prev1 = cur;
            }
        }
        1.1 * best
    }
}

/// Generic exponential-family data-fit `Σ A(g(f(θ))) − g(f(θ)) T(y)`.
pub fn exp_family_value(
    spec: ExpFamilySpec,
    family: ReparamFamily,
    theta: &Image,
    y: &Image,
) -> Result<f64> {
    DataFit::exp_family(spec, family, y.clone())?.value(theta)
}
