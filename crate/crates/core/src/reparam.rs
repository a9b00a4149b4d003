//! Reparameterization families `x = f(θ)`.
//!
//! Each family is an elementwise map from the optimization variable `θ`
//! to image intensities, chosen so that the matching data-fit is convex in
//! `θ` with a bounded second derivative. The one-parameter families are:
//!
//! | family              | `f(θ)`                                                        |
//! |---------------------|---------------------------------------------------------------|
//! | `BernoulliK`        | logistic tails glued to the identity on `(k, 1−k]`            |
//! | `PoissonPiecewiseK` | `exp(kθ − 1)/k` for `θ ≤ 1/k`, identity above                 |
//! | `PoissonLogExpK`    | `k·log(1 + eᶿ)`                                               |
//! | `SpeckleK`          | `1/(k·eᶿ)` for `θ ≤ 0`, `1/(k(1+θ))` above (decreasing)       |
//!
//! plus the parameter-free `Identity`, `SpeckleInv` (`1/θ`) and
//! `SpeckleExp` (`e^{−θ}`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Image, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum ReparamFamily {
    Identity,
    BernoulliK(f64),
    PoissonPiecewiseK(f64),
    PoissonLogExpK(f64),
    SpeckleK(f64),
    SpeckleInv,
    SpeckleExp,
}

/// Numerically stable `log(1 + eᶿ)`.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(x / (1 − x))` for `x ∈ (0, 1)`.
pub fn logit(x: f64) -> f64 {
    x.ln() - (-x).ln_1p()
}

/// `log(eᵘ − 1)` for `u > 0`.
fn log_expm1(u: f64) -> f64 {
    if u > 1.0 {
        u + (-(-u).exp()).ln_1p()
    } else {
        u.exp_m1().ln()
    }
}

/// Slope and offsets of the Bernoulli logistic tails: `g(f(θ)) = aθ + b`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BernoulliTails {
    pub k: f64,
    /// `1 / (k(1−k))`
    pub slope: f64,
    pub low_offset: f64,
    pub high_offset: f64,
}

impl BernoulliTails {
    pub fn new(k: f64) -> Self {
        let c = k * (1.0 - k);
        let lk = (k / (1.0 - k)).ln();
        Self {
            k,
            slope: 1.0 / c,
            low_offset: lk - 1.0 / (1.0 - k),
            high_offset: -lk - 1.0 / k,
        }
    }

    /// Natural parameter `g(f(θ))` on the tail that contains `θ`, or `None`
    /// on the identity segment.
    pub fn tail_eta(&self, theta: f64) -> Option<f64> {
        if theta <= self.k {
            Some(self.slope * theta + self.low_offset)
        } else if theta > 1.0 - self.k {
            Some(self.slope * theta + self.high_offset)
        } else {
            None
        }
    }
}

impl ReparamFamily {
    pub fn identity() -> Self {
        ReparamFamily::Identity
    }

    pub fn bernoulli(k: f64) -> Result<Self> {
        // at k = 0.5 the identity segment is empty and both tails are σ(4θ − 2)
        if !(k > 0.0 && k <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "Bernoulli family needs k in (0, 0.5], got {k}"
            )));
        }
        Ok(ReparamFamily::BernoulliK(k))
    }

    pub fn poisson_piecewise(k: f64) -> Result<Self> {
        Self::positive_k(k).map(ReparamFamily::PoissonPiecewiseK)
    }

    pub fn poisson_log_exp(k: f64) -> Result<Self> {
        Self::positive_k(k).map(ReparamFamily::PoissonLogExpK)
    }

    pub fn speckle(k: f64) -> Result<Self> {
        Self::positive_k(k).map(ReparamFamily::SpeckleK)
    }

    fn positive_k(k: f64) -> Result<f64> {
        if k.is_finite() && k > 0.0 {
            Ok(k)
        } else {
            Err(Error::InvalidArgument(format!(
                "family parameter k must be positive, got {k}"
            )))
        }
    }

    /// Re-checks the parameter invariant; enum literals bypass the constructors.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReparamFamily::BernoulliK(k) => Self::bernoulli(k).map(|_| ()),
            ReparamFamily::PoissonPiecewiseK(k)
            | ReparamFamily::PoissonLogExpK(k)
            | ReparamFamily::SpeckleK(k) => Self::positive_k(k).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn k(&self) -> Option<f64> {
        match *self {
            ReparamFamily::BernoulliK(k)
            | ReparamFamily::PoissonPiecewiseK(k)
            | ReparamFamily::PoissonLogExpK(k)
            | ReparamFamily::SpeckleK(k) => Some(k),
            _ => None,
        }
    }

    /// `true` for the speckle maps, which decrease in `θ`.
    pub fn is_decreasing(&self) -> bool {
        matches!(
            self,
            ReparamFamily::SpeckleK(_) | ReparamFamily::SpeckleInv | ReparamFamily::SpeckleExp
        )
    }

    /// Points where the piecewise definition switches branch.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            ReparamFamily::BernoulliK(k) => vec![k, 1.0 - k],
            ReparamFamily::PoissonPiecewiseK(k) => vec![1.0 / k],
            ReparamFamily::SpeckleK(_) => vec![0.0],
            _ => vec![],
        }
    }

    /// Whether `θ` lies in the family's parameter domain.
    pub fn in_domain(&self, theta: f64) -> bool {
        theta.is_finite()
            && match self {
                ReparamFamily::SpeckleInv => theta > 0.0,
                _ => true,
            }
    }

    pub fn forward_scalar(&self, t: f64) -> f64 {
        match *self {
            ReparamFamily::Identity => t,
            ReparamFamily::BernoulliK(k) => match BernoulliTails::new(k).tail_eta(t) {
                Some(eta) => sigmoid(eta),
                None => t,
            },
            ReparamFamily::PoissonPiecewiseK(k) => {
                if t <= 1.0 / k {
                    (k * t - 1.0).exp() / k
                } else {
                    t
                }
            }
            ReparamFamily::PoissonLogExpK(k) => k * softplus(t),
            ReparamFamily::SpeckleK(k) => {
                if t <= 0.0 {
                    (-t).exp() / k
                } else {
                    1.0 / (k * (1.0 + t))
                }
            }
            ReparamFamily::SpeckleInv => 1.0 / t,
            ReparamFamily::SpeckleExp => (-t).exp(),
        }
    }

    pub fn derivative_scalar(&self, t: f64) -> f64 {
        match *self {
            ReparamFamily::Identity => 1.0,
            ReparamFamily::BernoulliK(k) => {
                let tails = BernoulliTails::new(k);
                match tails.tail_eta(t) {
                    Some(eta) => {
                        let s = sigmoid(eta);
                        tails.slope * s * (1.0 - s)
                    }
                    None => 1.0,
                }
            }
            ReparamFamily::PoissonPiecewiseK(k) => {
                if t <= 1.0 / k {
                    (k * t - 1.0).exp()
                } else {
                    1.0
                }
            }
            ReparamFamily::PoissonLogExpK(k) => k * sigmoid(t),
            ReparamFamily::SpeckleK(k) => {
                if t <= 0.0 {
                    -(-t).exp() / k
                } else {
                    -1.0 / (k * (1.0 + t) * (1.0 + t))
                }
            }
            ReparamFamily::SpeckleInv => -1.0 / (t * t),
            ReparamFamily::SpeckleExp => -(-t).exp(),
        }
    }

    /// Inverse map; `None` when `x` is outside the open intensity range.
    pub fn inverse_scalar(&self, x: f64) -> Option<f64> {
        if !x.is_finite() {
            return None;
        }
        match *self {
            ReparamFamily::Identity => Some(x),
            ReparamFamily::BernoulliK(k) => {
                if !(x > 0.0 && x < 1.0) {
                    return None;
                }
                let tails = BernoulliTails::new(k);
                if x <= k {
                    Some((logit(x) - tails.low_offset) / tails.slope)
                } else if x > 1.0 - k {
                    Some((logit(x) - tails.high_offset) / tails.slope)
                } else {
                    Some(x)
                }
            }
            ReparamFamily::PoissonPiecewiseK(k) => {
                if x <= 0.0 {
                    None
                } else if x <= 1.0 / k {
                    Some(((k * x).ln() + 1.0) / k)
                } else {
                    Some(x)
                }
            }
            ReparamFamily::PoissonLogExpK(k) => (x > 0.0).then(|| log_expm1(x / k)),
            ReparamFamily::SpeckleK(k) => {
                if x <= 0.0 {
                    None
                } else if x >= 1.0 / k {
                    Some(-(k * x).ln())
                } else {
                    Some(1.0 / (k * x) - 1.0)
                }
            }
            ReparamFamily::SpeckleInv => (x > 0.0).then(|| 1.0 / x),
            ReparamFamily::SpeckleExp => (x > 0.0).then(|| -x.ln()),
        }
    }

    pub fn forward(&self, theta: &Image) -> Result<Image> {
        self.check_theta(theta)?;
        theta.map(|t| self.forward_scalar(t))
    }

    pub fn derivative(&self, theta: &Image) -> Result<Image> {
        self.check_theta(theta)?;
        theta.map(|t| self.derivative_scalar(t))
    }

    pub fn inverse(&self, x: &Image) -> Result<Image> {
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                self.inverse_scalar(v).ok_or_else(|| {
                    Error::Domain(format!("{self} cannot invert intensity {v} (pixel {idx})"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Image::new(x.rows(), x.cols(), data)
    }

    /// Closed interval the observations are clamped to before inversion
    /// when building a starting point.
    ///
    /// Positive families floor at a tenth of the mean count: zero counts
    /// otherwise land at extreme θ, and the TV of those jumps dominates the
    /// first few hundred iterations.
    pub fn init_clamp(&self, y: &Image) -> (f64, f64) {
        match self {
            ReparamFamily::BernoulliK(_) => (1e-12, 1.0 - 1e-12),
            ReparamFamily::Identity => (f64::NEG_INFINITY, f64::INFINITY),
            _ => ((0.1 * y.mean()).max(1e-8), f64::INFINITY),
        }
    }

    /// Starting point `f⁻¹(clamp(y))` with the clamp from [`Self::init_clamp`].
    pub fn initial_theta(&self, y: &Image) -> Result<Image> {
        let (lo, hi) = self.init_clamp(y);
        self.inverse(&y.clamp(lo, hi))
    }

    fn check_theta(&self, theta: &Image) -> Result<()> {
        self.validate()?;
        match theta.data().iter().position(|&t| !self.in_domain(t)) {
            Some(idx) => Err(Error::Domain(format!(
                "{self} is undefined at θ = {} (pixel {idx})",
                theta.data()[idx]
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ReparamFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReparamFamily::Identity => write!(f, "identity"),
            ReparamFamily::BernoulliK(k) => write!(f, "bernoulli(k={k})"),
            ReparamFamily::PoissonPiecewiseK(k) => write!(f, "poisson-piecewise(k={k})"),
            ReparamFamily::PoissonLogExpK(k) => write!(f, "poisson-logexp(k={k})"),
            ReparamFamily::SpeckleK(k) => write!(f, "speckle(k={k})"),
            ReparamFamily::SpeckleInv => write!(f, "speckle-inv"),
            ReparamFamily::SpeckleExp => write!(f, "speckle-exp"),
        }
    }
}
