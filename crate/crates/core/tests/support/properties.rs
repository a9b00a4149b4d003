//! Property checks shared by the `properties` test target and the
//! acceptance gate. Each check returns `Err` with a description of the
//! first violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reparam_denoise::datafit::{DataFit, ExpFamilySpec, FitKind};
use reparam_denoise::harness::{self, ExperimentSpec, NamedImage};
use reparam_denoise::noise::{self, NoiseModel, Seed};
use reparam_denoise::optim::{prox_objective, tv_prox};
use reparam_denoise::{shepp_logan, Image, ReparamFamily};

pub type Check = fn() -> Result<(), String>;

/// Every property with its name, in reporting order.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("reparam monotonicity", reparam_monotone),
        ("reparam round trip", reparam_round_trip),
        ("reparam breakpoint continuity", reparam_continuity),
        (
            "reparam derivative vs finite differences",
            reparam_derivative,
        ),
        (
            "bernoulli small-k identity segment",
            bernoulli_small_k_is_identity,
        ),
        ("fit gradient vs finite differences", fit_gradient),
        ("fit midpoint convexity", fit_convexity),
        ("fit curvature below Lipschitz bound", fit_curvature_bound),
        ("fit breakpoint continuity", fit_continuity),
        ("exp-family fit equivalence", exp_family_equivalence),
        ("tv_prox vs dual oracle on 6x6", prox_vs_oracle),
        ("tv_prox worked examples", prox_examples),
        ("sampler moments", sampler_moments),
        ("sweep deterministic replay", sweep_replay),
    ]
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xfeed_0000 + tag)
}

fn families() -> Vec<ReparamFamily> {
    vec![
        ReparamFamily::Identity,
        ReparamFamily::BernoulliK(0.05),
        ReparamFamily::BernoulliK(0.2),
        ReparamFamily::BernoulliK(0.45),
        ReparamFamily::BernoulliK(0.5),
        ReparamFamily::PoissonPiecewiseK(0.5),
        ReparamFamily::PoissonPiecewiseK(4.0),
        ReparamFamily::PoissonLogExpK(0.5),
        ReparamFamily::PoissonLogExpK(4.0),
        ReparamFamily::SpeckleK(0.5),
        ReparamFamily::SpeckleK(2.0),
        ReparamFamily::SpeckleInv,
        ReparamFamily::SpeckleExp,
    ]
}

/// Sampling interval of θ for a family.
fn theta_range(f: ReparamFamily) -> (f64, f64) {
    match f {
        ReparamFamily::BernoulliK(_) => (-10.0, 10.0),
        ReparamFamily::SpeckleInv => (0.05, 20.0),
        _ => (-20.0, 20.0),
    }
}

fn near_breakpoint(f: ReparamFamily, t: f64, gap: f64) -> bool {
    f.breakpoints().iter().any(|b| (t - b).abs() < gap)
}

fn reparam_monotone() -> Result<(), String> {
    let mut r = rng(1);
    for f in families() {
        let (lo, hi) = theta_range(f);
        for _ in 0..1000 {
            let a = r.random_range(lo..hi);
            let b = r.random_range(lo..hi);
            let (t1, t2) = if a < b { (a, b) } else { (b, a) };
            if t2 - t1 < 1e-6 {
                continue;
            }
            let (x1, x2) = (f.forward_scalar(t1), f.forward_scalar(t2));
            let ordered = if f.is_decreasing() { x1 > x2 } else { x1 < x2 };
            // saturated tails compare equal in f64
            if !ordered && x1 != x2 {
                return Err(format!("{f}: f({t1}) = {x1}, f({t2}) = {x2}"));
            }
        }
    }
    Ok(())
}

fn reparam_round_trip() -> Result<(), String> {
    let mut r = rng(2);
    for f in families() {
        let (lo, hi) = theta_range(f);
        for _ in 0..1000 {
            let t = r.random_range(lo..hi);
            let x = f.forward_scalar(t);
            // above 1 − 1e-6 the Bernoulli upper tail keeps too few bits of 1 − x
            if matches!(f, ReparamFamily::BernoulliK(_)) && x > 1.0 - 1e-6 {
                continue;
            }
            let back = f
                .inverse_scalar(x)
                .ok_or_else(|| format!("{f}: inverse undefined at x = {x} (θ = {t})"))?;
            if (back - t).abs() > 1e-10 {
                return Err(format!("{f}: θ = {t} → x = {x} → {back}"));
            }
        }
    }
    Ok(())
}

fn reparam_continuity() -> Result<(), String> {
    for f in families() {
        for b in f.breakpoints() {
            let slope = f.derivative_scalar(b).abs() + 1.0;
            for eps in [1e-4, 1e-6] {
                let jump = (f.forward_scalar(b - eps) - f.forward_scalar(b + eps)).abs();
                if jump > 4.0 * slope * eps {
                    return Err(format!("{f}: jump {jump} across θ = {b} at ε = {eps}"));
                }
                let djump = (f.derivative_scalar(b - eps) - f.derivative_scalar(b + eps)).abs();
                if djump > 1e-2 * slope + 1e3 * eps {
                    return Err(format!("{f}: derivative jumps by {djump} across θ = {b}"));
                }
            }
        }
    }
    Ok(())
}

/// Fourth-order central difference of `g` at `t`.
fn central_diff(g: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (8.0 * (g(t + h) - g(t - h)) - (g(t + 2.0 * h) - g(t - 2.0 * h))) / (12.0 * h)
}

fn rel_close(approx: f64, exact: f64, rel: f64, floor: f64) -> bool {
    (approx - exact).abs() <= rel * exact.abs().max(floor)
}

fn reparam_derivative() -> Result<(), String> {
    let mut r = rng(3);
    for f in families() {
        let (lo, hi) = theta_range(f);
        let mut done = 0;
        while done < 100 {
            let t = r.random_range(lo..hi);
            let h = 1e-4 * t.abs().max(1.0);
            if near_breakpoint(f, t, 4.0 * h) || !f.in_domain(t - 2.0 * h) {
                continue;
            }
            done += 1;
            let fd = central_diff(|s| f.forward_scalar(s), t, h);
            let d = f.derivative_scalar(t);
            // below ~ε|f|/h the difference quotient resolves nothing
            let noise = 10.0 * f64::EPSILON * f.forward_scalar(t).abs() / h;
            if !(rel_close(fd, d, 1e-6, 0.0) || (fd - d).abs() <= noise) {
                return Err(format!("{f}: f'({t}) = {d}, finite difference {fd}"));
            }
        }
    }
    Ok(())
}

fn bernoulli_small_k_is_identity() -> Result<(), String> {
    let f = ReparamFamily::BernoulliK(1e-3);
    for i in 0..=90 {
        let t = 0.05 + 0.01 * f64::from(i);
        if (f.forward_scalar(t) - t).abs() > 1e-3 {
            return Err(format!("f({t}) = {}", f.forward_scalar(t)));
        }
    }
    Ok(())
}

/// A fit under test with where to sample θ and y.
struct FitCase {
    kind: FitKind,
    theta: (f64, f64),
    y: fn(&mut ChaCha8Rng) -> f64,
    breakpoints: Vec<f64>,
    reparameterized: bool,
}

fn binary(r: &mut ChaCha8Rng) -> f64 {
    if r.random_bool(0.5) {
        1.0
    } else {
        0.0
    }
}

fn counts(r: &mut ChaCha8Rng) -> f64 {
    f64::from(r.random_range(0u32..20))
}

fn positive(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(0.05..10.0)
}

fn unit(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(0.0..=1.0)
}

fn fit_cases() -> Vec<FitCase> {
    let reparam = |kind: FitKind, theta, y, family: ReparamFamily| FitCase {
        kind,
        theta,
        y,
        breakpoints: family.breakpoints(),
        reparameterized: true,
    };
    let baseline = |kind: FitKind, theta, y| FitCase {
        kind,
        theta,
        y,
        breakpoints: vec![],
        reparameterized: false,
    };
    let mut cases = Vec::new();
    for k in [0.05, 0.2, 0.45, 0.5] {
        cases.push(reparam(
            FitKind::BernoulliReparam { k },
            (-3.0, 4.0),
            binary,
            ReparamFamily::BernoulliK(k),
        ));
        cases.push(reparam(
            FitKind::BernoulliReparam { k },
            (-3.0, 4.0),
            unit,
            ReparamFamily::BernoulliK(k),
        ));
    }
    for k in [0.5, 4.0] {
        cases.push(reparam(
            FitKind::PoissonLogExp { k },
            (-20.0, 20.0),
            counts,
            ReparamFamily::PoissonLogExpK(k),
        ));
        cases.push(reparam(
            FitKind::PoissonPiecewise { k },
            (-10.0, 20.0),
            counts,
            ReparamFamily::PoissonPiecewiseK(k),
        ));
        for looks in [1, 3] {
            cases.push(reparam(
                FitKind::SpeckleReparam { k, looks },
                (-10.0, 20.0),
                positive,
                ReparamFamily::SpeckleK(k),
            ));
        }
    }
    cases.push(baseline(FitKind::BernoulliBaseline, (0.02, 0.98), binary));
    cases.push(baseline(FitKind::PoissonBaseline, (0.1, 10.0), counts));
    cases.push(baseline(
        FitKind::SpeckleBaseline { looks: 3 },
        (0.1, 10.0),
        positive,
    ));
    let bk = ReparamFamily::BernoulliK(0.2);
    cases.push(reparam(
        FitKind::ExpFamily {
            spec: ExpFamilySpec::bernoulli(),
            family: bk,
        },
        (-1.0, 2.0),
        binary,
        bk,
    ));
    let pk = ReparamFamily::PoissonLogExpK(2.0);
    cases.push(reparam(
        FitKind::ExpFamily {
            spec: ExpFamilySpec::poisson(),
            family: pk,
        },
        (-10.0, 10.0),
        counts,
        pk,
    ));
    cases
}

fn single(kind: FitKind, y: f64) -> Result<DataFit, String> {
    DataFit::new(kind, Image::filled(1, 1, y).unwrap()).map_err(|e| e.to_string())
}

fn eval(fit: &DataFit, t: f64) -> f64 {
    fit.value(&Image::filled(1, 1, t).unwrap())
        .unwrap_or(f64::NAN)
}

fn grad(fit: &DataFit, t: f64) -> f64 {
    fit.gradient(&Image::filled(1, 1, t).unwrap())
        .map(|g| g.data()[0])
        .unwrap_or(f64::NAN)
}

fn fit_gradient() -> Result<(), String> {
    let mut r = rng(4);
    for case in fit_cases() {
        let mut done = 0;
        while done < 100 {
            let t = r.random_range(case.theta.0..case.theta.1);
            let h = 1e-4 * t.abs().max(1.0);
            if case.breakpoints.iter().any(|b| (t - b).abs() < 4.0 * h) {
                continue;
            }
            done += 1;
            let y = (case.y)(&mut r);
            let fit = single(case.kind, y)?;
            let g = grad(&fit, t);
            let fd = central_diff(|s| eval(&fit, s), t, h);
            // cancellation in φ(θ±h) limits the attainable accuracy to ~ε|φ|/h
            let noise = 1e-12 * eval(&fit, t).abs() / h;
            if !(rel_close(fd, g, 1e-6, 1e-6) || (fd - g).abs() <= noise) {
                return Err(format!(
                    "{:?}: θ = {t}, y = {y}: gradient {g}, finite difference {fd}",
                    case.kind
                ));
            }
        }
    }
    Ok(())
}

fn fit_convexity() -> Result<(), String> {
    let mut r = rng(5);
    for case in fit_cases().into_iter().filter(|c| c.reparameterized) {
        for _ in 0..1000 {
            let y = (case.y)(&mut r);
            let fit = single(case.kind, y)?;
            let a = r.random_range(case.theta.0..case.theta.1);
            let b = r.random_range(case.theta.0..case.theta.1);
            let (fa, fb, fm) = (eval(&fit, a), eval(&fit, b), eval(&fit, 0.5 * (a + b)));
            let slack = 1e-12 * fa.abs().max(fb.abs()).max(1.0);
            if fm > 0.5 * (fa + fb) + slack {
                return Err(format!(
                    "{:?}, y = {y}: φ({}) = {fm} above chord {} of θ = {a}, {b}",
                    case.kind,
                    0.5 * (a + b),
                    0.5 * (fa + fb)
                ));
            }
        }
    }
    Ok(())
}

fn fit_curvature_bound() -> Result<(), String> {
    let cases: Vec<(FitKind, Vec<f64>)> = vec![
        (FitKind::BernoulliReparam { k: 0.05 }, vec![0.0, 0.3, 1.0]),
        (FitKind::BernoulliReparam { k: 0.3 }, vec![0.0, 0.3, 1.0]),
        (FitKind::BernoulliReparam { k: 0.5 }, vec![0.0, 1.0]),
        (FitKind::PoissonLogExp { k: 0.5 }, vec![0.0, 3.0, 17.0]),
        (FitKind::PoissonLogExp { k: 4.0 }, vec![0.0, 3.0, 17.0]),
        (FitKind::PoissonPiecewise { k: 0.5 }, vec![0.0, 3.0, 17.0]),
        (FitKind::PoissonPiecewise { k: 4.0 }, vec![0.0, 3.0, 17.0]),
        (
            FitKind::SpeckleReparam { k: 0.5, looks: 3 },
            vec![0.1, 2.5, 9.0],
        ),
        (
            FitKind::SpeckleReparam { k: 2.0, looks: 3 },
            vec![0.1, 2.5, 9.0],
        ),
    ];
    let h = 0.01;
    for (kind, ys) in cases {
        let fit = DataFit::new(kind, Image::new(1, ys.len(), ys.clone()).unwrap())
            .map_err(|e| e.to_string())?;
        let bound = fit.lipschitz_bound();
        if !bound.is_finite() {
            return Err(format!("{kind:?}: bound is not finite"));
        }
        for y in ys {
            for i in 0..=10_000 {
                let t = -50.0 + h * f64::from(i);
                let v = |s: f64| fit.pixel(s, y).0;
                let (a, b, c) = (v(t - h), v(t), v(t + h));
                let second = (a - 2.0 * b + c) / (h * h);
                let noise = 8.0 * f64::EPSILON * b.abs().max(a.abs()).max(c.abs()) / (h * h);
                if second > bound * (1.0 + 1e-6) + noise {
                    return Err(format!(
                        "{kind:?}: φ'' ≈ {second} at θ = {t}, y = {y} exceeds {bound}"
                    ));
                }
            }
        }
    }
    Ok(())
}

fn fit_continuity() -> Result<(), String> {
    let mut r = rng(6);
    for case in fit_cases()
        .into_iter()
        .filter(|c| !c.breakpoints.is_empty())
    {
        for _ in 0..10 {
            let y = (case.y)(&mut r);
            let fit = single(case.kind, y)?;
            let bound = fit.lipschitz_bound();
            let curvature = if bound.is_finite() { bound } else { 1e3 };
            for &b in &case.breakpoints {
                for eps in [1e-4, 1e-6] {
                    let c = 4.0 * (grad(&fit, b).abs() + curvature + 1.0);
                    let dv = (eval(&fit, b - eps) - eval(&fit, b + eps)).abs();
                    let dg = (grad(&fit, b - eps) - grad(&fit, b + eps)).abs();
                    if dv > c * eps || dg > 4.0 * (curvature + 1.0) * eps {
                        return Err(format!(
                            "{:?}, y = {y}: jumps {dv} (value), {dg} (gradient) across θ = {b} at ε = {eps}",
                            case.kind
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

fn exp_family_equivalence() -> Result<(), String> {
    let mut r = rng(7);
    let pairs: Vec<(FitKind, FitKind, (f64, f64), fn(&mut ChaCha8Rng) -> f64)> = vec![
        (
            FitKind::ExpFamily {
                spec: ExpFamilySpec::bernoulli(),
                family: ReparamFamily::BernoulliK(0.2),
            },
            FitKind::BernoulliReparam { k: 0.2 },
            (-1.0, 2.0),
            binary,
        ),
        (
            FitKind::ExpFamily {
                spec: ExpFamilySpec::poisson(),
                family: ReparamFamily::PoissonLogExpK(3.0),
            },
            FitKind::PoissonLogExp { k: 3.0 },
            (-10.0, 10.0),
            counts,
        ),
        (
            FitKind::ExpFamily {
                spec: ExpFamilySpec::poisson(),
                family: ReparamFamily::PoissonPiecewiseK(3.0),
            },
            FitKind::PoissonPiecewise { k: 3.0 },
            (-3.0, 10.0),
            counts,
        ),
    ];
    for (generic, specific, (lo, hi), ys) in pairs {
        for _ in 0..200 {
            let y = ys(&mut r);
            let t = r.random_range(lo..hi);
            let a = eval(&single(generic, y)?, t);
            let b = eval(&single(specific, y)?, t);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(format!(
                    "{specific:?}: θ = {t}, y = {y}: generic {a}, specialized {b}"
                ));
            }
        }
    }
    Ok(())
}

/// Difference operator of the TV: two components per interior pixel and
/// one per pixel of the last column and last row, each a list of
/// `(pixel, neighbour)` pairs.
fn tv_edges(m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    let idx = |i: usize, j: usize| i * n + j;
    let mut edges = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let mut e = Vec::new();
            if i + 1 < m {
                e.push((idx(i, j), idx(i + 1, j)));
            }
            if j + 1 < n {
                e.push((idx(i, j), idx(i, j + 1)));
            }
            if !e.is_empty() {
                edges.push(e);
            }
        }
    }
    edges
}

fn tv_of(x: &[f64], edges: &[Vec<(usize, usize)>]) -> f64 {
    edges
        .iter()
        .map(|e| {
            e.iter()
                .map(|&(a, b)| (x[a] - x[b]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Plain projected gradient on the dual of the TV prox, 5·10⁴ steps.
/// Returns the primal point and its duality gap.
fn prox_oracle(s: &[f64], m: usize, n: usize, w: f64) -> (Vec<f64>, f64) {
    let edges = tv_edges(m, n);
    let mut z: Vec<Vec<f64>> = edges.iter().map(|e| vec![0.0; e.len()]).collect();
    let primal = |z: &[Vec<f64>]| {
        let mut x = s.to_vec();
        for (e, ze) in edges.iter().zip(z) {
            for (&(a, b), &v) in e.iter().zip(ze) {
                x[a] -= w * v;
                x[b] += w * v;
            }
        }
        x
    };
    let step = 1.0 / (8.0 * w);
    for _ in 0..50_000 {
        let x = primal(&z);
        for (e, ze) in edges.iter().zip(z.iter_mut()) {
            for (&(a, b), v) in e.iter().zip(ze.iter_mut()) {
                *v += step * (x[a] - x[b]);
            }
            let norm = ze.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                ze.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    let x = primal(&z);
    let p =
        0.5 * x.iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + w * tv_of(&x, &edges);
    let d = 0.5 * s.iter().map(|v| v * v).sum::<f64>() - 0.5 * x.iter().map(|v| v * v).sum::<f64>();
    (x, p - d)
}

fn prox_vs_oracle() -> Result<(), String> {
    let mut r = rng(8);
    for case in 0..20 {
        let data: Vec<f64> = (0..36).map(|_| r.random_range(0.0..1.0)).collect();
        let w = r.random_range(0.02..1.0);
        let s = Image::new(6, 6, data.clone()).unwrap();
        let (oracle, gap) = prox_oracle(&data, 6, 6, w);
        if gap > 1e-4 {
            return Err(format!("case {case}: oracle duality gap {gap}"));
        }
        let oracle_obj = prox_objective(&Image::new(6, 6, oracle).unwrap(), &s, w);
        let obj = prox_objective(&tv_prox(&s, w, 1000), &s, w);
        if obj > oracle_obj + 1e-5 {
            return Err(format!(
                "case {case}, w = {w}: FGP objective {obj}, oracle {oracle_obj}"
            ));
        }
    }
    Ok(())
}

fn prox_examples() -> Result<(), String> {
    // weight 10 flattens [[1,0],[0,0]] to its mean; objective ½(0.75² + 3·0.25²)
    let s = Image::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let x = tv_prox(&s, 10.0, 1000);
    let obj = prox_objective(&x, &s, 10.0);
    if (obj - 0.375).abs() > 1e-6 || x.data().iter().any(|v| (v - 0.25).abs() > 1e-3) {
        return Err(format!("2x2: {:?}, objective {obj}", x.data()));
    }
    let mut r = rng(9);
    let data: Vec<f64> = (0..64).map(|_| r.random_range(0.0..1.0)).collect();
    let s = Image::new(8, 8, data.clone()).unwrap();
    let (oracle, _) = prox_oracle(&data, 8, 8, 0.3);
    let oracle_obj = prox_objective(&Image::new(8, 8, oracle).unwrap(), &s, 0.3);
    let obj = prox_objective(&tv_prox(&s, 0.3, 1000), &s, 0.3);
    if obj > oracle_obj + 1e-5 {
        return Err(format!("8x8: FGP objective {obj}, oracle {oracle_obj}"));
    }
    let small = tv_prox(&s, 1e-12, 50);
    if small
        .data()
        .iter()
        .zip(s.data())
        .any(|(a, b)| (a - b).abs() > 1e-8)
    {
        return Err("vanishing weight is not the identity".into());
    }
    Ok(())
}

fn moments(y: &Image) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.mean();
    let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn sampler_moments() -> Result<(), String> {
    let side = 512;
    let n = (side * side) as f64;
    let check = |what: &str, got: f64, want: f64, sd: f64| {
        if (got - want).abs() > 4.0 * sd {
            Err(format!("{what}: {got}, expected {want} ± {}", 4.0 * sd))
        } else {
            Ok(())
        }
    };

    let p = 0.3;
    let y = noise::sample(
        NoiseModel::Bernoulli,
        &Image::filled(side, side, p).unwrap(),
        Seed(11),
    )
    .map_err(|e| e.to_string())?;
    check(
        "bernoulli fraction",
        y.mean(),
        p,
        (p * (1.0 - p) / n).sqrt(),
    )?;

    for rate in [5.0, 10.0, 40.0] {
        let y = noise::sample(
            NoiseModel::Poisson,
            &Image::filled(side, side, rate).unwrap(),
            Seed(12),
        )
        .map_err(|e| e.to_string())?;
        let (mean, var) = moments(&y);
        check(
            &format!("poisson({rate}) mean"),
            mean,
            rate,
            (rate / n).sqrt(),
        )?;
        check(
            &format!("poisson({rate}) variance"),
            var,
            rate,
            ((rate + 2.0 * rate * rate) / n).sqrt(),
        )?;
    }

    for looks in [1u32, 3] {
        let x = 2.0;
        let s = f64::from(looks);
        let y = noise::sample(
            NoiseModel::Speckle { looks },
            &Image::filled(side, side, x).unwrap(),
            Seed(13),
        )
        .map_err(|e| e.to_string())?;
        let (mean, var) = moments(&y);
        let sigma2 = x * x / s;
        check(
            &format!("speckle(S={looks}) mean"),
            mean,
            x,
            (sigma2 / n).sqrt(),
        )?;
        // fourth central moment of a gamma is σ⁴(3 + 6/S)
        check(
            &format!("speckle(S={looks}) variance"),
            var,
            sigma2,
            sigma2 * ((2.0 + 6.0 / s) / n).sqrt(),
        )?;
    }
    Ok(())
}

fn sweep_replay() -> Result<(), String> {
    let truth = shepp_logan(24, 24).unwrap();
    let mut spec =
        ExperimentSpec::new(vec![NamedImage::new("phantom", truth)], NoiseModel::Poisson);
    spec.realizations = 2;
    spec.family_grid = vec![
        ReparamFamily::PoissonLogExpK(2.0),
        ReparamFamily::PoissonLogExpK(4.0),
    ];
    spec.tau_grid = harness::log_grid(0.1, 2.0, 4);
    spec.solver.max_outer_iters = 60;
    let run = || -> Result<String, String> {
        let report = harness::sweep(&spec).map_err(|e| e.to_string())?;
        serde_json::to_string(&report).map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    if a != b {
        return Err("two sweeps of the same spec differ".into());
    }
    Ok(())
}
