//! Nonlinear least-squares fits of the oscillation and decay models used by
//! the analysis pipeline.
//!
//! All models are fitted by damped Gauss-Newton with analytic Jacobians.
//! Frequencies are seeded from the dominant bin of the discrete spectrum of
//! the series (after mean subtraction); amplitudes and offsets from the series
//! extrema. The models are low-dimensional and well-conditioned under this
//! seeding, so no trust-region machinery is needed.
//!
//! Units: model frequencies `ω` are cyclic (MHz) except for the plain cosine
//! `a + cos(ωt)`, where `ω` is the literal angular rate in rad/μs (reported
//! alongside its cyclic equivalent). Decay rates `γ` are in μs⁻¹; the
//! equivalent `h·MHz` value (`γ/2π`) is reported as a derived quantity.

use serde::Serialize;

use crate::TAU;

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("need at least {need} points for a {model} fit, got {got}")]
    InsufficientData { model: &'static str, need: usize, got: usize },
    #[error("series lengths differ: {0} times vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in input series")]
    BadData,
    #[error("normal equations are singular")]
    SingularNormalEquations,
    #[error("fit did not converge after {} iterations (gradient norm {:.3e})", .0.iterations, .0.gradient_norm)]
    DidNotConverge(Box<FitResult>),
}

/// One fitted parameter with its standard error from the residual covariance.
#[derive(Debug, Clone, Serialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub std_err: f64,
}

/// Outcome of a model fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    /// Unit conversions and other quantities derived from the parameters.
    pub derived: Vec<FitParam>,
    /// `sqrt(Σ r²)` at the solution.
    pub residual_norm: f64,
    /// `‖Jᵀr‖_∞` at the solution.
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params
            .iter()
            .chain(&self.derived)
            .find(|p| p.name == name)
            .map(|p| p.value)
    }

    pub fn std_err(&self, name: &str) -> Option<f64> {
        self.params
            .iter()
            .chain(&self.derived)
            .find(|p| p.name == name)
            .map(|p| p.std_err)
    }
}

struct ModelSpec {
    name: &'static str,
    params: &'static [&'static str],
    eval: fn(&[f64], f64) -> f64,
    grad: fn(&[f64], f64, &mut [f64]),
}

/// Solve `A x = b` for a small symmetric positive system by Gaussian
/// elimination with partial pivoting. `A` and `b` are consumed.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

fn cost_of(model: &ModelSpec, xs: &[f64], ys: &[f64], p: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (model.eval)(p, x);
            r * r
        })
        .sum::<f64>()
        * 0.5
}

fn gauss_newton(
    model: &ModelSpec,
    xs: &[f64],
    ys: &[f64],
    mut p: Vec<f64>,
) -> Result<FitResult, FitError> {
    let np = model.params.len();
    let n = xs.len();
    if n != ys.len() {
        return Err(FitError::LengthMismatch(n, ys.len()));
    }
    if n <= np {
        return Err(FitError::InsufficientData { model: model.name, need: np + 1, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::BadData);
    }

    let mut g = vec![0.0; np];
    let mut cost = cost_of(model, xs, ys, &p);
    // gradient scale at the seed sets the convergence threshold; an absolute
    // cutoff would misclassify well-converged fits on data the model only
    // approximates, where the cost plateaus before |J^T r| reaches 1e-8
    let g0 = {
        let mut jtr = vec![0.0; np];
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - (model.eval)(&p, x);
            (model.grad)(&p, x, &mut g);
            for a in 0..np {
                jtr[a] += g[a] * r;
            }
        }
        jtr.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let gtol = 1e-8 * (1.0 + g0) + 1e-8 * (1.0 + cost);
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0usize;
    // Gauss-Newton is only linearly convergent when the residual at the
    // minimum is nonzero (model mismatch), so the gradient may never cross
    // gtol in a sane iteration count even though the parameters stopped
    // moving. Declare convergence on the MINPACK ftol/xtol conditions too.
    let mut at_floor = false;

    for iter in 0..200 {
        iterations = iter + 1;
        // assemble JᵀJ and Jᵀr
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - (model.eval)(&p, x);
            (model.grad)(&p, x, &mut g);
            for a in 0..np {
                jtr[a] += g[a] * r;
                for b in a..np {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        gnorm = jtr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < gtol {
            break;
        }
        let ridge = 1e-14 * jtj.iter().enumerate().map(|(i, r)| r[i]).fold(0.0f64, f64::max);
        let mut sys = jtj.clone();
        for (i, row) in sys.iter_mut().enumerate() {
            row[i] += ridge;
        }
        let delta = match solve_small(sys, jtr.clone()) {
            Some(d) => d,
            None => {
                // one strong-ridge retry before giving up
                let big = 1e-6 * jtj.iter().enumerate().map(|(i, r)| r[i]).fold(1.0f64, f64::max);
                let mut sys = jtj.clone();
                for (i, row) in sys.iter_mut().enumerate() {
                    row[i] += big;
                }
                solve_small(sys, jtr.clone()).ok_or(FitError::SingularNormalEquations)?
            }
        };

        // half the predicted cost decrease of the full step under the
        // quadratic model; near the minimum this bounds what is left to gain
        let predicted = 0.5 * jtr.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>();

        // backtracking damping
        let mut alpha = 1.0f64;
        let mut improved = false;
        let prev_cost = cost;
        for _ in 0..30 {
            let trial: Vec<f64> =
                p.iter().zip(&delta).map(|(&pi, &di)| pi + alpha * di).collect();
            let c = cost_of(model, xs, ys, &trial);
            if c < cost {
                p = trial;
                cost = c;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            // no representable decrease along a descent direction: the fit is
            // at the numerical floor if the model itself has nothing left
            at_floor = predicted <= 1e-10 * (1.0 + cost);
            break;
        }
        let step_rel = p
            .iter()
            .zip(&delta)
            .map(|(&pi, &di)| (alpha * di).abs() / (1.0 + pi.abs()))
            .fold(0.0f64, f64::max);
        if prev_cost - cost <= 1e-12 * (1.0 + cost) && step_rel <= 1e-8 {
            at_floor = true;
            break;
        }
    }

    // covariance from the converged Jacobian
    let mut jtj = vec![vec![0.0; np]; np];
    for &x in xs {
        (model.grad)(&p, x, &mut g);
        for a in 0..np {
            for b in a..np {
                jtj[a][b] += g[a] * g[b];
            }
        }
    }
    for a in 0..np {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let dof = (n - np).max(1);
    let sigma2 = 2.0 * cost / dof as f64;
    let mut std_errs = vec![0.0; np];
    for j in 0..np {
        let mut e = vec![0.0; np];
        e[j] = 1.0;
        if let Some(col) = solve_small(jtj.clone(), e) {
            std_errs[j] = (sigma2 * col[j]).max(0.0).sqrt();
        } else {
            std_errs[j] = f64::NAN;
        }
    }

    let converged = gnorm < gtol || at_floor;
    let result = FitResult {
        model: model.name.to_string(),
        params: model
            .params
            .iter()
            .zip(p.iter().zip(&std_errs))
            .map(|(&name, (&value, &std_err))| FitParam { name: name.into(), value, std_err })
            .collect(),
        derived: Vec::new(),
        residual_norm: (2.0 * cost).sqrt(),
        gradient_norm: gnorm,
        converged,
        iterations,
    };
    if converged {
        Ok(result)
    } else {
        Err(FitError::DidNotConverge(Box::new(result)))
    }
}

/// Frequency (cyclic, in 1/x units) of the dominant nonzero bin of the
/// mean-subtracted series. Assumes a uniform grid.
pub fn dominant_frequency(xs: &[f64], ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 4 {
        return 0.0;
    }
    let span = xs[n - 1] - xs[0];
    if span <= 0.0 {
        return 0.0;
    }
    let mean = ys.iter().sum::<f64>() / n as f64;
    let mut best = (1usize, -1.0f64);
    for k in 1..=(n / 2) {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (m, &y) in ys.iter().enumerate() {
            let arg = TAU * k as f64 * m as f64 / n as f64;
            re += (y - mean) * arg.cos();
            im -= (y - mean) * arg.sin();
        }
        let pow = re * re + im * im;
        if pow > best.1 {
            best = (k, pow);
        }
    }
    let dx = span / (n - 1) as f64;
    best.0 as f64 / (n as f64 * dx)
}

/// Fit `λ(t) = A (1 - cos(2π ω t))`, the Bloch-oscillation width model.
/// `ω` in MHz.
pub fn fit_bloch_oscillation(times: &[f64], lambda: &[f64]) -> Result<FitResult, FitError> {
    const MODEL: ModelSpec = ModelSpec {
        name: "bloch_width",
        params: &["A", "omega_mhz"],
        eval: |p, t| p[0] * (1.0 - (TAU * p[1] * t).cos()),
        grad: |p, t, g| {
            let phase = TAU * p[1] * t;
            g[0] = 1.0 - phase.cos();
            g[1] = p[0] * TAU * t * phase.sin();
        },
    };
    let (lo, hi) = extrema(lambda)?;
    let seed = vec![0.5 * (hi - lo).max(1e-6), dominant_frequency(times, lambda).max(1e-6)];
    gauss_newton(&MODEL, times, lambda, seed)
}

/// Fit `P(t) = A e^{-γt} cos²(π ω t) + c`. `ω` in MHz, `γ` in μs⁻¹; the
/// equivalent `h·MHz` rate `γ/2π` is attached as a derived value.
pub fn fit_damped_sine(times: &[f64], p0: &[f64]) -> Result<FitResult, FitError> {
    const MODEL: ModelSpec = ModelSpec {
        name: "damped_sine",
        params: &["A", "gamma_per_us", "omega_mhz", "c"],
        eval: |p, t| p[0] * (-p[1] * t).exp() * (std::f64::consts::PI * p[2] * t).cos().powi(2) + p[3],
        grad: |p, t, g| {
            let decay = (-p[1] * t).exp();
            let phase = std::f64::consts::PI * p[2] * t;
            let c2 = phase.cos().powi(2);
            g[0] = decay * c2;
            g[1] = -t * p[0] * decay * c2;
            g[2] = -p[0] * decay * std::f64::consts::PI * t * (2.0 * phase).sin();
            g[3] = 1.0;
        },
    };
    let (lo, hi) = extrema(p0)?;
    let seed = vec![
        (hi - lo).max(1e-6),
        envelope_decay_seed(times, p0, lo),
        dominant_frequency(times, p0).max(1e-6),
        lo,
    ];
    let mut result = gauss_newton(&MODEL, times, p0, seed)?;
    attach_gamma_conversion(&mut result);
    Ok(result)
}

fn attach_gamma_conversion(result: &mut FitResult) {
    if let Some(p) = result.params.iter().find(|p| p.name == "gamma_per_us") {
        result.derived.push(FitParam {
            name: "gamma_h_mhz".into(),
            value: p.value / TAU,
            std_err: p.std_err / TAU,
        });
    }
}

/// Fit `P(t) = a + b exp(-β t²)`, the short-time pair-survival model.
/// `β` in μs⁻².
pub fn fit_gaussian_decay(times: &[f64], p00: &[f64]) -> Result<FitResult, FitError> {
    const MODEL: ModelSpec = ModelSpec {
        name: "gaussian_decay",
        params: &["a", "b", "beta_per_us2"],
        eval: |p, t| p[0] + p[1] * (-p[2] * t * t).exp(),
        grad: |p, t, g| {
            let e = (-p[2] * t * t).exp();
            g[0] = 1.0;
            g[1] = e;
            g[2] = -p[1] * t * t * e;
        },
    };
    let (lo, _) = extrema(p00)?;
    let y0 = p00[0];
    let b = (y0 - lo).max(1e-9);
    // half-decay time if the series drops that far, else a slope estimate
    let target = y0 - 0.5 * b;
    let beta = match times.iter().zip(p00).find(|(_, &y)| y <= target) {
        Some((&t_half, _)) if t_half > 0.0 => std::f64::consts::LN_2 / (t_half * t_half),
        _ => {
            let t_end = *times.last().unwrap();
            let drop = (y0 - p00[p00.len() - 1]).max(0.0);
            (drop / (b * t_end * t_end)).max(1e-9)
        }
    };
    gauss_newton(&MODEL, times, p00, vec![lo, b, beta])
}

/// Fit `P(t) = a + cos(ω t)` with `ω` angular (rad/μs), reporting the cyclic
/// equivalent `ω/2π` in MHz as a derived value. The seed is refined by a
/// coarse scan so windows covering less than a full period still converge.
pub fn fit_cosine(times: &[f64], p00: &[f64]) -> Result<FitResult, FitError> {
    const MODEL: ModelSpec = ModelSpec {
        name: "cosine",
        params: &["a", "omega_rad_per_us"],
        eval: |p, t| p[0] + (p[1] * t).cos(),
        grad: |p, t, g| {
            g[0] = 1.0;
            g[1] = -t * (p[1] * t).sin();
        },
    };
    if times.len() != p00.len() {
        return Err(FitError::LengthMismatch(times.len(), p00.len()));
    }
    if times.len() < 4 {
        return Err(FitError::InsufficientData { model: "cosine", need: 4, got: times.len() });
    }
    let t_end = *times.last().unwrap();
    if !(t_end > 0.0) {
        return Err(FitError::BadData);
    }
    // 1-D scan over ω up to the Nyquist rate, offset solved analytically
    // per candidate
    let n = times.len() as f64;
    let dt = (times[1] - times[0]).max(t_end / n);
    let w_max = std::f64::consts::PI / dt;
    let n_scan = 2048;
    let mut best = (0.0f64, f64::INFINITY);
    for k in 1..=n_scan {
        let w = w_max * k as f64 / n_scan as f64;
        let a = p00
            .iter()
            .zip(times)
            .map(|(&y, &t)| y - (w * t).cos())
            .sum::<f64>()
            / n;
        let cost: f64 = p00
            .iter()
            .zip(times)
            .map(|(&y, &t)| {
                let r = y - a - (w * t).cos();
                r * r
            })
            .sum();
        if cost < best.1 {
            best = (w, cost);
        }
    }
    let w0 = if best.0 > 0.0 { best.0 } else { TAU * dominant_frequency(times, p00).max(1e-6) };
    let a0 = p00.iter().zip(times).map(|(&y, &t)| y - (w0 * t).cos()).sum::<f64>() / n;
    let mut result = gauss_newton(&MODEL, times, p00, vec![a0, w0])?;
    if let Some(p) = result.params.iter().find(|p| p.name == "omega_rad_per_us") {
        result.derived.push(FitParam {
            name: "omega_mhz".into(),
            value: p.value / TAU,
            std_err: p.std_err / TAU,
        });
    }
    Ok(result)
}

/// Fit a Gaussian peak `y = c + a exp(-(x-μ)²/(2σ²))`; used for the flux
/// calibration response.
pub fn fit_gaussian_peak(xs: &[f64], ys: &[f64]) -> Result<FitResult, FitError> {
    const MODEL: ModelSpec = ModelSpec {
        name: "gaussian_peak",
        params: &["c", "a", "mu", "sigma"],
        eval: |p, x| {
            let z = (x - p[2]) / p[3];
            p[0] + p[1] * (-0.5 * z * z).exp()
        },
        grad: |p, x, g| {
            let z = (x - p[2]) / p[3];
            let e = (-0.5 * z * z).exp();
            g[0] = 1.0;
            g[1] = e;
            g[2] = p[1] * e * z / p[3];
            g[3] = p[1] * e * z * z / p[3];
        },
    };
    let (lo, hi) = extrema(ys)?;
    let peak_x = xs[ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)];
    let span = xs.last().unwrap() - xs[0];
    let seed = vec![lo, (hi - lo).max(1e-9), peak_x, (span / 6.0).abs().max(1e-3)];
    gauss_newton(&MODEL, xs, ys, seed)
}

fn extrema(ys: &[f64]) -> Result<(f64, f64), FitError> {
    if ys.is_empty() {
        return Err(FitError::BadData);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &y in ys {
        if !y.is_finite() {
            return Err(FitError::BadData);
        }
        lo = lo.min(y);
        hi = hi.max(y);
    }
    Ok((lo, hi))
}

fn envelope_decay_seed(times: &[f64], ys: &[f64], floor: f64) -> f64 {
    let n = ys.len();
    if n < 9 {
        return 0.0;
    }
    let third = n / 3;
    let head = ys[..third].iter().fold(0.0f64, |m, &y| m.max(y - floor));
    let tail = ys[n - third..].iter().fold(0.0f64, |m, &y| m.max(y - floor));
    let dt = times[n - third] - times[third / 2];
    if head > 1e-9 && tail > 1e-9 && dt > 0.0 {
        ((head / tail).ln() / dt).max(0.0)
    } else {
        0.0
    }
}

/// Ordinary least-squares line `y = slope·x + intercept` with R².
#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(FitError::InsufficientData { model: "linear", need: 2, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::BadData);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(FitError::SingularNormalEquations);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - slope * x - intercept;
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, r_squared })
}
