//! Powell's conjugate-direction minimizer with golden-section line searches.

const GOLDEN: f64 = 1.618_033_988_749_895;
const INV_GOLDEN: f64 = 0.618_033_988_749_895;
const MAX_BRACKET_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct PowellOptions {
    /// Stop when an iteration's decrease is below `ftol * (|f| + 1e-12)`.
    pub ftol: f64,
    /// Width at which a golden-section search stops, in line parameter units.
    pub xtol: f64,
    pub max_iters: usize,
    /// First trial step when bracketing along a direction.
    pub initial_step: f64,
}

impl Default for PowellOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-6,
            xtol: 1e-4,
            max_iters: 200,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowellResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective at the start and after each iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowellError {
    #[error("objective is not finite at {0:?}")]
    NonFiniteObjective(Vec<f64>),
    #[error("need at least one dimension")]
    NoDimensions,
}

struct Counted<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    evaluations: usize,
}

impl Counted<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<f64, PowellError> {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PowellError::NonFiniteObjective(x.to_vec()))
        }
    }
}

fn along(x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Minimize along `d` from `x` (where the objective is `fx`). Moves only on
/// strict improvement; returns the step taken and the new value.
fn line_minimize(
    f: &mut Counted<'_>,
    x: &[f64],
    fx: f64,
    d: &[f64],
    opts: &PowellOptions,
) -> Result<(f64, f64), PowellError> {
    let h = opts.initial_step;
    let phi = |t: f64, f: &mut Counted<'_>| f.eval(&along(x, d, t));

    // bracket: phi(b) below phi(a) and, after expansion, below phi(c)
    let fh = phi(h, f)?;
    let (mut a, mut b, mut fb) = if fh < fx {
        (0.0, h, fh)
    } else {
        let fm = phi(-h, f)?;
        if fm >= fx {
            return golden(f, x, d, -h, 0.0, h, fx, opts, fx);
        }
        (0.0, -h, fm)
    };
    let mut c = b + GOLDEN * (b - a);
    let mut fc = phi(c, f)?;
    let mut steps = 0;
    while fc < fb && steps < MAX_BRACKET_STEPS {
        a = b;
        b = c;
        fb = fc;
        c = b + GOLDEN * (b - a);
        fc = phi(c, f)?;
        steps += 1;
    }
    if fc < fb {
        // unbounded in the step budget; take the best point found
        return Ok((c, fc));
    }
    let (lo, hi) = if a < c { (a, c) } else { (c, a) };
    golden(f, x, d, lo, b, hi, fb, opts, fx)
}

#[allow(clippy::too_many_arguments)]
fn golden(
    f: &mut Counted<'_>,
    x: &[f64],
    d: &[f64],
    mut lo: f64,
    mut mid: f64,
    mut hi: f64,
    mut fmid: f64,
    opts: &PowellOptions,
    f0: f64,
) -> Result<(f64, f64), PowellError> {
    let scale = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let tol = opts.xtol / scale;
    while hi - lo > tol {
        // probe the larger side
        let probe = if hi - mid > mid - lo {
            mid + (1.0 - INV_GOLDEN) * (hi - mid)
        } else {
            mid - (1.0 - INV_GOLDEN) * (mid - lo)
        };
        let fp = f.eval(&along(x, d, probe))?;
        if fp < fmid {
            if probe > mid {
                lo = mid;
            } else {
                hi = mid;
            }
            mid = probe;
            fmid = fp;
        } else if probe > mid {
            hi = probe;
        } else {
            lo = probe;
        }
    }
    if fmid < f0 {
        Ok((mid, fmid))
    } else {
        Ok((0.0, f0))
    }
}

/// Minimize `f` from `x0` by successive line searches along a direction set,
/// replacing the direction of largest decrease with the iteration's net step.
pub fn powell_minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &PowellOptions,
) -> Result<PowellResult, PowellError> {
    let n = x0.len();
    if n == 0 {
        return Err(PowellError::NoDimensions);
    }
    let mut f = Counted { f, evaluations: 0 };
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut x = x0.to_vec();
    let mut fx = f.eval(&x)?;
    let mut trace = vec![fx];
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let (x_start, f_start) = (x.clone(), fx);
        let (mut big_i, mut big_drop) = (0, 0.0);
        for (i, d) in dirs.iter().enumerate() {
            let before = fx;
            let (t, ft) = line_minimize(&mut f, &x, fx, d, opts)?;
            if t != 0.0 {
                x = along(&x, d, t);
                fx = ft;
            }
            if before - fx > big_drop {
                big_drop = before - fx;
                big_i = i;
            }
        }
        let done = 2.0 * (f_start - fx) <= opts.ftol * (f_start.abs() + fx.abs()) + 1e-300;
        if !done {
            let step: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
            let extrapolated: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            let fe = f.eval(&extrapolated)?;
            if fe < f_start {
                let t = 2.0 * (f_start - 2.0 * fx + fe) * (f_start - fx - big_drop).powi(2)
                    - big_drop * (f_start - fe).powi(2);
                if t < 0.0 {
                    let (s, fs) = line_minimize(&mut f, &x, fx, &step, opts)?;
                    if s != 0.0 {
                        x = along(&x, &step, s);
                        fx = fs;
                    }
                    dirs.remove(big_i);
                    dirs.push(step);
                }
            }
        }
        trace.push(fx);
        if done {
            break;
        }
    }
    Ok(PowellResult {
        x,
        f: fx,
        iterations,
        evaluations: f.evaluations,
        trace,
    })
}
