//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The objective may return `+inf` (or NaN) at points outside its domain; the
//! line search treats such points as failing the sufficient-decrease test and
//! shrinks the step.

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stop when the sup-norm of the gradient falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            grad_tol: 1e-5,
            max_iter: 500,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// The starting point is outside the domain.
    InvalidStart,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

impl LbfgsReport {
    pub fn converged(&self) -> bool {
        self.status == LbfgsStatus::Converged
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.calls += 1;
        let v = (self.f)(x, g);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimises `f`, which returns the objective and writes the gradient into
/// its second argument.
pub fn minimize<F>(f: F, x0: &[f64], config: &LbfgsConfig) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut obj = Counted { f, calls: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = obj.eval(&x, &mut g);
    if !fx.is_finite() {
        return LbfgsReport {
            x,
            value: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            evaluations: obj.calls,
            status: LbfgsStatus::InvalidStart,
        };
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(config.memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(config.memory);
    let mut rho_hist: Vec<f64> = Vec::with_capacity(config.memory);
    let mut dir = vec![0.0; n];
    let mut alpha = vec![0.0; config.memory];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..config.max_iter {
        let gnorm = sup_norm(&g);
        if gnorm < config.grad_tol {
            return LbfgsReport {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                evaluations: obj.calls,
                status: LbfgsStatus::Converged,
            };
        }

        // two-loop recursion
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        let m = s_hist.len();
        for j in (0..m).rev() {
            alpha[j] = rho_hist[j] * dot(&s_hist[j], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[j]) {
                *d -= alpha[j] * y;
            }
        }
        if m > 0 {
            let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for j in 0..m {
            let beta = rho_hist[j] * dot(&y_hist[j], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[j]) {
                *d += (alpha[j] - beta) * s;
            }
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // lost descent: fall back to steepest descent and forget history
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&g, &dir);
        }
        let initial_step = if s_hist.is_empty() {
            (1.0 / sup_norm(&dir)).min(1.0)
        } else {
            1.0
        };

        let found = line_search(
            &mut obj,
            &x,
            fx,
            slope,
            &dir,
            initial_step,
            config,
            &mut x_new,
            &mut g_new,
        );
        let Some(f_new) = found else {
            if !s_hist.is_empty() {
                // retry once from steepest descent before giving up
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                continue;
            }
            return LbfgsReport {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                evaluations: obj.calls,
                status: LbfgsStatus::LineSearchFailed,
            };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == config.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
    }
    LbfgsReport {
        grad_norm: sup_norm(&g),
        x,
        value: fx,
        iterations: config.max_iter,
        evaluations: obj.calls,
        status: LbfgsStatus::MaxIterations,
    }
}

/// Strong-Wolfe search along `dir`; on success `x_out`/`g_out` hold the
/// accepted point and its gradient.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    slope0: f64,
    dir: &[f64],
    initial_step: f64,
    config: &LbfgsConfig,
    x_out: &mut [f64],
    g_out: &mut [f64],
) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let eval_at = |obj: &mut Counted<F>, t: f64, xo: &mut [f64], go: &mut [f64]| {
        for ((xo, xi), d) in xo.iter_mut().zip(x).zip(dir) {
            *xo = xi + t * d;
        }
        let v = obj.eval(xo, go);
        (v, if v.is_finite() { dot(go, dir) } else { f64::NAN })
    };

    let mut lo = 0.0;
    let mut f_lo = f0;
    let mut slope_lo = slope0;
    let mut hi: Option<f64> = None;
    let mut t = initial_step;
    // best point seen that satisfies sufficient decrease
    let mut best: Option<(f64, f64)> = None;

    for _ in 0..config.max_line_search {
        let (ft, st) = eval_at(obj, t, x_out, g_out);
        let armijo = ft.is_finite() && ft <= f0 + config.c1 * t * slope0;
        if !armijo || ft >= f_lo {
            hi = Some(t);
        } else {
            if st.abs() <= -config.c2 * slope0 {
                return Some(ft);
            }
            if best.is_none_or(|(_, fb)| ft < fb) {
                best = Some((t, ft));
            }
            let toward_hi = hi.map_or(1.0, |h| (h - lo).signum());
            if st * toward_hi >= 0.0 {
                hi = Some(lo);
            }
            lo = t;
            f_lo = ft;
            slope_lo = st;
        }
        t = match hi {
            None => t * 2.0,
            Some(h) => {
                // safeguarded quadratic interpolation between lo and hi
                let (a, b) = if lo < h { (lo, h) } else { (h, lo) };
                let width = b - a;
                let cand = if ft.is_finite() && hi == Some(t) && lo < t {
                    let denom = 2.0 * (ft - f_lo - slope_lo * (t - lo));
                    if denom > 0.0 {
                        lo - slope_lo * (t - lo) * (t - lo) / denom
                    } else {
                        0.5 * (a + b)
                    }
                } else {
                    0.5 * (a + b)
                };
                cand.clamp(a + 0.1 * width, b - 0.1 * width)
            }
        };
        if hi.is_some() && (t - lo).abs() < 1e-16 * (1.0 + lo.abs()) {
            break;
        }
    }
    // accept the best sufficient-decrease point even if curvature failed
    let (t, _) = best?;
    let (ft, _) = eval_at(obj, t, x_out, g_out);
    Some(ft)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn minimises_rosenbrock() {
        let rep = minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default());
        assert!(rep.converged(), "{rep:?}");
        assert!((rep.x[0] - 1.0).abs() < 1e-5 && (rep.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let n = 30;
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..x.len() {
                let w = 1.0 + i as f64;
                v += 0.5 * w * (x[i] - 1.0).powi(2);
                g[i] = w * (x[i] - 1.0);
            }
            v
        };
        let rep = minimize(f, &vec![0.0; n], &LbfgsConfig::default());
        assert!(rep.converged());
        assert!(rep.x.iter().all(|v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn respects_barrier() {
        // -log(x) + x has its minimum at 1 and is +inf for x <= 0
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::INFINITY;
            }
            g[0] = -1.0 / x[0] + 1.0;
            -x[0].ln() + x[0]
        };
        let rep = minimize(f, &[1e-3], &LbfgsConfig::default());
        assert!(rep.converged());
        assert!((rep.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn invalid_start_is_reported() {
        let f = |_: &[f64], _: &mut [f64]| f64::INFINITY;
        assert_eq!(minimize(f, &[0.0], &LbfgsConfig::default()).status, LbfgsStatus::InvalidStart);
    }
}
