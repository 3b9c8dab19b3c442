//! Derivative-free Nelder-Mead simplex minimization.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop when `f_worst - f_best <= ftol * (1 + |f_best|)`.
    pub ftol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            ftol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0`; the initial simplex offsets coordinate `i` by `steps[i]`.
///
/// `f` may return `f64::INFINITY` to mark infeasible points.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], cfg: NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let fx = eval(x0, &mut evals);
        return Minimum { x: Vec::new(), fx, evals };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if evals >= cfg.max_evals || (worst - best) <= cfg.ftol * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha, &simplex[n].0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(gamma, &simplex[n].0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(rho, &simplex[n].0);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho, &simplex[n].0);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x_best
                .iter()
                .zip(&v.0)
                .map(|(b, xi)| b + sigma * (xi - b))
                .collect();
            let fx = eval(&x, &mut evals);
            *v = (x, fx);
        }
    }
    let (x, fx) = simplex.swap_remove(0);
    Minimum { x, fx, evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let m = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            NelderMeadConfig { max_evals: 5000, ftol: 1e-14 },
        );
        assert!((m.x[0] - 1.0).abs() < 1e-5, "{:?}", m.x);
        assert!((m.x[1] + 2.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let m = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            NelderMeadConfig { max_evals: 10_000, ftol: 1e-16 },
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn respects_infeasible_region() {
        let m = nelder_mead(
            |x| if x[0] < 0.5 { f64::INFINITY } else { x[0] * x[0] },
            &[2.0],
            &[0.3],
            NelderMeadConfig::default(),
        );
        assert!(m.x[0] >= 0.5 && m.x[0] < 0.51, "{:?}", m.x);
    }

    #[test]
    fn honours_eval_budget() {
        let m = nelder_mead(|x| x.iter().map(|v| v.abs()).sum(), &[5.0, 5.0, 5.0], &[1.0; 3], NelderMeadConfig { max_evals: 50, ftol: 0.0 });
        assert!(m.evals <= 50 + 4);
    }
}
