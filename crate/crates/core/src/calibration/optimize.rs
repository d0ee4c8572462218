//! Unconstrained local minimisers: Nelder-Mead and BFGS with forward
//! differences.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub max_evaluations: usize,
    /// Simplex: spread of the objective values. BFGS: gradient norm.
    pub f_tol: f64,
    /// Largest coordinate distance of a simplex vertex from the best one, or
    /// the BFGS step length, below which the search stops.
    pub x_tol: f64,
    /// Initial simplex edge.
    pub initial_step: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
    /// Times a converged simplex is rebuilt around its best vertex; the
    /// search stops early once a rebuild brings no improvement.
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { max_evaluations: 400, f_tol: 1e-7, x_tol: 1e-3, initial_step: 0.25, fd_step: 1e-3, restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Evaluation indices (0-based) of the accepted iterates, in order.
    pub accepted: Vec<usize>,
}

struct Counted<F> {
    f: F,
    count: usize,
}

impl<F, E> Counted<F>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, usize), E> {
        let v = (self.f)(x)?;
        self.count += 1;
        Ok((if v.is_nan() { f64::INFINITY } else { v }, self.count - 1))
    }
}

/// Nelder-Mead simplex search from `x0`, restarted from the best vertex
/// after each convergence (see [`OptimizerSettings::restarts`]).
pub fn nelder_mead<F, E>(f: F, x0: &[f64], settings: &OptimizerSettings) -> Result<Minimum, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut f = Counted { f, count: 0 };
    let (v, i) = f.eval(x0)?;
    let mut best = (x0.to_vec(), v, i);
    let mut accepted = Vec::new();
    let mut converged = false;
    for round in 0..=settings.restarts {
        let before = best.1;
        let (vertex, done) = simplex_round(&mut f, best, settings, &mut accepted)?;
        best = vertex;
        converged = done;
        if !done || (round > 0 && before - best.1 <= settings.f_tol) {
            break;
        }
    }
    Ok(Minimum { x: best.0, value: best.1, evaluations: f.count, converged, accepted })
}

type Vertex = (Vec<f64>, f64, usize);

fn simplex_round<F, E>(
    f: &mut Counted<F>,
    start: Vertex,
    settings: &OptimizerSettings,
    accepted: &mut Vec<usize>,
) -> Result<(Vertex, bool), E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let n = start.0.len();
    let mut simplex: Vec<Vertex> = Vec::with_capacity(n + 1);
    for k in 0..n {
        let mut x = start.0.clone();
        x[k] += settings.initial_step;
        let (v, i) = f.eval(&x)?;
        simplex.push((x, v, i));
    }
    simplex.push(start);
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
        if accepted.last() != Some(&simplex[0].2) {
            accepted.push(simplex[0].2);
        }
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.0.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= settings.f_tol && size <= settings.x_tol {
            converged = true;
            break;
        }
        if f.count >= settings.max_evaluations {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
        };
        let worst = simplex[n].0.clone();
        let xr = along(1.0, &worst);
        let (fr, ir) = f.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(2.0, &worst);
            let (fe, ie) = f.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe, ie) } else { (xr, fr, ir) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr, ir);
            continue;
        }
        let (xc, t) = if fr < simplex[n].1 { (along(0.5, &worst), fr) } else { (along(-0.5, &worst), simplex[n].1) };
        let (fc, ic) = f.eval(&xc)?;
        if fc < t {
            simplex[n] = (xc, fc, ic);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let (v, i) = f.eval(&x)?;
            *vertex = (x, v, i);
        }
    }
    Ok((simplex.swap_remove(0), converged))
}

fn gradient<F, E>(f: &mut Counted<F>, x: &[f64], fx: f64, rel_step: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        let h = rel_step * x[k].abs().max(1.0);
        probe[k] = x[k] + h;
        let (v, _) = f.eval(&probe)?;
        probe[k] = x[k];
        g.push((v - fx) / h);
    }
    Ok(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with forward-difference gradients and a backtracking Armijo line
/// search.
pub fn bfgs<F, E>(f: F, x0: &[f64], settings: &OptimizerSettings) -> Result<Minimum, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let n = x0.len();
    let mut f = Counted { f, count: 0 };
    let mut x = x0.to_vec();
    let (mut fx, i0) = f.eval(&x)?;
    let mut accepted = alloc::vec![i0];
    let mut g = gradient(&mut f, &x, fx, settings.fd_step)?;
    // inverse Hessian approximation, row-major
    let mut h: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    let mut converged = false;
    while f.count < settings.max_evaluations {
        if libm::sqrt(dot(&g, &g)) <= settings.f_tol {
            converged = true;
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            // lost descent: restart from steepest descent
            h.iter_mut().enumerate().for_each(|(k, v)| *v = if k / n == k % n { 1.0 } else { 0.0 });
            p = g.iter().map(|v| -v).collect();
            slope = dot(&p, &g);
        }
        let mut step = 1.0;
        let mut next = None;
        while f.count < settings.max_evaluations {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            let (fxn, ixn) = f.eval(&xn)?;
            if fxn <= fx + 1e-4 * step * slope {
                next = Some((xn, fxn, ixn));
                break;
            }
            step *= 0.5;
            if step * libm::sqrt(dot(&p, &p)) < settings.x_tol * 1e-3 {
                break;
            }
        }
        let Some((xn, fxn, ixn)) = next else {
            // no decrease along the search direction
            converged = f.count < settings.max_evaluations;
            break;
        };
        accepted.push(ixn);
        let gn = gradient(&mut f, &xn, fxn, settings.fd_step)?;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let moved = libm::sqrt(dot(&s, &s));
        x = xn;
        fx = fxn;
        g = gn;
        if moved <= settings.x_tol {
            converged = true;
            break;
        }
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
    }
    Ok(Minimum { x, value: fx, evaluations: f.count, converged, accepted })
}
