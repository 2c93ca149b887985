//! Derivative-free bounded minimization: a coarse grid scan followed by a
//! Nelder–Mead simplex whose trial points are projected onto the box.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.lower.len() == self.upper.len()
            && self
                .lower
                .iter()
                .zip(&self.upper)
                .all(|(l, u)| l.is_finite() && u.is_finite() && l <= u)
    }

    fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

/// Evaluates `f` on a regular grid with `points` nodes per axis and returns the
/// best node. Ties resolve to the lowest linear grid index, so the result does
/// not depend on the number of worker threads.
pub fn grid_search<F>(f: &F, bounds: &Bounds, points: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    grid_local_minima(f, bounds, points, 1).swap_remove(0)
}

/// Grid nodes no worse than any node of their surrounding `3^dim` block,
/// best first, at most `count` of them. The global grid minimum is always
/// the first entry.
pub fn grid_local_minima<F>(
    f: &F,
    bounds: &Bounds,
    points: usize,
    count: usize,
) -> Vec<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.dim();
    let points = points.max(2);
    let total = points.pow(dim as u32);
    let digits = |mut idx: usize| -> Vec<usize> {
        (0..dim)
            .map(|_| {
                let i = idx % points;
                idx /= points;
                i
            })
            .collect()
    };
    let node = |idx: usize| -> Vec<f64> {
        digits(idx)
            .iter()
            .enumerate()
            .map(|(d, &i)| {
                let (l, u) = (bounds.lower[d], bounds.upper[d]);
                l + (u - l) * i as f64 / (points - 1) as f64
            })
            .collect()
    };
    let values: Vec<f64> = (0..total).into_par_iter().map(|i| f(&node(i))).collect();

    let is_local_min = |idx: usize| -> bool {
        let v = values[idx];
        if !v.is_finite() {
            return false;
        }
        let base = digits(idx);
        (0..3usize.pow(dim as u32)).all(|offset| {
            let mut o = offset;
            let mut neighbor = 0;
            let mut stride = 1;
            for &b in &base {
                let shifted = b as isize + (o % 3) as isize - 1;
                o /= 3;
                if shifted < 0 || shifted >= points as isize {
                    return true;
                }
                neighbor += shifted as usize * stride;
                stride *= points;
            }
            // strict on one side so a flat plateau yields a single node
            values[neighbor] > v || (values[neighbor] == v && neighbor >= idx)
        })
    };
    let mut minima: Vec<usize> = (0..total).filter(|&i| is_local_min(i)).collect();
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    if minima.is_empty() {
        let best = (0..total).fold(0, |bi, i| if values[i] < values[bi] { i } else { bi });
        minima.push(best);
    }
    minima.truncate(count.max(1));
    minima.into_iter().map(|i| (node(i), values[i])).collect()
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when the spread of simplex values drops below
    /// `f_tol_rel * |f_best| + f_tol_abs`.
    pub f_tol_rel: f64,
    pub f_tol_abs: f64,
    /// Stop when every vertex is within this distance of the best one (per axis).
    pub x_tol: f64,
    /// Initial simplex edge per axis.
    pub initial_step: Vec<f64>,
}

impl NelderMeadOptions {
    pub fn new(initial_step: Vec<f64>) -> Self {
        Self {
            max_iterations: 500,
            f_tol_rel: 1e-6,
            f_tol_abs: 1e-20,
            x_tol: 1e-12,
            initial_step,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn nelder_mead_bounded<F>(
    f: &F,
    x0: &[f64],
    bounds: &Bounds,
    options: &NelderMeadOptions,
) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let dim = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &mut Vec<f64>| {
        bounds.clamp(x);
        evaluations += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    let f0 = eval(&mut start);
    simplex.push((start.clone(), f0));
    for d in 0..dim {
        let mut v = start.clone();
        let step = options.initial_step[d];
        // step inward if the vertex would leave the box
        v[d] = if v[d] + step <= bounds.upper[d] {
            v[d] + step
        } else {
            v[d] - step
        };
        let fv = eval(&mut v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if worst - best <= options.f_tol_rel * best.abs() + options.f_tol_abs
            || spread_x <= options.x_tol
        {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|d| simplex[..dim].iter().map(|(v, _)| v[d]).sum::<f64>() / dim as f64)
            .collect();
        let towards = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let mut reflected = towards(REFLECT);
        let fr = eval(&mut reflected);
        if fr < simplex[0].1 {
            let mut expanded = towards(EXPAND);
            let fe = eval(&mut expanded);
            simplex[dim] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (mut contracted, outside) = if fr < simplex[dim].1 {
            (towards(CONTRACT * REFLECT), true)
        } else {
            (towards(-CONTRACT), false)
        };
        let fc = eval(&mut contracted);
        if (outside && fc <= fr) || (!outside && fc < simplex[dim].1) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut v: Vec<f64> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(a, x)| a + SHRINK * (x - a))
                .collect();
            let fv = eval(&mut v);
            *vertex = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_interior_minimum() {
        let b = Bounds::uniform(2, -2.0, 2.0);
        let (x0, _) = grid_search(&rosenbrock, &b, 21);
        let mut opts = NelderMeadOptions::new(vec![0.2, 0.2]);
        opts.max_iterations = 2000;
        let m = nelder_mead_bounded(&rosenbrock, &x0, &b, &opts);
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            m
        );
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let b = Bounds::uniform(2, 0.0, 1.0);
        let m = nelder_mead_bounded(&f, &[0.5, 0.5], &b, &NelderMeadOptions::new(vec![0.1, 0.1]));
        assert!(
            (m.x[0] - 1.0).abs() < 1e-8 && m.x[1].abs() < 1e-8,
            "{:?}",
            m
        );
    }

    #[test]
    fn local_minima_of_a_double_well() {
        let f = |x: &[f64]| (x[0] * x[0] - 1.0).powi(2) + 0.1 * (x[0] - 1.0).powi(2) + x[1] * x[1];
        let b = Bounds::uniform(2, -2.0, 2.0);
        let minima = grid_local_minima(&f, &b, 41, 5);
        assert_eq!(minima.len(), 2, "{minima:?}");
        assert_eq!(minima[0].0, vec![1.0, 0.0]);
        assert!(minima[1].0[0] < -0.8 && minima[1].1 > minima[0].1);
        assert_eq!(grid_search(&f, &b, 41).0, minima[0].0);
    }

    #[test]
    fn grid_is_deterministic_and_picks_first_tie() {
        let f = |x: &[f64]| (x[0] - 0.5).abs().min((x[0] + 0.5).abs());
        let b = Bounds::uniform(1, -1.0, 1.0);
        let (x, v) = grid_search(&f, &b, 5);
        assert_eq!(x, vec![-0.5]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn feasibility() {
        assert!(Bounds::uniform(3, 0.5, 1.0).is_feasible());
        assert!(!Bounds {
            lower: vec![1.0],
            upper: vec![0.5]
        }
        .is_feasible());
        assert!(!Bounds {
            lower: vec![0.0, 0.0],
            upper: vec![1.0]
        }
        .is_feasible());
    }
}
