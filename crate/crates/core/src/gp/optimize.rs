//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are projected onto the box before evaluation, so every simplex
//! vertex is feasible. Projection can flatten the simplex against a face; a
//! converged search is therefore restarted from its best vertex until a
//! restart no longer improves the value. Non-finite objective values rank as `+∞`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Simplex diameter (max-norm) below which the search stops.
    pub xtol: f64,
    /// Relative spread of vertex values below which the search stops.
    pub ftol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_evals: 2000, xtol: 1e-6, ftol: 1e-10, initial_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MAX_RESTARTS: usize = 10;

impl NelderMead {
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], lower: &[f64], upper: &[f64]) -> Minimum {
        let mut best = self.search(&mut f, x0, lower, upper, self.max_evals);
        for _ in 0..MAX_RESTARTS {
            if !best.converged || best.evals >= self.max_evals {
                break;
            }
            let next = self.search(&mut f, &best.x.clone(), lower, upper, self.max_evals - best.evals);
            let evals = best.evals + next.evals;
            let improved = next.value < best.value - self.ftol * (1.0 + best.value.abs());
            if next.value <= best.value {
                best = Minimum { evals, ..next };
            } else {
                best.evals = evals;
            }
            if !improved {
                break;
            }
        }
        best
    }

    fn search(
        &self,
        f: &mut impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        lower: &[f64],
        upper: &[f64],
        budget: usize,
    ) -> Minimum {
        let n = x0.len();
        let project = |x: &mut [f64]| {
            for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
                *v = v.clamp(lo, hi);
            }
        };
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut start = x0.to_vec();
        project(&mut start);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v0 = eval(&start, &mut evals);
        simplex.push((start.clone(), v0));
        for i in 0..n {
            let mut x = start.clone();
            x[i] += self.initial_step;
            if x[i] > upper[i] {
                x[i] = start[i] - self.initial_step;
            }
            project(&mut x);
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        let mut converged = false;
        while evals < budget {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = (worst - best).abs();
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if best.is_finite() && spread <= self.ftol * (1.0 + best.abs()) && diameter <= self.xtol {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let along = |coef: f64| {
                let mut x: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect();
                project(&mut x);
                x
            };

            let xr = along(REFLECT);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(EXPAND);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            // Outside contraction when the reflection improved on the worst vertex.
            let outside = fr < simplex[n].1;
            let xc = along(if outside { REFLECT * CONTRACT } else { -CONTRACT });
            let fc = eval(&xc, &mut evals);
            let accept = if outside { fc <= fr } else { fc < simplex[n].1 };
            if accept {
                simplex[n] = (xc, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for (x, v) in simplex[1..].iter_mut() {
                for (xi, ai) in x.iter_mut().zip(&anchor) {
                    *xi = ai + SHRINK * (*xi - ai);
                }
                *v = eval(x, &mut evals);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum { x, value, evals, converged }
    }
}
