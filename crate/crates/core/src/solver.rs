//! First-order primal-dual minimization of the relaxed minimal partition
//! energy
//!
//! ```text
//!   E(u) = sum_x sum_i u_i(x) h_i(x) + lambda/2 sum_i sum_x g(x) |grad u_i(x)|
//! ```
//!
//! over per-pixel simplex-valued `u`, written as the saddle point problem
//! `min_u max_{|p_i(x)| <= lambda/2 g(x)} <grad u, p> + <u, h>`. Gradients are
//! forward differences with zero flux across the image border, so
//! `|grad|^2 <= 8` and the step sizes `tau = sigma = 1/sqrt(8)` are stable.

use rayon::prelude::*;

use crate::boundary_term::PerimeterWeight;
use crate::data_term::CostVolume;
use crate::error::{Error, Result};
use crate::media_io::{Dims, LabelMask};

const STEP: f64 = 0.353_553_390_593_273_8; // 1 / sqrt(8)

/// Iteration limits and the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverLimits {
    /// Regular iteration cap.
    pub max_iters: usize,
    /// Cap used instead when the objective at `max_iters` still exceeds
    /// `extend_threshold`.
    pub extended_max_iters: usize,
    pub extend_threshold: f64,
    /// Stop once the objective changes by less than this between two
    /// consecutive iterations.
    pub min_decrease: f64,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            max_iters: 3000,
            extended_max_iters: 6000,
            extend_threshold: 600_000.0,
            min_decrease: 10.0,
        }
    }
}

impl SolverLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.extended_max_iters < self.max_iters {
            return Err(Error::Config(format!(
                "solver caps must satisfy 0 < max_iters ({}) <= extended_max_iters ({})",
                self.max_iters, self.extended_max_iters
            )));
        }
        if !(self.min_decrease >= 0.0) || !(self.extend_threshold >= 0.0) {
            return Err(Error::Config("solver thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    SmallDecrease,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub objective: f64,
    /// Objective after initialization followed by one entry per iteration.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

/// Primal simplex field `u` and dual field `p` of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedAssignment {
    dims: Dims,
    n: usize,
    /// `u[pixel * n + label]`.
    u: Vec<f64>,
    /// `p[(pixel * n + label) * 2 + axis]`.
    p: Vec<f64>,
}

impl RelaxedAssignment {
    /// One-hot assignment to the cheapest label of every pixel (the clamped
    /// label at clamped pixels), zero dual.
    pub fn initial(costs: &CostVolume) -> Self {
        let dims = costs.dims();
        let n = costs.num_labels();
        let mut u = vec![0.0; dims.len() * n];
        for px in 0..dims.len() {
            let label = match costs.clamps()[px] {
                Some(l) => l as usize,
                None => argmin(costs.pixel(px)),
            };
            u[px * n + label] = 1.0;
        }
        RelaxedAssignment { dims, n, u, p: vec![0.0; dims.len() * n * 2] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.n
    }

    pub fn primal(&self) -> &[f64] {
        &self.u
    }

    pub fn dual(&self) -> &[f64] {
        &self.p
    }

    /// Label with the largest `u` per pixel, ties to the lowest index.
    pub fn argmax_mask(&self) -> LabelMask {
        let labels = self
            .u
            .chunks(self.n)
            .map(|us| {
                let mut best = 0;
                for (i, &v) in us.iter().enumerate().skip(1) {
                    if v > us[best] {
                        best = i;
                    }
                }
                best as u16
            })
            .collect();
        LabelMask::new(self.dims.width, self.dims.height, self.n, labels).expect("argmax labels lie in range")
    }

    /// Largest deviation from the simplex: negative entries or sums off one.
    pub fn simplex_violation(&self) -> f64 {
        self.u
            .chunks(self.n)
            .map(|us| {
                let neg = us.iter().fold(0.0f64, |m, &v| m.max(-v));
                neg.max((us.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest relative excess `|p_i(x)| / (lambda/2 g(x)) - 1` over zero.
    pub fn dual_violation(&self, weight: &PerimeterWeight, lambda: f64) -> f64 {
        self.p
            .chunks(2 * self.n)
            .enumerate()
            .map(|(px, ps)| {
                let radius = 0.5 * lambda * weight.get(px);
                ps.chunks(2)
                    .map(|q| {
                        let norm = q[0].hypot(q[1]);
                        if radius > 0.0 {
                            (norm / radius - 1.0).max(0.0)
                        } else {
                            norm
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Euclidean projection onto `{u : u_i >= 0, sum u_i = 1}` by sorting.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_in_place(&mut out, &mut scratch);
    out
}

fn project_simplex_in_place(v: &mut [f64], sorted: &mut Vec<f64>) {
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, &mu) in sorted.iter().enumerate() {
        cumsum += mu;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if mu - candidate > 0.0 {
            shift = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - shift).max(0.0);
    }
}

/// Relaxed energy of `u` (pixel-major, `n` labels per pixel). Rows are summed
/// independently and then added in row order.
pub fn objective(u: &[f64], costs: &CostVolume, weight: &PerimeterWeight, lambda: f64) -> f64 {
    let dims = costs.dims();
    let n = costs.num_labels();
    let (w, h) = (dims.width, dims.height);
    let rows: Vec<f64> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut data = 0.0;
            let mut perimeter = 0.0;
            for x in 0..w {
                let px = y * w + x;
                let mut tv = 0.0;
                for i in 0..n {
                    let ui = u[px * n + i];
                    data += ui * costs.get(px, i);
                    let dx = if x + 1 < w { u[(px + 1) * n + i] - ui } else { 0.0 };
                    let dy = if y + 1 < h { u[(px + w) * n + i] - ui } else { 0.0 };
                    tv += dx.hypot(dy);
                }
                perimeter += weight.get(px) * tv;
            }
            data + 0.5 * lambda * perimeter
        })
        .collect();
    rows.iter().sum()
}

/// Energy of a hard labelling.
pub fn mask_objective(mask: &LabelMask, costs: &CostVolume, weight: &PerimeterWeight, lambda: f64) -> f64 {
    let n = costs.num_labels();
    let mut u = vec![0.0; mask.labels().len() * n];
    for (px, &l) in mask.labels().iter().enumerate() {
        u[px * n + l as usize] = 1.0;
    }
    objective(&u, costs, weight, lambda)
}

/// Minimizes the relaxed energy and rounds by per-pixel argmax.
pub fn solve(
    costs: &CostVolume,
    weight: &PerimeterWeight,
    lambda: f64,
    limits: &SolverLimits,
) -> Result<(LabelMask, SolverReport)> {
    solve_observed(costs, weight, lambda, limits, |_, _| {})
}

/// [`solve`], calling `observe(iteration, state)` after every iteration.
pub fn solve_observed(
    costs: &CostVolume,
    weight: &PerimeterWeight,
    lambda: f64,
    limits: &SolverLimits,
    mut observe: impl FnMut(usize, &RelaxedAssignment),
) -> Result<(LabelMask, SolverReport)> {
    let dims = costs.dims();
    dims.ensure_eq(weight.dims(), "perimeter weight")?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::RejectedInput(format!("lambda must be > 0, got {lambda}")));
    }
    limits.validate()?;

    let n = costs.num_labels();
    let (w, h) = (dims.width, dims.height);
    let mut state = RelaxedAssignment::initial(costs);
    let mut u_bar = state.u.clone();
    let mut u_prev = state.u.clone();

    let mut current = objective(&state.u, costs, weight, lambda);
    let mut trace = vec![current];
    let mut cap = limits.max_iters;
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    while iterations < cap {
        iterations += 1;

        // Dual ascent with projection onto the weighted balls.
        state.p.par_chunks_mut(2 * n).enumerate().for_each(|(px, ps)| {
            let (x, y) = (px % w, px / w);
            let radius = 0.5 * lambda * weight.get(px);
            for i in 0..n {
                let ui = u_bar[px * n + i];
                let dx = if x + 1 < w { u_bar[(px + 1) * n + i] - ui } else { 0.0 };
                let dy = if y + 1 < h { u_bar[(px + w) * n + i] - ui } else { 0.0 };
                let q = &mut ps[2 * i..2 * i + 2];
                q[0] += STEP * dx;
                q[1] += STEP * dy;
                let norm = q[0].hypot(q[1]);
                if norm > radius {
                    let s = if norm > 0.0 { radius / norm } else { 0.0 };
                    q[0] *= s;
                    q[1] *= s;
                }
            }
        });

        // Primal descent with projection onto the simplex.
        u_prev.copy_from_slice(&state.u);
        let p = &state.p;
        state.u.par_chunks_mut(n).enumerate().for_each_init(Vec::new, |scratch, (px, us)| {
            if let Some(label) = costs.clamps()[px] {
                us.fill(0.0);
                us[label as usize] = 1.0;
                return;
            }
            let (x, y) = (px % w, px / w);
            for (i, ui) in us.iter_mut().enumerate() {
                let at = |q: usize, axis: usize| p[(q * n + i) * 2 + axis];
                let mut div = 0.0;
                if x + 1 < w {
                    div += at(px, 0);
                }
                if x > 0 {
                    div -= at(px - 1, 0);
                }
                if y + 1 < h {
                    div += at(px, 1);
                }
                if y > 0 {
                    div -= at(px - w, 1);
                }
                *ui -= STEP * (costs.get(px, i) - div);
            }
            project_simplex_in_place(us, scratch);
        });

        // Over-relaxation.
        u_bar
            .par_iter_mut()
            .zip(state.u.par_iter().zip(u_prev.par_iter()))
            .for_each(|(b, (u, old))| *b = 2.0 * u - old);

        let next = objective(&state.u, costs, weight, lambda);
        if !next.is_finite() {
            return Err(Error::Divergence { iteration: iterations, objective: next });
        }
        trace.push(next);
        observe(iterations, &state);

        if iterations == limits.max_iters && next > limits.extend_threshold {
            cap = limits.extended_max_iters;
        }
        let change = current - next;
        current = next;
        if change.abs() < limits.min_decrease {
            termination = Termination::SmallDecrease;
            break;
        }
    }

    let report = SolverReport { iterations, objective: current, trace, termination };
    Ok((state.argmax_mask(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_term::apply_clamps;
    use crate::flow_consistency::WarpedLabels;
    use proptest::prelude::*;

    fn volume(w: usize, h: usize, n: usize, f: impl Fn(usize, usize, usize) -> f64) -> CostVolume {
        let costs = (0..w * h * n).map(|k| f((k / n) % w, (k / n) / w, k % n)).collect();
        CostVolume::new(Dims::new(w, h), n, costs).unwrap()
    }

    fn tight() -> SolverLimits {
        SolverLimits { min_decrease: 1e-9, ..SolverLimits::default() }
    }

    #[test]
    fn simplex_projection_examples() {
        let third = project_simplex(&[0.5, 0.5, 0.5]);
        for v in third {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn dominant_label_wins() {
        let costs = volume(12, 9, 2, |_, _, i| if i == 0 { 0.0 } else { 10.0 });
        let weight = PerimeterWeight::uniform(costs.dims());
        for lambda in [1.0, 30.0, 60.0] {
            let (mask, _) = solve(&costs, &weight, lambda, &SolverLimits::default()).unwrap();
            assert!(mask.labels().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn clamp_beats_adversarial_costs() {
        let costs = volume(8, 8, 3, |_, _, i| if i == 2 { 0.0 } else { 50.0 });
        let mut warped = vec![None; 64];
        warped[27] = Some(1);
        let clamped = apply_clamps(costs, &WarpedLabels::new(Dims::new(8, 8), 3, warped)).unwrap();
        let weight = PerimeterWeight::uniform(clamped.dims());
        let (mask, _) = solve(&clamped, &weight, 60.0, &tight()).unwrap();
        assert_eq!(mask.labels()[27], 1);
    }

    #[test]
    fn fully_clamped_output_equals_clamps() {
        let labels: Vec<u16> = (0..100).map(|i| ((i / 7) % 3) as u16).collect();
        let mask = LabelMask::new(10, 10, 3, labels).unwrap();
        let costs = volume(10, 10, 3, |x, _, i| ((x + i) % 3) as f64);
        let clamped = apply_clamps(costs, &WarpedLabels::from_mask(&mask)).unwrap();
        let weight = PerimeterWeight::uniform(clamped.dims());
        let (out, _) = solve(&clamped, &weight, 20.0, &SolverLimits::default()).unwrap();
        assert_eq!(out, mask);
    }

    #[test]
    fn constant_one_hot_has_zero_objective() {
        let costs = volume(5, 4, 2, |_, _, i| if i == 1 { 0.0 } else { 3.0 });
        let weight = PerimeterWeight::uniform(costs.dims());
        let mask = LabelMask::filled(5, 4, 2, 1).unwrap();
        assert_eq!(mask_objective(&mask, &costs, &weight, 17.0), 0.0);
    }

    #[test]
    fn checkerboard_objective_matches_direct_sum() {
        let (w, h, lambda) = (6, 5, 3.0);
        let costs = volume(w, h, 2, |x, y, i| ((x * 7 + y * 3 + i * 5) % 11) as f64 * 0.5);
        let weight = PerimeterWeight::uniform(costs.dims());
        let labels: Vec<u16> = (0..w * h).map(|k| (((k % w) + (k / w)) % 2) as u16).collect();
        let mask = LabelMask::new(w, h, 2, labels.clone()).unwrap();

        // Direct summation: each label plane differs from every right and
        // lower neighbour inside the image.
        let mut data = 0.0;
        let mut tv = 0.0;
        for y in 0..h {
            for x in 0..w {
                let px = y * w + x;
                data += costs.get(px, labels[px] as usize);
                let dx = if x + 1 < w { 1.0 } else { 0.0 };
                let dy = if y + 1 < h { 1.0 } else { 0.0 };
                tv += 2.0 * f64::sqrt(dx + dy);
            }
        }
        let expected = data + 0.5 * lambda * tv;
        assert!((mask_objective(&mask, &costs, &weight, lambda) - expected).abs() < 1e-9);

        let doubled = mask_objective(&mask, &costs, &weight, 2.0 * lambda) - data;
        assert!((doubled - 2.0 * (expected - data)).abs() < 1e-9);
    }

    #[test]
    fn half_split_is_recovered() {
        let (w, h) = (64, 64);
        let costs = volume(w, h, 2, |x, _, i| {
            let left = x < w / 2;
            if (i == 0) == left {
                0.0
            } else {
                10.0
            }
        });
        let weight = PerimeterWeight::uniform(costs.dims());
        let (mask, _) = solve(&costs, &weight, 5.0, &SolverLimits::default()).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(mask.get(x, y), u16::from(x >= w / 2));
            }
        }
    }

    #[test]
    fn rejects_bad_lambda() {
        let costs = volume(2, 2, 2, |_, _, _| 0.0);
        let weight = PerimeterWeight::uniform(costs.dims());
        assert!(solve(&costs, &weight, 0.0, &SolverLimits::default()).is_err());
    }

    #[test]
    fn extended_cap_applies_above_threshold() {
        // Large constant costs keep the objective above a tiny threshold.
        let costs = volume(4, 4, 2, |x, y, i| ((x + y + i) % 2) as f64 * 3.0 + 1.0);
        let weight = PerimeterWeight::uniform(costs.dims());
        let limits =
            SolverLimits { max_iters: 5, extended_max_iters: 9, extend_threshold: 0.0, min_decrease: 0.0 };
        let (_, report) = solve(&costs, &weight, 1.0, &limits).unwrap();
        assert_eq!(report.iterations, 9);
        assert_eq!(report.termination, Termination::MaxIters);
        let limits = SolverLimits { extend_threshold: 1e12, ..limits };
        let (_, report) = solve(&costs, &weight, 1.0, &limits).unwrap();
        assert_eq!(report.iterations, 5);
        assert_eq!(report.trace.len(), 6);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let costs = volume(20, 15, 3, |x, y, i| ((x * 13 + y * 7 + i * 29) % 17) as f64 * 0.3);
        let weight =
            PerimeterWeight::new(costs.dims(), (0..300).map(|k| 0.2 + (k % 5) as f64 * 0.2).collect());
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| solve(&costs, &weight, 4.0, &tight()).unwrap())
        };
        let (a, ra) = run(1);
        let (b, rb) = run(4);
        assert_eq!(a, b);
        assert_eq!(
            ra.trace.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            rb.trace.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let again = project_simplex(&p);
            for (a, b) in p.iter().zip(&again) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_is_closest_feasible_point(
            v in proptest::collection::vec(-3.0f64..3.0, 3),
            w in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            let total: f64 = w.iter().sum();
            prop_assume!(total > 1e-6);
            let feasible: Vec<f64> = w.iter().map(|x| x / total).collect();
            let p = project_simplex(&v);
            let d = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            prop_assert!(d(&p) <= d(&feasible) + 1e-12);
        }

        #[test]
        fn rounding_never_worse_than_initialization(
            raw in proptest::collection::vec(0.0f64..8.0, 12 * 10 * 3),
            lambda in 1.0f64..20.0,
        ) {
            let costs = CostVolume::new(Dims::new(12, 10), 3, raw).unwrap();
            let weight = PerimeterWeight::uniform(costs.dims());
            let init = RelaxedAssignment::initial(&costs).argmax_mask();
            let (mask, _) = solve(&costs, &weight, lambda, &tight()).unwrap();
            let e_init = mask_objective(&init, &costs, &weight, lambda);
            let e_out = mask_objective(&mask, &costs, &weight, lambda);
            prop_assert!(e_out <= e_init + 1e-9, "{} > {}", e_out, e_init);
        }
    }
}
