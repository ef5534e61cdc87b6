//! The entropic proximal update on the scaled feasible set
//! { sum(x) = 1, 0 <= x(i) <= upper(i) }: a multiplicative candidate
//! x(i) * exp(-eta (g(i) + lambda)), clamped to per-step move-limit bounds,
//! with lambda found by bisection so the clamped sum returns to one.

use crate::error::{Error, Result};

/// Smallest positive fraction of the upper bound a component is floored to
/// before a multiplicative step, so the update stays well-defined after a
/// component hits its zero lower bound.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Exponent clip magnitude guarding exp() against overflow; clipped
/// components saturate and are resolved by the box clamp.
pub const EXP_CLIP: f64 = 700.0;

/// Sum tolerance of the bisection on the volume multiplier.
pub const SUM_TOL: f64 = 1e-10;

const MAX_BRACKET_DOUBLINGS: u32 = 200;
const MAX_BISECTIONS: u32 = 200;

#[derive(Debug, Clone)]
pub struct ProxInput<'a> {
    /// Current scaled design, sum == 1 within tolerance, strictly inside
    /// the box where possible.
    pub x_scaled: &'a [f64],
    /// Gradient with respect to the scaled variables.
    pub grad_scaled: &'a [f64],
    /// Step size, >= 0.
    pub eta: f64,
    /// Move-limit fraction of the upper bound, in (0, 1].
    pub move_limit: f64,
    /// Scaled upper bounds.
    pub upper: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct ProxOutput {
    /// Updated scaled design.
    pub x_next: Vec<f64>,
    /// Multiplier solving the volume equality.
    pub lambda: f64,
    pub bisect_iters: u32,
    pub clamped_upper: usize,
    pub clamped_lower: usize,
    pub clipped_exponents: usize,
    /// True when the unconstrained candidate at lambda = 0 would not exceed
    /// the volume, i.e. the equality constraint was not actually pushing
    /// material out.
    pub constraint_slack: bool,
}

/// Multiplicative candidate z(i) = x(i) exp(-eta (g(i) + lambda)), with the
/// exponent clipped to +-EXP_CLIP. Returns the candidate and the clip count.
pub fn candidate(
    x_scaled: &[f64],
    grad_scaled: &[f64],
    eta: f64,
    lambda: f64,
) -> (Vec<f64>, usize) {
    let mut clipped = 0usize;
    let z = x_scaled
        .iter()
        .zip(grad_scaled)
        .map(|(&x, &g)| {
            let mut arg = -eta * (g + lambda);
            if arg.abs() > EXP_CLIP {
                arg = arg.clamp(-EXP_CLIP, EXP_CLIP);
                clipped += 1;
            }
            x * arg.exp()
        })
        .collect();
    (z, clipped)
}

/// Per-step box from the move limit: [max(x - upper*move, 0),
/// min(x + upper*move, upper)].
pub fn step_bounds(x_scaled: &[f64], upper: &[f64], move_limit: f64) -> (Vec<f64>, Vec<f64>) {
    let lower_b: Vec<f64> = x_scaled
        .iter()
        .zip(upper)
        .map(|(&x, &v)| (x - v * move_limit).max(0.0))
        .collect();
    let upper_b: Vec<f64> = x_scaled
        .iter()
        .zip(upper)
        .map(|(&x, &v)| (x + v * move_limit).min(v))
        .collect();
    (lower_b, upper_b)
}

/// Componentwise projection onto [lower, upper].
pub fn clamp(z: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&zi, (&lo, &hi))| zi.clamp(lo, hi))
        .collect()
}

fn clamped_sum(
    x_scaled: &[f64],
    grad_scaled: &[f64],
    eta: f64,
    lambda: f64,
    lower: &[f64],
    upper: &[f64],
) -> f64 {
    x_scaled
        .iter()
        .zip(grad_scaled)
        .zip(lower.iter().zip(upper))
        .map(|((&x, &g), (&lo, &hi))| {
            let arg = (-eta * (g + lambda)).clamp(-EXP_CLIP, EXP_CLIP);
            (x * arg.exp()).clamp(lo, hi)
        })
        .sum()
}

/// Solves for the multiplier restoring sum(x_next) = 1 and returns the
/// clamped update. The clamped sum is continuous and non-increasing in
/// lambda, so a sign-bracketing bisection applies.
pub fn solve_multiplier(input: &ProxInput) -> Result<ProxOutput> {
    let n = input.x_scaled.len();
    assert_eq!(input.grad_scaled.len(), n);
    assert_eq!(input.upper.len(), n);
    if !(input.eta >= 0.0) {
        return Err(Error::Parameter(format!("step size {} < 0", input.eta)));
    }
    if !(input.move_limit > 0.0 && input.move_limit <= 1.0) {
        return Err(Error::Parameter(format!(
            "move limit {} outside (0, 1]",
            input.move_limit
        )));
    }

    let (lower_b, upper_b) = step_bounds(input.x_scaled, input.upper, input.move_limit);
    let sum_lower: f64 = lower_b.iter().sum();
    let sum_upper: f64 = upper_b.iter().sum();
    if sum_upper + SUM_TOL < 1.0 || sum_lower - SUM_TOL > 1.0 {
        return Err(Error::Constraint(format!(
            "volume equality unreachable within move bounds: sum(lower) = {sum_lower:.6e}, \
             sum(upper) = {sum_upper:.6e}"
        )));
    }

    let finish = |lambda: f64, iters: u32| -> ProxOutput {
        let (z, clipped) = candidate(input.x_scaled, input.grad_scaled, input.eta, lambda);
        let mut clamped_upper = 0;
        let mut clamped_lower = 0;
        let x_next: Vec<f64> = z
            .iter()
            .zip(lower_b.iter().zip(&upper_b))
            .map(|(&zi, (&lo, &hi))| {
                if zi > hi {
                    clamped_upper += 1;
                    hi
                } else if zi < lo {
                    clamped_lower += 1;
                    lo
                } else {
                    zi
                }
            })
            .collect();
        let slack = clamped_sum(
            input.x_scaled,
            input.grad_scaled,
            input.eta,
            0.0,
            &lower_b,
            &upper_b,
        ) <= 1.0 + SUM_TOL;
        ProxOutput {
            x_next,
            lambda,
            bisect_iters: iters,
            clamped_upper,
            clamped_lower,
            clipped_exponents: clipped,
            constraint_slack: slack,
        }
    };

    let sum_at = |lambda: f64| {
        clamped_sum(
            input.x_scaled,
            input.grad_scaled,
            input.eta,
            lambda,
            &lower_b,
            &upper_b,
        )
    };

    // eta == 0 leaves the candidate fixed for every lambda.
    if input.eta == 0.0 {
        return Ok(finish(0.0, 0));
    }

    if (sum_at(0.0) - 1.0).abs() <= SUM_TOL {
        return Ok(finish(0.0, 0));
    }

    // Initial symmetric bracket informed by the gradient scale, expanded by
    // doubling until the clamped sums straddle one.
    let g_max = input
        .grad_scaled
        .iter()
        .fold(0.0f64, |acc, g| acc.max(g.abs()));
    let sum_x: f64 = input.x_scaled.iter().sum();
    let mut half_width =
        (g_max + (sum_x.max(1.0) / 1e-12).ln() / input.eta).max(1.0 / input.eta);
    let mut lo;
    let mut hi;
    let mut doublings = 0;
    loop {
        lo = -half_width;
        hi = half_width;
        let s_lo = sum_at(lo); // small lambda -> large sum
        let s_hi = sum_at(hi);
        if s_lo >= 1.0 - SUM_TOL && s_hi <= 1.0 + SUM_TOL {
            break;
        }
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::Numerical(format!(
                "multiplier bracket expansion failed after {MAX_BRACKET_DOUBLINGS} doublings \
                 (sums {s_lo:.6e}..{s_hi:.6e})"
            )));
        }
        half_width *= 2.0;
    }

    // Bisect to bracket exhaustion so the multiplier itself is resolved to
    // machine precision; the sum tolerance alone would leave the components
    // several digits short of the closed-form update.
    let mut iters = 0;
    let mut best = (f64::INFINITY, 0.0f64);
    while iters < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let s = sum_at(mid);
        let err = (s - 1.0).abs();
        if err < best.0 {
            best = (err, mid);
        }
        iters += 1;
        if err <= 1e-15 || (hi - lo) <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= SUM_TOL {
        return Ok(finish(best.1, iters));
    }
    Err(Error::Numerical(format!(
        "multiplier bisection stalled: best |sum - 1| = {:.3e}",
        best.0
    )))
}

/// One full mirror-descent step: floors the base point away from zero,
/// solves the clamped multiplicative update, and reports feasibility
/// diagnostics. `x_next` satisfies the box exactly and the volume equality
/// within SUM_TOL.
pub fn mdsa_step(input: &ProxInput) -> Result<ProxOutput> {
    let floored: Vec<f64> = input
        .x_scaled
        .iter()
        .zip(input.upper)
        .map(|(&x, &v)| x.max(POSITIVITY_FLOOR * v))
        .collect();
    let inner = ProxInput {
        x_scaled: &floored,
        grad_scaled: input.grad_scaled,
        eta: input.eta,
        move_limit: input.move_limit,
        upper: input.upper,
    };
    let out = solve_multiplier(&inner)?;
    if out.constraint_slack && input.eta > 0.0 {
        log::warn!(
            "volume constraint inactive at lambda = 0 (sum would be <= 1); \
             equality enforced regardless"
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple_input<'a>(
        x: &'a [f64],
        g: &'a [f64],
        upper: &'a [f64],
        eta: f64,
        move_limit: f64,
    ) -> ProxInput<'a> {
        ProxInput {
            x_scaled: x,
            grad_scaled: g,
            eta,
            move_limit,
            upper,
        }
    }

    #[test]
    fn zero_eta_is_identity() {
        let x = [0.2, 0.3, 0.5];
        let g = [5.0, -3.0, 0.4];
        let upper = [1.0, 1.0, 1.0];
        let out = mdsa_step(&simple_input(&x, &g, &upper, 0.0, 0.5)).unwrap();
        for (a, b) in out.x_next.iter().zip(&x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_without_clamps_is_identity() {
        let x = [0.25, 0.25, 0.5];
        let g = [0.0; 3];
        let upper = [1.0; 3];
        let out = mdsa_step(&simple_input(&x, &g, &upper, 0.7, 1.0)).unwrap();
        for (a, b) in out.x_next.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_gradient_is_absorbed_by_multiplier() {
        let x = [0.1, 0.4, 0.5];
        let g = [2.5; 3];
        let upper = [1.0; 3];
        let out = mdsa_step(&simple_input(&x, &g, &upper, 0.9, 1.0)).unwrap();
        for (a, b) in out.x_next.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn lambda_shift_identity() {
        let x = [0.3, 0.7];
        let g = [1.0, -2.0];
        let eta = 0.8;
        let delta = 0.37;
        let (z0, _) = candidate(&x, &g, eta, 0.4);
        let (z1, _) = candidate(&x, &g, eta, 0.4 + delta);
        for (a, b) in z0.iter().zip(&z1) {
            assert!((b - a * (-eta * delta).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_two_component_case() {
        // x = (0.5, 0.5), eta = 1, g = (0, ln 9): normalized multiplicative
        // update gives (0.9, 0.1).
        let x = [0.5, 0.5];
        let g = [0.0, 9.0f64.ln()];
        let upper = [1.0, 1.0];
        let out = mdsa_step(&simple_input(&x, &g, &upper, 1.0, 1.0)).unwrap();
        assert!((out.x_next[0] - 0.9).abs() < 1e-9, "{}", out.x_next[0]);
        assert!((out.x_next[1] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn matches_exponentiated_gradient_when_unclamped() {
        let x = [0.2, 0.3, 0.5];
        let g = [0.4, -0.2, 0.1];
        let upper = [2.0, 2.0, 2.0];
        let eta = 0.5;
        let out = mdsa_step(&simple_input(&x, &g, &upper, eta, 1.0)).unwrap();
        assert_eq!(out.clamped_upper + out.clamped_lower, 0);
        let weights: Vec<f64> = x.iter().zip(&g).map(|(&xi, &gi)| xi * (-eta * gi).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (a, w) in out.x_next.iter().zip(&weights) {
            assert!((a - w / total).abs() < 1e-12);
        }
    }

    #[test]
    fn saturation_hits_upper_bounds() {
        let x = [0.5, 0.5];
        let g = [-500.0, 500.0];
        let upper = [0.8, 0.8];
        let out = mdsa_step(&simple_input(&x, &g, &upper, 1.0, 0.5)).unwrap();
        // First component wants to blow up: capped at x + upper*move = 0.9 -> 0.8 cap...
        // bounds: min(0.5 + 0.4, 0.8) = 0.8; second: max(0.5 - 0.4, 0) = 0.1.
        assert!((out.x_next[0] - 0.8).abs() < 1e-12);
        assert!((out.x_next[1] - 0.2).abs() < 1e-9);
        assert!(out.clamped_upper >= 1);
    }

    #[test]
    fn infeasible_bounds_are_rejected() {
        // Upper bounds too small to reach sum 1.
        let x = [0.1, 0.1];
        let g = [0.0, 0.0];
        let upper = [0.2, 0.2];
        let err = mdsa_step(&simple_input(&x, &g, &upper, 1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Constraint(_)));
    }

    #[test]
    fn mirrored_inputs_give_mirrored_outputs() {
        let x = [0.175, 0.325, 0.325, 0.175];
        let g = [1.3, -0.4, -0.4, 1.3];
        let upper = [1.0; 4];
        let out = mdsa_step(&simple_input(&x, &g, &upper, 0.6, 0.2)).unwrap();
        assert!((out.x_next[0] - out.x_next[3]).abs() < 1e-12);
        assert!((out.x_next[1] - out.x_next[2]).abs() < 1e-12);
    }

    #[test]
    fn descent_on_deterministic_quadratic() {
        // f(x) = 0.5 ||x - c||^2 restricted to the simplex; exact gradients.
        let c = [0.6, 0.3, 0.1];
        let mut x = vec![1.0 / 3.0; 3];
        let upper = [1.0; 3];
        let f = |x: &[f64]| -> f64 {
            x.iter().zip(&c).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
        };
        let mut prev = f(&x);
        for _ in 0..100 {
            let g: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            let out = mdsa_step(&ProxInput {
                x_scaled: &x,
                grad_scaled: &g,
                eta: 0.05,
                move_limit: 1.0,
                upper: &upper,
            })
            .unwrap();
            x = out.x_next;
            let cur = f(&x);
            assert!(cur <= prev + 1e-12, "objective rose from {prev} to {cur}");
            prev = cur;
        }
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn clamped_sum_non_increasing_in_lambda(
            n in 2usize..8,
            seed in 0u64..1000,
            eta in 0.01f64..5.0,
            move_limit in 0.05f64..1.0,
        ) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut rnd = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let upper: Vec<f64> = (0..n).map(|_| 0.3 + rnd()).collect();
            let raw: Vec<f64> = (0..n).map(|_| rnd() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let x: Vec<f64> = raw.iter().zip(&upper).map(|(r, u)| (r / total).min(*u)).collect();
            let g: Vec<f64> = (0..n).map(|_| 4.0 * rnd() - 2.0).collect();
            let (lower_b, upper_b) = step_bounds(&x, &upper, move_limit);
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let lambda = -20.0 + 0.4 * i as f64;
                let s: f64 = x.iter().zip(&g)
                    .zip(lower_b.iter().zip(&upper_b))
                    .map(|((&xi, &gi), (&lo, &hi))| {
                        (xi * (-eta * (gi + lambda)).clamp(-EXP_CLIP, EXP_CLIP).exp()).clamp(lo, hi)
                    })
                    .sum();
                prop_assert!(s <= prev + 1e-12);
                prev = s;
            }
        }

        #[test]
        fn output_feasible_on_random_instances(
            n in 2usize..9,
            seed in 0u64..2000,
            eta in 0.0f64..3.0,
            move_limit in 0.05f64..1.0,
        ) {
            let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(7);
            let mut rnd = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            // Feasible start: scaled uniform under the bounds.
            let upper: Vec<f64> = (0..n).map(|_| 2.0 / n as f64 + rnd()).collect();
            let sum_upper: f64 = upper.iter().sum();
            let x: Vec<f64> = upper.iter().map(|u| u / sum_upper).collect();
            let g: Vec<f64> = (0..n).map(|_| 6.0 * rnd() - 3.0).collect();
            let out = mdsa_step(&ProxInput {
                x_scaled: &x, grad_scaled: &g, eta, move_limit, upper: &upper,
            }).unwrap();
            let s: f64 = out.x_next.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9, "sum {s}");
            let (lower_b, upper_b) = step_bounds(&x, &upper, move_limit);
            for i in 0..n {
                prop_assert!(out.x_next[i] >= lower_b[i] - 1e-15);
                prop_assert!(out.x_next[i] <= upper_b[i] + 1e-15);
            }
        }
    }
}
