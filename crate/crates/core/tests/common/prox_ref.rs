//! Reference implementation of the prox multiplier solve used as an
//! independent oracle: a dense lambda-grid scan with monotone
//! interpolation, exploiting that the candidate factors into per-component
//! weights times a common exp(-eta lambda).

use super::TestRand;

pub struct ProxInstance {
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub upper: Vec<f64>,
    pub eta: f64,
    pub move_limit: f64,
}

pub fn random_instance(rnd: &mut TestRand) -> ProxInstance {
    let n = 2 + (rnd.next_f64() * 9.0) as usize; // n <= 10
    let upper: Vec<f64> = (0..n).map(|_| 2.0 / n as f64 + rnd.next_f64()).collect();
    let sum_upper: f64 = upper.iter().sum();
    let x: Vec<f64> = upper.iter().map(|u| u / sum_upper).collect();
    let g: Vec<f64> = (0..n).map(|_| rnd.in_range(-3.0, 3.0)).collect();
    ProxInstance {
        x,
        g,
        upper,
        eta: rnd.in_range(0.05, 2.5),
        move_limit: rnd.in_range(0.05, 1.0),
    }
}

fn clamped_sum(weights: &[f64], lower_b: &[f64], upper_b: &[f64], eta: f64, lambda: f64) -> f64 {
    let t = (-eta * lambda).exp();
    let mut s = 0.0;
    for i in 0..weights.len() {
        s += (weights[i] * t).clamp(lower_b[i], upper_b[i]);
    }
    s
}

/// Grid-scan the multiplier with 1e6 outer points and interpolate the
/// crossing of sum = 1, refining the bracketing cell by inner scans.
pub fn grid_scan_lambda(inst: &ProxInstance, lower_b: &[f64], upper_b: &[f64]) -> f64 {
    let weights: Vec<f64> = inst
        .x
        .iter()
        .zip(&inst.g)
        .map(|(&x, &g)| x * (-inst.eta * g).exp())
        .collect();
    let sum = |l: f64| clamped_sum(&weights, lower_b, upper_b, inst.eta, l);

    let mut half = 1.0;
    for _ in 0..200 {
        if sum(-half) >= 1.0 && sum(half) <= 1.0 {
            break;
        }
        half *= 2.0;
    }
    let grid: usize = 1_000_000;
    let mut prev_l = -half;
    let mut prev_s = sum(prev_l);
    for k in 1..=grid {
        let l = -half + 2.0 * half * k as f64 / grid as f64;
        let s = sum(l);
        if prev_s >= 1.0 && s <= 1.0 {
            let mut a = prev_l;
            let mut sa = prev_s;
            let mut b = l;
            for _ in 0..3 {
                let inner: usize = 1000;
                let mut ia = a;
                let mut isa = sa;
                for t in 1..=inner {
                    let il = a + (b - a) * t as f64 / inner as f64;
                    let is = sum(il);
                    if isa >= 1.0 && is <= 1.0 {
                        a = ia;
                        sa = isa;
                        b = il;
                        break;
                    }
                    ia = il;
                    isa = is;
                }
            }
            let sb = sum(b);
            if (sa - sb).abs() < 1e-300 {
                return 0.5 * (a + b);
            }
            return a + (sa - 1.0) / (sa - sb) * (b - a);
        }
        prev_l = l;
        prev_s = s;
    }
    panic!("grid-scan oracle found no crossing");
}

/// Evaluate the clamped candidate at a given multiplier.
pub fn clamped_candidate(
    inst: &ProxInstance,
    lower_b: &[f64],
    upper_b: &[f64],
    lambda: f64,
) -> Vec<f64> {
    inst.x
        .iter()
        .zip(&inst.g)
        .zip(lower_b.iter().zip(upper_b))
        .map(|((&x, &g), (&lo, &hi))| {
            let arg = (-inst.eta * (g + lambda)).clamp(-700.0, 700.0);
            (x * arg.exp()).clamp(lo, hi)
        })
        .collect()
}
