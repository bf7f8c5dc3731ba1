//! Bounded derivative-free simplex maximizer.
//!
//! A plain Nelder-Mead with box constraints handled by projection. The
//! objective here is cheap, smooth away from the zero clamp and at most five
//! dimensional, so nothing fancier is warranted. Everything is fully
//! deterministic: no randomness, stable tie-breaking, fixed iteration caps.

/// Outcome of a simplex run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: u64,
    pub converged: bool,
}

/// Maximizes `f` inside the box `[lower, upper]`, starting from `start` with
/// an initial per-axis displacement `step`.
pub fn maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iterations: usize,
    tolerance: f64,
) -> SimplexResult {
    let dim = start.len();
    assert!(dim > 0 && step.len() == dim && lower.len() == dim && upper.len() == dim);

    let clamp = |x: &mut Vec<f64>| {
        for i in 0..dim {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut evaluations = 0u64;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };

    // Initial simplex: the start plus one displaced vertex per axis. If the
    // displacement hits the wall, step inward instead.
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut base = start.to_vec();
    clamp(&mut base);
    vertices.push(base.clone());
    for i in 0..dim {
        let mut v = base.clone();
        let up = (v[i] + step[i]).min(upper[i]);
        v[i] = if (up - v[i]).abs() > 0.25 * step[i].abs() {
            up
        } else {
            (v[i] - step[i]).max(lower[i])
        };
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;

        // Order vertices best-first; stable sort keeps repeated runs
        // bit-identical even with equal values.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = values[best] - values[worst];
        let diameter: f64 = (0..dim)
            .map(|i| {
                let lo = vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let hi = vertices
                    .iter()
                    .map(|v| v[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        if spread <= tolerance * (1.0 + values[best].abs()) && diameter <= tolerance {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for (idx, v) in vertices.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for i in 0..dim {
                centroid[i] += v[i];
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let blend = |a: &[f64], b: &[f64], coeff: f64| -> Vec<f64> {
            let mut out: Vec<f64> = (0..dim).map(|i| a[i] + coeff * (a[i] - b[i])).collect();
            for i in 0..dim {
                out[i] = out[i].clamp(lower[i], upper[i]);
            }
            out
        };

        // Reflection.
        let reflected = blend(&centroid, &vertices[worst], 1.0);
        let f_reflected = eval(&reflected);
        if f_reflected > values[best] {
            // Expansion.
            let expanded = blend(&centroid, &vertices[worst], 2.0);
            let f_expanded = eval(&expanded);
            if f_expanded > f_reflected {
                vertices[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                vertices[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected > values[second_worst] {
            vertices[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }

        // Contraction, outside or inside depending on the reflection.
        let contracted = if f_reflected > values[worst] {
            blend(&centroid, &vertices[worst], 0.5)
        } else {
            blend(&centroid, &vertices[worst], -0.5)
        };
        let f_contracted = eval(&contracted);
        if f_contracted > values[worst].max(f_reflected) {
            vertices[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }

        // Shrink toward the best vertex.
        let best_vertex = vertices[best].clone();
        for (idx, v) in vertices.iter_mut().enumerate() {
            if idx == best {
                continue;
            }
            for i in 0..dim {
                v[i] = best_vertex[i] + 0.5 * (v[i] - best_vertex[i]);
            }
            values[idx] = eval(v);
        }
    }

    let (best_idx, _) =
        values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    SimplexResult {
        x: vertices[best_idx].clone(),
        value: values[best_idx],
        iterations,
        evaluations,
        converged,
    }
}
