//! Oracles written from the definitions, sharing no numerical code with the
//! library beyond the instance accessors.

#![allow(dead_code)]

use vrql::{Mdp, Policy, QTable};

/// Value iteration until successive iterates agree to `tol`.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> Vec<f64> {
    let (s, a, g) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let mut q = vec![0.0; s * a];
    loop {
        let v: Vec<f64> = (0..s)
            .map(|x| q[x * a..(x + 1) * a].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut next = vec![0.0; s * a];
        let mut diff: f64 = 0.0;
        for x in 0..s {
            for u in 0..a {
                let ev: f64 = mdp.transition_row(x, u).iter().zip(&v).map(|(p, w)| p * w).sum();
                next[x * a + u] = mdp.reward(x, u) + g * ev;
                diff = diff.max((next[x * a + u] - q[x * a + u]).abs());
            }
        }
        q = next;
        // ‖q - Q*‖ ≤ γ/(1-γ) · diff
        if diff * g / (1.0 - g) <= tol {
            return q;
        }
    }
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(m: &[f64], n: usize) -> Vec<f64> {
    let w = 2 * n;
    let mut aug = vec![0.0; n * w];
    for i in 0..n {
        aug[i * w..i * w + n].copy_from_slice(&m[i * n..(i + 1) * n]);
        aug[i * w + n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i * w + col].abs().total_cmp(&aug[j * w + col].abs()))
            .unwrap();
        for k in 0..w {
            aug.swap(col * w + k, pivot * w + k);
        }
        let d = aug[col * w + col];
        assert!(d.abs() > 1e-300, "singular matrix");
        for k in 0..w {
            aug[col * w + k] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = aug[i * w + col];
                if f != 0.0 {
                    for k in 0..w {
                        aug[i * w + k] -= f * aug[col * w + k];
                    }
                }
            }
        }
    }
    (0..n).flat_map(|i| aug[i * w + n..(i + 1) * w].to_vec()).collect()
}

/// `(I - γ P^π)^{-1}` on state-action pairs, row-major `D × D`.
pub fn resolvent(mdp: &Mdp, pi: &[usize]) -> Vec<f64> {
    let (s, a, g) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let d = s * a;
    let mut m = vec![0.0; d * d];
    for x in 0..s {
        for u in 0..a {
            let z = x * a + u;
            m[z * d + z] += 1.0;
            for (y, &p) in mdp.transition_row(x, u).iter().enumerate() {
                m[z * d + y * a + pi[y]] -= g * p;
            }
        }
    }
    gauss_jordan_inverse(&m, d)
}

pub fn greedy(q: &[f64], s: usize, a: usize) -> Vec<usize> {
    (0..s)
        .map(|x| (0..a).fold(0, |b, u| if q[x * a + u] > q[x * a + b] { u } else { b }))
        .collect()
}

/// Closed-form `ν(π)` straight from the definition, with `Q*` from value iteration.
pub fn nu_oracle(mdp: &Mdp, q: &[f64], pi: &[usize]) -> Vec<f64> {
    let (s, a, g) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let d = s * a;
    let u = resolvent(mdp, pi);
    let v: Vec<f64> = (0..s).map(|y| q[y * a + pi[y]]).collect();
    let var: Vec<f64> = (0..d)
        .map(|z| {
            let row = mdp.transition_row(z / a, z % a);
            let mean: f64 = row.iter().zip(&v).map(|(p, w)| p * w).sum();
            row.iter().zip(&v).map(|(p, w)| p * (w - mean).powi(2)).sum::<f64>() * g * g
                + mdp.reward_noise().powi(2)
        })
        .collect();
    (0..d)
        .map(|zb| (0..d).map(|z| u[zb * d + z].powi(2) * var[z]).sum::<f64>().sqrt())
        .collect()
}

/// Exact single-observation Hellinger distance from the Bhattacharyya
/// coefficients of each pair.
pub fn hellinger(a: &Mdp, b: &Mdp) -> f64 {
    let sigma = a.reward_noise();
    let mut affinity = 1.0;
    for x in 0..a.num_states() {
        for u in 0..a.num_actions() {
            let bc: f64 = a
                .transition_row(x, u)
                .iter()
                .zip(b.transition_row(x, u))
                .map(|(p, q)| (p * q).sqrt())
                .sum();
            let dr = a.reward(x, u) - b.reward(x, u);
            let gauss = if dr == 0.0 {
                1.0
            } else if sigma > 0.0 {
                (-dr * dr / (8.0 * sigma * sigma)).exp()
            } else {
                0.0
            };
            affinity *= bc.min(1.0) * gauss;
        }
    }
    (1.0 - affinity).max(0.0).sqrt()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn policy_vec(p: &Policy) -> Vec<usize> {
    p.actions().to_vec()
}

pub fn qtable_vec(q: &QTable) -> Vec<f64> {
    q.values().to_vec()
}

/// OLS slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `ρ(π)` from the definition: `sqrt(Σ_z U(z̄,z)² Var_{P(·|z)} Q(·,π(·)))`.
pub fn rho_oracle(mdp: &Mdp, q: &[f64], pi: &[usize]) -> Vec<f64> {
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let d = s * a;
    let u = resolvent(mdp, pi);
    let v: Vec<f64> = (0..s).map(|y| q[y * a + pi[y]]).collect();
    let phi: Vec<f64> = (0..d)
        .map(|z| {
            let row = mdp.transition_row(z / a, z % a);
            let mean: f64 = row.iter().zip(&v).map(|(p, w)| p * w).sum();
            row.iter().zip(&v).map(|(p, w)| p * (w - mean).powi(2)).sum()
        })
        .collect();
    (0..d)
        .map(|zb| (0..d).map(|z| u[zb * d + z].powi(2) * phi[z]).sum::<f64>().sqrt())
        .collect()
}

/// `σ(π) = σ_r sqrt(Σ_z U(z̄,z)²)`.
pub fn sigma_oracle(mdp: &Mdp, pi: &[usize]) -> Vec<f64> {
    let d = mdp.num_states() * mdp.num_actions();
    let u = resolvent(mdp, pi);
    (0..d)
        .map(|zb| mdp.reward_noise() * (0..d).map(|z| u[zb * d + z].powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// Every policy choosing, in each state, an action within `tol` of the best.
pub fn optimal_policies(q: &[f64], s: usize, a: usize, tol: f64) -> Vec<Vec<usize>> {
    let sets: Vec<Vec<usize>> = (0..s)
        .map(|x| {
            let row = &q[x * a..(x + 1) * a];
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..a).filter(|&u| row[u] >= best - tol).collect()
        })
        .collect();
    let mut out = vec![Vec::new()];
    for set in &sets {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                set.iter().map(move |&u| {
                    let mut q = p.clone();
                    q.push(u);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
