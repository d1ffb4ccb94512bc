//! Independent reference computations used as test oracles.
//!
//! Nothing here calls into the probe, tree-distance or MST code it checks:
//! feature maps are re-derived from their closed forms with `std` float
//! functions, distances come from Floyd–Warshall, and spanning trees are
//! enumerated through Prüfer sequences.
#![allow(dead_code)]

use rand::Rng;
use structprobe_core::{Kernel, ProbeParams, RbfMode, Sentence};

/// `φ(B h)` written out component by component.
pub fn reference_features(p: &ProbeParams, h: &[f32]) -> Vec<f64> {
    let k = p.projection.rows();
    let n = p.projection.cols();
    let mut z = vec![0.0; k];
    for r in 0..k {
        for c in 0..n {
            z[r] += p.projection[(r, c)] * h[c] as f64;
        }
    }
    let s2 = 2.0 * p.rbf_sigma * p.rbf_sigma;
    match p.kernel {
        Kernel::Linear | Kernel::BilinearReference => z,
        Kernel::Polynomial => z
            .iter()
            .map(|v| (v + p.poly_shift).powi(p.poly_degree as i32))
            .collect(),
        Kernel::Rbf => match p.rbf_mode {
            RbfMode::Elementwise => z.iter().map(|v| (-(v * v) / s2).exp()).collect(),
            RbfMode::Scalar => vec![(-z.iter().map(|v| v * v).sum::<f64>() / s2).exp()],
        },
        Kernel::Sigmoid => z
            .iter()
            .map(|v| (p.sigmoid_scale * v + p.sigmoid_offset).tanh())
            .collect(),
    }
}

/// Squared predicted distance.
pub fn reference_sq_distance(p: &ProbeParams, hi: &[f32], hj: &[f32]) -> f64 {
    let fi = reference_features(p, hi);
    let fj = reference_features(p, hj);
    let sq: f64 = fi.iter().zip(&fj).map(|(a, b)| (a - b).powi(2)).sum();
    match p.kernel {
        Kernel::BilinearReference => {
            // |k(x,x) - 2k(x,y) + k(y,y)| with the Gaussian pair kernel
            let s2 = 2.0 * p.rbf_sigma * p.rbf_sigma;
            let kxy = (-sq / s2).exp();
            let d = (1.0 - 2.0 * kxy + 1.0).abs();
            d * d
        }
        _ => sq,
    }
}

/// Ordered-pair loss `(1/T²) Σ_{i,j} |d_T − d_B²|` on row-major vectors.
pub fn reference_loss(p: &ProbeParams, vectors: &[f32], dim: usize, gold: &[u32]) -> f64 {
    let t = vectors.len() / dim;
    let mut total = 0.0;
    for i in 0..t {
        for j in 0..t {
            let d = reference_sq_distance(
                p,
                &vectors[i * dim..(i + 1) * dim],
                &vectors[j * dim..(j + 1) * dim],
            );
            total += (gold[i * t + j] as f64 - d).abs();
        }
    }
    total / (t * t) as f64
}

/// Smallest `|d_T − d_B²|` over off-diagonal pairs; small values mean the
/// loss sits near a kink.
pub fn min_residual(p: &ProbeParams, vectors: &[f32], dim: usize, gold: &[u32]) -> f64 {
    let t = vectors.len() / dim;
    let mut best = f64::INFINITY;
    for i in 0..t {
        for j in i + 1..t {
            let d = reference_sq_distance(
                p,
                &vectors[i * dim..(i + 1) * dim],
                &vectors[j * dim..(j + 1) * dim],
            );
            best = best.min((gold[i * t + j] as f64 - d).abs());
        }
    }
    best
}

/// Central differences of [`reference_loss`] over every entry of `B`,
/// followed by the sigmoid's `a` and `b`.
pub fn fd_gradient(
    p: &ProbeParams,
    vectors: &[f32],
    dim: usize,
    gold: &[u32],
    step: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    let mut q = p.clone();
    for idx in 0..p.projection.as_slice().len() {
        let orig = p.projection.as_slice()[idx];
        q.projection.as_mut_slice()[idx] = orig + step;
        let plus = reference_loss(&q, vectors, dim, gold);
        q.projection.as_mut_slice()[idx] = orig - step;
        let minus = reference_loss(&q, vectors, dim, gold);
        q.projection.as_mut_slice()[idx] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    let affine: [fn(&mut ProbeParams) -> &mut f64; 2] =
        [|q| &mut q.sigmoid_scale, |q| &mut q.sigmoid_offset];
    for field in affine {
        let orig = *field(&mut q);
        *field(&mut q) = orig + step;
        let plus = reference_loss(&q, vectors, dim, gold);
        *field(&mut q) = orig - step;
        let minus = reference_loss(&q, vectors, dim, gold);
        *field(&mut q) = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    out
}

/// Largest componentwise relative error between `analytic` and `numeric`.
/// Components are compared against `max(|a|, |n|)`, floored at `1e-3` of the
/// largest numeric component so exact zeros do not divide by zero.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// All-pairs path lengths by Floyd–Warshall over the head links.
pub fn floyd_warshall(sentence: &Sentence) -> Vec<u32> {
    let n = sentence.len();
    const INF: u32 = u32::MAX / 4;
    let mut d = vec![INF; n * n];
    for i in 0..n {
        d[i * n + i] = 0;
    }
    for t in &sentence.tokens {
        if t.head != 0 {
            let (a, b) = (t.index - 1, t.head - 1);
            d[a * n + b] = 1;
            d[b * n + a] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    d
}

/// Edges (0-based) of the labelled tree encoded by a Prüfer sequence over
/// `n = seq.len() + 2` nodes.
pub fn prufer_edges(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Minimum total weight over all `n^(n−2)` labelled spanning trees of the
/// complete graph with row-major weights `w`.
pub fn brute_force_mst_weight(n: usize, w: &[f64]) -> f64 {
    if n == 2 {
        return w[1];
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        let total: f64 = prufer_edges(&seq).iter().map(|&(i, j)| w[i * n + j]).sum();
        best = best.min(total);
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == len {
                return best;
            }
            seq[pos] += 1;
            if seq[pos] < n {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

/// Random head vector for a tree over `n` tokens, from a uniform Prüfer
/// sequence rooted at a random token.
pub fn random_heads<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    if n == 1 {
        return vec![0];
    }
    let seq: Vec<usize> = (0..n.saturating_sub(2))
        .map(|_| rng.gen_range(0..n))
        .collect();
    let edges = if n == 2 {
        vec![(0, 1)]
    } else {
        prufer_edges(&seq)
    };
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let root = rng.gen_range(0..n);
    let mut heads = vec![0; n];
    let mut stack = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                heads[v] = u + 1;
                stack.push(v);
            }
        }
    }
    heads
}
