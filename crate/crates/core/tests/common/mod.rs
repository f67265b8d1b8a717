//! Test-only helpers: seeded generators and a dense-matrix oracle that
//! shares no code with the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sicerp_core::glasso::SampleCovariance;
use sicerp_core::kernel::{BlockCache, Integrator, KernelBlocks};
use sicerp_core::spd::KernelConfig;
use sicerp_core::svm::{radius_margin_objective, BoundProblem};
use sicerp_core::spd::{SpdMatrix, SymMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_frames(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// `XᵀX / m` for `m` standard-normal rows, optionally with correlated columns.
pub fn random_covariance(rng: &mut ChaCha8Rng, d: usize, m: usize) -> SampleCovariance {
    let mix = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            0.5 * rng.sample::<f64, _>(StandardNormal)
        }
    });
    let x = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal)) * mix;
    let cov = x.transpose() * x / m as f64;
    SampleCovariance::new(SymMatrix::new(cov).unwrap()).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SpdMatrix {
    let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    SpdMatrix::from_matrix(&b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1).unwrap()
}

/// Row-major dense square matrix for the oracle.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn from_cov(c: &SampleCovariance) -> Self {
        let n = c.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = c.get(i, j);
            }
        }
        Self { n, a }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        Self { n, a }
    }

    /// Cholesky factor; `None` if not positive definite.
    pub fn cholesky(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(l)
    }

    pub fn log_det(&self) -> Option<f64> {
        let l = self.cholesky()?;
        Some((0..self.n).map(|i| 2.0 * l[i * self.n + i].ln()).sum())
    }

    /// Gauss-Jordan with partial pivoting.
    pub fn inverse(&self) -> Dense {
        let n = self.n;
        let mut m = self.a.clone();
        let mut inv = Dense::identity(n).a;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[x * n + c].abs().total_cmp(&m[y * n + c].abs()))
                .unwrap();
            if p != c {
                for k in 0..n {
                    m.swap(p * n + k, c * n + k);
                    inv.swap(p * n + k, c * n + k);
                }
            }
            let piv = m[c * n + c];
            for k in 0..n {
                m[c * n + k] /= piv;
                inv[c * n + k] /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r * n + c];
                    if f != 0.0 {
                        for k in 0..n {
                            m[r * n + k] -= f * m[c * n + k];
                            inv[r * n + k] -= f * inv[c * n + k];
                        }
                    }
                }
            }
        }
        Dense { n, a: inv }
    }
}

/// Exact penalized log-likelihood (all entries penalized).
pub fn oracle_objective(sigma: &Dense, lambda: f64, s: &Dense) -> Option<f64> {
    let ld = s.log_det()?;
    let tr: f64 = sigma.a.iter().zip(&s.a).map(|(x, y)| x * y).sum();
    let l1: f64 = s.a.iter().map(|v| v.abs()).sum();
    Some(ld - tr - lambda * l1)
}

fn smoothed_objective(sigma: &Dense, lambda: f64, s: &Dense, mu: f64) -> Option<f64> {
    let ld = s.log_det()?;
    let tr: f64 = sigma.a.iter().zip(&s.a).map(|(x, y)| x * y).sum();
    let l1: f64 = s.a.iter().map(|v| (v * v + mu).sqrt()).sum();
    Some(ld - tr - lambda * l1)
}

/// Gradient ascent on the objective with `|s|` replaced by `√(s² + μ)`,
/// starting from `(diag(Σ̂) + λ)⁻¹`, with Armijo backtracking keeping the
/// iterate positive definite.
pub fn smoothed_oracle(sigma: &SampleCovariance, lambda: f64, iterations: usize) -> Dense {
    const MU: f64 = 1e-12;
    let sig = Dense::from_cov(sigma);
    let n = sig.n;
    let mut s = Dense::identity(n);
    for i in 0..n {
        s.a[i * n + i] = 1.0 / (sig.a[i * n + i] + lambda);
    }
    let mut f = smoothed_objective(&sig, lambda, &s, MU).unwrap();
    let mut step = 1e-2;
    let mut trial = s.clone();
    for _ in 0..iterations {
        let w = s.inverse();
        let mut grad = vec![0.0; n * n];
        let mut gnorm2 = 0.0;
        for k in 0..n * n {
            let v = s.a[k];
            let g = w.a[k] - sig.a[k] - lambda * v / (v * v + MU).sqrt();
            grad[k] = g;
            gnorm2 += g * g;
        }
        // symmetrize the step
        for i in 0..n {
            for j in (i + 1)..n {
                let g = 0.5 * (grad[i * n + j] + grad[j * n + i]);
                grad[i * n + j] = g;
                grad[j * n + i] = g;
            }
        }
        if gnorm2 == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..n * n {
                trial.a[k] = s.a[k] + step * grad[k];
            }
            if let Some(ft) = smoothed_objective(&sig, lambda, &trial, MU) {
                if ft >= f + 1e-4 * step * gnorm2 {
                    std::mem::swap(&mut s, &mut trial);
                    f = ft;
                    accepted = true;
                    step *= 1.5;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    s
}

pub fn dense_of(s: &SpdMatrix) -> Dense {
    Dense {
        n: s.dim(),
        a: s.as_sym().to_row_major(),
    }
}

/// Class-structured hierarchies with `t` levels of dimension `d`.
///
/// Level `k` of a class-`c` sample is `I + s_k·P_c + noise_k`: the class
/// signal `s_k` and the noise scale vary across levels so that some levels
/// are more informative than others.
pub fn labeled_hierarchies(
    rng: &mut ChaCha8Rng,
    per_class: usize,
    classes: usize,
    d: usize,
    t: usize,
) -> (Vec<sicerp_core::representation::SiceHierarchy>, Vec<usize>) {
    use sicerp_core::representation::SiceHierarchy;
    let patterns: Vec<DMatrix<f64>> = (0..classes)
        .map(|_| {
            let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            &b * b.transpose() / d as f64
        })
        .collect();
    let signal: Vec<f64> = (0..t).map(|k| 0.2 + 0.6 * k as f64 / t.max(2) as f64).collect();
    let noise: Vec<f64> = (0..t).map(|k| 0.3 + 0.5 * ((k * 7) % t) as f64 / t as f64).collect();
    let mut out = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * classes {
        let c = i % classes;
        let levels = (0..t)
            .map(|k| {
                let e = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let m = DMatrix::identity(d, d)
                    + &patterns[c] * signal[k]
                    + &e * e.transpose() * (noise[k] / d as f64);
                SpdMatrix::from_matrix(m).unwrap()
            })
            .collect();
        let lambdas = (0..t).map(|k| 0.1 * (k + 1) as f64).collect();
        out.push(SiceHierarchy::new(format!("s{i:03}"), lambdas, levels).unwrap());
        labels.push(c);
    }
    (out, labels)
}

pub fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let x = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    &x * x.transpose() / rank as f64
}

/// Radius objective `Σα_i k_ii − αᵀKα`, written out directly.
pub fn radius_value(k: &DMatrix<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let mut v = 0.0;
    for i in 0..n {
        v += a[i] * k[(i, i)];
        for j in 0..n {
            v -= a[i] * a[j] * k[(i, j)];
        }
    }
    v
}

/// Exhaustive search on a simplex grid followed by a shrinking lattice
/// search around the incumbent.
pub fn radius_grid_oracle(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let h = 20usize;
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut counts = vec![0usize; n];
    fn walk(
        pos: usize,
        left: usize,
        h: usize,
        counts: &mut Vec<usize>,
        k: &DMatrix<f64>,
        best: &mut (f64, Vec<f64>),
    ) {
        let n = counts.len();
        if pos == n - 1 {
            counts[pos] = left;
            let a: Vec<f64> = counts.iter().map(|c| *c as f64 / h as f64).collect();
            let v = radius_value(k, &a);
            if v > best.0 {
                *best = (v, a);
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            walk(pos + 1, left - c, h, counts, k, best);
        }
    }
    walk(0, h, h, &mut counts, k, &mut best);

    let mut step = 1.0 / h as f64;
    let offsets: Vec<Vec<i32>> = {
        let mut all = vec![vec![]];
        for _ in 0..n - 1 {
            all = all
                .into_iter()
                .flat_map(|v: Vec<i32>| {
                    (-2..=2).map(move |c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .collect();
        }
        all
    };
    for _ in 0..60 {
        let mut improved = false;
        for off in &offsets {
            let mut a = best.1.clone();
            let mut moved = 0.0;
            for (i, &c) in off.iter().enumerate() {
                a[i] += c as f64 * step;
                moved += c as f64 * step;
            }
            a[n - 1] -= moved;
            if a.iter().any(|x| *x < 0.0) {
                continue;
            }
            let v = radius_value(k, &a);
            if v > best.0 {
                best = (v, a);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best.0
}

/// Projection onto `{η ≥ 0, yᵀη = 0}` by bisection on the multiplier.
pub fn project_balanced(v: &[f64], y: &[f64]) -> Vec<f64> {
    let at = |mu: f64| -> (Vec<f64>, f64) {
        let e: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).max(0.0)).collect();
        let s = e.iter().zip(y).map(|(a, b)| a * b).sum();
        (e, s)
    };
    let span = v.iter().fold(1.0f64, |m, x| m.max(x.abs())) * 2.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

pub fn svm_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, iterations: usize) -> f64 {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| {
        y[i] * y[j] * (k[(i, j)] + if i == j { 1.0 / c } else { 0.0 })
    });
    let lipschitz = q.norm();
    let mut eta = vec![0.0; n];
    for _ in 0..iterations {
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let g = 1.0 - (0..n).map(|j| q[(i, j)] * eta[j]).sum::<f64>();
                eta[i] + g / lipschitz
            })
            .collect();
        eta = project_balanced(&v, y);
    }
    let quad: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| eta[i] * eta[j] * q[(i, j)])
        .sum();
    eta.iter().sum::<f64>() - 0.5 * quad
}

/// Kernel blocks of `labeled_hierarchies` at the median-heuristic bandwidth.
pub fn blocks_for(seed: u64, per_class: usize, classes: usize, t: usize) -> (KernelBlocks, Vec<usize>) {
    let mut rng = rng(seed);
    let (h, labels) = labeled_hierarchies(&mut rng, per_class, classes, 4, t);
    let cache = BlockCache::build(&h).unwrap();
    let cfg = KernelConfig::median_heuristic(&cache.same_level_squared_distances(None));
    (cache.kernel_blocks(cfg), labels)
}

pub fn binary_problem<'a>(blocks: &'a KernelBlocks, labels: &[usize], c: f64) -> BoundProblem<'a> {
    let idx: Vec<usize> = (0..labels.len()).collect();
    let y = labels.iter().map(|l| if *l == 0 { 1.0 } else { -1.0 }).collect();
    let mut p = BoundProblem::binary(blocks, idx, y, c);
    p.radius.tol = 1e-13;
    p.svm_tol = 1e-13;
    p
}

pub fn j_at(problem: &BoundProblem<'_>, integ: &Integrator) -> f64 {
    radius_margin_objective(problem, integ).unwrap().j
}

pub fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3 * scale)
}
