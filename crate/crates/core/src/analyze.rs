//! Embedding-space analyses: k-means word clustering, exact t-SNE
//! projection to two dimensions, and export in the two-file projector
//! format (vectors + metadata TSV).

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::config::AnalyzeConfig;
use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::seed::rng_for;

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

/// A fitted clustering: per-point cluster ids, the centroid matrix, and
/// the final within-cluster sum of squared distances.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step; non-increasing by Lloyd's
    /// guarantee.
    pub inertia_history: Vec<f64>,
}

/// The reduction rule for the number of clusters: a tenth of the words
/// considered, reading at most 10,000 of them.
pub fn default_k(n_words: usize) -> usize {
    ((n_words.min(10_000) as f64) * 0.1).ceil().max(1.0) as usize
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeding, run until the assignment
/// fixpoint, a relative inertia improvement below 1e-6, or `max_iter`.
/// Deterministic for a fixed seed.
pub fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "k-means needs 1 ≤ k ≤ {n} points, got k = {k}"
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Data("inconsistent vector dimensions".into()));
    }

    // k-means++: next centroid drawn with probability proportional to the
    // squared distance to the nearest centroid chosen so far
    let mut rng = rng_for(seed, "analyze.kmeans");
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(vectors[rng.gen_range(0..n)].clone());
    let mut nearest_sq: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let chosen = if total <= 0.0 {
            // all remaining points coincide with a centroid; any will do
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let c = vectors[chosen].clone();
        for (d, v) in nearest_sq.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &c));
        }
        centroids.push(c);
    }

    let mut assignments = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia_history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        // assignment step
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, v) in vectors.iter().enumerate() {
            let (best, best_d) = centroids
                .iter()
                .enumerate()
                .map(|(c, cent)| (c, sq_dist(v, cent)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        // Lloyd's guarantees monotone inertia; the epsilon absorbs
        // floating-point summation noise
        assert!(
            inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12,
            "inertia increased: {prev_inertia} -> {inertia}"
        );
        inertia_history.push(inertia);
        let converged = !changed
            || (prev_inertia.is_finite()
                && prev_inertia - inertia <= 1e-6 * prev_inertia.max(f64::MIN_POSITIVE))
            || iterations >= max_iter;
        prev_inertia = inertia;
        if converged {
            return Ok(ClusterAssignment {
                assignments,
                centroids,
                inertia,
                iterations,
                inertia_history,
            });
        }
        // update step: mean of assigned points; empty clusters keep
        // their previous centroid
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if count > 0 {
                for (ci, si) in c.iter_mut().zip(sum) {
                    *ci = si / count as f64;
                }
            }
        }
    }
}

/// Writes `cluster_id<TAB>word` rows, sorted by cluster then word.
pub fn write_clusters_tsv(
    words: &[String],
    assignment: &ClusterAssignment,
    path: &Path,
) -> Result<()> {
    if words.len() != assignment.assignments.len() {
        return Err(Error::Data(format!(
            "{} words against {} assignments",
            words.len(),
            assignment.assignments.len()
        )));
    }
    let mut rows: Vec<(usize, &str)> = assignment
        .assignments
        .iter()
        .zip(words)
        .map(|(&c, w)| (c, w.as_str()))
        .collect();
    rows.sort();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (cluster, word) in rows {
        writeln!(w, "{cluster}\t{word}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// exact t-SNE
// ---------------------------------------------------------------------------

/// A finished 2-D projection with the Kullback-Leibler objective value
/// at the end and at every 100th iteration (always measured against the
/// un-exaggerated P).
#[derive(Debug, Clone)]
pub struct ProjectedPoints {
    pub coords: Vec<[f64; 2]>,
    pub kl: f64,
    pub kl_history: Vec<(usize, f64)>,
}

/// Symmetrized joint probabilities of the high-dimensional similarities
/// as a flat N×N row-major matrix: per-point Gaussian bandwidths found
/// by binary search until the conditional entropy matches
/// ln(perplexity) within `tol`, then p = (p_cond + p_condᵀ)/(2N).
pub fn joint_probabilities(vectors: &[Vec<f64>], perplexity: f64, tol: f64) -> Result<Vec<f64>> {
    let n = vectors.len();
    let cond = conditional_probabilities(vectors, perplexity, tol)?;
    // symmetrize to the joint distribution
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok(p)
}

/// The per-point conditional distributions p(j|i) (flat row-major N×N)
/// found by the bandwidth search, before symmetrization. Each row's
/// Shannon entropy matches ln(perplexity) within `tol`. This is the
/// intermediate the entropy contract is stated on, exposed so it can be
/// checked directly.
pub fn conditional_probabilities(
    vectors: &[Vec<f64>],
    perplexity: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = vectors.len();
    if !(perplexity > 0.0) || perplexity >= (n.saturating_sub(1)) as f64 / 3.0 {
        return Err(Error::Config(format!(
            "perplexity {perplexity} is degenerate for {n} points; it must be positive \
             and below (N−1)/3"
        )));
    }
    let target_entropy = perplexity.ln();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(&vectors[i], &vectors[j]);
            d2[i * n + j] = d;
            d2[j * n + i] = d;
        }
    }

    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        // binary search the precision β = 1/(2σ²) of row i
        let row = &d2[i * n..(i + 1) * n];
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut p_row = vec![0.0; n];
        for _ in 0..200 {
            let mut sum = 0.0;
            for j in 0..n {
                p_row[j] = if j == i { 0.0 } else { (-beta * row[j]).exp() };
                sum += p_row[j];
            }
            // entropy H = ln Σ + β · E[d²]
            let entropy = if sum > 0.0 {
                let weighted: f64 = (0..n).map(|j| p_row[j] * row[j]).sum();
                sum.ln() + beta * weighted / sum
            } else {
                0.0
            };
            let diff = entropy - target_entropy;
            if diff.abs() < tol {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() { beta * 2.0 } else { (beta + beta_max) / 2.0 };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() { beta / 2.0 } else { (beta + beta_min) / 2.0 };
            }
        }
        let sum: f64 = p_row.iter().sum();
        if sum > 0.0 {
            for j in 0..n {
                cond[i * n + j] = p_row[j] / sum;
            }
        }
    }
    Ok(cond)
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(1e-12)).ln())
        .sum()
}

/// Exact t-SNE to two dimensions: full pairwise P and Q, gradient
/// descent with early exaggeration, the 0.5→0.8 momentum schedule, and
/// the standard per-coordinate gain adaptation. Refuses inputs larger
/// than the configured cap — this is the exact O(N²) method, not an
/// approximation for large corpora.
pub fn tsne(vectors: &[Vec<f64>], cfg: &AnalyzeConfig, seed: u64) -> Result<ProjectedPoints> {
    let n = vectors.len();
    if n > cfg.tsne_cap {
        return Err(Error::Budget(format!(
            "{n} points exceed the exact t-SNE cap of {}; project a word subset instead",
            cfg.tsne_cap
        )));
    }
    if n == 0 {
        return Err(Error::Data("no points to project".into()));
    }
    let p = joint_probabilities(vectors, cfg.tsne_perplexity, 1e-4)?;

    // tiny Gaussian initialization via Box-Muller
    let mut rng = rng_for(seed, "analyze.tsne.init");
    let mut gauss = || {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [gauss() * 1e-2, gauss() * 1e-2]).collect();

    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut q = vec![0.0; n * n];
    let mut kl_history = Vec::new();
    let mut kl = 0.0;

    for iter in 1..=cfg.tsne_iterations {
        let exaggeration = if iter <= cfg.tsne_exaggeration_iters {
            cfg.tsne_exaggeration
        } else {
            1.0
        };
        let momentum = if iter <= cfg.tsne_momentum_switch { 0.5 } else { 0.8 };

        // Student-t similarities in the map
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i * n + j] = w;
                q[j * n + i] = w;
                q_sum += 2.0 * w;
            }
            q[i * n + i] = 0.0;
        }

        // gradient: 4 Σ_j (p_ij − q_ij) w_ij (y_i − y_j)
        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q[i * n + j];
                let q_ij = w / q_sum;
                let mult = (exaggeration * p[i * n + j] - q_ij) * w;
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                let g = 4.0 * grad[d];
                // gain rises when gradient and velocity agree in sign
                gains[i][d] = if g.signum() != velocity[i][d].signum() {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                velocity[i][d] = momentum * velocity[i][d] - cfg.tsne_learning_rate * gains[i][d] * g;
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        // recenter to keep the map translation-free
        let (mx, my) = y.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        for yi in &mut y {
            yi[0] -= mx / n as f64;
            yi[1] -= my / n as f64;
        }

        if iter % 100 == 0 || iter == cfg.tsne_iterations {
            // objective against the true (un-exaggerated) P
            let q_dist: Vec<f64> = q.iter().map(|&w| w / q_sum).collect();
            kl = kl_divergence(&p, &q_dist);
            if iter % 100 == 0 {
                kl_history.push((iter, kl));
            }
        }
    }

    Ok(ProjectedPoints {
        coords: y,
        kl,
        kl_history,
    })
}

/// Writes `word<TAB>x<TAB>y` rows.
pub fn write_tsne_tsv(words: &[String], points: &ProjectedPoints, path: &Path) -> Result<()> {
    if words.len() != points.coords.len() {
        return Err(Error::Data(format!(
            "{} words against {} projected points",
            words.len(),
            points.coords.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (word, c) in words.iter().zip(&points.coords) {
        writeln!(w, "{word}\t{}\t{}", c[0], c[1]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// projector export
// ---------------------------------------------------------------------------

/// Writes `vectors.tsv` (tab-separated floats, one row per word) and
/// `metadata.tsv` (a `word` header then one word per row), row-aligned,
/// for embedding-projector tools. Exports the whole vocabulary unless a
/// subset is given. Returns the two file paths.
pub fn export_projector(
    model: &EmbeddingModel,
    words: Option<&[String]>,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let all = model.vocab.words();
    let selected: Vec<&String> = match words {
        Some(subset) => subset.iter().collect(),
        None => all.iter().collect(),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let vectors_path = out_dir.join("vectors.tsv");
    let metadata_path = out_dir.join("metadata.tsv");

    let vf = std::fs::File::create(&vectors_path).map_err(|e| Error::io(&vectors_path, e))?;
    let mut vw = std::io::BufWriter::new(vf);
    let mf = std::fs::File::create(&metadata_path).map_err(|e| Error::io(&metadata_path, e))?;
    let mut mw = std::io::BufWriter::new(mf);
    writeln!(mw, "word").map_err(|e| Error::io(&metadata_path, e))?;
    for word in &selected {
        let (vector, oov) = model.vector(word);
        if oov {
            return Err(Error::Data(format!(
                "cannot export {word:?}: not in the embedding vocabulary"
            )));
        }
        let row: Vec<String> = vector.iter().map(f64::to_string).collect();
        writeln!(vw, "{}", row.join("\t")).map_err(|e| Error::io(&vectors_path, e))?;
        writeln!(mw, "{word}").map_err(|e| Error::io(&metadata_path, e))?;
    }
    vw.flush().map_err(|e| Error::io(&vectors_path, e))?;
    mw.flush().map_err(|e| Error::io(&metadata_path, e))?;
    Ok((vectors_path, metadata_path))
}
