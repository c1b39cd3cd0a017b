//! Exploratory analysis: substitution counts, PCA, k-means and a random forest.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amino::{self, ALPHABET};
use crate::error::{Error, Result};
use crate::training::MutationRecord;

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map(Vec::len).ok_or_else(|| Error::Domain("empty data matrix".into()))?;
    if d == 0 {
        return Err(Error::Shape("data rows have no columns".into()));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Shape(format!("row {i} has {} columns, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("row {i} contains a non-finite value")));
        }
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Wild-type (row) × mutant (column) counts in alphabet order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionCounts {
    pub counts: [[u64; 20]; 20],
}

impl SubstitutionCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, wt: char, mutant: char) -> u64 {
        match (amino::index_of(wt), amino::index_of(mutant)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    /// The `n` largest cells as (wt, mut, count), ties in alphabet order.
    pub fn top(&self, n: usize) -> Vec<(char, char, u64)> {
        let alphabet = ALPHABET;
        let mut cells: Vec<(char, char, u64)> = (0..20)
            .flat_map(|i| (0..20).map(move |j| (i, j)))
            .map(|(i, j)| (alphabet[i], alphabet[j], self.counts[i][j]))
            .collect();
        cells.sort_by(|a, b| b.2.cmp(&a.2));
        cells.truncate(n);
        cells
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("wt\\mut");
        for c in ALPHABET {
            out.push('\t');
            out.push(c);
        }
        out.push('\n');
        for (i, c) in ALPHABET.into_iter().enumerate() {
            out.push(c);
            for v in &self.counts[i] {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn substitution_counts(records: &[MutationRecord]) -> Result<SubstitutionCounts> {
    let mut counts = [[0u64; 20]; 20];
    for r in records {
        let (Some(i), Some(j)) = (amino::index_of(r.wt_aa), amino::index_of(r.mut_aa)) else {
            return Err(Error::Domain(format!("non-canonical substitution {}→{}", r.wt_aa, r.mut_aa)));
        };
        counts[i][j] += 1;
    }
    Ok(SubstitutionCounts { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal principal axes, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Sum of all covariance eigenvalues, for variance ratios.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!("expected {} columns, got {}", self.mean.len(), x.len())));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect())
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|row| self.transform_row(row)).collect()
    }

    pub fn inverse_transform(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        z.iter()
            .map(|row| {
                if row.len() != self.components.len() {
                    return Err(Error::Shape(format!(
                        "expected {} scores, got {}",
                        self.components.len(),
                        row.len()
                    )));
                }
                let mut out = self.mean.clone();
                for (s, c) in row.iter().zip(&self.components) {
                    for (o, w) in out.iter_mut().zip(c) {
                        *o += s * w;
                    }
                }
                Ok(out)
            })
            .collect()
    }
}

/// Sample covariance (n − 1 denominator) of the rows of `x`.
pub fn covariance(x: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = check_matrix(x)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::Domain("covariance needs at least two rows".into()));
    }
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for row in x {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    Ok((mean, cov))
}

pub fn pca_fit(x: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let (mean, cov) = covariance(x)?;
    let d = mean.len();
    let limit = (x.len() - 1).min(d);
    if k == 0 || k > limit {
        return Err(Error::Domain(format!("k = {k} must be in 1..={limit}")));
    }
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[i][j]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        // sign: largest-magnitude entry positive
        let pivot = c.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

/// Fits and projects in one step.
pub fn pca_project(x: &[Vec<f64>], k: usize) -> Result<(PcaModel, Vec<Vec<f64>>)> {
    let model = pca_fit(x, k)?;
    let z = model.transform(x)?;
    Ok((model, z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step, starting with the k-means++ seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansModel {
    pub fn predict(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x).0
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(x: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = x.iter().map(|row| nearest(centroids, row)).collect();
    let inertia = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), inertia)
}

fn kmeans_plus_plus(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![x[rng.gen_range(0..x.len())].clone()];
    let mut d2: Vec<f64> = x.iter().map(|row| sq_dist(row, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.gen_range(0..x.len())
        };
        let c = x[pick].clone();
        for (d, row) in d2.iter_mut().zip(x) {
            *d = d.min(sq_dist(row, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iter` updates have run.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansModel> {
    let d = check_matrix(x)?;
    if k == 0 || x.len() < k {
        return Err(Error::Domain(format!("k = {k} needs 1 ≤ k ≤ n = {}", x.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let (mut assignments, mut inertia) = assign(x, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (row, &a) in x.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let (next, next_inertia) = assign(x, &centroids);
        let prev = inertia;
        if next_inertia > prev + 1e-9 * prev.max(1.0) {
            return Err(Error::State(format!(
                "k-means inertia increased from {prev} to {next_inertia} at iteration {iterations}"
            )));
        }
        history.push(next_inertia);
        inertia = next_inertia;
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }
    Ok(KMeansModel {
        k,
        centroids,
        inertia,
        assignments,
        inertia_history: history,
        iterations,
    })
}

/// Fraction of points whose cluster's majority label equals their own label.
pub fn cluster_purity(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape("assignments and labels must have equal non-zero length".into()));
    }
    let mut tallies: std::collections::BTreeMap<usize, std::collections::BTreeMap<usize, usize>> = Default::default();
    for (&a, &l) in assignments.iter().zip(labels) {
        *tallies.entry(a).or_default().entry(l).or_default() += 1;
    }
    let majority: usize = tallies.values().map(|t| t.values().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    /// Features examined per split; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(12),
            min_leaf: 1,
            bootstrap: true,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0; `x[feature] <= threshold` goes left.
    pub nodes: Vec<Node>,
    /// Rows of the training matrix this tree was grown on.
    pub sample: Vec<usize>,
}

impl DecisionTree {
    pub fn predict_class(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<L> {
    /// Sorted distinct labels; trees predict indices into this list.
    pub classes: Vec<L>,
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub params: ForestParams,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    max_features: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best (weighted Gini, feature, threshold) over one feature.
    fn best_split_on(&self, idx: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let n = order.len();
        let mut left = vec![0usize; self.n_classes];
        let mut right = self.counts(idx);
        let mut best: Option<(f64, f64)> = None;
        for s in 1..n {
            let c = self.y[order[s - 1]];
            left[c] += 1;
            right[c] -= 1;
            let (lo, hi) = (self.x[order[s - 1]][feature], self.x[order[s]][feature]);
            if lo == hi || s < self.min_leaf || n - s < self.min_leaf {
                continue;
            }
            let score = (s as f64 * gini(&left, s) + (n - s) as f64 * gini(&right, n - s)) / n as f64;
            if best.is_none_or(|(b, _)| score < b) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some((score, if mid < hi { mid } else { lo }));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(&counts) });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || self.max_depth.is_some_and(|m| depth >= m) || idx.len() < 2 * self.min_leaf {
            return at;
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            // keep looking past max_features only while nothing splits
            if tried >= self.max_features && best.is_some() {
                break;
            }
            if let Some((score, threshold)) = self.best_split_on(&idx, f) {
                if best.is_none_or(|(b, bf, _)| score < b || (score == b && f < bf)) {
                    best = Some((score, f, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

pub fn forest_fit<L>(x: &[Vec<f64>], labels: &[L], params: &ForestParams) -> Result<RandomForest<L>>
where
    L: Clone + Ord + Send + Sync,
{
    let d = check_matrix(x)?;
    if labels.len() != x.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), labels.len())));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Domain("n_trees and min_leaf must be at least 1".into()));
    }
    let mut classes: Vec<L> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Degenerate("random forest needs at least two classes".into()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let n = x.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                x,
                y: &y,
                n_classes: classes.len(),
                max_depth: params.max_depth,
                min_leaf: params.min_leaf,
                max_features,
                nodes: Vec::new(),
            };
            builder.grow(sample.clone(), 0, &mut rng);
            DecisionTree {
                nodes: builder.nodes,
                sample,
            }
        })
        .collect();
    Ok(RandomForest {
        classes,
        trees,
        n_features: d,
        params: params.clone(),
    })
}

impl<L: Clone + Ord> RandomForest<L> {
    /// Majority vote; ties go to the smaller label.
    pub fn predict(&self, x: &[f64]) -> Result<L> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!("expected {} features, got {}", self.n_features, x.len())));
        }
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict_class(x)] += 1;
        }
        Ok(self.classes[majority(&votes)].clone())
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<L>> {
        x.iter().map(|row| self.predict(row)).collect()
    }
}

pub fn forest_predict<L: Clone + Ord>(forest: &RandomForest<L>, x: &[f64]) -> Result<L> {
    forest.predict(x)
}

/// Text summary of a k-means fit: one line per cluster.
pub fn kmeans_report(model: &KMeansModel) -> String {
    let mut sizes = vec![0usize; model.k];
    for &a in &model.assignments {
        sizes[a] += 1;
    }
    let mut out = format!("k\t{}\ninertia\t{}\niterations\t{}\ncluster\tsize\n", model.k, model.inertia, model.iterations);
    for (c, s) in sizes.iter().enumerate() {
        let _ = writeln!(out, "{c}\t{s}");
    }
    out
}

pub fn pca_report(model: &PcaModel) -> String {
    let mut out = String::from("component\texplained_variance\tratio\n");
    for (i, (v, r)) in model.explained_variance.iter().zip(model.explained_variance_ratio()).enumerate() {
        let _ = writeln!(out, "{}\t{v}\t{r}", i + 1);
    }
    out
}
