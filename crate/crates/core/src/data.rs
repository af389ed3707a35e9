//! Synthetic labeled manifold data and paired-view batches.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{rotate_image, AugmentationPolicy, IMAGE_SIDE};
use crate::error::{LabError, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng::LabRng;

/// Amplitude of the per-coordinate sinusoidal warp.
pub const WARP_AMPLITUDE: f64 = 0.1;
/// Angular frequency of the warp along its latent direction.
pub const WARP_FREQUENCY: f64 = 3.0;
/// Class jitter as a fraction of the smallest fine-center gap.
pub const JITTER_FRACTION: f64 = 0.1;
/// How far fine centers scatter around their coarse center before
/// re-projection onto the sphere.
const FINE_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    pub n: usize,
    pub d: usize,
    pub latent_dim: usize,
    pub n_fine: usize,
    pub n_coarse: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self { n: 512, d: 32, latent_dim: 4, n_fine: 16, n_coarse: 4 }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        let DatasetParams { n, d, latent_dim, n_fine, n_coarse } = *self;
        if latent_dim < 2 || latent_dim >= d {
            return Err(LabError::Input(format!("need 2 <= latent_dim < d, got {latent_dim} and {d}")));
        }
        if n_coarse == 0 || n_fine == 0 || n_fine % n_coarse != 0 {
            return Err(LabError::Input(format!(
                "n_fine ({n_fine}) must be a positive multiple of n_coarse ({n_coarse})"
            )));
        }
        if n < n_fine || n < 2 {
            return Err(LabError::Input(format!("need n >= max(n_fine, 2), got n = {n}")));
        }
        Ok(())
    }
}

/// Points sampled around class centers on a sphere, embedded smoothly in
/// a higher-dimensional ambient space.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub points: Matrix<f64>,
    pub fine_labels: Vec<usize>,
    pub coarse_labels: Vec<usize>,
    pub latent_dim: usize,
    pub seed: u64,
}

fn random_unit(dim: usize, rng: &mut LabRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `d × k` matrix with orthonormal columns.
fn random_isometry(d: usize, k: usize, rng: &mut LabRng) -> Matrix<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let p = dot(c, &v);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_fn(d, k, |r, c| cols[c][r])
}

pub fn generate_manifold_dataset(params: DatasetParams, seed: u64) -> Result<SyntheticDataset> {
    params.validate()?;
    let DatasetParams { n, d, latent_dim, n_fine, n_coarse } = params;
    let root = LabRng::new(seed);
    let mut center_rng = root.split_named("centers");

    let coarse_centers: Vec<Vec<f64>> = (0..n_coarse).map(|_| random_unit(latent_dim, &mut center_rng)).collect();
    let per_coarse = n_fine / n_coarse;
    let fine_centers: Vec<Vec<f64>> = (0..n_fine)
        .map(|f| {
            let base = &coarse_centers[f / per_coarse];
            let v: Vec<f64> =
                base.iter().map(|&b| b + FINE_SPREAD * center_rng.sample::<f64, _>(StandardNormal)).collect();
            let nv = norm(&v).max(1e-12);
            v.into_iter().map(|x| x / nv).collect()
        })
        .collect();

    let mut min_gap = f64::INFINITY;
    for a in 0..n_fine {
        for b in a + 1..n_fine {
            let diff: Vec<f64> = fine_centers[a].iter().zip(&fine_centers[b]).map(|(x, y)| x - y).collect();
            min_gap = min_gap.min(norm(&diff));
        }
    }
    // a single fine class has no gap; fall back to unit spacing
    let sigma = JITTER_FRACTION * if min_gap.is_finite() { min_gap } else { 1.0 };

    let mut embed_rng = root.split_named("embedding");
    let iso = random_isometry(d, latent_dim, &mut embed_rng);
    let warp_dirs: Vec<Vec<f64>> = (0..d).map(|_| random_unit(latent_dim, &mut embed_rng)).collect();
    let warp_phase: Vec<f64> = (0..d).map(|_| embed_rng.random_range(0.0..2.0 * PI)).collect();

    let mut point_rng = root.split_named("points");
    let fine_labels: Vec<usize> = (0..n).map(|p| p % n_fine).collect();
    let coarse_labels: Vec<usize> = fine_labels.iter().map(|f| f / per_coarse).collect();
    let mut data = Vec::with_capacity(n * d);
    for &f in &fine_labels {
        let z: Vec<f64> =
            fine_centers[f].iter().map(|&c| c + sigma * point_rng.sample::<f64, _>(StandardNormal)).collect();
        let y = iso.matvec(&z)?;
        for k in 0..d {
            let t = WARP_FREQUENCY * dot(&warp_dirs[k], &z) + warp_phase[k];
            data.push(y[k] + WARP_AMPLITUDE * t.sin());
        }
    }
    Ok(SyntheticDataset { points: Matrix::new(n, d, data)?, fine_labels, coarse_labels, latent_dim, seed })
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// CSV with header `index,fine,coarse,x0,...,x{d-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = ["index", "fine", "coarse"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..self.dim()).map(|k| format!("x{k}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (i, row) in self.points.row_iter().enumerate() {
            write!(out, "{i},{},{}", self.fine_labels[i], self.coarse_labels[i])?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Random displacement `v = Σ c_k b_k`, `c_k ~ U[-scale, scale]`, inside a
/// fixed subspace spanned by the orthonormal rows `b_k` of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceShift {
    basis: Matrix<f64>,
    scale: f64,
}

impl SubspaceShift {
    /// Random `k`-dimensional subspace of `R^dim`.
    pub fn random(dim: usize, k: usize, scale: f64, seed: u64) -> Result<Self> {
        if k == 0 || k > dim || !(scale > 0.0) {
            return Err(LabError::Input(format!(
                "subspace shift needs 0 < k <= dim and positive scale (k {k}, dim {dim}, scale {scale})"
            )));
        }
        let mut rng = LabRng::new(seed).split_named("subspace");
        Ok(Self { basis: random_isometry(dim, k, &mut rng).transpose(), scale })
    }

    pub fn basis(&self) -> &Matrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    fn apply(&self, x: &[f64], rng: &mut LabRng) -> (Vec<f64>, Vec<f64>) {
        let coeffs: Vec<f64> = (0..self.basis.rows()).map(|_| rng.random_range(-self.scale..=self.scale)).collect();
        let shift = self.basis.t_matvec(&coeffs).expect("basis shape");
        (x.iter().zip(&shift).map(|(a, b)| a + b).collect(), coeffs)
    }
}

/// How views are produced from a source point.
#[derive(Debug, Clone, PartialEq)]
pub enum Augmenter {
    Lie(AugmentationPolicy<f64>),
    Shift(SubspaceShift),
}

impl Augmenter {
    pub fn dim(&self) -> usize {
        match self {
            Augmenter::Lie(p) => p.dim(),
            Augmenter::Shift(s) => s.dim(),
        }
    }

    fn apply(&self, x: &[f64], rng: &mut LabRng) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Augmenter::Lie(p) => p.apply(x, rng),
            Augmenter::Shift(s) => Ok(s.apply(x, rng)),
        }
    }
}

/// Whether both views are drawn independently or the first view is the
/// untouched source point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    BothViews,
    AnchorFirst,
}

/// Paired augmented views of distinct source points.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x1: Matrix<f64>,
    pub x2: Matrix<f64>,
    pub source_indices: Vec<usize>,
    pub fine_labels: Vec<usize>,
    pub coarse_labels: Vec<usize>,
    /// Strengths used for view 1 (empty when the view is the source point).
    pub strengths1: Vec<Vec<f64>>,
    pub strengths2: Vec<Vec<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x1.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.rows() == 0
    }
}

/// `batch_size` distinct source points, each seen through two independent
/// draws from `policy`.
pub fn make_batch(
    ds: &SyntheticDataset,
    policy: &AugmentationPolicy<f64>,
    batch_size: usize,
    rng: &mut LabRng,
) -> Result<Batch> {
    let indices = sample_indices(ds.len(), batch_size, rng)?;
    make_pair_batch(ds, &Augmenter::Lie(policy.clone()), PairMode::BothViews, &indices, rng)
}

/// Distinct indices drawn without replacement.
pub fn sample_indices(n: usize, batch_size: usize, rng: &mut LabRng) -> Result<Vec<usize>> {
    if batch_size < 2 {
        return Err(LabError::Input(format!("batch size {batch_size} leaves the negative set empty; need at least 2")));
    }
    if batch_size > n {
        return Err(LabError::Input(format!("batch size {batch_size} exceeds dataset size {n}")));
    }
    Ok(rand::seq::index::sample(rng, n, batch_size).into_vec())
}

pub fn make_pair_batch(
    ds: &SyntheticDataset,
    augmenter: &Augmenter,
    mode: PairMode,
    indices: &[usize],
    rng: &mut LabRng,
) -> Result<Batch> {
    if indices.len() < 2 {
        return Err(LabError::Input("a batch needs at least 2 samples".into()));
    }
    if augmenter.dim() != ds.dim() {
        return Err(LabError::Dimension(format!(
            "augmenter of dimension {} for data of dimension {}",
            augmenter.dim(),
            ds.dim()
        )));
    }
    let d = ds.dim();
    let mut x1 = Vec::with_capacity(indices.len() * d);
    let mut x2 = Vec::with_capacity(indices.len() * d);
    let mut strengths1 = Vec::with_capacity(indices.len());
    let mut strengths2 = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= ds.len() {
            return Err(LabError::Input(format!("index {i} out of range")));
        }
        let x = ds.points.row(i);
        let (a, sa) = match mode {
            PairMode::BothViews => augmenter.apply(x, rng)?,
            PairMode::AnchorFirst => (x.to_vec(), Vec::new()),
        };
        let (b, sb) = augmenter.apply(x, rng)?;
        x1.extend(a);
        x2.extend(b);
        strengths1.push(sa);
        strengths2.push(sb);
    }
    let b = indices.len();
    Ok(Batch {
        x1: Matrix::new(b, d, x1)?,
        x2: Matrix::new(b, d, x2)?,
        source_indices: indices.to_vec(),
        fine_labels: indices.iter().map(|&i| ds.fine_labels[i]).collect(),
        coarse_labels: indices.iter().map(|&i| ds.coarse_labels[i]).collect(),
        strengths1,
        strengths2,
    })
}

/// `n_images` copies of one random one-hot 32×32 image rotated by
/// `θ ~ U[0, theta_max]`, flattened row-major into the rows of the result.
pub fn one_hot_image_set(n_images: usize, theta_max: f64, seed: u64) -> Result<Matrix<f64>> {
    if n_images < 2 {
        return Err(LabError::Input(format!("need at least 2 images, got {n_images}")));
    }
    if !(0.0..=PI).contains(&theta_max) {
        return Err(LabError::Input(format!("theta_max {theta_max} outside [0, pi]")));
    }
    let root = LabRng::new(seed);
    let mut pixel_rng = root.split_named("hot-pixel");
    let hot = (pixel_rng.random_range(0..IMAGE_SIDE), pixel_rng.random_range(0..IMAGE_SIDE));
    let mut img = Matrix::zeros(IMAGE_SIDE, IMAGE_SIDE);
    img[hot] = 1.0;

    let mut angle_rng = root.split_named("angles");
    let side2 = IMAGE_SIDE * IMAGE_SIDE;
    let mut data = Vec::with_capacity(n_images * side2);
    for _ in 0..n_images {
        let theta = if theta_max == 0.0 { 0.0 } else { angle_rng.random_range(0.0..=theta_max) };
        data.extend_from_slice(rotate_image(&img, theta)?.as_slice());
    }
    Matrix::new(n_images, side2, data)
}
