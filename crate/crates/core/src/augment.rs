//! Augmentation policies modeled as Lie group actions `x ↦ exp(εG) x`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{matrix_exp, Matrix};
use crate::rng::LabRng;
use crate::scalar::Real;

/// Side length of the toy images.
pub const IMAGE_SIDE: usize = 32;
/// Rotation center of the toy images (pixel centers sit at integers).
pub const IMAGE_CENTER: f64 = 15.5;

const SKEW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Rotation in the coordinate plane `(i, j)`, `i < j`.
    RotationPlane {
        i: usize,
        j: usize,
    },
    GeneralSkew,
    Custom,
}

/// Infinitesimal generator of a one-parameter transformation group.
#[derive(Debug, Clone, PartialEq)]
pub struct LieGenerator<T> {
    g: Matrix<T>,
    kind: GeneratorKind,
}

impl<T: Real> LieGenerator<T> {
    /// Generator of rotations in the `(i, j)` plane: `G[i][j] = -1`,
    /// `G[j][i] = 1`.
    pub fn rotation(dim: usize, i: usize, j: usize) -> Result<Self> {
        if i >= j || j >= dim {
            return Err(LabError::Input(format!("rotation plane ({i}, {j}) requires 0 <= i < j < {dim}")));
        }
        let mut g = Matrix::zeros(dim, dim);
        g[(i, j)] = -T::one();
        g[(j, i)] = T::one();
        Ok(Self { g, kind: GeneratorKind::RotationPlane { i, j } })
    }

    /// Arbitrary skew-symmetric generator (`G = -Gᵀ` within 1e-12).
    pub fn skew(g: Matrix<T>) -> Result<Self> {
        if !g.is_square() {
            return Err(LabError::Input("generator must be square".into()));
        }
        let asym = g.add(&g.transpose())?;
        if asym.as_slice().iter().any(|v| v.abs().as_f64() > SKEW_TOL) {
            return Err(LabError::Input("generator is not skew-symmetric".into()));
        }
        Ok(Self { g, kind: GeneratorKind::GeneralSkew })
    }

    pub fn custom(g: Matrix<T>) -> Result<Self> {
        if !g.is_square() {
            return Err(LabError::Input("generator must be square".into()));
        }
        Ok(Self { g, kind: GeneratorKind::Custom })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.g
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.g.rows()
    }

    /// `exp(eps · G) · x`. Plane rotations use the closed form, which is the
    /// same map as the series.
    pub fn act(&self, eps: T, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(LabError::Dimension(format!(
                "generator of dimension {} applied to vector of length {}",
                self.dim(),
                x.len()
            )));
        }
        if eps == T::zero() {
            return Ok(x.to_vec());
        }
        match self.kind {
            GeneratorKind::RotationPlane { i, j } => {
                let (s, c) = eps.sin_cos();
                let mut y = x.to_vec();
                y[i] = c * x[i] - s * x[j];
                y[j] = s * x[i] + c * x[j];
                Ok(y)
            }
            _ => matrix_exp(&self.g, eps)?.matvec(x),
        }
    }
}

/// Uniform law for the strength `ε` of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthDistribution {
    lo: f64,
    hi: f64,
}

impl StrengthDistribution {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
            return Err(LabError::Input(format!("strength range [{lo}, {hi}] invalid")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Difference between the largest and smallest strength.
    pub fn spread(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn sample(&self, rng: &mut LabRng) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        rng.random_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Small,
    Moderate,
    Large,
    Custom,
}

impl PresetName {
    /// Upper strength bound of each preset.
    pub fn max_strength(self) -> Option<f64> {
        match self {
            PresetName::Small => Some(0.05),
            PresetName::Moderate => Some(0.4),
            PresetName::Large => Some(1.2),
            PresetName::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Small => "small",
            PresetName::Moderate => "moderate",
            PresetName::Large => "large",
            PresetName::Custom => "custom",
        }
    }
}

impl std::str::FromStr for PresetName {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(PresetName::Small),
            "moderate" => Ok(PresetName::Moderate),
            "large" => Ok(PresetName::Large),
            "custom" => Ok(PresetName::Custom),
            other => Err(LabError::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// A sequence of generators, each with its own strength law, composed in
/// declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy<T> {
    components: Vec<(LieGenerator<T>, StrengthDistribution)>,
    preset: PresetName,
}

impl<T: Real> AugmentationPolicy<T> {
    pub fn new(components: Vec<(LieGenerator<T>, StrengthDistribution)>, preset: PresetName) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(LabError::Input("augmentation policy needs at least one component".into()));
        };
        let dim = first.0.dim();
        if components.iter().any(|(g, _)| g.dim() != dim) {
            return Err(LabError::Input("generators of a policy must share one dimension".into()));
        }
        Ok(Self { components, preset })
    }

    /// `n_generators` rotations in distinct random coordinate planes with
    /// the preset's strength range `U[0, max]`.
    pub fn preset(name: PresetName, dim: usize, n_generators: usize, seed: u64) -> Result<Self> {
        let hi = name.max_strength().ok_or_else(|| LabError::Input("`custom` is not a preset".into()))?;
        if dim < 2 || n_generators == 0 {
            return Err(LabError::Input(format!(
                "preset needs dim >= 2 and at least one generator (dim {dim}, n {n_generators})"
            )));
        }
        let planes = random_planes(dim, n_generators, seed)?;
        let range = StrengthDistribution::new(0.0, hi)?;
        let components = planes
            .into_iter()
            .map(|(i, j)| Ok((LieGenerator::rotation(dim, i, j)?, range)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, name)
    }

    pub fn components(&self) -> &[(LieGenerator<T>, StrengthDistribution)] {
        &self.components
    }

    pub fn preset_name(&self) -> PresetName {
        self.preset
    }

    pub fn dim(&self) -> usize {
        self.components[0].0.dim()
    }

    /// Replaces every strength law, keeping the generators.
    pub fn with_strengths(&self, range: StrengthDistribution, preset: PresetName) -> Self {
        Self { components: self.components.iter().map(|(g, _)| (g.clone(), range)).collect(), preset }
    }

    /// One `ε` per component.
    pub fn sample_strengths(&self, rng: &mut LabRng) -> Vec<T> {
        self.components.iter().map(|(_, d)| T::lit(d.sample(rng))).collect()
    }

    /// `exp(ε_K G_K) ⋯ exp(ε_1 G_1) x` with freshly sampled strengths.
    pub fn apply(&self, x: &[T], rng: &mut LabRng) -> Result<(Vec<T>, Vec<T>)> {
        if x.len() != self.dim() {
            return Err(LabError::Dimension(format!(
                "policy of dimension {} applied to vector of length {}",
                self.dim(),
                x.len()
            )));
        }
        let strengths = self.sample_strengths(rng);
        let y = self.apply_with(x, &strengths)?;
        Ok((y, strengths))
    }

    /// Deterministic application with given strengths.
    pub fn apply_with(&self, x: &[T], strengths: &[T]) -> Result<Vec<T>> {
        if strengths.len() != self.components.len() {
            return Err(LabError::Dimension(format!(
                "{} strengths for {} components",
                strengths.len(),
                self.components.len()
            )));
        }
        let mut y = x.to_vec();
        for ((g, _), &eps) in self.components.iter().zip(strengths) {
            y = g.act(eps, &y)?;
        }
        Ok(y)
    }

    pub fn to_spec(&self) -> PolicySpec {
        PolicySpec {
            preset: self.preset,
            dim: self.dim(),
            components: self
                .components
                .iter()
                .map(|(g, d)| ComponentSpec {
                    generator: match g.kind() {
                        GeneratorKind::RotationPlane { i, j } => GeneratorSpec::Plane { i, j },
                        GeneratorKind::GeneralSkew => GeneratorSpec::Skew {
                            rows: g.matrix().row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
                        },
                        GeneratorKind::Custom => GeneratorSpec::Matrix {
                            rows: g.matrix().row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
                        },
                    },
                    lo: d.lo(),
                    hi: d.hi(),
                })
                .collect(),
        }
    }

    pub fn from_spec(spec: &PolicySpec) -> Result<Self> {
        let components = spec
            .components
            .iter()
            .map(|c| {
                let g = match &c.generator {
                    GeneratorSpec::Plane { i, j } => LieGenerator::rotation(spec.dim, *i, *j)?,
                    GeneratorSpec::Skew { rows } => LieGenerator::skew(rows_to_matrix(rows)?)?,
                    GeneratorSpec::Matrix { rows } => LieGenerator::custom(rows_to_matrix(rows)?)?,
                };
                Ok((g, StrengthDistribution::new(c.lo, c.hi)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, spec.preset)
    }
}

fn rows_to_matrix<T: Real>(rows: &[Vec<f64>]) -> Result<Matrix<T>> {
    Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect::<Vec<_>>())
}

fn random_planes(dim: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let available = dim * (dim - 1) / 2;
    if n > available {
        return Err(LabError::Input(format!(
            "{n} distinct rotation planes requested but dimension {dim} has only {available}"
        )));
    }
    let mut planes: Vec<(usize, usize)> = (0..dim).flat_map(|i| (i + 1..dim).map(move |j| (i, j))).collect();
    let mut rng = LabRng::new(seed).split_named("planes");
    planes.shuffle(&mut rng);
    planes.truncate(n);
    Ok(planes)
}

/// Serializable description of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub preset: PresetName,
    pub dim: usize,
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub generator: GeneratorSpec,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum GeneratorSpec {
    Plane { i: usize, j: usize },
    Skew { rows: Vec<Vec<f64>> },
    Matrix { rows: Vec<Vec<f64>> },
}

/// Rotates a 32×32 image about its center by `angle` radians using
/// bilinear interpolation; samples falling outside the image read as 0.
pub fn rotate_image<T: Real>(img: &Matrix<T>, angle: T) -> Result<Matrix<T>> {
    if img.shape() != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(LabError::Input(format!(
            "rotate_image expects a {IMAGE_SIDE}x{IMAGE_SIDE} image, got {}x{}",
            img.rows(),
            img.cols()
        )));
    }
    let (s, c) = angle.sin_cos();
    let center = T::lit(IMAGE_CENTER);
    let side = IMAGE_SIDE as isize;
    let at = |r: isize, col: isize| -> T {
        if r < 0 || col < 0 || r >= side || col >= side {
            T::zero()
        } else {
            img[(r as usize, col as usize)]
        }
    };
    Ok(Matrix::from_fn(IMAGE_SIDE, IMAGE_SIDE, |r, col| {
        let y = T::from_usize(r).unwrap() - center;
        let x = T::from_usize(col).unwrap() - center;
        // inverse map: source = R(-angle) · target
        let sx = c * x + s * y + center;
        let sy = c * y - s * x + center;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (xi, yi) = (x0.to_isize().unwrap(), y0.to_isize().unwrap());
        let one = T::one();
        at(yi, xi) * (one - fx) * (one - fy)
            + at(yi, xi + 1) * fx * (one - fy)
            + at(yi + 1, xi) * (one - fx) * fy
            + at(yi + 1, xi + 1) * fx * fy
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn so2_generator() {
        let g = LieGenerator::<f64>::rotation(2, 0, 1).unwrap();
        assert_eq!(*g.matrix(), Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap());
    }

    #[test]
    fn rotation_generator_in_three_dims() {
        let g = LieGenerator::<f64>::rotation(3, 0, 2).unwrap();
        let m = g.matrix();
        for r in 0..3 {
            for c in 0..3 {
                let expected = match (r, c) {
                    (0, 2) => -1.0,
                    (2, 0) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(m[(r, c)], expected);
            }
        }
        assert_eq!(*m, m.transpose().scale(-1.0));
    }

    #[test]
    fn rotation_generator_rejects_bad_planes() {
        assert!(LieGenerator::<f64>::rotation(3, 1, 1).is_err());
        assert!(LieGenerator::<f64>::rotation(3, 2, 1).is_err());
        assert!(LieGenerator::<f64>::rotation(3, 0, 3).is_err());
    }

    #[test]
    fn skew_constructor_validates() {
        let g = Matrix::from_rows(&[vec![0.0, 2.0], vec![-2.0, 0.0]]).unwrap();
        assert!(LieGenerator::skew(g).is_ok());
        let bad = Matrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert!(LieGenerator::skew(bad).is_err());
    }

    #[test]
    fn closed_form_plane_rotation_matches_series() {
        let g = LieGenerator::<f64>::rotation(5, 1, 3).unwrap();
        let x = [0.3, -1.0, 2.0, 0.7, -0.2];
        for eps in [0.01, 0.4, 1.2, -2.5] {
            let fast = g.act(eps, &x).unwrap();
            let series = matrix_exp(g.matrix(), eps).unwrap().matvec(&x).unwrap();
            for (a, b) in fast.iter().zip(&series) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quarter_turn_in_plane() {
        let g = LieGenerator::<f64>::rotation(2, 0, 1).unwrap();
        let y = g.act(FRAC_PI_2, &[1.0, 0.0]).unwrap();
        assert!((y[0] - 0.0).abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9);
        // the series path agrees
        let custom = LieGenerator::custom(g.matrix().clone()).unwrap();
        let y2 = custom.act(FRAC_PI_2, &[1.0, 0.0]).unwrap();
        assert!((y2[0]).abs() < 1e-9 && (y2[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_strength_is_constant() {
        let d = StrengthDistribution::new(0.3, 0.3).unwrap();
        let mut rng = LabRng::new(1);
        assert!((0..100).all(|_| d.sample(&mut rng) == 0.3));
        assert!(StrengthDistribution::new(0.5, 0.2).is_err());
        assert!(StrengthDistribution::new(-0.1, 0.2).is_err());
    }

    #[test]
    fn uniform_strength_mean() {
        let d = StrengthDistribution::new(0.0, 1.0).unwrap();
        let mut rng = LabRng::new(2024);
        let mean = (0..10_000).map(|_| d.sample(&mut rng)).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn zero_strength_is_exact_identity() {
        let p = AugmentationPolicy::<f64>::preset(PresetName::Large, 6, 4, 3)
            .unwrap()
            .with_strengths(StrengthDistribution::new(0.0, 0.0).unwrap(), PresetName::Custom);
        let x = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let (y, s) = p.apply(&x, &mut LabRng::new(0)).unwrap();
        assert_eq!(y, x.to_vec());
        assert!(s.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn preset_definitions() {
        for (name, hi) in [(PresetName::Small, 0.05), (PresetName::Moderate, 0.4), (PresetName::Large, 1.2)] {
            let p = AugmentationPolicy::<f64>::preset(name, 8, 5, 17).unwrap();
            assert!(p.components().iter().all(|(_, d)| d.hi() == hi && d.lo() == 0.0));
            let mut planes: Vec<_> = p.components().iter().map(|(g, _)| g.kind()).collect();
            planes.sort_by_key(|k| format!("{k:?}"));
            planes.dedup();
            assert_eq!(planes.len(), 5, "planes must be distinct");
        }
        let a = AugmentationPolicy::<f64>::preset(PresetName::Small, 8, 5, 17).unwrap();
        let b = AugmentationPolicy::<f64>::preset(PresetName::Small, 8, 5, 17).unwrap();
        assert_eq!(a, b);
        assert!(AugmentationPolicy::<f64>::preset(PresetName::Small, 3, 4, 0).is_err());
        assert!(AugmentationPolicy::<f64>::preset(PresetName::Small, 3, 3, 0).is_ok());
        assert!(AugmentationPolicy::<f64>::preset(PresetName::Custom, 3, 1, 0).is_err());
    }

    #[test]
    fn large_moves_points_further_than_small() {
        let small = AugmentationPolicy::<f64>::preset(PresetName::Small, 16, 6, 5).unwrap();
        let large = AugmentationPolicy::<f64>::preset(PresetName::Large, 16, 6, 5).unwrap();
        let mut data_rng = LabRng::new(8);
        let xs: Vec<Vec<f64>> =
            (0..1000).map(|_| (0..16).map(|_| data_rng.random_range(-1.0..1.0)).collect()).collect();
        let mean_move = |p: &AugmentationPolicy<f64>| {
            let mut rng = LabRng::new(99);
            xs.iter()
                .map(|x| {
                    let (y, _) = p.apply(x, &mut rng).unwrap();
                    norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>())
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        assert!(mean_move(&large) > mean_move(&small));
    }

    #[test]
    fn apply_dimension_mismatch() {
        let p = AugmentationPolicy::<f64>::preset(PresetName::Small, 4, 1, 0).unwrap();
        assert!(matches!(p.apply(&[1.0, 2.0], &mut LabRng::new(0)), Err(LabError::Dimension(_))));
    }

    #[test]
    fn spec_round_trip() {
        let p = AugmentationPolicy::<f64>::preset(PresetName::Moderate, 6, 3, 1).unwrap();
        let json = serde_json::to_string(&p.to_spec()).unwrap();
        let back: PolicySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(AugmentationPolicy::<f64>::from_spec(&back).unwrap(), p);
    }

    fn one_hot(r: usize, c: usize) -> Matrix<f64> {
        let mut m = Matrix::zeros(IMAGE_SIDE, IMAGE_SIDE);
        m[(r, c)] = 1.0;
        m
    }

    #[test]
    fn rotate_by_zero_is_bitwise_identity() {
        let mut rng = LabRng::new(4);
        let img = Matrix::from_fn(IMAGE_SIDE, IMAGE_SIDE, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(rotate_image(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn center_pixel_stays_near_center() {
        let out = rotate_image(&one_hot(15, 15), FRAC_PI_2).unwrap();
        let mut mass = 0.0;
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                let v = out[(r, c)];
                if v.abs() > 1e-12 {
                    mass += v;
                    assert!((r as f64 - 15.0).abs() <= 1.0 && (c as f64 - 15.0).abs() <= 1.0);
                }
            }
        }
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_weights_never_exceed_one() {
        // the all-ones image exposes the per-pixel weight sum
        let ones = Matrix::from_fn(IMAGE_SIDE, IMAGE_SIDE, |_, _| 1.0);
        for k in 0..24 {
            let angle = k as f64 * PI / 12.0 + 0.013;
            let out = rotate_image(&ones, angle).unwrap();
            assert!(out.as_slice().iter().all(|w| (-1e-12..=1.0 + 1e-12).contains(w)));
            let mass: f64 = out.as_slice().iter().sum();
            assert!(mass <= 1024.0 + 1e-9);
        }
    }

    #[test]
    fn rotate_wrong_shape() {
        assert!(rotate_image(&Matrix::<f64>::zeros(31, 32), 0.1).is_err());
    }
}
