//! Probe parameterizations, predicted distances, the training loss and its
//! analytic gradient.
//!
//! A probe maps a word vector `h` to `z = B h` and then through a feature
//! map `φ`. The predicted distance between two words is the Euclidean
//! distance between their features, `‖φ(B h_i) − φ(B h_j)‖`, and the probe is
//! trained so that its square matches the gold tree distance.
//!
//! Feature maps:
//!
//! | kernel       | `φ(z)`                                             |
//! |--------------|----------------------------------------------------|
//! | linear       | `z`                                                |
//! | polynomial   | `(z + c)^p`, elementwise                           |
//! | rbf          | `exp(−z²/2σ²)` elementwise, or `exp(−‖z‖²/2σ²)` scalar |
//! | sigmoid      | `tanh(a z + b)`, elementwise                       |
//!
//! [`Kernel::BilinearReference`] is the older pairwise form
//! `|k(z_i, z_i) − 2 k(z_i, z_j) + k(z_j, z_j)|` with the Gaussian pair
//! kernel `k(x, y) = exp(−‖x − y‖²/2σ²)`, kept for comparison runs.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::linalg::{Matrix, Vectors};
use crate::treebank::TreeDistances;

/// Half-width of the uniform distribution used to initialize `B`.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Kernel {
    #[cfg_attr(feature = "serde", serde(rename = "linear"))]
    Linear,
    #[cfg_attr(feature = "serde", serde(rename = "poly"))]
    Polynomial,
    #[cfg_attr(feature = "serde", serde(rename = "rbf"))]
    Rbf,
    #[cfg_attr(feature = "serde", serde(rename = "sigmoid"))]
    Sigmoid,
    #[cfg_attr(feature = "serde", serde(rename = "bilinear-ref"))]
    BilinearReference,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Linear,
        Kernel::Polynomial,
        Kernel::Rbf,
        Kernel::Sigmoid,
        Kernel::BilinearReference,
    ];

    /// Short name used on the command line and in file headers.
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Polynomial => "poly",
            Kernel::Rbf => "rbf",
            Kernel::Sigmoid => "sigmoid",
            Kernel::BilinearReference => "bilinear-ref",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(ProbeError::InvalidParams("unknown kernel"))
    }
}

/// How the RBF feature map treats the projected vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RbfMode {
    /// `exp(−z_r²/2σ²)` per component; keeps `k` features.
    #[default]
    Elementwise,
    /// The single value `exp(−‖z‖²/2σ²)`; every token lands on one line.
    Scalar,
}

impl RbfMode {
    pub fn name(self) -> &'static str {
        match self {
            RbfMode::Elementwise => "elementwise",
            RbfMode::Scalar => "scalar",
        }
    }
}

impl fmt::Display for RbfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RbfMode {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elementwise" => Ok(RbfMode::Elementwise),
            "scalar" => Ok(RbfMode::Scalar),
            _ => Err(ProbeError::InvalidParams("unknown rbf mode")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid probe parameters: {0}")]
    InvalidParams(&'static str),
}

/// Projection matrix plus kernel selection and kernel hyperparameters.
///
/// Hyperparameters that the selected kernel does not use are kept as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    /// `B`, of shape `rank × dim`.
    pub projection: Matrix,
    pub kernel: Kernel,
    /// Polynomial shift `c ≥ 0`.
    pub poly_shift: f64,
    /// Polynomial degree `p ≥ 1`.
    pub poly_degree: u32,
    /// RBF scale `σ > 0`.
    pub rbf_sigma: f64,
    pub rbf_mode: RbfMode,
    /// Sigmoid slope `a`.
    pub sigmoid_scale: f64,
    /// Sigmoid offset `b`.
    pub sigmoid_offset: f64,
}

impl ProbeParams {
    /// Wraps a projection with the default hyperparameters
    /// `c = 0, p = 2, σ = 1, a = 1, b = 0` and elementwise RBF.
    pub fn new(kernel: Kernel, projection: Matrix) -> Self {
        Self {
            projection,
            kernel,
            poly_shift: 0.0,
            poly_degree: 2,
            rbf_sigma: 1.0,
            rbf_mode: RbfMode::Elementwise,
            sigmoid_scale: 1.0,
            sigmoid_offset: 0.0,
        }
    }

    /// Draws `B` i.i.d. uniform on `[−0.05, 0.05]`.
    pub fn random<R: Rng + ?Sized>(kernel: Kernel, rank: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..rank * dim)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        Self::new(kernel, Matrix::from_vec(rank, dim, data))
    }

    pub fn rank(&self) -> usize {
        self.projection.rows()
    }

    pub fn dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.rank() == 0 || self.dim() == 0 {
            return Err(ProbeError::InvalidParams("projection must be at least 1x1"));
        }
        let scalars = [
            self.poly_shift,
            self.rbf_sigma,
            self.sigmoid_scale,
            self.sigmoid_offset,
        ];
        if !self.projection.is_finite() || scalars.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::NonFinite("probe parameters"));
        }
        if self.poly_shift < 0.0 {
            return Err(ProbeError::InvalidParams("polynomial shift c must be >= 0"));
        }
        if self.poly_degree == 0 {
            return Err(ProbeError::InvalidParams(
                "polynomial degree p must be >= 1",
            ));
        }
        if self.rbf_sigma <= 0.0 {
            return Err(ProbeError::InvalidParams("rbf sigma must be > 0"));
        }
        Ok(())
    }

    /// Length of `φ(Bh)`.
    pub fn feature_dim(&self) -> usize {
        match (self.kernel, self.rbf_mode) {
            (Kernel::Rbf, RbfMode::Scalar) => 1,
            _ => self.rank(),
        }
    }

    fn check_dim(&self, h: &[f32]) -> Result<(), ProbeError> {
        if h.len() != self.dim() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.dim(),
                found: h.len(),
            });
        }
        Ok(())
    }

    fn project(&self, h: &[f32]) -> Result<Vec<f64>, ProbeError> {
        self.check_dim(h)?;
        let mut z = vec![0.0; self.rank()];
        self.projection.mul_vec_f32(h, &mut z);
        Ok(z)
    }

    fn two_sigma_sq(&self) -> f64 {
        2.0 * self.rbf_sigma * self.rbf_sigma
    }

    fn features_of(&self, z: &[f64]) -> Result<Vec<f64>, ProbeError> {
        let features: Vec<f64> = match self.kernel {
            Kernel::Linear | Kernel::BilinearReference => z.to_vec(),
            Kernel::Polynomial => {
                let p = f64::from(self.poly_degree);
                z.iter()
                    .map(|&v| libm::pow(v + self.poly_shift, p))
                    .collect()
            }
            Kernel::Rbf => {
                let s = self.two_sigma_sq();
                match self.rbf_mode {
                    RbfMode::Elementwise => z.iter().map(|&v| libm::exp(-v * v / s)).collect(),
                    RbfMode::Scalar => {
                        let norm_sq: f64 = z.iter().map(|v| v * v).sum();
                        vec![libm::exp(-norm_sq / s)]
                    }
                }
            }
            Kernel::Sigmoid => z
                .iter()
                .map(|&v| libm::tanh(self.sigmoid_scale * v + self.sigmoid_offset))
                .collect(),
        };
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::NonFinite("feature map"));
        }
        Ok(features)
    }

    /// `φ(B h)`. For the bilinear reference kernel, which has no per-token
    /// feature map, this is `B h`.
    pub fn feature_map(&self, h: &[f32]) -> Result<Vec<f64>, ProbeError> {
        let z = self.project(h)?;
        self.features_of(&z)
    }

    /// Squared predicted distance between two feature vectors.
    fn feature_distance_sq(&self, fi: &[f64], fj: &[f64]) -> f64 {
        let sq: f64 = fi.iter().zip(fj).map(|(a, b)| (a - b) * (a - b)).sum();
        match self.kernel {
            Kernel::BilinearReference => {
                let d = bilinear_reference_distance(sq, self.two_sigma_sq());
                d * d
            }
            _ => sq,
        }
    }

    /// Predicted distance `d_B(h_i, h_j)` (not squared).
    pub fn pair_distance(&self, hi: &[f32], hj: &[f32]) -> Result<f64, ProbeError> {
        let fi = self.feature_map(hi)?;
        let fj = self.feature_map(hj)?;
        let d = libm::sqrt(self.feature_distance_sq(&fi, &fj));
        if !d.is_finite() {
            return Err(ProbeError::NonFinite("pair distance"));
        }
        Ok(d)
    }

    fn all_projections(&self, vectors: Vectors<'_>) -> Result<Vec<Vec<f64>>, ProbeError> {
        if vectors.dim() != self.dim() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.dim(),
                found: vectors.dim(),
            });
        }
        (0..vectors.tokens())
            .map(|i| self.project(vectors.token(i)))
            .collect()
    }

    /// Squared predicted distances between all token pairs of a sentence.
    pub fn distance_matrix(&self, vectors: Vectors<'_>) -> Result<DistanceMatrix, ProbeError> {
        let projections = self.all_projections(vectors)?;
        let features = projections
            .iter()
            .map(|z| self.features_of(z))
            .collect::<Result<Vec<_>, _>>()?;
        let n = features.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = self.feature_distance_sq(&features[i], &features[j]);
                if !d.is_finite() {
                    return Err(ProbeError::NonFinite("distance matrix"));
                }
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, values })
    }

    /// `(1/T²) Σ_{i,j} |d_T(i,j) − d_B(i,j)²|` over ordered pairs.
    pub fn sentence_loss(
        &self,
        vectors: Vectors<'_>,
        gold: &TreeDistances,
    ) -> Result<f64, ProbeError> {
        check_tokens(vectors, gold)?;
        let dm = self.distance_matrix(vectors)?;
        Ok(loss_from_matrix(&dm, gold))
    }

    /// Loss and its gradient with respect to `B` (and the sigmoid's `a`,
    /// `b`). The subgradient of `|x|` at 0 is taken as 0.
    pub fn loss_gradient(
        &self,
        vectors: Vectors<'_>,
        gold: &TreeDistances,
    ) -> Result<Gradient, ProbeError> {
        check_tokens(vectors, gold)?;
        let t = vectors.tokens();
        let projections = self.all_projections(vectors)?;
        let features = projections
            .iter()
            .map(|z| self.features_of(z))
            .collect::<Result<Vec<_>, _>>()?;

        let norm = 1.0 / (t * t) as f64;
        let mut loss = 0.0;
        // weight[i*t + j] = ∂loss/∂D_ij for one ordered pair
        let mut weight = vec![0.0; t * t];
        for i in 0..t {
            for j in i + 1..t {
                let d = self.feature_distance_sq(&features[i], &features[j]);
                let residual = f64::from(gold.get(i, j)) - d;
                loss += 2.0 * norm * residual.abs();
                let w = -signum0(residual) * norm;
                weight[i * t + j] = w;
                weight[j * t + i] = w;
            }
        }

        let rank = self.rank();
        // ∂loss/∂z_m for each token m
        let mut dz = vec![vec![0.0; rank]; t];
        let mut grad_scale = 0.0;
        let mut grad_offset = 0.0;

        if self.kernel == Kernel::BilinearReference {
            let s = self.two_sigma_sq();
            for m in 0..t {
                for j in 0..t {
                    let w = weight[m * t + j];
                    if j == m || w == 0.0 {
                        continue;
                    }
                    let diff: Vec<f64> = projections[m]
                        .iter()
                        .zip(&projections[j])
                        .map(|(a, b)| a - b)
                        .collect();
                    let sq: f64 = diff.iter().map(|v| v * v).sum();
                    let e = libm::exp(-sq / s);
                    // D = (2 − 2e)², so ∂D/∂z_m = 16 (1 − e) e (z_m − z_j) / s
                    let coef = 2.0 * w * 16.0 * (1.0 - e) * e / s;
                    for (g, dv) in dz[m].iter_mut().zip(&diff) {
                        *g += coef * dv;
                    }
                }
            }
        } else {
            let fdim = self.feature_dim();
            for m in 0..t {
                // upstream gradient with respect to the features of token m
                let mut up = vec![0.0; fdim];
                for j in 0..t {
                    let w = weight[m * t + j];
                    if j == m || w == 0.0 {
                        continue;
                    }
                    for (u, (a, b)) in up.iter_mut().zip(features[m].iter().zip(&features[j])) {
                        *u += 4.0 * w * (a - b);
                    }
                }
                let z = &projections[m];
                let f = &features[m];
                match self.kernel {
                    Kernel::Linear => dz[m].copy_from_slice(&up),
                    Kernel::Polynomial => {
                        let p = f64::from(self.poly_degree);
                        for r in 0..rank {
                            let base = z[r] + self.poly_shift;
                            dz[m][r] = up[r] * p * libm::pow(base, p - 1.0);
                        }
                    }
                    Kernel::Rbf => {
                        let sigma_sq = self.rbf_sigma * self.rbf_sigma;
                        match self.rbf_mode {
                            RbfMode::Elementwise => {
                                for r in 0..rank {
                                    dz[m][r] = up[r] * (-f[r] * z[r] / sigma_sq);
                                }
                            }
                            RbfMode::Scalar => {
                                for r in 0..rank {
                                    dz[m][r] = up[0] * (-f[0] * z[r] / sigma_sq);
                                }
                            }
                        }
                    }
                    Kernel::Sigmoid => {
                        for r in 0..rank {
                            let slope = up[r] * (1.0 - f[r] * f[r]);
                            dz[m][r] = slope * self.sigmoid_scale;
                            grad_scale += slope * z[r];
                            grad_offset += slope;
                        }
                    }
                    Kernel::BilinearReference => unreachable!(),
                }
            }
        }

        let mut projection = Matrix::zeros(rank, self.dim());
        for (m, dzm) in dz.iter().enumerate() {
            let h = vectors.token(m);
            for (r, &g) in dzm.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut projection.as_mut_slice()[r * h.len()..(r + 1) * h.len()];
                for (out, &hv) in row.iter_mut().zip(h) {
                    *out += g * f64::from(hv);
                }
            }
        }

        if !loss.is_finite() || !projection.is_finite() {
            return Err(ProbeError::NonFinite("loss gradient"));
        }
        Ok(Gradient {
            loss,
            projection,
            sigmoid_scale: grad_scale,
            sigmoid_offset: grad_offset,
        })
    }
}

/// `|k(x,x) − 2k(x,y) + k(y,y)|` for the Gaussian pair kernel, given
/// `‖x − y‖²`.
fn bilinear_reference_distance(diff_sq: f64, two_sigma_sq: f64) -> f64 {
    (2.0 - 2.0 * libm::exp(-diff_sq / two_sigma_sq)).abs()
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_tokens(vectors: Vectors<'_>, gold: &TreeDistances) -> Result<(), ProbeError> {
    if vectors.tokens() != gold.n() {
        return Err(ProbeError::DimensionMismatch {
            expected: gold.n(),
            found: vectors.tokens(),
        });
    }
    Ok(())
}

/// The sentence loss evaluated on a precomputed distance matrix.
pub fn loss_from_matrix(dm: &DistanceMatrix, gold: &TreeDistances) -> f64 {
    let t = dm.n();
    if t == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..t {
        for j in 0..t {
            total += (f64::from(gold.get(i, j)) - dm.get(i, j)).abs();
        }
    }
    total / (t * t) as f64
}

/// Gradient of the sentence loss, together with the loss itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    /// `∂loss/∂B`, same shape as `B`.
    pub projection: Matrix,
    /// `∂loss/∂a`; zero for non-sigmoid kernels.
    pub sigmoid_scale: f64,
    /// `∂loss/∂b`; zero for non-sigmoid kernels.
    pub sigmoid_offset: f64,
}

/// Squared predicted distances `d_B²` for one sentence, indexed by 0-based
/// token position.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a row-major `n × n` table, checking symmetry, zero diagonal and
    /// finiteness.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self, ProbeError> {
        if values.len() != n * n {
            return Err(ProbeError::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::NonFinite("distance matrix"));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(ProbeError::InvalidParams(
                    "distance matrix diagonal must be zero",
                ));
            }
            for j in i + 1..n {
                if values[i * n + j] != values[j * n + i] {
                    return Err(ProbeError::InvalidParams(
                        "distance matrix must be symmetric",
                    ));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Squared distance between positions `i` and `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Non-squared distance `d_B` between positions `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        libm::sqrt(self.get(i, j))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every off-diagonal entry, keeping the diagonal at 0.
    pub fn map_off_diagonal(&self, f: impl Fn(f64) -> f64) -> Self {
        let n = self.n;
        let mut values = self.values.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = f(self.values[i * n + j]);
                }
            }
        }
        Self { n, values }
    }
}
