//! Spatial (ARD RBF) and multi-task (ICM) covariance functions, plus the
//! flat hyperparameter vector used by the marginal-likelihood optimizer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output variance and per-dimension lengthscales of the ARD RBF kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialHyperparams {
    output_variance: f64,
    lengthscales: Vec<f64>,
}

impl SpatialHyperparams {
    pub fn new(output_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(output_variance > 0.0 && output_variance.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "output variance must be positive, got {output_variance}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(Error::InvalidHyperparameter("no lengthscales".into()));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidHyperparameter(format!(
                "lengthscales must be positive, got {l}"
            )));
        }
        Ok(Self {
            output_variance,
            lengthscales,
        })
    }

    /// Same lengthscale in every dimension.
    pub fn isotropic(dim: usize, output_variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(output_variance, vec![lengthscale; dim])
    }

    pub fn output_variance(&self) -> f64 {
        self.output_variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `k(x, x') = τ² exp(-½ Σ_j ((x_j - x'_j) / ℓ_j)²)`.
pub fn rbf_covariance(x: &[f64], y: &[f64], h: &SpatialHyperparams) -> Result<f64> {
    if x.len() != h.dim() || y.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: if x.len() != h.dim() { x.len() } else { y.len() },
        });
    }
    Ok(rbf_unchecked(x, y, h))
}

#[inline]
pub(crate) fn rbf_unchecked(x: &[f64], y: &[f64], h: &SpatialHyperparams) -> f64 {
    h.output_variance * (-0.5 * scaled_sq_dist(x, y, &h.lengthscales)).exp()
}

#[inline]
pub(crate) fn scaled_sq_dist(x: &[f64], y: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

/// Cross-task covariance `B = F Fᵀ` held together with its factor `F` (D×P).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCovariance {
    factor: DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl TaskCovariance {
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn num_tasks(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank_bound(&self) -> usize {
        self.factor.ncols()
    }

    #[inline]
    pub fn get(&self, d: usize, e: usize) -> f64 {
        self.matrix[(d, e)]
    }

    /// `B_{dd'} / sqrt(B_{dd} B_{d'd'})`.
    pub fn correlation(&self, d: usize, e: usize) -> Result<f64> {
        let n = self.num_tasks();
        if d >= n || e >= n {
            return Err(Error::TaskOutOfRange {
                task: d.max(e),
                num_tasks: n,
            });
        }
        let (bdd, bee) = (self.matrix[(d, d)], self.matrix[(e, e)]);
        if bdd <= 0.0 || bee <= 0.0 {
            return Err(Error::DegenerateTask(if bdd <= 0.0 { d } else { e }));
        }
        Ok((self.matrix[(d, e)] / (bdd * bee).sqrt()).clamp(-1.0, 1.0))
    }

    pub fn identity(tasks: usize) -> Self {
        build_task_covariance(DMatrix::identity(tasks, tasks))
    }

    /// Two tasks with unit variances and correlation `rho`.
    pub fn two_task(rho: f64) -> Self {
        let rho = rho.clamp(-1.0, 1.0);
        let factor = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
        build_task_covariance(factor)
    }
}

pub fn build_task_covariance(factor: DMatrix<f64>) -> TaskCovariance {
    let mut matrix = &factor * factor.transpose();
    // exact symmetry, the product can differ in the last bit
    for i in 0..matrix.nrows() {
        for j in 0..i {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    TaskCovariance { factor, matrix }
}

/// `Cov[f_d(x), f_{d'}(x')] = B_{dd'} κ(x, x')`.
pub fn icm_covariance(
    d: usize,
    x: &[f64],
    e: usize,
    y: &[f64],
    tasks: &TaskCovariance,
    h: &SpatialHyperparams,
) -> Result<f64> {
    let n = tasks.num_tasks();
    if d >= n || e >= n {
        return Err(Error::TaskOutOfRange {
            task: d.max(e),
            num_tasks: n,
        });
    }
    Ok(tasks.get(d, e) * rbf_covariance(x, y, h)?)
}

/// How the free task parameters map onto the factor of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskStructure {
    /// Lower-trapezoidal `tasks × rank` factor; `rank == tasks` is the
    /// ordinary Cholesky parameterization.
    LowRank { tasks: usize, rank: usize },
    /// Online task, a reference simulator batch and `batches - 1` further
    /// simulator batches. The first two rows form a free 2×2 lower-triangular
    /// factor; every further batch row is the reference row times a free
    /// scale, and carries a free constant mean offset.
    BatchComposite { batches: usize },
}

impl TaskStructure {
    pub fn single_task() -> Self {
        TaskStructure::LowRank { tasks: 1, rank: 1 }
    }

    pub fn num_tasks(&self) -> usize {
        match *self {
            TaskStructure::LowRank { tasks, .. } => tasks,
            TaskStructure::BatchComposite { batches } => 1 + batches,
        }
    }

    pub fn rank(&self) -> usize {
        match *self {
            TaskStructure::LowRank { tasks, rank } => rank.min(tasks),
            TaskStructure::BatchComposite { batches } => batches.min(1) + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TaskStructure::LowRank { tasks, rank } if tasks == 0 || rank == 0 || rank > tasks => {
                Err(Error::InvalidHyperparameter(format!(
                    "invalid low-rank structure: {tasks} tasks, rank {rank}"
                )))
            }
            TaskStructure::BatchComposite { batches: 0 } => Err(Error::InvalidHyperparameter(
                "batch composite structure needs at least one batch".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Number of free factor parameters.
    pub fn num_task_params(&self) -> usize {
        match *self {
            TaskStructure::LowRank { tasks, rank } => {
                (0..tasks).map(|i| (i + 1).min(rank)).sum()
            }
            TaskStructure::BatchComposite { batches } => 3 + (batches - 1),
        }
    }

    /// Number of free per-task mean offsets.
    pub fn num_offset_params(&self) -> usize {
        match *self {
            TaskStructure::LowRank { .. } => 0,
            TaskStructure::BatchComposite { batches } => batches - 1,
        }
    }

    pub fn factor(&self, params: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(params.len(), self.num_task_params());
        match *self {
            TaskStructure::LowRank { tasks, rank } => {
                let rank = rank.min(tasks);
                let mut f = DMatrix::zeros(tasks, rank);
                let mut k = 0;
                for i in 0..tasks {
                    for j in 0..=i.min(rank - 1) {
                        f[(i, j)] = params[k];
                        k += 1;
                    }
                }
                f
            }
            TaskStructure::BatchComposite { batches } => {
                let mut f = DMatrix::zeros(1 + batches, 2);
                f[(0, 0)] = params[0];
                f[(1, 0)] = params[1];
                f[(1, 1)] = params[2];
                for b in 2..=batches {
                    let s = params[3 + b - 2];
                    f[(b, 0)] = s * params[1];
                    f[(b, 1)] = s * params[2];
                }
                f
            }
        }
    }

    /// Chain rule from `∂/∂F` (same shape as the factor) to the free task parameters.
    pub fn factor_gradient(&self, params: &[f64], d_factor: &DMatrix<f64>) -> Vec<f64> {
        match *self {
            TaskStructure::LowRank { tasks, rank } => {
                let rank = rank.min(tasks);
                let mut g = Vec::with_capacity(self.num_task_params());
                for i in 0..tasks {
                    for j in 0..=i.min(rank - 1) {
                        g.push(d_factor[(i, j)]);
                    }
                }
                g
            }
            TaskStructure::BatchComposite { batches } => {
                let mut g = vec![0.0; self.num_task_params()];
                g[0] = d_factor[(0, 0)];
                g[1] = d_factor[(1, 0)];
                g[2] = d_factor[(1, 1)];
                for b in 2..=batches {
                    let s = params[3 + b - 2];
                    g[1] += s * d_factor[(b, 0)];
                    g[2] += s * d_factor[(b, 1)];
                    g[3 + b - 2] = d_factor[(b, 0)] * params[1] + d_factor[(b, 1)] * params[2];
                }
                g
            }
        }
    }

    /// Expands the free offsets to one mean offset per task.
    pub fn task_offsets(&self, offset_params: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_tasks()];
        if let TaskStructure::BatchComposite { batches } = *self {
            out[2..=batches].copy_from_slice(&offset_params[..batches - 1]);
        }
        out
    }

    /// Task that owns offset parameter `k`.
    pub fn offset_task(&self, k: usize) -> usize {
        match *self {
            TaskStructure::LowRank { .. } => unreachable!("low-rank structure has no offsets"),
            TaskStructure::BatchComposite { .. } => k + 2,
        }
    }

    /// Deterministic starting point: unit diagonal plus a shared first column.
    pub fn default_task_params(&self) -> Vec<f64> {
        match *self {
            TaskStructure::LowRank { tasks, rank } => {
                let rank = rank.min(tasks);
                let mut p = Vec::new();
                for i in 0..tasks {
                    for j in 0..=i.min(rank - 1) {
                        p.push(match (i == j, j) {
                            (true, _) => 1.0,
                            (false, 0) => 0.5,
                            _ => 0.0,
                        });
                    }
                }
                p
            }
            TaskStructure::BatchComposite { batches } => {
                let mut p = vec![1.0, 0.7, 0.7];
                p.extend(std::iter::repeat_n(1.0, batches - 1));
                p
            }
        }
    }
}

/// Positions of each hyperparameter block inside the flat vector.
///
/// Packing order, fixed:
/// `[ln τ², ln ℓ_1 .. ln ℓ_m, task factor parameters.., mean offsets..]`.
/// Low-rank factor entries are listed row by row, `(i, j)` for `j ≤ min(i, P-1)`.
/// Batch-composite task parameters are `[F00, F10, F11, s_2 .. s_M]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperparamLayout {
    pub dim: usize,
    pub structure: TaskStructure,
}

/// Box constraints for the log-parameterized entries.
pub const LOG_LENGTHSCALE_BOUNDS: (f64, f64) = (-4.605170185988091, 4.605170185988092);
pub const LOG_OUTPUT_VARIANCE_BOUNDS: (f64, f64) = (-9.210340371976182, 9.210340371976184);

impl HyperparamLayout {
    pub fn new(dim: usize, structure: TaskStructure) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidHyperparameter("zero input dimension".into()));
        }
        structure.validate()?;
        Ok(Self { dim, structure })
    }

    pub fn len(&self) -> usize {
        1 + self.dim + self.structure.num_task_params() + self.structure.num_offset_params()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn task_range(&self) -> std::ops::Range<usize> {
        let start = 1 + self.dim;
        start..start + self.structure.num_task_params()
    }

    pub fn offset_range(&self) -> std::ops::Range<usize> {
        let start = self.task_range().end;
        start..start + self.structure.num_offset_params()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        let mut lo = vec![f64::NEG_INFINITY; self.len()];
        lo[0] = LOG_OUTPUT_VARIANCE_BOUNDS.0;
        for v in &mut lo[1..=self.dim] {
            *v = LOG_LENGTHSCALE_BOUNDS.0;
        }
        lo
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        let mut hi = vec![f64::INFINITY; self.len()];
        hi[0] = LOG_OUTPUT_VARIANCE_BOUNDS.1;
        for v in &mut hi[1..=self.dim] {
            *v = LOG_LENGTHSCALE_BOUNDS.1;
        }
        hi
    }
}

/// Flat hyperparameter vector together with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamVector {
    layout: HyperparamLayout,
    values: Vec<f64>,
}

impl HyperparamVector {
    pub fn from_values(layout: HyperparamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHyperparameter("non-finite hyperparameter".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn pack(
        layout: HyperparamLayout,
        spatial: &SpatialHyperparams,
        task_params: &[f64],
        offset_params: &[f64],
    ) -> Result<Self> {
        if spatial.dim() != layout.dim {
            return Err(Error::DimensionMismatch {
                expected: layout.dim,
                found: spatial.dim(),
            });
        }
        if task_params.len() != layout.structure.num_task_params()
            || offset_params.len() != layout.structure.num_offset_params()
        {
            return Err(Error::InvalidHyperparameter(
                "task or offset parameter count does not match the layout".into(),
            ));
        }
        let mut values = Vec::with_capacity(layout.len());
        values.push(spatial.output_variance().ln());
        values.extend(spatial.lengthscales().iter().map(|l| l.ln()));
        values.extend_from_slice(task_params);
        values.extend_from_slice(offset_params);
        Self::from_values(layout, values)
    }

    pub fn layout(&self) -> &HyperparamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spatial(&self) -> SpatialHyperparams {
        SpatialHyperparams {
            output_variance: self.values[0].exp(),
            lengthscales: self.values[1..=self.layout.dim].iter().map(|v| v.exp()).collect(),
        }
    }

    pub fn task_params(&self) -> &[f64] {
        &self.values[self.layout.task_range()]
    }

    pub fn offset_params(&self) -> &[f64] {
        &self.values[self.layout.offset_range()]
    }

    pub fn task_covariance(&self) -> TaskCovariance {
        build_task_covariance(self.layout.structure.factor(self.task_params()))
    }

    /// One mean offset per task.
    pub fn task_offsets(&self) -> Vec<f64> {
        self.layout.structure.task_offsets(self.offset_params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rbf_zero_distance_is_output_variance() {
        let h = SpatialHyperparams::new(2.5, vec![0.3, 7.0]).unwrap();
        let x = [0.2, 0.9];
        assert_eq!(rbf_covariance(&x, &x, &h).unwrap(), 2.5);
    }

    #[test]
    fn rbf_hand_values() {
        let h = SpatialHyperparams::new(1.0, vec![1.0]).unwrap();
        assert_relative_eq!(
            rbf_covariance(&[0.0], &[1.0], &h).unwrap(),
            0.6065306597126334,
            epsilon = 1e-12
        );
        let h = SpatialHyperparams::new(1.0, vec![3.0, 4.0]).unwrap();
        assert_relative_eq!(
            rbf_covariance(&[0.0, 0.0], &[3.0, 4.0], &h).unwrap(),
            0.36787944117144233,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rbf_dimension_mismatch() {
        let h = SpatialHyperparams::new(1.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            rbf_covariance(&[0.0], &[1.0, 0.0], &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_spatial_hyperparams() {
        assert!(SpatialHyperparams::new(0.0, vec![1.0]).is_err());
        assert!(SpatialHyperparams::new(1.0, vec![1.0, -2.0]).is_err());
        assert!(SpatialHyperparams::new(1.0, vec![]).is_err());
    }

    #[test]
    fn icm_examples() {
        let h = SpatialHyperparams::new(1.0, vec![0.5]).unwrap();
        let b = build_task_covariance(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
        assert_relative_eq!(icm_covariance(0, &[0.3], 0, &[0.3], &b, &h).unwrap(), 1.0);

        let ident = TaskCovariance::identity(2);
        assert_eq!(icm_covariance(0, &[0.1], 1, &[0.1], &ident, &h).unwrap(), 0.0);
        assert_eq!(icm_covariance(1, &[0.1], 0, &[0.9], &ident, &h).unwrap(), 0.0);

        // κ = 0.5 at distance sqrt(2 ln 2) ℓ
        let dist = (2.0 * 2f64.ln()).sqrt() * 0.5;
        let b = build_task_covariance(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.0, 0.8, 0.6],
        ));
        assert_relative_eq!(
            icm_covariance(0, &[0.0], 1, &[dist], &b, &h).unwrap(),
            0.4,
            epsilon = 1e-12
        );
        assert!(matches!(
            icm_covariance(2, &[0.0], 0, &[0.0], &b, &h),
            Err(Error::TaskOutOfRange { .. })
        ));
    }

    #[test]
    fn build_task_covariance_examples() {
        let b = build_task_covariance(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
        assert_eq!(b.matrix(), &DMatrix::from_element(2, 2, 1.0));
        assert_eq!(b.rank_bound(), 1);

        let b = build_task_covariance(DMatrix::identity(2, 2));
        assert_eq!(b.matrix(), &DMatrix::identity(2, 2));

        let b = build_task_covariance(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.9, 0.4359]));
        assert_relative_eq!(b.get(0, 1), 0.9, epsilon = 1e-12);
        assert_relative_eq!(b.get(1, 1), 1.0, epsilon = 1e-4);
        assert_relative_eq!(b.correlation(0, 1).unwrap(), 0.9, epsilon = 1e-4);
    }

    #[test]
    fn correlation_degenerate_task() {
        let b = build_task_covariance(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert!(matches!(b.correlation(0, 1), Err(Error::DegenerateTask(1))));
    }

    #[test]
    fn low_rank_param_counts() {
        assert_eq!(TaskStructure::LowRank { tasks: 2, rank: 2 }.num_task_params(), 3);
        assert_eq!(TaskStructure::LowRank { tasks: 4, rank: 1 }.num_task_params(), 4);
        assert_eq!(TaskStructure::LowRank { tasks: 4, rank: 2 }.num_task_params(), 7);
        assert_eq!(TaskStructure::BatchComposite { batches: 3 }.num_task_params(), 5);
        assert_eq!(TaskStructure::BatchComposite { batches: 3 }.num_offset_params(), 2);
    }

    #[test]
    fn composite_factor_rows_are_scaled_copies() {
        let s = TaskStructure::BatchComposite { batches: 3 };
        let f = s.factor(&[1.0, 0.5, 0.2, 2.0, -1.0]);
        assert_eq!(f.nrows(), 4);
        assert_eq!(f[(0, 1)], 0.0);
        assert_eq!(f[(2, 0)], 1.0);
        assert_eq!(f[(2, 1)], 0.4);
        assert_eq!(f[(3, 0)], -0.5);
        assert_eq!(s.task_offsets(&[0.3, -0.1]), vec![0.0, 0.0, 0.3, -0.1]);
    }

    #[test]
    fn factor_gradient_matches_finite_differences() {
        // scalar test function: h(F) = Σ W ⊙ F with W fixed
        for s in [
            TaskStructure::LowRank { tasks: 3, rank: 2 },
            TaskStructure::BatchComposite { batches: 3 },
        ] {
            let n = s.num_task_params();
            let p: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
            let shape = s.factor(&p);
            let w = DMatrix::from_fn(shape.nrows(), shape.ncols(), |i, j| {
                1.0 + i as f64 - 0.5 * j as f64
            });
            let h = |p: &[f64]| s.factor(p).component_mul(&w).sum();
            let g = s.factor_gradient(&p, &w);
            for k in 0..n {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[k] += 1e-6;
                lo[k] -= 1e-6;
                let fd = (h(&hi) - h(&lo)) / 2e-6;
                assert_relative_eq!(g[k], fd, epsilon = 1e-7);
            }
        }
    }

    fn min_eig(m: &DMatrix<f64>) -> f64 {
        m.clone().symmetric_eigen().eigenvalues.min()
    }

    proptest! {
        #[test]
        fn icm_gram_is_psd(
            pts in prop::collection::vec((0usize..3, prop::array::uniform3(0.0f64..1.0)), 1..12),
            factor in prop::collection::vec(-2.0f64..2.0, 6),
            ls in prop::array::uniform3(0.05f64..3.0),
            var in 0.1f64..5.0,
        ) {
            let b = build_task_covariance(DMatrix::from_row_slice(3, 2, &factor));
            let h = SpatialHyperparams::new(var, ls.to_vec()).unwrap();
            let n = pts.len();
            let k = DMatrix::from_fn(n, n, |i, j| {
                icm_covariance(pts[i].0, &pts[i].1, pts[j].0, &pts[j].1, &b, &h).unwrap()
            });
            let scale = k.trace().max(1.0);
            prop_assert!(min_eig(&k) >= -1e-8 * scale);
            prop_assert!(min_eig(b.matrix()) >= -1e-10 * b.matrix().trace().max(1.0));
        }

        #[test]
        fn rbf_rescaling_invariance(
            x in prop::array::uniform2(-2.0f64..2.0),
            y in prop::array::uniform2(-2.0f64..2.0),
            c in 0.1f64..10.0,
        ) {
            let h = SpatialHyperparams::new(1.3, vec![0.7, 1.9]).unwrap();
            let h2 = SpatialHyperparams::new(1.3, vec![0.7 * c, 1.9]).unwrap();
            let a = rbf_covariance(&x, &y, &h).unwrap();
            let b = rbf_covariance(&[x[0] * c, x[1]], &[y[0] * c, y[1]], &h2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(a > 0.0 && a <= 1.3);
            prop_assert_eq!(a, rbf_covariance(&y, &x, &h).unwrap());
        }

        #[test]
        fn pack_unpack_round_trip(
            var in 1e-3f64..1e3,
            ls in prop::collection::vec(1e-2f64..1e2, 3),
            tp in prop::collection::vec(-3.0f64..3.0, 5),
            off in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            let layout = HyperparamLayout::new(3, TaskStructure::BatchComposite { batches: 3 }).unwrap();
            let spatial = SpatialHyperparams::new(var, ls).unwrap();
            let v = HyperparamVector::pack(layout, &spatial, &tp, &off).unwrap();
            let back = v.spatial();
            prop_assert!((back.output_variance() - var).abs() <= 4.0 * f64::EPSILON * var);
            for (a, b) in back.lengthscales().iter().zip(spatial.lengthscales()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b);
            }
            prop_assert_eq!(v.task_params(), &tp[..]);
            prop_assert_eq!(v.offset_params(), &off[..]);
            let again = HyperparamVector::pack(layout, &back, v.task_params(), v.offset_params()).unwrap();
            for (a, b) in again.values().iter().zip(v.values()) {
                prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
            }
        }
    }
}
