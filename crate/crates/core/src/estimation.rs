//! Position estimation from noisy relative measurements `z_ij = x_i - x_j + e_ij`.
//!
//! Vector positions are handled through the Kronecker lift `H (x) I_d`; the
//! covariance `P` is indexed by (edge, coordinate) pairs in edge-major order.
//! The unanchored forms (`ls_estimate`, `blue_estimate`) have a translation
//! gauge freedom and return the minimum-norm solution. `anchored_blue` pins
//! the reference agent and is the form used by the simulation loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{components, spd_cholesky, IncidenceMatrix, RANK_TOLERANCE};

/// Largest admissible condition number of the anchored normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    dim: usize,
    edges: Vec<(usize, usize)>,
    values: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl MeasurementSet {
    pub fn new(
        dim: usize,
        edges: Vec<(usize, usize)>,
        values: &[DVector<f64>],
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        if values.len() != edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} measurement values for {} edges",
                values.len(),
                edges.len()
            )));
        }
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "measurements must be {dim}-vectors"
            )));
        }
        let rows = edges.len() * dim;
        if covariance.nrows() != rows || covariance.ncols() != rows {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected {rows}x{rows}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let values = DVector::from_iterator(rows, values.iter().flat_map(|v| v.iter().copied()));
        Ok(MeasurementSet {
            dim,
            edges,
            values,
            covariance,
        })
    }

    /// Block-diagonal covariance `variance_e * I_d` per edge.
    pub fn isotropic(
        dim: usize,
        edges: Vec<(usize, usize)>,
        values: &[DVector<f64>],
        variances: &[f64],
    ) -> Result<Self> {
        if variances.len() != edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} variances for {} edges",
                variances.len(),
                edges.len()
            )));
        }
        let diag = DVector::from_iterator(
            edges.len() * dim,
            variances
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, dim)),
        );
        MeasurementSet::new(dim, edges, values, DMatrix::from_diagonal(&diag))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Stacked values, edge-major.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn value(&self, e: usize) -> DVector<f64> {
        self.values.rows(e * self.dim, self.dim).into_owned()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn check_against(&self, h: &IncidenceMatrix) -> Result<()> {
        if h.rows() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "incidence has {} rows, measurement set has {} edges",
                h.rows(),
                self.edges.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedIncidence {
    /// Columns of the non-reference agents, ascending agent order.
    pub reduced: DMatrix<f64>,
    /// Column of the reference agent.
    pub reference_column: DVector<f64>,
    pub reference: usize,
    /// Agent index of each column of `reduced`.
    pub others: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl PartitionedIncidence {
    pub fn agents(&self) -> usize {
        self.others.len() + 1
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Undoes the column split.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(self.reduced.nrows(), self.agents());
        full.set_column(self.reference, &self.reference_column);
        for (col, &agent) in self.others.iter().enumerate() {
            full.set_column(agent, &self.reduced.column(col));
        }
        full
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    dim: usize,
    positions: DVector<f64>,
    covariance: DMatrix<f64>,
    /// Block row of each agent in `covariance`; `None` for the anchor.
    blocks: Vec<Option<usize>>,
    pub epoch: u64,
}

impl Estimate {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn positions(&self) -> &DVector<f64> {
        &self.positions
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.positions.as_slice()[i * self.dim..(i + 1) * self.dim]
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn covariance_trace(&self) -> f64 {
        self.covariance.trace()
    }

    /// `x̂_i - x̂_j`.
    pub fn displacement(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.agent(i).iter().zip(self.agent(j)).map(|(a, b)| a - b),
        )
    }

    /// Per-coordinate variance of `x̂_i - x̂_j`, averaged over coordinates.
    pub fn displacement_variance(&self, i: usize, j: usize) -> f64 {
        let d = self.dim;
        let block = |a: Option<usize>, b: Option<usize>| -> f64 {
            match (a, b) {
                (Some(a), Some(b)) => (0..d)
                    .map(|k| self.covariance[(a * d + k, b * d + k)])
                    .sum(),
                _ => 0.0,
            }
        };
        let (bi, bj) = (self.blocks[i], self.blocks[j]);
        let total = block(bi, bi) + block(bj, bj) - block(bi, bj) - block(bj, bi);
        (total / d as f64).max(0.0)
    }
}

fn lift(matrix: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    matrix.kronecker(&DMatrix::identity(dim, dim))
}

fn pseudo_inverse(matrix: DMatrix<f64>) -> DMatrix<f64> {
    let svd = matrix.svd(true, true);
    let eps = RANK_TOLERANCE * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps).expect("u and v were computed")
}

/// Minimum-norm least-squares solution `x̂ = H^+ z` (unit noise).
pub fn ls_estimate(h: &IncidenceMatrix, z: &MeasurementSet) -> Result<Estimate> {
    z.check_against(h)?;
    let d = z.dim();
    let h_pinv = lift(&pseudo_inverse(h.matrix().clone()), d);
    let positions = &h_pinv * z.values();
    let covariance = lift(&pseudo_inverse(h.matrix().transpose() * h.matrix()), d);
    Ok(Estimate {
        dim: d,
        positions,
        covariance,
        blocks: (0..h.agents()).map(Some).collect(),
        epoch: 0,
    })
}

/// Minimum-norm solution of the weighted normal equations
/// `(H^T P^-1 H) x̂ = H^T P^-1 z`.
pub fn blue_estimate(h: &IncidenceMatrix, z: &MeasurementSet) -> Result<Estimate> {
    z.check_against(h)?;
    let d = z.dim();
    let chol = spd_cholesky(z.covariance())?;
    let hk = lift(h.matrix(), d);
    let weighted = chol.solve(&hk);
    let normal = hk.transpose() * &weighted;
    let normal = (&normal + normal.transpose()) * 0.5;
    let rhs = weighted.transpose() * z.values();
    let covariance = pseudo_inverse(normal);
    let positions = &covariance * rhs;
    Ok(Estimate {
        dim: d,
        positions,
        covariance,
        blocks: (0..h.agents()).map(Some).collect(),
        epoch: 0,
    })
}

pub fn partition_incidence(h: &IncidenceMatrix, reference: usize) -> Result<PartitionedIncidence> {
    let n = h.agents();
    if reference >= n {
        return Err(Error::AgentOutOfRange {
            index: reference,
            agents: n,
        });
    }
    let others: Vec<usize> = (0..n).filter(|&a| a != reference).collect();
    let reduced = DMatrix::from_fn(h.rows(), others.len(), |r, c| h.matrix()[(r, others[c])]);
    Ok(PartitionedIncidence {
        reduced,
        reference_column: h.matrix().column(reference).into_owned(),
        reference,
        others,
        edges: h.edges().to_vec(),
    })
}

/// Anchored BLUE: `x̂_b = (H_b^T P^-1 H_b)^-1 H_b^T P^-1 (z - H_r x_r)` with
/// covariance `(H_b^T P^-1 H_b)^-1`. The reference keeps `x_r` exactly.
pub fn anchored_blue(
    part: &PartitionedIncidence,
    reference_position: &[f64],
    z: &MeasurementSet,
) -> Result<Estimate> {
    let d = z.dim();
    let m = z.edge_count();
    let n = part.agents();
    if part.reduced.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "incidence has {} rows, measurement set has {m} edges",
            part.reduced.nrows()
        )));
    }
    if reference_position.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "reference position has {} coordinates, expected {d}",
            reference_position.len()
        )));
    }

    let comps = components(n, z.edges().iter().copied());
    if comps.len() > 1 {
        let unreachable: Vec<usize> = comps
            .iter()
            .filter(|c| !c.contains(&part.reference))
            .flatten()
            .map(|v| v + 1)
            .collect();
        return Err(Error::RankDeficient(format!(
            "agents {unreachable:?} have no measurement path to the reference"
        )));
    }

    let mut blocks = vec![None; n];
    for (col, &agent) in part.others.iter().enumerate() {
        blocks[agent] = Some(col);
    }
    let mut positions = DVector::zeros(n * d);
    positions
        .rows_mut(part.reference * d, d)
        .copy_from_slice(reference_position);
    if part.others.is_empty() {
        return Ok(Estimate {
            dim: d,
            positions,
            covariance: DMatrix::zeros(0, 0),
            blocks,
            epoch: 0,
        });
    }

    let p_chol = spd_cholesky(z.covariance())?;
    let hb = lift(&part.reduced, d);
    let anchor_term = DVector::from_fn(m * d, |row, _| {
        part.reference_column[row / d] * reference_position[row % d]
    });
    let weighted = p_chol.solve(&hb);
    let normal = hb.transpose() * &weighted;
    let normal = (&normal + normal.transpose()) * 0.5;
    let rhs = weighted.transpose() * (z.values() - anchor_term);

    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("normal matrix is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if lo.is_nan() || lo <= 0.0 || (hi / lo).powi(2) > MAX_CONDITION {
        return Err(Error::RankDeficient(format!(
            "condition estimate {:.3e} exceeds {MAX_CONDITION:e}",
            (hi / lo).powi(2)
        )));
    }
    // One step of iterative refinement on both the solution and the inverse.
    let mut estimate = chol.solve(&rhs);
    estimate += chol.solve(&(&rhs - &normal * &estimate));
    let mut covariance = chol.inverse();
    let identity = DMatrix::identity(normal.nrows(), normal.ncols());
    covariance += &covariance * (identity - &normal * &covariance);
    for (col, &agent) in part.others.iter().enumerate() {
        positions
            .rows_mut(agent * d, d)
            .copy_from(&estimate.rows(col * d, d));
    }
    Ok(Estimate {
        dim: d,
        positions,
        covariance: (&covariance + covariance.transpose()) * 0.5,
        blocks,
        epoch: 0,
    })
}
