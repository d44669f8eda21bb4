//! Least-squares fit of the linear demand model `y = A x + b + C z_kappa`.
//!
//! Design columns are `[x_1..x_M, z_kappa, 1]`. Columns that are bitwise
//! identical are merged before solving, and the merged coefficient is split
//! evenly across the copies; this is exactly the minimum-norm solution on the
//! duplicated design. The remaining system is solved by an SVD pseudo-inverse.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    a_hat: DMatrix<f64>,
    b_hat: DVector<f64>,
    c_hat: DMatrix<f64>,
    kappa: Vec<usize>,
    /// Design-column indices merged into each coefficient column of `coef`.
    groups: Vec<Vec<usize>>,
    /// `N x groups.len()`.
    coef: DMatrix<f64>,
    rank_deficient: bool,
}

/// JSON form of a [`LinearModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    /// Rows of `A_hat` (targets by decisions).
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Rows of `C_hat` (targets by selected features).
    pub c: Vec<Vec<f64>>,
    pub kappa: Vec<usize>,
    #[serde(default)]
    pub rank_deficient: bool,
    /// Merged design columns; omitted means every column stands alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<usize>>>,
    /// Rows of the merged coefficient matrix, present with `groups`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef: Option<Vec<Vec<f64>>>,
}

fn rows_of(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], cols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("rows of {name} must have length {cols}")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl LinearModel {
    /// Model with the given coefficients and no merged columns.
    pub fn new(
        a_hat: DMatrix<f64>,
        b_hat: DVector<f64>,
        c_hat: DMatrix<f64>,
        kappa: Vec<usize>,
    ) -> Result<LinearModel> {
        let (n, m) = a_hat.shape();
        if b_hat.len() != n || c_hat.nrows() != n || c_hat.ncols() != kappa.len() {
            return Err(Error::Dimension(format!(
                "expected b of length {n} and C of shape {n}x{}",
                kappa.len()
            )));
        }
        let all = a_hat.iter().chain(b_hat.iter()).chain(c_hat.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite model coefficient".into()));
        }
        let width = m + kappa.len() + 1;
        let mut coef = DMatrix::zeros(n, width);
        coef.columns_mut(0, m).copy_from(&a_hat);
        coef.columns_mut(m, kappa.len()).copy_from(&c_hat);
        coef.column_mut(width - 1).copy_from(&b_hat);
        Ok(LinearModel {
            a_hat,
            b_hat,
            c_hat,
            kappa,
            groups: (0..width).map(|j| vec![j]).collect(),
            coef,
            rank_deficient: false,
        })
    }

    fn from_merged(
        n: usize,
        m: usize,
        kappa: Vec<usize>,
        groups: Vec<Vec<usize>>,
        coef: DMatrix<f64>,
        rank_deficient: bool,
    ) -> Result<LinearModel> {
        let width = m + kappa.len() + 1;
        let mut seen = vec![false; width];
        for j in groups.iter().flatten() {
            if *j >= width || std::mem::replace(&mut seen[*j], true) {
                return Err(Error::InvalidInput("groups must partition the design columns".into()));
            }
        }
        if seen.contains(&false) || groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("groups must partition the design columns".into()));
        }
        if coef.shape() != (n, groups.len()) {
            return Err(Error::Dimension("coefficient matrix does not match groups".into()));
        }
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite model coefficient".into()));
        }
        let mut full = DMatrix::zeros(n, width);
        for (g, members) in groups.iter().enumerate() {
            let share = coef.column(g) / members.len() as f64;
            for &j in members {
                full.column_mut(j).copy_from(&share);
            }
        }
        Ok(LinearModel {
            a_hat: full.columns(0, m).into_owned(),
            b_hat: full.column(width - 1).into_owned(),
            c_hat: full.columns(m, kappa.len()).into_owned(),
            kappa,
            groups,
            coef,
            rank_deficient,
        })
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &DVector<f64> {
        &self.b_hat
    }

    pub fn c_hat(&self) -> &DMatrix<f64> {
        &self.c_hat
    }

    pub fn kappa(&self) -> &[usize] {
        &self.kappa
    }

    pub fn products(&self) -> usize {
        self.a_hat.ncols()
    }

    pub fn targets(&self) -> usize {
        self.a_hat.nrows()
    }

    /// True when the design had fewer independent columns than regressors.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// `A_hat x + b_hat + C_hat z_kappa`, evaluated through the merged columns
    /// so that duplicated inputs give bitwise-identical predictions.
    pub fn predict(&self, x: &DVector<f64>, z_kappa: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.products() || z_kappa.len() != self.kappa.len() {
            return Err(Error::Dimension(format!(
                "expected x of length {} and z_kappa of length {}",
                self.products(),
                self.kappa.len()
            )));
        }
        let m = self.products();
        let value = |j: usize| {
            if j < m {
                x[j]
            } else if j < m + self.kappa.len() {
                z_kappa[j - m]
            } else {
                1.0
            }
        };
        let merged = DVector::from_iterator(
            self.groups.len(),
            self.groups.iter().map(|members| {
                let first = value(members[0]);
                if members.iter().all(|&j| value(j).to_bits() == first.to_bits()) {
                    first
                } else {
                    members.iter().map(|&j| value(j)).sum::<f64>() / members.len() as f64
                }
            }),
        );
        Ok(&self.coef * merged)
    }

    pub fn record(&self) -> ModelRecord {
        let trivial = self.groups.iter().enumerate().all(|(g, m)| m.len() == 1 && m[0] == g);
        ModelRecord {
            a: rows_of(&self.a_hat),
            b: self.b_hat.iter().copied().collect(),
            c: rows_of(&self.c_hat),
            kappa: self.kappa.clone(),
            rank_deficient: self.rank_deficient,
            groups: (!trivial).then(|| self.groups.clone()),
            coef: (!trivial).then(|| rows_of(&self.coef)),
        }
    }

    pub fn from_record(rec: &ModelRecord) -> Result<LinearModel> {
        let n = rec.b.len();
        let m = rec.a.first().map_or(0, Vec::len);
        if rec.a.len() != n || rec.c.len() != n {
            return Err(Error::Dimension("A and C need one row per target".into()));
        }
        let a = matrix_of(&rec.a, m, "A")?;
        let c = matrix_of(&rec.c, rec.kappa.len(), "C")?;
        let b = DVector::from_vec(rec.b.clone());
        match (&rec.groups, &rec.coef) {
            (Some(groups), Some(coef)) => {
                let coef = matrix_of(coef, groups.len(), "coef")?;
                if coef.nrows() != n {
                    return Err(Error::Dimension("coef needs one row per target".into()));
                }
                LinearModel::from_merged(n, m, rec.kappa.clone(), groups.clone(), coef, rec.rank_deficient)
            }
            (None, None) => {
                let mut model = LinearModel::new(a, b, c, rec.kappa.clone())?;
                model.rank_deficient = rec.rank_deficient;
                Ok(model)
            }
            _ => Err(Error::InvalidInput("groups and coef must appear together".into())),
        }
    }
}

/// Design matrix `[x, z_kappa, 1]`, one row per record.
pub fn design_matrix(data: &Dataset, kappa: &[usize]) -> Result<DMatrix<f64>> {
    let (m, k) = (data.products(), data.features());
    if let Some(&bad) = kappa.iter().find(|&&kk| kk >= k) {
        return Err(Error::InvalidInput(format!("feature {bad} out of range")));
    }
    let width = m + kappa.len() + 1;
    Ok(DMatrix::from_fn(data.len(), width, |d, j| {
        if j < m {
            data.x()[(d, j)]
        } else if j < width - 1 {
            data.z()[(d, kappa[j - m])]
        } else {
            1.0
        }
    }))
}

fn merge_identical_columns(design: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'cols: for j in 0..design.ncols() {
        for g in groups.iter_mut() {
            let same = design
                .column(g[0])
                .iter()
                .zip(design.column(j).iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if same {
                g.push(j);
                continue 'cols;
            }
        }
        groups.push(vec![j]);
    }
    groups
}

/// Least-squares fit of every target on `[x, z_kappa, 1]`.
pub fn fit(data: &Dataset, kappa: &[usize]) -> Result<LinearModel> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot fit on an empty dataset".into()));
    }
    let design = design_matrix(data, kappa)?;
    let groups = merge_identical_columns(&design);
    let reduced = DMatrix::from_fn(design.nrows(), groups.len(), |d, g| design[(d, groups[g][0])]);

    let svd = SVD::new(reduced.clone(), true, true);
    let largest = svd.singular_values.max();
    let cutoff = largest * f64::EPSILON * reduced.nrows().max(reduced.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    // solves reduced * beta = y for every target column at once
    let beta = svd
        .solve(data.y(), cutoff)
        .map_err(|e| Error::InvalidInput(format!("least squares failed: {e}")))?;
    let rank_deficient = rank < groups.len() || groups.len() < design.ncols();

    LinearModel::from_merged(
        data.targets(),
        data.products(),
        kappa.to_vec(),
        groups,
        beta.transpose(),
        rank_deficient,
    )
}
