use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::NodeClass;

/// `D` records of prices, demands and features, one row per record.
///
/// Node indices follow the network layout: prices first, then demands, then
/// features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() || x.nrows() != z.nrows() {
            return Err(Error::Dimension(format!(
                "row counts differ: x {}, y {}, z {}",
                x.nrows(),
                y.nrows(),
                z.nrows()
            )));
        }
        if x.iter().chain(y.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Dataset { x, y, z })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn products(&self) -> usize {
        self.x.ncols()
    }

    pub fn targets(&self) -> usize {
        self.y.ncols()
    }

    pub fn features(&self) -> usize {
        self.z.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.products() + self.targets() + self.features()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn class_of(&self, node: usize) -> NodeClass {
        let (m, n) = (self.products(), self.targets());
        if node < m {
            NodeClass::Decision
        } else if node < m + n {
            NodeClass::Target
        } else {
            NodeClass::External
        }
    }

    pub fn nodes_of(&self, class: NodeClass) -> Vec<usize> {
        let (m, n, k) = (self.products(), self.targets(), self.features());
        match class {
            NodeClass::Decision => (0..m).collect(),
            NodeClass::Target => (m..m + n).collect(),
            NodeClass::External => (m + n..m + n + k).collect(),
        }
    }

    /// Node index of external feature `k`.
    pub fn feature_node(&self, k: usize) -> usize {
        self.products() + self.targets() + k
    }

    /// All observations of one node.
    pub fn series(&self, node: usize) -> DVector<f64> {
        let (m, n) = (self.products(), self.targets());
        if node < m {
            self.x.column(node).into_owned()
        } else if node < m + n {
            self.y.column(node - m).into_owned()
        } else {
            self.z.column(node - m - n).into_owned()
        }
    }

    /// Nodes-by-records matrix for the given nodes.
    pub fn node_matrix(&self, nodes: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(nodes.len(), self.len());
        for (i, &v) in nodes.iter().enumerate() {
            out.row_mut(i).copy_from(&self.series(v).transpose());
        }
        out
    }

    pub fn labels(&self) -> Vec<String> {
        let (m, n, k) = (self.products(), self.targets(), self.features());
        (1..=m)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("y{i}")))
            .chain((1..=k).map(|i| format!("z{i}")))
            .collect()
    }

    /// Records at the given row indices, repeats allowed.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |mat: &DMatrix<f64>| DMatrix::from_fn(rows.len(), mat.ncols(), |i, j| mat[(rows[i], j)]);
        Dataset {
            x: pick(&self.x),
            y: pick(&self.y),
            z: pick(&self.z),
        }
    }

    /// First `d` records.
    pub fn head(&self, d: usize) -> Dataset {
        let rows: Vec<usize> = (0..d.min(self.len())).collect();
        self.select_rows(&rows)
    }

    /// Writes a CSV with header `x1..xM,y1..yN,z1..zK`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.labels())?;
        for d in 0..self.len() {
            let row = self
                .x
                .row(d)
                .iter()
                .chain(self.y.row(d).iter())
                .chain(self.z.row(d).iter())
                .map(|v| v.to_string())
                .collect::<Vec<_>>();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut input = csv::Reader::from_reader(r);
        let header = input.headers()?.clone();
        let mut counts = [0usize; 3];
        let mut stage = 0;
        for (col, name) in header.iter().enumerate() {
            let name = name.trim();
            let slot = match name.get(..1) {
                Some("x") => Some(0),
                Some("y") => Some(1),
                Some("z") => Some(2),
                _ => None,
            };
            let ok = slot.is_some_and(|s| {
                s >= stage && name[1..].parse::<usize>().ok() == Some(counts[s] + 1)
            });
            let Some(slot) = slot.filter(|_| ok) else {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!(
                        "column {} is `{name}`, expected x1..xM,y1..yN,z1..zK",
                        col + 1
                    ),
                });
            };
            stage = slot;
            counts[slot] += 1;
        }
        let [m, n, k] = counts;
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (i, record) in input.records().enumerate() {
            let record = record?;
            if record.len() != m + n + k {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!("expected {} fields, got {}", m + n + k, record.len()),
                });
            }
            let row = record
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 2,
                        msg: format!("`{f}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        let d = values.len();
        let block = |offset: usize, width: usize| DMatrix::from_fn(d, width, |i, j| values[i][offset + j]);
        Dataset::new(block(0, m), block(m, n), block(m + n, k))
    }
}
