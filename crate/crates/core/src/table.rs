use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("column {column} has {len} rows, expected {n}")]
    Length { column: String, len: usize, n: usize },
    #[error("column {column} row {row}: value {value} is not binary")]
    NotBinary { column: String, row: usize, value: u8 },
}

/// Observed and interventional feature columns under `do(S = 1)` and `do(S = 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interventional {
    pub x_pos: Tensor,
    pub x_neg: Tensor,
    pub y_pos: Vec<u8>,
    pub y_neg: Vec<u8>,
}

/// Exogenous draws kept by the generator so interventions can replay them.
#[derive(Debug, Clone, PartialEq)]
pub struct Exogenous {
    pub base: Tensor,
    pub noise: Tensor,
}

/// Per-node records: sensitive attribute, covariates, features and label.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub s: Vec<u8>,
    pub z: Tensor,
    pub x: Tensor,
    pub y: Vec<u8>,
    pub z_names: Vec<String>,
    pub x_names: Vec<String>,
    pub interventional: Option<Interventional>,
    pub exogenous: Option<Exogenous>,
}

impl NodeTable {
    pub fn new(s: Vec<u8>, z: Tensor, x: Tensor, y: Vec<u8>) -> Result<Self, TableError> {
        let z_names = (0..z.cols()).map(|j| format!("z{j}")).collect();
        let x_names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        let table = Self {
            s,
            z,
            x,
            y,
            z_names,
            x_names,
            interventional: None,
            exogenous: None,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let n = self.s.len();
        let mut lengths = vec![
            ("z", self.z.rows()),
            ("x", self.x.rows()),
            ("y", self.y.len()),
        ];
        if let Some(iv) = &self.interventional {
            lengths.extend([
                ("x_pos", iv.x_pos.rows()),
                ("x_neg", iv.x_neg.rows()),
                ("y_pos", iv.y_pos.len()),
                ("y_neg", iv.y_neg.len()),
            ]);
        }
        for (column, len) in lengths {
            if len != n {
                return Err(TableError::Length {
                    column: column.into(),
                    len,
                    n,
                });
            }
        }
        for (column, values) in [("s", &self.s), ("y", &self.y)] {
            if let Some((row, &value)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(TableError::NotBinary {
                    column: column.into(),
                    row,
                    value,
                });
            }
        }
        Ok(())
    }

    /// Indices of nodes with `s == value`.
    pub fn group(&self, value: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.s[i] == value).collect()
    }

    /// Node-level relabeling: row `i` moves to row `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        let u8s = |v: &[u8]| inverse.iter().map(|&o| v[o]).collect::<Vec<u8>>();
        Self {
            s: u8s(&self.s),
            z: self.z.select_rows(&inverse),
            x: self.x.select_rows(&inverse),
            y: u8s(&self.y),
            z_names: self.z_names.clone(),
            x_names: self.x_names.clone(),
            interventional: self.interventional.as_ref().map(|iv| Interventional {
                x_pos: iv.x_pos.select_rows(&inverse),
                x_neg: iv.x_neg.select_rows(&inverse),
                y_pos: u8s(&iv.y_pos),
                y_neg: u8s(&iv.y_neg),
            }),
            exogenous: self.exogenous.as_ref().map(|ex| Exogenous {
                base: ex.base.select_rows(&inverse),
                noise: ex.noise.select_rows(&inverse),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_non_binary() {
        let x = Tensor::zeros(2, 1);
        assert!(matches!(
            NodeTable::new(vec![0, 1], Tensor::zeros(2, 0), x.clone(), vec![0]),
            Err(TableError::Length { .. })
        ));
        assert_eq!(
            NodeTable::new(vec![0, 2], Tensor::zeros(2, 0), x, vec![0, 1]).unwrap_err(),
            TableError::NotBinary {
                column: "s".into(),
                row: 1,
                value: 2
            }
        );
    }

    #[test]
    fn permute_moves_rows() {
        let x = Tensor::column(vec![10.0, 11.0, 12.0]);
        let t = NodeTable::new(vec![0, 1, 1], Tensor::zeros(3, 0), x, vec![1, 0, 0]).unwrap();
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.s, vec![1, 1, 0]);
        assert_eq!(p.x.data(), &[11.0, 12.0, 10.0]);
        assert_eq!(p.y, vec![0, 0, 1]);
    }
}
