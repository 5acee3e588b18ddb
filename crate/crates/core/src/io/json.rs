//! Complex numbers as [re, im], matrices as row-major arrays of rows.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::linalg::{ComplexMatrix, HermitianMatrix, C64};

/// Wire form of an n×n complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JsonMatrix(pub Vec<Vec<[f64; 2]>>);

impl JsonMatrix {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        JsonMatrix(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    /// None when the rows are ragged or the matrix is not square.
    pub fn to_matrix(&self) -> Option<ComplexMatrix> {
        let n = self.0.len();
        if n == 0 || self.0.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(ComplexMatrix::from_fn(n, n, |i, j| {
            let [re, im] = self.0[i][j];
            C64::new(re, im)
        }))
    }
}

impl From<&HermitianMatrix> for JsonMatrix {
    fn from(a: &HermitianMatrix) -> Self {
        JsonMatrix::from_matrix(a.matrix())
    }
}

pub fn complex(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn matrix(m: &ComplexMatrix) -> Value {
    serde_json::to_value(JsonMatrix::from_matrix(m)).expect("finite matrix serializes")
}

pub fn herm(a: &HermitianMatrix) -> Value {
    matrix(a.matrix())
}

/// JSON has no NaN or infinity; those become null.
pub fn real(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
