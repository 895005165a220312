//! Symbolic operator expressions and their dense realization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg::{dagger, identity, ComplexMatrix, C64, I, ONE, ZERO};

/// A complex scalar written either as a bare real number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> C64 {
        match self {
            Scalar::Real(r) => C64::new(r, 0.0),
            Scalar::Complex([re, im]) => C64::new(re, im),
        }
    }
}

impl From<f64> for Scalar {
    fn from(r: f64) -> Self {
        Scalar::Real(r)
    }
}

/// Dense matrix serialized as nested rows of `[re, im]` pairs.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_rows(rows: &MatrixRows) -> Result<ComplexMatrix, ModelError> {
    let n = rows.len();
    if n == 0 {
        return Err(ModelError::Expression("empty matrix".into()));
    }
    let cols = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(ModelError::DimensionMismatch {
            context: "dense matrix rows".into(),
            left: cols,
            right: bad.len(),
        });
    }
    Ok(Array2::from_shape_fn((n, cols), |(i, j)| {
        let [re, im] = rows[i][j];
        C64::new(re, im)
    }))
}

pub fn matrix_to_rows(m: &ComplexMatrix) -> MatrixRows {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

/// Operator expression tree.
///
/// JSON form is internally tagged by `op`, e.g.
/// `{"op": "scale", "factor": 0.5, "expr": {"op": "pauli_x"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OperatorExpr {
    Identity { dim: usize },
    /// Truncated bosonic lowering operator, `a|n⟩ = √n |n−1⟩`.
    Annihilation { dim: usize },
    PauliX,
    PauliY,
    PauliZ,
    /// `|i⟩⟨j|` in dimension `dim`.
    Projector { i: usize, j: usize, dim: usize },
    Scale { factor: Scalar, expr: Box<OperatorExpr> },
    Sum { terms: Vec<OperatorExpr> },
    Product { factors: Vec<OperatorExpr> },
    Adjoint { expr: Box<OperatorExpr> },
    Dense { matrix: MatrixRows },
}

impl OperatorExpr {
    pub fn scale(factor: impl Into<Scalar>, expr: OperatorExpr) -> Self {
        OperatorExpr::Scale {
            factor: factor.into(),
            expr: Box::new(expr),
        }
    }

    pub fn adjoint(expr: OperatorExpr) -> Self {
        OperatorExpr::Adjoint {
            expr: Box::new(expr),
        }
    }

    pub fn product(factors: Vec<OperatorExpr>) -> Self {
        OperatorExpr::Product { factors }
    }

    pub fn sum(terms: Vec<OperatorExpr>) -> Self {
        OperatorExpr::Sum { terms }
    }

    pub fn dense(m: &ComplexMatrix) -> Self {
        OperatorExpr::Dense {
            matrix: matrix_to_rows(m),
        }
    }

    /// Parse from a JSON value. Unknown `op` tags surface as
    /// [`ModelError::UnknownPrimitive`].
    pub fn from_json(value: &serde_json::Value) -> Result<Self, ModelError> {
        serde_json::from_value(value.clone()).map_err(|e| classify_parse_error(value, e))
    }
}

fn classify_parse_error(value: &serde_json::Value, e: serde_json::Error) -> ModelError {
    if let Some(name) = find_unknown_tag(value) {
        ModelError::UnknownPrimitive(name)
    } else {
        ModelError::Expression(e.to_string())
    }
}

const KNOWN_TAGS: &[&str] = &[
    "identity",
    "annihilation",
    "pauli_x",
    "pauli_y",
    "pauli_z",
    "projector",
    "scale",
    "sum",
    "product",
    "adjoint",
    "dense",
];

fn find_unknown_tag(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::Object(map) => {
            if let Some(serde_json::Value::String(tag)) = map.get("op") {
                if !KNOWN_TAGS.contains(&tag.as_str()) {
                    return Some(tag.clone());
                }
            }
            map.values().find_map(find_unknown_tag)
        }
        serde_json::Value::Array(items) => items.iter().find_map(find_unknown_tag),
        _ => None,
    }
}

/// Realize an expression as a dense matrix.
pub fn build_operator(expr: &OperatorExpr) -> Result<ComplexMatrix, ModelError> {
    use OperatorExpr::*;
    let m = match expr {
        Identity { dim } => {
            check_dim(*dim)?;
            identity(*dim)
        }
        Annihilation { dim } => {
            check_dim(*dim)?;
            let mut a = ComplexMatrix::zeros((*dim, *dim));
            for n in 1..*dim {
                a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
            }
            a
        }
        PauliX => ndarray::array![[ZERO, ONE], [ONE, ZERO]],
        PauliY => ndarray::array![[ZERO, -I], [I, ZERO]],
        PauliZ => ndarray::array![[ONE, ZERO], [ZERO, -ONE]],
        Projector { i, j, dim } => {
            check_dim(*dim)?;
            if *i >= *dim || *j >= *dim {
                return Err(ModelError::Expression(format!(
                    "projector index ({i},{j}) out of range for dimension {dim}"
                )));
            }
            let mut p = ComplexMatrix::zeros((*dim, *dim));
            p[[*i, *j]] = ONE;
            p
        }
        Scale { factor, expr } => build_operator(expr)? * factor.value(),
        Sum { terms } => {
            let mut iter = terms.iter();
            let first = iter
                .next()
                .ok_or_else(|| ModelError::Expression("empty sum".into()))?;
            let mut acc = build_operator(first)?;
            for t in iter {
                let m = build_operator(t)?;
                same_shape("sum", &acc, &m)?;
                acc = acc + m;
            }
            acc
        }
        Product { factors } => {
            let mut iter = factors.iter();
            let first = iter
                .next()
                .ok_or_else(|| ModelError::Expression("empty product".into()))?;
            let mut acc = build_operator(first)?;
            for f in iter {
                let m = build_operator(f)?;
                if acc.ncols() != m.nrows() {
                    return Err(ModelError::DimensionMismatch {
                        context: "product".into(),
                        left: acc.ncols(),
                        right: m.nrows(),
                    });
                }
                acc = acc.dot(&m);
            }
            acc
        }
        Adjoint { expr } => dagger(&build_operator(expr)?),
        Dense { matrix } => matrix_from_rows(matrix)?,
    };
    Ok(m)
}

fn check_dim(d: usize) -> Result<(), ModelError> {
    if d == 0 {
        Err(ModelError::Expression("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn same_shape(ctx: &str, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<(), ModelError> {
    if a.dim() != b.dim() {
        return Err(ModelError::DimensionMismatch {
            context: ctx.into(),
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use proptest::prelude::*;

    #[test]
    fn annihilation_two_levels() {
        let a = build_operator(&OperatorExpr::Annihilation { dim: 2 }).unwrap();
        assert_eq!(a, ndarray::array![[ZERO, ONE], [ZERO, ZERO]]);
    }

    #[test]
    fn pauli_z_is_diag() {
        let z = build_operator(&OperatorExpr::PauliZ).unwrap();
        assert_eq!(z, ndarray::array![[ONE, ZERO], [ZERO, -ONE]]);
    }

    #[test]
    fn number_operator_from_ladder() {
        let a = OperatorExpr::Annihilation { dim: 3 };
        let n = OperatorExpr::product(vec![OperatorExpr::adjoint(a.clone()), a]);
        let m = build_operator(&n).unwrap();
        let expected = ComplexMatrix::from_diag(&ndarray::arr1(&[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0),
        ]));
        assert!(max_abs_diff(&m, &expected) < 1e-15);
    }

    #[test]
    fn mismatched_sum_is_rejected() {
        let e = OperatorExpr::sum(vec![OperatorExpr::PauliX, OperatorExpr::Identity { dim: 3 }]);
        assert!(matches!(
            build_operator(&e),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mismatched_product_is_rejected() {
        let e = OperatorExpr::product(vec![
            OperatorExpr::Annihilation { dim: 4 },
            OperatorExpr::PauliZ,
        ]);
        assert!(matches!(
            build_operator(&e),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unknown_primitive_is_named() {
        let v = serde_json::json!({"op": "sum", "terms": [{"op": "pauli_q"}]});
        assert_eq!(
            OperatorExpr::from_json(&v),
            Err(ModelError::UnknownPrimitive("pauli_q".into()))
        );
    }

    #[test]
    fn json_form_parses() {
        let v = serde_json::json!({
            "op": "scale", "factor": [0.0, 1.0],
            "expr": {"op": "projector", "i": 1, "j": 0, "dim": 2}
        });
        let e = OperatorExpr::from_json(&v).unwrap();
        let m = build_operator(&e).unwrap();
        assert_eq!(m[[1, 0]], I);
    }

    fn leaf() -> impl Strategy<Value = OperatorExpr> {
        prop_oneof![
            Just(OperatorExpr::PauliX),
            Just(OperatorExpr::PauliY),
            Just(OperatorExpr::PauliZ),
            Just(OperatorExpr::Annihilation { dim: 2 }),
            Just(OperatorExpr::Identity { dim: 2 }),
            (0usize..2, 0usize..2).prop_map(|(i, j)| OperatorExpr::Projector { i, j, dim: 2 }),
        ]
    }

    fn expr() -> impl Strategy<Value = OperatorExpr> {
        leaf().prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                ((-2.0f64..2.0), (-2.0f64..2.0), inner.clone()).prop_map(|(re, im, e)| {
                    OperatorExpr::scale(Scalar::Complex([re, im]), e)
                }),
                prop::collection::vec(inner.clone(), 1..3).prop_map(OperatorExpr::sum),
                prop::collection::vec(inner.clone(), 1..3).prop_map(OperatorExpr::product),
                inner.prop_map(OperatorExpr::adjoint),
            ]
        })
    }

    proptest! {
        #[test]
        fn adjoint_is_conjugate_transpose(e in expr()) {
            let m = build_operator(&e).unwrap();
            let adj = build_operator(&OperatorExpr::adjoint(e)).unwrap();
            prop_assert!(max_abs_diff(&adj, &dagger(&m)) == 0.0);
        }
    }
}
