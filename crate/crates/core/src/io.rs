//! JSON problem and model files.
//!
//! Matrices are row-major nested arrays. Floats are written in shortest
//! round-trip form, so reading a file back reproduces every value exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::{AmbiguityError, GelbrichBall};
use crate::matops::{matrix_from_rows, matrix_to_rows, Matrix, SymMatrix};
use crate::reduction::{
    AmbiguousReductionProblem, Certificate, DiscreteLtiSystem, ModelOrigin, RecoveryFactors,
    ReducedModel, ReductionError,
};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl FileError {
    fn field(field: &'static str, message: impl ToString) -> Self {
        FileError::Field {
            field,
            message: message.to_string(),
        }
    }
}

fn matrix(field: &'static str, rows: &Rows) -> Result<Matrix, FileError> {
    matrix_from_rows(rows).map_err(|e| FileError::field(field, e))
}

fn sym(field: &'static str, rows: &Rows) -> Result<SymMatrix, FileError> {
    SymMatrix::new(matrix(field, rows)?).map_err(|e| FileError::field(field, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<T, FileError> {
    let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Reduction problem: system, Gelbrich ball, target order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Q_bar")]
    pub q_bar: Rows,
    pub rho2: f64,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "Q_true", default, skip_serializing_if = "Option::is_none")]
    pub q_true: Option<Rows>,
}

/// Just the ball, for commands that need nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFile {
    #[serde(rename = "Q_bar")]
    pub q_bar: Rows,
    pub rho2: f64,
}

impl BallFile {
    pub fn ball(&self) -> Result<GelbrichBall, FileError> {
        let center = sym("Q_bar", &self.q_bar)?;
        GelbrichBall::new(center, self.rho2).map_err(|e| match e {
            AmbiguityError::InvalidRadius(_) => FileError::field("rho2", e),
            other => FileError::field("Q_bar", other),
        })
    }
}

impl ProblemFile {
    pub fn system(&self) -> Result<DiscreteLtiSystem, FileError> {
        let a = matrix("A", &self.a)?;
        let b = matrix("B", &self.b)?;
        let c = matrix("C", &self.c)?;
        let field = if !a.is_square() {
            "A"
        } else if b.nrows() != a.nrows() {
            "B"
        } else {
            "C"
        };
        DiscreteLtiSystem::new(a, b, c).map_err(|e| FileError::field(field, e))
    }

    pub fn ball(&self) -> Result<GelbrichBall, FileError> {
        BallFile {
            q_bar: self.q_bar.clone(),
            rho2: self.rho2,
        }
        .ball()
    }

    pub fn problem(&self) -> Result<AmbiguousReductionProblem, FileError> {
        let system = self.system()?;
        let ball = self.ball()?;
        AmbiguousReductionProblem::new(system, ball, self.r).map_err(|e| {
            let field = match e {
                ReductionError::InvalidOrder { .. } => "r",
                _ => "Q_bar",
            };
            FileError::field(field, e)
        })
    }

    pub fn q_true(&self) -> Result<Option<SymMatrix>, FileError> {
        self.q_true.as_ref().map(|rows| sym("Q_true", rows)).transpose()
    }

    pub fn epsilon(&self) -> Result<Option<f64>, FileError> {
        match self.epsilon {
            Some(e) if !(e.is_finite() && e > 0.0) => {
                Err(FileError::field("epsilon", format!("must be positive, got {e}")))
            }
            other => Ok(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub beta_star: f64,
    pub gamma_tilde_star: f64,
    pub psi_max_eig: f64,
    pub trace_slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmi_min_eig: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub epsilon: f64,
    #[serde(rename = "Q_eff")]
    pub q_eff: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dromor,
    BalancedTruncation,
}

/// A reduced model, its recovery factors, and its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: Method,
    #[serde(rename = "A_hat")]
    pub a_hat: Rows,
    #[serde(rename = "B_hat")]
    pub b_hat: Rows,
    #[serde(rename = "C_hat")]
    pub c_hat: Rows,
    #[serde(rename = "P1", default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Rows>,
    #[serde(rename = "P2", default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<Rows>,
    #[serde(rename = "P3", default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<Rows>,
    #[serde(rename = "Z1", default, skip_serializing_if = "Option::is_none")]
    pub z1: Option<Rows>,
    #[serde(rename = "T")]
    pub transform: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hankel_values: Option<Vec<f64>>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Rows>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateFile>,
}

impl ModelFile {
    pub fn from_model(model: &ReducedModel, cert: Option<&Certificate>) -> Self {
        let f = model.factors.as_ref();
        let (method, hankel_values, left, right) = match &model.origin {
            ModelOrigin::Dromor => (Method::Dromor, None, None, None),
            ModelOrigin::BalancedTruncation {
                hankel_values,
                left,
                right,
            } => (
                Method::BalancedTruncation,
                Some(hankel_values.clone()),
                Some(matrix_to_rows(left)),
                Some(matrix_to_rows(right)),
            ),
        };
        ModelFile {
            method,
            a_hat: matrix_to_rows(&model.a_hat),
            b_hat: matrix_to_rows(&model.b_hat),
            c_hat: matrix_to_rows(&model.c_hat),
            p1: f.map(|f| f.p1.to_rows()),
            p2: f.map(|f| matrix_to_rows(&f.p2)),
            p3: f.map(|f| f.p3.to_rows()),
            z1: f.map(|f| f.z1.to_rows()),
            transform: matrix_to_rows(&model.transform),
            hankel_values,
            left,
            right,
            certificate: cert.map(|c| CertificateFile {
                beta_star: c.beta_star,
                gamma_tilde_star: c.gamma_tilde_star,
                psi_max_eig: c.psi_max_eig,
                trace_slack: c.trace_slack,
                lmi_min_eig: c.lmi_min_eig,
                lambda: c.lambda,
                epsilon: c.epsilon,
                q_eff: c.q_eff.to_rows(),
            }),
        }
    }

    pub fn model(&self) -> Result<ReducedModel, FileError> {
        let factors = match (&self.p1, &self.p2, &self.p3, &self.z1) {
            (Some(p1), Some(p2), Some(p3), Some(z1)) => Some(RecoveryFactors {
                p1: sym("P1", p1)?,
                p2: matrix("P2", p2)?,
                p3: sym("P3", p3)?,
                z1: sym("Z1", z1)?,
            }),
            (None, None, None, None) => None,
            _ => {
                return Err(FileError::field(
                    "P1",
                    "P1, P2, P3 and Z1 must be given together",
                ))
            }
        };
        let origin = match self.method {
            Method::Dromor => ModelOrigin::Dromor,
            Method::BalancedTruncation => ModelOrigin::BalancedTruncation {
                hankel_values: self.hankel_values.clone().unwrap_or_default(),
                left: self.left.as_ref().map(|m| matrix("W", m)).transpose()?.unwrap_or_else(|| Matrix::zeros(0, 0)),
                right: self.right.as_ref().map(|m| matrix("V", m)).transpose()?.unwrap_or_else(|| Matrix::zeros(0, 0)),
            },
        };
        let model = ReducedModel {
            a_hat: matrix("A_hat", &self.a_hat)?,
            b_hat: matrix("B_hat", &self.b_hat)?,
            c_hat: matrix("C_hat", &self.c_hat)?,
            factors,
            transform: matrix("T", &self.transform)?,
            origin,
        };
        let r = model.a_hat.nrows();
        if !model.a_hat.is_square() {
            return Err(FileError::field("A_hat", "must be square"));
        }
        if model.b_hat.nrows() != r {
            return Err(FileError::field("B_hat", format!("needs {r} rows")));
        }
        if model.c_hat.ncols() != r {
            return Err(FileError::field("C_hat", format!("needs {r} columns")));
        }
        if !model.transform.is_square() {
            return Err(FileError::field("T", "must be square"));
        }
        Ok(model)
    }

    pub fn certificate(&self) -> Result<Option<Certificate>, FileError> {
        let Some(c) = &self.certificate else {
            return Ok(None);
        };
        let (Some(p1), Some(z1)) = (&self.p1, &self.z1) else {
            return Err(FileError::field("certificate", "requires P1 and Z1"));
        };
        Ok(Some(Certificate {
            beta_star: c.beta_star,
            gamma_tilde_star: c.gamma_tilde_star,
            q_eff: sym("certificate.Q_eff", &c.q_eff)?,
            p1: sym("P1", p1)?,
            z1: sym("Z1", z1)?,
            psi_max_eig: c.psi_max_eig,
            trace_slack: c.trace_slack,
            lmi_min_eig: c.lmi_min_eig,
            lambda: c.lambda,
            epsilon: c.epsilon,
        }))
    }
}
