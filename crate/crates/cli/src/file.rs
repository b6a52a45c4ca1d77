use std::fs;
use std::path::Path;

use causalforge::{FactorLabel, LabeledOperator, ProcessMatrix, PureProcess, C64};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Matrix,
    Pure,
}

/// On-disk form of an operator or vector: factors, kind, and row-major
/// entries as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessFile {
    pub factors: Vec<FactorLabel>,
    pub kind: Kind,
    pub data: Vec<[f64; 2]>,
}

/// Contents of a file after validation.
#[derive(Clone, Debug)]
pub enum Loaded {
    Matrix(LabeledOperator),
    Pure(PureProcess),
}

fn pairs(data: &[C64]) -> Vec<[f64; 2]> {
    data.iter().map(|z| [z.re, z.im]).collect()
}

impl ProcessFile {
    pub fn from_operator(op: &LabeledOperator) -> Self {
        Self { factors: op.factors().to_vec(), kind: Kind::Matrix, data: pairs(op.data()) }
    }

    pub fn from_pure(v: &PureProcess) -> Self {
        Self { factors: v.factors().to_vec(), kind: Kind::Pure, data: pairs(v.data()) }
    }

    pub fn into_loaded(self) -> Result<Loaded, CliError> {
        let data: Vec<C64> = self.data.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        Ok(match self.kind {
            Kind::Matrix => Loaded::Matrix(LabeledOperator::new(self.factors, data)?),
            Kind::Pure => Loaded::Pure(PureProcess::new(self.factors, data)?),
        })
    }

    pub fn read(path: &Path) -> Result<Loaded, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: ProcessFile =
            serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        file.into_loaded()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string(self).map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

impl Loaded {
    pub fn operator(&self) -> LabeledOperator {
        match self {
            Loaded::Matrix(m) => m.clone(),
            Loaded::Pure(v) => v.outer(),
        }
    }

    pub fn process(&self) -> Result<ProcessMatrix, CliError> {
        Ok(ProcessMatrix::new(self.operator())?)
    }

    pub fn to_file(&self) -> ProcessFile {
        match self {
            Loaded::Matrix(m) => ProcessFile::from_operator(m),
            Loaded::Pure(v) => ProcessFile::from_pure(v),
        }
    }
}
