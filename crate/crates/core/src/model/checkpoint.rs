use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, Projector};
use crate::error::{LabError, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Flat list of named parameter arrays.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arrays: Vec<NamedArray>,
}

fn matrix_array<T: Real>(name: String, m: &Matrix<T>) -> NamedArray {
    NamedArray { name, shape: vec![m.rows(), m.cols()], data: m.as_slice().iter().map(|v| v.as_f64()).collect() }
}

fn vector_array<T: Real>(name: String, v: &[T]) -> NamedArray {
    NamedArray { name, shape: vec![v.len()], data: v.iter().map(|x| x.as_f64()).collect() }
}

impl<T: Real> Model<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut arrays = Vec::new();
        for (k, l) in self.encoder.layers().iter().enumerate() {
            arrays.push(matrix_array(format!("encoder.{k}.weight"), &l.weight));
            if let Some(b) = &l.bias {
                arrays.push(vector_array(format!("encoder.{k}.bias"), b));
            }
        }
        match &self.projector {
            Projector::Linear(w) => arrays.push(matrix_array("projector.weight".into(), w)),
            Projector::Mlp(m) => {
                for (k, l) in m.layers().iter().enumerate() {
                    arrays.push(matrix_array(format!("projector.{k}.weight"), &l.weight));
                }
            }
        }
        Checkpoint { arrays }
    }

    /// Loads parameters into a model of the same architecture.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let template = self.to_checkpoint();
        if template.arrays.len() != ckpt.arrays.len() {
            return Err(LabError::Input(format!(
                "checkpoint holds {} arrays, model expects {}",
                ckpt.arrays.len(),
                template.arrays.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (want, got) in template.arrays.iter().zip(&ckpt.arrays) {
            if want.name != got.name || want.shape != got.shape || got.data.len() != want.data.len() {
                return Err(LabError::Input(format!(
                    "checkpoint array '{}' {:?} does not match '{}' {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
            flat.extend(got.data.iter().map(|&v| T::lit(v)));
        }
        self.set_param_vector(&flat)
    }
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&model.to_checkpoint()).map_err(|e| LabError::Io(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| LabError::Input(format!("{}: {e}", path.display())))
}
