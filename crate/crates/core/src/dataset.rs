//! Instance records. Ground-truth identity and camera live here so that
//! evaluation and generation can read them; training only ever sees the
//! [`RawView`] of a dataset.

use serde::{Deserialize, Serialize};

use crate::datagen::GenParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub raw: Vec<f64>,
    identity: usize,
    camera: usize,
}

impl Instance {
    pub fn new(id: usize, raw: Vec<f64>, identity: usize, camera: usize) -> Self {
        Instance {
            id,
            raw,
            identity,
            camera,
        }
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn camera(&self) -> usize {
        self.camera
    }
}

/// Where a dataset came from. Present for generated datasets, absent for
/// datasets loaded from TSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: GenParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<Instance>,
    d_in: usize,
    pub metadata: Option<Provenance>,
}

impl Dataset {
    /// Instance ids must be `0..N` in order; trainer-side code indexes by id.
    pub fn new(instances: Vec<Instance>, metadata: Option<Provenance>) -> Result<Self> {
        let d_in = instances.first().ok_or(Error::EmptyInput)?.raw.len();
        if d_in == 0 {
            return Err(Error::invalid("raw vectors must be non-empty"));
        }
        for (i, inst) in instances.iter().enumerate() {
            if inst.raw.len() != d_in {
                return Err(Error::DimensionMismatch {
                    expected: d_in,
                    got: inst.raw.len(),
                });
            }
            if inst.id != i {
                return Err(Error::invalid(format!(
                    "instance ids must be dense and ordered: position {i} holds id {}",
                    inst.id
                )));
            }
        }
        Ok(Dataset {
            instances,
            d_in,
            metadata,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn get(&self, id: usize) -> Result<&Instance> {
        self.instances.get(id).ok_or(Error::UnknownInstance(id))
    }

    pub fn identities(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.identity).collect()
    }

    pub fn n_identities(&self) -> usize {
        let mut ids = self.identities();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn n_cameras(&self) -> usize {
        let mut cams: Vec<usize> = self.instances.iter().map(|i| i.camera).collect();
        cams.sort_unstable();
        cams.dedup();
        cams.len()
    }

    pub fn raw_view(&self) -> RawView<'_> {
        RawView {
            rows: self.instances.iter().map(|i| i.raw.as_slice()).collect(),
            d_in: self.d_in,
        }
    }
}

/// Label-free view of a dataset: raw vectors indexed by instance id.
#[derive(Debug, Clone)]
pub struct RawView<'a> {
    rows: Vec<&'a [f64]>,
    d_in: usize,
}

impl<'a> RawView<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn row(&self, id: usize) -> &'a [f64] {
        self.rows[id]
    }

    pub fn rows(&self) -> &[&'a [f64]] {
        &self.rows
    }
}
