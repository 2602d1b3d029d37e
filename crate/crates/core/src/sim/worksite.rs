use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::xrf::{SiteComposition, XrfError, XrfInstrument};
use crate::kinematics::JointVector;
use crate::scene::{Heightfield, SceneError, SceneFixture, SceneGraph, SceneObject};

/// Worksite fixture: seafloor, known objects, ground-truth chemistry and the
/// instrument response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worksite {
    pub name: String,
    pub terrain: Heightfield,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    pub composition: SiteComposition,
    pub instrument: XrfInstrument,
    /// Arm configuration at mission start and after stowing.
    pub home: JointVector,
}

#[derive(Debug, Error)]
pub enum WorksiteError {
    #[error("worksite JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Composition(#[from] XrfError),
    #[error("home configuration has {got} joints, the arm has {expected}")]
    Home { expected: usize, got: usize },
}

impl Worksite {
    pub const SHIPPED_JSON: &'static str = include_str!("../../fixtures/worksite.json");

    pub fn from_json(text: &str) -> Result<Self, WorksiteError> {
        let w: Worksite = serde_json::from_str(text)?;
        w.composition.validate()?;
        w.scene()?;
        Ok(w)
    }

    pub fn shipped() -> Self {
        Self::from_json(Self::SHIPPED_JSON).expect("shipped worksite is valid")
    }

    pub fn scene(&self) -> Result<SceneGraph, SceneError> {
        SceneFixture { terrain: self.terrain.clone(), objects: self.objects.clone() }.build()
    }

    pub fn check_chain(&self, dof: usize) -> Result<(), WorksiteError> {
        if self.home.len() == dof {
            Ok(())
        } else {
            Err(WorksiteError::Home { expected: dof, got: self.home.len() })
        }
    }
}
