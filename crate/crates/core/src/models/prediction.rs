use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::groups::CoarseGroup;

/// Per-sample network output. Fields a network does not produce are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `[male, female]`.
    pub gender: [f64; 2],
    pub age: Option<f64>,
    /// Young/Adult/Elder probabilities.
    pub groups: Option<[f64; 3]>,
    /// Gender pair from each expert, Young/Adult/Elder.
    pub experts: Option<[[f64; 2]; 3]>,
    pub fine_groups: Option<Vec<f64>>,
}

fn sums_to_one(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= 1e-6
}

impl Prediction {
    pub fn gender_only(gender: &[f64]) -> Self {
        Self {
            gender: [gender[0], gender[1]],
            age: None,
            groups: None,
            experts: None,
            fine_groups: None,
        }
    }

    /// 0 for male, 1 for female; ties go to male.
    pub fn gender_label(&self) -> u8 {
        u8::from(self.gender[1] > self.gender[0])
    }

    pub fn coarse_group(&self) -> Option<CoarseGroup> {
        let g = self.groups?;
        let i = (0..3).fold(0, |best, i| if g[i] > g[best] { i } else { best });
        CoarseGroup::from_index(i)
    }

    pub fn fine_group(&self) -> Option<usize> {
        let f = self.fine_groups.as_ref()?;
        Some((0..f.len()).fold(0, |best, i| if f[i] > f[best] { i } else { best }))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(sums_to_one(&self.gender), Contract, "gender probabilities {:?} do not sum to 1", self.gender);
        if let Some(a) = self.age {
            ensure!(a.is_finite(), Numeric, "age estimate is not finite");
        }
        if let Some(g) = &self.groups {
            ensure!(sums_to_one(g), Contract, "group probabilities {g:?} do not sum to 1");
        }
        if let Some(e) = &self.experts {
            ensure!(e.iter().all(|p| sums_to_one(p)), Contract, "expert outputs {e:?} do not sum to 1");
        }
        if let Some(f) = &self.fine_groups {
            ensure!(sums_to_one(f), Contract, "fine group probabilities do not sum to 1");
        }
        Ok(())
    }
}
