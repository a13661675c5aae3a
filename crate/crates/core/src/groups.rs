//! Coarse (Young/Adult/Elder) and fine (decade) age groups, and the
//! overlapping age ranges the experts are trained on.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseGroup {
    Young,
    Adult,
    Elder,
}

impl CoarseGroup {
    pub const ALL: [CoarseGroup; 3] = [CoarseGroup::Young, CoarseGroup::Adult, CoarseGroup::Elder];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CoarseGroup::Young => "young",
            CoarseGroup::Adult => "adult",
            CoarseGroup::Elder => "elder",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

impl fmt::Display for CoarseGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open age interval `[lo, hi)`; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeRange {
    pub lo: f64,
    pub hi: f64,
}

impl AgeRange {
    pub fn contains(&self, age: f64) -> bool {
        age >= self.lo && age < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgeGroupScheme {
    /// Young/Adult and Adult/Elder boundaries in years.
    pub boundaries: [f64; 2],
    /// Years each interior expert boundary is widened by.
    pub overlap: f64,
    pub fine_groups: usize,
}

impl Default for AgeGroupScheme {
    fn default() -> Self {
        Self {
            boundaries: [20.0, 50.0],
            overlap: 5.0,
            fine_groups: 8,
        }
    }
}

impl AgeGroupScheme {
    pub fn validate(&self) -> Result<()> {
        let [b1, b2] = self.boundaries;
        ensure!(
            b1 > 0.0 && b2 > b1 && b2.is_finite(),
            Config,
            "age boundaries must satisfy 0 < b1 < b2, got {b1}, {b2}"
        );
        let narrowest = b1.min(b2 - b1);
        ensure!(
            self.overlap >= 0.0 && self.overlap < narrowest / 2.0,
            Config,
            "overlap must lie in [0, {}), got {}",
            narrowest / 2.0,
            self.overlap
        );
        ensure!(self.fine_groups >= 2, Config, "fine_groups must be at least 2");
        Ok(())
    }

    pub fn coarse(&self, age: f64) -> Result<CoarseGroup> {
        ensure!(age >= 0.0 && !age.is_nan(), Contract, "age must be non-negative, got {age}");
        Ok(if age < self.boundaries[0] {
            CoarseGroup::Young
        } else if age < self.boundaries[1] {
            CoarseGroup::Adult
        } else {
            CoarseGroup::Elder
        })
    }

    /// Decade bucket, clamped to the last group.
    pub fn fine(&self, age: f64) -> usize {
        ((age.max(0.0) / 10.0).floor() as usize).min(self.fine_groups - 1)
    }

    pub fn expert_range(&self, group: CoarseGroup) -> AgeRange {
        let [b1, b2] = self.boundaries;
        let d = self.overlap;
        match group {
            CoarseGroup::Young => AgeRange { lo: 0.0, hi: b1 + d },
            CoarseGroup::Adult => AgeRange { lo: b1 - d, hi: b2 + d },
            CoarseGroup::Elder => AgeRange {
                lo: b2 - d,
                hi: f64::INFINITY,
            },
        }
    }
}

/// Coarse group under the default 20/50 boundaries.
pub fn assign_coarse_group(age: f64) -> Result<CoarseGroup> {
    AgeGroupScheme::default().coarse(age)
}

/// Decade bucket 0..=7.
pub fn assign_fine_group(age: f64) -> usize {
    AgeGroupScheme::default().fine(age)
}

pub fn expert_training_range(group: CoarseGroup, scheme: &AgeGroupScheme) -> AgeRange {
    scheme.expert_range(group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn coarse_boundaries() {
        use CoarseGroup::*;
        for (age, g) in [(10.0, Young), (35.0, Adult), (65.0, Elder), (20.0, Adult), (50.0, Elder), (0.0, Young)] {
            assert_eq!(assign_coarse_group(age).unwrap(), g, "age {age}");
        }
        assert!(matches!(assign_coarse_group(-1.0), Err(crate::MgaError::Contract(_))));
    }

    #[test]
    fn fine_decades() {
        assert_eq!(assign_fine_group(5.0), 0);
        assert_eq!(assign_fine_group(79.0), 7);
        assert_eq!(assign_fine_group(85.0), 7);
        assert_eq!(assign_fine_group(19.99), 1);
    }

    #[test]
    fn expert_ranges() {
        let s = AgeGroupScheme::default();
        assert_eq!(s.expert_range(CoarseGroup::Young), AgeRange { lo: 0.0, hi: 25.0 });
        assert_eq!(s.expert_range(CoarseGroup::Adult), AgeRange { lo: 15.0, hi: 55.0 });
        assert_eq!(s.expert_range(CoarseGroup::Elder).lo, 45.0);
        let zero = AgeGroupScheme { overlap: 0.0, ..s };
        for age in [0.0, 19.9, 20.0, 49.9, 50.0, 90.0] {
            let g = zero.coarse(age).unwrap();
            for other in CoarseGroup::ALL {
                assert_eq!(zero.expert_range(other).contains(age), other == g);
            }
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(AgeGroupScheme::default().validate().is_ok());
        let wide = AgeGroupScheme {
            overlap: 10.0,
            ..Default::default()
        };
        assert!(wide.validate().is_err());
    }

    proptest! {
        #[test]
        fn ranges_cover_and_overlap(age in 0.0f64..150.0, delta in 0.0f64..9.9) {
            let s = AgeGroupScheme { overlap: delta, ..Default::default() };
            let g = s.coarse(age).unwrap();
            prop_assert!(s.expert_range(g).contains(age));
            let y = s.expert_range(CoarseGroup::Young);
            let a = s.expert_range(CoarseGroup::Adult);
            let e = s.expert_range(CoarseGroup::Elder);
            prop_assert!((y.hi - a.lo - 2.0 * delta).abs() < 1e-12);
            prop_assert!((a.hi - e.lo - 2.0 * delta).abs() < 1e-12);
            prop_assert!(s.fine(age) < 8);
        }
    }
}
