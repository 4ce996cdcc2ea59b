//! Partitioning of the measurement grid into subspaces.
//!
//! * Spatial location (SL): left/right by azimuth sign, front/back by
//!   elevation. Azimuth 0° goes left, elevation 90° goes back.
//! * Diffraction effect (DE): contralateral directions only, split by the
//!   mean normalized low-band (0.2–0.5 kHz) level across training subjects.
//!   Directions above the threshold are `Inner`.
//! * Hybrid: SL on the ipsilateral side, DE on the contralateral side.
//! * Global: one group holding every direction.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Direction, MeasurementGrid, Side};
use crate::error::{Error, Result};
use crate::preproc::FrequencyAxis;

pub const DE_THRESHOLD: f64 = 0.5;
pub const DE_BAND_HZ: (f64, f64) = (200.0, 500.0);
pub const FRONT_BACK_ELEVATION_DEG: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sl,
    De,
    Hybrid,
    Global,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Sl => "sl",
            Strategy::De => "de",
            Strategy::Hybrid => "hybrid",
            Strategy::Global => "global",
        }
    }

    pub fn needs_mask(self) -> bool {
        matches!(self, Strategy::De | Strategy::Hybrid)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sl" => Ok(Strategy::Sl),
            "de" => Ok(Strategy::De),
            "hybrid" => Ok(Strategy::Hybrid),
            "global" => Ok(Strategy::Global),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLabel {
    LeftFront,
    LeftBack,
    RightFront,
    RightBack,
    Inner,
    Outer,
    All,
}

impl GroupLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupLabel::LeftFront => "left_front",
            GroupLabel::LeftBack => "left_back",
            GroupLabel::RightFront => "right_front",
            GroupLabel::RightBack => "right_back",
            GroupLabel::Inner => "inner",
            GroupLabel::Outer => "outer",
            GroupLabel::All => "all",
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupId {
    pub strategy: Strategy,
    pub label: GroupLabel,
}

impl GroupId {
    pub fn new(strategy: Strategy, label: GroupLabel) -> Result<Self> {
        use GroupLabel::*;
        let legal = match strategy {
            Strategy::Sl => matches!(label, LeftFront | LeftBack | RightFront | RightBack),
            Strategy::De => matches!(label, Inner | Outer),
            Strategy::Hybrid => matches!(label, LeftFront | LeftBack | Inner | Outer),
            Strategy::Global => label == All,
        };
        if legal {
            Ok(GroupId { strategy, label })
        } else {
            Err(Error::InvalidArgument(format!(
                "label {label} is not used by strategy {strategy}"
            )))
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.strategy, self.label)
    }
}

fn quadrant(direction: &Direction) -> GroupLabel {
    let back = direction.elevation_deg >= FRONT_BACK_ELEVATION_DEG;
    match (direction.side(), back) {
        (Side::Ipsilateral, false) => GroupLabel::LeftFront,
        (Side::Ipsilateral, true) => GroupLabel::LeftBack,
        (Side::Contralateral, false) => GroupLabel::RightFront,
        (Side::Contralateral, true) => GroupLabel::RightBack,
    }
}

pub fn sl_group(direction: &Direction) -> GroupId {
    GroupId {
        strategy: Strategy::Sl,
        label: quadrant(direction),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub threshold: f64,
    pub band_hz: (f64, f64),
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            threshold: DE_THRESHOLD,
            band_hz: DE_BAND_HZ,
        }
    }
}

/// Inner/outer assignment of the contralateral directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeMask {
    pub threshold: f64,
    pub band_hz: (f64, f64),
    /// Training subjects the energies were computed from.
    pub source: Vec<String>,
    /// Mean normalized band level per grid direction; `None` on the ipsilateral side.
    pub band_energy: Vec<Option<f64>>,
}

impl DeMask {
    pub fn is_inner(&self, direction_index: usize) -> Option<bool> {
        self.band_energy
            .get(direction_index)
            .copied()
            .flatten()
            .map(|e| e > self.threshold)
    }

    /// Same energies, different threshold.
    pub fn with_threshold(&self, threshold: f64) -> DeMask {
        DeMask {
            threshold,
            ..self.clone()
        }
    }

    pub fn inner_indices(&self) -> Vec<usize> {
        (0..self.band_energy.len())
            .filter(|&i| self.is_inner(i) == Some(true))
            .collect()
    }

    pub fn outer_indices(&self) -> Vec<usize> {
        (0..self.band_energy.len())
            .filter(|&i| self.is_inner(i) == Some(false))
            .collect()
    }
}

/// Compute the DE mask from min-max normalized training HRTFs.
///
/// `normalized[s]` holds subject `s`'s HRTFs, one row per grid direction.
pub fn compute_de_mask(
    normalized: &[Array2<f64>],
    subject_ids: &[String],
    grid: &MeasurementGrid,
    axis: &FrequencyAxis,
    config: &DeConfig,
) -> Result<DeMask> {
    let band = axis.bins_in_band(config.band_hz.0, config.band_hz.1);
    if band.is_empty() {
        return Err(Error::Config(format!(
            "no frequency bins in the DE band {:?} Hz",
            config.band_hz
        )));
    }
    if normalized.is_empty() || normalized.len() != subject_ids.len() {
        return Err(Error::InvalidArgument(
            "DE mask needs one HRTF matrix per training subject".into(),
        ));
    }
    for m in normalized {
        if m.nrows() != grid.len() || m.ncols() != axis.len() {
            return Err(Error::InvalidArgument(format!(
                "HRTF matrix is {:?}, expected ({}, {})",
                m.dim(),
                grid.len(),
                axis.len()
            )));
        }
    }
    let band_energy = grid
        .directions
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if d.side() == Side::Ipsilateral {
                return None;
            }
            let total: f64 = normalized
                .iter()
                .map(|m| band.iter().map(|&k| m[[i, k]]).sum::<f64>() / band.len() as f64)
                .sum();
            Some(total / normalized.len() as f64)
        })
        .collect();
    Ok(DeMask {
        threshold: config.threshold,
        band_hz: config.band_hz,
        source: subject_ids.to_vec(),
        band_energy,
    })
}

pub fn de_group(mask: &DeMask, direction_index: usize) -> Result<GroupId> {
    match mask.is_inner(direction_index) {
        Some(true) => Ok(GroupId {
            strategy: Strategy::De,
            label: GroupLabel::Inner,
        }),
        Some(false) => Ok(GroupId {
            strategy: Strategy::De,
            label: GroupLabel::Outer,
        }),
        None => Err(Error::WrongSide { direction_index }),
    }
}

pub fn hybrid_group(
    grid: &MeasurementGrid,
    mask: &DeMask,
    direction_index: usize,
) -> Result<GroupId> {
    let d = grid.directions.get(direction_index).ok_or_else(|| {
        Error::InvalidArgument(format!("direction {direction_index} not on grid"))
    })?;
    let label = match d.side() {
        Side::Ipsilateral => quadrant(d),
        Side::Contralateral => de_group(mask, direction_index)?.label,
    };
    Ok(GroupId {
        strategy: Strategy::Hybrid,
        label,
    })
}

/// A group and the grid indices routed to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub directions: Vec<usize>,
}

/// Dispatches grid directions to groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub strategy: Strategy,
    pub de_mask: Option<DeMask>,
    pub groups: Vec<Group>,
    /// Group position per grid direction; `None` outside the strategy's domain.
    pub assignment: Vec<Option<usize>>,
}

impl Router {
    pub fn route(&self, direction_index: usize) -> Result<&Group> {
        self.assignment
            .get(direction_index)
            .copied()
            .flatten()
            .map(|g| &self.groups[g])
            .ok_or_else(|| {
                Error::Internal(format!(
                    "direction {direction_index} is not routed by the {} router",
                    self.strategy
                ))
            })
    }

    /// Grid indices covered by this router.
    pub fn domain(&self) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i].is_some())
            .collect()
    }

    pub fn group(&self, label: GroupLabel) -> Option<&Group> {
        self.groups.iter().find(|g| g.id.label == label)
    }

    /// Check that the groups partition the domain.
    pub fn check_partition(&self) -> Result<()> {
        let mut owner = vec![None; self.assignment.len()];
        for (gi, g) in self.groups.iter().enumerate() {
            for &d in &g.directions {
                if d >= owner.len() {
                    return Err(Error::Internal(format!(
                        "group {} routes off-grid index {d}",
                        g.id
                    )));
                }
                if let Some(prev) = owner[d].replace(gi) {
                    return Err(Error::Internal(format!(
                        "direction {d} in both {} and {}",
                        self.groups[prev].id, g.id
                    )));
                }
            }
        }
        if owner != self.assignment {
            return Err(Error::Internal(
                "router assignment disagrees with its groups".into(),
            ));
        }
        Ok(())
    }
}

/// Build a router; DE and hybrid need a mask.
pub fn build_router(
    strategy: Strategy,
    grid: &MeasurementGrid,
    mask: Option<&DeMask>,
) -> Result<Router> {
    let mask = match (strategy.needs_mask(), mask) {
        (true, None) => {
            return Err(Error::Config(format!(
                "{strategy} grouping needs a DE mask"
            )));
        }
        (true, Some(m)) => {
            if m.band_energy.len() != grid.len() {
                return Err(Error::Config("DE mask does not match the grid".into()));
            }
            Some(m.clone())
        }
        (false, _) => None,
    };
    let mut labels = Vec::with_capacity(grid.len());
    for (i, d) in grid.directions.iter().enumerate() {
        let label = match strategy {
            Strategy::Sl => Some(sl_group(d).label),
            Strategy::Global => Some(GroupLabel::All),
            Strategy::De => match d.side() {
                Side::Ipsilateral => None,
                Side::Contralateral => Some(de_group(mask.as_ref().expect("checked"), i)?.label),
            },
            Strategy::Hybrid => Some(hybrid_group(grid, mask.as_ref().expect("checked"), i)?.label),
        };
        labels.push(label);
    }
    let mut present: Vec<GroupLabel> = labels.iter().flatten().copied().collect();
    present.sort();
    present.dedup();
    let groups: Vec<Group> = present
        .iter()
        .map(|&label| {
            Ok(Group {
                id: GroupId::new(strategy, label)?,
                directions: (0..labels.len())
                    .filter(|&i| labels[i] == Some(label))
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    let assignment = labels
        .iter()
        .map(|l| l.map(|l| present.iter().position(|&p| p == l).expect("present")))
        .collect();
    let router = Router {
        strategy,
        de_mask: mask,
        groups,
        assignment,
    };
    router.check_partition()?;
    Ok(router)
}
