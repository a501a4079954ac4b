//! Per-crew feasibility screen over repair targets plus hold/return.
//!
//! A (crew, component) pair is blocked when the component is claimed by
//! another crew or already under repair, the crew lacks the skill class,
//! no open road reaches the site, the remaining shift cannot cover travel
//! plus the expected repair, or the post-repair topology would fail the
//! capacity screen or break radiality. Hold is always feasible; return
//! needs an open route to the home depot. Every blocked entry carries a
//! reason code.

use crate::env::DispatchState;
use crate::feeder::{Crew, FeederModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockReason {
    /// Crew is off duty, on break, or mid-repair.
    Unavailable,
    /// Another crew holds the assignment.
    AlreadyClaimed,
    RepairInProgress,
    Skill,
    Unreachable,
    /// Remaining shift < travel + expected repair.
    Shift,
    Capacity,
    Radiality,
    /// No open route to the depot (return only).
    NoRoute,
}

#[derive(Debug, Clone)]
pub struct CrewMask {
    pub crew: usize,
    pub available: bool,
    /// Length = targets + 2 (hold, return).
    pub allow: Vec<bool>,
    pub reasons: Vec<Option<BlockReason>>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityMask {
    pub n_targets: usize,
    pub rows: Vec<CrewMask>,
}

impl FeasibilityMask {
    pub fn hold_index(&self) -> usize {
        self.n_targets
    }

    pub fn return_index(&self) -> usize {
        self.n_targets + 1
    }

    /// Feasible target slots (not hold/return) for one crew.
    pub fn feasible_targets(&self, crew: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[crew]
            .allow
            .iter()
            .take(self.n_targets)
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(i, _)| i)
    }
}

/// Builds the mask for the current state. Rows cover every crew; only
/// available crews may act, but hold stays feasible for all of them.
pub fn build_mask(state: &DispatchState, _feeder: &FeederModel, crews: &[Crew]) -> FeasibilityMask {
    let n = state.components.len();
    let mut rows = Vec::with_capacity(crews.len());
    for crew in crews {
        let view = &state.crews[crew.id];
        let mut allow = vec![false; n + 2];
        let mut reasons: Vec<Option<BlockReason>> = vec![None; n + 2];
        allow[n] = true; // hold
        if !view.available {
            for (i, r) in reasons.iter_mut().enumerate() {
                if i != n {
                    *r = Some(BlockReason::Unavailable);
                }
            }
            rows.push(CrewMask {
                crew: crew.id,
                available: false,
                allow,
                reasons,
            });
            continue;
        }
        for (i, comp) in state.components.iter().enumerate() {
            let is_own = view.current_target == Some(comp.branch);
            let blocked = if comp.repair_started && !is_own {
                Some(BlockReason::RepairInProgress)
            } else if comp.claimed_by.is_some() && comp.claimed_by != Some(crew.id) {
                Some(BlockReason::AlreadyClaimed)
            } else if !crew.can_service(&comp.class) {
                Some(BlockReason::Skill)
            } else if !comp.travel_h[crew.id].is_finite() {
                Some(BlockReason::Unreachable)
            } else if !is_own && view.remaining_shift_h < comp.travel_h[crew.id] + comp.repair_h {
                // Continuing one's own commitment is exempt: interrupted
                // work pauses and resumes across duty windows.
                Some(BlockReason::Shift)
            } else if !comp.radial_ok {
                Some(BlockReason::Radiality)
            } else if !comp.capacity_ok {
                Some(BlockReason::Capacity)
            } else {
                None
            };
            match blocked {
                Some(r) => reasons[i] = Some(r),
                None => allow[i] = true,
            }
        }
        if view.depot_reachable {
            allow[n + 1] = true;
        } else {
            reasons[n + 1] = Some(BlockReason::NoRoute);
        }
        rows.push(CrewMask {
            crew: crew.id,
            available: true,
            allow,
            reasons,
        });
    }
    debug_assert!(rows.iter().all(|r| r.allow[n]), "hold must stay feasible");
    FeasibilityMask { n_targets: n, rows }
}
