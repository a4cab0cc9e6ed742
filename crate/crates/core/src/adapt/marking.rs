//! Regularity estimate and the hp marking strategy.

use super::estimator::Estimate;
use crate::basis::{total_degree_dim, BasisFamily, FamilyKind, Key};
use crate::error::{Error, Result};
use crate::mesh::{AdaptationMarks, ElementId, Mark};
use crate::quadrature::default_order;
use crate::space::{local_l2_project, DiscreteFunction, DiscreteFunctionSpace};
use std::collections::BTreeSet;

/// Coefficient slices at or below this norm count as zero.
pub const COEFFICIENT_FLOOR: f64 = 1e-14;
/// Sobolev index reported for spectrally resolved data.
pub const RESOLVED_INDEX: f64 = 100.0;
/// Smallest degree for which two decay slices are meaningful.
pub const MIN_REGULARITY_DEGREE: usize = 3;
/// Default `δ` in the raise test `q_E > k_E + 1 + δ`. The corner singularity
/// `r^{2/3}` gives `q_E ≈ 3.6–4.3` on corner elements for every `k_E`, while
/// analytic data gives `q_E > 7` already at `k_E = 3`.
pub const DEFAULT_REGULARITY_MARGIN: f64 = 1.0;

/// Estimated local Sobolev index `q_E` from the decay of the top two
/// degree slices of the orthonormal expansion of `u_h|_E`:
/// `q_E = 1 + log(b_{k−1}/b_k) / log(k/(k−1))`, clamped to `[1, 100]`.
pub fn regularity_index(space: &DiscreteFunctionSpace, uh: &DiscreteFunction, id: ElementId) -> Result<f64> {
    let set = space.basis_set(id)?;
    let k = set.key().degree();
    if k < MIN_REGULARITY_DEGREE {
        return Err(Error::DegreeTooLow {
            element: id,
            degree: k,
            minimum: MIN_REGULARITY_DEGREE,
        });
    }
    let local = space.local_dofs(uh, id)?;
    let coefficients = if set.family() == FamilyKind::Orthonormal {
        local
    } else {
        let target = BasisFamily::orthonormal().basis_function_set(space.mesh().leaf(id)?, Key::Iso(k))?;
        let map = *set.map();
        local_l2_project(&target, default_order(k, k), |x| {
            set.combine(&local, map.inverse_map(x))
        })?
    };
    let slice = |j: usize| {
        let lo = if j == 0 { 0 } else { total_degree_dim(j - 1) };
        coefficients[lo..total_degree_dim(j)]
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    };
    Ok(decay_index(slice(k - 1), slice(k), k))
}

/// `q` from the slice norms `b_{k−1}`, `b_k`.
pub fn decay_index(previous: f64, last: f64, k: usize) -> f64 {
    if last <= COEFFICIENT_FLOOR {
        return RESOLVED_INDEX;
    }
    if previous <= COEFFICIENT_FLOOR {
        return 1.0;
    }
    let kf = k as f64;
    let q = 1.0 + (previous / last).ln() / (kf / (kf - 1.0)).ln();
    q.clamp(1.0, RESOLVED_INDEX)
}

/// Whether an element of degree `k` with estimated index `q` should raise
/// its degree rather than split.
pub fn prefers_p(q: f64, k: usize, margin: f64) -> bool {
    q > (k + 1) as f64 + margin
}

/// Parameters of the hp marking strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkingParameters {
    pub tol: f64,
    pub k_min: usize,
    pub k_max: usize,
    /// Coarsening threshold `η_*`; defaults to `TOL/|G|`.
    pub eta_lower: Option<f64>,
    /// Refinement threshold `η^*`; defaults to `TOL/√|G|`.
    pub eta_upper: Option<f64>,
    /// The degree is raised when `q_E > k_E + 1 + regularity_margin`.
    pub regularity_margin: f64,
}

impl MarkingParameters {
    pub fn new(tol: f64, k_min: usize, k_max: usize) -> Self {
        Self {
            tol,
            k_min,
            k_max,
            eta_lower: None,
            eta_upper: None,
            regularity_margin: DEFAULT_REGULARITY_MARGIN,
        }
    }

    /// `(η_*, η^*)` for a grid of `n` leaves.
    pub fn thresholds(&self, n: usize) -> (f64, f64) {
        let n = n.max(1) as f64;
        (
            self.eta_lower.unwrap_or(self.tol / n),
            self.eta_upper.unwrap_or(self.tol / n.sqrt()),
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::NonPositiveTolerance(self.tol));
        }
        if !(self.regularity_margin >= 0.0) {
            return Err(Error::Config(format!(
                "regularity margin must be non-negative, got {}",
                self.regularity_margin
            )));
        }
        if self.k_min > self.k_max {
            return Err(Error::Config(format!(
                "k_min = {} exceeds k_max = {}",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    None,
    HRefine,
    PRaise,
    HCoarsen,
    PLower,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HpDecision {
    pub element: ElementId,
    pub action: Action,
    /// Estimated Sobolev index, where it was computed.
    pub regularity: Option<f64>,
}

/// Outcome of [`mark_hp`]: grid marks plus keys to apply with `space.mark`.
#[derive(Clone, Debug, Default)]
pub struct HpMarking {
    pub marks: AdaptationMarks,
    pub keys: Vec<(ElementId, Key)>,
    pub decisions: Vec<HpDecision>,
}

impl HpMarking {
    pub fn is_empty(&self) -> bool {
        self.marks.is_empty() && self.keys.is_empty()
    }

    pub fn count(&self, action: Action) -> usize {
        self.decisions.iter().filter(|d| d.action == action).count()
    }
}

/// Decides per leaf between h-coarsening, lowering, raising and
/// h-refinement. Coarsening is chosen when the whole sibling set sits below
/// `η_*`; otherwise such a leaf lowers its degree. A leaf above `η^*` that
/// cannot be raised any further is h-refined.
pub fn mark_hp(
    space: &DiscreteFunctionSpace,
    uh: &DiscreteFunction,
    estimate: &Estimate,
    params: &MarkingParameters,
) -> Result<HpMarking> {
    params.validate()?;
    let mesh = space.mesh();
    if estimate.len() != mesh.num_leaves() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_leaves(),
            actual: estimate.len(),
        });
    }
    let (lower, upper) = params.thresholds(mesh.num_leaves());
    let below: BTreeSet<ElementId> = estimate
        .indicators
        .iter()
        .filter(|i| i.eta() < lower)
        .map(|i| i.element)
        .collect();
    let can_coarsen = |id: ElementId| {
        mesh.can_coarsen(id)
            && id
                .parent()
                .and_then(ElementId::children)
                .is_some_and(|sibs| sibs.iter().all(|s| below.contains(s)))
    };

    let mut out = HpMarking::default();
    for ind in &estimate.indicators {
        let id = ind.element;
        let key = space.key(id)?;
        let eta = ind.eta();
        let mut decision = HpDecision {
            element: id,
            action: Action::None,
            regularity: None,
        };
        if eta < lower {
            if can_coarsen(id) {
                out.marks.set(id, Mark::Coarsen);
                decision.action = Action::HCoarsen;
            } else {
                let lowered = key.map(|k| k.saturating_sub(1).max(params.k_min));
                if lowered != key {
                    out.keys.push((id, lowered));
                    decision.action = Action::PLower;
                }
            }
        } else if eta > upper {
            // Below the smallest degree with two decay slices the
            // smoothness is unknown; raising is the cheaper first step.
            let raise = if key.degree() < MIN_REGULARITY_DEGREE {
                true
            } else {
                let q = regularity_index(space, uh, id)?;
                decision.regularity = Some(q);
                prefers_p(q, key.degree(), params.regularity_margin)
            };
            let raised = key.map(|k| (k + 1).min(params.k_max));
            if raise && raised != key {
                out.keys.push((id, raised));
                decision.action = Action::PRaise;
            } else {
                // also the fallback once k_max is reached
                out.marks.set(id, Mark::Refine);
                decision.action = Action::HRefine;
            }
        }
        out.decisions.push(decision);
    }
    Ok(out)
}
