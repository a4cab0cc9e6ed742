//! Residual-based a posteriori error indicator for the SIPG solution.

use crate::basis::{shifted_legendre, BasisFamily, Jet, Key};
use crate::error::{Error, Result};
use crate::mesh::ElementId;
use crate::quadrature::{default_order, element_rule};
use crate::sipg::{facet_points, LocalBasis, ProblemData};
use crate::space::{DiscreteFunction, DiscreteFunctionSpace};

/// Squared contributions to `η_E²` of one leaf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementIndicator {
    pub element: ElementId,
    /// `(h_E²/k_E²) ‖Π_{k_E−1}(f + Δu_h)‖²_E`
    pub volume: f64,
    /// `(h_E/k_E) Σ_int ‖Π_{k_e−1}⟦∇u_h·ν_E⟧‖²_e`
    pub gradient_jump: f64,
    /// `(k_E³/h_E) Σ_int ‖⟦u_h⟧‖²_e`
    pub value_jump: f64,
    /// `(k_E³/h_E) Σ_bnd ‖u_h − g‖²_e`
    pub boundary: f64,
}

impl ElementIndicator {
    pub fn eta_squared(&self) -> f64 {
        self.volume + self.gradient_jump + self.value_jump + self.boundary
    }

    pub fn eta(&self) -> f64 {
        self.eta_squared().sqrt()
    }
}

/// Indicators of all leaves in leaf order.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub indicators: Vec<ElementIndicator>,
}

impl Estimate {
    /// `(Σ_E η_E²)^{1/2}`
    pub fn global(&self) -> f64 {
        self.indicators
            .iter()
            .map(ElementIndicator::eta_squared)
            .sum::<f64>()
            .sqrt()
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }
}

/// Computes `η_E` on every leaf. Requires `k_E ≥ 1` everywhere.
pub fn estimate(space: &DiscreteFunctionSpace, uh: &DiscreteFunction, data: &ProblemData) -> Result<Estimate> {
    if uh.len() != space.size() {
        return Err(Error::DimensionMismatch {
            expected: space.size(),
            actual: uh.len(),
        });
    }
    let indicators = space
        .mesh()
        .leaves()
        .iter()
        .map(|&id| element_indicator(space, uh, data, id))
        .collect::<Result<_>>()?;
    Ok(Estimate { indicators })
}

fn element_indicator(
    space: &DiscreteFunctionSpace,
    uh: &DiscreteFunction,
    data: &ProblemData,
    id: ElementId,
) -> Result<ElementIndicator> {
    let element = space.mesh().leaf(id)?;
    let mut inside = LocalBasis::new(space, id)?;
    let k = inside.degree;
    if k == 0 {
        return Err(Error::DegreeTooLow {
            element: id,
            degree: 0,
            minimum: 1,
        });
    }
    let c = inside.gather(uh);
    let h = element.diameter();
    let kf = k as f64;
    let mut ind = ElementIndicator {
        element: id,
        volume: h * h / (kf * kf) * volume_residual(space, &inside, &c, data)?,
        gradient_jump: 0.0,
        value_jump: 0.0,
        boundary: 0.0,
    };

    let mut legendre = Vec::new();
    for facet in space.mesh().intersections(id) {
        let nu = facet.normal();
        match facet.outside() {
            None => {
                let mut sum = 0.0;
                for (x, w, _) in facet_points(facet, default_order(k, k))? {
                    inside.eval(x);
                    let d = inside.combine(&c).0 - data.g(x);
                    sum += w * d * d;
                }
                ind.boundary += kf.powi(3) / h * sum;
            }
            Some(o) => {
                let mut outside = LocalBasis::new(space, o)?;
                let co = outside.gather(uh);
                let ke = k.max(outside.degree);
                // a_i = ∫_0^1 ⟦∇u_h·ν⟧ L_i dt with orthonormal Legendre L_i of degree < k_e
                let mut a = vec![0.0; ke];
                legendre.resize(ke, [0.0; 3]);
                let mut jump = 0.0;
                for (x, w, t) in facet_points(facet, default_order(k, outside.degree))? {
                    inside.eval(x);
                    outside.eval(x);
                    let (vi, gi) = inside.combine(&c);
                    let (vo, go) = outside.combine(&co);
                    let dn = (gi[0] - go[0]) * nu[0] + (gi[1] - go[1]) * nu[1];
                    shifted_legendre(t, &mut legendre);
                    let wt = w / facet.length();
                    for (i, (ai, p)) in a.iter_mut().zip(&legendre).enumerate() {
                        *ai += wt * dn * p[0] * ((2 * i + 1) as f64).sqrt();
                    }
                    jump += w * (vi - vo) * (vi - vo);
                }
                let projected = facet.length() * a.iter().map(|ai| ai * ai).sum::<f64>();
                ind.gradient_jump += h / kf * projected;
                ind.value_jump += kf.powi(3) / h * jump;
            }
        }
    }
    Ok(ind)
}

/// `‖Π_{E,k−1}(f + Δu_h)‖²_E` through the orthonormal basis of `P^{k−1}(E)`.
fn volume_residual(space: &DiscreteFunctionSpace, local: &LocalBasis, c: &[f64], data: &ProblemData) -> Result<f64> {
    let set = &local.set;
    let map = *set.map();
    let k = local.degree;
    let target = BasisFamily::orthonormal().basis_function_set(space.mesh().leaf(set.element())?, Key::Iso(k - 1))?;
    let rule = element_rule(set.cell_type(), default_order(k, k))?;
    let mut jets: Vec<Jet> = Vec::with_capacity(set.size());
    let mut moments = vec![0.0; target.size()];
    let det = map.det().abs();
    for (xi, w) in rule.iter() {
        set.jets_into(xi, &mut jets);
        let lap: f64 = jets
            .iter()
            .zip(c)
            .map(|(j, ci)| ci * map.push_laplacian(j.hessian()))
            .sum();
        let r = data.f(map.map(xi)) + lap;
        target.jets_into(xi, &mut jets);
        for (m, j) in moments.iter_mut().zip(&jets) {
            *m += w * det * r * j.value();
        }
    }
    // ∫_E φ_i φ_j = |det| δ_ij for the reference-orthonormal φ_i
    Ok(moments.iter().map(|m| m * m).sum::<f64>() / det)
}
