//! Target color to NPac: feasibility solve, metamer enumeration and
//! selection.

use serde::{Deserialize, Serialize};

use super::hull::tetra_barycentric;
use super::nnls::{nnls, solve_augmented};
use super::{closest_on_gamut, GamutModel, LinearBasis};
use crate::colorimetry::{delta_e2000, delta_e76, Lab, Metric};
use crate::error::{Error, Result};
use crate::neugebauer::{InkSet, NPac, NpId};

/// Largest ΔE2000 between target and prediction accepted as a match.
pub const ROUND_TRIP_TOLERANCE: f64 = 0.5;

// Weight of the Σw = 1 row against the Lab rows in the linearized solve.
const SUM_ROW_WEIGHT: f64 = 100.0;
const MAX_GN_ITERATIONS: usize = 80;
const MIN_WEIGHT: f64 = 1e-12;

/// Secondary criterion for choosing among metamers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparationObjective {
    /// Σ weight · drops, optionally with a per-channel cost per drop.
    MinInk {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drop_costs: Option<Vec<f64>>,
    },
    MinNpCount,
    /// Prefer more bare substrate.
    MaxSubstrate,
}

impl Default for SeparationObjective {
    fn default() -> Self {
        SeparationObjective::MinInk { drop_costs: None }
    }
}

impl SeparationObjective {
    pub fn min_ink() -> Self {
        Self::default()
    }

    /// Lower is better.
    pub fn cost(&self, npac: &NPac, inkset: &InkSet) -> Result<f64> {
        Ok(match self {
            SeparationObjective::MinInk { drop_costs } => {
                if let Some(c) = drop_costs {
                    if c.len() != inkset.n() {
                        return Err(Error::InvalidParameter(format!(
                            "{} drop costs for {} channels",
                            c.len(),
                            inkset.n()
                        )));
                    }
                    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::InvalidParameter("drop costs must be finite and non-negative".into()));
                    }
                }
                npac.entries()
                    .iter()
                    .map(|&(id, w)| {
                        let drops = inkset.decode(id);
                        let per_np: f64 = match drop_costs {
                            Some(c) => drops.iter().zip(c).map(|(&d, &c)| d as f64 * c).sum(),
                            None => drops.iter().map(|&d| d as f64).sum(),
                        };
                        w * per_np
                    })
                    .sum()
            }
            SeparationObjective::MinNpCount => npac.len() as f64,
            SeparationObjective::MaxSubstrate => -npac.weight(0),
        })
    }
}

/// Picks the candidate with the lowest objective. Costs within a relative
/// 1e-9 of the minimum tie; ties go to the lexicographically smallest list
/// of NP ids, then to the smaller weights.
pub fn metamer_select<'a>(candidates: &'a [NPac], objective: &SeparationObjective, inkset: &InkSet) -> Result<&'a NPac> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidates to select from".into()));
    }
    let costs = candidates
        .iter()
        .map(|c| objective.cost(c, inkset))
        .collect::<Result<Vec<f64>>>()?;
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = costs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let key = |n: &NPac| -> (Vec<NpId>, Vec<f64>) {
        (n.ids().collect(), n.entries().iter().map(|e| e.1).collect())
    };
    let best = candidates
        .iter()
        .zip(&costs)
        .filter(|(_, &c)| c <= min + tol)
        .map(|(n, _)| n)
        .min_by(|a, b| {
            let (ia, wa) = key(a);
            let (ib, wb) = key(b);
            ia.cmp(&ib).then_with(|| {
                wa.iter()
                    .zip(&wb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .expect("the minimum is attained");
    Ok(best)
}

/// Inverts `target` to an NPac minimizing `objective` among the metamers
/// found.
pub fn invert(target: &Lab, gamut: &GamutModel, objective: &SeparationObjective) -> Result<NPac> {
    let candidates = metamers(target, gamut)?;
    metamer_select(&candidates, objective, gamut.inkset()).cloned()
}

/// NPacs predicting `target` within the round-trip tolerance: the
/// feasibility solution plus one per NP apex of a family of star
/// triangulations of the hull.
pub fn metamers(target: &Lab, gamut: &GamutModel) -> Result<Vec<NPac>> {
    if !target.is_finite() {
        return Err(Error::InvalidParameter("target Lab must be finite".into()));
    }
    let basis = gamut.basis();
    let n = basis.len();

    let mut best = gauss_newton(target, basis, vec![1.0 / n as f64; n]);
    let mut closest = None;
    if de2000_of(target, basis, &best) > ROUND_TRIP_TOLERANCE {
        let c = closest_on_gamut(target, gamut, &Metric::De2000);
        let mut start = vec![0.0; n];
        for &(id, w) in c.npac.entries() {
            start[basis.index_of(id).expect("surface NPs are in the model")] = w;
        }
        let retry = gauss_newton(target, basis, start);
        if de2000_of(target, basis, &retry) < de2000_of(target, basis, &best) {
            best = retry;
        }
        closest = Some(c);
    }

    let residual = de2000_of(target, basis, &best);
    if residual > ROUND_TRIP_TOLERANCE {
        let c = closest.expect("computed above");
        if c.delta_e <= ROUND_TRIP_TOLERANCE {
            return Ok(vec![c.npac]);
        }
        if residual + ROUND_TRIP_TOLERANCE < c.delta_e {
            return Err(Error::NonConvergence(format!(
                "separation stalled at ΔE2000 {residual:.3} while the gamut surface is {:.3} away",
                c.delta_e
            )));
        }
        return Err(Error::OutOfGamut(Box::new(c)));
    }

    let mut out = vec![to_npac(basis, &best)];
    let u: [f64; 3] = std::array::from_fn(|d| (0..n).map(|i| best[i] * gamut.coords[i][d]).sum());
    for apex in 0..n {
        for f in &gamut.hull.facets {
            if f.vertices.contains(&apex) {
                continue;
            }
            let pts = [apex, f.vertices[0], f.vertices[1], f.vertices[2]];
            let Some(b) = tetra_barycentric(pts.map(|p| gamut.coords[p]), u) else {
                continue;
            };
            if b.iter().any(|&x| x < -1e-9) {
                continue;
            }
            if let Some(w) = newton_in_simplex(target, basis, pts, b) {
                let mut dense = vec![0.0; n];
                for (p, x) in pts.iter().zip(w) {
                    dense[*p] += x;
                }
                if de2000_of(target, basis, &dense) <= ROUND_TRIP_TOLERANCE {
                    let candidate = to_npac(basis, &dense);
                    if !out.iter().any(|o| same_npac(o, &candidate)) {
                        out.push(candidate);
                    }
                }
            }
            // One containing tetrahedron per apex is enough; the star around
            // an apex tiles the hull.
            break;
        }
    }
    Ok(out)
}

fn same_npac(a: &NPac, b: &NPac) -> bool {
    a.len() == b.len()
        && a.entries()
            .iter()
            .zip(b.entries())
            .all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() < 1e-9)
}

fn pairs(w: &[f64]) -> Vec<(usize, f64)> {
    w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, &x)| (i, x)).collect()
}

fn to_npac(basis: &LinearBasis, w: &[f64]) -> NPac {
    basis.npac(&pairs(w).into_iter().filter(|p| p.1 > MIN_WEIGHT).collect::<Vec<_>>())
}

fn de2000_of(target: &Lab, basis: &LinearBasis, w: &[f64]) -> f64 {
    delta_e2000(target, &basis.lab(&pairs(w)))
}

/// Gauss–Newton over the whole simplex: each step solves the linearized
/// problem as NNLS with a heavily weighted Σw = 1 row, then line-searches
/// toward that solution.
fn gauss_newton(target: &Lab, basis: &LinearBasis, mut w: Vec<f64>) -> Vec<f64> {
    let n = basis.len();
    let all: Vec<usize> = (0..n).collect();
    let t = target.to_array();
    for _ in 0..MAX_GN_ITERATIONS {
        let (lab, jac) = basis.lab_jacobian(&pairs(&w), &all);
        let f0 = delta_e76(target, &lab);
        if f0 < 1e-9 {
            break;
        }
        let l = lab.to_array();
        let mut rhs = [0.0; 4];
        for r in 0..3 {
            rhs[r] = t[r] - l[r] + (0..n).map(|i| jac[i][r] * w[i]).sum::<f64>();
        }
        rhs[3] = SUM_ROW_WEIGHT;
        let columns: Vec<Vec<f64>> = jac.iter().map(|j| vec![j[0], j[1], j[2], SUM_ROW_WEIGHT]).collect();
        let v = nnls(&columns, &rhs);
        let sum: f64 = v.iter().sum();
        if sum <= 0.0 {
            break;
        }
        let v: Vec<f64> = v.iter().map(|x| x / sum).collect();

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-6 {
            let cand: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + alpha * (b - a)).collect();
            let f = delta_e76(target, &basis.lab(&pairs(&cand)));
            if f < f0 {
                accepted = Some((cand, f));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, f)) = accepted else { break };
        let step: f64 = cand.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        w = cand;
        if step < 1e-13 || f0 - f < 1e-12 * f0 {
            break;
        }
    }
    w
}

/// Newton on the 3 free barycentric coordinates of a tetrahedron of NPs so
/// the prediction hits `target`, staying inside the tetrahedron.
fn newton_in_simplex(target: &Lab, basis: &LinearBasis, pts: [usize; 4], start: [f64; 4]) -> Option<[f64; 4]> {
    let mut b = start.map(|x| x.max(0.0));
    let s: f64 = b.iter().sum();
    b = b.map(|x| x / s);
    let t = target.to_array();
    let weights = |b: &[f64; 4]| -> Vec<(usize, f64)> { pts.iter().copied().zip(b.iter().copied()).collect() };
    for _ in 0..30 {
        let (lab, jac) = basis.lab_jacobian(&weights(&b), &pts);
        let r: Vec<f64> = (0..3).map(|k| t[k] - lab.to_array()[k]).collect();
        if r.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-10 {
            return Some(b);
        }
        // Coordinates 1..3 are free; coordinate 0 absorbs the remainder.
        let m: Vec<Vec<f64>> = (0..3)
            .map(|row| {
                let mut v: Vec<f64> = (1..4).map(|c| jac[c][row] - jac[0][row]).collect();
                v.push(r[row]);
                v
            })
            .collect();
        let d = solve_augmented(m);
        let step = [-(d[0] + d[1] + d[2]), d[0], d[1], d[2]];
        if step.iter().any(|x| !x.is_finite()) {
            return None;
        }
        // Largest fraction of the step that keeps every coordinate ≥ 0.
        let mut alpha: f64 = 1.0;
        for k in 0..4 {
            if step[k] < 0.0 {
                alpha = alpha.min(b[k] / -step[k]);
            }
        }
        if alpha < 1e-12 {
            break;
        }
        for k in 0..4 {
            b[k] = (b[k] + alpha * step[k]).max(0.0);
        }
        let s: f64 = b.iter().sum();
        b = b.map(|x| x / s);
    }
    // Only exact solutions count; a tetrahedron that cannot reach the target
    // without leaving it contributes nothing.
    let lab = basis.lab(&weights(&b));
    (delta_e76(target, &lab) < 1e-6).then_some(b)
}
