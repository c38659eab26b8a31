//! Printable gamut, surface matching and spot-color alternatives.
//!
//! The forward model is linear in the Yule-Nielsen domain `R^(1/n)`, and so
//! is its tristimulus integral. The hull is therefore built over the NPs'
//! "linear tristimulus" coordinates `Σ_λ R(λ)^(1/n)·I(λ)·cmf(λ)`: every NPac
//! maps to a point inside it, and every point on a facet has exactly one NPac
//! made of the facet's three vertex NPs. Lab is attached to facet points
//! through the forward model, so the surface is curved in Lab and sampled
//! densely.

pub mod hull;
mod nnls;
pub mod separation;

use serde::{Deserialize, Serialize};

use crate::colorimetry::{
    self, delta_e76, hex, hue_difference, lab_to_srgb8, ColorDifference, Lab, ViewingCondition, Xyz, SAMPLES,
};
use crate::error::{Error, Result};
use crate::neugebauer::{InkSet, NPac, NpId, NpTable, YnParams};

pub use hull::{Facet, Hull, Point};
pub use separation::{invert, metamer_select, metamers, SeparationObjective, ROUND_TRIP_TOLERANCE};

/// Target neighbor spacing of the surface sample, in ΔE76.
pub const DEFAULT_SAMPLE_SPACING: f64 = 0.9;

/// Coordinates the hull is built in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullSpace {
    /// Linear tristimulus of `R^(1/n)`; the forward model is exactly linear here.
    #[default]
    YnLinear,
    /// NP Lab values. Faster to reason about but approximate: NPacs on a facet
    /// do not predict colors on the flat Lab facet.
    Lab,
}

/// NP spectra in the Yule-Nielsen linear domain plus the colorimetric
/// transform, for fast evaluation of convex combinations by point index.
#[derive(Clone, Debug)]
pub(crate) struct LinearBasis {
    yn: YnParams,
    vc: ViewingCondition,
    ids: Vec<NpId>,
    q: Vec<[f64; SAMPLES]>,
}

impl LinearBasis {
    fn new(table: &NpTable, yn: YnParams, vc: &ViewingCondition) -> Self {
        let (ids, q) = table.primaries().map(|np| (np.id, yn.linearize_spectrum(&np.spectrum))).unzip();
        LinearBasis {
            yn,
            vc: vc.clone(),
            ids,
            q,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }

    fn combine(&self, weights: &[(usize, f64)]) -> [f64; SAMPLES] {
        let mut acc = [0.0; SAMPLES];
        for &(i, w) in weights {
            for (a, q) in acc.iter_mut().zip(&self.q[i]) {
                *a += w * q;
            }
        }
        acc
    }

    pub(crate) fn xyz(&self, weights: &[(usize, f64)]) -> Xyz {
        let r = self.combine(weights).map(|q| self.yn.delinearize(q));
        self.vc.integrate(&r)
    }

    pub(crate) fn lab(&self, weights: &[(usize, f64)]) -> Lab {
        colorimetry::xyz_to_lab(self.xyz(weights), &self.vc)
    }

    /// Lab at `weights` and its partial derivatives with respect to the
    /// weight of each point in `cols`.
    pub(crate) fn lab_jacobian(&self, weights: &[(usize, f64)], cols: &[usize]) -> (Lab, Vec<[f64; 3]>) {
        let q = self.combine(weights);
        let n = self.yn.exponent();
        let mut r = [0.0; SAMPLES];
        // dR/dq per sample; zero where the clamp is active.
        let mut dr = [0.0; SAMPLES];
        for i in 0..SAMPLES {
            let qi = q[i].max(0.0);
            let ri = self.yn.delinearize(qi);
            r[i] = ri;
            if q[i] > 0.0 && ri < 1.0 {
                dr[i] = n * qi.powf(n - 1.0);
            }
        }
        let xyz = self.vc.integrate(&r);
        let jl = colorimetry::xyz_to_lab_jacobian(xyz, &self.vc);
        let weights_tab = self.vc.weights();
        let cols_out = cols
            .iter()
            .map(|&c| {
                let mut dxyz = [0.0; 3];
                for i in 0..SAMPLES {
                    let g = dr[i] * self.q[c][i];
                    dxyz[0] += g * weights_tab[i][0];
                    dxyz[1] += g * weights_tab[i][1];
                    dxyz[2] += g * weights_tab[i][2];
                }
                std::array::from_fn(|row| (0..3).map(|k| jl[row][k] * dxyz[k]).sum())
            })
            .collect();
        (colorimetry::xyz_to_lab(xyz, &self.vc), cols_out)
    }

    fn linear_tristimulus(&self, i: usize) -> Point {
        self.vc.integrate(&self.q[i]).to_array()
    }

    pub(crate) fn npac(&self, weights: &[(usize, f64)]) -> NPac {
        NPac::from_unnormalized(weights.iter().map(|&(i, w)| (self.ids[i], w)), 0.0)
            .expect("weights of a surface point are positive")
    }

    pub(crate) fn index_of(&self, id: NpId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }
}

#[derive(Clone, Debug)]
struct FacetGrid {
    offset: usize,
    m: usize,
    l_min: f64,
    l_max: f64,
}

impl FacetGrid {
    // Row i holds m + 1 - i samples.
    fn index(&self, i: usize, j: usize) -> usize {
        self.offset + i * (self.m + 1) - i * i.saturating_sub(1) / 2 + j
    }

    fn bary(&self, i: usize, j: usize) -> [f64; 3] {
        let m = self.m as f64;
        let s = i as f64 / m;
        let t = j as f64 / m;
        [1.0 - s - t, s, t]
    }

    fn len(&self) -> usize {
        (self.m + 1) * (self.m + 2) / 2
    }
}

/// A point on the gamut surface: a facet, barycentric coordinates on it, the
/// NPac they define and its predicted Lab.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub lab: Lab,
    pub npac: NPac,
    pub facet: usize,
    pub bary: [f64; 3],
}

/// Closest surface point to a target under some metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMatch {
    pub lab: Lab,
    pub npac: NPac,
    pub facet: usize,
    pub bary: [f64; 3],
    pub delta_e: f64,
}

impl SurfaceMatch {
    pub fn point(&self) -> SurfacePoint {
        SurfacePoint {
            lab: self.lab,
            npac: self.npac.clone(),
            facet: self.facet,
            bary: self.bary,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamutOptions {
    pub space: HullSpace,
    pub sample_spacing: f64,
}

impl Default for GamutOptions {
    fn default() -> Self {
        GamutOptions {
            space: HullSpace::YnLinear,
            sample_spacing: DEFAULT_SAMPLE_SPACING,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GamutModel {
    options: GamutOptions,
    table: NpTable,
    basis: LinearBasis,
    coords: Vec<Point>,
    np_labs: Vec<Lab>,
    hull: Hull,
    grids: Vec<FacetGrid>,
    labs: Vec<Lab>,
}

pub fn build_gamut(table: &NpTable, yn: YnParams, vc: &ViewingCondition) -> Result<GamutModel> {
    GamutModel::build(table, yn, vc, GamutOptions::default())
}

impl GamutModel {
    pub fn build(table: &NpTable, yn: YnParams, vc: &ViewingCondition, options: GamutOptions) -> Result<Self> {
        if !(options.sample_spacing.is_finite() && options.sample_spacing > 0.0) {
            return Err(Error::InvalidParameter("sample spacing must be positive".into()));
        }
        if table.len() < 4 {
            return Err(Error::DegenerateGamut(format!(
                "{} NPs cannot span a volume; at least 4 affinely independent colors are needed",
                table.len()
            )));
        }
        let basis = LinearBasis::new(table, yn, vc);
        let np_labs: Vec<Lab> = (0..basis.len()).map(|i| basis.lab(&[(i, 1.0)])).collect();
        let coords: Vec<Point> = match options.space {
            HullSpace::YnLinear => (0..basis.len()).map(|i| basis.linear_tristimulus(i)).collect(),
            HullSpace::Lab => np_labs.iter().map(|l| l.to_array()).collect(),
        };
        let hull = Hull::build(&coords)?;
        let mut model = GamutModel {
            options,
            table: table.clone().with_yn(yn),
            basis,
            coords,
            np_labs,
            hull,
            grids: Vec::new(),
            labs: Vec::new(),
        };
        model.sample_surface(options.sample_spacing);
        Ok(model)
    }

    fn sample_surface(&mut self, spacing: f64) {
        let mut grids = Vec::with_capacity(self.hull.facets.len());
        let mut labs = Vec::new();
        for f in &self.hull.facets {
            let m = facet_resolution(&self.basis, f.vertices, spacing);
            let mut grid = FacetGrid {
                offset: labs.len(),
                m,
                l_min: f64::INFINITY,
                l_max: f64::NEG_INFINITY,
            };
            for i in 0..=m {
                for j in 0..=(m - i) {
                    let b = grid.bary(i, j);
                    let lab = self.basis.lab(&facet_weights(f.vertices, b));
                    grid.l_min = grid.l_min.min(lab.l);
                    grid.l_max = grid.l_max.max(lab.l);
                    labs.push(lab);
                }
            }
            debug_assert_eq!(labs.len() - grid.offset, grid.len());
            grids.push(grid);
        }
        self.grids = grids;
        self.labs = labs;
    }

    pub fn options(&self) -> GamutOptions {
        self.options
    }

    pub fn table(&self) -> &NpTable {
        &self.table
    }

    pub fn inkset(&self) -> &InkSet {
        self.table.inkset()
    }

    pub fn yn(&self) -> YnParams {
        self.basis.yn
    }

    pub fn viewing_condition(&self) -> &ViewingCondition {
        &self.basis.vc
    }

    pub fn hull(&self) -> &Hull {
        &self.hull
    }

    pub(crate) fn basis(&self) -> &LinearBasis {
        &self.basis
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn np_id(&self, point: usize) -> NpId {
        self.basis.ids[point]
    }

    pub fn np_lab(&self, point: usize) -> Lab {
        self.np_labs[point]
    }

    pub fn sample_count(&self) -> usize {
        self.labs.len()
    }

    pub fn volume(&self) -> f64 {
        self.hull.volume(&self.coords)
    }

    /// Hull-space coordinates of an NPac.
    pub fn coords_of(&self, npac: &NPac) -> Result<Point> {
        let mut p = [0.0; 3];
        for &(id, w) in npac.entries() {
            let i = self.basis.index_of(id).ok_or(Error::UnknownNp(id))?;
            for d in 0..3 {
                p[d] += w * self.coords[i][d];
            }
        }
        Ok(p)
    }

    fn tolerance(&self) -> f64 {
        self.hull.eps * 1e3
    }

    pub fn contains_npac(&self, npac: &NPac) -> Result<bool> {
        Ok(self.hull.contains(self.coords_of(npac)?, self.tolerance()))
    }

    /// Facet membership of an NPac's hull-space point.
    pub fn npac_on_surface(&self, npac: &NPac) -> Result<bool> {
        Ok(self.hull.on_surface(&self.coords, self.coords_of(npac)?, self.tolerance()))
    }

    pub fn predict_lab(&self, npac: &NPac) -> Result<Lab> {
        let weights = npac
            .entries()
            .iter()
            .map(|&(id, w)| self.basis.index_of(id).map(|i| (i, w)).ok_or(Error::UnknownNp(id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.basis.lab(&weights))
    }

    /// Lab of barycentric point `bary` on facet `facet`.
    pub fn facet_lab(&self, facet: usize, bary: [f64; 3]) -> Lab {
        self.basis.lab(&facet_weights(self.hull.facets[facet].vertices, bary))
    }

    pub fn facet_point(&self, facet: usize, bary: [f64; 3]) -> SurfacePoint {
        let w = facet_weights(self.hull.facets[facet].vertices, bary);
        let positive: Vec<(usize, f64)> = w.iter().copied().filter(|(_, x)| *x > 0.0).collect();
        SurfacePoint {
            lab: self.basis.lab(&w),
            npac: self.basis.npac(&positive),
            facet,
            bary,
        }
    }

    /// Every surface sample as `(facet, barycentric, Lab)`.
    pub fn samples(&self) -> impl Iterator<Item = (usize, [f64; 3], Lab)> + '_ {
        self.grids.iter().enumerate().flat_map(move |(f, g)| {
            (0..=g.m).flat_map(move |i| (0..=(g.m - i)).map(move |j| (f, g.bary(i, j), self.labs[g.index(i, j)])))
        })
    }

    /// Mean ΔE76 between grid neighbors of the surface sample.
    pub fn mean_sample_spacing(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for g in &self.grids {
            // Each grid edge belongs to exactly one upward sub-triangle.
            for i in 0..g.m {
                for j in 0..(g.m - i) {
                    let a = self.labs[g.index(i, j)];
                    let b = self.labs[g.index(i + 1, j)];
                    let c = self.labs[g.index(i, j + 1)];
                    sum += delta_e76(&a, &b) + delta_e76(&a, &c) + delta_e76(&b, &c);
                    count += 3;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn export_mesh(&self) -> GamutMesh {
        let verts = self.hull.vertices();
        let lookup = |p: usize| verts.binary_search(&p).expect("facet vertex is a hull vertex");
        GamutMesh {
            vertices: verts
                .iter()
                .map(|&p| MeshVertex {
                    lab: self.np_labs[p].to_array(),
                    np_id: self.basis.ids[p],
                })
                .collect(),
            facets: self.hull.facets.iter().map(|f| f.vertices.map(lookup)).collect(),
        }
    }

    /// Surface point at lightness `l` and hue `hue_deg` with maximal chroma:
    /// the intersection of the ray from the neutral axis at `l` with the
    /// surface. `None` when the ray misses.
    pub fn surface_at(&self, l: f64, hue_deg: f64) -> Option<SurfacePoint> {
        let h = hue_deg.to_radians();
        let origin = [l, 0.0, 0.0];
        let dir = [0.0, h.cos(), h.sin()];
        let mut hits: Vec<(f64, usize, [f64; 3])> = Vec::new();
        for (f, g) in self.grids.iter().enumerate() {
            if l < g.l_min - 1e-9 || l > g.l_max + 1e-9 {
                continue;
            }
            for i in 0..g.m {
                for j in 0..(g.m - i) {
                    let mut tris = vec![[(i, j), (i + 1, j), (i, j + 1)]];
                    if i + j + 1 < g.m {
                        tris.push([(i + 1, j), (i + 1, j + 1), (i, j + 1)]);
                    }
                    for tri in tris {
                        let c = tri.map(|(a, b)| self.labs[g.index(a, b)]);
                        let lo = c[0].l.min(c[1].l).min(c[2].l);
                        let hi = c[0].l.max(c[1].l).max(c[2].l);
                        if l < lo - 1e-12 || l > hi + 1e-12 {
                            continue;
                        }
                        let pts = c.map(|x| x.to_array());
                        if let Some((t, u, v)) = hull::ray_triangle(origin, dir, pts[0], pts[1], pts[2]) {
                            if t >= 0.0 {
                                let bs = tri.map(|(a, b)| g.bary(a, b));
                                let w = [1.0 - u - v, u, v];
                                let bary = std::array::from_fn(|k| w[0] * bs[0][k] + w[1] * bs[1][k] + w[2] * bs[2][k]);
                                hits.push((t, f, bary));
                            }
                        }
                    }
                }
            }
        }
        let t_max = hits.iter().map(|h| h.0).fold(f64::NEG_INFINITY, f64::max);
        if !t_max.is_finite() {
            return None;
        }
        let mut best: Option<(f64, SurfacePoint)> = None;
        for &(t, f, bary) in hits.iter().filter(|h| h.0 >= t_max - 0.5) {
            let _ = t;
            let (bary, residual) = self.refine_lh(f, bary, l, hue_deg);
            let p = self.facet_point(f, bary);
            if best.as_ref().is_none_or(|(r, bp)| {
                residual < *r - 1e-12 || (residual <= *r + 1e-12 && p.lab.chroma() > bp.lab.chroma())
            }) {
                best = Some((residual, p));
            }
        }
        best.map(|(_, p)| p)
    }

    /// Newton iteration on a facet for `L = l` and hue `= hue_deg`.
    fn refine_lh(&self, facet: usize, start: [f64; 3], l: f64, hue_deg: f64) -> ([f64; 3], f64) {
        let h = hue_deg.to_radians();
        let (sin_h, cos_h) = h.sin_cos();
        let residual = |st: (f64, f64)| -> [f64; 2] {
            let lab = self.facet_lab(facet, [1.0 - st.0 - st.1, st.0, st.1]);
            [lab.l - l, -lab.a * sin_h + lab.b * cos_h]
        };
        let norm = |r: [f64; 2]| r[0].hypot(r[1]);
        let mut st = (start[1], start[2]);
        let mut r = residual(st);
        for _ in 0..12 {
            if norm(r) < 1e-11 {
                break;
            }
            let d = 1e-7;
            let rs = residual((st.0 + d, st.1));
            let rt = residual((st.0, st.1 + d));
            let j = [[(rs[0] - r[0]) / d, (rt[0] - r[0]) / d], [(rs[1] - r[1]) / d, (rt[1] - r[1]) / d]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-14 {
                break;
            }
            let ds = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let dt = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            let next = project_triangle((st.0 - ds, st.1 - dt));
            let rn = residual(next);
            if norm(rn) >= norm(r) {
                break;
            }
            st = next;
            r = rn;
        }
        ([1.0 - st.0 - st.1, st.0, st.1], norm(r))
    }
}

/// Per-facet subdivision so neighbor samples are about `spacing` ΔE76
/// apart along the longest (curved) edge.
fn facet_resolution(basis: &LinearBasis, v: [usize; 3], spacing: f64) -> usize {
    const STEPS: usize = 48;
    let longest = [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
        .iter()
        .map(|&(a, b)| {
            let mut prev = basis.lab(&[(a, 1.0)]);
            let mut len = 0.0;
            for s in 1..=STEPS {
                let t = s as f64 / STEPS as f64;
                let cur = basis.lab(&[(a, 1.0 - t), (b, t)]);
                len += delta_e76(&prev, &cur);
                prev = cur;
            }
            len
        })
        .fold(0.0, f64::max);
    ((longest / spacing).ceil() as usize).max(1)
}

fn facet_weights(v: [usize; 3], bary: [f64; 3]) -> Vec<(usize, f64)> {
    vec![(v[0], bary[0]), (v[1], bary[1]), (v[2], bary[2])]
}

fn project_triangle((s, t): (f64, f64)) -> (f64, f64) {
    let mut s = s.max(0.0);
    let mut t = t.max(0.0);
    let excess = s + t - 1.0;
    if excess > 0.0 {
        s -= excess / 2.0;
        t -= excess / 2.0;
        if s < 0.0 {
            t += s;
            s = 0.0;
        }
        if t < 0.0 {
            s += t;
            t = 0.0;
        }
    }
    (s, t)
}

/// Minimizes `objective` over one facet by compass search, starting at
/// `start` with initial step `step`.
fn minimize_on_facet(
    gamut: &GamutModel,
    facet: usize,
    start: [f64; 3],
    step: f64,
    objective: &impl Fn(&Lab) -> f64,
) -> ([f64; 3], f64) {
    let eval = |st: (f64, f64)| objective(&gamut.facet_lab(facet, [1.0 - st.0 - st.1, st.0, st.1]));
    let mut st = (start[1], start[2]);
    let mut best = eval(st);
    let mut h = step;
    const DIRS: [(f64, f64); 6] = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    while h > 1e-10 {
        let mut moved = false;
        for (ds, dt) in DIRS {
            let cand = project_triangle((st.0 + h * ds, st.1 + h * dt));
            if cand == st {
                continue;
            }
            let v = eval(cand);
            if v < best {
                best = v;
                st = cand;
                moved = true;
                break;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    ([1.0 - st.0 - st.1, st.0, st.1], best)
}

/// Closest surface point to `target` under `metric`: an exhaustive scan of
/// the surface sample followed by refinement on the best facets.
pub fn closest_on_gamut(target: &Lab, gamut: &GamutModel, metric: &(impl ColorDifference + ?Sized)) -> SurfaceMatch {
    let mut per_facet: Vec<(f64, usize, usize, usize)> = Vec::with_capacity(gamut.grids.len());
    for (f, g) in gamut.grids.iter().enumerate() {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..=g.m {
            for j in 0..=(g.m - i) {
                let d = metric.delta_e(target, &gamut.labs[g.index(i, j)]);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        per_facet.push((best.0, f, best.1, best.2));
    }
    per_facet.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let objective = |lab: &Lab| metric.delta_e(target, lab);
    let mut best: Option<(f64, usize, [f64; 3])> = None;
    let cutoff = per_facet[0].0 + 1.0;
    for &(d, f, i, j) in per_facet.iter().take(8) {
        if d > cutoff && best.is_some() {
            break;
        }
        let g = &gamut.grids[f];
        let (bary, v) = minimize_on_facet(gamut, f, g.bary(i, j), 1.0 / g.m as f64, &objective);
        if best.is_none_or(|b| v < b.0) {
            best = Some((v, f, bary));
        }
    }
    let (delta_e, facet, bary) = best.expect("a gamut has at least one facet");
    let p = gamut.facet_point(facet, bary);
    SurfaceMatch {
        lab: p.lab,
        npac: p.npac,
        facet,
        bary,
        delta_e,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub n_h: u32,
    pub n_l: u32,
    /// Hue step in degrees.
    pub step_h: f64,
    /// Lightness step in L* units.
    pub step_l: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            n_h: 3,
            n_l: 3,
            step_h: 4.0,
            step_l: 3.0,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_h < 1 || self.n_l < 1 {
            return Err(Error::InvalidParameter("n_h and n_l must be at least 1".into()));
        }
        if !(self.step_h > 0.0 && self.step_l > 0.0 && self.step_h.is_finite() && self.step_l.is_finite()) {
            return Err(Error::InvalidParameter("grid steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hue_index: i32,
    pub lightness_index: i32,
    /// Degrees relative to the grid center's hue.
    pub hue_offset: f64,
    /// L* units relative to the grid center's lightness.
    pub lightness_offset: f64,
    pub lab: Lab,
    pub srgb_hex: String,
    pub de_to_target: f64,
    pub npac: NPac,
    pub facet: usize,
    pub bary: [f64; 3],
}

impl GridCell {
    pub fn point(&self) -> SurfacePoint {
        SurfacePoint {
            lab: self.lab,
            npac: self.npac.clone(),
            facet: self.facet,
            bary: self.bary,
        }
    }
}

/// Hue × lightness alternatives on the gamut surface around a center. There
/// is no chroma axis: every cell is the most chromatic surface point at its
/// hue and lightness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativesGrid {
    pub target: Lab,
    pub params: GridParams,
    pub center: GridCell,
    /// Cells present, hue index varying fastest.
    pub cells: Vec<GridCell>,
    /// `(hue_index, lightness_index)` of cells the surface has no point for.
    pub ragged: Vec<(i32, i32)>,
}

impl AlternativesGrid {
    pub fn cell(&self, hue_index: i32, lightness_index: i32) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.hue_index == hue_index && c.lightness_index == lightness_index)
    }

    /// Looks a cell up by its offsets, within a small tolerance.
    pub fn cell_at_offsets(&self, hue_offset: f64, lightness_offset: f64) -> Option<&GridCell> {
        self.cells.iter().find(|c| {
            (c.hue_offset - hue_offset).abs() < 1e-6 && (c.lightness_offset - lightness_offset).abs() < 1e-6
        })
    }

    pub fn rows(&self) -> usize {
        2 * self.params.n_l as usize + 1
    }

    pub fn columns(&self) -> usize {
        2 * self.params.n_h as usize + 1
    }
}

fn make_cell(
    gamut: &GamutModel,
    point: &SurfacePoint,
    target: &Lab,
    metric: &(impl ColorDifference + ?Sized),
    hue_index: i32,
    lightness_index: i32,
    params: &GridParams,
) -> GridCell {
    GridCell {
        hue_index,
        lightness_index,
        hue_offset: hue_index as f64 * params.step_h,
        lightness_offset: lightness_index as f64 * params.step_l,
        lab: point.lab,
        srgb_hex: hex(lab_to_srgb8(point.lab, gamut.viewing_condition())),
        de_to_target: metric.delta_e(target, &point.lab),
        npac: point.npac.clone(),
        facet: point.facet,
        bary: point.bary,
    }
}

/// Alternatives around the closest surface match to `target`.
pub fn alternatives_grid(
    target: &Lab,
    gamut: &GamutModel,
    params: &GridParams,
    metric: &(impl ColorDifference + ?Sized),
) -> Result<AlternativesGrid> {
    params.validate()?;
    let center = closest_on_gamut(target, gamut, metric);
    grid_around(&center.point(), target, gamut, params, metric)
}

/// Alternatives around an arbitrary surface point, used when the user picks
/// a cell and the grid re-centers on it.
pub fn grid_around(
    center: &SurfacePoint,
    target: &Lab,
    gamut: &GamutModel,
    params: &GridParams,
    metric: &(impl ColorDifference + ?Sized),
) -> Result<AlternativesGrid> {
    params.validate()?;
    let l0 = center.lab.l;
    let h0 = center.lab.hue();
    let center_cell = make_cell(gamut, center, target, metric, 0, 0, params);
    let mut cells = Vec::new();
    let mut ragged = Vec::new();
    let (nh, nl) = (params.n_h as i32, params.n_l as i32);
    for j in -nl..=nl {
        for i in -nh..=nh {
            if i == 0 && j == 0 {
                cells.push(center_cell.clone());
                continue;
            }
            let l = l0 + j as f64 * params.step_l;
            let h = (h0 + i as f64 * params.step_h).rem_euclid(360.0);
            match gamut.surface_at(l, h) {
                Some(p) if (p.lab.l - l).abs() < 0.05 && hue_difference(h, p.lab.hue()).abs() < 0.5 => {
                    cells.push(make_cell(gamut, &p, target, metric, i, j, params))
                }
                _ => ragged.push((i, j)),
            }
        }
    }
    Ok(AlternativesGrid {
        target: *target,
        params: *params,
        center: center_cell,
        cells,
        ragged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshVertex {
    pub lab: [f64; 3],
    pub np_id: NpId,
}

/// Hull mesh for rendering: vertex NP colors and facet triangles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamutMesh {
    pub vertices: Vec<MeshVertex>,
    pub facets: Vec<[usize; 3]>,
}

/// What a gamut cache file stores; the surface sample is rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GamutDefinition {
    pub options: GamutOptions,
    pub table: NpTable,
}

impl GamutDefinition {
    pub fn of(model: &GamutModel) -> Self {
        GamutDefinition {
            options: model.options,
            table: model.table.clone(),
        }
    }

    pub fn build(&self, vc: &ViewingCondition) -> Result<GamutModel> {
        GamutModel::build(&self.table, self.table.yn(), vc, self.options)
    }
}
