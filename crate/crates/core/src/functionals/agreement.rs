use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conditional::{ConditionalMixture, SKIP_WEIGHT};
use super::{CurveAxis, CurveEstimate};
use crate::dist::{bvn_lower, bvn_rect_prob, interval_prob};
use crate::gibbs::{DrawStore, Snapshot};
use crate::model::CutoffGrid;
use crate::summary::{summarize, Summary};
use crate::{Error, Result};

fn check_pair(k: usize, a: usize, b: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid("pairwise functionals need at least two ordinal dimensions"));
    }
    if a >= k || b >= k || a == b {
        return Err(Error::invalid(format!("invalid dimension pair ({a}, {b}) for k = {k}")));
    }
    Ok(())
}

/// Correlation of `(Z_a, Z_b)` within a component drawn by weight.
pub fn polychoric_draw<R: Rng + ?Sized>(snap: &Snapshot, k: usize, a: usize, b: usize, rng: &mut R) -> Result<f64> {
    check_pair(k, a, b)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut r = snap.weights.len() - 1;
    for (l, &p) in snap.weights.iter().enumerate() {
        acc += p;
        if u < acc {
            r = l;
            break;
        }
    }
    let s = &snap.atoms[r].cov;
    Ok(s[(a, b)] / (s[(a, a)] * s[(b, b)]).sqrt())
}

/// `per_snapshot` polychoric draws from every snapshot, in snapshot order.
pub fn polychoric_draws(store: &DrawStore, a: usize, b: usize, per_snapshot: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(store.len() * per_snapshot);
    for snap in &store.snapshots {
        for _ in 0..per_snapshot {
            out.push(polychoric_draw(snap, store.meta.k, a, b, &mut rng)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementMode {
    /// `Y_a = Y_b`.
    Exact,
    /// `|Y_a - Y_b| <= 1`.
    WithinOne,
}

/// Lower-orthant probabilities on the cut-off lattice of one bivariate
/// normal component, filled on demand.
struct Lattice<'a> {
    ga: Vec<f64>,
    gb: Vec<f64>,
    rho: f64,
    cache: &'a mut Vec<f64>,
}

impl<'a> Lattice<'a> {
    fn new(
        cutoffs: &CutoffGrid,
        a: usize,
        b: usize,
        mean: &nalgebra::DVector<f64>,
        cov: &nalgebra::DMatrix<f64>,
        cache: &'a mut Vec<f64>,
    ) -> Self {
        let (sa, sb) = (cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt());
        let ca = cutoffs.category_count(a) as usize;
        let cb = cutoffs.category_count(b) as usize;
        let ga = (0..=ca).map(|l| (cutoffs.gamma(a, l) - mean[0]) / sa).collect();
        let gb = (0..=cb).map(|l| (cutoffs.gamma(b, l) - mean[1]) / sb).collect();
        cache.clear();
        cache.resize((ca + 1) * (cb + 1), f64::NAN);
        Lattice {
            ga,
            gb,
            rho: cov[(0, 1)] / (sa * sb),
            cache,
        }
    }

    fn lower(&mut self, i: usize, j: usize) -> f64 {
        let idx = i * self.gb.len() + j;
        if self.cache[idx].is_nan() {
            self.cache[idx] = bvn_lower(self.ga[i], self.gb[j], self.rho);
        }
        self.cache[idx]
    }

    /// `P(Y_a = c, Y_b = d)` for 1-based categories.
    fn cell(&mut self, c: usize, d: usize) -> f64 {
        (self.lower(c, d) - self.lower(c - 1, d) - self.lower(c, d - 1) + self.lower(c - 1, d - 1)).max(0.0)
    }
}

/// `Pr(Y_a = Y_b | x)` or `Pr(|Y_a - Y_b| <= 1 | x)` along a covariate axis.
pub fn agreement_prob_curve(
    store: &DrawStore,
    a: usize,
    b: usize,
    axis: &CurveAxis,
    mode: AgreementMode,
) -> Result<CurveEstimate> {
    let (k, p) = (store.meta.k, store.meta.p);
    check_pair(k, a, b)?;
    axis.validate(p)?;
    let cutoffs = &store.meta.cutoffs;
    let ca = cutoffs.category_count(a) as usize;
    let cb = cutoffs.category_count(b) as usize;
    let shared = ca.min(cb);
    let given = axis.given(p);
    let points: Vec<Vec<f64>> = (0..axis.values.len()).map(|g| axis.point(g)).collect();
    let mut weights = Vec::new();
    let mut cache = Vec::new();
    let draws = store
        .snapshots
        .iter()
        .map(|snap| {
            let cm = ConditionalMixture::new(snap, k, &[a, b], &given)?;
            points
                .iter()
                .map(|x| {
                    cm.mix(x, &mut weights, |_, mean, cov| {
                        let mut lat = Lattice::new(cutoffs, a, b, mean, cov, &mut cache);
                        let mut acc = 0.0;
                        for c in 1..=shared {
                            acc += lat.cell(c, c);
                            if mode == AgreementMode::WithinOne {
                                if c > 1 {
                                    acc += lat.cell(c, c - 1);
                                }
                                if c < cb {
                                    acc += lat.cell(c, c + 1);
                                }
                            }
                        }
                        Ok(acc.min(1.0))
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveEstimate::from_draws(axis.values.clone(), draws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEvent {
    pub dim: usize,
    pub label: String,
    pub categories: Vec<u32>,
}

/// `Pr(target | given)` summarized over draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    /// Index into [`AgreementTable::events`] of the conditioning event.
    pub given: usize,
    /// Index of the event receiving probability.
    pub target: usize,
    pub summary: Summary,
    /// Draws where the conditioning event had negligible probability.
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub events: Vec<AgreementEvent>,
    pub cells: Vec<AgreementCell>,
}

impl AgreementTable {
    pub fn cell(&self, given: usize, target: usize) -> Option<&AgreementCell> {
        self.cells.iter().find(|c| c.given == given && c.target == target)
    }

    /// Looks a cell up by event dimensions and labels.
    pub fn lookup(&self, given: (usize, &str), target: (usize, &str)) -> Option<&AgreementCell> {
        let find = |(d, l): (usize, &str)| self.events.iter().position(|e| e.dim == d && e.label == l);
        self.cell(find(given)?, find(target)?)
    }
}

/// Maximal runs of consecutive categories as latent intervals.
fn runs(cutoffs: &CutoffGrid, dim: usize, cats: &[u32]) -> Vec<(f64, f64)> {
    let mut sorted = cats.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut end = start;
        while i + 1 < sorted.len() && sorted[i + 1] == end + 1 {
            i += 1;
            end = sorted[i];
        }
        out.push((cutoffs.interval(dim, start).0, cutoffs.interval(dim, end).1));
        i += 1;
    }
    out
}

/// Conditional agreement probabilities between every pair of events on
/// distinct dimensions. Events are `dims x sets`, dimension-major.
pub fn agreement_table(store: &DrawStore, dims: &[usize], sets: &[(String, Vec<u32>)]) -> Result<AgreementTable> {
    let k = store.meta.k;
    let cutoffs = &store.meta.cutoffs;
    if dims.len() < 2 {
        return Err(Error::invalid("agreement tables need at least two ordinal dimensions"));
    }
    for (i, &d) in dims.iter().enumerate() {
        if d >= k || dims[..i].contains(&d) {
            return Err(Error::invalid(format!("invalid or repeated dimension {d}")));
        }
    }
    if sets.is_empty() {
        return Err(Error::invalid("agreement tables need at least one category set"));
    }
    let mut events = Vec::new();
    for &d in dims {
        for (label, cats) in sets {
            if cats.is_empty() {
                return Err(Error::invalid(format!("category set {label} is empty")));
            }
            if let Some(c) = cats.iter().find(|&&c| c < 1 || c > cutoffs.category_count(d)) {
                return Err(Error::invalid(format!("category {c} of set {label} out of range for dimension {d}")));
            }
            events.push(AgreementEvent {
                dim: d,
                label: label.clone(),
                categories: cats.clone(),
            });
        }
    }
    let intervals: Vec<Vec<(f64, f64)>> = events.iter().map(|e| runs(cutoffs, e.dim, &e.categories)).collect();
    let pairs: Vec<(usize, usize)> = (0..events.len())
        .flat_map(|g| (0..events.len()).map(move |t| (g, t)))
        .filter(|&(g, t)| events[g].dim != events[t].dim)
        .collect();

    let mut values = vec![Vec::with_capacity(store.len()); pairs.len()];
    for snap in &store.snapshots {
        let n_atoms = snap.atoms.len();
        for (cell, &(g, t)) in pairs.iter().enumerate() {
            let (dg, dt) = (events[g].dim, events[t].dim);
            let mut joint = 0.0;
            let mut marg = 0.0;
            for r in 0..n_atoms {
                let pr = snap.weights[r];
                if pr < SKIP_WEIGHT {
                    continue;
                }
                let cov = &snap.atoms[r].cov;
                let mean = nalgebra::DVector::from_vec(vec![snap.atoms[r].mean[dg], snap.atoms[r].mean[dt]]);
                let sub = nalgebra::DMatrix::from_row_slice(
                    2,
                    2,
                    &[cov[(dg, dg)], cov[(dg, dt)], cov[(dt, dg)], cov[(dt, dt)]],
                );
                let sd = sub[(0, 0)].sqrt();
                for &(glo, ghi) in &intervals[g] {
                    marg += pr * interval_prob((glo - mean[0]) / sd, (ghi - mean[0]) / sd);
                    for &(tlo, thi) in &intervals[t] {
                        joint += pr * bvn_rect_prob(glo, ghi, tlo, thi, &mean, &sub)?;
                    }
                }
            }
            values[cell].push(if marg >= 1e-300 { (joint / marg).min(1.0) } else { f64::NAN });
        }
    }
    let cells = pairs
        .iter()
        .zip(values)
        .map(|(&(given, target), v)| AgreementCell {
            given,
            target,
            flagged: v.iter().filter(|x| x.is_nan()).count(),
            summary: summarize(&v),
        })
        .collect();
    Ok(AgreementTable { events, cells })
}
