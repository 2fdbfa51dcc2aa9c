use super::conditional::{mc_state, rect_prob, ConditionalMixture, McSettings, SKIP_WEIGHT};
use super::{CurveAxis, CurveEstimate};
use crate::dist::{interval_prob, ProbEstimate};
use crate::gibbs::{DrawStore, Snapshot};
use crate::model::CutoffGrid;
use crate::{Error, Result};

fn check_category(cutoffs: &CutoffGrid, j: usize, l: u32) -> Result<()> {
    if j >= cutoffs.dims() {
        return Err(Error::invalid(format!("ordinal dimension {j} out of range")));
    }
    if l < 1 || l > cutoffs.category_count(j) {
        return Err(Error::invalid(format!(
            "category {l} out of range 1..={} for dimension {j}",
            cutoffs.category_count(j)
        )));
    }
    Ok(())
}

fn cell_limits(cutoffs: &CutoffGrid, dims: &[usize], cells: &[u32]) -> (Vec<f64>, Vec<f64>) {
    dims.iter().zip(cells).map(|(&j, &c)| cutoffs.interval(j, c)).unzip()
}

fn cell_prob_given(
    snap: &Snapshot,
    k: usize,
    cutoffs: &CutoffGrid,
    cells: &[u32],
    given: &[usize],
    x: &[f64],
    mc: Option<&McSettings>,
) -> Result<ProbEstimate> {
    if cells.len() != k {
        return Err(Error::invalid(format!("expected {k} categories, got {}", cells.len())));
    }
    for (j, &c) in cells.iter().enumerate() {
        check_category(cutoffs, j, c)?;
    }
    let dims: Vec<usize> = (0..k).collect();
    let cm = ConditionalMixture::new(snap, k, &dims, given)?;
    let (lo, hi) = cell_limits(cutoffs, &dims, cells);
    let mut mc = mc_state(mc);
    let mut weights = Vec::with_capacity(cm.len());
    cm.weights_at(x, &mut weights);
    let (mut est, mut var) = (0.0, 0.0);
    for (r, &w) in weights.iter().enumerate() {
        if w < SKIP_WEIGHT {
            continue;
        }
        let p = rect_prob(&lo, &hi, &cm.mean_at(r, x), cm.cov(r), &mut mc)?;
        est += w * p.estimate;
        var += (w * p.std_error).powi(2);
    }
    Ok(ProbEstimate {
        estimate: est,
        std_error: var.sqrt(),
    })
}

/// `Pr(Y = cells | x)` under one snapshot, conditioning on every covariate.
/// Exact for `k <= 2`; otherwise Monte Carlo with `mc`.
pub fn joint_cell_prob(
    snap: &Snapshot,
    k: usize,
    cutoffs: &CutoffGrid,
    cells: &[u32],
    x: &[f64],
    mc: Option<&McSettings>,
) -> Result<ProbEstimate> {
    let p = snap.dim() - k;
    if x.len() != p || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("expected {p} finite covariate values")));
    }
    let given: Vec<usize> = (0..p).collect();
    cell_prob_given(snap, k, cutoffs, cells, &given, x, mc)
}

/// `Pr(Y = cells)` with every covariate integrated out.
pub fn x_free_cell_prob(
    snap: &Snapshot,
    k: usize,
    cutoffs: &CutoffGrid,
    cells: &[u32],
    mc: Option<&McSettings>,
) -> Result<ProbEstimate> {
    cell_prob_given(snap, k, cutoffs, cells, &[], &[], mc)
}

/// `Pr(Y_j = l | x)` along a covariate axis.
pub fn marginal_curve(store: &DrawStore, j: usize, l: u32, axis: &CurveAxis) -> Result<CurveEstimate> {
    let (k, p) = (store.meta.k, store.meta.p);
    let cutoffs = &store.meta.cutoffs;
    check_category(cutoffs, j, l)?;
    axis.validate(p)?;
    let given = axis.given(p);
    let (lo, hi) = cutoffs.interval(j, l);
    let points: Vec<Vec<f64>> = (0..axis.values.len()).map(|g| axis.point(g)).collect();
    let mut weights = Vec::new();
    let draws = store
        .snapshots
        .iter()
        .map(|snap| {
            let cm = ConditionalMixture::new(snap, k, &[j], &given)?;
            points
                .iter()
                .map(|x| {
                    cm.mix(x, &mut weights, |_, mean, cov| {
                        let sd = cov[(0, 0)].sqrt();
                        Ok(interval_prob((lo - mean[0]) / sd, (hi - mean[0]) / sd))
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveEstimate::from_draws(axis.values.clone(), draws))
}

/// Denominators below this are reported as unsupported configurations.
const MIN_EVENT_PROB: f64 = 1e-300;

/// Density of covariate `covariate` given the ordinal event `event`
/// (pairs of dimension and category), other covariates integrated out.
pub fn inverse_covariate_density(
    store: &DrawStore,
    event: &[(usize, u32)],
    covariate: usize,
    grid: &[f64],
    mc: Option<&McSettings>,
) -> Result<CurveEstimate> {
    let (k, p) = (store.meta.k, store.meta.p);
    let cutoffs = &store.meta.cutoffs;
    if event.is_empty() {
        return Err(Error::invalid("inverse density needs at least one ordinal outcome"));
    }
    let axis = CurveAxis::marginal(covariate, grid.to_vec());
    axis.validate(p)?;
    let mut dims = Vec::with_capacity(event.len());
    for &(j, c) in event {
        check_category(cutoffs, j, c)?;
        if dims.contains(&j) {
            return Err(Error::invalid(format!("dimension {j} listed twice in the event")));
        }
        dims.push(j);
    }
    let cats: Vec<u32> = event.iter().map(|e| e.1).collect();
    let (lo, hi) = cell_limits(cutoffs, &dims, &cats);
    let mut mc = mc_state(mc);
    let mut weights = Vec::new();
    let draws = store
        .snapshots
        .iter()
        .map(|snap| {
            let joint = ConditionalMixture::new(snap, k, &dims, &[covariate])?;
            let marginal = ConditionalMixture::new(snap, k, &dims, &[])?;
            let denom = marginal.mix(&[], &mut weights, |_, m, c| Ok(rect_prob(&lo, &hi, m, c, &mut mc)?.estimate))?;
            grid.iter()
                .map(|&x| {
                    if !(denom >= MIN_EVENT_PROB) {
                        return Ok(f64::NAN);
                    }
                    let log_fx = joint.weights_at(&[x], &mut weights);
                    let mut acc = 0.0;
                    for (r, &w) in weights.iter().enumerate() {
                        if w >= SKIP_WEIGHT {
                            acc += w * rect_prob(&lo, &hi, &joint.mean_at(r, &[x]), joint.cov(r), &mut mc)?.estimate;
                        }
                    }
                    Ok(log_fx.exp() * acc / denom)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveEstimate::from_draws(grid.to_vec(), draws))
}

/// `Pr(Y_j = l | W = w)` for each level `w` of the ordinally recorded
/// covariate dimension `w_dim`, covariates integrated out.
pub fn ordinal_covariate_curve(store: &DrawStore, j: usize, l: u32, w_dim: usize, levels: &[u32]) -> Result<CurveEstimate> {
    let k = store.meta.k;
    let cutoffs = &store.meta.cutoffs;
    check_category(cutoffs, j, l)?;
    if w_dim >= k || !store.meta.ordinal_covariate_flags.get(w_dim).copied().unwrap_or(false) {
        return Err(Error::invalid(format!("dimension {w_dim} is not an ordinal covariate")));
    }
    if j == w_dim {
        return Err(Error::invalid("response and ordinal covariate must differ"));
    }
    for &w in levels {
        check_category(cutoffs, w_dim, w)?;
    }
    let (ylo, yhi) = cutoffs.interval(j, l);
    let mut weights = Vec::new();
    let mut none = None;
    let draws = store
        .snapshots
        .iter()
        .map(|snap| {
            let pair = ConditionalMixture::new(snap, k, &[j, w_dim], &[])?;
            levels
                .iter()
                .map(|&w| {
                    let (wlo, whi) = cutoffs.interval(w_dim, w);
                    let joint = pair.mix(&[], &mut weights, |_, m, c| {
                        Ok(rect_prob(&[ylo, wlo], &[yhi, whi], m, c, &mut none)?.estimate)
                    })?;
                    let marg = pair.mix(&[], &mut weights, |_, m, c| {
                        let sd = c[(1, 1)].sqrt();
                        Ok(interval_prob((wlo - m[1]) / sd, (whi - m[1]) / sd))
                    })?;
                    Ok(if marg >= MIN_EVENT_PROB { joint / marg } else { f64::NAN })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveEstimate::from_draws(levels.iter().map(|&w| w as f64).collect(), draws))
}
