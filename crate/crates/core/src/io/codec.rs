//! Column-wise binary persistence of draw stores.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "DPMO"                      magic, 4 bytes
//! version                     u32 (currently 1)
//! k, p, N, S, R               u32 each: ordinal dims, covariates,
//!                             components, snapshots, retained observations
//! meta_len                    u32, then meta_len bytes of JSON metadata
//! clamp_count                 u64
//! columns                     f64, each column holds S values in snapshot order
//! ```
//!
//! Columns in order, with `d = k + p` and `t = d (d + 1) / 2` upper-triangle
//! entries (row-major, `i <= j`):
//! `N` weights; `N d` atom means (component-major); `N t` atom covariances;
//! `d` base means; `t` entries of `V`; `t` entries of `S`; alpha; occupied
//! count; `R k` retained latent traces (observation-major).

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::dist::cholesky;
use crate::gibbs::{DrawMeta, DrawStore, Snapshot};
use crate::model::{Atom, BaseParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DPMO";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any header count, to reject absurd allocations early.
const MAX_COUNT: u32 = 1 << 24;

fn tri(d: usize) -> usize {
    d * (d + 1) / 2
}

fn upper(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    let d = m.nrows();
    (0..d).flat_map(move |i| (i..d).map(move |j| m[(i, j)]))
}

fn from_upper(vals: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut it = vals.iter();
    for i in 0..d {
        for j in i..d {
            let v = *it.next().expect("triangle length checked by caller");
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn encode_draws(store: &DrawStore) -> Result<Vec<u8>> {
    let meta = &store.meta;
    let (k, p, n_comp, s, r) = (meta.k, meta.p, meta.truncation, store.len(), meta.retained.len());
    let d = k + p;
    let meta_json = serde_json::to_vec(meta)?;
    for v in [k, p, n_comp, s, r, meta_json.len()] {
        if v > MAX_COUNT as usize {
            return Err(Error::Format(format!("count {v} exceeds the format limit")));
        }
    }
    let cols = n_comp * (1 + d + tri(d)) + d + 2 * tri(d) + 2 + r * k;
    let mut out = Vec::with_capacity(40 + meta_json.len() + 8 * cols * s);
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION as usize, k, p, n_comp, s, r, meta_json.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&store.clamp_count.to_le_bytes());

    let snaps = &store.snapshots;
    let mut col = |f: &dyn Fn(&Snapshot) -> f64| {
        for snap in snaps {
            out.extend_from_slice(&f(snap).to_le_bytes());
        }
    };
    for l in 0..n_comp {
        col(&|sn| sn.weights[l]);
    }
    for l in 0..n_comp {
        for i in 0..d {
            col(&|sn| sn.atoms[l].mean[i]);
        }
    }
    for l in 0..n_comp {
        for e in 0..tri(d) {
            col(&|sn| upper(&sn.atoms[l].cov).nth(e).unwrap_or(f64::NAN));
        }
    }
    for i in 0..d {
        col(&|sn| sn.base.m[i]);
    }
    for e in 0..tri(d) {
        col(&|sn| upper(&sn.base.v).nth(e).unwrap_or(f64::NAN));
    }
    for e in 0..tri(d) {
        col(&|sn| upper(&sn.base.s).nth(e).unwrap_or(f64::NAN));
    }
    col(&|sn| sn.alpha);
    col(&|sn| sn.occupied as f64);
    for trace in &store.latent_traces {
        for j in 0..k {
            for t in 0..s {
                out.extend_from_slice(&trace[t * k + j].to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn column(&mut self, s: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * s)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Decodes and validates a draw store. Never panics on malformed input.
pub fn decode_draws(bytes: &[u8]) -> Result<DrawStore> {
    let mut rd = Reader { buf: bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = rd.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let mut counts = [0usize; 6];
    for c in counts.iter_mut() {
        let v = rd.u32()?;
        if v > MAX_COUNT {
            return Err(Error::Format(format!("header count {v} is too large")));
        }
        *c = v as usize;
    }
    let [k, p, n_comp, s, r, meta_len] = counts;
    let meta: DrawMeta = serde_json::from_slice(rd.take(meta_len)?).map_err(|e| Error::Format(format!("metadata: {e}")))?;
    let d = k + p;
    if meta.k != k || meta.p != p || meta.truncation != n_comp || meta.retained.len() != r {
        return Err(Error::Format("metadata disagrees with the header".into()));
    }
    if k == 0 || n_comp == 0 || meta.cutoffs.dims() != k || meta.category_counts.len() != k {
        return Err(Error::Format("inconsistent ordinal dimensions".into()));
    }
    if (0..k).any(|j| meta.cutoffs.category_count(j) != meta.category_counts[j]) {
        return Err(Error::Format("category counts disagree with the cut-offs".into()));
    }
    if meta.ordinal_covariate_flags.len() != k
        || meta.retained_codes.len() != r
        || meta.retained_codes.iter().any(|c| {
            c.len() != k || c.iter().enumerate().any(|(j, &l)| l < 1 || l > meta.category_counts[j])
        })
    {
        return Err(Error::Format("retained observation metadata is inconsistent".into()));
    }
    let clamp_count = rd.u64()?;
    let cols = n_comp
        .checked_mul(1 + d + tri(d))
        .and_then(|c| c.checked_add(d + 2 * tri(d) + 2 + r * k))
        .ok_or_else(|| Error::Format("column count overflows".into()))?;
    let expected = cols.checked_mul(s).and_then(|v| v.checked_mul(8));
    if expected != Some(bytes.len() - rd.pos) {
        return Err(Error::Format("payload length disagrees with the header".into()));
    }

    let mut next_cols = |n: usize| -> Result<Vec<Vec<f64>>> { (0..n).map(|_| rd.column(s)).collect() };
    let weights = next_cols(n_comp)?;
    let means = next_cols(n_comp * d)?;
    let covs = next_cols(n_comp * tri(d))?;
    let m = next_cols(d)?;
    let v = next_cols(tri(d))?;
    let sm = next_cols(tri(d))?;
    let alpha = next_cols(1)?.remove(0);
    let occupied = next_cols(1)?.remove(0);
    let latent = next_cols(r * k)?;

    let mut snapshots = Vec::with_capacity(s);
    for t in 0..s {
        let atoms = (0..n_comp)
            .map(|l| {
                let mean = DVector::from_fn(d, |i, _| means[l * d + i][t]);
                let tv: Vec<f64> = (0..tri(d)).map(|e| covs[l * tri(d) + e][t]).collect();
                let cov = from_upper(&tv, d);
                if mean.iter().chain(&tv).any(|x| !x.is_finite()) {
                    return Err(Error::Format("non-finite atom parameter".into()));
                }
                cholesky(&cov, "stored atom covariance").map_err(|e| Error::Format(e.to_string()))?;
                Ok(Atom { mean, cov })
            })
            .collect::<Result<Vec<_>>>()?;
        let w: Vec<f64> = weights.iter().map(|c| c[t]).collect();
        let total: f64 = w.iter().sum();
        if w.iter().any(|x| !(*x >= 0.0)) || !((total - 1.0).abs() < 1e-9) {
            return Err(Error::Format("weights do not form a simplex".into()));
        }
        let occ = occupied[t];
        if !(occ >= 0.0 && occ <= n_comp as f64 && occ.fract() == 0.0) || !(alpha[t] > 0.0) {
            return Err(Error::Format("invalid alpha or occupied count".into()));
        }
        let pick = |cols: &[Vec<f64>]| cols.iter().map(|c| c[t]).collect::<Vec<f64>>();
        snapshots.push(Snapshot {
            weights: w,
            atoms,
            base: BaseParams {
                m: DVector::from_vec(pick(&m)),
                v: from_upper(&pick(&v), d),
                s: from_upper(&pick(&sm), d),
            },
            alpha: alpha[t],
            occupied: occ as usize,
        });
    }
    let latent_traces = (0..r)
        .map(|o| {
            let mut trace = Vec::with_capacity(s * k);
            for t in 0..s {
                trace.extend((0..k).map(|j| latent[o * k + j][t]));
            }
            trace
        })
        .collect();
    Ok(DrawStore {
        meta,
        snapshots,
        latent_traces,
        clamp_count,
    })
}

/// One row per snapshot with every stored parameter, for external tools.
pub fn write_draws_csv<W: Write>(store: &DrawStore, out: W) -> Result<()> {
    let (k, p, n_comp) = (store.meta.k, store.meta.p, store.meta.truncation);
    let d = k + p;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let mut header = vec!["snapshot".to_string(), "alpha".into(), "occupied".into()];
    header.extend((0..n_comp).map(|l| format!("w_{l}")));
    for l in 0..n_comp {
        header.extend((0..d).map(|i| format!("mu_{l}_{i}")));
        header.extend(pairs.iter().map(|(i, j)| format!("sigma_{l}_{i}_{j}")));
    }
    header.extend((0..d).map(|i| format!("m_{i}")));
    header.extend(pairs.iter().map(|(i, j)| format!("V_{i}_{j}")));
    header.extend(pairs.iter().map(|(i, j)| format!("S_{i}_{j}")));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for (t, sn) in store.snapshots.iter().enumerate() {
        let mut row = vec![t.to_string(), sn.alpha.to_string(), sn.occupied.to_string()];
        row.extend(sn.weights.iter().map(f64::to_string));
        for a in &sn.atoms {
            row.extend(a.mean.iter().map(f64::to_string));
            row.extend(upper(&a.cov).map(|v| v.to_string()));
        }
        row.extend(sn.base.m.iter().map(f64::to_string));
        row.extend(upper(&sn.base.v).map(|v| v.to_string()));
        row.extend(upper(&sn.base.s).map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
