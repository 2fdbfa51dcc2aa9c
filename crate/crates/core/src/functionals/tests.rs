use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dist::normal;
use crate::gibbs::{DrawStore, Snapshot};
use crate::model::{default_cutoffs, Atom, BaseParams, CutoffGrid};

fn snap(weights: Vec<f64>, atoms: Vec<(DVector<f64>, DMatrix<f64>)>) -> Snapshot {
    let d = atoms[0].0.len();
    Snapshot {
        weights,
        atoms: atoms.into_iter().map(|(mean, cov)| Atom { mean, cov }).collect(),
        base: BaseParams {
            m: DVector::zeros(d),
            v: DMatrix::identity(d, d),
            s: DMatrix::identity(d, d),
        },
        alpha: 1.0,
        occupied: 1,
    }
}

fn store(snaps: Vec<Snapshot>, cutoffs: CutoffGrid) -> DrawStore {
    DrawStore::from_snapshots(snaps, cutoffs, vec![]).unwrap()
}

fn two_component_k1() -> Snapshot {
    snap(
        vec![0.35, 0.65],
        vec![
            (dvector![-0.5, 1.0], dmatrix![1.0, 0.6; 0.6, 2.0]),
            (dvector![1.0, 3.0], dmatrix![0.5, -0.3; -0.3, 1.0]),
        ],
    )
}

fn two_component_k2() -> Snapshot {
    snap(
        vec![0.4, 0.6],
        vec![
            (dvector![0.2, -0.3, 1.0], dmatrix![1.0, 0.5, 0.3; 0.5, 1.2, -0.2; 0.3, -0.2, 2.0]),
            (dvector![-0.8, 0.9, 2.5], dmatrix![0.7, -0.3, 0.1; -0.3, 0.9, 0.4; 0.1, 0.4, 1.0]),
        ],
    )
}

#[test]
fn single_component_is_probit_probability() {
    let s = snap(vec![1.0], vec![(dvector![0.3, 1.0], dmatrix![1.0, 0.5; 0.5, 2.0])]);
    let cut = default_cutoffs(&[3], 1.0).unwrap();
    let x = 2.0;
    // z | x ~ N(0.3 + 0.25 (x - 1), 1 - 0.125)
    let (m, sd) = (0.3 + 0.25 * (x - 1.0), (0.875f64).sqrt());
    let p = joint_cell_prob(&s, 1, &cut, &[2], &[x], None).unwrap();
    let expect = normal::cdf((1.0 - m) / sd) - normal::cdf((-1.0 - m) / sd);
    assert!((p.estimate - expect).abs() < 1e-14);
    assert_eq!(p.std_error, 0.0);
}

#[test]
fn cell_probabilities_sum_to_one() {
    let cut1 = default_cutoffs(&[4], 1.5).unwrap();
    let s1 = two_component_k1();
    for x in [-3.0, 0.0, 2.5, 9.0] {
        let total: f64 = (1..=4).map(|l| joint_cell_prob(&s1, 1, &cut1, &[l], &[x], None).unwrap().estimate).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
    let cut2 = default_cutoffs(&[3, 3], 1.0).unwrap();
    let s2 = two_component_k2();
    for x in [-1.0, 1.7, 4.0] {
        let mut total = 0.0;
        for a in 1..=3 {
            for b in 1..=3 {
                let p = joint_cell_prob(&s2, 2, &cut2, &[a, b], &[x], None).unwrap().estimate;
                assert!(p >= 0.0);
                total += p;
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

#[test]
fn three_dimensional_cells_use_monte_carlo() {
    let cut = default_cutoffs(&[2, 2, 2], 1.0).unwrap();
    let s = snap(vec![1.0], vec![(DVector::zeros(4), DMatrix::identity(4, 4))]);
    assert!(joint_cell_prob(&s, 3, &cut, &[1, 1, 1], &[0.0], None).is_err());
    let mc = McSettings { n_samples: 50_000, seed: 3 };
    let p = joint_cell_prob(&s, 3, &cut, &[1, 1, 1], &[0.0], Some(&mc)).unwrap();
    assert!(p.std_error > 0.0);
    assert!((p.estimate - 0.125).abs() < 3.0 * p.std_error);
}

#[test]
fn marginalized_covariates_reduce_to_prior_weights() {
    let s = two_component_k2();
    let cut = default_cutoffs(&[3, 3], 1.0).unwrap();
    for (a, b) in [(1, 1), (2, 3), (3, 2)] {
        let got = x_free_cell_prob(&s, 2, &cut, &[a, b], None).unwrap().estimate;
        let mut expect = 0.0;
        for (w, atom) in s.weights.iter().zip(&s.atoms) {
            let (lo_a, hi_a) = cut.interval(0, a);
            let (lo_b, hi_b) = cut.interval(1, b);
            let sub = atom.cov.view((0, 0), (2, 2)).into_owned();
            let mu = atom.mean.rows(0, 2).into_owned();
            expect += w * crate::dist::bvn_rect_prob(lo_a, hi_a, lo_b, hi_b, &mu, &sub).unwrap();
        }
        assert!((got - expect).abs() < 1e-12);
    }
}

#[test]
fn flat_curves_for_independent_standard_component() {
    let s = snap(vec![1.0], vec![(dvector![0.0, 5.0], dmatrix![1.0, 0.0; 0.0, 4.0])]);
    let st = store(vec![s], default_cutoffs(&[3], 1.0).unwrap());
    let axis = CurveAxis::marginal(0, vec![0.0, 5.0, 11.0]);
    let expect = [0.158655253931457, 0.682689492137086, 0.158655253931457];
    for (l, e) in (1..=3).zip(expect) {
        let c = marginal_curve(&st, 0, l, &axis).unwrap();
        for v in &c.draws[0] {
            assert!((v - e).abs() < 1e-12);
        }
    }
}

#[test]
fn curves_sum_to_one_and_match_cell_marginalization() {
    let cut = default_cutoffs(&[3, 3], 1.0).unwrap();
    let st = store(vec![two_component_k2(), two_component_k2()], cut.clone());
    let grid: Vec<f64> = (0..10).map(|i| -2.0 + 0.7 * i as f64).collect();
    let axis = CurveAxis::marginal(0, grid.clone());
    let curves: Vec<CurveEstimate> = (1..=3).map(|l| marginal_curve(&st, 0, l, &axis).unwrap()).collect();
    for g in 0..grid.len() {
        let total: f64 = curves.iter().map(|c| c.draws[0][g]).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for l in 1..=3u32 {
            let marg: f64 = (1..=3)
                .map(|b| joint_cell_prob(&st.snapshots[0], 2, &cut, &[l, b], &[grid[g]], None).unwrap().estimate)
                .sum();
            assert!((marg - curves[l as usize - 1].draws[0][g]).abs() < 1e-9);
        }
    }
}

#[test]
fn single_covariate_curve_integrates_other_covariates() {
    // with p = 2, conditioning on x1 alone must equal the 2-D model with x2 dropped
    let full = snap(
        vec![0.5, 0.5],
        vec![
            (dvector![0.0, 1.0, -1.0], dmatrix![1.0, 0.4, 0.2; 0.4, 1.0, 0.3; 0.2, 0.3, 1.5]),
            (dvector![1.0, -1.0, 2.0], dmatrix![0.8, -0.2, 0.1; -0.2, 0.6, 0.0; 0.1, 0.0, 1.0]),
        ],
    );
    let dropped = snap(
        vec![0.5, 0.5],
        vec![
            (dvector![0.0, 1.0], dmatrix![1.0, 0.4; 0.4, 1.0]),
            (dvector![1.0, -1.0], dmatrix![0.8, -0.2; -0.2, 0.6]),
        ],
    );
    let cut = default_cutoffs(&[3], 1.0).unwrap();
    let a = marginal_curve(&store(vec![full], cut.clone()), 0, 2, &CurveAxis::marginal(0, vec![-1.0, 0.5, 2.0])).unwrap();
    let b = marginal_curve(&store(vec![dropped], cut), 0, 2, &CurveAxis::marginal(0, vec![-1.0, 0.5, 2.0])).unwrap();
    for (u, v) in a.draws[0].iter().zip(&b.draws[0]) {
        assert!((u - v).abs() < 1e-14);
    }
}

#[test]
fn category_out_of_range() {
    let st = store(vec![two_component_k1()], default_cutoffs(&[3], 1.0).unwrap());
    let axis = CurveAxis::marginal(0, vec![0.0]);
    assert!(marginal_curve(&st, 0, 4, &axis).is_err());
    assert!(marginal_curve(&st, 0, 0, &axis).is_err());
    assert!(marginal_curve(&st, 1, 1, &axis).is_err());
}

#[test]
fn inverse_density_independence() {
    let s = snap(
        vec![0.3, 0.7],
        vec![
            (dvector![0.0, 1.0], dmatrix![1.0, 0.0; 0.0, 2.0]),
            (dvector![0.0, 1.0], dmatrix![1.0, 0.0; 0.0, 2.0]),
        ],
    );
    let st = store(vec![s], default_cutoffs(&[3], 1.0).unwrap());
    let grid = vec![-2.0, 0.0, 1.0, 3.5];
    for l in 1..=3 {
        let c = inverse_covariate_density(&st, &[(0, l)], 0, &grid, None).unwrap();
        for (g, &x) in grid.iter().enumerate() {
            let fx = (normal::ln_pdf((x - 1.0) / 2f64.sqrt()) - 0.5 * 2f64.ln()).exp();
            assert!((c.draws[0][g] - fx).abs() < 1e-13);
        }
    }
}

#[test]
fn inverse_density_single_component_quadrature() {
    let s = snap(vec![1.0], vec![(dvector![0.2, 1.0], dmatrix![1.0, 0.7; 0.7, 1.5])]);
    let cut = default_cutoffs(&[3], 1.0).unwrap();
    let st = store(vec![s], cut);
    // Bayes rule with P(y) from trapezoid quadrature of N(x) P(y | x)
    let fx = |x: f64| (normal::ln_pdf((x - 1.0) / 1.5f64.sqrt()) - 0.5 * 1.5f64.ln()).exp();
    let pyx = |x: f64| {
        let m = 0.2 + 0.7 / 1.5 * (x - 1.0);
        let sd = (1.0 - 0.49 / 1.5f64).sqrt();
        normal::sf((1.0 - m) / sd)
    };
    let h = 1e-3;
    let py: f64 = (0..20_000).map(|i| -9.0 + h * (i as f64 + 0.5)).map(|x| fx(x) * pyx(x) * h).sum();
    let grid = vec![-1.0, 0.5, 2.0, 4.0];
    let c = inverse_covariate_density(&st, &[(0, 3)], 0, &grid, None).unwrap();
    for (g, &x) in grid.iter().enumerate() {
        assert!((c.draws[0][g] - fx(x) * pyx(x) / py).abs() < 1e-8);
    }
}

#[test]
fn inverse_density_normalizes() {
    let st = store(vec![two_component_k1()], default_cutoffs(&[3], 1.0).unwrap());
    let grid: Vec<f64> = (0..=2000).map(|i| -12.0 + 0.01 * i as f64).collect();
    let c = inverse_covariate_density(&st, &[(0, 1)], 0, &grid, None).unwrap();
    let m = c.means();
    let integral: f64 = m.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.01).sum();
    assert!((integral - 1.0).abs() < 0.01, "{integral}");
}

#[test]
fn inverse_density_flags_impossible_event() {
    let s = snap(vec![1.0], vec![(dvector![-60.0, 1.0], dmatrix![1.0, 0.0; 0.0, 1.0])]);
    let st = store(vec![s], default_cutoffs(&[3], 1.0).unwrap());
    let c = inverse_covariate_density(&st, &[(0, 3)], 0, &[0.0, 1.0], None).unwrap();
    assert_eq!(c.flagged, 2);
}

fn ordinal_store(snaps: Vec<Snapshot>) -> DrawStore {
    DrawStore::from_snapshots(snaps, default_cutoffs(&[3, 4], 1.0).unwrap(), vec![false, true]).unwrap()
}

#[test]
fn ordinal_covariate_curve_sums_and_independence() {
    let st = ordinal_store(vec![two_component_k2()]);
    let levels = [1, 2, 3, 4];
    let curves: Vec<_> = (1..=3).map(|l| ordinal_covariate_curve(&st, 0, l, 1, &levels).unwrap()).collect();
    for g in 0..4 {
        let total: f64 = curves.iter().map(|c| c.draws[0][g]).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let indep = snap(vec![1.0], vec![(dvector![0.2, 0.5, 0.0], DMatrix::identity(3, 3))]);
    let c = ordinal_covariate_curve(&ordinal_store(vec![indep]), 0, 2, 1, &levels).unwrap();
    for v in &c.draws[0] {
        assert!((v - c.draws[0][0]).abs() < 1e-12);
    }
    assert!(ordinal_covariate_curve(&st, 1, 1, 0, &levels).is_err());
}

#[test]
fn polychoric_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ident = snap(vec![0.5, 0.5], vec![(DVector::zeros(3), DMatrix::identity(3, 3)); 2]);
    assert_eq!(polychoric_draw(&ident, 2, 0, 1, &mut rng).unwrap(), 0.0);
    let one = snap(vec![1.0], vec![(DVector::zeros(3), dmatrix![2.0, 1.4, 0.0; 1.4, 2.0, 0.0; 0.0, 0.0, 1.0])]);
    let v = polychoric_draw(&one, 2, 0, 1, &mut rng).unwrap();
    assert!((v - 0.7).abs() < 1e-15);
    let two = snap(
        vec![0.25, 0.75],
        vec![
            (DVector::zeros(2), dmatrix![1.0, -0.5; -0.5, 1.0]),
            (DVector::zeros(2), dmatrix![1.0, 0.9; 0.9, 1.0]),
        ],
    );
    let st = DrawStore::from_snapshots(vec![two], default_cutoffs(&[3, 3], 1.0).unwrap(), vec![]).unwrap();
    let draws = polychoric_draws(&st, 0, 1, 100_000, 2).unwrap();
    let frac = draws.iter().filter(|&&v| (v + 0.5).abs() < 1e-12).count() as f64 / 1e5;
    assert!((frac - 0.25).abs() < 0.01);
    assert!(draws.iter().all(|&v| (v + 0.5).abs() < 1e-12 || (v - 0.9).abs() < 1e-12));
}

#[test]
fn agreement_limits() {
    let cut = default_cutoffs(&[5, 5], 1.0).unwrap();
    let rho = 0.999_999_9;
    let comonotone = snap(vec![1.0], vec![(dvector![0.0, 0.0, 0.0], dmatrix![1.0, rho, 0.0; rho, 1.0, 0.0; 0.0, 0.0, 1.0])]);
    let st = store(vec![comonotone], cut);
    let axis = CurveAxis::marginal(0, vec![-1.0, 0.0, 1.0]);
    let c = agreement_prob_curve(&st, 0, 1, &axis, AgreementMode::Exact).unwrap();
    for v in &c.draws[0] {
        assert!(*v > 0.995, "{v}");
    }

    // independent standard normals with equiprobable categories: sum q_c^2 = 1 / C
    let c_count = 4u32;
    let interior: Vec<f64> = (1..c_count).map(|c| normal::quantile(c as f64 / c_count as f64)).collect();
    let cut = CutoffGrid::new(vec![interior.clone(), interior]).unwrap();
    let indep = snap(vec![1.0], vec![(DVector::zeros(3), DMatrix::identity(3, 3))]);
    let st = store(vec![indep], cut);
    let exact = agreement_prob_curve(&st, 0, 1, &axis, AgreementMode::Exact).unwrap();
    for v in &exact.draws[0] {
        assert!((v - 0.25).abs() < 1e-12, "{v}");
    }
    // within one: 4 diagonal + 6 adjacent cells of 1/16
    let within = agreement_prob_curve(&st, 0, 1, &axis, AgreementMode::WithinOne).unwrap();
    for v in &within.draws[0] {
        assert!((v - 10.0 / 16.0).abs() < 1e-12, "{v}");
    }
}

#[test]
fn agreement_table_identities() {
    let cut = default_cutoffs(&[10, 10, 10], 4.5).unwrap();
    let indep = snap(vec![1.0], vec![(DVector::zeros(4), DMatrix::identity(4, 4))]);
    let st = store(vec![indep.clone()], cut.clone());
    let sets = vec![
        ("H".to_string(), vec![8, 9, 10]),
        ("L".to_string(), vec![1, 2, 3]),
        ("all".to_string(), (1..=10).collect()),
    ];
    let t = agreement_table(&st, &[0, 1, 2], &sets).unwrap();
    assert_eq!(t.events.len(), 9);
    assert_eq!(t.cells.len(), 9 * 6);
    let pr_h = normal::sf(cut.gamma(0, 7));
    for given in ["H", "L", "all"] {
        let all = t.lookup((0, given), (1, "all")).unwrap();
        assert!((all.summary.mean - 1.0).abs() < 1e-12);
        let h = t.lookup((0, given), (2, "H")).unwrap();
        assert!((h.summary.mean - pr_h).abs() < 1e-12);
    }

    let dep = snap(
        vec![1.0],
        vec![(DVector::zeros(4), dmatrix![1.0, 0.6, 0.3, 0.0; 0.6, 1.0, 0.2, 0.0; 0.3, 0.2, 1.0, 0.0; 0.0, 0.0, 0.0, 1.0])],
    );
    let t = agreement_table(&store(vec![dep], cut), &[0, 1], &sets[..2]).unwrap();
    let hh = t.lookup((0, "H"), (1, "H")).unwrap().summary.mean;
    let hl = t.lookup((0, "H"), (1, "L")).unwrap().summary.mean;
    assert!(hh > pr_h && hl < pr_h);
    assert!(agreement_table(&st, &[0], &sets).is_err());
    assert!(agreement_table(&st, &[0, 1], &[("x".into(), vec![11])]).is_err());
}

#[test]
fn default_grid_extends_range() {
    let g = default_grid(2.0, 10.0, 50);
    assert_eq!(g.len(), 50);
    assert!((g[0] - 1.6).abs() < 1e-12 && (g[49] - 10.4).abs() < 1e-12);
}
