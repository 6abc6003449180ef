mod common;

use common::{normal, orthogonal, rng, spd};
use envcore::linalg::{complete_basis, envelope_objective, minimize_envelope_objective, subspace_distance, sym_eigen_desc};
use envcore::{SemiOrthBasis, StiefelOptions, SymMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn sym(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::new(m).unwrap()
}

fn diag(v: &[f64]) -> SymMatrix {
    sym(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
}

fn unit(v: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_column_slice(v.len(), 1, v);
    let norm = m.norm();
    m / norm
}

/// Objective of a single direction `g`, evaluated from scratch.
fn quad_objective(g: &[f64; 3], m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> f64 {
    let q = |m: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g[i] * m[(i, j)] * g[j];
            }
        }
        s
    };
    q(m1).ln() + q(m2).ln()
}

fn sphere(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Brute-force minimum over the unit sphere in R^3: a `step` grid on the
/// upper hemisphere, then a fine grid around the best cells.
fn sphere_grid_min(m1: &DMatrix<f64>, m2: &DMatrix<f64>, step: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let nt = (pi / 2.0 / step).ceil() as usize;
    let np = (2.0 * pi / step).ceil() as usize;
    let mut cells: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..=nt {
        let theta = i as f64 * step;
        for j in 0..np {
            let phi = j as f64 * step;
            cells.push((quad_objective(&sphere(theta, phi), m1, m2), theta, phi));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = cells[0].0;
    for &(_, t0, p0) in cells.iter().take(8) {
        let fine = step / 100.0;
        for i in -100i32..=100 {
            for j in -100i32..=100 {
                let f = quad_objective(&sphere(t0 + i as f64 * fine, p0 + j as f64 * fine), m1, m2);
                best = best.min(f);
            }
        }
    }
    best
}

#[test]
fn objective_hand_examples() {
    let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let f = envelope_objective(&e1, &diag(&[1.0, 5.0]), &diag(&[4.0, 1.0])).unwrap();
    assert!((f - 4f64.ln()).abs() < 1e-12);

    let g = unit(&[1.0, 1.0, 1.0]);
    let f = envelope_objective(&g, &diag(&[1.0, 2.0, 3.0]), &SymMatrix::identity(3)).unwrap();
    assert!((f - 2f64.ln()).abs() < 1e-12);

    let f = envelope_objective(&DMatrix::identity(3, 3), &SymMatrix::identity(3), &SymMatrix::identity(3)).unwrap();
    assert!(f.abs() < 1e-15);
}

#[test]
fn objective_rejects_singular_reduction() {
    let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let singular = sym(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    assert!(envelope_objective(&e2, &singular, &SymMatrix::identity(2)).is_err());
}

#[test]
fn full_dimension_gives_identity_and_constant_objective() {
    let mut g = rng(3);
    let m1 = spd(&mut g, 3);
    let m2 = spd(&mut g, 3);
    let sol = minimize_envelope_objective(&sym(m1.clone()), &sym(m2.clone()), 3, &StiefelOptions::default()).unwrap();
    assert_eq!(sol.basis.matrix(), &DMatrix::<f64>::identity(3, 3));
    let expect = m1.determinant().ln() + m2.determinant().ln();
    assert!((sol.objective - expect).abs() < 1e-10);
}

#[test]
fn circle_grid_oracle_for_diagonal_pair() {
    let (m1, m2) = (diag(&[1.0, 5.0]), diag(&[4.0, 1.0]));
    let sol = minimize_envelope_objective(&m1, &m2, 1, &StiefelOptions::default()).unwrap();
    let e1 = SemiOrthBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
    assert!(subspace_distance(&sol.basis, &e1).unwrap() < 1e-6);
    assert!((sol.objective - 4f64.ln()).abs() < 1e-10);
    // e2 gives log 5 and every interior angle lies above log 4
    let mut grid_min = f64::INFINITY;
    let mut t = 0.0;
    while t < std::f64::consts::PI {
        let g = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        grid_min = grid_min.min(envelope_objective(&g, &m1, &m2).unwrap());
        t += 1e-3;
    }
    assert!(sol.objective <= grid_min + 1e-12);
    assert!(grid_min - sol.objective < 1e-6);
}

#[test]
fn equal_matrices_select_smallest_eigenvector() {
    let mut g = rng(11);
    let v = orthogonal(&mut g, 3);
    let m = &v * DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0, 3.5])) * v.transpose();
    let sol = minimize_envelope_objective(&sym(m.clone()), &sym(m.clone()), 1, &StiefelOptions::default()).unwrap();
    let smallest = SemiOrthBasis::from_span(&v.columns(0, 1).into_owned()).unwrap();
    assert!(subspace_distance(&sol.basis, &smallest).unwrap() < 1e-6);
    let grid = sphere_grid_min(&m, &m, 1e-2);
    assert!((sol.objective - grid).abs() < 1e-6, "optimizer {} grid {}", sol.objective, grid);
}

#[test]
fn sphere_grid_oracle_for_random_pairs() {
    for seed in 0..4 {
        let mut g = rng(100 + seed);
        let m1 = spd(&mut g, 3);
        let m2 = spd(&mut g, 3);
        let sol = minimize_envelope_objective(&sym(m1.clone()), &sym(m2.clone()), 1, &StiefelOptions::default()).unwrap();
        let grid = sphere_grid_min(&m1, &m2, 1e-3);
        assert!(sol.objective <= grid + 1e-9, "seed {seed}: optimizer {} grid {}", sol.objective, grid);
        assert!(grid - sol.objective < 1e-6, "seed {seed}: optimizer {} grid {}", sol.objective, grid);
    }
}

#[test]
fn complete_basis_examples() {
    let e1 = SemiOrthBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
    let c = complete_basis(&e1);
    assert!((c.matrix()[(1, 0)].abs() - 1.0).abs() < 1e-12);
    assert!(c.matrix()[(0, 0)].abs() < 1e-12);

    let first = SemiOrthBasis::new(DMatrix::identity(5, 2)).unwrap();
    let rest = complete_basis(&first);
    let expect = SemiOrthBasis::new(DMatrix::identity(5, 5).columns(2, 3).into_owned()).unwrap();
    assert!(subspace_distance(&rest, &expect).unwrap() < 1e-12);
}

#[test]
fn subspace_distance_examples() {
    let e1 = SemiOrthBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
    let e2 = SemiOrthBasis::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
    let d = SemiOrthBasis::new(unit(&[1.0, 1.0])).unwrap();
    assert_eq!(subspace_distance(&e1, &e1).unwrap(), 0.0);
    assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);
    // P_A - P_B = [[1/2, -1/2], [-1/2, -1/2]], Frobenius norm 1, over sqrt 2
    assert!((subspace_distance(&e1, &d).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
}

fn starts(m1: &DMatrix<f64>, m2: &DMatrix<f64>, u: usize) -> Vec<DMatrix<f64>> {
    let m2inv = m2.clone().try_inverse().unwrap();
    let mut out = Vec::new();
    for m in [m1.clone(), m2inv.clone(), m1 + &m2inv] {
        let (_, v) = sym_eigen_desc(&m);
        let r = v.ncols();
        out.push(v.columns(0, u).into_owned());
        out.push(v.columns(r - u, u).into_owned());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn objective_is_rotation_invariant(seed in any::<u64>(), r in 2usize..7, u_frac in 0.0f64..1.0) {
        let u = 1 + ((r - 1) as f64 * u_frac) as usize;
        let mut g = rng(seed);
        let m1 = sym(spd(&mut g, r));
        let m2 = sym(spd(&mut g, r));
        let basis = orthogonal(&mut g, r).columns(0, u).into_owned();
        let o = orthogonal(&mut g, u);
        let a = envelope_objective(&basis, &m1, &m2).unwrap();
        let b = envelope_objective(&(&basis * o), &m1, &m2).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn optimizer_descends_and_beats_every_start(seed in any::<u64>(), r in 2usize..7, u_frac in 0.0f64..1.0) {
        let u = 1 + ((r - 1) as f64 * u_frac) as usize;
        let mut g = rng(seed);
        let m1 = spd(&mut g, r);
        let m2 = spd(&mut g, r);
        let sol = minimize_envelope_objective(&sym(m1.clone()), &sym(m2.clone()), u, &StiefelOptions::default()).unwrap();
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "trace rose from {} to {}", w[0], w[1]);
        }
        let (s1, s2) = (sym(m1.clone()), sym(m2.clone()));
        for s in starts(&m1, &m2, u) {
            let f0 = envelope_objective(&s, &s1, &s2).unwrap();
            prop_assert!(sol.objective <= f0 + 1e-12);
        }
        let at_basis = envelope_objective(sol.basis.matrix(), &s1, &s2).unwrap();
        prop_assert!((at_basis - sol.objective).abs() < 1e-10);
    }

    #[test]
    fn minimizer_is_congruence_equivariant(seed in any::<u64>(), r in 2usize..6) {
        let mut g = rng(seed);
        let m1 = spd(&mut g, r);
        let m2 = spd(&mut g, r);
        let q = orthogonal(&mut g, r);
        let u = 1 + (seed as usize % (r - 1));
        // the span error scales like the square root of the objective tolerance
        let opts = StiefelOptions { tol: 1e-14, ..Default::default() };
        let a = minimize_envelope_objective(&sym(m1.clone()), &sym(m2.clone()), u, &opts).unwrap();
        let m1q = &q * &m1 * q.transpose();
        let m2q = &q * &m2 * q.transpose();
        let b = minimize_envelope_objective(&SymMatrix::from_symmetrized(&m1q), &SymMatrix::from_symmetrized(&m2q), u, &opts).unwrap();
        let mapped = SemiOrthBasis::from_span(&(&q * a.basis.matrix())).unwrap();
        prop_assert!((a.objective - b.objective).abs() < 1e-8);
        prop_assert!(subspace_distance(&mapped, &b.basis).unwrap() < 1e-6);
    }

    #[test]
    fn completion_is_orthonormal(seed in any::<u64>(), r in 2usize..9, u_frac in 0.0f64..1.0) {
        let u = ((r - 1) as f64 * u_frac) as usize + 1;
        let mut g = rng(seed);
        let b = SemiOrthBasis::from_span(&normal(&mut g, r, u)).unwrap();
        let b0 = complete_basis(&b);
        prop_assert_eq!(b0.ncols(), r - u);
        let full = envcore::linalg::hcat(b.matrix(), b0.matrix());
        let dev = (full.transpose() * &full - DMatrix::identity(r, r)).amax();
        prop_assert!(dev < 1e-10);
    }

    #[test]
    fn distance_depends_only_on_span(seed in any::<u64>(), r in 2usize..8) {
        let mut g = rng(seed);
        let u = 1 + (seed as usize % (r - 1));
        let a = normal(&mut g, r, u);
        let b = normal(&mut g, r, u);
        let mix = normal(&mut g, u, u) + DMatrix::identity(u, u) * 3.0;
        let (ba, bb) = (SemiOrthBasis::from_span(&a).unwrap(), SemiOrthBasis::from_span(&b).unwrap());
        let ba2 = SemiOrthBasis::from_span(&(&a * mix)).unwrap();
        let d = subspace_distance(&ba, &bb).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - subspace_distance(&bb, &ba).unwrap()).abs() < 1e-14);
        prop_assert!(subspace_distance(&ba, &ba2).unwrap() < 1e-10);
    }
}
