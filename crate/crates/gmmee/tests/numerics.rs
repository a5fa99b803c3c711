use gmmee::linalg::{cholesky_lower, gamma_fn, psd_repair, tria, Matrix, EIGEN_FLOOR, RECON_TOL};
use gmmee::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = random(n, n, rng);
    &a.gram() + &Matrix::identity(n)
}

#[test]
fn cholesky_identity_and_diagonal() {
    let b = cholesky_lower(&Matrix::identity(3)).unwrap();
    assert_eq!(b.matrix(), &Matrix::identity(3));

    let b = cholesky_lower(&Matrix::from_diag(&[0.01, 0.01, 0.06])).unwrap();
    let expect = [0.1, 0.1, 0.06f64.sqrt()];
    for i in 0..3 {
        assert!((b.matrix()[(i, i)] - expect[i]).abs() < 1e-15);
        for j in 0..3 {
            if i != j {
                assert_eq!(b.matrix()[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn cholesky_rejects_indefinite() {
    let p = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
    assert_eq!(cholesky_lower(&p).unwrap_err(), Error::NotPositiveDefinite);
    let mut q = Matrix::identity(2);
    q[(0, 1)] = f64::NAN;
    assert_eq!(cholesky_lower(&q).unwrap_err(), Error::NonFinite);
}

#[test]
fn cholesky_symmetrizes_input() {
    let mut p = Matrix::from_rows(&[[4.0, 1.0], [1.0, 3.0]]);
    p[(0, 1)] += 1e-13;
    let b = cholesky_lower(&p).unwrap();
    assert!(rel_err(&b.covariance(), &p.symmetrized()) < RECON_TOL);
}

#[test]
fn cholesky_round_trip_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..10_000 {
        let n = 1 + k % 8;
        let p = random_spd(n, &mut rng);
        let b = cholesky_lower(&p).unwrap();
        let m = b.matrix();
        for i in 0..n {
            assert!(m[(i, i)] > 0.0);
            for j in i + 1..n {
                assert_eq!(m[(i, j)], 0.0);
            }
        }
        assert!(rel_err(&b.covariance(), &p) < RECON_TOL);
    }
}

#[test]
fn tria_examples() {
    let l = Matrix::from_rows(&[[2.0, 0.0, 0.0], [0.5, 1.5, 0.0], [-0.3, 0.2, 0.7]]);
    let s = tria(&l).unwrap();
    assert!((s.matrix() - &l).max_abs() < 1e-14);

    let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let s = tria(&a).unwrap();
    assert!((s.matrix() - &Matrix::identity(2)).max_abs() < 1e-15);
}

#[test]
fn tria_flags_rank_deficiency() {
    let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]);
    assert_eq!(tria(&a).unwrap_err(), Error::RankDeficient);
    assert_eq!(tria(&Matrix::zeros(3, 2)).unwrap_err(), Error::DimensionMismatch);
}

#[test]
fn tria_gram_identity_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..10_000 {
        let n = 1 + k % 8;
        let cols = n + k % 9;
        let a = random(n, cols, &mut rng);
        let s = tria(&a).unwrap();
        assert!(s.matrix().diagonal().iter().all(|&d| d >= 0.0));
        assert!(rel_err(&s.covariance(), &a.gram()) < 1e-10, "case {k}");
    }
}

#[test]
fn tria_matches_gram_cholesky() {
    // 3×7 against an explicit Cholesky of A·Aᵀ.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a = random(3, 7, &mut rng);
        let s = tria(&a).unwrap();
        let c = cholesky_lower(&psd_repair(&a.gram()).unwrap()).unwrap();
        assert!((&s.covariance() - &c.covariance()).max_abs() < 1e-9);
        assert!((s.matrix() - c.matrix()).max_abs() < 1e-9);
    }
}

#[test]
fn psd_repair_examples() {
    let p = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
    assert_eq!(psd_repair(&p).unwrap(), p);

    // Symmetrized part [[1, 1], [1, 1]] has eigenpairs (2, (1, 1)/√2) and
    // (0, (1, −1)/√2); the zero eigenvalue is lifted to the floor.
    let r = psd_repair(&Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]])).unwrap();
    let h = 0.5 * EIGEN_FLOOR;
    let expect = Matrix::from_rows(&[[1.0 + h, 1.0 - h], [1.0 - h, 1.0 + h]]);
    assert!((&r - &expect).max_abs() < 1e-15);

    let z = psd_repair(&Matrix::zeros(3, 3)).unwrap();
    assert!((&z - &Matrix::identity(3).scaled(EIGEN_FLOOR)).max_abs() < 1e-27);

    let mut bad = Matrix::identity(2);
    bad[(1, 1)] = f64::INFINITY;
    assert_eq!(psd_repair(&bad).unwrap_err(), Error::NonFinite);
}

#[test]
fn gamma_values() {
    assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
    assert!((gamma_fn(0.5).unwrap() - std::f64::consts::PI.sqrt()).abs() < 1e-15);
    // 40-digit reference values.
    let table = [
        (0.4, 2.218_159_543_757_688_223),
        (0.1, 9.513_507_698_668_731_836),
        (1.5, 0.886_226_925_452_758_013_6),
        (3.37, 2.887_512_027_271_550_316),
        (7.25, 1155.381_013_919_989_687),
    ];
    for (a, g) in table {
        assert!((gamma_fn(a).unwrap() / g - 1.0).abs() < 1e-12, "Γ({a})");
    }
    assert_eq!(gamma_fn(0.0).unwrap_err(), Error::DomainError);
    assert_eq!(gamma_fn(-1.5).unwrap_err(), Error::DomainError);
}

proptest! {
    #[test]
    fn gamma_recurrence(a in 0.1f64..10.0) {
        let lhs = gamma_fn(a + 1.0).unwrap();
        let rhs = a * gamma_fn(a).unwrap();
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cholesky_round_trip(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_spd(n, &mut rng);
        prop_assert!(rel_err(&cholesky_lower(&p).unwrap().covariance(), &p) < RECON_TOL);
    }

    #[test]
    fn tria_agrees_with_cholesky(seed in any::<u64>(), n in 1usize..6, extra in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(n, n + extra, &mut rng);
        let s = tria(&a).unwrap();
        let c = cholesky_lower(&psd_repair(&a.gram()).unwrap()).unwrap();
        prop_assert!((&s.covariance() - &c.covariance()).max_abs() < 1e-9);
    }

    #[test]
    fn psd_repair_output_is_symmetric_psd(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = psd_repair(&random(n, n, &mut rng)).unwrap();
        prop_assert_eq!(&r, &r.transpose());
        // Cholesky succeeds on anything with eigenvalues above the floor.
        prop_assert!(cholesky_lower(&(&r + &Matrix::identity(n).scaled(1e-9))).is_ok());
    }
}
