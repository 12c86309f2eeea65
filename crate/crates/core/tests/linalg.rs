use slicekit::linalg::{gaussian_matrix, matmul, Matrix, Rng};

fn naive(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |r, c| (0..a.cols()).map(|k| a.get(r, k) * b.get(k, c)).sum())
}

#[test]
fn hand_checked_products() {
    let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
    let v = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
    assert_eq!(matmul(&m, &v).unwrap().data(), &[2.0, 4.0]);
    assert!(matmul(&m, &Matrix::zeros(3, 1)).is_err());
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = Rng::new(3);
    for _ in 0..50 {
        let (p, q, r) = (1 + rng.below(32), 1 + rng.below(32), 1 + rng.below(32));
        let a: Matrix = gaussian_matrix(&mut rng, p, q, 1.0).unwrap();
        let b: Matrix = gaussian_matrix(&mut rng, q, r, 1.0).unwrap();
        let got = matmul(&a, &b).unwrap();
        let want = naive(&a, &b);
        let scale = want.max_abs().max(1.0);
        assert!(got.sub(&want).unwrap().max_abs() / scale <= 1e-14);
    }
}

#[test]
fn product_then_vector_is_associative() {
    let mut rng = Rng::new(4);
    for _ in 0..20 {
        let n = 1 + rng.below(64);
        let a: Matrix = gaussian_matrix(&mut rng, n, n, 1.0 / (n as f64).sqrt()).unwrap();
        let b: Matrix = gaussian_matrix(&mut rng, n, n, 1.0 / (n as f64).sqrt()).unwrap();
        let v = rng.normal_vec(n, 1.0);
        let left = matmul(&a, &b).unwrap().matvec(&v).unwrap();
        let right = a.matvec(&b.matvec(&v).unwrap()).unwrap();
        let num: f64 = left.iter().zip(&right).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = right.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(num / den <= 1e-12);
    }
}

#[test]
fn random_five_by_four_times_four_by_three() {
    let mut rng = Rng::new(5);
    let a: Matrix = gaussian_matrix(&mut rng, 5, 4, 1.0).unwrap();
    let b: Matrix = gaussian_matrix(&mut rng, 4, 3, 1.0).unwrap();
    assert!(matmul(&a, &b).unwrap().sub(&naive(&a, &b)).unwrap().max_abs() <= 1e-14);
}

#[test]
fn single_precision_path() {
    let mut rng = Rng::new(6);
    let a: Matrix<f32> = gaussian_matrix(&mut rng, 8, 8, 1.0).unwrap();
    let b: Matrix<f32> = gaussian_matrix(&mut rng, 8, 8, 1.0).unwrap();
    let c = matmul(&a, &b).unwrap();
    for r in 0..8 {
        for col in 0..8 {
            let want: f32 = (0..8).map(|k| a.get(r, k) * b.get(k, col)).sum();
            assert!((c.get(r, col) - want).abs() <= 1e-4);
        }
    }
}
