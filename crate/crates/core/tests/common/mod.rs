//! Dense-matrix reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn mat2(a: Complex64, b: Complex64, cc: Complex64, d: Complex64) -> CMat {
    CMat::from_row_slice(2, 2, &[a, b, cc, d])
}

pub fn id(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn h() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    mat2(c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0))
}

pub fn x() -> CMat {
    mat2(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn ry(t: f64) -> CMat {
    let (s, co) = (t / 2.0).sin_cos();
    mat2(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

pub fn rz(t: f64) -> CMat {
    mat2(
        Complex64::from_polar(1.0, -t / 2.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        Complex64::from_polar(1.0, t / 2.0),
    )
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Single-qubit operator on `target` of an `n`-qubit register; qubit 0 is the
/// least significant index bit, so it is the rightmost Kronecker factor.
pub fn embed(g: &CMat, target: usize, n: usize) -> CMat {
    let left = id(1 << (n - 1 - target));
    let right = id(1 << target);
    kron(&kron(&left, g), &right)
}

fn projector(bit: usize) -> CMat {
    let mut p = CMat::zeros(2, 2);
    p[(bit, bit)] = c(1.0, 0.0);
    p
}

/// `|0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ G_t`.
pub fn controlled(g: &CMat, control: usize, target: usize, n: usize) -> CMat {
    embed(&projector(0), control, n) + embed(&projector(1), control, n) * embed(g, target, n)
}

pub fn cnot(control: usize, target: usize, n: usize) -> CMat {
    controlled(&x(), control, target, n)
}

pub fn zero_vec(n: usize) -> Vec<Complex64> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    v
}

pub fn apply(m: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let col = nalgebra::DVector::from_column_slice(v);
    (m * col).iter().copied().collect()
}

/// The residual skeleton operators for `n` data qubits and ancilla `n`.
pub fn residual_open(n: usize) -> CMat {
    let total = n + 1;
    let mut m = embed(&h(), n, total);
    for q in 0..n {
        m = cnot(n, q, total) * m;
    }
    m
}

pub fn ansatz(n: usize, layers: usize, angles: &[f64]) -> CMat {
    let total = n + 1;
    let mut m = id(1 << total);
    for l in 0..layers {
        for q in 0..n {
            let base = (l * n + q) * 2;
            m = embed(&ry(angles[base]), q, total) * m;
            m = embed(&rz(angles[base + 1]), q, total) * m;
        }
        if n > 1 {
            for q in 0..n {
                m = cnot(q, (q + 1) % n, total) * m;
            }
        }
    }
    m
}

/// Full matrix of one parameterized residual block.
pub fn block_matrix(n: usize, layers: usize, angles: &[f64]) -> CMat {
    embed(&h(), n, n + 1) * ansatz(n, layers, angles) * residual_open(n)
}

pub fn encode_vec(angles: &[f64]) -> Vec<Complex64> {
    let n = angles.len();
    let total = n + 1;
    let mut m = id(1 << total);
    for (q, &a) in angles.iter().enumerate() {
        m = embed(&ry(a), q, total) * m;
    }
    let m = embed(&h(), n, total) * residual_open(n) * m;
    apply(&m, &zero_vec(total))
}

/// `⟨Z_q⟩` by summing probabilities with the sign of bit `q`.
pub fn z_expectations(v: &[Complex64], n_data: usize) -> Vec<f64> {
    (0..n_data)
        .map(|q| {
            v.iter()
                .enumerate()
                .map(|(i, a)| if (i >> q) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                .sum()
        })
        .collect()
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
