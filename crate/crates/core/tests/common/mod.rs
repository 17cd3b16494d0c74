//! Independent reference computations used only by the integration tests.

#![allow(dead_code)]

use dicke_stark::core_model::raising_coefficient;
use dicke_stark::{BasisTag, FockBasis, ModelParams, SymmetricMatrix};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

/// `exp(A)` by Taylor series with scaling and squaring.
pub fn expm(a: &Array2<f64>) -> Array2<f64> {
    let norm = a
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let n = a.nrows();
    let mut result = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..40 {
        term = term.dot(&scaled) / k as f64;
        result += &term;
        if term.iter().all(|x| x.abs() < 1e-18) {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// Annihilation operator on `0..=n_trunc`.
pub fn annihilation(n_trunc: usize) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros((n_trunc + 1, n_trunc + 1));
    for n in 1..=n_trunc {
        a[[n - 1, n]] = (n as f64).sqrt();
    }
    a
}

/// Rotated-frame Hamiltonian in the plain product basis, built from operator
/// products rather than closed-form matrix elements.
pub fn rotated_fock_hamiltonian(params: &ModelParams, n_trunc: usize) -> SymmetricMatrix {
    let basis = FockBasis::new(params.n_atoms, n_trunc);
    let j = params.spin();
    let n = params.n_atoms as f64;
    let dim_s = params.n_atoms + 1;
    let mut jz = Array2::<f64>::zeros((dim_s, dim_s));
    let mut jpm = Array2::<f64>::zeros((dim_s, dim_s));
    for i in 0..dim_s {
        let m = i as f64 - j;
        jz[[i, i]] = m;
        if i + 1 < dim_s {
            let c = raising_coefficient(j, m);
            jpm[[i + 1, i]] = c;
            jpm[[i, i + 1]] = c;
        }
    }
    let a = annihilation(n_trunc);
    let num = a.t().dot(&a);
    let x = &a + &a.t();
    let id_s = Array2::<f64>::eye(dim_s);
    let id_f = Array2::<f64>::eye(n_trunc + 1);
    let h = params.omega * kron(&id_s, &num) - params.delta / 2.0 * kron(&jpm, &id_f)
        - params.stark_u / (2.0 * n) * kron(&jpm, &num)
        + 2.0 * params.lambda / n.sqrt() * kron(&jz, &x);
    SymmetricMatrix {
        matrix: h,
        basis: BasisTag::Fock(basis),
        fingerprint: "oracle-rotated-fock".into(),
    }
}

pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// Plain dense eigensolve with ascending eigenvalues.
pub fn dense_eigh(h: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    h.eigh(UPLO::Upper).unwrap()
}

/// `⟨a†a⟩(t)` by propagating `ψ(t) = V e^{−iEt} Vᵀ ψ₀` in the product basis.
pub fn propagated_photon_number(h: &Array2<f64>, psi0: &Array1<f64>, n_trunc: usize, times: &[f64]) -> Vec<f64> {
    let (e, v) = dense_eigh(h);
    let c = v.t().dot(psi0);
    times
        .iter()
        .map(|&t| {
            let re = v.dot(&Array1::from_shape_fn(e.len(), |n| c[n] * (e[n] * t).cos()));
            let im = v.dot(&Array1::from_shape_fn(e.len(), |n| -c[n] * (e[n] * t).sin()));
            (0..re.len())
                .map(|i| (i % (n_trunc + 1)) as f64 * (re[i] * re[i] + im[i] * im[i]))
                .sum()
        })
        .collect()
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
