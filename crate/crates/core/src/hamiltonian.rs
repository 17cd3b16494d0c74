//! Dicke–Stark Hamiltonian as a dense real symmetric matrix.
//!
//! The coherent-state (DCS) build works in the frame rotated by `π/2` about
//! `J_y`, where the coupling is diagonal in `m`:
//!
//! ```text
//! H = ω a†a − (Δ/2 + U a†a/(2N)) (J₊ + J₋) + (2λ/√N)(a† + a) J_z
//! ```
//!
//! The Fock-basis (DFS) build uses the unrotated form and serves as the
//! cross-check for everything assembled in the displaced basis.

use ndarray::Array2;

use crate::core_model::{
    block_displacement, displaced_overlap_matrix, lowering_coefficient, raising_coefficient,
    signed_overlap, DcsBasis, FockBasis, ModelParams, OverlapDirection,
};
use crate::error::{Error, Result};

/// Which basis a matrix is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTag {
    Dcs(DcsBasis),
    Fock(FockBasis),
    Generic,
}

impl BasisTag {
    pub fn label(&self) -> String {
        match self {
            BasisTag::Dcs(b) => format!("dcs(N={},K={})", b.n_atoms, b.k_trunc),
            BasisTag::Fock(b) => format!("fock(N={},Ntr={})", b.n_atoms, b.n_trunc),
            BasisTag::Generic => "generic".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    pub matrix: Array2<f64>,
    pub basis: BasisTag,
    /// Parameter fingerprint plus basis label; used in diagnostics and cache keys.
    pub fingerprint: String,
}

impl SymmetricMatrix {
    /// Wraps an arbitrary square matrix, checking symmetry and finiteness.
    pub fn generic(matrix: Array2<f64>) -> Result<Self> {
        let m = Self {
            matrix,
            basis: BasisTag::Generic,
            fingerprint: "generic".to_string(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[[i, j]] - self.matrix[[j, i]]).abs());
            }
        }
        worst
    }

    pub fn check(&self) -> Result<()> {
        let (r, c) = self.matrix.dim();
        if r != c {
            return Err(Error::InvalidParameter(format!("matrix is {r}x{c}, not square")));
        }
        if self.matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "matrix {} has non-finite entries",
                self.fingerprint
            )));
        }
        let defect = self.symmetry_defect();
        if defect >= 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "matrix {} symmetry defect {defect:.3e}",
                self.fingerprint
            )));
        }
        Ok(())
    }
}

fn check_params(params: &ModelParams) -> Result<()> {
    params.validate()
}

/// Field-side action of the off-diagonal spin hop leaving block `m` at level `k`,
/// projected on level `l` of the neighbouring block. `overlap(l, k')` is the
/// overlap between the destination and source displaced bases.
fn hop_element(
    params: &ModelParams,
    g_source: f64,
    l: usize,
    k: usize,
    overlap: impl Fn(usize, usize) -> f64,
) -> f64 {
    let n = params.n_atoms as f64;
    let stark = params.stark_u / (2.0 * n);
    let kf = k as f64;
    let mut v = -(params.delta / 2.0 + stark * (kf + g_source * g_source)) * overlap(l, k);
    let mut shifted = (kf + 1.0).sqrt() * overlap(l, k + 1);
    if k > 0 {
        shifted += kf.sqrt() * overlap(l, k - 1);
    }
    v += stark * g_source * shifted;
    v
}

/// Assembles the rotated-frame Hamiltonian in the DCS basis.
///
/// Only the `m → m+1` blocks and the diagonal are computed; the lower triangle
/// is filled by symmetry. In debug builds the `m → m−1` blocks are assembled
/// independently and must agree.
pub fn build_dcs_hamiltonian(params: &ModelParams, k_trunc: usize) -> Result<SymmetricMatrix> {
    check_params(params)?;
    let basis = DcsBasis::new(params.n_atoms, k_trunc);
    let matrix = assemble_upward(params, &basis)?;
    let h = SymmetricMatrix {
        matrix,
        basis: BasisTag::Dcs(basis),
        fingerprint: format!("{}:{}", params.fingerprint(), BasisTag::Dcs(basis).label()),
    };
    #[cfg(debug_assertions)]
    {
        let defect = dcs_assembly_defect(params, k_trunc)?;
        debug_assert!(defect < 1e-10, "DCS assembly self-test failed: defect {defect:.3e}");
    }
    h.check()?;
    Ok(h)
}

fn assemble_upward(params: &ModelParams, basis: &DcsBasis) -> Result<Array2<f64>> {
    let n_atoms = params.n_atoms;
    let kt = basis.k_trunc;
    let dim = basis.dim();
    let j = params.spin();
    // one extra level so that a†a acting on |K⟩ can be projected exactly
    let kernel = displaced_overlap_matrix(params.displacement_step(), kt + 1)?;
    let up = |l: usize, k: usize| {
        signed_overlap(l, k, OverlapDirection::UpperToLower, &kernel).expect("kernel covers K+1")
    };
    let mut h = Array2::<f64>::zeros((dim, dim));
    for i in 0..=n_atoms {
        let m = basis.m_value(i);
        let g = block_displacement(m, params);
        for k in 0..=kt {
            let idx = basis.flat(i, k).unwrap();
            h[[idx, idx]] = params.omega * (k as f64 - g * g);
        }
        if i == n_atoms {
            continue;
        }
        let jp = raising_coefficient(j, m);
        for k in 0..=kt {
            let col = basis.flat(i, k).unwrap();
            for l in 0..=kt {
                let row = basis.flat(i + 1, l).unwrap();
                let v = jp * hop_element(params, g, l, k, up);
                h[[row, col]] = v;
                h[[col, row]] = v;
            }
        }
    }
    Ok(h)
}

/// Maximum discrepancy between the production assembly and an independent
/// assembly of the `m → m−1` blocks.
pub fn dcs_assembly_defect(params: &ModelParams, k_trunc: usize) -> Result<f64> {
    check_params(params)?;
    let basis = DcsBasis::new(params.n_atoms, k_trunc);
    let production = assemble_upward(params, &basis)?;
    let kernel = displaced_overlap_matrix(params.displacement_step(), k_trunc + 1)?;
    let down = |l: usize, k: usize| {
        signed_overlap(l, k, OverlapDirection::LowerToUpper, &kernel).expect("kernel covers K+1")
    };
    let j = params.spin();
    let mut worst = 0.0f64;
    for i in 1..=params.n_atoms {
        let m = basis.m_value(i);
        let g = block_displacement(m, params);
        let jm = lowering_coefficient(j, m);
        for k in 0..=k_trunc {
            let col = basis.flat(i, k).unwrap();
            for l in 0..=k_trunc {
                let row = basis.flat(i - 1, l).unwrap();
                let v = jm * hop_element(params, g, l, k, down);
                worst = worst.max((production[[row, col]] - v).abs());
            }
        }
    }
    Ok(worst)
}

/// Unrotated Hamiltonian in the plain product basis `|j,m⟩ ⊗ |n⟩`.
pub fn build_dfs_hamiltonian(params: &ModelParams, n_trunc: usize) -> Result<SymmetricMatrix> {
    check_params(params)?;
    let basis = FockBasis::new(params.n_atoms, n_trunc);
    let dim = basis.dim();
    let n = params.n_atoms as f64;
    let j = params.spin();
    let coupling = 2.0 * params.lambda / n.sqrt();
    let mut h = Array2::<f64>::zeros((dim, dim));
    for i in 0..=params.n_atoms {
        let m = basis.m_value(i);
        for p in 0..=n_trunc {
            let pf = p as f64;
            let idx = basis.flat(i, p).unwrap();
            h[[idx, idx]] = params.omega * pf + params.delta * m + params.stark_u / n * pf * m;
            if i == params.n_atoms {
                continue;
            }
            // J_x = (J₊ + J₋)/2 between m and m+1
            let jx = raising_coefficient(j, m) / 2.0;
            if p < n_trunc {
                let to = basis.flat(i + 1, p + 1).unwrap();
                let v = coupling * (pf + 1.0).sqrt() * jx;
                h[[to, idx]] = v;
                h[[idx, to]] = v;
            }
            if p > 0 {
                let to = basis.flat(i + 1, p - 1).unwrap();
                let v = coupling * pf.sqrt() * jx;
                h[[to, idx]] = v;
                h[[idx, to]] = v;
            }
        }
    }
    let out = SymmetricMatrix {
        matrix: h,
        basis: BasisTag::Fock(basis),
        fingerprint: format!("{}:{}", params.fingerprint(), BasisTag::Fock(basis).label()),
    };
    out.check()?;
    Ok(out)
}

/// Z₂ parity `(−1)^{n + m + j}` of the unrotated model, diagonal in the Fock basis.
pub fn parity_matrix(basis: &FockBasis) -> SymmetricMatrix {
    let dim = basis.dim();
    let mut p = Array2::<f64>::zeros((dim, dim));
    for i in 0..=basis.n_atoms {
        for n in 0..=basis.n_trunc {
            let idx = basis.flat(i, n).unwrap();
            p[[idx, idx]] = if (n + i) % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    SymmetricMatrix {
        matrix: p,
        basis: BasisTag::Fock(*basis),
        fingerprint: format!("parity:{}", BasisTag::Fock(*basis).label()),
    }
}

/// Parity of the rotated model in the DCS basis: `|m, k⟩ ↦ (−1)^k |−m, k⟩`
/// (field parity combined with a π spin rotation about x, up to a global phase).
pub fn dcs_parity_matrix(basis: &DcsBasis) -> SymmetricMatrix {
    let dim = basis.dim();
    let mut p = Array2::<f64>::zeros((dim, dim));
    for i in 0..=basis.n_atoms {
        for k in 0..=basis.k_trunc {
            let from = basis.flat(i, k).unwrap();
            let to = basis.flat(basis.n_atoms - i, k).unwrap();
            p[[to, from]] = if k % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    SymmetricMatrix {
        matrix: p,
        basis: BasisTag::Dcs(*basis),
        fingerprint: format!("parity:{}", BasisTag::Dcs(*basis).label()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::{EigValsh, UPLO};

    fn lowest(h: &SymmetricMatrix, n: usize) -> Vec<f64> {
        let e = h.matrix.eigvalsh(UPLO::Upper).unwrap();
        e.iter().take(n).copied().collect()
    }

    #[test]
    fn decoupled_spectrum_is_ladder_plus_spin() {
        let p = ModelParams::new(3, 1.0, 0.7, 0.0, 0.0).unwrap();
        let h = build_dcs_hamiltonian(&p, 4).unwrap();
        let mut got = h.matrix.eigvalsh(UPLO::Upper).unwrap().to_vec();
        let mut want = Vec::new();
        for k in 0..=4 {
            for i in 0..=3 {
                want.push(k as f64 + 0.7 * (i as f64 - 1.5));
            }
        }
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn assembly_self_test_agrees() {
        for &(n, lam, u) in &[(1, 0.3, 0.5), (4, 0.8, -1.0), (5, 1.2, 1.3), (8, 0.45, 0.9)] {
            let p = ModelParams::new(n, 1.0, 1.0, lam, u).unwrap();
            let d = dcs_assembly_defect(&p, 12).unwrap();
            assert!(d < 1e-10, "N={n}: defect {d}");
        }
    }

    #[test]
    fn dfs_zero_coupling_is_diagonal() {
        let p = ModelParams::new(4, 1.0, 0.9, 0.0, 0.6).unwrap();
        let h = build_dfs_hamiltonian(&p, 5).unwrap();
        let b = FockBasis::new(4, 5);
        for r in 0..b.dim() {
            for c in 0..b.dim() {
                if r != c {
                    assert_eq!(h.matrix[[r, c]], 0.0);
                }
            }
            let (m, n) = b.pair(r).unwrap();
            let n = n as f64;
            let expect = n + 0.9 * m.value() + 0.6 / 4.0 * n * m.value();
            assert!((h.matrix[[r, r]] - expect).abs() < 1e-15);
        }
        assert_eq!(h.symmetry_defect(), 0.0);
    }

    #[test]
    fn rabi_stark_limit_matches_fock_oracle() {
        let p = ModelParams::new(1, 1.0, 1.0, 0.1, 0.5).unwrap();
        let dcs = lowest(&build_dcs_hamiltonian(&p, 40).unwrap(), 5);
        let dfs = lowest(&build_dfs_hamiltonian(&p, 200).unwrap(), 5);
        for (a, b) in dcs.iter().zip(&dfs) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn parity_squares_to_identity_and_commutes() {
        let fb = FockBasis::new(3, 10);
        let pi = parity_matrix(&fb);
        let sq = pi.matrix.dot(&pi.matrix);
        assert_eq!(sq, Array2::<f64>::eye(fb.dim()));
        let vac = fb.flat(0, 0).unwrap();
        assert_eq!(pi.matrix[[vac, vac]], 1.0);

        let db = DcsBasis::new(3, 10);
        let pd = dcs_parity_matrix(&db);
        assert_eq!(pd.matrix.dot(&pd.matrix), Array2::<f64>::eye(db.dim()));
    }

    #[test]
    fn dcs_parity_commutes_with_hamiltonian() {
        for &(n, lam, u) in &[(2, 0.4, 0.5), (3, 0.9, -1.2), (6, 0.6, 1.0)] {
            let p = ModelParams::new(n, 1.0, 0.8, lam, u).unwrap();
            let h = build_dcs_hamiltonian(&p, 9).unwrap();
            let pd = dcs_parity_matrix(&DcsBasis::new(n, 9));
            let c = h.matrix.dot(&pd.matrix) - pd.matrix.dot(&h.matrix);
            let worst = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(worst < 1e-12, "commutator {worst}");
        }
    }
}
