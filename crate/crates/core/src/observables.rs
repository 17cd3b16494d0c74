//! Equilibrium observables of the dressed eigenstates.
//!
//! Everything is evaluated in the frame the eigenstates were computed in.
//! Photon number, G²(0), negativity and squeezing are invariant under the
//! collective spin rotation that links the two frames, so DCS and Fock
//! decompositions can be fed to the same functions.
//!
//! The bipartition for entanglement is the `(N+1)`-dimensional symmetric spin
//! space times the field.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{EigValsh, UPLO};
use num_complex::Complex64;

use crate::core_model::{
    block_displacement, displacement_matrix, raising_coefficient, DcsBasis, FockBasis, ModelParams,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{BasisTag, SymmetricMatrix};
use crate::spectrum::{converged_lowest, EigenDecomposition};

/// Default cumulative Boltzmann weight discarded by [`gibbs_state`].
pub const DEFAULT_WEIGHT_CUT: f64 = 1e-12;

/// Minimum captured norm when re-expanding a DCS state in plain Fock states.
pub const CAPTURE_TOLERANCE: f64 = 1e-8;

/// Largest photon cutoff tried by the adaptive product-basis conversion.
pub const MAX_FOCK_TRUNC: usize = 4096;

fn block_tag(basis: &DcsBasis, params: &ModelParams, label: &str) -> String {
    format!("{label}:{}:{}", params.fingerprint(), BasisTag::Dcs(*basis).label())
}

fn check_basis(basis: &DcsBasis, params: &ModelParams) -> Result<()> {
    params.validate()?;
    if basis.n_atoms != params.n_atoms {
        return Err(Error::BasisMismatch(format!(
            "basis has N = {}, parameters have N = {}",
            basis.n_atoms, params.n_atoms
        )));
    }
    Ok(())
}

/// `a†a` in the DCS basis: within block `m`,
/// `(k + g_m²) δ_{k′k} − g_m (√(k+1) δ_{k′,k+1} + √k δ_{k′,k−1})`.
pub fn photon_number_matrix(basis: &DcsBasis, params: &ModelParams) -> Result<SymmetricMatrix> {
    check_basis(basis, params)?;
    let mut out = Array2::<f64>::zeros((basis.dim(), basis.dim()));
    for i in 0..=basis.n_atoms {
        let g = block_displacement(basis.m_value(i), params);
        for k in 0..=basis.k_trunc {
            let a = basis.flat(i, k).unwrap();
            out[[a, a]] = k as f64 + g * g;
            if k < basis.k_trunc {
                let b = basis.flat(i, k + 1).unwrap();
                let v = -g * ((k + 1) as f64).sqrt();
                out[[a, b]] = v;
                out[[b, a]] = v;
            }
        }
    }
    Ok(SymmetricMatrix {
        matrix: out,
        basis: BasisTag::Dcs(*basis),
        fingerprint: block_tag(basis, params, "photon"),
    })
}

/// `a† + a = A_m† + A_m − 2g_m` in the DCS basis.
pub fn quadrature_matrix(basis: &DcsBasis, params: &ModelParams) -> Result<SymmetricMatrix> {
    check_basis(basis, params)?;
    let mut out = Array2::<f64>::zeros((basis.dim(), basis.dim()));
    for i in 0..=basis.n_atoms {
        let g = block_displacement(basis.m_value(i), params);
        for k in 0..=basis.k_trunc {
            let a = basis.flat(i, k).unwrap();
            out[[a, a]] = -2.0 * g;
            if k < basis.k_trunc {
                let b = basis.flat(i, k + 1).unwrap();
                let v = ((k + 1) as f64).sqrt();
                out[[a, b]] = v;
                out[[b, a]] = v;
            }
        }
    }
    Ok(SymmetricMatrix {
        matrix: out,
        basis: BasisTag::Dcs(*basis),
        fingerprint: block_tag(basis, params, "quadrature"),
    })
}

/// `a†a` in the plain product basis.
pub fn fock_photon_number_matrix(basis: &FockBasis) -> SymmetricMatrix {
    let mut out = Array2::<f64>::zeros((basis.dim(), basis.dim()));
    for i in 0..=basis.n_atoms {
        for n in 0..=basis.n_trunc {
            let a = basis.flat(i, n).unwrap();
            out[[a, a]] = n as f64;
        }
    }
    SymmetricMatrix {
        matrix: out,
        basis: BasisTag::Fock(*basis),
        fingerprint: format!("photon:{}", BasisTag::Fock(*basis).label()),
    }
}

/// `a† + a` in the plain product basis.
pub fn fock_quadrature_matrix(basis: &FockBasis) -> SymmetricMatrix {
    let mut out = Array2::<f64>::zeros((basis.dim(), basis.dim()));
    for i in 0..=basis.n_atoms {
        for n in 0..basis.n_trunc {
            let a = basis.flat(i, n).unwrap();
            let b = basis.flat(i, n + 1).unwrap();
            let v = ((n + 1) as f64).sqrt();
            out[[a, b]] = v;
            out[[b, a]] = v;
        }
    }
    SymmetricMatrix {
        matrix: out,
        basis: BasisTag::Fock(*basis),
        fingerprint: format!("quadrature:{}", BasisTag::Fock(*basis).label()),
    }
}

/// Photon number operator in whichever basis `tag` names.
pub fn photon_operator(tag: &BasisTag, params: &ModelParams) -> Result<SymmetricMatrix> {
    match tag {
        BasisTag::Dcs(b) => photon_number_matrix(b, params),
        BasisTag::Fock(b) => Ok(fock_photon_number_matrix(b)),
        BasisTag::Generic => Err(Error::BasisMismatch("photon number needs a physical basis".into())),
    }
}

/// Field quadrature `a† + a` in whichever basis `tag` names.
pub fn quadrature_operator(tag: &BasisTag, params: &ModelParams) -> Result<SymmetricMatrix> {
    match tag {
        BasisTag::Dcs(b) => quadrature_matrix(b, params),
        BasisTag::Fock(b) => Ok(fock_quadrature_matrix(b)),
        BasisTag::Generic => Err(Error::BasisMismatch("quadrature needs a physical basis".into())),
    }
}

/// `⟨φ_a|O|φ_b⟩` for the lowest `levels` eigenvectors.
pub fn in_eigenbasis(op: &SymmetricMatrix, decomp: &EigenDecomposition, levels: usize) -> Result<Array2<f64>> {
    if op.basis != decomp.basis || op.dim() != decomp.eigenvectors.nrows() {
        return Err(Error::BasisMismatch(format!(
            "operator in {}, eigenvectors in {}",
            op.basis.label(),
            decomp.basis.label()
        )));
    }
    let levels = levels.min(decomp.dim());
    let v = decomp.eigenvectors.slice(s![.., ..levels]);
    Ok(v.t().dot(&op.matrix.dot(&v)))
}

/// `⟨ψ|O|ψ⟩` for a real vector.
pub fn expectation(op: &SymmetricMatrix, state: ArrayView1<f64>) -> Result<f64> {
    if op.dim() != state.len() {
        return Err(Error::BasisMismatch(format!(
            "operator of dimension {} applied to a vector of length {}",
            op.dim(),
            state.len()
        )));
    }
    Ok(state.dot(&op.matrix.dot(&state)))
}

/// Ground-state photon number per atom, with the value at the previous truncation.
#[derive(Debug, Clone, Copy)]
pub struct MeanPhoton {
    pub per_atom: f64,
    pub previous_per_atom: Option<f64>,
    pub k_trunc: usize,
    pub ground_energy: f64,
}

impl MeanPhoton {
    /// Absolute change of `⟨a†a⟩/N` between the last two truncations.
    pub fn truncation_change(&self) -> Option<f64> {
        self.previous_per_atom.map(|p| (self.per_atom - p).abs())
    }
}

/// `⟨GS|a†a|GS⟩ / N` from a converged spectrum.
pub fn ground_mean_photon(params: &ModelParams, rel_tol: f64) -> Result<MeanPhoton> {
    let decomp = converged_lowest(params, 1, rel_tol)?;
    ground_mean_photon_of(&decomp, params)
}

pub fn ground_mean_photon_of(decomp: &EigenDecomposition, params: &ModelParams) -> Result<MeanPhoton> {
    let n = params.n_atoms as f64;
    let op = photon_operator(&decomp.basis, params)?;
    let per_atom = expectation(&op, decomp.ground_state())? / n;
    let previous_per_atom = match (&decomp.convergence, decomp.basis) {
        (Some(record), BasisTag::Dcs(_)) => {
            let prev = DcsBasis::new(params.n_atoms, record.previous_k_trunc);
            let prev_op = photon_number_matrix(&prev, params)?;
            Some(expectation(&prev_op, record.previous_ground.view())? / n)
        }
        _ => None,
    };
    Ok(MeanPhoton {
        per_atom,
        previous_per_atom,
        k_trunc: decomp.k_trunc().unwrap_or(0),
        ground_energy: decomp.ground_energy(),
    })
}

/// A state written on the plain product grid `(m, n_photon)`.
#[derive(Debug, Clone)]
pub struct ProductBasisState {
    /// Rows: spin block `m + j`; columns: photon number.
    pub coefficients: Array2<f64>,
    /// Squared norm kept by the photon cutoff, relative to the source state.
    pub captured_norm: f64,
    pub n_trunc: usize,
    pub source_k_trunc: usize,
    /// Set only by [`ProductBasisState::renormalized`].
    pub renormalized: bool,
}

impl ProductBasisState {
    pub fn flat(&self) -> Array1<f64> {
        self.coefficients.iter().copied().collect()
    }

    pub fn renormalized(&self) -> Self {
        let norm = self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
        Self {
            coefficients: &self.coefficients / norm,
            captured_norm: self.captured_norm,
            n_trunc: self.n_trunc,
            source_k_trunc: self.source_k_trunc,
            renormalized: true,
        }
    }
}

/// `⟨n|k⟩_m` for every block, shape `(n_trunc+1) × (K+1)`.
fn fock_kernels(basis: &DcsBasis, params: &ModelParams, n_trunc: usize) -> Result<Vec<Array2<f64>>> {
    (0..=basis.n_atoms)
        .map(|i| {
            let g = block_displacement(basis.m_value(i), params);
            displacement_matrix(g, n_trunc + 1, basis.block_len())
        })
        .collect()
}

/// Photon cutoff the adaptive conversion starts from: `⌈max g_m²⌉ + 4K`.
pub fn initial_fock_trunc(basis: &DcsBasis, params: &ModelParams) -> usize {
    let g = block_displacement(params.spin(), params);
    (g * g).ceil() as usize + 4 * basis.k_trunc
}

/// Re-expands the columns of `states` (DCS coefficients) on the product grid
/// at a fixed photon cutoff. Returns the product-basis columns and their captured norms.
fn columns_to_fock(
    states: ArrayView2<f64>,
    basis: &DcsBasis,
    params: &ModelParams,
    n_trunc: usize,
) -> Result<(Array2<f64>, Vec<f64>)> {
    check_basis(basis, params)?;
    if states.nrows() != basis.dim() {
        return Err(Error::BasisMismatch(format!(
            "state of length {} in a basis of dimension {}",
            states.nrows(),
            basis.dim()
        )));
    }
    let kernels = fock_kernels(basis, params, n_trunc)?;
    let len = n_trunc + 1;
    let kl = basis.block_len();
    let mut out = Array2::<f64>::zeros(((basis.n_atoms + 1) * len, states.ncols()));
    for (i, d) in kernels.iter().enumerate() {
        let block = states.slice(s![i * kl..(i + 1) * kl, ..]);
        out.slice_mut(s![i * len..(i + 1) * len, ..]).assign(&d.dot(&block));
    }
    let captured = (0..states.ncols())
        .map(|c| {
            let src: f64 = states.column(c).iter().map(|x| x * x).sum();
            let kept: f64 = out.column(c).iter().map(|x| x * x).sum();
            if src > 0.0 {
                kept / src
            } else {
                1.0
            }
        })
        .collect();
    Ok((out, captured))
}

/// Expresses several DCS states on a common product grid, doubling the photon
/// cutoff from [`initial_fock_trunc`] until every captured norm is within
/// [`CAPTURE_TOLERANCE`] of one.
fn columns_to_fock_adaptive(
    states: ArrayView2<f64>,
    basis: &DcsBasis,
    params: &ModelParams,
) -> Result<(Array2<f64>, Vec<f64>, usize)> {
    let mut n_trunc = initial_fock_trunc(basis, params).max(1);
    loop {
        let (cols, captured) = columns_to_fock(states, basis, params, n_trunc)?;
        let worst = captured.iter().copied().fold(1.0f64, f64::min);
        if worst >= 1.0 - CAPTURE_TOLERANCE {
            return Ok((cols, captured, n_trunc));
        }
        if n_trunc >= MAX_FOCK_TRUNC {
            return Err(Error::Truncation(format!(
                "captured norm {worst:.12} at photon cutoff {n_trunc} (cap {MAX_FOCK_TRUNC})"
            )));
        }
        n_trunc = (2 * n_trunc).min(MAX_FOCK_TRUNC);
    }
}

/// Re-expands one DCS state on the product grid at photon cutoff `n_trunc`,
/// or adaptively when `n_trunc` is `None`.
pub fn dcs_to_fock_product(
    state: ArrayView1<f64>,
    basis: &DcsBasis,
    params: &ModelParams,
    n_trunc: Option<usize>,
) -> Result<ProductBasisState> {
    let col = state.insert_axis(Axis(1));
    let (cols, captured, n_trunc) = match n_trunc {
        Some(nt) => {
            let (c, cap) = columns_to_fock(col, basis, params, nt)?;
            (c, cap, nt)
        }
        None => columns_to_fock_adaptive(col, basis, params)?,
    };
    let coefficients = cols
        .into_shape_with_order((basis.n_atoms + 1, n_trunc + 1))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ProductBasisState {
        coefficients,
        captured_norm: captured[0],
        n_trunc,
        source_k_trunc: basis.k_trunc,
        renormalized: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityBasis {
    /// Diagonal-capable representation on the lowest `levels` eigenstates.
    Eigen { levels: usize },
    /// Atom-major product `|j,m⟩ ⊗ |n⟩`.
    Product { dim_atom: usize, dim_field: usize },
    /// Collective spin alone, indexed by `m + j`.
    Spin { dim: usize },
}

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub matrix: Array2<f64>,
    pub basis: DensityBasis,
}

impl DensityMatrix {
    pub fn new(matrix: Array2<f64>, basis: DensityBasis) -> Result<Self> {
        let expected = match basis {
            DensityBasis::Eigen { levels } => levels,
            DensityBasis::Product { dim_atom, dim_field } => dim_atom * dim_field,
            DensityBasis::Spin { dim } => dim,
        };
        if matrix.dim() != (expected, expected) {
            return Err(Error::BasisMismatch(format!(
                "matrix of shape {:?} does not fit {basis:?}",
                matrix.dim()
            )));
        }
        Ok(Self { matrix, basis })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().sum()
    }

    pub fn populations(&self) -> Array1<f64> {
        self.matrix.diag().to_owned()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[[i, j]] - self.matrix[[j, i]]).abs());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        symmetric_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Trace, positivity and Hermiticity within the stated tolerances.
    pub fn check(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() >= 1e-10 {
            return Err(Error::InvalidParameter(format!("density matrix trace {tr}")));
        }
        let herm = self.hermiticity_defect();
        if herm >= 1e-12 {
            return Err(Error::InvalidParameter(format!("Hermiticity defect {herm:.3e}")));
        }
        let min = self.min_eigenvalue()?;
        if min <= -1e-10 {
            return Err(Error::InvalidParameter(format!("minimum eigenvalue {min:.3e}")));
        }
        Ok(())
    }
}

fn symmetric_eigenvalues(m: &Array2<f64>) -> Result<Array1<f64>> {
    m.eigvalsh(UPLO::Upper).map_err(|e| Error::Eigensolver {
        fingerprint: format!("dense {}x{}", m.nrows(), m.ncols()),
        reason: e.to_string(),
    })
}

/// Boltzmann weights over ascending `energies`, cut once the cumulative weight
/// reaches `1 − weight_cut` and renormalized. `T = 0` selects the lowest level.
pub fn gibbs_weights(energies: &[f64], temperature: f64, weight_cut: f64) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::InvalidParameter("no levels".into()));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!("temperature {temperature}")));
    }
    if !(0.0..1.0).contains(&weight_cut) {
        return Err(Error::InvalidParameter(format!("weight cut {weight_cut}")));
    }
    if temperature == 0.0 {
        return Ok(vec![1.0]);
    }
    let e0 = energies[0];
    let raw: Vec<f64> = energies.iter().map(|e| (-(e - e0) / temperature).exp()).collect();
    let z: f64 = raw.iter().sum();
    let mut cumulative = 0.0;
    let mut keep = raw.len();
    for (n, w) in raw.iter().enumerate() {
        cumulative += w / z;
        if cumulative >= 1.0 - weight_cut {
            keep = n + 1;
            break;
        }
    }
    let zk: f64 = raw[..keep].iter().sum();
    Ok(raw[..keep].iter().map(|w| w / zk).collect())
}

/// Canonical state `e^{−H/T}/Z` on the retained eigenstates.
pub fn gibbs_state(decomp: &EigenDecomposition, temperature: f64, weight_cut: f64) -> Result<DensityMatrix> {
    let w = gibbs_weights(decomp.eigenvalues.as_slice().unwrap(), temperature, weight_cut)?;
    DensityMatrix::new(Array2::from_diag(&Array1::from(w.clone())), DensityBasis::Eigen { levels: w.len() })
}

fn eigen_populations(rho: &DensityMatrix) -> Result<Array1<f64>> {
    let DensityBasis::Eigen { .. } = rho.basis else {
        return Err(Error::BasisMismatch("expected an eigenbasis density matrix".into()));
    };
    let off: f64 = rho
        .matrix
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .fold(0.0, |a, (_, v)| a.max(v.abs()));
    if off > 0.0 {
        return Err(Error::BasisMismatch(
            "eigenbasis density matrix has coherences; only mixtures of eigenstates are supported".into(),
        ));
    }
    Ok(rho.populations())
}

/// Product-basis columns for the eigenvectors a diagonal `rho` populates.
fn weighted_product_columns(
    decomp: &EigenDecomposition,
    rho: &DensityMatrix,
    params: &ModelParams,
) -> Result<(Array2<f64>, usize, usize)> {
    let p = eigen_populations(rho)?;
    let levels = p.len();
    if levels > decomp.dim() {
        return Err(Error::BasisMismatch(format!(
            "{levels} populations for {} eigenstates",
            decomp.dim()
        )));
    }
    let v = decomp.eigenvectors.slice(s![.., ..levels]);
    let (mut cols, dim_atom, dim_field) = match decomp.basis {
        BasisTag::Dcs(b) => {
            let (cols, _, nt) = columns_to_fock_adaptive(v, &b, params)?;
            (cols, b.n_atoms + 1, nt + 1)
        }
        BasisTag::Fock(b) => (v.to_owned(), b.n_atoms + 1, b.n_trunc + 1),
        BasisTag::Generic => return Err(Error::BasisMismatch("generic eigenbasis".into())),
    };
    for (mut c, w) in cols.axis_iter_mut(Axis(1)).zip(p.iter()) {
        c *= w.max(0.0).sqrt();
    }
    Ok((cols, dim_atom, dim_field))
}

/// Mixture of eigenstates re-expressed on the atom ⊗ field product grid.
pub fn product_density(decomp: &EigenDecomposition, rho: &DensityMatrix, params: &ModelParams) -> Result<DensityMatrix> {
    let (cols, dim_atom, dim_field) = weighted_product_columns(decomp, rho, params)?;
    let mut matrix = cols.dot(&cols.t());
    symmetrize(&mut matrix);
    DensityMatrix::new(matrix, DensityBasis::Product { dim_atom, dim_field })
}

fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Collective-spin state of a mixture of eigenstates, with the field traced out.
///
/// For DCS eigenstates this uses the exact overlaps
/// `⟨k′|_{m′} |k⟩_m = ⟨k′|D(g_m − g_{m′})|k⟩` and never builds the product grid.
pub fn reduced_spin_density(
    decomp: &EigenDecomposition,
    rho: &DensityMatrix,
    params: &ModelParams,
) -> Result<DensityMatrix> {
    let BasisTag::Dcs(basis) = decomp.basis else {
        return trace_out_field(&product_density(decomp, rho, params)?);
    };
    check_basis(&basis, params)?;
    let p = eigen_populations(rho)?;
    let levels = p.len();
    let kl = basis.block_len();
    let dim_atom = basis.n_atoms + 1;
    // weighted coefficient blocks C_m (K+1 × levels)
    let mut weighted = decomp.eigenvectors.slice(s![.., ..levels]).to_owned();
    for (mut c, w) in weighted.axis_iter_mut(Axis(1)).zip(p.iter()) {
        c *= w.max(0.0).sqrt();
    }
    let block = |i: usize| weighted.slice(s![i * kl..(i + 1) * kl, ..]);
    let mut out = Array2::<f64>::zeros((dim_atom, dim_atom));
    for i in 0..dim_atom {
        let gi = block_displacement(basis.m_value(i), params);
        for ip in i..dim_atom {
            let gp = block_displacement(basis.m_value(ip), params);
            // rows k′ of block ip, columns k of block i
            let overlap = displacement_matrix(gi - gp, kl, kl)?;
            let moved = overlap.dot(&block(i));
            let v: f64 = moved.iter().zip(block(ip).iter()).map(|(a, b)| a * b).sum();
            out[[i, ip]] = v;
            out[[ip, i]] = v;
        }
    }
    DensityMatrix::new(out, DensityBasis::Spin { dim: dim_atom })
}

/// `Tr_field ρ` for a product-basis density matrix.
pub fn trace_out_field(rho: &DensityMatrix) -> Result<DensityMatrix> {
    match rho.basis {
        DensityBasis::Spin { .. } => Ok(rho.clone()),
        DensityBasis::Product { dim_atom, dim_field } => {
            let mut out = Array2::<f64>::zeros((dim_atom, dim_atom));
            for a in 0..dim_atom {
                for b in 0..dim_atom {
                    out[[a, b]] = (0..dim_field)
                        .map(|n| rho.matrix[[a * dim_field + n, b * dim_field + n]])
                        .sum();
                }
            }
            DensityMatrix::new(out, DensityBasis::Spin { dim: dim_atom })
        }
        DensityBasis::Eigen { .. } => Err(Error::BasisMismatch(
            "partial trace needs a product-basis density matrix".into(),
        )),
    }
}

/// Transpose on the atom factor: `ρ^{T_A}[(a,n),(b,n′)] = ρ[(b,n),(a,n′)]`.
pub fn partial_transpose(rho: &DensityMatrix) -> Result<Array2<f64>> {
    let DensityBasis::Product { dim_atom, dim_field } = rho.basis else {
        return Err(Error::BasisMismatch(
            "partial transpose needs a product-basis density matrix".into(),
        ));
    };
    let mut out = Array2::<f64>::zeros(rho.matrix.dim());
    for a in 0..dim_atom {
        for b in 0..dim_atom {
            let src = rho
                .matrix
                .slice(s![b * dim_field..(b + 1) * dim_field, a * dim_field..(a + 1) * dim_field]);
            out.slice_mut(s![a * dim_field..(a + 1) * dim_field, b * dim_field..(b + 1) * dim_field])
                .assign(&src);
        }
    }
    Ok(out)
}

/// `N(ρ) = (‖ρ^{T_A}‖₁ − 1)/2`, cross-checked against `½ Σ (|ε| − ε)`.
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    let eps = symmetric_eigenvalues(&partial_transpose(rho)?)?;
    let trace_norm: f64 = eps.iter().map(|e| e.abs()).sum();
    let from_norm = 0.5 * (trace_norm - rho.trace());
    let from_negative: f64 = 0.5 * eps.iter().map(|e| e.abs() - e).sum::<f64>();
    if (from_norm - from_negative).abs() > 1e-10 {
        return Err(Error::Singular(format!(
            "negativity estimates disagree: {from_norm:.3e} vs {from_negative:.3e}"
        )));
    }
    Ok(from_negative)
}

/// `−Tr ρ ln ρ`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(rho
        .eigenvalues()?
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum())
}

/// `(J_x, J_y, J_z)` on the `2j+1` states `|j, m⟩`, `m = −j..=j`.
pub fn spin_operators(n_atoms: usize) -> [Array2<Complex64>; 3] {
    let dim = n_atoms + 1;
    let j = n_atoms as f64 / 2.0;
    let mut jx = Array2::<Complex64>::zeros((dim, dim));
    let mut jy = Array2::<Complex64>::zeros((dim, dim));
    let mut jz = Array2::<Complex64>::zeros((dim, dim));
    for i in 0..dim {
        let m = i as f64 - j;
        jz[[i, i]] = Complex64::new(m, 0.0);
        if i + 1 < dim {
            let c = raising_coefficient(j, m) / 2.0;
            // ⟨m+1|J₊|m⟩ = 2c
            jx[[i + 1, i]] = Complex64::new(c, 0.0);
            jx[[i, i + 1]] = Complex64::new(c, 0.0);
            jy[[i + 1, i]] = Complex64::new(0.0, -c);
            jy[[i, i + 1]] = Complex64::new(0.0, c);
        }
    }
    [jx, jy, jz]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Kitagawa–Ueda parameter `ξ² = 4 min_{n⊥⟨S⟩} (ΔS_n)² / N`.
///
/// Accepts a product-basis state (the field is traced out) or a spin state.
pub fn spin_squeezing(rho: &DensityMatrix, n_atoms: usize) -> Result<f64> {
    let spin = trace_out_field(rho)?;
    if spin.dim() != n_atoms + 1 {
        return Err(Error::BasisMismatch(format!(
            "spin state of dimension {} for N = {n_atoms}",
            spin.dim()
        )));
    }
    let r = spin.matrix.mapv(|x| Complex64::new(x, 0.0));
    let ops = spin_operators(n_atoms);
    let tr = |op: &Array2<Complex64>| -> f64 { r.dot(op).diag().sum().re };
    let mean = [tr(&ops[0]), tr(&ops[1]), tr(&ops[2])];
    let length = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    if length <= 1e-12 {
        return Err(Error::DirectionUndefined(length));
    }
    let mut cov = [[0.0f64; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let ab = ops[a].dot(&ops[b]);
            let ba = ops[b].dot(&ops[a]);
            let v = 0.5 * (tr(&ab) + tr(&ba)) - mean[a] * mean[b];
            cov[a][b] = v;
            cov[b][a] = v;
        }
    }
    let n0 = normalized(mean);
    let helper = {
        let abs = n0.map(f64::abs);
        let mut e = [0.0; 3];
        let smallest = (0..3).min_by(|&a, &b| abs[a].total_cmp(&abs[b])).unwrap();
        e[smallest] = 1.0;
        e
    };
    let n1 = normalized(cross(n0, helper));
    let n2 = cross(n0, n1);
    let quad = |u: [f64; 3], v: [f64; 3]| -> f64 {
        (0..3).map(|a| (0..3).map(|b| u[a] * cov[a][b] * v[b]).sum::<f64>()).sum()
    };
    let (g11, g22, g12) = (quad(n1, n1), quad(n2, n2), quad(n1, n2));
    let min_var = 0.5 * (g11 + g22) - (0.25 * (g11 - g22).powi(2) + g12 * g12).sqrt();
    Ok(4.0 * min_var / n_atoms as f64)
}

/// G²(0) with its level-truncation certificate.
#[derive(Debug, Clone, Copy)]
pub struct SecondOrderCoherence {
    pub value: f64,
    /// Eigenstates used for `value`.
    pub levels: usize,
    /// Value at the previous level count (`levels / 2`), if one was computed.
    pub previous_value: Option<f64>,
    pub relative_change: f64,
    /// `⟨X⁻X⁺⟩`.
    pub first_order: f64,
}

fn g2_with_levels(x: &Array2<f64>, energies: ArrayView1<f64>, temperature: f64, levels: usize) -> Result<(f64, f64)> {
    let w = gibbs_weights(energies.slice(s![..levels]).as_slice().unwrap(), temperature, 0.0)?;
    // P[j][k] = Δ_{kj} X_{jk} for k > j: the lowering part of X̂⁺ (phase dropped)
    let mut p = Array2::<f64>::zeros((levels, levels));
    for k in 0..levels {
        for j in 0..k {
            let gap = energies[k] - energies[j];
            if gap >= 1e-10 {
                p[[j, k]] = gap * x[[j, k]];
            }
        }
    }
    let p2 = p.dot(&p);
    let mut first = 0.0;
    let mut second = 0.0;
    for (n, wn) in w.iter().enumerate() {
        first += wn * p.column(n).iter().map(|v| v * v).sum::<f64>();
        second += wn * p2.column(n).iter().map(|v| v * v).sum::<f64>();
    }
    if first < 1e-300 {
        return Err(Error::UndefinedCorrelation(format!(
            "⟨X⁻X⁺⟩ = {first:.3e} at T = {temperature}"
        )));
    }
    Ok((second / (first * first), first))
}

/// Zero-delay two-photon correlation of the dressed field in the Gibbs state.
///
/// Starts from the levels retained by `weight_cut` (or `levels`) and doubles the
/// level count until `G²` changes by less than `1e-4` relative.
pub fn g2_zero(
    decomp: &EigenDecomposition,
    params: &ModelParams,
    temperature: f64,
    levels: Option<usize>,
) -> Result<SecondOrderCoherence> {
    let dim = decomp.dim();
    let start = match levels {
        Some(m) => m,
        None => gibbs_weights(decomp.eigenvalues.as_slice().unwrap(), temperature, DEFAULT_WEIGHT_CUT)?.len(),
    }
    .clamp(2.min(dim), dim);
    let x_op = quadrature_operator(&decomp.basis, params)?;
    let mut m = start;
    let mut cap = (2 * start).min(dim);
    let mut x = in_eigenbasis(&x_op, decomp, cap)?;
    let (mut value, mut first) = g2_with_levels(&x, decomp.eigenvalues.view(), temperature, m)?;
    let mut previous = None;
    let mut change = 0.0;
    while m < dim {
        let next = (2 * m).min(dim);
        if next > cap {
            cap = (2 * next).min(dim);
            x = in_eigenbasis(&x_op, decomp, cap)?;
        }
        let (v, f) = g2_with_levels(&x, decomp.eigenvalues.view(), temperature, next)?;
        change = (v - value).abs() / v.abs().max(1e-300);
        previous = Some(value);
        value = v;
        first = f;
        m = next;
        if change < 1e-4 {
            break;
        }
    }
    if change >= 1e-4 {
        return Err(Error::NotConverged {
            last_change: change,
            tolerance: 1e-4,
        });
    }
    Ok(SecondOrderCoherence {
        value,
        levels: m,
        previous_value: previous,
        relative_change: change,
        first_order: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::spectrum_at;
    use approx::assert_abs_diff_eq;

    fn pure(v: &[f64], dim_atom: usize, dim_field: usize) -> DensityMatrix {
        let v = Array1::from(v.to_vec());
        let m = Array2::from_shape_fn((v.len(), v.len()), |(i, j)| v[i] * v[j]);
        DensityMatrix::new(m, DensityBasis::Product { dim_atom, dim_field }).unwrap()
    }

    #[test]
    fn zero_coupling_operators_are_plain_ladders() {
        let p = ModelParams::new(2, 1.0, 1.0, 0.0, 0.0).unwrap();
        let b = DcsBasis::new(2, 5);
        let n = photon_number_matrix(&b, &p).unwrap();
        let x = quadrature_matrix(&b, &p).unwrap();
        for i in 0..=2 {
            for k in 0..=5 {
                let a = b.flat(i, k).unwrap();
                assert_eq!(n.matrix[[a, a]], k as f64);
                assert_eq!(x.matrix[[a, a]], 0.0);
            }
        }
        assert_eq!(n.matrix.iter().filter(|v| **v != 0.0).count(), 3 * 5);
    }

    #[test]
    fn block_traces_and_quadrature_diagonal() {
        let p = ModelParams::new(4, 1.0, 1.0, 0.4, 1.0).unwrap();
        let b = DcsBasis::new(4, 7);
        let n = photon_number_matrix(&b, &p).unwrap();
        let x = quadrature_matrix(&b, &p).unwrap();
        for i in 0..=4 {
            let g = block_displacement(b.m_value(i), &p);
            let tr: f64 = (0..=7).map(|k| n.matrix[[b.flat(i, k).unwrap(), b.flat(i, k).unwrap()]]).sum();
            let expected: f64 = (0..=7).map(|k| k as f64 + g * g).sum();
            assert_abs_diff_eq!(tr, expected, epsilon = 1e-12);
            let a = b.flat(i, 3).unwrap();
            assert_abs_diff_eq!(x.matrix[[a, a]], -2.0 * g, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_coupling_conversion_is_a_relabeling() {
        let p = ModelParams::new(2, 1.0, 1.0, 0.0, 0.0).unwrap();
        let b = DcsBasis::new(2, 4);
        let mut v = Array1::<f64>::zeros(b.dim());
        v[b.flat(1, 3).unwrap()] = 0.6;
        v[b.flat(2, 0).unwrap()] = -0.8;
        let s = dcs_to_fock_product(v.view(), &b, &p, None).unwrap();
        assert_abs_diff_eq!(s.captured_norm, 1.0, epsilon = 1e-15);
        assert_eq!(s.coefficients[[1, 3]], 0.6);
        assert_eq!(s.coefficients[[2, 0]], -0.8);
        assert!(!s.renormalized);
    }

    #[test]
    fn product_photon_number_matches_dcs_value() {
        let p = ModelParams::new(3, 1.0, 1.0, 0.7, 0.5).unwrap();
        let d = spectrum_at(&p, 20).unwrap();
        let dcs = ground_mean_photon_of(&d, &p).unwrap().per_atom * 3.0;
        let b = DcsBasis::new(3, 20);
        let s = dcs_to_fock_product(d.ground_state(), &b, &p, None).unwrap();
        assert!(s.captured_norm >= 1.0 - 1e-8);
        let prod: f64 = s
            .coefficients
            .indexed_iter()
            .map(|((_, n), c)| n as f64 * c * c)
            .sum();
        assert_abs_diff_eq!(prod, dcs, epsilon = 1e-8);
    }

    #[test]
    fn captured_norm_grows_with_cutoff() {
        let p = ModelParams::new(4, 1.0, 1.0, 1.0, 0.0).unwrap();
        let b = DcsBasis::new(4, 10);
        let d = spectrum_at(&p, 10).unwrap();
        let mut last = 0.0;
        for nt in [4, 8, 16, 32, 64] {
            let s = dcs_to_fock_product(d.eigenvectors.column(5), &b, &p, Some(nt)).unwrap();
            assert!(s.captured_norm <= 1.0 + 1e-12);
            assert!(s.captured_norm >= last - 1e-15);
            last = s.captured_norm;
        }
        assert_abs_diff_eq!(last, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn gibbs_limits() {
        let p = ModelParams::new(2, 1.0, 1.0, 0.3, 0.0).unwrap();
        let d = spectrum_at(&p, 12).unwrap();
        let cold = gibbs_state(&d, 0.0, DEFAULT_WEIGHT_CUT).unwrap();
        assert_eq!(cold.dim(), 1);
        assert_eq!(cold.trace(), 1.0);
        let warm = gibbs_state(&d, 1.0, DEFAULT_WEIGHT_CUT).unwrap();
        assert_abs_diff_eq!(warm.trace(), 1.0, epsilon = 1e-14);
        warm.check().unwrap();
        let mut last = -1.0;
        for t in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let s = von_neumann_entropy(&gibbs_state(&d, t, DEFAULT_WEIGHT_CUT).unwrap()).unwrap();
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn bell_state_partial_transpose_and_negativity() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = pure(&[r, 0.0, 0.0, r], 2, 2);
        let pt = partial_transpose(&bell).unwrap();
        let eps = symmetric_eigenvalues(&pt).unwrap();
        assert_abs_diff_eq!(eps[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(negativity(&bell).unwrap(), 0.5, epsilon = 1e-10);
        let back = DensityMatrix::new(pt, bell.basis).unwrap();
        assert_eq!(partial_transpose(&back).unwrap(), bell.matrix);
    }

    #[test]
    fn product_states_are_separable() {
        let a = [0.6, 0.8];
        let f = [0.0, 0.28, 0.96];
        let v: Vec<f64> = a.iter().flat_map(|x| f.iter().map(move |y| x * y)).collect();
        let rho = pure(&v, 2, 3);
        assert_abs_diff_eq!(negativity(&rho).unwrap(), 0.0, epsilon = 1e-14);
        let pt = DensityMatrix::new(partial_transpose(&rho).unwrap(), rho.basis).unwrap();
        assert!(pt.min_eigenvalue().unwrap() > -1e-14);
    }

    #[test]
    fn eigenbasis_density_has_no_partial_transpose() {
        let rho = DensityMatrix::new(Array2::eye(2) / 2.0, DensityBasis::Eigen { levels: 2 }).unwrap();
        assert!(matches!(partial_transpose(&rho), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn coherent_spin_state_is_unsqueezed() {
        for n in [1, 2, 7, 20] {
            let mut m = Array2::<f64>::zeros((n + 1, n + 1));
            m[[0, 0]] = 1.0;
            let rho = DensityMatrix::new(m, DensityBasis::Spin { dim: n + 1 }).unwrap();
            assert_abs_diff_eq!(spin_squeezing(&rho, n).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn maximally_mixed_spin_has_no_direction() {
        let rho = DensityMatrix::new(Array2::eye(3) / 3.0, DensityBasis::Spin { dim: 3 }).unwrap();
        assert!(matches!(spin_squeezing(&rho, 2), Err(Error::DirectionUndefined(_))));
    }

    #[test]
    fn reduced_spin_density_matches_product_route() {
        let p = ModelParams::new(3, 1.0, 1.0, 0.6, -0.4).unwrap();
        let d = spectrum_at(&p, 15).unwrap();
        let rho = gibbs_state(&d, 0.4, 1e-8).unwrap();
        let direct = reduced_spin_density(&d, &rho, &p).unwrap();
        let via = trace_out_field(&product_density(&d, &rho, &p).unwrap()).unwrap();
        for (a, b) in direct.matrix.iter().zip(via.matrix.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        direct.check().unwrap();
    }

    #[test]
    fn thermal_oscillator_g2_is_two() {
        let p = ModelParams::new(1, 1.0, 1.3, 0.0, 0.0).unwrap();
        let d = spectrum_at(&p, 100).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let g = g2_zero(&d, &p, t, None).unwrap();
            assert_abs_diff_eq!(g.value, 2.0, epsilon = 1e-6);
        }
    }
}
