//! Dense eigendecomposition with truncation control.
//!
//! Hamiltonians tagged with a physical basis are split into the two parity
//! sectors before the LAPACK solve, which halves the dense dimension. Each
//! eigenvector then carries an exact parity label.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{EigValsh, Eigh, UPLO};

use crate::core_model::ModelParams;
use crate::error::{Error, Result};
use crate::hamiltonian::{build_dcs_hamiltonian, BasisTag, SymmetricMatrix};

/// Truncations tried by [`converged_spectrum`], in order.
pub const TRUNCATION_SCHEDULE: [usize; 6] = [6, 12, 25, 50, 75, 100];

#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub previous_k_trunc: usize,
    /// Largest relative eigenvalue change over the monitored levels.
    pub relative_change: f64,
    /// Ground state at the previous truncation, kept for observable-stability checks.
    pub previous_ground: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Array1<f64>,
    /// Columns are orthonormal eigenvectors in `basis`.
    pub eigenvectors: Array2<f64>,
    /// ±1 per level when the matrix was solved sector by sector.
    pub parities: Option<Vec<i8>>,
    /// `max_n ‖H v_n − E_n v_n‖₂`.
    pub residual: f64,
    /// `‖VᵀV − I‖_max`.
    pub orthonormality_defect: f64,
    pub basis: BasisTag,
    pub fingerprint: String,
    pub convergence: Option<ConvergenceRecord>,
}

impl EigenDecomposition {
    /// Number of levels held, which is below the basis dimension for partial solves.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn basis_dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> ArrayView1<'_, f64> {
        self.eigenvectors.column(0)
    }

    pub fn k_trunc(&self) -> Option<usize> {
        match self.basis {
            BasisTag::Dcs(b) => Some(b.k_trunc),
            _ => None,
        }
    }
}

/// Signed permutation `Π e_i = sign[i] · e_{partner[i]}` representing a parity.
struct SignedPermutation {
    partner: Vec<usize>,
    sign: Vec<f64>,
}

fn parity_of(basis: &BasisTag) -> Option<SignedPermutation> {
    match basis {
        BasisTag::Dcs(b) => {
            let mut partner = vec![0; b.dim()];
            let mut sign = vec![0.0; b.dim()];
            for i in 0..=b.n_atoms {
                for k in 0..=b.k_trunc {
                    let from = b.flat(i, k).unwrap();
                    partner[from] = b.flat(b.n_atoms - i, k).unwrap();
                    sign[from] = if k % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
            Some(SignedPermutation { partner, sign })
        }
        BasisTag::Fock(b) => {
            let mut sign = vec![0.0; b.dim()];
            for i in 0..=b.n_atoms {
                for n in 0..=b.n_trunc {
                    sign[b.flat(i, n).unwrap()] = if (i + n) % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
            Some(SignedPermutation {
                partner: (0..b.dim()).collect(),
                sign,
            })
        }
        BasisTag::Generic => None,
    }
}

impl SignedPermutation {
    fn commutator_defect(&self, h: &Array2<f64>) -> f64 {
        let n = h.nrows();
        let mut worst = 0.0f64;
        for a in 0..n {
            let pa = self.partner[a];
            for b in 0..n {
                let lhs = h[[a, self.partner[b]]] * self.sign[b];
                let rhs = self.sign[a] * h[[pa, b]];
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    /// Orthonormal parity-adapted vectors, each with at most two nonzero entries.
    fn sectors(&self) -> [Vec<Vec<(usize, f64)>>; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for i in 0..self.partner.len() {
            let p = self.partner[i];
            if p == i {
                if self.sign[i] > 0.0 {
                    even.push(vec![(i, 1.0)]);
                } else {
                    odd.push(vec![(i, 1.0)]);
                }
            } else if i < p {
                even.push(vec![(i, r), (p, r * self.sign[i])]);
                odd.push(vec![(i, r), (p, -r * self.sign[i])]);
            }
        }
        [even, odd]
    }
}

fn sector_block(h: &Array2<f64>, sector: &[Vec<(usize, f64)>]) -> Array2<f64> {
    let n = sector.len();
    let mut block = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        for b in a..n {
            let mut v = 0.0;
            for &(ia, ca) in &sector[a] {
                for &(ib, cb) in &sector[b] {
                    v += ca * cb * h[[ia, ib]];
                }
            }
            block[[a, b]] = v;
            block[[b, a]] = v;
        }
    }
    block
}

struct SectorSolution {
    values: Array1<f64>,
    vectors: Array2<f64>,
    residual: f64,
    orthonormality_defect: f64,
}

/// Lowest `count` eigenpairs through LAPACK `dsyevr` (index range), without
/// forming the rest of the spectrum.
fn lowest_pairs(h: &Array2<f64>, count: usize, fingerprint: &str) -> Result<(Array1<f64>, Array2<f64>)> {
    use std::os::raw::{c_char, c_int};
    let n = h.nrows();
    let fail = |reason: String| Error::Eigensolver {
        fingerprint: fingerprint.to_string(),
        reason,
    };
    let n_c = c_int::try_from(n).map_err(|_| fail(format!("dimension {n} exceeds LAPACK range")))?;
    let count_c = count as c_int;
    // symmetric, so the row-major buffer is also the column-major matrix
    let mut a: Vec<f64> = h.iter().copied().collect();
    let mut found: c_int = 0;
    let mut w = vec![0.0f64; n];
    let mut z = vec![0.0f64; n * count];
    let mut isuppz = vec![0 as c_int; 2 * count];
    let (jobz, range, uplo) = (b'V' as c_char, b'I' as c_char, b'U' as c_char);
    let (vl, vu, il, abstol) = (0.0f64, 0.0f64, 1 as c_int, 0.0f64);
    let mut info: c_int = 0;
    let mut work_query = 0.0f64;
    let mut iwork_query: c_int = 0;
    let mut call = |a: &mut [f64], work: &mut [f64], lwork: c_int, iwork: &mut [c_int], liwork: c_int, info: &mut c_int| {
        // SAFETY: every buffer is sized per the dsyevr contract for n, il = 1, iu = count
        unsafe {
            lapack_sys::dsyevr_(
                &jobz, &range, &uplo, &n_c, a.as_mut_ptr(), &n_c, &vl, &vu, &il, &count_c, &abstol,
                &mut found, w.as_mut_ptr(), z.as_mut_ptr(), &n_c, isuppz.as_mut_ptr(),
                work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, info,
            );
        }
    };
    call(
        &mut a,
        std::slice::from_mut(&mut work_query),
        -1,
        std::slice::from_mut(&mut iwork_query),
        -1,
        &mut info,
    );
    if info != 0 {
        return Err(fail(format!("dsyevr workspace query returned {info}")));
    }
    let lwork = work_query as c_int;
    let liwork = iwork_query;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    call(&mut a, &mut work, lwork, &mut iwork, liwork, &mut info);
    if info != 0 || found as usize != count {
        return Err(fail(format!("dsyevr returned info {info}, {found} of {count} pairs")));
    }
    let values = Array1::from(w[..count].to_vec());
    let vectors = Array2::from_shape_fn((n, count), |(i, c)| z[c * n + i]);
    Ok((values, vectors))
}

fn solve_dense(h: &Array2<f64>, count: Option<usize>, fingerprint: &str) -> Result<SectorSolution> {
    let (values, vectors) = match count.filter(|&c| c < h.nrows()) {
        Some(c) => lowest_pairs(h, c, fingerprint)?,
        None => h.eigh(UPLO::Upper).map_err(|e| Error::Eigensolver {
            fingerprint: fingerprint.to_string(),
            reason: e.to_string(),
        })?,
    };
    let hv = h.dot(&vectors);
    let mut residual = 0.0f64;
    for (n, col) in hv.axis_iter(Axis(1)).enumerate() {
        let r: f64 = col
            .iter()
            .zip(vectors.column(n))
            .map(|(a, b)| (a - values[n] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
    }
    let gram = vectors.t().dot(&vectors);
    let mut ortho = 0.0f64;
    for ((i, j), v) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        ortho = ortho.max((v - target).abs());
    }
    Ok(SectorSolution {
        values,
        vectors,
        residual,
        orthonormality_defect: ortho,
    })
}

/// Full eigendecomposition of a real symmetric matrix.
///
/// Levels equal to within `1e-12` relative are ordered odd parity first, and
/// every eigenvector is signed so its first non-negligible component is positive.
pub fn eigendecompose(h: &SymmetricMatrix) -> Result<EigenDecomposition> {
    decompose(h, None)
}

/// The lowest `count` levels only; the returned decomposition has `count` columns.
pub fn eigendecompose_lowest(h: &SymmetricMatrix, count: usize) -> Result<EigenDecomposition> {
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }
    decompose(h, Some(count.min(h.dim())))
}

fn decompose(h: &SymmetricMatrix, count: Option<usize>) -> Result<EigenDecomposition> {
    h.check()?;
    let dim = h.dim();
    let scale = h.matrix.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let perm = parity_of(&h.basis).filter(|p| p.commutator_defect(&h.matrix) <= 1e-12 * scale);

    let (mut levels, residual, ortho): (Vec<(f64, i8, Array1<f64>)>, f64, f64) = match perm {
        None => {
            let sol = solve_dense(&h.matrix, count, &h.fingerprint)?;
            let levels = sol
                .values
                .iter()
                .zip(sol.vectors.axis_iter(Axis(1)))
                .map(|(&e, v)| (e, 0i8, v.to_owned()))
                .collect();
            (levels, sol.residual, sol.orthonormality_defect)
        }
        Some(perm) => {
            let mut levels = Vec::with_capacity(dim);
            let mut residual = 0.0f64;
            let mut ortho = 0.0f64;
            for (sector, parity) in perm.sectors().iter().zip([1i8, -1i8]) {
                if sector.is_empty() {
                    continue;
                }
                let sol = solve_dense(&sector_block(&h.matrix, sector), count, &h.fingerprint)?;
                residual = residual.max(sol.residual);
                ortho = ortho.max(sol.orthonormality_defect);
                for (c, &e) in sol.values.iter().enumerate() {
                    let mut full = Array1::<f64>::zeros(dim);
                    for (a, entries) in sector.iter().enumerate() {
                        let u = sol.vectors[[a, c]];
                        for &(i, coeff) in entries {
                            full[i] += coeff * u;
                        }
                    }
                    levels.push((e, parity, full));
                }
            }
            (levels, residual, ortho)
        }
    };

    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    // within near-degenerate runs, odd parity first
    let mut start = 0;
    while start < levels.len() {
        let mut end = start + 1;
        while end < levels.len()
            && (levels[end].0 - levels[end - 1].0).abs() <= 1e-12 * levels[end].0.abs().max(1.0)
        {
            end += 1;
        }
        levels[start..end].sort_by_key(|l| l.1);
        start = end;
    }
    if let Some(c) = count {
        levels.truncate(c);
    }

    let kept = levels.len();
    let mut values = Array1::<f64>::zeros(kept);
    let mut vectors = Array2::<f64>::zeros((dim, kept));
    let mut parities = Vec::with_capacity(kept);
    for (n, (e, parity, mut v)) in levels.into_iter().enumerate() {
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-10) {
            if *first < 0.0 {
                v.mapv_inplace(|x| -x);
            }
        }
        values[n] = e;
        vectors.column_mut(n).assign(&v);
        parities.push(parity);
    }
    let has_parity = parities.iter().all(|&p| p != 0);

    let e_max = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if residual >= 1e-8 * e_max || ortho >= 1e-10 {
        return Err(Error::Eigensolver {
            fingerprint: h.fingerprint.clone(),
            reason: format!("residual {residual:.3e}, orthonormality defect {ortho:.3e}"),
        });
    }
    Ok(EigenDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
        parities: has_parity.then_some(parities),
        residual,
        orthonormality_defect: ortho,
        basis: h.basis,
        fingerprint: h.fingerprint.clone(),
        convergence: None,
    })
}

/// Ascending eigenvalues without eigenvectors, for energy-only sweeps.
pub fn eigenvalues(h: &SymmetricMatrix) -> Result<Array1<f64>> {
    h.check()?;
    let scale = h.matrix.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let solve = |m: &Array2<f64>| {
        m.eigvalsh(UPLO::Upper).map_err(|e| Error::Eigensolver {
            fingerprint: h.fingerprint.clone(),
            reason: e.to_string(),
        })
    };
    let mut values: Vec<f64> = match parity_of(&h.basis).filter(|p| p.commutator_defect(&h.matrix) <= 1e-12 * scale) {
        None => solve(&h.matrix)?.to_vec(),
        Some(perm) => {
            let mut all = Vec::with_capacity(h.dim());
            for sector in perm.sectors().iter().filter(|s| !s.is_empty()) {
                all.extend(solve(&sector_block(&h.matrix, sector))?);
            }
            all
        }
    };
    values.sort_by(f64::total_cmp);
    Ok(Array1::from(values))
}

/// Builds and diagonalizes the DCS Hamiltonian at a fixed truncation.
pub fn spectrum_at(params: &ModelParams, k_trunc: usize) -> Result<EigenDecomposition> {
    eigendecompose(&build_dcs_hamiltonian(params, k_trunc)?)
}

fn relative_change(a: &EigenDecomposition, b: &EigenDecomposition, n_levels: usize) -> f64 {
    (0..n_levels)
        .map(|i| {
            let (x, y) = (a.eigenvalues[i], b.eigenvalues[i]);
            (x - y).abs() / y.abs().max(1e-12)
        })
        .fold(0.0, f64::max)
}

/// Escalates the truncation through [`TRUNCATION_SCHEDULE`] until the lowest
/// `n_levels` eigenvalues change by less than `rel_tol` between successive
/// truncations, and returns the decomposition at the larger one.
pub fn converged_spectrum(params: &ModelParams, n_levels: usize, rel_tol: f64) -> Result<EigenDecomposition> {
    converged_spectrum_from(params, n_levels, rel_tol, &TRUNCATION_SCHEDULE)
}

pub fn converged_spectrum_from(
    params: &ModelParams,
    n_levels: usize,
    rel_tol: f64,
    schedule: &[usize],
) -> Result<EigenDecomposition> {
    converge(params, n_levels, rel_tol, schedule, spectrum_at)
}

/// As [`converged_spectrum`], but only the lowest `n_levels` are solved for and returned.
pub fn converged_lowest(params: &ModelParams, n_levels: usize, rel_tol: f64) -> Result<EigenDecomposition> {
    converged_lowest_from(params, n_levels, rel_tol, &TRUNCATION_SCHEDULE)
}

pub fn converged_lowest_from(
    params: &ModelParams,
    n_levels: usize,
    rel_tol: f64,
    schedule: &[usize],
) -> Result<EigenDecomposition> {
    converge(params, n_levels, rel_tol, schedule, |p, k| {
        eigendecompose_lowest(&build_dcs_hamiltonian(p, k)?, n_levels)
    })
}

fn converge(
    params: &ModelParams,
    n_levels: usize,
    rel_tol: f64,
    schedule: &[usize],
    solve: impl Fn(&ModelParams, usize) -> Result<EigenDecomposition>,
) -> Result<EigenDecomposition> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rel_tol must be positive, got {rel_tol}")));
    }
    if n_levels == 0 || schedule.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least one level and two truncations".into(),
        ));
    }
    let mut prev = solve(params, schedule[0])?;
    let mut last_change = f64::INFINITY;
    for &kt in &schedule[1..] {
        let cur = solve(params, kt)?;
        let levels = n_levels.min(prev.dim());
        last_change = relative_change(&prev, &cur, levels);
        if last_change < rel_tol {
            let previous_ground = prev.ground_state().to_owned();
            let mut out = cur;
            out.convergence = Some(ConvergenceRecord {
                previous_k_trunc: prev.k_trunc().unwrap_or(0),
                relative_change: last_change,
                previous_ground,
            });
            return Ok(out);
        }
        prev = cur;
    }
    Err(Error::NotConverged {
        last_change,
        tolerance: rel_tol,
    })
}
