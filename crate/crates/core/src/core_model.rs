//! Model parameters, basis index maps and the displaced-Fock overlap kernels.
//!
//! One displacement convention is used throughout the crate:
//! `D(g) = exp(g·a − g·a†)`. The field basis attached to spin projection `m`
//! is `|k⟩_m = D(g_m)|k⟩`, the number states of the shifted mode `A_m = a + g_m`.
//! Every sign-sensitive kernel below is a matrix element of this `D`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Physical parameters of the Dicke–Stark Hamiltonian
/// `ω a†a + Δ J_z + (2λ/√N)(a† + a) J_x + (U/N) a†a J_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n_atoms: usize,
    pub omega: f64,
    pub delta: f64,
    pub lambda: f64,
    pub stark_u: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_atoms: 1,
            omega: 1.0,
            delta: 1.0,
            lambda: 0.0,
            stark_u: 0.0,
        }
    }
}

impl ModelParams {
    pub fn new(n_atoms: usize, omega: f64, delta: f64, lambda: f64, stark_u: f64) -> Result<Self> {
        let p = Self {
            n_atoms,
            omega,
            delta,
            lambda,
            stark_u,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be at least 1".into()));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be finite and positive, got {}",
                self.omega
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !self.delta.is_finite() || !self.stark_u.is_finite() {
            return Err(Error::InvalidParameter("delta and stark_u must be finite".into()));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_stark(mut self, stark_u: f64) -> Self {
        self.stark_u = stark_u;
        self
    }

    /// Total spin `j = N/2`.
    pub fn spin(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    /// Whether the mean-field critical coupling exists (`ω − U/2 > 0`).
    pub fn mean_field_valid(&self) -> bool {
        self.omega - self.stark_u / 2.0 > 0.0
    }

    /// Displacement difference between adjacent projections, `G = 2λ/(ω√N)`.
    pub fn displacement_step(&self) -> f64 {
        2.0 * self.lambda / (self.omega * (self.n_atoms as f64).sqrt())
    }

    /// Stable textual fingerprint (exact bit patterns of every field).
    pub fn fingerprint(&self) -> String {
        format!(
            "N{}-w{:016x}-d{:016x}-l{:016x}-u{:016x}",
            self.n_atoms,
            self.omega.to_bits(),
            self.delta.to_bits(),
            self.lambda.to_bits(),
            self.stark_u.to_bits()
        )
    }
}

/// Spin projection `m`, stored as the integer `2m` so half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinProjection {
    twice: i64,
}

impl SpinProjection {
    pub fn from_twice(twice: i64) -> Self {
        Self { twice }
    }

    /// Projection for block index `i ∈ 0..=N`, i.e. `m = i − N/2`.
    pub fn from_index(index: usize, n_atoms: usize) -> Self {
        Self {
            twice: 2 * index as i64 - n_atoms as i64,
        }
    }

    pub fn twice(self) -> i64 {
        self.twice
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    /// Block index `m + N/2`, if the projection is admissible for `n_atoms`.
    pub fn index(self, n_atoms: usize) -> Option<usize> {
        let n = n_atoms as i64;
        if self.twice.abs() > n || (self.twice + n) % 2 != 0 {
            return None;
        }
        Some(((self.twice + n) / 2) as usize)
    }
}

/// `j_m^+ = √(j(j+1) − m(m+1))`.
pub fn raising_coefficient(j: f64, m: f64) -> f64 {
    (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

/// `j_m^− = √(j(j+1) − m(m−1))`.
pub fn lowering_coefficient(j: f64, m: f64) -> f64 {
    (j * (j + 1.0) - m * (m - 1.0)).max(0.0).sqrt()
}

/// Flat index map for a product of `N+1` spin blocks, each `len` field states long.
/// Flat index = `block · len + field`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BlockIndex {
    n_atoms: usize,
    len: usize,
}

impl BlockIndex {
    fn dim(&self) -> usize {
        (self.n_atoms + 1) * self.len
    }

    fn flat(&self, block: usize, field: usize) -> Option<usize> {
        (block <= self.n_atoms && field < self.len).then(|| block * self.len + field)
    }

    fn split(&self, flat: usize) -> Option<(usize, usize)> {
        (flat < self.dim()).then(|| (flat / self.len, flat % self.len))
    }
}

/// Displaced coherent-state basis `|j,m⟩|k⟩_m`, `k ∈ 0..=k_trunc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcsBasis {
    pub n_atoms: usize,
    pub k_trunc: usize,
}

impl DcsBasis {
    pub fn new(n_atoms: usize, k_trunc: usize) -> Self {
        Self { n_atoms, k_trunc }
    }

    fn blocks(&self) -> BlockIndex {
        BlockIndex {
            n_atoms: self.n_atoms,
            len: self.k_trunc + 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks().dim()
    }

    pub fn block_len(&self) -> usize {
        self.k_trunc + 1
    }

    /// Flat index from block index `m + j` and displaced level `k`.
    pub fn flat(&self, m_index: usize, k: usize) -> Option<usize> {
        self.blocks().flat(m_index, k)
    }

    pub fn index_of(&self, m: SpinProjection, k: usize) -> Option<usize> {
        self.flat(m.index(self.n_atoms)?, k)
    }

    pub fn pair(&self, flat: usize) -> Option<(SpinProjection, usize)> {
        let (b, k) = self.blocks().split(flat)?;
        Some((SpinProjection::from_index(b, self.n_atoms), k))
    }

    pub fn m_value(&self, m_index: usize) -> f64 {
        m_index as f64 - self.n_atoms as f64 / 2.0
    }
}

/// Plain product basis `|j,m⟩ ⊗ |n⟩`, `n ∈ 0..=n_trunc` (atom-major layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    pub n_atoms: usize,
    pub n_trunc: usize,
}

impl FockBasis {
    pub fn new(n_atoms: usize, n_trunc: usize) -> Self {
        Self { n_atoms, n_trunc }
    }

    fn blocks(&self) -> BlockIndex {
        BlockIndex {
            n_atoms: self.n_atoms,
            len: self.n_trunc + 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks().dim()
    }

    pub fn block_len(&self) -> usize {
        self.n_trunc + 1
    }

    pub fn flat(&self, m_index: usize, n_photon: usize) -> Option<usize> {
        self.blocks().flat(m_index, n_photon)
    }

    pub fn index_of(&self, m: SpinProjection, n_photon: usize) -> Option<usize> {
        self.flat(m.index(self.n_atoms)?, n_photon)
    }

    pub fn pair(&self, flat: usize) -> Option<(SpinProjection, usize)> {
        let (b, n) = self.blocks().split(flat)?;
        Some((SpinProjection::from_index(b, self.n_atoms), n))
    }

    pub fn m_value(&self, m_index: usize) -> f64 {
        m_index as f64 - self.n_atoms as f64 / 2.0
    }
}

/// `g_m = 2λm/(ω√N)`.
pub fn displacement_amplitude(m: SpinProjection, params: &ModelParams) -> Result<f64> {
    if m.index(params.n_atoms).is_none() {
        return Err(Error::InvalidParameter(format!(
            "spin projection m = {} is not admissible for N = {}",
            m.value(),
            params.n_atoms
        )));
    }
    Ok(block_displacement(m.value(), params))
}

pub(crate) fn block_displacement(m: f64, params: &ModelParams) -> f64 {
    2.0 * params.lambda * m / (params.omega * (params.n_atoms as f64).sqrt())
}

/// `ln k!` for `k ∈ 0..=n`, accumulated as a running sum of logarithms.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Generalized Laguerre values `L_i^{(a)}(x)` for `i ∈ 0..=degree`, returned as
/// `(mantissa, ln_scale)` pairs so that `L = mantissa · e^{ln_scale}`.
fn laguerre_sequence(degree: usize, order: usize, x: f64) -> Vec<(f64, f64)> {
    const RESCALE_AT: f64 = 1e150;
    let a = order as f64;
    let mut out = Vec::with_capacity(degree + 1);
    let mut scale = 0.0f64;
    let mut prev = 1.0f64;
    out.push((prev, scale));
    if degree == 0 {
        return out;
    }
    let mut cur = 1.0 + a - x;
    out.push((cur, scale));
    for i in 1..degree {
        let fi = i as f64;
        let next = ((2.0 * fi + 1.0 + a - x) * cur - (fi + a) * prev) / (fi + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_AT {
            prev /= RESCALE_AT;
            cur /= RESCALE_AT;
            scale += RESCALE_AT.ln();
        }
        out.push((cur, scale));
    }
    out
}

/// Matrix elements `⟨l|D(g)|k⟩` for `l < rows`, `k < cols`, with `D(g) = exp(g·a − g·a†)`.
///
/// Evaluated through the Laguerre closed form with factorial ratios in log space,
/// which stays accurate where the alternating finite sum loses digits.
pub fn displacement_matrix(g: f64, rows: usize, cols: usize) -> Result<Array2<f64>> {
    if !g.is_finite() {
        return Err(Error::InvalidParameter(format!("displacement {g} is not finite")));
    }
    let mut out = Array2::<f64>::zeros((rows, cols));
    if rows == 0 || cols == 0 {
        return Ok(out);
    }
    if g == 0.0 {
        for i in 0..rows.min(cols) {
            out[[i, i]] = 1.0;
        }
        return Ok(out);
    }
    // D(g) is the coherent-state displacement by β = −g.
    let beta = -g;
    let x = beta * beta;
    let ln_beta = beta.abs().ln();
    let ln_fact = ln_factorials(rows.max(cols));
    for a in 0..rows.max(cols) {
        // l = lo + a, k = lo (on or below the diagonal)
        let n_below = if rows > a { (rows - a).min(cols) } else { 0 };
        // l = lo, k = lo + a (strictly above the diagonal)
        let n_above = if a > 0 && cols > a { (cols - a).min(rows) } else { 0 };
        let n_deg = n_below.max(n_above);
        if n_deg == 0 {
            continue;
        }
        let lag = laguerre_sequence(n_deg - 1, a, x);
        let odd = a % 2 == 1;
        let sign_below = if odd && beta < 0.0 { -1.0 } else { 1.0 };
        let sign_above = if odd && beta > 0.0 { -1.0 } else { 1.0 };
        for (lo, &(mantissa, ln_scale)) in lag.iter().enumerate() {
            if !mantissa.is_finite() {
                return Err(Error::Overflow(format!(
                    "Laguerre recurrence overflowed at degree {lo}, order {a}, |g| = {}",
                    g.abs()
                )));
            }
            let value = if mantissa == 0.0 {
                0.0
            } else {
                let ln_mag = 0.5 * (ln_fact[lo] - ln_fact[lo + a]) + a as f64 * ln_beta - 0.5 * x
                    + ln_scale
                    + mantissa.abs().ln();
                mantissa.signum() * ln_mag.exp()
            };
            if lo < n_below {
                out[[lo + a, lo]] = sign_below * value;
            }
            if lo < n_above {
                out[[lo, lo + a]] = sign_above * value;
            }
        }
    }
    Ok(out)
}

/// Overlap kernel `D_{l,k}(G)` for `l, k ∈ 0..=k_trunc`:
/// `e^{−G²/2} Σ_r (−1)^r √(l!k!) G^{l+k−2r} / ((l−r)!(k−r)!r!)`.
///
/// Related to the displacement operator by `D_{l,k} = (−1)^l ⟨l|D(G)|k⟩`.
pub fn displaced_overlap_matrix(step: f64, k_trunc: usize) -> Result<Array2<f64>> {
    let mut d = displacement_matrix(step, k_trunc + 1, k_trunc + 1)?;
    for (l, mut row) in d.outer_iter_mut().enumerate() {
        if l % 2 == 1 {
            row.mapv_inplace(|v| -v);
        }
    }
    Ok(d)
}

/// Which pair of adjacent displaced bases an overlap connects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapDirection {
    /// `⟨l|_m |k⟩_{m+1}`: bra on the lower projection, equal to `(−1)^l D_{l,k}`.
    LowerToUpper,
    /// `⟨l|_{m+1} |k⟩_m`: bra on the upper projection, equal to `(−1)^k D_{l,k}`.
    UpperToLower,
}

pub fn signed_overlap(l: usize, k: usize, direction: OverlapDirection, kernel: &Array2<f64>) -> Result<f64> {
    let (rows, cols) = kernel.dim();
    if l >= rows || k >= cols {
        return Err(Error::IndexOutOfRange(format!(
            "overlap ({l}, {k}) outside kernel of shape {rows}x{cols}"
        )));
    }
    let sign_index = match direction {
        OverlapDirection::LowerToUpper => l,
        OverlapDirection::UpperToLower => k,
    };
    let v = kernel[[l, k]];
    Ok(if sign_index % 2 == 1 { -v } else { v })
}

/// Fock vacuum expanded in a basis displaced by `g`:
/// `c_k = ⟨k|D(g)|0⟩ = e^{−g²/2} (−g)^k / √k!`.
pub fn vacuum_in_displaced_basis(g: f64, k_trunc: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_trunc + 1);
    let mut c = (-0.5 * g * g).exp();
    out.push(c);
    for k in 1..=k_trunc {
        c *= -g / (k as f64).sqrt();
        out.push(c);
    }
    out
}
