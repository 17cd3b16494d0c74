//! Closed evolution from `|j,−j⟩|0⟩` and the dressed master equation.
//!
//! The dressed master equation has eigenbasis dyads as jump operators, so in
//! the interaction picture its generator is time independent and splits into
//! a classical rate equation for populations and pure exponential decay of
//! each coherence. States are integrated in that picture; the Schrödinger
//! picture differs only by the phases `e^{−i(E_a−E_b)t}`, which leave the
//! spectrum of `ρ` and its distance to any eigenbasis-diagonal state unchanged.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView1, Zip};
use num_complex::Complex64;

use crate::core_model::{block_displacement, raising_coefficient, vacuum_in_displaced_basis, ModelParams};
use crate::error::{Error, Result};
use crate::hamiltonian::{BasisTag, SymmetricMatrix};
use crate::observables::{gibbs_weights, in_eigenbasis, photon_operator, quadrature_operator, DensityBasis, DensityMatrix};
use crate::spectrum::EigenDecomposition;

/// Ohmic coupling `α` in units of `ω`.
pub const DEFAULT_BATH_COUPLING: f64 = 0.001;
/// Ohmic cutoff `ω_c` in units of `ω`.
pub const DEFAULT_BATH_CUTOFF: f64 = 10.0;
/// Levels whose Boltzmann weight relative to the ground state stays above this are kept.
pub const DEFAULT_LEVEL_WEIGHT: f64 = 1e-10;
pub const MIN_DEFAULT_LEVELS: usize = 20;
/// Pairs closer than this are treated as degenerate and carry no rate.
pub const GAP_THRESHOLD: f64 = 1e-10;

/// `d_n = ⟨φ_n|ψ(0)⟩` for `|ψ(0)⟩ = |j,−j⟩ ⊗ |0⟩`.
#[derive(Debug, Clone)]
pub struct InitialOverlaps {
    pub coefficients: Array1<f64>,
    /// `1 − Σ_n d_n²`.
    pub norm_deficit: f64,
}

/// Overlaps of the eigenstates with the lowest spin projection times the
/// field vacuum. In the DCS basis the vacuum is `Σ_k c_k(−g_{−j}) |k⟩_{−j}`.
pub fn initial_overlaps(decomp: &EigenDecomposition, params: &ModelParams) -> Result<InitialOverlaps> {
    params.validate()?;
    let (start, amplitudes): (usize, Vec<f64>) = match decomp.basis {
        BasisTag::Dcs(b) => {
            if b.n_atoms != params.n_atoms {
                return Err(Error::BasisMismatch("DCS basis and parameters disagree on N".into()));
            }
            let g = block_displacement(-params.spin(), params);
            (b.flat(0, 0).unwrap(), vacuum_in_displaced_basis(-g, b.k_trunc))
        }
        BasisTag::Fock(b) => (b.flat(0, 0).unwrap(), vec![1.0]),
        BasisTag::Generic => return Err(Error::BasisMismatch("initial state needs a physical basis".into())),
    };
    let block = decomp
        .eigenvectors
        .slice(s![start..start + amplitudes.len(), ..]);
    let coefficients = block.t().dot(&Array1::from(amplitudes));
    let norm_deficit = 1.0 - coefficients.iter().map(|d| d * d).sum::<f64>();
    if norm_deficit > 1e-6 {
        return Err(Error::Truncation(format!(
            "initial state loses {norm_deficit:.3e} of its norm in {}",
            decomp.basis.label()
        )));
    }
    Ok(InitialOverlaps {
        coefficients,
        norm_deficit,
    })
}

/// `⟨ψ(t)|O|ψ(t)⟩ = Σ_{l,n} d_l d_n e^{i(E_l−E_n)t} O_{ln}` over `times`.
///
/// Levels with `|d_n|` below `1e-12 · max|d|` are dropped before the double sum.
pub fn closed_expectation(
    decomp: &EigenDecomposition,
    overlaps: &InitialOverlaps,
    op: &SymmetricMatrix,
    times: &[f64],
) -> Result<Vec<f64>> {
    let d = &overlaps.coefficients;
    let dmax = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let active: Vec<usize> = (0..d.len()).filter(|&n| d[n].abs() > 1e-12 * dmax).collect();
    let last = active.last().map_or(0, |&n| n + 1);
    let full = in_eigenbasis(op, decomp, last)?;
    let o = Array2::from_shape_fn((active.len(), active.len()), |(a, b)| full[[active[a], active[b]]]);
    let da = Array1::from_iter(active.iter().map(|&n| d[n]));
    let ea = Array1::from_iter(active.iter().map(|&n| decomp.eigenvalues[n]));
    Ok(times
        .iter()
        .map(|&t| {
            let c = Zip::from(&da).and(&ea).map_collect(|d, e| d * (e * t).cos());
            let sn = Zip::from(&da).and(&ea).map_collect(|d, e| d * (e * t).sin());
            c.dot(&o.dot(&c)) + sn.dot(&o.dot(&sn))
        })
        .collect())
}

/// `⟨a†a⟩(t)/N` after starting from `|j,−j⟩|0⟩`.
pub fn closed_photon_dynamics(decomp: &EigenDecomposition, params: &ModelParams, times: &[f64]) -> Result<Vec<f64>> {
    let overlaps = initial_overlaps(decomp, params)?;
    let op = photon_operator(&decomp.basis, params)?;
    let n = params.n_atoms as f64;
    Ok(closed_expectation(decomp, &overlaps, &op, times)?
        .into_iter()
        .map(|v| v / n)
        .collect())
}

/// System operator coupling a channel to its bath.
#[derive(Debug, Clone)]
pub enum ChannelOperator {
    /// `a† + a`.
    FieldQuadrature,
    /// `(J₊ + J₋)/√N` of the unrotated frame, which is `2J_z/√N` in the rotated (DCS) frame.
    CollectiveSpin,
    /// Any symmetric operator in the eigenvectors' basis.
    Custom(SymmetricMatrix),
}

impl ChannelOperator {
    fn label(&self) -> String {
        match self {
            ChannelOperator::FieldQuadrature => "field".into(),
            ChannelOperator::CollectiveSpin => "spin".into(),
            ChannelOperator::Custom(m) => format!("custom:{}", m.fingerprint),
        }
    }

    fn matrix(&self, tag: &BasisTag, params: &ModelParams) -> Result<SymmetricMatrix> {
        match self {
            ChannelOperator::FieldQuadrature => quadrature_operator(tag, params),
            ChannelOperator::CollectiveSpin => collective_spin_operator(tag, params),
            ChannelOperator::Custom(m) => Ok(m.clone()),
        }
    }
}

/// The atomic channel operator in the basis named by `tag`.
pub fn collective_spin_operator(tag: &BasisTag, params: &ModelParams) -> Result<SymmetricMatrix> {
    let n = params.n_atoms as f64;
    let j = params.spin();
    let matrix = match tag {
        BasisTag::Dcs(b) => {
            let mut m = Array2::<f64>::zeros((b.dim(), b.dim()));
            for i in 0..=b.n_atoms {
                for k in 0..=b.k_trunc {
                    let a = b.flat(i, k).unwrap();
                    m[[a, a]] = 2.0 * b.m_value(i) / n.sqrt();
                }
            }
            m
        }
        BasisTag::Fock(b) => {
            let mut m = Array2::<f64>::zeros((b.dim(), b.dim()));
            for i in 0..b.n_atoms {
                let c = raising_coefficient(j, b.m_value(i)) / n.sqrt();
                for p in 0..=b.n_trunc {
                    let from = b.flat(i, p).unwrap();
                    let to = b.flat(i + 1, p).unwrap();
                    m[[to, from]] = c;
                    m[[from, to]] = c;
                }
            }
            m
        }
        BasisTag::Generic => return Err(Error::BasisMismatch("spin channel needs a physical basis".into())),
    };
    Ok(SymmetricMatrix {
        matrix,
        basis: *tag,
        fingerprint: format!("spin-channel:{}:{}", params.fingerprint(), tag.label()),
    })
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub operator: ChannelOperator,
    pub temperature: f64,
}

/// Bath description before it is resolved against a spectrum.
#[derive(Debug, Clone)]
pub struct BathSpec {
    /// `α`.
    pub coupling: f64,
    /// `ω_c`.
    pub cutoff: f64,
    pub channels: Vec<Channel>,
    /// Number of eigenstates kept; `None` applies the Boltzmann-weight default.
    pub levels: Option<usize>,
}

impl BathSpec {
    /// Field and atomic channels, both at `temperature`, with default `α` and `ω_c` (scaled by `ω`).
    pub fn thermal(temperature: f64, omega: f64) -> Self {
        Self {
            coupling: DEFAULT_BATH_COUPLING * omega,
            cutoff: DEFAULT_BATH_CUTOFF * omega,
            channels: vec![
                Channel {
                    operator: ChannelOperator::FieldQuadrature,
                    temperature,
                },
                Channel {
                    operator: ChannelOperator::CollectiveSpin,
                    temperature,
                },
            ],
            levels: None,
        }
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = Some(levels);
        self
    }
}

/// `γ(Δ) = παΔ e^{−|Δ|/ω_c}`.
pub fn ohmic_spectral_density(gap: f64, coupling: f64, cutoff: f64) -> f64 {
    PI * coupling * gap * (-gap.abs() / cutoff).exp()
}

/// Bose occupation `1/(e^{Δ/T} − 1)`; zero at `T = 0`.
pub fn bose_occupation(gap: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        0.0
    } else {
        1.0 / (gap / temperature).exp_m1()
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRates {
    pub label: String,
    pub temperature: f64,
    /// `|S^{ab}|²` between retained eigenstates.
    pub coupling_sq: Array2<f64>,
    /// `rates[[a, b]]`: rate of the jump `b → a`.
    pub rates: Array2<f64>,
}

/// Rate table of the dressed master equation over the lowest `levels` eigenstates.
#[derive(Debug, Clone)]
pub struct DissipatorSpec {
    pub coupling: f64,
    pub cutoff: f64,
    pub energies: Array1<f64>,
    pub channels: Vec<ChannelRates>,
    /// Sum over channels, same layout as [`ChannelRates::rates`].
    pub total: Array2<f64>,
}

impl DissipatorSpec {
    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    /// Total rate out of each level.
    pub fn out_rates(&self) -> Array1<f64> {
        self.total.sum_axis(ndarray::Axis(0))
    }

    pub fn max_rate(&self) -> f64 {
        self.out_rates().iter().fold(0.0, |a: f64, &b| a.max(b))
    }

    /// Largest relative violation of `down = up · e^{Δ/T}` over all channels and pairs.
    pub fn detailed_balance_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let m = self.levels();
        for ch in &self.channels {
            for lo in 0..m {
                for hi in (lo + 1)..m {
                    let gap = self.energies[hi] - self.energies[lo];
                    let (down, up) = (ch.rates[[lo, hi]], ch.rates[[hi, lo]]);
                    if down == 0.0 && up == 0.0 {
                        continue;
                    }
                    let boltzmann = (gap / ch.temperature).exp();
                    if up == 0.0 && !boltzmann.is_finite() {
                        continue;
                    }
                    worst = worst.max((down - up * boltzmann).abs() / down);
                }
            }
        }
        worst
    }
}

fn default_levels(energies: ArrayView1<f64>, temperature: f64) -> usize {
    let e0 = energies[0];
    let by_weight = energies
        .iter()
        .take_while(|&&e| temperature > 0.0 && (-(e - e0) / temperature).exp() >= DEFAULT_LEVEL_WEIGHT)
        .count();
    by_weight.max(MIN_DEFAULT_LEVELS).min(energies.len())
}

/// Resolves a bath against a spectrum: `Γ_u^{ab} = γ(Δ_{ab}) |S_u^{ab}|²`, with
/// downward rate `Γ(1 + n)` and upward rate `Γ n`.
///
/// Couplings below `1e-24` of the channel maximum are set to zero, so parity
/// selection rules are exact in the table.
pub fn build_dressed_dissipator(
    decomp: &EigenDecomposition,
    bath: &BathSpec,
    params: &ModelParams,
) -> Result<DissipatorSpec> {
    if !(bath.coupling >= 0.0 && bath.cutoff > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bath coupling {} and cutoff {} must be non-negative and positive",
            bath.coupling, bath.cutoff
        )));
    }
    if bath.channels.is_empty() {
        return Err(Error::InvalidParameter("bath has no channels".into()));
    }
    for ch in &bath.channels {
        if !(ch.temperature >= 0.0 && ch.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!("channel temperature {}", ch.temperature)));
        }
    }
    let hottest = bath.channels.iter().map(|c| c.temperature).fold(0.0, f64::max);
    let m = bath
        .levels
        .unwrap_or_else(|| default_levels(decomp.eigenvalues.view(), hottest))
        .min(decomp.dim());
    if m < 2 {
        return Err(Error::InvalidParameter("need at least two levels".into()));
    }
    let energies = decomp.eigenvalues.slice(s![..m]).to_owned();
    let mut channels = Vec::with_capacity(bath.channels.len());
    let mut total = Array2::<f64>::zeros((m, m));
    for ch in &bath.channels {
        let op = ch.operator.matrix(&decomp.basis, params)?;
        let s_mat = in_eigenbasis(&op, decomp, m)?;
        let mut coupling_sq = s_mat.mapv(|x| x * x);
        let floor = 1e-24 * coupling_sq.iter().fold(0.0f64, |a, &b| a.max(b));
        coupling_sq.mapv_inplace(|x| if x <= floor { 0.0 } else { x });
        let mut rates = Array2::<f64>::zeros((m, m));
        for lo in 0..m {
            for hi in (lo + 1)..m {
                let gap = energies[hi] - energies[lo];
                if gap < GAP_THRESHOLD {
                    continue;
                }
                let gamma = ohmic_spectral_density(gap, bath.coupling, bath.cutoff) * coupling_sq[[lo, hi]];
                let n = bose_occupation(gap, ch.temperature);
                rates[[lo, hi]] = gamma * (1.0 + n);
                rates[[hi, lo]] = gamma * n;
            }
        }
        total += &rates;
        channels.push(ChannelRates {
            label: ch.operator.label(),
            temperature: ch.temperature,
            coupling_sq,
            rates,
        });
    }
    Ok(DissipatorSpec {
        coupling: bath.coupling,
        cutoff: bath.cutoff,
        energies,
        channels,
        total,
    })
}

/// Interaction-picture generator: rates in, decay constants out.
fn generator(rho: &Array2<f64>, total: &Array2<f64>, out: &Array1<f64>) -> Array2<f64> {
    let m = rho.nrows();
    let mut d = Array2::<f64>::zeros((m, m));
    for a in 0..m {
        for b in 0..m {
            d[[a, b]] = -0.5 * (out[a] + out[b]) * rho[[a, b]];
        }
    }
    let pops = rho.diag().to_owned();
    let gain = total.dot(&pops);
    for a in 0..m {
        d[[a, a]] += gain[a];
    }
    d
}

fn rk4_step(rho: &Array2<f64>, h: f64, total: &Array2<f64>, out: &Array1<f64>) -> Array2<f64> {
    let k1 = generator(rho, total, out);
    let k2 = generator(&(rho + &(&k1 * (h / 2.0))), total, out);
    let k3 = generator(&(rho + &(&k2 * (h / 2.0))), total, out);
    let k4 = generator(&(rho + &(&k3 * h)), total, out);
    rho + &((&k1 + &(&k2 * 2.0) + &(&k3 * 2.0) + &k4) * (h / 6.0))
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    /// Target for the step-doubling local error estimate.
    pub local_tolerance: f64,
    /// Step bound as a fraction of `1 / max rate`.
    pub step_fraction: f64,
    /// Abort when the minimum eigenvalue falls below `−positivity_tolerance`.
    pub positivity_tolerance: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            local_tolerance: 1e-9,
            step_fraction: 0.1,
            positivity_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Interaction-picture states at `times`.
    pub states: Vec<Array2<f64>>,
    pub energies: Array1<f64>,
    pub steps: usize,
    pub max_local_error: f64,
    /// `max_t |tr ρ(t) − 1|`.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue seen at any recorded time.
    pub min_eigenvalue: f64,
}

impl Trajectory {
    /// Schrödinger-picture state at `times[i]`.
    pub fn state_at(&self, i: usize) -> Array2<Complex64> {
        let t = self.times[i];
        let e = &self.energies;
        Array2::from_shape_fn(self.states[i].dim(), |(a, b)| {
            Complex64::from_polar(1.0, -(e[a] - e[b]) * t) * self.states[i][[a, b]]
        })
    }

    pub fn populations(&self, i: usize) -> Array1<f64> {
        self.states[i].diag().to_owned()
    }
}

fn min_eigenvalue(rho: &Array2<f64>) -> Result<f64> {
    let d = DensityMatrix {
        matrix: rho.clone(),
        basis: DensityBasis::Eigen { levels: rho.nrows() },
    };
    d.min_eigenvalue()
}

/// Integrates the dressed master equation from `rho0` and records the state at `times`.
///
/// Fixed RK4 steps no longer than `step_fraction / max rate` are validated by
/// step doubling and halved until the local error estimate meets the tolerance.
/// The trace is never renormalized.
pub fn evolve_master(
    rho0: &DensityMatrix,
    dissipator: &DissipatorSpec,
    times: &[f64],
    options: IntegratorOptions,
) -> Result<Trajectory> {
    let m = dissipator.levels();
    if rho0.basis != (DensityBasis::Eigen { levels: m }) {
        return Err(Error::BasisMismatch(format!(
            "initial state {:?} does not match a {m}-level dissipator",
            rho0.basis
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be non-negative and ascending".into()));
    }
    let out = dissipator.out_rates();
    let total = &dissipator.total;
    let max_rate = dissipator.max_rate();
    let h_max = if max_rate > 0.0 {
        options.step_fraction / max_rate
    } else {
        f64::INFINITY
    };
    let mut rho = rho0.matrix.clone();
    let mut t = 0.0;
    let mut h = h_max;
    let mut steps = 0;
    let mut max_err = 0.0f64;
    let mut states = Vec::with_capacity(times.len());
    let mut drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for &target in times {
        while t < target {
            let span = target - t;
            let n = (span / h).ceil().max(1.0);
            let mut step = span / n;
            loop {
                let full = rk4_step(&rho, step, total, &out);
                let half = rk4_step(&rk4_step(&rho, step / 2.0, total, &out), step / 2.0, total, &out);
                let err = Zip::from(&full).and(&half).fold(0.0f64, |a, x, y| a.max((x - y).abs()));
                if err <= options.local_tolerance || step < 1e-12 * target.max(1.0) {
                    max_err = max_err.max(err);
                    rho = half;
                    t += step;
                    steps += 1;
                    break;
                }
                step /= 2.0;
                h = h.min(step);
            }
            if target - t < 1e-12 * target.max(1.0) {
                t = target;
            }
        }
        drift = drift.max((rho.diag().sum() - 1.0).abs());
        let lowest = min_eigenvalue(&rho)?;
        min_eig = min_eig.min(lowest);
        if lowest < -options.positivity_tolerance {
            return Err(Error::PositivityViolation {
                min_eigenvalue: lowest,
                time: target,
            });
        }
        states.push(rho.clone());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        energies: dissipator.energies.clone(),
        steps,
        max_local_error: max_err,
        max_trace_drift: drift,
        min_eigenvalue: min_eig,
    })
}

/// Strongly connected components of the jump graph (edge `b → a` when `rates[[a, b]] > 0`)
/// that no rate leaves.
fn closed_classes(rates: &Array2<f64>) -> (Vec<Vec<usize>>, usize) {
    let m = rates.nrows();
    let reach = |start: usize, forward: bool| -> Vec<bool> {
        let mut seen = vec![false; m];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(b) = stack.pop() {
            for a in 0..m {
                let r = if forward { rates[[a, b]] } else { rates[[b, a]] };
                if r > 0.0 && !seen[a] {
                    seen[a] = true;
                    stack.push(a);
                }
            }
        }
        seen
    };
    let mut assigned = vec![false; m];
    let mut closed = Vec::new();
    let mut n_classes = 0;
    for s in 0..m {
        if assigned[s] {
            continue;
        }
        let fwd = reach(s, true);
        let bwd = reach(s, false);
        let class: Vec<usize> = (0..m).filter(|&a| fwd[a] && bwd[a]).collect();
        for &a in &class {
            assigned[a] = true;
        }
        n_classes += 1;
        let leaves = class.iter().any(|&b| (0..m).any(|a| rates[[a, b]] > 0.0 && !class.contains(&a)));
        if !leaves {
            closed.push(class);
        }
    }
    (closed, n_classes)
}

/// Stationary populations of the rate equation by Grassmann–Taksar–Heyman
/// elimination, which involves no subtractions.
fn stationary_populations(rates: &Array2<f64>) -> Result<Array1<f64>> {
    let m = rates.nrows();
    // q[[b, a]]: rate b → a
    let mut q = rates.t().to_owned();
    for a in 0..m {
        q[[a, a]] = 0.0;
    }
    for n in (1..m).rev() {
        let s: f64 = (0..n).map(|j| q[[n, j]]).sum();
        if !(s > 0.0) {
            return Err(Error::Singular(format!(
                "level {n} has no path to lower levels after elimination"
            )));
        }
        for i in 0..n {
            q[[i, n]] /= s;
        }
        for i in 0..n {
            let qin = q[[i, n]];
            if qin == 0.0 {
                continue;
            }
            for j in 0..n {
                q[[i, j]] += qin * q[[n, j]];
            }
        }
    }
    let mut pi = Array1::<f64>::zeros(m);
    pi[0] = 1.0;
    for n in 1..m {
        pi[n] = (0..n).map(|i| pi[i] * q[[i, n]]).sum();
    }
    let z = pi.sum();
    Ok(pi / z)
}

/// Steady state of the dressed master equation: stationary populations of the
/// rate equation and vanishing coherences.
pub fn steady_state(dissipator: &DissipatorSpec) -> Result<DensityMatrix> {
    let (closed, n_classes) = closed_classes(&dissipator.total);
    if closed.len() != 1 {
        let report: Vec<String> = closed
            .iter()
            .map(|c| format!("{{{}}}", c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        return Err(Error::DegenerateChain(format!(
            "{} closed classes among {n_classes} communicating classes of {} levels: {}",
            closed.len(),
            dissipator.levels(),
            report.join(" ")
        )));
    }
    let pops = stationary_populations(&dissipator.total)?;
    DensityMatrix::new(
        Array2::from_diag(&pops),
        DensityBasis::Eigen {
            levels: dissipator.levels(),
        },
    )
}

/// Gibbs state over exactly the levels a dissipator retains.
pub fn gibbs_on_levels(dissipator: &DissipatorSpec, temperature: f64) -> Result<DensityMatrix> {
    let w = gibbs_weights(dissipator.energies.as_slice().unwrap(), temperature, 0.0)?;
    let mut full = Array1::<f64>::zeros(dissipator.levels());
    full.slice_mut(s![..w.len()]).assign(&Array1::from(w));
    DensityMatrix::new(
        Array2::from_diag(&full),
        DensityBasis::Eigen {
            levels: dissipator.levels(),
        },
    )
}

/// `½‖ρ − σ‖₁` for real symmetric matrices.
pub fn trace_distance(rho: &Array2<f64>, sigma: &Array2<f64>) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::BasisMismatch(format!(
            "shapes {:?} and {:?}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let d = DensityMatrix {
        matrix: rho - sigma,
        basis: DensityBasis::Eigen { levels: rho.nrows() },
    };
    Ok(0.5 * d.eigenvalues()?.iter().map(|e| e.abs()).sum::<f64>())
}

/// `max |L(ρ)|` of the interaction-picture generator, for stationarity checks.
pub fn generator_norm(rho: &DensityMatrix, dissipator: &DissipatorSpec) -> f64 {
    generator(&rho.matrix, &dissipator.total, &dissipator.out_rates())
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::spectrum_at;
    use approx::assert_abs_diff_eq;

    fn toy(gap: f64, rate: f64, t: f64) -> DissipatorSpec {
        let n = bose_occupation(gap, t);
        let mut total = Array2::<f64>::zeros((2, 2));
        total[[0, 1]] = rate * (1.0 + n);
        total[[1, 0]] = rate * n;
        DissipatorSpec {
            coupling: 1.0,
            cutoff: 1.0,
            energies: Array1::from(vec![0.0, gap]),
            channels: vec![ChannelRates {
                label: "toy".into(),
                temperature: t,
                coupling_sq: Array2::ones((2, 2)),
                rates: total.clone(),
            }],
            total,
        }
    }

    #[test]
    fn two_level_chain_is_boltzmann() {
        let (gap, t) = (0.7, 0.3);
        let ss = steady_state(&toy(gap, 0.2, t)).unwrap();
        let b = (-gap / t).exp();
        assert_abs_diff_eq!(ss.matrix[[0, 0]], 1.0 / (1.0 + b), epsilon = 1e-15);
        assert_abs_diff_eq!(ss.matrix[[1, 1]], b / (1.0 + b), epsilon = 1e-15);
    }

    #[test]
    fn zero_temperature_has_no_upward_rates() {
        let p = ModelParams::new(2, 1.0, 1.0, 0.4, 0.0).unwrap();
        let d = spectrum_at(&p, 20).unwrap();
        let diss = build_dressed_dissipator(&d, &BathSpec::thermal(0.0, 1.0).with_levels(10), &p).unwrap();
        for lo in 0..10 {
            for hi in (lo + 1)..10 {
                assert_eq!(diss.total[[hi, lo]], 0.0);
            }
        }
    }

    #[test]
    fn disconnected_chain_is_reported() {
        let mut diss = toy(1.0, 0.0, 1.0);
        diss.total.fill(0.0);
        assert!(matches!(steady_state(&diss), Err(Error::DegenerateChain(_))));
    }

    #[test]
    fn vacuum_start_has_no_photons() {
        let p = ModelParams::new(4, 1.0, 1.0, 0.3, 0.5).unwrap();
        let d = spectrum_at(&p, 25).unwrap();
        let v = closed_photon_dynamics(&d, &p, &[0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_coupling_keeps_vacuum() {
        let p = ModelParams::new(3, 1.0, 0.0, 0.0, 0.0).unwrap();
        let d = spectrum_at(&p, 6).unwrap();
        let o = initial_overlaps(&d, &p).unwrap();
        // every spin state is degenerate here, so the weight sits in the E = 0 eigenspace
        let ground: f64 = o
            .coefficients
            .iter()
            .zip(d.eigenvalues.iter())
            .filter(|(_, e)| e.abs() < 1e-12)
            .map(|(c, _)| c * c)
            .sum();
        assert_abs_diff_eq!(ground, 1.0, epsilon = 1e-14);
        let v = closed_photon_dynamics(&d, &p, &[0.0, 1.0, 7.5]).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn two_level_relaxation_matches_closed_form() {
        let (gap, t, rate) = (1.0, 0.5, 0.3);
        let diss = toy(gap, rate, t);
        let mut m = Array2::<f64>::zeros((2, 2));
        m[[1, 1]] = 0.8;
        m[[0, 0]] = 0.2;
        m[[0, 1]] = 0.3;
        m[[1, 0]] = 0.3;
        let rho0 = DensityMatrix::new(m, DensityBasis::Eigen { levels: 2 }).unwrap();
        let times = [0.5, 2.0, 10.0];
        let tr = evolve_master(&rho0, &diss, &times, IntegratorOptions::default()).unwrap();
        let (down, up) = (diss.total[[0, 1]], diss.total[[1, 0]]);
        let sum = down + up;
        let p_inf = up / sum;
        for (i, &time) in times.iter().enumerate() {
            let p1 = p_inf + (0.8 - p_inf) * (-sum * time).exp();
            assert_abs_diff_eq!(tr.states[i][[1, 1]], p1, epsilon = 1e-9);
            let c = 0.3 * (-0.5 * sum * time).exp();
            assert_abs_diff_eq!(tr.states[i][[0, 1]], c, epsilon = 1e-9);
        }
        assert!(tr.max_trace_drift < 1e-12);
        let phase = tr.state_at(1)[[0, 1]];
        assert_abs_diff_eq!(phase.arg(), (gap * 2.0) % (2.0 * PI), epsilon = 1e-12);
    }
}
