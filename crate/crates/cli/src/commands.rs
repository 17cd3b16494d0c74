//! Subcommand drivers. Each builds a [`Table`] with one row per grid point.
//!
//! Grid points run on the current rayon pool and are collected in grid order,
//! so output never depends on scheduling.

use crate::cache::{count_eigendecompositions, CacheKey, CacheStore};
use crate::config::{BasisChoice, Settings};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Row, Table};
use dicke_stark::dynamics::{
    build_dressed_dissipator, closed_photon_dynamics, evolve_master, gibbs_on_levels, initial_overlaps,
    trace_distance, BathSpec, IntegratorOptions,
};
use dicke_stark::hamiltonian::{build_dcs_hamiltonian, build_dfs_hamiltonian};
use dicke_stark::meanfield::{critical_coupling_thermal, ground_energy_density, ground_energy_landscape, order_parameter};
use dicke_stark::observables::{
    g2_zero, gibbs_state, ground_mean_photon, ground_mean_photon_of, in_eigenbasis, negativity, photon_operator,
    product_density, reduced_spin_density, spin_squeezing, von_neumann_entropy, DensityBasis, DensityMatrix,
};
use dicke_stark::spectrum::{eigendecompose, eigendecompose_lowest, TRUNCATION_SCHEDULE};
use dicke_stark::{EigenDecomposition, ModelParams};
use ndarray::Array2;
use rayon::prelude::*;

/// Atom numbers above this need `--allow-large` for the phase diagram.
pub const PHASE_DIAGRAM_MAX_ATOMS: usize = 32;
/// General safety limit on atom numbers for the other sweeps.
pub const SWEEP_MAX_ATOMS: usize = 256;
const MEANFIELD_LANDSCAPE_POINTS: usize = 2001;

pub struct Context {
    pub settings: Settings,
    pub cache: CacheStore,
}

/// One `(N, U, λ)` model point.
#[derive(Debug, Clone, Copy)]
struct Point {
    n: usize,
    u: f64,
    lambda: f64,
}

impl Point {
    fn coords(&self) -> Vec<Cell> {
        vec![self.n.into(), self.u.into(), self.lambda.into()]
    }
}

impl Context {
    fn params(&self, p: Point) -> CliResult<ModelParams> {
        Ok(ModelParams::new(p.n, self.settings.omega, self.settings.delta, p.lambda, p.u)?)
    }

    fn truncation(&self) -> usize {
        match self.settings.basis {
            BasisChoice::Dcs => self.settings.k_trunc,
            BasisChoice::Dfs => self.settings.fock_trunc(),
        }
    }

    /// Decomposition in the configured basis; `levels = None` solves the full spectrum.
    fn decomposition(&self, params: &ModelParams, levels: Option<usize>) -> CliResult<EigenDecomposition> {
        let s = &self.settings;
        let key = CacheKey {
            basis: match s.basis {
                BasisChoice::Dcs => "dcs",
                BasisChoice::Dfs => "dfs",
            },
            n_atoms: params.n_atoms,
            truncation: self.truncation(),
            levels: levels.unwrap_or(0),
            omega: params.omega,
            delta: params.delta,
            lambda: params.lambda,
            stark_u: params.stark_u,
        };
        self.cache.get_or_compute(&key, || {
            let h = match s.basis {
                BasisChoice::Dcs => build_dcs_hamiltonian(params, s.k_trunc)?,
                BasisChoice::Dfs => build_dfs_hamiltonian(params, s.fock_trunc())?,
            };
            match levels {
                Some(l) => eigendecompose_lowest(&h, l),
                None => eigendecompose(&h),
            }
        })
    }

    fn points(&self, n_default: &str, u_default: &str, lambda_default: &str, max_atoms: usize) -> CliResult<Vec<Point>> {
        let s = &self.settings;
        let ns = s.atoms(n_default, max_atoms)?;
        let us = s.axis(&s.stark_u, u_default);
        let ls = s.axis(&s.lambda, lambda_default);
        if let Some(bad) = ls.values().iter().find(|&&l| l < 0.0) {
            return Err(CliError::Grid(format!("lambda: {bad} is negative")));
        }
        let mut points = Vec::with_capacity(ns.len() * us.len() * ls.len());
        for &n in &ns {
            for &u in us.values() {
                points.extend(ls.values().iter().map(|&lambda| Point { n, u, lambda }));
            }
        }
        Ok(points)
    }

    fn describe_model(&self, table: &mut Table) {
        let s = &self.settings;
        table.meta("omega", s.omega);
        table.meta("delta", s.delta);
        match s.basis {
            BasisChoice::Dcs => table.meta("basis", format!("coherent-state, k_trunc = {}", s.k_trunc)),
            BasisChoice::Dfs => table.meta("basis", format!("fock, n_trunc = {}", s.fock_trunc())),
        }
    }

    fn bath(&self, temperature: f64, levels: usize) -> BathSpec {
        let mut bath = BathSpec::thermal(temperature, self.settings.omega).with_levels(levels);
        bath.coupling = self.settings.bath_coupling * self.settings.omega;
        bath.cutoff = self.settings.bath_cutoff * self.settings.omega;
        bath
    }
}

fn run_points<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

fn max_of(rows: &[Row], column: usize) -> Option<f64> {
    rows.iter()
        .filter_map(|r| match r.values.as_ref().ok()?.get(column)? {
            Cell::Num(v) => Some(*v),
            _ => None,
        })
        .reduce(f64::max)
}

pub fn spectrum(ctx: &Context) -> CliResult<Table> {
    let levels = ctx.settings.levels.unwrap_or(10);
    if levels == 0 {
        return Err(CliError::Config("levels must be at least 1".into()));
    }
    let points = ctx.points("8", "1", "0:1:21", SWEEP_MAX_ATOMS)?;
    let mut columns: Vec<String> = (0..levels).map(|i| format!("e{i}")).collect();
    columns.push("residual".into());
    let mut table = Table::new("spectrum", &["n_atoms", "stark_u", "lambda"], columns);
    ctx.describe_model(&mut table);
    table.meta("levels", levels);
    table.rows = run_points(&points, |&p| Row {
        coords: p.coords(),
        values: (|| {
            let d = ctx.decomposition(&ctx.params(p)?, Some(levels))?;
            if d.dim() < levels {
                return Err(CliError::Config(format!("only {} levels exist in {}", d.dim(), d.basis.label())));
            }
            let mut cells: Vec<Cell> = d.eigenvalues.iter().map(|&e| e.into()).collect();
            cells.push(d.residual.into());
            Ok(cells)
        })(),
    });
    if let Some(r) = max_of(&table.rows, levels) {
        table.meta("max_residual", r);
    }
    Ok(table)
}

/// Ground-state `⟨a†a⟩/N` sweep shared by `photon-sweep` and `phase-diagram`.
fn photon_table(ctx: &Context, command: &'static str, points: Vec<Point>) -> CliResult<Table> {
    let rel_tol = ctx.settings.rel_tol;
    if rel_tol.is_some() && ctx.settings.basis != BasisChoice::Dcs {
        return Err(CliError::Config("rel_tol escalates the coherent-state truncation; use basis = dcs".into()));
    }
    let columns = ["truncation", "photon_per_atom", "ground_energy", "truncation_change"];
    let mut table = Table::new(command, &["n_atoms", "stark_u", "lambda"], columns.map(String::from).to_vec());
    ctx.describe_model(&mut table);
    match rel_tol {
        Some(tol) => table.meta(
            "truncation",
            format!("escalated through {TRUNCATION_SCHEDULE:?} until the ground energy changes by < {tol:e} relative"),
        ),
        None => table.meta("truncation", "fixed; truncation_change is left empty"),
    }
    table.rows = run_points(&points, |&p| Row {
        coords: p.coords(),
        values: (|| {
            let params = ctx.params(p)?;
            let (mean, truncation) = match rel_tol {
                Some(tol) => {
                    let m = ground_mean_photon(&params, tol)?;
                    let steps = TRUNCATION_SCHEDULE.iter().position(|&k| k == m.k_trunc).map_or(1, |i| i + 1);
                    count_eigendecompositions(steps);
                    (m, m.k_trunc)
                }
                None => (ground_mean_photon_of(&ctx.decomposition(&params, Some(1))?, &params)?, ctx.truncation()),
            };
            Ok(vec![
                truncation.into(),
                mean.per_atom.into(),
                mean.ground_energy.into(),
                mean.truncation_change().into(),
            ])
        })(),
    });
    if let Some(c) = max_of(&table.rows, 3) {
        table.meta("max_truncation_change", c);
    }
    Ok(table)
}

pub fn photon_sweep(ctx: &Context) -> CliResult<Table> {
    photon_table(ctx, "photon-sweep", ctx.points("128", "1", "0:0.6:61", SWEEP_MAX_ATOMS)?)
}

pub fn phase_diagram(ctx: &Context) -> CliResult<Table> {
    let points = ctx.points("32", "-1.5:1.5:60", "0:1:60", PHASE_DIAGRAM_MAX_ATOMS)?;
    photon_table(ctx, "phase-diagram", points)
}

pub fn dynamics(ctx: &Context) -> CliResult<Table> {
    let points = ctx.points("8", "1", "0.2,0.5,0.8", SWEEP_MAX_ATOMS)?;
    let times = ctx.settings.axis(&ctx.settings.times, "0:100:401");
    let mut table = Table::new(
        "dynamics",
        &["n_atoms", "stark_u", "lambda", "time"],
        vec!["photon_per_atom".into(), "norm_deficit".into()],
    );
    ctx.describe_model(&mut table);
    table.meta("initial_state", "lowest spin projection times the field vacuum");
    let per_point = run_points(&points, |&p| -> CliResult<(Vec<f64>, f64)> {
        let params = ctx.params(p)?;
        let d = ctx.decomposition(&params, None)?;
        let deficit = initial_overlaps(&d, &params)?.norm_deficit;
        Ok((closed_photon_dynamics(&d, &params, times.values())?, deficit))
    });
    for (p, result) in points.iter().zip(per_point) {
        for (i, &t) in times.values().iter().enumerate() {
            let mut coords = p.coords();
            coords.push(t.into());
            let values = match &result {
                Ok((series, deficit)) => Ok(vec![series[i].into(), (*deficit).into()]),
                Err(e) => Err(e.duplicate()),
            };
            table.rows.push(Row { coords, values });
        }
    }
    Ok(table)
}

fn temperatures(ctx: &Context, default: &str) -> Vec<f64> {
    ctx.settings.axis(&ctx.settings.temperature, default).values().to_vec()
}

/// Runs `f` for every `(point, temperature)` pair, sharing one decomposition per point.
fn thermal_rows(
    ctx: &Context,
    points: &[Point],
    temps: &[f64],
    f: impl Fn(&ModelParams, &EigenDecomposition, f64) -> CliResult<Vec<Cell>> + Sync + Send,
) -> Vec<Row> {
    let per_point = run_points(points, |&p| -> CliResult<Vec<CliResult<Vec<Cell>>>> {
        let params = ctx.params(p)?;
        let d = ctx.decomposition(&params, None)?;
        Ok(temps.iter().map(|&t| f(&params, &d, t)).collect())
    });
    let mut rows = Vec::with_capacity(points.len() * temps.len());
    for (p, result) in points.iter().zip(per_point) {
        match result {
            Ok(values) => rows.extend(temps.iter().zip(values).map(|(&t, values)| Row {
                coords: thermal_coords(p, t),
                values,
            })),
            Err(e) => rows.extend(temps.iter().map(|&t| Row {
                coords: thermal_coords(p, t),
                values: Err(e.duplicate()),
            })),
        }
    }
    rows
}

fn thermal_coords(p: &Point, t: f64) -> Vec<Cell> {
    vec![p.n.into(), p.u.into(), p.lambda.into(), t.into()]
}

pub fn g2_sweep(ctx: &Context) -> CliResult<Table> {
    let points = ctx.points("8", "0,-0.3,0.3,0.9", "0.01:1.2:60", SWEEP_MAX_ATOMS)?;
    let temps = temperatures(ctx, "0.1");
    if temps.contains(&0.0) {
        return Err(CliError::Grid("temperature: G2(0) needs T > 0".into()));
    }
    let levels = ctx.settings.levels;
    let mut table = Table::new(
        "g2-sweep",
        &["n_atoms", "stark_u", "lambda", "temperature"],
        ["g2", "levels", "relative_change"].map(String::from).to_vec(),
    );
    ctx.describe_model(&mut table);
    table.meta("level_convergence", "levels doubled until G2(0) changes by < 1e-4 relative");
    table.rows = thermal_rows(ctx, &points, &temps, |params, d, t| {
        let g = g2_zero(d, params, t, levels)?;
        Ok(vec![g.value.into(), g.levels.into(), g.relative_change.into()])
    });
    Ok(table)
}

const STATS_OBSERVABLES: [&str; 3] = ["negativity", "squeezing", "entropy"];

pub fn stats_sweep(ctx: &Context) -> CliResult<Table> {
    let selected: Vec<String> = match &ctx.settings.observables {
        Some(list) => list.iter().map(|s| s.trim().to_lowercase()).collect(),
        None => STATS_OBSERVABLES.map(String::from).to_vec(),
    };
    if selected.is_empty() {
        return Err(CliError::Config("observables must name at least one quantity".into()));
    }
    if let Some(bad) = selected.iter().find(|s| !STATS_OBSERVABLES.contains(&s.as_str())) {
        return Err(CliError::Config(format!(
            "unknown observable '{bad}'; choose from {}",
            STATS_OBSERVABLES.join(", ")
        )));
    }
    let points = ctx.points("8", "0", "0.05:2:40", SWEEP_MAX_ATOMS)?;
    let temps = temperatures(ctx, "0.1");
    let weight_cut = ctx.settings.weight_cut;
    let mut columns = vec!["levels".to_string()];
    columns.extend(selected.iter().cloned());
    let mut table = Table::new("stats-sweep", &["n_atoms", "stark_u", "lambda", "temperature"], columns);
    ctx.describe_model(&mut table);
    table.meta("weight_cut", weight_cut);
    table.meta("entropy", "von Neumann entropy of the collective-spin state");
    table.rows = thermal_rows(ctx, &points, &temps, |params, d, t| {
        let rho = gibbs_state(d, t, weight_cut)?;
        let mut cells = vec![rho.dim().into()];
        let spin = if selected.iter().any(|s| s != "negativity") {
            Some(reduced_spin_density(d, &rho, params)?)
        } else {
            None
        };
        for name in &selected {
            let v = match name.as_str() {
                "negativity" => negativity(&product_density(d, &rho, params)?)?,
                "squeezing" => spin_squeezing(spin.as_ref().unwrap(), params.n_atoms)?,
                _ => von_neumann_entropy(spin.as_ref().unwrap())?,
            };
            cells.push(v.into());
        }
        Ok(cells)
    });
    Ok(table)
}

pub fn relax(ctx: &Context) -> CliResult<Table> {
    let points = ctx.points("2", "0", "0.3", SWEEP_MAX_ATOMS)?;
    let temps = temperatures(ctx, "0.5");
    let times = ctx.settings.axis(&ctx.settings.times, "0:16000:81");
    let levels = ctx.settings.levels.unwrap_or(20);
    if levels < 2 {
        return Err(CliError::Config("relax needs at least 2 levels".into()));
    }
    let mut table = Table::new(
        "relax",
        &["n_atoms", "stark_u", "lambda", "temperature", "time"],
        ["photon_per_atom", "ground_population", "gibbs_distance", "captured_weight"]
            .map(String::from)
            .to_vec(),
    );
    ctx.describe_model(&mut table);
    table.meta("levels", levels);
    table.meta("bath", format!(
        "ohmic, coupling = {} omega, cutoff = {} omega, field and collective-spin channels",
        ctx.settings.bath_coupling, ctx.settings.bath_cutoff
    ));
    table.meta(
        "initial_state",
        "lowest spin projection times the field vacuum, projected onto the kept levels and renormalized",
    );
    let combos: Vec<(Point, f64)> = points.iter().flat_map(|&p| temps.iter().map(move |&t| (p, t))).collect();
    let per_combo = run_points(&combos, |&(p, t)| -> CliResult<Vec<Vec<Cell>>> {
        let params = ctx.params(p)?;
        let d = ctx.decomposition(&params, None)?;
        let diss = build_dressed_dissipator(&d, &ctx.bath(t, levels), &params)?;
        let m = diss.levels();
        let overlaps = initial_overlaps(&d, &params)?.coefficients;
        let psi = overlaps.slice(ndarray::s![..m]);
        let captured = psi.dot(&psi);
        if captured < 1e-12 {
            return Err(CliError::Numerical(format!("initial state has no weight on the lowest {m} levels")));
        }
        let rho0 = Array2::from_shape_fn((m, m), |(a, b)| psi[a] * psi[b] / captured);
        let rho0 = DensityMatrix::new(rho0, DensityBasis::Eigen { levels: m })?;
        let traj = evolve_master(&rho0, &diss, times.values(), IntegratorOptions::default())?;
        let photons = in_eigenbasis(&photon_operator(&d.basis, &params)?, &d, m)?;
        let gibbs = gibbs_on_levels(&diss, t)?;
        let n = params.n_atoms as f64;
        (0..traj.times.len())
            .map(|i| {
                let rho = traj.state_at(i);
                let photon = rho.iter().zip(photons.t().iter()).map(|(r, o)| r.re * o).sum::<f64>() / n;
                Ok(vec![
                    photon.into(),
                    traj.states[i][[0, 0]].into(),
                    trace_distance(&traj.states[i], &gibbs.matrix)?.into(),
                    captured.into(),
                ])
            })
            .collect()
    });
    for ((p, t), result) in combos.iter().zip(per_combo) {
        for (i, &time) in times.values().iter().enumerate() {
            let mut coords = thermal_coords(p, *t);
            coords.push(time.into());
            let values = match &result {
                Ok(rows) => Ok(rows[i].clone()),
                Err(e) => Err(e.duplicate()),
            };
            table.rows.push(Row { coords, values });
        }
    }
    Ok(table)
}

pub fn meanfield(ctx: &Context) -> CliResult<Table> {
    let s = &ctx.settings;
    let us = s.axis(&s.stark_u, "-1.5,0,1.5");
    let temps = temperatures(ctx, "0");
    let lambdas = s.lambda.as_ref().map(|g| g.values().to_vec());
    let mut coords = vec!["stark_u", "temperature"];
    let mut columns = vec!["lambda_c".to_string()];
    if lambdas.is_some() {
        coords.push("lambda");
        columns.extend(["order_parameter", "energy_density"].map(String::from));
    }
    let mut table = Table::new("meanfield", &coords, columns);
    table.meta("omega", s.omega);
    table.meta("delta", s.delta);
    table.meta("lambda_c", "empty where the critical bracket is negative (no transition)");
    if lambdas.is_some() {
        table.meta(
            "order_parameter",
            "phi = beta^2/N minimizing the ground energy at T = 0; alpha minimizing the free energy at T > 0",
        );
    }
    let mut jobs: Vec<(f64, f64, Option<f64>)> = Vec::new();
    for &u in us.values() {
        for &t in &temps {
            match &lambdas {
                Some(ls) => jobs.extend(ls.iter().map(|&l| (u, t, Some(l)))),
                None => jobs.push((u, t, None)),
            }
        }
    }
    table.rows = run_points(&jobs, |&(u, t, lambda)| {
        let mut coords: Vec<Cell> = vec![u.into(), t.into()];
        coords.extend(lambda.map(Cell::from));
        let values = (|| -> CliResult<Vec<Cell>> {
            if t < 0.0 {
                return Err(CliError::Grid(format!("temperature {t} is negative")));
            }
            let params = ModelParams::new(1, s.omega, s.delta, lambda.unwrap_or(0.0), u)?;
            let mut cells = vec![critical_coupling_thermal(&params, t)?.lambda_c.into()];
            if lambda.is_some() {
                let (order, energy) = if t == 0.0 {
                    ground_minimum(&params)?
                } else {
                    let o = order_parameter(&params, t)?;
                    (o.alpha, o.free_energy)
                };
                cells.push(order.into());
                cells.push(energy.into());
            }
            Ok(cells)
        })();
        Row { coords, values }
    });
    Ok(table)
}

/// Zero-temperature minimizer `(φ*, E/N)`: a landscape scan, then golden
/// section inside the bracketing cells.
fn ground_minimum(params: &ModelParams) -> CliResult<(f64, f64)> {
    let scan = ground_energy_landscape(params, MEANFIELD_LANDSCAPE_POINTS)?;
    let best = (0..scan.len())
        .min_by(|&a, &b| scan[a].value.total_cmp(&scan[b].value))
        .expect("landscape is never empty");
    let (mut lo, mut hi) = (
        scan[best.saturating_sub(1)].order_parameter,
        scan[(best + 1).min(scan.len() - 1)].order_parameter,
    );
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let f = |phi: f64| ground_energy_density(phi, params);
    while hi - lo > 1e-12 {
        let (a, b) = (hi - ratio * (hi - lo), lo + ratio * (hi - lo));
        if f(a)? <= f(b)? {
            hi = b;
        } else {
            lo = a;
        }
    }
    let phi = 0.5 * (lo + hi);
    let refined = (phi, f(phi)?);
    let grid = (scan[best].order_parameter, scan[best].value);
    // endpoint minima stay exact
    Ok(if grid.1 <= refined.1 { grid } else { refined })
}
