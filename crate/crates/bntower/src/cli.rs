//! Batch entry points: configuration, validation against the feasibility
//! envelope, and deterministic CSV tables per pipeline stage.
//!
//! Output contract: every numeric cell carries 17 significant digits, the
//! table body is byte-identical across reruns of the same configuration on
//! the same build, and the header carries a hash of the semantically
//! meaningful configuration fields.

use crate::error::{Error, Result};
use crate::greens::{DomainSpec, GreensSolver};
use crate::linear_theory::{check_rhs_admissible, solve_projected};
use crate::pde::{
    check_envelope, continue_in_eps, grid_for, scaling_regression, solve_bvp, GridOptions,
    ReseedMode, SolveOptions,
};
use crate::profiles::{tower_ansatz, weight_psi, TowerConfig};
use crate::reduced_solver::{
    explicit_t0, gamma, newton_reduced, reduced_f, ReducedPoint, SkBounds,
};
use crate::reduction::{
    extract_nu, fit_constants_with, picard_reapply_defect, picard_solve, residual_r, FitOptions,
    PicardOptions, ReducedCoefficients,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SUBCOMMANDS: &[&str] = &[
    "constants", "robin", "tparams", "ansatz", "linsolve", "picard", "nu", "reduced", "solve",
    "sweep", "pipeline",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n: u32,
    pub k: usize,
    pub eps: Vec<f64>,
    pub seed: u64,
    pub seed_mode: String,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n: 7,
            k: 1,
            eps: vec![1e-2, 5e-3, 2.5e-3],
            seed: 42,
            seed_mode: "ansatz".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerSection {
    /// Explicit `t` values; empty selects `t_scale · t_{ℓ,0}`.
    pub t: Vec<f64>,
    pub t_scale: f64,
    /// Explicit signs; empty selects the alternating pattern.
    pub signs: Vec<f64>,
}

impl Default for TowerSection {
    fn default() -> Self {
        TowerSection {
            t: vec![],
            t_scale: 1.0,
            signs: vec![],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub points_per_decade: usize,
    pub uniform_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            points_per_decade: 12,
            uniform_points: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub mu_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub residual_limit: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::default();
        FitSection {
            mu_grid: d.mu_grid,
            eps_grid: d.eps_grid,
            residual_limit: d.residual_limit,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobinSection {
    /// Path to a tabulated star-shaped boundary; empty selects the ball.
    pub boundary_file: String,
    /// Direction count when tabulating internally generated domains.
    pub directions: usize,
    pub newton_seed: Vec<f64>,
}

impl Default for RobinSection {
    fn default() -> Self {
        RobinSection {
            boundary_file: String::new(),
            directions: 2400,
            newton_seed: vec![],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub picard_tol: f64,
    pub picard_max_iterations: usize,
    pub newton_rel_tol: f64,
    pub newton_max_iterations: usize,
    pub admissibility_threshold: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            picard_tol: 1e-10,
            picard_max_iterations: 40,
            newton_rel_tol: 1e-9,
            newton_max_iterations: 60,
            admissibility_threshold: 1e5,
        }
    }
}

/// Pass/fail gates consumed by the pipeline summary (never hard-coded in
/// the command implementations).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub gamma1_slope_rel: f64,
    pub gamma2_slope_rel: f64,
    pub nu_ratio_tol_k1: f64,
    pub nu_ratio_tol_k2: f64,
    pub sweep_spread_max: f64,
    pub contraction_max: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        ThresholdSection {
            gamma1_slope_rel: 0.10,
            gamma2_slope_rel: 0.15,
            nu_ratio_tol_k1: 0.20,
            nu_ratio_tol_k2: 0.30,
            sweep_spread_max: 3.0,
            contraction_max: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub tower: TowerSection,
    pub grid: GridSection,
    pub fit: FitSection,
    pub robin: RobinSection,
    pub tolerances: ToleranceSection,
    pub thresholds: ThresholdSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Hash of the semantically meaningful fields (paths excluded).
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.run.out_dir = String::new();
        let text = toml::to_string(&view).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::new();
        for b in digest.iter().take(8) {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }

    fn grid_options(&self) -> GridOptions {
        GridOptions {
            points_per_decade: self.grid.points_per_decade,
            uniform_points: self.grid.uniform_points,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            mu_grid: self.fit.mu_grid.clone(),
            eps_grid: self.fit.eps_grid.clone(),
            residual_limit: self.fit.residual_limit,
        }
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            rel_tol: self.tolerances.newton_rel_tol,
            max_iterations: self.tolerances.newton_max_iterations,
        }
    }

    fn domain(&self) -> Result<DomainSpec> {
        if self.robin.boundary_file.is_empty() {
            Ok(DomainSpec::UnitBall { dim: self.run.n })
        } else {
            DomainSpec::load_star(self.run.n, Path::new(&self.robin.boundary_file))
        }
    }
}

/// Validation before any computation: dimension, eps list, signs and the
/// PDE feasibility envelope for the stages that solve the full problem.
pub fn validate(cfg: &RunConfig, command: &str) -> Result<()> {
    if cfg.run.n < 7 {
        return Err(Error::InvalidConfig(format!(
            "n = {} rejected: the construction needs n >= 7 (the exponent schedule is singular at n = 6)",
            cfg.run.n
        )));
    }
    if cfg.run.eps.is_empty() || cfg.run.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidConfig("eps list must be positive".into()));
    }
    if !cfg.tower.t.is_empty() && cfg.tower.t.len() != cfg.run.k {
        return Err(Error::InvalidConfig(format!(
            "tower.t has {} entries but k = {}",
            cfg.tower.t.len(),
            cfg.run.k
        )));
    }
    match cfg.run.seed_mode.as_str() {
        "ansatz" | "previous" => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "seed_mode must be 'ansatz' or 'previous', got '{other}'"
            )))
        }
    }
    if matches!(command, "solve" | "sweep" | "pipeline") {
        // the envelope needs the resolved t; explicit t only here (the
        // t0-based default is validated after fitting, inside the command)
        if !cfg.tower.t.is_empty() {
            for &eps in &cfg.run.eps {
                let tower = build_tower(cfg, eps, &cfg.tower.t)?;
                check_envelope(&tower)?;
            }
        }
        if cfg.run.k > 3 || (cfg.run.k == 3 && cfg.run.n < 9) {
            return Err(Error::InvalidConfig(format!(
                "feasibility envelope: k = {} at n = {} is outside desk scale",
                cfg.run.k, cfg.run.n
            )));
        }
    }
    Ok(())
}

fn build_tower(cfg: &RunConfig, eps: f64, t: &[f64]) -> Result<TowerConfig> {
    let signs = if cfg.tower.signs.is_empty() {
        crate::profiles::alternating_signs(t.len())
    } else {
        cfg.tower.signs.clone()
    };
    TowerConfig::new(
        cfg.run.n,
        eps,
        t.to_vec(),
        vec![vec![0.0; cfg.run.n as usize]; t.len().saturating_sub(1)],
        vec![0.0; cfg.run.n as usize],
        signs,
    )
}

fn resolve_t(cfg: &RunConfig, coeffs: &ReducedCoefficients, h00: f64) -> Vec<f64> {
    if !cfg.tower.t.is_empty() {
        cfg.tower.t.clone()
    } else {
        explicit_t0(cfg.run.n, coeffs, h00, cfg.run.k)
            .into_iter()
            .map(|t| t * cfg.tower.t_scale)
            .collect()
    }
}

/// One CSV cell.
#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits
            Cell::F(v) => format!("{v:.16e}"),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// A named table with a deterministic byte rendering.
#[derive(Clone, Debug)]
pub struct OutputTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub config_hash: String,
}

impl OutputTable {
    pub fn new(name: &str, columns: &[&str], hash: &str) -> OutputTable {
        OutputTable {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
            config_hash: hash.into(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row arity");
        self.rows.push(row);
    }

    /// Header plus body; the body alone is the determinism contract.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# bntower v{}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# table={}", self.name);
        let _ = writeln!(out, "# config_hash={}", self.config_hash);
        out.push_str(&self.body());
        out
    }

    pub fn body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

/// Output of one command: tables plus an optional summary.
pub struct RunOutput {
    pub tables: Vec<OutputTable>,
    pub summary: Option<String>,
}

/// The resolved stage plan for a command (what `--dry-run` prints).
pub fn stage_plan(command: &str) -> Vec<&'static str> {
    match command {
        "pipeline" => vec![
            "robin", "constants", "tparams", "ansatz", "picard", "nu", "reduced", "solve",
            "scaling", "summary",
        ],
        "sweep" => vec!["solve-continuation", "scaling"],
        other => vec![match other {
            "constants" => "constants",
            "robin" => "robin",
            "tparams" => "tparams",
            "ansatz" => "ansatz",
            "linsolve" => "linsolve",
            "picard" => "picard",
            "nu" => "nu",
            "reduced" => "reduced",
            "solve" => "solve",
            _ => "unknown",
        }],
    }
}

pub fn run_command(command: &str, cfg: &RunConfig) -> Result<RunOutput> {
    validate(cfg, command)?;
    match command {
        "constants" => cmd_constants(cfg),
        "robin" => cmd_robin(cfg),
        "tparams" => cmd_tparams(cfg),
        "ansatz" => cmd_ansatz(cfg),
        "linsolve" => cmd_linsolve(cfg),
        "picard" => cmd_picard(cfg),
        "nu" => cmd_nu(cfg),
        "reduced" => cmd_reduced(cfg),
        "solve" => cmd_solve(cfg),
        "sweep" => cmd_sweep(cfg),
        "pipeline" => cmd_pipeline(cfg),
        other => Err(Error::InvalidConfig(format!("unknown subcommand {other}"))),
    }
}

fn cmd_constants(cfg: &RunConfig) -> Result<RunOutput> {
    let coeffs = fit_constants_with(cfg.run.n, &cfg.fit_options())?;
    let mut t = OutputTable::new("constants", &["name", "value"], &cfg.hash());
    t.push(vec![Cell::S("d1".into()), Cell::F(coeffs.d1)]);
    t.push(vec![Cell::S("d2".into()), Cell::F(coeffs.d2)]);
    t.push(vec![Cell::S("d3".into()), Cell::F(coeffs.d3)]);
    t.push(vec![
        Cell::S("grad_v0_sq".into()),
        Cell::F(coeffs.grad_v_norms[0]),
    ]);
    t.push(vec![
        Cell::S("grad_v1_sq".into()),
        Cell::F(coeffs.grad_v_norms[1]),
    ]);
    t.push(vec![
        Cell::S("fit_residual".into()),
        Cell::F(coeffs.fit_residual),
    ]);
    t.push(vec![
        Cell::S("fit_condition".into()),
        Cell::F(coeffs.fit_condition),
    ]);
    t.push(vec![Cell::S("energy_c0".into()), Cell::F(coeffs.energy_c0)]);
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn cmd_robin(cfg: &RunConfig) -> Result<RunOutput> {
    let dom = cfg.domain()?;
    let solver = GreensSolver::new(&dom)?;
    let d = cfg.run.n as usize;
    let origin = vec![0.0; d];
    let at = solver.robin_diag(&origin)?;
    let seed = if cfg.robin.newton_seed.len() == d {
        cfg.robin.newton_seed.clone()
    } else {
        let mut s = vec![0.0; d];
        s[0] = 0.3;
        s
    };
    let cp = solver.find_robin_critical_point(&seed)?;
    let mut t = OutputTable::new("robin", &["name", "value"], &cfg.hash());
    t.push(vec![Cell::S("h_origin".into()), Cell::F(at.value)]);
    t.push(vec![Cell::S("accuracy".into()), Cell::F(at.accuracy)]);
    t.push(vec![Cell::S("condition".into()), Cell::F(at.condition)]);
    let cp_norm: f64 = cp.point.iter().map(|v| v * v).sum::<f64>().sqrt();
    t.push(vec![Cell::S("critical_point_norm".into()), Cell::F(cp_norm)]);
    t.push(vec![
        Cell::S("nondegenerate".into()),
        Cell::I(cp.nondegenerate as i64),
    ]);
    t.push(vec![
        Cell::S("newton_iterations".into()),
        Cell::I(cp.iterations as i64),
    ]);
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn cmd_tparams(cfg: &RunConfig) -> Result<RunOutput> {
    let coeffs = fit_constants_with(cfg.run.n, &cfg.fit_options())?;
    let dom = cfg.domain()?;
    let solver = GreensSolver::new(&dom)?;
    let h00 = solver.robin_diag(&vec![0.0; cfg.run.n as usize])?.value;
    let t = resolve_t(cfg, &coeffs, h00);
    let mut tp = OutputTable::new(
        "tparams",
        &["ell", "gamma_num", "gamma_den", "gamma", "t"],
        &cfg.hash(),
    );
    for (l, tv) in t.iter().enumerate() {
        let g = gamma(cfg.run.n, l + 1)?;
        tp.push(vec![
            Cell::I((l + 1) as i64),
            Cell::I(*g.numer()),
            Cell::I(*g.denom()),
            Cell::F(*g.numer() as f64 / *g.denom() as f64),
            Cell::F(*tv),
        ]);
    }
    let mut mus = OutputTable::new("mus", &["eps", "ell", "mu"], &cfg.hash());
    for &eps in &cfg.run.eps {
        let tower = build_tower(cfg, eps, &t)?;
        for (l, &mu) in tower.mus().iter().enumerate() {
            mus.push(vec![Cell::F(eps), Cell::I((l + 1) as i64), Cell::F(mu)]);
        }
    }
    Ok(RunOutput {
        tables: vec![tp, mus],
        summary: None,
    })
}

fn resolved_tower(cfg: &RunConfig, eps: f64) -> Result<(TowerConfig, ReducedCoefficients, f64)> {
    let coeffs = fit_constants_with(cfg.run.n, &cfg.fit_options())?;
    let dom = cfg.domain()?;
    let solver = GreensSolver::new(&dom)?;
    let h00 = solver.robin_diag(&vec![0.0; cfg.run.n as usize])?.value;
    let t = resolve_t(cfg, &coeffs, h00);
    Ok((build_tower(cfg, eps, &t)?, coeffs, h00))
}

fn cmd_ansatz(cfg: &RunConfig) -> Result<RunOutput> {
    let (tower, _, _) = resolved_tower(cfg, cfg.run.eps[0])?;
    let grid = grid_for(&tower, cfg.grid_options())?;
    let w = tower_ansatz(&tower, &grid)?;
    let mut t = OutputTable::new("ansatz", &["r", "w", "psi"], &cfg.hash());
    for (i, &r) in grid.nodes.iter().enumerate() {
        t.push(vec![
            Cell::F(r),
            Cell::F(w.values[i]),
            Cell::F(weight_psi(&tower, r)),
        ]);
    }
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn cmd_linsolve(cfg: &RunConfig) -> Result<RunOutput> {
    let mut t = OutputTable::new(
        "linsolve",
        &[
            "eps",
            "ell",
            "lambda",
            "multiplier_ratio",
            "a_ell",
            "weighted_norm",
            "orthogonality",
            "rhs_admissible_ratio",
        ],
        &cfg.hash(),
    );
    for &eps in &cfg.run.eps {
        let (tower, _, _) = resolved_tower(cfg, eps)?;
        let grid = grid_for(&tower, cfg.grid_options())?;
        let rhs = residual_r(&tower, &grid)?;
        let adm = check_rhs_admissible(&tower, &rhs, cfg.tolerances.admissibility_threshold)?;
        let out = solve_projected(&tower, &grid, &rhs)?;
        for l in 0..tower.count {
            t.push(vec![
                Cell::F(eps),
                Cell::I((l + 1) as i64),
                Cell::F(out.lambda[l]),
                Cell::F(out.multiplier_ratios[l]),
                Cell::F(out.annulus_ratios[l]),
                Cell::F(out.weighted_norm),
                Cell::F(out.orthogonality[l]),
                Cell::F(adm.worst_ratio),
            ]);
        }
    }
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn picard_opts(cfg: &RunConfig) -> PicardOptions {
    PicardOptions {
        tol: cfg.tolerances.picard_tol,
        max_iterations: cfg.tolerances.picard_max_iterations,
    }
}

fn cmd_picard(cfg: &RunConfig) -> Result<RunOutput> {
    let mut t = OutputTable::new(
        "picard",
        &[
            "eps",
            "iterations",
            "contraction_max",
            "final_weighted_norm",
            "reapply_defect",
        ],
        &cfg.hash(),
    );
    for &eps in &cfg.run.eps {
        let (tower, _, _) = resolved_tower(cfg, eps)?;
        let grid = grid_for(&tower, cfg.grid_options())?;
        let rep = picard_solve(&tower, &grid, picard_opts(cfg))?;
        let defect = picard_reapply_defect(&tower, &grid, &rep.phi)?;
        let cmax = rep
            .contraction_estimates
            .iter()
            .fold(0.0f64, |m, v| m.max(*v));
        t.push(vec![
            Cell::F(eps),
            Cell::I(rep.iterations as i64),
            Cell::F(cmax),
            Cell::F(rep.final_weighted_norm),
            Cell::F(defect),
        ]);
    }
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn cmd_nu(cfg: &RunConfig) -> Result<RunOutput> {
    let mut t = OutputTable::new(
        "nu",
        &["eps", "ell", "nu", "nu_analytic", "ratio"],
        &cfg.hash(),
    );
    let dom = cfg.domain()?;
    let solver = GreensSolver::new(&dom)?;
    let robin = solver.robin_diag(&vec![0.0; cfg.run.n as usize])?;
    for &eps in &cfg.run.eps {
        let (tower, coeffs, _) = resolved_tower(cfg, eps)?;
        let grid = grid_for(&tower, cfg.grid_options())?;
        let rep = picard_solve(&tower, &grid, picard_opts(cfg))?;
        let nu = extract_nu(&tower, &grid, &rep.phi, &coeffs, &robin)?;
        for l in 0..tower.count {
            t.push(vec![
                Cell::F(eps),
                Cell::I((l + 1) as i64),
                Cell::F(nu.nu[l]),
                Cell::F(nu.nu_analytic[l]),
                Cell::F(nu.ratios[l]),
            ]);
        }
    }
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn cmd_reduced(cfg: &RunConfig) -> Result<RunOutput> {
    let coeffs = fit_constants_with(cfg.run.n, &cfg.fit_options())?;
    let dom = cfg.domain()?;
    let solver = GreensSolver::new(&dom)?;
    let d = cfg.run.n as usize;
    let robin = solver.robin_diag(&vec![0.0; d])?;
    let t0 = explicit_t0(cfg.run.n, &coeffs, robin.value, cfg.run.k);
    let point = ReducedPoint {
        t: t0.clone(),
        xi: vec![0.0; d],
        z: vec![vec![0.0; d]; cfg.run.k.saturating_sub(1)],
    };
    let f0 = reduced_f(cfg.run.n, &point, &coeffs, &robin);
    let bounds = SkBounds::centered_on(&t0, 10.0);
    let mut seed = point.clone();
    for tv in &mut seed.t {
        *tv *= 1.2;
    }
    if d > 0 {
        seed.xi[0] = 0.05;
        for z in &mut seed.z {
            z[0] = 0.1;
        }
    }
    let sol = newton_reduced(&seed, &coeffs, &solver, &bounds)?;
    let mut t = OutputTable::new(
        "reduced",
        &["ell", "t0", "t_recovered", "residual_at_t0", "jacobian_condition", "iterations"],
        &cfg.hash(),
    );
    for l in 0..cfg.run.k {
        t.push(vec![
            Cell::I((l + 1) as i64),
            Cell::F(t0[l]),
            Cell::F(sol.point.t[l]),
            Cell::F(f0.amax()),
            Cell::F(sol.jacobian_condition),
            Cell::I(sol.iterations as i64),
        ]);
    }
    Ok(RunOutput {
        tables: vec![t],
        summary: None,
    })
}

fn solve_tables(cfg: &RunConfig) -> Result<(Vec<OutputTable>, Option<String>)> {
    let (tower_first, _, _) = resolved_tower(cfg, cfg.run.eps[0])?;
    for &eps in &cfg.run.eps {
        check_envelope(&tower_first.with_eps(eps)?)?;
    }
    let mode = if cfg.run.seed_mode == "previous" {
        ReseedMode::Previous
    } else {
        ReseedMode::Ansatz
    };
    let mut eps_sorted = cfg.run.eps.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let out = continue_in_eps(
        &tower_first,
        &eps_sorted,
        mode,
        cfg.grid_options(),
        cfg.solve_options(),
    )?;
    let mut t = OutputTable::new(
        "solve",
        &[
            "eps",
            "converged",
            "iterations",
            "final_residual",
            "sign_changes",
            "ell",
            "mu",
            "fit_residual",
        ],
        &cfg.hash(),
    );
    for (eps, rep) in &out.reports {
        for (l, est) in rep.extracted_mu.iter().enumerate() {
            t.push(vec![
                Cell::F(*eps),
                Cell::I(rep.converged as i64),
                Cell::I(rep.newton_iterations as i64),
                Cell::F(rep.final_residual),
                Cell::I(rep.sign_changes as i64),
                Cell::I((l + 1) as i64),
                Cell::F(est.mu),
                Cell::F(est.fit_residual),
            ]);
        }
    }
    let mut tables = vec![t];
    let mut note = None;
    if let Some((eps, err)) = &out.failure {
        note = Some(format!("continuation aborted at eps={eps}: {err}"));
    }
    // scaling regression when enough converged points exist
    if out.reports.len() >= 4 {
        let samples: Vec<(f64, Vec<crate::pde::ScaleEstimate>)> = out
            .reports
            .iter()
            .map(|(e, r)| (*e, r.extracted_mu.clone()))
            .collect();
        if samples.iter().all(|(_, v)| v.len() == cfg.run.k) {
            match scaling_regression(&samples, cfg.run.n, cfg.run.k) {
                Ok(rep) => {
                    let mut s = OutputTable::new(
                        "scaling",
                        &["ell", "slope", "predicted", "rel_error"],
                        &cfg.hash(),
                    );
                    for b in &rep.per_bubble {
                        s.push(vec![
                            Cell::I(b.ell as i64),
                            Cell::F(b.slope),
                            Cell::F(b.predicted),
                            Cell::F(b.rel_slope_error),
                        ]);
                    }
                    tables.push(s);
                }
                Err(e) => note = Some(format!("scaling regression unavailable: {e}")),
            }
        }
    }
    Ok((tables, note))
}

fn cmd_solve(cfg: &RunConfig) -> Result<RunOutput> {
    // single solves per eps (no reseeding chain) when only one eps given
    if cfg.run.eps.len() == 1 {
        let (tower, _, _) = resolved_tower(cfg, cfg.run.eps[0])?;
        check_envelope(&tower)?;
        let grid = grid_for(&tower, cfg.grid_options())?;
        let seed = tower_ansatz(&tower, &grid)?;
        let rep = solve_bvp(&tower, &grid, &seed, cfg.solve_options())?;
        let mut t = OutputTable::new(
            "solve",
            &[
                "eps",
                "converged",
                "iterations",
                "final_residual",
                "sign_changes",
                "ell",
                "mu",
                "fit_residual",
            ],
            &cfg.hash(),
        );
        for (l, est) in rep.extracted_mu.iter().enumerate() {
            t.push(vec![
                Cell::F(cfg.run.eps[0]),
                Cell::I(rep.converged as i64),
                Cell::I(rep.newton_iterations as i64),
                Cell::F(rep.final_residual),
                Cell::I(rep.sign_changes as i64),
                Cell::I((l + 1) as i64),
                Cell::F(est.mu),
                Cell::F(est.fit_residual),
            ]);
        }
        return Ok(RunOutput {
            tables: vec![t],
            summary: None,
        });
    }
    let (tables, note) = solve_tables(cfg)?;
    Ok(RunOutput {
        tables,
        summary: note,
    })
}

fn cmd_sweep(cfg: &RunConfig) -> Result<RunOutput> {
    let (tables, note) = solve_tables(cfg)?;
    Ok(RunOutput {
        tables,
        summary: note,
    })
}

fn cmd_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    let mut tables = Vec::new();
    let mut summary = String::new();
    let th = &cfg.thresholds;
    let mut pass_all = true;
    let gate = |name: &str, value: f64, limit: f64, ok: bool, out: &mut String| {
        let verdict = if ok { "pass" } else { "fail" };
        let _ = writeln!(out, "{name}: value={value:.6e} limit={limit:.6e} {verdict}");
        verdict == "pass"
    };

    macro_rules! stage {
        ($call:expr, $label:expr) => {
            match $call {
                Ok(mut out) => {
                    tables.append(&mut out.tables);
                    out.summary
                }
                Err(e) => {
                    let _ = writeln!(summary, "stage {} failed: {e}", $label);
                    let _ = writeln!(summary, "overall: fail");
                    return Ok(RunOutput {
                        tables,
                        summary: Some(summary),
                    });
                }
            }
        };
    }

    stage!(cmd_robin(cfg), "robin");
    stage!(cmd_constants(cfg), "constants");
    stage!(cmd_tparams(cfg), "tparams");
    stage!(cmd_ansatz(cfg), "ansatz");
    stage!(cmd_picard(cfg), "picard");
    let picard_table = tables.iter().find(|t| t.name == "picard").cloned();
    if let Some(pt) = picard_table {
        let cmax = pt
            .rows
            .iter()
            .map(|r| match r[2] {
                Cell::F(v) => v,
                _ => 0.0,
            })
            .fold(0.0f64, f64::max);
        pass_all &= gate(
            "picard_contraction",
            cmax,
            th.contraction_max,
            cmax <= th.contraction_max,
            &mut summary,
        );
    }
    stage!(cmd_nu(cfg), "nu");
    if let Some(nt) = tables.iter().find(|t| t.name == "nu") {
        // smallest eps rows come last
        let tol = if cfg.run.k >= 2 {
            th.nu_ratio_tol_k2
        } else {
            th.nu_ratio_tol_k1
        };
        if let Some(row) = nt.rows.last() {
            if let Cell::F(ratio) = row[4] {
                pass_all &= gate(
                    "nu_ratio_deviation",
                    (ratio - 1.0).abs(),
                    tol,
                    (ratio - 1.0).abs() <= tol,
                    &mut summary,
                );
            }
        }
    }
    stage!(cmd_reduced(cfg), "reduced");
    let sweep_note = stage!(cmd_sweep(cfg), "solve");
    if let Some(note) = sweep_note {
        let _ = writeln!(summary, "note: {note}");
    }
    if let Some(st) = tables.iter().find(|t| t.name == "scaling") {
        for row in &st.rows {
            if let (Cell::I(ell), Cell::F(err)) = (&row[0], &row[3]) {
                let limit = if *ell == 1 {
                    th.gamma1_slope_rel
                } else {
                    th.gamma2_slope_rel
                };
                pass_all &= gate(
                    &format!("scaling_slope_ell{ell}"),
                    *err,
                    limit,
                    *err <= limit,
                    &mut summary,
                );
            }
        }
    }
    let _ = writeln!(summary, "overall: {}", if pass_all { "pass" } else { "fail" });
    Ok(RunOutput {
        tables,
        summary: Some(summary),
    })
}
