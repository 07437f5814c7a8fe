use bntower::linear_theory::solve_projected;
use bntower::numerics::max_over_min;
use bntower::pde::{grid_for, solve_bvp, GridOptions, SolveOptions};
use bntower::profiles::{tower_ansatz, TowerConfig};
use bntower::reduction::{picard_solve, residual_r, PicardOptions};

fn tower_grid(cfg: &TowerConfig) -> std::sync::Arc<bntower::numerics::RadialGrid> {
    grid_for(cfg, GridOptions::default()).unwrap()
}

#[test]
fn trial_criterion6_linear_sweep() {
    let mut lam1 = vec![];
    let mut lam2 = vec![];
    let mut wnorm = vec![];
    let mut a2 = vec![];
    for &eps in &[1e-2, 5e-3, 2.5e-3, 1.25e-3] {
        let cfg = TowerConfig::radial(7, eps, &[1.0, 1.0]).unwrap();
        let grid = tower_grid(&cfg);
        let rhs = residual_r(&cfg, &grid).unwrap();
        let out = solve_projected(&cfg, &grid, &rhs).unwrap();
        let mus = cfg.mus();
        lam1.push(out.multiplier_ratios[0]);
        lam2.push(out.multiplier_ratios[1]);
        wnorm.push(out.weighted_norm);
        a2.push(out.annulus_ratios[1] / (mus[1] / mus[0] + eps * mus[0] * mus[0]));
        println!("eps {eps:.2e}: lam_ratios {:.4e} {:.4e} wnorm {:.4e} a2n {:.4e} orth {:.1e} {:.1e}",
            out.multiplier_ratios[0], out.multiplier_ratios[1], out.weighted_norm,
            a2.last().unwrap(), out.orthogonality[0], out.orthogonality[1]);
    }
    println!("spreads: lam1 {:.2} lam2 {:.2} wnorm {:.2} a2 {:.2}",
        max_over_min(&lam1), max_over_min(&lam2), max_over_min(&wnorm), max_over_min(&a2));
}

#[test]
fn trial_criterion7_picard() {
    for &t in &[1.0f64, 0.3, 0.1] {
        let mut factors = vec![];
        for &eps in &[4e-2, 2e-2, 1e-2] {
            let cfg = TowerConfig::radial(7, eps, &[t]).unwrap();
            let grid = tower_grid(&cfg);
            match picard_solve(&cfg, &grid, PicardOptions::default()) {
                Ok(rep) => {
                    let c = rep.contraction_estimates.iter().cloned().fold(0.0f64, f64::max);
                    factors.push(c);
                    println!("t {t} eps {eps:.2e}: its {} contraction {:?} final_norm {:.3e}",
                        rep.iterations, rep.contraction_estimates.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(), rep.final_weighted_norm);
                }
                Err(e) => println!("t {t} eps {eps:.2e}: FAILED {e}"),
            }
        }
        println!("t {t}: factors {factors:?}");
    }
}

#[test]
fn trial_criterion10_k1_sweep() {
    let mut pts = vec![];
    for &eps in &[4e-2, 2e-2, 1e-2, 5e-3] {
        let cfg = TowerConfig::radial(7, eps, &[0.0287]).unwrap();
        let grid = tower_grid(&cfg);
        let seed = tower_ansatz(&cfg, &grid).unwrap();
        match solve_bvp(&cfg, &grid, &seed, SolveOptions::default()) {
            Ok(rep) => {
                println!("eps {eps:.2e}: its {} signs {} mu {:.5e}", rep.newton_iterations, rep.sign_changes, rep.extracted_mu[0].mu);
                pts.push((eps.ln(), rep.extracted_mu[0].mu.ln()));
            }
            Err(e) => println!("eps {eps:.2e}: FAILED {e}"),
        }
    }
    if pts.len() >= 4 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, _) = bntower::numerics::linear_fit(&xs, &ys);
        println!("k1 slope {slope:.4} vs 1/3 (err {:.1}%)", (slope - 1.0/3.0).abs() / (1.0/3.0) * 100.0);
    }
}

#[test]
fn trial_criterion6_natural_t() {
    let mut lam1 = vec![];
    let mut lam2 = vec![];
    let mut wnorm = vec![];
    let mut a2 = vec![];
    for &eps in &[1e-2, 5e-3, 2.5e-3, 1.25e-3] {
        let cfg = TowerConfig::radial(7, eps, &[0.0287, 5.74e-10]).unwrap();
        let grid = tower_grid(&cfg);
        let rhs = residual_r(&cfg, &grid).unwrap();
        let out = solve_projected(&cfg, &grid, &rhs).unwrap();
        let mus = cfg.mus();
        lam1.push(out.multiplier_ratios[0]);
        lam2.push(out.multiplier_ratios[1]);
        wnorm.push(out.weighted_norm);
        a2.push(out.annulus_ratios[1] / (mus[1] / mus[0] + eps * mus[0] * mus[0]));
        println!("eps {eps:.2e}: lam {:.4e} {:.4e} wnorm {:.4e} a2n {:.4e}",
            out.multiplier_ratios[0], out.multiplier_ratios[1], out.weighted_norm, a2.last().unwrap());
    }
    println!("spreads-natural: lam1 {:.2} lam2 {:.2} wnorm {:.2} a2 {:.2}",
        max_over_min(&lam1), max_over_min(&lam2), max_over_min(&wnorm), max_over_min(&a2));
}

#[test]
fn trial_wnorm_location() {
    use bntower::profiles::weight_psi;
    for &eps in &[1e-2, 2.5e-3, 1.25e-3] {
        let cfg = TowerConfig::radial(7, eps, &[1.0, 1.0]).unwrap();
        let grid = tower_grid(&cfg);
        let rhs = residual_r(&cfg, &grid).unwrap();
        let out = solve_projected(&cfg, &grid, &rhs).unwrap();
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        for (i, &r) in grid.nodes.iter().enumerate() {
            let psi = weight_psi(&cfg, r);
            let q = out.phi.values[i].abs() / psi;
            if q > worst.0 { worst = (q, r, out.phi.values[i]); }
        }
        let mus = cfg.mus();
        println!("eps {eps:.2e}: wnorm {:.3e} at r {:.3e} (phi {:.3e}); mu1 {:.2e} mu2 {:.2e} sqrt(m1m2) {:.2e}",
            worst.0, worst.1, worst.2, mus[0], mus[1], (mus[0]*mus[1]).sqrt());
    }
}

#[test]
fn trial_criterion6_mixed_t() {
    let mut lam1 = vec![];
    let mut lam2 = vec![];
    let mut wnorm = vec![];
    let mut a2 = vec![];
    for &eps in &[1e-2, 5e-3, 2.5e-3, 1.25e-3] {
        let cfg = TowerConfig::radial(7, eps, &[0.0287, 1.0]).unwrap();
        let grid = tower_grid(&cfg);
        let rhs = residual_r(&cfg, &grid).unwrap();
        let out = solve_projected(&cfg, &grid, &rhs).unwrap();
        let mus = cfg.mus();
        lam1.push(out.multiplier_ratios[0]);
        lam2.push(out.multiplier_ratios[1]);
        wnorm.push(out.weighted_norm);
        a2.push(out.annulus_ratios[1] / (mus[1] / mus[0] + eps * mus[0] * mus[0]));
        println!("mixed eps {eps:.2e}: lam {:.4e} {:.4e} wnorm {:.4e} a2n {:.4e}",
            out.multiplier_ratios[0], out.multiplier_ratios[1], out.weighted_norm, a2.last().unwrap());
    }
    println!("spreads-mixed: lam1 {:.2} lam2 {:.2} wnorm {:.2} a2 {:.2}",
        max_over_min(&lam1), max_over_min(&lam2), max_over_min(&wnorm), max_over_min(&a2));
}

#[test]
fn trial_criterion7_small_eps() {
    for &t in &[1.0f64, 0.6] {
        let mut factors = vec![];
        for &eps in &[4e-3, 2e-3, 1e-3] {
            let cfg = TowerConfig::radial(7, eps, &[t]).unwrap();
            let grid = tower_grid(&cfg);
            match picard_solve(&cfg, &grid, PicardOptions::default()) {
                Ok(rep) => {
                    let c = rep.contraction_estimates.iter().cloned().fold(0.0f64, f64::max);
                    factors.push(c);
                    println!("t {t} eps {eps:.1e}: its {} floor {} cmax {:.3e} fwn {:.3e}",
                        rep.iterations, rep.stalled_at_floor, c, rep.final_weighted_norm);
                }
                Err(e) => println!("t {t} eps {eps:.1e}: FAILED {e}"),
            }
        }
        println!("t {t}: factors {factors:?}");
    }
}

#[test]
fn trial_picard_map() {
    for &t in &[0.029f64, 0.05, 0.1, 0.2] {
        for &eps in &[1e-2, 4e-3, 1.6e-3, 6.4e-4] {
            let cfg = TowerConfig::radial(7, eps, &[t]).unwrap();
            let grid = tower_grid(&cfg);
            match picard_solve(&cfg, &grid, PicardOptions::default()) {
                Ok(rep) => {
                    println!("t {t:5} eps {eps:.1e}: its {:2} floor {:5} ce {:?} fwn {:.2e}",
                        rep.iterations, rep.stalled_at_floor,
                        rep.contraction_estimates.iter().take(3).map(|v| format!("{v:.1e}")).collect::<Vec<_>>(),
                        rep.final_weighted_norm);
                }
                Err(e) => println!("t {t:5} eps {eps:.1e}: FAILED {}", e.to_string().chars().take(40).collect::<String>()),
            }
        }
    }
}

#[test]
fn trial_criterion6_t2_large() {
    for &t2 in &[30.0f64, 8.0] {
        let mut lam1 = vec![]; let mut lam2 = vec![]; let mut wnorm = vec![]; let mut a2 = vec![];
        for &eps in &[1e-2, 5e-3, 2.5e-3, 1.25e-3] {
            let cfg = TowerConfig::radial(7, eps, &[0.0287, t2]).unwrap();
            let grid = tower_grid(&cfg);
            let rhs = residual_r(&cfg, &grid).unwrap();
            let out = solve_projected(&cfg, &grid, &rhs).unwrap();
            let mus = cfg.mus();
            lam1.push(out.multiplier_ratios[0]);
            lam2.push(out.multiplier_ratios[1]);
            wnorm.push(out.weighted_norm);
            a2.push(out.annulus_ratios[1] / (mus[1] / mus[0] + eps * mus[0] * mus[0]));
        }
        println!("t2 {t2}: lam1 {:.2} lam2 {:.2} wnorm {:.2} a2 {:.2}  [a2 vals {:?}]",
            max_over_min(&lam1), max_over_min(&lam2), max_over_min(&wnorm), max_over_min(&a2),
            a2.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>());
    }
}
