use std::fmt::Write as _;
use std::path::Path;

use assim_core::assimilation::{self, AssimilationOptions};
use assim_core::{adaptivity, SpatialMesh, TimeGrid};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::experiments::{self, Example3Setup, EXAMPLE2_PUBLISHED, EXAMPLE3_EPS};
use crate::output::{field_csv, nodal_csv, num, write_atomic, Comparison};

/// Smallest acceptable observed order in `oracle-check`.
pub const ORACLE_MIN_ORDER: f64 = 0.8;

fn options(cfg: &RunConfig) -> AssimilationOptions {
    AssimilationOptions {
        quad_order: cfg.quad_order,
        theta: cfg.theta_scheme,
        state_grid: None,
    }
}

fn grids(cfg: &RunConfig) -> CliResult<(SpatialMesh, TimeGrid)> {
    Ok((SpatialMesh::unit(cfg.d)?, TimeGrid::uniform(cfg.horizon, cfg.n)?))
}

pub fn assimilate(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let problem = cfg.problem_spec()?;
    let (sm, tg) = grids(cfg)?;
    let r = assimilation::assimilate_with(&problem, &sm, &tg, &options(cfg))?;
    let dir = &cfg.output_dir;
    write_atomic(&dir.join("p.csv"), &field_csv(r.adjoint()))?;
    write_atomic(&dir.join("q.csv"), &field_csv(r.auxiliary()))?;
    write_atomic(&dir.join("y.csv"), &field_csv(&r.state))?;
    write_atomic(&dir.join("u.csv"), &nodal_csv(&sm, &r.control))?;
    write_atomic(&dir.join("grid.txt"), &tg.to_text())?;
    write_atomic(&dir.join("mesh.txt"), &sm.to_text())?;
    let mut summary = String::new();
    let _ = writeln!(summary, "problem={}", cfg.problem);
    let _ = writeln!(summary, "rmse={}", num(r.rmse));
    let _ = writeln!(summary, "alpha={}", num(r.alpha));
    let _ = writeln!(summary, "nu={}", num(cfg.params.nu));
    let _ = writeln!(summary, "d={}", cfg.d);
    let _ = writeln!(summary, "N={}", cfg.n);
    let _ = writeln!(summary, "solver_residual={}", num(r.solution.solver_residual));
    let _ = writeln!(summary, "seed={}", cfg.seed);
    write_atomic(&dir.join("summary.txt"), &summary)?;
    Ok(())
}

pub fn adapt(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let problem = cfg.problem_spec()?;
    let sm = SpatialMesh::unit(cfg.d)?;
    let acfg = cfg.adapt_config()?;
    let (grid, history) = adaptivity::adapt_loop(&problem, &sm, &acfg)?;
    let dir = &cfg.output_dir;
    write_atomic(&dir.join("history.csv"), &history.to_csv())?;
    write_atomic(&dir.join("grid.txt"), &grid.to_text())?;
    write_atomic(&dir.join("mesh.txt"), &sm.to_text())?;
    if cfg.snapshots {
        for c in &history.cycles {
            let g = TimeGrid::from_nodes(c.taus.clone())?;
            write_atomic(&dir.join("grids").join(format!("cycle_{:03}.txt", c.cycle)), &g.to_text())?;
        }
    }
    if cfg.record_reference {
        let reference = experiments::reference_initial_adjoint(&cfg.problem, &cfg.params, &problem, &sm, cfg.n_max, cfg.quad_order)?;
        let rows = experiments::error_vs_n(&problem, &sm, &history, &reference, cfg.quad_order)?;
        let mut csv = String::from("N,adaptive_mse,uniform_mse\n");
        for r in rows {
            let _ = writeln!(csv, "{},{},{}", r.n, num(r.adaptive_mse), num(r.uniform_mse));
        }
        write_atomic(&dir.join("error_vs_N.csv"), &csv)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Table1,
    Example2,
    Example3,
}

pub fn reproduce(cfg: &RunConfig, target: Target) -> CliResult<()> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    let opts = options(cfg);
    let nu = cfg.params.nu;
    match target {
        Target::Table1 => {
            let mut cmp = Comparison::new();
            for e in experiments::table1(nu, cfg.d, cfg.n, &opts)? {
                cmp.push(e.setting(), Some(e.published), e.computed);
            }
            write_atomic(&dir.join("table1.csv"), &cmp.to_csv())?;
        }
        Target::Example2 => {
            let r = experiments::example2(0.01, nu, 0.01, cfg.d, cfg.n, &opts)?;
            let mut cmp = Comparison::new();
            for ((name, published), value) in EXAMPLE2_PUBLISHED.iter().zip(r.values()) {
                cmp.push(*name, Some(*published), value);
            }
            write_atomic(&dir.join("example2.csv"), &cmp.to_csv())?;
            write_atomic(&dir.join("abs_error_before.csv"), &field_csv(&r.abs_error_before))?;
            write_atomic(&dir.join("abs_error_after.csv"), &field_csv(&r.abs_error_after))?;
        }
        Target::Example3 => {
            let mut cmp = Comparison::new();
            for eps in EXAMPLE3_EPS {
                let setup = Example3Setup {
                    eps,
                    nu,
                    d: cfg.d,
                    quad_order: cfg.quad_order,
                    ..Example3Setup::default()
                };
                let r = experiments::example3(&setup)?;
                cmp.push(format!("eps={eps} adaptive_mse"), None, r.adaptive_mse);
                cmp.push(format!("eps={eps} uniform_mse"), None, r.uniform_mse);
                cmp.push(format!("eps={eps} inserted_in_window"), None, r.inserted_in_window);
                write_atomic(&dir.join("grids").join(format!("example3_eps_{eps}.txt")), &r.grid.to_text())?;
            }
            write_atomic(&dir.join("example3.csv"), &cmp.to_csv())?;
        }
    }
    Ok(())
}

pub fn oracle_check(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let problem = cfg.problem_spec()?;
    let levels = experiments::oracle_study(&problem, &cfg.oracle_levels, &options(cfg))?;
    let mut csv = String::from("level,relative_difference,observed_order\n");
    for l in &levels {
        let order = l.order.map(num).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{}", l.level, num(l.relative_difference), order);
    }
    write_atomic(&dir_file(&cfg.output_dir, "oracle.csv"), &csv)?;
    print!("{csv}");
    let worst = experiments::worst_order(&levels);
    if worst < ORACLE_MIN_ORDER {
        return Err(CliError::Threshold(format!(
            "observed order {worst:.3} below {ORACLE_MIN_ORDER}"
        )));
    }
    Ok(())
}

fn dir_file(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(name)
}
