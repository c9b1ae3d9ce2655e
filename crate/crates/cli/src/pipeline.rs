//! Command pipelines. Each one returns its artifacts in memory; writing
//! them out and recording checksums happens in [`crate::manifest`].

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};

use unimap_core::basis::{BasisKind, BasisSpec};
use unimap_core::evolution::{
    evolve, evolve_sampled, find_attractors, find_echo_time_with, init_state, propagate, DiagnosticsSeries,
    EchoMode, EchoOptions, InitSpec, StateVector,
};
use unimap_core::linear_alt::{classical_reference, compare_errors, solve_cascade, CascadeSystem};
use unimap_core::map_model::MapSpec;
use unimap_core::propagator::{
    block_unitarize, compute_truncated_matrix, detect_blocks, filter_threshold, sparsity_stats, unitarize_blocks,
    unitarize_generator, unitarize_polar_global, write_dump, BuildOptions, PropagatorMatrix,
};

use crate::config::{Command, RunConfig, UnitarizationConfig};
use crate::error::{AtStage, CliError};

/// Files keyed by name, plus `key = value` results for the manifest.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
    pub summary: BTreeMap<String, String>,
}

impl Artifacts {
    fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.insert(name.to_string(), contents.into());
    }

    fn note(&mut self, key: impl Into<String>, value: impl Display) {
        self.summary.insert(key.into(), value.to_string());
    }
}

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    workers: usize,
}

/// Runs `cmd` on a config already passed through [`RunConfig::resolve`].
pub fn run(cmd: Command, cfg: &RunConfig, workers: usize) -> Result<Artifacts, CliError> {
    let p = Pipeline { cfg, workers };
    let mut out = Artifacts::default();
    match cmd {
        Command::Build => p.build(&mut out)?,
        Command::Evolve => p.evolve(&mut out)?,
        Command::EchoScan => p.echo_scan(&mut out)?,
        Command::Attractors => p.attractors(&mut out)?,
        Command::SparsitySweep => p.sparsity_sweep(&mut out)?,
        Command::CascadeCompare => p.cascade_compare(&mut out)?,
        Command::ReproducePaper => p.reproduce(&mut out)?,
    }
    Ok(out)
}

fn dump(m: &PropagatorMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dump(m, &mut buf).expect("writing to memory");
    buf
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn mode_name(m: EchoMode) -> &'static str {
    match m {
        EchoMode::Exact => "exact",
        EchoMode::Sampled => "sampled",
    }
}

/// `t,a,x,prob` for every state, `a` 1-based.
fn distributions_csv(states: &[StateVector]) -> Result<String, CliError> {
    let mut out = String::from("t,a,x,prob\n");
    for (t, psi) in states.iter().enumerate() {
        let grid = psi.basis.grid().at("distributions")?;
        for (a, p) in psi.probabilities().iter().enumerate() {
            let _ = writeln!(out, "{t},{},{:.16e},{:.16e}", a + 1, grid.center_of(a + 1), p);
        }
    }
    Ok(out)
}

/// Classical orbit of `x0`, cut where it leaves the domain.
fn orbit(map: &MapSpec, x0: f64, steps: usize) -> Vec<f64> {
    let mut xs = vec![x0];
    let mut x = x0;
    for _ in 0..steps {
        match map.eval_forward(x) {
            Ok(y) if map.domain().contains(y) => {
                xs.push(y);
                x = y;
            }
            _ => break,
        }
    }
    xs
}

fn trajectory_csv(series: &DiagnosticsSeries, classical: &[f64]) -> String {
    let mut out = String::from("t,mean_x,classical_x\n");
    for r in &series.records {
        let _ = write!(out, "{},{:.16e},", r.t, r.mean_x);
        match classical.get(r.t) {
            Some(x) => {
                let _ = writeln!(out, "{x:.16e}");
            }
            None => out.push('\n'),
        }
    }
    out
}

impl Pipeline<'_> {
    fn map(&self) -> Result<MapSpec, CliError> {
        self.cfg.map_spec().at("map")
    }

    fn basis(&self, kind: BasisKind) -> Result<BasisSpec, CliError> {
        self.cfg.basis_spec(kind).at("basis")
    }

    fn truncated(&self, map: &MapSpec, basis: &BasisSpec) -> Result<PropagatorMatrix, CliError> {
        let opts = BuildOptions { quad_order: self.cfg.quad_order, ..BuildOptions::default() }.with_workers(self.workers);
        compute_truncated_matrix(map, basis, opts).at("build")
    }

    /// Unitarizes `v` with the configured method; also returns the filtered
    /// matrix for the block route.
    fn unitarize(
        &self,
        v: &PropagatorMatrix,
        method: UnitarizationConfig,
        prefix: &str,
        out: &mut Artifacts,
    ) -> Result<(PropagatorMatrix, Option<PropagatorMatrix>), CliError> {
        let (u, filtered) = match method {
            UnitarizationConfig::GlobalPolar => {
                let p = unitarize_polar_global(v).at("unitarize")?;
                out.note(format!("{prefix}positive_deviation"), sci(p.positive_deviation));
                out.note(format!("{prefix}min_singular_value"), sci(p.min_singular_value));
                out.note(format!("{prefix}rank_deficient"), p.rank_deficient);
                (p.propagator, None)
            }
            UnitarizationConfig::BlockPolar => {
                let vf = filter_threshold(v, self.cfg.epsilon).at("filter")?;
                let part = detect_blocks(&vf).at("blocks")?;
                let b = unitarize_blocks(&vf, &part).at("unitarize")?;
                out.note(format!("{prefix}blocks"), part.blocks.len());
                out.note(format!("{prefix}zero_rows"), part.zero_rows.len());
                out.note(format!("{prefix}groups"), b.groups.len());
                out.note(format!("{prefix}max_group_dim"), b.max_group_dim());
                out.note(format!("{prefix}rank_deficient"), b.rank_deficient);
                (b.propagator, Some(vf))
            }
            UnitarizationConfig::Generator => (unitarize_generator(v).at("unitarize")?, None),
        };
        out.note(format!("{prefix}unitarity_defect"), sci(u.unitarity_defect()));
        Ok((u, filtered))
    }

    fn spatial_setup(&self, out: &mut Artifacts) -> Result<(MapSpec, BasisSpec, PropagatorMatrix, PropagatorMatrix), CliError> {
        let map = self.map()?;
        let basis = self.basis(BasisKind::Spatial)?;
        let v = self.truncated(&map, &basis)?;
        let (u, _) = self.unitarize(&v, self.cfg.unitarization, "result.", out)?;
        Ok((map, basis, v, u))
    }

    fn initial(&self, basis: &BasisSpec) -> Result<StateVector, CliError> {
        init_state(self.cfg.init.to_spec(basis), basis).at("init")
    }

    fn series(&self, u: &PropagatorMatrix, psi0: &StateVector) -> Result<DiagnosticsSeries, CliError> {
        match self.cfg.measurement {
            Some(_) => evolve_sampled(u, psi0, self.cfg.horizon, &self.cfg.measurement_config(self.cfg.kappa)),
            None => evolve(u, psi0, self.cfg.horizon, self.cfg.kappa),
        }
        .at("evolve")
    }

    fn build(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let map = self.map()?;
        let basis = self.basis(self.cfg.basis_kind())?;
        let v = self.truncated(&map, &basis)?;
        out.file("matrix_truncated.txt", dump(&v));
        out.note("result.truncated_nnz", v.sparse().nnz());
        let (u, filtered) = self.unitarize(&v, self.cfg.unitarization, "result.", out)?;
        if let Some(vf) = filtered {
            out.file("matrix_filtered.txt", dump(&vf));
        }
        out.note("result.unitarized_nnz", u.sparse().nnz());
        out.file("matrix_unitarized.txt", dump(&u));
        Ok(())
    }

    fn evolve(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let (map, basis, _, u) = self.spatial_setup(out)?;
        let psi0 = self.initial(&basis)?;
        self.evolution_files(&map, &u, &psi0, "", out)
    }

    fn evolution_files(
        &self,
        map: &MapSpec,
        u: &PropagatorMatrix,
        psi0: &StateVector,
        suffix: &str,
        out: &mut Artifacts,
    ) -> Result<(), CliError> {
        let series = self.series(u, psi0)?;
        let states = propagate(u, psi0, self.cfg.horizon).at("evolve")?;
        let drift = series.records.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max);
        out.note(format!("result.max_norm_drift{suffix}"), sci(drift));
        let classical = self.cfg.init.center().map(|x0| orbit(map, x0, self.cfg.horizon)).unwrap_or_default();
        out.file(&format!("diagnostics{suffix}.csv"), series.to_csv());
        out.file(&format!("distributions{suffix}.csv"), distributions_csv(&states)?);
        out.file(&format!("trajectory{suffix}.csv"), trajectory_csv(&series, &classical));
        Ok(())
    }

    fn echo_files(&self, u: &PropagatorMatrix, psi0: &StateVector, out: &mut Artifacts) -> Result<(), CliError> {
        let options = EchoOptions { t1: self.cfg.t1, mode: self.cfg.echo_mode.into() };
        let mut report = String::from("kappa,t_c,verdict,mode,probes\n");
        for (i, kappa) in self.cfg.kappas().into_iter().enumerate() {
            let mc = self.cfg.measurement_config(kappa);
            let echo = find_echo_time_with(u, psi0, &mc, self.cfg.horizon, options).at("echo")?;
            let probes = echo.probes.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
            let _ = writeln!(report, "{kappa},{},{},{},{probes}", opt(echo.t_c), echo.verdict, mode_name(echo.mode));
            out.note(format!("result.echo.{i}.kappa"), kappa);
            out.note(format!("result.echo.{i}.t_c"), opt(echo.t_c));
            out.note(format!("result.echo.{i}.verdict"), echo.verdict);
            out.file(&format!("echo_trace_{i}.csv"), echo.trace.to_csv());
        }
        out.file("echo_report.csv", report);
        Ok(())
    }

    fn echo_scan(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let (_, basis, _, u) = self.spatial_setup(out)?;
        let psi0 = self.initial(&basis)?;
        self.echo_files(&u, &psi0, out)
    }

    fn attractor_files(&self, u: &PropagatorMatrix, basis: &BasisSpec, out: &mut Artifacts) -> Result<(), CliError> {
        let mc = self.cfg.measurement_config(self.cfg.kappa);
        let report = find_attractors(u, &mc, self.cfg.horizon).at("attractors")?;
        let grid = basis.grid().at("attractors")?;
        let mut table = String::from("cell,location,height,fwhm\n");
        for p in &report.peaks {
            let _ = writeln!(table, "{},{:.16e},{:.16e},{:.16e}", p.cell, p.location, p.height, p.fwhm);
        }
        let mut hist = String::from("a,x,frequency\n");
        for (a, f) in report.histogram.iter().enumerate() {
            let _ = writeln!(hist, "{},{:.16e},{:.16e}", a + 1, grid.center_of(a + 1), f);
        }
        out.note("result.attractors.t_eval", report.t_eval);
        out.note("result.attractors.echo_verdict", report.echo.verdict);
        out.note("result.attractors.peaks", report.peaks.len());
        out.file("attractors.csv", table);
        out.file("histogram.csv", hist);
        Ok(())
    }

    fn attractors(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let (_, basis, _, u) = self.spatial_setup(out)?;
        self.attractor_files(&u, &basis, out)
    }

    fn sparsity_sweep(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let map = self.map()?;
        let basis = self.basis(self.cfg.basis_kind())?;
        let v = self.truncated(&map, &basis)?;
        let mut table = String::from(
            "epsilon,nnz,max_row_nnz,max_col_nnz,blocks,zero_rows,median_block_width,max_block_width,\
             unitarized_max_row_nnz,max_group_dim,rank_deficient,unitarity_defect,status\n",
        );
        for eps in self.cfg.epsilons() {
            let vf = filter_threshold(&v, eps).at("filter")?;
            let part = detect_blocks(&vf).at("blocks")?;
            let s = sparsity_stats(&vf, 0.0, Some(&part));
            let _ = write!(
                table,
                "{eps},{},{},{},{},{},{},{},",
                s.nnz,
                s.max_row_nnz,
                s.max_col_nnz,
                part.blocks.len(),
                part.zero_rows.len(),
                opt(s.median_block_width()),
                opt(s.max_block_width()),
            );
            match unitarize_blocks(&vf, &part) {
                Ok(b) => {
                    let us = sparsity_stats(&b.propagator, 0.0, None);
                    let _ = writeln!(
                        table,
                        "{},{},{},{:e},ok",
                        us.max_row_nnz,
                        b.max_group_dim(),
                        b.rank_deficient,
                        b.propagator.unitarity_defect()
                    );
                }
                Err(e) => {
                    let _ = writeln!(table, ",,,,{}", e.to_string().replace(',', ";"));
                }
            }
        }
        out.note("result.thresholds", self.cfg.epsilons().len());
        out.file("sparsity.csv", table);
        Ok(())
    }

    fn cascade_compare(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let (map, basis, v, u) = self.spatial_setup(out)?;
        let psi0 = self.initial(&basis)?;
        let steps = self.cfg.horizon;
        let y = solve_cascade(&CascadeSystem::new(v, psi0.clone(), steps).at("cascade")?).at("cascade")?;
        let u_traj: Vec<_> = propagate(&u, &psi0, steps).at("evolve")?.into_iter().skip(1).map(|s| s.amplitudes).collect();
        let grid = basis.grid().at("reference")?;
        let density: Box<dyn Fn(f64) -> f64> = match self.cfg.init.to_spec(&basis) {
            InitSpec::Gaussian { center, sigma } => Box::new(move |x| (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp()),
            InitSpec::Flat => Box::new(|_| 1.0),
            InitSpec::DeltaCell { center } => {
                let cell = grid.cell_of(center);
                Box::new(move |x| if grid.cell_of(x) == cell { 1.0 } else { 0.0 })
            }
        };
        let reference = classical_reference(&map, &basis, &density, steps).at("reference")?;
        let table = compare_errors(&y, &u_traj, &reference).at("compare")?;
        let mut norms = String::from("t,cascade_norm,unitary_norm,reference_norm\n");
        for (t, ((yt, ut), rt)) in y.iter().zip(&u_traj).zip(&reference).enumerate() {
            let _ = writeln!(norms, "{},{:.16e},{:.16e},{:.16e}", t + 1, yt.norm(), ut.norm(), rt.norm());
        }
        out.note("result.divergence_step", opt(table.divergence_step));
        out.file("errors.csv", table.to_csv());
        out.file("cascade_norms.csv", norms);
        Ok(())
    }

    /// The sample-map scenario end to end: both bases, all three matrix
    /// variants, evolution, echo search and attractors.
    fn reproduce(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let map = self.map()?;
        let fourier = self.basis(BasisKind::Fourier)?;
        let vf = self.truncated(&map, &fourier)?;
        out.file("matrix_fourier_truncated.txt", dump(&vf));
        let (uf, _) = self.unitarize(&vf, UnitarizationConfig::GlobalPolar, "result.fourier_global.", out)?;
        out.file("matrix_fourier_global.txt", dump(&uf));

        let spatial = self.basis(BasisKind::Spatial)?;
        let vs = self.truncated(&map, &spatial)?;
        out.file("matrix_spatial_truncated.txt", dump(&vs));
        let (ug, _) = self.unitarize(&vs, UnitarizationConfig::GlobalPolar, "result.spatial_global.", out)?;
        out.file("matrix_spatial_global.txt", dump(&ug));
        let (partition, blocks) = block_unitarize(&vs, self.cfg.epsilon).at("unitarize")?;
        out.note("result.spatial_block.blocks", partition.blocks.len());
        out.note("result.spatial_block.groups", blocks.groups.len());
        out.note("result.spatial_block.rank_deficient", blocks.rank_deficient);
        out.note("result.spatial_block.unitarity_defect", sci(blocks.propagator.unitarity_defect()));
        let ub = blocks.propagator;
        out.file("matrix_spatial_block.txt", dump(&ub));

        let psi0 = self.initial(&spatial)?;
        self.evolution_files(&map, &ub, &psi0, "", out)?;
        self.evolution_files(&map, &ug, &psi0, "_global", out)?;
        self.echo_files(&ub, &psi0, out)?;
        self.attractor_files(&ub, &spatial, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(json: &str, cmd: Command) -> Artifacts {
        let cfg = RunConfig::from_json(json).unwrap().resolve(cmd).unwrap();
        run(cmd, &cfg, 2).unwrap()
    }

    #[test]
    fn build_writes_three_stages_for_the_block_route() {
        let a = small(r#"{"basis": {"n": 40}}"#, Command::Build);
        let names: Vec<_> = a.files.keys().map(String::as_str).collect();
        assert_eq!(names, ["matrix_filtered.txt", "matrix_truncated.txt", "matrix_unitarized.txt"]);
        let defect: f64 = a.summary["result.unitarity_defect"].parse().unwrap();
        assert!(defect <= 1e-10);
    }

    #[test]
    fn generator_route_fails_with_stage_context() {
        let cfg = RunConfig::from_json(r#"{"basis": {"n": 40}, "unitarization": "generator"}"#)
            .unwrap()
            .resolve(Command::Build)
            .unwrap();
        match run(Command::Build, &cfg, 1).unwrap_err() {
            CliError::Pipeline { stage, .. } => assert_eq!(stage, "unitarize"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn orbit_stops_at_the_boundary() {
        let map = MapSpec::shift(0.3, unimap_core::map_model::Interval::unit());
        let xs = orbit(&map, 0.0, 10);
        assert_eq!(xs.len(), 4);
    }

    #[test]
    fn trajectory_has_one_row_per_step() {
        let a = small(r#"{"basis": {"n": 60}, "horizon": 4, "init": {"kind": "gaussian", "center": 0.3, "sigma": 0.1}}"#, Command::Evolve);
        let traj = String::from_utf8(a.files["trajectory.csv"].clone()).unwrap();
        assert_eq!(traj.lines().count(), 6);
        let dist = String::from_utf8(a.files["distributions.csv"].clone()).unwrap();
        assert_eq!(dist.lines().count(), 1 + 5 * 60);
    }
}
