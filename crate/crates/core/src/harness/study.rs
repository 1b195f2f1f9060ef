//! The epsilon sweep.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, PreconditionerChoice, Recipe, CHANNELS};
use super::fit::{fit_rate, RateFit};
use crate::cell::{run_cell_pipeline, CellGrid, CorrectorSet, IdentityReport};
use crate::error::{Error, Result};
use crate::fem::manufactured::{body_force, displacement, traction};
use crate::fem::{self, compatibility_check, zero_vector_fn, Coefficient, MixedProblemSpec, PreconditionerKind, SolverOptions};
use crate::mesh::Mesh;
use crate::oracles::{fine_reference_from, ReferenceBudget};
use crate::tensors::{ellipticity_probe, CoefficientField, ElasticityTensor};
use crate::twoscale::{channel_norms, two_scale_report, ChannelNorms, TwoScaleReport};

/// Neumann solutions must be this close to orthogonal to the rigid motions.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Richardson estimates of the discretization error of `u_eps` in each
/// error channel, and their ratio to the measured errors.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub refinement: usize,
    pub informative: bool,
    /// Estimated discretization error per channel.
    pub floors: BTreeMap<String, f64>,
    /// `floor / measured error` per channel.
    pub ratios: BTreeMap<String, f64>,
    /// `err_L2_u0` ratio within the configured bound.
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub h: f64,
    pub nodes: usize,
    pub report: TwoScaleReport,
    pub certificate: Certificate,
    /// CG iterations for `u_eps` and `u_0`.
    pub iterations: [usize; 2],
    /// Largest rigid-mode inner product of either solution (traction problems).
    pub orthogonality: Option<f64>,
    /// Force and moment residuals of the loads (traction problems).
    pub compatibility: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Gap {
    pub epsilon: f64,
    pub error: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    Reliable,
    /// Some point's discretization floor exceeds the configured share of its error.
    FloorDominated,
    /// No informative Richardson certificate.
    Uncertified,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelSummary {
    pub fit: Option<RateFit>,
    /// Why no fit was produced.
    pub fit_error: Option<String>,
    pub points: Vec<(f64, f64)>,
    pub window: Option<[f64; 2]>,
    pub window_pass: bool,
    pub reliability: Reliability,
    /// Epsilon values missing from the fit.
    pub excluded: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub a_hat: ElasticityTensor,
    pub identities: IdentityReport,
    pub ellipticity: (f64, f64),
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RateStudy {
    pub name: String,
    pub seed: u64,
    pub cell: Option<CellSummary>,
    pub runs: Vec<EpsilonRun>,
    pub gaps: Vec<Gap>,
    pub channels: BTreeMap<String, ChannelSummary>,
}

impl RateStudy {
    pub fn reports(&self) -> Vec<TwoScaleReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }

    pub fn certificates_pass(&self) -> bool {
        self.runs.iter().all(|r| r.certificate.pass)
    }

    pub fn orthogonality_pass(&self) -> bool {
        self.runs.iter().all(|r| r.orthogonality.map_or(true, |o| o <= ORTHOGONALITY_TOL))
    }

    /// Every configured window, certificate and orthogonality check holds,
    /// and no epsilon was lost.
    pub fn all_pass(&self) -> bool {
        self.gaps.is_empty()
            && self.certificates_pass()
            && self.orthogonality_pass()
            && self.channels.values().filter(|c| c.window.is_some()).all(|c| c.window_pass)
    }
}

/// Everything shared by the runs of one study.
pub struct StudyContext {
    pub config: ExperimentConfig,
    pub field: CoefficientField,
    pub a_hat: ElasticityTensor,
    pub correctors: Arc<CorrectorSet>,
}

/// Solves the cell problems and checks the cell identities.
pub fn prepare(config: &ExperimentConfig) -> Result<(StudyContext, CellSummary)> {
    config.validate()?;
    let field = config.coefficient.build()?;
    let ellipticity = ellipticity_probe(&field, 256, config.seed)?;
    let grid = CellGrid::new(2, config.cell_n)?;
    let pipeline = run_cell_pipeline(&field, grid, config.solver.cell_tol)?;
    if !pipeline.report.all_pass() {
        let failed: Vec<&str> = pipeline
            .report
            .residuals
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.name)
            .collect();
        return Err(Error::InvalidArgument(format!("cell identities fail: {failed:?}")));
    }
    let a_hat = pipeline.homogenized.a_hat.clone();
    let summary = CellSummary {
        a_hat: a_hat.clone(),
        identities: pipeline.report.clone(),
        ellipticity,
    };
    Ok((
        StudyContext {
            config: config.clone(),
            field,
            a_hat,
            correctors: Arc::new(pipeline.correctors),
        },
        summary,
    ))
}

impl StudyContext {
    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::new(self.config.solver.fem_tol);
        opts.preconditioner = match self.config.solver.preconditioner {
            PreconditionerChoice::Multigrid => PreconditionerKind::Multigrid,
            PreconditionerChoice::Jacobi => PreconditionerKind::Jacobi,
        };
        opts
    }

    pub fn mesh(&self, epsilon: f64) -> Result<Mesh> {
        let cfg = &self.config;
        let domain = cfg.domain.domain()?;
        let h = epsilon / cfg.cells_per_period as f64;
        let nx = (domain.length(0) / h).round() as usize;
        let ny = (domain.length(1) / h).round() as usize;
        Mesh::from_counts(domain, cfg.domain.partition()?, nx, ny)
    }

    /// The fine-scale problem at `epsilon`; its homogenized counterpart
    /// swaps in the constant coefficient `A_hat`.
    pub fn problem(&self, epsilon: f64) -> Result<MixedProblemSpec> {
        let data = &self.config.data;
        let body = match data.recipe {
            Recipe::Manufactured => body_force(data.field, &self.a_hat),
            Recipe::BoundaryOnly => zero_vector_fn(),
        };
        Ok(MixedProblemSpec::new(
            self.mesh(epsilon)?,
            Coefficient::Periodic {
                field: self.field.clone(),
                epsilon,
            },
            body,
            displacement(data.field),
            traction(data.field, &self.a_hat),
        ))
    }

    pub fn run(&self, epsilon: f64) -> Result<EpsilonRun> {
        let cfg = &self.config;
        let spec = self.problem(epsilon)?;
        let spec0 = spec.with_coefficient(Coefficient::Constant(self.a_hat.clone()));
        let opts = self.solver_options();
        let compatibility = (spec.mode == fem::ProblemMode::Neumann).then(|| compatibility_check(&spec).residuals);
        let u0 = fem::solve(&spec0, opts)?;
        let ueps = fem::solve(&spec, opts)?;
        let orthogonality = (spec.mode == fem::ProblemMode::Neumann).then(|| {
            u0.orthogonality
                .iter()
                .chain(&ueps.orthogonality)
                .fold(0.0_f64, |m, v| m.max(v.abs()))
        });
        let report = two_scale_report(&ueps.u, &u0.u, &self.correctors, epsilon, &spec.mesh, cfg.interior_margin)?;
        let iterations = [ueps.stats.iterations, u0.stats.iterations];
        let reference = fine_reference_from(
            &spec,
            ueps,
            cfg.richardson.refinement,
            ReferenceBudget {
                max_nodes: cfg.richardson.max_nodes,
            },
            opts,
        )?;
        let certificate = if reference.informative {
            let fine_mesh = spec.mesh.refined(reference.refinement)?;
            let mut diff = fem::prolongate(&spec.mesh, &reference.coarse.u, reference.refinement);
            for (d, f) in diff.iter_mut().zip(&reference.fine.u) {
                *d -= f;
            }
            let norms = channel_norms(&fine_mesh, &diff, cfg.interior_margin);
            certificate_from(&norms, reference.refinement, &report, cfg.richardson.max_ratio)
        } else {
            Certificate {
                refinement: 1,
                informative: false,
                floors: BTreeMap::new(),
                ratios: BTreeMap::new(),
                pass: false,
            }
        };
        Ok(EpsilonRun {
            epsilon,
            h: spec.mesh.h(),
            nodes: spec.mesh.node_count(),
            report,
            certificate,
            iterations,
            orthogonality,
            compatibility,
        })
    }
}

fn certificate_from(norms: &ChannelNorms, refinement: usize, report: &TwoScaleReport, max_ratio: f64) -> Certificate {
    let r = refinement as f64;
    let (second, first) = (r * r / (r * r - 1.0), r / (r - 1.0));
    let floors: BTreeMap<String, f64> = [
        ("err_L2_u0", norms.l2 * second),
        ("err_H1_w", norms.h1 * first),
        ("err_weighted", norms.weighted * first),
        ("err_interior", norms.interior * first),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let ratios: BTreeMap<String, f64> = floors
        .iter()
        .map(|(k, f)| {
            let err = report.channel(k).unwrap_or(0.0);
            (k.clone(), if err > 0.0 { f / err } else { f64::INFINITY })
        })
        .collect();
    let pass = ratios["err_L2_u0"] <= max_ratio;
    Certificate {
        refinement,
        informative: true,
        floors,
        ratios,
        pass,
    }
}

fn summarize_channel(name: &str, runs: &[EpsilonRun], gaps: &[Gap], cfg: &ExperimentConfig) -> ChannelSummary {
    let points: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| (r.epsilon, r.report.channel(name).unwrap_or(f64::NAN)))
        .collect();
    let (fit, fit_error) = match fit_rate(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let reliability = if runs.iter().any(|r| !r.certificate.informative) {
        Reliability::Uncertified
    } else if runs.iter().any(|r| r.certificate.ratios.get(name).map_or(true, |&q| q > cfg.richardson.max_ratio)) {
        Reliability::FloorDominated
    } else {
        Reliability::Reliable
    };
    let window = cfg.windows.get(name).copied();
    let window_pass = match (&fit, window) {
        (Some(f), Some([lo, hi])) => f.slope >= lo && f.slope <= hi,
        _ => false,
    };
    ChannelSummary {
        fit,
        fit_error,
        points,
        window,
        window_pass,
        reliability,
        excluded: gaps.iter().map(|g| g.epsilon).collect(),
    }
}

/// Runs every epsilon of the configuration and fits each error channel.
/// A failing epsilon is recorded as a gap and left out of the fits.
pub fn run_rate_study(config: &ExperimentConfig) -> Result<RateStudy> {
    let (ctx, cell) = prepare(config)?;
    let threads = if config.parallelism == 0 {
        rayon::current_num_threads()
    } else {
        config.parallelism
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.min(config.epsilons.len()).max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes: Vec<(f64, Result<EpsilonRun>)> =
        pool.install(|| config.epsilons.par_iter().map(|&e| (e, ctx.run(e))).collect());
    let mut runs = Vec::new();
    let mut gaps = Vec::new();
    for (epsilon, outcome) in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(e) => gaps.push(Gap {
                epsilon,
                error: e.to_string(),
            }),
        }
    }
    let channels = CHANNELS
        .iter()
        .map(|&name| (name.to_string(), summarize_channel(name, &runs, &gaps, config)))
        .collect();
    Ok(RateStudy {
        name: config.name.clone(),
        seed: config.seed,
        cell: Some(cell),
        runs,
        gaps,
        channels,
    })
}
