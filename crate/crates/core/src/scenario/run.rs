//! Executes a scenario: collisional sweeps, conditional ensembles, output
//! series and the scenario's own checks.

use super::config::*;
use crate::dynamics::{
    build_master_equation, classify_regime, integrate_master, zeno_decay_curve, zeno_factor, gaussian_zeno_curve,
    Dissipator, FeedbackTerm, MasterEquationSpec,
};
use crate::engine::{cycle_unitary, tau_sweep, EvolutionTrace, Propagator};
use crate::error::{Error, Result};
use crate::filtering::{
    ensemble_mean, outcome_average, sample_trajectory, unconditional_step, ConditionalModel, ConditionalTrajectory,
    EnsembleAverage,
};
use crate::linalg::{frobenius, max_abs, negativity, partial_trace, purity, trace_distance, CMat, DensityMatrix};
use crate::model::{feedback_bound_holds, leakage, limit_set, CycleSpec, LimitSet};
use crate::tolerance;

/// Command-line style overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Keep only the finest k sweep points.
    pub tau_points: Option<usize>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub hbar: Option<f64>,
}

impl RunOptions {
    pub fn apply(&self, mut c: ScenarioConfig) -> ScenarioConfig {
        if let Some(h) = self.hbar {
            c.hbar = h;
        }
        if let Some(k) = self.tau_points {
            // sweeps are listed coarsest first
            let drop = c.sweep.taus.len().saturating_sub(k.max(1));
            c.sweep.taus.drain(..drop);
            let drop = c.sweep.ns.len().saturating_sub(k.max(1));
            c.sweep.ns.drain(..drop);
        }
        if self.n_traj.is_some() || self.seed.is_some() {
            let e = c.ensemble.get_or_insert_with(EnsembleConfig::default);
            if let Some(n) = self.n_traj {
                e.n_traj = n;
            }
            if let Some(s) = self.seed {
                e.seed = s;
            }
        }
        c
    }
}

/// A named numeric table; `integer` marks columns printed without a fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub integer: Vec<bool>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            integer: vec![false; columns.len()],
            rows: vec![],
        }
    }

    fn integers(mut self, cols: &[usize]) -> Self {
        for &c in cols {
            self.integer[c] = true;
        }
        self
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub traces: Vec<EvolutionTrace>,
    pub ensemble: Option<EnsembleAverage>,
    pub records: Vec<ConditionalTrajectory>,
    pub tables: Vec<Table>,
    pub checks: Vec<CheckResult>,
}

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Trace at the smallest τ.
    pub fn finest(&self) -> Option<&EvolutionTrace> {
        self.traces.iter().min_by(|a, b| a.tau.total_cmp(&b.tau))
    }
}

struct Context<'a> {
    config: &'a ScenarioConfig,
    cycle: CycleSpec,
    rho0: DensityMatrix,
    /// (τ, n) of the finest sweep point
    finest: (f64, usize),
    limits: Option<LimitSet>,
}

impl Context<'_> {
    fn limits(&mut self) -> Result<&LimitSet> {
        if self.limits.is_none() {
            self.limits = Some(limit_set(&self.cycle, &self.config.sweep.limit_taus)?);
        }
        Ok(self.limits.as_ref().expect("just set"))
    }

    fn model(&self) -> Result<ConditionalModel> {
        ConditionalModel::new(&self.cycle, self.finest.0, &self.config.filter_spec()?)
    }
}

fn needs_unconditional(c: &ScenarioConfig) -> bool {
    c.mode.unconditional()
        || c.checks.iter().any(|k| {
            matches!(
                k,
                CheckConfig::PurityPreserved { .. }
                    | CheckConfig::PurityDrop { .. }
                    | CheckConfig::ZenoCurve { .. }
                    | CheckConfig::MasterConvergence { .. }
                    | CheckConfig::Negativity { .. }
                    | CheckConfig::Completeness { .. }
                    | CheckConfig::EnsembleBand { .. }
                    | CheckConfig::Leakage { .. }
            )
        })
}

/// Runs a validated config. Errors here are numerical failures.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    let cycle = config.cycle()?;
    let rho0 = config.initial_state()?;
    let points = config.sweep.points();
    let finest = *points
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::InvalidArgument("empty sweep".into()))?;
    let mut ctx = Context {
        config,
        cycle,
        rho0,
        finest,
        limits: None,
    };

    let traces = if needs_unconditional(config) {
        let ns: Vec<usize> = points.iter().map(|p| p.1).collect();
        tau_sweep(&ctx.rho0, &ctx.cycle, config.sweep.t, &ns)?
    } else {
        vec![]
    };

    let (ensemble, records) = if config.mode.conditional() {
        let e = config.ensemble.clone().unwrap_or_default();
        let model = ctx.model()?;
        let avg = ensemble_mean(&model, &ctx.rho0, finest.1, e.n_traj, e.seed)?;
        let want = config
            .outputs
            .iter()
            .filter_map(|o| match o {
                SeriesRequest::Record { trajectories } => Some(*trajectories),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let recs = (0..want as u64)
            .map(|s| sample_trajectory(&model, &ctx.rho0, finest.1, e.seed, s))
            .collect::<Result<Vec<_>>>()?;
        (Some(avg), recs)
    } else {
        (None, vec![])
    };

    let layout = config.layout()?;
    let mut tables = Vec::new();
    for req in &config.outputs {
        series(req, config, &layout, &traces, ensemble.as_ref(), &records, &mut tables)?;
    }

    let mut checks = Vec::new();
    for check in &config.checks {
        let (result, table) = evaluate(check, &mut ctx, &traces, ensemble.as_ref())?;
        checks.push(result);
        tables.extend(table);
    }

    Ok(ScenarioRun {
        config: config.clone(),
        traces,
        ensemble,
        records,
        tables,
        checks,
    })
}

fn series(
    req: &SeriesRequest,
    config: &ScenarioConfig,
    layout: &crate::linalg::TensorLayout,
    traces: &[EvolutionTrace],
    ensemble: Option<&EnsembleAverage>,
    records: &[ConditionalTrajectory],
    out: &mut Vec<Table>,
) -> Result<()> {
    let per_trace = |stem: &str, cols: &[&str], f: &dyn Fn(&DensityMatrix) -> Result<Vec<f64>>| -> Result<Vec<Table>> {
        traces
            .iter()
            .map(|tr| {
                let mut t = Table::new(format!("{stem}_n{}", tr.n), cols);
                for (time, s) in tr.times.iter().zip(&tr.states) {
                    let mut row = vec![*time];
                    row.extend(f(s)?);
                    t.rows.push(row);
                }
                Ok(t)
            })
            .collect()
    };
    let dim = layout.total_dim();
    let in_range = |i: usize, j: usize| {
        if i >= dim || j >= dim {
            Err(Error::InvalidArgument(format!("element ({i},{j}) outside dimension {dim}")))
        } else {
            Ok(())
        }
    };
    match req {
        SeriesRequest::Element { i, j } => {
            in_range(*i, *j)?;
            out.extend(per_trace(&format!("rho{i}{j}"), &["t", "re", "im"], &|s| {
                let z = s.matrix()[(*i, *j)];
                Ok(vec![z.re, z.im])
            })?);
        }
        SeriesRequest::Coherence => {
            in_range(0, 1)?;
            out.extend(per_trace("coherence", &["t", "abs_rho01"], &|s| Ok(vec![s.matrix()[(0, 1)].norm()]))?);
        }
        SeriesRequest::Purity => out.extend(per_trace("purity", &["t", "purity"], &|s| Ok(vec![purity(s)]))?),
        SeriesRequest::Observable { name, operator } => {
            let op = operator.build(layout, config.hbar)?;
            if op.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("observable {name}"),
                    expected: dim,
                    found: op.nrows(),
                });
            }
            out.extend(per_trace(name, &["t", "re", "im"], &|s| {
                let z = s.expectation(&op);
                Ok(vec![z.re, z.im])
            })?);
        }
        SeriesRequest::Negativity { factor } => {
            if *factor >= layout.len() {
                return Err(Error::InvalidArgument(format!("no system factor {factor}")));
            }
            out.extend(per_trace(&format!("negativity{factor}"), &["t", "negativity"], &|s| {
                Ok(vec![negativity(s, layout, *factor)])
            })?);
        }
        SeriesRequest::Record { trajectories } => {
            for tr in records.iter().take(*trajectories) {
                let mut t = Table::new(
                    format!("record_{}", tr.stream),
                    &[
                        "step", "t", "seed", "stream", "outcome", "probability", "dw_re", "dw_im", "re", "im",
                        "current",
                    ],
                )
                .integers(&[0, 2, 3, 4]);
                for k in 0..tr.record.outcomes.len() {
                    let w = tr.increments[k];
                    t.rows.push(vec![
                        k as f64,
                        tr.times[k + 1],
                        tr.seed as f64,
                        tr.stream as f64,
                        tr.record.outcomes[k] as f64,
                        tr.record.probabilities[k],
                        w.dw.re,
                        w.dw.im,
                        w.re,
                        w.im,
                        tr.current[k],
                    ]);
                }
                out.push(t);
            }
        }
        SeriesRequest::EnsembleElement { i, j } => {
            in_range(*i, *j)?;
            if let Some(e) = ensemble {
                let mut t = Table::new(format!("ensemble_rho{i}{j}"), &["t", "re", "im", "band"]);
                for (k, (time, s)) in e.trace.times.iter().zip(&e.trace.states).enumerate() {
                    let z = s.matrix()[(*i, *j)];
                    t.rows.push(vec![*time, z.re, z.im, e.band(k)]);
                }
                out.push(t);
            }
        }
    }
    Ok(())
}

fn result(name: &str, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        value,
        threshold,
        detail: detail.into(),
    }
}

fn need_traces(traces: &[EvolutionTrace]) -> Result<&EvolutionTrace> {
    traces
        .iter()
        .min_by(|a, b| a.tau.total_cmp(&b.tau))
        .ok_or_else(|| Error::InvalidArgument("check needs an unconditional run".into()))
}

fn need_ensemble(e: Option<&EnsembleAverage>) -> Result<&EnsembleAverage> {
    e.ok_or_else(|| Error::InvalidArgument("check needs mode `conditional` or `both`".into()))
}

/// Integrates `spec` on a step that divides τ and returns states on the
/// collision grid 0, τ, …, nτ.
fn master_on_grid(spec: &MasterEquationSpec, rho0: &DensityMatrix, tau: f64, n: usize) -> Result<Vec<DensityMatrix>> {
    let m = (tau * spec.generator_norm() / 0.09).ceil().max(1.0) as usize;
    let dt = tau / m as f64;
    let tr = integrate_master(spec, rho0, n as f64 * tau, dt)?;
    Ok((0..=n).map(|k| tr.states[(k * m).min(tr.states.len() - 1)].clone()).collect())
}

/// Limit master equation plus the terms added by feeding back the current.
fn feedback_master(ctx: &mut Context<'_>, model: &ConditionalModel) -> Result<MasterEquationSpec> {
    let fb = ctx
        .config
        .filter_spec()?
        .feedback
        .ok_or_else(|| Error::InvalidArgument("feedback check without a feedback loop".into()))?;
    let record = ctx.config.filter.clone().unwrap_or_default().record_term;
    let s = ctx
        .cycle
        .terms()
        .nth(record)
        .map(|(_, t)| t.s_op.clone())
        .ok_or_else(|| Error::InvalidArgument(format!("no term {record} to record")))?;
    let gamma = model.gamma();
    let hbar = ctx.cycle.hbar;
    let limits = ctx.limits()?.clone();
    let mut spec = build_master_equation(&ctx.cycle, &limits)?;
    spec.dissipators.push(Dissipator {
        a: fb.s2.clone(),
        b: fb.s2.clone(),
        rate: hbar * hbar * fb.g2 * fb.g2 / (8.0 * gamma),
        label: "feedback noise".into(),
    });
    spec.feedback.push(FeedbackTerm {
        a: fb.s2.clone(),
        b: s,
        rate: -fb.g2 / 2.0,
        label: "feedback drift".into(),
    });
    Ok(spec)
}

/// Max over the grid of d_k/(band_k + slack); pass when ≤ 1.
fn band_check(name: &str, e: &EnsembleAverage, reference: &[DensityMatrix], slack: f64) -> Result<(CheckResult, Table)> {
    let mut t = Table::new(name, &["t", "distance", "band"]);
    let mut worst: f64 = 0.0;
    for (k, (s, r)) in e.trace.states.iter().zip(reference).enumerate() {
        let d = trace_distance(s, r)?;
        let allowed = e.band(k) + slack + 1e-12;
        worst = worst.max(d / allowed);
        t.rows.push(vec![e.trace.times[k], d, e.band(k)]);
    }
    Ok((
        result(
            name,
            worst <= 1.0,
            worst,
            1.0,
            format!("worst distance/(3σ̂/√N + {slack:e}) over {} points, N = {}", reference.len(), e.n_traj),
        ),
        t,
    ))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn evaluate(
    check: &CheckConfig,
    ctx: &mut Context<'_>,
    traces: &[EvolutionTrace],
    ensemble: Option<&EnsembleAverage>,
) -> Result<(CheckResult, Option<Table>)> {
    let hbar = ctx.cycle.hbar;
    Ok(match check {
        CheckConfig::PurityPreserved { tol } => {
            let dev = traces
                .iter()
                .flat_map(|tr| tr.states.iter())
                .map(|s| (1.0 - purity(s)).abs())
                .fold(0.0, f64::max);
            need_traces(traces)?;
            (result("purity_preserved", dev <= *tol, dev, *tol, "max |1 − Tr ρ²| over all runs"), None)
        }
        CheckConfig::PurityDrop { min } => {
            let drop = 1.0 - purity(need_traces(traces)?.final_state());
            (result("purity_drop", drop >= *min, drop, *min, "1 − Tr ρ²(T), finest run"), None)
        }
        CheckConfig::ZenoCurve { tol } => {
            let tr = need_traces(traces)?;
            let r = ctx.cycle.realize(tr.tau)?;
            if r.terms.len() != 1 || r.system_dim() < 2 || max_abs(&ctx.cycle.s0) > 0.0 {
                return Err(Error::InvalidArgument("zeno check needs one term and S₀ = 0".into()));
            }
            let term = &r.terms[0];
            let s = &term.s;
            let off = max_abs(&(s - CMat::from_diagonal(&s.diagonal())));
            if off > 0.0 {
                return Err(Error::InvalidArgument("zeno check needs a diagonal S".into()));
            }
            let ds = (s[(0, 0)] - s[(1, 1)]).re;
            let tau_g = r.tau_sub * term.g;
            let chi = zeno_factor(&r.ancillas[term.ancilla].state, &term.m, ds, tau_g, hbar);
            let sigma = match &ctx.config.ancillas[term.ancilla].preparation {
                PreparationExpr::MomentGaussian { variance, .. } => Some(variance.eval(r.tau_sub).sqrt()),
                _ => None,
            };
            let c0 = tr.states[0].matrix()[(0, 1)].norm();
            let mut t = Table::new(
                "zeno",
                &["t", "collisional", "per_collision", "continuum_curve", "gaussian_closed_form"],
            );
            let mut worst: f64 = 0.0;
            for (k, (time, st)) in tr.times.iter().zip(&tr.states).enumerate() {
                let coll = st.matrix()[(0, 1)].norm();
                let product = c0 * chi.norm().powi(k as i32);
                let curve = c0 * zeno_decay_curve(chi, *time, tr.tau);
                let closed = sigma.map(|sg| c0 * gaussian_zeno_curve(sg, ds * tau_g, *time, tr.tau, hbar));
                worst = worst.max((coll - product).abs() / product.max(f64::MIN_POSITIVE));
                if let Some(cf) = closed {
                    worst = worst.max((curve - cf).abs() / cf.max(f64::MIN_POSITIVE));
                }
                t.rows.push(vec![*time, coll, product, curve, closed.unwrap_or(f64::NAN)]);
            }
            (
                result(
                    "zeno_curve",
                    worst <= *tol,
                    worst,
                    *tol,
                    format!("|χ| = {:.12}; relative error of the per-collision law and of the closed form", chi.norm()),
                ),
                Some(t),
            )
        }
        CheckConfig::Regime { expected } => {
            let report = classify_regime(&ctx.cycle, &ctx.config.sweep.limit_taus, tolerance::DEFAULT_K_MAX as u32)?;
            let ok = report.regime == *expected;
            (
                result(
                    "regime",
                    ok,
                    f64::from(ok as u8),
                    1.0,
                    format!("classified {:?}, expected {:?}", report.regime, expected),
                ),
                None,
            )
        }
        CheckConfig::MasterConvergence { tol } => {
            let limits = ctx.limits()?.clone();
            let spec = build_master_equation(&ctx.cycle, &limits)?;
            let t_end = ctx.config.sweep.t;
            let m = (t_end * spec.generator_norm() / 0.09).ceil().max(1.0) as usize;
            let reference = integrate_master(&spec, &ctx.rho0, t_end, t_end / m as f64)?;
            let target = reference.final_state();
            let mut t = Table::new("convergence", &["tau", "n", "trace_distance"]).integers(&[1]);
            let mut sorted: Vec<&EvolutionTrace> = traces.iter().collect();
            sorted.sort_by(|a, b| b.tau.total_cmp(&a.tau));
            let mut ds = Vec::new();
            for tr in &sorted {
                let d = trace_distance(tr.final_state(), target)?;
                t.rows.push(vec![tr.tau, tr.n as f64, d]);
                ds.push(d);
            }
            let finest = *ds.last().ok_or_else(|| Error::InvalidArgument("check needs an unconditional run".into()))?;
            // agreement at round-off level counts as converged at every τ
            let shrinks = ds.len() < 2 || finest < ds[0] || ds.iter().all(|d| *d <= 1e-10);
            (
                result(
                    "master_convergence",
                    finest <= *tol && shrinks,
                    finest,
                    *tol,
                    "trace distance at T, finest τ; must also fall below the coarsest",
                ),
                Some(t),
            )
        }
        CheckConfig::Negativity { factor, min } => {
            let layout = ctx.config.layout()?;
            if *factor >= layout.len() {
                return Err(Error::InvalidArgument(format!("no system factor {factor}")));
            }
            let v = negativity(need_traces(traces)?.final_state(), &layout, *factor);
            (result("negativity", v >= *min, v, *min, format!("negativity across factor {factor} at T")), None)
        }
        CheckConfig::DissipatorsBelow { max } => {
            let limits = ctx.limits()?.clone();
            let v = build_master_equation(&ctx.cycle, &limits)?.max_dissipator_rate();
            (result("dissipators_below", v <= *max, v, *max, "largest limit dissipator rate"), None)
        }
        CheckConfig::FeedbackBound => {
            let anc: Vec<usize> = ctx.cycle.terms().map(|(_, t)| t.ancilla).collect();
            let mut failures = 0usize;
            let mut pairs = 0usize;
            for s in &ctx.limits()?.samples {
                for i in 0..anc.len() {
                    for j in 0..anc.len() {
                        if i != j && anc[i] == anc[j] {
                            pairs += 1;
                            failures += usize::from(!feedback_bound_holds(s, i, j, hbar));
                        }
                    }
                }
            }
            (
                result(
                    "feedback_bound",
                    failures == 0,
                    failures as f64,
                    0.0,
                    format!("ħ|M̃ᵢⱼ| ≤ Γᵢᵢ + Γⱼⱼ violated in {failures} of {pairs} (pair, τ) cases"),
                ),
                None,
            )
        }
        CheckConfig::Completeness { tol } => {
            let model = ctx.model()?;
            let r = ctx.cycle.realize(ctx.finest.0)?;
            let tr = need_traces(traces)?;
            let mut worst: f64 = 0.0;
            for s in tr.states.iter().step_by((tr.states.len() / 20).max(1)) {
                let a = outcome_average(&model, s.matrix());
                let b = unconditional_step(&r, s.matrix())?;
                worst = worst.max(max_abs(&(a - b)));
            }
            (result("completeness", worst <= *tol, worst, *tol, "max |Σ p_b ρ_b − Φ(ρ)| entrywise"), None)
        }
        CheckConfig::EnsembleBand { slack } => {
            let e = need_ensemble(ensemble)?;
            let tr = need_traces(traces)?;
            let (c, t) = band_check("ensemble_band", e, &tr.states, *slack)?;
            (c, Some(t))
        }
        CheckConfig::FeedbackBand { slack } => {
            let e = need_ensemble(ensemble)?;
            let model = ctx.model()?;
            let spec = feedback_master(ctx, &model)?;
            let reference = master_on_grid(&spec, &ctx.rho0, ctx.finest.0, ctx.finest.1)?;
            let (c, t) = band_check("feedback_band", e, &reference, *slack)?;
            (c, Some(t))
        }
        CheckConfig::MagnusSlope {
            expected,
            tol,
            taus,
            slices,
        } => {
            if taus.len() < 2 {
                return Err(Error::InvalidArgument("magnus slope needs at least two τ values".into()));
            }
            let mut t = Table::new("magnus", &["tau", "defect"]);
            let (mut lx, mut ly) = (vec![], vec![]);
            for &tau in taus {
                let r = ctx.cycle.realize(tau)?;
                let stepped = cycle_unitary(&r, Propagator::Stepped { slices: *slices })?;
                let mean = cycle_unitary(&r, Propagator::MeanValue)?;
                let d = frobenius(&(stepped - mean));
                t.rows.push(vec![tau, d]);
                lx.push(tau.ln());
                ly.push(d.ln());
            }
            let k = slope(&lx, &ly);
            (
                result(
                    "magnus_slope",
                    (k - expected).abs() <= *tol,
                    k,
                    *expected,
                    format!("log–log slope of the one-cycle defect, tolerance {tol}"),
                ),
                Some(t),
            )
        }
        CheckConfig::Leakage { max } => {
            let layout = ctx.config.layout()?;
            let mut worst: f64 = 0.0;
            for tr in traces {
                for s in &tr.states {
                    for (f, &d) in layout.factor_dims().iter().enumerate() {
                        if d >= 4 {
                            let red = DensityMatrix::with_tolerance(partial_trace(s.matrix(), &layout, &[f])?, 1e-8)?;
                            worst = worst.max(leakage(&red));
                        }
                    }
                }
            }
            need_traces(traces)?;
            (
                result("leakage", worst <= *max, worst, *max, "top-two-level population, every factor and time"),
                None,
            )
        }
    })
}
