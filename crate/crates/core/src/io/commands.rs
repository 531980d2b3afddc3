//! One function per command: checks, structured results and plot tables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::document::{kernel_entries, ProblemDocument, UnitaryKind, WeightDoc};
use super::format::{format_f64, Table};
use super::{flag, to_value, upper_bound, CommandOutput, Options};
use crate::error::{Error, Result};
use crate::fluctuation::{
    classical_identities, crooks_table, landauer_sweep_grid, landauer_tradeoff, moment_inequalities,
    reversibility_check, sample_trajectories, IdentityReport, LandauerSpec,
};
use crate::kernel::{backward_kernel, realize_finite_bath, validate_gibbs_stochastic, BathModel, WorkKernel};
use crate::majorize::{
    build_curve, curve_dominates, feasible_lp, feasible_with_shift, optimal_expected_work, FeasibilityProblem,
    LpStatus, ThermoCurve, WorkShiftForm, LP_TOL,
};
use crate::quantum::{
    build_energy_conserving_unitary, channels_from_unitary, check_quantum_gibbs_stochastic, induced_classical_kernel,
    quantum_crooks_check, quantum_identities, random_quasi_classical_unitary, random_unitary, system_bath_channel,
    tpm_check, unitality_error, CMatrix, DensityOperator, WeightLadder, C64,
};
use crate::thermo::{thermo_summary, DiagState, EnergySpectrum, ThermalContext};

const DEFAULT_SAMPLES: i64 = 100_000;
/// Monte Carlo estimates pass within this many standard errors.
const MC_SIGMAS: f64 = 6.0;
const DEFAULT_HALF_RANGE: u32 = 20;
const DEFAULT_DENOM_BITS: u32 = 8;

pub(crate) fn dispatch(command: &str, doc: Option<&ProblemDocument>, opts: &Options) -> Result<CommandOutput> {
    match (command, doc) {
        ("landauer", _) => landauer(doc, opts),
        ("demo", _) => demo(opts),
        (_, None) => Err(Error::Argument(format!("'{command}' needs a problem document"))),
        ("validate", Some(d)) => validate(d),
        ("backward", Some(d)) => backward(d),
        ("realize", Some(d)) => realize(d),
        ("identities", Some(d)) => identities(d),
        ("sample", Some(d)) => sample(d, opts),
        ("curve", Some(d)) => curve(d),
        ("feasible", Some(d)) => feasible(d, false),
        ("optimal-work", Some(d)) => feasible(d, true),
        ("quantum", Some(d)) => quantum(d),
        _ => Err(Error::Argument(format!("unknown command '{command}'"))),
    }
}

fn gibbs_checks(prefix: &str, kernel: &WorkKernel, ctx: &ThermalContext, tol: f64) -> (Vec<IdentityReport>, serde_json::Value) {
    let g = validate_gibbs_stochastic(kernel, ctx, tol);
    let checks = vec![
        upper_bound(&format!("{prefix}gibbs_stochastic"), g.max_deviation, 0.0, tol),
        upper_bound(&format!("{prefix}row_normalization"), g.max_row_deviation, 0.0, tol),
    ];
    (checks, serde_json::to_value(&g).unwrap_or_default())
}

fn validate(doc: &ProblemDocument) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let kernel = doc.require_kernel()?;
    let (checks, gibbs) = gibbs_checks("", &kernel, &ctx, doc.tol);
    Ok(CommandOutput {
        checks,
        results: json!({ "gibbs": gibbs, "entries": to_value(&kernel_entries(&kernel))? }),
        table: None,
    })
}

fn backward(doc: &ProblemDocument) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let kernel = doc.require_kernel()?;
    let back = backward_kernel(&kernel, &ctx);
    let (mut checks, gibbs) = gibbs_checks("backward_", &back, &ctx, doc.tol);
    let twice = backward_kernel(&back, &ctx);
    checks.push(upper_bound("double_backward", kernel.max_abs_difference(&twice), 0.0, 0.0));
    let mut table = Table::new(&["s", "s_prime", "w", "p"]);
    let entries = kernel_entries(&back);
    for e in &entries {
        table.push(vec![e.0.clone(), e.1.clone(), format_f64(e.2), format_f64(e.3)]);
    }
    Ok(CommandOutput {
        checks,
        results: json!({ "backward": to_value(&entries)?, "gibbs": gibbs }),
        table: Some(table),
    })
}

fn realize(doc: &ProblemDocument) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let kernel = doc.require_kernel()?;
    let (half_range, bits) = doc
        .bath
        .map_or((DEFAULT_HALF_RANGE, DEFAULT_DENOM_BITS), |b| (b.half_range, b.denom_bits));
    let bath = BathModel::canonical(&ctx, half_range)?;
    let r = realize_finite_bath(&kernel, &bath, &ctx, bits)?;
    let bijection = r.check_bijection();
    let resolution = (-(bits as f64)).exp2();
    let induced_error = r.induced.max_abs_difference(&kernel);
    let checks = vec![
        flag("interior_bijection", bijection.is_ok()),
        flag("energy_conservation", r.conserves_energy()),
        flag("counting_identity", r.counting_identity_holds()),
        upper_bound("induced_kernel", induced_error, 0.0, resolution),
    ];
    Ok(CommandOutput {
        checks,
        results: json!({
            "bath": to_value(&bath)?,
            "denom_bits": bits,
            "blocks": r.blocks.len(),
            "mapped_microstates": r.num_mapped().to_string(),
            "boundary_microstates": r.num_boundary().to_string(),
            "boundary_fraction": r.boundary_fraction,
            "bijection_error": bijection.err(),
            "max_input_error": r.max_input_error,
            "induced": to_value(&kernel_entries(&r.induced))?,
        }),
        table: None,
    })
}

fn identities(doc: &ProblemDocument) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let kernel = doc.require_kernel()?;
    let state = doc.require_initial_state()?;
    let mut checks = classical_identities(&state, &kernel, &ctx, doc.tol)?;
    let moments = moment_inequalities(&state, &kernel, &ctx, 7)?;
    for (n, sum) in &moments {
        checks.push(upper_bound(&format!("moment_sum_{n}"), *sum, 0.0, doc.tol));
    }
    let (gibbs_check, gibbs) = gibbs_checks("", &kernel, &ctx, doc.tol);
    checks.extend(gibbs_check);
    let crooks = crooks_table(&kernel, &ctx);
    checks.push(upper_bound("crooks_ratio", crooks.max_row_residual, 0.0, doc.tol));
    let summary = thermo_summary(kernel.initial(), &ctx, &state)?;
    Ok(CommandOutput {
        checks,
        results: json!({
            "initial": to_value(&summary)?,
            "gibbs": gibbs,
            "moments": moments.iter().map(|(n, s)| json!({"order": n, "partial_sum": s})).collect::<Vec<_>>(),
            "crooks": to_value(&crooks)?,
            "reversibility": to_value(&reversibility_check(&state, &kernel, &ctx, doc.tol)?)?,
        }),
        table: None,
    })
}

fn mc_check(name: &str, est: &crate::fluctuation::McEstimate, target: f64, tol: f64) -> IdentityReport {
    IdentityReport::equality(name, est.mean, target, MC_SIGMAS * est.std_error + tol)
}

fn sample(doc: &ProblemDocument, opts: &Options) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let kernel = doc.require_kernel()?;
    let state = doc.require_initial_state()?;
    let n = doc.samples.unwrap_or(DEFAULT_SAMPLES);
    let mc = sample_trajectories(&state, &kernel, &ctx, doc.seed, n, opts.csv)?;
    let z_final = kernel.final_spectrum().partition_function(&ctx);
    let mut checks = Vec::new();
    // Rare-event dominated estimates carry no reliable error bar.
    if !mc.second_law.unreliable {
        checks.push(mc_check("mc_second_law", &mc.second_law, 1.0, doc.tol));
    }
    if !mc.generalized_jarzynski.unreliable {
        checks.push(mc_check("mc_generalized_jarzynski", &mc.generalized_jarzynski, z_final, doc.tol));
    }
    let table = opts.csv.then(|| {
        let mut t = Table::new(&["s", "s_prime", "w", "v"]);
        for x in &mc.samples {
            t.push(vec![
                kernel.initial().label(x.s).to_string(),
                kernel.final_spectrum().label(x.s_prime).to_string(),
                format_f64(x.w),
                format_f64(x.v),
            ]);
        }
        t
    });
    Ok(CommandOutput {
        checks,
        results: json!({ "monte_carlo": to_value(&mc)?, "z_final": z_final }),
        table,
    })
}

fn curve_rows(table: &mut Table, name: &str, c: &ThermoCurve) {
    for (x, y) in &c.vertices {
        table.push(vec![name.to_string(), format_f64(*x), format_f64(*y)]);
    }
}

/// Spectra shifted by the work form, or unchanged without one.
fn shifted_spectra(
    e: &EnergySpectrum,
    ep: &EnergySpectrum,
    shift: Option<&WorkShiftForm>,
) -> Result<(EnergySpectrum, EnergySpectrum)> {
    match shift {
        Some(s) => Ok((e.shifted(&s.gamma)?, ep.shifted(&s.alpha)?)),
        None => Ok((e.clone(), ep.clone())),
    }
}

fn curve(doc: &ProblemDocument) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let state = doc.require_initial_state()?;
    let shift = doc.shift_form()?;
    let (e, ep) = shifted_spectra(&doc.initial_spectrum()?, &doc.final_spectrum()?, shift.as_ref())?;
    let a = build_curve(&state, &e, &ctx)?;
    let mut table = Table::new(&["curve", "x", "y"]);
    curve_rows(&mut table, "initial", &a);
    let mut results = json!({ "initial": to_value(&a)?, "shifted": shift.is_some() });
    if let Some(sigma) = doc.final_state()? {
        let b = build_curve(&sigma, &ep, &ctx)?;
        curve_rows(&mut table, "final", &b);
        results["final"] = to_value(&b)?;
        results["initial_dominates_final"] = json!(curve_dominates(&a, &b, LP_TOL));
        results["final_dominates_initial"] = json!(curve_dominates(&b, &a, LP_TOL));
    }
    Ok(CommandOutput {
        checks: Vec::new(),
        results,
        table: Some(table),
    })
}

fn feasible(doc: &ProblemDocument, optimize: bool) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let rho = doc.require_initial_state()?;
    let sigma = doc.require_final_state()?;
    let (e, ep) = (doc.initial_spectrum()?, doc.final_spectrum()?);
    let shift = doc.shift_form()?;
    let mut problem = match &shift {
        Some(s) => FeasibilityProblem::from_shift_form(ctx, (rho.clone(), e.clone()), (sigma.clone(), ep.clone()), s)?,
        None => {
            let grid = doc
                .work_grid()?
                .ok_or_else(|| Error::Validation {
                    path: "grid".into(),
                    message: "give a work grid or a shift form".into(),
                })?;
            FeasibilityProblem::new(ctx, (rho.clone(), e.clone()), (sigma.clone(), ep.clone()), grid)?
        }
    };
    if doc.closure {
        problem = problem.with_closure();
    }
    let sol = if optimize { optimal_expected_work(&problem)? } else { feasible_lp(&problem)? };
    let mut checks = Vec::new();
    let mut results = json!({ "solution": to_value(&sol)? });
    if let Some(k) = &sol.kernel {
        let g = validate_gibbs_stochastic(k, &ctx, LP_TOL);
        let check = if doc.closure {
            upper_bound("kernel_gibbs_sub_stochastic", g.gibbs_sums.iter().fold(f64::MIN, |m, v| m.max(*v)), 1.0, LP_TOL)
        } else {
            upper_bound("kernel_gibbs_stochastic", g.max_deviation, 0.0, LP_TOL)
        };
        checks.push(check);
        results["kernel"] = to_value(&kernel_entries(k))?;
    }
    if let (Some(obj), true) = (sol.objective, optimize) {
        checks.push(upper_bound("free_energy_bound", obj, sol.free_energy_bound, LP_TOL));
    }
    if let Some(s) = &shift {
        let curves = feasible_with_shift((&rho, &e), (&sigma, &ep), s, &ctx)?;
        let lp = sol.status != LpStatus::Infeasible;
        checks.push(flag("lp_matches_curves", curves == lp));
        results["curves_feasible"] = json!(curves);
    }
    Ok(CommandOutput {
        checks,
        results,
        table: None,
    })
}

fn landauer(doc: Option<&ProblemDocument>, opts: &Options) -> Result<CommandOutput> {
    let beta = opts.beta.or(doc.map(|d| d.beta)).unwrap_or(1.0);
    let ctx = ThermalContext::new(beta)?;
    let tol = opts.tol.or(doc.map(|d| d.tol)).unwrap_or(super::DEFAULT_TOL);
    let eps = opts.epsilon.or(doc.and_then(|d| d.epsilon)).unwrap_or(0.0);
    landauer_report(&ctx, eps, opts.sweep, tol)
}

fn landauer_report(ctx: &ThermalContext, eps: f64, sweep: bool, tol: f64) -> Result<CommandOutput> {
    let sym = LandauerSpec::symmetric(eps, ctx)?;
    let grid = if sweep { landauer_sweep_grid(eps, ctx)? } else { vec![sym.w0] };
    let curve = landauer_tradeoff(eps, ctx, &grid)?;
    let t = ctx.temperature();
    let mut checks = vec![
        upper_bound("symmetric_constraint", sym.constraint_residual(ctx), 0.0, tol),
        flag("all_work_negative", curve.all_negative),
    ];
    if eps > 0.0 {
        checks.push(IdentityReport::equality(
            "failure_branch_work",
            sym.wbar0,
            t * (1.0 / (2.0 * eps)).ln(),
            tol,
        ));
    }
    if let Some(best) = curve.least_cost {
        let step = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
        checks.push(IdentityReport::equality("least_cost_at_symmetric_point", best.w0, sym.w0, step + tol));
    }
    let mut table = Table::new(&["w0", "w1", "mean_work", "mean_cost"]);
    for p in curve.points.iter().filter(|p| p.feasible) {
        if let (Some(w1), Some(m)) = (p.w1, p.mean_work) {
            table.push(vec![format_f64(p.w0), format_f64(w1), format_f64(m), format_f64(-m)]);
        }
    }
    Ok(CommandOutput {
        checks,
        results: json!({
            "temperature": t,
            "symmetric": to_value(&sym)?,
            "symmetric_mean_work": sym.mean_work(),
            "curve": to_value(&curve)?,
        }),
        table: Some(table),
    })
}

/// Qubit curves: a crossing pair, a work shift that makes the transition
/// possible, and the shift that makes both curves one straight line.
fn curves_demo() -> Result<CommandOutput> {
    let ctx = ThermalContext::new(1.0)?;
    let e = EnergySpectrum::from_energies(&[0.0, 1.0])?;
    let rho = DiagState::new(vec![0.9, 0.1])?;
    let sigma = DiagState::new(vec![0.3, 0.7])?;
    let t = ctx.temperature();
    let straight = |p: &DiagState| -> Vec<f64> { (0..2).map(|s| -t * p.probs()[s].ln() - e.energy(s)).collect() };
    // Shifting only the final levels so that sigma becomes their Gibbs state
    // straightens its curve below that of rho, at equal partition function.
    let z = e.partition_function(&ctx);
    let alpha = (0..2).map(|s| -t * (sigma.probs()[s] * z).ln() - e.energy(s)).collect();
    let possible = WorkShiftForm::new(vec![0.0, 0.0], alpha)?;
    let reversible = WorkShiftForm::new(straight(&rho), straight(&sigma))?;
    let mut table = Table::new(&["curve", "x", "y"]);
    let mut checks = Vec::new();
    let mut cases = Vec::new();
    for (name, shift) in [("plain", None), ("shifted", Some(&possible)), ("reversible", Some(&reversible))] {
        let (a_spec, b_spec) = shifted_spectra(&e, &e, shift)?;
        let a = build_curve(&rho, &a_spec, &ctx)?;
        let b = build_curve(&sigma, &b_spec, &ctx)?;
        curve_rows(&mut table, &format!("{name}_rho"), &a);
        curve_rows(&mut table, &format!("{name}_sigma"), &b);
        let forward = curve_dominates(&a, &b, LP_TOL);
        let backward = curve_dominates(&b, &a, LP_TOL);
        let expected = match name {
            "plain" => (false, false),
            "shifted" => (true, false),
            _ => (true, true),
        };
        checks.push(flag(&format!("{name}_dominance"), (forward, backward) == expected));
        cases.push(json!({ "name": name, "rho_dominates": forward, "sigma_dominates": backward }));
    }
    let mean_work: f64 = (0..2)
        .flat_map(|s| (0..2).map(move |sp| (s, sp)))
        .map(|(s, sp)| rho.probs()[s] * sigma.probs()[sp] * reversible.work(s, sp))
        .sum();
    let bound = rho.free_energy(&e, &ctx) - sigma.free_energy(&e, &ctx);
    checks.push(IdentityReport::equality("reversible_mean_work", mean_work, bound, 1e-12));
    Ok(CommandOutput {
        checks,
        results: json!({ "cases": cases }),
        table: Some(table),
    })
}

fn demo(opts: &Options) -> Result<CommandOutput> {
    match opts.demo.as_deref().unwrap_or("landauer") {
        "landauer" => {
            let ctx = ThermalContext::new(opts.beta.unwrap_or(1.0))?;
            landauer_report(&ctx, opts.epsilon.unwrap_or(0.0), true, opts.tol.unwrap_or(super::DEFAULT_TOL))
        }
        "curves" => curves_demo(),
        other => Err(Error::Argument(format!("unknown demo '{other}'; expected landauer or curves"))),
    }
}

fn quantum(doc: &ProblemDocument) -> Result<CommandOutput> {
    let ctx = doc.context()?;
    let q = doc.quantum.as_ref().ok_or_else(|| Error::Validation {
        path: "quantum".into(),
        message: "this command needs a quantum section".into(),
    })?;
    let (e, ep) = (doc.initial_spectrum()?, doc.final_spectrum()?);
    let bath = EnergySpectrum::from_energies(&q.bath)?;
    let ladder = WeightLadder::new(q.ladder.dim, q.ladder.delta)?;
    let n = e.len() * bath.len();
    let mut rng = ChaCha8Rng::seed_from_u64(doc.seed);
    let v = match q.unitary {
        UnitaryKind::Random => random_unitary(n, &mut rng),
        UnitaryKind::QuasiClassical => random_quasi_classical_unitary(e.len(), bath.len(), &mut rng),
        UnitaryKind::Identity => CMatrix::identity(n),
    };
    let u = build_energy_conserving_unitary(&v, &e, &ep, &bath, &ladder)?;
    let rho_w = match q.weight.unwrap_or(WeightDoc::Position(ladder.mid())) {
        WeightDoc::Position(p) => ladder.position_state(p)?,
        WeightDoc::Momentum(k) => ladder.momentum_state(k)?,
    };
    if !ladder.in_guard_band(&rho_w, u.max_shift) {
        return Err(Error::Precondition(format!(
            "weight state must vanish within {} steps of the ladder ends",
            u.max_shift
        )));
    }
    let rho_s = match (&q.amplitudes, doc.initial_state()?) {
        (Some(a), _) => DensityOperator::pure(&a.iter().map(|[re, im]| C64::new(*re, *im)).collect::<Vec<_>>())?,
        (None, Some(p)) => DensityOperator::from_diag(p.probs())?,
        (None, None) => DensityOperator::from_diag(DiagState::gibbs(&e, &ctx).probs())?,
    };
    let tol = doc.tol;
    let (gamma, theta) = channels_from_unitary(&u, &ctx)?;
    let mut checks = vec![upper_bound(
        "quantum_gibbs_stochastic",
        check_quantum_gibbs_stochastic(&gamma, &e, &ep, &ladder, &rho_w, &ctx)?,
        0.0,
        tol,
    )];
    let ids = quantum_identities(&rho_s, &rho_w, &gamma, &e, &ep, &ladder, &ctx, tol)?;
    checks.extend(ids.reports.iter().cloned());
    let crooks = quantum_crooks_check(&u, &gamma, &theta, &ctx)?;
    checks.push(upper_bound("quantum_crooks", crooks.distance, 0.0, tol));

    let gamma_sb = system_bath_channel(&u, &rho_w)?;
    let tpm = tpm_check(&gamma_sb, &e, &ep, &bath, &ctx, tol)?;
    checks.push(upper_bound("tpm_rows", tpm.max_row_deviation, 0.0, tol));
    checks.push(upper_bound("tpm_columns", tpm.max_column_deviation, 0.0, tol));
    checks.push(tpm.jarzynski.clone());
    checks.push(upper_bound("unitality", unitality_error(&gamma_sb)?, 0.0, tol));
    let coherent = system_bath_channel(&u, &ladder.momentum_state(0)?)?;
    let psi = random_unitary(n, &mut rng);
    let pure = DensityOperator::pure(&(0..n).map(|i| psi[(i, 0)]).collect::<Vec<_>>())?;
    let out = coherent.apply(pure.matrix())?;
    checks.push(IdentityReport::equality("coherent_weight_purity", (&out * &out).trace().re, 1.0, tol));

    let mut results = json!({
        "max_shift": u.max_shift,
        "eta": ids.eta,
        "quasi_classical_inputs": ids.quasi_classical,
        "crooks": to_value(&crooks)?,
        "tpm_matrix": tpm.matrix,
    });
    if q.unitary != UnitaryKind::Random {
        let k = induced_classical_kernel(&gamma, &e, &ep, &ladder)?;
        let (gc, gibbs) = gibbs_checks("induced_", &k, &ctx, tol);
        checks.extend(gc);
        results["induced_kernel"] = to_value(&kernel_entries(&k))?;
        results["induced_gibbs"] = gibbs;
    }
    Ok(CommandOutput {
        checks,
        results,
        table: None,
    })
}
