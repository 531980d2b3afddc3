//! Acceptance suite: one verdict line per criterion, nonzero exit on any failure.

use std::f64::consts::LN_2;
use std::time::Instant;

use fluctwork::fluctuation::{
    classical_identities, crooks_table, landauer_sweep_grid, landauer_tradeoff, moment_inequalities, IdentityReport,
    LandauerSpec,
};
use fluctwork::io::{run, Options};
use fluctwork::kernel::{
    backward_kernel, random_dyadic_kernel, random_kernel, realize_finite_bath, validate_gibbs_stochastic, BathModel,
    WorkGrid, WorkKernel,
};
use fluctwork::majorize::{
    feasible_lp, feasible_with_shift, optimal_expected_work, FeasibilityProblem, LpStatus, WorkShiftForm,
};
use fluctwork::quantum::{
    build_energy_conserving_unitary, channels_from_unitary, check_quantum_gibbs_stochastic, induced_classical_kernel,
    quantum_crooks_check, quantum_identities, random_quasi_classical_unitary, random_unitary, system_bath_channel,
    tpm_check, unitality_error, CMatrix, DensityOperator, WeightLadder, C64,
};
use fluctwork::thermo::{DiagState, EnergySpectrum, ThermalContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Failures collected by a criterion; empty means pass.
#[derive(Default)]
struct Log {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Log {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn spec(e: &[f64]) -> EnergySpectrum {
    EnergySpectrum::from_energies(e).unwrap()
}

fn find<'a>(r: &'a [IdentityReport], name: &str) -> &'a IdentityReport {
    r.iter().find(|x| x.name == name).unwrap()
}

struct Instance {
    ctx: ThermalContext,
    kernel: WorkKernel,
    state: DiagState,
}

/// `d` in {2,3,4}, energies in [0,2), grid of 2..=9 values spanning [-3,3],
/// beta in [0.1,5), full-support initial state.
fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=4);
    let ctx = ThermalContext::new(rng.random_range(0.1..5.0)).unwrap();
    let e: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0)).collect();
    let ep: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0)).collect();
    let n = rng.random_range(2..=9);
    let mut grid = vec![-3.0, 3.0];
    grid.extend((2..n).map(|_| rng.random_range(-3.0..3.0)));
    let kernel = random_kernel(&spec(&e), &spec(&ep), &WorkGrid::new(grid).unwrap(), &ctx, seed).unwrap();
    let state = DiagState::normalized((0..d).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap();
    Instance { ctx, kernel, state }
}

fn instances() -> Vec<Instance> {
    (0..1000).map(instance).collect()
}

/// Final marginal computed directly from the kernel.
fn final_marginal(state: &DiagState, k: &WorkKernel) -> Vec<f64> {
    let mut q = vec![0.0; k.final_spectrum().len()];
    for ((s, sp, _), p) in k.iter() {
        q[sp] += state.probs()[s] * p;
    }
    q
}

fn free_energy(p: &[f64], e: &EnergySpectrum, ctx: &ThermalContext) -> f64 {
    p.iter()
        .enumerate()
        .map(|(s, &x)| x * e.energy(s) + if x > 0.0 { ctx.temperature() * x * x.ln() } else { 0.0 })
        .sum()
}

fn criterion_1() -> Log {
    let mut log = Log::default();
    let mut worst: f64 = 0.0;
    for beta in [0.1, 1.0, 3.7] {
        let ctx = ThermalContext::new(beta).unwrap();
        for (e, ep) in [
            (vec![0.0, 1.0], vec![0.5, 0.2]),
            (vec![0.0, 0.3, 1.9], vec![1.0, 0.0, 2.5]),
            (vec![0.7, 0.7, 0.1, 2.0], vec![0.0, 3.0, 1.0, 1.0]),
        ] {
            let (e, ep) = (spec(&e), spec(&ep));
            for (name, k) in [
                ("identity", WorkKernel::identity(&e)),
                ("thermal_reset", WorkKernel::thermal_reset(&e, &ctx)),
                ("level_transformation", WorkKernel::level_transformation(&e, &ep).unwrap()),
            ] {
                let r = validate_gibbs_stochastic(&k, &ctx, 1e-12);
                worst = worst.max(r.max_deviation);
                log.require(r.pass, || format!("{name} at beta {beta}: deviation {:.3e}", r.max_deviation));
            }
        }
    }
    log.note(format!("worst deviation {worst:.2e}"));
    log
}

fn criterion_2(all: &[Instance]) -> Log {
    let mut log = Log::default();
    let (mut gibbs, mut rows): (f64, f64) = (0.0, 0.0);
    for (i, x) in all.iter().enumerate() {
        let r = validate_gibbs_stochastic(&x.kernel, &x.ctx, 1e-12);
        // Independent recomputation of the Gibbs sums.
        let mut sums = vec![0.0; x.kernel.final_spectrum().len()];
        for ((s, sp, k), p) in x.kernel.iter() {
            let e = x.kernel.initial().energy(s);
            let ep = x.kernel.final_spectrum().energy(sp);
            sums[sp] += p * (x.ctx.beta() * (ep - e + x.kernel.grid().value(k))).exp();
        }
        let oracle = sums.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        gibbs = gibbs.max(oracle);
        rows = rows.max(r.max_row_deviation);
        log.require(r.pass && oracle < 1e-12, || format!("instance {i}: gibbs {oracle:.3e}, rows {:.3e}", r.max_row_deviation));
        log.require(x.kernel.grid().len() <= 9, || format!("instance {i}: {} work values", x.kernel.grid().len()));
    }
    log.note(format!("{} instances, worst gibbs {gibbs:.2e}, worst row {rows:.2e}", all.len()));
    log
}

fn criterion_3(all: &[Instance]) -> Log {
    let mut log = Log::default();
    let mut worst: f64 = 0.0;
    for (i, x) in all.iter().enumerate() {
        let (k, ctx) = (&x.kernel, &x.ctx);
        let (e, ep) = (k.initial(), k.final_spectrum());
        let beta = ctx.beta();
        let z = e.partition_function(ctx);
        let zp = ep.partition_function(ctx);
        let lib = classical_identities(&x.state, k, ctx, 1e-10).unwrap();
        // Uncancelled sums over f_s = E_s + T ln p_s.
        let p = x.state.probs();
        let q = final_marginal(&x.state, k);
        let f = |s: usize| e.energy(s) + p[s].ln() / beta;
        let fp = |sp: usize| ep.energy(sp) + q[sp].ln() / beta;
        let (mut second, mut jarz) = (0.0, 0.0);
        for ((s, sp, kk), pk) in k.iter() {
            let w = k.grid().value(kk);
            second += p[s] * pk * (beta * (fp(sp) - f(s) + w)).exp();
            jarz += p[s] * pk * (beta * (w - f(s))).exp();
        }
        let thermal = DiagState::gibbs(e, ctx);
        let lib_thermal = classical_identities(&thermal, k, ctx, 1e-10).unwrap();
        let mut standard = 0.0;
        for ((s, _, kk), pk) in k.iter() {
            standard += thermal.probs()[s] * pk * (beta * k.grid().value(kk)).exp();
        }
        let errs = [
            (second - 1.0).abs(),
            (jarz - zp).abs(),
            (standard - zp / z).abs(),
            find(&lib, "second_law_equality").abs_error,
            find(&lib, "generalized_jarzynski").abs_error,
            find(&lib_thermal, "jarzynski").abs_error,
            (find(&lib, "second_law_equality").computed - second).abs(),
        ];
        let m = errs.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(m);
        log.require(m < 1e-10, || format!("instance {i}: errors {errs:?}"));
    }
    log.note(format!("worst error {worst:.2e}"));
    log
}

fn criterion_4(all: &[Instance]) -> Log {
    let mut log = Log::default();
    let (mut top, mut slack_err): (f64, f64) = (f64::MIN, 0.0);
    for (i, x) in all.iter().enumerate() {
        let (k, ctx) = (&x.kernel, &x.ctx);
        let beta = ctx.beta();
        let sums = moment_inequalities(&x.state, k, ctx, 7).unwrap();
        let p = x.state.probs();
        let q = final_marginal(&x.state, k);
        let f = |s: usize| k.initial().energy(s) + p[s].ln() / beta;
        let fp = |sp: usize| k.final_spectrum().energy(sp) + q[sp].ln() / beta;
        let mut oracle = [0.0; 8];
        let mut mean_w = 0.0;
        for ((s, sp, kk), pk) in k.iter() {
            let w = k.grid().value(kk);
            let bv = beta * (fp(sp) - f(s) + w);
            let mut term = 1.0;
            for (n, o) in oracle.iter_mut().enumerate().skip(1) {
                term *= bv / n as f64;
                *o += p[s] * pk * term;
            }
            mean_w += p[s] * pk * w;
        }
        let mut partial = 0.0;
        let mut oracle_partial = [0.0; 8];
        for n in 1..8 {
            partial += oracle[n];
            oracle_partial[n] = partial;
        }
        for (n, sum) in &sums {
            top = top.max(*sum);
            let o = oracle_partial[*n as usize];
            log.require(*sum <= 1e-12, || format!("instance {i}: order {n} sum {sum:.3e}"));
            log.require((sum - o).abs() <= 1e-10 * (1.0 + o.abs()), || format!("instance {i}: order {n} {sum} vs oracle {o}"));
        }
        let slack = free_energy(p, k.initial(), ctx) - free_energy(&q, k.final_spectrum(), ctx) - mean_w;
        let from_moment = -sums[0].1 / beta;
        slack_err = slack_err.max((from_moment - slack).abs());
        log.require((from_moment - slack).abs() < 1e-10, || format!("instance {i}: slack {slack} vs {from_moment}"));
        let lib_slack = find(&classical_identities(&x.state, k, ctx, 1e-10).unwrap(), "second_law_slack").computed;
        log.require((lib_slack - slack).abs() < 1e-10, || format!("instance {i}: reported slack {lib_slack} vs {slack}"));
    }
    log.note(format!("largest partial sum {top:.2e}, slack error {slack_err:.2e}"));
    log
}

fn criterion_5(all: &[Instance]) -> Log {
    let mut log = Log::default();
    let mut worst: f64 = 0.0;
    for (i, x) in all.iter().enumerate() {
        let (k, ctx) = (&x.kernel, &x.ctx);
        let beta = ctx.beta();
        let back = backward_kernel(k, ctx);
        let z = k.initial().partition_function(ctx);
        let zp = k.final_spectrum().partition_function(ctx);
        for ((s, sp, kk), p) in k.iter() {
            let w = k.grid().value(kk);
            let (e, ep) = (k.initial().energy(s), k.final_spectrum().energy(sp));
            let reweighted = p * (beta * (ep - e + w)).exp();
            let kb = back.grid().index_of(-w).unwrap();
            let pb = back.get(sp, s, kb);
            log.require((pb - reweighted).abs() <= 1e-14 * (1.0 + reweighted), || format!("instance {i}: backward entry {pb} vs {reweighted}"));
            let fwd = (-beta * e).exp() / z * p;
            let bwd = (-beta * ep).exp() / zp * pb;
            if fwd > 0.0 {
                let r = (fwd / (bwd * (-beta * w).exp() * zp / z) - 1.0).abs();
                worst = worst.max(r);
                log.require(r < 1e-10, || format!("instance {i}: ratio residual {r:.3e}"));
            }
        }
        let table = crooks_table(k, ctx);
        log.require(table.max_row_residual < 1e-10, || format!("instance {i}: table residual {:.3e}", table.max_row_residual));
        let g = validate_gibbs_stochastic(&back, ctx, 1e-12);
        log.require(g.pass, || format!("instance {i}: backward deviation {:.3e}", g.max_deviation));
        let twice = backward_kernel(&back, ctx);
        log.require(twice == *k && twice.max_abs_difference(k) == 0.0, || format!("instance {i}: double backward differs"));
    }
    log.note(format!("worst ratio residual {worst:.2e}; double backward exact"));
    log
}

fn criterion_6() -> Log {
    let mut log = Log::default();
    for t in [0.5, 1.0, 2.0] {
        let ctx = ThermalContext::new(1.0 / t).unwrap();
        let grid = landauer_sweep_grid(0.0, &ctx).unwrap();
        let step = grid[1] - grid[0];
        let curve = landauer_tradeoff(0.0, &ctx, &grid).unwrap();
        let best = curve.least_cost.unwrap();
        let target = -t * LN_2;
        log.require((best.w0 - target).abs() <= step && (best.w1.unwrap() - target).abs() <= step, || {
            format!("T={t}: least cost at ({}, {:?}), expected {target}", best.w0, best.w1)
        });
        log.require(curve.all_negative, || format!("T={t}: feasible point with nonnegative work"));
        for pnt in curve.points.iter().filter(|p| p.feasible) {
            let w1 = pnt.w1.unwrap();
            let residual = ((pnt.w0 / t).exp() + (w1 / t).exp() - 1.0).abs();
            log.require(residual < 1e-12 && pnt.w0 < 0.0 && w1 < 0.0, || format!("T={t}: point ({}, {w1}) residual {residual:.2e}", pnt.w0));
            // Analytic bound: any feasible point has mean work at most -T ln 2.
            log.require(pnt.mean_work.unwrap() <= target + 1e-12, || format!("T={t}: mean work above -T ln 2"));
        }
    }
    let ctx = ThermalContext::new(1.0).unwrap();
    for eps in [1e-1, 1e-3, 1e-6] {
        let s = LandauerSpec::symmetric(eps, &ctx).unwrap();
        let expected = (1.0 / (2.0 * eps)).ln();
        log.require((s.wbar0 - expected).abs() < 1e-10 && (s.wbar1 - expected).abs() < 1e-10, || {
            format!("eps {eps}: failure work {} vs {expected}", s.wbar0)
        });
        // Both branch constraints, solved independently.
        let fail = (s.wbar0.exp() + s.wbar1.exp()) * eps;
        let succ = (s.w0.exp() + s.w1.exp()) * (1.0 - eps);
        log.require((fail - 1.0).abs() < 1e-10 && (succ - 1.0).abs() < 1e-10, || format!("eps {eps}: constraints {fail}, {succ}"));
    }
    log.note("least cost at w0 = w1 = -T ln 2 for T in {0.5, 1, 2}".to_string());
    log
}

fn criterion_7() -> Log {
    let mut log = Log::default();
    let ctx = ThermalContext::new(1.0).unwrap();
    let bath = BathModel::canonical(&ctx, 20).unwrap();
    let tol = (-8f64).exp2();
    let mut worst: f64 = 0.0;
    let mut boundary: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let iu: Vec<i64> = (0..2).map(|_| rng.random_range(0..4)).collect();
        let fu: Vec<i64> = (0..2).map(|_| rng.random_range(0..4)).collect();
        let k = random_dyadic_kernel(&iu, &fu, LN_2, &ctx, 8, seed).unwrap();
        let r = realize_finite_bath(&k, &bath, &ctx, 8).unwrap();
        log.require(r.check_bijection().is_ok(), || format!("seed {seed}: {:?}", r.check_bijection()));
        log.require(r.conserves_energy(), || format!("seed {seed}: energy not conserved"));
        log.require(r.counting_identity_holds(), || format!("seed {seed}: counting identity fails"));
        let err = r.induced.max_abs_difference(&k);
        worst = worst.max(err);
        boundary = boundary.max(r.boundary_fraction);
        log.require(err <= tol, || format!("seed {seed}: induced error {err:.3e}"));
    }
    log.note(format!("100 kernels, worst induced error {worst:.2e}, largest boundary fraction {boundary:.3}"));
    log
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> DiagState {
    DiagState::normalized((0..d).map(|_| rng.random_range(0.02..1.0)).collect()).unwrap()
}

fn criterion_8() -> Log {
    let mut log = Log::default();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut yes, mut no) = (0, 0);
    for i in 0..500 {
        let beta = rng.random_range(0.2..3.0);
        let ctx = ThermalContext::new(beta).unwrap();
        let e: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.5)).collect();
        let ep: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.5)).collect();
        let gamma: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut alpha: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: f64 = (0..2).map(|s| (-beta * (e[s] + gamma[s])).exp()).sum();
        let zp: f64 = (0..2).map(|s| (-beta * (ep[s] + alpha[s])).exp()).sum();
        let c = (zp / z).ln() / beta;
        alpha.iter_mut().for_each(|a| *a += c);
        let rho = random_state(&mut rng, 2);
        let sigma = random_state(&mut rng, 2);
        let shift = WorkShiftForm::new(gamma, alpha).unwrap();
        let (es, eps) = (spec(&e), spec(&ep));
        let curves = feasible_with_shift((&rho, &es), (&sigma, &eps), &shift, &ctx).unwrap();
        let prob = FeasibilityProblem::from_shift_form(ctx, (rho.clone(), es.clone()), (sigma.clone(), eps.clone()), &shift).unwrap();
        let lp = feasible_lp(&prob).unwrap().status == LpStatus::Feasible;
        log.require(curves == lp, || format!("instance {i}: curves {curves}, lp {lp}"));
        if lp {
            yes += 1;
            let opt = optimal_expected_work(&prob).unwrap();
            let bound = free_energy(rho.probs(), &es, &ctx) - free_energy(sigma.probs(), &eps, &ctx);
            let w = opt.objective.unwrap();
            log.require(w <= bound + 1e-9, || format!("instance {i}: <w> = {w} exceeds {bound}"));
        } else {
            no += 1;
        }
    }
    log.require(yes > 50 && no > 50, || format!("unbalanced sample: {yes} feasible, {no} infeasible"));

    let ctx = ThermalContext::new(1.0).unwrap();
    let e = spec(&[0.0, 0.0]);
    let mut prev = f64::NEG_INFINITY;
    for r in 0..6 {
        let h = 0.3 / (1u32 << r) as f64;
        let grid: Vec<f64> = (0..=(3.0 / h).round() as i64).map(|k| -(k as f64) * h).collect();
        let prob = FeasibilityProblem::new(
            ctx,
            (DiagState::new(vec![0.5, 0.5]).unwrap(), e.clone()),
            (DiagState::new(vec![1.0, 0.0]).unwrap(), e.clone()),
            WorkGrid::new(grid).unwrap(),
        )
        .unwrap()
        .with_closure();
        let w = optimal_expected_work(&prob).unwrap().objective.unwrap();
        log.require((w + LN_2).abs() <= h && w <= -LN_2 + 1e-9 && w >= prev - 1e-12, || {
            format!("grid step {h}: erasure optimum {w}")
        });
        prev = w;
    }
    log.note(format!("{yes} feasible / {no} infeasible agree; erasure optimum {prev:.6} at step {:.4}", 0.3 / 32.0));
    log
}

/// Normalized random vector supported on `range`.
fn random_vector(rng: &mut ChaCha8Rng, dim: usize, range: std::ops::Range<usize>) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    for i in range {
        v[i] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter().map(|z| z / n).collect()
}

fn criterion_9() -> Log {
    let mut log = Log::default();
    let mut worst = [0.0f64; 8];
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let ctx = ThermalContext::new(rng.random_range(0.3..2.0)).unwrap();
        let db = if seed % 2 == 0 { 2 } else { 3 };
        let l = if seed % 4 < 2 { 16 } else { 32 };
        let ints = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0..3) as f64).collect() };
        let (e, ep, b) = (spec(&ints(&mut rng, 2)), spec(&ints(&mut rng, 2)), spec(&ints(&mut rng, db)));
        let ladder = WeightLadder::new(l, 1.0).unwrap();
        let u = build_energy_conserving_unitary(&random_unitary(2 * db, &mut rng), &e, &ep, &b, &ladder).unwrap();
        let g = u.max_shift;
        let (gamma, theta) = channels_from_unitary(&u, &ctx).unwrap();
        let n0 = rng.random_range(g..l - g);
        let coherent_w = DensityOperator::pure(&random_vector(&mut rng, l, g..l - g)).unwrap();
        let mixed_w = DensityOperator::from_diag(
            &(0..l).map(|n| if n == n0 || n == l - 1 - n0 { 0.5 } else { 0.0 }).collect::<Vec<_>>(),
        )
        .unwrap();
        let diag_s = DensityOperator::from_diag(random_state(&mut rng, 2).probs()).unwrap();
        let coherent_s = DensityOperator::pure(&random_vector(&mut rng, 2, 0..2)).unwrap();
        for (wname, rho_w) in [("coherent", &coherent_w), ("diagonal", &mixed_w)] {
            let r1 = check_quantum_gibbs_stochastic(&gamma, &e, &ep, &ladder, rho_w, &ctx).unwrap();
            worst[0] = worst[0].max(r1);
            log.require(r1 < 1e-8, || format!("seed {seed} {wname} weight: quantum Gibbs-stochastic deviation {r1:.3e}"));
            for (sname, rho_s) in [("diagonal", &diag_s), ("coherent", &coherent_s)] {
                let q = quantum_identities(rho_s, rho_w, &gamma, &e, &ep, &ladder, &ctx, 1e-8).unwrap();
                let expect_cq = wname == "diagonal" && (sname == "diagonal" || e.energy(0) == e.energy(1));
                log.require(q.quasi_classical == expect_cq, || format!("seed {seed}: quasi-classical flag"));
                for rep in &q.reports {
                    let slot = if rep.name.starts_with("classical") { 2 } else { 1 };
                    worst[slot] = worst[slot].max(rep.abs_error);
                    log.require(rep.pass, || format!("seed {seed} {wname}/{sname}: {} error {:.3e}", rep.name, rep.abs_error));
                }
                log.require(q.reports.len() == if expect_cq { 4 } else { 2 }, || format!("seed {seed}: report count"));
            }
        }
        let c = quantum_crooks_check(&u, &gamma, &theta, &ctx).unwrap();
        worst[3] = worst[3].max(c.distance);
        log.require(c.distance < 1e-9, || format!("seed {seed}: crooks distance {:.3e}", c.distance));

        let gsb = system_bath_channel(&u, &mixed_w).unwrap();
        let tpm = tpm_check(&gsb, &e, &ep, &b, &ctx, 1e-9).unwrap();
        worst[4] = worst[4].max(tpm.max_row_deviation.max(tpm.max_column_deviation));
        worst[5] = worst[5].max(tpm.jarzynski.abs_error);
        log.require(tpm.max_row_deviation < 1e-10 && tpm.max_column_deviation < 1e-10, || format!("seed {seed}: tpm not doubly stochastic"));
        log.require(tpm.jarzynski.pass, || format!("seed {seed}: tpm jarzynski error {:.3e}", tpm.jarzynski.abs_error));
        let unital = unitality_error(&system_bath_channel(&u, &coherent_w).unwrap()).unwrap();
        worst[6] = worst[6].max(unital);
        log.require(unital < 1e-10, || format!("seed {seed}: unitality error {unital:.3e}"));
        let coherent = system_bath_channel(&u, &ladder.momentum_state(rng.random_range(0..l)).unwrap()).unwrap();
        let psi = DensityOperator::pure(&random_vector(&mut rng, 2 * db, 0..2 * db)).unwrap();
        let out = coherent.apply(psi.matrix()).unwrap();
        let purity_err = ((&out * &out).trace().re - 1.0).abs();
        worst[7] = worst[7].max(purity_err);
        log.require(purity_err < 1e-8, || format!("seed {seed}: purity error {purity_err:.3e}"));
    }
    log.note(format!(
        "worst: gibbs {:.1e}, identities {:.1e}, classical-quantum {:.1e}, crooks {:.1e}, TPM {:.1e}/{:.1e}, unital {:.1e}, purity {:.1e}",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5], worst[6], worst[7]
    ));
    log
}

fn criterion_10() -> Log {
    let mut log = Log::default();
    let mut worst: f64 = 0.0;
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let ctx = ThermalContext::new(rng.random_range(0.3..2.0)).unwrap();
        let db = 2 + (seed % 2) as usize;
        let ints = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0..3) as f64).collect() };
        let (e, ep, b) = (spec(&ints(&mut rng, 2)), spec(&ints(&mut rng, 2)), spec(&ints(&mut rng, db)));
        let ladder = WeightLadder::new(16, 1.0).unwrap();
        let v = random_quasi_classical_unitary(2, db, &mut rng);
        let u = build_energy_conserving_unitary(&v, &e, &ep, &b, &ladder).unwrap();
        let (gamma, _) = channels_from_unitary(&u, &ctx).unwrap();
        let k = induced_classical_kernel(&gamma, &e, &ep, &ladder).unwrap();
        let g = validate_gibbs_stochastic(&k, &ctx, 1e-8);
        log.require(g.pass, || format!("seed {seed}: induced kernel deviation {:.3e}", g.max_deviation));
        let state = random_state(&mut rng, 2);
        let rho = DensityOperator::from_diag(state.probs()).unwrap();
        let rho_w = ladder.position_state(ladder.mid()).unwrap();
        let q = quantum_identities(&rho, &rho_w, &gamma, &e, &ep, &ladder, &ctx, 1e-8).unwrap();
        let c = classical_identities(&state, &k, &ctx, 1e-8).unwrap();
        for (qn, cn) in [
            ("classical_quantum_second_law", "second_law_equality"),
            ("classical_quantum_jarzynski", "generalized_jarzynski"),
            ("quantum_second_law", "second_law_equality"),
            ("quantum_jarzynski", "generalized_jarzynski"),
        ] {
            let d = (find(&q.reports, qn).computed - find(&c, cn).computed).abs();
            worst = worst.max(d);
            log.require(d < 1e-8, || format!("seed {seed}: {qn} vs {cn} differ by {d:.3e}"));
        }
    }
    // A coherence-generating unitary must be rejected, not silently dephased.
    let e = spec(&[0.0, 1.0]);
    let ladder = WeightLadder::new(8, 1.0).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = CMatrix::from_fn(2, 2, |r, c| C64::new(if r == 1 && c == 1 { -h } else { h }, 0.0));
    let u = build_energy_conserving_unitary(&hadamard, &e, &e, &spec(&[0.0]), &ladder).unwrap();
    let (gamma, _) = channels_from_unitary(&u, &ThermalContext::new(1.0).unwrap()).unwrap();
    log.require(induced_classical_kernel(&gamma, &e, &e, &ladder).is_err(), || "coherent channel accepted".into());
    log.note(format!("30 channels, worst classical/quantum gap {worst:.2e}"));
    log
}

fn criterion_11() -> Log {
    let mut log = Log::default();
    let docs = [
        ("identities", Some(include_str!("../../../problems/random_kernel.json"))),
        ("sample", Some(include_str!("../../../problems/random_kernel.json"))),
        ("backward", Some(include_str!("../../../problems/random_kernel.json"))),
        ("realize", Some(include_str!("../../../problems/dyadic.json"))),
        ("optimal-work", Some(include_str!("../../../problems/erasure.json"))),
        ("feasible", Some(include_str!("../../../problems/shift_form.json"))),
        ("quantum", Some(include_str!("../../../problems/quantum.json"))),
        ("quantum", Some(include_str!("../../../problems/quantum_classical.json"))),
        ("landauer", None),
        ("demo", None),
    ];
    for (cmd, doc) in docs {
        for csv in [false, true] {
            let opts = Options {
                sweep: true,
                csv,
                samples: Some(20_000),
                ..Options::default()
            };
            let a = run(cmd, &opts, doc);
            let b = run(cmd, &opts, doc);
            log.require(a.exit_code == 0, || format!("{cmd}: exit {} ({:?})", a.exit_code, a.error));
            log.require(a.text == b.text && a.csv == b.csv, || format!("{cmd}: output differs between runs"));
            log.require(a.report.as_ref().is_some_and(|r| r.timestamp.is_none()), || format!("{cmd}: timestamp present"));
        }
    }
    let stamped = run("landauer", &Options { timestamp: true, ..Options::default() }, None);
    log.require(stamped.report.is_some_and(|r| r.timestamp.is_some()), || "timestamp flag ignored".into());
    log.note("10 seeded runs repeated: byte-identical".to_string());
    log
}

fn main() {
    let start = Instant::now();
    let all = instances();
    let shared = start.elapsed();
    let all = &all;
    type Criterion<'a> = (u32, &'a str, Box<dyn Fn() -> Log + Send + Sync + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "Gibbs-stochastic validation of analytic kernels", Box::new(criterion_1)),
        (2, "generator soundness", Box::new(move || criterion_2(all))),
        (3, "second-law equality and Jarzynski identities", Box::new(move || criterion_3(all))),
        (4, "moment hierarchy", Box::new(move || criterion_4(all))),
        (5, "Crooks relations and backward kernels", Box::new(move || criterion_5(all))),
        (6, "Landauer erasure", Box::new(criterion_6)),
        (7, "finite-bath realization", Box::new(criterion_7)),
        (8, "thermo-majorization and LP agreement", Box::new(criterion_8)),
        (9, "quantum layer", Box::new(criterion_9)),
        (10, "quantum-classical integration", Box::new(criterion_10)),
        (11, "determinism", Box::new(criterion_11)),
    ];
    let results: Vec<(u32, &str, std::thread::Result<Log>, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(n, name, f)| {
                scope.spawn(move || {
                    let t = Instant::now();
                    let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
                    (*n, *name, r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    println!("acceptance: 1000 shared kernel instances generated in {:.2}s", shared.as_secs_f64());
    let mut failed = 0;
    for (n, name, r, secs) in results {
        match r {
            Ok(log) if log.failures.is_empty() => {
                println!("criterion {n:>2} PASS ({secs:.1}s) {name}: {}", log.notes.join("; "));
            }
            Ok(log) => {
                failed += 1;
                println!(
                    "criterion {n:>2} FAIL ({secs:.1}s) {name}: {} failures, first: {}",
                    log.failures.len(),
                    log.failures[0]
                );
            }
            Err(_) => {
                failed += 1;
                println!("criterion {n:>2} FAIL ({secs:.1}s) {name}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 11 criteria pass");
}
