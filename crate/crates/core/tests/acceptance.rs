//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so the
//! lines show up in `cargo test` output.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ilsc::beamformer::{array_gain, focused_beam, somp_select, squint_position, BeamformingScheme};
use ilsc::channel::{steering_vector, ChannelTensor, LinkDirection};
use ilsc::dictionary::{build_lattice, DictionaryVariant, PolarDictionary};
use ilsc::estimator::{amp_em_estimate, AmpOptions};
use ilsc::harness::{run_pipeline, EstimatorScheme, ExperimentSpec, RunResult, Sweep, SweepVariable};
use ilsc::locator::{
    coarse_wls, estimate_num_mpc, model_tdoa, refine_gradient, tdoa_gradient, tdoa_loss, ut_angle_grid, VaClass,
    VaRecord,
};
use ilsc::numerics::{complex_normal, frobenius_sq, least_squares, matmul, rng_for, svd, CMatrix, C64};
use ilsc::pilot::{build_pilot_frame, simulate_uplink_with, MeasurementSet, NoiseLevel};
use ilsc::scenario::{SystemConfig, UtPose, SPEED_OF_LIGHT};
use rand::Rng;

/// Far ring against far-field steering vectors.
const FAR_RING_TOL: f64 = 1e-12;
const DICTIONARY_BUILD_SECS: u64 = 10;
/// AMP against oracle-support LS.
const ORACLE_NMSE_DB: f64 = -40.0;
const ORACLE_PASS_PERCENT: usize = 95;
/// Best-to-worst median NMSE separation.
const NMSE_GAP_DB: f64 = 3.0;
const WLS_TOL_M: f64 = 1e-9;
const GRADIENT_REL_TOL: f64 = 1e-6;
const MDL_NOISE_PASS_PERCENT: usize = 95;
const SOMP_RESIDUAL_SLACK: f64 = 1.05;
const SOMP_PASS_PERCENT: usize = 90;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Shared 20-trial desk run feeding criteria 3, 4(d) and 7.
fn shared_run() -> &'static (RunResult, Duration) {
    static RUN: OnceLock<(RunResult, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = ExperimentSpec {
            name: "acceptance".into(),
            trials: 20,
            seed: 7,
            estimators: EstimatorScheme::ALL.to_vec(),
            beamformers: vec![BeamformingScheme::Proposed, BeamformingScheme::Focused, BeamformingScheme::IdealCenter],
            ..Default::default()
        };
        let start = Instant::now();
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let run = run_pipeline(&spec, workers).expect("acceptance run");
        (run, start.elapsed())
    })
}

fn shared_median(scheme: &str, metric: &str) -> f64 {
    let (run, _) = shared_run();
    let row = run.metrics.get(None, scheme, metric).expect("metric cell");
    row.median
}

fn criterion_1() -> Outcome {
    let cfg = SystemConfig::desk();
    let start = Instant::now();
    let dict = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
    let build = start.elapsed();
    let lat = &dict.lattice;
    let mut worst = 0.0f64;
    for m in 0..dict.m() {
        let phi = dict.phi(m);
        for n in 0..lat.n_angles() {
            let a = steering_vector(lat.theta(n), f64::INFINITY, dict.wavelengths[m], cfg.n_bs, cfg.spacing()).unwrap();
            let k = lat.index(n, 0);
            let err = (0..cfg.n_bs).map(|i| (phi[(i, k)] - a[i]).norm()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let mut rng = rng_for(1, &[]);
    let mut common = 0;
    let probes = 40;
    for _ in 0..probes {
        let k = lat.index(rng.random_range(0..lat.n_angles()), rng.random_range(1..lat.n_rings()));
        let (theta, r) = lat.point(k);
        let hits = (0..dict.m())
            .filter(|&m| {
                let a = steering_vector(theta, r, dict.wavelengths[m], cfg.n_bs, cfg.spacing()).unwrap();
                let corr = dict.phi(m).adjoint() * &a;
                let best = (0..corr.len()).max_by(|&i, &j| corr[i].norm().total_cmp(&corr[j].norm())).unwrap();
                best == k
            })
            .count();
        common += usize::from(hits == dict.m());
    }
    outcome(
        worst < FAR_RING_TOL && common == probes && build < Duration::from_secs(DICTIONARY_BUILD_SECS),
        format!(
            "far ring max deviation {worst:.2e}; common support on {common}/{probes} on-lattice paths; \
             desk dictionary built in {:.2}s",
            build.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let (p, k, n, m, sparsity) = (32, 128, 4, 2, 8);
    let trials = 100;
    let mut ok = 0;
    for t in 0..trials {
        let mut rng = rng_for(200 + t, &[]);
        let a: Vec<CMatrix> = (0..m)
            .map(|_| CMatrix::from_fn(p, k, |_, _| complex_normal(&mut rng, 1.0 / p as f64)))
            .collect();
        let mut support: Vec<usize> = Vec::new();
        while support.len() < sparsity {
            let c = rng.random_range(0..k);
            if !support.contains(&c) {
                support.push(c);
            }
        }
        support.sort();
        let x: Vec<CMatrix> = (0..m)
            .map(|_| {
                let mut x = CMatrix::zeros(k, n);
                for &c in &support {
                    for j in 0..n {
                        x[(c, j)] = complex_normal(&mut rng, 1.0);
                    }
                }
                x
            })
            .collect();
        let y: Vec<CMatrix> = a.iter().zip(&x).map(|(a, x)| matmul(a, x)).collect();
        let meas = MeasurementSet { y: y.clone(), noise_var: 0.0, snr_db: f64::INFINITY };
        let opts = AmpOptions { t_iter: 200, damping: 0.5, tol: 1e-9, init_snr_db: 30.0 };
        let Ok(est) = amp_em_estimate(&meas, &a, &opts) else { continue };
        let mut num = 0.0;
        let mut den = 0.0;
        for mm in 0..m {
            let sub = a[mm].select_columns(&support);
            let (ls, _) = least_squares(&sub, &y[mm]).unwrap();
            let mut oracle = CMatrix::zeros(k, n);
            for (i, &c) in support.iter().enumerate() {
                oracle.set_row(c, &ls.row(i));
            }
            num += frobenius_sq(&(&est.hp[mm] - &oracle));
            den += frobenius_sq(&oracle);
        }
        ok += usize::from(10.0 * (num / den).log10() < ORACLE_NMSE_DB);
    }
    outcome(
        ok * 100 >= ORACLE_PASS_PERCENT * trials as usize,
        format!("AMP within {ORACLE_NMSE_DB} dB of oracle LS in {ok}/{trials} trials"),
    )
}

fn criterion_3() -> Outcome {
    let names = ["amp-polar-fd", "omp-polar-fd", "omp-polar-flat", "omp-dft"];
    let med: Vec<f64> = names.iter().map(|s| shared_median(s, "nmse_db")).collect();
    let ordered = med.windows(2).all(|w| w[0] < w[1]);
    let gap = med[3] - med[0];
    let runtime = shared_run().1;
    outcome(
        ordered && gap >= NMSE_GAP_DB,
        format!(
            "median NMSE dB: {} ; best-to-worst gap {gap:.2} dB ; shared run {:.0}s",
            names.iter().zip(&med).map(|(n, v)| format!("{n} {v:.2}")).collect::<Vec<_>>().join(", "),
            runtime.as_secs_f64()
        ),
    )
}

fn va(p: [f64; 2], class: VaClass, theta_ut: f64) -> VaRecord {
    let mut v = VaRecord::new(0, p[1].atan2(p[0]), p[0].hypot(p[1]), 1.0);
    v.x = p[0];
    v.y = p[1];
    v.class = class;
    v.theta_ut = Some(theta_ut);
    v
}

fn criterion_4() -> Outcome {
    let cfg = SystemConfig::desk();
    let lattice = build_lattice(&cfg);
    let mut rng = rng_for(4, &[]);

    // (a) noiseless bearings; the BS stays behind the UT array as in scenario sampling
    let mut worst_a = 0.0f64;
    for _ in 0..50 {
        let (x, y) = (rng.random_range(8.0..30.0), rng.random_range(-10.0..10.0));
        let ut = UtPose { x, y, phi: y.atan2(x) + rng.random_range(-0.9..0.9) };
        let mut vas = vec![va([x, y], VaClass::SubarrayCenter, ut.link_to(0.0, 0.0).theta)];
        for _ in 0..3 {
            let s = [rng.random_range(3.0..20.0), rng.random_range(-12.0..12.0)];
            vas.push(va(s, VaClass::Scatterer, ut.link_to(s[0], s[1]).theta));
        }
        worst_a = match coarse_wls(&vas, &lattice) {
            Ok(fix) => worst_a.max((fix.x - ut.x).hypot(fix.y - ut.y)),
            Err(_) => f64::INFINITY,
        };
    }

    // (b) monotone loss and (c) gradient check on random geometries
    let mut monotone = 0;
    let mut worst_c = 0.0f64;
    let trials_b = 100;
    for _ in 0..trials_b {
        let ut = [rng.random_range(5.0..30.0), rng.random_range(-10.0..10.0)];
        let sc: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(3.0..20.0), rng.random_range(-12.0..12.0)]).collect();
        let meas: Vec<f64> = sc.iter().map(|&s| model_tdoa(ut, s) + rng.random_range(-1e-10..1e-10)).collect();
        let start = [ut[0] + rng.random_range(-2.0..2.0), ut[1] + rng.random_range(-2.0..2.0)];
        let r = refine_gradient(start, &sc, &meas, cfg.t_grd, true);
        monotone += usize::from(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));

        if let Some((gu, gs)) = tdoa_gradient(start, &sc, &meas) {
            let h = 1e-6;
            let loss = |u: [f64; 2], s: &[[f64; 2]]| tdoa_loss(u, s, &meas);
            let mut analytic = Vec::new();
            let mut fd = Vec::new();
            for i in 0..2 {
                let (mut up, mut um) = (start, start);
                up[i] += h;
                um[i] -= h;
                analytic.push(gu[i]);
                fd.push((loss(up, &sc) - loss(um, &sc)) / (2.0 * h));
            }
            for (l, g) in gs.iter().enumerate() {
                for i in 0..2 {
                    let (mut sp, mut sm) = (sc.clone(), sc.clone());
                    sp[l][i] += h;
                    sm[l][i] -= h;
                    analytic.push(g[i]);
                    fd.push((loss(start, &sp) - loss(start, &sm)) / (2.0 * h));
                }
            }
            // norm-wise: components many orders below the gradient norm are FD roundoff
            let diff = analytic.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
            let norm = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
            worst_c = worst_c.max(diff / norm);
        }
    }

    // (d) ordering on the shared desk run
    let r_los = shared_median("los-only", "sq_err_r").sqrt();
    let r_coarse = shared_median("coarse", "sq_err_r").sqrt();
    let r_ref = shared_median("refined", "sq_err_r").sqrt();
    let d = r_ref < r_coarse && r_coarse < r_los;

    let a = worst_a < WLS_TOL_M;
    let b = monotone == trials_b as usize;
    let c = worst_c < GRADIENT_REL_TOL;
    outcome(
        a && b && c && d,
        format!(
            "(a) {} max error {worst_a:.1e} m; (b) {} monotone {monotone}/{trials_b}; (c) {} max rel error {worst_c:.1e}; \
             (d) {} median |r error| refined {r_ref:.3} m, coarse {r_coarse:.3} m, LoS-only {r_los:.3} m",
            pf(a),
            pf(b),
            pf(c),
            pf(d)
        ),
    )
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn criterion_5() -> Outcome {
    let cfg = SystemConfig::desk();
    let lattice = build_lattice(&cfg);
    let frame = build_pilot_frame(&cfg, 5);
    let wavelengths = cfg.wavelengths();
    let ut_grid = ut_angle_grid(cfg.n_ut, 1);
    let mut rng = rng_for(55, &[]);
    let mut exact = 0;
    let per_l: usize = 50;
    for l in 1..=3usize {
        for t in 0..per_l as u64 {
            let mut ut_idx: Vec<usize> = Vec::new();
            while ut_idx.len() < l {
                let i = rng.random_range(2..cfg.n_ut - 2);
                if ut_idx.iter().all(|&j| i.abs_diff(j) >= 2) {
                    ut_idx.push(i);
                }
            }
            let paths: Vec<(usize, f64, C64)> = ut_idx
                .iter()
                .map(|&i| {
                    let k = lattice.index(rng.random_range(0..lattice.n_angles()), rng.random_range(1..lattice.n_rings()));
                    (k, ut_grid[i], complex_normal(&mut rng, 1.0))
                })
                .collect();
            let mats: Vec<CMatrix> = wavelengths
                .iter()
                .map(|&lambda| {
                    let mut h = CMatrix::zeros(cfg.n_bs, cfg.n_ut);
                    for &(k, th_ut, g) in &paths {
                        let (th, r) = lattice.point(k);
                        let a = steering_vector(th, r, lambda, cfg.n_bs, cfg.spacing()).unwrap();
                        let b = steering_vector(th_ut, f64::INFINITY, lambda, cfg.n_ut, cfg.spacing()).unwrap();
                        h += (a * g) * b.transpose();
                    }
                    h
                })
                .collect();
            let h = ChannelTensor::new(LinkDirection::Uplink, mats).unwrap();
            let meas = simulate_uplink_with(&h, &frame, NoiseLevel::TargetSnrDb(f64::INFINITY), &cfg, t).unwrap();
            exact += usize::from(estimate_num_mpc(&meas, cfg.k_smooth(), cfg.n_bs).unwrap() == l);
        }
    }
    let noise_trials = 50;
    let mut zero = 0;
    for _ in 0..noise_trials {
        let y = (0..cfg.m_subcarriers)
            .map(|_| CMatrix::from_fn(cfg.n_meas(), cfg.n_ut, |_, _| complex_normal(&mut rng, 1.0)))
            .collect();
        let meas = MeasurementSet { y, noise_var: 1.0, snr_db: f64::NEG_INFINITY };
        zero += usize::from(estimate_num_mpc(&meas, cfg.k_smooth(), cfg.n_bs).unwrap() == 0);
    }
    outcome(
        exact == 3 * per_l && zero * 100 >= MDL_NOISE_PASS_PERCENT * noise_trials,
        format!("exact L on {exact}/{} noiseless trials; zero on {zero}/{noise_trials} pure-noise trials", 3 * per_l),
    )
}

/// Argmax of the beam gain over a (sinθ, r) grid.
fn grid_argmax(beam: &ilsc::numerics::CVector, lambda: f64, d: f64, sins: (f64, f64, f64), rs: (f64, f64, f64)) -> (f64, f64) {
    let (mut best, mut arg) = (-1.0, (0.0, 0.0));
    let ns = ((sins.1 - sins.0) / sins.2).round() as usize;
    let nr = ((rs.1 - rs.0) / rs.2).round() as usize;
    for i in 0..=ns {
        let s = sins.0 + i as f64 * sins.2;
        for j in 0..=nr {
            let r = rs.0 + j as f64 * rs.2;
            let g = array_gain(beam, r, s.asin(), lambda, d).unwrap();
            if g > best {
                best = g;
                arg = (s, r);
            }
        }
    }
    arg
}

fn criterion_6() -> Outcome {
    let (n, fc, bw, m_sub) = (512usize, 47e9, 5e9, 16usize);
    let lambda_c = SPEED_OF_LIGHT / fc;
    let d = lambda_c / 2.0;
    let (r0, th0) = (7.01, 46.6f64.to_radians());
    let beam = focused_beam(r0, th0, lambda_c, n, d).unwrap();
    // grid cell: half the angular resolution, one percent of the focal range
    let (cell_s, cell_r) = (1.0 / (2.0 * n as f64), r0 / 100.0);
    // search resolution, well below the cell
    let (ds, dr) = (2e-4, 0.01);
    let mut worst = (0.0f64, 0.0f64);
    let mut within = 0;
    for m in 0..m_sub {
        let f = fc - bw / 2.0 + (m as f64 + 0.5) * bw / m_sub as f64;
        let lambda = SPEED_OF_LIGHT / f;
        let (rt, tt) = squint_position(r0, th0, lambda, lambda_c, m).unwrap();
        let c = grid_argmax(&beam, lambda, d, (0.55, 0.85, 2e-3), (4.0, 12.0, 0.1));
        let arg = grid_argmax(&beam, lambda, d, (c.0 - 4e-3, c.0 + 4e-3, ds), (c.1 - 0.3, c.1 + 0.3, dr));
        let es = (arg.0 - tt.sin()).abs();
        let er = (arg.1 - rt).abs();
        worst = (worst.0.max(es), worst.1.max(er));
        within += usize::from(es <= cell_s && er <= cell_r);
    }
    outcome(
        within == m_sub,
        format!(
            "{within}/{m_sub} subcarriers within one cell ({cell_s:.2e} in sin, {cell_r:.3} m); \
             worst offset {:.1e} in sin, {:.3} m",
            worst.0, worst.1
        ),
    )
}

fn criterion_7() -> Outcome {
    let spread = |s: &str| shared_median(s, "se_spread");
    let edge = |s: &str| shared_median(s, "se_edge");
    let (sp, sf, si) = (spread("proposed"), spread("focused"), spread("ideal-center"));
    let (ep, ef, ei) = (edge("proposed"), edge("focused"), edge("ideal-center"));
    outcome(
        sp < sf && sp < si && ep > ef && ep > ei,
        format!(
            "median SE spread proposed {sp:.2} / focused {sf:.2} / ideal-center {si:.2}; \
             median edge SE {ep:.2} / {ef:.2} / {ei:.2} bits/s/Hz"
        ),
    )
}

fn criterion_8() -> Outcome {
    let (n, k, n_rf, m, n_s) = (8, 6, 2, 4, 2);
    let trials = 200;
    let mut ok = 0;
    for t in 0..trials {
        let mut rng = rng_for(800 + t, &[]);
        let book = CMatrix::from_fn(n, k, |_, _| C64::from_polar(1.0 / (n as f64).sqrt(), rng.random_range(0.0..std::f64::consts::TAU)));
        let targets: Vec<CMatrix> = (0..m)
            .map(|_| {
                let h = CMatrix::from_fn(n_s + 1, n, |_, _| complex_normal(&mut rng, 1.0));
                svd(&h).unwrap().v.columns(0, n_s).into_owned()
            })
            .collect();
        let somp = somp_select(&targets, &book, n_rf).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..k {
            for j in i + 1..k {
                let sub = book.select_columns(&[i, j]);
                let res: f64 = targets
                    .iter()
                    .map(|t| {
                        let (x, _) = least_squares(&sub, t).unwrap();
                        frobenius_sq(&(t - matmul(&sub, &x)))
                    })
                    .sum();
                best = best.min(res);
            }
        }
        ok += usize::from(somp.residual <= SOMP_RESIDUAL_SLACK * best);
    }
    outcome(ok * 100 >= SOMP_PASS_PERCENT * trials as usize, format!("SOMP within 5% of the exhaustive optimum in {ok}/{trials} trials"))
}

fn criterion_9() -> Outcome {
    let mut cfg = serde_json::json!({
        "n_bs": 32, "n_ut": 8, "m_subcarriers": 4, "q_bs": 6, "n_rf_bs": 2, "n_rf_ut": 2, "n_streams": 2,
        "t_iter": 15, "l_max": 3
    });
    cfg["lattice"] = serde_json::json!({ "rho": 1, "s_rings": 4, "eta": 5.7 });
    let spec = ExperimentSpec {
        name: "determinism".into(),
        config: cfg,
        trials: 4,
        seed: 99,
        sweep: Some(Sweep { variable: SweepVariable::UplinkSnr, values: vec![10.0, 30.0] }),
        ..Default::default()
    };
    let a = run_pipeline(&spec, 1).expect("run with one worker");
    let b = run_pipeline(&spec, 3).expect("run with three workers");
    let c = run_pipeline(&spec, 1).expect("repeat run");
    let same = |x: &RunResult, y: &RunResult| {
        x.metrics_csv() == y.metrics_csv()
            && x.trials_csv() == y.trials_csv()
            && x.subcarriers_csv() == y.subcarriers_csv()
            && x.failures_csv() == y.failures_csv()
    };
    let rows = a.trials.len();
    outcome(
        same(&a, &b) && same(&a, &c) && rows > 0,
        format!("{rows} per-trial rows; CSV identical across 1/3 workers and repeats: {}", same(&a, &b) && same(&a, &c)),
    )
}

fn main() {
    // runtime budget per criterion; the shared run is charged to the first criterion that needs it
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("dictionary correctness", criterion_1, 60),
        ("estimator oracle equivalence", criterion_2, 60),
        ("NMSE ordering", criterion_3, 600),
        ("localization properties", criterion_4, 600),
        ("MDL exactness", criterion_5, 60),
        ("squint trajectory", criterion_6, 60),
        ("beamforming flatness", criterion_7, 600),
        ("SOMP brute-force equivalence", criterion_8, 60),
        ("determinism", criterion_9, 600),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let pass = o.pass && secs < *budget as f64;
        failed += usize::from(!pass);
        println!(
            "criterion {} ({name}): {} [{secs:.1}s of {budget}s] {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
