//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Oracles used here are written
//! independently of the library routines they check.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use grouped_sensing::bounds::{validate_gram_concentration, validate_lemma1};
use grouped_sensing::gamma::{
    norm_2to1_exact_real, norm_2to1_lower, norm_2to1_upper_sdp, penalty_gamma, GammaMode, GammaOptions,
};
use grouped_sensing::grouping::{contiguous_1d, draw_uniform, singletons, strided_1d, SampleSet};
use grouped_sensing::harness::run_cli;
use grouped_sensing::harness::signal::{draw_coefficients, draw_support, SupportModel};
use grouped_sensing::harness::sweep::{find_min_m, recovery_trial, MMin, SweepConfig};
use grouped_sensing::operators::{normalize_rows, BasisKind, MeasurementEnsemble, OrthonormalBasis, SupportSet};
use grouped_sensing::recovery::{basis_pursuit, dual_certificate, nre, sign_pattern, RecoveryProblem, SolverOptions};
use grouped_sensing::{CMatrix, C64};
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dft_ensemble(n: usize) -> MeasurementEnsemble {
    let v = OrthonormalBasis::new(BasisKind::Identity, n).unwrap();
    let u = OrthonormalBasis::new(BasisKind::Dft1D, n).unwrap();
    MeasurementEnsemble::new(&v, &u).unwrap()
}

fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

fn gaussian(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

/// Sylvester Hadamard matrix scaled to be orthogonal.
fn hadamard(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    h / (n as f64).sqrt()
}

/// Maximum of `‖Mᵀs‖₂` over all `2^g` sign vectors, by plain enumeration.
fn brute_force_2to1(m: &DMatrix<f64>) -> f64 {
    let g = m.nrows();
    (0u32..1 << g)
        .map(|mask| {
            let s = DVector::from_fn(g, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
            (m.transpose() * s).norm()
        })
        .fold(0.0, f64::max)
}

/// Primal maximization of `‖Mf‖₁` over unit `f`: random starts, then the
/// ascent `f ← Mᵀ sign(Mf) / ‖·‖` followed by small random perturbations.
fn sphere_ascent_2to1(m: &DMatrix<f64>, starts: usize, r: &mut ChaCha8Rng) -> f64 {
    let obj = |f: &DVector<f64>| (m * f).abs().sum();
    let mut best = 0.0f64;
    for _ in 0..starts {
        let mut f = DVector::from_fn(m.ncols(), |_, _| r.sample::<f64, _>(StandardNormal));
        f /= f.norm();
        for _ in 0..200 {
            let s = (m * &f).map(|x| if x >= 0.0 { 1.0 } else { -1.0 });
            let next = m.transpose() * s;
            if next.norm() == 0.0 {
                break;
            }
            f = &next / next.norm();
        }
        let mut step = 0.05;
        let mut val = obj(&f);
        while step > 1e-7 {
            let mut trial = &f + DVector::from_fn(m.ncols(), |_, _| step * r.sample::<f64, _>(StandardNormal));
            trial /= trial.norm();
            let v = obj(&trial);
            if v > val {
                f = trial;
                val = v;
            } else {
                step *= 0.9;
            }
        }
        best = best.max(val);
    }
    best
}

fn crit1_endpoints() -> Outcome {
    let opts = GammaOptions::default();
    let mut notes = Vec::new();
    // real ensemble: Hadamard rows with V = identity
    let h = OrthonormalBasis::custom(real_to_complex(&hadamard(16))).unwrap();
    let id = OrthonormalBasis::new(BasisKind::Identity, 16).unwrap();
    let e = MeasurementEnsemble::new(&id, &h).unwrap();
    let dft = dft_ensemble(16);
    for (name, ens) in [("hadamard", &e), ("dft", &dft)] {
        for g in [2usize, 4, 8] {
            let gs = strided_1d(16, g).unwrap();
            // one column: every normalized row is the same unit scalar up to sign/phase
            let equal = penalty_gamma(ens, &SupportSet::new(vec![3], 16).unwrap(), &gs, &opts).unwrap();
            ensure(
                equal.lower == g as f64 && equal.upper == g as f64 && equal.value() == g as f64,
                format!("{name} g={g}: equal rows gave {equal:?}"),
            )?;
            // all columns: rows of a unitary matrix are orthonormal
            let ortho = penalty_gamma(ens, &SupportSet::full(16), &gs, &opts).unwrap();
            let root = (g as f64).sqrt();
            ensure(
                (ortho.lower - root).abs() <= 1e-9 && (ortho.upper - root).abs() <= 1e-9,
                format!("{name} g={g}: orthonormal rows gave {ortho:?}"),
            )?;
        }
        notes.push(name);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let orth = real_to_complex(&DMatrix::from_row_slice(2, 2, &[s, s, s, -s]));
    ensure((norm_2to1_exact_real(&orth, 20).unwrap() - 2f64.sqrt()).abs() <= 1e-12, "2x2 orthonormal")?;
    let same = real_to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]));
    ensure(norm_2to1_exact_real(&same, 20).unwrap() == 2.0, "2x2 equal rows")?;
    Ok(format!("g ∈ {{2,4,8}} on {}", notes.join(" and ")))
}

fn crit2_sandwich() -> Outcome {
    let mut r = rng(2);
    let kp = (PI / 2.0).sqrt();
    let mut worst_ratio = 0.0f64;
    for instance in 0..100 {
        let g = r.random_range(2..=8);
        let t = r.random_range(2..=16);
        let m = normalize_rows(&real_to_complex(&gaussian(g, t, &mut r))).matrix;
        let m_real = m.map(|z| z.re);
        let exact = norm_2to1_exact_real(&m, 20).unwrap();
        let oracle = brute_force_2to1(&m_real);
        ensure((exact - oracle).abs() <= 1e-10 * oracle, format!("instance {instance}: exact {exact} vs {oracle}"))?;
        let lower = norm_2to1_lower(&m, 64, &mut r);
        let sdp = norm_2to1_upper_sdp(&m, &mut r);
        ensure(
            lower <= exact * (1.0 + 1e-12) && exact <= sdp.upper * (1.0 + 1e-12),
            format!("instance {instance} (g={g}, |T|={t}): {lower} ≤ {exact} ≤ {} violated", sdp.upper),
        )?;
        let ratio = sdp.upper / exact;
        ensure(ratio <= kp + 1e-9, format!("instance {instance}: upper/exact = {ratio}"))?;
        worst_ratio = worst_ratio.max(ratio);
    }
    Ok(format!("100 instances, max upper/exact = {worst_ratio:.6} ≤ {kp:.6}"))
}

fn crit3_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let m = gaussian(3, 5, &mut r);
        let exact = norm_2to1_exact_real(&real_to_complex(&m), 20).unwrap();
        let oracle = sphere_ascent_2to1(&m, 200, &mut r);
        let diff = (exact - oracle).abs();
        ensure(diff <= 1e-3, format!("matrix {i}: exact {exact} vs sphere oracle {oracle}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("20 matrices, max |exact − oracle| = {worst:.2e}"))
}

/// `min ‖c‖₁ s.t. A c = y` for real `A` (m × n) via the standard-form LP
/// over `c = p − q`, `p, q ≥ 0`, by enumerating every basis of `[A, −A]`.
fn lp_vertex_oracle(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    let full = DMatrix::from_fn(m, 2 * n, |i, j| if j < n { a[(i, j)] } else { -a[(i, j - n)] });
    let mut best = f64::INFINITY;
    let mut cols: Vec<usize> = (0..m).collect();
    loop {
        let b = full.select_columns(&cols);
        if let Some(x) = b.clone().lu().solve(y) {
            let consistent = (&b * &x - y).norm() <= 1e-9 * (1.0 + y.norm());
            if consistent && x.iter().all(|&v| v >= -1e-11) {
                best = best.min(x.iter().map(|v| v.max(0.0)).sum());
            }
        }
        // next m-combination of 0..2n in lexicographic order
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if cols[i] < 2 * n - m + i {
                break;
            }
        }
        cols[i] += 1;
        for k in i + 1..m {
            cols[k] = cols[k - 1] + 1;
        }
    }
}

fn crit4_lp() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for inst in 0..25 {
        let q = gaussian(12, 12, &mut r).qr().q();
        let rows = index::sample(&mut r, 12, 6).into_vec();
        let a = q.select_rows(&rows);
        let support = index::sample(&mut r, 12, 2).into_vec();
        let mut c0 = DVector::zeros(12);
        for &j in &support {
            c0[j] = r.random_range(-1.0..=1.0);
        }
        let y = &a * &c0;
        let oracle = lp_vertex_oracle(&a, &y);
        let p =
            RecoveryProblem::new(real_to_complex(&a), y.map(|v| C64::new(v, 0.0)), SolverOptions::default()).unwrap();
        let res = basis_pursuit(&p);
        let diff = (res.objective - oracle).abs();
        ensure(res.converged, format!("instance {inst} did not converge"))?;
        ensure(diff <= 1e-6 * oracle.max(1.0), format!("instance {inst}: solver {} vs LP {oracle}", res.objective))?;
        worst = worst.max(diff);
    }
    Ok(format!("25 instances, max |objective − LP| = {worst:.2e}"))
}

fn crit5_certificate() -> Outcome {
    let n = 64;
    let e = dft_ensemble(n);
    let structures = [singletons(n).unwrap(), strided_1d(n, 4).unwrap(), contiguous_1d(n, 4).unwrap()];
    let mut r = rng(5);
    let (mut holds, mut worst) = (0, 0.0f64);
    for inst in 0..500 {
        let gs = &structures[inst % 3];
        let k = r.random_range(1..=8);
        let m = 4 * r.random_range(4..=12);
        let t = draw_support(n, k, &SupportModel::Unrestricted, &mut r).unwrap();
        let c0 = draw_coefficients(&t, &mut r);
        let omega = draw_uniform(gs, m, &mut r).unwrap();
        let cert = dual_certificate(&e, &omega, &t, &sign_pattern(&c0, &t)).unwrap();
        if !cert.holds {
            continue;
        }
        holds += 1;
        let res = basis_pursuit(&RecoveryProblem::from_ensemble(&e, &omega, &c0, SolverOptions::default()).unwrap());
        let err = nre(&c0, &res.c_hat).unwrap();
        ensure(err <= 1e-4, format!("instance {inst}: certificate holds but NRE = {err}"))?;
        worst = worst.max(err);
    }
    ensure(holds >= 100, format!("only {holds} certified instances"))?;
    Ok(format!("{holds}/500 certified, max NRE {worst:.2e}"))
}

fn crit6_concentration() -> Outcome {
    let n = 256;
    let e = dft_ensemble(n);
    let mut r = rng(6);
    let t = draw_support(n, 8, &SupportModel::Unrestricted, &mut r).unwrap();
    let gs = strided_1d(n, 4).unwrap();
    let mut rates = Vec::new();
    for m in [32, 64, 128, 256] {
        let stats = validate_gram_concentration(&e, &t, &gs, m, 500, &mut r).unwrap();
        rates.push((m, stats.fail_rate, stats.fail_rate_sigma()));
    }
    for w in rates.windows(2) {
        let ((m0, f0, s0), (m1, f1, s1)) = (w[0], w[1]);
        let slack = 2.0 * (s0 * s0 + s1 * s1).sqrt();
        ensure(f1 <= f0 + slack, format!("fail rate rose from {f0} at m={m0} to {f1} at m={m1}"))?;
    }
    ensure(rates[3].1 == 0.0, format!("fail rate at m=256 is {}", rates[3].1))?;
    let shown: Vec<String> = rates.iter().map(|(m, f, _)| format!("m={m}: {f:.3}")).collect();
    Ok(format!("fail rates {}", shown.join(", ")))
}

fn crit7_lemma1() -> Outcome {
    let n = 64;
    let e = dft_ensemble(n);
    let gs = strided_1d(n, 4).unwrap();
    let mut r = rng(7);
    let mut notes = Vec::new();
    for _ in 0..5 {
        let t = draw_support(n, 4, &SupportModel::Unrestricted, &mut r).unwrap();
        let t0 = t.complement()[0];
        let check = validate_lemma1(&e, &t, &gs, 16, t0, 2000, &mut r).unwrap();
        ensure(
            check.empirical_mean <= check.bound,
            format!("support {:?}: E‖v⁰‖² ≈ {} > bound {}", t.indices(), check.empirical_mean, check.bound),
        )?;
        notes.push(format!("{:.4}≤{:.4}", check.empirical_mean, check.bound));
    }
    Ok(format!("5 supports: {}", notes.join(", ")))
}

fn crit8_fig1() -> Outcome {
    let (n, g, k) = (220, 11, 11);
    let e = dft_ensemble(n);
    let strided = strided_1d(n, g).unwrap();
    let contiguous = contiguous_1d(n, g).unwrap();
    let model = SupportModel::SubbandChannels { channel_count: 2, channel_width_frac: 0.05 };
    let mut cfg = SweepConfig::new(n, g, 20, 0.95, 8);
    cfg.m_grid = SweepConfig::grid(g, n);
    cfg.early_decision = true;
    let opts = GammaOptions { seed: 8, ..Default::default() };
    let (mut gamma_wins, mut m_wins) = (0, 0);
    let mut rows = Vec::new();
    for draw in 0..10u64 {
        let mut r = rng(800 + draw);
        let t = draw_support(n, k, &model, &mut r).unwrap();
        let c0 = draw_coefficients(&t, &mut r);
        let g_s = penalty_gamma(&e, &t, &strided, &opts).unwrap().value();
        let g_c = penalty_gamma(&e, &t, &contiguous, &opts).unwrap().value();
        let key = format!("draw{draw}");
        let m_s = find_min_m(&e, &strided, &t, &c0, &cfg, &key).unwrap().m_min;
        let m_c = find_min_m(&e, &contiguous, &t, &c0, &cfg, &key).unwrap().m_min;
        let as_num = |m: MMin| m.value().unwrap_or(n + 1);
        gamma_wins += usize::from(g_c > g_s);
        m_wins += usize::from(as_num(m_c) >= as_num(m_s));
        rows.push(format!("γ {g_s:.2}/{g_c:.2} M {m_s}/{m_c}"));
    }
    println!("    strided/contiguous per draw: {}", rows.join("; "));
    ensure(gamma_wins >= 8, format!("γ(contiguous) > γ(strided) in only {gamma_wins}/10 draws"))?;
    ensure(m_wins >= 7, format!("m_min(contiguous) ≥ m_min(strided) in only {m_wins}/10 draws"))?;
    Ok(format!("γ ordering {gamma_wins}/10, M ordering {m_wins}/10"))
}

fn two_proportion_z(s1: usize, s2: usize, trials: usize) -> f64 {
    let (p1, p2) = (s1 as f64 / trials as f64, s2 as f64 / trials as f64);
    let pooled = (s1 + s2) as f64 / (2 * trials) as f64;
    let se = (pooled * (1.0 - pooled) * 2.0 / trials as f64).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

fn crit9_singletons() -> Outcome {
    let n = 64;
    let e = dft_ensemble(n);
    let gs = singletons(n).unwrap();
    let mut r = rng(9);
    let t = draw_support(n, 6, &SupportModel::Unrestricted, &mut r).unwrap();
    let c0 = draw_coefficients(&t, &mut r);
    for mode in [GammaMode::Auto, GammaMode::Sandwich, GammaMode::Full] {
        let est = penalty_gamma(&e, &t, &gs, &GammaOptions { mode, ..Default::default() }).unwrap();
        ensure(est.value() == 1.0 && est.lower == 1.0 && est.upper == 1.0, format!("{mode:?}: {est:?}"))?;
    }
    let trials = 200;
    let cfg = SweepConfig::new(n, 1, trials, 0.5, 9);
    let mut notes = Vec::new();
    for m in [12, 16, 20] {
        let grouped = (0..trials)
            .filter(|&i| {
                let seed = 1000 * m as u64 + i as u64;
                recovery_trial(&e, &gs, &t, &c0, m, seed, &cfg).unwrap() < cfg.success_nre
            })
            .count();
        let mut direct = 0;
        for i in 0..trials {
            let mut tr = rng(50_000 + 1000 * m as u64 + i as u64);
            let mut rows = index::sample(&mut tr, n, m).into_vec();
            rows.sort_unstable();
            let omega = SampleSet { omega: rows.clone(), selected_groups: rows, m };
            let c = draw_coefficients(&t, &mut tr);
            let res = basis_pursuit(&RecoveryProblem::from_ensemble(&e, &omega, &c, SolverOptions::default()).unwrap());
            direct += usize::from(nre(&c, &res.c_hat).unwrap() < cfg.success_nre);
        }
        let z = two_proportion_z(grouped, direct, trials);
        ensure(z.abs() < 1.96, format!("M={m}: success {grouped}/{trials} vs {direct}/{trials}, z = {z:.2}"))?;
        notes.push(format!("M={m}: {grouped} vs {direct} (z = {z:.2})"));
    }
    Ok(format!("γ = 1; successes out of {trials}: {}", notes.join(", ")))
}

const DET_CONFIG: &str = r#"{
  "ensemble": { "measurement": "identity", "sparsity": "dft1d", "n": 32 },
  "structure": [ { "kind": "strided_1d", "g": 4 }, { "kind": "contiguous_1d", "g": 4 }, { "kind": "random_groups", "g": 4 } ],
  "support": { "kind": "subband", "k": 3, "channels": 2, "channel_width_frac": 0.1, "draws": 2 },
  "sweep": { "trials_per_m": 6, "success_quota": 0.8, "step": 4 },
  "validate": { "m_values": [8, 16], "trials": 50 }
}"#;

fn crit10_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("gs-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let config = dir.join("det.json");
    std::fs::write(&config, DET_CONFIG).map_err(|e| e.to_string())?;
    let config = config.to_string_lossy().into_owned();
    let commands: [&[&str]; 7] = [
        &["gamma"],
        &["sweep"],
        &["bounds"],
        &["validate", "gram"],
        &["validate", "lemma1"],
        &["gen-groups"],
        &["recover"],
    ];
    for cmd in commands {
        let mut args: Vec<String> = vec!["grouped-sensing".into()];
        args.extend(cmd.iter().map(|s| s.to_string()));
        args.extend(["--config".into(), config.clone(), "--seed".into(), "7".into()]);
        let run = |threads: Option<&str>| {
            let mut a = args.clone();
            if let Some(k) = threads {
                a.extend(["--threads".into(), k.into()]);
            }
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = run_cli(a, &mut out, &mut err);
            (code, out, String::from_utf8_lossy(&err).into_owned())
        };
        let (c1, o1, e1) = run(None);
        ensure(c1 == 0, format!("{cmd:?} failed: {e1}"))?;
        let (_, o2, _) = run(None);
        let (_, o3, _) = run(Some("2"));
        ensure(o1 == o2 && o1 == o3, format!("{cmd:?} output differs between runs"))?;
        let bin =
            Command::new(env!("CARGO_BIN_EXE_grouped-sensing")).args(&args[1..]).output().map_err(|e| e.to_string())?;
        ensure(bin.status.success() && bin.stdout == o1, format!("{cmd:?}: binary output differs"))?;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok("7 subcommands byte-identical across runs, thread counts and the binary".into())
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("γ endpoint identities", crit1_endpoints, Duration::from_secs(1)),
        ("Pietsch sandwich", crit2_sandwich, Duration::from_secs(30)),
        ("exact-norm oracle agreement", crit3_oracle, Duration::from_secs(10)),
        ("basis-pursuit LP oracle", crit4_lp, Duration::from_secs(60)),
        ("certificate sufficiency", crit5_certificate, Duration::from_secs(300)),
        ("Gram concentration", crit6_concentration, Duration::from_secs(300)),
        ("off-support second moment bound", crit7_lemma1, Duration::from_secs(120)),
        ("strided vs contiguous replication", crit8_fig1, Duration::from_secs(1800)),
        ("g = 1 equivalence", crit9_singletons, Duration::from_secs(600)),
        ("CLI determinism", crit10_determinism, Duration::from_secs(60)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > *limit => Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS {id:>2} {name}: {msg} [{elapsed:.1?}]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {msg} [{elapsed:.1?}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
