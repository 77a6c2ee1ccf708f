//! Acceptance suite. Every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line with the measured values and wall time.
//!
//! A FAIL line does not fail the target by default, so the workspace test run
//! stays green while misses stay visible. Set `OTFS_ACCEPTANCE_STRICT=1` to
//! turn any FAIL into a nonzero exit. Errors and panics always fail.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otfs::analysis::{leakage_profile, PaprAccumulator};
use otfs::channel::{apply_gce_bem, apply_gce_bem_at, apply_ltv, apply_ltv_at, complex_normal, ChannelRealization, GceBemChannel};
use otfs::cp::{build_cp_ce_operator, perfect_ecm, rrc_for, rrc_spectrum, tx_frame, CpSystem};
use otfs::detection::nmse;
use otfs::estimation::CeOperator;
use otfs::harness::{transmit_frames, Component, CsiMode, RealizationOutcome, SimulationPlan, Simulator};
use otfs::numerics::ComplexMatrix;
use otfs::numerology::{
    default_bem_rate, BemConfig, Numerology, PilotConfig, PilotKind, RawNumerology, SystemId, Variant,
};
use otfs::uw::{
    build_precoder, build_uw_ce_operator, column_stream, dirichlet_pilot_period, perfect_ecm_uw, tx_data_frame,
    uw_pilot, UwPilotKind, UwSystem,
};
use otfs::C64;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Res<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn status(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn cli(args: &[&str]) -> Res<String> {
    let out = Command::new(env!("CARGO_BIN_EXE_otfs")).args(args).output()?;
    if !out.status.success() {
        return Err(format!("otfs {args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)).into());
    }
    Ok(String::from_utf8(out.stdout)?)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cl: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(r, cl, |_, _| complex_normal(rng))
}

fn rel_err(got: &[C64], want: &[C64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
    (num / den).sqrt()
}

/// `F_M D F_N^H` by direct summation.
fn isft_sum(d: &ComplexMatrix) -> ComplexMatrix {
    let (m, n) = d.shape();
    let s = 1.0 / ((m * n) as f64).sqrt();
    ComplexMatrix::from_fn(m, n, |p, q| {
        let mut acc = c(0.0, 0.0);
        for k in 0..m {
            for l in 0..n {
                let ph = (q * l) as f64 / n as f64 - (p * k) as f64 / m as f64;
                acc += d[(k, l)] * C64::from_polar(1.0, 2.0 * PI * ph);
            }
        }
        acc * s
    })
}

/// `F_M^H Y F_N` by direct summation.
fn sft_sum(y: &ComplexMatrix) -> ComplexMatrix {
    let (m, n) = y.shape();
    let s = 1.0 / ((m * n) as f64).sqrt();
    ComplexMatrix::from_fn(m, n, |k, l| {
        let mut acc = c(0.0, 0.0);
        for p in 0..m {
            for q in 0..n {
                let ph = (p * k) as f64 / m as f64 - (q * l) as f64 / n as f64;
                acc += y[(p, q)] * C64::from_polar(1.0, 2.0 * PI * ph);
            }
        }
        acc * s
    })
}

/// Unitary DFT of `len` samples starting at `start`.
fn dft_sum(r: &[C64], start: usize, len: usize) -> Vec<C64> {
    let s = 1.0 / (len as f64).sqrt();
    (0..len)
        .map(|k| {
            (0..len).map(|t| r[start + t] * C64::from_polar(s, -2.0 * PI * ((k * t) % len) as f64 / len as f64)).sum()
        })
        .collect()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![c(0.0, 0.0); n];
    for row in (0..n).rev() {
        let s: C64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `A^H (A A^H + γI)^{-1} y` with dense arithmetic.
fn dense_lmmse(a: &ComplexMatrix, y: &[C64], gamma: f64) -> Vec<C64> {
    let (rows, cols) = a.shape();
    let gram: Vec<Vec<C64>> = (0..rows)
        .map(|i| {
            (0..rows)
                .map(|j| {
                    let v: C64 = (0..cols).map(|k| a[(i, k)] * a[(j, k)].conj()).sum();
                    if i == j {
                        v + gamma
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let z = solve(gram, y.to_vec());
    (0..cols).map(|k| (0..rows).map(|i| a[(i, k)].conj() * z[i]).sum()).collect()
}

fn column_major(m: &ComplexMatrix) -> Vec<C64> {
    (0..m.cols()).flat_map(|c| m.column(c)).collect()
}

fn small(variant: Variant) -> Res<Numerology> {
    let cp = variant == Variant::Cp;
    let raw = RawNumerology {
        variant,
        m: 8,
        n: 4,
        q: 2,
        delta_f: 26e3,
        tau_m: 2.5e-6,
        f0: 10e9,
        v_max: 400.0,
        k_b: 4,
        alpha: if cp { 0.5 } else { 0.0 },
        m_cp: None,
        m_gi: None,
        m_b: None,
        m_g: cp.then_some(5),
        m_ce: cp.then_some(3),
        m_ce_offset: cp.then_some(1),
    };
    Ok(Numerology::derive(&raw)?)
}

fn mc_plan(id: SystemId, ebn0: &[f64], realizations: usize, seed: u64) -> SimulationPlan {
    let mut p = SimulationPlan::preset(id);
    p.ebn0_db = ebn0.to_vec();
    p.velocity = 400.0;
    p.realizations = realizations;
    p.seed = seed;
    p.sigma_u_sq = 0.5;
    p.csi = CsiMode::Estimated;
    p
}

fn table_iii() -> Res<Outcome> {
    let text = cli(&["numerology"])?;
    let want: [(&str, [&str; 4]); 4] = [
        ("BW [MHz]", ["1.274", "1.144", "1.092", "1.248"]),
        ("T_tx [us]", ["615.4", "653.9", "653.9", "653.9"]),
        ("R_s [kBd]", ["832.0", "562.8", "513.8", "562.8"]),
        ("eta [bit/s/Hz]", ["2.612", "1.968", "1.882", "1.804"]),
    ];
    let header: Vec<&str> = text.lines().next().unwrap_or("").split_whitespace().skip(1).collect();
    let mut wrong = Vec::new();
    if header != ["UW", "CP*", "CP**", "CP***"] {
        wrong.push(format!("columns {header:?}"));
    }
    for (label, cells) in want {
        let got: Vec<&str> = text
            .lines()
            .find(|l| l.starts_with(label))
            .map(|l| l[label.len()..].split_whitespace().collect())
            .unwrap_or_default();
        if got != cells {
            wrong.push(format!("{label}: {got:?}"));
        }
    }
    let eta = text.lines().find(|l| l.starts_with("eta")).unwrap_or("").trim().to_string();
    outcome(wrong.is_empty(), if wrong.is_empty() { format!("16 cells match; {eta}") } else { wrong.join("; ") })
}

fn tables_iv_v() -> Res<Outcome> {
    let text = cli(&["complexity"])?;
    let pairs: Vec<[u64; 2]> = text
        .lines()
        .filter_map(|l| {
            let t: Vec<&str> = l.split_whitespace().collect();
            let n = t.len();
            if n < 3 {
                return None;
            }
            Some([t[n - 2].parse().ok()?, t[n - 1].parse().ok()?])
        })
        .collect();
    let want: [[u64; 2]; 10] = [
        [10_496, 34_560],
        [1_331_736, 2_996_388],
        [20_736, 20_736],
        [448_512, 1_057_792],
        [1_151_824, 1_709_392],
        [2_987_112, 5_826_548],
        [640, 4_128],
        [13_824, 20_736],
        [87_424, 42_240],
        [1_344, 2_048],
    ];
    let bad: Vec<String> =
        pairs.iter().zip(&want).filter(|(g, w)| g != w).map(|(g, w)| format!("{g:?} != {w:?}")).collect();
    let pass = pairs.len() == want.len() && bad.is_empty();
    outcome(pass, if pass { "20 integers match (CP** | UW with M_b=64)".into() } else { format!("{} rows; {}", pairs.len(), bad.join("; ")) })
}

fn leakage_counts() -> Res<Outcome> {
    let text = cli(&["leakage", "--m", "32", "--q", "4", "--p0", "16", "--k-tau", "1", "--alpha", "0,0.2,0.4,0.6,0.8"])?;
    let counts: Vec<usize> = text
        .lines()
        .filter_map(|l| l.split("interfered_bins=").nth(1))
        .filter_map(|v| v.trim().parse().ok())
        .collect();
    outcome(counts == [31, 11, 6, 4, 3], format!("counts {counts:?}, expected [31, 11, 6, 4, 3]"))
}

fn appendix_properties() -> Res<Outcome> {
    let (m, q) = (32, 4);
    let mut alias = 0.0f64;
    let mut residual = 0.0f64;
    let mut misplaced = 0;
    for i in 0..=10 {
        let alpha = i as f64 / 10.0;
        let psi = rrc_spectrum(m, q, alpha)?;
        for p in 0..m {
            alias = alias.max((psi.aliased_power(p) - 1.0).abs());
        }
        for k in 0..2 * q {
            for p0 in [0, 7, 16, 31] {
                let prof = leakage_profile(m, q, alpha, p0, q * k)?;
                if prof.peak_bin() != (p0 + k) % m {
                    misplaced += 1;
                }
                let off = prof.phi.iter().enumerate().filter(|&(b, _)| b != (p0 + k) % m).map(|(_, v)| v.norm());
                residual = residual.max(off.fold(0.0, f64::max));
            }
        }
    }
    let pass = alias <= 1e-10 && residual <= 1e-9 && misplaced == 0;
    outcome(pass, format!("aliased-power error {alias:.1e} (tol 1e-10); integer-delay off-bin residual {residual:.1e} (tol 1e-9); misplaced peaks {misplaced}"))
}

fn gi_invariants() -> Res<Outcome> {
    let n = SystemId::Uw.numerology();
    let bem = BemConfig::new(n.n, 3.5)?;
    let systems = [
        UwSystem::new(n.clone(), PilotConfig::new(&n, PilotKind::ChirpedDirichletUw, 0.5)?, bem.clone())?,
        UwSystem::new(n.clone(), PilotConfig::new(&n, PilotKind::DiracUw, 0.5)?, bem)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut gi, mut ce) = (0.0f64, 0.0f64);
    for frame in 0..100 {
        let sys = &systems[frame % 2];
        let data: Vec<C64> = (0..n.m * n.n).map(|_| complex_normal(&mut rng)).collect();
        let s = tx_data_frame(&sys.dd_frame(&data)?, &sys.precoder, &n)?;
        for b in 0..n.n {
            let col = s.column(b);
            let tail: f64 = col[n.m_prime - n.m_gi..].iter().map(|x| x.norm_sqr()).sum();
            let all: f64 = col.iter().map(|x| x.norm_sqr()).sum();
            gi = gi.max((tail / all).sqrt());
        }
        let paths = rng.random_range(1..=16);
        let ch = ChannelRealization {
            delays: (0..paths).map(|_| rng.random_range(0..n.m_h)).collect(),
            dopplers: vec![0.0; paths],
            gains: (0..paths).map(|_| complex_normal(&mut rng)).collect(),
        };
        let pilot = sys.pilot_signal().ok_or("pilot missing")?;
        let full = apply_ltv(&sys.transmit(&data)?.samples, &ch, n.m_prime);
        let only = apply_ltv(&pilot.samples, &ch, n.m_prime);
        let y_ce = |r: &[C64]| -> Vec<C64> {
            (0..n.n).flat_map(|b| (0..n.m_h).map(move |m| r[m + n.m_prime * b + n.k_h])).collect()
        };
        ce = ce.max(rel_err(&y_ce(&full), &y_ce(&only)));
    }
    let pass = gi <= 1e-9 && ce <= 1e-9;
    outcome(pass, format!("100 frames: GI relative norm {gi:.1e}, Y_ce data+pilot vs pilot-only {ce:.1e} (tol 1e-9)"))
}

fn uw_pilot_properties() -> Res<Outcome> {
    let n = SystemId::Uw.numerology();
    let c0 = dirichlet_pilot_period(&n)?;
    let p = uw_pilot(&n, UwPilotKind::ChirpedDirichlet, 0.5)?;
    let mag = p.c.iter().enumerate().map(|(k, v)| (v.norm() - c0[k % n.m_prime].norm()).abs()).fold(0.0, f64::max);
    let total: f64 = c0.iter().map(|v| v.norm_sqr()).sum();
    let gi: f64 = c0[n.m_prime - n.m_gi..].iter().map(|v| v.norm_sqr()).sum();
    let frac = gi / total;
    let (mag_ok, frac_ok) = (mag <= 1e-12, (frac - 0.972).abs() <= 0.002);
    outcome(
        mag_ok && frac_ok,
        format!(
            "max ||c|-|c0|| {mag:.1e} [{}]; GI energy fraction {frac:.4} for M'={}, M_gi={}, M_s={} (want 0.972 +- 0.002) [{}]",
            status(mag_ok),
            n.m_prime,
            n.m_gi,
            n.m_s,
            status(frac_ok)
        ),
    )
}

fn oracle_equivalences() -> Res<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (ncp, nuw) = (small(Variant::Cp)?, small(Variant::Uw)?);

    // Tx: matrix form against summation
    let psi = rrc_for(&ncp)?;
    let d = random_matrix(&mut rng, ncp.m, ncp.n);
    let frame = tx_frame(&d, &psi, &ncp)?;
    let x = isft_sum(&d);
    let (mut got, mut want) = (vec![], vec![]);
    for b in 0..ncp.n {
        for t in -(ncp.m_cp as i64)..ncp.m_prime as i64 {
            let v: C64 = (0..ncp.m_prime)
                .map(|j| {
                    x[(j % ncp.m, b)] * psi.values()[j] * C64::from_polar(1.0, 2.0 * PI * j as f64 * t as f64 / ncp.m_prime as f64)
                })
                .sum();
            want.push(v / (ncp.m as f64).sqrt());
            got.push(frame.samples[((t + ncp.m_cp as i64) as usize, b)]);
        }
    }
    let tx_cp = rel_err(&got, &want);

    let pre = build_precoder(&nuw, 0.3)?;
    let du = random_matrix(&mut rng, nuw.m, nuw.n);
    let su = tx_data_frame(&du, &pre, &nuw)?;
    let xu = isft_sum(&du);
    let (mut got, mut want) = (vec![], vec![]);
    for b in 0..nuw.n {
        for t in 0..nuw.m_prime {
            let v: C64 = pre
                .active
                .iter()
                .enumerate()
                .map(|(l, &k)| {
                    let gx: C64 = (0..nuw.m).map(|m| pre.g[(l, m)] * xu[(m, b)]).sum();
                    gx * C64::from_polar(1.0, 2.0 * PI * ((k * t) % nuw.m_prime) as f64 / nuw.m_prime as f64)
                })
                .sum();
            want.push(v * pre.alpha_d / (nuw.m_prime as f64).sqrt());
            got.push(su[(t, b)]);
        }
    }
    let tx_uw = rel_err(&got, &want);

    // ECMs against propagation through the LTV channel
    let ch_cp = ChannelRealization {
        delays: vec![0, 1, ncp.l_prime - 1],
        dopplers: vec![0.21, -0.37, 0.05],
        gains: vec![c(0.8, 0.1), c(-0.3, 0.5), c(0.2, -0.4)],
    };
    let r = apply_ltv_at(&frame.stream(), frame.origin(), &ch_cp, ncp.m_prime);
    let (mut got, mut want) = (vec![], vec![]);
    for b in 0..ncp.n {
        got.extend(dft_sum(&r, b * ncp.m_x_prime + ncp.m_cp, ncp.m_prime));
        want.extend(perfect_ecm(&ch_cp, &psi, &ncp, b).mul_vec(&x.column(b))?);
    }
    let ecm_cp = rel_err(&got, &want);

    let ch_uw = ChannelRealization {
        delays: vec![0, nuw.l_prime - 1, 1],
        dopplers: vec![-0.33, 0.12, 0.41],
        gains: vec![c(0.5, -0.6), c(0.4, 0.4), c(-0.7, 0.1)],
    };
    let r = apply_ltv(&column_stream(&su), &ch_uw, nuw.m_prime);
    let (mut got, mut want) = (vec![], vec![]);
    for b in 0..nuw.n {
        got.extend(dft_sum(&r, b * nuw.m_prime, nuw.m_prime));
        want.extend(perfect_ecm_uw(&ch_uw, &pre, &nuw, b).mul_vec(&xu.column(b))?);
    }
    let ecm_uw = rel_err(&got, &want);

    // A_ce columns against the full chain for every unit BEM coefficient
    let bem = BemConfig::new(nuw.n, 1.5)?;
    let mut ace = 0.0f64;
    // each operator with its observation rows per block
    let mut ops: Vec<(CeOperator, usize)> = vec![];
    for kind in [UwPilotKind::Dirac, UwPilotKind::ChirpedDirichlet] {
        let p = uw_pilot(&nuw, kind, 0.4)?;
        let op = build_uw_ce_operator(&nuw, &p, &bem)?;
        for kt in 0..nuw.m_h {
            for kn in 0..nuw.n {
                let mut h = ComplexMatrix::zeros(nuw.m_h, nuw.n);
                h[(kt, kn)] = c(1.0, 0.0);
                let r = apply_gce_bem(&p.emitted(), &GceBemChannel { h_ce: h, n_nu: bem.n_nu, m_x_prime: nuw.m_prime });
                let y: Vec<C64> =
                    (0..nuw.n).flat_map(|b| (0..nuw.m_h).map(move |m| (b, m))).map(|(b, m)| r[m + nuw.m_prime * b + nuw.k_h]).collect();
                ace = ace.max(rel_err(&op.matrix().column(kt + nuw.m_h * kn), &y));
            }
        }
        ops.push((op, nuw.m_h));
    }
    let pc = PilotConfig::new(&ncp, PilotKind::EmbeddedImpulse, 0.4)?;
    let bem_cp = BemConfig::new(ncp.n, 1.5)?;
    let op = build_cp_ce_operator(&ncp, &pc, &bem_cp)?;
    let sys = CpSystem::new(ncp.clone(), pc, bem_cp.clone())?;
    let pilot = sys.pilot_signal()?.ok_or("pilot missing")?;
    for kt in 0..ncp.m_h {
        for kn in 0..ncp.n {
            let mut h = ComplexMatrix::zeros(ncp.m_h, ncp.n);
            h[(kt, kn)] = c(1.0, 0.0);
            let ch = GceBemChannel { h_ce: h, n_nu: bem_cp.n_nu, m_x_prime: ncp.m_x_prime };
            let r = apply_gce_bem_at(&pilot.samples, pilot.origin, &ch);
            let mut z = ComplexMatrix::zeros(ncp.m, ncp.n);
            for b in 0..ncp.n {
                let yb = dft_sum(&r, b * ncp.m_x_prime + ncp.m_cp, ncp.m_prime);
                for (j, v) in yb.iter().enumerate() {
                    z[(j % ncp.m, b)] += v * psi.values()[j];
                }
            }
            let dh = sft_sum(&z);
            let y: Vec<C64> =
                (0..ncp.n).flat_map(|b| (0..ncp.m_ce).map(move |m| (b, m))).map(|(b, m)| dh[(m + ncp.m_ce_offset, b)]).collect();
            ace = ace.max(rel_err(&op.matrix().column(kt + ncp.m_h * kn), &y));
        }
    }
    ops.push((op, ncp.m_ce));

    // eigendecomposition LMMSE against a dense solve
    let mut lmmse = 0.0f64;
    for (op, per) in &ops {
        let (per, rows) = (*per, op.matrix().rows());
        let y: Vec<C64> = (0..rows).map(|_| complex_normal(&mut rng)).collect();
        let ym = ComplexMatrix::from_fn(per, rows / per, |r, col| y[r + per * col]);
        for gamma in [1e-3, 0.37, 5.0] {
            let est = column_major(&op.estimate_with_gamma(&ym, gamma)?);
            lmmse = lmmse.max(rel_err(&est, &dense_lmmse(op.matrix(), &y, gamma)));
        }
    }

    let pass = tx_cp <= 1e-10 && tx_uw <= 1e-10 && ecm_cp <= 1e-9 && ecm_uw <= 1e-9 && ace <= 1e-8 && lmmse <= 1e-9;
    outcome(
        pass,
        format!(
            "M=8 N=4 Q=2: Tx CP {tx_cp:.1e} UW {tx_uw:.1e} (tol 1e-10); ECM CP {ecm_cp:.1e} UW {ecm_uw:.1e} (tol 1e-9); \
             A_ce columns {ace:.1e} (tol 1e-8); eig vs dense LMMSE {lmmse:.1e} (tol 1e-9)"
        ),
    )
}

fn zero_noise_estimation() -> Res<Outcome> {
    let n = SystemId::Uw.numerology();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sigma = 1e-13;
    // relative H_ce error, and the same estimate judged on the rebuilt ECMs
    let (mut errs, mut ecm) = (vec![], vec![]);
    for kind in [PilotKind::DiracUw, PilotKind::ChirpedDirichletUw] {
        let bem = BemConfig::new(n.n, 1.0)?;
        let sys = UwSystem::new(n.clone(), PilotConfig::new(&n, kind, 0.5)?, bem.clone())?;
        let h = random_matrix(&mut rng, n.m_h, n.n);
        let pilot = sys.pilot_signal().ok_or("pilot missing")?;
        let r = apply_gce_bem(&pilot.samples, &GceBemChannel { h_ce: h.clone(), n_nu: bem.n_nu, m_x_prime: n.m_prime });
        let est = sys.estimate(&r, sigma)?;
        errs.push(est.sub(&h)?.frobenius_norm() / h.frobenius_norm());
        let rec = sys.reconstructor().ok_or("no reconstructor")?;
        ecm.push(nmse(&rec.reconstruct(&h)?, &rec.reconstruct(&est)?)?.sqrt());
    }
    let ncp = SystemId::CpStar.numerology();
    let bem = BemConfig::new(ncp.n, 1.0)?;
    let sys = CpSystem::new(ncp.clone(), PilotConfig::new(&ncp, PilotKind::EmbeddedImpulse, 0.5)?, bem.clone())?;
    let h = random_matrix(&mut rng, ncp.m_h, ncp.n);
    let pilot = sys.pilot_signal()?.ok_or("pilot missing")?;
    let r = apply_gce_bem_at(&pilot.samples, pilot.origin, &GceBemChannel { h_ce: h.clone(), n_nu: bem.n_nu, m_x_prime: ncp.m_x_prime });
    let est = sys.estimate(&r, sigma)?;
    errs.push(est.sub(&h)?.frobenius_norm() / h.frobenius_norm());
    let rec = sys.reconstructor().ok_or("no reconstructor")?;
    ecm.push(nmse(&rec.reconstruct(&h)?, &rec.reconstruct(&est)?)?.sqrt());
    let (rows, cols) = sys.ce_operator().ok_or("no operator")?.matrix().shape();
    let ranks: Vec<usize> = [
        UwSystem::new(n.clone(), PilotConfig::new(&n, PilotKind::ChirpedDirichletUw, 0.5)?, BemConfig::new(n.n, 1.0)?)?
            .ce_operator()
            .ok_or("no operator")?
            .eigen()
            .eigvals
            .clone(),
        sys.ce_operator().ok_or("no operator")?.eigen().eigvals.clone(),
    ]
    .iter()
    .map(|ev| ev.iter().filter(|&&x| x > 1e-9 * ev[0]).count())
    .collect();

    let oks = [errs[0] <= 1e-6, errs[1] <= 1e-3, errs[2] <= 1e-3];
    outcome(
        oks.iter().all(|&b| b),
        format!(
            "n_nu=1, H_ce relative error: UW Dirac {:.1e} (tol 1e-6) [{}]; UW chirped {:.1e} (tol 1e-3, A_ce rank {}/{}) [{}]; \
             CP* embedded {:.1e} (tol 1e-3, A_ce {rows}x{cols}, rank {}) [{}]; rebuilt-ECM relative error {:.1e} / {:.1e} / {:.1e}",
            errs[0],
            status(oks[0]),
            errs[1],
            ranks[0],
            n.m_h * n.n,
            status(oks[1]),
            errs[2],
            ranks[1],
            status(oks[2]),
            ecm[0],
            ecm[1],
            ecm[2]
        ),
    )
}

fn ber(outcomes: &[RealizationOutcome], idx: &[usize], k: usize) -> f64 {
    let e: u64 = idx.iter().map(|&i| outcomes[i].bit_errors[k]).sum();
    let b: u64 = idx.iter().map(|&i| outcomes[i].bits).sum();
    e as f64 / b as f64
}

fn mean_nmse(outcomes: &[RealizationOutcome], idx: &[usize], k: usize) -> f64 {
    idx.iter().map(|&i| outcomes[i].nmse[k]).sum::<f64>() / idx.len() as f64
}

fn monte_carlo_orderings() -> Res<Outcome> {
    let (reals, seed) = (400, 1);
    let grid = [20.0, 28.0];
    let uw = Simulator::new(mc_plan(SystemId::Uw, &grid, reals, seed))?.run()?.realizations;
    let cp1 = Simulator::new(mc_plan(SystemId::CpStar, &grid, reals, seed))?.run()?.realizations;
    let cp2 = Simulator::new(mc_plan(SystemId::CpStar2, &grid, reals, seed))?.run()?.realizations;
    let all: Vec<usize> = (0..reals).collect();

    // paired bootstrap: realization i shares its channel across systems
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let resamples = 2000;
    let (mut ber_wins, mut nmse_wins) = (0, 0);
    for _ in 0..resamples {
        let idx: Vec<usize> = (0..reals).map(|_| rng.random_range(0..reals)).collect();
        if ber(&uw, &idx, 1) < ber(&cp1, &idx, 1) {
            ber_wins += 1;
        }
        if mean_nmse(&cp1, &idx, 1) > mean_nmse(&cp2, &idx, 1) {
            nmse_wins += 1;
        }
    }
    let (ber_conf, nmse_conf) = (ber_wins as f64 / resamples as f64, nmse_wins as f64 / resamples as f64);
    let db = |o: &[RealizationOutcome], k| 10.0 * mean_nmse(o, &all, k).log10();
    let floor = db(&cp1, 1) - db(&cp1, 0);
    let oks = [ber_conf >= 0.95, nmse_conf >= 0.95, floor.abs() <= 3.0];
    outcome(
        oks.iter().all(|&b| b),
        format!(
            "28 dB: BER UW {:.2e} vs CP* {:.2e}, P(UW<CP*) {ber_conf:.3} [{}]; NMSE CP* {:.2} dB vs CP** {:.2} dB, P(CP*>CP**) {nmse_conf:.3} [{}]; \
             CP* NMSE 20->28 dB change {floor:.2} dB (|.| <= 3) [{}]",
            ber(&uw, &all, 1),
            ber(&cp1, &all, 1),
            status(oks[0]),
            db(&cp1, 1),
            db(&cp2, 1),
            status(oks[1]),
            status(oks[2])
        ),
    )
}

fn bem_rate_optimum() -> Res<Outcome> {
    let mut bers = vec![];
    for rate in 1..=10 {
        let mut p = mc_plan(SystemId::Uw, &[24.0], 200, 1);
        p.bem_rate = Some(rate as f64);
        bers.push(Simulator::new(p)?.run()?.rows[0].ber);
    }
    let best = (0..bers.len()).min_by(|&a, &b| bers[a].total_cmp(&bers[b])).unwrap() + 1;
    let n = SystemId::Uw.numerology().with_velocity(400.0)?;
    let target = default_bem_rate(n.delta_f, n.nu_max)?;
    let curve: Vec<String> = bers.iter().map(|b| format!("{b:.1e}")).collect();
    outcome((best as f64 - target).abs() <= 1.0, format!("argmin n_nu = {best}, analytic {target:.3}; BER [{}]", curve.join(" ")))
}

fn papr() -> Res<Outcome> {
    let blocks: usize = 5000;
    let mut p99 = vec![];
    let mut variances = vec![];
    for id in [SystemId::Uw, SystemId::CpStar] {
        let plan = mc_plan(id, &[28.0], 1, 3);
        let frames = blocks.div_ceil(plan.numerology.n);
        let (both, len) = transmit_frames(&plan, Component::Both, frames)?;
        let mut acc = PaprAccumulator::default();
        both.iter().for_each(|f| acc.push_blocks(f, len));
        p99.push(acc.finish()?.threshold_at(1e-2));

        let (pilot, len) = transmit_frames(&plan, Component::Pilot, frames)?;
        let mut acc = PaprAccumulator::default();
        pilot.iter().for_each(|f| acc.push_blocks(f, len));
        let v = acc.papr_db()?;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        variances.push(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64);
    }
    let diff = p99[0] - p99[1];
    let vmax = variances.iter().cloned().fold(0.0, f64::max);
    let oks = [diff <= 1.3, vmax < 1e-6];
    outcome(
        oks.iter().all(|&b| b),
        format!(
            "PAPR at CCDF 1e-2: UW {:.3} dB, CP* {:.3} dB, difference {diff:.3} dB (<= 1.3) [{}]; pilot-only variance UW {:.1e}, CP* {:.1e} dB^2 (< 1e-6) [{}]",
            p99[0],
            p99[1],
            status(oks[0]),
            variances[0],
            variances[1],
            status(oks[1])
        ),
    )
}

fn determinism() -> Res<Outcome> {
    let mut mismatches = vec![];
    for sys in ["uw", "cp*"] {
        let base = ["simulate", "--system", sys, "--ebn0", "16,24", "--realizations", "24", "--seed", "11"];
        let run = |extra: &[&str]| cli(&[&base[..], extra].concat());
        let a = run(&["--no-wall-time", "--threads", "1"])?;
        let b = run(&["--no-wall-time", "--threads", "1"])?;
        let c4 = run(&["--no-wall-time", "--threads", "4"])?;
        let timed = run(&[])?;
        let strip = |s: &str| -> Vec<String> {
            s.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
        };
        if a != b {
            mismatches.push(format!("{sys}: repeat differs"));
        }
        if a != c4 {
            mismatches.push(format!("{sys}: 1 vs 4 threads differ"));
        }
        if strip(&a) != strip(&timed) {
            mismatches.push(format!("{sys}: rows differ outside wall_time_s"));
        }
        if a.lines().count() != 3 {
            mismatches.push(format!("{sys}: unexpected output {a:?}"));
        }
    }
    let pass = mismatches.is_empty();
    outcome(pass, if pass { "UW and CP*: repeated and 1/4-thread runs byte-identical".into() } else { mismatches.join("; ") })
}

fn main() {
    type Check = fn() -> Res<Outcome>;
    let checks: [(u32, &str, Check, f64); 12] = [
        (1, "numerology table", table_iii, 1.0),
        (2, "complexity tables", tables_iv_v, 1.0),
        (3, "leakage counts", leakage_counts, 1.0),
        (4, "aliasing and integer-delay properties", appendix_properties, 5.0),
        (5, "guard-interval invariants", gi_invariants, 10.0),
        (6, "UW pilot properties", uw_pilot_properties, 1.0),
        (7, "oracle equivalences", oracle_equivalences, 30.0),
        (8, "zero-noise estimation", zero_noise_estimation, 10.0),
        (9, "Monte Carlo orderings", monte_carlo_orderings, 1200.0),
        (10, "BEM-rate optimum", bem_rate_optimum, 1800.0),
        (11, "PAPR", papr, 300.0),
        (12, "determinism", determinism, 60.0),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (mut failed, mut errored) = (0, 0);
    for (id, name, check, budget) in checks {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match result {
            Ok(Ok(o)) => {
                let on_time = secs <= budget;
                if !(o.pass && on_time) {
                    failed += 1;
                }
                let late = if on_time { String::new() } else { format!("; over the {budget} s budget") };
                (if o.pass && on_time { "PASS" } else { "FAIL" }, format!("{}{late}", o.detail))
            }
            Ok(Err(e)) => {
                errored += 1;
                ("ERROR", e.to_string())
            }
            Err(_) => {
                errored += 1;
                ("ERROR", "panicked".to_string())
            }
        };
        println!("criterion {id:>2} {tag:<5} {name}: {detail} ({secs:.2} s)");
    }
    println!("acceptance: {failed} failed, {errored} errored");
    let strict = std::env::var("OTFS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if errored > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
