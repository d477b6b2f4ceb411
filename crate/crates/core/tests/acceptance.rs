//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeSet;
use std::time::Instant;

use num_integer::gcd;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qswitch::analysis::{
    check_band, corollary_band, detect_cycle, detect_cycle_approx, lambda_steps,
    minimal_invariant_pairs, predict_cycle, verify_invariant_set, verify_residual_control,
    EntryRegion, VerdictStatus,
};
use qswitch::campaign::{
    read_trajectory_csv, rms_quantized_error, run_table1, trajectory_csv_string, CampaignSpec,
};
use qswitch::dynamics::{simulate, simulate_law, Law, Quantizer};
use qswitch::numerics::sign;
use qswitch::reachability::{
    amplitude2_sets, attraction_region, classify_trajectory, find_witness, sweep, AttractorTag,
    Axis, GridSpec,
};
use qswitch::{
    round_half_away, ArithmeticMode, Controller, Disturbance, LoopConfig, QuantizedPair, Scalar,
};

fn s(x: &str) -> Scalar {
    x.parse().unwrap()
}

fn fl(x: &str) -> Scalar {
    s(x).to_mode(ArithmeticMode::Float).unwrap()
}

fn q(n: i128, d: i128) -> Scalar {
    Scalar::ratio(n, d).unwrap()
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, title: &str, ok: bool, detail: String, started: Instant) {
        if !ok {
            self.failures += 1;
        }
        println!(
            "[{}] {id:<4} {title}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

/// A point of the entry region for `(α, Δd)`, indexed by `en ∈ (−500, 500)`
/// and `t ∈ [1, 1000]`.
fn region_point(alpha: &Scalar, dd: &Scalar, en: i128, t: i128) -> (Scalar, Scalar) {
    let e = q(en, 1000);
    let lo = *alpha - q(3, 2);
    let hi = *alpha - Scalar::ONE;
    let v = lo + (hi - lo) * q(t, 1000);
    let u_bar = match sign(dd) {
        0 => v,
        sg => v * Scalar::integer(sg as i128),
    };
    (e, u_bar)
}

fn random_region_case(rng: &mut ChaCha8Rng) -> (Scalar, Scalar, Scalar, Scalar) {
    let alpha = q(1000 + rng.gen_range(1..500), 1000);
    let dd = q(rng.gen_range(-500..=500), 1000);
    let (e, u) = region_point(
        &alpha,
        &dd,
        rng.gen_range(-499..=499),
        rng.gen_range(1..=1000),
    );
    (alpha, dd, e, u)
}

const RMS_TABLE: [(&str, f64, f64); 8] = [
    ("0.01", 0.138, 0.100),
    ("0.02", 0.197, 0.141),
    ("0.04", 0.281, 0.200),
    ("0.05", 0.314, 0.223),
    ("0.1", 0.446, 0.316),
    ("0.2", 0.631, 0.447),
    ("0.4", 0.893, 0.632),
    ("sqrt2-1", 0.909, 0.643),
];

fn criterion_1_and_campaign(r: &mut Report) {
    let t = Instant::now();
    let spec = CampaignSpec::default();
    let rows = run_table1(&spec).unwrap();
    let mut worst = 0.0f64;
    let mut ok = rows.len() == 16;
    for (lit, std_ref, sw_ref) in RMS_TABLE {
        let d = s(lit);
        for d in [d, -d] {
            let row = rows.iter().find(|x| x.d_bar == d).expect("row present");
            let err = (row.rms_standard - std_ref)
                .abs()
                .max((row.rms_switched - sw_ref).abs());
            worst = worst.max(err);
            ok &= err <= 0.01;
        }
    }
    r.line(
        "1",
        "RMS campaign table",
        ok,
        format!("16 rows, max |Δ| = {worst:.4} (tol 0.01)"),
        t,
    );

    let t = Instant::now();
    let sym = rows.iter().all(|row| {
        let m = rows.iter().find(|x| x.d_bar == -row.d_bar).unwrap();
        m.rms_standard == row.rms_standard && m.rms_switched == row.rms_switched
    });
    r.line(
        "P1",
        "RMS sign symmetry",
        sym,
        "rms(+d̄) == rms(−d̄) exactly for every row".into(),
        t,
    );

    let t = Instant::now();
    let better = rows.iter().all(|x| x.rms_switched < x.rms_standard);
    let mean = rows.iter().map(|x| x.improvement).sum::<f64>() / rows.len() as f64;
    r.line(
        "P2",
        "switched improvement",
        better && mean >= 0.25,
        format!("switched < standard on all rows: {better}; mean reduction {mean:.3} (≥ 0.25)"),
        t,
    );
}

fn criteria_2_and_3(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e01);
    let cases = 1000;
    let (mut t1_bad, mut p1_bad) = (0, 0);
    for _ in 0..cases {
        let (alpha, dd, e, u) = random_region_case(&mut rng);
        let region = EntryRegion::new(alpha, dd);
        let traj = simulate(&LoopConfig::shifted(alpha, dd, e, u, 500)).unwrap();
        let v = verify_invariant_set(&traj, &region).unwrap();
        if v.status != VerdictStatus::Pass || v.entry_step != Some(0) {
            t1_bad += 1;
        }
        let p = verify_residual_control(&traj, &alpha, 0).unwrap();
        if p.status != VerdictStatus::Pass || p.checked_steps != 499 {
            p1_bad += 1;
        }
    }
    r.line(
        "2",
        "invariant-set containment",
        t1_bad == 0,
        format!("{cases} exact cases × 500 steps, {t1_bad} violating"),
        t,
    );
    r.line(
        "3",
        "ū = −α·ρ(e) after entry",
        p1_bad == 0,
        format!("{cases} exact cases, h > 1, {p1_bad} violating"),
        t,
    );
}

fn criteria_4_and_11(r: &mut Report) {
    let t = Instant::now();
    let alphas = ["1.05", "1.15", "1.25", "1.35", "1.45"];
    let (mut runs, mut bad, mut band_runs, mut band_bad) = (0, Vec::new(), 0, 0);
    for m in 2..=30i128 {
        for n in 1..m {
            if gcd(n, m) != 1 || 2 * n > m {
                continue;
            }
            for sg in [1, -1] {
                let dd = q(sg * n, m);
                let predicted = predict_cycle(&dd).unwrap();
                for (i, a) in alphas.iter().enumerate() {
                    let alpha = s(a);
                    let (e, u) =
                        region_point(&alpha, &dd, 97 * i as i128 - 211, 113 + 191 * i as i128);
                    let traj = simulate(&LoopConfig::shifted(alpha, dd, e, u, 12 * m as u64 + 60))
                        .unwrap();
                    let detected = detect_cycle(&traj).unwrap();
                    runs += 1;
                    let same = detected.periodic
                        && (detected.n, detected.m) == (n as u64, m as u64)
                        && (predicted.n, predicted.m) == (n as u64, m as u64)
                        && detected.pairs() == predicted.pairs();
                    if !same {
                        bad.push(format!("{dd}@{a}"));
                    }
                    if let Some(b) = check_band(&detected) {
                        band_runs += 1;
                        if !b.inside {
                            band_bad += 1;
                        }
                    }
                }
            }
        }
    }
    let c1 = detect_cycle(
        &simulate(&LoopConfig::shifted(
            s("1.3"),
            s("1/5"),
            s("0.1"),
            Scalar::ZERO,
            200,
        ))
        .unwrap(),
    )
    .unwrap();
    let c2 = detect_cycle(
        &simulate(&LoopConfig::shifted(
            s("1.3"),
            s("-2/5"),
            s("-0.1"),
            Scalar::ZERO,
            200,
        ))
        .unwrap(),
    )
    .unwrap();
    let named = (c1.n, c1.m) == (1, 5) && (c2.n, c2.m) == (2, 5);
    r.line(
        "4",
        "limit-cycle oracle",
        bad.is_empty() && named,
        format!(
            "{runs} runs over coprime n<m≤30, n/m≤1/2, both signs; mismatches {:?}; 1/5→({},{}), −2/5→({},{})",
            bad, c1.n, c1.m, c2.n, c2.m
        ),
        t,
    );

    let t = Instant::now();
    let pos = corollary_band(&s("1/5")).unwrap();
    let neg = corollary_band(&s("-1/5")).unwrap();
    let senses = pos.contains(&s("-3/10"))
        && !pos.contains(&s("7/10"))
        && !neg.contains(&s("-7/10"))
        && neg.contains(&s("3/10"))
        && pos.to_string() == "[-3/10, 7/10)"
        && neg.to_string() == "(-7/10, 3/10]";
    // The 1/5 orbit from e = 0.1 visits the closed endpoint −3/10 exactly.
    let hits_endpoint = c1.witness.iter().any(|w| w.e == s("-3/10"));
    r.line(
        "11",
        "error band of detected cycles",
        band_bad == 0 && band_runs > 0 && senses && hits_endpoint,
        format!("{band_runs} cycles checked, {band_bad} outside; endpoint senses exact: {senses}; closed endpoint attained: {hits_endpoint}"),
        t,
    );
}

fn criterion_5(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a3b);
    let mut bad = 0;
    let cases = 10_000;
    for _ in 0..cases {
        let den: i128 = rng.gen_range(2..=2000);
        let num: i128 = rng.gen_range(1..=den / 2);
        let dd = q(if rng.gen() { num } else { -num }, den);
        let xden: i128 = rng.gen_range(1..=2000);
        let x = q(rng.gen_range(-(xden - 1) / 2..=(xden - 1) / 2), xden);
        let mut e = x;
        let mut steps = 0u64;
        while round_half_away(&e).0 == 0 {
            e = e + dd;
            steps += 1;
        }
        if lambda_steps(&dd, &x).unwrap() != steps {
            bad += 1;
        }
    }
    r.line(
        "5",
        "λ formula vs stepping",
        bad == 0,
        format!("{cases} random (Δd, x⁺), {bad} mismatches"),
        t,
    );
}

fn criterion_6(r: &mut Report) {
    let t = Instant::now();
    let cfg = LoopConfig::shifted(
        fl("11/8"),
        Scalar::sqrt2_minus_1(),
        fl("0"),
        fl("0"),
        100_000,
    );
    let traj = simulate(&cfg).unwrap();
    let report = detect_cycle_approx(&traj, 1e-12).unwrap();
    r.line(
        "6",
        "aperiodicity for Δd = √2−1",
        !report.periodic && traj.len() == 100_001,
        format!(
            "float, 10^5 steps, tol 1e-12: periodic = {}",
            report.periodic
        ),
        t,
    );
}

fn criterion_7(r: &mut Report) {
    let t = Instant::now();
    let spec = GridSpec {
        alpha: Axis::new(s("1.26"), s("1.49"), 24),
        delta_d: Axis::new(s("-0.45"), s("0.45"), 19),
        init_bound: s("10"),
        init_count: 21,
        budget: 10_000,
        mode: ArithmeticMode::Exact,
    };
    let result = sweep(&spec, 0).unwrap();
    let total: u64 = result.cells.iter().map(|c| c.n_inits).sum();
    let hits: u64 = result.cells.iter().map(|c| c.n_theorem1).sum();
    r.line(
        "7",
        "scaled reachability sweep",
        total == spec.trajectory_count() && hits == total,
        format!(
            "{} cells, {hits}/{total} trajectories theorem1-set",
            result.cells.len()
        ),
        t,
    );

    let t = Instant::now();
    let desk = sweep(&GridSpec::desk_scale(), 0).unwrap();
    let mask = attraction_region(&desk);
    let five_quarters = q(5, 4);
    let rect: Vec<_> = mask
        .iter()
        .filter(|m| m.alpha > five_quarters && m.delta_d.abs() < Scalar::HALF)
        .collect();
    let rect_ok = rect.iter().all(|m| m.in_region);
    let edge_ok = mask
        .iter()
        .filter(|m| m.delta_d.abs() == Scalar::HALF)
        .all(|m| !m.in_region);
    let inside = mask.iter().filter(|m| m.in_region).count();
    r.line(
        "7c",
        "desk-scale attraction region",
        rect_ok && edge_ok,
        format!(
            "{} cells, {inside} fully attracted; all {} cells with α > 5/4, |Δd| < 1/2 inside: {rect_ok}; |Δd| = 1/2 cells excluded: {edge_ok}",
            mask.len(),
            rect.len()
        ),
        t,
    );

    // Soundness: from the recorded entry the pairs stay in the minimal set.
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = 0;
    let samples = 200;
    for _ in 0..samples {
        let alpha = q(1260 + 10 * rng.gen_range(0..24), 1000);
        let dd = q(50 * rng.gen_range(-9..=9), 1000);
        let e0 = Scalar::integer(rng.gen_range(-10..=10));
        let u0 = Scalar::integer(rng.gen_range(-10..=10));
        let class = classify_trajectory(&alpha, &dd, &e0, &u0, 10_000).unwrap();
        let Some(k) = class.steps_to_entry else {
            bad += 1;
            continue;
        };
        let horizon = k + 1000;
        let traj = simulate(&LoopConfig::shifted(alpha, dd, e0, u0, horizon)).unwrap();
        let allowed = minimal_invariant_pairs(&dd);
        if class.tag != AttractorTag::MinimalSet
            || traj.records[k as usize..]
                .iter()
                .any(|x| !allowed.contains(&x.pair()))
        {
            bad += 1;
        }
    }
    r.line(
        "7b",
        "classification soundness",
        bad == 0,
        format!(
            "{samples} sampled classifications, re-simulated 10^3 steps past entry, {bad} unsound"
        ),
        t,
    );
}

fn criterion_8(r: &mut Report) {
    let t = Instant::now();
    let target: BTreeSet<QuantizedPair> = [QuantizedPair::new(0, 1), QuantizedPair::new(1, 0)]
        .into_iter()
        .collect();
    let c = classify_trajectory(&fl("1.1"), &fl("-0.3"), &fl("-0.2"), &fl("0.6"), 10_000).unwrap();
    let first = c.tag == AttractorTag::AltUnitSet && c.witness_pairs == target;
    let mut witness = None;
    for a in ["1.1", "1.2", "1.3", "1.4"] {
        if let Some(w) = find_witness(
            &s(a),
            &s("0.5"),
            AttractorTag::Amplitude2Set,
            &s("10"),
            3,
            81,
            10_000,
        )
        .unwrap()
        {
            witness = Some(w);
            break;
        }
    }
    let second = witness
        .as_ref()
        .is_some_and(|w| w.class.witness_pairs == amplitude2_sets()[1]);
    let w = witness
        .map(|w| {
            format!(
                "α={} e0={} ū0={} → {:?}",
                w.alpha,
                w.e0,
                w.u_bar0,
                w.class
                    .witness_pairs
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
            )
        })
        .unwrap_or_else(|| "none found".into());
    r.line(
        "8",
        "known counterexamples",
        first && second,
        format!(
            "(1.1, −0.3, −0.2, 0.6) → {} {:?}; amplitude-2 witness {w}",
            c.tag,
            c.witness_pairs
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
        ),
        t,
    );
}

fn criterion_9(r: &mut Report) {
    let t = Instant::now();
    let cfg = LoopConfig::constant(
        Controller::StandardPi,
        s("1.4"),
        s("1.2"),
        s("2"),
        s("0"),
        400,
    );
    let traj = simulate(&cfg).unwrap();
    let rho: Vec<i128> = traj.records.iter().map(|x| x.rho_e.0).collect();
    // Longest suffix with ρ(e) ∈ {−1, 0, 1} whose non-zero values alternate in sign.
    let mut start = rho.len();
    let mut next_sign = 0;
    while start > 0 {
        let v = rho[start - 1];
        if v.abs() > 1 || (v != 0 && v == next_sign) {
            break;
        }
        if v != 0 {
            next_sign = v;
        }
        start -= 1;
    }
    let tail = &rho[start..];
    let both = tail.contains(&1) && tail.contains(&-1);
    r.line(
        "9",
        "standard-PI degradation",
        tail.len() >= 100 && both,
        format!(
            "alternating ±1 tail of {} steps from k = {start} (excursion 2: {both})",
            tail.len()
        ),
        t,
    );
}

fn criterion_10(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let mut bad = 0;
    let cases = 1000;
    for i in 0..cases {
        let alpha = q(8 + rng.gen_range(1..16), 8);
        let d = q(rng.gen_range(-300..=300), 100);
        let e0 = q(rng.gen_range(-50..=50), 10);
        let u0 = q(rng.gen_range(-50..=50), 10);
        let mut cfg = LoopConfig::constant(Controller::UnquantizedPi, alpha, d, e0, u0, 20);
        if i % 2 == 1 {
            cfg.mode = ArithmeticMode::Float;
            cfg.horizon = 300;
        }
        let a = simulate_law(&cfg, Law::Pi, Quantizer::Identity).unwrap();
        let b = simulate_law(&cfg, Law::SwitchedPi, Quantizer::Identity).unwrap();
        let same = a.records.len() == b.records.len()
            && a.records.iter().zip(&b.records).all(|(x, y)| {
                x.e.mode() == y.e.mode()
                    && x.e.to_parts() == y.e.to_parts()
                    && x.u.to_parts() == y.u.to_parts()
                    && x.e.to_f64().to_bits() == y.e.to_f64().to_bits()
                    && x.u.to_f64().to_bits() == y.u.to_f64().to_bits()
            });
        if !same {
            bad += 1;
        }
    }
    let mut deadbeat_bad = 0;
    for _ in 0..200 {
        let d = q(rng.gen_range(-500..=500), 100);
        let e0 = q(rng.gen_range(-50..=50), 10);
        let u0 = q(rng.gen_range(-50..=50), 10);
        let traj = simulate(&LoopConfig::constant(
            Controller::UnquantizedPi,
            s("2"),
            d,
            e0,
            u0,
            50,
        ))
        .unwrap();
        if traj.records.iter().skip(2).any(|x| !x.e.is_zero()) {
            deadbeat_bad += 1;
        }
    }
    r.line(
        "10",
        "scheme coincidence without quantizers",
        bad == 0 && deadbeat_bad == 0,
        format!("{cases} configs (exact and float), {bad} differing; α = 2 deadbeat: {deadbeat_bad}/200 with e(k≥2) ≠ 0"),
        t,
    );
}

fn ramp(controller: Controller, d2: &str) -> (Vec<i128>, Vec<i128>) {
    let d = Disturbance::ramp(vec![(20, s("2.6")), (40, s(d2))]).unwrap();
    let cfg = LoopConfig {
        disturbance: d,
        ..LoopConfig::constant(
            controller,
            s("11/8"),
            s("2.6"),
            Scalar::ZERO,
            Scalar::ZERO,
            300,
        )
    };
    let traj = simulate(&cfg).unwrap();
    (
        traj.records.iter().map(|x| x.rho_e.0).collect(),
        traj.records.iter().map(|x| x.rho_u.0).collect(),
    )
}

fn excursion(xs: &[i128]) -> i128 {
    xs.iter().max().unwrap() - xs.iter().min().unwrap()
}

fn within(xs: &[i128], lo: i128, hi: i128) -> bool {
    xs.iter().all(|v| (lo..=hi).contains(v))
}

/// Start-up from e0 = u0 = 0 against d = 2.6 takes this many steps.
const STARTUP: usize = 12;

fn ramp_scenarios(r: &mut Report) {
    let t = Instant::now();
    let (e, u) = ramp(Controller::SwitchedPi, "2.4");
    let bounded = within(&e[STARTUP..], -1, 1);
    let transient =
        excursion(&e[30..120]) == 2 && within(&u[37..43], -4, -1) && excursion(&u[37..43]) == 3;
    let settled = excursion(&e[200..]) == 1 && within(&e[200..], 0, 1);
    r.line(
        "R1",
        "ramp 2.6→2.4, switched",
        bounded && transient && settled,
        format!("ρ(e) ∈ [−1, 1] after start-up: {bounded}; transient ρ(e) over [−1, 1], ρ(u) over [−4, −1]: {transient}; final excursion 1: {settled}"),
        t,
    );

    let t = Instant::now();
    let (e, _) = ramp(Controller::SwitchedPi, "2.501");
    let kept = excursion(&e[STARTUP..]) == 1 && within(&e[STARTUP..], -1, 0);
    r.line(
        "R2",
        "ramp 2.6→2.501, switched",
        kept,
        format!("ρ(e) within {{−1, 0}} from start-up to horizon: {kept}"),
        t,
    );

    let t = Instant::now();
    let (e, u) = ramp(Controller::StandardPi, "2.4");
    let whole = within(&e[STARTUP..], -1, 1)
        && e[STARTUP..].windows(30).all(|w| excursion(w) == 2)
        && within(&u[STARTUP..], -4, -1);
    r.line(
        "R3",
        "ramp 2.6→2.4, standard",
        whole,
        format!("ρ(e) over [−1, 1] and ρ(u) within [−4, −1] in every 30-step window to the horizon: {whole}"),
        t,
    );
}

fn csv_round_trip(r: &mut Report) {
    let t = Instant::now();
    let cfg = LoopConfig::constant(
        Controller::SwitchedPi,
        s("11/8"),
        s("-2/7"),
        s("3/4"),
        s("-1/3"),
        1000,
    );
    let traj = simulate(&cfg).unwrap();
    let text = trajectory_csv_string(&traj.records).unwrap();
    let back = read_trajectory_csv(text.as_bytes()).unwrap();
    let rms = rms_quantized_error(&traj, 1000).unwrap();
    r.line(
        "P3",
        "trajectory CSV round-trip (exact)",
        back == traj.records,
        format!("{} records, rms {rms:.3}", back.len()),
        t,
    );
}

fn main() {
    let mut r = Report { failures: 0 };
    criterion_1_and_campaign(&mut r);
    criteria_2_and_3(&mut r);
    criteria_4_and_11(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    criterion_9(&mut r);
    criterion_10(&mut r);
    ramp_scenarios(&mut r);
    csv_round_trip(&mut r);
    // Exact-mode counterpart of criterion 8's first case, for the record.
    let exact = classify_trajectory(&s("1.1"), &s("-0.3"), &s("-0.2"), &s("0.6"), 10_000).unwrap();
    println!(
        "[INFO] 8    exact arithmetic from (1.1, −0.3, −0.2, 0.6): {} entered at k = {:?} (e(1) = 1/2 is a rounding tie)",
        exact.tag, exact.steps_to_entry
    );
    if r.failures > 0 {
        println!("{} criteria failed", r.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
