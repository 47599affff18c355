//! Acceptance gate. Runs criteria 1 to 9 in order, prints one PASS/FAIL line
//! for each, and fails if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use cvqkd::channel::{ChannelParams, DetectorModel};
use cvqkd::model::ModulationConfig;
use cvqkd::privacy::{compress, seed_length, BinaryKey};
use cvqkd::rates::{
    delta_i_asymptotic, delta_i_coherent, delta_i_epr, empirical_mutual_information, optimal_modulation,
    modulation_scaling_exponent, shannon_rate, squeezed_information_rates, coherent_snrs,
};
use cvqkd::reconcile::{analyze, optimize_thresholds};
use cvqkd::report::{cmd_fig1, cmd_keygen, simulate_frames, RunConfig};
use cvqkd::GaussianSampler;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// Written straight to stdout so the lines show up without --nocapture.
fn line(n: u32, o: &Outcome, took: Duration) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    let text = format!("acceptance {n}: {verdict} ({:.2} s) {}\n", took.as_secs_f64(), o.detail);
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

/// V over (1, 100] and χ over (0, 3], 50 points each.
fn grid() -> Vec<(f64, f64)> {
    let mut g = Vec::with_capacity(2500);
    for i in 1..=50 {
        let v = 1.0 + 99.0 * i as f64 / 50.0;
        for j in 1..=50 {
            g.push((v, 3.0 * j as f64 / 50.0));
        }
    }
    g
}

fn formula_identities() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (v, chi) in grid() {
        let coherent = delta_i_coherent(v, chi).unwrap();
        for s in [1.0, v.sqrt().recip(), 1.25 / v] {
            let (ab, ae) = squeezed_information_rates(v, s, chi).unwrap();
            worst = worst.max((ab - ae - coherent).abs());
        }
        worst = worst.max((delta_i_epr(v, chi).unwrap() - coherent).abs());
    }
    let took = start.elapsed();
    outcome(
        worst <= 1e-12 && took < Duration::from_secs(1),
        format!("coherent / squeezed (s = 1, V^-1/2, 1.25/V) / EPR on 50x50 grid, max |diff| = {worst:.2e}, {:.3} s", took.as_secs_f64()),
    )
}

fn security_boundary() -> Outcome {
    let mut mismatches = 0;
    for (v, chi) in grid() {
        if (delta_i_coherent(v, chi).unwrap() > 0.0) != (chi < 1.0) {
            mismatches += 1;
        }
    }
    let at_one = (1..=50)
        .map(|i| delta_i_coherent(1.0 + 99.0 * i as f64 / 50.0, 1.0).unwrap().abs())
        .fold(0.0, f64::max);
    outcome(
        mismatches == 0 && at_one <= 1e-12,
        format!("sign mismatches {mismatches}/2500, max |dI(chi = 1)| = {at_one:.1e}"),
    )
}

fn asymptote() -> Outcome {
    // The large-modulation limit is the secret rate of the secure region
    // and is approached from below there. For chi > 1 the gap is
    // ½log₂(1 + (χ² − 1)/(1 + Vχ)), which exceeds 0.01 on part of the grid.
    let (mut worst_in, mut worst_out, mut checked) = (0.0f64, 0.0f64, 0);
    let mut from_below = true;
    let large: Vec<(f64, f64)> = (0..50)
        .flat_map(|i| (1..=50).map(move |j| (10f64.powf(6.0 * i as f64 / 49.0), 3.0 * j as f64 / 50.0)))
        .collect();
    for (v, chi) in large {
        if chi * v < 100.0 {
            continue;
        }
        let gap = delta_i_coherent(v, chi).unwrap() - delta_i_asymptotic(chi).unwrap();
        if chi <= 1.0 {
            checked += 1;
            worst_in = worst_in.max(gap.abs());
            from_below &= gap <= 1e-15;
        } else {
            worst_out = worst_out.max(gap.abs());
        }
    }
    let spot = delta_i_asymptotic(0.5).unwrap();
    let limit = delta_i_coherent(1e12, 0.5).unwrap();
    outcome(
        checked > 0 && worst_in < 0.01 && from_below && spot == 0.5 && (limit - 0.5).abs() < 1e-9,
        format!(
            "V in [1, 1e6], chi <= 1, chiV >= 100: {checked} points, max gap {worst_in:.4} (from below); \
             chi > 1 not covered, max gap there {worst_out:.4}; asymptote(0.5) = {spot}"
        ),
    )
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut fails = 0;
    for (k, &v_a) in [1.0, 5.0, 50.0].iter().enumerate() {
        for (m, &eta) in [0.95, 0.8, 0.6].iter().enumerate() {
            let modulation = ModulationConfig::coherent(v_a).unwrap();
            let channel = ChannelParams::from_transmission(eta).unwrap();
            let root = GaussianSampler::new(1000 + 10 * k as u64 + m as u64);
            let frames = simulate_frames(&modulation, &channel, &DetectorModel::IDEAL, 100_000, &root).unwrap();
            let snr = coherent_snrs(v_a + 1.0, channel.chi()).unwrap();
            for (side, frame, target) in [("bob", &frames.bob, snr.sigma_b), ("eve", &frames.eve, snr.sigma_e)] {
                let mi = empirical_mutual_information(frame).unwrap();
                let z = (mi.bits - shannon_rate(target).unwrap()).abs() / mi.std_error;
                if z > 3.0 {
                    fails += 1;
                }
                if z > worst.0 {
                    worst = (z, format!("{side} V_A={v_a} eta={eta}"));
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(
        fails == 0 && took < Duration::from_secs(30),
        format!("18 comparisons at N = 1e5, {fails} beyond 3 SE, worst z = {:.2} ({})", worst.0, worst.1),
    )
}

fn slice_benchmark() -> Outcome {
    let start = Instant::now();
    let config = optimize_thresholds(15.0, 5).unwrap();
    let a = analyze(15.0, &config).unwrap();
    let took = start.elapsed();
    let (eff, p4, p5) = (a.ideal_efficiency(), a.correct_probability(4), a.correct_probability(5));
    outcome(
        eff >= 0.90
            && (p4 - 0.976).abs() <= 0.005
            && (p5 - 0.999994).abs() <= 2e-5
            && took < Duration::from_secs(60),
        format!("Sigma = 15, n = 5: ideal efficiency {eff:.4}, P4 = {p4:.5}, P5 = {p5:.7}"),
    )
}

fn key_agreement() -> Outcome {
    let cfg = RunConfig::parse("va=50\neta=0.8\nslices=5\nsamples=10000\nseed=7").unwrap();
    let out = cmd_keygen(&cfg).unwrap();
    let same = out.alice_key.serialize() == out.bob_key.serialize();
    let gap = out.relative_gap();
    let mut empty = true;
    for eta in ["0.5", "0.45", "0.3"] {
        let c = RunConfig::parse(&format!("va=50\neta={eta}\nsamples=10000\nseed=7")).unwrap();
        empty &= cmd_keygen(&c).unwrap().final_bits == 0;
    }
    outcome(
        same && out.final_bits > 0 && gap <= 0.15 && empty,
        format!(
            "{} identical bits, rate {:.4} vs predicted {:.4} (gap {:.1}%), eta <= 0.5 gives empty keys: {empty}",
            out.final_bits,
            out.final_rate,
            out.predicted_rate,
            100.0 * gap
        ),
    )
}

fn figure_curves() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out: Some(dir.path().join("fig1.csv")),
        ..RunConfig::default()
    };
    let fig = cmd_fig1(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows: Vec<[f64; 4]> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            [0, 1, 2, 3].map(|i| r[i].parse::<f64>().unwrap())
        })
        .collect();
    let curve = |v_a: f64, alpha: f64| -> Vec<[f64; 4]> { rows.iter().copied().filter(|r| r[1] == v_a && r[2] == alpha).collect() };
    let (c1, c5, c50) = (curve(1.0, 1.0), curve(5.0, 1.0), curve(50.0, 1.0));
    let mut ordered = c1.len() == 200 && c5.len() == 200 && c50.len() == 200;
    for i in 0..c1.len().min(c5.len()).min(c50.len()) {
        if c1[i][0] < 1.0 {
            ordered &= c50[i][3] >= c5[i][3] && c5[i][3] >= c1[i][3];
        }
    }
    let vanish = [&c1, &c5, &c50]
        .iter()
        .flat_map(|c| c.iter().filter(|r| r[0] == 1.0))
        .all(|r| r[3].abs() <= 1e-12);
    let crossings: Vec<f64> = fig.crossings.iter().map(|c| c.chi.unwrap()).collect();
    let left = crossings.iter().all(|&x| x > 0.0 && x < 1.0);
    // default pairing (alpha 0.6, 0.8, 0.95 for V_A 1, 5, 50) and, per V_A,
    // the crossing against alpha
    let mut moves_left = crossings.windows(2).all(|w| w[0] < w[1]);
    for v_a in [1.0, 5.0, 50.0] {
        let xs: Vec<f64> = [0.6, 0.8, 0.95]
            .iter()
            .map(|&a| cvqkd::report::fig1_zero_crossing(v_a, a).unwrap().unwrap())
            .collect();
        moves_left &= xs.windows(2).all(|w| w[0] < w[1]) && xs[2] < 1.0;
    }
    outcome(
        ordered && vanish && left && moves_left,
        format!("{} rows; ordering {ordered}, vanish at chi = 1 {vanish}, dashed crossings {crossings:.4?}", rows.len()),
    )
}

fn detector_optimum() -> Outcome {
    let opt = optimal_modulation(1e4, 0.01, 0.25, 1.0);
    let interior = matches!(&opt, Ok(o) if o.v_a.is_finite() && o.v_a > 1e-3 && o.v_a < 1e12 && o.delta_i_eff > 0.0);
    let sigmas: Vec<f64> = (0..=8).map(|i| 10f64.powf(2.0 + 0.5 * i as f64)).collect();
    let slope = modulation_scaling_exponent(&sigmas, 0.01, 0.25, 1.0).unwrap();
    outcome(
        interior && (0.3..=0.7).contains(&slope),
        format!(
            "V_A*(1e4) = {:.4}, slope over sigma 1e2..1e6 = {slope:.4}",
            opt.map(|o| o.v_a).unwrap_or(f64::NAN)
        ),
    )
}

fn naive_hash(key: &[bool], seed: &[bool], out_len: usize) -> Vec<bool> {
    (0..out_len)
        .map(|j| key.iter().enumerate().fold(false, |acc, (i, &k)| acc ^ (k & seed[out_len - 1 - j + i])))
        .collect()
}

fn privacy_properties() -> Outcome {
    let s = GaussianSampler::new(42);
    let (klen, olen) = (700, 300);
    let mut linear = true;
    let mut deterministic = true;
    for t in 0..20u64 {
        let a = BinaryKey::random(klen, &s.fork(3 * t));
        let b = BinaryKey::random(klen, &s.fork(3 * t + 1));
        let seed = BinaryKey::random(seed_length(klen, olen), &s.fork(3 * t + 2));
        let ha = compress(&a, &seed, olen).unwrap();
        let hb = compress(&b, &seed, olen).unwrap();
        linear &= compress(&a.xor(&b).unwrap(), &seed, olen).unwrap() == ha.xor(&hb).unwrap();
        let bits_a: Vec<bool> = a.iter().collect();
        let bits_s: Vec<bool> = seed.iter().collect();
        deterministic &= ha == compress(&a, &seed, olen).unwrap()
            && ha.iter().collect::<Vec<_>>() == naive_hash(&bits_a, &bits_s, olen);
    }

    let k1 = BinaryKey::random(32, &s.fork_named("k1"));
    let mut k2 = k1.clone();
    k2.set(5, !k2.get(5));
    k2.set(20, !k2.get(20));
    let trials = 10_000u64;
    let seeds = s.fork_named("seeds");
    let collisions = (0..trials)
        .filter(|&t| {
            let seed = BinaryKey::random(seed_length(32, 16), &seeds.fork(t));
            compress(&k1, &seed, 16).unwrap() == compress(&k2, &seed, 16).unwrap()
        })
        .count() as f64;
    let p = 2f64.powi(-16);
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    let universal = (collisions - mean).abs() <= 5.0 * sd;

    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/toeplitz_vector.txt")).unwrap();
    let field = |name: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name}=")))
            .unwrap()
            .trim()
            .to_string()
    };
    let bits = |s: String| s.chars().map(|c| c == '1').collect::<Vec<bool>>();
    let (key, seed, expect) = (bits(field("key")), bits(field("seed")), bits(field("output")));
    let out_len: usize = field("out_len").parse().unwrap();
    let fast = compress(
        &BinaryKey::from_bits(key.iter().copied()),
        &BinaryKey::from_bits(seed.iter().copied()),
        out_len,
    )
    .unwrap();
    let frozen = naive_hash(&key, &seed, out_len) == expect && fast.iter().collect::<Vec<_>>() == expect;

    outcome(
        linear && deterministic && universal && frozen,
        format!(
            "linearity {linear}, determinism {deterministic}, collisions {collisions} vs {mean:.3} +- {sd:.3}, frozen vector {frozen}"
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, formula_identities),
        (2, security_boundary),
        (3, asymptote),
        (4, monte_carlo),
        (5, slice_benchmark),
        (6, key_agreement),
        (7, figure_curves),
        (8, detector_optimum),
        (9, privacy_properties),
    ];
    let mut failed = Vec::new();
    for (n, check) in criteria {
        let start = Instant::now();
        let o = check();
        line(n, &o, start.elapsed());
        if !o.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
