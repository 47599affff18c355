use proptest::prelude::*;

use cvqkd::privacy::{compress, final_key_length, seed_length, AmplificationBudget, BinaryKey};
use cvqkd::rates::{coherent_snrs, delta_i_coherent, delta_i_epr, shannon_rate, squeezed_information_rates};
use cvqkd::reconcile::{assign_slice_bits, slice_code, slice_index, Record, SliceConfig, Transcript};
use cvqkd::report::RunConfig;
use cvqkd::GaussianSampler;

fn key(bits: &[bool]) -> BinaryKey {
    BinaryKey::from_bits(bits.iter().copied())
}

fn naive(key: &[bool], seed: &[bool], out_len: usize) -> Vec<bool> {
    (0..out_len)
        .map(|j| key.iter().enumerate().fold(false, |acc, (i, &k)| acc ^ (k & seed[out_len - 1 - j + i])))
        .collect()
}

fn key_and_seed() -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<bool>, usize)> {
    (1usize..300)
        .prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n + m - 1),
                Just(m),
            )
        })
}

fn record() -> impl Strategy<Value = Record> {
    prop_oneof![
        any::<u8>().prop_map(Record::SliceStart),
        (any::<u16>(), any::<u32>(), any::<u32>()).prop_map(|(pass, start, len)| Record::ParityReq { pass, start, len }),
        (0u8..2).prop_map(Record::ParityResp),
        (any::<u32>(), 0u8..2).prop_map(|(pos, bit)| Record::Reveal { pos, bit }),
        any::<u32>().prop_map(Record::HashCheck),
        Just(Record::Done),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hash_is_linear((a, b, seed, m) in key_and_seed()) {
        let s = key(&seed);
        let lhs = compress(&key(&a).xor(&key(&b)).unwrap(), &s, m).unwrap();
        let rhs = compress(&key(&a), &s, m).unwrap().xor(&compress(&key(&b), &s, m).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn hash_matches_bitwise_evaluation((a, _b, seed, m) in key_and_seed()) {
        let fast: Vec<bool> = compress(&key(&a), &key(&seed), m).unwrap().iter().collect();
        prop_assert_eq!(fast, naive(&a, &seed, m));
    }

    #[test]
    fn key_serialization_round_trips(bits in prop::collection::vec(any::<bool>(), 0..500)) {
        let k = key(&bits);
        prop_assert_eq!(BinaryKey::deserialize(&k.serialize()).unwrap(), k.clone());
        prop_assert_eq!(BinaryKey::parse_bits(&k.to_bit_string()).unwrap(), k);
    }

    #[test]
    fn final_length_is_the_clamped_difference(raw in 0u64..1 << 40, leak in 0u64..1 << 40, eve in 0u64..1 << 40, margin in 0u64..1000) {
        let b = AmplificationBudget { raw_bits: raw, leaked_bits: leak, eve_bits: eve, safety_margin: margin };
        let want = (raw as i128 - leak as i128 - eve as i128 - margin as i128).max(0) as u64;
        prop_assert_eq!(final_key_length(&b), want);
    }

    #[test]
    fn seed_length_fits_compress(n in 1usize..2000, m in 1usize..2000) {
        prop_assume!(m <= n);
        prop_assert_eq!(seed_length(n, m), n + m - 1);
    }

    #[test]
    fn slice_bits_spell_the_interval_code(n in 1u32..=8, step in 0.05f64..1.0, value in -30.0f64..30.0) {
        let cfg = SliceConfig::uniform(n, step).unwrap();
        let p = slice_index(value, &cfg);
        prop_assert!((1..=1usize << n).contains(&p));
        let code = slice_code(value, &cfg);
        prop_assert_eq!(code as usize, p % (1 << n));
        let bits = assign_slice_bits(value, &cfg);
        prop_assert_eq!(bits.len(), n as usize);
        for (k, &b) in bits.iter().enumerate() {
            prop_assert_eq!(b as u32, (code >> k) & 1);
        }
    }

    #[test]
    fn slice_index_is_monotone(n in 1u32..=8, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let cfg = SliceConfig::equiprobable(n).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(slice_index(lo, &cfg) <= slice_index(hi, &cfg));
    }

    #[test]
    fn rate_identities(v in 1.0f64..1e4, chi in 1e-6f64..10.0, frac in 0.0f64..1.0) {
        let coherent = delta_i_coherent(v, chi).unwrap();
        // any feasible squeezing, s between 1/V and 1
        let s = (1.0 / v).powf(frac);
        if v >= 1.0 / s {
            let (ab, ae) = squeezed_information_rates(v, s, chi).unwrap();
            prop_assert!((ab - ae - coherent).abs() < 1e-10);
        }
        prop_assert!((delta_i_epr(v, chi).unwrap() - coherent).abs() < 1e-10);
    }

    #[test]
    fn secure_exactly_below_unit_noise(v in 1.001f64..1e4, chi in 1e-6f64..10.0) {
        prop_assume!((chi - 1.0).abs() > 1e-9);
        prop_assert_eq!(delta_i_coherent(v, chi).unwrap() > 0.0, chi < 1.0);
    }

    #[test]
    fn rate_moves_with_modulation(v in 1.0f64..1e4, dv in 0.0f64..1e3, chi in 1e-6f64..10.0) {
        let (a, b) = (delta_i_coherent(v, chi).unwrap(), delta_i_coherent(v + dv, chi).unwrap());
        if chi < 1.0 {
            prop_assert!(b >= a - 1e-12);
        } else {
            prop_assert!(b <= a + 1e-12);
        }
    }

    #[test]
    fn raw_rate_approaches_log_ratio(v in 50.0f64..1e6, chi in 0.0f64..10.0) {
        let i_ab = shannon_rate(coherent_snrs(v, chi).unwrap().sigma_b).unwrap();
        let gap = (i_ab - 0.5 * (v / (1.0 + chi)).log2()).abs();
        prop_assert!(gap <= 0.5 * (1.0 + chi / v).log2() + 1e-12);
    }

    #[test]
    fn transcripts_round_trip(records in prop::collection::vec(record(), 0..200)) {
        let t = Transcript { records };
        prop_assert_eq!(Transcript::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn sampler_is_a_pure_function(seed in any::<u64>(), i in any::<u64>()) {
        let (a, b) = (GaussianSampler::new(seed), GaussianSampler::new(seed));
        prop_assert_eq!(a.normal(i).to_bits(), b.normal(i).to_bits());
        prop_assert_eq!(a.fork_named("x").word(i), b.fork_named("x").word(i));
        let u = a.uniform(i);
        prop_assert!(u > 0.0 && u < 1.0);
    }

    #[test]
    fn config_reports_what_it_parses(seed in any::<u64>(), va in 0.0f64..1e6, eta in 0.01f64..1.0, slices in 1u32..=8) {
        let cfg = RunConfig::parse(&format!("seed={seed}\nva={va}\neta={eta}\nslices={slices}")).unwrap();
        let text: String = cfg.pairs().into_iter().filter(|(_, v)| v != "-").map(|(k, v)| format!("{k}={v}\n")).collect();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
