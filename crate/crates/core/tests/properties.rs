use nbshift::markers::{check_partition, decompose};
use nbshift::matching::{dominates, match_by_rounds, meshalkin_match, AbSequence, Letter};
use nbshift::measure::make_nu_c;
use nbshift::sampling::sample_window;
use nbshift::{IndexRange, ProductMeasure, SeedStream, Window};
use proptest::prelude::*;

fn ab(bits: &[bool]) -> AbSequence {
    AbSequence::new(0, bits.iter().map(|&a| if a { Letter::A } else { Letter::B }).collect())
}

proptest! {
    #[test]
    fn sampling_is_a_function_of_seed_and_index(seed in any::<u64>(), first in -500i64..500, len in 1usize..400, cut in 0usize..400) {
        let m = make_nu_c(0.3).unwrap();
        let seeds = SeedStream::new(seed);
        let whole = sample_window(&m, IndexRange::with_len(first, len), &seeds);
        let cut = cut.min(len - 1);
        let tail = sample_window(&m, IndexRange::with_len(first + cut as i64, len - cut), &seeds);
        prop_assert_eq!(&whole.values[cut..], &tail.values[..]);
    }

    #[test]
    fn markers_and_fillers_partition(bits in proptest::collection::vec(0u8..2, 0..200), start in -50i64..50) {
        let w = Window::new(start, bits);
        prop_assert!(check_partition(&w).is_ok());
        let d = decompose(&w);
        for s in &d.specials {
            let pair = (w.get(s.index).copied(), w.get(s.index + 1).copied());
            prop_assert_eq!(pair, if s.bit == 1 { (Some(1), Some(0)) } else { (Some(0), Some(1)) });
        }
    }

    #[test]
    fn matching_respects_capacity(bits in proptest::collection::vec(any::<bool>(), 0..120), d in 1usize..5) {
        let z = ab(&bits);
        let m = meshalkin_match(&z, d).unwrap();
        prop_assert!(m.validate().is_ok());
        let (pairs, unmatched) = match_by_rounds(&z, d);
        prop_assert_eq!(&m.pairs, &pairs);
        prop_assert_eq!(&m.unmatched, &unmatched);
    }

    #[test]
    fn more_a_never_unmatches(bits in proptest::collection::vec(any::<bool>(), 1..120), flips in proptest::collection::vec(any::<bool>(), 120), d in 1usize..4) {
        let z = ab(&bits);
        let bits2: Vec<bool> = bits.iter().zip(&flips).map(|(a, f)| *a || *f).collect();
        let z2 = ab(&bits2);
        prop_assert!(dominates(&z, &z2).unwrap());
        let (m1, m2) = (meshalkin_match(&z, d).unwrap(), meshalkin_match(&z2, d).unwrap());
        for p in &m1.pairs {
            if z2.get(p.b) == Some(Letter::B) {
                let a2 = m2.partner(p.b);
                prop_assert!(a2.is_some_and(|a2| a2 <= p.a), "b {} matched at {} then {:?}", p.b, p.a, a2);
            }
        }
    }
}

#[test]
fn fair_coin_window_statistics() {
    let m = ProductMeasure::iid_binary(0.5).unwrap();
    let w = sample_window(&m, IndexRange::with_len(0, 200_000), &SeedStream::new(3));
    let zeros = w.values.iter().filter(|&&s| s == 0).count() as f64;
    let z = (zeros - 100_000.0) / (50_000.0f64).sqrt();
    assert!(z.abs() < 4.0, "z = {z}");
}
