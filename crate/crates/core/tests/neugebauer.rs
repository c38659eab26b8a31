use npcolor::neugebauer::{enumerate_nps, np_count, predict, predict_entries};
use npcolor::press::synth_np_table;
use npcolor::{InkSet, NPac, NpTable, PressModel, YnParams};
use proptest::prelude::*;
use std::sync::LazyLock;

static TABLE: LazyLock<NpTable> = LazyLock::new(|| synth_np_table(&PressModel::demo_cmyk()).unwrap());

fn arb_entries() -> impl Strategy<Value = Vec<(u64, f64)>> {
    prop::collection::vec((0u64..16, 0.01f64..1.0), 1..8).prop_map(|e| {
        let s: f64 = e.iter().map(|x| x.1).sum();
        e.into_iter().map(|(id, w)| (id, w / s)).collect()
    })
}

#[test]
fn enumeration_matches_the_count() {
    for (k, n) in [(2, 3), (3, 4), (4, 2), (2, 8)] {
        let inkset = InkSet::anonymous(k, n).unwrap();
        let count = np_count(&inkset).unwrap();
        assert_eq!(count, (k as u64).pow(n as u32));
        let all: Vec<_> = enumerate_nps(&inkset).unwrap().into_iter().collect();
        assert_eq!(all.len() as u64, count);
        for (i, (id, drops)) in all.iter().enumerate() {
            assert_eq!(*id, i as u64);
            assert_eq!(inkset.encode(drops).unwrap(), *id);
        }
    }
}

#[test]
fn predicting_a_single_np_returns_its_spectrum() {
    for id in TABLE.ids() {
        let s = predict(&NPac::single(id), &TABLE, TABLE.yn()).unwrap();
        assert_eq!(&s, TABLE.spectrum(id).unwrap());
    }
}

proptest! {
    #[test]
    fn prediction_is_bounded_by_the_primaries(entries in arb_entries(), n in 1.0f64..10.0) {
        let yn = YnParams::new(n).unwrap();
        let npac = NPac::new(entries).unwrap();
        let s = predict(&npac, &TABLE, yn).unwrap();
        for i in 0..s.values().len() {
            let vals: Vec<f64> = npac.ids().map(|id| TABLE.spectrum(id).unwrap().values()[i]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(0.0, f64::max);
            prop_assert!(s.values()[i] >= lo - 1e-12 && s.values()[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn unit_exponent_is_linear_mixing(entries in arb_entries()) {
        let yn = YnParams::new(1.0).unwrap();
        let npac = NPac::new(entries).unwrap();
        let s = predict(&npac, &TABLE, yn).unwrap();
        for i in 0..s.values().len() {
            let want: f64 = npac.entries().iter().map(|&(id, w)| w * TABLE.spectrum(id).unwrap().values()[i]).sum();
            prop_assert!((s.values()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_ids_merge(entries in arb_entries()) {
        // Splitting each weight in two equal entries changes nothing.
        let split: Vec<_> = entries.iter().flat_map(|&(id, w)| [(id, w / 2.0), (id, w / 2.0)]).collect();
        let a = NPac::new(entries.clone()).unwrap();
        let b = NPac::new(split.clone()).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.entries().iter().zip(b.entries()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-15);
        }
        let yn = TABLE.yn();
        let merged = predict(&a, &TABLE, yn).unwrap();
        let raw = predict_entries(&split, &TABLE, yn).unwrap();
        for (x, y) in merged.values().iter().zip(raw.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn npac_json_round_trips(entries in arb_entries()) {
        let a = NPac::new(entries).unwrap();
        let back: NPac = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        prop_assert_eq!(a.entries().len(), back.entries().len());
        for (x, y) in a.entries().iter().zip(back.entries()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-15);
        }
    }

    #[test]
    fn ids_round_trip(k in 2u32..5, n in 1usize..6, seed in any::<u64>()) {
        let inkset = InkSet::anonymous(k, n).unwrap();
        let id = seed % np_count(&inkset).unwrap();
        prop_assert_eq!(inkset.encode(&inkset.decode(id)).unwrap(), id);
    }
}
