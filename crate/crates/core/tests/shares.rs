use std::collections::BTreeMap;

use creditrd_core::geo::{
    CommutingZone, CongressionalDistrict, CountyFips, CountyZoneRow, DistrictRow, Geography,
    RelationshipRow, Zcta,
};
use creditrd_core::rd::{CreditRecord, Provenance, ThresholdEstimate};
use creditrd_core::shares::{
    compute_shares, render_share_table, shares_from_counts, summarize_shares, ScoreHistogram,
    ShareSummary, BANDWIDTHS,
};
use creditrd_core::synth::{generate_credit_panel, WorldConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn share_table_layout_matches_fixture_exactly() {
    let summary: Vec<ShareSummary> = csv::Reader::from_path(fixture("table5_summary.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    let expected = std::fs::read_to_string(fixture("table5.txt")).unwrap();
    assert_eq!(render_share_table(&summary), expected);
}

proptest! {
    #[test]
    fn shares_partition_and_grow_with_bandwidth(
        scores in prop::collection::vec(300u16..=850, 0..400),
        cutoff in (112i32..=132).prop_map(|k| 5 * k),
    ) {
        let mut h = ScoreHistogram::default();
        for s in &scores {
            h.add(*s);
        }
        let mut last = -1.0;
        for b in BANDWIDTHS {
            let (below, above) = h.around(cutoff, b);
            let (t, a, bl) = shares_from_counts(below, above, h.total());
            prop_assert_eq!(a + bl, t);
            for v in [t, a, bl] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(t >= last);
            last = t;
            let direct_above = scores.iter().filter(|&&s| (cutoff..cutoff + b).contains(&(s as i32))).count() as u64;
            let direct_below = scores.iter().filter(|&&s| (cutoff - b..cutoff).contains(&(s as i32))).count() as u64;
            prop_assert_eq!((below, above), (direct_below, direct_above));
        }
    }
}

fn world(seed: u64) -> (creditrd_core::synth::CreditWorld, Geography) {
    let cfg = WorldConfig {
        n_czs: 8,
        seed,
        ..Default::default()
    };
    let world = generate_credit_panel(&cfg).unwrap();
    let geo = world.geography.build().unwrap();
    (world, geo)
}

#[test]
fn synthetic_worlds_keep_share_bookkeeping() {
    for seed in 0..4 {
        let (world, geo) = world(seed);
        let years = world.config.election_years();
        let build = compute_shares(
            &world.records,
            &world.planted_thresholds(),
            &geo,
            &BANDWIDTHS,
            &years,
        );
        assert_eq!(
            build.records.len(),
            geo.cells.len() * years.len() * BANDWIDTHS.len()
        );
        let mut by_cell: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for r in &build.records {
            let (t, a, b) = (
                r.share_total.unwrap(),
                r.share_above.unwrap(),
                r.share_below.unwrap(),
            );
            assert_eq!(a + b, t);
            by_cell
                .entry((r.cell_id, r.year))
                .or_default()
                .push((r.bandwidth, t));
        }
        for v in by_cell.values_mut() {
            v.sort_by_key(|(b, _)| *b);
            assert!(v.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}

#[test]
fn cell_shares_aggregate_to_zone_shares() {
    let (world, geo) = world(11);
    let years = world.config.election_years();
    let thresholds = world.planted_thresholds();
    let build = compute_shares(&world.records, &thresholds, &geo, &[15], &years);
    let cutoff: BTreeMap<(CommutingZone, i32), i32> = thresholds
        .iter()
        .map(|t| ((t.commuting_zone, t.year), t.cutoff))
        .collect();

    let mut aggregate: BTreeMap<(CommutingZone, i32), (f64, f64)> = BTreeMap::new();
    for r in &build.records {
        let cz = geo.cells[&r.cell_id].commuting_zone;
        let e = aggregate.entry((cz, r.year)).or_default();
        e.0 += r.share_total.unwrap() * r.cell_population as f64;
        e.1 += r.cell_population as f64;
    }
    let mut direct: BTreeMap<(CommutingZone, i32), (u64, u64)> = BTreeMap::new();
    for r in world.records.iter().filter(|r| years.contains(&r.year)) {
        let c = cutoff[&(r.commuting_zone, r.year)];
        let e = direct.entry((r.commuting_zone, r.year)).or_default();
        e.0 += u64::from((c - 15..c + 15).contains(&(r.credit_score as i32)));
        e.1 += 1;
    }
    assert_eq!(aggregate.len(), direct.len());
    for (k, (num, den)) in &aggregate {
        let (hits, n) = direct[k];
        let direct_share = hits as f64 / n as f64;
        assert!((num / den - direct_share).abs() < 1e-12, "{k:?}");
    }
}

fn single_cell_geography() -> Geography {
    Geography::build(
        &[RelationshipRow {
            zcta: Zcta(10001),
            county_fips: CountyFips(1001),
            population_overlap: 100,
        }],
        &[DistrictRow {
            zcta: Zcta(10001),
            district: CongressionalDistrict(101),
            congress: 112,
        }],
        &[CountyZoneRow {
            county_fips: CountyFips(1001),
            commuting_zone: CommutingZone(100),
        }],
    )
    .unwrap()
}

fn person(i: u64, score: u16) -> CreditRecord {
    CreditRecord {
        person_id: i,
        year: 2010,
        credit_score: score,
        total_credit_limit: 1000.0,
        zcta: Zcta(10001),
        county_fips: CountyFips(1001),
        commuting_zone: CommutingZone(100),
    }
}

fn threshold(cutoff: i32) -> ThresholdEstimate {
    ThresholdEstimate {
        commuting_zone: CommutingZone(100),
        year: 2010,
        cutoff,
        alpha: 1.0,
        se: 0.1,
        t_stat: 10.0,
        provenance: Provenance::Detected,
        source_year: 2010,
    }
}

#[test]
fn uniform_population_matches_analytic_share() {
    let geo = single_cell_geography();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let records: Vec<CreditRecord> = (0..n).map(|i| person(i, rng.gen_range(500..700))).collect();
    let build = compute_shares(&records, &[threshold(600)], &geo, &[15], &[2010]);
    let s = build.records[0].share_total.unwrap();
    let p = 30.0 / 200.0;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((s - p).abs() < 4.0 * se, "{s} vs {p}");
    let summary = summarize_shares(&build.records);
    assert_eq!(summary[0].mean, s);
    assert_eq!(summary[0].total_weight, n);
}

#[test]
fn hand_counted_cell() {
    let geo = single_cell_geography();
    let scores = [590, 600, 610, 700, 710, 720, 730, 740, 750, 760];
    let records: Vec<CreditRecord> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| person(i as u64, s))
        .collect();
    let build = compute_shares(&records, &[threshold(600)], &geo, &[15], &[2010]);
    let r = build.records[0];
    assert_eq!(r.cell_population, 10);
    assert!((r.share_total.unwrap() - 0.3).abs() < 1e-15);
    assert!((r.share_above.unwrap() - 0.2).abs() < 1e-15);
    assert!((r.share_below.unwrap() - 0.1).abs() < 1e-15);
}

#[test]
fn zone_without_threshold_gives_null_shares_and_log() {
    let geo = single_cell_geography();
    let build = compute_shares(&[person(1, 650)], &[], &geo, &[5, 15], &[2010]);
    assert_eq!(build.records.len(), 2);
    assert!(build
        .records
        .iter()
        .all(|r| r.share_total.is_none() && r.cell_population == 1));
    assert_eq!(build.log.len(), 1);
    assert!(build.log[0].message.contains("no threshold"));
}
