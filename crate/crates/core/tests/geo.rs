use std::collections::{BTreeMap, BTreeSet};

use creditrd_core::geo::{
    build_ccd_cells, county_district_pairs, zcta_to_county_majority, CountyFips, CountyZoneMap,
    CountyZoneRow, Geography, RelationshipRow, Zcta, ZctaDistrictMap,
};
use creditrd_core::synth::{generate_geography, WorldConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows_strategy() -> impl Strategy<Value = Vec<RelationshipRow>> {
    prop::collection::vec((0u32..40, 1u32..8, 0u64..5), 1..120).prop_map(|v| {
        v.into_iter()
            .map(|(z, c, p)| RelationshipRow {
                zcta: Zcta(10_000 + z),
                county_fips: CountyFips(1000 + 2 * c + 1),
                population_overlap: p * 100,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn every_zcta_is_mapped_or_excluded_once(rows in rows_strategy()) {
        let out = zcta_to_county_majority(&rows);
        let input: BTreeSet<Zcta> = rows.iter().map(|r| r.zcta).collect();
        for z in &input {
            let excluded = out.exclusions.iter().filter(|e| e.kind == "zcta" && e.code == z.to_string()).count();
            prop_assert_eq!(usize::from(out.map.contains_key(z)) + excluded, 1);
        }
        prop_assert_eq!(out.map.len() + out.exclusions.len(), input.len());
    }

    #[test]
    fn majority_county_has_maximal_overlap(rows in rows_strategy()) {
        let out = zcta_to_county_majority(&rows);
        let mut pop: BTreeMap<(Zcta, CountyFips), u64> = BTreeMap::new();
        for r in &rows {
            *pop.entry((r.zcta, r.county_fips)).or_default() += r.population_overlap;
        }
        for (z, c) in &out.map {
            let mine = pop[&(*z, *c)];
            for ((z2, c2), p) in &pop {
                if z2 == z {
                    prop_assert!(*p < mine || (*p == mine && c <= c2));
                }
            }
        }
    }

    #[test]
    fn row_order_does_not_change_the_crosswalk(rows in rows_strategy(), seed in any::<u64>()) {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = zcta_to_county_majority(&rows);
        let b = zcta_to_county_majority(&shuffled);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn synthetic_cells_nest_in_zones(n_czs in 1usize..60, counties in 1usize..4, cells in 1usize..4, zctas in 1usize..3) {
        let cfg = WorldConfig {
            n_czs,
            counties_per_cz: counties,
            cells_per_county: cells,
            zctas_per_cell: zctas,
            ..Default::default()
        };
        let synth = generate_geography(&cfg).unwrap();
        let geo = synth.build().unwrap();
        prop_assert!(geo.exclusions.is_empty());
        prop_assert_eq!(geo.cells.len(), n_czs * counties * cells);
        let zones = CountyZoneMap::new(&synth.county_zones).unwrap();
        for cell in geo.cells.values() {
            prop_assert_eq!(zones.zone(cell.county_fips), Some(cell.commuting_zone));
            prop_assert_eq!(cell.state, cell.county_fips.state());
        }
        for layout in &synth.zones {
            for (zcta, county, _) in &layout.zctas {
                prop_assert_eq!(geo.zcta_county.map.get(zcta), Some(county));
            }
        }
    }
}

#[test]
fn districts_cross_counties_and_shuffled_inputs_agree() {
    let cfg = WorldConfig {
        n_czs: 12,
        ..Default::default()
    };
    let synth = generate_geography(&cfg).unwrap();
    let geo = synth.build().unwrap();
    let mut by_district: BTreeMap<_, BTreeSet<CountyFips>> = BTreeMap::new();
    for cell in geo.cells.values() {
        by_district
            .entry(cell.congressional_district)
            .or_default()
            .insert(cell.county_fips);
    }
    assert!(by_district.values().any(|c| c.len() > 1));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rel = synth.relationships.clone();
    let mut dis = synth.districts.clone();
    let mut cz = synth.county_zones.clone();
    rel.shuffle(&mut rng);
    dis.shuffle(&mut rng);
    cz.shuffle(&mut rng);
    let again = Geography::build(&rel, &dis, &cz).unwrap();
    assert_eq!(again.cells, geo.cells);
    assert_eq!(again.zcta_county, geo.zcta_county);
}

#[test]
fn county_without_zone_is_logged() {
    let synth = generate_geography(&WorldConfig {
        n_czs: 2,
        ..Default::default()
    })
    .unwrap();
    let dropped = synth.county_zones[0].county_fips;
    let zones: Vec<CountyZoneRow> = synth.county_zones[1..].to_vec();
    let counties = zcta_to_county_majority(&synth.relationships);
    let districts = ZctaDistrictMap::new(&synth.districts);
    let build = build_ccd_cells(
        county_district_pairs(&counties, &districts),
        &CountyZoneMap::new(&zones).unwrap(),
    );
    assert!(build.cells.iter().all(|c| c.county_fips != dropped));
    assert_eq!(build.exclusions.len(), 1);
    assert_eq!(build.exclusions[0].code, dropped.to_string());
}
