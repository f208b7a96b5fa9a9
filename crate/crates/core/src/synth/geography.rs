use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, WorldConfig, STREAM_GEOGRAPHY};
use crate::error::{Error, Result};
use crate::geo::{
    congress_for_election, CommutingZone, CongressionalDistrict, CountyFips, CountyZoneRow,
    DistrictRow, Geography, RelationshipRow, Zcta,
};

/// Counties and ZCTAs of one synthetic commuting zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLayout {
    pub commuting_zone: CommutingZone,
    pub state: u32,
    pub counties: Vec<CountyFips>,
    /// Each ZCTA with its majority county and its district.
    pub zctas: Vec<(Zcta, CountyFips, CongressionalDistrict)>,
}

/// Raw crosswalk tables for a synthetic world plus the zone layouts used to
/// place individuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGeography {
    pub zones: Vec<ZoneLayout>,
    pub relationships: Vec<RelationshipRow>,
    pub districts: Vec<DistrictRow>,
    pub county_zones: Vec<CountyZoneRow>,
}

impl SyntheticGeography {
    pub fn build(&self) -> Result<Geography> {
        Geography::build(&self.relationships, &self.districts, &self.county_zones)
    }
}

/// Lays out zones, counties, districts and ZCTAs.
///
/// Zone `i` sits in state `1 + i % 50`. Within a zone, county `j` is split
/// across districts `j .. j + cells_per_county` (offset per zone), so
/// neighbouring counties share a district. Every other ZCTA spills a
/// minority of its population into the next county of the same zone.
/// One district map holds for every Congress covered by the panel years.
pub fn generate_geography(config: &WorldConfig) -> Result<SyntheticGeography> {
    config.validate()?;
    let per_zone_districts = config.counties_per_cz + config.cells_per_county - 1;
    let slots = config.n_czs.div_ceil(50);
    if slots * per_zone_districts > 99 {
        return Err(Error::Config(format!(
            "{} zones with {} districts each do not fit in two-digit district numbers",
            config.n_czs, per_zone_districts
        )));
    }
    if slots * config.counties_per_cz * 2 >= 1000 {
        return Err(Error::Config("too many counties per state".into()));
    }
    let zctas_per_zone = config.counties_per_cz * config.cells_per_county * config.zctas_per_cell;
    if config.n_czs * zctas_per_zone > 89_999 {
        return Err(Error::Config("too many ZCTAs for five-digit codes".into()));
    }
    let years: Vec<i32> = config
        .years
        .iter()
        .copied()
        .filter(|y| y % 2 == 0)
        .collect();
    let (lo, hi) = match (years.iter().min(), years.iter().max()) {
        (Some(lo), Some(hi)) => (congress_for_election(*lo), congress_for_election(*hi)),
        _ => {
            let y = config.years[0] - config.years[0].rem_euclid(2);
            (congress_for_election(y), congress_for_election(y))
        }
    };

    let mut rng = stream_rng(config.seed, STREAM_GEOGRAPHY, 0);
    let mut next_zcta = 10_000u32;
    let mut out = SyntheticGeography {
        zones: Vec::with_capacity(config.n_czs),
        relationships: Vec::new(),
        districts: Vec::new(),
        county_zones: Vec::new(),
    };
    for i in 0..config.n_czs {
        let state = 1 + (i % 50) as u32;
        let slot = (i / 50) as u32;
        let cz = CommutingZone(100 + i as u32);
        let counties: Vec<CountyFips> = (0..config.counties_per_cz as u32)
            .map(|j| CountyFips(state * 1000 + (slot * config.counties_per_cz as u32 + j) * 2 + 1))
            .collect();
        let mut zctas = Vec::with_capacity(zctas_per_zone);
        for (j, &county) in counties.iter().enumerate() {
            out.county_zones.push(CountyZoneRow {
                county_fips: county,
                commuting_zone: cz,
            });
            for k in 0..config.cells_per_county {
                let d = 1 + slot * per_zone_districts as u32 + (j + k) as u32;
                let district = CongressionalDistrict(state * 100 + d);
                for z in 0..config.zctas_per_cell {
                    let zcta = Zcta(next_zcta);
                    next_zcta += 1;
                    let pop = rng.gen_range(2_000..20_000u64);
                    out.relationships.push(RelationshipRow {
                        zcta,
                        county_fips: county,
                        population_overlap: pop,
                    });
                    if z % 2 == 1 && j + 1 < counties.len() {
                        out.relationships.push(RelationshipRow {
                            zcta,
                            county_fips: counties[j + 1],
                            population_overlap: pop / rng.gen_range(3..10u64),
                        });
                    }
                    for congress in lo..=hi {
                        out.districts.push(DistrictRow {
                            zcta,
                            district,
                            congress,
                        });
                    }
                    zctas.push((zcta, county, district));
                }
            }
        }
        out.zones.push(ZoneLayout {
            commuting_zone: cz,
            state,
            counties,
            zctas,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_builds_expected_cells() {
        let cfg = WorldConfig {
            n_czs: 3,
            ..WorldConfig::default()
        };
        let g = generate_geography(&cfg).unwrap();
        let geo = g.build().unwrap();
        assert_eq!(geo.cells.len(), 3 * 3 * 2);
        assert!(geo.zcta_county.ties.is_empty());
        for zone in &g.zones {
            for (zcta, county, district) in &zone.zctas {
                let cell = geo.cell_for(*zcta, 2012).unwrap();
                assert_eq!(cell.county_fips, *county);
                assert_eq!(cell.congressional_district, *district);
                assert_eq!(cell.commuting_zone, zone.commuting_zone);
            }
        }
    }

    #[test]
    fn districts_cross_counties() {
        let g = generate_geography(&WorldConfig::default()).unwrap();
        let z = &g.zones[0];
        let d_first: Vec<_> = z
            .zctas
            .iter()
            .filter(|t| t.1 == z.counties[0])
            .map(|t| t.2)
            .collect();
        let d_second: Vec<_> = z
            .zctas
            .iter()
            .filter(|t| t.1 == z.counties[1])
            .map(|t| t.2)
            .collect();
        assert!(d_first.iter().any(|d| d_second.contains(d)));
    }
}
