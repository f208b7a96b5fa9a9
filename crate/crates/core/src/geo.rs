//! Geographic crosswalks: ZCTA to county by population majority, ZCTA to
//! congressional district per Congress, and county-by-district cells nested
//! in commuting zones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! code_newtype {
    ($(#[$meta:meta])* $name:ident, $width:expr, $label:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:0width$}", self.0, width = $width)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                if s.is_empty() || s.len() > $width || !s.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(Error::Validation(format!(
                        "`{s}` is not a valid {} (up to {} digits)",
                        $label, $width
                    )));
                }
                Ok($name(s.parse().expect("digits")))
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

code_newtype!(
    /// 5-digit ZIP code tabulation area.
    Zcta, 5, "ZCTA"
);
code_newtype!(
    /// 5-digit county FIPS code (2-digit state + 3-digit county).
    CountyFips, 5, "county FIPS code"
);
code_newtype!(
    /// Congressional district as 2-digit state FIPS + 2-digit district.
    CongressionalDistrict, 4, "congressional district"
);
code_newtype!(CommutingZone, 5, "commuting zone");

impl CountyFips {
    pub fn state(self) -> u32 {
        self.0 / 1000
    }
}

/// Congress seated after the November election of `year` (2004 -> 109th).
pub fn congress_for_election(year: i32) -> u32 {
    ((year - 1786) / 2) as u32
}

/// County-by-congressional-district cell identifier, rendered `CCCCC-SSDD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub county: CountyFips,
    pub district: CongressionalDistrict,
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.county, self.district)
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (c, d) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| Error::Validation(format!("`{s}` is not a cell id (CCCCC-SSDD)")))?;
        Ok(CellId {
            county: c.parse()?,
            district: d.parse()?,
        })
    }
}

impl Serialize for CellId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of a ZCTA-to-county relationship file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipRow {
    pub zcta: Zcta,
    pub county_fips: CountyFips,
    #[serde(rename = "pop")]
    pub population_overlap: u64,
}

/// One row of a ZCTA-to-district file for a given Congress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistrictRow {
    pub zcta: Zcta,
    #[serde(rename = "cd")]
    pub district: CongressionalDistrict,
    pub congress: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountyZoneRow {
    pub county_fips: CountyFips,
    #[serde(rename = "cz")]
    pub commuting_zone: CommutingZone,
}

/// A code dropped from a crosswalk, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub kind: String,
    pub code: String,
    pub reason: String,
}

impl Exclusion {
    fn new(kind: &str, code: impl fmt::Display, reason: impl Into<String>) -> Self {
        Exclusion {
            kind: kind.to_string(),
            code: code.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZctaCountyMap {
    pub map: BTreeMap<Zcta, CountyFips>,
    /// ZCTAs whose maximal overlap was shared by several counties.
    pub ties: Vec<Zcta>,
    pub exclusions: Vec<Exclusion>,
}

/// Assigns every ZCTA to the county holding most of its population.
/// Exact ties go to the lowest FIPS code.
pub fn zcta_to_county_majority(rows: &[RelationshipRow]) -> ZctaCountyMap {
    let mut by_zcta: BTreeMap<Zcta, BTreeMap<CountyFips, u64>> = BTreeMap::new();
    for r in rows {
        *by_zcta
            .entry(r.zcta)
            .or_default()
            .entry(r.county_fips)
            .or_default() += r.population_overlap;
    }
    let mut out = ZctaCountyMap::default();
    for (zcta, counties) in by_zcta {
        let total: u64 = counties.values().sum();
        if total == 0 {
            out.exclusions.push(Exclusion::new(
                "zcta",
                zcta,
                "zero population in relationship rows",
            ));
            continue;
        }
        let best = *counties.values().max().expect("non-empty");
        // BTreeMap iterates in ascending FIPS order, so the first hit is the lowest code.
        let mut winners = counties
            .iter()
            .filter(|(_, p)| **p == best)
            .map(|(c, _)| *c);
        let county = winners.next().expect("max exists");
        if winners.next().is_some() {
            out.ties.push(zcta);
        }
        out.map.insert(zcta, county);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZctaDistrictMap {
    pub map: BTreeMap<(u32, Zcta), CongressionalDistrict>,
    /// (congress, zcta) pairs listed under several districts; resolved to the lowest code.
    pub ambiguous: Vec<(u32, Zcta)>,
}

impl ZctaDistrictMap {
    pub fn new(rows: &[DistrictRow]) -> Self {
        let mut all: BTreeMap<(u32, Zcta), BTreeSet<CongressionalDistrict>> = BTreeMap::new();
        for r in rows {
            all.entry((r.congress, r.zcta))
                .or_default()
                .insert(r.district);
        }
        let mut out = ZctaDistrictMap::default();
        for (key, ds) in all {
            if ds.len() > 1 {
                out.ambiguous.push(key);
            }
            out.map.insert(key, *ds.iter().next().expect("non-empty"));
        }
        out
    }

    pub fn district(&self, zcta: Zcta, congress: u32) -> Option<CongressionalDistrict> {
        self.map.get(&(congress, zcta)).copied()
    }
}

/// County to commuting zone membership; a county belongs to exactly one zone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountyZoneMap(pub BTreeMap<CountyFips, CommutingZone>);

impl CountyZoneMap {
    pub fn new(rows: &[CountyZoneRow]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in rows {
            if let Some(prev) = map.insert(r.county_fips, r.commuting_zone) {
                if prev != r.commuting_zone {
                    return Err(Error::Validation(format!(
                        "county {} listed in commuting zones {prev} and {}",
                        r.county_fips, r.commuting_zone
                    )));
                }
            }
        }
        Ok(CountyZoneMap(map))
    }

    pub fn zone(&self, county: CountyFips) -> Option<CommutingZone> {
        self.0.get(&county).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CcdCell {
    pub cell_id: CellId,
    pub county_fips: CountyFips,
    #[serde(rename = "cd")]
    pub congressional_district: CongressionalDistrict,
    #[serde(rename = "cz")]
    pub commuting_zone: CommutingZone,
    pub state: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellBuild {
    pub cells: Vec<CcdCell>,
    pub exclusions: Vec<Exclusion>,
}

/// One cell per (county, district) pair present, inheriting the county's zone.
pub fn build_ccd_cells(
    pairs: impl IntoIterator<Item = (CountyFips, CongressionalDistrict)>,
    county_zone: &CountyZoneMap,
) -> CellBuild {
    let pairs: BTreeSet<_> = pairs.into_iter().collect();
    let mut out = CellBuild::default();
    let mut missing = BTreeSet::new();
    for (county, district) in pairs {
        match county_zone.zone(county) {
            Some(cz) => out.cells.push(CcdCell {
                cell_id: CellId { county, district },
                county_fips: county,
                congressional_district: district,
                commuting_zone: cz,
                state: county.state(),
            }),
            None => {
                missing.insert(county);
            }
        }
    }
    out.exclusions = missing
        .into_iter()
        .map(|c| Exclusion::new("county", c, "county has no commuting zone"))
        .collect();
    out
}

/// (county, district) pairs implied by ZCTA majority counties and the
/// ZCTA-to-district table, across every Congress present.
pub fn county_district_pairs(
    counties: &ZctaCountyMap,
    districts: &ZctaDistrictMap,
) -> BTreeSet<(CountyFips, CongressionalDistrict)> {
    districts
        .map
        .iter()
        .filter_map(|((_, zcta), d)| counties.map.get(zcta).map(|c| (*c, *d)))
        .collect()
}

/// Full crosswalk used to place records into cells.
#[derive(Debug, Clone, Default)]
pub struct Geography {
    pub zcta_county: ZctaCountyMap,
    pub zcta_district: ZctaDistrictMap,
    pub county_zone: CountyZoneMap,
    pub cells: BTreeMap<CellId, CcdCell>,
    pub exclusions: Vec<Exclusion>,
}

impl Geography {
    pub fn build(
        relationships: &[RelationshipRow],
        districts: &[DistrictRow],
        zones: &[CountyZoneRow],
    ) -> Result<Self> {
        let zcta_county = zcta_to_county_majority(relationships);
        let zcta_district = ZctaDistrictMap::new(districts);
        let county_zone = CountyZoneMap::new(zones)?;
        let build = build_ccd_cells(
            county_district_pairs(&zcta_county, &zcta_district),
            &county_zone,
        );
        let mut exclusions = zcta_county.exclusions.clone();
        exclusions.extend(build.exclusions);
        Ok(Geography {
            cells: build.cells.into_iter().map(|c| (c.cell_id, c)).collect(),
            zcta_county,
            zcta_district,
            county_zone,
            exclusions,
        })
    }

    /// Cell of a ZCTA in an election year, if the crosswalk covers it.
    pub fn cell_for(&self, zcta: Zcta, election_year: i32) -> Option<&CcdCell> {
        let county = *self.zcta_county.map.get(&zcta)?;
        let district = self
            .zcta_district
            .district(zcta, congress_for_election(election_year))?;
        self.cells.get(&CellId { county, district })
    }
}

/// Maps retired geography codes onto their 2010 equivalents.
#[derive(Debug, Clone, Default)]
pub struct VintageCrosswalk {
    pub vintage: i32,
    /// Codes valid in the target vintage.
    pub valid_counties: BTreeSet<CountyFips>,
    /// Old code -> target-vintage code.
    pub county_renames: BTreeMap<CountyFips, CountyFips>,
}

impl VintageCrosswalk {
    pub fn new(
        valid_counties: impl IntoIterator<Item = CountyFips>,
        renames: impl IntoIterator<Item = (CountyFips, CountyFips)>,
    ) -> Self {
        VintageCrosswalk {
            vintage: 2010,
            valid_counties: valid_counties.into_iter().collect(),
            county_renames: renames.into_iter().collect(),
        }
    }

    pub fn county(&self, code: CountyFips) -> Option<CountyFips> {
        if self.valid_counties.contains(&code) {
            Some(code)
        } else {
            self.county_renames.get(&code).copied()
        }
    }
}

/// Anything carrying a county code that can be re-expressed in another vintage.
pub trait HasCounty {
    fn county(&self) -> CountyFips;
    fn set_county(&mut self, county: CountyFips);
}

/// Re-expresses every county code in the crosswalk's vintage; unmappable
/// codes are dropped and logged once per code.
pub fn freeze_vintage<R: HasCounty>(
    records: Vec<R>,
    crosswalk: &VintageCrosswalk,
) -> (Vec<R>, Vec<Exclusion>) {
    let mut unknown = BTreeSet::new();
    let kept = records
        .into_iter()
        .filter_map(|mut r| match crosswalk.county(r.county()) {
            Some(c) => {
                r.set_county(c);
                Some(r)
            }
            None => {
                unknown.insert(r.county());
                None
            }
        })
        .collect();
    let log = unknown
        .into_iter()
        .map(|c| {
            Exclusion::new(
                "county",
                c,
                format!("no {} equivalent for county code", crosswalk.vintage),
            )
        })
        .collect();
    (kept, log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(z: u32, c: u32, p: u64) -> RelationshipRow {
        RelationshipRow {
            zcta: Zcta(z),
            county_fips: CountyFips(c),
            population_overlap: p,
        }
    }

    #[test]
    fn majority_rule() {
        let m = zcta_to_county_majority(&[rel(10001, 36061, 700), rel(10001, 36047, 300)]);
        assert_eq!(m.map[&Zcta(10001)], CountyFips(36061));
        let single = zcta_to_county_majority(&[rel(501, 36103, 12)]);
        assert_eq!(single.map[&Zcta(501)], CountyFips(36103));
    }

    #[test]
    fn tie_goes_to_lowest_fips() {
        let m = zcta_to_county_majority(&[rel(20001, 11003, 50), rel(20001, 11001, 50)]);
        assert_eq!(m.map[&Zcta(20001)], CountyFips(11001));
        assert_eq!(m.ties, vec![Zcta(20001)]);
    }

    #[test]
    fn zero_population_is_excluded() {
        let m = zcta_to_county_majority(&[rel(1, 1001, 0)]);
        assert!(m.map.is_empty());
        assert_eq!(m.exclusions.len(), 1);
        assert_eq!(m.exclusions[0].code, "00001");
    }

    #[test]
    fn county_in_two_districts_gives_two_cells() {
        let zones = CountyZoneMap::new(&[CountyZoneRow {
            county_fips: CountyFips(1001),
            commuting_zone: CommutingZone(7),
        }])
        .unwrap();
        let b = build_ccd_cells(
            [
                (CountyFips(1001), CongressionalDistrict(101)),
                (CountyFips(1001), CongressionalDistrict(102)),
                (CountyFips(1003), CongressionalDistrict(102)),
            ],
            &zones,
        );
        assert_eq!(b.cells.len(), 2);
        assert!(b.cells.iter().all(|c| c.commuting_zone == CommutingZone(7)));
        assert_eq!(b.exclusions.len(), 1);
        assert_eq!(b.exclusions[0].code, "01003");
    }

    #[test]
    fn conflicting_zone_membership_is_error() {
        let rows = [
            CountyZoneRow {
                county_fips: CountyFips(1001),
                commuting_zone: CommutingZone(1),
            },
            CountyZoneRow {
                county_fips: CountyFips(1001),
                commuting_zone: CommutingZone(2),
            },
        ];
        assert!(CountyZoneMap::new(&rows).is_err());
    }

    #[test]
    fn code_formatting_round_trip() {
        let cell: CellId = "01001-0102".parse().unwrap();
        assert_eq!(cell.to_string(), "01001-0102");
        assert_eq!("601".parse::<Zcta>().unwrap().to_string(), "00601");
        assert!("123456".parse::<Zcta>().is_err());
        assert!("12a45".parse::<CountyFips>().is_err());
        assert_eq!(congress_for_election(2004), 109);
        assert_eq!(congress_for_election(2012), 113);
    }

    #[derive(Debug, PartialEq)]
    struct Rec(CountyFips);
    impl HasCounty for Rec {
        fn county(&self) -> CountyFips {
            self.0
        }
        fn set_county(&mut self, c: CountyFips) {
            self.0 = c;
        }
    }

    #[test]
    fn vintage_freezing() {
        // Kusilvak Census Area (02158) was Wade Hampton (02270) in 2010.
        let cw = VintageCrosswalk::new(
            [CountyFips(2270), CountyFips(1001)],
            [(CountyFips(2158), CountyFips(2270))],
        );
        let (kept, log) = freeze_vintage(
            vec![
                Rec(CountyFips(1001)),
                Rec(CountyFips(2158)),
                Rec(CountyFips(99999)),
                Rec(CountyFips(99999)),
            ],
            &cw,
        );
        assert_eq!(kept, vec![Rec(CountyFips(1001)), Rec(CountyFips(2270))]);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].code, "99999");
    }
}
