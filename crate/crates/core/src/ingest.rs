//! Parsing, validation and hire-time projection of the absenteeism dataset.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the 21-attribute absenteeism file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: u32,
    pub reason_for_absence: u8,
    pub month_of_absence: u8,
    pub day_of_week: u8,
    pub seasons: u8,
    pub transportation_expense: f64,
    pub distance_to_work: f64,
    pub service_time: f64,
    pub age: f64,
    pub work_load_avg_per_day: f64,
    pub hit_target: f64,
    pub disciplinary_failure: u8,
    pub education: u8,
    pub son: u32,
    pub social_drinker: u8,
    pub social_smoker: u8,
    pub pet: u32,
    pub weight: f64,
    pub height: f64,
    pub body_mass_index: f64,
    pub absenteeism_hours: u32,
}

/// Column headers as distributed with the dataset, in file order.
pub const RAW_HEADERS: [&str; 21] = [
    "ID",
    "Reason for absence",
    "Month of absence",
    "Day of the week",
    "Seasons",
    "Transportation expense",
    "Distance from Residence to Work",
    "Service time",
    "Age",
    "Work load Average/day ",
    "Hit target",
    "Disciplinary failure",
    "Education",
    "Son",
    "Social drinker",
    "Social smoker",
    "Pet",
    "Weight",
    "Height",
    "Body mass index",
    "Absenteeism time in hours",
];

#[derive(Debug, Clone, Copy)]
enum FieldKind {
    /// Integer within an inclusive range.
    Int(i64, i64),
    /// Finite, non-negative real.
    Real,
    /// Real within an inclusive range.
    RealIn(f64, f64),
}

const FIELD_KINDS: [FieldKind; 21] = [
    FieldKind::Int(0, u32::MAX as i64),
    FieldKind::Int(0, 28),
    FieldKind::Int(0, 12),
    FieldKind::Int(2, 6),
    FieldKind::Int(1, 4),
    FieldKind::Real,
    FieldKind::Real,
    FieldKind::Real,
    FieldKind::Real,
    FieldKind::Real,
    FieldKind::RealIn(0.0, 100.0),
    FieldKind::Int(0, 1),
    FieldKind::Int(1, 4),
    FieldKind::Int(0, u32::MAX as i64),
    FieldKind::Int(0, 1),
    FieldKind::Int(0, 1),
    FieldKind::Int(0, u32::MAX as i64),
    FieldKind::Real,
    FieldKind::Real,
    FieldKind::Real,
    FieldKind::Int(0, 120),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseConfig {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            delimiter: b';',
            has_header: true,
        }
    }
}

fn normalize_header(h: &str) -> String {
    h.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// Parses a delimiter-separated dataset, validating every field strictly.
///
/// Columns are matched by (whitespace- and case-insensitive) header name, so
/// their order in the file is free. Row numbers in errors count data rows
/// from 1.
pub fn parse_dataset<R: Read>(source: R, config: ParseConfig) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut rows = reader.records();

    let positions: [usize; 21] = if config.has_header {
        let header = match rows.next() {
            Some(h) => h?,
            None => return Err(Error::EmptyInput("dataset has no header row".into())),
        };
        let names: Vec<String> = header.iter().map(normalize_header).collect();
        let mut positions = [0usize; 21];
        for (slot, expected) in positions.iter_mut().zip(RAW_HEADERS) {
            let want = normalize_header(expected);
            *slot = names
                .iter()
                .position(|n| *n == want)
                .ok_or_else(|| Error::MissingColumn(expected.trim().to_string()))?;
        }
        positions
    } else {
        std::array::from_fn(|i| i)
    };
    let width = if config.has_header {
        positions.iter().max().map_or(0, |m| m + 1).max(21)
    } else {
        21
    };

    let mut records = Vec::new();
    let mut saw_any = config.has_header;
    for (i, row) in rows.enumerate() {
        let row = row?;
        saw_any = true;
        let row_no = i + 1;
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != width {
            return Err(Error::MalformedRow {
                row: row_no,
                expected: width,
                found: row.len(),
            });
        }
        let mut fields = [0f64; 21];
        for (k, &pos) in positions.iter().enumerate() {
            fields[k] = parse_field(row_no, k, &row[pos])?;
        }
        records.push(record_from_fields(&fields));
    }
    if !saw_any {
        return Err(Error::EmptyInput("dataset is empty".into()));
    }
    log::debug!("parsed {} records", records.len());
    Ok(records)
}

fn parse_field(row: usize, k: usize, raw: &str) -> Result<f64> {
    let column = RAW_HEADERS[k].trim();
    let non_numeric = || Error::NonNumeric {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    };
    match FIELD_KINDS[k] {
        FieldKind::Int(lo, hi) => {
            let v: i64 = raw.parse().map_err(|_| non_numeric())?;
            if v < lo || v > hi {
                return Err(Error::FieldOutOfRange {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                    range: format!("[{lo}, {hi}]"),
                });
            }
            Ok(v as f64)
        }
        kind @ (FieldKind::Real | FieldKind::RealIn(..)) => {
            let v: f64 = raw.parse().map_err(|_| non_numeric())?;
            if !v.is_finite() {
                return Err(non_numeric());
            }
            let (lo, hi) = match kind {
                FieldKind::RealIn(lo, hi) => (lo, hi),
                _ => (0.0, f64::MAX),
            };
            if v < lo || v > hi {
                return Err(Error::FieldOutOfRange {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                    range: if hi == f64::MAX {
                        format!("[{lo}, inf)")
                    } else {
                        format!("[{lo}, {hi}]")
                    },
                });
            }
            Ok(v)
        }
    }
}

fn record_from_fields(f: &[f64; 21]) -> RawRecord {
    RawRecord {
        id: f[0] as u32,
        reason_for_absence: f[1] as u8,
        month_of_absence: f[2] as u8,
        day_of_week: f[3] as u8,
        seasons: f[4] as u8,
        transportation_expense: f[5],
        distance_to_work: f[6],
        service_time: f[7],
        age: f[8],
        work_load_avg_per_day: f[9],
        hit_target: f[10],
        disciplinary_failure: f[11] as u8,
        education: f[12] as u8,
        son: f[13] as u32,
        social_drinker: f[14] as u8,
        social_smoker: f[15] as u8,
        pet: f[16] as u32,
        weight: f[17],
        height: f[18],
        body_mass_index: f[19],
        absenteeism_hours: f[20] as u32,
    }
}

/// Writes records in the canonical column order with the distributed header.
pub fn write_dataset<W: Write>(records: &[RawRecord], delimiter: u8, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(sink);
    w.write_record(RAW_HEADERS)?;
    for r in records {
        w.write_record([
            r.id.to_string(),
            r.reason_for_absence.to_string(),
            r.month_of_absence.to_string(),
            r.day_of_week.to_string(),
            r.seasons.to_string(),
            r.transportation_expense.to_string(),
            r.distance_to_work.to_string(),
            r.service_time.to_string(),
            r.age.to_string(),
            r.work_load_avg_per_day.to_string(),
            r.hit_target.to_string(),
            r.disciplinary_failure.to_string(),
            r.education.to_string(),
            r.son.to_string(),
            r.social_drinker.to_string(),
            r.social_smoker.to_string(),
            r.pet.to_string(),
            r.weight.to_string(),
            r.height.to_string(),
            r.body_mass_index.to_string(),
            r.absenteeism_hours.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ordinal absenteeism label: no absence, moderate, excessive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbsenteeismClass {
    #[serde(rename = "A+")]
    APlus,
    #[serde(rename = "B+")]
    BPlus,
    #[serde(rename = "C+")]
    CPlus,
}

impl AbsenteeismClass {
    pub const ALL: [AbsenteeismClass; 3] = [Self::APlus, Self::BPlus, Self::CPlus];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::APlus => "A+",
            Self::BPlus => "B+",
            Self::CPlus => "C+",
        }
    }
}

impl fmt::Display for AbsenteeismClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// 0 h → A⁺, 1–15 h → B⁺, 16–120 h → C⁺.
pub fn bin_absenteeism(hours: i64) -> Result<AbsenteeismClass> {
    match hours {
        0 => Ok(AbsenteeismClass::APlus),
        1..=15 => Ok(AbsenteeismClass::BPlus),
        16..=120 => Ok(AbsenteeismClass::CPlus),
        _ => Err(Error::HoursOutOfRange(hours)),
    }
}

/// Attribute known at hiring time. Declaration order is the canonical
/// predictor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    ReasonForAbsence,
    TransportationExpense,
    DistanceToWork,
    Age,
    WorkLoadAvgPerDay,
    Education,
    Son,
    SocialDrinker,
    SocialSmoker,
    Pet,
    Weight,
    Height,
    BodyMassIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Numeric,
    /// 0/1 flag, encoded as a single numeric column.
    Binary,
    /// One-hot encoded category code.
    Categorical,
}

impl Attribute {
    pub const ALL: [Attribute; 13] = [
        Self::ReasonForAbsence,
        Self::TransportationExpense,
        Self::DistanceToWork,
        Self::Age,
        Self::WorkLoadAvgPerDay,
        Self::Education,
        Self::Son,
        Self::SocialDrinker,
        Self::SocialSmoker,
        Self::Pet,
        Self::Weight,
        Self::Height,
        Self::BodyMassIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ReasonForAbsence => "reason_for_absence",
            Self::TransportationExpense => "transportation_expense",
            Self::DistanceToWork => "distance_to_work",
            Self::Age => "age",
            Self::WorkLoadAvgPerDay => "work_load_avg_per_day",
            Self::Education => "education",
            Self::Son => "son",
            Self::SocialDrinker => "social_drinker",
            Self::SocialSmoker => "social_smoker",
            Self::Pet => "pet",
            Self::Weight => "weight",
            Self::Height => "height",
            Self::BodyMassIndex => "body_mass_index",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::ReasonForAbsence => "Reason for absence",
            Self::TransportationExpense => "Transportation expense",
            Self::DistanceToWork => "Distance from residence to work",
            Self::Age => "Age",
            Self::WorkLoadAvgPerDay => "Work load average/day",
            Self::Education => "Education",
            Self::Son => "Son",
            Self::SocialDrinker => "Social drinker",
            Self::SocialSmoker => "Social smoker",
            Self::Pet => "Pet",
            Self::Weight => "Weight",
            Self::Height => "Height",
            Self::BodyMassIndex => "Body mass index",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn kind(self) -> AttributeKind {
        match self {
            Self::ReasonForAbsence | Self::Education => AttributeKind::Categorical,
            Self::SocialDrinker | Self::SocialSmoker => AttributeKind::Binary,
            _ => AttributeKind::Numeric,
        }
    }
}

/// The 13 hire-time predictors of one candidate or employee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictors {
    pub reason_for_absence: u8,
    pub transportation_expense: f64,
    pub distance_to_work: f64,
    pub age: f64,
    pub work_load_avg_per_day: f64,
    pub education: u8,
    pub son: u32,
    pub social_drinker: u8,
    pub social_smoker: u8,
    pub pet: u32,
    pub weight: f64,
    pub height: f64,
    pub body_mass_index: f64,
}

impl Predictors {
    pub fn get(&self, attribute: Attribute) -> f64 {
        match attribute {
            Attribute::ReasonForAbsence => self.reason_for_absence as f64,
            Attribute::TransportationExpense => self.transportation_expense,
            Attribute::DistanceToWork => self.distance_to_work,
            Attribute::Age => self.age,
            Attribute::WorkLoadAvgPerDay => self.work_load_avg_per_day,
            Attribute::Education => self.education as f64,
            Attribute::Son => self.son as f64,
            Attribute::SocialDrinker => self.social_drinker as f64,
            Attribute::SocialSmoker => self.social_smoker as f64,
            Attribute::Pet => self.pet as f64,
            Attribute::Weight => self.weight,
            Attribute::Height => self.height,
            Attribute::BodyMassIndex => self.body_mass_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HireTimeRecord {
    pub predictors: Predictors,
    pub class: AbsenteeismClass,
}

/// Drops post-hire attributes and the identifier, and attaches class labels.
pub fn to_hire_time(records: &[RawRecord]) -> Result<Vec<HireTimeRecord>> {
    records
        .iter()
        .map(|r| {
            Ok(HireTimeRecord {
                predictors: Predictors {
                    reason_for_absence: r.reason_for_absence,
                    transportation_expense: r.transportation_expense,
                    distance_to_work: r.distance_to_work,
                    age: r.age,
                    work_load_avg_per_day: r.work_load_avg_per_day,
                    education: r.education,
                    son: r.son,
                    social_drinker: r.social_drinker,
                    social_smoker: r.social_smoker,
                    pet: r.pet,
                    weight: r.weight,
                    height: r.height,
                    body_mass_index: r.body_mass_index,
                },
                class: bin_absenteeism(r.absenteeism_hours as i64)?,
            })
        })
        .collect()
}

/// Reads, validates and projects a dataset file in one step.
pub fn load_hire_time(path: &std::path::Path, config: ParseConfig) -> Result<Vec<HireTimeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    to_hire_time(&parse_dataset(std::io::BufReader::new(file), config)?)
}

pub fn class_histogram(records: &[HireTimeRecord]) -> [usize; 3] {
    let mut h = [0usize; 3];
    for r in records {
        h[r.class.index()] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = "ID;Reason for absence;Month of absence;Day of the week;Seasons;Transportation expense;Distance from Residence to Work;Service time;Age;Work load Average/day ;Hit target;Disciplinary failure;Education;Son;Social drinker;Social smoker;Pet;Weight;Height;Body mass index;Absenteeism time in hours
11;26;7;3;1;289;36;13;33;239.554;97;0;1;2;1;0;1;90;172;30;4
36;0;7;3;1;118;13;18;50;239.554;97;1;1;1;1;0;0;98;178;31;0
3;23;7;4;1;179;51;18;38;239.554;97;0;1;0;1;0;0;89;170;31;2
";

    #[test]
    fn parses_fixture_field_exact() {
        let recs = parse_dataset(FIXTURE.as_bytes(), ParseConfig::default()).unwrap();
        assert_eq!(recs.len(), 3);
        let r = &recs[0];
        assert_eq!(r.id, 11);
        assert_eq!(r.reason_for_absence, 26);
        assert_eq!(r.month_of_absence, 7);
        assert_eq!(r.day_of_week, 3);
        assert_eq!(r.seasons, 1);
        assert_eq!(r.transportation_expense, 289.0);
        assert_eq!(r.distance_to_work, 36.0);
        assert_eq!(r.service_time, 13.0);
        assert_eq!(r.age, 33.0);
        assert_eq!(r.work_load_avg_per_day, 239.554);
        assert_eq!(r.hit_target, 97.0);
        assert_eq!(r.disciplinary_failure, 0);
        assert_eq!(r.education, 1);
        assert_eq!(r.son, 2);
        assert_eq!(r.social_drinker, 1);
        assert_eq!(r.social_smoker, 0);
        assert_eq!(r.pet, 1);
        assert_eq!(r.weight, 90.0);
        assert_eq!(r.height, 172.0);
        assert_eq!(r.body_mass_index, 30.0);
        assert_eq!(r.absenteeism_hours, 4);
        assert_eq!(recs[1].reason_for_absence, 0);
        assert_eq!(recs[1].disciplinary_failure, 1);
        assert_eq!(recs[2].day_of_week, 4);
    }

    #[test]
    fn fixture_round_trips_byte_identically() {
        let recs = parse_dataset(FIXTURE.as_bytes(), ParseConfig::default()).unwrap();
        let mut out = Vec::new();
        write_dataset(&recs, b';', &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), FIXTURE);
    }

    #[test]
    fn header_only_gives_no_records() {
        let header = FIXTURE.lines().next().unwrap();
        assert!(parse_dataset(header.as_bytes(), ParseConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_dataset(&b""[..], ParseConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let bad = FIXTURE.replace("3;23;7;4;1;179", "3;23;7;4;179");
        match parse_dataset(bad.as_bytes(), ParseConfig::default()) {
            Err(Error::MalformedRow { row, found, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(found, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_names_column() {
        let bad = FIXTURE.replace(";90;172;", ";heavy;172;");
        match parse_dataset(bad.as_bytes(), ParseConfig::default()) {
            Err(Error::NonNumeric { column, row, .. }) => {
                assert_eq!(column, "Weight");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_code_is_rejected() {
        let bad = FIXTURE.replace("11;26;7;3;1;", "11;29;7;3;1;");
        assert!(matches!(
            parse_dataset(bad.as_bytes(), ParseConfig::default()),
            Err(Error::FieldOutOfRange { .. })
        ));
    }

    #[test]
    fn configurable_delimiter_and_column_order() {
        let mut lines: Vec<Vec<&str>> = FIXTURE.lines().map(|l| l.split(';').collect()).collect();
        for l in &mut lines {
            l.swap(0, 20);
        }
        let text = lines.iter().map(|l| l.join(",")).collect::<Vec<_>>().join("\n");
        let cfg = ParseConfig {
            delimiter: b',',
            has_header: true,
        };
        let a = parse_dataset(text.as_bytes(), cfg).unwrap();
        let b = parse_dataset(FIXTURE.as_bytes(), ParseConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_column_is_reported() {
        let bad = FIXTURE.replacen("Pet", "Pets", 1);
        assert!(matches!(
            parse_dataset(bad.as_bytes(), ParseConfig::default()),
            Err(Error::MissingColumn(c)) if c == "Pet"
        ));
    }

    #[test]
    fn binning_boundaries() {
        assert_eq!(bin_absenteeism(0).unwrap(), AbsenteeismClass::APlus);
        assert_eq!(bin_absenteeism(1).unwrap(), AbsenteeismClass::BPlus);
        assert_eq!(bin_absenteeism(15).unwrap(), AbsenteeismClass::BPlus);
        assert_eq!(bin_absenteeism(16).unwrap(), AbsenteeismClass::CPlus);
        assert_eq!(bin_absenteeism(120).unwrap(), AbsenteeismClass::CPlus);
        assert!(bin_absenteeism(121).is_err());
        assert!(bin_absenteeism(-1).is_err());
    }

    #[test]
    fn hire_time_projection() {
        let recs = parse_dataset(FIXTURE.as_bytes(), ParseConfig::default()).unwrap();
        let ht = to_hire_time(&recs).unwrap();
        assert_eq!(ht.len(), 3);
        assert_eq!(Attribute::ALL.len(), 13);
        assert_eq!(ht[0].class, AbsenteeismClass::BPlus);
        assert_eq!(ht[1].class, AbsenteeismClass::APlus);
        // Serialized form exposes the 13 predictors and nothing post-hire.
        let v = serde_json::to_value(&ht[0].predictors).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 13);
        for a in Attribute::ALL {
            assert!(obj.contains_key(a.name()), "{}", a.name());
        }
        assert!(!obj.contains_key("seasons"));
        assert!(!obj.contains_key("id"));
    }

    #[test]
    fn eight_hours_is_moderate() {
        let mut recs = parse_dataset(FIXTURE.as_bytes(), ParseConfig::default()).unwrap();
        recs[0].absenteeism_hours = 8;
        assert_eq!(to_hire_time(&recs).unwrap()[0].class, AbsenteeismClass::BPlus);
    }

    proptest! {
        #[test]
        fn binning_is_monotone(a in 0i64..=120, b in 0i64..=120) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bin_absenteeism(lo).unwrap() <= bin_absenteeism(hi).unwrap());
        }
    }
}
