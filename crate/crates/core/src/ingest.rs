//! Derivation of the monthly analysis signals from registry rows and
//! article counts: vaccination activity, cohort uptake, article percentage
//! and stance-labelled article series.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{csv_error, MonthlyTimeSeries, SeriesWindow, YearMonth};

/// One administered dose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaccinationRecord {
    pub person_id: String,
    pub birth_date: NaiveDate,
    pub vaccination_date: NaiveDate,
    pub vaccine: String,
    pub dose: u32,
}

impl VaccinationRecord {
    pub fn new(
        person_id: impl Into<String>,
        birth_date: NaiveDate,
        vaccination_date: NaiveDate,
        vaccine: impl Into<String>,
        dose: u32,
    ) -> Result<Self> {
        if vaccination_date < birth_date {
            return Err(Error::invalid(format!(
                "vaccination date {vaccination_date} precedes birth date {birth_date}"
            )));
        }
        if dose == 0 {
            return Err(Error::invalid("dose index must be at least 1"));
        }
        Ok(VaccinationRecord {
            person_id: person_id.into(),
            birth_date,
            vaccination_date,
            vaccine: vaccine.into(),
            dose,
        })
    }

    /// Whole months elapsed between birth and vaccination.
    pub fn age_in_months(&self) -> u32 {
        months_elapsed(self.birth_date, self.vaccination_date)
    }

    pub fn birth_month(&self) -> YearMonth {
        year_month(self.birth_date)
    }

    pub fn vaccination_month(&self) -> YearMonth {
        year_month(self.vaccination_date)
    }

    fn is_vaccine(&self, label: Option<&str>) -> bool {
        label.is_none_or(|l| self.vaccine.eq_ignore_ascii_case(l))
    }
}

fn year_month(d: NaiveDate) -> YearMonth {
    YearMonth::new(d.year(), d.month()).expect("chrono months are 1-12")
}

fn months_elapsed(from: NaiveDate, to: NaiveDate) -> u32 {
    let mut m = (to.year() - from.year()) as i64 * 12 + to.month() as i64 - from.month() as i64;
    if to.day() < from.day() {
        m -= 1;
    }
    m.max(0) as u32
}

/// Number of persons born in a given month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationCohort {
    pub birth_month: YearMonth,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Pro,
    Anti,
    Neutral,
    Irrelevant,
}

impl Stance {
    pub const ALL: [Stance; 4] = [Stance::Pro, Stance::Anti, Stance::Neutral, Stance::Irrelevant];
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stance::Pro => "pro",
            Stance::Anti => "anti",
            Stance::Neutral => "neutral",
            Stance::Irrelevant => "irrelevant",
        })
    }
}

impl FromStr for Stance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pro" => Ok(Stance::Pro),
            "anti" => Ok(Stance::Anti),
            "neutral" => Ok(Stance::Neutral),
            "irrelevant" => Ok(Stance::Irrelevant),
            _ => Err(Error::UnknownStance(s.to_string())),
        }
    }
}

/// Monthly count of query-matched articles against an archive-wide
/// normaliser count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleCount {
    pub month: YearMonth,
    pub matched: u64,
    pub normalizer: u64,
    pub stance: Option<Stance>,
}

impl ArticleCount {
    pub fn new(month: YearMonth, matched: u64, normalizer: u64, stance: Option<Stance>) -> Result<Self> {
        if normalizer == 0 {
            return Err(Error::invalid(format!("normalizer count is zero in {month}")));
        }
        if matched > normalizer {
            return Err(Error::invalid(format!(
                "matched count {matched} exceeds normalizer {normalizer} in {month}"
            )));
        }
        Ok(ArticleCount {
            month,
            matched,
            normalizer,
            stance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledDose {
    pub dose: u32,
    pub target_age_months: u32,
}

/// Target ages per dose; ages strictly increase with the dose index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScheduledDose>", into = "Vec<ScheduledDose>")]
pub struct VaccineSchedule {
    doses: Vec<ScheduledDose>,
}

impl TryFrom<Vec<ScheduledDose>> for VaccineSchedule {
    type Error = Error;

    fn try_from(doses: Vec<ScheduledDose>) -> Result<Self> {
        VaccineSchedule::new(doses)
    }
}

impl From<VaccineSchedule> for Vec<ScheduledDose> {
    fn from(s: VaccineSchedule) -> Self {
        s.doses
    }
}

impl VaccineSchedule {
    pub fn new(mut doses: Vec<ScheduledDose>) -> Result<Self> {
        if doses.is_empty() {
            return Err(Error::invalid("a schedule needs at least one dose"));
        }
        doses.sort_by_key(|d| d.dose);
        for w in doses.windows(2) {
            if w[0].dose == w[1].dose || w[0].target_age_months >= w[1].target_age_months {
                return Err(Error::invalid(
                    "schedule target ages must strictly increase with dose index",
                ));
            }
        }
        Ok(VaccineSchedule { doses })
    }

    /// Convenience constructor from `(dose, target_age_months)` pairs.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(dose, target_age_months)| ScheduledDose { dose, target_age_months })
                .collect(),
        )
    }

    pub fn doses(&self) -> &[ScheduledDose] {
        &self.doses
    }

    pub fn final_dose(&self) -> u32 {
        self.doses.last().expect("non-empty").dose
    }
}

/// The schedule entry whose target age is closest to the age at
/// vaccination. Equidistant ages go to the lower dose index.
pub fn assign_dose_group(record: &VaccinationRecord, schedule: &VaccineSchedule) -> u32 {
    let age = record.age_in_months() as i64;
    let mut best = schedule.doses[0];
    for d in &schedule.doses[1..] {
        if (age - d.target_age_months as i64).abs() < (age - best.target_age_months as i64).abs() {
            best = *d;
        }
    }
    best.dose
}

/// A schedule together with the period in which it applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleVersion {
    pub valid_from: YearMonth,
    /// Inclusive; `None` means still in force.
    pub valid_to: Option<YearMonth>,
    pub schedule: VaccineSchedule,
}

/// Schedules in force over time, e.g. a switch from a 3-dose to a 2-dose
/// programme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTimeline {
    versions: Vec<ScheduleVersion>,
}

impl ScheduleTimeline {
    pub fn new(mut versions: Vec<ScheduleVersion>) -> Result<Self> {
        versions.sort_by_key(|v| v.valid_from);
        for v in &versions {
            if v.valid_to.is_some_and(|to| to < v.valid_from) {
                return Err(Error::invalid(format!(
                    "schedule validity ends before it starts ({})",
                    v.valid_from
                )));
            }
        }
        for w in versions.windows(2) {
            if w[0].valid_to.is_none_or(|to| to >= w[1].valid_from) {
                return Err(Error::invalid(format!(
                    "schedule validity intervals overlap at {}",
                    w[1].valid_from
                )));
            }
        }
        Ok(ScheduleTimeline { versions })
    }

    pub fn schedule_at(&self, m: YearMonth) -> Option<&VaccineSchedule> {
        self.versions
            .iter()
            .find(|v| v.valid_from <= m && v.valid_to.is_none_or(|to| m <= to))
            .map(|v| &v.schedule)
    }
}

/// Inclusive age band in whole months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBand {
    pub min_months: u32,
    pub max_months: u32,
}

impl AgeBand {
    pub fn contains(&self, age_months: u32) -> bool {
        self.min_months <= age_months && age_months <= self.max_months
    }
}

/// How a record's dose group is determined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoseSource {
    /// The dose index stored in the record.
    #[default]
    Recorded,
    /// The schedule entry nearest to the age at vaccination.
    NearestTarget(VaccineSchedule),
}

impl DoseSource {
    fn dose_of(&self, record: &VaccinationRecord) -> u32 {
        match self {
            DoseSource::Recorded => record.dose,
            DoseSource::NearestTarget(schedule) => assign_dose_group(record, schedule),
        }
    }
}

/// Parameters of a vaccination-activity series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityQuery {
    pub dose: u32,
    pub target_age_months: u32,
    #[serde(default)]
    pub vaccine: Option<String>,
    #[serde(default)]
    pub dose_source: DoseSource,
    /// Restricts the numerator to doses given within this age band; the
    /// default counts every age, including catch-up vaccinations.
    #[serde(default)]
    pub age_band: Option<AgeBand>,
}

impl ActivityQuery {
    pub fn new(dose: u32, target_age_months: u32) -> Self {
        ActivityQuery {
            dose,
            target_age_months,
            vaccine: None,
            dose_source: DoseSource::Recorded,
            age_band: None,
        }
    }
}

fn cohort_sizes(cohorts: &[PopulationCohort]) -> HashMap<YearMonth, u64> {
    let mut sizes = HashMap::new();
    for c in cohorts {
        *sizes.entry(c.birth_month).or_insert(0) += c.count;
    }
    sizes
}

/// Monthly doses administered, as a percentage of the persons reaching the
/// target age that month. Values above 100 are legitimate.
pub fn vaccination_activity(
    records: &[VaccinationRecord],
    cohorts: &[PopulationCohort],
    query: &ActivityQuery,
    window: &SeriesWindow,
) -> Result<MonthlyTimeSeries> {
    let sizes = cohort_sizes(cohorts);
    let mut doses: HashMap<YearMonth, u64> = HashMap::new();
    for r in records {
        if !r.is_vaccine(query.vaccine.as_deref()) {
            continue;
        }
        if query.age_band.is_some_and(|b| !b.contains(r.age_in_months())) {
            continue;
        }
        let m = r.vaccination_month();
        if window.contains(m) && query.dose_source.dose_of(r) == query.dose {
            *doses.entry(m).or_insert(0) += 1;
        }
    }
    let values = window
        .months()
        .map(|m| {
            let born = m.add_months(-(query.target_age_months as i64));
            let eligible = *sizes
                .get(&born)
                .ok_or_else(|| Error::MissingCohort(format!("birth month {born} (denominator for {m})")))?;
            if eligible == 0 {
                return Err(Error::ZeroDenominator(m));
            }
            Ok(100.0 * doses.get(&m).copied().unwrap_or(0) as f64 / eligible as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    MonthlyTimeSeries::new(window.from(), values)
}

/// Percentage of each birth-year cohort with at least `dose` recorded.
///
/// Only birth years present in `cohorts` are reported; records of persons
/// born in other years are ignored.
pub fn uptake_by_cohort(
    records: &[VaccinationRecord],
    cohorts: &[PopulationCohort],
    dose: u32,
    vaccine: Option<&str>,
) -> Result<BTreeMap<i32, f64>> {
    if cohorts.is_empty() {
        return Err(Error::MissingCohort("no cohorts supplied".into()));
    }
    let mut sizes: BTreeMap<i32, u64> = BTreeMap::new();
    for c in cohorts {
        *sizes.entry(c.birth_month.year()).or_insert(0) += c.count;
    }
    let mut highest: HashMap<&str, (i32, u32)> = HashMap::new();
    for r in records.iter().filter(|r| r.is_vaccine(vaccine)) {
        let e = highest.entry(r.person_id.as_str()).or_insert((r.birth_date.year(), 0));
        e.1 = e.1.max(r.dose);
    }
    let mut vaccinated: HashMap<i32, u64> = HashMap::new();
    for &(year, max_dose) in highest.values() {
        if max_dose >= dose {
            *vaccinated.entry(year).or_insert(0) += 1;
        }
    }
    sizes
        .into_iter()
        .map(|(year, size)| {
            if size == 0 {
                return Err(Error::ZeroDenominator(YearMonth::new(year, 1)?));
            }
            let v = vaccinated.get(&year).copied().unwrap_or(0);
            if v > size {
                return Err(Error::invalid(format!(
                    "birth cohort {year} has {v} vaccinated persons but only {size} members"
                )));
            }
            Ok((year, 100.0 * v as f64 / size as f64))
        })
        .collect()
}

/// Percentage of each birth-year cohort that completed the schedule in
/// force at the person's first dose.
pub fn completion_by_cohort(
    records: &[VaccinationRecord],
    cohorts: &[PopulationCohort],
    timeline: &ScheduleTimeline,
    vaccine: Option<&str>,
) -> Result<BTreeMap<i32, f64>> {
    let mut sizes: BTreeMap<i32, u64> = BTreeMap::new();
    for c in cohorts {
        *sizes.entry(c.birth_month.year()).or_insert(0) += c.count;
    }
    let mut per_person: HashMap<&str, Vec<&VaccinationRecord>> = HashMap::new();
    for r in records.iter().filter(|r| r.is_vaccine(vaccine)) {
        per_person.entry(r.person_id.as_str()).or_default().push(r);
    }
    let mut completed: HashMap<i32, u64> = HashMap::new();
    for recs in per_person.values() {
        let first = recs.iter().min_by_key(|r| (r.vaccination_date, r.dose)).expect("non-empty");
        let Some(schedule) = timeline.schedule_at(first.vaccination_month()) else {
            continue;
        };
        if recs.iter().any(|r| r.dose >= schedule.final_dose()) {
            *completed.entry(first.birth_date.year()).or_insert(0) += 1;
        }
    }
    sizes
        .into_iter()
        .map(|(year, size)| {
            if size == 0 {
                return Err(Error::ZeroDenominator(YearMonth::new(year, 1)?));
            }
            let c = completed.get(&year).copied().unwrap_or(0).min(size);
            Ok((year, 100.0 * c as f64 / size as f64))
        })
        .collect()
}

/// A person with a dose recorded while an earlier dose is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DoseGap {
    pub person_id: String,
    pub vaccine: String,
    pub missing_dose: u32,
}

/// Reports dose sequences that skip an index (dose n+1 without dose n).
pub fn dose_sequence_gaps(records: &[VaccinationRecord]) -> Vec<DoseGap> {
    let mut seen: BTreeMap<(&str, String), HashSet<u32>> = BTreeMap::new();
    for r in records {
        seen.entry((r.person_id.as_str(), r.vaccine.to_ascii_lowercase()))
            .or_default()
            .insert(r.dose);
    }
    let mut gaps = Vec::new();
    for ((person, vaccine), doses) in seen {
        let max = *doses.iter().max().expect("non-empty");
        for d in 1..max {
            if !doses.contains(&d) {
                gaps.push(DoseGap {
                    person_id: person.to_string(),
                    vaccine: vaccine.clone(),
                    missing_dose: d,
                });
            }
        }
    }
    gaps
}

/// `100 * matched / normalizer` per month, from the unlabelled rows.
pub fn article_percentage(counts: &[ArticleCount], window: &SeriesWindow) -> Result<MonthlyTimeSeries> {
    let mut by_month: HashMap<YearMonth, &ArticleCount> = HashMap::new();
    for c in counts.iter().filter(|c| c.stance.is_none() && window.contains(c.month)) {
        if by_month.insert(c.month, c).is_some() {
            return Err(Error::invalid(format!("duplicate article total for {}", c.month)));
        }
    }
    let values = window
        .months()
        .map(|m| {
            let c = by_month.get(&m).ok_or(Error::MissingMonth(m))?;
            Ok(100.0 * c.matched as f64 / c.normalizer as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    MonthlyTimeSeries::new(window.from(), values)
}

/// Raw monthly count of articles labelled with `stance`; months without
/// rows count as zero.
pub fn stance_series(counts: &[ArticleCount], stance: Stance, window: &SeriesWindow) -> Result<MonthlyTimeSeries> {
    let mut by_month: HashMap<YearMonth, u64> = HashMap::new();
    for c in counts.iter().filter(|c| c.stance == Some(stance)) {
        *by_month.entry(c.month).or_insert(0) += c.matched;
    }
    MonthlyTimeSeries::new(
        window.from(),
        window
            .months()
            .map(|m| by_month.get(&m).copied().unwrap_or(0) as f64)
            .collect(),
    )
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn expect_header(rdr: &mut csv::Reader<impl Read>, source_name: &str, allowed: &[&[&str]]) -> Result<usize> {
    let headers = rdr.headers().map_err(|e| csv_error(source_name, 1, e))?;
    let got: Vec<&str> = headers.iter().collect();
    allowed
        .iter()
        .position(|a| *a == got.as_slice())
        .ok_or_else(|| Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: format!("unexpected header `{}`, expected `{}`", got.join(","), allowed[0].join(",")),
        })
}

fn rows<'a, R: Read>(
    rdr: &'a mut csv::Reader<R>,
    source_name: &str,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    let name = source_name.to_string();
    rdr.records().map(move |rec| {
        let rec = rec.map_err(|e| csv_error(&name, 0, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    })
}

fn parse_error(source_name: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: message.into(),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

/// Reads `person_id,birth_date,vaccination_date,vaccine,dose`.
pub fn read_vaccinations<R: Read>(r: R, source_name: &str) -> Result<Vec<VaccinationRecord>> {
    let mut rdr = reader(r);
    expect_header(
        &mut rdr,
        source_name,
        &[&["person_id", "birth_date", "vaccination_date", "vaccine", "dose"]],
    )?;
    let mut out = Vec::new();
    for row in rows(&mut rdr, source_name) {
        let (line, rec) = row?;
        let err = |m: String| parse_error(source_name, line, m);
        let birth = parse_date(&rec[1]).ok_or_else(|| err(format!("bad birth_date `{}`", &rec[1])))?;
        let vacc = parse_date(&rec[2]).ok_or_else(|| err(format!("bad vaccination_date `{}`", &rec[2])))?;
        let dose: u32 = rec[4].parse().map_err(|_| err(format!("bad dose `{}`", &rec[4])))?;
        if rec[0].is_empty() {
            return Err(err("empty person_id".into()));
        }
        let record = VaccinationRecord::new(&rec[0], birth, vacc, &rec[3], dose).map_err(|e| err(e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Reads `birth_month,count`.
pub fn read_cohorts<R: Read>(r: R, source_name: &str) -> Result<Vec<PopulationCohort>> {
    let mut rdr = reader(r);
    expect_header(&mut rdr, source_name, &[&["birth_month", "count"]])?;
    let mut out = Vec::new();
    for row in rows(&mut rdr, source_name) {
        let (line, rec) = row?;
        let err = |m: String| parse_error(source_name, line, m);
        let birth_month = rec[0].parse().map_err(|_| err(format!("bad birth_month `{}`", &rec[0])))?;
        let count = rec[1].parse().map_err(|_| err(format!("bad count `{}`", &rec[1])))?;
        out.push(PopulationCohort { birth_month, count });
    }
    Ok(out)
}

/// Reads `month,matched,normalizer[,stance]`; an empty stance cell means
/// an unlabelled total.
pub fn read_articles<R: Read>(r: R, source_name: &str) -> Result<Vec<ArticleCount>> {
    let mut rdr = reader(r);
    let layout = expect_header(
        &mut rdr,
        source_name,
        &[&["month", "matched", "normalizer"], &["month", "matched", "normalizer", "stance"]],
    )?;
    let mut out = Vec::new();
    for row in rows(&mut rdr, source_name) {
        let (line, rec) = row?;
        let err = |m: String| parse_error(source_name, line, m);
        let month = rec[0].parse().map_err(|_| err(format!("bad month `{}`", &rec[0])))?;
        let matched = rec[1].parse().map_err(|_| err(format!("bad matched count `{}`", &rec[1])))?;
        let normalizer = rec[2].parse().map_err(|_| err(format!("bad normalizer `{}`", &rec[2])))?;
        let stance = match (layout, rec.get(3)) {
            (1, Some(s)) if !s.is_empty() => Some(s.parse::<Stance>().map_err(|e| err(e.to_string()))?),
            _ => None,
        };
        out.push(ArticleCount::new(month, matched, normalizer, stance).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}
