use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vaxmedia::ingest::{
    article_percentage, dose_sequence_gaps, read_articles, read_cohorts, read_vaccinations, stance_series,
    uptake_by_cohort, vaccination_activity, ActivityQuery, AgeBand, DoseSource, Stance, VaccineSchedule,
};

use crate::config::{layered, required};
use crate::error::{CliError, CliResult};
use crate::io::Run;

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// Registry CSV: person_id,birth_date,vaccination_date,vaccine,dose.
    #[arg(long)]
    pub vaccinations: Option<PathBuf>,
    /// Cohort CSV: birth_month,count.
    #[arg(long)]
    pub cohorts: Option<PathBuf>,
    /// Article CSV: month,matched,normalizer[,stance].
    #[arg(long)]
    pub articles: Option<PathBuf>,
    #[arg(long)]
    pub dose: Option<u32>,
    /// Age in months at which the dose is scheduled.
    #[arg(long)]
    pub target_age: Option<u32>,
    #[arg(long)]
    pub vaccine: Option<String>,
    /// Only count doses given at ages `MIN..MAX` months.
    #[arg(long)]
    pub age_band: Option<String>,
    /// Assign doses by nearest scheduled age, `DOSE:AGE,...` (e.g. 1:14,2:108).
    #[arg(long)]
    pub schedule: Option<String>,
}

layered!(Args { vaccinations, cohorts, articles, dose, target_age, vaccine, age_band, schedule });

fn parse_age_band(s: &str) -> CliResult<AgeBand> {
    let bad = || CliError::usage(format!("age band `{s}` is not MIN..MAX"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let band = AgeBand {
        min_months: a.trim().parse().map_err(|_| bad())?,
        max_months: b.trim().parse().map_err(|_| bad())?,
    };
    if band.min_months > band.max_months {
        return Err(bad());
    }
    Ok(band)
}

fn parse_schedule(s: &str) -> CliResult<VaccineSchedule> {
    let bad = || CliError::usage(format!("schedule `{s}` is not DOSE:AGE,..."));
    let pairs = s
        .split(',')
        .map(|item| {
            let (d, a) = item.split_once(':').ok_or_else(bad)?;
            Ok((d.trim().parse().map_err(|_| bad())?, a.trim().parse().map_err(|_| bad())?))
        })
        .collect::<CliResult<Vec<(u32, u32)>>>()?;
    Ok(VaccineSchedule::from_pairs(&pairs)?)
}

#[derive(Serialize)]
struct Summary {
    window: vaxmedia::SeriesWindow,
    records: usize,
    cohorts: usize,
    dose_gaps: usize,
    activity_mean: f64,
    uptake: std::collections::BTreeMap<i32, f64>,
    article_rows: Option<usize>,
}

pub fn run(run: &mut Run, args: Args) -> CliResult<()> {
    let window = required(run.window(), "window")?;
    let vacc_path = required(args.vaccinations.clone(), "vaccinations")?;
    let cohort_path = required(args.cohorts.clone(), "cohorts")?;
    let dose = required(args.dose, "dose")?;
    let target_age = required(args.target_age, "target-age")?;

    let bytes = run.read(&vacc_path)?;
    let records = read_vaccinations(bytes.as_slice(), &vacc_path.display().to_string())?;
    let bytes = run.read(&cohort_path)?;
    let cohorts = read_cohorts(bytes.as_slice(), &cohort_path.display().to_string())?;

    let mut query = ActivityQuery::new(dose, target_age);
    query.vaccine = args.vaccine.clone();
    query.age_band = args.age_band.as_deref().map(parse_age_band).transpose()?;
    if let Some(s) = &args.schedule {
        query.dose_source = DoseSource::NearestTarget(parse_schedule(s)?);
    }

    let activity = vaccination_activity(&records, &cohorts, &query, &window)?;
    let uptake = uptake_by_cohort(&records, &cohorts, dose, args.vaccine.as_deref())?;
    let mut written = vec![run.write_series("activity.csv", &activity)?];
    let mut csv = String::from("birth_year,uptake\n");
    for (year, u) in &uptake {
        csv.push_str(&format!("{year},{u}\n"));
    }
    written.push(run.write_bytes("uptake.csv", csv.as_bytes())?);

    let mut article_rows = None;
    if let Some(path) = &args.articles {
        let bytes = run.read(path)?;
        let name = path.display().to_string();
        let counts = read_articles(bytes.as_slice(), &name)?;
        if counts.is_empty() {
            return Err(vaxmedia::Error::Parse { source_name: name, line: 1, message: "no data rows".into() }.into());
        }
        article_rows = Some(counts.len());
        let pct = article_percentage(&counts, &window)?;
        written.push(run.write_series("article_percentage.csv", &pct)?);
        for stance in Stance::ALL {
            let s = stance_series(&counts, stance, &window)?;
            written.push(run.write_series(&format!("stance_{stance}.csv"), &s)?);
        }
    }

    let summary = Summary {
        window,
        records: records.len(),
        cohorts: cohorts.len(),
        dose_gaps: dose_sequence_gaps(&records).len(),
        activity_mean: activity.values().iter().sum::<f64>() / activity.len() as f64,
        uptake,
        article_rows,
    };
    written.push(run.report("derive.json", "derive", &args, summary)?);
    super::print_written(&written);
    Ok(())
}
