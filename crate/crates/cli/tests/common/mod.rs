//! Fixture writers and scenario generators shared by the binary tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vaxmedia::YearMonth;

pub fn ym(s: &str) -> YearMonth {
    s.parse().unwrap()
}

pub fn vaxmedia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaxmedia")).args(args).output().expect("binary runs")
}

pub fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn write_series(dir: &Path, name: &str, start: YearMonth, values: &[f64]) -> PathBuf {
    let mut s = String::from("month,value\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(s, "{},{v}", start.add_months(i as i64)).unwrap();
    }
    write(dir, name, &s)
}

pub fn write_panel(dir: &Path, name: &str, start: YearMonth, names: &[&str], cols: &[Vec<f64>]) -> PathBuf {
    let mut s = format!("month,{}\n", names.join(","));
    for i in 0..cols[0].len() {
        let row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
        writeln!(s, "{},{}", start.add_months(i as i64), row.join(",")).unwrap();
    }
    write(dir, name, &s)
}

pub fn read_csv_column(path: &Path, column: usize) -> Vec<(String, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[0].to_string(), cells[column].parse().unwrap())
        })
        .collect()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Registry, cohort and article inputs for `derive`, together with the
/// ratios they were built to produce.
pub struct RegistryFixture {
    pub vaccinations: PathBuf,
    pub cohorts: PathBuf,
    pub articles: PathBuf,
    /// `(doses, eligible)` per month of the window.
    pub counts: Vec<(u64, u64)>,
    /// `(matched, normalizer)` per month of the window.
    pub article_counts: Vec<(u64, u64)>,
}

/// Writes a registry in which `doses[i]` first doses are given in month
/// `start + i` to children aged exactly `target_age` months, with
/// `cohort[i]` children born `target_age` months earlier.
pub fn registry_fixture(
    dir: &Path,
    start: YearMonth,
    target_age: u32,
    doses: &[u64],
    cohort: &[u64],
    articles: &[(u64, u64)],
) -> RegistryFixture {
    let mut vacc = String::from("person_id,birth_date,vaccination_date,vaccine,dose\n");
    let mut cohorts = String::from("birth_month,count\n");
    let mut id = 0;
    for (i, (&d, &c)) in doses.iter().zip(cohort).enumerate() {
        let m = start.add_months(i as i64);
        let born = m.add_months(-(target_age as i64));
        writeln!(cohorts, "{born},{c}").unwrap();
        for j in 0..d {
            let day = 1 + (j % 28);
            writeln!(
                vacc,
                "p{id:06},{}-{:02}-{day:02},{}-{:02}-{day:02},HPV,1",
                born.year(),
                born.month(),
                m.year(),
                m.month()
            )
            .unwrap();
            id += 1;
        }
    }
    let mut art = String::from("month,matched,normalizer,stance\n");
    for (i, &(matched, norm)) in articles.iter().enumerate() {
        let m = start.add_months(i as i64);
        writeln!(art, "{m},{matched},{norm},").unwrap();
        writeln!(art, "{m},{},{norm},anti", matched / 3).unwrap();
        writeln!(art, "{m},{},{norm},pro", matched / 2).unwrap();
    }
    RegistryFixture {
        vaccinations: write(dir, "vaccinations.csv", &vacc),
        cohorts: write(dir, "cohorts.csv", &cohorts),
        articles: write(dir, "articles.csv", &art),
        counts: doses.iter().copied().zip(cohort.iter().copied()).collect(),
        article_counts: articles.to_vec(),
    }
}

/// A media-shock scenario: vaccination activity is stable through media
/// peaks until `shock`, after which it falls when attention rises.
pub struct MediaShock {
    pub start: YearMonth,
    pub months: usize,
    pub shock: usize,
    pub noise_sd: f64,
    /// Planted activity, in percent.
    pub activity: Vec<f64>,
    /// Article percentage.
    pub attention: Vec<f64>,
}

impl MediaShock {
    pub const COUPLING: f64 = -24.0;
    const BASELINE: f64 = 5.0;

    pub fn generate(seed: u64, months: usize, shock: usize, noise_sd: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Normal::new(0.0, 1.0).unwrap();
        let phi: f64 = 0.3;
        let mut z = 0.0;
        let mut attention = Vec::with_capacity(months);
        for t in 0..months {
            z = phi * z + (1.0 - phi * phi).sqrt() * e.sample(&mut rng);
            let sd = if t < shock { 1.0 } else { 0.5 };
            attention.push(Self::BASELINE + sd * z);
        }
        let activity = (0..months)
            .map(|t| {
                let coupling = if t >= shock { Self::COUPLING * (attention[t] - Self::BASELINE) } else { 0.0 };
                80.0 + coupling + noise_sd * e.sample(&mut rng)
            })
            .collect();
        MediaShock { start: ym("2010-01"), months, shock, noise_sd, activity, attention }
    }

    pub fn shock_month(&self) -> YearMonth {
        self.start.add_months(self.shock as i64)
    }

    /// Registry inputs whose derived series reproduce the planted ones up
    /// to count rounding.
    pub fn write_inputs(&self, dir: &Path, seed: u64) -> RegistryFixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let cohort: Vec<u64> = (0..self.months).map(|_| rng.random_range(190..=210)).collect();
        let doses: Vec<u64> = self
            .activity
            .iter()
            .zip(&cohort)
            .map(|(a, &c)| (a * c as f64 / 100.0).round().max(0.0) as u64)
            .collect();
        let norm = 100_000;
        let articles: Vec<(u64, u64)> =
            self.attention.iter().map(|x| ((x * norm as f64 / 100.0).round() as u64, norm)).collect();
        registry_fixture(dir, self.start, 14, &doses, &cohort, &articles)
    }
}
