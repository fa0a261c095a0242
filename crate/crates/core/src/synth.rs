//! Deterministic generator for a census-shaped benchmark CSV.
//!
//! The public census-income extract is not redistributable inside this
//! repository, so tests and the demo pipeline run on a generated stand-in
//! with the same 12-attribute shape, token vocabulary, missing-value
//! marker, and class balance. Labels follow a logistic score over the
//! generated attributes, with the noise temperature tuned so a k=5
//! nearest-neighbor model lands in the documented accuracy band.

use std::fmt::Write as _;

use crate::rng::SplitMix64;
use crate::schema::FeatureSchema;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Usable (fully populated) rows to emit.
    pub rows: usize,
    /// Emit one `?`-marked row after every this many usable rows; 0 disables.
    pub missing_every: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 26048,
            missing_every: 48,
            seed: 7,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn clamp_round(x: f64, lo: i64, hi: i64) -> i64 {
    (x.round() as i64).clamp(lo, hi)
}

/// Weighted category pick; weights need not be normalized.
fn pick<'a>(rng: &mut SplitMix64, items: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut t = rng.next_f64() * total;
    for (name, w) in items {
        t -= w;
        if t <= 0.0 {
            return name;
        }
    }
    items.last().unwrap().0
}

struct Row {
    age: i64,
    country: &'static str,
    education_num: i64,
    marital: &'static str,
    relationship: &'static str,
    race: &'static str,
    sex: &'static str,
    capital_gain: i64,
    capital_loss: i64,
    workclass: &'static str,
    occupation: &'static str,
    hours: i64,
    label: bool,
}

const COUNTRIES: &[(&str, f64)] = &[
    ("United-States", 913.0),
    ("Mexico", 20.0),
    ("Philippines", 6.0),
    ("Germany", 4.0),
    ("Canada", 4.0),
    ("Puerto-Rico", 4.0),
    ("El-Salvador", 3.0),
    ("India", 3.0),
    ("Cuba", 3.0),
    ("England", 3.0),
    ("Jamaica", 2.0),
    ("South", 2.0),
    ("China", 2.0),
    ("Italy", 2.0),
    ("Dominican-Republic", 2.0),
    ("Vietnam", 2.0),
    ("Guatemala", 2.0),
    ("Japan", 2.0),
    ("Poland", 2.0),
    ("Columbia", 2.0),
    ("Taiwan", 1.0),
    ("Haiti", 1.0),
    ("Iran", 1.0),
    ("Portugal", 1.0),
    ("Nicaragua", 1.0),
    ("Peru", 1.0),
    ("France", 1.0),
    ("Greece", 1.0),
    ("Ecuador", 1.0),
    ("Ireland", 1.0),
    ("Hong", 1.0),
    ("Cambodia", 1.0),
    ("Trinadad&Tobago", 1.0),
    ("Laos", 1.0),
    ("Thailand", 1.0),
    ("Yugoslavia", 1.0),
    ("Outlying-US(Guam-USVI-etc)", 1.0),
    ("Honduras", 1.0),
    ("Hungary", 1.0),
    ("Scotland", 1.0),
    ("Holand-Netherlands", 0.5),
];

const RACES: &[(&str, f64)] = &[
    ("White", 854.0),
    ("Black", 96.0),
    ("Asian-Pac-Islander", 31.0),
    ("Amer-Indian-Eskimo", 10.0),
    ("Other", 9.0),
];

fn occupation_score(occ: &str) -> f64 {
    match occ {
        "Exec-managerial" => 0.85,
        "Prof-specialty" => 0.75,
        "Protective-serv" => 0.40,
        "Tech-support" => 0.40,
        "Sales" => 0.25,
        "Craft-repair" => 0.05,
        "Transport-moving" => -0.05,
        "Adm-clerical" => -0.15,
        "Machine-op-inspct" => -0.40,
        "Farming-fishing" => -0.55,
        "Armed-Forces" => -0.20,
        "Handlers-cleaners" => -0.80,
        "Other-service" => -0.95,
        "Priv-house-serv" => -1.40,
        _ => 0.0,
    }
}

fn workclass_score(wc: &str) -> f64 {
    match wc {
        "Self-emp-inc" => 0.55,
        "Federal-gov" => 0.35,
        "Local-gov" => 0.10,
        "State-gov" => 0.05,
        "Private" => 0.0,
        "Self-emp-not-inc" => -0.05,
        "Without-pay" => -1.2,
        "Never-worked" => -1.2,
        _ => 0.0,
    }
}

fn generate_row(rng: &mut SplitMix64) -> Row {
    let z = rng.next_gaussian();

    let age = clamp_round(37.5 + 7.5 * z + 9.5 * rng.next_gaussian(), 17, 90);
    let education_num = clamp_round(10.1 + 2.3 * z + 1.8 * rng.next_gaussian(), 1, 16);

    let married = rng.next_f64() < 0.18 + 0.55 * sigmoid(1.1 * z + 0.02 * (age - 37) as f64);
    let marital = if married {
        pick(
            rng,
            &[
                ("Married-civ-spouse", 97.0),
                ("Married-AF-spouse", 1.0),
                ("Married-spouse-absent", 2.0),
            ],
        )
    } else {
        pick(
            rng,
            &[
                ("Never-married", 55.0),
                ("Divorced", 24.0),
                ("Separated", 6.0),
                ("Widowed", 13.0),
                ("Married-spouse-absent", 2.0),
            ],
        )
    };
    let married_civ = marital == "Married-civ-spouse";

    let male = rng.next_f64() < 0.67;
    let sex = if male { "Male" } else { "Female" };
    let relationship = if married_civ {
        if male {
            "Husband"
        } else {
            "Wife"
        }
    } else {
        pick(
            rng,
            &[
                ("Not-in-family", 48.0),
                ("Own-child", 28.0),
                ("Unmarried", 18.0),
                ("Other-relative", 6.0),
            ],
        )
    };

    let race = pick(rng, RACES);
    let country = pick(rng, COUNTRIES);

    let t = sigmoid(1.2 * z);
    let workclass = pick(
        rng,
        &[
            ("Private", 78.0 - 14.0 * t),
            ("Self-emp-not-inc", 6.0 + 4.0 * t),
            ("Self-emp-inc", 1.0 + 5.0 * t),
            ("Federal-gov", 2.0 + 2.0 * t),
            ("Local-gov", 6.0 + 1.0 * t),
            ("State-gov", 4.0 + 1.0 * t),
            ("Without-pay", 0.30 * (1.0 - t)),
            ("Never-worked", 0.25 * (1.0 - t)),
        ],
    );
    let occupation = pick(
        rng,
        &[
            ("Exec-managerial", 4.0 + 18.0 * t),
            ("Prof-specialty", 4.0 + 18.0 * t),
            ("Tech-support", 2.0 + 3.0 * t),
            ("Sales", 9.0 + 3.0 * t),
            ("Protective-serv", 1.5 + 1.0 * t),
            ("Adm-clerical", 14.0 - 4.0 * t),
            ("Craft-repair", 14.0 - 3.0 * t),
            ("Transport-moving", 6.0 - 2.0 * t),
            ("Machine-op-inspct", 9.0 - 5.0 * t),
            ("Farming-fishing", 4.0 - 2.0 * t),
            ("Handlers-cleaners", 7.0 - 5.0 * t),
            ("Other-service", 13.0 - 9.0 * t),
            ("Priv-house-serv", 0.8 * (1.0 - t)),
            ("Armed-Forces", 0.05),
        ],
    );

    let gain_p = 0.030 + 0.070 * sigmoid(2.0 * z - 1.0);
    let capital_gain = if rng.next_f64() < gain_p {
        clamp_round((8.1 + 0.9 * rng.next_gaussian()).exp(), 114, 99999)
    } else {
        0
    };
    let capital_loss = if rng.next_f64() < 0.047 {
        clamp_round(1870.0 + 390.0 * rng.next_gaussian(), 155, 4356)
    } else {
        0
    };

    let hours = clamp_round(
        39.0 + 5.0 * z + 9.0 * rng.next_gaussian() + if married_civ && male { 3.0 } else { 0.0 },
        1,
        99,
    );

    let mut s = -3.55;
    s += 0.030 * (age - 38) as f64 - 0.00085 * ((age - 52) * (age - 52)) as f64 + 0.55;
    s += 0.33 * (education_num - 10) as f64;
    if married_civ {
        s += 1.95;
    }
    if male {
        s += 0.20;
    }
    s += 0.030 * (hours - 40) as f64;
    if capital_gain > 6000 {
        s += 3.2;
    } else if capital_gain > 0 {
        s += 0.9;
    }
    if capital_loss > 1500 {
        s += 0.75;
    }
    s += occupation_score(occupation);
    s += workclass_score(workclass);

    let label = rng.next_f64() < sigmoid(s / LABEL_TEMPERATURE);

    Row {
        age,
        country,
        education_num,
        marital,
        relationship,
        race,
        sex,
        capital_gain,
        capital_loss,
        workclass,
        occupation,
        hours,
        label,
    }
}

/// Label noise temperature. Higher values flatten class probabilities and
/// lower the ceiling any classifier can reach; tuned so the reference
/// pipeline's k=5 model scores near the documented 0.7734 test accuracy.
const LABEL_TEMPERATURE: f64 = 1.35;

/// Renders the full CSV (header included) for the given configuration.
pub fn generate_census_csv(config: &SynthConfig) -> String {
    let schema = FeatureSchema::census();
    let mut out = String::with_capacity(config.rows * 96 + 128);
    let names = schema.feature_names();
    writeln!(out, "{},{}", names.join(","), schema.label_name).unwrap();

    let mut rng = SplitMix64::new(config.seed);
    for i in 0..config.rows {
        let r = generate_row(&mut rng);
        write_row(&mut out, &r, false);
        if config.missing_every > 0 && (i + 1) % config.missing_every == 0 {
            let m = generate_row(&mut rng);
            write_row(&mut out, &m, true);
        }
    }
    out
}

fn write_row(out: &mut String, r: &Row, missing: bool) {
    let workclass = if missing { "?" } else { r.workclass };
    let occupation = if missing { "?" } else { r.occupation };
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.age,
        r.country,
        r.education_num,
        r.marital,
        r.relationship,
        r.race,
        r.sex,
        r.capital_gain,
        r.capital_loss,
        workclass,
        occupation,
        r.hours,
        if r.label { ">50K" } else { "<=50K" }
    )
    .unwrap();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{encode_and_normalize, load_census_csv};
    use std::io::Write;

    fn load(config: &SynthConfig) -> crate::dataset::RawDataset {
        let csv = generate_census_csv(config);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(csv.as_bytes()).unwrap();
        load_census_csv(f.path(), &FeatureSchema::census()).unwrap()
    }

    #[test]
    fn generated_corpus_loads_with_expected_counts() {
        let config = SynthConfig {
            rows: 2000,
            missing_every: 40,
            seed: 7,
        };
        let raw = load(&config);
        assert_eq!(raw.values.rows, 2000);
        assert_eq!(raw.dropped_missing, 50);
        assert_eq!(raw.values.cols, 12);
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::default();
        let small = SynthConfig {
            rows: 500,
            ..config.clone()
        };
        assert_eq!(generate_census_csv(&small), generate_census_csv(&small));
        let other = SynthConfig {
            seed: 8,
            ..small.clone()
        };
        assert_ne!(generate_census_csv(&small), generate_census_csv(&other));
    }

    #[test]
    fn class_balance_is_census_like() {
        let raw = load(&SynthConfig {
            rows: 8000,
            missing_every: 0,
            seed: 7,
        });
        let positives: u32 = raw.labels.iter().map(|&l| l as u32).sum();
        let rate = positives as f64 / raw.labels.len() as f64;
        assert!((0.18..=0.32).contains(&rate), "positive rate {rate}");
    }

    #[test]
    fn normalized_corpus_is_in_range() {
        let raw = load(&SynthConfig {
            rows: 1500,
            missing_every: 60,
            seed: 11,
        });
        let num = encode_and_normalize(&raw).unwrap();
        for j in 0..num.n_cols() {
            let col = num.matrix.column(j);
            assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            // Every generated column should be non-constant at this size.
            assert!(col.iter().any(|&v| v == 0.0) && col.iter().any(|&v| v == 1.0));
        }
    }
}
