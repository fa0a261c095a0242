//! Feature schemas and host/guest partitions.

use crate::error::{Error, Result};

/// How a feature's raw tokens are interpreted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureKind {
    Continuous,
    /// Categories in their encoding order; the ordinal code of a token is
    /// its position in this list.
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn continuous(name: &str) -> Self {
        Feature {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Feature {
            name: name.to_string(),
            kind: FeatureKind::Categorical(categories.iter().map(|c| c.to_string()).collect()),
        }
    }
}

/// Ordered feature list plus label description for one dataset shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
    pub label_name: String,
    /// Label token that maps to 1; anything else maps to 0.
    pub positive_label: String,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>, label_name: &str, positive_label: &str) -> Result<Self> {
        let schema = FeatureSchema {
            features,
            label_name: label_name.to_string(),
            positive_label: positive_label.to_string(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("no features".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate feature name {:?}",
                    f.name
                )));
            }
            if let FeatureKind::Categorical(cats) = &f.kind {
                if cats.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical feature {:?} needs at least 2 categories",
                        f.name
                    )));
                }
            }
        }
        if self.label_name.is_empty() {
            return Err(Error::Schema("empty label name".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// The 12-attribute census-income schema: host attributes first, then the
    /// three work-related attributes that play the guest role in the
    /// reference configuration. Category lists follow the UCI census token
    /// order, so the schema ingests the standard file unchanged.
    pub fn census() -> Self {
        FeatureSchema {
            features: vec![
                Feature::continuous("Age"),
                Feature::categorical(
                    "Country",
                    &[
                        "United-States",
                        "Cambodia",
                        "England",
                        "Puerto-Rico",
                        "Canada",
                        "Germany",
                        "Outlying-US(Guam-USVI-etc)",
                        "India",
                        "Japan",
                        "Greece",
                        "South",
                        "China",
                        "Cuba",
                        "Iran",
                        "Honduras",
                        "Philippines",
                        "Italy",
                        "Poland",
                        "Jamaica",
                        "Vietnam",
                        "Mexico",
                        "Portugal",
                        "Ireland",
                        "France",
                        "Dominican-Republic",
                        "Laos",
                        "Ecuador",
                        "Taiwan",
                        "Haiti",
                        "Columbia",
                        "Hungary",
                        "Guatemala",
                        "Nicaragua",
                        "Scotland",
                        "Thailand",
                        "Yugoslavia",
                        "El-Salvador",
                        "Trinadad&Tobago",
                        "Peru",
                        "Hong",
                        "Holand-Netherlands",
                    ],
                ),
                Feature::continuous("Education-Num"),
                Feature::categorical(
                    "Marital Status",
                    &[
                        "Married-civ-spouse",
                        "Divorced",
                        "Never-married",
                        "Separated",
                        "Widowed",
                        "Married-spouse-absent",
                        "Married-AF-spouse",
                    ],
                ),
                Feature::categorical(
                    "Relationship",
                    &[
                        "Wife",
                        "Own-child",
                        "Husband",
                        "Not-in-family",
                        "Other-relative",
                        "Unmarried",
                    ],
                ),
                Feature::categorical(
                    "Race",
                    &[
                        "White",
                        "Asian-Pac-Islander",
                        "Amer-Indian-Eskimo",
                        "Other",
                        "Black",
                    ],
                ),
                Feature::categorical("Sex", &["Female", "Male"]),
                Feature::continuous("Capital Gain"),
                Feature::continuous("Capital Loss"),
                Feature::categorical(
                    "Workclass",
                    &[
                        "Private",
                        "Self-emp-not-inc",
                        "Self-emp-inc",
                        "Federal-gov",
                        "Local-gov",
                        "State-gov",
                        "Without-pay",
                        "Never-worked",
                    ],
                ),
                Feature::categorical(
                    "Occupation",
                    &[
                        "Tech-support",
                        "Craft-repair",
                        "Other-service",
                        "Sales",
                        "Exec-managerial",
                        "Prof-specialty",
                        "Handlers-cleaners",
                        "Machine-op-inspct",
                        "Adm-clerical",
                        "Farming-fishing",
                        "Transport-moving",
                        "Priv-house-serv",
                        "Protective-serv",
                        "Armed-Forces",
                    ],
                ),
                Feature::continuous("Hours per week"),
            ],
            label_name: "Income".to_string(),
            positive_label: ">50K".to_string(),
        }
    }

    /// Guest feature names for the three-feature guest configuration.
    pub const GUEST3: [&'static str; 3] = ["Workclass", "Occupation", "Hours per week"];

    /// Guest feature names for the five-feature guest configuration.
    pub const GUEST5: [&'static str; 5] = [
        "Workclass",
        "Occupation",
        "Hours per week",
        "Capital Gain",
        "Capital Loss",
    ];
}

/// Disjoint assignment of column indices to the Host and Guest roles.
///
/// Both index lists keep schema column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturePartition {
    pub host_indices: Vec<usize>,
    pub guest_indices: Vec<usize>,
}

impl FeaturePartition {
    pub fn new(
        host_indices: Vec<usize>,
        guest_indices: Vec<usize>,
        n_columns: usize,
    ) -> Result<Self> {
        let p = FeaturePartition {
            host_indices,
            guest_indices,
        };
        p.validate(n_columns)?;
        Ok(p)
    }

    /// Builds a partition by naming the guest features; every other schema
    /// feature becomes a host feature.
    pub fn from_guest_names(schema: &FeatureSchema, guest: &[&str]) -> Result<Self> {
        let mut guest_indices = Vec::with_capacity(guest.len());
        for name in guest {
            let idx = schema
                .feature_index(name)
                .ok_or_else(|| Error::Partition(format!("unknown guest feature {name:?}")))?;
            guest_indices.push(idx);
        }
        guest_indices.sort_unstable();
        let host_indices: Vec<usize> = (0..schema.n_features())
            .filter(|i| !guest_indices.contains(i))
            .collect();
        FeaturePartition::new(host_indices, guest_indices, schema.n_features())
    }

    pub fn validate(&self, n_columns: usize) -> Result<()> {
        if self.host_indices.is_empty() || self.guest_indices.is_empty() {
            return Err(Error::Partition(
                "both roles need at least one column".into(),
            ));
        }
        let mut seen = vec![false; n_columns];
        for &i in self.host_indices.iter().chain(&self.guest_indices) {
            if i >= n_columns {
                return Err(Error::Partition(format!("column index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Partition(format!("column {i} assigned twice")));
            }
            seen[i] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Partition(
                "partition does not cover all columns".into(),
            ));
        }
        Ok(())
    }

    pub fn n_host(&self) -> usize {
        self.host_indices.len()
    }

    pub fn n_guest(&self) -> usize {
        self.guest_indices.len()
    }
}
