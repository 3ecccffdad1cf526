//! Objective weights for the weighted l1 distance over indicators.

use std::collections::HashMap;
use std::io::Read;

use num_integer::Integer;
use num_rational::Ratio;

use crate::error::{CfxError, Result};
use crate::models::{Feature, FeatureKind};
use crate::registry::{FeatureGroup, IndicatorRegistry};

/// Weights are rounded to rationals with this denominator before entering
/// the exact integer objective.
pub const WEIGHT_DENOMINATOR_CAP: i64 = 1_000_000;

/// One nonnegative finite weight per registry entry.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

/// Integer weights sharing one denominator: `weight_i = values[i] / denominator`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaledWeights {
    pub values: Vec<i64>,
    pub denominator: i64,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(CfxError::BadModel(format!("weight {i} is {w}; weights must be finite and >= 0")));
        }
        Ok(WeightVector { weights })
    }

    pub fn uniform(len: usize) -> Self {
        WeightVector { weights: vec![1.0; len] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        WeightVector::new(self.weights.iter().map(|w| w * factor).collect())
    }

    /// Check the vector covers a registry of `len` entries.
    pub fn check_covers(&self, len: usize) -> Result<()> {
        if self.weights.len() < len {
            return Err(CfxError::MissingWeight(self.weights.len()));
        }
        Ok(())
    }

    /// Rationalize every weight (denominator capped at
    /// [`WEIGHT_DENOMINATOR_CAP`]) and bring them to a common denominator.
    pub fn scaled(&self) -> ScaledWeights {
        let ratios: Vec<Ratio<i64>> = self
            .weights
            .iter()
            .map(|w| Ratio::new((w * WEIGHT_DENOMINATOR_CAP as f64).round() as i64, WEIGHT_DENOMINATOR_CAP))
            .collect();
        let denominator = ratios.iter().fold(1i64, |acc, r| acc.lcm(r.denom()));
        let values = ratios.iter().map(|r| r.numer() * (denominator / r.denom())).collect();
        ScaledWeights { values, denominator }
    }
}

/// A dataset column, parsed against a feature declaration.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Real(Vec<f64>),
    Category(Vec<usize>),
}

/// Rows of feature values, stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: HashMap<String, Column>,
    rows: usize,
}

impl Dataset {
    pub fn new(columns: HashMap<String, Column>) -> Result<Self> {
        let mut lens = columns.values().map(|c| match c {
            Column::Real(v) => v.len(),
            Column::Category(v) => v.len(),
        });
        let rows = lens.next().unwrap_or(0);
        if lens.any(|l| l != rows) {
            return Err(CfxError::Dataset("columns have different lengths".into()));
        }
        if rows == 0 {
            return Err(CfxError::Dataset("dataset is empty".into()));
        }
        Ok(Dataset { columns, rows })
    }

    /// Parse CSV with a header row. Columns naming a model feature are typed
    /// by that feature; other columns are ignored with a warning.
    pub fn from_csv<R: Read>(reader: R, features: &[Feature]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| CfxError::Dataset(e.to_string()))?.clone();
        let mut slots: Vec<Option<usize>> = Vec::with_capacity(headers.len());
        for h in headers.iter() {
            let idx = features.iter().position(|f| f.name == h);
            if idx.is_none() {
                log::warn!("ignoring dataset column `{h}` (not a model feature)");
            }
            slots.push(idx);
        }
        let mut cols: Vec<Option<Column>> = slots
            .iter()
            .map(|s| {
                s.map(|fi| match features[fi].kind {
                    FeatureKind::Continuous => Column::Real(Vec::new()),
                    FeatureKind::Categorical(_) => Column::Category(Vec::new()),
                })
            })
            .collect();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| CfxError::Dataset(e.to_string()))?;
            for (j, field) in record.iter().enumerate() {
                let (Some(fi), Some(col)) = (slots.get(j).copied().flatten(), cols.get_mut(j).and_then(Option::as_mut)) else {
                    continue;
                };
                let f = &features[fi];
                match col {
                    Column::Real(v) => v.push(field.trim().parse::<f64>().map_err(|_| {
                        CfxError::Dataset(format!("row {}: `{field}` is not a number for `{}`", line + 2, f.name))
                    })?),
                    Column::Category(v) => v.push(f.category_index(field.trim()).ok_or_else(|| {
                        CfxError::UnknownCategory { feature: f.name.clone(), category: field.to_string() }
                    })?),
                }
            }
        }
        let columns = slots
            .into_iter()
            .zip(cols)
            .filter_map(|(s, c)| Some((features[s?].name.clone(), c?)))
            .collect();
        Dataset::new(columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns.get(name).ok_or_else(|| CfxError::MissingColumn(name.to_string()))
    }

    fn real_column(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Real(v) => Ok(v),
            Column::Category(_) => Err(CfxError::Dataset(format!("column `{name}` is categorical"))),
        }
    }

    fn category_column(&self, name: &str) -> Result<&[usize]> {
        match self.column(name)? {
            Column::Category(v) => Ok(v),
            Column::Real(_) => Err(CfxError::Dataset(format!("column `{name}` is continuous"))),
        }
    }
}

/// Median; the mean of the two central order statistics for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Option<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some(var.sqrt())
}

fn inverse(spread: Option<f64>) -> Option<f64> {
    spread.filter(|s| *s > 0.0 && s.is_finite()).map(|s| 1.0 / s).filter(|w| w.is_finite())
}

/// Degenerate entries take the largest finite weight of the same feature, else 1.
fn fill_fallbacks(group: &[Option<f64>]) -> Vec<f64> {
    let fallback = group.iter().flatten().copied().fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))));
    group.iter().map(|w| w.or(fallback).unwrap_or(1.0)).collect()
}

fn indicator_stds(categories: &[usize], count: usize) -> Vec<Option<f64>> {
    (0..count)
        .map(|c| {
            let col: Vec<f64> = categories.iter().map(|&v| (v == c) as u8 as f64).collect();
            inverse(sample_std(&col))
        })
        .collect()
}

pub fn uniform_weights(registry: &IndicatorRegistry) -> WeightVector {
    WeightVector::uniform(registry.len())
}

/// Rule-conditioned inverse MAD for threshold rules: the MAD of the rows
/// satisfying `X <= a`. One-hot indicators use the inverse standard
/// deviation of their 0/1 column.
pub fn mad_rule_weights(registry: &IndicatorRegistry, dataset: &Dataset) -> Result<WeightVector> {
    let mut weights = vec![1.0; registry.len()];
    for group in registry.groups() {
        let feature = &registry.features()[group.feature()];
        let raw: Vec<Option<f64>> = match group {
            FeatureGroup::Thresholds(t) => {
                let col = dataset.real_column(&feature.name)?;
                t.thresholds
                    .iter()
                    .map(|&a| {
                        let subset: Vec<f64> = col.iter().copied().filter(|x| *x <= a).collect();
                        inverse(mad(&subset))
                    })
                    .collect()
            }
            FeatureGroup::OneHot(g) => indicator_stds(dataset.category_column(&feature.name)?, g.vars.len()),
        };
        for (&var, w) in group.vars().iter().zip(fill_fallbacks(&raw)) {
            weights[var] = w;
        }
    }
    WeightVector::new(weights)
}

/// Inverse sample standard deviation of each feature column, shared by all
/// rules on that feature; one-hot indicators use their 0/1 column.
pub fn std_weights(registry: &IndicatorRegistry, dataset: &Dataset) -> Result<WeightVector> {
    let mut weights = vec![1.0; registry.len()];
    for group in registry.groups() {
        let feature = &registry.features()[group.feature()];
        let raw: Vec<Option<f64>> = match group {
            FeatureGroup::Thresholds(t) => {
                let w = inverse(sample_std(dataset.real_column(&feature.name)?));
                vec![w; t.vars.len()]
            }
            FeatureGroup::OneHot(g) => indicator_stds(dataset.category_column(&feature.name)?, g.vars.len()),
        };
        for (&var, w) in group.vars().iter().zip(fill_fallbacks(&raw)) {
            weights[var] = w;
        }
    }
    WeightVector::new(weights)
}
