//! Count-based versus importance-based category distributions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::annotation::{FertilityClass, Pos};
use crate::error::{Error, Result};

/// Importance times sentence length, so a word of average importance scores 1.
pub fn length_normalize(importance: &[f64]) -> Vec<f64> {
    let m = importance.len() as f64;
    importance.iter().map(|v| v * m).collect()
}

/// `(attr − count) / count`; `None` when `count` is zero.
pub fn relative_change(count_share: f64, attr_share: f64) -> Option<f64> {
    (count_share > 0.0).then(|| (attr_share - count_share) / count_share)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub label: String,
    pub count_share: f64,
    pub attr_share: f64,
    /// Relative change; `None` for categories absent from the corpus.
    pub delta: Option<f64>,
}

impl DistributionRow {
    pub fn new(label: impl Into<String>, count_share: f64, attr_share: f64) -> Self {
        DistributionRow {
            label: label.into(),
            count_share,
            attr_share,
            delta: relative_change(count_share, attr_share),
        }
    }

    pub fn is_present(&self) -> bool {
        self.delta.is_some()
    }
}

/// Formats a relative change the way the tables print it: `+6.27%`, `0.00%`.
pub fn format_delta(delta: Option<f64>) -> String {
    match delta {
        None => "-".to_string(),
        Some(d) => {
            let pct = d * 100.0;
            if format!("{pct:.2}") == "0.00" || format!("{pct:.2}") == "-0.00" {
                "0.00%".to_string()
            } else {
                format!("{pct:+.2}%")
            }
        }
    }
}

fn shares<C: Ord + Copy>(
    importances: &[Vec<f64>],
    categories: &[Vec<C>],
) -> Result<(BTreeMap<C, (f64, f64)>, f64, f64)> {
    if importances.len() != categories.len() {
        return Err(Error::InvalidInput(format!(
            "{} importance vectors but {} annotated sentences",
            importances.len(),
            categories.len()
        )));
    }
    let mut acc: BTreeMap<C, (f64, f64)> = BTreeMap::new();
    let (mut tokens, mut mass) = (0.0, 0.0);
    for (i, (imp, cats)) in importances.iter().zip(categories).enumerate() {
        if imp.len() != cats.len() {
            return Err(Error::InvalidInput(format!(
                "{} words but {} annotations",
                imp.len(),
                cats.len()
            ))
            .in_sentence(i));
        }
        for (v, &c) in length_normalize(imp).iter().zip(cats) {
            let e = acc.entry(c).or_default();
            e.0 += 1.0;
            e.1 += v;
            tokens += 1.0;
            mass += v;
        }
    }
    if tokens == 0.0 || mass <= 0.0 {
        return Err(Error::InvalidInput("no annotated importance mass".into()));
    }
    Ok((acc, tokens, mass))
}

/// POS rows in table order, followed by Content and Content-Free totals.
/// Tokens tagged [`Pos::None`] count as Others.
pub fn pos_distribution(importances: &[Vec<f64>], tags: &[Vec<Pos>]) -> Result<Vec<DistributionRow>> {
    let folded: Vec<Vec<Pos>> = tags
        .iter()
        .map(|s| s.iter().map(|&p| if p == Pos::None { Pos::Others } else { p }).collect())
        .collect();
    let (acc, tokens, mass) = shares(importances, &folded)?;
    let row = |p: Pos| {
        let (c, a) = acc.get(&p).copied().unwrap_or_default();
        DistributionRow::new(p.label(), c / tokens, a / mass)
    };
    let mut rows: Vec<DistributionRow> = Pos::TABLE.iter().map(|&p| row(p)).collect();
    let total = |content: bool| {
        let (c, a) = Pos::TABLE
            .iter()
            .filter(|p| p.is_content() == content)
            .filter_map(|p| acc.get(p))
            .fold((0.0, 0.0), |s, v| (s.0 + v.0, s.1 + v.1));
        DistributionRow::new(
            if content { "Content" } else { "Content-Free" },
            c / tokens,
            a / mass,
        )
    };
    rows.push(total(true));
    rows.push(total(false));
    Ok(rows)
}

pub fn fertility_distribution(
    importances: &[Vec<f64>],
    classes: &[Vec<FertilityClass>],
) -> Result<Vec<DistributionRow>> {
    let (acc, tokens, mass) = shares(importances, classes)?;
    Ok(FertilityClass::ALL
        .iter()
        .filter_map(|f| acc.get(f).map(|&(c, a)| DistributionRow::new(f.label(), c / tokens, a / mass)))
        .collect())
}

/// `category,count,attri,delta` CSV.
pub fn distribution_csv(rows: &[DistributionRow]) -> String {
    let mut out = String::from("category,count,attri,delta\n");
    for r in rows {
        if r.is_present() {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{}",
                r.label,
                r.count_share,
                r.attr_share,
                format_delta(r.delta)
            );
        } else {
            let _ = writeln!(out, "{},-,-,-", r.label);
        }
    }
    out
}
