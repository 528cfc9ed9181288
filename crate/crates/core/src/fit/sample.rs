use std::io::Read;

use crate::error::{Error, Result};

/// Nonnegative observations with weights (population counts for bracketed
/// tables, `1` for raw samples), kept sorted by value.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    points: Vec<(f64, f64)>,
    total: f64,
    mean: f64,
}

impl WeightedSample {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_weighted(values.iter().map(|&v| (v, 1.0)).collect())
    }

    pub fn from_i64(values: &[i64]) -> Result<Self> {
        Self::from_weighted(values.iter().map(|&v| (v as f64, 1.0)).collect())
    }

    pub fn from_weighted(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.0 >= 0.0) || !p.0.is_finite()) {
            return Err(Error::Fit(format!("values must be finite and nonnegative, found {}", p.0)));
        }
        if let Some(p) = points.iter().find(|p| !(p.1 >= 0.0) || !p.1.is_finite()) {
            return Err(Error::Fit(format!("weights must be finite and nonnegative, found {}", p.1)));
        }
        points.retain(|p| p.1 > 0.0);
        if points.is_empty() {
            return Err(Error::Fit("sample is empty".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = points.iter().map(|p| p.1).sum();
        let mean = points.iter().map(|p| p.0 * p.1).sum::<f64>() / total;
        Ok(WeightedSample {
            points,
            total,
            mean,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Sum of weights: the number of individuals represented.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn min(&self) -> f64 {
        self.points[0].0
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn is_degenerate(&self) -> bool {
        self.min() == self.max()
    }

    /// Smallest value `x` with weighted CDF `>= q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let target = q.clamp(0.0, 1.0) * self.total;
        let mut acc = 0.0;
        for &(x, w) in &self.points {
            acc += w;
            if acc >= target {
                return x;
            }
        }
        self.max()
    }

    /// Weight strictly above `x`.
    pub fn weight_above(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|p| p.0 <= x);
        self.points[k..].iter().map(|p| p.1).sum()
    }

    /// Points with value `<= x`.
    pub fn below_or_at(&self, x: f64) -> &[(f64, f64)] {
        let k = self.points.partition_point(|p| p.0 <= x);
        &self.points[..k]
    }

    /// Points with value `> x`.
    pub fn above(&self, x: f64) -> &[(f64, f64)] {
        let k = self.points.partition_point(|p| p.0 <= x);
        &self.points[k..]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_weighted(self.points.iter().map(|&(x, w)| (c * x, w)).collect())
    }

    pub fn gini(&self) -> Result<f64> {
        crate::measures::gini_weighted(&self.points)
    }
}

/// Reads a CSV income table with an `income` column and an optional
/// `weight` column (population count per row).
pub fn ingest_income_table<R: Read>(input: R) -> Result<WeightedSample> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "empty file: expected a header with an `income` column".into(),
        });
    }
    let income_col = header.iter().position(|h| h == "income").ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing `income` column in header {:?}", header.iter().collect::<Vec<_>>()),
    })?;
    let weight_col = header.iter().position(|h| h == "weight");
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing `{name}` cell"),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{name}` value {raw:?} is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("`{name}` must be finite and nonnegative, got {raw}"),
                });
            }
            Ok(v)
        };
        let income = cell(income_col, "income")?;
        let weight = match weight_col {
            Some(c) => cell(c, "weight")?,
            None => 1.0,
        };
        points.push((income, weight));
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "table has a header but no rows".into(),
        });
    }
    WeightedSample::from_weighted(points).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_table_mean() {
        let s = ingest_income_table("income,weight\n10,5\n20,5\n".as_bytes()).unwrap();
        assert_eq!(s.mean(), 15.0);
        assert_eq!(s.total_weight(), 10.0);
        let raw = ingest_income_table("income\n1\n2\n6\n".as_bytes()).unwrap();
        assert_eq!(raw.mean(), 3.0);
    }

    #[test]
    fn malformed_tables_report_lines() {
        assert!(matches!(ingest_income_table("".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            ingest_income_table("wage\n3\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ingest_income_table("income,weight\n1,2\nabc,1\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            ingest_income_table("income\n4\n-1\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(ingest_income_table("income\n".as_bytes()).is_err());
    }

    #[test]
    fn quantiles_and_tails() {
        let s = WeightedSample::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.quantile(0.5), 2.0);
        assert_eq!(s.quantile(0.51), 3.0);
        assert_eq!(s.weight_above(2.0), 2.0);
        assert_eq!(s.below_or_at(2.0).len(), 2);
        assert!(WeightedSample::from_values(&[-1.0]).is_err());
    }
}
