use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{check_len, Error, Result};

/// Class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    One,
    Two,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::One => 1,
            Label::Two => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Label::One),
            2 => Some(Label::Two),
            _ => None,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Label::One => Label::Two,
            Label::Two => Label::One,
        }
    }
}

/// Labelled observations with the pooled two-class summary statistics.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    labels: Vec<Label>,
    n1: usize,
    n2: usize,
    mu1_hat: Array1<f64>,
    mu2_hat: Array1<f64>,
    s1: Array2<f64>,
    s2: Array2<f64>,
    pooled: Array2<f64>,
    grand_mean: Array1<f64>,
}

fn class_rows(x: &Array2<f64>, labels: &[Label], which: Label) -> Array2<f64> {
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == which).collect();
    x.select(Axis(0), &idx)
}

/// Mean and centered cross-product `X'HX` of the rows.
fn mean_and_scatter(rows: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mean = rows.mean_axis(Axis(0)).expect("non-empty class");
    let centered = rows - &mean;
    let w = centered.t().dot(&centered);
    let w = (&w + &w.t()) * 0.5;
    (mean, w)
}

impl Dataset {
    pub fn new(x: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        check_len("label vector", x.nrows(), labels.len())?;
        let n2 = labels.iter().filter(|&&l| l == Label::Two).count();
        let n1 = labels.len() - n2;
        if n1 < 2 || n2 < 2 {
            return Err(Error::invalid(format!(
                "each class needs at least two observations, got n1={n1}, n2={n2}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        let (mu1_hat, w1) = mean_and_scatter(&class_rows(&x, &labels, Label::One));
        let (mu2_hat, w2) = mean_and_scatter(&class_rows(&x, &labels, Label::Two));
        let n = (n1 + n2) as f64;
        let pooled = (&w1 + &w2) / (n - 2.0);
        let s1 = w1 / (n1 as f64 - 1.0);
        let s2 = w2 / (n2 as f64 - 1.0);
        let grand_mean = x.mean_axis(Axis(0)).expect("non-empty dataset");
        Ok(Dataset {
            x,
            labels,
            n1,
            n2,
            mu1_hat,
            mu2_hat,
            s1,
            s2,
            pooled,
            grand_mean,
        })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn mu1_hat(&self) -> &Array1<f64> {
        &self.mu1_hat
    }

    pub fn mu2_hat(&self) -> &Array1<f64> {
        &self.mu2_hat
    }

    /// `μ̂ = μ̂2 − μ̂1`.
    pub fn mu_hat(&self) -> Array1<f64> {
        &self.mu2_hat - &self.mu1_hat
    }

    pub fn class_covariances(&self) -> (&Array2<f64>, &Array2<f64>) {
        (&self.s1, &self.s2)
    }

    /// Pooled covariance `S = ((n1−1)S1 + (n2−1)S2)/(n−2)`.
    pub fn pooled_covariance(&self) -> &Array2<f64> {
        &self.pooled
    }

    pub fn grand_mean(&self) -> &Array1<f64> {
        &self.grand_mean
    }

    /// `n1·n2 / (n(n−2))`, the weight of the rank-one term.
    pub fn rank_one_weight(&self) -> f64 {
        let n = self.n() as f64;
        (self.n1 * self.n2) as f64 / (n * (n - 2.0))
    }

    /// Same observations with classes 1 and 2 exchanged.
    pub fn relabeled(&self) -> Dataset {
        let labels = self.labels.iter().map(|l| l.swapped()).collect();
        Dataset::new(self.x.clone(), labels).expect("relabeling preserves validity")
    }

    /// Columns reordered so that new column `j` is old column `perm[j]`.
    pub fn permute_features(&self, perm: &[usize]) -> Result<Dataset> {
        check_len("permutation", self.dim(), perm.len())?;
        let mut seen = vec![false; perm.len()];
        for &j in perm {
            if j >= perm.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid("not a permutation"));
            }
        }
        Dataset::new(self.x.select(Axis(1), perm), self.labels.clone())
    }

    /// CSV with header `y,x1,…,xp`; values use shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(csv_io)?;
        for (row, label) in self.x.axis_iter(Axis(0)).zip(self.labels.iter()) {
            let mut rec = vec![label.as_u8().to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header = r.headers().map_err(|e| csv_error(&e, 1))?.clone();
        if header.get(0).map(str::trim) != Some("y") {
            return Err(Error::Csv {
                line: 1,
                column: 1,
                message: "first column must be named `y`".into(),
            });
        }
        for (j, name) in header.iter().enumerate().skip(1) {
            if name.trim() != format!("x{j}") {
                return Err(Error::Csv {
                    line: 1,
                    column: j + 1,
                    message: format!("expected column name `x{j}`, found `{name}`"),
                });
            }
        }
        let p = header.len() - 1;
        if p == 0 {
            return Err(Error::Csv {
                line: 1,
                column: 2,
                message: "no feature columns".into(),
            });
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for result in r.records() {
            let rec = result.map_err(|e| csv_error(&e, 0))?;
            let line = rec.position().map(|pos| pos.line()).unwrap_or(0);
            let y = rec[0].trim();
            let label = y
                .parse::<u8>()
                .ok()
                .and_then(Label::from_u8)
                .ok_or_else(|| Error::Csv {
                    line,
                    column: 1,
                    message: format!("label must be 1 or 2, found `{y}`"),
                })?;
            labels.push(label);
            for j in 1..=p {
                let field = rec[j].trim();
                let v = field.parse::<f64>().map_err(|_| Error::Csv {
                    line,
                    column: j + 1,
                    message: format!("not a number: `{field}`"),
                })?;
                values.push(v);
            }
        }
        let n = labels.len();
        let x = Array2::from_shape_vec((n, p), values).expect("row lengths checked by csv reader");
        Dataset::new(x, labels)
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }
}

fn csv_io(e: csv::Error) -> Error {
    csv_error(&e, 0)
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Csv {
            line,
            column: (*len as usize).min(*expected_len as usize) + 1,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        _ => Error::Csv {
            line,
            column: 0,
            message: e.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> Dataset {
        let x = array![[1.0, 2.0], [2.0, 0.5], [0.0, -1.0], [3.0, 3.0], [1.5, 0.1]];
        let labels = vec![Label::One, Label::One, Label::Two, Label::Two, Label::Two];
        Dataset::new(x, labels).unwrap()
    }

    #[test]
    fn pooled_identity() {
        let d = small();
        let (n1, n2) = d.class_counts();
        let (s1, s2) = d.class_covariances();
        let lhs = s1 * (n1 as f64 - 1.0) + s2 * (n2 as f64 - 1.0);
        let rhs = d.pooled_covariance() * (d.n() as f64 - 2.0);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn class_means_by_hand() {
        let d = small();
        assert_eq!(d.mu1_hat(), &array![1.5, 1.25]);
        assert!((d.mu2_hat()[0] - 1.5).abs() < 1e-15);
        assert!((d.mu_hat()[1] - (2.1 / 3.0 - 1.25)).abs() < 1e-15);
    }

    #[test]
    fn relabel_negates_mean_difference() {
        let d = small();
        let r = d.relabeled();
        assert_eq!(r.mu_hat(), -d.mu_hat());
        assert_eq!(r.pooled_covariance(), d.pooled_covariance());
    }

    #[test]
    fn degenerate_counts_rejected() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let labels = vec![Label::One, Label::Two, Label::Two, Label::Two];
        assert!(Dataset::new(x, labels).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let x = array![
            [0.1, 1.0 / 3.0],
            [1e-300, -2.5e17],
            [f64::EPSILON, 7.0],
            [-0.0, 1e-7]
        ];
        let d = Dataset::new(x, vec![Label::One, Label::Two, Label::One, Label::Two]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("y,x1,x2\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        for (a, b) in d.x().iter().zip(back.x().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn csv_diagnostics() {
        let bad = "y,x1,x2\n1,0.5,1\n2,abc,1\n1,0,0\n2,1,1\n";
        match Dataset::read_csv(bad.as_bytes()) {
            Err(Error::Csv { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_label = "y,x1\n3,0.5\n";
        assert!(matches!(
            Dataset::read_csv(bad_label.as_bytes()),
            Err(Error::Csv {
                line: 2,
                column: 1,
                ..
            })
        ));
        let bad_header = "label,x1\n1,0.5\n";
        assert!(matches!(
            Dataset::read_csv(bad_header.as_bytes()),
            Err(Error::Csv {
                line: 1,
                column: 1,
                ..
            })
        ));
        let ragged = "y,x1,x2\n1,0.5\n";
        assert!(matches!(
            Dataset::read_csv(ragged.as_bytes()),
            Err(Error::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn feature_permutation() {
        let d = small();
        let p = d.permute_features(&[1, 0]).unwrap();
        assert_eq!(p.mu_hat()[0], d.mu_hat()[1]);
        assert!(d.permute_features(&[0, 0]).is_err());
    }
}
