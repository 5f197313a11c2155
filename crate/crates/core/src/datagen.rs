//! Small synthetic classification sets and their CSV persistence.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Labels;

pub const DEFAULT_PERCEPTRON_EPOCHS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "m", rename_all = "snake_case")]
pub enum DatasetKind {
    Classification(usize),
    Regression(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub xs: Vec<Vec<f64>>,
    pub labels: Labels,
    pub kind: DatasetKind,
}

/// Sidecar metadata stored next to `dataset.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: DatasetKind,
    pub d: usize,
    pub n: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub generator: serde_json::Value,
}

impl Dataset {
    pub fn new(xs: Vec<Vec<f64>>, labels: Labels, kind: DatasetKind) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one point".into(),
            ));
        }
        if labels.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: xs.len(),
                got: labels.len(),
            });
        }
        let d = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                context: "dataset point",
                expected: d,
                got: bad.len(),
            });
        }
        match (&labels, kind) {
            (Labels::Classes(c), DatasetKind::Classification(m)) => {
                if let Some(&bad) = c.iter().find(|&&y| y >= m) {
                    return Err(Error::InvalidArgument(format!(
                        "class {bad} out of range for m = {m}"
                    )));
                }
            }
            (Labels::Targets(t), DatasetKind::Regression(m)) => {
                if let Some(bad) = t.iter().find(|y| y.len() != m) {
                    return Err(Error::DimensionMismatch {
                        context: "regression target",
                        expected: m,
                        got: bad.len(),
                    });
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "labels do not match dataset kind {kind:?}"
                )))
            }
        }
        let ds = Dataset { xs, labels, kind };
        if let Some((i, j)) = ds.duplicate_pair() {
            return Err(Error::InvalidArgument(format!(
                "points {i} and {j} coincide"
            )));
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn d(&self) -> usize {
        self.xs[0].len()
    }

    /// Initial stacked state `(x^(1), …, x^(n))`.
    pub fn stacked(&self) -> Vec<f64> {
        self.xs.iter().flatten().copied().collect()
    }

    fn duplicate_pair(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| {
            self.xs[a]
                .iter()
                .zip(&self.xs[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
            .windows(2)
            .find(|w| self.xs[w[0]] == self.xs[w[1]])
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    /// Columns `x_0..x_{d−1}` then `y` (class index) or `y_0..y_{m−1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.d()).map(|j| format!("x_{j}")).collect();
        match self.kind {
            DatasetKind::Classification(_) => header.push("y".into()),
            DatasetKind::Regression(m) => header.extend((0..m).map(|j| format!("y_{j}"))),
        }
        w.write_record(&header)?;
        for (i, x) in self.xs.iter().enumerate() {
            let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
            match &self.labels {
                Labels::Classes(c) => row.push(c[i].to_string()),
                Labels::Targets(t) => row.extend(t[i].iter().map(f64::to_string)),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, kind: DatasetKind) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        let label_cols = match kind {
            DatasetKind::Classification(_) => 1,
            DatasetKind::Regression(m) => m,
        };
        if width <= label_cols {
            return Err(Error::InvalidArgument(format!(
                "dataset CSV has only {width} columns"
            )));
        }
        let d = width - label_cols;
        let mut xs = Vec::new();
        let mut classes = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number {s:?}: {e}")))
            };
            xs.push(rec.iter().take(d).map(parse).collect::<Result<Vec<_>>>()?);
            match kind {
                DatasetKind::Classification(_) => {
                    classes.push(rec[d].trim().parse::<usize>().map_err(|e| {
                        Error::InvalidArgument(format!("bad class {:?}: {e}", &rec[d]))
                    })?)
                }
                DatasetKind::Regression(_) => {
                    targets.push(rec.iter().skip(d).map(parse).collect::<Result<Vec<_>>>()?)
                }
            }
        }
        let labels = match kind {
            DatasetKind::Classification(_) => Labels::Classes(classes),
            DatasetKind::Regression(_) => Labels::Targets(targets),
        };
        Dataset::new(xs, labels, kind)
    }

    pub fn meta(&self, seed: Option<u64>, generator: serde_json::Value) -> DatasetMeta {
        DatasetMeta {
            kind: self.kind,
            d: self.d(),
            n: self.n(),
            seed,
            generator,
        }
    }
}

/// Two unit-variance blobs centred at `(±separation/2, 0)`, `n/2` points each;
/// class 0 on the left.
pub fn gen_two_gaussians(n: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "n must be positive and even, got {n}"
        )));
    }
    if !(separation > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "separation must be positive, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let cx = if class == 0 {
            -separation / 2.0
        } else {
            separation / 2.0
        };
        let gx: f64 = StandardNormal.sample(&mut rng);
        let gy: f64 = StandardNormal.sample(&mut rng);
        xs.push(vec![cx + gx, gy]);
        ys.push(class);
    }
    Dataset::new(xs, Labels::Classes(ys), DatasetKind::Classification(2))
}

/// Class 0 on the circle of radius `r_in`, class 1 on radius `r_out`, with
/// uniform angles and Gaussian radial noise of size `noise`.
pub fn gen_circles(n: usize, radii: (f64, f64), noise: f64, seed: u64) -> Result<Dataset> {
    let (r_in, r_out) = radii;
    if !(0.0 < r_in && r_in < r_out) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < r_in < r_out, got ({r_in}, {r_out})"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two points, got {n}"
        )));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let base = if class == 0 { r_in } else { r_out };
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let g: f64 = StandardNormal.sample(&mut rng);
        let r = base + noise * g;
        xs.push(vec![r * angle.cos(), r * angle.sin()]);
        ys.push(class);
    }
    Dataset::new(xs, Labels::Classes(ys), DatasetKind::Classification(2))
}

/// Appends a zero coordinate to every point.
pub fn augment_zero(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for x in &mut out.xs {
        x.push(0.0);
    }
    out
}

/// Perceptron with bias, classes `{0, 1}` mapped to `{−1, +1}`. `true` means a
/// separating hyperplane was found within `max_epochs` passes; `false` only
/// means none was found before the cap.
pub fn separability_check(ds: &Dataset, max_epochs: usize) -> Result<bool> {
    let classes = match (&ds.labels, ds.kind) {
        (Labels::Classes(c), DatasetKind::Classification(m)) if m <= 2 => c,
        _ => {
            return Err(Error::InvalidArgument(
                "separability check needs a binary classification set".into(),
            ))
        }
    };
    let d = ds.d();
    let mut w = vec![0.0; d + 1];
    for _ in 0..max_epochs {
        let mut mistakes = 0;
        for (x, &c) in ds.xs.iter().zip(classes) {
            let y = if c == 1 { 1.0 } else { -1.0 };
            let score = w[d] + w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if y * score <= 0.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += y * xj;
                }
                w[d] += y;
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_gaussians_examples() {
        let ds = gen_two_gaussians(4, 100.0, 7).unwrap();
        assert!(separability_check(&ds, DEFAULT_PERCEPTRON_EPOCHS).unwrap());
        assert_eq!(ds, gen_two_gaussians(4, 100.0, 7).unwrap());
        assert_ne!(ds, gen_two_gaussians(4, 100.0, 8).unwrap());
        let two = gen_two_gaussians(2, 1.0, 0).unwrap();
        assert_eq!(two.labels, Labels::Classes(vec![0, 1]));
        assert!(gen_two_gaussians(3, 1.0, 0).is_err());
        assert!(gen_two_gaussians(4, 0.0, 0).is_err());
    }

    #[test]
    fn circles_examples() {
        let ds = gen_circles(8, (1.0, 3.0), 0.0, 1).unwrap();
        let Labels::Classes(c) = &ds.labels else {
            unreachable!()
        };
        for (x, &y) in ds.xs.iter().zip(c) {
            let r = x[0].hypot(x[1]);
            let expected = if y == 0 { 1.0 } else { 3.0 };
            assert!((r - expected).abs() < 1e-12);
        }
        let big = gen_circles(200, (1.0, 3.0), 0.05, 3).unwrap();
        assert!(!separability_check(&big, DEFAULT_PERCEPTRON_EPOCHS).unwrap());
        assert_eq!(big, gen_circles(200, (1.0, 3.0), 0.05, 3).unwrap());
        assert!(gen_circles(8, (3.0, 1.0), 0.0, 1).is_err());
    }

    #[test]
    fn separability_examples() {
        let pair = Dataset::new(
            vec![vec![0.3, 0.1], vec![0.2, 0.5]],
            Labels::Classes(vec![0, 1]),
            DatasetKind::Classification(2),
        )
        .unwrap();
        assert!(separability_check(&pair, 100).unwrap());
        let xor = Dataset::new(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ],
            Labels::Classes(vec![0, 0, 1, 1]),
            DatasetKind::Classification(2),
        )
        .unwrap();
        assert!(!separability_check(&xor, DEFAULT_PERCEPTRON_EPOCHS).unwrap());
        let three = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            Labels::Classes(vec![0, 1, 2]),
            DatasetKind::Classification(3),
        )
        .unwrap();
        assert!(separability_check(&three, 10).is_err());
    }

    #[test]
    fn augmentation_examples() {
        let ds = Dataset::new(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            Labels::Classes(vec![0, 1]),
            DatasetKind::Classification(2),
        )
        .unwrap();
        let once = augment_zero(&ds);
        assert_eq!(once.xs[0], vec![1.0, 2.0, 0.0]);
        let twice = augment_zero(&once);
        assert_eq!(twice.xs[1], vec![3.0, 4.0, 0.0, 0.0]);
        assert!(Dataset::new(twice.xs.clone(), twice.labels.clone(), twice.kind).is_ok());
    }

    #[test]
    fn rejects_duplicates_and_bad_labels() {
        let dup = Dataset::new(
            vec![vec![1.0], vec![2.0], vec![1.0]],
            Labels::Classes(vec![0, 1, 0]),
            DatasetKind::Classification(2),
        );
        let err = dup.unwrap_err().to_string();
        assert!(err.contains("points 0 and 2"), "{err}");
        assert!(Dataset::new(
            vec![vec![1.0]],
            Labels::Classes(vec![2]),
            DatasetKind::Classification(2)
        )
        .is_err());
        assert!(Dataset::new(
            vec![],
            Labels::Classes(vec![]),
            DatasetKind::Classification(2)
        )
        .is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ds = augment_zero(&gen_circles(30, (0.5, 2.0), 0.1, 11).unwrap());
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), ds.kind).unwrap();
        assert_eq!(back, ds);
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("x_0,x_1,x_2,y\n"));

        let reg = Dataset::new(
            vec![vec![0.1], vec![-0.7]],
            Labels::Targets(vec![vec![1.5, 2.0], vec![0.0, -1.0 / 3.0]]),
            DatasetKind::Regression(2),
        )
        .unwrap();
        let mut buf = Vec::new();
        reg.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice(), reg.kind).unwrap(), reg);

        let meta = ds.meta(Some(11), serde_json::json!({"generator": "circles"}));
        let json = serde_json::to_string(&meta).unwrap();
        assert_eq!(serde_json::from_str::<DatasetMeta>(&json).unwrap(), meta);
    }
}
