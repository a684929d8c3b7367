//! Observation files, label remapping, dataset splits, and plain-text model
//! and truth files.
//!
//! Observation CSV: one `row,col,label` per line, 0-based indices, labels from 1.
//! MovieLens: tab-separated `user item rating timestamp` with 1-based ids.
//!
//! Model file:
//!
//! ```text
//! FAM v1 rows cols classes lambda
//! sigma_hat s            (Gaussian models only)
//! levels l_1 .. l_p      (Gaussian models only)
//! k                      (atom count, once per parameter class)
//! w                      (then per atom: weight,
//! u_1 .. u_rows           left vector,
//! v_1 .. v_cols           right vector)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::gaussian::{GaussianModel, LabelEncoding};
use crate::model::{Atom, AtomicModel, ObservationSet, Sample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationFormat {
    Csv,
    MovieLens,
}

impl FromStr for ObservationFormat {
    type Err = FamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "movielens" => Ok(Self::MovieLens),
            other => Err(FamError::InvalidArgument(format!("unknown observation format '{other}'"))),
        }
    }
}

/// Shape and alphabet overrides; anything left `None` is inferred from the data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub classes: Option<usize>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> FamError {
    FamError::Parse { line, msg: msg.into() }
}

fn parse_field<F: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<F> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{}'", tok.trim())))
}

/// Parses observations from text; see the module docs for the formats.
pub fn parse_observations(text: &str, format: ObservationFormat, opts: ReadOptions) -> Result<ObservationSet> {
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let (row, col, label): (usize, usize, i64) = match format {
            ObservationFormat::Csv => {
                let mut it = raw.split(',');
                let t = (
                    parse_field(it.next(), line, "row")?,
                    parse_field(it.next(), line, "col")?,
                    parse_field(it.next(), line, "label")?,
                );
                if it.next().is_some() {
                    return Err(parse_err(line, "expected 3 fields"));
                }
                t
            }
            ObservationFormat::MovieLens => {
                let mut it = raw.split('\t');
                let user: usize = parse_field(it.next(), line, "user")?;
                let item: usize = parse_field(it.next(), line, "item")?;
                let rating = parse_field(it.next(), line, "rating")?;
                let _: u64 = parse_field(it.next(), line, "timestamp")?;
                if user == 0 || item == 0 {
                    return Err(parse_err(line, "ids are 1-based"));
                }
                (user - 1, item - 1, rating)
            }
        };
        if label < 1 {
            return Err(FamError::Validation(format!("line {line}: label {label} is below 1")));
        }
        let label = u32::try_from(label).map_err(|_| parse_err(line, "label too large"))?;
        samples.push(Sample::new(row, col, label));
    }
    if samples.is_empty() {
        return Err(FamError::InvalidArgument("no observations in input".into()));
    }
    let rows = opts.rows.unwrap_or_else(|| samples.iter().map(|s| s.row).max().unwrap_or(0) + 1);
    let cols = opts.cols.unwrap_or_else(|| samples.iter().map(|s| s.col).max().unwrap_or(0) + 1);
    let classes = opts.classes.unwrap_or(match format {
        ObservationFormat::MovieLens => 5,
        ObservationFormat::Csv => samples.iter().map(|s| s.label as usize).max().unwrap_or(0).max(2),
    });
    ObservationSet::new(rows, cols, classes, samples)
}

pub fn read_observations(path: impl AsRef<Path>, format: ObservationFormat, opts: ReadOptions) -> Result<ObservationSet> {
    parse_observations(&fs::read_to_string(path)?, format, opts)
}

pub fn format_observations(obs: &ObservationSet) -> String {
    let mut out = String::with_capacity(obs.len() * 12);
    for s in obs.samples() {
        let _ = writeln!(out, "{},{},{}", s.row, s.col, s.label);
    }
    out
}

pub fn write_observations(path: impl AsRef<Path>, obs: &ObservationSet) -> Result<()> {
    write_atomic(path, &format_observations(obs))
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| FamError::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Label relabelling `j ↦ map[j − 1]` onto `1..=classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    map: Vec<u32>,
    classes: usize,
}

impl LabelMap {
    pub fn new(map: Vec<u32>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(FamError::InvalidArgument("target alphabet needs at least two labels".into()));
        }
        if map.iter().any(|&l| l < 1 || l as usize > classes) {
            return Err(FamError::InvalidArgument(format!("mapping leaves 1..={classes}")));
        }
        Ok(Self { map, classes })
    }

    pub fn identity(classes: usize) -> Self {
        Self {
            map: (1..=classes as u32).collect(),
            classes,
        }
    }

    /// Label `target ↦ 1`, every other label `↦ 2`.
    pub fn one_vs_rest(classes: usize, target: u32) -> Result<Self> {
        if target < 1 || target as usize > classes {
            return Err(FamError::InvalidArgument(format!("target {target} outside 1..={classes}")));
        }
        Ok(Self {
            map: (1..=classes as u32).map(|l| if l == target { 1 } else { 2 }).collect(),
            classes: 2,
        })
    }

    pub fn source_classes(&self) -> usize {
        self.map.len()
    }

    pub fn target_classes(&self) -> usize {
        self.classes
    }

    pub fn apply(&self, label: u32) -> u32 {
        self.map[label as usize - 1]
    }

    /// The inverse mapping; fails unless the map is a bijection.
    pub fn inverse(&self) -> Result<Self> {
        if self.map.len() != self.classes {
            return Err(FamError::InvalidArgument("mapping is not a bijection".into()));
        }
        let mut inv = vec![0u32; self.classes];
        for (i, &t) in self.map.iter().enumerate() {
            if inv[t as usize - 1] != 0 {
                return Err(FamError::InvalidArgument("mapping is not a bijection".into()));
            }
            inv[t as usize - 1] = i as u32 + 1;
        }
        Ok(Self {
            map: inv,
            classes: self.classes,
        })
    }
}

pub fn remap_labels(obs: &ObservationSet, mapping: &LabelMap) -> Result<ObservationSet> {
    if mapping.source_classes() != obs.classes() {
        return Err(FamError::DimensionMismatch(format!(
            "mapping covers {} labels, observations have {}",
            mapping.source_classes(),
            obs.classes()
        )));
    }
    let samples = obs
        .samples()
        .iter()
        .map(|s| Sample::new(s.row, s.col, mapping.apply(s.label)))
        .collect();
    ObservationSet::new(obs.rows(), obs.cols(), mapping.target_classes(), samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub validation_fraction_of_rest: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            validation_fraction_of_rest: 0.2,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then test, validation and training parts in that order.
pub fn split(obs: &ObservationSet, spec: &SplitSpec) -> Result<(ObservationSet, ObservationSet, ObservationSet)> {
    let ok = |f: f64| f > 0.0 && f < 1.0;
    if !ok(spec.test_fraction) || !ok(spec.validation_fraction_of_rest) {
        return Err(FamError::InvalidArgument("split fractions must lie in (0, 1)".into()));
    }
    let n = obs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    let n_val = ((n - n_test) as f64 * spec.validation_fraction_of_rest).round() as usize;
    let test = obs.select(&idx[..n_test]);
    let val = obs.select(&idx[n_test..n_test + n_val]);
    let train = obs.select(&idx[n_test + n_val..]);
    Ok((train, val, test))
}

/// Exact decimal form (17 significant digits).
fn fmt_real<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

fn push_reals<T: Scalar>(out: &mut String, xs: &[T]) {
    let line: Vec<String> = xs.iter().map(|&x| fmt_real(x)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

fn push_atoms<T: Scalar>(out: &mut String, atoms: &[Atom<T>]) {
    let _ = writeln!(out, "{}", atoms.len());
    for a in atoms {
        let _ = writeln!(out, "{}", fmt_real(a.weight));
        push_reals(out, &a.left);
        push_reals(out, &a.right);
    }
}

pub fn format_model<T: Scalar>(model: &AtomicModel<T>, lambda: T) -> String {
    let mut out = format!(
        "FAM v1 {} {} {} {}\n",
        model.rows(),
        model.cols(),
        model.classes(),
        fmt_real(lambda)
    );
    for j in 0..model.param_classes() {
        push_atoms(&mut out, model.class_atoms(j));
    }
    out
}

pub fn format_gaussian_model<T: Scalar>(model: &GaussianModel<T>, lambda: T) -> String {
    let mut out = format!(
        "FAM v1 {} {} {} {}\nsigma_hat {}\nlevels ",
        model.rows(),
        model.cols(),
        model.classes(),
        fmt_real(lambda),
        fmt_real(model.sigma_hat())
    );
    push_reals(&mut out, model.levels());
    push_atoms(&mut out, model.atoms());
    out
}

pub fn write_model<T: Scalar>(path: impl AsRef<Path>, model: &AtomicModel<T>, lambda: T) -> Result<()> {
    write_atomic(path, &format_model(model, lambda))
}

pub fn write_gaussian_model<T: Scalar>(path: impl AsRef<Path>, model: &GaussianModel<T>, lambda: T) -> Result<()> {
    write_atomic(path, &format_gaussian_model(model, lambda))
}

/// A model read back from disk together with the `λ` it was fitted at.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel<T> {
    Logit { model: AtomicModel<T>, lambda: T },
    Gaussian { model: GaussianModel<T>, lambda: T },
}

impl<T> StoredModel<T> {
    pub fn lambda(&self) -> &T {
        match self {
            Self::Logit { lambda, .. } | Self::Gaussian { lambda, .. } => lambda,
        }
    }
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            it: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next(&mut self, section: &str) -> Result<(usize, &'a str)> {
        match self.it.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(parse_err(self.last + 1, format!("unexpected end of file, missing {section}"))),
        }
    }

    fn peek_is(&self, prefix: &str) -> bool {
        self.it.clone().next().is_some_and(|(_, l)| l.starts_with(prefix))
    }

    fn finish(&mut self) -> Result<()> {
        for (i, l) in self.it.by_ref() {
            if !l.trim().is_empty() {
                return Err(parse_err(i + 1, "trailing content"));
            }
        }
        Ok(())
    }
}

fn parse_real<T: Scalar>(tok: &str, line: usize, what: &str) -> Result<T> {
    let x: T = tok
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))?;
    if !x.is_finite() {
        return Err(parse_err(line, format!("non-finite {what} '{tok}'")));
    }
    Ok(x)
}

fn parse_reals<T: Scalar>(text: &str, line: usize, count: usize, what: &str) -> Result<Vec<T>> {
    let v = text
        .split_whitespace()
        .map(|t| parse_real(t, line, what))
        .collect::<Result<Vec<T>>>()?;
    if v.len() != count {
        return Err(parse_err(line, format!("expected {count} values in {what}, found {}", v.len())));
    }
    Ok(v)
}

fn read_atoms<T: Scalar>(lines: &mut Lines, rows: usize, cols: usize, class: usize) -> Result<Vec<Atom<T>>> {
    let section = format!("atom count of class {}", class + 1);
    let (ln, l) = lines.next(&section)?;
    let count: usize = l
        .trim()
        .parse()
        .map_err(|_| parse_err(ln, format!("bad {section} '{}'", l.trim())))?;
    let mut atoms = Vec::with_capacity(count);
    for a in 0..count {
        let what = format!("atom {} of class {}", a + 1, class + 1);
        let (ln, l) = lines.next(&format!("weight of {what}"))?;
        let w: T = parse_real(l.trim(), ln, "weight")?;
        let (ln, l) = lines.next(&format!("left vector of {what}"))?;
        let u = parse_reals(l, ln, rows, "left vector")?;
        let (ln, l) = lines.next(&format!("right vector of {what}"))?;
        let v = parse_reals(l, ln, cols, "right vector")?;
        atoms.push(Atom::new(w, u, v).map_err(|e| parse_err(ln, e.to_string()))?);
    }
    Ok(atoms)
}

pub fn parse_model<T: Scalar>(text: &str) -> Result<StoredModel<T>> {
    let mut lines = Lines::new(text);
    let (ln, header) = lines.next("header")?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 6 || tok[0] != "FAM" || tok[1] != "v1" {
        return Err(parse_err(ln, "expected header 'FAM v1 rows cols classes lambda'"));
    }
    let rows: usize = parse_field(Some(tok[2]), ln, "rows")?;
    let cols: usize = parse_field(Some(tok[3]), ln, "cols")?;
    let classes: usize = parse_field(Some(tok[4]), ln, "classes")?;
    let lambda: T = parse_real(tok[5], ln, "lambda")?;
    if rows == 0 || cols == 0 || classes < 2 {
        return Err(parse_err(ln, "invalid shape in header"));
    }

    if lines.peek_is("sigma_hat") {
        let (ln, l) = lines.next("sigma_hat")?;
        let sigma: T = parse_real(l["sigma_hat".len()..].trim(), ln, "sigma_hat")?;
        let (ln, l) = lines.next("levels")?;
        let rest = l
            .strip_prefix("levels")
            .ok_or_else(|| parse_err(ln, "expected 'levels' line"))?;
        let levels = parse_reals(rest, ln, classes, "levels")?;
        let encoding = LabelEncoding::new(levels).map_err(|e| parse_err(ln, e.to_string()))?;
        let atoms = read_atoms(&mut lines, rows, cols, 0)?;
        lines.finish()?;
        let model = GaussianModel::new(rows, cols, encoding, atoms, sigma)?;
        return Ok(StoredModel::Gaussian { model, lambda });
    }

    let atoms = (0..classes - 1)
        .map(|j| read_atoms(&mut lines, rows, cols, j))
        .collect::<Result<Vec<_>>>()?;
    lines.finish()?;
    let model = AtomicModel::from_atoms(rows, cols, classes, atoms)?;
    Ok(StoredModel::Logit { model, lambda })
}

pub fn read_model<T: Scalar>(path: impl AsRef<Path>) -> Result<StoredModel<T>> {
    parse_model(&fs::read_to_string(path)?)
}

/// Dense parameter matrices: header `FAM-TRUTH v1 rows cols count`, then each
/// matrix as `rows` lines of `cols` values.
pub fn format_truth<T: Scalar>(mats: &[DenseMatrix<T>]) -> Result<String> {
    let first = mats
        .first()
        .ok_or_else(|| FamError::InvalidArgument("no matrices to write".into()))?;
    let (rows, cols) = (first.rows(), first.cols());
    if mats.iter().any(|m| m.rows() != rows || m.cols() != cols) {
        return Err(FamError::DimensionMismatch("matrices differ in shape".into()));
    }
    let mut out = format!("FAM-TRUTH v1 {rows} {cols} {}\n", mats.len());
    for m in mats {
        for r in 0..rows {
            push_reals(&mut out, m.row(r));
        }
    }
    Ok(out)
}

pub fn write_truth<T: Scalar>(path: impl AsRef<Path>, mats: &[DenseMatrix<T>]) -> Result<()> {
    write_atomic(path, &format_truth(mats)?)
}

pub fn parse_truth<T: Scalar>(text: &str) -> Result<Vec<DenseMatrix<T>>> {
    let mut lines = Lines::new(text);
    let (ln, header) = lines.next("header")?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 5 || tok[0] != "FAM-TRUTH" || tok[1] != "v1" {
        return Err(parse_err(ln, "expected header 'FAM-TRUTH v1 rows cols count'"));
    }
    let rows: usize = parse_field(Some(tok[2]), ln, "rows")?;
    let cols: usize = parse_field(Some(tok[3]), ln, "cols")?;
    let count: usize = parse_field(Some(tok[4]), ln, "count")?;
    let mut mats = Vec::with_capacity(count);
    for k in 0..count {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (ln, l) = lines.next(&format!("row {} of matrix {}", r + 1, k + 1))?;
            data.extend(parse_reals::<T>(l, ln, cols, "matrix row")?);
        }
        mats.push(DenseMatrix::from_row_major(rows, cols, data)?);
    }
    lines.finish()?;
    Ok(mats)
}

pub fn read_truth<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<DenseMatrix<T>>> {
    parse_truth(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_single_line() {
        let o = parse_observations("0,0,1\n", ObservationFormat::Csv, ReadOptions::default()).unwrap();
        assert_eq!(o.samples(), &[Sample::new(0, 0, 1)]);
        assert_eq!((o.rows(), o.cols(), o.classes()), (1, 1, 2));
    }

    #[test]
    fn movielens_line() {
        let o = parse_observations("196\t242\t3\t881250949\n", ObservationFormat::MovieLens, ReadOptions::default())
            .unwrap();
        assert_eq!(o.samples(), &[Sample::new(195, 241, 3)]);
        assert_eq!(o.classes(), 5);
    }

    #[test]
    fn empty_and_malformed() {
        assert!(parse_observations("", ObservationFormat::Csv, ReadOptions::default()).is_err());
        match parse_observations("0,0,1\n0,x,1\n", ObservationFormat::Csv, ReadOptions::default()) {
            Err(FamError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_observations("0,0,0\n", ObservationFormat::Csv, ReadOptions::default()),
            Err(FamError::Validation(_))
        ));
    }

    #[test]
    fn one_vs_rest_example() {
        let o = ObservationSet::new(
            1,
            3,
            5,
            vec![Sample::new(0, 0, 1), Sample::new(0, 1, 5), Sample::new(0, 2, 3)],
        )
        .unwrap();
        let r = remap_labels(&o, &LabelMap::one_vs_rest(5, 5).unwrap()).unwrap();
        let labels: Vec<u32> = r.samples().iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![2, 1, 2]);
        assert_eq!(remap_labels(&o, &LabelMap::identity(5)).unwrap(), o);
    }

    #[test]
    fn inverse_round_trip() {
        let o = ObservationSet::new(1, 3, 3, vec![Sample::new(0, 0, 1), Sample::new(0, 1, 2), Sample::new(0, 2, 3)])
            .unwrap();
        let m = LabelMap::new(vec![3, 1, 2], 3).unwrap();
        let back = remap_labels(&remap_labels(&o, &m).unwrap(), &m.inverse().unwrap()).unwrap();
        assert_eq!(back, o);
        assert!(LabelMap::one_vs_rest(5, 2).unwrap().inverse().is_err());
    }

    #[test]
    fn split_sizes() {
        let samples = (0..100).map(|i| Sample::new(i % 10, i / 10, 1)).collect();
        let o = ObservationSet::new(10, 10, 2, samples).unwrap();
        let (tr, va, te) = split(&o, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (64, 16, 20));
    }

    #[test]
    fn zero_model_round_trip() {
        let m = AtomicModel::<f64>::zeros(3, 4, 3);
        match parse_model::<f64>(&format_model(&m, 0.5)).unwrap() {
            StoredModel::Logit { model, lambda } => {
                assert_eq!(model, m);
                assert_eq!(lambda, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_model_names_section() {
        let a = Atom::new(1.0f64, vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let m = AtomicModel::from_atoms(2, 2, 2, vec![vec![a]]).unwrap();
        let text = format_model(&m, 1.0);
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        let err = parse_model::<f64>(&cut).unwrap_err().to_string();
        assert!(err.contains("left vector"), "{err}");
    }

    #[test]
    fn truth_round_trip() {
        let m = DenseMatrix::from_fn(2, 3, |r, c| (r as f64 + 1.0) / (c as f64 + 3.0));
        let back: Vec<DenseMatrix<f64>> = parse_truth(&format_truth(&[m.clone()]).unwrap()).unwrap();
        assert_eq!(back, vec![m]);
    }
}
