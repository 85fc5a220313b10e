//! File formats: `node,value` CSV, design CSV, dense matrix CSV, and the
//! Moran result document.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::deptest::{MoranResult, NodeValues};
use crate::error::{Error, Result};

fn index_of(labels: &[String]) -> HashMap<&str, usize> {
    labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
}

/// Reads `node,value` rows and aligns them to `labels`. Every label needs a
/// value; labels not in the network are rejected.
pub fn read_values<R: Read>(source: R, labels: &[String]) -> Result<NodeValues> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "node" || &headers[1] != "value" {
        return Err(Error::MalformedRow {
            row: 0,
            msg: format!("expected header `node,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let index = index_of(labels);
    let mut values = vec![None; labels.len()];
    let mut unknown = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::MalformedRow { row, msg: e.to_string() })?;
        if rec.len() != 2 {
            return Err(Error::MalformedRow { row, msg: "expected two fields".into() });
        }
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| Error::MalformedRow { row, msg: format!("value `{}` is not a number", &rec[1]) })?;
        if !v.is_finite() {
            return Err(Error::MalformedRow { row, msg: format!("value `{}` is not finite", &rec[1]) });
        }
        match index.get(&rec[0]) {
            Some(&i) if values[i].is_some() => {
                return Err(Error::MalformedRow { row, msg: format!("duplicate value for node `{}`", &rec[0]) });
            }
            Some(&i) => values[i] = Some(v),
            None => unknown.push(rec[0].to_string()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownNodes(unknown));
    }
    let missing: Vec<String> =
        values.iter().zip(labels).filter(|(v, _)| v.is_none()).map(|(_, l)| l.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingNodes(missing));
    }
    NodeValues::new(values.into_iter().map(Option::unwrap).collect())
}

pub fn write_values<W: Write>(out: W, labels: &[String], values: &NodeValues) -> Result<()> {
    if labels.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: values.len() });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "value"])?;
    for (l, v) in labels.iter().zip(values.as_slice()) {
        w.write_record([l.as_str(), &format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// A design matrix with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

/// Reads covariate columns with a header row. If the first column is named
/// `node`, rows are aligned to `labels`; otherwise rows are taken in node
/// index order. An `intercept` column is prepended when requested.
pub fn read_design<R: Read>(source: R, labels: &[String], intercept: bool) -> Result<Design> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let keyed = headers.get(0) == Some("node");
    let cov_names: Vec<String> = headers.iter().skip(usize::from(keyed)).map(str::to_string).collect();
    if cov_names.is_empty() && !intercept {
        return Err(Error::Empty("design has no columns".into()));
    }
    let n = labels.len();
    let index = index_of(labels);
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut unknown = Vec::new();
    let mut count = 0;
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::MalformedRow { row, msg: e.to_string() })?;
        let fields: Vec<&str> = rec.iter().collect();
        let (slot, vals) = if keyed {
            match index.get(fields[0]) {
                Some(&i) => (i, &fields[1..]),
                None => {
                    unknown.push(fields[0].to_string());
                    continue;
                }
            }
        } else {
            (k, &fields[..])
        };
        if slot >= n {
            return Err(Error::DimensionMismatch { expected: n, got: slot + 1 });
        }
        let parsed = vals
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::MalformedRow { row, msg: format!("`{s}` is not a finite number") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows[slot].is_some() {
            return Err(Error::MalformedRow { row, msg: "duplicate row for node".into() });
        }
        rows[slot] = Some(parsed);
        count += 1;
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownNodes(unknown));
    }
    if keyed {
        let missing: Vec<String> =
            rows.iter().zip(labels).filter(|(r, _)| r.is_none()).map(|(_, l)| l.clone()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingNodes(missing));
        }
    } else if count != n {
        return Err(Error::DimensionMismatch { expected: n, got: count });
    }
    let p0 = usize::from(intercept);
    let mut names = Vec::new();
    if intercept {
        names.push("intercept".to_string());
    }
    names.extend(cov_names.iter().cloned());
    let rows: Vec<Vec<f64>> = rows.into_iter().map(Option::unwrap).collect();
    let matrix = DMatrix::from_fn(n, names.len(), |i, j| if j < p0 { 1.0 } else { rows[i][j - p0] });
    Ok(Design { names, matrix })
}

/// Reads a headerless dense square matrix.
pub fn read_matrix<R: Read>(source: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(source);
    let mut data = Vec::new();
    let mut ncols = None;
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::MalformedRow { row, msg: e.to_string() })?;
        if *ncols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::MalformedRow { row, msg: "ragged row".into() });
        }
        for s in rec.iter() {
            let v: f64 = s
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::MalformedRow { row, msg: format!("`{s}` is not a finite number") })?;
            data.push(v);
        }
    }
    let ncols = ncols.ok_or_else(|| Error::Empty("matrix file has no rows".into()))?;
    let nrows = data.len() / ncols;
    if nrows != ncols {
        return Err(Error::InvalidParameter(format!("matrix is {nrows}x{ncols}, expected square")));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Flat Moran result as written by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranDocument {
    pub statistic: f64,
    pub i_std: Option<f64>,
    pub mean_null: Option<f64>,
    pub var_null: Option<f64>,
    pub p_perm: Option<f64>,
    pub p_normal: Option<f64>,
    pub m: usize,
    pub n: usize,
    pub s0: f64,
}

impl MoranDocument {
    pub fn new(r: &MoranResult, s0: f64) -> Self {
        MoranDocument {
            statistic: r.i_stat,
            i_std: r.i_std,
            mean_null: r.moments.map(|m| m.mean_i),
            var_null: r.moments.map(|m| m.var_i),
            p_perm: r.p_perm,
            p_normal: r.p_normal,
            m: r.m_used,
            n: r.n,
            s0,
        }
    }
}

/// Labels that appear in `expected` but not in `got`, in `expected` order.
pub fn missing_labels(expected: &[String], got: &[String]) -> Vec<String> {
    let have: HashSet<&str> = got.iter().map(String::as_str).collect();
    expected.iter().filter(|l| !have.contains(l.as_str())).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn values_align_to_labels() {
        let y = read_values("node,value\nc,3\na,1\nb,2\n".as_bytes(), &labels(&["a", "b", "c"])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn values_missing_and_unknown_nodes() {
        let err = read_values("node,value\na,1\nb,2\n".as_bytes(), &labels(&["a", "b", "c"])).unwrap_err();
        assert!(matches!(&err, Error::MissingNodes(m) if m == &["c"]));
        assert!(err.to_string().contains('c'));
        let err = read_values("node,value\na,1\nz,2\n".as_bytes(), &labels(&["a"])).unwrap_err();
        assert!(matches!(err, Error::UnknownNodes(_)));
        let err = read_values("node,value\na,x\n".as_bytes(), &labels(&["a"])).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }));
        let err = read_values("node,value\na,1\na,2\n".as_bytes(), &labels(&["a"])).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }));
    }

    #[test]
    fn values_round_trip_exactly() {
        let l = labels(&["x", "y"]);
        let v = NodeValues::new(vec![0.1 + 0.2, -1e-300]).unwrap();
        let mut buf = Vec::new();
        write_values(&mut buf, &l, &v).unwrap();
        assert_eq!(read_values(buf.as_slice(), &l).unwrap(), v);
    }

    #[test]
    fn design_keyed_and_positional() {
        let l = labels(&["a", "b", "c"]);
        let d = read_design("node,x\nb,2\na,1\nc,3\n".as_bytes(), &l, true).unwrap();
        assert_eq!(d.names, ["intercept", "x"]);
        assert_eq!(d.matrix, DMatrix::from_row_slice(3, 2, &[1., 1., 1., 2., 1., 3.]));
        let d = read_design("x,z\n1,0\n2,1\n3,0\n".as_bytes(), &l, false).unwrap();
        assert_eq!(d.matrix.shape(), (3, 2));
        assert!(read_design("x\n1\n2\n".as_bytes(), &l, true).is_err());
    }

    #[test]
    fn matrix_csv() {
        let m = read_matrix("1,0.5\n0.5,2\n".as_bytes()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1., 0.5, 0.5, 2.]));
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
        assert!(read_matrix("1,2\n".as_bytes()).is_err());
    }
}
