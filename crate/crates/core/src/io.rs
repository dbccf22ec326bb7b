//! Readers for the association TSV and the LD matrix file.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::summary::SummaryDataset;

const ASSOC_COLUMNS: [&str; 5] = ["variant_id", "beta1", "se1", "beta2", "se2"];

struct AssocRows {
    ids: Vec<String>,
    beta: DMatrix<f64>,
    se: DMatrix<f64>,
}

fn parse_float(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("expected a number, found {tok:?}"),
    })
}

fn read_assoc(path: &Path) -> Result<AssocRows> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty association file".into(),
    })?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut pos = [0usize; 5];
    for (slot, name) in pos.iter_mut().zip(ASSOC_COLUMNS) {
        *slot = cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column {name:?} in header"),
        })?;
    }
    let mut ids = Vec::new();
    let mut vals: Vec<[f64; 4]> = Vec::new();
    for (i, line) in lines {
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != cols.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {} fields, found {}", cols.len(), toks.len()),
            });
        }
        ids.push(toks[pos[0]].trim().to_string());
        let mut row = [0.0; 4];
        for (r, &p) in row.iter_mut().zip(&pos[1..]) {
            *r = parse_float(path, i + 1, toks[p])?;
        }
        vals.push(row);
    }
    let j = ids.len();
    let beta = DMatrix::from_fn(2, j, |k, c| vals[c][2 * k]);
    let se = DMatrix::from_fn(2, j, |k, c| vals[c][2 * k + 1]);
    Ok(AssocRows { ids, beta, se })
}

/// Reads a square LD matrix. A first row whose first token is not numeric is
/// taken as a header of variant ids and returned separately.
pub fn read_ld(path: &Path) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if rows.is_empty() && header.is_none() && toks[0].parse::<f64>().is_err() {
            header = Some(toks.iter().map(|s| s.to_string()).collect());
            continue;
        }
        let row = toks
            .iter()
            .map(|t| parse_float(path, i + 1, t))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let j = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != j) {
        return Err(Error::DimensionMismatch(format!(
            "LD row {} has {} entries but the matrix has {j} rows",
            i + 1,
            r.len()
        )));
    }
    Ok((header, DMatrix::from_fn(j, j, |r, c| rows[r][c])))
}

/// Loads and validates a dataset from an association TSV and an LD file.
/// Variant order is file order; later duplicates of perfectly correlated
/// variants are dropped.
pub fn load_summary(
    path_assoc: &Path,
    path_ld: &Path,
    trait_cor: f64,
    n: usize,
) -> Result<SummaryDataset> {
    Ok(load_summary_raw(path_assoc, path_ld, trait_cor, n)?.drop_duplicates())
}

/// As [`load_summary`] but keeps perfectly correlated duplicates.
pub fn load_summary_raw(
    path_assoc: &Path,
    path_ld: &Path,
    trait_cor: f64,
    n: usize,
) -> Result<SummaryDataset> {
    let assoc = read_assoc(path_assoc)?;
    let (header, ld) = read_ld(path_ld)?;
    if ld.nrows() != assoc.ids.len() {
        return Err(Error::DimensionMismatch(format!(
            "association file has {} variants but LD matrix is {}x{}",
            assoc.ids.len(),
            ld.nrows(),
            ld.ncols()
        )));
    }
    if let Some(h) = header {
        if h != assoc.ids {
            return Err(Error::DimensionMismatch(
                "LD header variant ids do not match association file order".into(),
            ));
        }
    }
    SummaryDataset::new(assoc.ids, assoc.beta, assoc.se, ld, trait_cor, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_identity() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.tsv",
            "variant_id\tbeta1\tse1\tbeta2\tse2\nrs1\t0.1\t0.01\t0.2\t0.02\nrs2\t-0.1\t0.01\t0.0\t0.02\nrs3\t0\t0.5\t0.3\t0.1\n",
        );
        let l = write(dir.path(), "ld.tsv", "1\t0\t0\n0\t1\t0\n0\t0\t1\n");
        let ds = load_summary(&a, &l, 0.1, 1000).unwrap();
        assert_eq!(ds.num_variants(), 3);
        assert_eq!(ds.ld(), &DMatrix::identity(3, 3));
        assert_eq!(ds.beta()[(1, 2)], 0.3);
    }

    #[test]
    fn row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.tsv",
            "variant_id\tbeta1\tse1\tbeta2\tse2\na\t1\t1\t1\t1\nb\t1\t1\t1\t1\nc\t1\t1\t1\t1\nd\t1\t1\t1\t1\n",
        );
        let l = write(dir.path(), "ld.tsv", "1 0 0\n0 1 0\n0 0 1\n");
        assert!(matches!(
            load_summary(&a, &l, 0.0, 100),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn header_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.tsv",
            "variant_id\tbeta1\tse1\tbeta2\tse2\na\t1\t1\t1\t1\nb\t1\t1\t1\t1\n",
        );
        let l = write(dir.path(), "ld.tsv", "b\ta\n1\t0\n0\t1\n");
        assert!(load_summary(&a, &l, 0.0, 100).is_err());
        let l = write(dir.path(), "ld2.tsv", "a\tb\n1\t0\n0\t1\n");
        assert!(load_summary(&a, &l, 0.0, 100).is_ok());
    }

    #[test]
    fn non_numeric_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.tsv",
            "variant_id\tbeta1\tse1\tbeta2\tse2\na\tNaN\t1\t1\t1\n",
        );
        let l = write(dir.path(), "ld.tsv", "1\n");
        assert!(matches!(load_summary(&a, &l, 0.0, 100), Err(Error::NonFinite(_))));
        let a = write(
            dir.path(),
            "b.tsv",
            "variant_id\tbeta1\tse1\tbeta2\tse2\na\tx\t1\t1\t1\n",
        );
        assert!(matches!(load_summary(&a, &l, 0.0, 100), Err(Error::Parse { .. })));
    }
}
