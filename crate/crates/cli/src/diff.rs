use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{io_err, CliError};
use crate::run::{FileFormat, RunManifest, MANIFEST_FILE};

/// Manifest keys that legitimately differ between equivalent runs.
const IGNORED_KEYS: &[&str] = &["started_at", "finished_at", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDiff {
    pub file: String,
    pub path: String,
    pub a: Value,
    pub b: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDiff {
    pub a: PathBuf,
    pub b: PathBuf,
    pub differences: Vec<FieldDiff>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.differences.is_empty()
    }
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Field-level comparison of two runs. Numbers differing by no more than the
/// tolerance registered for their key (default: exact) are equal.
pub fn diff_reports(
    a: &Path,
    b: &Path,
    tolerances: &BTreeMap<String, f64>,
) -> Result<ReportDiff, CliError> {
    let (pa, pb) = (manifest_path(a), manifest_path(b));
    let (ma, mb) = (RunManifest::load(&pa)?, RunManifest::load(&pb)?);
    if ma.selection != mb.selection {
        return Err(CliError::Selection(format!(
            "{} ran {:?}, {} ran {:?}",
            pa.display(),
            ma.selection,
            pb.display(),
            mb.selection
        )));
    }
    let mut w = Walker {
        tolerances,
        out: Vec::new(),
        file: MANIFEST_FILE.to_string(),
    };
    let (va, vb) = (
        serde_json::to_value(&ma).expect("manifest serializes"),
        serde_json::to_value(&mb).expect("manifest serializes"),
    );
    w.walk("", &va, &vb);

    let (da, db) = (parent(&pa), parent(&pb));
    for (ea, eb) in ma.outputs.iter().zip(&mb.outputs) {
        for (fa, fb) in ea.files.iter().zip(&eb.files) {
            if fa.path != fb.path {
                continue; // already reported through the manifest walk
            }
            w.file = fa.path.clone();
            let ta = fs::read_to_string(da.join(&fa.path)).map_err(io_err(da.join(&fa.path).display()))?;
            let tb = fs::read_to_string(db.join(&fb.path)).map_err(io_err(db.join(&fb.path).display()))?;
            match fa.format {
                FileFormat::Json => {
                    let parse = |t: &str, p: &Path| {
                        serde_json::from_str::<Value>(t)
                            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
                    };
                    w.walk("", &parse(&ta, &da.join(&fa.path))?, &parse(&tb, &db.join(&fb.path))?);
                }
                FileFormat::Csv => w.walk("", &csv_value(&ta), &csv_value(&tb)),
            }
        }
    }
    Ok(ReportDiff {
        a: pa,
        b: pb,
        differences: w.out,
    })
}

fn parent(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Rows of cells; numeric cells become numbers so tolerances apply.
fn csv_value(text: &str) -> Value {
    Value::Array(
        text.lines()
            .map(|line| {
                Value::Array(
                    line.split(',')
                        .map(|cell| match cell.parse::<f64>() {
                            Ok(x) if x.is_finite() => serde_json::json!(x),
                            _ => Value::String(cell.to_string()),
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

struct Walker<'a> {
    tolerances: &'a BTreeMap<String, f64>,
    out: Vec<FieldDiff>,
    file: String,
}

impl Walker<'_> {
    fn push(&mut self, path: &str, a: &Value, b: &Value, abs_diff: Option<f64>) {
        self.out.push(FieldDiff {
            file: self.file.clone(),
            path: path.to_string(),
            a: a.clone(),
            b: b.clone(),
            abs_diff,
        });
    }

    fn tolerance(&self, path: &str) -> f64 {
        let key = path.rsplit('.').next().unwrap_or(path);
        let key = key.split('[').next().unwrap_or(key);
        self.tolerances.get(key).copied().unwrap_or(0.0)
    }

    fn walk(&mut self, path: &str, a: &Value, b: &Value) {
        match (a, b) {
            (Value::Object(oa), Value::Object(ob)) => {
                let keys: std::collections::BTreeSet<&String> = oa.keys().chain(ob.keys()).collect();
                for k in keys {
                    if IGNORED_KEYS.contains(&k.as_str()) {
                        continue;
                    }
                    let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    match (oa.get(k), ob.get(k)) {
                        (Some(x), Some(y)) => self.walk(&sub, x, y),
                        (x, y) => self.push(
                            &sub,
                            x.unwrap_or(&Value::Null),
                            y.unwrap_or(&Value::Null),
                            None,
                        ),
                    }
                }
            }
            (Value::Array(xa), Value::Array(xb)) => {
                for i in 0..xa.len().max(xb.len()) {
                    let sub = format!("{path}[{i}]");
                    match (xa.get(i), xb.get(i)) {
                        (Some(x), Some(y)) => self.walk(&sub, x, y),
                        (x, y) => self.push(
                            &sub,
                            x.unwrap_or(&Value::Null),
                            y.unwrap_or(&Value::Null),
                            None,
                        ),
                    }
                }
            }
            (Value::Number(x), Value::Number(y)) => {
                if x == y {
                    return;
                }
                match (x.as_f64(), y.as_f64()) {
                    (Some(fx), Some(fy)) => {
                        let d = (fx - fy).abs();
                        if d > self.tolerance(path) {
                            self.push(path, a, b, Some(d));
                        }
                    }
                    _ => self.push(path, a, b, None),
                }
            }
            _ if a == b => {}
            _ => self.push(path, a, b, None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_tolerance_by_key() {
        let tol: BTreeMap<String, f64> = [("norm".to_string(), 1e-9)].into();
        let mut w = Walker {
            tolerances: &tol,
            out: Vec::new(),
            file: "x.json".into(),
        };
        let a = serde_json::json!({"records": [{"norm": 0.5, "gap": 0.5}], "started_at": "t0"});
        let b = serde_json::json!({"records": [{"norm": 0.5 + 1e-12, "gap": 0.25}], "started_at": "t1"});
        w.walk("", &a, &b);
        assert_eq!(w.out.len(), 1);
        assert_eq!(w.out[0].path, "records[0].gap");
        assert_eq!(w.out[0].abs_diff, Some(0.25));
    }

    #[test]
    fn csv_cells_compare_numerically() {
        let v = csv_value("a,b\n1.0000000000000000e0,x\n");
        assert_eq!(v, serde_json::json!([["a", "b"], [1.0, "x"]]));
    }
}
