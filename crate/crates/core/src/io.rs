//! Table ingestion and export: long-format CSV and the JSON tensor format.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dist::{CountTable, ProbTable, Variable};
use crate::error::{Error, Result};
use crate::fixtures;

/// `{ "vars": [..], "levels": {var: [labels]}, "scores": {var: [..]}, "probs": [..] }`
/// with `probs` flat and row-major in `vars` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub vars: Vec<String>,
    pub levels: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, Vec<f64>>>,
    pub probs: Vec<f64>,
}

impl TensorJson {
    pub fn from_table(p: &ProbTable) -> Self {
        let mut levels = BTreeMap::new();
        let mut scores = BTreeMap::new();
        for v in p.vars() {
            levels.insert(v.name().to_string(), v.labels().to_vec());
            let default: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
            if v.scores() != default.as_slice() {
                scores.insert(v.name().to_string(), v.scores().to_vec());
            }
        }
        Self {
            vars: p.names().iter().map(|s| s.to_string()).collect(),
            levels,
            scores: (!scores.is_empty()).then_some(scores),
            probs: p.probs().to_vec(),
        }
    }

    pub fn to_table(&self) -> Result<ProbTable> {
        let vars = self
            .vars
            .iter()
            .map(|name| {
                let labels = self.levels.get(name).ok_or_else(|| Error::Parse(format!("no levels for `{name}`")))?;
                let v = Variable::new(name.clone(), labels.iter().cloned());
                match self.scores.as_ref().and_then(|s| s.get(name)) {
                    Some(s) => v.with_scores(s.clone()),
                    None => Ok(v),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        // keep normalized input bit-exact; rescale anything else
        ProbTable::new(vars.clone(), self.probs.clone()).or_else(|_| ProbTable::from_weights(vars, self.probs.clone()))
    }
}

pub fn read_json<R: Read>(r: R) -> Result<ProbTable> {
    let t: TensorJson = serde_json::from_reader(r)?;
    t.to_table()
}

pub fn write_json<W: Write>(p: &ProbTable, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &TensorJson::from_table(p))?;
    Ok(())
}

enum Cells {
    Counts(Vec<u64>),
    Probs(Vec<f64>),
}

/// Long format: one column per variable, then `count` or `prob`. Levels keep
/// their order of first appearance unless every label is numeric, in which
/// case they are sorted and the numbers become scores. Missing cells are 0.
pub fn read_csv<R: Read>(r: R) -> Result<ProbTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let (value_col, names) = header.split_last().ok_or_else(|| Error::Parse("empty CSV header".into()))?;
    let integer = match value_col.to_ascii_lowercase().as_str() {
        "count" => true,
        "prob" | "probability" => false,
        other => return Err(Error::Parse(format!("last CSV column must be `count` or `prob`, got `{other}`"))),
    };
    if names.is_empty() {
        return Err(Error::Parse("CSV needs at least one variable column".into()));
    }
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    let mut rows: Vec<(Vec<String>, String)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row has {} fields, header has {}", rec.len(), header.len())));
        }
        let key: Vec<String> = rec.iter().take(names.len()).map(str::to_string).collect();
        for (l, k) in labels.iter_mut().zip(&key) {
            if !l.contains(k) {
                l.push(k.clone());
            }
        }
        rows.push((key, rec[names.len()].to_string()));
    }
    let mut vars = Vec::new();
    for (name, mut l) in names.iter().zip(labels) {
        let numeric: Option<Vec<f64>> = l.iter().map(|s| s.parse::<f64>().ok()).collect();
        let v = match numeric {
            Some(mut nums) => {
                let mut pairs: Vec<(f64, String)> = nums.drain(..).zip(l.drain(..)).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (scores, sorted): (Vec<f64>, Vec<String>) = pairs.into_iter().unzip();
                Variable::new(name.clone(), sorted).with_scores(scores)?
            }
            None => Variable::new(name.clone(), l),
        };
        vars.push(v);
    }
    let dims: Vec<usize> = vars.iter().map(Variable::len).collect();
    let size: usize = dims.iter().product();
    let mut cells = if integer { Cells::Counts(vec![0; size]) } else { Cells::Probs(vec![0.0; size]) };
    let mut seen = vec![false; size];
    for (key, val) in rows {
        let mut flat = 0;
        for ((v, k), d) in vars.iter().zip(&key).zip(&dims) {
            flat = flat * d + v.labels().iter().position(|l| l == k).expect("label registered");
        }
        if std::mem::replace(&mut seen[flat], true) {
            return Err(Error::Parse(format!("duplicate cell {key:?}")));
        }
        match &mut cells {
            Cells::Counts(c) => c[flat] = val.parse().map_err(|_| Error::Parse(format!("bad count `{val}`")))?,
            Cells::Probs(p) => p[flat] = val.parse().map_err(|_| Error::Parse(format!("bad probability `{val}`")))?,
        }
    }
    match cells {
        Cells::Counts(c) => CountTable::new(vars, c)?.normalize(),
        Cells::Probs(p) => ProbTable::from_weights(vars, p),
    }
}

/// Long-format CSV with a `prob` column.
pub fn write_csv<W: Write>(p: &ProbTable, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = p.names();
    header.push("prob");
    wtr.write_record(&header)?;
    let dims = p.dims();
    let mut idx = vec![0usize; dims.len()];
    for &prob in p.probs() {
        let mut rec: Vec<String> = p.vars().iter().zip(&idx).map(|(v, &i)| v.labels()[i].clone()).collect();
        rec.push(format!("{prob}"));
        wtr.write_record(&rec)?;
        for a in (0..dims.len()).rev() {
            idx[a] += 1;
            if idx[a] < dims[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// A path ending in `.json` or `.csv`, or a fixture name such as `FIX_EX1:0.3`.
pub fn load_table(source: &str) -> Result<ProbTable> {
    let path = Path::new(source);
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("json") => read_json(std::fs::File::open(path)?),
        Some("csv") => read_csv(std::fs::File::open(path)?),
        _ if !path.exists() => fixtures::load(source),
        _ => Err(Error::Parse(format!("`{source}`: expected a .csv or .json file"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_counts_with_missing_cells() {
        let data = "X,Y,count\na,0,3\nb,1,1\na,1,0\n";
        let p = read_csv(data.as_bytes()).unwrap();
        assert_eq!(p.probs(), &[0.75, 0.0, 0.0, 0.25]);
        assert_eq!(p.var("Y").unwrap().scores(), &[0.0, 1.0]);
    }

    #[test]
    fn numeric_labels_sort_and_score() {
        let data = "X,prob\n10,0.2\n2,0.8\n";
        let p = read_csv(data.as_bytes()).unwrap();
        assert_eq!(p.var("X").unwrap().labels(), &["2".to_string(), "10".to_string()]);
        assert_eq!(p.var("X").unwrap().scores(), &[2.0, 10.0]);
        assert_eq!(p.probs(), &[0.8, 0.2]);
    }

    #[test]
    fn bad_inputs() {
        assert!(read_csv("X,weight\na,1\n".as_bytes()).is_err());
        assert!(read_csv("X,count\na,1\na,2\n".as_bytes()).is_err());
        assert!(read_csv("X,count\na,0\n".as_bytes()).is_err());
    }

    #[test]
    fn round_trips() {
        let p = fixtures::trans();
        let mut buf = Vec::new();
        write_json(&p, &mut buf).unwrap();
        assert_eq!(read_json(buf.as_slice()).unwrap(), p);
        let mut buf = Vec::new();
        write_csv(&p, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        for (a, b) in back.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
