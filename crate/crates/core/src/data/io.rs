use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{AdoptionTime, Dataset, Frame, FrameCell, FrameCluster};
use crate::error::{Error, Result};

/// Column names of the long-format input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSchema {
    pub cluster_id: String,
    pub period: String,
    pub adoption_time: String,
    pub outcome: String,
    pub weight: String,
    /// Individual covariates; `None` selects every column starting with `x_`.
    pub x: Option<Vec<String>>,
    /// Cluster-period covariates; `None` selects every column starting with `c_`.
    pub c: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            cluster_id: "cluster_id".into(),
            period: "period".into(),
            adoption_time: "adoption_time".into(),
            outcome: "outcome".into(),
            weight: "weight".into(),
            x: None,
            c: None,
        }
    }
}

/// Load individual records and optional cluster-period covariates.
pub fn load_dataset(
    path: impl AsRef<Path>,
    cluster_covariates: Option<&Path>,
    schema: &ColumnSchema,
) -> Result<Dataset> {
    let records = std::fs::File::open(path)?;
    let cov = cluster_covariates.map(std::fs::File::open).transpose()?;
    read_dataset(records, cov, schema)
}

struct Header(HashMap<String, usize>);

impl Header {
    fn new(r: &csv::StringRecord) -> Self {
        Header(
            r.iter()
                .enumerate()
                .map(|(i, n)| (n.trim().to_string(), i))
                .collect(),
        )
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn prefixed(&self, names: &csv::StringRecord, prefix: &str) -> Vec<String> {
        names
            .iter()
            .map(|n| n.trim().to_string())
            .filter(|n| n.starts_with(prefix))
            .collect()
    }
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| Error::InvalidValue {
        record: row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue {
            record: row,
            column: column.to_string(),
        });
    }
    Ok(v)
}

fn parse_i64(rec: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<i64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::InvalidValue {
        record: row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

#[derive(Default)]
struct CellRecords {
    outcomes: Vec<f64>,
    x: Vec<f64>,
    weights: Vec<f64>,
}

/// Raw adoption label: a period label or never.
#[derive(Clone, Copy, PartialEq)]
enum RawAdoption {
    Label(i64),
    Never,
}

/// Reader-based variant of [`load_dataset`].
pub fn read_dataset<R: Read, C: Read>(
    records: R,
    cluster_covariates: Option<C>,
    schema: &ColumnSchema,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(records);
    let names = rdr.headers()?.clone();
    let header = Header::new(&names);
    let i_cluster = header.require(&schema.cluster_id)?;
    let i_period = header.require(&schema.period)?;
    let i_adopt = header.require(&schema.adoption_time)?;
    let i_outcome = header.require(&schema.outcome)?;
    let i_weight = header.0.get(&schema.weight).copied();
    let x_names = schema
        .x
        .clone()
        .unwrap_or_else(|| header.prefixed(&names, "x_"));
    let i_x = x_names
        .iter()
        .map(|n| header.require(n))
        .collect::<Result<Vec<_>>>()?;

    let mut cluster_order: Vec<String> = Vec::new();
    let mut cluster_index: HashMap<String, usize> = HashMap::new();
    let mut adoption: Vec<RawAdoption> = Vec::new();
    let mut cells: Vec<BTreeMap<i64, CellRecords>> = Vec::new();
    let mut labels = std::collections::BTreeSet::new();

    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(i_cluster).unwrap_or("").trim().to_string();
        let period = parse_i64(&rec, i_period, row, &schema.period)?;
        let raw_adopt = rec.get(i_adopt).unwrap_or("").trim();
        let adopt = match raw_adopt.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "never" => RawAdoption::Never,
            _ => RawAdoption::Label(raw_adopt.parse().map_err(|_| Error::InvalidValue {
                record: row,
                column: schema.adoption_time.clone(),
                value: raw_adopt.to_string(),
            })?),
        };
        let y = parse_f64(&rec, i_outcome, row, &schema.outcome)?;
        let idx = *cluster_index.entry(id.clone()).or_insert_with(|| {
            cluster_order.push(id.clone());
            adoption.push(adopt);
            cells.push(BTreeMap::new());
            cluster_order.len() - 1
        });
        if adoption[idx] != adopt {
            return Err(Error::InconsistentAdoption(id));
        }
        labels.insert(period);
        let cell = cells[idx].entry(period).or_default();
        cell.outcomes.push(y);
        for (k, &col) in i_x.iter().enumerate() {
            cell.x.push(parse_f64(&rec, col, row, &x_names[k])?);
        }
        if let Some(col) = i_weight {
            cell.weights
                .push(parse_f64(&rec, col, row, &schema.weight)?);
        }
    }

    let labels: Vec<i64> = labels.into_iter().collect();
    if labels.is_empty() {
        return Err(Error::ShapeMismatch("no records".into()));
    }
    if labels.last().unwrap() - labels[0] + 1 != labels.len() as i64 {
        return Err(Error::NonContiguousPeriods(labels));
    }
    let first = labels[0];
    let periods = labels.len();

    let (c_names, c_values) = match cluster_covariates {
        Some(r) => read_cluster_covariates(r, schema)?,
        None => (Vec::new(), HashMap::new()),
    };

    let mut adoption_times = Vec::with_capacity(cluster_order.len());
    let mut outcomes = Vec::with_capacity(cluster_order.len());
    let mut frame_clusters = Vec::with_capacity(cluster_order.len());
    for (i, id) in cluster_order.iter().enumerate() {
        adoption_times.push(match adoption[i] {
            RawAdoption::Never => AdoptionTime::Never,
            RawAdoption::Label(l) if labels.binary_search(&l).is_ok() => {
                AdoptionTime::Period((l - first) as usize + 1)
            }
            RawAdoption::Label(l) => {
                return Err(Error::InvalidValue {
                    record: i,
                    column: schema.adoption_time.clone(),
                    value: l.to_string(),
                })
            }
        });
        let mut ys = Vec::with_capacity(periods);
        let mut fcells = Vec::with_capacity(periods);
        for (j, label) in labels.iter().enumerate() {
            let cell = cells[i]
                .remove(label)
                .ok_or_else(|| Error::EmptyClusterPeriod {
                    cluster: id.clone(),
                    period: j + 1,
                })?;
            let c = if c_names.is_empty() {
                Vec::new()
            } else {
                c_values
                    .get(&(id.clone(), *label))
                    .cloned()
                    .ok_or_else(|| Error::MissingClusterCovariates {
                        cluster: id.clone(),
                        period: j + 1,
                    })?
            };
            fcells.push(FrameCell {
                size: cell.outcomes.len(),
                x: cell.x,
                weights: i_weight.map(|_| cell.weights),
                c,
            });
            ys.push(cell.outcomes);
        }
        outcomes.push(ys);
        frame_clusters.push(FrameCluster {
            id: id.clone(),
            cells: fcells,
        });
    }
    let frame = Frame {
        periods,
        period_labels: labels,
        x_names,
        c_names,
        clusters: frame_clusters,
    };
    Dataset::new(Arc::new(frame), adoption_times, outcomes)
}

type ClusterCovariates = (Vec<String>, HashMap<(String, i64), Vec<f64>>);

fn read_cluster_covariates<R: Read>(r: R, schema: &ColumnSchema) -> Result<ClusterCovariates> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let names = rdr.headers()?.clone();
    let header = Header::new(&names);
    let i_cluster = header.require(&schema.cluster_id)?;
    let i_period = header.require(&schema.period)?;
    let c_names = schema
        .c
        .clone()
        .unwrap_or_else(|| header.prefixed(&names, "c_"));
    let i_c = c_names
        .iter()
        .map(|n| header.require(n))
        .collect::<Result<Vec<_>>>()?;
    let mut values = HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(i_cluster).unwrap_or("").trim().to_string();
        let period = parse_i64(&rec, i_period, row, &schema.period)?;
        let c = i_c
            .iter()
            .zip(&c_names)
            .map(|(&col, name)| parse_f64(&rec, col, row, name))
            .collect::<Result<Vec<_>>>()?;
        if values.insert((id, period), c).is_some() {
            return Err(Error::InvalidValue {
                record: row,
                column: schema.cluster_id.clone(),
                value: "duplicate cluster-period".into(),
            });
        }
    }
    Ok((c_names, values))
}

/// Write a dataset in the long input format (and, when it has cluster-period
/// covariates, the companion file). Numbers round-trip exactly.
pub fn write_dataset<W: Write, C: Write>(
    d: &Dataset,
    records: W,
    cluster_covariates: Option<C>,
) -> Result<()> {
    let frame = d.frame();
    let with_weights = frame.has_weight_column();
    let mut w = csv::Writer::from_writer(records);
    let mut header = vec!["cluster_id", "period", "adoption_time", "outcome"];
    if with_weights {
        header.push("weight");
    }
    header.extend(frame.x_names.iter().map(String::as_str));
    w.write_record(&header)?;
    let label = |a: AdoptionTime| match a {
        AdoptionTime::Period(j) => frame.period_labels[j - 1].to_string(),
        AdoptionTime::Never => "inf".to_string(),
    };
    let px = frame.px();
    for (i, cl) in frame.clusters.iter().enumerate() {
        for (j, cell) in cl.cells.iter().enumerate() {
            for (k, y) in d.outcomes(i, j).iter().enumerate() {
                let mut row = vec![
                    cl.id.clone(),
                    frame.period_labels[j].to_string(),
                    label(d.adoption(i)),
                    format!("{y:e}"),
                ];
                if let Some(ws) = &cell.weights {
                    row.push(format!("{:e}", ws[k]));
                }
                row.extend(
                    cell.x[k * px..(k + 1) * px]
                        .iter()
                        .map(|v| format!("{v:e}")),
                );
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    if let Some(out) = cluster_covariates {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cluster_id", "period"];
        header.extend(frame.c_names.iter().map(String::as_str));
        w.write_record(&header)?;
        for cl in &frame.clusters {
            for (j, cell) in cl.cells.iter().enumerate() {
                let mut row = vec![cl.id.clone(), frame.period_labels[j].to_string()];
                row.extend(cell.c.iter().map(|v| format!("{v:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Dataset> {
        read_dataset(s.as_bytes(), None::<&[u8]>, &ColumnSchema::default())
    }

    #[test]
    fn minimal_two_cluster_file() {
        let d = read(
            "cluster_id,period,adoption_time,outcome\n\
             a,1,1,3.0\na,2,1,4.0\nb,1,inf,1.0\nb,2,inf,2.0\n",
        )
        .unwrap();
        assert_eq!(d.n_clusters(), 2);
        assert_eq!(d.periods(), 2);
        assert_eq!(AdoptionTime::all(d.periods()).len(), 3);
        assert_eq!(d.adoption(0), AdoptionTime::Period(1));
        assert_eq!(d.adoption(1), AdoptionTime::Never);
    }

    #[test]
    fn missing_cell_is_reported() {
        let err = read(
            "cluster_id,period,adoption_time,outcome\n\
             a,1,1,3.0\na,2,1,4.0\nb,1,inf,1.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyClusterPeriod { period: 2, .. }));
    }

    #[test]
    fn periods_are_relabeled_and_gaps_rejected() {
        let d = read(
            "cluster_id,period,adoption_time,outcome\n\
             a,2019,2020,3.0\na,2020,2020,4.0\nb,2019,never,1.0\nb,2020,never,2.0\n",
        )
        .unwrap();
        assert_eq!(d.adoption(0), AdoptionTime::Period(2));
        assert_eq!(d.frame().period_labels, vec![2019, 2020]);
        let err = read(
            "cluster_id,period,adoption_time,outcome\n\
             a,1,1,3.0\na,3,1,4.0\nb,1,inf,1.0\nb,3,inf,2.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonContiguousPeriods(_)));
    }

    #[test]
    fn bad_values_are_reported() {
        let err = read("cluster_id,period,adoption_time\na,1,1\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "outcome"));
        let err = read("cluster_id,period,adoption_time,outcome\na,1,1,NaN\n").unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { .. }));
        let err =
            read("cluster_id,period,adoption_time,outcome\na,1,1,1\na,1,inf,2\n").unwrap_err();
        assert!(matches!(err, Error::InconsistentAdoption(_)));
    }

    #[test]
    fn round_trip_with_covariates() {
        let recs = "cluster_id,period,adoption_time,outcome,x_age,x_sbp\n\
                    a,1,1,3.5,40,120\na,1,1,2.5,50,130\na,2,1,4.0,41,121\n\
                    b,1,inf,1.0,60,140\nb,2,inf,2.0,61,141\n";
        let cov = "cluster_id,period,c_beds\na,1,10\na,2,11\nb,1,20\nb,2,21\n";
        let d = read_dataset(
            recs.as_bytes(),
            Some(cov.as_bytes()),
            &ColumnSchema::default(),
        )
        .unwrap();
        assert_eq!(d.frame().px(), 2);
        assert_eq!(d.frame().c_names, vec!["c_beds".to_string()]);
        let (mut out, mut cout) = (Vec::new(), Vec::new());
        write_dataset(&d, &mut out, Some(&mut cout)).unwrap();
        let back = read_dataset(
            out.as_slice(),
            Some(cout.as_slice()),
            &ColumnSchema::default(),
        )
        .unwrap();
        assert_eq!(back, d);
    }
}
