use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compare_ids, Corridor, Trajectory, TrajectoryPoint, TIME_TOLERANCE};
use crate::error::{Error, Result};
use crate::models::VehicleClass;

/// Maps logical fields to CSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub id: String,
    pub t: String,
    pub position: String,
    pub x_utm: String,
    pub y_utm: String,
    pub lateral: String,
    pub v: String,
    pub a: String,
    pub lane: String,
    pub edge: String,
    pub leader: String,
    pub class: String,
    pub length: String,
    pub default_length_small: f64,
    pub default_length_large: f64,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "id".into(),
            t: "t_sec".into(),
            position: "position".into(),
            x_utm: "x_utm".into(),
            y_utm: "y_utm".into(),
            lateral: "y".into(),
            v: "v".into(),
            a: "a".into(),
            lane: "lane".into(),
            edge: "edge".into(),
            leader: "pre_id".into(),
            class: "class".into(),
            length: "length".into(),
            default_length_small: 4.5,
            default_length_large: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    /// 1-based line number in the source file.
    pub line: u64,
    pub fields: Vec<String>,
}

/// Raw CSV contents, kept so cleaned output can preserve the input schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    /// Sorted by vehicle id; points sorted by time.
    pub trajectories: Vec<Trajectory>,
    /// Common time step; `None` for an empty dataset.
    pub dt: Option<f64>,
    /// For each trajectory point, the index of its row in the source table.
    pub source_rows: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn from_trajectories(mut trajectories: Vec<Trajectory>) -> Result<Self> {
        trajectories.sort_by(|a, b| compare_ids(&a.vehicle_id, &b.vehicle_id));
        let dt = common_dt(&trajectories)?;
        Ok(Dataset {
            source_rows: Vec::new(),
            trajectories,
            dt,
        })
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.vehicle_id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn common_dt(trajs: &[Trajectory]) -> Result<Option<f64>> {
    let mut dt: Option<f64> = None;
    for t in trajs {
        let d = t.dt()?;
        match dt {
            None => dt = Some(d),
            Some(prev) if (prev - d).abs() > TIME_TOLERANCE => {
                return Err(Error::NonUniformStep {
                    vehicle: t.vehicle_id.clone(),
                    t: t.points[1].t,
                    gap: d,
                    expected: prev,
                })
            }
            _ => {}
        }
    }
    Ok(dt)
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Row {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(TableRow {
            line,
            fields: rec.iter().map(str::to_string).collect(),
        });
    }
    Ok(Table { headers, rows })
}

fn is_none_token(s: &str) -> bool {
    matches!(
        s.to_ascii_lowercase().as_str(),
        "" | "-1" | "nan" | "none" | "null" | "na"
    )
}

struct Columns {
    id: usize,
    t: usize,
    position: Option<usize>,
    utm: Option<(usize, usize)>,
    lateral: Option<usize>,
    v: Option<usize>,
    a: Option<usize>,
    lane: Option<usize>,
    edge: Option<usize>,
    leader: Option<usize>,
    class: Option<usize>,
    length: Option<usize>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn columns(&self, schema: &Schema, corridor: Option<&Corridor>) -> Result<Columns> {
        let req = |name: &str| self.column(name).ok_or_else(|| Error::MissingColumn(name.into()));
        let position = self.column(&schema.position);
        let utm = match (self.column(&schema.x_utm), self.column(&schema.y_utm)) {
            (Some(x), Some(y)) => Some((x, y)),
            _ => None,
        };
        if position.is_none() && (utm.is_none() || corridor.is_none()) {
            return Err(Error::MissingColumn(if utm.is_some() {
                format!("{} (or a corridor config for {}/{})", schema.position, schema.x_utm, schema.y_utm)
            } else {
                schema.position.clone()
            }));
        }
        Ok(Columns {
            id: req(&schema.id)?,
            t: req(&schema.t)?,
            position,
            utm,
            lateral: self.column(&schema.lateral),
            v: self.column(&schema.v),
            a: self.column(&schema.a),
            lane: self.column(&schema.lane),
            edge: self.column(&schema.edge),
            leader: self.column(&schema.leader),
            class: self.column(&schema.class),
            length: self.column(&schema.length),
        })
    }

    /// Groups rows into per-vehicle trajectories, sorted by id and time.
    pub fn to_dataset(&self, schema: &Schema, corridor: Option<&Corridor>) -> Result<Dataset> {
        let cols = self.columns(schema, corridor)?;
        struct Acc {
            class: Option<VehicleClass>,
            length: Option<f64>,
            points: Vec<(TrajectoryPoint, usize)>,
        }
        let mut groups: HashMap<String, Acc> = HashMap::new();

        for (row_idx, row) in self.rows.iter().enumerate() {
            let line = row.line;
            let field = |i: usize| row.fields.get(i).map(String::as_str).unwrap_or("");
            let num = |i: usize, name: &str| -> Result<f64> {
                let s = field(i);
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Row {
                    line,
                    message: format!("column `{name}`: cannot parse `{s}` as a number"),
                })
            };
            let opt_num = |i: Option<usize>, name: &str| -> Result<Option<f64>> {
                match i {
                    Some(i) if !field(i).is_empty() => num(i, name).map(Some),
                    _ => Ok(None),
                }
            };
            let opt_str = |i: Option<usize>| {
                i.map(field)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
            };

            let id = field(cols.id).to_string();
            if id.is_empty() {
                return Err(Error::Row {
                    line,
                    message: format!("empty `{}`", schema.id),
                });
            }
            let t = num(cols.t, &schema.t)?;
            let edge = opt_str(cols.edge);
            let (x, y) = match (cols.position, cols.utm, corridor) {
                (_, Some((ix, iy)), Some(c)) if cols.position.is_none() || !field(ix).is_empty() => {
                    let ux = num(ix, &schema.x_utm)?;
                    let uy = num(iy, &schema.y_utm)?;
                    let (s, lat) = c.project(edge.as_deref(), ux, uy).map_err(|e| Error::Row {
                        line,
                        message: e.to_string(),
                    })?;
                    (s, Some(lat))
                }
                (Some(ip), _, _) => (num(ip, &schema.position)?, opt_num(cols.lateral, &schema.lateral)?),
                _ => unreachable!("columns() guarantees a position source"),
            };
            let leader_id = cols
                .leader
                .map(field)
                .filter(|s| !is_none_token(s))
                .map(str::to_string);
            let class = match cols.class.map(field).filter(|s| !s.is_empty()) {
                Some(s) => Some(s.parse::<VehicleClass>().map_err(|e| Error::Row {
                    line,
                    message: e.to_string(),
                })?),
                None => None,
            };
            let length = opt_num(cols.length, &schema.length)?;

            let point = TrajectoryPoint {
                t,
                x,
                y,
                v: opt_num(cols.v, &schema.v)?,
                a: opt_num(cols.a, &schema.a)?,
                lane: opt_str(cols.lane),
                edge,
                leader_id,
            };
            let acc = groups.entry(id).or_insert(Acc {
                class: None,
                length: None,
                points: Vec::new(),
            });
            acc.class = acc.class.or(class);
            acc.length = acc.length.or(length);
            acc.points.push((point, row_idx));
        }

        let mut trajectories = Vec::with_capacity(groups.len());
        let mut source_rows = Vec::with_capacity(groups.len());
        let mut ids: Vec<String> = groups.keys().cloned().collect();
        ids.sort_by(|a, b| compare_ids(a, b));
        for id in ids {
            let mut acc = groups.remove(&id).expect("key from map");
            acc.points.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
            let class = acc.class.unwrap_or(VehicleClass::Small);
            let length = acc.length.unwrap_or(match class {
                VehicleClass::Small => schema.default_length_small,
                VehicleClass::Large => schema.default_length_large,
            });
            let (points, rows): (Vec<_>, Vec<_>) = acc.points.into_iter().unzip();
            let traj = Trajectory {
                vehicle_id: id,
                class,
                length,
                points,
            };
            traj.validate()?;
            trajectories.push(traj);
            source_rows.push(rows);
        }
        let dt = common_dt(&trajectories)?;
        Ok(Dataset {
            trajectories,
            dt,
            source_rows,
        })
    }

    /// Writes the table back with position/speed/acceleration columns taken
    /// from `cleaned` (added when absent) and a trailing `cleaned` flag.
    pub fn write_cleaned(
        &self,
        path: &Path,
        schema: &Schema,
        source: &Dataset,
        cleaned: &[Trajectory],
        flags: &[Vec<bool>],
    ) -> Result<()> {
        let mut headers = self.headers.clone();
        let col = |name: &str, headers: &mut Vec<String>| match headers.iter().position(|h| h == name) {
            Some(i) => i,
            None => {
                headers.push(name.to_string());
                headers.len() - 1
            }
        };
        let ip = col(&schema.position, &mut headers);
        let iv = col(&schema.v, &mut headers);
        let ia = col(&schema.a, &mut headers);
        let ic = col("cleaned", &mut headers);
        let mut rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut f = r.fields.clone();
                f.resize(headers.len(), String::new());
                f
            })
            .collect();
        for ((traj, src), fl) in cleaned.iter().zip(&source.source_rows).zip(flags) {
            for ((p, &row), &flag) in traj.points.iter().zip(src).zip(fl) {
                let r = &mut rows[row];
                r[ip] = fmt_f64(p.x);
                r[iv] = p.v.map(fmt_f64).unwrap_or_default();
                r[ia] = p.a.map(fmt_f64).unwrap_or_default();
                r[ic] = if flag { "1" } else { "0" }.to_string();
            }
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(&headers)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("{other:?}")),
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn load_trajectories(
    path: &Path,
    schema: &Schema,
    corridor: Option<&Corridor>,
) -> Result<Dataset> {
    read_table(path)?.to_dataset(schema, corridor)
}

/// Canonical trajectory CSV: `id,t_sec,position,y,v,a,lane,edge,pre_id,class,length`.
pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record([
        "id", "t_sec", "position", "y", "v", "a", "lane", "edge", "pre_id", "class", "length",
    ])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for traj in trajs {
        for p in &traj.points {
            w.write_record([
                traj.vehicle_id.clone(),
                fmt_f64(p.t),
                fmt_f64(p.x),
                opt(p.y),
                opt(p.v),
                opt(p.a),
                p.lane.clone().unwrap_or_default(),
                p.edge.clone().unwrap_or_default(),
                p.leader_id.clone().unwrap_or_default(),
                traj.class.to_string(),
                fmt_f64(traj.length),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
