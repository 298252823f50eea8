use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh_fem::{projection_matrix, Mesh, Projection};

/// Repeated sensor readings. Each row is one displacement component at one sensor;
/// each column is one reading.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    /// Coordinate dimension of the sensors (1 or 2).
    pub dim: usize,
    pub sensor_ids: Vec<usize>,
    pub sensors: Vec<[f64; 2]>,
    /// (sensor index into `sensors`, displacement component) per row.
    pub rows: Vec<(usize, usize)>,
    /// n_y × n_o
    pub readings: DMatrix<f64>,
    /// Known noise standard deviation σ_e.
    pub sigma_e: f64,
}

impl ObservationSet {
    /// Every component of every sensor, sensor-major.
    pub fn full_rows(n_sensors: usize, components: usize) -> Vec<(usize, usize)> {
        (0..n_sensors).flat_map(|s| (0..components).map(move |c| (s, c))).collect()
    }

    pub fn new(
        dim: usize,
        sensors: Vec<[f64; 2]>,
        rows: Vec<(usize, usize)>,
        readings: DMatrix<f64>,
        sigma_e: f64,
    ) -> Result<Self> {
        let obs = Self {
            dim,
            sensor_ids: (0..sensors.len()).collect(),
            sensors,
            rows,
            readings,
            sigma_e,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidInput(format!("sensor dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.readings.ncols() == 0 {
            return Err(Error::InvalidInput("observation set has no readings".into()));
        }
        if self.readings.nrows() != self.rows.len() || self.rows.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} reading rows for {} sensor components",
                self.readings.nrows(),
                self.rows.len()
            )));
        }
        if self.sensor_ids.len() != self.sensors.len() {
            return Err(Error::InvalidInput("sensor ids and coordinates differ in length".into()));
        }
        if self.rows.iter().any(|&(s, c)| s >= self.sensors.len() || c >= self.dim) {
            return Err(Error::InvalidInput("observation row references an unknown sensor or component".into()));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma_e must be >= 0, got {}", self.sigma_e)));
        }
        if self.readings.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite reading".into()));
        }
        Ok(())
    }

    /// n_y
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// n_o
    pub fn n_reads(&self) -> usize {
        self.readings.ncols()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn row_coords(&self) -> Vec<[f64; 2]> {
        self.rows.iter().map(|&(s, _)| self.sensors[s]).collect()
    }

    pub fn row_components(&self) -> Vec<usize> {
        self.rows.iter().map(|&(_, c)| c).collect()
    }

    pub fn mean_reading(&self) -> DVector<f64> {
        self.readings.column_mean()
    }

    /// Keeps the first `n` readings.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.clamp(1, self.n_reads());
        Self {
            readings: self.readings.columns(0, n).into_owned(),
            ..self.clone()
        }
    }

    /// H with rows in this set's row order.
    pub fn projection(&self, mesh: &Mesh) -> Result<Projection> {
        if mesh.dim != self.dim {
            return Err(Error::InvalidInput(format!(
                "observations are {}D, mesh is {}D",
                self.dim, mesh.dim
            )));
        }
        let full = projection_matrix(mesh, &self.sensors)?;
        let idx: Vec<usize> = self.rows.iter().map(|&(s, c)| s * mesh.dim + c).collect();
        Ok(full.select_rows(&idx))
    }

    /// CSV text with header `sensor_id,x[,y],component,read_0,...`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sensor_id".to_string(), "x".to_string()];
        if self.dim == 2 {
            header.push("y".into());
        }
        header.push("component".into());
        header.extend((0..self.n_reads()).map(|i| format!("read_{i}")));
        w.write_record(&header).expect("in-memory write");
        for (r, &(s, c)) in self.rows.iter().enumerate() {
            let mut rec = vec![self.sensor_ids[s].to_string(), format!("{:?}", self.sensors[s][0])];
            if self.dim == 2 {
                rec.push(format!("{:?}", self.sensors[s][1]));
            }
            rec.push(c.to_string());
            rec.extend(self.readings.row(r).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, sigma_e: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string(), sigma_e)
    }

    pub fn parse_csv(text: &str, source: &str, sigma_e: f64) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| perr(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let dim = match header.get(2).map(String::as_str) {
            Some("y") => 2,
            Some("component") => 1,
            _ => return Err(perr(1, "header must start with sensor_id,x[,y],component".into())),
        };
        let first_read = dim + 2;
        if header[0] != "sensor_id" || header[1] != "x" || header[dim + 1] != "component" {
            return Err(perr(1, "header must start with sensor_id,x[,y],component".into()));
        }
        let n_reads = header.len() - first_read;
        for (i, h) in header[first_read..].iter().enumerate() {
            if *h != format!("read_{i}") {
                return Err(perr(1, format!("expected column read_{i}, found {h}")));
            }
        }
        if n_reads == 0 {
            return Err(perr(1, "no read_ columns".into()));
        }
        let mut sensor_ids: Vec<usize> = Vec::new();
        let mut sensors: Vec<[f64; 2]> = Vec::new();
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| perr(line, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(perr(line, format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| perr(line, format!("invalid number '{}' in column {}", &rec[i], header[i])))
            };
            let id: usize = rec[0].parse().map_err(|_| perr(line, format!("invalid sensor id '{}'", &rec[0])))?;
            let x = [num(1)?, if dim == 2 { num(2)? } else { 0.0 }];
            let comp: usize = rec[dim + 1]
                .parse()
                .map_err(|_| perr(line, format!("invalid component '{}'", &rec[dim + 1])))?;
            if comp >= dim {
                return Err(perr(line, format!("component {comp} out of range for {dim}D sensors")));
            }
            let s = match sensor_ids.iter().position(|&i| i == id) {
                Some(s) => {
                    if sensors[s] != x {
                        return Err(perr(line, format!("sensor {id} listed with different coordinates")));
                    }
                    s
                }
                None => {
                    sensor_ids.push(id);
                    sensors.push(x);
                    sensors.len() - 1
                }
            };
            if rows.contains(&(s, comp)) {
                return Err(perr(line, format!("sensor {id} component {comp} listed twice")));
            }
            rows.push((s, comp));
            for i in first_read..header.len() {
                values.push(num(i)?);
            }
        }
        if rows.is_empty() {
            return Err(perr(2, "no observation rows".into()));
        }
        let readings = DMatrix::from_row_slice(rows.len(), n_reads, &values);
        let obs = Self {
            dim,
            sensor_ids,
            sensors,
            rows,
            readings,
            sigma_e,
        };
        obs.validate()?;
        Ok(obs)
    }
}
