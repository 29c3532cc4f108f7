use std::path::Path;

use crate::error::{Error, Result};
use crate::volgrid::Grid;

/// Ordered vessel axis points in mm with cumulative arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    points: Vec<[f64; 3]>,
    arclength: Vec<f64>,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Centerline {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("centerline needs at least 2 points"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("centerline has non-finite coordinates"));
        }
        let mut arclength = Vec::with_capacity(points.len());
        arclength.push(0.0);
        for w in points.windows(2) {
            let step = dist(w[0], w[1]);
            if !(step > 0.0) {
                return Err(Error::invalid("centerline has repeated consecutive points"));
            }
            arclength.push(arclength.last().unwrap() + step);
        }
        Ok(Centerline { points, arclength })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    pub fn max_step(&self) -> f64 {
        self.arclength.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Checks the sampling density against a grid: no step longer than twice
    /// the smallest voxel spacing.
    pub fn check_density(&self, grid: &Grid) -> Result<()> {
        let limit = 2.0 * grid.spacing.iter().copied().fold(f64::INFINITY, f64::min);
        if self.max_step() > limit * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "centerline step {:.4} mm exceeds 2x smallest voxel spacing ({limit:.4} mm)",
                self.max_step()
            )));
        }
        Ok(())
    }

    /// Point at arclength `s` (clamped to the curve), linear between samples.
    pub fn point_at(&self, s: f64) -> [f64; 3] {
        let s = s.clamp(0.0, self.length());
        let seg = match self.arclength.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.points[i],
            Err(i) => i - 1,
        };
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let f = (s - self.arclength[seg]) / (self.arclength[seg + 1] - self.arclength[seg]);
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])]
    }

    /// Samples at arclengths `0, step, 2*step, ...` up to `min(limit, length)`,
    /// the end point always included.
    pub fn resample(&self, step: f64, limit: f64) -> Vec<[f64; 3]> {
        let end = limit.min(self.length());
        let n = (end / step).floor() as usize;
        let mut out: Vec<[f64; 3]> = (0..=n).map(|i| self.point_at(i as f64 * step)).collect();
        if end - n as f64 * step > 1e-9 * step.max(1.0) {
            out.push(self.point_at(end));
        }
        out
    }

    /// Index of the nearest given point (earliest on ties) and its distance.
    pub fn nearest(&self, p: [f64; 3]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, &q) in self.points.iter().enumerate() {
            let d = dist(p, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn translated(&self, by: [f64; 3]) -> Centerline {
        let points = self.points.iter().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect();
        Centerline { points, arclength: self.arclength.clone() }
    }
}

/// Reads a centerline CSV with columns `x_mm,y_mm,z_mm`.
pub fn read_centerline(path: &Path) -> Result<Centerline> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string())),
        _ => Error::format(path, e.to_string()),
    })?;
    let mut points = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64)>() {
        let (x, y, z) = rec.map_err(|e| Error::format(path, e.to_string()))?;
        points.push([x, y, z]);
    }
    Centerline::new(points).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_centerline(cl: &Centerline, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let wrap = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["x_mm", "y_mm", "z_mm"]).map_err(wrap)?;
    for p in cl.points() {
        w.write_record(p.iter().map(|v| format!("{v}"))).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arclength_accumulates() {
        let cl = Centerline::new(vec![[0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [3.0, 4.0, 2.0]]).unwrap();
        assert_eq!(cl.arclength(), &[0.0, 5.0, 7.0]);
        assert_eq!(cl.point_at(6.0), [3.0, 4.0, 1.0]);
    }

    #[test]
    fn rejects_short_or_repeated() {
        assert!(Centerline::new(vec![[0.0; 3]]).is_err());
        assert!(Centerline::new(vec![[0.0; 3], [0.0; 3]]).is_err());
    }

    #[test]
    fn resample_includes_end() {
        let cl = Centerline::new(vec![[0.0; 3], [0.0, 0.0, 1.0]]).unwrap();
        let r = cl.resample(0.3, 10.0);
        assert_eq!(r.len(), 5);
        assert_eq!(*r.last().unwrap(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cl.csv");
        let cl = Centerline::new(vec![[0.1, 0.2, 0.3], [1.0, 2.0, 3.5]]).unwrap();
        write_centerline(&cl, &path).unwrap();
        assert_eq!(read_centerline(&path).unwrap(), cl);
    }
}
