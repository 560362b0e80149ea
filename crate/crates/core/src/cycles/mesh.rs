//! Collocation mesh over normalized time `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mesh intervals over `[0, 1]` with `m` Gauss-Legendre collocation nodes
/// per interval.
///
/// On each interval the profile is the degree-`m` polynomial through `m + 1`
/// equally spaced representation points, so neighbouring intervals share
/// their boundary point and the profile has `N m + 1` points in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshLayout", into = "MeshLayout")]
pub struct CycleMesh {
    boundaries: Vec<f64>,
    nodes: usize,
    tables: Tables,
}

/// Serialized form of a [`CycleMesh`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshLayout {
    boundaries: Vec<f64>,
    nodes: usize,
}

impl TryFrom<MeshLayout> for CycleMesh {
    type Error = Error;

    fn try_from(layout: MeshLayout) -> Result<Self> {
        CycleMesh::with_boundaries(layout.boundaries, layout.nodes)
    }
}

impl From<CycleMesh> for MeshLayout {
    fn from(mesh: CycleMesh) -> Self {
        MeshLayout { boundaries: mesh.boundaries, nodes: mesh.nodes }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tables {
    /// Gauss nodes on `[0, 1]`.
    gauss: Vec<f64>,
    /// Gauss weights on `[0, 1]`, summing to one.
    weights: Vec<f64>,
    /// `basis[j][l]`: Lagrange basis `l` at Gauss node `j`.
    basis: Vec<Vec<f64>>,
    /// `slope[j][l]`: derivative of basis `l` at Gauss node `j`, per unit of
    /// the local coordinate.
    slope: Vec<Vec<f64>>,
}

impl CycleMesh {
    pub const DEFAULT_INTERVALS: usize = 20;
    pub const DEFAULT_NODES: usize = 4;

    /// Uniform mesh with `intervals` intervals and `nodes` collocation nodes.
    pub fn uniform(intervals: usize, nodes: usize) -> Result<Self> {
        let boundaries = (0..=intervals).map(|i| i as f64 / intervals as f64).collect();
        Self::with_boundaries(boundaries, nodes)
    }

    /// Mesh with explicit interval boundaries, which must start at 0, end at 1
    /// and increase strictly.
    pub fn with_boundaries(boundaries: Vec<f64>, nodes: usize) -> Result<Self> {
        let intervals = boundaries.len().saturating_sub(1);
        if intervals < 4 {
            return Err(Error::InvalidInput(format!("a cycle mesh needs at least 4 intervals, got {intervals}")));
        }
        if !(2..=7).contains(&nodes) {
            return Err(Error::InvalidInput(format!("collocation nodes per interval must be in [2, 7], got {nodes}")));
        }
        if boundaries[0] != 0.0 || boundaries[intervals] != 1.0 {
            return Err(Error::InvalidInput("mesh boundaries must start at 0 and end at 1".into()));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("mesh boundaries must increase strictly".into()));
        }
        let tables = Tables::new(nodes);
        Ok(Self { boundaries, nodes, tables })
    }

    pub fn intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Collocation nodes per interval, which is also the polynomial degree.
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of representation points, `N m + 1`.
    pub fn points(&self) -> usize {
        self.intervals() * self.nodes + 1
    }

    pub fn width(&self, interval: usize) -> f64 {
        self.boundaries[interval + 1] - self.boundaries[interval]
    }

    /// Normalized time of every representation point.
    pub fn point_times(&self) -> Vec<f64> {
        let m = self.nodes;
        let mut times = Vec::with_capacity(self.points());
        for i in 0..self.intervals() {
            for l in 0..m {
                times.push(self.boundaries[i] + self.width(i) * l as f64 / m as f64);
            }
        }
        times.push(1.0);
        times
    }

    /// Normalized time of Gauss node `j` in `interval`.
    pub fn gauss_time(&self, interval: usize, j: usize) -> f64 {
        self.boundaries[interval] + self.width(interval) * self.tables.gauss[j]
    }

    /// Quadrature weight of Gauss node `j` in `interval`; all weights sum to one.
    pub fn gauss_weight(&self, interval: usize, j: usize) -> f64 {
        self.width(interval) * self.tables.weights[j]
    }

    /// Lagrange basis `l` of an interval evaluated at its Gauss node `j`.
    pub fn basis(&self, j: usize, l: usize) -> f64 {
        self.tables.basis[j][l]
    }

    /// Derivative with respect to normalized time of basis `l` at Gauss node
    /// `j` of `interval`.
    pub fn basis_slope(&self, interval: usize, j: usize, l: usize) -> f64 {
        self.tables.slope[j][l] / self.width(interval)
    }

    /// Interval containing normalized time `t` (clamped into `[0, 1]`) and
    /// the local coordinate in `[0, 1]`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, 1.0);
        let i = self.boundaries.partition_point(|&b| b <= t).clamp(1, self.intervals()) - 1;
        (i, (t - self.boundaries[i]) / self.width(i))
    }

    /// Lagrange basis on the equally spaced points of an interval, evaluated
    /// at local coordinate `u`: values and derivatives with respect to `u`.
    pub fn local_basis(&self, u: f64) -> (Vec<f64>, Vec<f64>) {
        lagrange(self.nodes, u)
    }

    /// Whether two meshes discretize identically.
    pub fn same_as(&self, other: &CycleMesh) -> bool {
        self.nodes == other.nodes && self.boundaries == other.boundaries
    }
}

impl Default for CycleMesh {
    fn default() -> Self {
        Self::uniform(Self::DEFAULT_INTERVALS, Self::DEFAULT_NODES).expect("default mesh is valid")
    }
}

impl Tables {
    fn new(m: usize) -> Self {
        let (gauss, weights) = gauss_legendre(m);
        let mut basis = Vec::with_capacity(m);
        let mut slope = Vec::with_capacity(m);
        for &u in &gauss {
            let (b, d) = lagrange(m, u);
            basis.push(b);
            slope.push(d);
        }
        Self { gauss, weights, basis, slope }
    }
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre(m, x).1;
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Legendre polynomial `P_m(x)` and its derivative.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for n in 2..=m {
        let p2 = ((2 * n - 1) as f64 * x * p1 - (n - 1) as f64 * p0) / n as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Lagrange basis on the points `l / m`, `l = 0..=m`, and its derivative at `u`.
fn lagrange(m: usize, u: f64) -> (Vec<f64>, Vec<f64>) {
    let pts: Vec<f64> = (0..=m).map(|l| l as f64 / m as f64).collect();
    let mut values = vec![0.0; m + 1];
    let mut slopes = vec![0.0; m + 1];
    for l in 0..=m {
        let denom: f64 = (0..=m).filter(|&r| r != l).map(|r| pts[l] - pts[r]).product();
        let numer: f64 = (0..=m).filter(|&r| r != l).map(|r| u - pts[r]).product();
        values[l] = numer / denom;
        let mut d = 0.0;
        for skip in (0..=m).filter(|&r| r != l) {
            d += (0..=m).filter(|&r| r != l && r != skip).map(|r| u - pts[r]).product::<f64>();
        }
        slopes[l] = d / denom;
    }
    (values, slopes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_high_degree_exactly() {
        for m in 2..=7 {
            let (x, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..2 * m {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "m={m} deg={deg}");
            }
            assert!(x.windows(2).all(|p| p[1] > p[0]) && x[0] > 0.0 && x[m - 1] < 1.0);
        }
    }

    #[test]
    fn lagrange_basis_is_cardinal_and_exact() {
        let m = 4;
        for l in 0..=m {
            let (v, _) = lagrange(m, l as f64 / m as f64);
            for (r, &vr) in v.iter().enumerate() {
                assert!((vr - if r == l { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let u = 0.37;
        let (v, d) = lagrange(m, u);
        let pts: Vec<f64> = (0..=m).map(|l| l as f64 / m as f64).collect();
        let p = |t: f64| t.powi(4) - 2.0 * t;
        let interp: f64 = v.iter().zip(&pts).map(|(b, &t)| b * p(t)).sum();
        let slope: f64 = d.iter().zip(&pts).map(|(b, &t)| b * p(t)).sum();
        assert!((interp - p(u)).abs() < 1e-14);
        assert!((slope - (4.0 * u.powi(3) - 2.0)).abs() < 1e-13);
    }

    #[test]
    fn mesh_validation() {
        let mesh = CycleMesh::default();
        assert_eq!(mesh.intervals(), 20);
        assert_eq!(mesh.points(), 81);
        assert_eq!(mesh.point_times().len(), 81);
        assert!(CycleMesh::uniform(3, 4).is_err());
        assert!(CycleMesh::uniform(8, 1).is_err());
        assert!(CycleMesh::uniform(8, 8).is_err());
        assert!(CycleMesh::with_boundaries(vec![0.0, 0.3, 0.3, 0.5, 0.8, 1.0], 3).is_err());
        assert!(CycleMesh::with_boundaries(vec![0.1, 0.3, 0.4, 0.5, 1.0], 3).is_err());
        assert!(CycleMesh::with_boundaries(vec![0.0, 0.1, 0.3, 0.4, 1.0], 3).is_ok());
    }

    #[test]
    fn locate_finds_interval() {
        let mesh = CycleMesh::uniform(4, 3).unwrap();
        assert_eq!(mesh.locate(0.0), (0, 0.0));
        assert_eq!(mesh.locate(1.0), (3, 1.0));
        let (i, u) = mesh.locate(0.6);
        assert_eq!(i, 2);
        assert!((u - 0.4).abs() < 1e-12);
    }
}
