//! Schrödinger and Jacobi operators on a strip, their transfer cocycles and energy scans.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle_engine::{self, BasePoint, BaseSystem, Cocycle, GeneratorFn, LyapunovMethod, SampleSpec};
use crate::error::{Error, Result};
use crate::group_core::GroupTag;
use crate::linalg::{self, c, CMat, C64};
use crate::rotation_module::{transfer_matrix, EnergyFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PotentialKind {
    Hermitian,
    RealSymmetric,
    /// Fixed 0/1 adjacency of a lattice slice plus a base-dependent diagonal.
    DiagonalFromS { adjacency: Vec<Vec<f64>> },
}

/// A base-dependent `d x d` potential `v(x)`.
#[derive(Clone)]
pub struct StripPotential {
    pub d: usize,
    pub kind: PotentialKind,
    /// Number of entries of a table potential.
    pub table_len: Option<usize>,
    values: Arc<GeneratorFn>,
}

impl std::fmt::Debug for StripPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StripPotential").field("d", &self.d).field("kind", &self.kind).finish()
    }
}

fn check_kind(m: &CMat, kind: &PotentialKind) -> Result<()> {
    let herm = linalg::op_norm(&(m - m.adjoint())) <= 1e-12 * (1.0 + linalg::op_norm(m));
    if !herm {
        return Err(Error::Input("potential is not Hermitian".into()));
    }
    if !matches!(kind, PotentialKind::Hermitian) && m.iter().any(|z| z.im.abs() > 1e-12) {
        return Err(Error::Input("potential must be real".into()));
    }
    Ok(())
}

fn adjacency_matrix(rows: &[Vec<f64>]) -> CMat {
    let d = rows.len();
    CMat::from_fn(d, d, |i, j| c(rows[i][j], 0.0))
}

impl StripPotential {
    /// Potential from a function returning full `d x d` matrices; every value is validated.
    pub fn from_fn<F>(d: usize, kind: PotentialKind, f: F) -> Result<Self>
    where
        F: Fn(&BasePoint) -> Result<CMat> + Send + Sync + 'static,
    {
        if d == 0 {
            return Err(Error::Dimension("strip width must be positive".into()));
        }
        let k = kind.clone();
        let values = Arc::new(move |x: &BasePoint| {
            let m = f(x)?;
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!("potential value is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
            }
            check_kind(&m, &k)?;
            Ok(m)
        });
        Ok(StripPotential { d, kind, table_len: None, values })
    }

    pub fn zero(d: usize) -> Self {
        StripPotential { d, kind: PotentialKind::RealSymmetric, table_len: None, values: Arc::new(move |_| Ok(linalg::zeros(d, d))) }
    }

    pub fn constant(m: CMat, kind: PotentialKind) -> Result<Self> {
        check_kind(&m, &kind)?;
        StripPotential::from_fn(m.nrows(), kind, move |_| Ok(m.clone()))
    }

    /// `v(x) = table[symbol(x)]` for periodic or shift bases.
    pub fn from_table(table: Vec<CMat>, kind: PotentialKind) -> Result<Self> {
        let d = table.first().map(|m| m.nrows()).ok_or_else(|| Error::Input("empty potential table".into()))?;
        for m in &table {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension("potential table has inconsistent sizes".into()));
            }
            check_kind(m, &kind)?;
        }
        let len = table.len();
        let table = Arc::new(table);
        let mut out = StripPotential::from_fn(d, kind, move |x| {
            let s = x.symbol().ok_or_else(|| Error::Domain("table potential needs a discrete base point".into()))?;
            table.get(s).cloned().ok_or_else(|| Error::Domain(format!("symbol {s} outside potential table")))
        })?;
        out.table_len = Some(len);
        Ok(out)
    }

    /// `v(x) = adjacency(S) + diag(diagonals[symbol(x)])`.
    pub fn diagonal_from_s(adjacency: &CMat, diagonals: Vec<Vec<f64>>) -> Result<Self> {
        let d = adjacency.nrows();
        if diagonals.iter().any(|v| v.len() != d) || diagonals.is_empty() {
            return Err(Error::Dimension(format!("diagonal tables must be nonempty with {d} entries")));
        }
        let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| adjacency[(i, j)].re).collect()).collect();
        let table: Vec<CMat> = diagonals
            .iter()
            .map(|v| {
                let mut m = adjacency.clone();
                for i in 0..d {
                    m[(i, i)] += c(v[i], 0.0);
                }
                m
            })
            .collect();
        let mut out = StripPotential::from_table(table, PotentialKind::RealSymmetric)?;
        out.kind = PotentialKind::DiagonalFromS { adjacency: rows };
        Ok(out)
    }

    /// `v(x) = adjacency(S) + diag(g(x))` for an arbitrary base.
    pub fn diagonal_from_s_fn<F>(adjacency: &CMat, g: F) -> Result<Self>
    where
        F: Fn(&BasePoint) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        let d = adjacency.nrows();
        let adj = adjacency.clone();
        let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| adjacency[(i, j)].re).collect()).collect();
        let mut out = StripPotential::from_fn(d, PotentialKind::RealSymmetric, move |x| {
            let v = g(x)?;
            if v.len() != d {
                return Err(Error::Dimension(format!("diagonal has {} entries, expected {d}", v.len())));
            }
            let mut m = adj.clone();
            for i in 0..d {
                m[(i, i)] += c(v[i], 0.0);
            }
            Ok(m)
        })?;
        out.kind = PotentialKind::DiagonalFromS { adjacency: rows };
        Ok(out)
    }

    pub fn at(&self, x: &BasePoint) -> Result<CMat> {
        (self.values)(x)
    }

    /// Whether every value is real, so that transfer matrices lie in `Sp(2d, R)`.
    pub fn is_real(&self) -> bool {
        !matches!(self.kind, PotentialKind::Hermitian)
    }

    /// Group containing the transfer matrices at real energies.
    pub fn natural_tag(&self) -> GroupTag {
        if self.is_real() {
            GroupTag::SpR
        } else {
            GroupTag::SHSp
        }
    }

    /// Loads a table from CSV rows `index, entries...` with `d^2` real entries (row-major) or
    /// `2 d^2` interleaved real/imaginary entries. Rows may come in any order.
    pub fn load_csv(path: &Path, kind: PotentialKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Input(format!("{}: line {}: {e}", path.display(), line + 1)));
            let idx = rec.get(0).ok_or_else(|| Error::Input(format!("line {}: empty row", line + 1)))?;
            let idx = idx.parse::<usize>().map_err(|e| Error::Input(format!("{}: line {}: index: {e}", path.display(), line + 1)))?;
            let vals = rec.iter().skip(1).map(parse).collect::<Result<Vec<f64>>>()?;
            rows.push((idx, vals));
        }
        potential_from_rows(rows, kind)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table: PotentialTable = serde_json::from_str(&text)?;
        table.into_potential()
    }
}

/// JSON form of a potential table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub kind: PotentialKind,
    /// Row-major real parts, one entry per base index.
    pub re: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<Vec<f64>>>>,
}

impl PotentialTable {
    pub fn into_potential(self) -> Result<StripPotential> {
        let mut mats = Vec::with_capacity(self.re.len());
        for (k, re) in self.re.iter().enumerate() {
            let d = re.len();
            if re.iter().any(|r| r.len() != d) {
                return Err(Error::Dimension(format!("entry {k} is not square")));
            }
            let im = self.im.as_ref().map(|im| &im[k]);
            mats.push(CMat::from_fn(d, d, |i, j| c(re[i][j], im.map_or(0.0, |m| m[i][j]))));
        }
        match self.kind {
            PotentialKind::DiagonalFromS { adjacency } => {
                let adj = adjacency_matrix(&adjacency);
                let diags = mats.iter().map(|m| (0..m.nrows()).map(|i| m[(i, i)].re).collect()).collect();
                StripPotential::diagonal_from_s(&adj, diags)
            }
            kind => StripPotential::from_table(mats, kind),
        }
    }
}

fn potential_from_rows(mut rows: Vec<(usize, Vec<f64>)>, kind: PotentialKind) -> Result<StripPotential> {
    rows.sort_by_key(|r| r.0);
    for (k, (idx, _)) in rows.iter().enumerate() {
        if *idx != k {
            return Err(Error::Input(format!("potential indices must be 0..n without gaps, found {idx} at position {k}")));
        }
    }
    let len = rows.first().map(|r| r.1.len()).ok_or_else(|| Error::Input("empty potential table".into()))?;
    if let PotentialKind::DiagonalFromS { adjacency } = &kind {
        let adj = adjacency_matrix(adjacency);
        let diags = rows.into_iter().map(|r| r.1).collect();
        return StripPotential::diagonal_from_s(&adj, diags);
    }
    let (d, complex) = match (1..=64).find(|d| d * d == len) {
        Some(d) => (d, false),
        None => match (1..=64).find(|d| 2 * d * d == len) {
            Some(d) => (d, true),
            None => return Err(Error::Dimension(format!("{len} entries per row is neither d^2 nor 2d^2"))),
        },
    };
    let mats = rows
        .iter()
        .map(|(_, v)| {
            if v.len() != len {
                return Err(Error::Dimension("rows have different lengths".into()));
            }
            Ok(CMat::from_fn(d, d, |i, j| if complex { c(v[2 * (i * d + j)], v[2 * (i * d + j) + 1]) } else { c(v[i * d + j], 0.0) }))
        })
        .collect::<Result<Vec<_>>>()?;
    StripPotential::from_table(mats, kind)
}

/// Adjacency of a finite set of lattice points: 1 when two points are at `l^1` distance 1.
pub fn adjacency_from_s(points: &[Vec<i64>]) -> Result<CMat> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidStrip("S is empty".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidStrip("points of S have different dimensions".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if points[i] == points[j] {
                return Err(Error::InvalidStrip(format!("point {:?} repeated", points[i])));
            }
        }
    }
    let dist = |a: &Vec<i64>, b: &Vec<i64>| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<i64>();
    let adj = CMat::from_fn(n, n, |i, j| if dist(&points[i], &points[j]) == 1 { linalg::ONE } else { linalg::ZERO });
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && adj[(i, j)].re == 1.0 {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidStrip(format!("S is not connected: {:?} unreachable", points[k])));
    }
    Ok(adj)
}

fn check_tag(v: &StripPotential, tag: GroupTag) -> Result<()> {
    match tag {
        GroupTag::SpR if v.is_real() => Ok(()),
        GroupTag::SHSp | GroupTag::HSp => Ok(()),
        _ => Err(Error::Input(format!("{:?} potential is incompatible with {tag:?}", v.kind))),
    }
}

/// `x -> [[E I - v(x), -I], [I, 0]]`; complex `E` gives the untagged complexified cocycle.
pub fn transfer_cocycle(v: &StripPotential, e: C64, base: &BaseSystem, tag: GroupTag) -> Result<Cocycle> {
    check_tag(v, tag)?;
    let pot = v.clone();
    let t = if e.im == 0.0 { Some(tag) } else { None };
    Cocycle::from_fn(base.clone(), v.d, t, move |x| Ok(transfer_matrix(&pot.at(x)?, e)))
}

/// The energy family `E + it -> A^{(E + it - v)}` for the rotation and Kotani machinery.
pub fn energy_family(v: &StripPotential, base: &BaseSystem, tag: GroupTag) -> Result<EnergyFamily> {
    check_tag(v, tag)?;
    base.validate()?;
    let pot = v.clone();
    Ok(EnergyFamily {
        base: base.clone(),
        d: v.d,
        tag,
        potential: Arc::new(move |x| pot.at(x)),
        e_ref: -2.0 - potential_bound(v, base)? - 1.0,
    })
}

/// Largest `||v(x)||` over a periodic orbit or over sampled points.
pub fn potential_bound(v: &StripPotential, base: &BaseSystem) -> Result<f64> {
    let pts = base.sample_points(64, 0, 0, 0);
    let mut bound: f64 = 0.0;
    for x in &pts {
        bound = bound.max(linalg::op_norm(&v.at(x)?));
    }
    if let BaseSystem::FiniteShift { weights } = base {
        for s in 0..weights.len() {
            let w = BasePoint::Word { symbols: Arc::new(vec![s]), pos: 0 };
            bound = bound.max(linalg::op_norm(&v.at(&w)?));
        }
    }
    Ok(bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub e: f64,
    pub top: f64,
    pub ld: f64,
    /// `L_d`, the smallest nonnegative exponent.
    pub bottom: f64,
    /// Width of the cell this point stands for.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyScan {
    pub range: (f64, f64),
    pub threshold: f64,
    pub points: Vec<EnergyPoint>,
    /// Measure of energies with `L <= threshold`.
    pub m_estimate: f64,
    pub m_uncertainty: f64,
    /// Measure of energies where some exponent vanishes (`L_d <= threshold`).
    pub m_any_zero: f64,
    /// Zero-set intervals of the top exponent, merged from flagged cells.
    pub zero_intervals: Vec<(f64, f64)>,
    /// Whether the window contains `[-2 - ||v||, 2 + ||v||]`.
    pub window_covers_spectrum: bool,
}

fn exponents_at(v: &StripPotential, base: &BaseSystem, tag: GroupTag, e: f64, spec: SampleSpec) -> Result<(f64, f64, f64)> {
    let a = transfer_cocycle(v, c(e, 0.0), base, tag)?;
    let rep = cocycle_engine::lyapunov_spectrum(&a, spec, LyapunovMethod::Auto)?;
    let d = v.d;
    Ok((rep.top(), rep.ld(), rep.exponents[d - 1]))
}

/// Scans `L`, `L^d` and `L_d` on a cell-centred grid; cells whose flag differs from a
/// neighbour are split once at their quarter points.
pub fn energy_scan(v: &StripPotential, base: &BaseSystem, tag: GroupTag, range: (f64, f64), grid: usize, spec: SampleSpec, threshold: f64) -> Result<EnergyScan> {
    let (a, b) = range;
    if !(b > a) || grid == 0 {
        return Err(Error::Input("energy range must be increasing with a positive grid".into()));
    }
    let h = (b - a) / grid as f64;
    let centres: Vec<f64> = (0..grid).map(|i| a + (i as f64 + 0.5) * h).collect();
    let coarse: Vec<(f64, f64, f64)> = centres.par_iter().map(|&e| exponents_at(v, base, tag, e, spec)).collect::<Result<_>>()?;
    let top_flag: Vec<bool> = coarse.iter().map(|r| r.0 <= threshold).collect();
    let any_flag: Vec<bool> = coarse.iter().map(|r| r.2 <= threshold).collect();
    let edge = |f: &[bool], i: usize| (i > 0 && f[i - 1] != f[i]) || (i + 1 < grid && f[i + 1] != f[i]);
    let top_edge: Vec<bool> = (0..grid).map(|i| edge(&top_flag, i)).collect();
    let any_edge: Vec<bool> = (0..grid).map(|i| edge(&any_flag, i)).collect();
    let refine: Vec<usize> = (0..grid).filter(|&i| top_edge[i] || any_edge[i]).collect();
    let fine: Vec<[(f64, f64, f64); 2]> = refine
        .par_iter()
        .map(|&i| {
            let e0 = centres[i] - 0.25 * h;
            let e1 = centres[i] + 0.25 * h;
            Ok([exponents_at(v, base, tag, e0, spec)?, exponents_at(v, base, tag, e1, spec)?])
        })
        .collect::<Result<_>>()?;
    // each measure uses the half cells only where its own flag changes
    let mut points = Vec::new();
    let mut m_estimate = 0.0;
    let mut m_any_zero = 0.0;
    let mut k = 0;
    for i in 0..grid {
        let halves = if top_edge[i] || any_edge[i] {
            k += 1;
            Some(&fine[k - 1])
        } else {
            None
        };
        let r = &coarse[i];
        match halves {
            Some(hv) => {
                for (j, q) in hv.iter().enumerate() {
                    let e = centres[i] + if j == 0 { -0.25 * h } else { 0.25 * h };
                    points.push(EnergyPoint { e, top: q.0, ld: q.1, bottom: q.2, width: 0.5 * h });
                }
                let tops = if top_edge[i] { hv.iter().filter(|q| q.0 <= threshold).count() as f64 * 0.5 * h } else if top_flag[i] { h } else { 0.0 };
                let anys = if any_edge[i] { hv.iter().filter(|q| q.2 <= threshold).count() as f64 * 0.5 * h } else if any_flag[i] { h } else { 0.0 };
                m_estimate += tops;
                m_any_zero += anys;
            }
            None => {
                points.push(EnergyPoint { e: centres[i], top: r.0, ld: r.1, bottom: r.2, width: h });
                if top_flag[i] {
                    m_estimate += h;
                }
                if any_flag[i] {
                    m_any_zero += h;
                }
            }
        }
    }
    let mut zero_intervals: Vec<(f64, f64)> = Vec::new();
    let mut transitions = 0;
    let mut prev: Option<bool> = None;
    for p in &points {
        let z = p.top <= threshold;
        if let Some(q) = prev {
            if q != z {
                transitions += 1;
            }
        }
        prev = Some(z);
        if z {
            let (lo, hi) = (p.e - 0.5 * p.width, p.e + 0.5 * p.width);
            match zero_intervals.last_mut() {
                Some(last) if (last.1 - lo).abs() < 1e-12 * (1.0 + lo.abs()) => last.1 = hi,
                _ => zero_intervals.push((lo, hi)),
            }
        }
    }
    let vb = potential_bound(v, base)?;
    Ok(EnergyScan {
        range,
        threshold,
        points,
        m_estimate,
        m_uncertainty: transitions as f64 * 0.25 * h,
        m_any_zero,
        zero_intervals,
        window_covers_spectrum: a <= -2.0 - vb && b >= 2.0 + vb,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Largest eigenvalue of the Hermitian part of `J (dB/dE) B^{-1}`; negative for monotone families.
    pub max_eigenvalue: f64,
    /// Distance to the closed form `-[[I, -a], [-a^*, I + a^* a]]` with `a = E - v(f x)`.
    pub closed_form_residual: f64,
    pub negative_definite: bool,
}

/// Monotonicity in `E` of the two-step transfer product `B = A(f x) A(x)`.
pub fn e_monotonicity_check(v: &StripPotential, base: &BaseSystem, x: &BasePoint, e: f64, h: f64) -> Result<MonotonicityReport> {
    if h <= 0.0 {
        return Err(Error::Input("step must be positive".into()));
    }
    let d = v.d;
    let fx = base.step(x, 1)?;
    let v0 = v.at(x)?;
    let v1 = v.at(&fx)?;
    let b = |en: f64| transfer_matrix(&v1, c(en, 0.0)) * transfer_matrix(&v0, c(en, 0.0));
    let db = (b(e + h) - b(e - h)) / c(2.0 * h, 0.0);
    let w = linalg::j_matrix(d) * db * linalg::inverse(&b(e))?;
    let herm = linalg::hermitian_part(&w);
    let ev = linalg::hermitian_eigenvalues(&herm);
    let max_eigenvalue = ev[ev.len() - 1];
    let id = linalg::eye(d);
    let a = &id * c(e, 0.0) - &v1;
    let closed = -linalg::block2(&id, &(-&a), &(-a.adjoint()), &(&id + a.adjoint() * &a));
    Ok(MonotonicityReport {
        max_eigenvalue,
        closed_form_residual: linalg::op_norm(&(herm - closed)),
        negative_definite: max_eigenvalue < 0.0,
    })
}
