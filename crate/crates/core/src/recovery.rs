//! Joint-sparse recovery of each segment system `Z = A X_bb` and reassembly of
//! the base-rate signal.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dpss::{self, DpssCache};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mc_sampler::{self, McConfig, MeasurementMatrix};
use crate::preprocessing::SegmentMatrix;
use crate::signal::ComplexSignal;
use crate::CMatrix;

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;

/// Relative eigenvalue threshold used to estimate the MUSIC signal rank.
pub const DEFAULT_MUSIC_EIG_THRESHOLD: f64 = 1e-6;

/// Row energy, relative to the strongest row, above which a row counts as nonzero.
pub const DEFAULT_ROW_THRESHOLD: f64 = 1e-8;

/// Active slice indices, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportSet {
    pub indices: Vec<usize>,
    pub period: usize,
}

impl SupportSet {
    pub fn new(mut indices: Vec<usize>, period: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= period) {
            return Err(Error::invalid(format!("slice index {bad} outside 0..{period}")));
        }
        Ok(Self { indices, period })
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Spectral occupancy `p / L`.
    pub fn occupancy(&self) -> f64 {
        if self.period == 0 {
            0.0
        } else {
            self.indices.len() as f64 / self.period as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverId {
    Somp,
    Music,
    /// Least squares on a support supplied by the caller.
    Known,
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverId::Somp => "somp",
            SolverId::Music => "music",
            SolverId::Known => "known",
        })
    }
}

impl FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "somp" => Ok(SolverId::Somp),
            "music" => Ok(SolverId::Music),
            "known" => Ok(SolverId::Known),
            other => Err(Error::invalid(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSolution {
    pub support: SupportSet,
    /// `L x r`, zero off the support.
    pub x_bb: CMatrix,
    /// `||Z - A x_bb||_F`.
    pub residual_norm: f64,
    pub solver_id: SolverId,
    pub wall_time_seconds: f64,
    pub segment_index: usize,
    pub start_index: usize,
    pub rank_z: usize,
    /// MUSIC only: the sample covariance had rank below the requested `p`.
    pub degenerate_covariance: bool,
}

impl SegmentSolution {
    pub fn width(&self) -> usize {
        self.x_bb.ncols()
    }
}

fn check_shapes(z: &CMatrix, a: &MeasurementMatrix) -> Result<()> {
    if z.nrows() != a.entries.nrows() {
        return Err(Error::invalid(format!(
            "Z has {} rows but A has {}",
            z.nrows(),
            a.entries.nrows()
        )));
    }
    Ok(())
}

fn solution(
    support: SupportSet,
    x_bb: CMatrix,
    z: &CMatrix,
    a: &MeasurementMatrix,
    solver_id: SolverId,
) -> SegmentSolution {
    let residual_norm = linalg::frobenius(&(z - &a.entries * &x_bb));
    SegmentSolution {
        support,
        x_bb,
        residual_norm,
        solver_id,
        wall_time_seconds: 0.0,
        segment_index: 0,
        start_index: 0,
        rank_z: 0,
        degenerate_covariance: false,
    }
}

/// Least-squares coefficients `pinv(A_I) Z` scattered into an `L x r` matrix.
fn fit_on_support(z: &CMatrix, a: &MeasurementMatrix, support: &[usize]) -> Result<CMatrix> {
    let l = a.entries.ncols();
    let mut x = CMatrix::zeros(l, z.ncols());
    if support.is_empty() {
        return Ok(x);
    }
    let coeff = linalg::lstsq_full_rank(&a.columns(support), z).map_err(|_| Error::NumericalRank {
        support: support.to_vec(),
        segment: None,
    })?;
    for (row, &idx) in support.iter().enumerate() {
        x.set_row(idx, &coeff.row(row));
    }
    Ok(x)
}

pub fn least_squares_on_support(
    z: &CMatrix,
    a: &MeasurementMatrix,
    support: &SupportSet,
) -> Result<SegmentSolution> {
    check_shapes(z, a)?;
    let x = fit_on_support(z, a, &support.indices)?;
    Ok(solution(support.clone(), x, z, a, SolverId::Known))
}

/// Simultaneous orthogonal matching pursuit.
///
/// `max_sparsity` is capped at `q`. Stops once `||R||_F <= residual_tol ||Z||_F`.
pub fn somp_solve(
    z: &CMatrix,
    a: &MeasurementMatrix,
    max_sparsity: usize,
    residual_tol: f64,
) -> Result<SegmentSolution> {
    check_shapes(z, a)?;
    if !(residual_tol >= 0.0) {
        return Err(Error::invalid("residual tolerance must be nonnegative"));
    }
    let (q, l) = a.entries.shape();
    let z_norm = linalg::frobenius(z);
    let limit = max_sparsity.min(q);
    let a_adj = a.entries.adjoint();

    let mut support: Vec<usize> = Vec::new();
    let mut x = CMatrix::zeros(l, z.ncols());
    let mut residual = z.clone();
    let mut r_norm = z_norm;
    while support.len() < limit && r_norm > residual_tol * z_norm && r_norm > 0.0 {
        let corr = &a_adj * &residual;
        let mut best = None;
        let mut best_val = 0.0;
        for col in 0..l {
            if support.contains(&col) {
                continue;
            }
            let v = corr.row(col).norm_squared();
            if v > best_val {
                best_val = v;
                best = Some(col);
            }
        }
        // nothing left to explain in the span of the remaining columns
        let Some(col) = best.filter(|_| best_val.sqrt() > 1e-13 * z_norm * (q as f64).sqrt())
        else {
            break;
        };
        support.push(col);
        x = fit_on_support(z, a, &support)?;
        residual = z - &a.entries * &x;
        r_norm = linalg::frobenius(&residual);
    }
    Ok(solution(
        SupportSet::new(support, l)?,
        x,
        z,
        a,
        SolverId::Somp,
    ))
}

/// `Z Z^* / r`.
pub fn sample_covariance(z: &CMatrix) -> CMatrix {
    let r = z.ncols().max(1) as f64;
    (z * z.adjoint()).map(|v| v / r)
}

/// Number of covariance eigenvalues above `threshold * lambda_max`, capped at `q - 1`.
pub fn estimate_signal_rank(r_y: &CMatrix, threshold: f64) -> usize {
    let (values, _) = linalg::hermitian_eigen(r_y);
    let max = values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    let p = values.iter().filter(|&&v| v > threshold * max).count();
    p.min(r_y.nrows().saturating_sub(1))
}

/// Modified MUSIC support estimate from a `q x q` covariance.
///
/// Returns the `p` slices whose columns of `A` project least onto the noise
/// subspace, and whether the covariance rank fell below `p`. A column that is
/// linearly dependent on the ones already chosen is passed over for the next one.
pub fn music_support(r_y: &CMatrix, a: &MeasurementMatrix, p: usize) -> Result<(SupportSet, bool)> {
    let (q, l) = a.entries.shape();
    if r_y.shape() != (q, q) {
        return Err(Error::invalid(format!(
            "covariance is {}x{}, expected {q}x{q}",
            r_y.nrows(),
            r_y.ncols()
        )));
    }
    if p >= q {
        return Err(Error::invalid(format!("MUSIC needs p < q, got p = {p}, q = {q}")));
    }
    if p == 0 {
        return Ok((SupportSet::new(Vec::new(), l)?, false));
    }
    let (values, vectors) = linalg::hermitian_eigen(r_y);
    let max = values[0].max(0.0);
    let rank = values.iter().filter(|&&v| v > linalg::RANK_TOL * max).count();
    let noise = vectors.columns(p, q - p);
    let proj = noise.adjoint() * &a.entries;
    let mut scored: Vec<(f64, usize)> = (0..l).map(|c| (proj.column(c).norm(), c)).collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    // smallest projections first, skipping columns dependent on those already taken
    let mut indices: Vec<usize> = Vec::with_capacity(p);
    for &(_, c) in &scored {
        if indices.len() == p {
            break;
        }
        indices.push(c);
        if linalg::rank(&a.columns(&indices)) < indices.len() {
            indices.pop();
        }
    }
    Ok((SupportSet::new(indices, l)?, rank < p))
}

/// MUSIC support followed by least squares. `p = None` estimates the rank.
pub fn music_solve(z: &CMatrix, a: &MeasurementMatrix, p: Option<usize>) -> Result<SegmentSolution> {
    check_shapes(z, a)?;
    let r_y = sample_covariance(z);
    let p = p.unwrap_or_else(|| estimate_signal_rank(&r_y, DEFAULT_MUSIC_EIG_THRESHOLD));
    let (support, degenerate) = music_support(&r_y, a, p)?;
    let x = fit_on_support(z, a, &support.indices)?;
    let mut sol = solution(support, x, z, a, SolverId::Music);
    sol.degenerate_covariance = degenerate;
    Ok(sol)
}

/// Pluggable joint-sparse solver for one segment system.
pub trait MmvSolver: Sync {
    fn id(&self) -> SolverId;
    fn solve(&self, z: &CMatrix, a: &MeasurementMatrix) -> Result<SegmentSolution>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Somp {
    pub max_sparsity: usize,
    pub residual_tol: f64,
}

impl MmvSolver for Somp {
    fn id(&self) -> SolverId {
        SolverId::Somp
    }

    fn solve(&self, z: &CMatrix, a: &MeasurementMatrix) -> Result<SegmentSolution> {
        somp_solve(z, a, self.max_sparsity, self.residual_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Music {
    /// Signal-subspace dimension; estimated per segment when `None`.
    pub rank: Option<usize>,
}

impl MmvSolver for Music {
    fn id(&self) -> SolverId {
        SolverId::Music
    }

    fn solve(&self, z: &CMatrix, a: &MeasurementMatrix) -> Result<SegmentSolution> {
        music_solve(z, a, self.rank)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownSupport(pub SupportSet);

impl MmvSolver for KnownSupport {
    fn id(&self) -> SolverId {
        SolverId::Known
    }

    fn solve(&self, z: &CMatrix, a: &MeasurementMatrix) -> Result<SegmentSolution> {
        least_squares_on_support(z, a, &self.0)
    }
}

/// Optional DPSS reduction of each segment system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dictionary {
    None,
    /// `k_D = ceil(kd_factor * 2 N_D W_D)` with `N_D = r`, `W_D = 1 / (2L)`.
    Dpss { kd_factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub dictionary: Dictionary,
    /// Solve segments on the rayon pool. Sequential runs give cleaner timings.
    pub parallel: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            dictionary: Dictionary::None,
            parallel: true,
        }
    }
}

fn solve_segment(
    seg: &SegmentMatrix,
    a: &MeasurementMatrix,
    solver: &dyn MmvSolver,
    dictionary: Dictionary,
    cache: &DpssCache,
) -> Result<SegmentSolution> {
    let z = &seg.entries;
    let mut sol = match dictionary {
        Dictionary::None => {
            let t = Instant::now();
            let mut s = solver.solve(z, a)?;
            s.wall_time_seconds = t.elapsed().as_secs_f64();
            s
        }
        Dictionary::Dpss { kd_factor } => {
            let n_d = seg.width();
            let w_d = 1.0 / (2.0 * a.entries.ncols() as f64);
            let k_d = dpss::kept_count(n_d, w_d, kd_factor)?;
            let dict = cache.get_or_compute(n_d, w_d, k_d)?;
            let reduced = dpss::reduce(z, &dict)?;
            let t = Instant::now();
            let s = solver.solve(&reduced, a)?;
            let elapsed = t.elapsed().as_secs_f64();
            let x_bb = dpss::lift(&s.x_bb, &dict)?;
            let mut s = solution(s.support, x_bb, z, a, s.solver_id);
            s.wall_time_seconds = elapsed;
            s
        }
    };
    sol.segment_index = seg.segment_index;
    sol.start_index = seg.start_index;
    sol.rank_z = linalg::rank(z);
    Ok(sol)
}

/// Solve every segment; results are ordered by segment index.
pub fn recover_segments(
    segments: &[SegmentMatrix],
    a: &MeasurementMatrix,
    solver: &dyn MmvSolver,
    options: EngineOptions,
    cache: &DpssCache,
) -> Result<Vec<SegmentSolution>> {
    let run = |seg: &SegmentMatrix| {
        solve_segment(seg, a, solver, options.dictionary, cache)
            .map_err(|e| e.in_segment(seg.segment_index))
    };
    let mut out: Vec<SegmentSolution> = if options.parallel {
        segments.par_iter().map(run).collect::<Result<_>>()?
    } else {
        segments.iter().map(run).collect::<Result<_>>()?
    };
    out.sort_by_key(|s| s.segment_index);
    Ok(out)
}

/// `x(k) = sum_l x_l(k) exp(j 2 pi l k / L)` over consecutive segments, with
/// `k` the global base-rate index.
pub fn reassemble(solutions: &[SegmentSolution], config: &McConfig) -> Result<ComplexSignal> {
    let first = solutions
        .first()
        .ok_or_else(|| Error::invalid("no segments to reassemble"))?;
    let l = config.period;
    let mut expected = first.start_index;
    let mut out = Vec::new();
    for s in solutions {
        if s.start_index != expected {
            return Err(Error::invalid(format!(
                "segment {} starts at {} but {expected} was expected",
                s.segment_index, s.start_index
            )));
        }
        if s.x_bb.nrows() != l {
            return Err(Error::invalid("solution row count differs from L"));
        }
        for j in 0..s.width() {
            let k = s.start_index + j;
            let v: Complex64 = s
                .support
                .indices
                .iter()
                .map(|&row| {
                    let e = ((row * k) % l) as f64 / l as f64;
                    s.x_bb[(row, j)] * Complex64::from_polar(1.0, 2.0 * PI * e)
                })
                .sum();
            out.push(v);
        }
        expected += s.width();
    }
    ComplexSignal::new(
        out,
        config.base_interval_seconds,
        first.start_index as f64 * config.base_interval_seconds,
    )
}

/// Rows of `x` whose energy exceeds `rel_threshold` times the largest row energy.
pub fn row_support(x: &CMatrix, rel_threshold: f64) -> Vec<usize> {
    let energy: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
    let max = energy.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    (0..energy.len())
        .filter(|&i| energy[i] > rel_threshold * max)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub rank_z: usize,
    /// Exact spark when the exhaustive search ran.
    pub spark: Option<usize>,
    /// Spark used in `bound_rhs`: exact when known, else the coherence lower bound.
    pub spark_used: usize,
    pub spark_verified: bool,
    /// `spark(A) = q + 1`; taken as true (and flagged unverified) at large `L`.
    pub spark_hypothesis_ok: bool,
    /// `(spark(A) + rank(Z) - 1) / 2`.
    pub bound_rhs: f64,
    /// `8N - rank(Z)`.
    pub corollary_threshold: i64,
    pub satisfied: bool,
}

/// Largest row sparsity admitted by the joint-sparse uniqueness bound.
pub fn mmv_bound(spark: usize, rank: usize) -> f64 {
    (spark + rank) as f64 / 2.0 - 0.5
}

/// The worst-case segment sparsity `4N` strictly below the bound with
/// `spark = q + 1`, i.e. `4N < (q + rank) / 2`.
pub fn worst_case_unique(n: usize, q: usize, rank: usize) -> bool {
    ((4 * n) as f64) < mmv_bound(q + 1, rank)
}

pub fn uniqueness_report(z: &CMatrix, a: &MeasurementMatrix, n: usize) -> UniquenessReport {
    let (q, l) = a.entries.shape();
    let rank_z = linalg::rank(z);
    let (spark, verified) = if l <= mc_sampler::MAX_SPARK_PERIOD {
        (mc_sampler::spark(a).ok(), true)
    } else {
        (None, false)
    };
    let spark_used = spark.unwrap_or_else(|| mc_sampler::coherence_spark_bound(a));
    let spark_hypothesis_ok = spark.is_none_or(|s| s == q + 1);
    let corollary_threshold = 8 * n as i64 - rank_z as i64;
    UniquenessReport {
        rank_z,
        spark,
        spark_used,
        spark_verified: verified,
        spark_hypothesis_ok,
        bound_rhs: mmv_bound(spark_used, rank_z),
        corollary_threshold,
        satisfied: (q as i64) > corollary_threshold && spark_hypothesis_ok,
    }
}
