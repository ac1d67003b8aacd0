//! Seeded synthetic data and closed-form oracles.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, Cholesky};
use crate::regularization::{clamp_nonnegative, Penalty};
use crate::solvers::{FactorModel, Hyper};
use crate::rng;
use crate::spectral::{dft_rows, idft_rows, minkowski_subgradient};
use crate::tensor::{check_xi, stack_auxiliary, DataMatrix};

/// Two-tone generator: `X` carries both cycles, each auxiliary one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of spatial locations.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Series length.
    #[serde(default = "default_t")]
    pub t: usize,
    /// Cycle counts over the record, one auxiliary matrix per entry.
    #[serde(default = "default_freqs")]
    pub freqs: Vec<usize>,
    /// Noise standard deviation of the auxiliary data.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_d() -> usize {
    64
}

fn default_t() -> usize {
    163
}

fn default_freqs() -> Vec<usize> {
    vec![14, 6]
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: default_d(),
            t: default_t(),
            freqs: default_freqs(),
            sigma: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t == 0 {
            return Err(Error::InvalidArgument("d and T must be positive".into()));
        }
        if self.freqs.is_empty() {
            return Err(Error::InvalidArgument("at least one frequency is required".into()));
        }
        if let Some(f) = self.freqs.iter().find(|&&f| 2 * f >= self.t) {
            return Err(Error::InvalidArgument(format!(
                "frequency {f} is not below T/2 = {}",
                self.t as f64 / 2.0
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Output of [`gen_example1`]; `aux[p]` follows the cycle `freqs[p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example1 {
    pub x: DataMatrix,
    pub aux: Vec<DataMatrix>,
}

impl Example1 {
    /// Auxiliaries stacked into one `(d·S) × T` matrix.
    pub fn y(&self) -> DataMatrix {
        stack_auxiliary(&self.aux).expect("auxiliaries share their column count")
    }
}

fn cosine(t: usize, k: usize) -> Array1<f64> {
    Array1::from_shape_fn(t, |j| (2.0 * PI * (k * j) as f64 / t as f64).cos())
}

/// `X[i,j] = p_i Σ_f cos(2πfj/T) + N(0,1)`, `Y_f[i,j] = q_{f,i} cos(2πfj/T) + N(0,σ)`
/// with profiles `p, q` uniform on `[0,1)`.
pub fn gen_example1(spec: &SyntheticSpec) -> Result<Example1> {
    spec.validate()?;
    let (d, t) = (spec.d, spec.t);
    let tones: Vec<Array1<f64>> = spec.freqs.iter().map(|&f| cosine(t, f)).collect();
    let total = tones.iter().fold(Array1::<f64>::zeros(t), |acc, c| acc + c);

    let mut g = rng::stream(spec.seed, rng::stream_id("example1/X"));
    let profile: Vec<f64> = (0..d).map(|_| g.random::<f64>()).collect();
    let x = Array2::from_shape_fn((d, t), |(i, j)| {
        let e: f64 = StandardNormal.sample(&mut g);
        profile[i] * total[j] + e
    });

    let mut aux = Vec::with_capacity(tones.len());
    for (p, tone) in tones.iter().enumerate() {
        let mut g = rng::stream(spec.seed, rng::stream_id(&format!("example1/Y{p}")));
        let q: Vec<f64> = (0..d).map(|_| g.random::<f64>()).collect();
        let y = Array2::from_shape_fn((d, t), |(i, j)| {
            let e = if spec.sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut g);
                spec.sigma * z
            } else {
                0.0
            };
            q[i] * tone[j] + e
        });
        aux.push(y);
    }
    Ok(Example1 { x, aux })
}

/// The unconstrained code `H = (W̄ᵀW̄)⁻¹W̄ᵀX̄` split as
/// `direct = x_driven + mismatch`.
///
/// `x_driven[k,j] = Σ_s (M[k,s] + √ξ Σ_p M[k,d+pd+s]) X[s,j]` and
/// `mismatch` collects `√ξ M[k,d+pd+s]` against the inverse transform of
/// `Ŷ_p − X̂`, where `M = (W̄ᵀW̄)⁻¹W̄ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormCode {
    pub direct: DataMatrix,
    pub x_driven: DataMatrix,
    pub mismatch: DataMatrix,
}

/// Closed-form code for `X̄ = [X; √ξY_0; …; √ξY_{S−1}]`, `W̄ = [W; √ξW']`,
/// where `W'` stacks the `S` auxiliary dictionaries, each `d × r`.
pub fn closed_form_code(w: &DataMatrix, wp: &DataMatrix, x: &DataMatrix, ys: &[DataMatrix], xi: f64) -> Result<ClosedFormCode> {
    check_xi(xi)?;
    let (d, t) = x.dim();
    let r = w.ncols();
    let s_aux = ys.len();
    if w.nrows() != d || wp.dim() != (d * s_aux, r) {
        return Err(Error::Dimension(format!(
            "W {:?} and W' {:?} do not match d = {d}, S = {s_aux}, r = {r}",
            w.dim(),
            wp.dim()
        )));
    }
    if let Some((p, y)) = ys.iter().enumerate().find(|(_, y)| y.dim() != (d, t)) {
        return Err(Error::Dimension(format!("Y_{p} is {:?}, expected {:?}", y.dim(), (d, t))));
    }
    let rt = xi.sqrt();
    let mut wbar = Array2::<f64>::zeros((d * (1 + s_aux), r));
    wbar.slice_mut(s![..d, ..]).assign(w);
    wbar.slice_mut(s![d.., ..]).assign(&(wp * rt));
    let mut xbar = Array2::<f64>::zeros((d * (1 + s_aux), t));
    xbar.slice_mut(s![..d, ..]).assign(x);
    for (p, y) in ys.iter().enumerate() {
        xbar.slice_mut(s![d + p * d..d + (p + 1) * d, ..]).assign(&(y * rt));
    }

    let chol = Cholesky::factor(wbar.t().dot(&wbar).view())?;
    let m = chol.solve(wbar.t());
    let direct = m.dot(&xbar);

    let mut combined = m.slice(s![.., ..d]).to_owned();
    for p in 0..s_aux {
        combined += &(&m.slice(s![.., d + p * d..d + (p + 1) * d]) * rt);
    }
    let x_driven = combined.dot(x);

    let x_hat = dft_rows(x);
    let mut mismatch = Array2::<f64>::zeros((r, t));
    for (p, y) in ys.iter().enumerate() {
        let mut diff = dft_rows(y);
        *diff.values_mut() -= x_hat.values();
        let back = idft_rows(&diff)?;
        let block = &m.slice(s![.., d + p * d..d + (p + 1) * d]) * rt;
        mismatch += &block.dot(&back);
    }
    Ok(ClosedFormCode { direct, x_driven, mismatch })
}

/// Update rule for [`norm_descent_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentNorm {
    /// `H ← max{0, H − αH}`
    Frobenius,
    /// `H ← max{0, H − α sign(H)}`
    L1,
    /// `H ← max{0, H − α ∂‖Ĥ‖_{1,M}}`
    Minkowski,
}

impl DescentNorm {
    /// Step sizes used in the three-norm comparison.
    pub fn default_step(self) -> f64 {
        match self {
            DescentNorm::Frobenius | DescentNorm::L1 => 0.1,
            DescentNorm::Minkowski => 0.5,
        }
    }
}

/// Trajectory of a norm-descent run, `trajectory[0]` being the start.
#[derive(Debug, Clone, PartialEq)]
pub struct NormDescent {
    pub trajectory: Vec<DataMatrix>,
}

impl NormDescent {
    pub fn last(&self) -> &DataMatrix {
        self.trajectory.last().expect("trajectory holds the start")
    }

    pub fn steps(&self) -> usize {
        self.trajectory.len() - 1
    }
}

/// Projected (sub)gradient descent on a norm of `H` until `‖H‖_F < threshold`.
pub fn norm_descent_experiment(
    h0: &DataMatrix,
    norm: DescentNorm,
    step: f64,
    threshold: f64,
    max_steps: usize,
) -> Result<NormDescent> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut h = h0.clone();
    let mut trajectory = vec![h.clone()];
    while frobenius(h.view()) >= threshold {
        if trajectory.len() > max_steps {
            return Err(Error::NoConvergence(format!(
                "‖H‖_F still {:.4} after {max_steps} steps",
                frobenius(h.view())
            )));
        }
        let g = match norm {
            DescentNorm::Frobenius => h.clone(),
            DescentNorm::L1 => h.mapv(|v| if v == 0.0 { 0.0 } else { v.signum() }),
            DescentNorm::Minkowski => minkowski_subgradient(&h),
        };
        h = &h - &(g * step);
        clamp_nonnegative(&mut h);
        trajectory.push(h.clone());
    }
    Ok(NormDescent { trajectory })
}

/// Start of the three-norm comparison: `cos(2π·5k/T) + U[0,1)` as one row.
pub fn three_norms_start(t: usize, seed: u64) -> DataMatrix {
    let mut g = rng::stream(seed, rng::stream_id("three-norms"));
    Array2::from_shape_fn((1, t), |(_, k)| (10.0 * PI * k as f64 / t as f64).cos() + g.random::<f64>())
}

/// Seasonal low-rank generator used as a stand-in for monthly records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub d: usize,
    /// Number of auxiliary variables `S`.
    pub aux: usize,
    /// Training length `T`.
    pub t: usize,
    /// Extra columns beyond `T` covered by the auxiliary data.
    pub horizon: usize,
    pub rank: usize,
    /// Noise standard deviation in both data and auxiliaries.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SeasonalSpec {
    fn default() -> Self {
        Self { d: 30, aux: 3, t: 132, horizon: 31, rank: 3, noise: 0.1, seed: 0 }
    }
}

/// Data from [`gen_seasonal`]: `x_full` spans `T + horizon` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Seasonal {
    pub x_full: DataMatrix,
    pub y_full: DataMatrix,
    pub w: DataMatrix,
    pub wp: DataMatrix,
    pub h: DataMatrix,
}

/// Latent series `1 + a·cos(2π t/12 + φ) + b·cos(2π t/6 + φ')` (period in
/// columns), spatial patterns uniform on `[0,1)`, Gaussian noise everywhere.
pub fn gen_seasonal(spec: &SeasonalSpec) -> Result<Seasonal> {
    if spec.d == 0 || spec.aux == 0 || spec.t == 0 || spec.rank == 0 {
        return Err(Error::InvalidArgument("seasonal generator needs positive sizes".into()));
    }
    let total = spec.t + spec.horizon;
    let mut g = rng::stream(spec.seed, rng::stream_id("seasonal/latent"));
    let mut h = Array2::<f64>::zeros((spec.rank, total));
    for s in 0..spec.rank {
        let a = 0.4 + 0.5 * g.random::<f64>();
        let b = 0.3 * g.random::<f64>();
        let phi = 2.0 * PI * g.random::<f64>();
        let psi = 2.0 * PI * g.random::<f64>();
        for j in 0..total {
            let tj = j as f64;
            h[[s, j]] = 1.0 + a * (2.0 * PI * tj / 12.0 + phi).cos() + b * (2.0 * PI * tj / 6.0 + psi).cos();
        }
    }
    let mut gw = rng::stream(spec.seed, rng::stream_id("seasonal/dictionaries"));
    let w = Array2::from_shape_fn((spec.d, spec.rank), |_| gw.random::<f64>());
    let wp = Array2::from_shape_fn((spec.d * spec.aux, spec.rank), |_| gw.random::<f64>());
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut gn = rng::stream(spec.seed, rng::stream_id("seasonal/noise"));
    let x_full = w.dot(&h) + Array2::from_shape_fn((spec.d, total), |_| noise.sample(&mut gn));
    let y_full = wp.dot(&h) + Array2::from_shape_fn((spec.d * spec.aux, total), |_| noise.sample(&mut gn));
    Ok(Seasonal { x_full, y_full, w, wp, h })
}

/// A trained-looking model whose dictionary carries one spurious atom.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseAtomFixture {
    pub model: FactorModel,
    pub x_full: DataMatrix,
    pub y_full: DataMatrix,
    pub t_train: usize,
    /// Spatial grid for `d = 30`.
    pub grid: (usize, usize),
    /// Column of `W` holding the spurious atom.
    pub noise_atom: usize,
}

/// Noise-free seasonal data plus an atom that lives only in the auxiliary
/// record: `Y_full` gets `w'_n ⊗ h_n` with `w'_n ⊥ span W'`, `X_full` does
/// not, and the model's `W` predicts `w_n ⊗ h_n` for it. The atom index
/// rotates with the seed.
pub fn noise_atom_fixture(seed: u64) -> Result<NoiseAtomFixture> {
    let spec = SeasonalSpec { noise: 0.0, seed, ..SeasonalSpec::default() };
    let clean = gen_seasonal(&spec)?;
    let total = spec.t + spec.horizon;
    let mut g = rng::stream(seed, rng::stream_id("noise-atom"));
    let h_noise = Array1::from_shape_fn(total, |_| 0.6 * g.random::<f64>());
    let w_noise = Array1::from_shape_fn(spec.d, |_| 0.5 + g.random::<f64>());
    let raw = Array1::from_shape_fn(spec.d * spec.aux, |_| -> f64 { StandardNormal.sample(&mut g) });
    let gram = Cholesky::factor(clean.wp.t().dot(&clean.wp).view())?;
    let coef = gram.solve(clean.wp.t().dot(&raw).insert_axis(ndarray::Axis(1)).view());
    let mut wp_noise = &raw - &clean.wp.dot(&coef).column(0);
    let scale = frobenius(clean.wp.view()) / (spec.rank as f64).sqrt();
    let n = wp_noise.dot(&wp_noise).sqrt();
    wp_noise *= scale / n;

    let y_full = &clean.y_full + &outer(&wp_noise, &h_noise);
    let atom = (seed % (spec.rank as u64 + 1)) as usize;
    let w = insert_column(&clean.w, atom, &w_noise);
    let wp = insert_column(&clean.wp, atom, &wp_noise);
    let mut h = Array2::zeros((spec.rank + 1, spec.t));
    for (k, src) in (0..=spec.rank).filter(|&k| k != atom).zip(0..spec.rank) {
        h.row_mut(k).assign(&clean.h.slice(s![src, ..spec.t]));
    }
    h.row_mut(atom).assign(&h_noise.slice(s![..spec.t]));
    let hyper = Hyper {
        lambda_w: 0.0,
        lambda_wp: 0.0,
        ..Hyper::new(spec.rank + 1, 1.0, Penalty::Ridge { lambda: 0.0 })
    };
    Ok(NoiseAtomFixture {
        model: FactorModel { w, wp, h, hyper },
        x_full: clean.x_full,
        y_full,
        t_train: spec.t,
        grid: (5, 6),
        noise_atom: atom,
    })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> DataMatrix {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn insert_column(m: &DataMatrix, at: usize, col: &Array1<f64>) -> DataMatrix {
    let mut out = Array2::zeros((m.nrows(), m.ncols() + 1));
    for (k, src) in (0..out.ncols()).filter(|&k| k != at).zip(0..m.ncols()) {
        out.column_mut(k).assign(&m.column(src));
    }
    out.column_mut(at).assign(col);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_sq;
    use crate::spectral::dft_rows;

    fn rand_matrix(seed: u64, r: usize, c: usize) -> DataMatrix {
        let mut g = rng::stream(seed, 12);
        Array2::from_shape_fn((r, c), |_| g.random_range(-1.0..1.0))
    }

    fn noiseless() -> SyntheticSpec {
        SyntheticSpec { d: 12, seed: 4, ..SyntheticSpec::default() }
    }

    #[test]
    fn auxiliaries_are_rank_one_cosines() {
        let ex = gen_example1(&noiseless()).unwrap();
        let c = cosine(163, 14);
        for row in ex.aux[0].rows() {
            let scale = row[0];
            assert!(row.iter().zip(c.iter()).all(|(a, b)| (a - scale * b).abs() < 1e-12));
        }
    }

    #[test]
    fn auxiliary_spectra_have_exact_support() {
        let ex = gen_example1(&noiseless()).unwrap();
        for (p, k) in [(0usize, 14usize), (1, 6)] {
            let spec = dft_rows(&ex.aux[p]);
            for row in spec.values().rows() {
                let scale = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (l, z) in row.iter().enumerate() {
                    if l != k && l != 163 - k {
                        assert!(z.norm() <= 1e-10 * scale.max(1.0), "Y{p} leaks at {l}");
                    }
                }
            }
        }
    }

    #[test]
    fn noiseless_signal_peaks_at_both_tones() {
        let spec = noiseless();
        let ex = gen_example1(&spec).unwrap();
        let mut g = rng::stream(spec.seed, rng::stream_id("example1/X"));
        let profile: Vec<f64> = (0..spec.d).map(|_| g.random::<f64>()).collect();
        let clean = Array2::from_shape_fn((spec.d, 163), |(i, j)| profile[i] * (cosine(163, 14)[j] + cosine(163, 6)[j]));
        assert!(frobenius_sq((&ex.x - &clean).view()) / (spec.d * 163) as f64 > 0.5);
        let power = dft_rows(&clean).power();
        for row in power.rows() {
            let mut order: Vec<usize> = (0..163).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let mut top: Vec<usize> = order[..4].to_vec();
            top.sort_unstable();
            assert_eq!(top, vec![6, 14, 149, 157]);
        }
    }

    #[test]
    fn generator_is_reproducible() {
        let spec = SyntheticSpec { sigma: 1.5, ..noiseless() };
        assert_eq!(gen_example1(&spec).unwrap(), gen_example1(&spec).unwrap());
        let other = SyntheticSpec { seed: 5, ..spec.clone() };
        assert_ne!(gen_example1(&spec).unwrap().x, gen_example1(&other).unwrap().x);
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec { freqs: vec![], ..noiseless() }.validate().is_err());
        assert!(SyntheticSpec { freqs: vec![82], ..noiseless() }.validate().is_err());
        assert!(SyntheticSpec { sigma: -1.0, ..noiseless() }.validate().is_err());
    }

    fn instance(seed: u64, d: usize, t: usize, r: usize, s_aux: usize) -> (DataMatrix, DataMatrix, DataMatrix, Vec<DataMatrix>) {
        (
            rand_matrix(seed, d, r),
            rand_matrix(seed + 1, d * s_aux, r),
            rand_matrix(seed + 2, d, t),
            (0..s_aux).map(|p| rand_matrix(seed + 3 + p as u64, d, t)).collect(),
        )
    }

    fn normal_equation(w: &DataMatrix, wp: &DataMatrix, x: &DataMatrix, ys: &[DataMatrix], xi: f64) -> DataMatrix {
        let wbar = ndarray::concatenate![ndarray::Axis(0), *w, wp * xi.sqrt()];
        let mut parts = vec![x.clone()];
        parts.extend(ys.iter().map(|y| y * xi.sqrt()));
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let xbar = ndarray::concatenate(ndarray::Axis(0), &views).unwrap();
        let g = wbar.t().dot(&wbar);
        let rhs = wbar.t().dot(&xbar);
        Cholesky::factor(g.view()).unwrap().solve(rhs.view())
    }

    #[test]
    fn decomposition_sums_to_direct_solve() {
        for seed in 0..10 {
            let (w, wp, x, ys) = instance(seed * 10, 5, 11, 2, 2);
            let c = closed_form_code(&w, &wp, &x, &ys, 2.5).unwrap();
            let oracle = normal_equation(&w, &wp, &x, &ys, 2.5);
            assert!((&c.direct - &oracle).iter().all(|v| v.abs() < 1e-10));
            let sum = &c.x_driven + &c.mismatch;
            assert!((&sum - &c.direct).iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn mismatch_vanishes_for_identical_auxiliary() {
        let (w, _, x, _) = instance(3, 6, 9, 2, 1);
        let c = closed_form_code(&w, &w, &x, &[x.clone()], 4.0).unwrap();
        assert!(c.mismatch.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn zero_weight_gives_unsupervised_code() {
        let (w, wp, x, ys) = instance(7, 5, 8, 2, 2);
        let c = closed_form_code(&w, &wp, &x, &ys, 0.0).unwrap();
        let plain = Cholesky::factor(w.t().dot(&w).view()).unwrap().solve(w.t().dot(&x).view());
        assert!((&c.direct - &plain).iter().all(|v| v.abs() < 1e-10));
        assert!(c.mismatch.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn closed_form_rejects_singular_and_misshaped() {
        let (w, wp, x, ys) = instance(8, 4, 6, 2, 1);
        let dup = ndarray::concatenate![ndarray::Axis(1), w.column(0).insert_axis(ndarray::Axis(1)), w.column(0).insert_axis(ndarray::Axis(1))];
        let dupp = ndarray::concatenate![ndarray::Axis(1), wp.column(0).insert_axis(ndarray::Axis(1)), wp.column(0).insert_axis(ndarray::Axis(1))];
        assert!(matches!(closed_form_code(&dup, &dupp, &x, &ys, 1.0), Err(Error::Singular { .. })));
        assert!(closed_form_code(&w, &wp, &x, &[x.clone(), x.clone()], 1.0).is_err());
    }

    #[test]
    fn zero_start_returns_immediately() {
        let run = norm_descent_experiment(&Array2::zeros((1, 30)), DescentNorm::L1, 0.1, 3.0, 10).unwrap();
        assert_eq!(run.steps(), 0);
    }

    #[test]
    fn frobenius_rule_decays_geometrically() {
        let h0 = three_norms_start(30, 1).mapv(|v| v.abs() + 0.1);
        let run = norm_descent_experiment(&h0, DescentNorm::Frobenius, 0.1, 3.0, 1000).unwrap();
        for (j, h) in run.trajectory.iter().enumerate() {
            let want = &h0 * 0.9f64.powi(j as i32);
            assert!((h - &want).iter().all(|v| v.abs() < 1e-12));
        }
        assert!(frobenius(run.last().view()) < 3.0);
    }

    #[test]
    fn trajectories_stay_nonnegative() {
        for norm in [DescentNorm::Frobenius, DescentNorm::L1, DescentNorm::Minkowski] {
            let run = norm_descent_experiment(&three_norms_start(30, 2), norm, norm.default_step(), 3.0, 10_000).unwrap();
            assert!(run.trajectory.iter().skip(1).all(|h| h.iter().all(|v| *v >= 0.0)));
            assert!(frobenius(run.last().view()) < 3.0);
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let h0 = Array2::from_elem((1, 30), 5.0);
        assert!(matches!(
            norm_descent_experiment(&h0, DescentNorm::L1, 1e-4, 3.0, 10),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn minkowski_rule_suppresses_non_dominant_frequencies() {
        let non_dominant = |h: &DataMatrix| {
            let amp = dft_rows(h).amplitude();
            (0..30).filter(|k| ![0, 5, 25].contains(k)).map(|k| amp[[0, k]]).sum::<f64>()
        };
        for seed in 0..5 {
            let h0 = three_norms_start(30, seed);
            let fro = norm_descent_experiment(&h0, DescentNorm::Frobenius, 0.1, 3.0, 10_000).unwrap();
            let mink = norm_descent_experiment(&h0, DescentNorm::Minkowski, 0.5, 3.0, 10_000).unwrap();
            assert!(non_dominant(mink.last()) < non_dominant(fro.last()), "seed {seed}");
        }
    }

    #[test]
    fn seasonal_generator_shapes_and_determinism() {
        let spec = SeasonalSpec::default();
        let a = gen_seasonal(&spec).unwrap();
        assert_eq!(a.x_full.dim(), (30, 163));
        assert_eq!(a.y_full.dim(), (90, 163));
        assert!(a.h.iter().all(|v| *v >= 0.0));
        assert_eq!(a, gen_seasonal(&spec).unwrap());
    }

    #[test]
    fn leading_principal_component_mixes_both_tones() {
        let ex = gen_example1(&noiseless()).unwrap();
        let x = nalgebra::DMatrix::from_fn(ex.x.nrows(), ex.x.ncols(), |i, j| ex.x[[i, j]]);
        let svd = x.svd(false, true);
        let vt = svd.v_t.unwrap();
        let lead = Array2::from_shape_fn((1, 163), |(_, j)| vt[(0, j)]);
        let amp = dft_rows(&lead).amplitude();
        let (a6, a14) = (amp[[0, 6]], amp[[0, 14]]);
        assert!(a6.min(a14) > 0.5 * a6.max(a14), "{a6} {a14}");
    }

    #[test]
    fn noise_atom_is_invisible_in_the_data() {
        for seed in 0..4 {
            let f = noise_atom_fixture(seed).unwrap();
            let n = f.noise_atom;
            assert_eq!(n, seed as usize % 4);
            let wpn = f.model.wp.column(n);
            for k in (0..4).filter(|&k| k != n) {
                let c = f.model.wp.column(k);
                assert!(wpn.dot(&c).abs() <= 1e-10 * wpn.dot(&wpn).sqrt() * c.dot(&c).sqrt());
            }
            let yh = f.model.wp.dot(&f.model.h);
            let head = f.y_full.slice(s![.., ..f.t_train]).to_owned();
            assert!(frobenius((&yh - &head).view()) <= 1e-10 * frobenius(head.view()));
            let keep: Vec<usize> = (0..4).filter(|&k| k != n).collect();
            let clean = f.model.w.select(ndarray::Axis(1), &keep).dot(&f.model.h.select(ndarray::Axis(0), &keep));
            let x = f.x_full.slice(s![.., ..f.t_train]).to_owned();
            assert!(frobenius((&clean - &x).view()) <= 1e-10 * frobenius(x.view()));
        }
    }
}
