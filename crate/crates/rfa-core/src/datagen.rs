//! Synthetic panel generators: an elliptical (and skew-elliptical) sampler
//! and two ready-made grouped-factor designs used throughout the test suite.
//!
//! All generators are counter-based and fully deterministic: a `(seed,
//! stream)` pair pins the entire draw sequence, and independent replications
//! use the same seed with consecutive stream ids, so Monte Carlo runs can be
//! parallelized without coordinating generator state.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::linalg;

/// Radial mixing law of an elliptical draw.
#[derive(Debug, Clone)]
pub enum RadialLaw {
    /// Multivariate normal.
    Gaussian,
    /// Multivariate Student t with `nu` degrees of freedom: a normal vector
    /// scaled by `√(nu/w)`, `w ~ χ²_nu`. Heavy-tailed for small `nu`.
    StudentT { nu: f64 },
    /// Skew-t via hidden truncation: the normal core is tilted along
    /// `slant` before the t-style scaling, producing asymmetric marginals
    /// where `slant` is nonzero.
    SkewT { nu: f64, slant: DVector<f64> },
}

/// Location, scatter square root, and radial law of an elliptical family.
/// A draw is `x = mu + A·core` where `A = scatter_root` (any `d×q` matrix
/// with `AAᵀ` the intended scatter) and `core` follows `radial`.
#[derive(Debug, Clone)]
pub struct EllipticalSpec {
    pub mu: DVector<f64>,
    pub scatter_root: DMatrix<f64>,
    pub radial: RadialLaw,
}

/// Group structure for loading matrices: `group_vectors[g]` is the loading
/// shared by the `group_sizes[g]` units of group `g+1`. Groups with size
/// zero are allowed and simply contribute no units.
#[derive(Debug, Clone)]
pub struct GroupLoadingSpec {
    group_vectors: Vec<DVector<f64>>,
    group_sizes: Vec<usize>,
}

impl GroupLoadingSpec {
    pub fn new(group_vectors: Vec<DVector<f64>>, group_sizes: Vec<usize>) -> Result<Self> {
        if group_vectors.is_empty() || group_vectors.len() != group_sizes.len() {
            return Err(Error::Input(format!(
                "need one loading vector per group: {} vectors, {} sizes",
                group_vectors.len(),
                group_sizes.len()
            )));
        }
        let m = group_vectors[0].len();
        if m == 0 || group_vectors.iter().any(|v| v.len() != m) {
            return Err(Error::input(
                "group loading vectors must share a nonzero length",
            ));
        }
        if group_sizes.iter().sum::<usize>() == 0 {
            return Err(Error::input("all group sizes are zero"));
        }
        Ok(GroupLoadingSpec {
            group_vectors,
            group_sizes,
        })
    }

    pub fn num_units(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn num_factors(&self) -> usize {
        self.group_vectors[0].len()
    }

    /// `N×m` loading matrix with identical rows inside each group.
    pub fn loading_matrix(&self) -> DMatrix<f64> {
        let n = self.num_units();
        let m = self.num_factors();
        let mut lam = DMatrix::zeros(n, m);
        let mut row = 0;
        for (v, &size) in self.group_vectors.iter().zip(&self.group_sizes) {
            for _ in 0..size {
                lam.row_mut(row).copy_from(&v.transpose());
                row += 1;
            }
        }
        lam
    }

    /// True partition over the nonempty groups, labeled `1..K₀` in group
    /// order (empty groups are dropped).
    pub fn partition(&self) -> Partition {
        let mut labels = Vec::with_capacity(self.num_units());
        let mut next = 0usize;
        for &size in &self.group_sizes {
            if size > 0 {
                next += 1;
                labels.extend(std::iter::repeat(next).take(size));
            }
        }
        Partition::new(labels).expect("nonempty spec yields contiguous labels")
    }
}

/// A generated panel together with everything that produced it.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    /// `T×N` observed panel.
    pub y: DMatrix<f64>,
    /// `N×m` true loading matrix.
    pub true_loadings: DMatrix<f64>,
    /// `T×m` true factor paths.
    pub true_factors: DMatrix<f64>,
    pub true_partition: Partition,
    pub seed: u64,
}

impl SimulatedPanel {
    /// Noiseless common component `FΛᵀ`.
    pub fn true_common(&self) -> DMatrix<f64> {
        &self.true_factors * self.true_loadings.transpose()
    }
}

fn validate_spec(spec: &EllipticalSpec) -> Result<()> {
    let d = spec.mu.len();
    if d == 0 || spec.scatter_root.nrows() != d || spec.scatter_root.ncols() == 0 {
        return Err(Error::Input(format!(
            "scatter root must be d×q with d = {} rows matching mu, got {}×{}",
            d,
            spec.scatter_root.nrows(),
            spec.scatter_root.ncols()
        )));
    }
    if spec.mu.iter().any(|x| !x.is_finite()) || !linalg::all_finite(&spec.scatter_root) {
        return Err(Error::input("location and scatter root must be finite"));
    }
    match &spec.radial {
        RadialLaw::Gaussian => {}
        RadialLaw::StudentT { nu } => {
            if !nu.is_finite() || *nu <= 0.0 {
                return Err(Error::Input(format!(
                    "degrees of freedom must be positive, got {nu}"
                )));
            }
        }
        RadialLaw::SkewT { nu, slant } => {
            if !nu.is_finite() || *nu <= 0.0 {
                return Err(Error::Input(format!(
                    "degrees of freedom must be positive, got {nu}"
                )));
            }
            if slant.len() != d {
                return Err(Error::Input(format!(
                    "slant vector has length {} but the distribution dimension is {d}",
                    slant.len()
                )));
            }
            if slant.iter().any(|x| !x.is_finite()) {
                return Err(Error::input("slant vector must be finite"));
            }
        }
    }
    Ok(())
}

/// Draws `t` rows from an elliptical (or skew-elliptical) distribution.
/// Equivalent to [`sample_elliptical_stream`] with stream 0.
pub fn sample_elliptical(spec: &EllipticalSpec, t: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_elliptical_stream(spec, t, seed, 0)
}

/// Draws `t` rows using the given generator stream. Draw order per row is
/// fixed (normal core first, then the radial mixing variable), so samples
/// are reproducible across platforms and thread counts.
pub fn sample_elliptical_stream(
    spec: &EllipticalSpec,
    t: usize,
    seed: u64,
    stream: u64,
) -> Result<DMatrix<f64>> {
    validate_spec(spec)?;
    if t == 0 {
        return Err(Error::input("cannot sample zero rows"));
    }
    let d = spec.mu.len();
    let q = spec.scatter_root.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut out = DMatrix::zeros(t, d);
    match &spec.radial {
        RadialLaw::Gaussian => {
            for r in 0..t {
                let g = standard_normal_vector(&mut rng, q);
                let x = &spec.mu + &spec.scatter_root * g;
                out.row_mut(r).copy_from(&x.transpose());
            }
        }
        RadialLaw::StudentT { nu } => {
            let chi = ChiSquared::new(*nu).expect("validated: nu > 0");
            for r in 0..t {
                let g = standard_normal_vector(&mut rng, q);
                let w: f64 = chi.sample(&mut rng);
                let x = &spec.mu + &spec.scatter_root * g * (nu / w).sqrt();
                out.row_mut(r).copy_from(&x.transpose());
            }
        }
        RadialLaw::SkewT { nu, slant } => {
            let chi = ChiSquared::new(*nu).expect("validated: nu > 0");
            // Hidden-truncation construction: with Σ = AAᵀ and
            // δ = Σα/√(1+αᵀΣα), the tilted normal core is δ·|g₀| + B·e with
            // BBᵀ = Σ − δδᵀ, realized by flipping the whole core when
            // g₀ < 0; dividing by √(w/ν) then makes the marginals skew-t.
            let sigma = &spec.scatter_root * spec.scatter_root.transpose();
            let sa = &sigma * slant;
            let delta = &sa / (1.0 + slant.dot(&sa)).sqrt();
            let b = psd_root(&(&sigma - &delta * delta.transpose()));
            for r in 0..t {
                let g0: f64 = rng.sample(StandardNormal);
                let e = standard_normal_vector(&mut rng, d);
                let mut core = &delta * g0 + &b * e;
                if g0 < 0.0 {
                    core.neg_mut();
                }
                let w: f64 = chi.sample(&mut rng);
                let x = &spec.mu + core * (nu / w).sqrt();
                out.row_mut(r).copy_from(&x.transpose());
            }
        }
    }
    Ok(out)
}

fn standard_normal_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Symmetric square root of a positive-semidefinite matrix, clamping the
/// tiny negative eigenvalues that rounding can introduce.
fn psd_root(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = ((a + a.transpose()) * 0.5).symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Four-group heavy-tailed design.
#[derive(Debug, Clone)]
pub struct FourGroupConfig {
    /// Number of units; must be divisible by 4 (equal group sizes).
    pub n: usize,
    /// Number of periods.
    pub t: usize,
    /// Separation offset of the last two group loadings.
    pub delta: f64,
    /// Tilt the noise block so its marginals are right-skewed.
    pub skew: bool,
}

/// Generates the four-group design: two factors, groups of `n/4` units with
/// loadings `(2,0)`, `(0,2)`, `(1,2+δ)`, `(2+δ,1)`, and `(fᵀ, εᵀ)` drawn
/// jointly from an elliptical t₃ with identity scatter, so factors and noise
/// share heavy tails.
pub fn gen_example1(n: usize, t: usize, delta: f64, seed: u64) -> Result<SimulatedPanel> {
    gen_example1_with(
        &FourGroupConfig {
            n,
            t,
            delta,
            skew: false,
        },
        seed,
        0,
    )
}

/// [`gen_example1`] with full control over the configuration and stream.
pub fn gen_example1_with(
    cfg: &FourGroupConfig,
    seed: u64,
    stream: u64,
) -> Result<SimulatedPanel> {
    if cfg.n < 4 || cfg.n % 4 != 0 {
        return Err(Error::Input(format!(
            "unit count must be a positive multiple of 4, got {}",
            cfg.n
        )));
    }
    if cfg.t < 2 {
        return Err(Error::Input(format!(
            "need at least 2 periods, got {}",
            cfg.t
        )));
    }
    if !cfg.delta.is_finite() || cfg.delta < 0.0 {
        return Err(Error::Input(format!(
            "separation delta must be finite and nonnegative, got {}",
            cfg.delta
        )));
    }
    let m = 2usize;
    let d = m + cfg.n;
    let radial = if cfg.skew {
        let mut slant = DVector::zeros(d);
        for i in m..d {
            slant[i] = 1.0;
        }
        RadialLaw::SkewT { nu: 3.0, slant }
    } else {
        RadialLaw::StudentT { nu: 3.0 }
    };
    let spec = EllipticalSpec {
        mu: DVector::zeros(d),
        scatter_root: DMatrix::identity(d, d),
        radial,
    };
    let z = sample_elliptical_stream(&spec, cfg.t, seed, stream)?;
    let factors = z.columns(0, m).into_owned();
    let noise = z.columns(m, cfg.n).into_owned();

    let quarter = cfg.n / 4;
    let groups = GroupLoadingSpec::new(
        vec![
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0 + cfg.delta]),
            DVector::from_vec(vec![2.0 + cfg.delta, 1.0]),
        ],
        vec![quarter; 4],
    )?;
    let loadings = groups.loading_matrix();
    let y = &factors * loadings.transpose() + noise;
    Ok(SimulatedPanel {
        y,
        true_loadings: loadings,
        true_factors: factors,
        true_partition: groups.partition(),
        seed,
    })
}

/// Three-group Gaussian design with autocorrelated factors.
#[derive(Debug, Clone)]
pub struct ThreeGroupConfig {
    /// Sizes of the three groups; zero sizes drop the group (and shrink the
    /// true number of groups accordingly).
    pub sizes: [usize; 3],
    pub t: usize,
    /// Noise variance multiplier.
    pub kappa: f64,
}

/// Number of AR(1) burn-in steps discarded before recording factor paths.
const AR_BURN_IN: usize = 100;

/// Generates the three-group design: factors follow independent AR(1)
/// processes `f_t = 0.5·f_{t−1} + u_t` with standard normal innovations and
/// a 100-step burn-in; groups load `(2,0)`, `(0,2)`, `(2.4,3.2)`; unit `i`
/// receives Gaussian noise with variance `κ·θ_i` where `θ_i = 4‖λ_i‖²/3`
/// calibrates the noise to the signal strength.
pub fn gen_example2(
    sizes: [usize; 3],
    t: usize,
    kappa: f64,
    seed: u64,
) -> Result<SimulatedPanel> {
    gen_example2_with(&ThreeGroupConfig { sizes, t, kappa }, seed, 0)
}

/// [`gen_example2`] with full control over configuration and stream.
pub fn gen_example2_with(
    cfg: &ThreeGroupConfig,
    seed: u64,
    stream: u64,
) -> Result<SimulatedPanel> {
    let n: usize = cfg.sizes.iter().sum();
    if n == 0 {
        return Err(Error::input("all three group sizes are zero"));
    }
    if cfg.t < 2 {
        return Err(Error::Input(format!(
            "need at least 2 periods, got {}",
            cfg.t
        )));
    }
    if !cfg.kappa.is_finite() || cfg.kappa <= 0.0 {
        return Err(Error::Input(format!(
            "noise scale kappa must be positive, got {}",
            cfg.kappa
        )));
    }
    let m = 2usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    // Factor paths first (one full path per factor), then noise row by row,
    // so the draw sequence is a fixed function of the configuration.
    let mut factors = DMatrix::zeros(cfg.t, m);
    for j in 0..m {
        let mut f = 0.0_f64;
        for step in 0..(AR_BURN_IN + cfg.t) {
            let u: f64 = rng.sample(StandardNormal);
            f = 0.5 * f + u;
            if step >= AR_BURN_IN {
                factors[(step - AR_BURN_IN, j)] = f;
            }
        }
    }

    let groups = GroupLoadingSpec::new(
        vec![
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![2.4, 3.2]),
        ],
        cfg.sizes.to_vec(),
    )?;
    let loadings = groups.loading_matrix();
    let noise_sd: Vec<f64> = (0..n)
        .map(|i| {
            let theta = 4.0 * loadings.row(i).norm_squared() / 3.0;
            (theta * cfg.kappa).sqrt()
        })
        .collect();
    let mut y = &factors * loadings.transpose();
    for r in 0..cfg.t {
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            y[(r, i)] += noise_sd[i] * e;
        }
    }
    Ok(SimulatedPanel {
        y,
        true_loadings: loadings,
        true_factors: factors,
        true_partition: groups.partition(),
        seed,
    })
}
