//! Network geometry and random channel realizations.
//!
//! All gain matrices are indexed `[(from, to)]`: entry `(j, i)` of the
//! BS→relay matrix is the link from base station `j` to relay `i`, and entry
//! `(j, i)` of the relay→user matrix is the link from relay `j` to user `i`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared magnitudes below this are redrawn; log-domain solvers need
/// strictly positive gains.
pub const MIN_GAIN_MAGNITUDE_SQ: f64 = 1e-30;

/// A point in the plane, metres.
pub type Point = [f64; 2];

/// Node placement and pairwise distances for one deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub n_cells: usize,
    pub cell_size_m: f64,
    /// `(j, i)`: distance from BS `j` to relay `i`.
    pub d_bs_relay: DMatrix<f64>,
    /// `(j, i)`: distance from relay `j` to user `i`.
    pub d_relay_user: DMatrix<f64>,
    /// Path-loss exponent.
    pub beta: f64,
    pub bs_positions: Vec<Point>,
    pub relay_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl TopologySpec {
    /// Builds a topology from explicit node coordinates (any number of cells).
    pub fn from_positions(
        bs: Vec<Point>,
        relays: Vec<Point>,
        users: Vec<Point>,
        cell_size_m: f64,
        beta: f64,
    ) -> Result<Self> {
        let n = bs.len();
        if n == 0 {
            return Err(Error::Config("topology needs at least one cell".into()));
        }
        if relays.len() != n || users.len() != n {
            return Err(Error::Config(format!(
                "position lists disagree: {} BSs, {} relays, {} users",
                n,
                relays.len(),
                users.len()
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("path-loss exponent must be > 0, got {beta}")));
        }
        let d_bs_relay = DMatrix::from_fn(n, n, |j, i| dist(bs[j], relays[i]));
        let d_relay_user = DMatrix::from_fn(n, n, |j, i| dist(relays[j], users[i]));
        let topo = Self {
            n_cells: n,
            cell_size_m,
            d_bs_relay,
            d_relay_user,
            beta,
            bs_positions: bs,
            relay_positions: relays,
            user_positions: users,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// Checks the distance invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells;
        for m in [&self.d_bs_relay, &self.d_relay_user] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension { expected: n, got: m.nrows() });
            }
            if let Some(d) = m.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
                return Err(Error::Domain(format!("distance must be strictly positive, got {d}")));
            }
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("path-loss exponent must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Square-grid preset with up to four cells.
///
/// The cells are the quadrants of a `2·cell_size` square centred at the
/// origin, in the order (+,+), (−,+), (−,−), (+,−). In every cell the user,
/// relay and BS sit on the cell diagonal that points away from the grid
/// centre: the user is `0.1·cell_size` from the shared corner on each axis,
/// the relay one hop further and the BS two hops further, so both hops have
/// length `hop_dist_m` and the cell-edge users face the strongest intercell
/// interference.
pub fn build_grid_topology(
    n_cells: usize,
    cell_size_m: f64,
    hop_dist_m: f64,
    beta: f64,
) -> Result<TopologySpec> {
    if !matches!(n_cells, 1 | 2 | 4) {
        return Err(Error::Config(format!(
            "grid preset supports 1, 2 or 4 cells, got {n_cells}"
        )));
    }
    if !(hop_dist_m > 0.0) || !(cell_size_m > 0.0) {
        return Err(Error::Config("cell size and hop distance must be positive".into()));
    }
    let step = hop_dist_m / std::f64::consts::SQRT_2;
    let user_off = 0.1 * cell_size_m;
    let relay_off = user_off + step;
    let bs_off = relay_off + step;
    if bs_off >= cell_size_m {
        return Err(Error::Config(format!(
            "two hops of {hop_dist_m} m do not fit inside a {cell_size_m} m cell"
        )));
    }
    const SIGNS: [[f64; 2]; 4] = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
    let at = |s: [f64; 2], off: f64| [s[0] * off, s[1] * off];
    let signs = &SIGNS[..n_cells];
    TopologySpec::from_positions(
        signs.iter().map(|s| at(*s, bs_off)).collect(),
        signs.iter().map(|s| at(*s, relay_off)).collect(),
        signs.iter().map(|s| at(*s, user_off)).collect(),
        cell_size_m,
        beta,
    )
}

/// Small-scale fading parameters.
///
/// Desired BS→relay links are Rician; every other link is unit-variance
/// circularly-symmetric complex Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingSpec {
    pub rician_k_db: f64,
    pub seed: u64,
}

impl FadingSpec {
    pub fn new(rician_k_db: f64, seed: u64) -> Result<Self> {
        if !rician_k_db.is_finite() {
            return Err(Error::Config(format!("Rician factor must be finite, got {rician_k_db}")));
        }
        Ok(Self { rician_k_db, seed })
    }
}

/// Complex small-scale coefficients, indexed like the distance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub h: DMatrix<Complex64>,
    pub g: DMatrix<Complex64>,
}

fn cn(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws one block-fading realization; reproducible from `fading.seed`
/// (ChaCha8 stream, `h` column-major first, then `g`).
pub fn draw_channels(topo: &TopologySpec, fading: &FadingSpec) -> ChannelDraw {
    let n = topo.n_cells;
    let mut rng = ChaCha8Rng::seed_from_u64(fading.seed);
    let k = 10f64.powf(fading.rician_k_db / 10.0);
    let los = (k / (k + 1.0)).sqrt();
    let diffuse_var = 1.0 / (k + 1.0);

    let draw = |rng: &mut ChaCha8Rng, rician: bool| loop {
        let c = if rician {
            Complex64::new(los, 0.0) + cn(rng, diffuse_var)
        } else {
            cn(rng, 1.0)
        };
        if c.norm_sqr() >= MIN_GAIN_MAGNITUDE_SQ {
            break c;
        }
    };
    let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut g = h.clone();
    for i in 0..n {
        for j in 0..n {
            h[(j, i)] = draw(&mut rng, i == j);
        }
    }
    for i in 0..n {
        for j in 0..n {
            g[(j, i)] = draw(&mut rng, false);
        }
    }
    ChannelDraw { h, g }
}

/// Effective per-link gains for one fading draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    /// `(j, i)`: effective gain from BS `j` to relay `i`.
    pub h_bar: DMatrix<f64>,
    /// `(j, i)`: effective gain from relay `j` to user `i`.
    pub g_bar: DMatrix<f64>,
    pub topo: Option<TopologySpec>,
    pub seed: Option<u64>,
}

impl NetworkInstance {
    /// Wraps explicit gain matrices (used for hand-built instances).
    pub fn from_gains(h_bar: DMatrix<f64>, g_bar: DMatrix<f64>) -> Result<Self> {
        let net = Self { h_bar, g_bar, topo: None, seed: None };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.h_bar.nrows();
        for m in [&self.h_bar, &self.g_bar] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension { expected: n, got: m.ncols() });
            }
            if let Some(v) = m.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::Domain(format!("effective gain must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.h_bar.nrows()
    }

    /// Gain from BS `j` to relay `i`.
    #[inline]
    pub fn h(&self, j: usize, i: usize) -> f64 {
        self.h_bar[(j, i)]
    }

    /// Gain from relay `j` to user `i`.
    #[inline]
    pub fn g(&self, j: usize, i: usize) -> f64 {
        self.g_bar[(j, i)]
    }
}

/// Combines small-scale coefficients with path loss: `|h|²·d^(−β)`.
pub fn effective_gains(topo: &TopologySpec, draw: &ChannelDraw) -> Result<NetworkInstance> {
    topo.validate()?;
    let n = topo.n_cells;
    if draw.h.nrows() != n || draw.h.ncols() != n || draw.g.nrows() != n || draw.g.ncols() != n {
        return Err(Error::Dimension { expected: n, got: draw.h.nrows() });
    }
    let h_bar = DMatrix::from_fn(n, n, |j, i| {
        draw.h[(j, i)].norm_sqr() * topo.d_bs_relay[(j, i)].powf(-topo.beta)
    });
    let g_bar = DMatrix::from_fn(n, n, |j, i| {
        draw.g[(j, i)].norm_sqr() * topo.d_relay_user[(j, i)].powf(-topo.beta)
    });
    let net = NetworkInstance { h_bar, g_bar, topo: Some(topo.clone()), seed: None };
    net.validate()?;
    Ok(net)
}

/// Draws channels and converts them into an instance tagged with the seed.
pub fn generate_instance(topo: &TopologySpec, fading: &FadingSpec) -> Result<NetworkInstance> {
    let draw = draw_channels(topo, fading);
    let mut net = effective_gains(topo, &draw)?;
    net.seed = Some(fading.seed);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> TopologySpec {
        build_grid_topology(4, 150.0, 35.0 * 2f64.sqrt(), 3.0).unwrap()
    }

    #[test]
    fn grid_hops_are_equal() {
        let t = default_grid();
        for i in 0..4 {
            assert!((t.d_bs_relay[(i, i)] - 49.4975).abs() < 1e-3);
            assert!((t.d_relay_user[(i, i)] - 49.4975).abs() < 1e-3);
        }
    }

    #[test]
    fn cross_distance_matches_hand_geometry() {
        // BS 0 at (85, 85), relay 1 at (-50, 50).
        let t = default_grid();
        let expected = (135.0f64 * 135.0 + 35.0 * 35.0).sqrt();
        assert!((t.d_bs_relay[(0, 1)] - expected).abs() < 1e-9);
        // relay 2 at (-50, -50), user 0 at (15, 15)
        let expected = (65.0f64 * 65.0 * 2.0).sqrt();
        assert!((t.d_relay_user[(2, 0)] - expected).abs() < 1e-9);
    }

    #[test]
    fn single_cell_is_one_by_one() {
        let t = build_grid_topology(1, 150.0, 49.497, 3.0).unwrap();
        assert_eq!(t.d_bs_relay.shape(), (1, 1));
        assert_eq!(t.d_relay_user.shape(), (1, 1));
    }

    #[test]
    fn unsupported_cell_count_is_rejected() {
        assert!(matches!(build_grid_topology(3, 150.0, 49.5, 3.0), Err(Error::Config(_))));
        assert!(matches!(build_grid_topology(4, 150.0, 120.0, 3.0), Err(Error::Config(_))));
    }

    #[test]
    fn equal_seeds_are_bit_identical() {
        let t = default_grid();
        let f = FadingSpec::new(10.0, 42).unwrap();
        assert_eq!(draw_channels(&t, &f), draw_channels(&t, &f));
        let other = FadingSpec::new(10.0, 43).unwrap();
        assert_ne!(draw_channels(&t, &f), draw_channels(&t, &other));
    }

    #[test]
    fn fading_moments_are_unit() {
        let t = default_grid();
        let (mut diag, mut cross, mut g2) = (0.0, 0.0, 0.0);
        let (mut nd, mut nc, mut ng) = (0usize, 0usize, 0usize);
        for seed in 0..25_000 {
            let d = draw_channels(&t, &FadingSpec::new(10.0, seed).unwrap());
            for i in 0..4 {
                for j in 0..4 {
                    if i == j {
                        diag += d.h[(j, i)].norm_sqr();
                        nd += 1;
                    } else {
                        cross += d.h[(j, i)].norm_sqr();
                        nc += 1;
                    }
                    g2 += d.g[(j, i)].norm_sqr();
                    ng += 1;
                }
            }
        }
        assert!(nd >= 100_000 && nc >= 100_000);
        assert!((diag / nd as f64 - 1.0).abs() < 0.02, "diag {}", diag / nd as f64);
        assert!((cross / nc as f64 - 1.0).abs() < 0.02, "cross {}", cross / nc as f64);
        assert!((g2 / ng as f64 - 1.0).abs() < 0.02, "g {}", g2 / ng as f64);
    }

    #[test]
    fn path_loss_at_hop_distance() {
        let d: f64 = 49.5;
        let gain = d.powf(-3.0);
        assert!((gain - 8.245e-6).abs() < 1e-9);
        assert!((10.0 * (d.powi(3)).log10() - 50.9).abs() < 0.1);
    }

    #[test]
    fn effective_gains_apply_path_loss() {
        let t = build_grid_topology(1, 150.0, 49.5, 3.0).unwrap();
        let one = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let net = effective_gains(&t, &ChannelDraw { h: one.clone(), g: one }).unwrap();
        assert!((net.h(0, 0) - 49.5f64.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_is_rejected() {
        let t = build_grid_topology(1, 150.0, 49.5, 3.0).unwrap();
        let zero = DMatrix::from_element(1, 1, Complex64::new(0.0, 0.0));
        let one = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert!(matches!(
            effective_gains(&t, &ChannelDraw { h: zero, g: one }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_distance_is_a_domain_error() {
        let p = [0.0, 0.0];
        let r = TopologySpec::from_positions(vec![p], vec![p], vec![[1.0, 0.0]], 10.0, 3.0);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
