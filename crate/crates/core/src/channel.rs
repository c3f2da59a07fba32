//! Network geometry and Rician channel generation.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, link, user)`,
//! so the direct channels of a realization do not depend on the surface size
//! and the first `M` rows of `H` are shared by every larger surface.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    /// Unit vector pointing from `self` towards `other`.
    fn direction_to(&self, other: &Position3D) -> [f64; 3] {
        let d = self.distance(other);
        if d == 0.0 {
            return [0.0, 0.0, 0.0];
        }
        [
            (other.x - self.x) / d,
            (other.y - self.y) / d,
            (other.z - self.z) / d,
        ]
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct PathLossModel {
    pub reference_loss_db: f64,
    pub exponent_bs_ris: f64,
    pub exponent_bs_user: f64,
    pub exponent_ris_user: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            reference_loss_db: -30.0,
            exponent_bs_ris: 2.5,
            exponent_bs_user: 3.5,
            exponent_ris_user: 2.8,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.reference_loss_db <= 0.0) {
            return Err(ModelError::InvalidArgument(format!(
                "reference path loss must be ≤ 0 dB, got {}",
                self.reference_loss_db
            )));
        }
        for (name, e) in [
            ("bs_ris", self.exponent_bs_ris),
            ("bs_user", self.exponent_bs_user),
            ("ris_user", self.exponent_ris_user),
        ] {
            if !(1.5..=6.0).contains(&e) {
                return Err(ModelError::InvalidArgument(format!(
                    "path loss exponent {name} = {e} outside [1.5, 6]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianConfig {
    pub k_factor_db: f64,
    pub seed: u64,
}

impl RicianConfig {
    pub fn k_linear(&self) -> f64 {
        10f64.powf(self.k_factor_db / 10.0)
    }
}

/// Deterministic part of each Rician link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosModel {
    /// Half-wavelength ULA at the BS (x axis) and UPA on the surface (x–z plane).
    #[default]
    Steering,
    AllOnes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub bs: Position3D,
    pub ris: Position3D,
    pub users: Vec<Position3D>,
    pub circle_centers: [Position3D; 2],
    pub radius: f64,
    /// Index (0 or 1) of the circle each user sits on.
    pub user_circle: Vec<usize>,
}

impl NetworkGeometry {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn with_ris(mut self, ris: Position3D) -> Self {
        self.ris = ris;
        self
    }
}

/// Complex channel triplet of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `h_k ∈ C^N`, BS → user.
    pub direct: Vec<CVector>,
    /// `H ∈ C^{M×N}`, BS → surface.
    pub bs_to_ris: CMatrix,
    /// `g_k ∈ C^M`, surface → user.
    pub ris_to_user: Vec<CVector>,
}

impl ChannelSet {
    pub fn num_antennas(&self) -> usize {
        self.bs_to_ris.ncols()
    }

    pub fn num_elements(&self) -> usize {
        self.bs_to_ris.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.direct.len()
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelSetRepr {
    direct: Vec<Vec<[f64; 2]>>,
    bs_to_ris: Vec<Vec<[f64; 2]>>,
    ris_to_user: Vec<Vec<[f64; 2]>>,
}

fn pairs(v: impl Iterator<Item = Complex64>) -> Vec<[f64; 2]> {
    v.map(|c| [c.re, c.im]).collect()
}

impl Serialize for ChannelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ChannelSetRepr {
            direct: self.direct.iter().map(|h| pairs(h.iter().copied())).collect(),
            bs_to_ris: self
                .bs_to_ris
                .row_iter()
                .map(|r| pairs(r.iter().copied()))
                .collect(),
            ris_to_user: self
                .ris_to_user
                .iter()
                .map(|g| pairs(g.iter().copied()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChannelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ChannelSetRepr::deserialize(d)?;
        let vec = |v: &Vec<[f64; 2]>| {
            CVector::from_iterator(v.len(), v.iter().map(|p| Complex64::new(p[0], p[1])))
        };
        let rows = r.bs_to_ris.len();
        let cols = r.bs_to_ris.first().map_or(0, |x| x.len());
        if r.bs_to_ris.iter().any(|row| row.len() != cols) {
            return Err(serde::de::Error::custom("ragged bs_to_ris matrix"));
        }
        Ok(ChannelSet {
            direct: r.direct.iter().map(vec).collect(),
            bs_to_ris: CMatrix::from_fn(rows, cols, |i, j| {
                let p = r.bs_to_ris[i][j];
                Complex64::new(p[0], p[1])
            }),
            ris_to_user: r.ris_to_user.iter().map(vec).collect(),
        })
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Placement = 1,
    BsToRis = 2,
    Direct = 3,
    RisToUser = 4,
}

fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | index);
    rng
}

/// Places `count_per_circle[c]` users at uniformly random angles on circle `c`
/// (in the plane z = 0 of each center).
pub fn place_users(
    bs: Position3D,
    ris: Position3D,
    centers: [Position3D; 2],
    radius: f64,
    count_per_circle: [usize; 2],
    seed: u64,
) -> Result<NetworkGeometry, ModelError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(ModelError::InvalidArgument(format!(
            "circle radius must be positive, got {radius}"
        )));
    }
    if ![bs, ris, centers[0], centers[1]].iter().all(Position3D::is_finite) {
        return Err(ModelError::InvalidArgument("non-finite position".into()));
    }
    let mut rng = stream_rng(seed, Stream::Placement, 0);
    let mut users = Vec::new();
    let mut user_circle = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..count_per_circle[c] {
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            users.push(Position3D::new(
                center.x + radius * phi.cos(),
                center.y + radius * phi.sin(),
                center.z,
            ));
            user_circle.push(c);
        }
    }
    Ok(NetworkGeometry {
        bs,
        ris,
        users,
        circle_centers: centers,
        radius,
        user_circle,
    })
}

/// `10^(ref/10) · d^(−α)`.
pub fn path_loss_linear(distance: f64, exponent: f64, reference_loss_db: f64) -> Result<f64, ModelError> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(ModelError::InvalidArgument(format!(
            "distance must be positive, got {distance}"
        )));
    }
    Ok(10f64.powf(reference_loss_db / 10.0) * distance.powf(-exponent))
}

/// `√gain · (√(κ/(1+κ)) · los + √(1/(1+κ)) · nlos)` with i.i.d. `CN(0, 1)`
/// entries in `nlos`, drawn row by row. `κ = ∞` gives the pure LoS matrix.
pub fn draw_rician_channel<R: Rng + ?Sized>(
    los: &CMatrix,
    k_factor_linear: f64,
    gain_linear: f64,
    rng: &mut R,
) -> CMatrix {
    debug_assert!(k_factor_linear >= 0.0 && gain_linear > 0.0);
    let (w_los, w_nlos) = if k_factor_linear.is_infinite() {
        (1.0, 0.0)
    } else {
        (
            (k_factor_linear / (1.0 + k_factor_linear)).sqrt(),
            (1.0 / (1.0 + k_factor_linear)).sqrt(),
        )
    };
    let amp = gain_linear.sqrt();
    let (rows, cols) = los.shape();
    let mut out = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let nlos = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            out[(i, j)] = (los[(i, j)] * w_los + nlos * w_nlos) * amp;
        }
    }
    out
}

fn bs_steering(n: usize, dir: [f64; 3]) -> CVector {
    CVector::from_fn(n, |i, _| Complex64::from_polar(1.0, PI * i as f64 * dir[0]))
}

/// Surface layout `rows × cols` with `rows` the largest divisor of `m` not
/// exceeding `√m`.
fn surface_layout(m: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut r = 1;
    while r * r <= m {
        if m % r == 0 {
            rows = r;
        }
        r += 1;
    }
    (rows, m / rows)
}

fn ris_steering(m: usize, dir: [f64; 3]) -> CVector {
    let (_, cols) = surface_layout(m);
    CVector::from_fn(m, |idx, _| {
        let (a, b) = (idx % cols, idx / cols);
        Complex64::from_polar(1.0, PI * (a as f64 * dir[0] + b as f64 * dir[2]))
    })
}

/// Draws `(h_k, H, g_k)` for the geometry with per-link path loss and a shared
/// Rician factor.
pub fn generate_channels(
    geometry: &NetworkGeometry,
    path_loss: &PathLossModel,
    rician: &RicianConfig,
    los: LosModel,
    num_antennas: usize,
    num_elements: usize,
) -> Result<ChannelSet, ModelError> {
    if num_antennas == 0 || num_elements == 0 {
        return Err(ModelError::InvalidArgument(
            "antenna and element counts must be at least 1".into(),
        ));
    }
    let kappa = rician.k_linear();
    let (n, m) = (num_antennas, num_elements);
    let ref_db = path_loss.reference_loss_db;
    let ones = |r, c| CMatrix::from_element(r, c, Complex64::new(1.0, 0.0));

    let bs_ris_gain = path_loss_linear(
        geometry.bs.distance(&geometry.ris),
        path_loss.exponent_bs_ris,
        ref_db,
    )?;
    let h_los = match los {
        LosModel::AllOnes => ones(m, n),
        LosModel::Steering => {
            ris_steering(m, geometry.ris.direction_to(&geometry.bs))
                * bs_steering(n, geometry.bs.direction_to(&geometry.ris)).adjoint()
        }
    };
    let bs_to_ris = draw_rician_channel(
        &h_los,
        kappa,
        bs_ris_gain,
        &mut stream_rng(rician.seed, Stream::BsToRis, 0),
    );

    let mut direct = Vec::with_capacity(geometry.num_users());
    let mut ris_to_user = Vec::with_capacity(geometry.num_users());
    for (k, user) in geometry.users.iter().enumerate() {
        let gain_d = path_loss_linear(geometry.bs.distance(user), path_loss.exponent_bs_user, ref_db)?;
        let los_d = match los {
            LosModel::AllOnes => ones(n, 1),
            LosModel::Steering => DMatrix::from_column_slice(
                n,
                1,
                bs_steering(n, geometry.bs.direction_to(user)).as_slice(),
            ),
        };
        let h = draw_rician_channel(
            &los_d,
            kappa,
            gain_d,
            &mut stream_rng(rician.seed, Stream::Direct, k as u64),
        );
        direct.push(h.column(0).into_owned());

        let gain_r = path_loss_linear(geometry.ris.distance(user), path_loss.exponent_ris_user, ref_db)?;
        let los_r = match los {
            LosModel::AllOnes => ones(m, 1),
            LosModel::Steering => DMatrix::from_column_slice(
                m,
                1,
                ris_steering(m, geometry.ris.direction_to(user)).as_slice(),
            ),
        };
        let g = draw_rician_channel(
            &los_r,
            kappa,
            gain_r,
            &mut stream_rng(rician.seed, Stream::RisToUser, k as u64),
        );
        ris_to_user.push(g.column(0).into_owned());
    }
    Ok(ChannelSet {
        direct,
        bs_to_ris,
        ris_to_user,
    })
}
