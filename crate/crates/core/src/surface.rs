//! Reconfigurable holographic surface: layout, interference patterns, beam
//! matrices and the mutual-coupling network.
//!
//! Element positions `r_n` are expressed relative to the surface phase
//! center, in world orientation: element `(i, j)` sits at `[i·d, j·d, 0]`.
//! Feeds live on the `i = 0` edge by default and launch a surface wave along
//! `+x`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Inputs for [`build_geometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing (m).
    pub spacing: f64,
    pub feeds: usize,
    /// Explicit feed positions in the surface frame; defaults to evenly spaced
    /// points on the `i = 0` edge.
    pub feed_positions: Option<Vec<Vector3<f64>>>,
    /// Structural attenuation α (1/m).
    pub attenuation: f64,
    /// Radiation efficiency β ∈ [0, 1].
    pub efficiency: f64,
    /// Surface-wave refractive index n_s; |k_s| = 2π n_s / λ.
    pub substrate_index: f64,
    /// Unit propagation direction of the reference wave.
    pub surface_wave_dir: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsGeometry {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    /// r_n, surface frame (m).
    pub element_pos: Vec<Vector3<f64>>,
    /// (i, j) grid index of each element.
    pub element_idx: Vec<(usize, usize)>,
    pub feed_pos: Vec<Vector3<f64>>,
    /// r_n^k = r_n − feed_k, indexed `[n][k]`.
    pub displacement: Vec<Vec<Vector3<f64>>>,
    pub attenuation: f64,
    pub efficiency: f64,
    pub substrate_index: f64,
    pub surface_wave_dir: Vector3<f64>,
}

pub fn build_geometry(spec: &SurfaceSpec) -> Result<RhsGeometry> {
    if spec.nx == 0 || spec.ny == 0 {
        return Err(Error::Config("surface grid must be at least 1×1".into()));
    }
    if spec.feeds == 0 {
        return Err(Error::Config("surface needs at least one feed".into()));
    }
    if !(spec.spacing > 0.0) {
        return Err(Error::Config(format!("element spacing must be positive, got {}", spec.spacing)));
    }
    if !(0.0..=1.0).contains(&spec.efficiency) {
        return Err(Error::Config(format!("radiation efficiency {} outside [0, 1]", spec.efficiency)));
    }
    if !(spec.attenuation >= 0.0) || !(spec.substrate_index > 0.0) {
        return Err(Error::Config("attenuation must be ≥ 0 and substrate index > 0".into()));
    }
    let dir_norm = spec.surface_wave_dir.norm();
    if !(dir_norm > 0.0) {
        return Err(Error::Config("surface-wave direction must be nonzero".into()));
    }

    let mut element_pos = Vec::with_capacity(spec.nx * spec.ny);
    let mut element_idx = Vec::with_capacity(spec.nx * spec.ny);
    for i in 0..spec.nx {
        for j in 0..spec.ny {
            element_pos.push(Vector3::new(i as f64 * spec.spacing, j as f64 * spec.spacing, 0.0));
            element_idx.push((i, j));
        }
    }

    let feed_pos = match &spec.feed_positions {
        Some(f) => {
            if f.len() != spec.feeds {
                return Err(Error::Config(format!("{} feed positions given for {} feeds", f.len(), spec.feeds)));
            }
            f.clone()
        }
        None => {
            let span = (spec.ny - 1) as f64 * spec.spacing;
            (0..spec.feeds).map(|k| Vector3::new(0.0, span * (k + 1) as f64 / (spec.feeds + 1) as f64, 0.0)).collect()
        }
    };

    let displacement = element_pos.iter().map(|r| feed_pos.iter().map(|f| r - f).collect()).collect();

    Ok(RhsGeometry {
        nx: spec.nx,
        ny: spec.ny,
        spacing: spec.spacing,
        element_pos,
        element_idx,
        feed_pos,
        displacement,
        attenuation: spec.attenuation,
        efficiency: spec.efficiency,
        substrate_index: spec.substrate_index,
        surface_wave_dir: spec.surface_wave_dir / dir_norm,
    })
}

impl RhsGeometry {
    pub fn num_elements(&self) -> usize {
        self.element_pos.len()
    }

    pub fn num_feeds(&self) -> usize {
        self.feed_pos.len()
    }

    /// k_s at wavelength `lambda` (rad/m).
    pub fn surface_wave_vector(&self, lambda: f64) -> Vector3<f64> {
        self.surface_wave_dir * (2.0 * PI * self.substrate_index / lambda)
    }

    /// d_{p,q}.
    pub fn element_distance(&self, p: usize, q: usize) -> f64 {
        (self.element_pos[p] - self.element_pos[q]).norm()
    }
}

/// Free-space wave vector toward (θ, φ) at wavelength `lambda`.
pub fn free_space_wave_vector(theta: f64, phi: f64, lambda: f64) -> Vector3<f64> {
    crate::channel::direction(theta, phi) * (2.0 * PI / lambda)
}

/// Pattern basis φ_{l,u,k}(n) = (Re[Ψ_{l,u}(r_n) · conj(Ψ_ref(r_n^k))] + 1) / 2.
///
/// The reference wave is conjugated so that re-illumination reconstructs the
/// object wave, Ψ_intf Ψ_ref = Ψ |Ψ_ref|².
pub fn interference_basis(geometry: &RhsGeometry, theta: f64, phi: f64, lambda: f64, k: usize) -> Vec<f64> {
    let kf = free_space_wave_vector(theta, phi, lambda);
    let ks = geometry.surface_wave_vector(lambda);
    geometry
        .element_pos
        .iter()
        .zip(&geometry.displacement)
        .map(|(r, disp)| {
            let phase = ks.dot(&disp[k]) - kf.dot(r);
            (phase.cos() + 1.0) / 2.0
        })
        .collect()
}

/// Basis vectors of one subband, indexed `[l][k][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBases {
    pub phi: Vec<Vec<Vec<f64>>>,
}

impl PatternBases {
    pub fn compute(geometry: &RhsGeometry, theta: &[f64], phi: &[f64], lambda: f64) -> Self {
        let phi_b = theta
            .iter()
            .zip(phi)
            .map(|(&t, &p)| (0..geometry.num_feeds()).map(|k| interference_basis(geometry, t, p, lambda, k)).collect())
            .collect();
        Self { phi: phi_b }
    }

    pub fn num_users(&self) -> usize {
        self.phi.len()
    }
}

/// Holographic weights a_{l,u,k}; one probability simplex over (l, k) per subband.
#[derive(Debug, Clone, PartialEq)]
pub struct HoloWeights {
    users: usize,
    subbands: usize,
    feeds: usize,
    /// Layout `[(u·L + l)·K + k]`.
    a: Vec<f64>,
}

pub const SIMPLEX_SUM_TOL: f64 = 1e-9;
pub const SIMPLEX_NEG_TOL: f64 = 1e-12;

impl HoloWeights {
    pub fn new(users: usize, subbands: usize, feeds: usize, mut a: Vec<f64>) -> Result<Self> {
        if a.len() != users * subbands * feeds || users * feeds == 0 {
            return Err(Error::Domain(format!(
                "weight vector of length {} does not match L={users}, U={subbands}, K={feeds}",
                a.len()
            )));
        }
        let block = users * feeds;
        for (u, chunk) in a.chunks_mut(block).enumerate() {
            if chunk.iter().any(|&x| !(x >= -SIMPLEX_NEG_TOL)) {
                return Err(Error::Domain(format!("negative weight on subband {u}")));
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                return Err(Error::Domain(format!("weights on subband {u} sum to {sum}, expected 1")));
            }
            chunk.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        Ok(Self { users, subbands, feeds, a })
    }

    pub fn uniform(users: usize, subbands: usize, feeds: usize) -> Self {
        let v = 1.0 / (users * feeds) as f64;
        Self { users, subbands, feeds, a: vec![v; users * subbands * feeds] }
    }

    pub fn users(&self) -> usize {
        self.users
    }
    pub fn subbands(&self) -> usize {
        self.subbands
    }
    pub fn feeds(&self) -> usize {
        self.feeds
    }

    fn idx(&self, l: usize, u: usize, k: usize) -> usize {
        (u * self.users + l) * self.feeds + k
    }

    pub fn get(&self, l: usize, u: usize, k: usize) -> f64 {
        self.a[self.idx(l, u, k)]
    }

    /// Weights of subband `u`, ordered `[l·K + k]`.
    pub fn subband(&self, u: usize) -> &[f64] {
        let b = self.users * self.feeds;
        &self.a[u * b..(u + 1) * b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }
}

/// m_{u,n} = Σ_{l,k} a_{l,u,k} φ_{l,u,k}(n).
pub fn synthesize_pattern(weights: &HoloWeights, bases: &PatternBases, u: usize) -> Vec<f64> {
    let n = bases.phi[0][0].len();
    let mut m = vec![0.0; n];
    for l in 0..weights.users() {
        for k in 0..weights.feeds() {
            let a = weights.get(l, u, k);
            if a == 0.0 {
                continue;
            }
            for (mn, &b) in m.iter_mut().zip(&bases.phi[l][k]) {
                *mn += a * b;
            }
        }
    }
    m
}

/// A_u(n, k) = e^{−α‖r_n^k‖} e^{−j k_s·r_n^k}; independent of the weights.
pub fn steering_matrix(geometry: &RhsGeometry, lambda: f64) -> DMatrix<Complex64> {
    let ks = geometry.surface_wave_vector(lambda);
    let alpha = geometry.attenuation;
    DMatrix::from_fn(geometry.num_elements(), geometry.num_feeds(), |n, k| {
        let r = geometry.displacement[n][k];
        Complex64::from_polar((-alpha * r.norm()).exp(), -ks.dot(&r))
    })
}

/// [M_u]_n^k = √β m_{u,n} e^{−α‖r_n^k‖} e^{−j k_s·r_n^k}.
pub fn beam_matrix(geometry: &RhsGeometry, pattern: &[f64], lambda: f64) -> DMatrix<Complex64> {
    let ks = geometry.surface_wave_vector(lambda);
    let sb = geometry.efficiency.sqrt();
    let alpha = geometry.attenuation;
    DMatrix::from_fn(geometry.num_elements(), geometry.num_feeds(), |n, k| {
        let r = geometry.displacement[n][k];
        sb * pattern[n] * (-alpha * r.norm()).exp() * (-J * ks.dot(&r)).exp()
    })
}

/// M̃_u = Ξ_u M_u.
pub fn effective_beam(beam: &DMatrix<Complex64>, coupling: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    coupling * beam
}

/// Simpson settings for the mutual-impedance integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Total node count over [0, 2 l_d]; rounded up so each half has an even
    /// number of intervals.
    pub nodes: usize,
    /// Maximum relative change allowed when the node count is doubled.
    pub tolerance: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { nodes: 201, tolerance: 1e-6 }
    }
}

/// Self impedance of an electrically short dipole (Ω).
pub fn self_impedance(lambda: f64, dipole_len: f64) -> Complex64 {
    let ratio = dipole_len / lambda;
    Complex64::new(80.0 * ratio * ratio, -(120.0 / PI) * (lambda / (2.0 * PI * dipole_len)).ln())
}

fn simpson<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, intervals: usize) -> Complex64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * (h / 3.0)
}

fn mutual_impedance_raw(separation: f64, lambda: f64, dipole_len: f64, nodes: usize) -> Complex64 {
    let k = 2.0 * PI / lambda;
    let ld = dipole_len;
    let d2 = separation * separation;
    let cos_kl = (k * ld).cos();
    let kernel = |z: f64| {
        let r0 = (d2 + z * z).sqrt();
        let r1 = (d2 + (ld - z) * (ld - z)).sqrt();
        let r2 = (d2 + (ld + z) * (ld + z)).sqrt();
        -J * (-J * k * r1).exp() / r1 - J * (-J * k * r2).exp() / r2 + 2.0 * J * cos_kl * (-J * k * r0).exp() / r0
    };
    let half = ((nodes.max(3) - 1) / 2).max(2);
    // current is sin(kz) on the first arm and sin(k(2l_d − z)) on the second;
    // integrate the arms separately so the kink at z = l_d is a panel edge
    let first = simpson(|z| (k * z).sin() * kernel(z), 0.0, ld, half);
    let second = simpson(|z| (k * (2.0 * ld - z)).sin() * kernel(z), ld, 2.0 * ld, half);
    -30.0 * (first + second)
}

/// Off-diagonal mutual impedance between two short dipoles `separation` apart.
pub fn mutual_impedance_at(separation: f64, lambda: f64, dipole_len: f64, quad: Quadrature) -> Result<Complex64> {
    if !(separation > 0.0) {
        return Err(Error::Domain(format!("mutual impedance needs a positive separation, got {separation}")));
    }
    let coarse = mutual_impedance_raw(separation, lambda, dipole_len, quad.nodes);
    let fine = mutual_impedance_raw(separation, lambda, dipole_len, 2 * quad.nodes - 1);
    let rel_change = (fine - coarse).norm() / fine.norm().max(f64::MIN_POSITIVE);
    if rel_change > quad.tolerance {
        return Err(Error::Quadrature { rel_change, tol: quad.tolerance, separation });
    }
    Ok(coarse)
}

/// [Z_u]_{p,q}; the diagonal uses the short-dipole self impedance.
pub fn mutual_impedance(
    geometry: &RhsGeometry,
    lambda: f64,
    dipole_len: f64,
    p: usize,
    q: usize,
    quad: Quadrature,
) -> Result<Complex64> {
    if p == q {
        return Ok(self_impedance(lambda, dipole_len));
    }
    mutual_impedance_at(geometry.element_distance(p, q), lambda, dipole_len, quad)
}

/// Full N×N mutual-impedance matrix of one subband.
///
/// The kernel depends only on the grid offset, so each distinct |Δi|, |Δj|
/// pair is integrated once.
pub fn impedance_matrix(
    geometry: &RhsGeometry,
    lambda: f64,
    dipole_len: f64,
    quad: Quadrature,
) -> Result<DMatrix<Complex64>> {
    let n = geometry.num_elements();
    let mut cache: HashMap<(usize, usize), Complex64> = HashMap::new();
    let z_self = self_impedance(lambda, dipole_len);
    let mut z = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for p in 0..n {
        z[(p, p)] = z_self;
        let (ip, jp) = geometry.element_idx[p];
        for q in (p + 1)..n {
            let (iq, jq) = geometry.element_idx[q];
            let key = (ip.abs_diff(iq), jp.abs_diff(jq));
            let val = match cache.get(&key) {
                Some(v) => *v,
                None => {
                    let v = mutual_impedance_at(geometry.element_distance(p, q), lambda, dipole_len, quad)?;
                    cache.insert(key, v);
                    v
                }
            };
            z[(p, q)] = val;
            z[(q, p)] = val;
        }
    }
    Ok(z)
}

/// Ξ_u = (I + Z_O Z_u⁻¹)⁻¹ (I + Z_O Z_A⁻¹).
///
/// Uses (I + Z_O Z⁻¹)⁻¹ = (Z + Z_O I)⁻¹ Z, so only one LU solve is needed.
pub fn coupling_matrix(
    z: &DMatrix<Complex64>,
    z_self: Complex64,
    z_out: f64,
    subband: usize,
) -> Result<DMatrix<Complex64>> {
    let n = z.nrows();
    if z.ncols() != n {
        return Err(Error::Domain("impedance matrix must be square".into()));
    }
    if z_self.norm() == 0.0 {
        return Err(Error::Singular { subband, what: "zero self impedance".into() });
    }
    let scale = Complex64::new(1.0, 0.0) + z_out / z_self;
    let shifted = z + DMatrix::<Complex64>::identity(n, n) * Complex64::new(z_out, 0.0);
    let lu = shifted.lu();
    let solved =
        lu.solve(z).ok_or_else(|| Error::Singular { subband, what: "Z_u + Z_O I is not invertible".into() })?;
    if solved.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular { subband, what: "non-finite coupling entries".into() });
    }
    Ok(solved * scale)
}

/// Impedance and coupling matrices for every subband.
///
/// Built once per geometry and frequency plan; weights and powers never
/// touch it.
#[derive(Debug, Clone)]
pub struct CouplingModel {
    pub z_out: f64,
    pub dipole_len: f64,
    pub z: Vec<DMatrix<Complex64>>,
    pub z_self: Vec<Complex64>,
    pub xi: Vec<DMatrix<Complex64>>,
}

impl CouplingModel {
    pub fn build(
        geometry: &RhsGeometry,
        wavelengths: &[f64],
        z_out: f64,
        dipole_len: f64,
        quad: Quadrature,
    ) -> Result<Self> {
        let mut z = Vec::with_capacity(wavelengths.len());
        let mut z_self = Vec::with_capacity(wavelengths.len());
        let mut xi = Vec::with_capacity(wavelengths.len());
        for (u, &lambda) in wavelengths.iter().enumerate() {
            let zu = impedance_matrix(geometry, lambda, dipole_len, quad)?;
            let za = self_impedance(lambda, dipole_len);
            xi.push(coupling_matrix(&zu, za, z_out, u)?);
            z.push(zu);
            z_self.push(za);
        }
        Ok(Self { z_out, dipole_len, z, z_self, xi })
    }

    /// Coupling-free model: Ξ_u = I on every subband.
    pub fn uncoupled(n: usize, wavelengths: &[f64], z_out: f64, dipole_len: f64) -> Self {
        let z_self: Vec<Complex64> = wavelengths.iter().map(|&l| self_impedance(l, dipole_len)).collect();
        Self {
            z_out,
            dipole_len,
            z: z_self.iter().map(|&za| DMatrix::identity(n, n) * za).collect(),
            z_self,
            xi: wavelengths.iter().map(|_| DMatrix::identity(n, n)).collect(),
        }
    }
}

/// Per-subband beam products for a given weight state.
#[derive(Debug, Clone)]
pub struct BeamMatrix {
    pub m_pattern: Vec<Vec<f64>>,
    pub m: Vec<DMatrix<Complex64>>,
    pub m_tilde: Vec<DMatrix<Complex64>>,
}

impl BeamMatrix {
    pub fn build(
        geometry: &RhsGeometry,
        coupling: &CouplingModel,
        bases: &[PatternBases],
        weights: &HoloWeights,
        wavelengths: &[f64],
    ) -> Self {
        let mut out = BeamMatrix { m_pattern: Vec::new(), m: Vec::new(), m_tilde: Vec::new() };
        for (u, &lambda) in wavelengths.iter().enumerate() {
            let pat = synthesize_pattern(weights, &bases[u], u);
            let m = beam_matrix(geometry, &pat, lambda);
            out.m_tilde.push(effective_beam(&m, &coupling.xi[u]));
            out.m.push(m);
            out.m_pattern.push(pat);
        }
        out
    }
}

/// Writes a complex matrix as CSV, one row per matrix row, `re,im` pairs.
pub fn write_complex_csv<W: std::io::Write>(w: W, m: &DMatrix<Complex64>) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for r in 0..m.nrows() {
        let mut rec = Vec::with_capacity(2 * m.ncols());
        for c in 0..m.ncols() {
            rec.push(m[(r, c)].re.to_string());
            rec.push(m[(r, c)].im.to_string());
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
