//! VR pipeline economics: FoV catalog, the four service paths, per-FoV
//! delays, resource costs, delay gains and the rate weights ω_l.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Service path of one FoV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Path {
    /// 3D FoV prefetched in memory; nothing to do.
    Prefetched3D,
    /// 2D FoV in memory, rendered on device.
    Cached2D,
    /// 2D FoV downloaded, then rendered on device.
    Remote2D,
    /// Rendered 3D FoV downloaded from the edge.
    Remote3D,
}

pub const PATHS: [Path; 4] = [Path::Prefetched3D, Path::Cached2D, Path::Remote2D, Path::Remote3D];

impl Path {
    /// Zero-based index (path number minus one).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(j: usize) -> Option<Path> {
        PATHS.get(j).copied()
    }

    pub fn uses_link(self) -> bool {
        matches!(self, Path::Remote2D | Path::Remote3D)
    }
}

/// Per-user FoV sizes, rendering intensity and request probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FovCatalog {
    /// Bits, `[l][i]`.
    pub q2d: Vec<Vec<f64>>,
    pub q3d: Vec<Vec<f64>>,
    /// Cycles per bit.
    pub o: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
}

pub const PROB_SUM_TOL: f64 = 1e-9;

impl FovCatalog {
    pub fn new(q2d: Vec<Vec<f64>>, q3d: Vec<Vec<f64>>, o: Vec<Vec<f64>>, pi: Vec<Vec<f64>>) -> Result<Self> {
        let c = Self { q2d, q3d, o, pi };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.q2d.len();
        if l == 0 {
            return Err(Error::Config("catalog has no users".into()));
        }
        if self.q3d.len() != l || self.o.len() != l || self.pi.len() != l {
            return Err(Error::Config("catalog arrays disagree on user count".into()));
        }
        let v = self.q2d[0].len();
        let mut low_ratio = 0usize;
        if v == 0 {
            return Err(Error::Config("catalog has no FoVs".into()));
        }
        for u in 0..l {
            for arr in [&self.q2d[u], &self.q3d[u], &self.o[u], &self.pi[u]] {
                if arr.len() != v {
                    return Err(Error::Config(format!("user {u}: expected {v} FoVs, got {}", arr.len())));
                }
            }
            let sum: f64 = self.pi[u].iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL || self.pi[u].iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::Config(format!(
                    "user {u}: request probabilities must be nonnegative and sum to 1 (sum {sum})"
                )));
            }
            for i in 0..v {
                let (a, b, o) = (self.q2d[u][i], self.q3d[u][i], self.o[u][i]);
                if !(a > 0.0) || !(o > 0.0) || !b.is_finite() {
                    return Err(Error::Config(format!("user {u} FoV {i}: sizes and intensity must be positive")));
                }
                if b < a {
                    return Err(Error::Config(format!("user {u} FoV {i}: 3D size {b} below 2D size {a}")));
                }
                if b < 2.0 * a {
                    low_ratio += 1;
                }
            }
        }
        if low_ratio > 0 {
            log::info!("{low_ratio} FoVs have a 3D/2D size ratio below 2");
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.q2d.len()
    }

    pub fn fovs(&self) -> usize {
        self.q2d[0].len()
    }

    pub fn alpha_ratio(&self, l: usize, i: usize) -> f64 {
        self.q3d[l][i] / self.q2d[l][i]
    }

    /// Loads a catalog from TOML: one `[[user]]` table per user with arrays
    /// `q2d`, `q3d`, `o` and `pi` (sizes in bits).
    pub fn from_toml_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            user: Vec<UserRow>,
        }
        #[derive(Deserialize)]
        struct UserRow {
            q2d: Vec<f64>,
            q3d: Vec<f64>,
            o: Vec<f64>,
            pi: Vec<f64>,
        }
        let f: File = toml::from_str(s)?;
        let mut c = FovCatalog { q2d: vec![], q3d: vec![], o: vec![], pi: vec![] };
        for u in f.user {
            c.q2d.push(u.q2d);
            c.q3d.push(u.q3d);
            c.o.push(u.o);
            c.pi.push(u.pi);
        }
        c.validate()?;
        Ok(c)
    }
}

/// Zipf request probabilities over `v` FoVs: π_i ∝ i^{−s}, i = 1..v.
pub fn zipf_probabilities(v: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=v).map(|i| (i as f64).powf(-s)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Per-HMD compute, power, memory and deadline parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// CPU frequency (cycles/s).
    pub f: f64,
    pub zeta: f64,
    /// Average power budget (W).
    pub p_bar: f64,
    pub mem_bits: f64,
    /// Deadline (s).
    pub tau: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("f", self.f), ("zeta", self.zeta), ("p_bar", self.p_bar), ("mem_bits", self.mem_bits), ("tau", self.tau)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("device profile field {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// T^{⟨j⟩}_{l,i} (s). Link paths at rate 0 return `f64::INFINITY`.
pub fn path_delay(catalog: &FovCatalog, profile: &DeviceProfile, rate: f64, l: usize, i: usize, j: Path) -> f64 {
    let q2 = catalog.q2d[l][i];
    let render = q2 * catalog.o[l][i] / profile.f;
    match j {
        Path::Prefetched3D => 0.0,
        Path::Cached2D => render,
        Path::Remote2D | Path::Remote3D if !(rate > 0.0) => f64::INFINITY,
        Path::Remote2D => q2 / rate + render,
        Path::Remote3D => catalog.q3d[l][i] / rate,
    }
}

/// Dense L×V×4 table, layout `[(l·V + i)·4 + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    pub users: usize,
    pub fovs: usize,
    pub data: Vec<f64>,
}

impl PathTable {
    pub fn zeros(users: usize, fovs: usize) -> Self {
        Self { users, fovs, data: vec![0.0; users * fovs * 4] }
    }

    #[inline]
    pub fn idx(&self, l: usize, i: usize, j: usize) -> usize {
        (l * self.fovs + i) * 4 + j
    }

    pub fn get(&self, l: usize, i: usize, j: Path) -> f64 {
        self.data[self.idx(l, i, j.index())]
    }

    pub fn set(&mut self, l: usize, i: usize, j: Path, v: f64) {
        let k = self.idx(l, i, j.index());
        self.data[k] = v;
    }
}

/// All path delays for the given per-user rates.
pub fn delay_table(catalog: &FovCatalog, profiles: &[DeviceProfile], rates: &[f64]) -> PathTable {
    let mut t = PathTable::zeros(catalog.users(), catalog.fovs());
    for l in 0..catalog.users() {
        for i in 0..catalog.fovs() {
            for j in PATHS {
                t.set(l, i, j, path_delay(catalog, &profiles[l], rates[l], l, i, j));
            }
        }
    }
    t
}

/// Deadline check for link paths; on-device paths are always admissible.
pub fn meets_deadline(catalog: &FovCatalog, profile: &DeviceProfile, rate: f64, l: usize, i: usize, j: Path) -> bool {
    match j {
        Path::Remote2D | Path::Remote3D => path_delay(catalog, profile, rate, l, i, j) <= profile.tau,
        _ => true,
    }
}

/// Path selection x_{l,i,j}, binary or relaxed.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAssignment {
    pub users: usize,
    pub fovs: usize,
    /// Layout as [`PathTable`].
    pub x: Vec<f64>,
    pub relaxed: bool,
}

impl PathAssignment {
    pub fn from_paths(paths: &[Vec<Path>]) -> Self {
        let users = paths.len();
        let fovs = paths.first().map_or(0, Vec::len);
        let mut x = vec![0.0; users * fovs * 4];
        for (l, row) in paths.iter().enumerate() {
            for (i, p) in row.iter().enumerate() {
                x[(l * fovs + i) * 4 + p.index()] = 1.0;
            }
        }
        Self { users, fovs, x, relaxed: false }
    }

    pub fn uniform(users: usize, fovs: usize, path: Path) -> Self {
        Self::from_paths(&vec![vec![path; fovs]; users])
    }

    pub fn relaxed(users: usize, fovs: usize, x: Vec<f64>) -> Result<Self> {
        let a = Self { users, fovs, x, relaxed: true };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.users * self.fovs * 4 {
            return Err(Error::Domain("assignment has wrong length".into()));
        }
        for (c, chunk) in self.x.chunks(4).enumerate() {
            let s: f64 = chunk.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("assignment row {c} sums to {s}")));
            }
            for &v in chunk {
                let ok = if self.relaxed { (-1e-9..=1.0 + 1e-9).contains(&v) } else { v == 0.0 || v == 1.0 };
                if !ok {
                    return Err(Error::Domain(format!("assignment row {c} has entry {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, l: usize, i: usize, j: Path) -> f64 {
        self.x[(l * self.fovs + i) * 4 + j.index()]
    }

    /// Chosen path of a binary assignment.
    pub fn path(&self, l: usize, i: usize) -> Path {
        let base = (l * self.fovs + i) * 4;
        let mut best = 0;
        for j in 1..4 {
            if self.x[base + j] > self.x[base + best] {
                best = j;
            }
        }
        PATHS[best]
    }

    pub fn paths(&self) -> Vec<Vec<Path>> {
        (0..self.users).map(|l| (0..self.fovs).map(|i| self.path(l, i)).collect()).collect()
    }
}

/// T̄ = (1/L) Σ π_{l,i} T_{l,i}^{⟨j⟩} x_{l,i,j}.
///
/// Terms with x = 0 are skipped so infinite-delay sentinels on unused paths
/// do not poison the sum.
pub fn total_delay(assignment: &PathAssignment, delays: &PathTable, catalog: &FovCatalog) -> f64 {
    let mut acc = 0.0;
    for l in 0..assignment.users {
        for i in 0..assignment.fovs {
            for j in PATHS {
                let x = assignment.get(l, i, j);
                if x != 0.0 {
                    acc += catalog.pi[l][i] * delays.get(l, i, j) * x;
                }
            }
        }
    }
    acc / assignment.users as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceCosts {
    /// Bits.
    pub mem: PathTable,
    /// Watts.
    pub pow: PathTable,
}

pub fn resource_costs(catalog: &FovCatalog, profiles: &[DeviceProfile]) -> ResourceCosts {
    let (users, fovs) = (catalog.users(), catalog.fovs());
    let mut mem = PathTable::zeros(users, fovs);
    let mut pow = PathTable::zeros(users, fovs);
    for l in 0..users {
        let p = &profiles[l];
        for i in 0..fovs {
            mem.set(l, i, Path::Prefetched3D, catalog.q3d[l][i]);
            mem.set(l, i, Path::Cached2D, catalog.q2d[l][i]);
            let render = catalog.pi[l][i] * p.zeta * p.f * p.f * catalog.q2d[l][i] * catalog.o[l][i] / p.tau;
            pow.set(l, i, Path::Cached2D, render);
            pow.set(l, i, Path::Remote2D, render);
        }
    }
    ResourceCosts { mem, pow }
}

/// g_{l,i,j} = π_{l,i} (T⁴ − T^{⟨j⟩}); zero for the remote-3D path.
pub fn delay_gain(catalog: &FovCatalog, profile: &DeviceProfile, rate: f64, l: usize, i: usize, j: Path) -> f64 {
    if j == Path::Remote3D {
        return 0.0;
    }
    let t4 = path_delay(catalog, profile, rate, l, i, Path::Remote3D);
    catalog.pi[l][i] * (t4 - path_delay(catalog, profile, rate, l, i, j))
}

pub fn gain_table(catalog: &FovCatalog, profiles: &[DeviceProfile], rates: &[f64]) -> PathTable {
    let mut t = PathTable::zeros(catalog.users(), catalog.fovs());
    for l in 0..catalog.users() {
        for i in 0..catalog.fovs() {
            for j in PATHS {
                t.set(l, i, j, delay_gain(catalog, &profiles[l], rates[l], l, i, j));
            }
        }
    }
    t
}

/// ω_l: expected critical bits user l pulls over the link under a binary
/// assignment.
pub fn omega_weights(assignment: &PathAssignment, catalog: &FovCatalog) -> Result<Vec<f64>> {
    if assignment.relaxed {
        return Err(Error::Domain("rate weights need a binary assignment".into()));
    }
    assignment.validate()?;
    Ok((0..assignment.users)
        .map(|l| {
            (0..assignment.fovs)
                .map(|i| {
                    // (p3D, p2D, r) per path, then the bracketed expression
                    let (p3, p2, r) = match assignment.path(l, i) {
                        Path::Prefetched3D => (1.0, 0.0, 0.0),
                        Path::Cached2D => (0.0, 1.0, 1.0),
                        Path::Remote2D => (0.0, 0.0, 1.0),
                        Path::Remote3D => (0.0, 0.0, 0.0),
                    };
                    catalog.pi[l][i] * (1.0 - p3) * (r * (1.0 - p2) * catalog.q2d[l][i] + (1.0 - r) * catalog.q3d[l][i])
                })
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_fov(q2: f64, q3: f64, o: f64) -> FovCatalog {
        FovCatalog::new(vec![vec![q2]], vec![vec![q3]], vec![vec![o]], vec![vec![1.0]]).unwrap()
    }

    fn profile(f: f64) -> DeviceProfile {
        DeviceProfile { f, zeta: 1e-27, p_bar: 1.0, mem_bits: 1e8, tau: 0.02 }
    }

    #[test]
    fn path_delays_reference() {
        let c = one_fov(3e6, 6e6, 1.0);
        let p = profile(2e9);
        assert_eq!(path_delay(&c, &p, 1e9, 0, 0, Path::Prefetched3D), 0.0);
        assert!((path_delay(&c, &p, 1e9, 0, 0, Path::Cached2D) - 1.5e-3).abs() < 1e-15);
        assert!((path_delay(&c, &p, 1e9, 0, 0, Path::Remote2D) - 4.5e-3).abs() < 1e-15);
        assert!((path_delay(&c, &p, 1e9, 0, 0, Path::Remote3D) - 6e-3).abs() < 1e-15);
        assert_eq!(path_delay(&c, &p, 0.0, 0, 0, Path::Remote3D), f64::INFINITY);
        assert_eq!(path_delay(&c, &p, 0.0, 0, 0, Path::Cached2D), 1.5e-3);
    }

    #[test]
    fn catalog_validation() {
        assert!(FovCatalog::new(vec![vec![3.0]], vec![vec![2.0]], vec![vec![1.0]], vec![vec![1.0]]).is_err());
        assert!(FovCatalog::new(
            vec![vec![3.0, 3.0]],
            vec![vec![6.0, 6.0]],
            vec![vec![1.0, 1.0]],
            vec![vec![0.5, 0.4]]
        )
        .is_err());
        let toml = r#"
            [[user]]
            q2d = [3e6, 2e6]
            q3d = [6e6, 5e6]
            o = [1.0, 2.0]
            pi = [0.75, 0.25]
        "#;
        let c = FovCatalog::from_toml_str(toml).unwrap();
        assert_eq!(c.fovs(), 2);
        assert_eq!(c.alpha_ratio(0, 1), 2.5);
    }

    #[test]
    fn zipf_normalized_and_decreasing() {
        let p = zipf_probabilities(100, 1.2);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
        let h: f64 = (1..=100).map(|i| (i as f64).powf(-1.2)).sum();
        assert!((p[0] - 1.0 / h).abs() < 1e-15);
    }

    #[test]
    fn total_delay_cases() {
        let c = FovCatalog::new(
            vec![vec![3e6, 2e6, 1e6]],
            vec![vec![6e6, 5e6, 4e6]],
            vec![vec![1.0; 3]],
            vec![vec![1.0 / 3.0; 3]],
        )
        .unwrap();
        let t = delay_table(&c, &[profile(2e9)], &[1e9]);
        assert_eq!(total_delay(&PathAssignment::uniform(1, 3, Path::Prefetched3D), &t, &c), 0.0);
        let all4 = total_delay(&PathAssignment::uniform(1, 3, Path::Remote3D), &t, &c);
        assert!((all4 - (6e-3 + 5e-3 + 4e-3) / 3.0).abs() < 1e-15);
        // rate 0 with no link path in use stays finite
        let t0 = delay_table(&c, &[profile(2e9)], &[0.0]);
        assert_eq!(total_delay(&PathAssignment::uniform(1, 3, Path::Prefetched3D), &t0, &c), 0.0);
    }

    #[test]
    fn resource_cost_reference() {
        let c =
            FovCatalog::new(vec![vec![3e6, 3e6]], vec![vec![6e6, 6e6]], vec![vec![10.0, 10.0]], vec![vec![0.01, 0.99]])
                .unwrap();
        let r = resource_costs(&c, &[profile(2e9)]);
        assert!((r.pow.get(0, 0, Path::Cached2D) - 0.06).abs() < 1e-15);
        assert_eq!(r.pow.get(0, 0, Path::Cached2D), r.pow.get(0, 0, Path::Remote2D));
        for i in 0..2 {
            assert_eq!(r.mem.get(0, i, Path::Remote3D), 0.0);
            assert_eq!(r.mem.get(0, i, Path::Remote2D), 0.0);
            assert_eq!(r.pow.get(0, i, Path::Prefetched3D), 0.0);
            assert_eq!(r.pow.get(0, i, Path::Remote3D), 0.0);
            assert_eq!(r.mem.get(0, i, Path::Prefetched3D), 6e6);
            assert_eq!(r.mem.get(0, i, Path::Cached2D), 3e6);
        }
        let zero_pi =
            FovCatalog::new(vec![vec![3e6, 3e6]], vec![vec![6e6, 6e6]], vec![vec![10.0; 2]], vec![vec![1.0, 0.0]])
                .unwrap();
        let r = resource_costs(&zero_pi, &[profile(2e9)]);
        assert!(PATHS.iter().all(|&j| r.pow.get(0, 1, j) == 0.0));
    }

    #[test]
    fn gains_cases() {
        let c = one_fov(3e6, 6e6, 1.0);
        let p = profile(2e9);
        assert_eq!(delay_gain(&c, &p, 1e9, 0, 0, Path::Remote3D), 0.0);
        assert!((delay_gain(&c, &p, 1e9, 0, 0, Path::Prefetched3D) - 6e-3).abs() < 1e-15);
        // o/f = 5e-9 ≥ (α−1)/R = 1e-9: remote 3D beats downloading 2D
        let z1 = one_fov(3e6, 6e6, 10.0);
        assert!(delay_gain(&z1, &p, 1e9, 0, 0, Path::Remote2D) < 0.0);
    }

    #[test]
    fn omega_cases() {
        let c = FovCatalog::new(
            vec![vec![1.0, 2.0, 3.0, 4.0]],
            vec![vec![10.0, 20.0, 30.0, 40.0]],
            vec![vec![1.0; 4]],
            vec![vec![0.1, 0.2, 0.3, 0.4]],
        )
        .unwrap();
        let all1 = PathAssignment::uniform(1, 4, Path::Prefetched3D);
        assert_eq!(omega_weights(&all1, &c).unwrap(), vec![0.0]);
        let all4 = PathAssignment::uniform(1, 4, Path::Remote3D);
        assert!((omega_weights(&all4, &c).unwrap()[0] - 30.0).abs() < 1e-12);
        let mixed =
            PathAssignment::from_paths(&[vec![Path::Prefetched3D, Path::Cached2D, Path::Remote2D, Path::Remote3D]]);
        // 0 + 0 + 0.3·3 + 0.4·40
        assert!((omega_weights(&mixed, &c).unwrap()[0] - 16.9).abs() < 1e-12);
        let relaxed = PathAssignment::relaxed(1, 4, vec![0.25; 16]).unwrap();
        assert!(omega_weights(&relaxed, &c).is_err());
    }

    proptest! {
        #[test]
        fn dominance_and_zone_dichotomy(
            q2 in 1e5f64..1e7, alpha in 1.0f64..5.0, o in 0.1f64..20.0,
            f in 1e8f64..5e9, rate in 1e7f64..1e10,
        ) {
            let c = one_fov(q2, q2 * alpha, o);
            let p = profile(f);
            let t: Vec<f64> = PATHS.iter().map(|&j| path_delay(&c, &p, rate, 0, 0, j)).collect();
            prop_assert!(t[0] <= t[1] && t[1] <= t[2] && t[0] <= t[3]);
            prop_assert!(((t[2] - t[1]) - q2 / rate).abs() <= 1e-12 * t[2]);
            let lhs = t[2] - t[3];
            let rhs = o / f - (alpha - 1.0) / rate;
            if rhs.abs() > 1e-9 * (o / f) {
                prop_assert_eq!(lhs > 0.0, rhs > 0.0);
            }
        }

        #[test]
        fn total_delay_matches_naive(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (l, v) = (3, 5);
            let q2: Vec<Vec<f64>> = (0..l).map(|_| (0..v).map(|_| rng.gen_range(1e6..5e6)).collect()).collect();
            let q3 = q2.iter().map(|r| r.iter().map(|x| x * 2.5).collect()).collect();
            let pi: Vec<Vec<f64>> = (0..l).map(|_| zipf_probabilities(v, 1.2)).collect();
            let c = FovCatalog::new(q2, q3, vec![vec![2.0; v]; l], pi).unwrap();
            let profiles = vec![profile(2e9); l];
            let rates = vec![1e9, 2e9, 5e8];
            let paths: Vec<Vec<Path>> = (0..l).map(|_| (0..v).map(|_| PATHS[rng.gen_range(0..4)]).collect()).collect();
            let a = PathAssignment::from_paths(&paths);
            let t = delay_table(&c, &profiles, &rates);
            let mut naive = 0.0;
            for (u, row) in paths.iter().enumerate() {
                for (i, &p) in row.iter().enumerate() {
                    naive += c.pi[u][i] * path_delay(&c, &profiles[u], rates[u], u, i, p);
                }
            }
            naive /= l as f64;
            prop_assert!((total_delay(&a, &t, &c) - naive).abs() <= 1e-15 + 1e-12 * naive);
        }
    }
}
