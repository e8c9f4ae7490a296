//! Double-buffered population storage, the fused stream–collide kernel and
//! the collision operators that plug into it.
//!
//! The current buffer always holds post-collision populations `f̃`. A step
//! pulls `f̃` from neighbours (resolving wall links with SBB or CLI), then
//! collides and writes the next buffer.

use rayon::prelude::*;

use crate::boundary::{cli_coefficient, BoundaryScheme};
use crate::error::{Error, Result};
use crate::geometry::{cell_coords, CellFlag, VoxelGeometry};
use crate::lattice::{self, moments, relax_trt, FluidParams, MAX_VELOCITY_SQ, OPPOSITE, Q, VELOCITIES};

/// Cell-local collision with parameters that may vary between z planes.
pub trait Collision: Sync {
    /// Collides `f` in place and returns `|u|²` of the cell velocity.
    fn collide(&self, z: usize, f: &mut [f64; Q]) -> f64;

    /// Physical velocity of a cell from its pre-collision populations.
    fn velocity(&self, z: usize, f: &[f64; Q]) -> [f64; 3];
}

/// Plain TRT collision with a uniform body force.
///
/// The equilibrium uses the momentum moment `m`; the reported velocity is
/// the half-step value `m + G/2`.
#[derive(Debug, Clone, Copy)]
pub struct TrtCollision {
    pub params: FluidParams,
}

impl TrtCollision {
    pub fn new(params: FluidParams) -> Self {
        Self { params }
    }
}

impl Collision for TrtCollision {
    #[inline]
    fn collide(&self, _z: usize, f: &mut [f64; Q]) -> f64 {
        let (delta_rho, m) = moments(f);
        let p = &self.params;
        relax_trt(f, delta_rho, m, 1.0, p.omega_plus, p.omega_minus, p.body_force);
        let g = p.body_force;
        let u = [m[0] + 0.5 * g[0], m[1] + 0.5 * g[1], m[2] + 0.5 * g[2]];
        u[0] * u[0] + u[1] * u[1] + u[2] * u[2]
    }

    fn velocity(&self, _z: usize, f: &[f64; Q]) -> [f64; 3] {
        let (_, m) = moments(f);
        let g = self.params.body_force;
        [m[0] + 0.5 * g[0], m[1] + 0.5 * g[1], m[2] + 0.5 * g[2]]
    }
}

#[derive(Debug, Clone, Copy)]
struct PackedLink {
    /// Population reconstructed at the fluid cell, `bar(k)`.
    incoming: u8,
    /// Link direction `k` into the wall.
    direction: u8,
    coefficient: f64,
    /// Cell `x_f1 − e_k`; equals the fluid cell itself for SBB and fallback links.
    second: u32,
    wall_term: f64,
}

const KIND_SOLID: u8 = 0;
const KIND_BULK: u8 = 1;
const KIND_BOUNDARY: u8 = 2;

/// Populations, flags and wall links of one block.
#[derive(Debug, Clone)]
pub struct LatticeField {
    dims: [usize; 3],
    periodic: [bool; 3],
    flags: Vec<CellFlag>,
    kinds: Vec<u8>,
    link_start: Vec<u32>,
    links: Vec<PackedLink>,
    scheme: BoundaryScheme,
    fallback_links: usize,
    cur: Vec<f64>,
    next: Vec<f64>,
    steps: u64,
}

/// Wrapped index tables: `wrap[a][i + 1]` is the index `i` (from −1 to N)
/// mapped into `0..N`.
fn wrap_table(n: usize) -> Vec<usize> {
    (0..n + 2).map(|i| (i + n - 1) % n).collect()
}

impl LatticeField {
    /// Builds a field at rest (`δρ = 0`, `u = 0`).
    pub fn new(geom: &VoxelGeometry, scheme: BoundaryScheme) -> Result<Self> {
        let n = geom.cell_count();
        if n >= u32::MAX as usize {
            return Err(Error::Geometry(format!("{n} cells exceed the supported block size")));
        }
        let mut kinds: Vec<u8> = geom
            .flags
            .iter()
            .map(|&f| if f == CellFlag::Fluid { KIND_BULK } else { KIND_SOLID })
            .collect();
        let mut link_start = vec![0u32; n + 1];
        let mut links = Vec::with_capacity(geom.links.len());
        let mut fallback_links = 0;
        let mut sorted = geom.links.clone();
        sorted.sort_by_key(|l| (l.fluid_cell, l.direction));
        for w in sorted.windows(2) {
            if w[0].fluid_cell == w[1].fluid_cell && w[0].direction == w[1].direction {
                return Err(Error::Geometry(format!(
                    "duplicate link at cell {} direction {}",
                    w[0].fluid_cell, w[0].direction
                )));
            }
        }
        let mut cursor = 0;
        for cell in 0..n {
            link_start[cell] = links.len() as u32;
            while cursor < sorted.len() && sorted[cursor].fluid_cell == cell {
                let l = &sorted[cursor];
                if geom.flags[cell] != CellFlag::Fluid {
                    return Err(Error::Geometry(format!("link starts in non-fluid cell {cell}")));
                }
                if !(l.q > 0.0 && l.q <= 1.0) || l.direction == 0 || l.direction >= Q {
                    return Err(Error::Geometry(format!("invalid link at cell {cell}")));
                }
                let (coefficient, second) = match (scheme, l.second_fluid) {
                    (BoundaryScheme::Cli, Some(f2)) => (cli_coefficient(l.q), f2 as u32),
                    (BoundaryScheme::Cli, None) => {
                        fallback_links += 1;
                        (0.0, cell as u32)
                    }
                    (BoundaryScheme::Sbb, _) => (0.0, cell as u32),
                };
                links.push(PackedLink {
                    incoming: OPPOSITE[l.direction] as u8,
                    direction: l.direction as u8,
                    coefficient,
                    second,
                    wall_term: l.wall_term(),
                });
                kinds[cell] = KIND_BOUNDARY;
                cursor += 1;
            }
        }
        link_start[n] = links.len() as u32;
        if cursor != sorted.len() {
            return Err(Error::Geometry("link refers to a cell outside the block".into()));
        }
        // Every fluid cell must see fluid or a link in each direction.
        for cell in 0..n {
            if kinds[cell] == KIND_SOLID {
                continue;
            }
            let own = &links[link_start[cell] as usize..link_start[cell + 1] as usize];
            for k in 1..Q {
                let target = crate::geometry::neighbour(geom.dims, geom.periodic, cell, VELOCITIES[k]);
                let fluid = target.is_some_and(|t| geom.flags[t] == CellFlag::Fluid);
                let linked = own.iter().any(|l| l.direction as usize == k);
                if fluid == linked {
                    return Err(Error::Geometry(format!(
                        "cell {cell} direction {k}: link set inconsistent with flags"
                    )));
                }
            }
        }
        if fallback_links > 0 {
            log::info!("{fallback_links} interpolated links fall back to simple bounce-back");
        }
        Ok(Self {
            dims: geom.dims,
            periodic: geom.periodic,
            flags: geom.flags.clone(),
            kinds,
            link_start,
            links,
            scheme,
            fallback_links,
            cur: vec![0.0; Q * n],
            next: vec![0.0; Q * n],
            steps: 0,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn flags(&self) -> &[CellFlag] {
        &self.flags
    }

    pub fn cell_count(&self) -> usize {
        self.flags.len()
    }

    pub fn scheme(&self) -> BoundaryScheme {
        self.scheme
    }

    /// Interpolated links that use simple bounce-back because `x_f2` is solid.
    pub fn fallback_links(&self) -> usize {
        self.fallback_links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Populations currently stored at `cell`.
    pub fn populations(&self, cell: usize) -> [f64; Q] {
        let n = self.cell_count();
        std::array::from_fn(|k| self.cur[k * n + cell])
    }

    pub fn set_populations(&mut self, cell: usize, f: &[f64; Q]) {
        let n = self.cell_count();
        for k in 0..Q {
            self.cur[k * n + cell] = f[k];
        }
    }

    /// Sets every fluid cell to `equilibrium(δρ, u)`.
    pub fn fill_equilibrium(&mut self, delta_rho: f64, u: [f64; 3]) {
        let feq = lattice::equilibrium(delta_rho, u);
        for cell in 0..self.cell_count() {
            if self.kinds[cell] != KIND_SOLID {
                self.set_populations(cell, &feq);
            }
        }
    }

    /// Sum of all fluid populations.
    pub fn total_mass(&self) -> f64 {
        let n = self.cell_count();
        (0..n)
            .filter(|&c| self.kinds[c] != KIND_SOLID)
            .map(|c| (0..Q).map(|k| self.cur[k * n + c]).sum::<f64>())
            .sum()
    }

    /// Advances one time step: stream with wall rules, then collide.
    pub fn step<C: Collision>(&mut self, collision: &C) -> Result<()> {
        let max_usq = self.sweep(Some(collision));
        std::mem::swap(&mut self.cur, &mut self.next);
        self.steps += 1;
        self.check(max_usq)
    }

    /// Streaming half of a step: the current buffer afterwards holds the
    /// pre-collision populations.
    pub fn stream(&mut self) {
        self.sweep::<TrtCollision>(None);
        std::mem::swap(&mut self.cur, &mut self.next);
    }

    /// Collision half of a step, in place on the current buffer.
    pub fn collide<C: Collision>(&mut self, collision: &C) -> Result<()> {
        let n = self.cell_count();
        let plane = self.dims[0] * self.dims[1];
        let kinds = &self.kinds;
        let mut pops: Vec<&mut [f64]> = self.cur.chunks_mut(n).collect();
        let mut max_usq: f64 = 0.0;
        for cell in 0..n {
            if kinds[cell] == KIND_SOLID {
                continue;
            }
            let mut f: [f64; Q] = std::array::from_fn(|k| pops[k][cell]);
            let usq = collision.collide(cell / plane, &mut f);
            max_usq = fold_max(max_usq, usq, &f);
            for k in 0..Q {
                pops[k][cell] = f[k];
            }
        }
        self.steps += 1;
        self.check(max_usq)
    }

    fn check(&self, max_usq: f64) -> Result<()> {
        if max_usq <= MAX_VELOCITY_SQ {
            Ok(())
        } else if max_usq.is_nan() {
            Err(Error::Instability {
                step: self.steps,
                detail: "non-finite population".into(),
            })
        } else {
            Err(Error::Instability {
                step: self.steps,
                detail: format!(
                    "velocity magnitude {:.4} exceeds {} c_s",
                    max_usq.sqrt(),
                    lattice::MAX_MACH
                ),
            })
        }
    }

    /// Pre-collision populations of one fluid cell, as the next step would
    /// see them.
    fn gather(&self, cell: usize, tables: &WrapTables) -> [f64; Q] {
        let n = self.cell_count();
        let [x, y, z] = cell_coords(self.dims, cell);
        let mut f = [0.0; Q];
        for j in 0..Q {
            let e = VELOCITIES[j];
            let src = tables.index(x, y, z, e);
            f[j] = self.cur[j * n + src];
        }
        if self.kinds[cell] == KIND_BOUNDARY {
            let links = &self.links[self.link_start[cell] as usize..self.link_start[cell + 1] as usize];
            for l in links {
                f[l.incoming as usize] = self.link_value(cell, l);
            }
        }
        f
    }

    #[inline(always)]
    fn link_value(&self, cell: usize, l: &PackedLink) -> f64 {
        let n = self.cell_count();
        let k = l.direction as usize;
        let j = l.incoming as usize;
        let post_k = self.cur[k * n + cell];
        let value = match self.scheme {
            BoundaryScheme::Sbb => crate::boundary::sbb_rule(post_k),
            BoundaryScheme::Cli => crate::boundary::cli_rule(
                l.coefficient,
                self.cur[k * n + l.second as usize],
                self.cur[j * n + cell],
                post_k,
            ),
        };
        value + l.wall_term
    }

    /// Velocity of every cell (zero in solids), evaluated from the
    /// populations the next collision would receive.
    pub fn velocity_field<C: Collision>(&self, collision: &C) -> Vec<[f64; 3]> {
        let tables = WrapTables::new(self.dims);
        let plane = self.dims[0] * self.dims[1];
        (0..self.cell_count())
            .into_par_iter()
            .map(|cell| {
                if self.kinds[cell] == KIND_SOLID {
                    [0.0; 3]
                } else {
                    collision.velocity(cell / plane, &self.gather(cell, &tables))
                }
            })
            .collect()
    }

    /// Density fluctuation of every cell (zero in solids).
    pub fn density_field(&self) -> Vec<f64> {
        let tables = WrapTables::new(self.dims);
        (0..self.cell_count())
            .into_par_iter()
            .map(|cell| {
                if self.kinds[cell] == KIND_SOLID {
                    0.0
                } else {
                    self.gather(cell, &tables).iter().sum()
                }
            })
            .collect()
    }

    /// Streams (and collides when `collision` is given) from `cur` into
    /// `next`; returns the largest `|u|²` seen.
    fn sweep<C: Collision>(&mut self, collision: Option<&C>) -> f64 {
        let n = self.cell_count();
        let [nx, ny, nz] = self.dims;
        let plane = nx * ny;
        let planes_per_chunk = (nz / (4 * rayon::current_num_threads()).max(1)).max(1);
        let chunk = planes_per_chunk * plane;
        let mut next = std::mem::take(&mut self.next);
        let mut per_pop: Vec<std::slice::ChunksMut<'_, f64>> =
            next.chunks_mut(n).map(|p| p.chunks_mut(chunk)).collect();
        let chunks: Vec<(usize, Vec<&mut [f64]>)> = (0..nz.div_ceil(planes_per_chunk))
            .map(|c| (c, per_pop.iter_mut().map(|it| it.next().unwrap()).collect()))
            .collect();
        let this = &*self;
        let tables = WrapTables::new(this.dims);
        let max_usq = chunks
            .into_par_iter()
            .map(|(c, mut out)| {
                let z0 = c * planes_per_chunk;
                let z1 = (z0 + planes_per_chunk).min(nz);
                let mut max_usq: f64 = 0.0;
                for z in z0..z1 {
                    for y in 0..ny {
                        let rows = tables.rows(y, z);
                        for x in 0..nx {
                            let cell = x + nx * (y + ny * z);
                            let kind = this.kinds[cell];
                            if kind == KIND_SOLID {
                                continue;
                            }
                            let mut f = [0.0; Q];
                            for j in 0..Q {
                                let e = VELOCITIES[j];
                                let src = rows[((1 - e[2]) * 3 + (1 - e[1])) as usize]
                                    + tables.x[(x as i64 + 1 - e[0] as i64) as usize];
                                f[j] = this.cur[j * n + src];
                            }
                            if kind == KIND_BOUNDARY {
                                let s = this.link_start[cell] as usize;
                                let e = this.link_start[cell + 1] as usize;
                                for l in &this.links[s..e] {
                                    f[l.incoming as usize] = this.link_value(cell, l);
                                }
                            }
                            if let Some(col) = collision {
                                let usq = col.collide(z, &mut f);
                                max_usq = fold_max(max_usq, usq, &f);
                            }
                            let local = cell - z0 * plane;
                            for k in 0..Q {
                                out[k][local] = f[k];
                            }
                        }
                    }
                }
                max_usq
            })
            .reduce(|| 0.0, fold_max_pair);
        self.next = next;
        max_usq
    }
}

#[inline(always)]
fn fold_max(acc: f64, usq: f64, f: &[f64; Q]) -> f64 {
    // NaN anywhere in the populations poisons the reduction.
    let s: f64 = f.iter().sum();
    if !(usq.is_finite() && s.is_finite()) {
        f64::NAN
    } else {
        fold_max_pair(acc, usq)
    }
}

#[inline(always)]
fn fold_max_pair(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Precomputed periodic index arithmetic. Non-periodic faces also wrap; the
/// wrapped value is always replaced by a wall link.
struct WrapTables {
    nx: usize,
    ny: usize,
    x: Vec<usize>,
    y: Vec<usize>,
    z: Vec<usize>,
}

impl WrapTables {
    fn new(dims: [usize; 3]) -> Self {
        Self {
            nx: dims[0],
            ny: dims[1],
            x: wrap_table(dims[0]),
            y: wrap_table(dims[1]),
            z: wrap_table(dims[2]),
        }
    }

    /// Row starts for source offsets `(−e_y, −e_z)`, indexed by
    /// `(1 − e_z)·3 + (1 − e_y)`.
    #[inline]
    fn rows(&self, y: usize, z: usize) -> [usize; 9] {
        let mut r = [0; 9];
        for dz in 0..3 {
            for dy in 0..3 {
                let sy = self.y[y + dy];
                let sz = self.z[z + dz];
                r[dz * 3 + dy] = self.nx * (sy + self.ny * sz);
            }
        }
        r
    }

    #[inline]
    fn index(&self, x: usize, y: usize, z: usize, e: [i32; 3]) -> usize {
        let sx = self.x[(x as i64 + 1 - e[0] as i64) as usize];
        let sy = self.y[(y as i64 + 1 - e[1] as i64) as usize];
        let sz = self.z[(z as i64 + 1 - e[2] as i64) as usize];
        sx + self.nx * (sy + self.ny * sz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cell_index, SpherePack};
    use crate::lattice::{set_relaxation_from_magic, WEIGHTS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn periodic_box(n: usize) -> VoxelGeometry {
        let pack = SpherePack::empty([n as f64; 3]);
        crate::geometry::voxelize(&pack, [n; 3], [true; 3]).unwrap()
    }

    #[test]
    fn single_population_advects() {
        let g = periodic_box(5);
        let mut field = LatticeField::new(&g, BoundaryScheme::Sbb).unwrap();
        let k = 7;
        let start = cell_index(g.dims, 1, 2, 3);
        let mut f = [0.0; Q];
        f[k] = 1.0;
        field.set_populations(start, &f);
        let steps = 7;
        for _ in 0..steps {
            field.stream();
        }
        let e = VELOCITIES[k];
        let pos: Vec<usize> = [1, 2, 3]
            .iter()
            .zip(e)
            .map(|(&c, d)| (c as i64 + steps * d as i64).rem_euclid(5) as usize)
            .collect();
        let end = cell_index(g.dims, pos[0], pos[1], pos[2]);
        assert_eq!(field.populations(end)[k], 1.0);
        assert_eq!(field.total_mass(), 1.0);
    }

    #[test]
    fn stream_matches_gather_oracle() {
        let g = periodic_box(4);
        let mut field = LatticeField::new(&g, BoundaryScheme::Sbb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 64;
        let before: Vec<[f64; Q]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        for (c, f) in before.iter().enumerate() {
            field.set_populations(c, f);
        }
        field.stream();
        for z in 0..4i64 {
            for y in 0..4i64 {
                for x in 0..4i64 {
                    let cell = cell_index(g.dims, x as usize, y as usize, z as usize);
                    let f = field.populations(cell);
                    for k in 0..Q {
                        let e = VELOCITIES[k];
                        let src = cell_index(
                            g.dims,
                            (x - e[0] as i64).rem_euclid(4) as usize,
                            (y - e[1] as i64).rem_euclid(4) as usize,
                            (z - e[2] as i64).rem_euclid(4) as usize,
                        );
                        assert_eq!(f[k], before[src][k]);
                    }
                }
            }
        }
    }

    #[test]
    fn step_equals_stream_then_collide() {
        let mut g = VoxelGeometry::channel(3, 2, 6).unwrap();
        g.set_top_wall_velocity([0.01, 0.0, 0.0]);
        let params = set_relaxation_from_magic(0.1, 3.0 / 16.0).unwrap().with_body_force([1e-5, 0.0, 0.0]);
        let col = TrtCollision::new(params);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scheme in [BoundaryScheme::Sbb, BoundaryScheme::Cli] {
            let mut a = LatticeField::new(&g, scheme).unwrap();
            for c in 0..a.cell_count() {
                let f: [f64; Q] = std::array::from_fn(|k| WEIGHTS[k] * (1.0 + rng.gen_range(-0.01..0.01)));
                a.set_populations(c, &f);
            }
            let mut b = a.clone();
            for _ in 0..3 {
                a.step(&col).unwrap();
                b.stream();
                b.collide(&col).unwrap();
            }
            assert_eq!(a.cur, b.cur);
        }
    }

    #[test]
    fn rest_state_is_stationary_with_walls() {
        let g = VoxelGeometry::channel(2, 2, 5).unwrap();
        let params = set_relaxation_from_magic(1.0 / 6.0, 3.0 / 16.0).unwrap();
        let col = TrtCollision::new(params);
        let mut field = LatticeField::new(&g, BoundaryScheme::Cli).unwrap();
        field.fill_equilibrium(0.0, [0.0; 3]);
        for _ in 0..5 {
            field.step(&col).unwrap();
        }
        assert!(field.cur.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_is_conserved_in_periodic_box() {
        let g = periodic_box(6);
        let params = set_relaxation_from_magic(0.05, 0.25).unwrap();
        let col = TrtCollision::new(params);
        let mut field = LatticeField::new(&g, BoundaryScheme::Sbb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for c in 0..field.cell_count() {
            let u = [rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), 0.0];
            field.set_populations(c, &lattice::equilibrium(rng.gen_range(-0.01..0.01), u));
        }
        let m0 = field.total_mass();
        for _ in 0..20 {
            field.step(&col).unwrap();
        }
        assert!((field.total_mass() - m0).abs() < 1e-13);
    }

    #[test]
    fn instability_is_reported() {
        let g = periodic_box(3);
        let params = set_relaxation_from_magic(0.1, 0.25).unwrap();
        let col = TrtCollision::new(params);
        let mut field = LatticeField::new(&g, BoundaryScheme::Sbb).unwrap();
        field.fill_equilibrium(0.0, [0.3, 0.0, 0.0]);
        assert!(matches!(field.step(&col), Err(Error::Instability { .. })));
        let mut field = LatticeField::new(&g, BoundaryScheme::Sbb).unwrap();
        let mut f = [0.0; Q];
        f[3] = f64::NAN;
        field.set_populations(0, &f);
        assert!(matches!(field.step(&col), Err(Error::Instability { .. })));
    }

    #[test]
    fn fallback_count_is_deterministic() {
        // Thin solid slab with one fluid layer between it and the wall.
        let dims = [3, 3, 4];
        let mut flags = vec![CellFlag::Fluid; 36];
        for c in 0..9 {
            flags[c + 18] = CellFlag::Solid;
        }
        let g = VoxelGeometry::from_flags(dims, [true, true, false], flags, |_, _, _| 0.3).unwrap();
        let a = LatticeField::new(&g, BoundaryScheme::Cli).unwrap();
        let b = LatticeField::new(&g, BoundaryScheme::Cli).unwrap();
        assert!(a.fallback_links() > 0);
        assert_eq!(a.fallback_links(), b.fallback_links());
        assert_eq!(LatticeField::new(&g, BoundaryScheme::Sbb).unwrap().fallback_links(), 0);
    }
}
