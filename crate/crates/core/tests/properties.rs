use porous_lbm::boundary::{cli_coefficient, cli_rule, sbb_rule, BoundaryScheme};
use porous_lbm::field::{Collision, LatticeField, TrtCollision};
use porous_lbm::geometry::{voxelize, Sphere, SpherePack};
use porous_lbm::lattice::{equilibrium, moments, set_relaxation_from_magic, Q, VELOCITIES_F};
use porous_lbm::scenario::{Overrides, Scenario};
use proptest::prelude::*;

fn populations() -> impl Strategy<Value = [f64; Q]> {
    prop::array::uniform19(-0.05f64..0.05)
}

proptest! {
    #[test]
    fn collision_conserves_mass_and_adds_the_force(
        f in populations(),
        nu in 0.005f64..2.0,
        lambda in 0.01f64..2.0,
        g in prop::array::uniform3(-1e-3f64..1e-3),
    ) {
        let params = set_relaxation_from_magic(nu, lambda).unwrap().with_body_force(g);
        let mut out = f;
        TrtCollision::new(params).collide(0, &mut out);
        let (m0, j0) = moments(&f);
        let (m1, j1) = moments(&out);
        prop_assert!((m1 - m0).abs() <= 1e-14);
        for a in 0..3 {
            prop_assert!((j1[a] - j0[a] - g[a]).abs() <= 1e-14);
        }
    }

    #[test]
    fn half_way_cli_is_simple_bounce_back(f2 in -1.0f64..1.0, fbar in -1.0f64..1.0, fk in -1.0f64..1.0) {
        prop_assert_eq!(cli_rule(cli_coefficient(0.5), f2, fbar, fk), sbb_rule(fk));
    }

    #[test]
    fn cli_coefficient_stays_bounded(q in 0.05f64..=1.0) {
        let c = cli_coefficient(q);
        prop_assert!((-1.0 / 3.0..=0.82).contains(&c));
    }

    #[test]
    fn equilibrium_moments(rho in -0.5f64..0.5, u in prop::array::uniform3(-0.1f64..0.1)) {
        let feq = equilibrium(rho, u);
        let (d, m) = moments(&feq);
        prop_assert!((d - rho).abs() <= 1e-14);
        for a in 0..3 {
            prop_assert!((m[a] - u[a]).abs() <= 1e-14);
        }
        let mut pi = [[0.0; 3]; 3];
        for k in 0..Q {
            for a in 0..3 {
                for b in 0..3 {
                    pi[a][b] += VELOCITIES_F[k][a] * VELOCITIES_F[k][b] * feq[k];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { rho / 3.0 } else { 0.0 } + u[a] * u[b];
                prop_assert!((pi[a][b] - expect).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn scenario_echo_round_trips(
        nu in 0.01f64..1.0,
        lambda in 0.05f64..1.0,
        tol in 1e-14f64..1e-4,
        height in 2usize..200,
        force in 1e-9f64..1e-3,
        seed in any::<u64>(),
        scheme in prop::bool::ANY,
    ) {
        let text = format!(
            "[scenario]\nkind = poiseuille\nseed = {seed}\n[fluid]\nnu = {nu}\nlambda_magic = {lambda}\n\
             [solver]\ntolerance = {tol}\nscheme = {}\n[domain]\nheight = {height}\n[drive]\nforce = {force}\n",
            if scheme { "cli" } else { "sbb" }
        );
        let a = Scenario::parse(&text, std::path::Path::new("a.cfg"), &Overrides::default()).unwrap();
        let b = Scenario::parse(&a.echo, std::path::Path::new("b.cfg"), &Overrides::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bounce_back_conserves_total_mass(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pack = SpherePack::empty([8.0; 3]);
        pack.spheres.push(Sphere { center: [4.0, 3.7, 4.2], radius: 2.3 });
        let geom = voxelize(&pack, [8; 3], [true; 3]).unwrap();
        let mut field = LatticeField::new(&geom, BoundaryScheme::Sbb).unwrap();
        for cell in 0..geom.cell_count() {
            let mut f = [0.0; Q];
            for v in &mut f {
                *v = rng.gen_range(-0.01..0.01);
            }
            field.set_populations(cell, &f);
        }
        let before = field.total_mass();
        let collision = TrtCollision::new(set_relaxation_from_magic(0.1, 3.0 / 16.0).unwrap());
        for _ in 0..5 {
            field.step(&collision).unwrap();
        }
        prop_assert!((field.total_mass() - before).abs() <= 1e-13);
    }
}
