use porous_lbm::geometry::{voxelize, CellFlag, Sphere, SpherePack};
use porous_lbm::output::save_velocity_vtk;
use porous_lbm::profile::ProfileData;
use porous_lbm::scenario::{Overrides, Scenario};
use vtkio::model::{Attribute, DataSet, Extent, Piece};

#[test]
fn vtk_is_readable_by_a_third_party_parser() {
    let dims = [5, 4, 3];
    let mut pack = SpherePack::empty([5.0, 4.0, 3.0]);
    pack.spheres.push(Sphere {
        center: [2.5, 2.0, 1.5],
        radius: 1.2,
    });
    let geom = voxelize(&pack, dims, [true, true, false]).unwrap();
    let velocity: Vec<[f64; 3]> = (0..geom.cell_count()).map(|i| [i as f64 * 1e-3, -(i as f64) / 7.0, 0.25]).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.vtk");
    save_velocity_vtk(&path, dims, &geom.flags, &velocity).unwrap();

    let vtk = vtkio::Vtk::import(&path).unwrap();
    let DataSet::ImageData {
        extent,
        origin,
        spacing,
        pieces,
        ..
    } = vtk.data
    else {
        panic!("expected structured points");
    };
    assert_eq!(extent, Extent::Dims([5, 4, 3]));
    assert_eq!(origin, [0.5; 3]);
    assert_eq!(spacing, [1.0; 3]);
    let Piece::Inline(piece) = &pieces[0] else {
        panic!("expected inline data");
    };
    let mut seen = 0;
    for attr in &piece.data.point {
        let Attribute::DataArray(a) = attr else { continue };
        let values: Vec<f64> = a.data.clone().cast_into().unwrap();
        match a.name.as_str() {
            "flag" => {
                assert_eq!(values.len(), 60);
                let solid = geom.flags.iter().filter(|&&f| f == CellFlag::Solid).count();
                assert_eq!(values.iter().filter(|&&v| v == 1.0).count(), solid);
                seen += 1;
            }
            "velocity" => {
                assert_eq!(values.len(), 180);
                let flat: Vec<f64> = velocity.iter().flatten().copied().collect();
                assert_eq!(values, flat);
                seen += 1;
            }
            other => panic!("unexpected array {other}"),
        }
    }
    assert_eq!(seen, 2);
}

#[test]
fn profile_csv_names_columns_with_units() {
    let p = ProfileData::from_superficial(vec![0.5, 1.5], vec![1e-6, 2e-6], vec![0.5, 1.0], 2.0);
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "z[lu],U_superficial[lu/step],U_intrinsic[lu/step],epsilon[-],U_normalized[-]"
    );
    let q = ProfileData::read_csv(text.as_bytes()).unwrap();
    assert_eq!(q.u_superficial, p.u_superficial);
    assert_eq!(q.porosity, p.porosity);
}

fn run_once(dir: &std::path::Path) -> Vec<u8> {
    let text = format!(
        "[scenario]\nkind = sphere_pack_dns\nseed = 4\noutput_dir = {}\n\
         [packing]\nbox_x = 12\nbox_y = 12\nbox_z = 20\nr_mean = 3\nfill_height = 8\n\
         [solver]\ntolerance = 1e-6\ncheck_interval = 200\n",
        dir.display()
    );
    let s = Scenario::parse(&text, std::path::Path::new("d.cfg"), &Overrides::default()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let outcome = pool.install(|| s.run()).unwrap();
    assert!(outcome.converged);
    std::fs::read(dir.join("profile.csv")).unwrap()
}

#[test]
fn identical_config_gives_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_once(a.path()), run_once(b.path()));
    assert_eq!(
        std::fs::read(a.path().join("packing.csv")).unwrap(),
        std::fs::read(b.path().join("packing.csv")).unwrap()
    );
}

#[test]
fn echoed_config_reruns_from_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("in.csv");
    let z: Vec<f64> = (0..40).map(|i| i as f64 + 0.5).collect();
    let u: Vec<f64> = z.iter().map(|z| z * (40.0 - z) * 1e-6).collect();
    ProfileData::from_superficial(z, u, vec![1.0; 40], 40.0).save_csv(&profile).unwrap();
    let cfg = dir.path().join("fit.cfg");
    std::fs::write(&cfg, "[scenario]\nkind = extract_params\noutput_dir = out\n[input]\nprofile = in.csv\ninterface_z = 10\n").unwrap();
    let a = Scenario::load(&cfg, &Overrides::default()).unwrap();
    let echo = dir.path().join("elsewhere").join("echo.cfg");
    std::fs::create_dir_all(echo.parent().unwrap()).unwrap();
    std::fs::write(&echo, &a.echo).unwrap();
    let b = Scenario::load(&echo, &Overrides::default()).unwrap();
    assert_eq!(a, b);
}
