use proptest::prelude::*;
use sllg_core::diagnostics::solve_phi;
use sllg_core::fem::{check_offdiag_condition, normalize_nodal};
use sllg_core::rotation::{cross_right, expm_skew, Mat3, NoiseCoefficients, RotationField};
use sllg_core::scheme::TangentFrame;
use sllg_core::{Mesh, NodalField3, P1Space, Vec3, WienerPath};

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-2.0f64..2.0).prop_map(Vec3::from)
}

fn unit3() -> impl Strategy<Value = Vec3> {
    vec3()
        .prop_filter("away from zero", |v| v.norm() > 1e-3)
        .prop_map(|v| v.normalize())
}

fn space(dim: usize, n: usize) -> P1Space {
    P1Space::new(Mesh::structured(dim, n).unwrap()).unwrap()
}

/// Nodal field with |u_n| ≥ 1 at every node.
fn long_field(n: usize) -> impl Strategy<Value = NodalField3> {
    prop::collection::vec((unit3(), 1.0f64..3.0), n)
        .prop_map(|v| NodalField3(v.into_iter().map(|(d, r)| d * r).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalization_does_not_increase_dirichlet_energy(u in long_field(25)) {
        let sp = space(2, 4);
        prop_assume!(check_offdiag_condition(&sp, 1e-14).holds);
        let before = sp.dirichlet_energy(&u);
        let after = sp.dirichlet_energy(&normalize_nodal(&u).unwrap());
        prop_assert!(after <= before * (1.0 + 1e-12), "{after} > {before}");
    }

    #[test]
    fn tangent_frame_is_orthonormal(m in prop::collection::vec(unit3(), 1..20)) {
        let f = TangentFrame::build(&NodalField3(m.clone())).unwrap();
        for (t, v) in f.0.iter().zip(&m) {
            prop_assert!((t[0].norm() - 1.0).abs() < 1e-13);
            prop_assert!((t[1].norm() - 1.0).abs() < 1e-13);
            prop_assert!(t[0].dot(&t[1]).abs() < 1e-13);
            prop_assert!(t[0].dot(v).abs() < 1e-13 && t[1].dot(v).abs() < 1e-13);
        }
    }

    #[test]
    fn frame_project_inverts_expand(m in prop::collection::vec(unit3(), 1..10), c in prop::collection::vec(-3.0f64..3.0, 20)) {
        let f = TangentFrame::build(&NodalField3(m.clone())).unwrap();
        let c = &c[..2 * m.len()];
        let back = f.project(&f.expand(c));
        for (a, b) in back.iter().zip(c) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn expm_matches_rodrigues(g in vec3()) {
        // cross_right(g) u = u × g = (−g) × u: rotation about −g by |g|
        let w = -g;
        let theta = w.norm();
        prop_assume!(theta > 1e-6);
        let k = w / theta;
        let kx = Mat3::new(0.0, -k[2], k[1], k[2], 0.0, -k[0], -k[1], k[0], 0.0);
        let r = Mat3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos());
        prop_assert!((expm_skew(&cross_right(&g)) - r).norm() < 1e-13);
    }

    #[test]
    fn rotation_is_isometric_homomorphism(seed in any::<u64>(), u in vec3(), v in vec3()) {
        let sp = space(2, 2);
        let mut field = RotationField::new(&sp, &NoiseCoefficients::pair_noncommuting(1.0), 0.05);
        field.evolve_to(&WienerPath::sample(seed, 2, 20, 1.0).unwrap(), 20).unwrap();
        for n in 0..field.n_nodes() {
            let z = field.node_state(n).z;
            prop_assert!(((z * u).norm() - u.norm()).abs() < 1e-12);
            prop_assert!((z * u.cross(&v) - (z * u).cross(&(z * v))).norm() < 1e-11);
            prop_assert!((z.determinant() - 1.0).abs() < 1e-12);
        }
        prop_assert!(field.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn f_identity_symmetric_and_additive(seed in any::<u64>(), a in -2.0f64..2.0, c in prop::array::uniform3(vec3())) {
        let sp = space(2, 3);
        let mut field = RotationField::new(&sp, &NoiseCoefficients::linear_gradient(0.7), 0.1);
        field.evolve_to(&WienerPath::sample(seed, 1, 10, 1.0).unwrap(), 10).unwrap();
        let mk = |c: Vec3, s: f64| NodalField3(sp.mesh().vertices().iter().map(|x| {
            Vec3::new((s * x[0]).sin() + c[0], x[1] * c[1], c[2] * x[0] * x[1])
        }).collect());
        let (u1, u2, v) = (mk(c[0], 1.0), mk(c[1], 2.0), mk(c[2], 3.0));
        let f = |u: &NodalField3, v: &NodalField3| field.compute_f_identity(&sp, u, v).unwrap();
        let scale = 1.0 + f(&u1, &u1).abs() + f(&v, &v).abs();
        prop_assert!((f(&u1, &v) - f(&v, &u1)).abs() < 1e-12 * scale);
        let lhs = f(&u1.axpy(a, &u2), &v);
        prop_assert!((lhs - f(&u1, &v) - a * f(&u2, &v)).abs() < 1e-12 * scale * (1.0 + a.abs()));
    }

    #[test]
    fn solve_phi_inverts_the_map(l1 in 0.05f64..3.0, neg in any::<bool>(), l2 in 0.0f64..3.0, zeta in unit3(), psi in vec3()) {
        let l1 = if neg { -l1 } else { l1 };
        let phi = solve_phi(l1, l2, &zeta, &psi).unwrap();
        prop_assert!((phi * l1 + phi.cross(&zeta) * l2 - psi).norm() < 1e-12);
    }
}

#[test]
fn solve_phi_rejects_bad_input() {
    assert!(solve_phi(0.0, 1.0, &Vec3::z(), &Vec3::x()).is_err());
    assert!(solve_phi(1.0, 1.0, &Vec3::new(0.0, 0.0, 2.0), &Vec3::x()).is_err());
}
