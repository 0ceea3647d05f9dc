use cat_core::manifolds::{exp0, ops, project_ball, sphere_exp_mu, sphere_log_mu, sphere_project, PoincarePoint, TangentVector};
use cat_core::tensor::{grad_check, Graph, Tensor};
use cat_core::Error;
use proptest::prelude::*;

fn ball_point(v: &[f64], radius: f64) -> PoincarePoint<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    PoincarePoint::new(v.iter().map(|x| x * radius / n).collect(), 1.0).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn scalar_multiplication_matches_repeated_addition() {
    let x = ball_point(&[0.3, -0.2, 0.5], 0.6);
    let two = x.mobius_add(&x).unwrap();
    let three = two.mobius_add(&x).unwrap();
    assert!(close(x.mobius_scalar_mul(2.0).coords(), two.coords(), 1e-9));
    assert!(close(x.mobius_scalar_mul(3.0).coords(), three.coords(), 1e-9));
    assert!(close(x.mobius_scalar_mul(1.0).coords(), x.coords(), 1e-15));
    assert_eq!(x.mobius_scalar_mul(0.0).norm(), 0.0);
}

#[test]
fn distance_rejects_curvature_mismatch() {
    let a = PoincarePoint::new(vec![0.1, 0.0], 1.0).unwrap();
    let b = PoincarePoint::new(vec![0.1, 0.0], 2.0).unwrap();
    assert!(matches!(a.distance(&b), Err(Error::InvalidConfig(_))));
}

#[test]
fn distance_closed_form_on_an_axis() {
    let o = PoincarePoint::origin(2, 1.0);
    for r in [0.1f64, 0.5, 0.9] {
        let d = o.distance(&PoincarePoint::new(vec![r, 0.0], 1.0).unwrap()).unwrap();
        assert!((d - 2.0 * r.atanh()).abs() < 1e-13);
    }
}

#[test]
fn sphere_examples() {
    assert_eq!(sphere_project(&[0.0, 3.0]).unwrap().coords(), &[0.0, 1.0]);
    let u = sphere_project(&[0.6, 0.8]).unwrap();
    assert!(close(sphere_project(u.coords()).unwrap().coords(), u.coords(), 1e-16));
    assert!(matches!(sphere_project(&[0.0, 0.0]), Err(Error::Domain(_))));

    let a = sphere_exp_mu(&TangentVector::new(vec![0.4, -1.0, 0.0]));
    let b = sphere_exp_mu(&TangentVector::new(vec![-2.0, 0.3, 0.0]));
    let mix: Vec<f64> = a.coords().iter().zip(b.coords()).map(|(x, y)| 0.3 * x + 0.7 * y).collect();
    assert!(mix.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0);
    let p = sphere_project(&mix).unwrap();
    assert!((p.coords().iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-15);
}

#[test]
fn sphere_log_is_accurate_near_the_pole() {
    for n in [1e-9, 1e-6, 4e-4, 1e-2] {
        let v = TangentVector::new(vec![n * 0.6, n * 0.8, 0.0]);
        let back = sphere_log_mu(&sphere_exp_mu(&v)).unwrap();
        assert!(close(&back.coords, &v.coords, 1e-15), "norm {n}: {:?}", back.coords);
    }
}

#[test]
fn graph_maps_agree_with_point_api() {
    let x = ball_point(&[0.2, 0.7, -0.1], 0.8);
    let y = ball_point(&[-0.5, 0.1, 0.3], 0.45);
    let mut g = Graph::new();
    let xv = g.constant(Tensor::new(vec![1, 3], x.coords().to_vec()).unwrap());
    let yv = g.constant(Tensor::new(vec![1, 3], y.coords().to_vec()).unwrap());
    let sum = ops::mobius_add(&mut g, xv, yv, 1.0).unwrap();
    assert!(close(g.value(sum).data(), x.mobius_add(&y).unwrap().coords(), 1e-14));
    let d = ops::poincare_distance(&mut g, xv, yv, 1.0).unwrap();
    assert!((g.value(d).data()[0] - x.distance(&y).unwrap()).abs() < 1e-12);
    let l = ops::log0(&mut g, xv, 1.0).unwrap();
    assert!(close(g.value(l).data(), &x.log0().coords, 1e-14));
    let p = ops::project_ball(&mut g, l, 1.0).unwrap();
    assert!(close(g.value(p).data(), project_ball(&x.log0().coords, 1.0).coords(), 1e-14));
}

#[test]
fn poincare_distance_passes_grad_check_at_interior_points() {
    let x = Tensor::from_f64(&[2, 3], &[0.1, 0.4, -0.2, 0.6, -0.3, 0.1]).unwrap();
    let y = Tensor::from_f64(&[2, 3], &[-0.5, 0.2, 0.3, 0.0, 0.1, 0.7]).unwrap();
    let rep = grad_check(
        |g, v| {
            let d = ops::poincare_distance(g, v[0], v[1], 1.0)?;
            Ok(g.sum(d))
        },
        &[x, y],
        1e-5,
    );
    assert!(rep.passed(1e-4), "{rep:?}");
}

#[test]
fn sphere_log_rejects_antipode_on_graph() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::from_f64(&[1, 3], &[0.0, 0.0, -1.0]).unwrap());
    assert!(matches!(ops::sphere_log_mu(&mut g, x), Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn ball_round_trips(v in prop::collection::vec(-1.0f64..1.0, 4), r in 0.0f64..3.0) {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let t = TangentVector::new(v.iter().map(|x| x * r / n).collect());
        let back = exp0(&t, 1.0).log0();
        prop_assert!(close(&back.coords, &t.coords, 1e-8));
    }

    #[test]
    fn sphere_round_trips_and_unit_norm(v in prop::collection::vec(-1.0f64..1.0, 4), r in 0.0f64..3.0) {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let mut c: Vec<f64> = v.iter().map(|x| x * r / n).collect();
        c.push(0.0);
        let t = TangentVector::new(c);
        let p = sphere_exp_mu(&t);
        prop_assert!((p.coords().iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        prop_assert!(close(&sphere_log_mu(&p).unwrap().coords, &t.coords, 1e-8));
    }

    #[test]
    fn distance_is_symmetric_and_vanishes_on_the_diagonal(
        a in prop::collection::vec(-1.0f64..1.0, 3),
        b in prop::collection::vec(-1.0f64..1.0, 3),
        ra in 0.0f64..0.95,
        rb in 0.0f64..0.95,
    ) {
        let x = ball_point(&a, ra);
        let y = ball_point(&b, rb);
        let dxy = x.distance(&y).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - y.distance(&x).unwrap()).abs() <= 1e-12 * dxy.max(1.0));
        prop_assert_eq!(x.distance(&x).unwrap(), 0.0);
    }

    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-20.0f64..20.0, 3)) {
        let p = project_ball(&v, 1.0);
        prop_assert!(p.norm() <= 1.0 - 1e-5 + 1e-15);
        let q = project_ball(p.coords(), 1.0);
        prop_assert_eq!(q.coords(), p.coords());
    }
}
