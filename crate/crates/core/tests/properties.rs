use approx::assert_abs_diff_eq;
use flowforge::factor::compile_affine;
use flowforge::model::{from_json, to_json};
use flowforge::relu::{eval_leaky, vector_leaky_flow, LeakySpec};
use flowforge::{
    eval_step, BoxDomain, Family, FlowProgram, FlowStep, Matrix, PrimitiveField, Vector,
};
use proptest::prelude::*;

fn vector(d: usize, r: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-r..r, d).prop_map(Vector::from_vec)
}

fn matrix(d: usize, r: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-r..r, d * d).prop_map(move |v| Matrix::from_row_slice(d, d, &v))
}

fn field(d: usize) -> impl Strategy<Value = PrimitiveField> {
    prop_oneof![
        Just(PrimitiveField::Relu),
        Just(PrimitiveField::NegRelu),
        (matrix(d, 1.0), vector(d, 1.0)).prop_map(|(a, b)| PrimitiveField::affine(a, b).unwrap()),
    ]
}

fn program(d: usize) -> impl Strategy<Value = FlowProgram> {
    prop::collection::vec((field(d), 0.0..1.0), 0..6).prop_map(move |steps| {
        let steps = steps
            .into_iter()
            .map(|(f, t)| FlowStep::new(f, t))
            .collect();
        FlowProgram::minimal(d, steps).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flows_form_a_one_parameter_group(
        (f, x) in (1usize..4).prop_flat_map(|d| (field(d), vector(d, 2.0))),
        s in 0.0..0.7f64,
        t in 0.0..0.7f64,
    ) {
        let split = eval_step(&FlowStep::new(f.clone(), t), &eval_step(&FlowStep::new(f.clone(), s), &x).unwrap()).unwrap();
        let joint = eval_step(&FlowStep::new(f, s + t), &x).unwrap();
        assert_abs_diff_eq!(split, joint, epsilon = 1e-10);
    }

    #[test]
    fn backward_flow_inverts_forward_flow(
        (f, x) in (1usize..4).prop_flat_map(|d| (field(d), vector(d, 2.0))),
        t in 0.0..1.0f64,
    ) {
        let y = eval_step(&FlowStep::new(f.clone(), t), &x).unwrap();
        let back = eval_step(&FlowStep::new(f.negated(), t), &y).unwrap();
        assert_abs_diff_eq!(back, x, epsilon = 1e-10);
    }

    #[test]
    fn affine_factorization_reproduces_the_map(
        (w, b, x) in (2usize..5).prop_flat_map(|d| (matrix(d, 2.0), vector(d, 2.0), vector(d, 3.0))),
    ) {
        let det = w.determinant();
        prop_assume!(det > 0.05);
        let f = compile_affine(&w, &b).unwrap();
        prop_assert_eq!(f.program.family(), Family::F0);
        assert_abs_diff_eq!(f.program.eval(&x).unwrap(), &w * &x + &b, epsilon = 1e-8);
    }

    #[test]
    fn leaky_program_matches_componentwise_map(
        (alpha, x) in (2usize..4).prop_flat_map(|d| {
            (prop::collection::vec(0.1..5.0f64, d).prop_map(Vector::from_vec), vector(d, 2.0))
        }),
    ) {
        let domain = BoxDomain::cube(alpha.len(), -2.0, 2.0).unwrap();
        let p = vector_leaky_flow(&LeakySpec::new(alpha.clone(), domain).unwrap()).unwrap();
        assert_abs_diff_eq!(p.eval(&x).unwrap(), eval_leaky(&alpha, &x), epsilon = 1e-9);
    }

    #[test]
    fn json_round_trip_is_exact(
        (p, x) in (1usize..4).prop_flat_map(|d| (program(d), vector(d, 2.0))),
    ) {
        let text = to_json(&p);
        let back = from_json(&text).unwrap();
        prop_assert_eq!(to_json(&back), text);
        let (a, b) = (p.eval(&x).unwrap(), back.eval(&x).unwrap());
        prop_assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn box_image_encloses_point_images(
        (p, seeds) in (1usize..4).prop_flat_map(|d| {
            (program(d), prop::collection::vec(vector(d, 1.0), 10))
        }),
    ) {
        let domain = BoxDomain::cube(p.dim(), -1.0, 1.0).unwrap();
        let image = p.box_image(&domain).unwrap();
        for x in &seeds {
            let y = p.eval(x).unwrap();
            prop_assert!(image.contains(&y, 1e-9), "{} escapes {:?}", y, image);
        }
    }
}

#[test]
fn composition_evaluates_in_order() {
    let shift = FlowProgram::minimal(
        1,
        vec![FlowStep::new(
            PrimitiveField::translation(Vector::from_element(1, -1.0)).unwrap(),
            1.0,
        )],
    )
    .unwrap();
    let relu =
        FlowProgram::minimal(1, vec![FlowStep::new(PrimitiveField::Relu, 2f64.ln())]).unwrap();
    let both = shift.compose(&relu).unwrap();
    assert_eq!(both.len(), 2);
    assert_eq!(both.family(), Family::F1);
    let x = Vector::from_element(1, 3.0);
    assert_abs_diff_eq!(both.eval(&x).unwrap()[0], 4.0, epsilon = 1e-12);
    assert_abs_diff_eq!(
        relu.compose(&shift).unwrap().eval(&x).unwrap()[0],
        5.0,
        epsilon = 1e-12
    );
}
