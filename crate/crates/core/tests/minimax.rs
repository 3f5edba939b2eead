use ps_increments::linalg::c;
use ps_increments::minimax::{
    best_response, constraint_eval, least_favorable_search, objective, saddle_check, AdmissibleClass, Context, FClass,
    GClass, GRadius, MinimaxProblem, SearchOptions,
};
use ps_increments::spectra::{GridDensity, GridInterp, MatrixData, Quadrature, SpectralDensity};
use ps_increments::{CMat, CVec, IncrementSpec};

const CELLS: usize = 6;

fn reference() -> GridDensity {
    let vals = (0..CELLS)
        .map(|i| {
            let x = (i as f64 - 2.5).abs();
            CMat::from_diagonal(&CVec::from_vec(vec![c(0.2 + 0.05 * x), c(0.4 - 0.03 * x)]))
        })
        .collect();
    GridDensity::new(GridInterp::Cell, vals).unwrap()
}

fn diag(a: f64, b: f64) -> MatrixData {
    MatrixData(CMat::from_diagonal(&CVec::from_vec(vec![c(a), c(b)])))
}

fn classes() -> Vec<(FClass, GRadius)> {
    vec![
        (FClass::F1 { p: diag(1.0, 0.5) }, GRadius::G4 { delta: vec![vec![0.05, 0.0], vec![0.0, 0.1]] }),
        (FClass::F2 { p: 1.5 }, GRadius::G1 { delta: 0.1 }),
        (FClass::F3 { p: vec![1.0, 0.5] }, GRadius::G2 { delta: vec![0.05, 0.1] }),
        (FClass::F4 { b1: diag(1.0, 2.0), p: 2.0 }, GRadius::G3 { b2: diag(2.0, 1.0), delta: 0.1 }),
    ]
}

fn problem(f: FClass, g: GRadius) -> MinimaxProblem {
    let spec = IncrementSpec::new(1, 1, 2, 1).unwrap();
    let a = vec![CVec::from_vec(vec![c(1.0), c(0.5)]), CVec::from_vec(vec![c(-0.3), c(0.2)])];
    MinimaxProblem::new(spec, a, f, GClass::new(g, reference()).unwrap(), CELLS).unwrap()
}

#[test]
fn best_response_is_admissible_in_every_class() {
    let quad = Quadrature::default();
    for (fc, gr) in classes() {
        let p = problem(fc.clone(), gr);
        let init = p.default_init().unwrap();
        let ctx = Context::new(p.estimation_problem(&init).unwrap().solve().unwrap());
        let grads = ps_increments::minimax::cell_gradients(&ctx, CELLS, CELLS).unwrap();
        let br = best_response(&grads, &p).unwrap();
        let (f, g) = p.densities(&br);
        let rf = constraint_eval(&f, &AdmissibleClass::F(fc.clone()), 1, 1, &quad, 1e-8).unwrap();
        let rg = constraint_eval(&g, &AdmissibleClass::G(p.g_class.clone()), 1, 1, &quad, 1e-8).unwrap();
        assert!(rf.feasible, "{fc:?}: {:?}", rf.values);
        assert!(rg.feasible, "{:?}: {:?}", p.g_class.radius, rg.values);
        // the best response does at least as well as the anchor
        let (f0, g0) = p.densities(&init);
        assert!(objective(&ctx, &f, &g).unwrap() >= objective(&ctx, &f0, &g0).unwrap() - 1e-10);
    }
}

#[test]
fn search_raises_the_error_and_passes_the_saddle_check() {
    for (fc, gr) in classes() {
        let p = problem(fc.clone(), gr);
        let init = p.default_init().unwrap();
        let start = p.estimation_problem(&init).unwrap().solve().unwrap().mse;
        let cand = least_favorable_search(&p, &init, &SearchOptions::default()).unwrap();
        assert!(cand.converged, "{fc:?}");
        assert!(cand.mse() >= start - 1e-10, "{fc:?}");
        for w in cand.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs(), "{fc:?}: history not monotone");
        }
        let s = saddle_check(&cand, 30, 3).unwrap();
        assert!(s.passes(1e-6 * cand.mse()), "{fc:?}: {s:?}");
        // the candidate's densities are themselves admissible
        let (f, g) = p.densities(&cand.point);
        let quad = Quadrature::default();
        assert!(constraint_eval(&f, &AdmissibleClass::F(fc), 1, 1, &quad, 1e-8).unwrap().feasible);
        assert!(constraint_eval(&g, &AdmissibleClass::G(p.g_class.clone()), 1, 1, &quad, 1e-8).unwrap().feasible);
    }
}

#[test]
fn zero_radius_pins_the_noise() {
    let p = problem(FClass::F2 { p: 1.5 }, GRadius::G1 { delta: 0.0 });
    let cand = least_favorable_search(&p, &p.default_init().unwrap(), &SearchOptions::default()).unwrap();
    assert_eq!(cand.g0, p.g_class.reference);
}

#[test]
fn off_diagonal_targets_are_unsupported() {
    let mut m = diag(1.0, 1.0);
    m.0[(0, 1)] = c(0.2);
    m.0[(1, 0)] = c(0.2);
    let spec = IncrementSpec::new(1, 1, 2, 1).unwrap();
    let a = vec![CVec::from_vec(vec![c(1.0), c(0.5)]); 2];
    let g = GClass::new(GRadius::G1 { delta: 0.1 }, reference()).unwrap();
    let err = MinimaxProblem::new(spec, a, FClass::F1 { p: m }, g, CELLS)
        .and_then(|p| p.default_init().map(|_| ()))
        .unwrap_err();
    assert!(matches!(err, ps_increments::Error::Unsupported(_)), "{err:?}");
    let _ = SpectralDensity::zero(2);
}
