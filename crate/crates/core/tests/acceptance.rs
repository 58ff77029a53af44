//! Acceptance suite. Runs without the libtest harness and prints one line
//! per criterion; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semident::census::{census_report, enumerate_representatives, CensusOptions};
use semident::criterion::{find_violating_set_exhaustive, is_generically_identifiable_simple};
use semident::cycle::{cycle_fiber, det_k_minus_i, k_minus_i_direct, kappa_of, CycleParams};
use semident::fiber::{fiber_trace, FiberKind};
use semident::field::ratio;
use semident::inversion::all_rank_conditions_hold;
use semident::params::{path_inverse, sample_parameters};
use semident::witness::construct_witness;
use semident::{
    check_global_identifiability, find_violating_set, invert, phi, rank_condition, LambdaMatrix, Matrix, MixedGraph,
    OmegaMatrix, Rational,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_dag(rng: &mut ChaCha8Rng, m: usize, p_dir: f64, p_bi: f64) -> MixedGraph {
    let mut d = Vec::new();
    let mut b = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if rng.gen_bool(p_dir) {
                d.push((i, j));
            }
            if rng.gen_bool(p_bi) {
                b.push((i, j));
            }
        }
    }
    MixedGraph::new(m, d, b).unwrap()
}

fn shuffled(rng: &mut ChaCha8Rng, g: &MixedGraph) -> MixedGraph {
    let mut perm: Vec<usize> = (0..g.m()).collect();
    perm.shuffle(rng);
    MixedGraph::new(
        g.m(),
        g.directed_edges().map(|(i, j)| (perm[i], perm[j])),
        g.bidirected_edges().map(|(i, j)| (perm[i], perm[j])),
    )
    .unwrap()
}

fn small_graphs() -> Outcome {
    let start = Instant::now();
    let single = |n, simple_only| CensusOptions {
        simple_only,
        jobs: Some(1),
        ..CensusOptions::new(n)
    };
    let three = census_report(&single(3, false)).unwrap();
    let iff = three.classes.iter().all(|c| c.identifiable == c.simple && c.oracle.injective == c.simple);
    let four = census_report(&single(4, true)).unwrap();
    let count = four.noninjective().count();
    let elapsed = start.elapsed();
    outcome(
        iff && count == 2 && three.disagreements.is_empty() && four.disagreements.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "n=3: {} classes, injective iff simple: {iff}; n=4 simple: {count} noninjective classes; {:.1}s single-threaded",
            three.classes.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_matches_oracle() -> Outcome {
    let mut classes = 0;
    let mut reps = 0;
    let mut disagreements = 0;
    for n in 1..=5 {
        let r = census_report(&CensusOptions::new(n)).unwrap();
        classes += r.classes.len();
        reps += r.representatives;
        disagreements += r.disagreements.len();
    }
    // the representatives all carry topological labels; also try others
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut shuffled_bad = 0;
    let all: Vec<MixedGraph> = enumerate_representatives(5, false).unwrap().collect();
    for _ in 0..10_000 {
        let pick = all.choose(&mut rng).unwrap();
        let g = shuffled(&mut rng, pick);
        let fast = find_violating_set(&g).unwrap().is_some();
        let slow = find_violating_set_exhaustive(&g).unwrap().is_some();
        shuffled_bad += usize::from(fast != slow);
    }
    outcome(
        disagreements == 0 && shuffled_bad == 0,
        format!(
            "n<=5: {reps} topologically labeled graphs, {classes} classes, {disagreements} disagreements; \
             10000 relabeled n=5 graphs: {shuffled_bad} disagreements"
        ),
    )
}

fn round_trip_inversion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut graphs = 0;
    let mut exact_failures = 0;
    let mut worst_float = 0.0f64;
    while graphs < 500 {
        let m = rng.gen_range(2..=7);
        let g = random_dag(&mut rng, m, 0.5, 0.3);
        if !check_global_identifiability(&g).identifiable {
            continue;
        }
        graphs += 1;
        let seed = rng.gen();
        let (l, o) = sample_parameters::<Rational>(&g, seed, 1.0);
        let sigma = phi(&g, &l, &o).unwrap();
        match invert(&g, &sigma) {
            Ok(inv) if inv.lambda == l && inv.omega == o => {}
            _ => exact_failures += 1,
        }
        let (lf, of) = sample_parameters::<f64>(&g, seed, 1.0);
        let sigma = phi(&g, &lf, &of).unwrap();
        match invert(&g, &sigma) {
            Ok(inv) => {
                let err = inv.lambda.matrix().max_abs_diff(lf.matrix()).max(inv.omega.matrix().max_abs_diff(of.matrix()));
                worst_float = worst_float.max(err);
            }
            Err(_) => worst_float = f64::INFINITY,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        exact_failures == 0 && worst_float <= 1e-8 && elapsed < Duration::from_secs(120),
        format!(
            "{graphs} graphs: {exact_failures} inexact rational recoveries, float error {worst_float:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn witness_validity() -> Outcome {
    let mut graphs = 0;
    let mut bad = Vec::new();
    let mut worst_res = 0.0f64;
    let mut min_sep = f64::INFINITY;
    for n in 2..=4 {
        for g in enumerate_representatives(n, false).unwrap() {
            if check_global_identifiability(&g).identifiable {
                continue;
            }
            graphs += 1;
            let float = construct_witness::<f64>(&g);
            let exact = construct_witness::<Rational>(&g);
            match (float, exact) {
                (Ok(f), Ok(e)) => {
                    let pd = [&f.point_a.1, &f.point_b.1].iter().all(|o| o.matrix().is_positive_definite());
                    worst_res = worst_res.max(f.residual);
                    min_sep = min_sep.min(f.separation).min(e.separation);
                    if f.residual > 1e-9 || f.separation < 1e-3 || e.residual != 0.0 || e.separation < 1e-3 || !pd {
                        bad.push(format!("{g:?}"));
                    }
                }
                _ => bad.push(format!("{g:?}")),
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{graphs} noninjective graphs on 2..4 nodes: {} failures, float residual <= {worst_res:.1e}, \
             separation >= {min_sep:.3}, rational residual 0",
            bad.len()
        ),
    )
}

fn q(rows: &[&[i64]]) -> Matrix<Rational> {
    Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect()).unwrap()
}

fn chain5() -> Outcome {
    let g = MixedGraph::from_one_based(5, &[(1, 2), (2, 3), (3, 4), (4, 5)], &[(1, 4), (1, 5), (2, 4), (3, 5)]).unwrap();
    let mut l = Matrix::zeros(5, 5);
    l[(0, 1)] = ratio(3, 1);
    l[(1, 2)] = ratio(-1, 2);
    l[(2, 3)] = ratio(1, 1);
    l[(3, 4)] = ratio(1, 1);
    let o = q(&[&[2, 0, 0, 1, 1], &[0, 2, 0, 1, 0], &[0, 0, 2, 0, 1], &[1, 1, 0, 2, 0], &[1, 0, 1, 0, 2]]);
    let (l, o) = (LambdaMatrix::new(&g, l).unwrap(), OmegaMatrix::new(&g, o).unwrap());
    let failing: Vec<usize> = (1..5).filter(|&i| !rank_condition(&g, &l, &o, i).unwrap().passes()).collect();
    let sigma = phi(&g, &l, &o).unwrap();
    let f = fiber_trace(&g, &sigma, Some((&l, &o))).unwrap();
    let non_singleton = match f.kind {
        FiberKind::Family => true,
        FiberKind::Finite => f.points.len() > 1,
        _ => false,
    };
    outcome(
        !failing.is_empty() && non_singleton,
        format!("rank condition fails at steps {failing:?}; fiber is {:?}", f.kind),
    )
}

fn instrument5() -> Outcome {
    let g = MixedGraph::from_one_based(5, &[(1, 2), (2, 3), (3, 4)], &[(1, 3), (1, 4), (1, 5), (2, 4)]).unwrap();
    let point = |w15: i64| {
        let mut l = Matrix::zeros(5, 5);
        for k in 0..3 {
            l[(k, k + 1)] = ratio(1, 1);
        }
        let o = q(&[
            &[2, 0, -1, -1, w15],
            &[0, 1, 0, -1, 0],
            &[-1, 0, 1, 0, 0],
            &[-1, -1, 0, 3, 0],
            &[w15, 0, 0, 0, 3],
        ]);
        (LambdaMatrix::new(&g, l).unwrap(), OmegaMatrix::new(&g, o).unwrap())
    };
    let (l, o) = point(-1);
    let step = rank_condition(&g, &l, &o, 3).unwrap();
    let zero_at_3 = step.matrix_m == q(&[&[0]]) && !step.passes();
    let sigma = phi(&g, &l, &o).unwrap();
    let single = fiber_trace(&g, &sigma, Some((&l, &o))).unwrap();
    let singleton = single.kind == FiberKind::Singleton
        && single.points.len() == 1
        && single.points[0].exact.as_ref() == Some(&(l.matrix().clone(), o.matrix().clone()));
    let (l0, o0) = point(0);
    let sigma0 = phi(&g, &l0, &o0).unwrap();
    let family = fiber_trace(&g, &sigma0, Some((&l0, &o0))).unwrap();
    let one_dim = family.kind == FiberKind::Family && family.family.is_some();
    outcome(
        zero_at_3 && singleton && one_dim,
        format!(
            "step 3 matrix {:?}; fiber {:?}; with omega15 = 0 fiber {:?}",
            step.matrix_m.to_f64().to_rows(),
            single.kind,
            family.kind
        ),
    )
}

fn cycle_fibers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_kappa = 0.0f64;
    let mut worst_det = 0.0f64;
    let mut two_points = 0;
    let mut failures = 0;
    for _ in 0..200 {
        let m = rng.gen_range(3..=8);
        let lambda: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let delta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..2.0)).collect();
        let Ok(p) = CycleParams::new(lambda, delta) else {
            failures += 1;
            continue;
        };
        for i in 0..m {
            let (a, b) = (det_k_minus_i(&p, i), k_minus_i_direct(&p, i));
            worst_det = worst_det.max((a - b).abs() / a.abs().max(1.0));
        }
        match cycle_fiber(&p) {
            Ok(f) => {
                let k0 = kappa_of(&p).unwrap();
                for pt in &f.points {
                    worst_kappa = worst_kappa.max(kappa_of(pt).unwrap().max_abs_diff(&k0));
                }
                two_points += usize::from(f.points.len() == 2);
            }
            Err(_) => failures += 1,
        }
    }
    let mut degenerate = 0;
    for m in 3..=8 {
        // product of coefficients is -1
        let mut lambda: Vec<Rational> = (0..m - 1).map(|k| ratio(k as i64 + 2, 3)).collect();
        let prod = lambda.iter().fold(ratio(1, 1), |a, l| a * l);
        lambda.push(-ratio(1, 1) / prod);
        let delta: Vec<Rational> = (0..m).map(|k| ratio(k as i64 + 1, 2)).collect();
        let f = cycle_fiber(&CycleParams::new(lambda, delta).unwrap()).unwrap();
        degenerate += usize::from(f.degenerate && f.points.len() == 1);
        let lambda: Vec<f64> = (0..m).map(|k| if k == 0 { -0.5 } else if k == 1 { 2.0 } else { 1.0 }).collect();
        let f = cycle_fiber(&CycleParams::new(lambda, vec![1.5; m]).unwrap()).unwrap();
        degenerate += usize::from(f.degenerate && f.points.len() == 1);
    }
    outcome(
        failures == 0 && worst_kappa <= 1e-10 && worst_det <= 1e-10 && degenerate == 12,
        format!(
            "200 cycles ({two_points} two-point fibers): kappa residual {worst_kappa:.1e}, det error {worst_det:.1e}; \
             {degenerate}/12 degenerate singletons"
        ),
    )
}

fn random_ancestral(rng: &mut ChaCha8Rng, m: usize) -> MixedGraph {
    let skeleton = random_dag(rng, m, 0.4, 0.0);
    let mut reach = vec![vec![false; m]; m];
    for i in (0..m).rev() {
        for &c in skeleton.children(i) {
            reach[i][c] = true;
            for k in 0..m {
                if reach[c][k] {
                    reach[i][k] = true;
                }
            }
        }
    }
    let mut b = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if !reach[i][j] && rng.gen_bool(0.6) {
                b.push((i, j));
            }
        }
    }
    let g = MixedGraph::new(m, skeleton.directed_edges(), b).unwrap();
    shuffled(rng, &g)
}

fn ancestral_sufficiency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    let mut with_bidirected = 0;
    for _ in 0..200 {
        let m = rng.gen_range(2..=8);
        let g = random_ancestral(&mut rng, m);
        with_bidirected += usize::from(g.num_bidirected() > 0);
        let v = check_global_identifiability(&g);
        let (h, _) = semident::graph::topologically_relabeled(&g).unwrap();
        let ranks = (0..20).all(|k| {
            let (l, o) = sample_parameters::<f64>(&h, rng.gen::<u64>() ^ k, 1.0);
            all_rank_conditions_hold(&h, &l, &o)
        });
        if !(v.identifiable && v.ancestral && ranks && is_generically_identifiable_simple(&g)) {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!("200 ancestral graphs ({with_bidirected} with bidirected edges): {bad} failures"),
    )
}

fn path_sum_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.gen_range(1..=9);
        let dag = random_dag(&mut rng, m, 0.5, 0.0);
        let g = shuffled(&mut rng, &dag);
        let (l, _) = sample_parameters::<f64>(&g, rng.gen(), 1.5);
        let paths = path_inverse(&g, &l).unwrap();
        let a = DMatrix::from_fn(m, m, |i, j| f64::from(u8::from(i == j)) - l.get(i, j));
        let direct = a.try_inverse().expect("I - Lambda is unipotent up to relabeling");
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((paths[(i, j)] - direct[(i, j)]).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("200 acyclic instances: max deviation {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("small graphs", small_graphs),
        ("criterion/oracle agreement", criterion_matches_oracle),
        ("round-trip inversion", round_trip_inversion),
        ("witness validity", witness_validity),
        ("five-node chain example", chain5),
        ("instrument example", instrument5),
        ("cycle fibers", cycle_fibers),
        ("ancestral sufficiency", ancestral_sufficiency),
        ("path-sum oracle", path_sum_oracle),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {} [{name}] {} ({:.1}s)",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

