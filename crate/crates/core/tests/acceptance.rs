//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them all). Every tolerance is pinned here.

use rhm::dist::{make_distribution, DistKind};
use rhm::grammar::build_grammar;
use rhm::learner::{classify, predict_next, reconstruct, Task};
use rhm::mc::{mc_corr_recursion, mc_entropy_ladder, mc_realization_stats, McQuantity};
use rhm::oracle::exhaustive;
use rhm::oracle::{self, Conditional};
use rhm::params::RhmParams;
use rhm::sample::{parse_sequence, sample_dataset, sample_derivation, Parse, Split};
use rhm::theory::{
    class_learning_curve, hutter_error, learnable_mass, learnable_rank, loglog_slope, zeta,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(lo.log10() + (hi.log10() - lo.log10()) * i as f64 / (n - 1) as f64))
        .collect()
}

fn int_grid(lo: f64, hi: f64, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = log_grid(lo, hi, n)
        .into_iter()
        .map(|x| x.round().max(2.0) as usize)
        .collect();
    v.dedup();
    v
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id:02} [{name}]: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// 1. Memorization-error asymptote: log-log slope of the exact error sum
/// over P in [1e3, 1e5] equals -a/(1+a) within 0.03 for a in {0.5, 1, 2},
/// m = 1e4.
#[test]
fn acceptance_01_hutter_asymptote() {
    let mut detail = String::new();
    let mut pass = true;
    for a in [0.5, 1.0, 2.0] {
        let dist = make_distribution(10_000, DistKind::Zipf { a }).unwrap();
        let pts: Vec<(f64, f64)> = log_grid(1e3, 1e5, 21)
            .into_iter()
            .map(|p| (p, hutter_error(&dist, p)))
            .collect();
        let slope = loglog_slope(&pts);
        let target = -a / (1.0 + a);
        let ok = (slope - target).abs() <= 0.03;
        pass &= ok;
        detail.push_str(&format!(
            "a={a}: slope {slope:.4} target {target:.4} |diff| {:.4} {}; ",
            (slope - target).abs(),
            if ok { "ok" } else { "exceeds 0.03 (finite-m truncation: k*(1e5) is not << m at a=0.5)" }
        ));
    }
    report(1, "hutter asymptote", pass, &detail);
    assert!(pass, "{detail}");
}

/// 2. Closed-form learnable mass: |g(P) - [1 - c Pt^(-a/(1+a))]| / (1 - g(P))
/// below 5% for k(P) in [10, m/10], m = 1e4, a = 1, c = 6/pi^2.
#[test]
fn acceptance_02_learnable_mass_closed_form() {
    let a = 1.0;
    let m = 10_000usize;
    let dist = make_distribution(m, DistKind::Zipf { a }).unwrap();
    let c = 1.0 / (a * zeta(1.0 + a));
    let mut worst = (0.0f64, 0usize);
    for pt in log_grid(1e2, 1e6, 400) {
        let k = learnable_rank(pt, a);
        if k < 10 || k > m / 10 {
            continue;
        }
        let g = learnable_mass(&dist, pt, a);
        let approx = 1.0 - c * pt.powf(-a / (1.0 + a));
        let rel = (g - approx).abs() / (1.0 - g);
        if rel > worst.0 {
            worst = (rel, k);
        }
    }
    let pass = worst.0 < 0.05;
    let detail = format!(
        "worst rel err {:.4} at k(P)={} (tol 0.05{})",
        worst.0,
        worst.1,
        if pass { "" } else { "; the closed form omits the m-truncation term, rel err ~ k/m near k = m/10" }
    );
    report(2, "learnable-mass closed form", pass, &detail);
    assert!(pass, "{detail}");
}

/// 3. Learner vs theory curve: v=m=8, s=2, L=2, a=1, 10 trials, 12-point log
/// grid on [10, 1e3]; pointwise agreement within 0.07 and final-decade slope
/// -0.5 +- 0.1.
#[test]
fn acceptance_03_learner_vs_theory_curve() {
    let params = RhmParams::zipf(8, 8, 2, 2, 1.0, 31);
    let grid = int_grid(10.0, 1000.0, 12);
    let theory = class_learning_curve(&params, &grid.iter().map(|&x| x as f64).collect::<Vec<_>>())
        .unwrap();
    let emp = rhm::learner::learning_curve_experiment(&params, &grid, 10, 10_000, 310).unwrap();
    let mut worst = (0.0f64, 0usize);
    for (t, e) in theory.points.iter().zip(&emp.points) {
        let dev = (e.value - t.value).abs();
        if dev > worst.0 {
            worst = (dev, t.p as usize);
        }
    }
    let pointwise_ok = worst.0 <= 0.07;
    let tail: Vec<(f64, f64)> = emp
        .points
        .iter()
        .filter(|pt| pt.p >= 100.0)
        .map(|pt| (pt.p, pt.value.max(1e-6)))
        .collect();
    let slope = loglog_slope(&tail);
    let slope_ok = (slope + 0.5).abs() <= 0.1;
    let pass = pointwise_ok && slope_ok;
    let detail = format!(
        "max |emp-theory| {:.3} at P={} (tol 0.07){}; tail slope {:.3} (target -0.5 +- 0.1) {}",
        worst.0,
        worst.1,
        if pointwise_ok {
            ""
        } else {
            " - detection from data has an irreducible chi-square transition width around each P*_k, so the sharp-threshold curve cannot be tracked pointwise at v=m=8"
        },
        slope,
        if slope_ok { "ok" } else { "out of band" },
    );
    report(3, "learner vs theory curve", pass, &detail);
    assert!(pass, "{detail}");
}

/// 4. Rescaled collapse: empirical curves for m = v in {4, 8} against
/// P/(v m^(L-1)) coincide within 0.07 over the first-threshold window where
/// the rescaled theory curves themselves agree within that tolerance.
#[test]
fn acceptance_04_collapse() {
    let pt_grid = log_grid(10f64.powf(-0.5), 10f64.powf(0.5), 8);
    let mut curves = Vec::new();
    for vm in [4usize, 8] {
        let params = RhmParams::zipf(vm, vm, 2, 2, 1.0, 41);
        let scale = (vm * vm) as f64;
        let grid: Vec<usize> = pt_grid.iter().map(|&x| (x * scale).round().max(2.0) as usize).collect();
        let emp = rhm::learner::learning_curve_experiment(&params, &grid, 10, 10_000, 410).unwrap();
        curves.push(emp);
    }
    let mut worst = (0.0f64, 0.0f64);
    for (i, pt) in pt_grid.iter().enumerate() {
        let gap = (curves[0].points[i].value - curves[1].points[i].value).abs();
        if gap > worst.0 {
            worst = (gap, *pt);
        }
    }
    let pass = worst.0 <= 0.07;
    let detail = format!(
        "max pointwise gap {:.3} at P/(v m^(L-1)) = {:.2} over [0.32, 3.2] (tol 0.07)",
        worst.0, worst.1
    );
    report(4, "rescaled collapse", pass, &detail);
    assert!(pass, "{detail}");
}

/// 5. Factorization identity: the enumerated label-tuple correlation equals
/// f_k(mu) times the collapsed-grammar symbol correlation, to 1e-12, on 10
/// instances at v=4, m=4, s=2, L=2, a=1.
#[test]
fn acceptance_05_factorization_identity() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let params = RhmParams::zipf(4, 4, 2, 2, 1.0, seed);
        let g = build_grammar(&params).unwrap();
        let sub = g.collapse_bottom().unwrap();
        let dist = g.distribution(1);
        for j in 0..2usize {
            let brute = exhaustive::class_correlation(&g, j).unwrap();
            let marg = oracle::level_marginal(&sub, 0, j).unwrap();
            for y in 0..4u16 {
                let cond = oracle::conditional_marginal(&sub, 0, j, y).unwrap();
                for code in 0..16usize {
                    if let Some((parent, k)) = g.lookup_code(1, code) {
                        let rhs = dist.weight(k) * (cond[parent as usize] - marg[parent as usize])
                            / 4.0;
                        worst = worst.max((brute[y as usize][code] - rhs).abs());
                    }
                }
            }
        }
    }
    let pass = worst < 1e-12;
    let detail = format!("max |enumerated - f_k * collapsed| = {worst:.2e} (tol 1e-12)");
    report(5, "correlation factorization", pass, &detail);
    assert!(pass, "{detail}");
}

/// 6. Mean compatibility-set size over 200 realizations at v=32, m=8, s=2
/// matches 1/(1-m/v^(s-1)) + v (m/v^(s-1))^(l-1) within 3 SE at l in {2,3,4}.
#[test]
fn acceptance_06_compat_set_mean() {
    let (v, m) = (32usize, 8usize);
    let x = m as f64 / v as f64;
    let mut pass = true;
    let mut detail = String::new();
    for ell in [2usize, 3, 4] {
        let params = RhmParams::uniform(v, m, 2, ell, 6000 + ell as u64);
        let stats = mc_realization_stats(&params, McQuantity::AvgCompatSize { ell }, 200).unwrap();
        let target = 1.0 / (1.0 - x) + (v as f64) * x.powi(ell as i32 - 1);
        // finite-window reference: the geometric tail above the window is absent
        let finite = (1.0 - x.powi(ell as i32 - 1)) / (1.0 - x) + (v as f64) * x.powi(ell as i32 - 1);
        let z = (stats.mean - target).abs() / stats.se;
        let ok = z <= 3.0;
        pass &= ok;
        detail.push_str(&format!(
            "l={ell}: mean {:.4} se {:.4} target {target:.4} z {z:.1} (finite-window value {finite:.4}); ",
            stats.mean, stats.se
        ));
    }
    if !pass {
        detail.push_str(
            "the target formula is an infinite-depth idealization; it exceeds the exact \
             finite-window ensemble mean by x^(l-1)/(1-x) plus without-replacement corrections",
        );
    }
    report(6, "compatibility-set mean", pass, &detail);
    assert!(pass, "{detail}");
}

/// 7. Variance recursion: the ratio of token-tuple to collapsed correlation
/// second moments equals f_k^2 (sum f^2) (v^s/(v^s-1)) ((v-1)/v) within 3 SE
/// at v=16, m=4, s=2, a=1, 500 realizations.
#[test]
fn acceptance_07_variance_recursion() {
    let params = RhmParams::zipf(16, 4, 2, 2, 1.0, 77);
    let dist = make_distribution(4, DistKind::Zipf { a: 1.0 }).unwrap();
    let ipr = dist.participation_ratio();
    let vs = 16f64.powi(2);
    let mut pass = true;
    let mut detail = String::new();
    for rank in [1usize, 2, 4] {
        let stats = mc_corr_recursion(&params, 2, rank, 500).unwrap();
        let target = dist.weight(rank).powi(2) * ipr * (vs / (vs - 1.0)) * (15.0 / 16.0);
        let z = (stats.ratio - target).abs() / stats.se;
        let ok = z <= 3.0;
        pass &= ok;
        detail.push_str(&format!(
            "k={rank}: ratio {:.6e} target {target:.6e} z {z:.2}; ",
            stats.ratio
        ));
    }
    report(7, "variance recursion", pass, &detail);
    assert!(pass, "{detail}");
}

/// 8. Entropy-ladder collapse at v=32, m=8, s=2, L=7 over 32 realizations:
/// residuals decay geometrically with ratio v^(s-1)/m = 4 within 20% at
/// l in {2,3,4}, and residual curves normalized by the l=1 residual agree
/// across a in {uniform, 0.5, 1, 2} within 20%.
#[test]
fn acceptance_08_entropy_ladder_collapse() {
    let depth = 7usize;
    let kinds: Vec<(String, Option<f64>)> = vec![
        ("uniform".into(), None),
        ("a=0.5".into(), Some(0.5)),
        ("a=1".into(), Some(1.0)),
        ("a=2".into(), Some(2.0)),
    ];
    let mut residuals = Vec::new();
    for (_, a) in &kinds {
        let params = match a {
            None => RhmParams::uniform(32, 8, 2, depth, 8000),
            Some(a) => RhmParams::zipf(32, 8, 2, depth, *a, 8000),
        };
        let ladder = mc_entropy_ladder(&params, 32).unwrap();
        let means: Vec<f64> = ladder.iter().map(|s| s.mean).collect();
        let res: Vec<f64> = (0..depth).map(|ell| means[ell] - means[depth]).collect();
        residuals.push(res);
    }
    let mut pass = true;
    let mut detail = String::new();
    for (name_a, res) in kinds.iter().map(|k| &k.0).zip(&residuals) {
        let ratios: Vec<f64> = [2usize, 3, 4]
            .iter()
            .map(|&ell| res[ell] / res[ell + 1])
            .collect();
        let ok = ratios.iter().all(|r| (r - 4.0).abs() <= 0.8);
        pass &= ok;
        detail.push_str(&format!(
            "{name_a}: ratios l=2..4 {:.2}/{:.2}/{:.2} (target 4 +- 0.8); ",
            ratios[0], ratios[1], ratios[2]
        ));
    }
    // collapse of normalized residuals across distributions
    for ell in [2usize, 3, 4] {
        let normed: Vec<f64> = residuals.iter().map(|r| r[ell] / r[1]).collect();
        let mean = normed.iter().sum::<f64>() / normed.len() as f64;
        let worst = normed
            .iter()
            .map(|x| (x / mean - 1.0).abs())
            .fold(0.0f64, f64::max);
        let ok = worst <= 0.2;
        pass &= ok;
        detail.push_str(&format!("collapse l={ell}: max dev {:.1}%; ", worst * 100.0));
    }
    report(8, "entropy-ladder collapse", pass, &detail);
    assert!(pass, "{detail}");
}

/// 9. First-step memorization at L=1, s=2, v=32, m=8, a=1: the learner loss
/// departs from log v near v/f_1 and approaches the exact window entropy
/// with final-decade slope -0.5 +- 0.15.
#[test]
fn acceptance_09_first_step_memorization() {
    let v = 32usize;
    let params = RhmParams::zipf(v, 8, 2, 1, 1.0, 91);
    let f1 = make_distribution(8, DistKind::Zipf { a: 1.0 }).unwrap().weight(1);
    let grid = int_grid(3.16, 2000.0, 14);
    let n_trials = 10usize;
    let n_test = 20_000usize;
    let mut mean_loss = vec![0.0f64; grid.len()];
    let mut mean_floor = 0.0f64;
    for t in 0..n_trials {
        let gp = params.with_seed(900 + t as u64);
        let g = build_grammar(&gp).unwrap();
        mean_floor += oracle::window_cross_entropy(&g, 1).unwrap();
        for (i, &pp) in grid.iter().enumerate() {
            let train = sample_dataset(&g, pp, 7000 + (t * 100 + i) as u64, false, Split::Train);
            let ig = reconstruct(&train, Task::NextToken).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + t as u64);
            let mut loss = 0.0;
            for _ in 0..n_test {
                let der = sample_derivation(&g, &mut rng);
                let toks = der.tokens();
                let pred = predict_next(&ig, &toks[..toks.len() - 1]);
                loss -= pred.dist[toks[toks.len() - 1] as usize].ln();
            }
            mean_loss[i] += loss / n_test as f64;
        }
    }
    for x in mean_loss.iter_mut() {
        *x /= n_trials as f64;
    }
    mean_floor /= n_trials as f64;
    let logv = (v as f64).ln();
    let depart = grid
        .iter()
        .zip(&mean_loss)
        .find(|(_, &l)| l < 0.95 * logv)
        .map(|(&p, _)| p as f64)
        .unwrap_or(f64::INFINITY);
    let ratio = depart / (v as f64 / f1);
    let depart_ok = (0.25..=4.0).contains(&ratio);
    let tail: Vec<(f64, f64)> = grid
        .iter()
        .zip(&mean_loss)
        .filter(|(&p, _)| p as f64 >= 200.0)
        .map(|(&p, &l)| (p as f64, (l - mean_floor).max(1e-9)))
        .collect();
    let slope = loglog_slope(&tail);
    let slope_ok = (slope + 0.5).abs() <= 0.15;
    let pass = depart_ok && slope_ok;
    let detail = format!(
        "departure at P={depart} = {ratio:.2} x v/f_1 (want within [0.25, 4]); residual slope {slope:.3} (target -0.5 +- 0.15); exact floor {mean_floor:.4}",
    );
    report(9, "first-step memorization", pass, &detail);
    assert!(pass, "{detail}");
}

/// 10. Brute-force equivalence: every exact oracle matches full enumeration
/// to 1e-9 on a battery of instances with v^d <= 2^20.
#[test]
fn acceptance_10_bruteforce_equivalence() {
    let battery: Vec<RhmParams> = vec![
        RhmParams::zipf(2, 2, 2, 2, 1.0, 1),
        RhmParams::zipf(4, 4, 2, 2, 1.0, 2),
        RhmParams::uniform(4, 4, 2, 2, 3),
        RhmParams::zipf(2, 2, 2, 3, 0.5, 4),
        RhmParams::zipf(4, 2, 2, 2, 1.0, 5).with_zipf_layer(2),
        {
            let mut p = RhmParams::zipf(3, 3, 2, 2, 1.0, 6);
            p.zipf_exponent = Some(rhm::params::ZipfExponent::Infinity);
            p
        },
        RhmParams::zipf(4, 4, 2, 3, 2.0, 7),
        RhmParams::zipf(5, 5, 2, 2, 1.0, 8),
    ];
    let mut worst = 0.0f64;
    for params in &battery {
        let g = build_grammar(params).unwrap();
        let depth = g.depth();
        let s = g.s();
        // marginals at every node
        for level in 0..=depth {
            for pos in 0..s.pow((depth - level) as u32) {
                let dp = oracle::level_marginal(&g, level, pos).unwrap();
                let brute = exhaustive::marginal(&g, level, pos).unwrap();
                for (a, b) in dp.iter().zip(&brute) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        // label-tuple and token-tuple correlation tables
        let blocks = s.pow((depth - 1) as u32);
        for j in 0..blocks {
            let table = oracle::class_correlation_table(&g, j).unwrap();
            let brute = exhaustive::class_correlation(&g, j).unwrap();
            for y in 0..g.v() {
                for code in 0..params.tuple_space() {
                    worst = worst.max((table.values[y][code] - brute[y][code]).abs());
                }
            }
            if j + 1 < blocks {
                let table = oracle::token_correlation_table(&g, j).unwrap();
                let brute = exhaustive::token_correlation(&g, j).unwrap();
                for nu in 0..g.v() {
                    for code in 0..params.tuple_space() {
                        worst = worst.max((table.values[nu][code] - brute[nu][code]).abs());
                    }
                }
            }
        }
        // window conditionals for every realized context, entropies, compat sizes
        for ell in 1..=depth {
            for (ctx, brute) in exhaustive::window_conditionals_all(&g, ell).unwrap() {
                match oracle::window_conditional(&g, ell, &ctx).unwrap() {
                    Conditional::Dist(dp) => {
                        for (a, b) in dp.iter().zip(&brute) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                    Conditional::Unparseable { .. } => panic!("realized context unparseable"),
                }
            }
            let dp_h = oracle::window_cross_entropy(&g, ell).unwrap();
            let brute_h = exhaustive::window_cross_entropy(&g, ell).unwrap();
            worst = worst.max((dp_h - brute_h).abs());
            if ell >= 2 {
                let dp_c = oracle::mean_compat_size(&g, ell).unwrap();
                let brute_c = exhaustive::mean_compat_size(&g, ell).unwrap();
                worst = worst.max((dp_c - brute_c).abs());
            }
        }
    }
    let pass = worst < 1e-9;
    let detail = format!(
        "max |oracle - enumeration| = {worst:.2e} over {} instances (tol 1e-9)",
        battery.len()
    );
    report(10, "brute-force equivalence", pass, &detail);
    assert!(pass, "{detail}");
}

/// 11. Parser round-trip: 1e5 sampled sequences parse back to their
/// generating derivations with zero mismatches.
#[test]
fn acceptance_11_parser_roundtrip() {
    let params = RhmParams::zipf(8, 8, 2, 3, 1.0, 111);
    let g = build_grammar(&params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut mismatches = 0usize;
    let n = 100_000usize;
    for _ in 0..n {
        let der = sample_derivation(&g, &mut rng);
        match parse_sequence(&g, der.tokens()).unwrap() {
            Parse::Parsed(p) if p == der => {}
            _ => mismatches += 1,
        }
    }
    let pass = mismatches == 0;
    let detail = format!("{mismatches} mismatches in {n} round-trips");
    report(11, "parser round-trip", pass, &detail);
    assert!(pass, "{detail}");

    // classification abstain accounting sanity on the same instance: a fully
    // trained learner reaches zero error on held-out samples
    let ds = sample_dataset(&g, 200_000, 5, false, Split::Train);
    let ig = reconstruct(&ds, Task::Classification).unwrap();
    let mut errs = 0usize;
    for _ in 0..10_000 {
        let der = sample_derivation(&g, &mut rng);
        match classify(&ig, der.tokens()) {
            Some(y) if y == der.label() => {}
            _ => errs += 1,
        }
    }
    assert_eq!(errs, 0, "fully recovered grammar must classify held-out data exactly");
}

