//! Seeded theory-check suites: the norm, summation, and contraction
//! inequalities evaluated on randomized instances, reported as JSON.

use dimix_core::linalg::Mat;
use dimix_core::rng::keyed_rng;
use dimix_core::schedules::{
    power_sum_bound, tail_sum_identity_residual, telescoping_identity_residual, ScheduleParams,
};
use dimix_core::topology::{
    contraction_sweep, make_cyclic_gossip, mixed_norm_check, young_inequality_check,
    young_inequality_check_r, StochasticVector,
};
use rand::Rng;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub name: String,
    pub draws: u64,
    /// Largest observed violation (negative or ~0 when the suite passes):
    /// residual magnitude for identities, `lhs - rhs` for inequalities,
    /// `ratio - 1` for the contraction sweep.
    pub max_violation: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub lemmas: Vec<LemmaReport>,
    pub pass: bool,
}

const IDENTITY_TOL: f64 = 1e-10;
const INEQUALITY_TOL: f64 = 1e-9;

fn norm_splitting_suite(seed: u64) -> LemmaReport {
    let mut rng = keyed_rng(&[seed, 101]);
    let mut max_violation = f64::NEG_INFINITY;
    let draws = 200u64;
    for _ in 0..draws {
        let d = rng.gen_range(1..=10);
        let omega = rng.gen_range(1e-6..=5.0);
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (lhs, rhs) = young_inequality_check(&u, &v, omega);
        max_violation = max_violation.max(lhs - rhs);

        let n = rng.gen_range(2..=6);
        let cols = rng.gen_range(1..=4);
        let r = StochasticVector::random_fractions(n, 0.01, 0.9, rng.gen());
        let mat = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut m = Mat::zeros(n, cols);
            for i in 0..n {
                for j in 0..cols {
                    m.set(i, j, rng.gen_range(-5.0..5.0));
                }
            }
            m
        };
        let (a, b) = (mat(&mut rng), mat(&mut rng));
        let (lhs, rhs) = young_inequality_check_r(&a, &b, omega, &r);
        max_violation = max_violation.max(lhs - rhs);
    }
    LemmaReport {
        name: "norm_splitting_inequality".into(),
        draws: 2 * draws,
        max_violation,
        pass: max_violation <= INEQUALITY_TOL,
        details: None,
    }
}

fn telescoping_suite(seed: u64) -> LemmaReport {
    let mut rng = keyed_rng(&[seed, 102]);
    let mut max_violation = f64::NEG_INFINITY;
    let draws = 100u64;
    for _ in 0..draws {
        let len = rng.gen_range(1..=200);
        let beta: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let lambda = rng.gen_range(1e-6..=1.0);
        let t = rng.gen_range(1..=len);
        max_violation = max_violation.max(telescoping_identity_residual(&beta, lambda, t));
        let s = rng.gen_range(1..=len);
        max_violation = max_violation.max(tail_sum_identity_residual(&beta, lambda, s, len));
    }
    LemmaReport {
        name: "telescoping_identities".into(),
        draws: 2 * draws,
        max_violation,
        pass: max_violation <= IDENTITY_TOL,
        details: None,
    }
}

fn power_sum_suite(seed: u64) -> LemmaReport {
    let mut rng = keyed_rng(&[seed, 103]);
    let mut max_violation = f64::NEG_INFINITY;
    let draws = 100u64;
    for _ in 0..draws {
        let delta = rng.gen_range(-3.0..=2.0);
        let tau = rng.gen_range(0.5..=50.0);
        let t_max = rng.gen_range(1..=10_000);
        let (sum, bound) = power_sum_bound(delta, tau, t_max).expect("tau > 0");
        max_violation = max_violation.max(sum - bound);
    }
    LemmaReport {
        name: "power_sum_bounds".into(),
        draws,
        max_violation,
        pass: max_violation <= INEQUALITY_TOL,
        details: None,
    }
}

fn product_norm_suite(seed: u64) -> LemmaReport {
    let mut rng = keyed_rng(&[seed, 104]);
    let mut max_violation = f64::NEG_INFINITY;
    let draws = 200u64;
    for _ in 0..draws {
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(1..=6);
        let q = rng.gen_range(1..=6);
        let r = StochasticVector::random_fractions(n, 0.01, 0.9, rng.gen());
        let mut a = Mat::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                a.set(i, j, rng.gen_range(-3.0..3.0));
            }
        }
        let mut b = Mat::zeros(m, q);
        for i in 0..m {
            for j in 0..q {
                b.set(i, j, rng.gen_range(-3.0..3.0));
            }
        }
        let (lhs, rhs) = mixed_norm_check(&a, &b, &r);
        max_violation = max_violation.max(lhs - rhs);
    }
    LemmaReport {
        name: "product_norm_inequality".into(),
        draws,
        max_violation,
        pass: max_violation <= INEQUALITY_TOL,
        details: None,
    }
}

/// Exhaustive transition-contraction sweep on 5-agent cyclic gossip with
/// `beta(t) = 0.8 / t^0.3`, all `1 <= s < t <= 200`, 10 fresh test matrices
/// per pair.
fn contraction_suite(seed: u64) -> LemmaReport {
    let r = StochasticVector::random_fractions(5, 0.01, 0.9, seed ^ 0x5eed);
    let sched = make_cyclic_gossip(&r).expect("n = 5 gossip");
    let params = ScheduleParams::new(0.5, 0.0, 0.8, 0.3, 0.0).expect("valid params");
    let report = contraction_sweep(
        |t| sched.matrix_at(t).mat().clone(),
        sched.r(),
        &params,
        sched.b_window(),
        sched.eta(),
        200,
        10,
        3,
        seed,
    )
    .expect("kappa is defined for valid schedules");
    LemmaReport {
        name: "transition_contraction".into(),
        draws: report.draws,
        max_violation: report.max_ratio - 1.0,
        pass: report.max_ratio <= 1.0 + IDENTITY_TOL,
        details: Some(serde_json::json!({
            "lambda": report.lambda,
            "kappa": report.kappa,
            "pairs_checked": report.pairs_checked,
            "worst_pair": report.worst_pair,
            "b_window": sched.b_window(),
            "eta": sched.eta(),
        })),
    }
}

/// Run all five suites with one seed.
pub fn run_theory_checks(seed: u64) -> TheoryReport {
    let lemmas = vec![
        norm_splitting_suite(seed),
        telescoping_suite(seed),
        power_sum_suite(seed),
        product_norm_suite(seed),
        contraction_suite(seed),
    ];
    let pass = lemmas.iter().all(|l| l.pass);
    TheoryReport { seed, lemmas, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_seed_passes_everything() {
        let report = run_theory_checks(0);
        for lemma in &report.lemmas {
            assert!(lemma.pass, "{} violated by {}", lemma.name, lemma.max_violation);
        }
        assert!(report.pass);
        // The contraction entry reports its lambda and kappa.
        let contraction = report.lemmas.iter().find(|l| l.name == "transition_contraction").unwrap();
        let details = contraction.details.as_ref().unwrap();
        assert!(details["lambda"].as_f64().unwrap() > 0.0);
        assert!(details["kappa"].as_f64().unwrap() > 1.0);
    }

    #[test]
    fn breaking_the_stationary_distribution_fails_contraction() {
        // Negative control: replace each gossip matrix's active rows with
        // "copy agent a", keeping rows stochastic but destroying
        // r^T W = r^T. The sweep must observe a violated bound.
        let r = StochasticVector::random_fractions(5, 0.01, 0.9, 7);
        let sched = make_cyclic_gossip(&r).unwrap();
        let params = ScheduleParams::new(0.5, 0.0, 0.8, 0.3, 0.0).unwrap();
        let broken = |t: u64| {
            let w = sched.matrix_at(t).mat().clone();
            let n = w.rows();
            // Active pair of the gossip step at time t.
            let a = ((t as i64 - 1).rem_euclid(n as i64)) as usize;
            let b = (t as i64).rem_euclid(n as i64) as usize;
            let mut m = w;
            for &i in &[a, b] {
                for j in 0..n {
                    m.set(i, j, if j == a { 1.0 } else { 0.0 });
                }
            }
            m
        };
        let report = contraction_sweep(
            broken,
            sched.r(),
            &params,
            sched.b_window(),
            sched.eta(),
            200,
            10,
            3,
            7,
        )
        .unwrap();
        assert!(
            report.max_ratio > 1.0 + 1e-6,
            "expected a violation, max ratio {}",
            report.max_ratio
        );
    }
}
