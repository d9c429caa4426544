use tapbound::cover::{classify, membership};
use tapbound::entropy::ReferenceMeasure;
use tapbound::hamiltonian::{sample_disorder, DisorderSample};
use tapbound::partition::{log_partition_exact_ising, restricted_log_partition};
use tapbound::tap::{maximize_tap, Flavor, TapProblem};
use tapbound::{CovarianceSeries, ExternalField, MixedModel};

fn model(n: usize, beta: f64, h: f64) -> MixedModel {
    MixedModel::new(n, CovarianceSeries::new(vec![0.0, 0.0, 1.0]).unwrap(), beta, ExternalField::linear(n, h)).unwrap()
}

#[test]
fn saved_disorder_reproduces_partition_function() {
    let m = model(10, 0.7, 0.2);
    let d = sample_disorder(&m, 42).unwrap();
    let path = std::env::temp_dir().join(format!("tapbound-disorder-{}.bin", std::process::id()));
    d.save(&path).unwrap();
    let back = DisorderSample::load(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back, d);
    let a = log_partition_exact_ising(&d, &m.field, m.beta).unwrap();
    let b = log_partition_exact_ising(&back, &m.field, m.beta).unwrap();
    assert_eq!(a, b);
}

#[test]
fn high_temperature_gap_is_small() {
    let m = model(12, 0.2, 0.3);
    let d = sample_disorder(&m, 3).unwrap();
    let z = log_partition_exact_ising(&d, &m.field, m.beta).unwrap().log_value;
    let p = TapProblem::new(m, d, Flavor::Ising).unwrap();
    let t = maximize_tap(&p, 4, 3);
    assert!(t.converged);
    assert!((z - t.value) / 12.0 < 0.05, "gap {}", (z - t.value) / 12.0);
}

#[test]
fn equators_of_classified_atoms_cover_the_cube() {
    let n = 8;
    let m = model(n, 1.0, 0.1);
    let d = sample_disorder(&m, 9).unwrap();
    let e = ReferenceMeasure::IsingUniform { n };
    let mut nodes = Vec::new();
    for b in 0u64..1 << n {
        let s: Vec<f64> = (0..n).map(|i| if b >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let c = classify(&d, &e, &m.field, &s, 0.1, 0.3, 0.1).unwrap();
        assert!(membership(&c.node, &s, 0.3).in_e);
        if !nodes.iter().any(|x: &tapbound::cover::CoverNode| x.alpha == c.alpha) {
            nodes.push(c.node);
        }
    }
    let full = log_partition_exact_ising(&d, &m.field, 1.0).unwrap().log_value;
    let parts: Vec<f64> = nodes
        .iter()
        .map(|node| restricted_log_partition(&e, &d, &m.field, 1.0, &|s| membership(node, s, 0.3).in_e, None).unwrap().log_value)
        .collect();
    assert!(tapbound::linalg::log_sum_exp(&parts) >= full - 1e-12);
}
