//! Structural simulator and ground-truth oracles.

mod bias;
mod generate;
mod model;
mod oracle;
pub mod presets;

pub use bias::{empirical_bias, EmpiricalBias};
pub use generate::generate;
pub use model::{Interaction, Law, LinearPredictor, Roles, StructuralModel, Variable};
pub use oracle::{oracle_truth_exact, oracle_truth_mc, OracleMethod, OracleResult, OracleSe};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;
    use crate::error::Error;

    #[test]
    fn empty_draw_keeps_header() {
        let t = generate(&presets::joint_discrete(), 0, 1, false).unwrap();
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.column_names(), vec!["c", "r", "x1", "x2", "d", "m", "y"]);
    }

    #[test]
    fn same_seed_same_table() {
        let m = presets::latent_symmetric(1.0, 0.5);
        let a = generate(&m, 3000, 7, true).unwrap();
        let b = generate(&m, 3000, 7, true).unwrap();
        assert_eq!(
            a.column("y").unwrap().as_numeric(),
            b.column("y").unwrap().as_numeric()
        );
        assert!(a.column("u").is_some());
        assert!(generate(&m, 10, 7, false).unwrap().column("u").is_none());
    }

    #[test]
    fn cell_frequencies_match_laws() {
        let n = 40_000;
        let t = generate(&presets::joint_discrete(), n, 3, false).unwrap();
        let c = t.column("c").unwrap().as_numeric().unwrap();
        let r = &t.column("r").unwrap().as_factor().unwrap().codes;
        let tol = 4.0 / (n as f64).sqrt();
        let p1 = c.iter().filter(|&&x| x == 1.0).count() as f64 / n as f64;
        assert!((p1 - 0.4).abs() < tol);
        let in_c0: Vec<u32> = r
            .iter()
            .zip(c)
            .filter(|(_, &x)| x == 0.0)
            .map(|(&g, _)| g)
            .collect();
        let p = in_c0.iter().filter(|&&g| g == 3).count() as f64 / in_c0.len() as f64;
        assert!((p - 0.2).abs() < 4.0 / (in_c0.len() as f64).sqrt());
    }

    #[test]
    fn exact_oracle_reference_and_identity() {
        let m = presets::joint_discrete();
        let z = oracle_truth_exact(&m, 0, Scenario::JointMediators).unwrap();
        assert_eq!((z.tau, z.delta, z.zeta), (0.0, 0.0, 0.0));
        for r in 1..4 {
            let o = oracle_truth_exact(&m, r, Scenario::JointMediators).unwrap();
            assert!((o.tau - o.delta - o.zeta).abs() < 1e-12);
            assert!(o.delta.abs() > 1e-3);
        }
    }

    #[test]
    fn orderings_coincide_without_confounders() {
        let mut m = presets::coverage_discrete();
        m.variables.retain(|v| v.name != "x1");
        m.roles.confounders_pre.clear();
        for v in &mut m.variables {
            if let Law::Logit { predictors, .. } = &mut v.law {
                for p in predictors {
                    p.coefficients.remove("x1");
                }
            }
            if let Law::Gaussian { mean, .. } = &mut v.law {
                mean.coefficients.remove("x1");
            }
        }
        let a = oracle_truth_exact(&m, 1, Scenario::JointMediators).unwrap();
        let b = oracle_truth_exact(&m, 1, Scenario::InterposedConfounder).unwrap();
        assert!((a.delta - b.delta).abs() < 1e-12);
        assert!((a.zeta - b.zeta).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_exact_sum() {
        for m in [presets::joint_discrete(), presets::interposed_discrete()] {
            let exact = oracle_truth_exact(&m, 1, m.scenario).unwrap();
            let mc = oracle_truth_mc(&m, 1, 200_000, 11).unwrap();
            let se = mc.se.unwrap();
            assert!(
                (mc.delta - exact.delta).abs() < 4.0 * se.delta,
                "{mc:?} {exact:?}"
            );
            assert!((mc.zeta - exact.zeta).abs() < 4.0 * se.zeta);
            assert!((mc.tau - mc.delta - mc.zeta).abs() < 1e-12);
        }
    }

    #[test]
    fn mediator_free_outcome_has_no_reduction() {
        let mut m = presets::joint_discrete();
        if let Law::Gaussian { mean, .. } = &mut m.variable_mut("y").unwrap().law {
            mean.coefficients.remove("d");
            mean.coefficients.remove("m");
        }
        let mc = oracle_truth_mc(&m, 2, 50_000, 5).unwrap();
        assert!(mc.delta.abs() < 3.0 * mc.se.unwrap().delta + 1e-12);
        let exact = oracle_truth_exact(&m, 2, Scenario::JointMediators).unwrap();
        assert!(exact.delta.abs() < 1e-12);
    }

    #[test]
    fn positivity_violation_is_reported() {
        let mut m = presets::coverage_discrete();
        if let Law::Table { probs, .. } = &mut m.variable_mut("r").unwrap().law {
            probs[1] = vec![0.0, 1.0];
        }
        assert!(matches!(
            oracle_truth_mc(&m, 1, 100, 1),
            Err(Error::Positivity(_))
        ));
        assert!(matches!(
            oracle_truth_exact(&m, 1, Scenario::JointMediators),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn continuous_models_are_not_summable() {
        let m = presets::linear_scalar();
        assert!(matches!(
            oracle_truth_exact(&m, 1, Scenario::JointMediators),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bias_needs_a_latent() {
        let m = presets::joint_discrete();
        let cfg = crate::config::AnalysisConfig::new("r", "y", &["d", "m"]);
        assert!(matches!(
            empirical_bias(&m, &cfg, 100, 1, &[], &Default::default()),
            Err(Error::Config(_))
        ));
    }
}
