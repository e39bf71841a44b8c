//! Ready-made structural models used by the test suites and the CLI.

use crate::config::Scenario;

use super::model::{Law, LinearPredictor as Lp, Roles, StructuralModel, Variable};

fn var(name: &str, law: Law) -> Variable {
    Variable {
        name: name.to_string(),
        law,
    }
}

fn table(support: &[f64], parents: &[&str], probs: &[&[f64]]) -> Law {
    Law::Table {
        support: support.to_vec(),
        parents: parents.iter().map(|s| s.to_string()).collect(),
        probs: probs.iter().map(|p| p.to_vec()).collect(),
    }
}

fn logit(support: &[f64], predictors: Vec<Lp>) -> Law {
    Law::Logit {
        support: support.to_vec(),
        predictors,
    }
}

fn gaussian(mean: Lp, sd: f64) -> Law {
    Law::Gaussian { mean, sd }
}

fn roles(mediators: &[&str], pre: &[&str], post: &[&str], latent: Option<&str>) -> Roles {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    Roles {
        group: "r".into(),
        outcome: "y".into(),
        mediators: own(mediators),
        confounders_pre: own(pre),
        confounders_post: own(post),
        covariates: vec!["c".into()],
        latent: latent.map(str::to_string),
    }
}

const BINARY: [f64; 2] = [0.0, 1.0];
const TERNARY: [f64; 3] = [0.0, 1.0, 2.0];

/// Binary covariate `c` with P(c = 1) = 0.4 and four groups whose shares
/// depend on `c`.
fn covariate_and_groups() -> [Variable; 2] {
    [
        var("c", table(&BINARY, &[], &[&[0.6, 0.4]])),
        var(
            "r",
            table(
                &[0.0, 1.0, 2.0, 3.0],
                &["c"],
                &[&[0.4, 0.2, 0.2, 0.2], &[0.25, 0.25, 0.2, 0.3]],
            ),
        ),
    ]
}

fn discrete_outcome() -> Variable {
    var(
        "y",
        gaussian(
            Lp::constant(0.5)
                .levels("r", vec![0.0, -0.4, -0.2, -0.6])
                .coef("x1", 0.3)
                .coef("x2", 0.2)
                .coef("d", 0.5)
                .coef("m", 0.4)
                .coef("c", 0.3),
            1.0,
        ),
    )
}

/// Four groups, binary `c`, binary confounders `x1` and `x2`, three-level
/// mediators `d` and `m`, outcome linear in everything. Confounders precede
/// both mediators.
pub fn joint_discrete() -> StructuralModel {
    let [c, r] = covariate_and_groups();
    StructuralModel {
        scenario: Scenario::JointMediators,
        roles: roles(&["d", "m"], &["x1"], &["x2"], None),
        variables: vec![
            c,
            r,
            var(
                "x1",
                logit(
                    &BINARY,
                    vec![Lp::constant(-0.3)
                        .coef("c", 0.5)
                        .levels("r", vec![0.0, 0.4, 0.8, -0.3])],
                ),
            ),
            var(
                "x2",
                logit(
                    &BINARY,
                    vec![Lp::constant(0.2)
                        .coef("x1", 0.6)
                        .coef("c", -0.4)
                        .levels("r", vec![0.0, -0.5, 0.3, 0.6])],
                ),
            ),
            var(
                "d",
                logit(
                    &TERNARY,
                    vec![
                        Lp::constant(0.1)
                            .levels("r", vec![0.0, 0.5, -0.4, 0.8])
                            .coef("x1", 0.4)
                            .coef("x2", -0.3)
                            .coef("c", 0.3),
                        Lp::constant(-0.4)
                            .levels("r", vec![0.0, 0.9, -0.2, 0.4])
                            .coef("x1", 0.2)
                            .coef("x2", 0.5)
                            .coef("c", -0.2),
                    ],
                ),
            ),
            var(
                "m",
                logit(
                    &TERNARY,
                    vec![
                        Lp::constant(-0.2)
                            .levels("r", vec![0.0, -0.6, 0.3, 0.5])
                            .coef("x1", 0.3)
                            .coef("x2", 0.2)
                            .coef("d", 0.4)
                            .coef("c", 0.1),
                        Lp::constant(0.3)
                            .levels("r", vec![0.0, -0.8, 0.1, 0.7])
                            .coef("x1", -0.2)
                            .coef("x2", 0.4)
                            .coef("d", -0.3)
                            .coef("c", 0.2),
                    ],
                ),
            ),
            discrete_outcome(),
        ],
    }
}

/// Like [`joint_discrete`], but the post-exposure confounder `x2` depends
/// on the first mediator `d` and in turn drives `m`.
pub fn interposed_discrete() -> StructuralModel {
    let [c, r] = covariate_and_groups();
    StructuralModel {
        scenario: Scenario::InterposedConfounder,
        roles: roles(&["d", "m"], &["x1"], &["x2"], None),
        variables: vec![
            c,
            r,
            var(
                "x1",
                logit(
                    &BINARY,
                    vec![Lp::constant(-0.3)
                        .coef("c", 0.5)
                        .levels("r", vec![0.0, 0.4, 0.8, -0.3])],
                ),
            ),
            var(
                "d",
                logit(
                    &TERNARY,
                    vec![
                        Lp::constant(0.1)
                            .levels("r", vec![0.0, 0.5, -0.4, 0.8])
                            .coef("x1", 0.4)
                            .coef("c", 0.3),
                        Lp::constant(-0.4)
                            .levels("r", vec![0.0, 0.9, -0.2, 0.4])
                            .coef("x1", 0.2)
                            .coef("c", -0.2),
                    ],
                ),
            ),
            var(
                "x2",
                logit(
                    &BINARY,
                    vec![Lp::constant(-0.2)
                        .coef("x1", 0.6)
                        .coef("d", 0.7)
                        .coef("c", -0.4)
                        .levels("r", vec![0.0, -0.5, 0.3, 0.6])],
                ),
            ),
            var(
                "m",
                logit(
                    &TERNARY,
                    vec![
                        Lp::constant(-0.2)
                            .levels("r", vec![0.0, -0.6, 0.3, 0.5])
                            .coef("x1", 0.3)
                            .coef("x2", 0.6)
                            .coef("d", 0.4)
                            .coef("c", 0.1),
                        Lp::constant(0.3)
                            .levels("r", vec![0.0, -0.8, 0.1, 0.7])
                            .coef("x1", -0.2)
                            .coef("x2", 0.9)
                            .coef("d", -0.3)
                            .coef("c", 0.2),
                    ],
                ),
            ),
            discrete_outcome(),
        ],
    }
}

/// Three groups with a continuous scalar confounder `x`, one continuous
/// mediator `d`, and constant linear effects throughout.
pub fn linear_scalar() -> StructuralModel {
    StructuralModel {
        scenario: Scenario::JointMediators,
        roles: roles(&["d"], &["x"], &[], None),
        variables: vec![
            var("c", table(&BINARY, &[], &[&[0.5, 0.5]])),
            var(
                "r",
                table(&TERNARY, &["c"], &[&[0.5, 0.3, 0.2], &[0.3, 0.3, 0.4]]),
            ),
            var(
                "x",
                gaussian(
                    Lp::constant(0.2)
                        .levels("r", vec![0.0, 0.5, -0.3])
                        .coef("c", 0.4),
                    1.0,
                ),
            ),
            var(
                "d",
                gaussian(
                    Lp::constant(0.0)
                        .levels("r", vec![0.0, 0.6, 0.3])
                        .coef("x", 0.5)
                        .coef("c", 0.2),
                    1.0,
                ),
            ),
            var(
                "y",
                gaussian(
                    Lp::constant(1.0)
                        .levels("r", vec![0.0, -0.3, 0.2])
                        .coef("x", 0.4)
                        .coef("d", 0.7)
                        .coef("c", 0.3),
                    1.0,
                ),
            ),
        ],
    }
}

/// Two groups and two exchangeable continuous mediators `d`, `m`, both
/// loaded by a standard-normal latent `u` with weight `lambda`; `u` enters
/// the outcome with coefficient `gamma_u`. Effects are constant.
pub fn latent_symmetric(gamma_u: f64, lambda: f64) -> StructuralModel {
    let mediator = || {
        gaussian(
            Lp::constant(0.0)
                .levels("r", vec![0.0, 0.8])
                .coef("u", lambda)
                .coef("c", 0.3),
            1.0,
        )
    };
    StructuralModel {
        scenario: Scenario::JointMediators,
        roles: roles(&["d", "m"], &[], &[], Some("u")),
        variables: vec![
            var("c", table(&BINARY, &[], &[&[0.5, 0.5]])),
            var("r", table(&BINARY, &["c"], &[&[0.6, 0.4], &[0.4, 0.6]])),
            var("u", gaussian(Lp::constant(0.0), 1.0)),
            var("d", mediator()),
            var("m", mediator()),
            var(
                "y",
                gaussian(
                    Lp::constant(0.0)
                        .levels("r", vec![0.0, -0.3])
                        .coef("d", 0.5)
                        .coef("m", 0.5)
                        .coef("u", gamma_u)
                        .coef("c", 0.2),
                    1.0,
                ),
            ),
        ],
    }
}

/// Parameters of [`latent_strata`].
#[derive(Debug, Clone, Copy)]
pub struct LatentStrata {
    /// Outcome effect of `u` in stratum `x1 = 0` and `x1 = 1`.
    pub gamma: [f64; 2],
    /// Effect of `u` on the mediator.
    pub lambda: f64,
    pub sd_u: f64,
    pub sd_d: f64,
    /// Mediator mean shift of group 1.
    pub gap: f64,
    /// P(x1 = 1 | c) for c = 0, 1.
    pub p_stratum: [f64; 2],
    pub p_c: f64,
}

impl Default for LatentStrata {
    fn default() -> Self {
        LatentStrata {
            gamma: [0.4, 1.2],
            lambda: 0.8,
            sd_u: 1.0,
            sd_d: 1.0,
            gap: 0.8,
            p_stratum: [0.4, 0.7],
            p_c: 0.5,
        }
    }
}

impl LatentStrata {
    /// Population coefficient of the mediator in the regression of `u` on
    /// it (within group and covariate cell).
    pub fn beta(&self) -> f64 {
        let vu = self.sd_u * self.sd_u;
        self.lambda * vu / (self.lambda * self.lambda * vu + self.sd_d * self.sd_d)
    }

    /// Two groups, binary `c`, a binary stratum `x1` independent of group
    /// given `c`, one continuous mediator `d` loaded by a latent `u` whose
    /// outcome effect differs by stratum.
    pub fn model(&self) -> StructuralModel {
        let q = self.p_stratum;
        StructuralModel {
            scenario: Scenario::JointMediators,
            roles: roles(&["d"], &["x1"], &[], Some("u")),
            variables: vec![
                var("c", table(&BINARY, &[], &[&[1.0 - self.p_c, self.p_c]])),
                var("r", table(&BINARY, &["c"], &[&[0.6, 0.4], &[0.4, 0.6]])),
                var(
                    "x1",
                    table(&BINARY, &["c"], &[&[1.0 - q[0], q[0]], &[1.0 - q[1], q[1]]]),
                ),
                var("u", gaussian(Lp::constant(0.0), self.sd_u)),
                var(
                    "d",
                    gaussian(
                        Lp::constant(0.0)
                            .levels("r", vec![0.0, self.gap])
                            .coef("u", self.lambda)
                            .coef("c", 0.3),
                        self.sd_d,
                    ),
                ),
                var(
                    "y",
                    gaussian(
                        Lp::constant(0.0)
                            .levels("r", vec![0.0, -0.3])
                            .coef("d", 0.6)
                            .coef("c", 0.2)
                            .coef("x1", 0.3)
                            .coef("u", self.gamma[0])
                            .interact("u", "x1", self.gamma[1] - self.gamma[0]),
                        1.0,
                    ),
                ),
            ],
        }
    }
}

/// Two groups with binary `c` and `x1`, a three-level mediator `d`, a
/// binary mediator `m`, and a linear outcome; small enough for repeated
/// bootstrap runs.
pub fn coverage_discrete() -> StructuralModel {
    StructuralModel {
        scenario: Scenario::JointMediators,
        roles: roles(&["d", "m"], &["x1"], &[], None),
        variables: vec![
            var("c", table(&BINARY, &[], &[&[0.5, 0.5]])),
            var("r", table(&BINARY, &["c"], &[&[0.6, 0.4], &[0.4, 0.6]])),
            var(
                "x1",
                logit(
                    &BINARY,
                    vec![Lp::constant(-0.2)
                        .coef("c", 0.6)
                        .levels("r", vec![0.0, 0.5])],
                ),
            ),
            var(
                "d",
                logit(
                    &TERNARY,
                    vec![
                        Lp::constant(0.2)
                            .levels("r", vec![0.0, 0.7])
                            .coef("x1", 0.4)
                            .coef("c", -0.3),
                        Lp::constant(-0.3)
                            .levels("r", vec![0.0, 1.1])
                            .coef("x1", -0.2)
                            .coef("c", 0.3),
                    ],
                ),
            ),
            var(
                "m",
                logit(
                    &BINARY,
                    vec![Lp::constant(0.1)
                        .levels("r", vec![0.0, -0.8])
                        .coef("d", 0.3)
                        .coef("x1", 0.4)
                        .coef("c", 0.2)],
                ),
            ),
            var(
                "y",
                gaussian(
                    Lp::constant(0.0)
                        .levels("r", vec![0.0, -0.4])
                        .coef("x1", 0.3)
                        .coef("d", 0.6)
                        .coef("m", 0.8)
                        .coef("c", 0.2),
                    1.0,
                ),
            ),
        ],
    }
}
