//! The exact-sum oracle against a hand-written enumeration of two small
//! binary models.

use disparity::sim::{oracle_truth_exact, StructuralModel};
use disparity::Scenario;

const P_C: [f64; 2] = [0.35, 0.65];
const P_R: [[f64; 2]; 2] = [[0.7, 0.3], [0.45, 0.55]];

fn ey(r: usize, x: usize, d: usize, m: usize, c: usize) -> f64 {
    let [r, x, d, m, c] = [r, x, d, m, c].map(|v| v as f64);
    0.2 + 0.5 * r + 0.3 * x + 0.9 * d - 0.6 * m + 0.25 * c + 0.4 * d * x
}

fn bern(p1: f64, v: usize) -> f64 {
    if v == 1 {
        p1
    } else {
        1.0 - p1
    }
}

fn tables(rows: &[[f64; 2]]) -> String {
    let rows: Vec<String> = rows
        .iter()
        .map(|r| format!("[{:?}, {:?}]", r[0], r[1]))
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Outcome law shared by both models.
const OUTCOME: &str = r#"
[[variables]]
name = "y"
law = "gaussian"
sd = 1.0
[variables.mean]
intercept = 0.2
coefficients = { r = 0.5, x = 0.3, d = 0.9, m = -0.6, c = 0.25 }
interactions = [{ a = "d", b = "x", coef = 0.4 }]
"#;

fn head(scenario: &str, pre: &str, post: &str) -> String {
    format!(
        r#"scenario = "{scenario}"
[roles]
group = "r"
outcome = "y"
mediators = ["d", "m"]
confounders_pre = [{pre}]
confounders_post = [{post}]
covariates = ["c"]

[[variables]]
name = "c"
law = "table"
support = [0.0, 1.0]
parents = []
probs = [[{:?}, {:?}]]

[[variables]]
name = "r"
law = "table"
support = [0.0, 1.0]
parents = ["c"]
probs = {}
"#,
        P_C[0],
        P_C[1],
        tables(&P_R)
    )
}

fn table_var(name: &str, parents: &[&str], p1: &[f64]) -> String {
    let rows: Vec<[f64; 2]> = p1.iter().map(|&p| [1.0 - p, p]).collect();
    let parents: Vec<String> = parents.iter().map(|p| format!("{p:?}")).collect();
    format!(
        "\n[[variables]]\nname = \"{name}\"\nlaw = \"table\"\nsupport = [0.0, 1.0]\nparents = [{}]\nprobs = {}\n",
        parents.join(", "),
        tables(&rows)
    )
}

/// P(x=1 | c, r), P(d=1 | r, x, c), P(m=1 | d, r, c); last parent fastest.
const JX: [f64; 4] = [0.4, 0.7, 0.5, 0.8];
const JD: [f64; 8] = [0.2, 0.35, 0.5, 0.6, 0.45, 0.55, 0.7, 0.85];
const JM: [f64; 8] = [0.3, 0.4, 0.6, 0.5, 0.65, 0.75, 0.2, 0.9];

fn joint_model() -> StructuralModel {
    let toml = head("joint_mediators", "\"x\"", "")
        + &table_var("x", &["c", "r"], &JX)
        + &table_var("d", &["r", "x", "c"], &JD)
        + &table_var("m", &["d", "r", "c"], &JM)
        + OUTCOME;
    StructuralModel::from_toml_str(&toml).unwrap()
}

fn joint_truth(r: usize) -> (f64, f64, f64) {
    let px = |x: usize, g: usize, c: usize| bern(JX[c * 2 + g], x);
    let pd = |d: usize, g: usize, x: usize, c: usize| bern(JD[g * 4 + x * 2 + c], d);
    let pm = |m: usize, d: usize, g: usize, c: usize| bern(JM[d * 4 + g * 2 + c], m);
    let mut mean = [0.0; 2];
    let mut cf = 0.0;
    for c in 0..2 {
        let q0 = |d: usize, m: usize| -> f64 {
            (0..2)
                .map(|x| px(x, 0, c) * pd(d, 0, x, c) * pm(m, d, 0, c))
                .sum()
        };
        for x in 0..2 {
            for d in 0..2 {
                for m in 0..2 {
                    for (i, g) in [0, r].into_iter().enumerate() {
                        mean[i] += P_C[c]
                            * px(x, g, c)
                            * pd(d, g, x, c)
                            * pm(m, d, g, c)
                            * ey(g, x, d, m, c);
                    }
                    cf += P_C[c] * px(x, r, c) * q0(d, m) * ey(r, x, d, m, c);
                }
            }
        }
    }
    (mean[1] - mean[0], mean[1] - cf, cf - mean[0])
}

/// P(d=1 | r, c), P(x=1 | r, d, c), P(m=1 | x, d, r, c).
const ID: [f64; 4] = [0.25, 0.4, 0.55, 0.7];
const IX: [f64; 8] = [0.3, 0.45, 0.6, 0.8, 0.35, 0.5, 0.65, 0.9];
const IM: [f64; 16] = [
    0.2, 0.3, 0.4, 0.5, 0.25, 0.35, 0.6, 0.7, 0.3, 0.45, 0.55, 0.65, 0.5, 0.6, 0.75, 0.85,
];

fn interposed_model() -> StructuralModel {
    let toml = head("interposed_confounder", "", "\"x\"")
        + &table_var("d", &["r", "c"], &ID)
        + &table_var("x", &["r", "d", "c"], &IX)
        + &table_var("m", &["x", "d", "r", "c"], &IM)
        + OUTCOME;
    StructuralModel::from_toml_str(&toml).unwrap()
}

fn interposed_truth(r: usize) -> (f64, f64, f64) {
    let pd = |d: usize, g: usize, c: usize| bern(ID[g * 2 + c], d);
    let px = |x: usize, g: usize, d: usize, c: usize| bern(IX[g * 4 + d * 2 + c], x);
    let pm =
        |m: usize, x: usize, d: usize, g: usize, c: usize| bern(IM[x * 8 + d * 4 + g * 2 + c], m);
    let mut mean = [0.0; 2];
    let mut cf = 0.0;
    for c in 0..2 {
        for d in 0..2 {
            for m in 0..2 {
                let q0: f64 = (0..2)
                    .map(|x| pd(d, 0, c) * px(x, 0, d, c) * pm(m, x, d, 0, c))
                    .sum();
                for x in 0..2 {
                    for (i, g) in [0, r].into_iter().enumerate() {
                        mean[i] += P_C[c]
                            * pd(d, g, c)
                            * px(x, g, d, c)
                            * pm(m, x, d, g, c)
                            * ey(g, x, d, m, c);
                    }
                    // E[Y | r, x, d, m, c] P(x | r, d, c) P(d, m | 0, c)
                    cf += P_C[c] * q0 * px(x, r, d, c) * ey(r, x, d, m, c);
                }
            }
        }
    }
    (mean[1] - mean[0], mean[1] - cf, cf - mean[0])
}

fn assert_close(got: (f64, f64, f64), want: (f64, f64, f64)) {
    for (g, w) in [(got.0, want.0), (got.1, want.1), (got.2, want.2)] {
        assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn joint_mediators_match_enumeration() {
    let o = oracle_truth_exact(&joint_model(), 1, Scenario::JointMediators).unwrap();
    let want = joint_truth(1);
    assert_close((o.tau, o.delta, o.zeta), want);
    assert!(want.1.abs() > 1e-2);
}

#[test]
fn interposed_confounder_matches_enumeration() {
    let o = oracle_truth_exact(&interposed_model(), 1, Scenario::InterposedConfounder).unwrap();
    let want = interposed_truth(1);
    assert_close((o.tau, o.delta, o.zeta), want);
    assert!(want.1.abs() > 1e-2);
}
