//! JSON debug form of surrogate blocks and conic programs.

use ddcc_core::conic::{ConicProgram, LinearRow, Relation, Sense, SocRow};
use ddcc_core::surrogate::{AuxRole, SurrogateBlocks};
use serde_json::{json, Value};

fn linear(rows: &[LinearRow]) -> Value {
    rows.iter()
        .map(|r| {
            json!({
                "coeffs": r.coeffs,
                "constant": r.constant,
                "relation": match r.relation { Relation::LessEq => "<=", Relation::Equal => "=" },
            })
        })
        .collect()
}

fn cones(rows: &[SocRow]) -> Value {
    rows.iter().map(|r| json!({ "a": r.a, "b": r.b, "c": r.c, "e": r.e })).collect()
}

fn role(r: &AuxRole) -> String {
    match r {
        AuxRole::NormVariance => "norm_variance".into(),
        AuxRole::NormRadius => "norm_radius".into(),
        AuxRole::AbsProjection(i) => format!("abs_projection[{i}]"),
        AuxRole::EnvelopeUpper => "envelope_upper".into(),
        AuxRole::EnvelopeLower => "envelope_lower".into(),
        AuxRole::EllipsoidRadius => "ellipsoid_radius".into(),
    }
}

pub fn blocks_json(blocks: &SurrogateBlocks) -> Value {
    let n = blocks.decision_dim();
    let mut variables: Vec<Value> = (0..n).map(|i| json!({ "index": i, "role": "decision" })).collect();
    variables.extend(blocks.aux_roles().iter().enumerate().map(|(k, r)| json!({ "index": n + k, "role": role(r) })));
    let f = blocks.form();
    json!({
        "kind": format!("{:?}", blocks.kind()),
        "alpha": blocks.spec().alpha(),
        "variables": variables,
        "linear_rows": linear(blocks.linear_rows()),
        "soc_rows": cones(blocks.cone_rows()),
        "collapsed": {
            "mean": f.mean,
            "offset": f.offset,
            "radius_coef": f.radius_coef,
            "norm_coef": f.norm_coef,
            "radius_in_norm": f.radius_in_norm,
            "factor": f.factor.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        },
    })
}

pub fn program_json(prog: &ConicProgram) -> Value {
    json!({
        "num_vars": prog.num_vars(),
        "sense": match prog.sense() { Sense::Minimize => "minimize", Sense::Maximize => "maximize" },
        "objective": prog.objective(),
        "lower_bounds": prog.lower_bounds(),
        "linear_rows": linear(prog.linear_rows()),
        "soc_rows": cones(prog.cone_rows()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddcc_core::surrogate::{build_known, ChanceSpec};
    use nalgebra::DMatrix;

    #[test]
    fn known_blocks_golden() {
        let spec = ChanceSpec::identity(2, -1.0, 0.5).unwrap();
        let blocks = build_known(&[1.0, 0.0], &DMatrix::identity(2, 2), &spec).unwrap();
        let v = blocks_json(&blocks);
        assert_eq!(v["kind"], "Known");
        assert_eq!(v["variables"].as_array().unwrap().len(), blocks.num_vars());
        assert_eq!(v["variables"][2]["role"], "norm_variance");
        assert_eq!(v["soc_rows"].as_array().unwrap().len(), blocks.cone_rows().len());
        let p = program_json(&blocks.to_program());
        assert_eq!(p["num_vars"], blocks.num_vars());
        assert_eq!(p["sense"], "minimize");
    }
}
