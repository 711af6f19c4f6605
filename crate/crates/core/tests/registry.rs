//! Samplers built by name feed every diagnostic, including samplers read
//! back from the overlap-sample exchange format.

use std::io::BufReader;

use serde_json::json;
use spinglass::identities::{gg_check, singularity_curve, CoincidenceMode, GGTestSpec, SingularitySpec, TestFunction};
use spinglass::observables::{estimate_observable, read_overlap_lines, write_overlap_lines, MonomialObservable};
use spinglass::oracle::SamplerRegistry;
use spinglass::rng::stream;
use spinglass::rpc::{rpc_overlaps, ParameterFunction};

#[test]
fn every_builtin_feeds_the_estimator() {
    let reg = SamplerRegistry::with_builtins();
    let x = json!({"breakpoints": [0.5], "values": [0.5, 1.0]});
    let specs = [
        json!({"kind": "sk", "n": 6, "beta": 1.0}),
        json!({"kind": "sk-sorted", "n": 6, "beta": [0.9, 1.1]}),
        json!({"kind": "rpc-coalescent", "x": x}),
        json!({"kind": "rpc-cascade", "x": x, "truncation": 200}),
        json!({"kind": "sphere", "dim": 10}),
    ];
    let m = MonomialObservable::pair(0, 1, 2).unwrap();
    for spec in specs {
        let sampler = reg.build_tagged(&spec).unwrap();
        let e = estimate_observable(sampler.as_ref(), &m, 20, 5, 3).unwrap();
        assert!(e.mean > 0.0 && e.mean <= 1.0, "{}: {e:?}", sampler.label());
    }
    assert!(reg.build_tagged(&json!({"kind": "sk", "nn": 6})).is_err());
    assert!(reg.build_tagged(&json!({"kind": "nope"})).is_err());
}

#[test]
fn recorded_samples_round_trip_through_the_registry() {
    let x = ParameterFunction::one_step(0.5, 0.5).unwrap();
    let mut rng = stream(9, 0, 0);
    let matrices: Vec<_> = (0..3000).map(|_| rpc_overlaps(&x, 6, &mut rng).unwrap()).collect();
    let mut buf = Vec::new();
    write_overlap_lines(&mut buf, &matrices).unwrap();
    assert_eq!(read_overlap_lines(BufReader::new(&buf[..])).unwrap(), matrices);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overlaps.jsonl");
    std::fs::write(&path, &buf).unwrap();
    let sampler = SamplerRegistry::with_builtins()
        .build_tagged(&json!({"kind": "samples", "path": path, "lattice": "exact"}))
        .unwrap();
    assert_eq!(sampler.max_replicas(), Some(6));

    let spec = GGTestSpec {
        s: 2,
        function: TestFunction::Monomial {
            k: 1,
            rest: "q12".parse().unwrap(),
        },
        n_outer: 2000,
        n_inner: 1,
    };
    assert!(gg_check(sampler.as_ref(), &spec, 1).unwrap().z_score.abs() < 4.0);

    let curve = singularity_curve(
        sampler.as_ref(),
        &SingularitySpec {
            s_max: 5,
            mode: CoincidenceMode::Exact,
            n_outer: 2000,
            n_inner: 1,
        },
        2,
    )
    .unwrap();
    // s = 3 value p(1 - p) = 1/4
    assert!(curve[0].estimate.z_against(0.25).abs() < 4.0);
}
