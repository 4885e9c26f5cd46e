//! File formats: network and time-scale JSON, trajectory and game CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::network::{GameState, NetworkFile, NetworkSpec};
use crate::timescale::{TimeScale, TimeScaleFile};

/// Seventeen significant digits; enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn parse_network(text: &str) -> Result<NetworkSpec> {
    let file: NetworkFile = serde_json::from_str(text)?;
    NetworkSpec::from_file(file)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    parse_network(&fs::read_to_string(path)?)
}

pub fn parse_timescale(text: &str) -> Result<TimeScale> {
    let file: TimeScaleFile = serde_json::from_str(text)?;
    TimeScale::normalize(&file.into_elements())
}

pub fn load_timescale(path: impl AsRef<Path>) -> Result<TimeScale> {
    parse_timescale(&fs::read_to_string(path)?)
}

pub fn network_json(net: &NetworkSpec) -> Result<String> {
    to_json(&net.to_file())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `t,node_0,…,node_{n-1},V,envelope_bound`. `V = ‖u - u*‖²`; the
/// bound column is left empty when no envelope was computed.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    traj: &Trajectory,
    u_star: &DVector<f64>,
    envelope: Option<&[f64]>,
) -> Result<()> {
    if let Some(b) = envelope {
        if b.len() != traj.samples.len() {
            return Err(Error::DimensionMismatch { expected: traj.samples.len(), got: b.len() });
        }
    }
    let n = u_star.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("node_{i}")));
    header.push("V".into());
    header.push("envelope_bound".into());
    w.write_record(&header)?;
    for (k, s) in traj.samples.iter().enumerate() {
        if s.u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.u.len() });
        }
        let mut row = Vec::with_capacity(n + 3);
        row.push(fmt_f64(s.t));
        row.extend(s.u.iter().map(|&x| fmt_f64(x)));
        row.push(fmt_f64((&s.u - u_star).norm_squared()));
        row.push(envelope.map(|b| fmt_f64(b[k])).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `step,node_0,…,node_{n-1}` with 0/1 entries.
pub fn write_game_csv<W: Write>(out: W, states: &[GameState]) -> Result<()> {
    let n = states.first().map_or(0, |s| s.states.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("node_{i}")));
    w.write_record(&header)?;
    for s in states {
        let mut row = vec![s.step.to_string()];
        row.extend(s.states.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimConfig};
    use crate::network::{Graph, HopfieldSystem};

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn network_json_round_trip() {
        let text = r#"{
            "nodes": [
                {"id": "alice", "C": 1.0, "R": 2.0, "lambda": 0.5, "M": 1.0, "J": 0.1},
                {"id": 7, "C": 1.5, "R": 1.0, "lambda": 1.0, "M": 2.0, "U": 0.3}
            ],
            "edges": [[0, 1]],
            "payoff": {"b": 0.4, "c": 0.1},
            "activation": "logistic"
        }"#;
        let net = parse_network(text).unwrap();
        assert_eq!(net.label(0), "alice");
        assert_eq!(net.label(1), "7");
        assert_eq!(net.graph.degree(0), 1);
        assert_eq!(net.nodes[1].threshold, 0.3);
        let again = parse_network(&network_json(&net).unwrap()).unwrap();
        assert_eq!(again, net);
    }

    #[test]
    fn malformed_inputs_are_errors() {
        assert!(matches!(parse_network("{"), Err(Error::Json(_))));
        let bad_edge = r#"{"nodes":[{"C":1,"R":1,"lambda":1,"M":1}],"edges":[[0,3]],"payoff":{"b":2,"c":1}}"#;
        assert!(parse_network(bad_edge).is_err());
        let bad_payoff = r#"{"nodes":[{"C":1,"R":1,"lambda":1,"M":1}],"payoff":{"b":1,"c":2}}"#;
        assert!(parse_network(bad_payoff).is_err());
        assert!(parse_timescale(r#"[{"interval":[2,1]}]"#).is_err());
    }

    #[test]
    fn timescale_json_forms() {
        let ts = parse_timescale(
            r#"[{"interval":[0,1]},{"point":1.5},{"grid":{"start":2,"stop":3,"step":0.5}},
                {"periodic":{"block":[{"interval":[4,4.5]}],"period":1,"repeat":2}}]"#,
        )
        .unwrap();
        assert_eq!(ts.sigma(1.5).unwrap(), 2.0);
        assert_eq!(ts.sigma(3.0).unwrap(), 4.0);
        assert_eq!(ts.sup(), 5.5);
        let wrapped = parse_timescale(r#"{"elements":[{"interval":[0,"inf"]}]}"#).unwrap();
        assert!(wrapped.is_unbounded_above());
    }

    #[test]
    fn trajectory_csv_layout() {
        let net = crate::network::NetworkSpec::uniform(
            Graph::ring(3),
            crate::network::NodeParams::new(1.0, 1.0, 1.0, 1.0),
            crate::network::PayoffSpec::new(0.2, 0.1).unwrap(),
            Default::default(),
        )
        .unwrap();
        let sys: HopfieldSystem = net.build_system();
        let ts = TimeScale::from_segments(&[(0.0, 1.0), (2.0, 2.0)]).unwrap();
        let u0 = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let traj = simulate(&sys, &ts, &u0, 0.0, 2.0, &SimConfig { dense_samples: 4, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &DVector::zeros(3), None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,node_0,node_1,node_2,V,envelope_bound");
        assert_eq!(lines.len(), 1 + 6);
        let first: Vec<_> = lines[1].split(',').collect();
        assert_eq!(first[4].parse::<f64>().unwrap(), 2.0);
        assert_eq!(first[5], "");
        assert!(write_trajectory_csv(Vec::new(), &traj, &DVector::zeros(3), Some(&[1.0])).is_err());
    }

    #[test]
    fn game_csv_layout() {
        let states = vec![GameState::all_defect(2), GameState { step: 1, states: vec![1, 0] }];
        let mut buf = Vec::new();
        write_game_csv(&mut buf, &states).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,node_0,node_1\n0,0,0\n1,1,0\n");
    }
}
