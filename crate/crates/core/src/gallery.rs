//! The packaged scenarios under `gallery/`, compiled into the library.

use crate::error::{Error, Result};
use crate::model::NetworkSpec;
use crate::simulate::RoutedScenario;

pub const SPEC_NAMES: [&str; 5] = ["mm1", "tandem", "feedback", "ring3", "multiclass2x3"];

pub const RYBKO_STOLYAR_DEMO: &str = include_str!("../gallery/rybko_stolyar_demo.json");

pub fn spec_json(name: &str) -> Option<&'static str> {
    Some(match name {
        "mm1" => include_str!("../gallery/mm1.json"),
        "tandem" => include_str!("../gallery/tandem.json"),
        "feedback" => include_str!("../gallery/feedback.json"),
        "ring3" => include_str!("../gallery/ring3.json"),
        "multiclass2x3" => include_str!("../gallery/multiclass2x3.json"),
        _ => return None,
    })
}

pub fn spec(name: &str) -> Result<NetworkSpec> {
    let text = spec_json(name).ok_or_else(|| Error::InvalidArgument(format!("no gallery spec named {name}")))?;
    NetworkSpec::from_json_str(text)
}

pub fn rybko_stolyar_demo() -> RoutedScenario {
    RoutedScenario::from_json_str(RYBKO_STOLYAR_DEMO).expect("gallery scenario parses")
}

/// Class ranking for static priority on `multiclass2x3`.
pub fn multiclass_priority() -> Vec<usize> {
    vec![1, 0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::solve_traffic;

    #[test]
    fn every_spec_loads_and_is_stable() {
        for name in SPEC_NAMES {
            let s = spec(name).unwrap();
            let sol = solve_traffic(&s).unwrap();
            let max = sol.server_load.iter().cloned().fold(0.0, f64::max);
            assert!(max < 1.0, "{name}: {max}");
        }
    }

    #[test]
    fn multiclass_busiest_server_at_point_eight() {
        let sol = solve_traffic(&spec("multiclass2x3").unwrap()).unwrap();
        let max = sol.server_load.iter().cloned().fold(0.0, f64::max);
        assert!((max - 0.8).abs() < 1e-12, "{max}");
        let ring = solve_traffic(&spec("ring3").unwrap()).unwrap();
        for l in ring.server_load {
            assert!((l - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn demo_loads() {
        let d = rybko_stolyar_demo();
        for l in d.station_loads() {
            assert!((l - 0.7).abs() < 1e-12);
        }
    }
}
