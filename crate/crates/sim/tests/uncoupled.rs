//! Structural uncoupling check: the player-side crate must not reference
//! the referee crate, the game instance, or anything opponent-shaped. The
//! crate graph already forbids the dependency; this test additionally scans
//! the sources so a refactor cannot quietly reintroduce coupling.

use std::fs;
use std::path::{Path, PathBuf};

fn core_crate_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

#[test]
fn core_manifest_has_no_referee_dependency() {
    let manifest = fs::read_to_string(core_crate_dir().join("Cargo.toml")).unwrap();
    assert!(!manifest.contains("saddlesim-sim"));
    assert!(!manifest.contains("saddlesim-cli"));
}

#[test]
fn core_sources_never_mention_game_side_types() {
    let src_dir = core_crate_dir().join("src");
    let mut checked = 0;
    for entry in fs::read_dir(&src_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "rs") {
            let text = fs::read_to_string(&path).unwrap();
            for forbidden in ["GameInstance", "saddlesim_sim", "payoff_scale", "duality_gap"] {
                assert!(
                    !text.contains(forbidden),
                    "{} mentions {forbidden}",
                    path.display()
                );
            }
            checked += 1;
        }
    }
    assert!(checked >= 9, "expected to scan the full module set");
}
