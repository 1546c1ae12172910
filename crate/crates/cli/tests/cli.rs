use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 11] = [
    "phantom generate",
    "motion-correct",
    "segment-ica",
    "idif",
    "mcif",
    "patlak",
    "suv",
    "segment-tumor",
    "harmonize",
    "extract",
    "export",
];

fn dpet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpet")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compare `--help` output with the checked-in text; `UPDATE_GOLDEN=1`
/// rewrites the files instead.
#[test]
fn help_matches_golden() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let tmp = tempfile::tempdir().unwrap();
    for sub in std::iter::once("").chain(SUBCOMMANDS) {
        let mut args: Vec<&str> = sub.split_whitespace().collect();
        args.push("--help");
        let out = dpet(tmp.path(), &args);
        ok(&out);
        let text = String::from_utf8(out.stdout).unwrap();
        let name = if sub.is_empty() { "dpet".to_string() } else { sub.replace(' ', "-") };
        let file = golden_dir().join(format!("{name}.txt"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&file, &text).unwrap();
        } else {
            let want = std::fs::read_to_string(&file).unwrap_or_else(|e| panic!("{}: {e}", file.display()));
            assert_eq!(text, want, "{name} help changed; rerun with UPDATE_GOLDEN=1 if intended");
        }
    }
}

#[test]
fn every_option_is_documented_in_help() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let mut args: Vec<&str> = sub.split_whitespace().collect();
        args.push("--help");
        let out = dpet(tmp.path(), &args);
        let text = String::from_utf8(out.stdout).unwrap();
        for line in text.lines().filter(|l| l.trim_start().starts_with("--")) {
            let flag = line.trim_start().split([' ', '=']).next().unwrap();
            if ["--help", "--config", "--workers", "--log-level", "--seed"].contains(&flag) {
                continue;
            }
            assert!(line.len() > flag.len() + 4, "{sub} {flag} lacks a description");
        }
    }
    let out = dpet(tmp.path(), &["--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("patlak.t-star"));
}

/// A small noiseless study up to the input curve.
fn study(dir: &Path) {
    ok(&dpet(dir, &["phantom", "generate", "--out", "sim", "--noise-scale", "0"]));
    ok(&dpet(dir, &["segment-ica", "--input", "sim/pet.nii", "--out", "ica.nii"]));
    ok(&dpet(
        dir,
        &["idif", "--input", "sim/pet.nii", "--mask", "ica.nii", "--out", "idif.csv", "--tissue-out", "tissue.csv"],
    ));
}

#[test]
fn patlak_exit_codes_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    study(dir);
    let patlak = ["patlak", "--input", "sim/pet.nii", "--idif", "idif.csv", "--out-dir", "ki"];

    let mut late = patlak.to_vec();
    late.extend(["--t-star", "70"]);
    let out = dpet(dir, &late);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frames at or after t* = 70"), "{err}");

    // the same setting through a config file, then overridden on the command line
    std::fs::write(dir.join("late.cfg"), "# late start\npatlak.t-star = 70\nseed=1\n").unwrap();
    let mut with_cfg = patlak.to_vec();
    with_cfg.extend(["--config", "late.cfg"]);
    assert_eq!(dpet(dir, &with_cfg).status.code(), Some(2));
    with_cfg.extend(["--t-star", "20"]);
    ok(&dpet(dir, &with_cfg));
    let prov = std::fs::read_to_string(dir.join("ki/provenance.txt")).unwrap();
    assert!(prov.contains("config patlak.t-star=20\n"), "{prov}");
    assert!(prov.contains("config seed=1\n"), "{prov}");
    assert!(prov.contains("input pet.nii sha256=") && prov.contains("output ki.nii sha256="), "{prov}");

    std::fs::write(dir.join("bad.cfg"), "patlak.tstar=30\n").unwrap();
    let out = dpet(dir, &["--config", "bad.cfg", "patlak", "--input", "x", "--idif", "y", "--out-dir", "z"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `patlak.tstar`"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(dpet(dir, &["patlak", "--input", "a.nii"]).status.code(), Some(2));
    let missing = dpet(dir, &["suv", "--input", "nope.nii", "--out", "s.nii", "--dose", "300", "--weight", "70"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.nii"));
    let both = dpet(dir, &["patlak", "--input", "a", "--idif", "b", "--mcif", "c", "--out-dir", "d"]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let hashes: Vec<String> = ["a", "b"]
        .iter()
        .map(|run| {
            let dir = tmp.path().join(run);
            std::fs::create_dir_all(&dir).unwrap();
            ok(&dpet(&dir, &["--seed", "7", "phantom", "generate", "--out", "sim", "--noise-scale", "5"]));
            std::fs::read_to_string(dir.join("sim/provenance.txt")).unwrap()
        })
        .collect();
    assert_eq!(hashes[0], hashes[1]);
    assert!(hashes[0].contains("output pet.nii sha256="));
}
