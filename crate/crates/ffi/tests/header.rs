use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/flexcoord.h")
}

const FUNCTIONS: [&str; 14] = [
    "fc_scenario_load",
    "fc_scenario_free",
    "fc_scenario_n_units",
    "fc_run",
    "fc_result_free",
    "fc_result_n_steps",
    "fc_result_ipf",
    "fc_result_epsilon",
    "fc_result_eta",
    "fc_result_write",
    "fc_pte_ratio",
    "fc_aggregation_error",
    "fc_last_error_message",
    "fc_version",
];

#[test]
fn header_declares_the_whole_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for f in FUNCTIONS {
        assert!(text.contains(&format!("{f}(")), "{f} missing");
    }
    for item in [
        "typedef struct FcScenario FcScenario;",
        "typedef struct FcRunResult FcRunResult;",
        "FC_STATUS_OK = 0",
        "FC_STATUS_PANIC = 7",
        "#define FC_MODE_BOTH 2",
        "#define FC_SERIES_REALIZED 3",
    ] {
        assert!(text.contains(item), "{item} missing");
    }
}

fn c_compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .map(String::from)
}

/// `target/<profile>` holding the library built for this test run.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include "flexcoord.h"

int main(int argc, char **argv) {
    FcScenario *s = NULL;
    FcRunResult *r = NULL;
    double eps = -1.0;
    if (argc < 2) return 10;
    if (fc_scenario_load(argv[1], &s) != FC_STATUS_OK) { fprintf(stderr, "%s\n", fc_last_error_message()); return 1; }
    if (fc_run(s, FC_MODE_BOTH, &r) != FC_STATUS_OK) { fprintf(stderr, "%s\n", fc_last_error_message()); return 2; }
    if (fc_result_epsilon(r, &eps) != FC_STATUS_OK) return 3;
    printf("%zu %.9f %s\n", fc_result_n_steps(r), eps, fc_version());
    fc_result_free(r);
    fc_scenario_free(s);
    return fc_run(NULL, FC_MODE_BOTH, &r) == FC_STATUS_NULL_POINTER ? 0 : 4;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler found; link check not run");
        return;
    };
    let lib = artifact_dir().join("libflexcoord_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = tmp.path().join("main");
    let out = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/scenario_b.toml");
    let run = Command::new(&exe).arg(&scenario).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    let fields: Vec<&str> = stdout.split_whitespace().collect();
    assert_eq!(fields[0], "96");
    assert!(fields[1].parse::<f64>().unwrap() <= 1e-6);
    assert_eq!(fields[2], env!("CARGO_PKG_VERSION"));
}
