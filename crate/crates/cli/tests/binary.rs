use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", &format!("{name}.scn")].iter().collect()
}

fn navex(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_navex"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn explain_writes_maps_texts_and_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig1");
    let o = navex(&["explain", "--scenario", scenario("fig1").to_str().unwrap(), "--out", out.to_str().unwrap()], &[("NAVEX_SEED", "5")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names = entries(&out);
    assert_eq!(names.iter().filter(|n| n.ends_with(".png")).count(), 4);
    assert_eq!(names.iter().filter(|n| n.ends_with(".legend.txt")).count(), 4);
    for f in ["run.txt", "initial_path.txt", "local_path.txt", "attribution.txt", "texts.txt"] {
        assert!(names.contains(&f.to_string()), "{f} missing from {names:?}");
        assert!(std::fs::read_to_string(out.join(f)).unwrap().contains("seed = 5\n"), "{f} lacks the seed");
    }
    let texts = std::fs::read_to_string(out.join("texts.txt")).unwrap();
    assert!(texts.contains("If the chair right-front of me was not there, I would deviate less from the initial plan."));
    assert!(texts.contains("If the cabinet left-front of me was open, I would deviate less from the initial plan."));
    assert!(texts.contains("# table:movability: no notable effect"));
    assert!(std::fs::read_to_string(out.join("local_path.txt")).unwrap().contains("outcome = deviated"));
    // Only the committed directory is left behind.
    assert_eq!(entries(tmp.path()), ["fig1"]);

    let again = navex(&["explain", "--scenario", scenario("fig1").to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(again.status.code(), Some(2));
    let forced = navex(
        &["explain", "--scenario", scenario("fig1").to_str().unwrap(), "--out", out.to_str().unwrap(), "--force", "--seed", "6"],
        &[],
    );
    assert!(forced.status.success());
    assert!(std::fs::read_to_string(out.join("run.txt")).unwrap().contains("seed = 6\n"));
}

#[test]
fn stuck_scenario_exits_4_with_failure_text() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("stuck");
    let o = navex(&["explain", "--scenario", scenario("stuck").to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let failure = std::fs::read_to_string(out.join("failure.txt")).unwrap();
    assert!(failure.contains("set = chair:movability\n"));
    assert!(failure.contains(
        "text.short-plain = Dear human, here is a chair on my way. I need to slip through. Could you move it from my way?"
    ));
    assert!(!out.join("attribution.txt").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stuck"));
}

#[test]
fn missing_file_leaves_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = navex(&["explain", "--scenario", "/nonexistent/x.scn", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/x.scn"));
    assert!(entries(tmp.path()).is_empty());
}

#[test]
fn malformed_flags_and_scenarios_are_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.scn");
    std::fs::write(&bad, "name = bad\nsize_cells = 0 4\n").unwrap();
    let out = tmp.path().join("out");
    let o = navex(&["explain", "--scenario", bad.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = navex(
        &["explain", "--scenario", scenario("fig1").to_str().unwrap(), "--out", out.to_str().unwrap(), "--window", "-1"],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = navex(&["explain", "--scenario", scenario("fig1").to_str().unwrap(), "--out", out.to_str().unwrap()], &[("NAVEX_STYLE", "plaid")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unreachable_goal_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let walled = tmp.path().join("walled.scn");
    std::fs::write(
        &walled,
        "name = walled\nresolution_m = 0.1\nsize_cells = 40 12\nrobot_radius_m = 0.25\nstart_cell = 5 6\n\
         goal_cell = 34 6\nrobot_pose = 0.55 0.65 0.0\nwall = 20 0 20 11\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = navex(&["explain", "--scenario", walled.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn battery_then_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("batteries");
    let o = navex(
        &["battery", "--scenario", scenario("fig1").to_str().unwrap(), "--out", dir.to_str().unwrap(), "--scale", "1"],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ids: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(ids.len(), 3);
    let names = entries(&dir);
    assert_eq!(names.iter().filter(|n| n.ends_with(".battery")).count(), 3);
    assert_eq!(names.iter().filter(|n| n.ends_with(".png")).count(), 36);

    let null = navex(
        &[
            "battery", "--scenario", scenario("fig1").to_str().unwrap(), "--out", tmp.path().join("t").to_str().unwrap(),
            "--feature", "table:movability",
        ],
        &[],
    );
    assert_eq!(null.status.code(), Some(2));

    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let o = navex(&["summarize"], &[("NAVEX_DATA_DIR", data.to_str().unwrap()), ("NAVEX_BATTERIES", dir.to_str().unwrap())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = String::from_utf8(o.stdout).unwrap();
    assert!(tsv.starts_with("battery_id\tvariant_id\tshown\tchosen"));
    assert_eq!(tsv.lines().count(), 1 + 3 * 16);
    assert!(tsv.lines().nth(1).unwrap().contains("\t0\t0\t-\t"));
}
