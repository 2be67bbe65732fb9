use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use intergrid::meshio::{generate_structured, read_vtk_file, write_vtk_file, Field};
use intergrid::Aabb;
use intergrid_cli::{run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("intergrid").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn kv(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn write_prm(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn source_mesh(dir: &Path) -> PathBuf {
    let m = generate_structured(3, 3, 4, &Aabb::unit_cube()).unwrap();
    let u = Field::scalar("u", m.vertices().iter().map(|p| p.x() + 2.0 * p.y()).collect()).unwrap();
    let c = Field::scalar("c", vec![1.5; m.num_vertices()]).unwrap();
    let path = dir.join("source.vtk");
    write_vtk_file(&path, &m, &[u, c]).unwrap();
    path
}

#[test]
fn help_everywhere() {
    for sub in [
        "transfer",
        "locate",
        "shortest-path",
        "laplace",
        "couple-2d3d",
        "checkpoint-demo",
        "info",
    ] {
        let (code, out, _) = cli(&[sub, "--help"]);
        assert_eq!(code, EXIT_OK, "{sub}");
        assert!(out.contains("Usage"), "{sub}: {out}");
    }
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("checkpoint-demo"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(cli(&[]).0, EXIT_USAGE);
    assert_eq!(cli(&["laplace"]).0, EXIT_USAGE);
    let (code, _, err) = cli(&["laplace", "-p", "/nonexistent/file.prm"]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.starts_with("error:"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_intergrid");
    assert_eq!(Command::new(bin).arg("--help").status().unwrap().code(), Some(0));
    assert_eq!(Command::new(bin).arg("bogus").status().unwrap().code(), Some(1));
    let out = Command::new(bin).args(["info", "/nonexistent.vtk"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn info_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = source_mesh(dir.path());
    let (code, out, err) = cli(&["info", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["vertices"], "125");
    assert_eq!(m["cells"], "384");
    assert_eq!(m["faces_tag_6"], "32");
    assert_eq!(m["field_u"], "1");

    let (code, out, err) = cli(&["info", "structured:3:3:4"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["vertices"], "125");
    assert_eq!(m["faces_tag_6"], "32");
    assert!(!m.contains_key("field_u"));
}

#[test]
fn transfer_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    source_mesh(dir.path());
    for method in ["rbf", "rbf-rescaled", "rbf-geodesic", "closest", "linear"] {
        // Graph-distance kernel matrices are not positive definite in
        // general; a support of two edge lengths keeps this one SPD.
        let (target, radius) = if method == "rbf-geodesic" {
            ("structured:3:3:2", "  set Support radius = 0.5\n")
        } else {
            ("structured:3:3:5", "")
        };
        let prm = write_prm(
            dir.path(),
            "t.prm",
            &format!(
                "subsection Transfer\n  set Source mesh = source.vtk\n  set Source field = c\n  set Target mesh = {target}\n  set Method = {method}\n{radius}end\nsubsection Output\n  set Directory = out\n  set File name = {method}.vtk\nend\n"
            ),
        );
        let (code, out, err) = cli(&["transfer", "-p", prm.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{method}: {err}");
        let m = kv(&out);
        assert_eq!(m["method"], method);
        let written = dir.path().join("out").join(format!("{method}.vtk"));
        assert_eq!(PathBuf::from(&m["output"]), written);
        let (_, fields) = read_vtk_file(&written).unwrap();
        assert_eq!(fields[0].name(), "c");
        if method != "rbf" {
            for v in fields[0].values() {
                assert!((v - 1.5).abs() <= 1e-12 * 1.5, "{method}: {v}");
            }
        }
    }
}

#[test]
fn transfer_to_barycenters_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    source_mesh(dir.path());
    let prm = write_prm(
        dir.path(),
        "t.prm",
        "subsection Transfer\n  set Source mesh = source.vtk\n  set Target mesh = structured:3:3:2\n  set Target points = barycenters\n  set Method = linear\nend\n",
    );
    let (code, out, err) = cli(&["transfer", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["targets"], "48");
    assert_eq!(m["outside"], "0");
    let text = std::fs::read_to_string(dir.path().join("output/transfer.csv")).unwrap();
    assert_eq!(text.lines().count(), 49);
    assert!(text.starts_with("x,y,z,u_0\n"));
}

#[test]
fn locate_small_and_full_scale() {
    let dir = tempfile::tempdir().unwrap();
    let prm = write_prm(
        dir.path(),
        "small.prm",
        "subsection Locate\n  set Points = 3000\n  set Queries = 300\n  set Minimum speedup = 0\nend\n",
    );
    let (code, out, err) = cli(&["locate", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["N"], "3000");
    assert_eq!(m["mismatches"], "0");

    // Defaults: N = 100000, Q = 10000, speedup >= 10 enforced.
    let prm = write_prm(dir.path(), "bench.prm", "subsection Locate\nend\n");
    let (code, out, err) = cli(&["locate", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    let m = kv(&out);
    assert_eq!(m["N"], "100000");
    assert_eq!(m["Q"], "10000");
    assert!(m["speedup"].parse::<f64>().unwrap() >= 10.0);
}

#[test]
fn shortest_path_on_interval() {
    let dir = tempfile::tempdir().unwrap();
    let prm = write_prm(
        dir.path(),
        "s.prm",
        "subsection Shortest path\n  set Mesh = structured:1:1:10\n  set Source vertex = 0\n  set Target vertex = 10\nend\n",
    );
    let (code, out, err) = cli(&["shortest-path", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["reachable"], "true");
    assert_eq!(m["hops"], "10");
    assert!((m["length"].parse::<f64>().unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn laplace_by_tag() {
    let dir = tempfile::tempdir().unwrap();
    let prm = write_prm(
        dir.path(),
        "l.prm",
        "subsection Laplace\n  set Mesh = structured:2:2:8\n  set Boundary values = 1: 0, 2: 1\nend\nsubsection Output\n  set Directory = res\nend\n",
    );
    let (code, out, err) = cli(&["laplace", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["constrained"], "18");
    assert_eq!(m["u_min"], "0");
    assert_eq!(m["u_max"], "1");
    let (mesh, fields) = read_vtk_file(dir.path().join("res/laplace.vtk")).unwrap();
    for (p, u) in mesh.vertices().iter().zip(fields[0].values()) {
        assert!((u - p.x()).abs() <= 1e-10);
    }
    let bad = write_prm(
        dir.path(),
        "bad.prm",
        "subsection Laplace\n  set Mesh = structured:2:2:2\n  set Boundary values = 9: 1\nend\n",
    );
    assert_eq!(cli(&["laplace", "-p", bad.to_str().unwrap()]).0, EXIT_RUNTIME);
}

#[test]
fn couple_2d3d_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let prm = write_prm(
        dir.path(),
        "c.prm",
        "subsection Coupling\n  set Mesh = structured:3:3:4\n  set Patch tags = 6\n  set Perimeter coefficients = 1, -1, 0, 0.5\nend\n",
    );
    let (code, out, err) = cli(&["couple-2d3d", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m = kv(&out);
    assert_eq!(m["pairs"], "25");
    assert_eq!(m["surface_vertices"], "25");
    assert_eq!(m["patch_mismatch"].parse::<f64>().unwrap(), 0.0);
    let csv = std::fs::read_to_string(dir.path().join("output/interface_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
}

const LISTING: &str = "  subsection Serialization
    set Enable                      = true
    set Serialization basename      = restart
    set Serialize every n timesteps = 1000
  end

  subsection Restart
    set Enable                 = true
    set Restart basename       = out_dir/restart
    set Restart timestep index = 1000
  end
";

#[test]
fn checkpoint_demo_passes_with_listing() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{LISTING}\nsubsection Output\n  set Directory = out_dir\nend\n");
    let prm = write_prm(dir.path(), "restart.prm", &text);
    let (code, out, err) = cli(&["checkpoint-demo", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    assert_eq!(out.lines().last(), Some("PASS"));
    let m = kv(&out);
    assert_eq!(m["total_steps"], "2000");
    assert_eq!(m["recovered_step"], "1000");
    assert_eq!(m["bit_identical"], "true");
    assert_eq!(m["corruption_detected"], "true");
    assert!(dir.path().join("out_dir/restart_001000.lxrs").exists());

    // Default output directory while the restart basename still points at
    // out_dir: no checkpoint there.
    let dir = tempfile::tempdir().unwrap();
    let prm = write_prm(dir.path(), "other.prm", LISTING);
    let (code, _, err) = cli(&["checkpoint-demo", "-p", prm.to_str().unwrap()]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("restart_001000.lxrs"), "{err}");
}

#[test]
fn outputs_stay_inside_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let escape = write_prm(
        dir.path(),
        "e.prm",
        "subsection Laplace\n  set Mesh = structured:2:2:2\n  set Boundary values = 1: 0\nend\nsubsection Output\n  set File name = ../escape.vtk\nend\n",
    );
    let (code, _, err) = cli(&["laplace", "-p", escape.to_str().unwrap()]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("inside the output directory"), "{err}");
    assert!(!dir.path().join("escape.vtk").exists());

    let abs = dir.path().join("abs.vtk");
    let prm = write_prm(
        dir.path(),
        "a.prm",
        &format!(
            "subsection Coupling\n  set Mesh = structured:3:3:2\nend\nsubsection Output\n  set Volume file name = {}\nend\n",
            abs.display()
        ),
    );
    assert_eq!(cli(&["couple-2d3d", "-p", prm.to_str().unwrap()]).0, EXIT_RUNTIME);
    assert!(!abs.exists());

    let ser = write_prm(
        dir.path(),
        "s.prm",
        &LISTING.replace("= restart\n", "= ../restart\n"),
    );
    assert_eq!(cli(&["checkpoint-demo", "-p", ser.to_str().unwrap()]).0, EXIT_RUNTIME);

    // A full round of every writing subcommand leaves files only below out/.
    let before = files_under(dir.path());
    source_mesh(dir.path());
    let jobs = [
        ("transfer", "subsection Transfer\n set Source mesh = source.vtk\n set Target mesh = structured:3:3:2\nend\n"),
        ("laplace", "subsection Laplace\n set Mesh = structured:2:2:3\n set Boundary values = 3: 1\nend\n"),
        ("couple-2d3d", "subsection Coupling\n set Mesh = structured:3:3:2\nend\n"),
        ("checkpoint-demo", &LISTING.replace("out_dir/restart", "out/restart")),
        ("shortest-path", "subsection Shortest path\n set Mesh = structured:2:2:2\n set Source vertex = 0\n set Target vertex = 8\nend\n"),
    ];
    let mut allowed = before.clone();
    allowed.push(dir.path().join("source.vtk"));
    for (sub, body) in jobs {
        let prm = write_prm(dir.path(), "job.prm", &format!("{body}subsection Output\n set Directory = out\nend\n"));
        allowed.push(prm.clone());
        let (code, _, err) = cli(&[sub, "-p", prm.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{sub}: {err}");
    }
    for f in files_under(dir.path()) {
        assert!(allowed.contains(&f) || f.starts_with(dir.path().join("out")), "{}", f.display());
    }
}
