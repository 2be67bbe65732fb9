//! Front-end of the `intergrid` binary. Every subcommand except `info`
//! reads a parameter file (`-p file.prm`) and prints `key=value` lines.
//!
//! Relative paths inside a parameter file are resolved against the
//! directory of that file. Outputs are written only below the configured
//! output directory (`Output` / `Directory`, default `output`).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use intergrid::fem::{couple_surface_volume, solve_laplace_with_report, DirichletBC};
use intergrid::geodesic::{shortest_path, EdgeGraph};
use intergrid::locator::{nearest_linear, RTreeIndex};
use intergrid::meshio::{generate_structured, read_vtk_file, write_vtk_file, Field, Mesh, Tag};
use intergrid::prm::{parse_prm, ParamTree};
use intergrid::restart::demo::{self, DecayStepper, DemoConfig};
use intergrid::restart::{RestartParams, SerializationParams};
use intergrid::transfer::{
    default_support_radius, quadrature_targets, remap_closest_point, remap_linear, setup_geodesic_metric, setup_rbf,
    Kernel, KernelFamily, Method, Metric, DEFAULT_RADIUS_FACTOR,
};
use intergrid::{Aabb, Point};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "intergrid", version, about = "Mesh-to-mesh transfer, point location, P1 solvers and checkpointing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct PrmArg {
    /// Parameter file
    #[arg(short = 'p', long = "prm", value_name = "FILE")]
    prm: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Transfer a vertex field from one mesh to another
    Transfer(PrmArg),
    /// Benchmark R-tree nearest-vertex queries against a linear scan
    Locate(PrmArg),
    /// Shortest edge path between two mesh vertices
    ShortestPath(PrmArg),
    /// Solve a Laplace problem with Dirichlet data by boundary tag
    Laplace(PrmArg),
    /// Laplace-Beltrami on a boundary patch, then volume Laplace
    #[command(name = "couple-2d3d")]
    Couple2d3d(PrmArg),
    /// Checkpoint and restart a decay stepper and check resume equivalence
    CheckpointDemo(PrmArg),
    /// Print mesh statistics of a legacy VTK file or structured mesh
    Info {
        /// Mesh file (.vtk) or structured:<topo>:<space>:<n>
        mesh: String,
    },
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Info { mesh } => cmd_info(mesh, out),
        Command::Transfer(a) => Ctx::load(&a.prm).and_then(|c| cmd_transfer(&c, out)),
        Command::Locate(a) => Ctx::load(&a.prm).and_then(|c| cmd_locate(&c, out)),
        Command::ShortestPath(a) => Ctx::load(&a.prm).and_then(|c| cmd_shortest_path(&c, out)),
        Command::Laplace(a) => Ctx::load(&a.prm).and_then(|c| cmd_laplace(&c, out)),
        Command::Couple2d3d(a) => Ctx::load(&a.prm).and_then(|c| cmd_couple(&c, out)),
        Command::CheckpointDemo(a) => Ctx::load(&a.prm).and_then(|c| cmd_checkpoint_demo(&c, out)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// A parsed parameter file and the directory its relative paths refer to.
struct Ctx {
    prm: ParamTree,
    base: PathBuf,
}

impl Ctx {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let prm = parse_prm(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Ctx { prm, base })
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn output_dir(&self) -> Result<PathBuf> {
        let dir = self.resolve(self.prm.get_string_or(&["Output", "Directory"], "output"));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    /// `dir/name`, where `name` must stay inside `dir`.
    fn output_file(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let rel = Path::new(name);
        ensure!(
            !name.is_empty() && rel.components().all(|c| matches!(c, Component::Normal(_))),
            "output name '{name}' must be a relative path inside the output directory"
        );
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    /// A mesh from a VTK file or `structured:<topo>:<space>:<n>` on the unit cube.
    fn mesh(&self, spec: &str) -> Result<(Mesh, Vec<Field>)> {
        if let Some(rest) = spec.strip_prefix("structured:") {
            let nums: Vec<usize> = rest
                .split(':')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow!("bad mesh spec '{spec}', expected structured:<topo>:<space>:<n>"))?;
            ensure!(nums.len() == 3, "bad mesh spec '{spec}', expected structured:<topo>:<space>:<n>");
            let m = generate_structured(nums[0], nums[1], nums[2], &Aabb::unit_cube())?;
            Ok((m, Vec::new()))
        } else {
            let path = self.resolve(spec);
            let (mut m, fields) = read_vtk_file(&path).with_context(|| format!("reading {}", path.display()))?;
            m.tag_boundary_by_bbox();
            Ok((m, fields))
        }
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| anyhow!("bad {what} '{s}' in '{raw}'")))
        .collect()
}

/// `a, b, c, d` meaning `a x + b y + c z + d`.
fn affine(raw: &str) -> Result<impl Fn(&Point) -> f64> {
    let c: Vec<f64> = parse_list(raw, "coefficient")?;
    ensure!(c.len() == 4, "expected four coefficients 'a, b, c, d', got '{raw}'");
    Ok(move |p: &Point| c[0] * p.x() + c[1] * p.y() + c[2] * p.z() + c[3])
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn cmd_info(spec: &str, out: &mut dyn Write) -> Result<()> {
    let ctx = Ctx {
        prm: ParamTree::new(),
        base: PathBuf::new(),
    };
    let (mesh, fields) = ctx.mesh(spec)?;
    write!(out, "{}", mesh.info())?;
    for f in &fields {
        writeln!(out, "field_{}={}", f.name(), f.components())?;
    }
    Ok(())
}

fn cmd_transfer(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    const S: &str = "Transfer";
    let p = &ctx.prm;
    let (src, fields) = ctx.mesh(p.get_string(&[S, "Source mesh"])?)?;
    let field = match p.lookup(&[S, "Source field"]) {
        Some(name) => fields
            .iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| anyhow!("source mesh has no field '{name}'"))?,
        None => fields.first().ok_or_else(|| anyhow!("source mesh carries no field"))?,
    };
    let (tgt, _) = ctx.mesh(p.get_string(&[S, "Target mesh"])?)?;
    let method: Method = p.get_string_or(&[S, "Method"], "rbf-rescaled").parse().map_err(|e: String| anyhow!(e))?;
    let at = p.get_string_or(&[S, "Target points"], "vertices");
    let targets = match at {
        "vertices" => tgt.vertices().to_vec(),
        "barycenters" => quadrature_targets(&tgt),
        other => bail!("Target points must be 'vertices' or 'barycenters', got '{other}'"),
    };
    let c = field.components();
    writeln!(out, "method={method}")?;
    writeln!(out, "sources={}", src.num_vertices())?;
    writeln!(out, "targets={}", targets.len())?;
    writeln!(out, "components={c}")?;

    let t0 = Instant::now();
    let values = match method {
        Method::Closest => remap_closest_point(&src, field, &targets)?,
        Method::Linear => {
            let r = remap_linear(&src, field, &targets)?;
            writeln!(out, "outside={}", r.outside.iter().filter(|&&o| o).count())?;
            r.values
        }
        Method::Rbf | Method::RbfRescaled | Method::RbfGeodesic => {
            let family: KernelFamily = p.get_string_or(&[S, "Kernel"], "wendland-c2").parse().map_err(|e: String| anyhow!(e))?;
            let radius = match p.get_real_or(&[S, "Support radius"], 0.0)? {
                r if r > 0.0 => r,
                _ => default_support_radius(
                    src.vertices(),
                    p.get_real_or(&[S, "Radius factor"], DEFAULT_RADIUS_FACTOR)?,
                )?,
            };
            let metric = if method == Method::RbfGeodesic {
                let background = match p.lookup(&[S, "Geodesic mesh"]) {
                    Some(spec) => ctx.mesh(spec)?.0,
                    None => src.clone(),
                };
                Metric::Geodesic(setup_geodesic_metric(&background)?)
            } else {
                Metric::Euclidean
            };
            let op = setup_rbf(src.vertices(), Kernel::new(family, radius)?, metric, method != Method::Rbf)?;
            let r = op.interpolate(field.values(), c, &targets)?;
            writeln!(out, "kernel={family:?}")?;
            writeln!(out, "support_radius={radius}")?;
            writeln!(out, "matrix_nnz={}", op.system().nnz())?;
            write!(out, "{}", r.report)?;
            r.values
        }
    };
    writeln!(out, "seconds={:.6}", t0.elapsed().as_secs_f64())?;
    let (lo, hi) = range(&values);
    writeln!(out, "value_min={lo}")?;
    writeln!(out, "value_max={hi}")?;

    let dir = ctx.output_dir()?;
    let path = if at == "vertices" {
        let path = ctx.output_file(&dir, ctx.prm.get_string_or(&["Output", "File name"], "transfer.vtk"))?;
        write_vtk_file(&path, &tgt, &[Field::new(field.name(), c, values)?])?;
        path
    } else {
        let path = ctx.output_file(&dir, ctx.prm.get_string_or(&["Output", "File name"], "transfer.csv"))?;
        let mut text = String::from("x,y,z");
        for k in 0..c {
            text.push_str(&format!(",{}_{k}", field.name()));
        }
        text.push('\n');
        for (pt, vals) in targets.iter().zip(values.chunks(c)) {
            text.push_str(&format!("{},{},{}", pt.x(), pt.y(), pt.z()));
            for v in vals {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        std::fs::write(&path, text)?;
        path
    };
    writeln!(out, "output={}", path.display())?;
    Ok(())
}

fn cmd_locate(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    const S: &str = "Locate";
    let p = &ctx.prm;
    let seed = p.get_int_or(&[S, "Seed"], 1)? as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point> = match p.lookup(&[S, "Mesh"]) {
        Some(spec) => ctx.mesh(spec)?.0.vertices().to_vec(),
        None => {
            let n = usize::try_from(p.get_int_or(&[S, "Points"], 100_000)?)?;
            (0..n).map(|_| Point::new(rng.gen(), rng.gen(), rng.gen())).collect()
        }
    };
    ensure!(!points.is_empty(), "no points to index");
    let q = usize::try_from(p.get_int_or(&[S, "Queries"], 10_000)?)?;
    let cap = usize::try_from(p.get_int_or(&[S, "Leaf capacity"], 16)?)?;
    let min_speedup = p.get_real_or(&[S, "Minimum speedup"], 10.0)?;
    let bbox = Aabb::from_points(&points);
    let queries: Vec<Point> = (0..q)
        .map(|_| Point(std::array::from_fn(|a| bbox.min.0[a] + rng.gen::<f64>() * bbox.side(a))))
        .collect();

    let t0 = Instant::now();
    let tree = RTreeIndex::build(&points, cap)?;
    let build = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let fast: Vec<_> = queries.iter().map(|x| tree.nearest(x)).collect();
    let tree_time = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let slow = queries
        .iter()
        .map(|x| nearest_linear(&points, x))
        .collect::<Result<Vec<_>, _>>()?;
    let linear_time = t0.elapsed().as_secs_f64();
    let mismatches = fast
        .iter()
        .zip(&slow)
        .filter(|(a, b)| a.index != b.index || a.distance.to_bits() != b.distance.to_bits())
        .count();
    let speedup = linear_time / tree_time.max(1e-9);

    writeln!(out, "N={}", points.len())?;
    writeln!(out, "Q={q}")?;
    writeln!(out, "leaf_capacity={cap}")?;
    writeln!(out, "tree_height={}", tree.height())?;
    writeln!(out, "build_seconds={build:.6}")?;
    writeln!(out, "tree_seconds={tree_time:.6}")?;
    writeln!(out, "linear_seconds={linear_time:.6}")?;
    writeln!(out, "speedup={speedup:.2}")?;
    writeln!(out, "mismatches={mismatches}")?;
    ensure!(mismatches == 0, "{mismatches} queries disagree with the linear scan");
    ensure!(
        speedup >= min_speedup,
        "speedup {speedup:.2} below the required {min_speedup}"
    );
    Ok(())
}

fn cmd_shortest_path(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    const S: &str = "Shortest path";
    let p = &ctx.prm;
    let (mesh, _) = ctx.mesh(p.get_string(&[S, "Mesh"])?)?;
    let a = usize::try_from(p.get_int(&[S, "Source vertex"])?)?;
    let b = usize::try_from(p.get_int(&[S, "Target vertex"])?)?;
    let graph = EdgeGraph::from_mesh(&mesh);
    writeln!(out, "vertices={}", graph.num_vertices())?;
    writeln!(out, "edges={}", graph.num_edges())?;
    writeln!(out, "source={a}")?;
    writeln!(out, "target={b}")?;
    match shortest_path(&graph, a, b)? {
        Some(path) => {
            writeln!(out, "reachable=true")?;
            writeln!(out, "length={}", path.length)?;
            writeln!(out, "euclidean={}", mesh.vertex(a).distance(&mesh.vertex(b)))?;
            writeln!(out, "hops={}", path.vertices.len() - 1)?;
            let ids: Vec<String> = path.vertices.iter().map(usize::to_string).collect();
            writeln!(out, "path={}", ids.join(" "))?;
        }
        None => writeln!(out, "reachable=false")?,
    }
    Ok(())
}

/// `tag: value, tag: value`. A vertex on faces of several listed tags
/// takes the value of the first one listed.
fn boundary_table(mesh: &Mesh, raw: &str) -> Result<DirichletBC> {
    let mut seen = std::collections::HashSet::new();
    let mut entries = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (tag, value) = item
            .split_once(':')
            .ok_or_else(|| anyhow!("bad boundary entry '{item}', expected '<tag>: <value>'"))?;
        let tag: Tag = tag.trim().parse().map_err(|_| anyhow!("bad tag in '{item}'"))?;
        let value: f64 = value.trim().parse().map_err(|_| anyhow!("bad value in '{item}'"))?;
        let verts = mesh.boundary_vertices(&[tag]);
        ensure!(!verts.is_empty(), "no boundary faces carry tag {tag}");
        entries.extend(verts.into_iter().filter(|v| seen.insert(*v)).map(|v| (v, value)));
    }
    Ok(DirichletBC::new(entries)?)
}

fn cmd_laplace(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    const S: &str = "Laplace";
    let p = &ctx.prm;
    let (mesh, _) = ctx.mesh(p.get_string(&[S, "Mesh"])?)?;
    let bc = boundary_table(&mesh, p.get_string(&[S, "Boundary values"])?)?;
    let (u, report) = solve_laplace_with_report(&mesh, &bc)?;
    let (lo, hi) = range(u.values());
    writeln!(out, "vertices={}", mesh.num_vertices())?;
    writeln!(out, "cells={}", mesh.num_cells())?;
    writeln!(out, "constrained={}", bc.len())?;
    writeln!(out, "cg_iterations={}", report.iterations)?;
    writeln!(out, "relative_residual={:e}", report.relative_residual)?;
    writeln!(out, "u_min={lo}")?;
    writeln!(out, "u_max={hi}")?;
    let dir = ctx.output_dir()?;
    let path = ctx.output_file(&dir, p.get_string_or(&["Output", "File name"], "laplace.vtk"))?;
    write_vtk_file(&path, &mesh, &[u])?;
    writeln!(out, "output={}", path.display())?;
    Ok(())
}

fn cmd_couple(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    const S: &str = "Coupling";
    let p = &ctx.prm;
    let (mesh, _) = ctx.mesh(p.get_string_or(&[S, "Mesh"], "structured:3:3:8"))?;
    let tags: Vec<Tag> = parse_list(p.get_string_or(&[S, "Patch tags"], "6"), "tag")?;
    let perimeter = affine(p.get_string_or(&[S, "Perimeter coefficients"], "1, 0, 0, 0"))?;
    let remaining = affine(p.get_string_or(&[S, "Remaining coefficients"], "0, 0, 0, 0"))?;
    let c = couple_surface_volume(&mesh, &tags, perimeter, remaining)?;

    let mismatch = c
        .map
        .pairs
        .iter()
        .map(|pr| (c.volume_field.value(pr.b)[0] - c.surface_field.value(pr.a)[0]).abs())
        .fold(0.0, f64::max);
    let (slo, shi) = range(c.surface_field.values());
    let (vlo, vhi) = range(c.volume_field.values());
    writeln!(out, "surface_vertices={}", c.surface.num_vertices())?;
    writeln!(out, "surface_cells={}", c.surface.num_cells())?;
    writeln!(out, "volume_vertices={}", mesh.num_vertices())?;
    writeln!(out, "pairs={}", c.map.len())?;
    writeln!(out, "conflicts={}", c.map.conflicts.len())?;
    writeln!(out, "max_pair_distance={:e}", c.map.max_distance())?;
    writeln!(out, "patch_mismatch={mismatch:e}")?;
    writeln!(out, "surface_cg_iterations={}", c.surface_report.iterations)?;
    writeln!(out, "volume_cg_iterations={}", c.volume_report.iterations)?;
    writeln!(out, "surface_min={slo}")?;
    writeln!(out, "surface_max={shi}")?;
    writeln!(out, "volume_min={vlo}")?;
    writeln!(out, "volume_max={vhi}")?;

    let dir = ctx.output_dir()?;
    let sp = ctx.output_file(&dir, p.get_string_or(&["Output", "Surface file name"], "surface.vtk"))?;
    let vp = ctx.output_file(&dir, p.get_string_or(&["Output", "Volume file name"], "volume.vtk"))?;
    let mp = ctx.output_file(&dir, p.get_string_or(&["Output", "Map file name"], "interface_map.csv"))?;
    write_vtk_file(&sp, &c.surface, std::slice::from_ref(&c.surface_field))?;
    write_vtk_file(&vp, &mesh, std::slice::from_ref(&c.volume_field))?;
    c.map.write_csv(std::io::BufWriter::new(std::fs::File::create(&mp)?))?;
    writeln!(out, "surface_output={}", sp.display())?;
    writeln!(out, "volume_output={}", vp.display())?;
    writeln!(out, "map_output={}", mp.display())?;
    Ok(())
}

fn cmd_checkpoint_demo(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let p = &ctx.prm;
    let ser = SerializationParams::from_prm(p)?;
    let rst = RestartParams::from_prm(p)?;
    ensure!(ser.enable, "Serialization / Enable must be true for the demo");
    ensure!(rst.enable, "Restart / Enable must be true for the demo");
    let d = DemoConfig::default();
    let cfg = DemoConfig {
        size: usize::try_from(p.get_int_or(&["Demo", "Size"], d.size as i64)?)?,
        dt: p.get_real_or(&["Demo", "Time step"], d.dt)?,
        stepper: DecayStepper {
            lambda: p.get_real_or(&["Demo", "Lambda"], d.stepper.lambda)?,
        },
        every_n: ser.every_n,
        restart_step: rst.step_index,
        total_steps: u64::try_from(p.get_int_or(&["Demo", "Total steps"], 2 * rst.step_index as i64)?)?,
    };
    let dir = ctx.output_dir()?;
    let serialize_base = ctx.output_file(&dir, &ser.basename)?;
    let restart_base = ctx.resolve(&rst.basename);
    let o = demo::resume_equivalence(&serialize_base, &restart_base, &cfg)?;

    writeln!(out, "total_steps={}", cfg.total_steps)?;
    writeln!(out, "every_n={}", cfg.every_n)?;
    writeln!(out, "restart_step={}", cfg.restart_step)?;
    writeln!(out, "checkpoint={}", o.checkpoint.display())?;
    writeln!(out, "checkpoint_bytes={}", o.checkpoint_bytes)?;
    writeln!(out, "recovered_step={}", o.restart_info.step_index)?;
    writeln!(out, "recovered_time={}", o.restart_info.time.unwrap_or(f64::NAN))?;
    writeln!(out, "bit_identical={}", o.bit_identical())?;
    writeln!(out, "round_trip_identical={}", o.round_trip_identical)?;
    writeln!(out, "corruption_detected={}", o.corruption_detected)?;
    writeln!(out, "closed_form_error={:e}", o.closed_form_error)?;
    if o.passed() {
        writeln!(out, "PASS")?;
        Ok(())
    } else {
        writeln!(out, "FAIL")?;
        bail!("resume equivalence failed")
    }
}
