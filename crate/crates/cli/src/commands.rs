//! One function per subcommand; each writes its result to standard output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use decaf::fingerprint::MinisumWeighting;
use decaf::frame::{co_global, solve_minisum_global, FrameError};
use decaf::graphspec::{incidence, laplacian_spectrum, GaussianKernel};
use decaf::io::{csv_field, fingerprints_csv, load_config, parse_xyz, read_models, write_fingerprints, write_models};
use decaf::regress::{active_learn, fit, fit_vector, Candidate, TargetKind, VectorMode};
use decaf::workflow::{dipole_samples, fingerprint_structure, fingerprint_structures, force_samples};
use decaf::{
    fingerprint_distance, CenterSelector, Featurizer, Fingerprint, GPModel, Labels, MinisumProblem, OracleSpec,
    QuadratureGrid, RunConfig, Structure, VectorModel,
};

use crate::error::Failure;
use crate::{Cli, Command, FitTarget, Format};

/// Scalar learned by `active-learn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Energy,
    Force { atom: usize, axis: usize },
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "energy" {
            return Ok(Target::Energy);
        }
        let bad = || format!("expected energy or force:ATOM:AXIS, got {s:?}");
        let rest = s.strip_prefix("force:").ok_or_else(bad)?;
        let (atom, axis) = rest.split_once(':').ok_or_else(bad)?;
        let atom = atom.parse().map_err(|_| bad())?;
        let axis = match axis {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => return Err(bad()),
        };
        Ok(Target::Force { atom, axis })
    }
}

impl Target {
    fn extract(&self, labels: &Labels) -> Result<f64, String> {
        match *self {
            Target::Energy => labels.energy.ok_or_else(|| "oracle returned no energy".to_string()),
            Target::Force { atom, axis } => labels
                .forces
                .as_ref()
                .and_then(|f| f.get(atom))
                .map(|f| f[axis])
                .ok_or_else(|| format!("oracle returned no force for atom {atom}")),
        }
    }
}

struct Context {
    config: RunConfig,
    grid: Arc<QuadratureGrid>,
    featurizer: Featurizer,
    workers: usize,
}

fn context(cli: &Cli) -> Result<Context, Failure> {
    let mut config = match &cli.global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::from(e).context(path.display()))?;
            load_config(&text).map_err(|e| Failure::from(e).context(path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        config.seed = seed;
    }
    config.validate()?;
    let featurizer = config.featurizer()?;
    Ok(Context { grid: featurizer.grid.clone(), featurizer, config, workers: cli.global.workers.max(1) })
}

fn read_structures(path: &Path) -> Result<Vec<Structure>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(e).context(path.display()))?;
    let structures = parse_xyz(&text).map_err(|e| Failure::from(e).context(path.display()))?;
    if structures.is_empty() {
        return Err(Failure::input(format!("{}: no structures", path.display())));
    }
    Ok(structures)
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn join(values: impl IntoIterator<Item = f64>, sep: &str) -> String {
    values.into_iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(sep)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = context(&cli)?;
    match &cli.command {
        Command::Frame { input, center } => frame(&ctx, input, center),
        Command::Fingerprint { input, center, format, output } => {
            fingerprint(&ctx, input, center, *format, output.as_deref())
        }
        Command::Distmat { input, center } => distmat(&ctx, input, center),
        Command::Fit { input, target, center, output } => fit_model(&ctx, input, *target, center, output),
        Command::Predict { model, input, center } => predict(&ctx, model, input, center),
        Command::ActiveLearn { pool, oracle, target, center, seeds, max_uncertainty, max_samples, output } => {
            let mut settings = ctx.config.active;
            if let Some(u) = max_uncertainty {
                settings.max_uncertainty = *u;
            }
            if let Some(n) = max_samples {
                settings.max_samples = *n;
            }
            active(&ctx, pool, oracle, *target, center, seeds, &settings, output)
        }
        Command::Quadrature => quadrature(&ctx),
        Command::Graphspec { input, center, count, sigma } => graphspec(&ctx, input, center, *count, *sigma),
    }
}

fn frame(ctx: &Context, input: &Path, selector: &CenterSelector) -> Result<(), Failure> {
    let structures = read_structures(input)?;
    let settings = ctx.config.minisum.solver;
    let scaling = ctx.config.scaling();
    let mut out = String::new();
    for s in &structures {
        for c in s.centers(selector)? {
            let fail = |e: Failure| e.context(&c.label);
            let neigh = s.neighborhood(c.position, ctx.config.cutoff);
            if neigh.is_empty() {
                return Err(fail(FrameError::EmptyNeighborhood.into()));
            }
            writeln!(out, "center {}", c.label).unwrap();
            let displacements: Vec<_> = neigh.displacements().into_iter().filter(|d| d.norm() > 0.0).collect();
            if !displacements.is_empty() {
                let problem = match ctx.config.minisum.weighting {
                    MinisumWeighting::DensityScaling => MinisumProblem::from_displacements(
                        &displacements,
                        |r| scaling.value(r),
                        ctx.config.minisum.kernel,
                    ),
                    MinisumWeighting::Constant => {
                        MinisumProblem::from_displacements(&displacements, |_| 1.0, ctx.config.minisum.kernel)
                    }
                }
                .map_err(|e| fail(e.into()))?;
                let minima = solve_minisum_global(&problem, &settings).map_err(|e| fail(e.into()))?;
                writeln!(
                    out,
                    "minima {} co-global {} starts {}",
                    minima.len(),
                    co_global(&minima).len(),
                    settings.sphere_starts
                )
                .unwrap();
                for (k, m) in minima.iter().enumerate() {
                    let d = m.direction.as_vector();
                    writeln!(
                        out,
                        "minimum {k} objective {:?} iterations {} direction {:?} {:?} {:?}",
                        m.objective, m.iterations, d.x, d.y, d.z
                    )
                    .unwrap();
                }
            }
            let frames = ctx.featurizer.frames(&neigh).map_err(|e| fail(e.into()))?;
            for (k, f) in frames.iter().enumerate() {
                writeln!(out, "frame {k} {}", join(f.to_rows(), " ")).unwrap();
            }
        }
    }
    emit(&out)
}

/// Fingerprint sets of every selected center, labeled.
fn center_sets(
    ctx: &Context,
    structures: &[Structure],
    selector: &CenterSelector,
) -> Result<Vec<(String, Vec<Fingerprint>)>, Failure> {
    let centers = fingerprint_structures(&ctx.featurizer, structures, selector, ctx.config.cutoff, ctx.workers)?;
    Ok(centers.into_iter().map(|c| (c.center.label, c.fingerprints)).collect())
}

fn fingerprint(
    ctx: &Context,
    input: &Path,
    selector: &CenterSelector,
    format: Format,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let structures = read_structures(input)?;
    let fps: Vec<Fingerprint> = center_sets(ctx, &structures, selector)?.into_iter().flat_map(|(_, f)| f).collect();
    let bytes = match format {
        Format::Csv => fingerprints_csv(&fps).into_bytes(),
        Format::Binary => write_fingerprints(&fps, &ctx.grid)?,
    };
    match output {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Failure::from(e).context(path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Smallest distance between any two fingerprints of the sets.
fn set_distance(a: &[Fingerprint], b: &[Fingerprint]) -> Result<f64, Failure> {
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            best = best.min(fingerprint_distance(x, y)?);
        }
    }
    Ok(best)
}

fn distmat(ctx: &Context, input: &Path, selector: &CenterSelector) -> Result<(), Failure> {
    let structures = read_structures(input)?;
    let sets = center_sets(ctx, &structures, selector)?;
    let n = sets.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let v = set_distance(&sets[i].1, &sets[j].1)?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut out = String::from("center_id");
    for (label, _) in &sets {
        write!(out, ",{}", csv_field(label)).unwrap();
    }
    out.push('\n');
    for (i, (label, _)) in sets.iter().enumerate() {
        writeln!(out, "{},{}", csv_field(label), join(d[i].iter().copied(), ",")).unwrap();
    }
    emit(&out)
}

/// Fingerprints of the single center `selector` picks in `s`.
fn single_center(
    ctx: &Context,
    s: &Structure,
    selector: &CenterSelector,
) -> Result<(String, Vec<Fingerprint>), Failure> {
    if matches!(selector, CenterSelector::AllAtoms) && s.len() != 1 {
        return Err(Failure::input(
            "scalar targets need one center per structure; use --center com, atom:I, or point:X,Y,Z",
        ));
    }
    let mut centers = fingerprint_structure(&ctx.featurizer, 0, s, selector, ctx.config.cutoff)?;
    let c = centers.remove(0);
    Ok((c.center.label, c.fingerprints))
}

fn fit_model(
    ctx: &Context,
    input: &Path,
    target: FitTarget,
    selector: &CenterSelector,
    output: &Path,
) -> Result<(), Failure> {
    let structures = read_structures(input)?;
    let search = &ctx.config.gp;
    let models: Vec<GPModel> = match target {
        FitTarget::Energy => {
            let (mut inputs, mut targets) = (Vec::new(), Vec::new());
            for s in &structures {
                let energy = s.energy.ok_or_else(|| Failure::input(format!("structure {} has no energy", s.id)))?;
                let (_, fps) = single_center(ctx, s, selector)?;
                targets.extend(std::iter::repeat_n(energy, fps.len()));
                inputs.extend(fps);
            }
            vec![fit(inputs, targets, search)?]
        }
        FitTarget::Forces => {
            let samples = force_samples(&ctx.featurizer, &structures, ctx.config.cutoff, ctx.workers)?;
            fit_vector(&samples, VectorMode::PerAtom, search)?.components.into()
        }
        FitTarget::Dipole => {
            let samples = dipole_samples(&ctx.featurizer, &structures, ctx.config.cutoff, ctx.workers)?;
            fit_vector(&samples, VectorMode::Molecular, search)?.components.into()
        }
    };
    let refs: Vec<&GPModel> = models.iter().collect();
    let bytes = write_models(&refs, &ctx.grid)?;
    std::fs::write(output, bytes).map_err(|e| Failure::from(e).context(output.display()))?;
    let mut out = String::from("component,output_scale,length_scale,jitter,log_likelihood,points\n");
    for (k, m) in models.iter().enumerate() {
        let hp = m.hyperparameters();
        writeln!(
            out,
            "{k},{:?},{:?},{:?},{:?},{}",
            hp.output_scale,
            hp.length_scale,
            hp.jitter,
            m.log_likelihood(),
            m.len()
        )
        .unwrap();
    }
    emit(&out)
}

fn vector_model(mut models: Vec<GPModel>) -> Result<VectorModel, Failure> {
    if models.len() != 3 {
        return Err(Failure::input(format!("vector model needs 3 components, file has {}", models.len())));
    }
    let c = models.pop().unwrap();
    let b = models.pop().unwrap();
    let a = models.pop().unwrap();
    Ok(VectorModel { components: [a, b, c] })
}

fn predict(ctx: &Context, model: &Path, input: &Path, selector: &CenterSelector) -> Result<(), Failure> {
    let bytes = std::fs::read(model).map_err(|e| Failure::from(e).context(model.display()))?;
    let models = read_models(&bytes, &ctx.grid).map_err(|e| Failure::from(e).context(model.display()))?;
    let kind = models.first().map(|m| m.kind).ok_or_else(|| Failure::input("model file is empty"))?;
    let structures = read_structures(input)?;
    let mut out = String::new();
    match kind {
        TargetKind::Scalar => {
            let m = &models[0];
            out.push_str("center_id,mean,variance\n");
            for s in &structures {
                let (label, fps) = single_center(ctx, s, selector)?;
                let (mean, var) = m.predict_set(&fps)?;
                writeln!(out, "{},{mean:?},{var:?}", csv_field(&label)).unwrap();
            }
        }
        TargetKind::PerAtomComponent(_) | TargetKind::MolecularComponent(_) => {
            let per_atom = matches!(kind, TargetKind::PerAtomComponent(_));
            let vm = vector_model(models)?;
            let sel = if per_atom { CenterSelector::AllAtoms } else { CenterSelector::CenterOfMass };
            out.push_str("center_id,x,y,z,var_x,var_y,var_z\n");
            for (label, fps) in center_sets(ctx, &structures, &sel)? {
                let (mean, var) = vm.predict(&fps)?;
                writeln!(
                    out,
                    "{},{},{}",
                    csv_field(&label),
                    join(mean.iter().copied(), ","),
                    join(var.iter().copied(), ",")
                )
                .unwrap();
            }
        }
    }
    emit(&out)
}

#[allow(clippy::too_many_arguments)]
fn active(
    ctx: &Context,
    pool_path: &Path,
    spec: &OracleSpec,
    target: Target,
    selector: &CenterSelector,
    seeds: &[usize],
    settings: &decaf::regress::ActiveLearning,
    output: &Path,
) -> Result<(), Failure> {
    let pool = read_structures(pool_path)?;
    let candidates = pool
        .iter()
        .map(|s| single_center(ctx, s, selector).map(|(_, fingerprints)| Candidate { fingerprints }))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds: Vec<usize> = if seeds.is_empty() { vec![0, pool.len() - 1] } else { seeds.to_vec() };
    let oracle = spec.build();
    let label = |i: usize| {
        let labels = oracle.label(&pool[i]).map_err(|e| e.to_string())?;
        target.extract(&labels)
    };
    let result = active_learn(&candidates, &seeds, label, None, &ctx.config.gp, settings)?;
    let mut out = String::from("iteration,acquired_id,max_uncertainty\n");
    for t in &result.trace {
        let id = t.acquired.map(|i| csv_field(&pool[i].id)).unwrap_or_default();
        writeln!(out, "{},{id},{:?}", t.iteration, t.max_uncertainty).unwrap();
    }
    let bytes = write_models(&[&result.model], &ctx.grid)?;
    std::fs::write(output, bytes).map_err(|e| Failure::from(e).context(output.display()))?;
    emit(&out)?;
    eprintln!(
        "{} labeled of {} candidates; {}",
        result.training.len(),
        pool.len(),
        if result.converged { "uncertainty target met" } else { "acquisition budget exhausted" }
    );
    Ok(())
}

fn quadrature(ctx: &Context) -> Result<(), Failure> {
    let g = &ctx.grid;
    let counts: Vec<String> = g.layers().iter().map(|l| l.angular.count().to_string()).collect();
    let mut out = String::new();
    writeln!(out, "# radial_order={}", g.layers().len()).unwrap();
    writeln!(out, "# layers={}", counts.join(",")).unwrap();
    writeln!(out, "# outer_radius={}", g.outer_radius()).unwrap();
    writeln!(out, "# weight={}", g.weight_spec()).unwrap();
    writeln!(out, "# volume_factor={}", g.has_volume_factor()).unwrap();
    writeln!(out, "# grid_hash={:016x}", g.hash()).unwrap();
    out.push_str("x,y,z,weight,layer\n");
    for ((x, w), layer) in g.nodes().iter().zip(g.weights()).zip(g.layer_index()) {
        writeln!(out, "{:?},{:?},{:?},{w:?},{layer}", x.x, x.y, x.z).unwrap();
    }
    emit(&out)
}

fn graphspec(ctx: &Context, input: &Path, selector: &CenterSelector, count: usize, sigma: f64) -> Result<(), Failure> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Failure::input("--sigma must be positive"));
    }
    let structures = read_structures(input)?;
    let kernel = GaussianKernel { amplitude: 1.0, sigma };
    let mut out = String::from("center_id,dropped_nodes");
    for k in 1..=count {
        write!(out, ",lambda_{k}").unwrap();
    }
    out.push('\n');
    for s in &structures {
        for c in s.centers(selector)? {
            let fail = |e: Failure| e.context(&c.label);
            let neigh = s.neighborhood(c.position, ctx.config.cutoff);
            if neigh.is_empty() {
                return Err(fail(FrameError::EmptyNeighborhood.into()));
            }
            let frame = ctx.featurizer.frames(&neigh).map_err(|e| fail(e.into()))?[0];
            let atoms: Vec<_> = neigh.displacements().iter().map(|d| frame.project(d)).collect();
            let e = incidence(&atoms, ctx.grid.nodes(), |a, b| kernel.value(a, b)).map_err(|e| fail(e.into()))?;
            let spectrum = laplacian_spectrum(&e, count).map_err(|e| fail(e.into()))?;
            write!(out, "{},{}", csv_field(&c.label), spectrum.dropped.len()).unwrap();
            for k in 0..count {
                match spectrum.values.get(k) {
                    Some(v) => write!(out, ",{v:?}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    emit(&out)
}
