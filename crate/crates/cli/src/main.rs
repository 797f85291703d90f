use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use sweepplast::output;
use sweepplast::pipeline::{self, PipelineError, Setup, Solution};
use sweepplast::scenario::Scenario;

#[derive(Parser)]
#[command(name = "sweepplast", version, about = "Sweeping-process solver for elastoplastic spring networks and rods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Elastic stress path σ̃(t)
    SolveElastic(Common),
    /// Stress trajectory from the catch-up scheme
    SolveSweeping(Common),
    /// Strain rates recovered along the trajectory
    RecoverStrain(Common),
    /// Constraint qualifications for the moving set
    CheckCq(Common),
    /// Mesh refinement study of max |ω|
    RefineStudy(Common),
    /// SVG plots of the trajectory and moving sets
    Plot(Common),
    /// Everything the scenario asks for
    Run(Common),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Rod element count; a comma list for refine-study
    #[arg(long, value_delimiter = ',')]
    mesh: Vec<usize>,
    /// Directory for artifacts (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

type Res<T> = Result<T, PipelineError>;

impl Common {
    fn scenario(&self) -> Res<Scenario> {
        let s = Scenario::load(&self.scenario)?;
        match self.mesh.as_slice() {
            [n] if s.is_rod() => Ok(s.with_mesh(*n)?),
            _ => Ok(s),
        }
    }

    fn name(&self, s: &Scenario) -> String {
        s.output.name.clone().unwrap_or_else(|| {
            self.scenario
                .file_stem()
                .map_or("scenario".into(), |n| n.to_string_lossy().into_owned())
        })
    }

    /// A file in `--out`, or stdout.
    fn sink(&self, s: &Scenario, suffix: &str) -> Res<Box<dyn Write>> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}_{suffix}", self.name(s)));
                Ok(Box::new(BufWriter::new(File::create(path)?)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }

    fn setup(&self) -> Res<(Setup, Vec<f64>)> {
        let setup = Setup::build(&self.scenario()?)?;
        let grid = setup.grid(self.dt, self.t_end)?;
        Ok((setup, grid))
    }
}

fn solve_elastic(c: &Common) -> Res<()> {
    let (setup, grid) = c.setup()?;
    let stress = pipeline::solve_elastic(&setup, &grid);
    output::elastic_csv(c.sink(&setup.scenario, "elastic.csv")?, &grid, &stress)?;
    Ok(())
}

fn solve_sweeping(c: &Common) -> Res<()> {
    let (setup, grid) = c.setup()?;
    let sol = pipeline::solve_sweeping(&setup, &grid)?;
    output::sweep_csv(c.sink(&setup.scenario, "sweep.csv")?, &sol)?;
    Ok(())
}

fn recover_strain(c: &Common) -> Res<()> {
    let (setup, grid) = c.setup()?;
    let sol = pipeline::solve_sweeping(&setup, &grid)?;
    let rec = pipeline::recover(&setup, &sol)?;
    output::strain_csv(c.sink(&setup.scenario, "strain.csv")?, &rec)?;
    Ok(())
}

fn check_cq(c: &Common) -> Res<()> {
    let (setup, _) = c.setup()?;
    let (v, times) = pipeline::check_cq(&setup, c.t_end, c.tol)?;
    let mut w = c.sink(&setup.scenario, "cq.txt")?;
    for (name, r) in [
        ("slater-I", &v.slater1),
        ("slater-II", &v.slater2),
        ("rockafellar", &v.rockafellar),
        ("attouch-brezis", &v.attouch_brezis),
    ] {
        writeln!(w, "{name:<15} {:?}  ({})", r.outcome, r.detail)?;
    }
    if c.out.is_some() {
        writeln!(w, "checked at t = {times:?}")?;
    }
    Ok(())
}

fn refine_study(c: &Common) -> Res<()> {
    let s = Scenario::load(&c.scenario)?;
    let meshes = if c.mesh.len() > 1 {
        c.mesh.clone()
    } else {
        s.study.as_ref().map(|st| st.meshes.clone()).unwrap_or_else(|| vec![10, 20, 40, 80, 160])
    };
    let report = pipeline::refine_study(&s, &meshes, c.dt)?;
    match &c.out {
        Some(_) => {
            output::study_csv(c.sink(&s, "study.csv")?, &report)?;
            write!(c.sink(&s, "study.txt")?, "{}", output::study_table(&report))?;
        }
        None => print!("{}", output::study_table(&report)),
    }
    if report.regularity_lost {
        return Err(PipelineError::RegularityLost(format!("max |omega| grows like h^-{:.3}", report.slope)));
    }
    Ok(())
}

fn write_plots(dir: &Path, name: &str, setup: &Setup, sol: &Solution) -> Res<()> {
    std::fs::create_dir_all(dir)?;
    let traj = sol.sweep();
    let m = setup.elements();
    let pick: Vec<usize> = if m <= 6 { (0..m).collect() } else { (0..6).map(|i| i * (m - 1) / 5).collect() };
    let series = |data: &[sweepplast::linalg::Vector], label: &str| -> Vec<(String, Vec<f64>)> {
        pick.iter().map(|&j| (format!("{label}_{}", j + 1), data.iter().map(|v| v[j]).collect())).collect()
    };
    let mut all = series(&traj.sigma, "sigma");
    all.extend(series(&traj.elastic, "elastic"));
    std::fs::write(dir.join(format!("{name}_stress.svg")), output::svg_time_series("stress", &traj.times, &all))?;
    if m == 2 {
        let svg = output::svg_stress_plane(&setup.lower, &setup.upper, &setup.dec.basis_v, &traj.elastic, &traj.sigma);
        std::fs::write(dir.join(format!("{name}_plane.svg")), svg)?;
    }
    let spec = setup.moving_set();
    let q = spec.chart_dim();
    if (1..=2).contains(&q) && setup.hardening.is_none() {
        let n = traj.len();
        let snaps: Vec<(f64, Vec<sweepplast::linalg::Vector>)> = (0..n)
            .step_by((n / 24).max(1))
            .map(|k| (traj.times[k], spec.chart_polytope(traj.times[k]).vertices()))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        let path: Vec<_> = traj.times.iter().copied().zip(traj.coords.iter().cloned()).collect();
        std::fs::write(dir.join(format!("{name}_moving_set.svg")), output::svg_moving_sets(&snaps, &path))?;
    }
    Ok(())
}

fn plot(c: &Common) -> Res<()> {
    let (setup, grid) = c.setup()?;
    let sol = pipeline::solve_sweeping(&setup, &grid)?;
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_plots(&dir, &c.name(&setup.scenario), &setup, &sol)
}

fn run(c: &Common) -> Res<()> {
    let (setup, grid) = c.setup()?;
    let s = &setup.scenario;
    if c.out.is_some() {
        output::elastic_csv(c.sink(s, "elastic.csv")?, &grid, &pipeline::solve_elastic(&setup, &grid))?;
    }
    let sol = pipeline::solve_sweeping(&setup, &grid)?;
    if c.out.is_some() {
        output::sweep_csv(c.sink(s, "sweep.csv")?, &sol)?;
    }
    let strain = pipeline::recover(&setup, &sol);
    if let (Some(_), Ok(rec)) = (&c.out, &strain) {
        output::strain_csv(c.sink(s, "strain.csv")?, rec)?;
    }
    let mut text = pipeline::report(&setup, &sol, strain.as_ref().ok(), 1e-10);
    let mut outcome = strain.map(|_| ());
    if let Some(study) = &s.study {
        let report = pipeline::refine_study(s, &study.meshes, c.dt)?;
        text.push_str("\nrefinement study:\n");
        text.push_str(&output::study_table(&report));
        if let Some(dir) = &c.out {
            output::study_csv(c.sink(s, "study.csv")?, &report)?;
            if c.format == Format::Svg {
                write_plots(dir, &c.name(s), &setup, &sol)?;
            }
        }
        if report.regularity_lost && outcome.is_ok() {
            outcome = Err(PipelineError::RegularityLost(format!("max |omega| grows like h^-{:.3}", report.slope)));
        }
    } else if let (Some(dir), Format::Svg) = (&c.out, c.format) {
        write_plots(dir, &c.name(s), &setup, &sol)?;
    }
    if c.out.is_some() {
        write!(c.sink(s, "report.txt")?, "{text}")?;
    }
    print!("{text}");
    outcome
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveElastic(c) => solve_elastic(c),
        Command::SolveSweeping(c) => solve_sweeping(c),
        Command::RecoverStrain(c) => recover_strain(c),
        Command::CheckCq(c) => check_cq(c),
        Command::RefineStudy(c) => refine_study(c),
        Command::Plot(c) => plot(c),
        Command::Run(c) => run(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sweepplast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
