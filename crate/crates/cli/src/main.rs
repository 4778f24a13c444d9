use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use posefield::geometry::{P3, V3};
use posefield::harness::{
    evaluate_suite, train_default_net, write_metrics_csv, Guidance, Mode, Scenario, Simulator, WallScene, DEFAULT_LABEL_TRIALS, DEFAULT_POSES,
};
use posefield::pesdf::{error_to_volume, write_slice_csv, MergeParams, VolumeParams};
use posefield::planner::{optimize, select_viewpoint, write_tick_log, PlannerConfig, Trajectory};
use posefield::poseerrnet::{
    generate_dataset, perturb_robustness, read_dataset, read_net, sample_gait_poses, synthetic_frames, train, write_dataset, write_net, Application,
    Level, ObservationPolicy, PerceptionNet, PerturbMode, TrainConfig, DEFAULT_LAYERS, ROBUSTNESS_BINS, ROBUSTNESS_FRAMES,
};
use posefield::rng::derive;
use posefield::skeleton::{animate, build_canonical_skeleton, DetectorParams, PoseParams};
use posefield::viewsphere::{compute_field, make_grid, write_field_csv, DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS};
use posefield::Result;

#[derive(Parser)]
#[command(name = "posefield", version, about = "Pose-error guidance fields and viewpoint planning for a filming drone")]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "POSEFIELD_OUT", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Label synthetic gait poses with oracle error fields.
    GenerateData {
        #[arg(long, default_value_t = DEFAULT_POSES)]
        poses: usize,
        /// Detector trials per grid cell.
        #[arg(long, default_value_t = DEFAULT_LABEL_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the error-field network.
    Train {
        /// Dataset file; generated with default settings when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        cfg: TrainArgs,
    },
    /// Bin-change rates of the predicted field under keypoint perturbations.
    EvalRobustness {
        /// Network file; a default network is trained when absent.
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(long, default_value_t = ROBUSTNESS_FRAMES)]
        frames: usize,
        #[arg(long, default_value_t = ROBUSTNESS_BINS)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = ApplicationArg::PerJoint)]
        application: ApplicationArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan one view and trajectory around a static pose, with or without a
    /// wall hiding the best view.
    Plan {
        #[arg(long, value_enum, default_value_t = PostureArg::RaisedRightArm)]
        posture: PostureArg,
        /// Use the canned wall scene and its hand-made field instead.
        #[arg(long)]
        wall: bool,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Drone start, "x,y,z".
        #[arg(long, value_parser = parse_point, default_value = "0,-5,2.6")]
        start: P3,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one scenario file.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Run every camera policy on a set of scenarios and tabulate PCK and MSE.
    Evaluate {
        /// Scenario files; the bundled suite when none are given.
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        net: NetArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().val_fraction)]
    val_fraction: f64,
    #[arg(long, default_value_t = TrainConfig::default().l2)]
    l2: f64,
    /// Layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAYERS)]
    layers: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NetArgs {
    /// Network file; a default network is trained from `--seed` when absent.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Seed for the default network; also overrides scenario seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PostureArg {
    TPose,
    RaisedRightArm,
    Walking,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApplicationArg {
    Global,
    PerJoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ours,
    Front,
    Side,
    Back,
    All,
}

fn parse_point(s: &str) -> std::result::Result<P3, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(P3::new(x, y, z)),
        _ => Err("expected x,y,z".into()),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    info!("writing {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

fn load_or_train(path: &Option<PathBuf>, seed: u64) -> Result<PerceptionNet> {
    match path {
        Some(p) => read_net(BufReader::new(File::open(p)?)),
        None => {
            info!("training default network, seed {seed}");
            Ok(train_default_net(seed)?.net)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.out;
    let grid = make_grid(DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS)?;
    let base = build_canonical_skeleton(1.8)?;
    match cli.cmd {
        Cmd::GenerateData { poses, trials, seed } => {
            let p = sample_gait_poses(&base, poses, derive(seed, 0));
            let d = generate_dataset(&base, &p, &grid, &DetectorParams::default(), ObservationPolicy::UniformRandom, trials, derive(seed, 1))?;
            write_dataset(create(out, "dataset.csv")?, &d)?;
            println!("{} pairs, {} poses skipped", d.pairs.len(), d.skipped);
        }
        Cmd::Train { data, cfg } => {
            let pairs = match data {
                Some(p) => read_dataset(BufReader::new(File::open(p)?))?.pairs,
                None => {
                    let p = sample_gait_poses(&base, DEFAULT_POSES, derive(cfg.seed, 0));
                    generate_dataset(&base, &p, &grid, &DetectorParams::default(), ObservationPolicy::UniformRandom, DEFAULT_LABEL_TRIALS, derive(cfg.seed, 1))?.pairs
                }
            };
            let tc = TrainConfig {
                learning_rate: cfg.learning_rate,
                batch_size: cfg.batch_size,
                epochs: cfg.epochs,
                seed: derive(cfg.seed, 2),
                val_fraction: cfg.val_fraction,
                l2: cfg.l2,
                layers: cfg.layers,
            };
            let res = train(&pairs, &tc)?;
            write_net(create(out, "net.pen")?, &res.net)?;
            let mut w = create(out, "train_history.csv")?;
            writeln!(w, "epoch,train,val")?;
            for h in &res.history {
                writeln!(w, "{},{},{}", h.epoch, h.train, h.val)?;
            }
            w.flush()?;
            println!("best epoch {}: validation loss {} (initial {})", res.best_epoch, res.best_val(), res.initial_val());
        }
        Cmd::EvalRobustness { net, frames, bins, application, seed } => {
            let net = load_or_train(&net, seed)?;
            let clip = synthetic_frames(&base, &grid, frames, &DetectorParams::default(), derive(seed, 3))?;
            let app = match application {
                ApplicationArg::Global => Application::Global,
                ApplicationArg::PerJoint => Application::PerJoint,
            };
            let mut w = create(out, "robustness.csv")?;
            writeln!(w, "mode,level,percent_changed,frames_used,frames_excluded")?;
            for (name, mode) in [("translation", PerturbMode::Translation), ("rotation", PerturbMode::Rotation), ("scale", PerturbMode::Scale), ("all", PerturbMode::All)] {
                for level in Level::ALL {
                    let r = perturb_robustness(&net, &grid, &clip, level, mode, app, bins, derive(seed, 4))?;
                    writeln!(w, "{name},{},{},{},{}", level.name(), r.percent_changed, r.frames_used, r.frames_excluded)?;
                    println!("{name:<12} {}: {:6.2} %", level.name(), r.percent_changed);
                }
            }
            w.flush()?;
        }
        Cmd::Plan { posture, wall, trials, start, seed } => plan(out, posture, wall, trials, start, seed)?,
        Cmd::Simulate { scenario, mode, net } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(s) = net.seed {
                sc.seed = s;
            }
            let modes: Vec<Mode> = match mode {
                ModeArg::Ours => vec![Mode::Ours],
                ModeArg::Front => vec![Mode::Front],
                ModeArg::Side => vec![Mode::Side],
                ModeArg::Back => vec![Mode::Back],
                ModeArg::All => Mode::ALL.to_vec(),
            };
            let trained = if modes.contains(&Mode::Ours) { Some(load_or_train(&net.net, net.seed.unwrap_or(0))?) } else { None };
            let guidance = match &trained {
                Some(n) => Guidance::Net(n),
                None => Guidance::Field(posefield::viewsphere::ErrorField::constant(&grid, 0.0)),
            };
            let sim = Simulator::new(&sc)?;
            let cfg = PlannerConfig::default();
            let mut all = Vec::new();
            for m in modes {
                let ep = sim.run(m, &guidance, &cfg)?;
                write_tick_log(create(out, &format!("ticks_{}_{}.csv", sc.name, m.name()))?, &ep.log)?;
                println!("{:<6} PCK {:.3}  MSE {:.2}  collisions {}", m.name(), ep.metrics.mean_pck, ep.metrics.mean_mse, ep.metrics.collisions);
                all.push(ep.metrics);
            }
            write_metrics_csv(create(out, &format!("metrics_{}.csv", sc.name))?, &all)?;
        }
        Cmd::Evaluate { scenarios, net } => {
            let mut scs: Vec<Scenario> = if scenarios.is_empty() { Scenario::bundled() } else { scenarios.iter().map(Scenario::load).collect::<Result<_>>()? };
            if let Some(s) = net.seed {
                scs.iter_mut().for_each(|sc| sc.seed = s);
            }
            let trained = load_or_train(&net.net, net.seed.unwrap_or(0))?;
            let (report, episodes) = evaluate_suite(&scs, &Guidance::Net(&trained), &PlannerConfig::default())?;
            let mut w = create(out, "suite.csv")?;
            report.write_csv(&mut w)?;
            w.flush()?;
            let metrics: Vec<_> = episodes.iter().map(|e| e.metrics.clone()).collect();
            write_metrics_csv(create(out, "metrics.csv")?, &metrics)?;
            for e in &episodes {
                write_tick_log(create(out, &format!("ticks_{}_{}.csv", e.metrics.scenario, e.metrics.mode))?, &e.log)?;
            }
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn plan(out: &Path, posture: PostureArg, wall: bool, trials: usize, start: P3, seed: u64) -> Result<()> {
    let cfg = PlannerConfig::default();
    let scene = WallScene::new()?;
    let (field, subject, (occ, esdf)) = if wall {
        (scene.field.clone(), scene.subject, scene.walled.clone())
    } else {
        let base = build_canonical_skeleton(1.8)?;
        let p = match posture {
            PostureArg::TPose => PoseParams::identity_for(&base),
            PostureArg::RaisedRightArm => PoseParams::raised_right_arm(&base),
            PostureArg::Walking => PoseParams::walking(&base, 0.0, 0.5),
        };
        let s = animate(&base, &p)?;
        let f = compute_field(&s, &scene.grid, &DetectorParams::default(), trials, seed)?;
        let subject = posefield::planner::SubjectState { center: s.center(), heading: 0.0, head: s.joint(posefield::skeleton::Joint::Nose) };
        (f, subject, scene.open.clone())
    };
    let sel = select_viewpoint(&field, &scene.grid, &subject, &occ, &esdf, &cfg, None)?;
    let window = esdf.field.lattice.aligned_window(P3::new(subject.center.x, subject.center.y, 3.5), V3::new(16.0, 16.0, 7.0))?;
    let ev = error_to_volume(&field, subject.center, subject.heading, window, &VolumeParams::default())?;
    let pesdf = posefield::pesdf::merge(&ev, &esdf, &MergeParams::default())?;
    let max_len = cfg.v_max * cfg.horizon as f64 * cfg.dt;
    let t0 = Trajectory::straight(start, sel.position(), cfg.horizon, cfg.dt, max_len)?;
    let local = posefield::pesdf::Esdf { field: esdf.field.resample(&window), d_max: esdf.d_max };
    let res = optimize(&t0, &pesdf, &local, &cfg)?;

    write_field_csv(create(out, "plan_field.csv")?, &field)?;
    let k = ((subject.head.z - window.origin.z) / window.res).round().clamp(0.0, (window.dims[2] - 1) as f64) as usize;
    write_slice_csv(create(out, "plan_slice.csv")?, &pesdf.field, k)?;
    let mut w = create(out, "plan_trajectory.csv")?;
    writeln!(w, "k,t,x,y,z,pesdf")?;
    for (i, p) in res.trajectory.points.iter().enumerate() {
        writeln!(w, "{},{},{},{},{},{}", i, i as f64 * res.trajectory.dt, p.x, p.y, p.z, pesdf.field.sample_clamped(p).0)?;
    }
    w.flush()?;
    println!("view rank {} at cell {}, goal {:.2} {:.2} {:.2}, {} iterations", sel.rank, sel.cell, sel.position().x, sel.position().y, sel.position().z, res.iterations);
    Ok(())
}
