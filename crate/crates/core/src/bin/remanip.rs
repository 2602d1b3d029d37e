use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use remanip::executive::EventLog;
use remanip::kinematics::KinematicChain;
use remanip::link::LinkProfile;
use remanip::service::fixtures::validate_dir;
use remanip::service::serve::{serve, ServeConfig};
use remanip::service::{replay, run_script, MissionConfig, MissionCore, MissionScript};
use remanip::sim::Worksite;

#[derive(Parser)]
#[command(name = "remanip", version, about = "Shared-autonomy remote manipulation mission service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Live mission: consoles connect over TCP through the link emulator.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
        /// `default`, `lossless`, or a profile JSON path.
        #[arg(long, default_value = "default")]
        profile: String,
        /// `shipped` or a worksite JSON path.
        #[arg(long, default_value = "shipped")]
        worksite: String,
        #[arg(long, default_value = "live")]
        mission_id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop after this many seconds of mission time.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = ".")]
        log_dir: PathBuf,
    },
    /// Headless script run; prints the metrics table.
    Run {
        /// Mission script JSON; defaults to the shipped XRF + core script.
        script: Option<PathBuf>,
        /// Overrides the script's link profile.
        #[arg(long)]
        profile: Option<String>,
        /// Writes the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        log_dir: PathBuf,
    },
    /// Re-runs a mission log and compares the result.
    Replay { log: PathBuf },
    /// Checks every fixture under a directory.
    ValidateFixtures {
        #[arg(default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))]
        dir: PathBuf,
    },
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_log(dir: &Path, mission_id: &str, started: u64, log: &EventLog) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let path = dir.join(format!("{mission_id}-{started}.jsonl"));
    std::fs::write(&path, log.to_jsonl()).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}

fn profile_ref(name: &str) -> Result<LinkProfile, String> {
    match name {
        "default" => Ok(LinkProfile::default_mission()),
        "lossless" => LinkProfile::from_json(LinkProfile::LOSSLESS_JSON).map_err(|e| e.to_string()),
        path => LinkProfile::from_json(&std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?).map_err(|e| e.to_string()),
    }
}

fn worksite_ref(name: &str) -> Result<Worksite, String> {
    match name {
        "shipped" => Ok(Worksite::shipped()),
        path => Worksite::from_json(&std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?).map_err(|e| format!("{path}: {e}")),
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Serve { addr, profile, worksite, mission_id, seed, duration, log_dir } => {
            let profile = profile_ref(&profile)?;
            let worksite = worksite_ref(&worksite)?;
            let started = unix_now();
            let core = MissionCore::start(MissionConfig::new(&mission_id, worksite, KinematicChain::reference_arm(), seed)).map_err(|e| e.to_string())?;
            let listener = std::net::TcpListener::bind(addr).map_err(|e| format!("{addr}: {e}"))?;
            eprintln!("serving mission {mission_id} on {}", listener.local_addr().map_err(|e| e.to_string())?);
            let cfg = ServeConfig { profile, max_duration_s: duration, real_time: true };
            let core = serve(listener, core, cfg, Arc::new(AtomicBool::new(false))).map_err(|e| e.to_string())?;
            let path = write_log(&log_dir, &mission_id, started, core.history())?;
            eprintln!("log written to {}", path.display());
            Ok(true)
        }
        Command::Run { script, profile, report, log_dir } => {
            let (script, base) = match script {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    (MissionScript::from_json(&text).map_err(|e| e.to_string())?, p.parent().map(Path::to_path_buf).unwrap_or_default())
                }
                None => (MissionScript::shipped(), PathBuf::from(".")),
            };
            let (mut link, worksite) = script.resolve(&base).map_err(|e| e.to_string())?;
            if let Some(p) = profile {
                link = profile_ref(&p)?.with_seed(script.seeds.link);
            }
            let started = unix_now();
            let out = run_script(&script, &link, &worksite).map_err(|e| e.to_string())?;
            print!("{}", out.report.table());
            if let Some(path) = report {
                std::fs::write(&path, out.report.to_json()).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let path = write_log(&log_dir, &script.name, started, &out.log)?;
            println!("log                  {}", path.display());
            Ok(!out.report.critical_failure)
        }
        Command::Replay { log } => {
            let text = std::fs::read_to_string(&log).map_err(|e| format!("{}: {e}", log.display()))?;
            let events = EventLog::from_jsonl(&text).map_err(|e| e.to_string())?;
            let r = replay(&events).map_err(|e| e.to_string())?;
            println!("records {} inputs {}", r.records, r.inputs);
            println!("original hash {}", r.original_hash);
            println!("replayed hash {}", r.replayed_hash);
            println!("identical {}", r.identical);
            Ok(r.identical)
        }
        Command::ValidateFixtures { dir } => {
            let mut ok = true;
            for c in validate_dir(&dir) {
                match &c.result {
                    Ok(summary) => println!("ok    {:<28} {summary}", c.file),
                    Err(e) => {
                        ok = false;
                        println!("FAIL  {:<28} {e}", c.file);
                    }
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
