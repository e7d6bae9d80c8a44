use anyhow::Context;
use clap::{Parser, Subcommand};
use futures::StreamExt;
use std::path::PathBuf;
use twin_client::{report, Client};
use twin_core::analysis::{self, reference, CostModel, PhaseTimeTable};
use twin_core::registration::PoseUpdate;
use twin_core::scene::ComponentState;
use twin_core::session::SequenceDocument;

#[derive(Parser, Debug)]
#[command(name = "twin", about = "Command line for the disassembly twin")]
struct Cli {
    /// Base URL of the session service.
    #[arg(long, env = "TWIN_SERVER", default_value = "http://127.0.0.1:8080", global = true)]
    server: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Show component states and robot status.
    Scene {
        #[arg(long)]
        json: bool,
    },
    /// Detach one component.
    Detach { component_id: String },
    /// Detach every attached component in precedence order.
    DetachAll,
    /// Restore the freshly loaded scene.
    Reset,
    /// Save the recorded sequence.
    Save {
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a sequence on a displaced pack.
    Replay {
        #[arg(long)]
        sequence: PathBuf,
        /// Pose update (JSON); identity when omitted.
        #[arg(long)]
        pose: Option<PathBuf>,
    },
    /// Print the event feed as newline-delimited JSON.
    Events {
        /// Stop after this many events.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Phase times, manual comparison and return on investment of a run.
    Analyze {
        /// Saved sequence document or list of records.
        #[arg(long)]
        log: PathBuf,
        /// Cost model (JSON); the reference cell when omitted.
        #[arg(long)]
        costs: Option<PathBuf>,
        /// Manual phase table (JSON); the reference times when omitted.
        #[arg(long)]
        manual: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SUS scores of questionnaire responses.
    Sus {
        /// CSV, one respondent per row, items 1 to 10.
        #[arg(long)]
        responses: PathBuf,
    },
}

fn read(path: &PathBuf) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let client = Client::new(&cli.server);
    match cli.command {
        Command::Scene { json } => {
            let snap = client.scene().await?;
            if json {
                println!("{}", serde_json::to_string_pretty(&snap)?);
                return Ok(());
            }
            println!(
                "{} | tool {} | link {:?} | {} records{}",
                snap.scene.evb_type_id,
                snap.scene.mounted_tool.as_deref().unwrap_or("none"),
                snap.link_mode,
                snap.records,
                if snap.busy { " | busy" } else { "" }
            );
            for c in &snap.scene.components {
                println!("  {:<20} {:?}", c.id, c.state);
            }
        }
        Command::Detach { component_id } => {
            let r = client.detach(&component_id).await?;
            println!("{} #{}: {:.2} s", r.component_id, r.index, r.duration_s);
        }
        Command::DetachAll => {
            let snap = client.scene().await?;
            let scene = twin_core::Scene::from_document(snap.scene)?;
            let states = scene.component_states();
            for id in scene.topological_order()? {
                if states.get(&id) != Some(&ComponentState::Attached) {
                    continue;
                }
                let r = client.detach(&id).await?;
                println!("{} #{}: {:.2} s", r.component_id, r.index, r.duration_s);
            }
        }
        Command::Reset => client.reset().await?,
        Command::Save { out } => {
            let (text, doc) = client.save().await?;
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            println!("{} records -> {}", doc.records.len(), out.display());
        }
        Command::Replay { sequence, pose } => {
            let doc = SequenceDocument::from_json(&read(&sequence)?)?;
            let pose = match pose {
                Some(p) => serde_json::from_str::<PoseUpdate>(&read(&p)?).context("parsing pose update")?,
                None => PoseUpdate::exact(twin_core::Pose6D::identity()),
            };
            let rep = client.replay(Some(&doc), &pose).await?;
            for e in &rep.entries {
                println!(
                    "  #{:<3} {:<20} {:.2e} m {:.2e} rad",
                    e.record_index, e.component_id, e.position_error_m, e.rotation_error_rad
                );
            }
            println!(
                "{} records replayed, worst {:.2e} m / {:.2e} rad",
                rep.entries.len(),
                rep.max_position_error_m,
                rep.max_rotation_error_rad
            );
        }
        Command::Events { limit } => {
            let mut feed = Box::pin(client.events().await?);
            let mut seen = 0;
            while let Some(env) = feed.next().await {
                println!("{}", serde_json::to_string(&env?)?);
                seen += 1;
                if limit.is_some_and(|n| seen >= n) {
                    break;
                }
            }
        }
        Command::Analyze { log, costs, manual, out } => {
            let records = report::parse_log(&read(&log)?)?;
            let costs: CostModel = match costs {
                Some(p) => serde_json::from_str(&read(&p)?).context("parsing cost model")?,
                None => reference::cost_model(),
            };
            let (manual, printed) = match manual {
                Some(p) => (serde_json::from_str::<PhaseTimeTable>(&read(&p)?).context("parsing manual table")?, None),
                None => (reference::manual_times(), Some(reference::MANUAL_PRINTED_TOTAL_S)),
            };
            let r = analysis::analyze(&records, &costs, Some((&manual, printed)))?;
            print!("{}", report::render_analysis(&r));
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&r)? + "\n")
                    .with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Sus { responses } => {
            let file = std::fs::File::open(&responses).with_context(|| format!("opening {}", responses.display()))?;
            let rs = report::parse_sus_csv(file)?;
            for (i, r) in rs.iter().enumerate() {
                println!("  {:>3}: {:.1}", i + 1, analysis::sus_score(r)?);
            }
            match analysis::sus_mean(&rs)? {
                Some(m) => println!("mean SUS {m:.1} over {} responses", rs.len()),
                None => println!("no responses"),
            }
        }
    }
    Ok(())
}
