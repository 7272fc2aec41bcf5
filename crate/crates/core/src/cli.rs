//! The `codetations` command line.
//!
//! Exit codes: 0 success, 1 operation error, 2 usage error, 3 findings
//! (stale files or orphaned annotations) from `check` and `reattach`.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::layers::{apply_layers, LayerSelection};
use crate::model::TagRecord;
use crate::repo::{AnchorSpec, ReattachMode, Repository};
use crate::service::{self, Host, ServeOptions};
use crate::store::Freshness;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FINDINGS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "codetations", version, about = "Annotations that stay attached to changing code")]
struct Cli {
    /// Repository root holding the .codetations store
    #[arg(long, global = true, default_value = ".")]
    repo: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = true)]
struct AnchorArgs {
    /// Start offset in Unicode scalar values
    #[arg(long, requires = "end", conflicts_with = "literal")]
    start: Option<usize>,
    /// End offset (exclusive)
    #[arg(long, requires = "start", conflicts_with = "literal")]
    end: Option<usize>,
    /// Anchor on the single occurrence of this literal
    #[arg(long = "match", value_name = "LITERAL")]
    literal: Option<String>,
}

impl AnchorArgs {
    fn spec(&self) -> AnchorSpec {
        match (&self.literal, self.start, self.end) {
            (Some(l), _, _) => AnchorSpec::Match(l.clone()),
            (None, Some(start), Some(end)) => AnchorSpec::Range { start, end },
            _ => unreachable!("clap enforces one addressing mode"),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create the store directory and a default config
    Init,
    /// Annotate a range of a file
    Add {
        path: String,
        #[command(flatten)]
        anchor: AnchorArgs,
        /// Annotation type, e.g. comment, add-layer, lm-unit-test
        #[arg(long = "type", default_value = "comment")]
        annotation_type: String,
        /// Annotation data as JSON
        #[arg(long, default_value = "null")]
        data: String,
        #[arg(long)]
        json: bool,
    },
    /// List a file's annotations
    List {
        path: String,
        #[arg(long)]
        json: bool,
    },
    /// Show one annotation (id or unique id prefix)
    Show {
        path: String,
        id: String,
        #[arg(long)]
        json: bool,
    },
    /// Re-anchor an annotation by hand
    Move {
        path: String,
        id: String,
        #[command(flatten)]
        anchor: AnchorArgs,
        #[arg(long)]
        json: bool,
    },
    /// Delete an annotation
    Remove {
        path: String,
        id: String,
        #[arg(long)]
        json: bool,
    },
    /// Report fresh/stale/absent per file and orphan counts
    Check {
        /// Files to check; all annotated files when omitted
        paths: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Propose new anchors for annotations of a changed file
    Reattach {
        path: String,
        #[arg(long, default_value = "fuzzy", value_parser = ["exact", "fuzzy", "semantic"])]
        strategy: String,
        /// Accept every proposal without prompting
        #[arg(long)]
        yes: bool,
        #[arg(long)]
        threshold: Option<f64>,
        /// Completion provider for --strategy semantic: none, mock, http
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Write a copy of the repository with add-layer annotations woven in
    ApplyLayers {
        /// Comma-separated layer names, in splice order
        #[arg(long, default_value = "")]
        layers: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the host service on loopback
    Serve {
        #[arg(long, default_value_t = 7411)]
        port: u16,
        /// Also serve POST /rpc over HTTP on this port
        #[arg(long)]
        http_port: Option<u16>,
        #[arg(long)]
        provider: Option<String>,
        /// Poll open documents for out-of-band changes (0 disables)
        #[arg(long, default_value_t = 1000)]
        watch_ms: u64,
    },
}

/// Terminal streams, swappable for tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

fn print_json(out: &mut dyn Write, value: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("values serialize"))
        .map_err(|e| Error::io("<stdout>", e))
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn tag_line(tag: &TagRecord) -> String {
    let mut text: String = tag.context.anchor_text.chars().take(40).collect();
    if tag.context.anchor_text.chars().count() > 40 {
        text.push('…');
    }
    format!(
        "{}  {:<9} {:<14} {}  {:?}",
        tag.id_string(),
        tag.status,
        tag.annotation_type,
        tag.anchor,
        text
    )
}

/// Parses arguments and runs one command, returning the process exit code.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(io.stderr, "{rendered}")
            } else {
                write!(io.stdout, "{rendered}")
            };
            return code;
        }
    };
    match execute(cli, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: Cli, io: &mut Io<'_>) -> Result<i32> {
    let repo = Repository::open(&cli.repo)?;
    let out = &mut *io.stdout;
    match cli.command {
        Command::Init => {
            let created = repo.init()?;
            say(out, if created { "initialized .codetations" } else { "already initialized" })?;
        }
        Command::Add {
            path,
            anchor,
            annotation_type,
            data,
            json,
        } => {
            let data: Value = serde_json::from_str(&data)
                .map_err(|e| Error::Invalid(format!("--data is not JSON: {e}")))?;
            let tag = repo.add(&path, &anchor.spec(), &annotation_type, data)?;
            if json {
                print_json(out, &serde_json::to_value(&tag).expect("tag serializes"))?;
            } else {
                say(out, tag.id_string())?;
            }
        }
        Command::List { path, json } => {
            let file = repo.load(&path)?;
            if json {
                let annotations = file.map(|f| f.annotations).unwrap_or_default();
                print_json(out, &json!({"path": path, "annotations": annotations}))?;
            } else {
                match file {
                    None => say(out, format!("{path}: no annotations"))?,
                    Some(f) => {
                        for tag in &f.annotations {
                            say(out, tag_line(tag))?;
                        }
                    }
                }
            }
        }
        Command::Show { path, id, json } => {
            let tag = repo.show(&path, &id)?;
            if json {
                print_json(out, &serde_json::to_value(&tag).expect("tag serializes"))?;
            } else {
                say(out, tag_line(&tag))?;
                say(out, format!("prefix: {:?}", tag.context.prefix))?;
                say(out, format!("text:   {:?}", tag.context.anchor_text))?;
                say(out, format!("suffix: {:?}", tag.context.suffix))?;
                say(out, format!("data:   {}", tag.data))?;
            }
        }
        Command::Move {
            path,
            id,
            anchor,
            json,
        } => {
            let tag = repo.move_tag(&path, &id, &anchor.spec())?;
            if json {
                print_json(out, &serde_json::to_value(&tag).expect("tag serializes"))?;
            } else {
                say(out, tag_line(&tag))?;
            }
        }
        Command::Remove { path, id, json } => {
            let tag = repo.remove(&path, &id)?;
            if json {
                print_json(out, &json!({"removed": tag.id}))?;
            } else {
                say(out, format!("removed {}", tag.id))?;
            }
        }
        Command::Check { paths, json } => return cmd_check(&repo, paths, json, out),
        Command::Reattach {
            path,
            strategy,
            yes,
            threshold,
            provider,
            json,
        } => {
            let args = ReattachArgs {
                mode: strategy.parse()?,
                yes,
                threshold,
                provider,
                json,
            };
            return cmd_reattach(&repo, &path, args, io);
        }
        Command::ApplyLayers { layers, out: dir, json } => {
            let selection = LayerSelection::parse(&layers)?;
            let report = apply_layers(repo.root(), &selection, &dir)?;
            if json {
                print_json(out, &serde_json::to_value(&report).expect("report serializes"))?;
            } else {
                say(
                    out,
                    format!(
                        "wrote {} files to {} with {} insertions from [{}]",
                        report.files_written,
                        dir.display(),
                        report.insertions_applied,
                        report.layers.join(",")
                    ),
                )?;
                for w in &report.warnings {
                    writeln!(io.stderr, "warning: {w}").ok();
                }
            }
        }
        Command::Serve {
            port,
            http_port,
            provider,
            watch_ms,
        } => {
            let provider = repo.config().provider(provider.as_deref())?;
            let host = Arc::new(Host::new(repo.root().clone(), repo.config().reattach, provider)?);
            let options = ServeOptions {
                port,
                http_port,
                watch_interval: (watch_ms > 0).then(|| Duration::from_millis(watch_ms)),
            };
            let server = service::start(host, &options).map_err(|e| Error::io("<listener>", e))?;
            say(out, format!("listening on {}", server.addr()))?;
            if let Some(addr) = server.http_addr() {
                say(out, format!("http on {addr}"))?;
            }
            out.flush().ok();
            server.wait();
        }
    }
    Ok(EXIT_OK)
}

fn cmd_check(repo: &Repository, paths: Vec<String>, json: bool, out: &mut dyn Write) -> Result<i32> {
    let paths = if paths.is_empty() {
        repo.annotated_paths()?
    } else {
        paths
    };
    let mut findings = false;
    let mut files = Vec::new();
    for path in &paths {
        let c = repo.check(path)?;
        findings |= c.state == Freshness::Stale || c.orphaned > 0;
        if !json {
            say(out, format!("{}: {} ({} orphaned)", c.path, c.state, c.orphaned))?;
        }
        files.push(c);
    }
    if json {
        print_json(out, &json!({"files": files}))?;
    }
    Ok(if findings { EXIT_FINDINGS } else { EXIT_OK })
}

struct ReattachArgs {
    mode: ReattachMode,
    yes: bool,
    threshold: Option<f64>,
    provider: Option<String>,
    json: bool,
}

fn cmd_reattach(repo: &Repository, path: &str, args: ReattachArgs, io: &mut Io<'_>) -> Result<i32> {
    let mut config = repo.config().reattach;
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    config.validate()?;
    let provider = match args.mode {
        ReattachMode::Semantic => repo.config().provider(args.provider.as_deref())?,
        _ => None,
    };
    let plan = repo.plan_reattach(path, args.mode, &config, provider.as_deref())?;
    for w in &plan.warnings {
        writeln!(io.stderr, "warning: {w}").ok();
    }

    let mut accepted = Vec::new();
    let mut declined = 0;
    if !args.json {
        say(io.stdout, format!("{} proposals", plan.proposals.len()))?;
    }
    for p in &plan.proposals {
        if !args.json {
            say(
                io.stdout,
                format!(
                    "{}  {} -> {}  score {:.3} ({:?})  {:?}",
                    p.tag_id, p.previous, p.candidate, p.score, p.strategy, p.candidate_text
                ),
            )?;
        }
        let ok = if args.yes {
            true
        } else {
            write!(io.stdout, "accept? [y/N] ").ok();
            io.stdout.flush().ok();
            let mut answer = String::new();
            io.stdin.read_line(&mut answer).map_err(|e| Error::io("<stdin>", e))?;
            matches!(answer.trim(), "y" | "Y" | "yes")
        };
        if ok {
            accepted.push(p.tag_id);
        } else {
            declined += 1;
        }
    }
    for o in &plan.orphaned {
        if !args.json {
            let best = o
                .best_score
                .map_or("no candidate".to_string(), |s| format!("best score {s:.3}"));
            say(io.stdout, format!("{}  orphaned ({best})", o.tag_id))?;
        }
    }

    let needs_write = plan.file.document.digest != crate::model::digest_bytes(plan.text.as_bytes())
        || !plan.orphaned.is_empty();
    let applied = if !accepted.is_empty() || (declined == 0 && needs_write) {
        repo.apply_plan(&plan, &accepted)?;
        true
    } else {
        false
    };
    let orphaned_now = plan.orphaned.len() + declined;

    if args.json {
        print_json(
            io.stdout,
            &json!({
                "path": path,
                "proposals": plan.proposals,
                "orphaned": plan.orphaned,
                "accepted": accepted,
                "applied": applied,
                "warnings": plan.warnings,
            }),
        )?;
    } else if applied {
        say(io.stdout, format!("applied {} proposals", accepted.len()))?;
    }
    Ok(if orphaned_now > 0 { EXIT_FINDINGS } else { EXIT_OK })
}
