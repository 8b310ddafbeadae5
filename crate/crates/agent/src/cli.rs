use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use coops_core::domain::Decision;

#[derive(Debug, Parser)]
#[command(name = "coops-agent", version, about = "Simulated device and terminal client for a community oversight server")]
pub struct Cli {
    /// Agent state file.
    #[arg(long, global = true, env = "COOPS_AGENT_STATE", default_value = "coops-agent.json")]
    pub state: PathBuf,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Community to act on; defaults to the last one created or joined.
    #[arg(long, global = true)]
    pub community: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register this device with a server and write a fresh state file.
    Init {
        #[arg(long)]
        server: String,
        #[arg(long)]
        device_id: String,
        #[arg(long)]
        sim: String,
        #[arg(long)]
        platform_id: String,
        #[arg(long)]
        name: String,
    },
    /// Replace the local catalog with a snapshot file (JSON array of entries).
    Load {
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Install an app locally. Permissions are NAME or NAME=granted|denied;
    /// a bare NAME is granted when normal and denied when dangerous.
    Install {
        package: String,
        label: String,
        permissions: Vec<PermissionArg>,
        #[arg(long)]
        hidden: bool,
        #[arg(long)]
        icon: Option<String>,
    },
    /// Remove an app locally.
    Uninstall { package: String },
    /// Show the local catalog and whether it has unsynced changes.
    Catalog,
    /// Push the local catalog: a full snapshot, or with --diff only the changes.
    Sync {
        #[arg(long)]
        diff: bool,
    },
    /// Hide an app from other members (applied immediately).
    Hide { package: String },
    /// Make an app visible to other members (applied immediately).
    Show { package: String },
    /// Grant a permission (applied immediately).
    Grant { package: String, permission: String },
    /// Deny a permission (applied immediately).
    Deny { package: String, permission: String },
    #[command(subcommand)]
    Community(CommunityCommand),
    #[command(subcommand)]
    Feed(FeedCommand),
    #[command(subcommand)]
    Msg(MsgCommand),
    /// Print notifications as they arrive, acknowledging each batch.
    Watch {
        /// Stop after one poll.
        #[arg(long)]
        once: bool,
        /// Leave events unacknowledged so they are delivered again.
        #[arg(long)]
        no_ack: bool,
        #[arg(long, default_value_t = 25_000)]
        wait_ms: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum CommunityCommand {
    Create { name: String },
    Join { invite_code: String },
    Members,
    /// Every app installed in the community.
    Apps,
    /// One member's apps (id or display name).
    Explore { member: String },
    /// Granted/denied counts for one app.
    Permissions {
        package: String,
        /// `community`, or a member id or display name.
        #[arg(long, default_value = "community")]
        scope: String,
        #[arg(long, value_enum, default_value_t = FilterArg::All)]
        filter: FilterArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum FeedCommand {
    Post { body: String },
    List,
    /// Like a post, or remove an existing like.
    Like { post: u64 },
    Reply { post: u64, body: String },
}

#[derive(Debug, Subcommand)]
pub enum MsgCommand {
    Send { member: String, body: String },
    List {
        member: String,
        /// Only messages after this message id.
        #[arg(long)]
        after: Option<u64>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    All,
    Granted,
    Denied,
}

impl FilterArg {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterArg::All => "all",
            FilterArg::Granted => "granted",
            FilterArg::Denied => "denied",
        }
    }
}

/// `NAME` or `NAME=granted|denied`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionArg {
    pub name: String,
    pub decision: Option<Decision>,
}

impl FromStr for PermissionArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, decision) = match s.split_once('=') {
            None => (s, None),
            Some((name, "granted")) => (name, Some(Decision::Granted)),
            Some((name, "denied")) => (name, Some(Decision::Denied)),
            Some((_, other)) => return Err(format!("decision must be granted or denied, got {other:?}")),
        };
        if name.is_empty() {
            return Err("permission name is empty".into());
        }
        Ok(Self {
            name: name.to_owned(),
            decision,
        })
    }
}
