use std::io::Write;

use coops_core::catalog::{compute_diff, SyncOutcome};
use coops_core::directory::Community;
use coops_core::domain::{
    AppView, CatalogEntry, CommunityId, Decision, MemberId, MemberRef, PermissionDictionary, ProtectionLevel, Visibility,
};
use coops_core::events::NotificationEvent;
use coops_core::oversight::{CommunityAppRow, PermissionTallyRow};
use coops_core::social::{Author, DirectMessage, FeedItem, FeedPost, LikeOutcome, Reply};
use coops_core::Registration;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{Cli, Command, CommunityCommand, FeedCommand, MsgCommand, PermissionArg};
use crate::client::Api;
use crate::render::table;
use crate::state::{read_catalog_file, AgentState};
use crate::AgentError;

type Out<'a> = &'a mut dyn Write;

/// Runs one command, writing human or JSON output to `out`.
pub fn run(cli: Cli, out: Out) -> Result<(), AgentError> {
    if let Command::Init {
        server,
        device_id,
        sim,
        platform_id,
        name,
    } = &cli.command
    {
        return init(&cli, out, server, device_id, sim, platform_id, name);
    }
    let mut ctx = Ctx {
        state: AgentState::load(&cli.state)?,
        json: cli.json,
        community: cli.community.clone(),
        out,
    };
    let dirty = ctx.dispatch(cli.command)?;
    if dirty {
        ctx.state.save(&cli.state)?;
    }
    Ok(())
}

fn init(
    cli: &Cli,
    out: Out,
    server: &str,
    device_id: &str,
    sim: &str,
    platform_id: &str,
    name: &str,
) -> Result<(), AgentError> {
    let api = Api::new(server, None)?;
    let reg: Registration = api.post(
        &["auth", "register"],
        &json!({ "device_id": device_id, "sim_serial": sim, "platform_id": platform_id, "display_name": name }),
    )?;
    // A device that re-registers keeps its local catalog.
    let previous = AgentState::load(&cli.state).ok();
    let (catalog, community) = previous
        .filter(|p| p.member_id == reg.member_id)
        .map(|p| (p.catalog, p.community))
        .unwrap_or_default();
    let state = AgentState {
        server: server.to_owned(),
        identity: coops_core::domain::IdentityTriple::new(device_id, sim, platform_id),
        display_name: reg.display_name.clone(),
        token: reg.token.clone(),
        member_id: reg.member_id.clone(),
        community,
        catalog,
        synced: Default::default(),
        synced_version: 0,
    };
    state.save(&cli.state)?;
    if cli.json {
        emit_json(out, &json!({ "member_id": reg.member_id, "display_name": reg.display_name, "device_key": reg.device_key, "expires_at": reg.expires_at }))
    } else {
        line(out, format!("registered {} as {}", reg.display_name, reg.member_id))
    }
}

struct Ctx<'a> {
    state: AgentState,
    json: bool,
    community: Option<String>,
    out: Out<'a>,
}

impl Ctx<'_> {
    fn api(&self) -> Result<Api, AgentError> {
        Api::new(&self.state.server, Some(&self.state.token))
    }

    /// Returns whether the state file must be rewritten.
    fn dispatch(&mut self, command: Command) -> Result<bool, AgentError> {
        match command {
            Command::Init { .. } => unreachable!("handled before loading state"),
            Command::Load { catalog } => {
                self.state.catalog = read_catalog_file(&catalog)?;
                let count = self.state.catalog.len();
                self.print_or(&json!({ "installed": count }), || {
                    format!("loaded {count} apps (run sync to publish)\n")
                })?;
                Ok(true)
            }
            Command::Install {
                package,
                label,
                permissions,
                hidden,
                icon,
            } => {
                self.install(package, label, permissions, hidden, icon)?;
                Ok(true)
            }
            Command::Uninstall { package } => {
                if self.state.catalog.remove(&package).is_none() {
                    return Err(coops_core::Error::UnknownPackage(package).into());
                }
                self.print_or(&json!({ "uninstalled": package }), || format!("uninstalled {package}\n"))?;
                Ok(true)
            }
            Command::Catalog => {
                self.show_catalog()?;
                Ok(false)
            }
            Command::Sync { diff } => {
                let outcome = self.sync(diff)?;
                self.print_or(&outcome, || {
                    format!(
                        "added {} removed {} changed {}\n",
                        outcome.summary.added, outcome.summary.removed, outcome.summary.changed
                    )
                })?;
                Ok(true)
            }
            Command::Hide { package } => self.set_visibility(package, Visibility::Hidden).map(|()| true),
            Command::Show { package } => self.set_visibility(package, Visibility::Visible).map(|()| true),
            Command::Grant { package, permission } => {
                self.set_permission(package, permission, Decision::Granted).map(|()| true)
            }
            Command::Deny { package, permission } => {
                self.set_permission(package, permission, Decision::Denied).map(|()| true)
            }
            Command::Community(cmd) => self.community_cmd(cmd),
            Command::Feed(cmd) => self.feed_cmd(cmd).map(|()| false),
            Command::Msg(cmd) => self.msg_cmd(cmd).map(|()| false),
            Command::Watch { once, no_ack, wait_ms } => self.watch(once, no_ack, wait_ms).map(|()| false),
        }
    }

    // -- output --

    fn print_or(&mut self, value: &impl Serialize, human: impl FnOnce() -> String) -> Result<(), AgentError> {
        if self.json {
            emit_json(self.out, value)
        } else {
            let text = human();
            self.out.write_all(text.as_bytes()).map_err(io_err)
        }
    }

    /// Best-effort usage report; failures never affect the command.
    fn usage(&self, api: &Api, action: &str) {
        let _ = api.post::<Value>(&["telemetry"], &json!({ "action": action }));
    }

    // -- local catalog --

    fn install(
        &mut self,
        package: String,
        label: String,
        permissions: Vec<PermissionArg>,
        hidden: bool,
        icon: Option<String>,
    ) -> Result<(), AgentError> {
        let dictionary = PermissionDictionary::builtin();
        let mut entry = CatalogEntry::new(package.clone(), label);
        entry.icon = icon;
        if hidden {
            entry.visibility = Visibility::Hidden;
        }
        for p in permissions {
            let decision = p.decision.unwrap_or(match dictionary.lookup(&p.name).protection_level {
                ProtectionLevel::Normal => Decision::Granted,
                ProtectionLevel::Dangerous => Decision::Denied,
            });
            entry.permissions.insert(p.name, decision);
        }
        self.state.catalog.insert(package.clone(), entry.clone());
        self.print_or(&entry, || format!("installed {package} (run sync to publish)\n"))
    }

    fn show_catalog(&mut self) -> Result<(), AgentError> {
        let pending = compute_diff(&self.state.catalog_list(), &self.state.remote_mirror()?)?;
        if self.json {
            return emit_json(
                self.out,
                &json!({ "entries": self.state.catalog_list(), "synced_version": self.state.synced_version, "pending": pending }),
            );
        }
        let rows: Vec<Vec<String>> = self
            .state
            .catalog
            .values()
            .map(|e| {
                vec![
                    e.package.clone(),
                    e.label.clone(),
                    visibility_str(e.visibility).to_owned(),
                    permissions_str(e.permission_states().map(|p| (p.name, p.decision))),
                ]
            })
            .collect();
        let mut text = table(&["PACKAGE", "LABEL", "VISIBILITY", "PERMISSIONS"], &rows);
        if !pending.is_empty() {
            text.push_str("unsynced changes: run sync\n");
        }
        self.out.write_all(text.as_bytes()).map_err(io_err)
    }

    fn sync(&mut self, diff: bool) -> Result<SyncOutcome, AgentError> {
        let api = self.api()?;
        let entries = self.state.catalog_list();
        let outcome = if diff {
            let changes = compute_diff(&entries, &self.state.remote_mirror()?)?;
            let mut body = serde_json::to_value(&changes).expect("diff serializes");
            body["base_version"] = json!(self.state.synced_version);
            match api.patch::<SyncOutcome>(&["catalog"], &body) {
                // Someone else moved the stored catalog; fall back to a full snapshot.
                Err(AgentError::Api { code, .. }) if code == "version_conflict" => {
                    api.put(&["catalog"], &serde_json::to_value(&entries).expect("entries serialize"))?
                }
                other => other?,
            }
        } else {
            api.put(&["catalog"], &serde_json::to_value(&entries).expect("entries serialize"))?
        };
        self.state.synced = self.state.catalog.clone();
        self.state.synced_version = outcome.version;
        Ok(outcome)
    }

    fn local_entry(&mut self, package: &str) -> Result<&mut CatalogEntry, AgentError> {
        self.state
            .catalog
            .get_mut(package)
            .ok_or_else(|| coops_core::Error::UnknownPackage(package.to_owned()).into())
    }

    fn set_visibility(&mut self, package: String, visibility: Visibility) -> Result<(), AgentError> {
        self.local_entry(&package)?.visibility = visibility;
        let api = self.api()?;
        let version = match self.state.synced.get_mut(&package) {
            Some(mirror) => {
                let reply: Value = api.put(&["catalog", &package, "visibility"], &json!({ "visibility": visibility }))?;
                mirror.visibility = visibility;
                reply["version"].as_u64().unwrap_or_default()
            }
            None => self.sync(false)?.version,
        };
        self.state.synced_version = version;
        self.usage(&api, "toggle_visibility");
        let word = visibility_str(visibility);
        self.print_or(&json!({ "package": package, "visibility": visibility, "version": version }), || {
            format!("{package} is now {word}\n")
        })
    }

    fn set_permission(&mut self, package: String, permission: String, decision: Decision) -> Result<(), AgentError> {
        self.local_entry(&package)?
            .permissions
            .insert(permission.clone(), decision);
        let api = self.api()?;
        let version = match self.state.synced.get_mut(&package) {
            Some(mirror) => {
                let reply: Value = api.put(
                    &["catalog", &package, "permissions", &permission],
                    &json!({ "decision": decision }),
                )?;
                mirror.permissions.insert(permission.clone(), decision);
                reply["version"].as_u64().unwrap_or_default()
            }
            None => self.sync(false)?.version,
        };
        self.state.synced_version = version;
        self.usage(&api, "change_permission");
        let word = decision_str(decision);
        self.print_or(
            &json!({ "package": package, "permission": permission, "decision": decision, "version": version }),
            || format!("{permission} {word} for {package}\n"),
        )
    }

    // -- community --

    fn community_id(&self) -> Result<CommunityId, AgentError> {
        self.community
            .as_deref()
            .map(CommunityId::from)
            .or_else(|| self.state.community.clone())
            .ok_or_else(|| AgentError::Usage("no community selected; create or join one, or pass --community".into()))
    }

    fn members(&self, api: &Api, community: &CommunityId) -> Result<Vec<MemberRef>, AgentError> {
        api.get(&["communities", community.as_str(), "members"])
    }

    /// Accepts a member id or an exact display name.
    fn resolve_member(&self, api: &Api, community: &CommunityId, who: &str) -> Result<MemberId, AgentError> {
        let members = self.members(api, community)?;
        if let Some(m) = members.iter().find(|m| m.member_id.as_str() == who) {
            return Ok(m.member_id.clone());
        }
        let named: Vec<&MemberRef> = members.iter().filter(|m| m.display_name == who).collect();
        match named.as_slice() {
            [one] => Ok(one.member_id.clone()),
            [] => Ok(MemberId::from(who)),
            _ => Err(AgentError::Usage(format!("several members are called {who:?}; use the member id"))),
        }
    }

    fn community_cmd(&mut self, cmd: CommunityCommand) -> Result<bool, AgentError> {
        let api = self.api()?;
        match cmd {
            CommunityCommand::Create { name } => {
                let community: Community = api.post(&["communities"], &json!({ "name": name }))?;
                self.state.community = Some(community.community_id.clone());
                self.print_or(&community, || {
                    format!(
                        "created {} ({})\ninvite code: {}\n",
                        community.name, community.community_id, community.invite_code
                    )
                })?;
                Ok(true)
            }
            CommunityCommand::Join { invite_code } => {
                let me: MemberRef = api.post(&["communities", "join"], &json!({ "invite_code": invite_code }))?;
                self.state.community = Some(me.community_id.clone());
                self.print_or(&me, || format!("joined {}\n", me.community_id))?;
                Ok(true)
            }
            CommunityCommand::Members => {
                let community = self.community_id()?;
                let members = self.members(&api, &community)?;
                self.usage(&api, "open_community_members");
                let me = self.state.member_id.clone();
                self.print_or(&members, || {
                    let rows: Vec<Vec<String>> = members
                        .iter()
                        .map(|m| {
                            let you = if m.member_id == me { " (you)" } else { "" };
                            vec![format!("{}{you}", m.display_name), m.member_id.to_string()]
                        })
                        .collect();
                    table(&["NAME", "MEMBER ID"], &rows)
                })?;
                Ok(false)
            }
            CommunityCommand::Apps => {
                let community = self.community_id()?;
                let apps: Vec<CommunityAppRow> = api.get(&["communities", community.as_str(), "apps"])?;
                self.usage(&api, "open_community_apps");
                self.print_or(&apps, || {
                    let rows: Vec<Vec<String>> = apps
                        .iter()
                        .map(|a| {
                            vec![
                                a.label.clone(),
                                a.package.clone(),
                                a.installer_count.to_string(),
                                if a.viewer_installed { "yes" } else { "" }.to_owned(),
                            ]
                        })
                        .collect();
                    table(&["APP", "PACKAGE", "INSTALLED BY", "YOU"], &rows)
                })?;
                Ok(false)
            }
            CommunityCommand::Explore { member } => {
                let community = self.community_id()?;
                let target = self.resolve_member(&api, &community, &member)?;
                let apps: Vec<AppView> =
                    api.get(&["communities", community.as_str(), "members", target.as_str(), "apps"])?;
                let action = if target == self.state.member_id { "open_own_apps" } else { "open_member_apps" };
                self.usage(&api, action);
                self.print_or(&apps, || {
                    let rows: Vec<Vec<String>> = apps
                        .iter()
                        .map(|a| {
                            let mut row = vec![a.label.clone(), a.package.clone()];
                            if let Some(v) = a.visibility {
                                row.push(visibility_str(v).to_owned());
                            }
                            row.push(permissions_str(a.permissions.iter().map(|p| (p.name.clone(), p.decision))));
                            row
                        })
                        .collect();
                    if apps.iter().any(|a| a.visibility.is_some()) {
                        table(&["APP", "PACKAGE", "VISIBILITY", "PERMISSIONS"], &rows)
                    } else {
                        table(&["APP", "PACKAGE", "PERMISSIONS"], &rows)
                    }
                })?;
                Ok(false)
            }
            CommunityCommand::Permissions { package, scope, filter } => {
                let community = self.community_id()?;
                let mut query = vec![("filter", filter.as_str().to_owned())];
                if scope != "community" {
                    let member = self.resolve_member(&api, &community, &scope)?;
                    query.push(("scope", "member".to_owned()));
                    query.push(("member", member.to_string()));
                }
                let rows: Vec<PermissionTallyRow> = api.get_query(
                    &["communities", community.as_str(), "apps", &package, "permissions"],
                    &query,
                )?;
                self.usage(&api, "open_app_permissions");
                self.print_or(&rows, || {
                    let rows: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.permission.clone(),
                                format!("{:?}", r.protection_level).to_lowercase(),
                                format!("{}/{}", r.granted_count, r.total),
                                format!("{}/{}", r.denied_count, r.total),
                                r.description.clone(),
                            ]
                        })
                        .collect();
                    table(&["PERMISSION", "LEVEL", "GRANTED", "DENIED", "DESCRIPTION"], &rows)
                })?;
                Ok(false)
            }
        }
    }

    // -- feed & messages --

    fn feed_cmd(&mut self, cmd: FeedCommand) -> Result<(), AgentError> {
        let api = self.api()?;
        match cmd {
            FeedCommand::Post { body } => {
                let community = self.community_id()?;
                let post: FeedPost = api.post(&["communities", community.as_str(), "feed"], &json!({ "body": body }))?;
                self.usage(&api, "create_post");
                self.print_or(&post, || format!("posted #{}\n", post.post_id))
            }
            FeedCommand::List => {
                let community = self.community_id()?;
                let items: Vec<FeedItem> = api.get(&["communities", community.as_str(), "feed"])?;
                let members = if self.json { Vec::new() } else { self.members(&api, &community)? };
                self.usage(&api, "open_community_feed");
                self.print_or(&items, || render_feed(&items, &members))
            }
            FeedCommand::Like { post } => {
                let outcome: LikeOutcome = api.post(&["feed", &post.to_string(), "likes"], &json!({}))?;
                self.usage(&api, "like_post");
                self.print_or(&outcome, || {
                    let verb = if outcome.liked { "liked" } else { "unliked" };
                    format!("{verb} #{post} ({} likes)\n", outcome.like_count)
                })
            }
            FeedCommand::Reply { post, body } => {
                let reply: Reply = api.post(&["feed", &post.to_string(), "replies"], &json!({ "body": body }))?;
                self.usage(&api, "reply_post");
                self.print_or(&reply, || format!("replied to #{post}\n"))
            }
        }
    }

    /// Messages are addressed by member id, or by display name within the current community.
    fn recipient(&self, api: &Api, who: &str) -> Result<MemberId, AgentError> {
        match self.community_id() {
            Ok(community) => self.resolve_member(api, &community, who),
            Err(_) => Ok(MemberId::from(who)),
        }
    }

    fn msg_cmd(&mut self, cmd: MsgCommand) -> Result<(), AgentError> {
        let api = self.api()?;
        match cmd {
            MsgCommand::Send { member, body } => {
                let to = self.recipient(&api, &member)?;
                let message: DirectMessage = api.post(&["messages", to.as_str()], &json!({ "body": body }))?;
                self.usage(&api, "send_message");
                self.print_or(&message, || format!("sent message #{}\n", message.message_id))
            }
            MsgCommand::List { member, after, limit } => {
                let other = self.recipient(&api, &member)?;
                let mut query = Vec::new();
                if let Some(after) = after {
                    query.push(("after", after.to_string()));
                }
                if let Some(limit) = limit {
                    query.push(("limit", limit.to_string()));
                }
                let messages: Vec<DirectMessage> = api.get_query(&["messages", other.as_str()], &query)?;
                let me = self.state.member_id.clone();
                self.print_or(&messages, || {
                    let rows: Vec<Vec<String>> = messages
                        .iter()
                        .map(|m| {
                            let from = if m.sender == me { "me".to_owned() } else { member.clone() };
                            vec![
                                m.message_id.to_string(),
                                m.created_at.format("%Y-%m-%d %H:%M").to_string(),
                                from,
                                m.body.clone(),
                            ]
                        })
                        .collect();
                    table(&["ID", "SENT", "FROM", "MESSAGE"], &rows)
                })
            }
        }
    }

    fn watch(&mut self, once: bool, no_ack: bool, wait_ms: u64) -> Result<(), AgentError> {
        let api = self.api()?;
        let mut after = 0;
        loop {
            let events: Vec<NotificationEvent> = api.get_query(
                &["notifications"],
                &[("after", after.to_string()), ("wait_ms", wait_ms.to_string())],
            )?;
            for event in &events {
                if self.json {
                    emit_json_line(self.out, event)?;
                } else {
                    let kind = serde_json::to_value(event.kind).expect("kind serializes");
                    line(
                        self.out,
                        format!("{}\t{}\t{}", event.event_id, kind.as_str().unwrap_or_default(), event.payload),
                    )?;
                }
            }
            self.out.flush().map_err(io_err)?;
            if let Some(last) = events.last() {
                after = last.event_id;
                if !no_ack {
                    api.post::<Value>(&["notifications", "ack"], &json!({ "up_to": last.event_id }))?;
                }
            }
            if once {
                return Ok(());
            }
        }
    }
}

fn render_feed(items: &[FeedItem], members: &[MemberRef]) -> String {
    if items.is_empty() {
        return "(no posts)\n".to_owned();
    }
    let name = |author: &Author| match author {
        Author::System => "Pro-tip".to_owned(),
        Author::Member(id) => members
            .iter()
            .find(|m| &m.member_id == id)
            .map_or_else(|| id.to_string(), |m| m.display_name.clone()),
    };
    let mut out = String::new();
    for item in items {
        let post = &item.post;
        let liked = if item.liked_by_me { ", liked by you" } else { "" };
        out.push_str(&format!(
            "#{} {} ({}) [{} likes{liked}]\n    {}\n",
            post.post_id,
            name(&post.author),
            post.created_at.format("%Y-%m-%d %H:%M"),
            post.like_count,
            post.body
        ));
        for reply in &item.replies {
            out.push_str(&format!("    > {}: {}\n", name(&Author::Member(reply.author.clone())), reply.body));
        }
    }
    out
}

fn visibility_str(v: Visibility) -> &'static str {
    match v {
        Visibility::Visible => "visible",
        Visibility::Hidden => "hidden",
    }
}

fn decision_str(d: Decision) -> &'static str {
    match d {
        Decision::Granted => "granted",
        Decision::Denied => "denied",
    }
}

fn permissions_str(perms: impl Iterator<Item = (String, Decision)>) -> String {
    let parts: Vec<String> = perms
        .map(|(name, d)| {
            let short = name.rsplit('.').next().unwrap_or(&name).to_owned();
            format!("{short}={}", decision_str(d))
        })
        .collect();
    if parts.is_empty() {
        "-".to_owned()
    } else {
        parts.join(" ")
    }
}

fn io_err(e: std::io::Error) -> AgentError {
    AgentError::State(format!("output: {e}"))
}

fn line(out: Out, text: String) -> Result<(), AgentError> {
    writeln!(out, "{text}").map_err(io_err)
}

fn emit_json(out: Out, value: &impl Serialize) -> Result<(), AgentError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(out, "{text}").map_err(io_err)
}

fn emit_json_line(out: Out, value: &impl Serialize) -> Result<(), AgentError> {
    let text = serde_json::to_string(value).expect("output serializes");
    writeln!(out, "{text}").map_err(io_err)
}
