//! Seeded random scenario scripts that are valid by construction.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::script::{Action, Delivery, DeliveryState, ScenarioScript, TimedAction};
use crate::correlate::content::MediaKind;

struct Group {
    label: String,
    /// Actor numbers; the owner is tracked by `owner_in`.
    members: BTreeSet<String>,
    owner_in: bool,
}

struct State {
    actors: Vec<String>,
    contacts: BTreeSet<String>,
    blocked: BTreeSet<String>,
    groups: Vec<Group>,
    live: Vec<String>,
    next_alias: usize,
}

fn number(rng: &mut ChaCha8Rng, prefix: &str) -> String {
    format!("{prefix}{:08}", rng.random_range(0..100_000_000u32))
}

fn delivery(rng: &mut ChaCha8Rng) -> Delivery {
    let server = rng.random_range(100..4_000);
    Delivery {
        state: *[DeliveryState::Pending, DeliveryState::OnServer, DeliveryState::Delivered]
            .choose(rng)
            .expect("non-empty"),
        server_ack_after_ms: server,
        device_ack_after_ms: server + rng.random_range(0..5_000),
        receive_after_ms: rng.random_range(0..9_000),
    }
}

impl State {
    fn alias(&mut self) -> String {
        self.next_alias += 1;
        let alias = format!("m{}", self.next_alias);
        self.live.push(alias.clone());
        alias
    }

    fn unblocked_actors(&self) -> Vec<&String> {
        self.actors.iter().filter(|a| !self.blocked.contains(*a)).collect()
    }

    /// `(from, to)` for a message, or `None` when no route exists.
    fn route(&self, rng: &mut ChaCha8Rng) -> Option<(Option<String>, Option<String>)> {
        let open: Vec<&Group> = self.groups.iter().filter(|g| g.owner_in).collect();
        match rng.random_range(0..4) {
            0 => Some((None, Some(self.actors.choose(rng)?.clone()))),
            1 => Some((Some((*self.unblocked_actors().choose(rng)?).clone()), None)),
            2 => Some((None, Some(open.choose(rng)?.label.clone()))),
            _ => {
                let g = open.choose(rng)?;
                let members: Vec<&String> = g.members.iter().filter(|m| !self.blocked.contains(*m)).collect();
                Some((Some((*members.choose(rng)?).clone()), Some(g.label.clone())))
            }
        }
    }

    fn next_action(&mut self, rng: &mut ChaCha8Rng) -> Option<Action> {
        match rng.random_range(0..100) {
            0..=9 => {
                let absent: Vec<&String> = self.actors.iter().filter(|a| !self.contacts.contains(*a)).collect();
                let contact = (*absent.choose(rng)?).clone();
                self.contacts.insert(contact.clone());
                Some(Action::AddContact {
                    name: rng.random_bool(0.5).then(|| format!("Contact {contact}")),
                    whatsapp_user: rng.random_bool(0.85),
                    avatar: rng.random_bool(0.7),
                    contact,
                })
            }
            10..=13 => {
                let present: Vec<&String> = self.contacts.iter().collect();
                let contact = (*present.choose(rng)?).clone();
                self.contacts.remove(&contact);
                Some(Action::DeleteContact { contact })
            }
            14..=17 => {
                let contact = self.actors.choose(rng)?.clone();
                self.blocked.insert(contact.clone());
                Some(Action::BlockContact { contact })
            }
            18..=19 => {
                self.blocked.clear();
                Some(Action::UnblockAll)
            }
            20..=44 => {
                let (from, to) = self.route(rng)?;
                let via_broadcast = from.is_some() && to.is_none() && rng.random_bool(0.2);
                Some(Action::SendText {
                    text: format!("text {}", rng.random_range(0..1_000_000u32)),
                    alias: Some(self.alias()),
                    via_broadcast,
                    delivery: delivery(rng),
                    from,
                    to,
                })
            }
            45..=52 => {
                let (from, to) = self.route(rng)?;
                Some(Action::SendMedia {
                    media: *[MediaKind::Image, MediaKind::Audio, MediaKind::Video].choose(rng)?,
                    size: rng.random_range(1..20_000),
                    content_seed: rng.random(),
                    server_filename: None,
                    downloaded: rng.random_bool(0.8),
                    duration: None,
                    alias: Some(self.alias()),
                    delivery: delivery(rng),
                    from,
                    to,
                })
            }
            53..=55 => {
                let (from, to) = self.route(rng)?;
                Some(Action::SendVcard {
                    name: format!("Card {}", rng.random_range(0..1000u32)),
                    alias: Some(self.alias()),
                    delivery: delivery(rng),
                    from,
                    to,
                })
            }
            56..=58 => {
                let (from, to) = self.route(rng)?;
                Some(Action::SendGeo {
                    lat: rng.random_range(-9_000..=9_000) as f64 / 100.0,
                    lon: rng.random_range(-18_000..=18_000) as f64 / 100.0,
                    alias: Some(self.alias()),
                    delivery: delivery(rng),
                    from,
                    to,
                })
            }
            59..=63 => {
                let count = rng.random_range(1..=self.actors.len());
                let recipients: Vec<String> = self.actors.choose_multiple(rng, count).cloned().collect();
                Some(Action::Broadcast {
                    recipients,
                    text: format!("broadcast {}", rng.random_range(0..1_000u32)),
                    alias: Some(self.alias()),
                    delivery: delivery(rng),
                })
            }
            64..=67 => {
                let label = format!("g{}", self.groups.len() + 1);
                self.groups.push(Group {
                    label: label.clone(),
                    members: BTreeSet::new(),
                    owner_in: true,
                });
                Some(Action::CreateGroup {
                    name: format!("Group {label}"),
                    group: label,
                })
            }
            68..=75 => {
                let open: Vec<usize> = (0..self.groups.len()).filter(|i| self.groups[*i].owner_in).collect();
                let g = &mut self.groups[*open.choose(rng)?];
                let outside: Vec<&String> = self.actors.iter().filter(|a| !g.members.contains(*a)).collect();
                let member = (*outside.choose(rng)?).clone();
                g.members.insert(member.clone());
                Some(Action::AddToGroup {
                    group: g.label.clone(),
                    member,
                })
            }
            76..=81 => {
                let open: Vec<usize> = (0..self.groups.len()).filter(|i| self.groups[*i].owner_in).collect();
                let g = &mut self.groups[*open.choose(rng)?];
                if g.members.is_empty() || rng.random_bool(0.15) {
                    g.owner_in = false;
                    return Some(Action::LeaveGroup {
                        group: g.label.clone(),
                        member: String::new(),
                    });
                }
                let members: Vec<&String> = g.members.iter().collect();
                let member = (*members.choose(rng)?).clone();
                g.members.remove(&member);
                Some(Action::LeaveGroup {
                    group: g.label.clone(),
                    member,
                })
            }
            82..=91 => {
                if self.live.is_empty() {
                    return None;
                }
                let i = rng.random_range(0..self.live.len());
                Some(Action::DeleteMessage {
                    message: self.live.swap_remove(i),
                })
            }
            92..=95 => Some(Action::SnapshotBackup),
            _ => Some(Action::RotateLog),
        }
    }
}

/// A valid script of at most `max_actions` actions; equal seeds give equal scripts.
pub fn random_script(seed: u64, max_actions: usize) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owner = number(&mut rng, "3934");
    let mut actors = Vec::new();
    while actors.len() < rng.random_range(3..=6) {
        let a = number(&mut rng, "3933");
        if !actors.contains(&a) {
            actors.push(a);
        }
    }
    let start = DateTime::<Utc>::from_timestamp(1_356_998_400 + rng.random_range(0..365 * 86_400), 0)
        .expect("fixed range");
    let mut script = ScenarioScript::new(&owner, start, &actors.iter().map(String::as_str).collect::<Vec<_>>());
    script.owner_avatar = rng.random_bool(0.5);

    let mut state = State {
        actors,
        contacts: BTreeSet::new(),
        blocked: BTreeSet::new(),
        groups: Vec::new(),
        live: Vec::new(),
        next_alias: 0,
    };
    let mut at = start;
    let count = rng.random_range(0..=max_actions);
    let mut attempts = 0;
    while script.actions.len() < count && attempts < count * 20 {
        attempts += 1;
        let Some(mut action) = state.next_action(&mut rng) else { continue };
        if let Action::LeaveGroup { member, .. } = &mut action {
            if member.is_empty() {
                *member = owner.clone();
            }
        }
        at += Duration::milliseconds(rng.random_range(10_000..7_200_000));
        script.actions.push(TimedAction { at: Some(at), action });
    }
    script
}
