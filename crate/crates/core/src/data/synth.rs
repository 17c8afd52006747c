//! Grid-world treasure games with scripted players.
//!
//! Each game is a `grid_size × grid_size` maze of named rooms. Treasures lie
//! on the floor; one closed container sits in some room. Opening the
//! container and putting a treasure in it scores a point; the game is won
//! when every treasure is in. Every observation carries a hint naming the
//! direction toward the current goal, so the gold move is readable from the
//! text.
//!
//! Transcripts are played by a mixture of behaviour modes; walkthroughs are
//! played by the optimal mode only, on a disjoint set of games.

use std::collections::{BTreeSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Difficulty, Step, Transcript, Walkthrough, WalkthroughStep};
use crate::error::{Error, Result};

const ROOMS: [&str; 24] = [
    "kitchen",
    "cellar",
    "hall",
    "library",
    "attic",
    "garden",
    "pantry",
    "study",
    "gallery",
    "chapel",
    "vault",
    "armory",
    "stable",
    "tower",
    "crypt",
    "foyer",
    "parlor",
    "workshop",
    "nursery",
    "ballroom",
    "dungeon",
    "courtyard",
    "bedroom",
    "bathroom",
];
const JUNK: [&str; 24] = [
    "lamp", "rope", "book", "candle", "key", "knife", "bottle", "map", "shovel", "hammer", "scroll", "mirror", "bell",
    "axe", "sword", "helmet", "cloak", "boots", "compass", "lantern", "ladder", "bucket", "pillow", "clock",
];
const TREASURES: [&str; 12] = [
    "coal", "gem", "coin", "crown", "pearl", "ruby", "emerald", "diamond", "sapphire", "chalice", "idol", "statue",
];
const CONTAINERS: [&str; 8] = [
    "furnace", "chest", "cabinet", "basket", "altar", "trunk", "safe", "crate",
];
const LOOKS: [&str; 5] = ["old", "dusty", "heavy", "small", "shiny"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Dir {
    North,
    South,
    East,
    West,
}

impl Dir {
    const ALL: [Dir; 4] = [Dir::North, Dir::South, Dir::East, Dir::West];

    fn name(self) -> &'static str {
        match self {
            Dir::North => "north",
            Dir::South => "south",
            Dir::East => "east",
            Dir::West => "west",
        }
    }

    fn step(self, x: usize, y: usize, size: usize) -> Option<(usize, usize)> {
        match self {
            Dir::North => (y > 0).then(|| (x, y - 1)),
            Dir::South => (y + 1 < size).then(|| (x, y + 1)),
            Dir::East => (x + 1 < size).then(|| (x + 1, y)),
            Dir::West => (x > 0).then(|| (x - 1, y)),
        }
    }
}

/// Scripted player styles. The first `modes` of [`BehaviorMode::ALL`] are used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorMode {
    Optimal,
    Wanderer,
    Examiner,
    Hoarder,
}

impl BehaviorMode {
    pub const ALL: [BehaviorMode; 4] = [
        BehaviorMode::Optimal,
        BehaviorMode::Wanderer,
        BehaviorMode::Examiner,
        BehaviorMode::Hoarder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorMode::Optimal => "optimal",
            BehaviorMode::Wanderer => "wanderer",
            BehaviorMode::Examiner => "examiner",
            BehaviorMode::Hoarder => "hoarder",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthGameSpec {
    pub seed: u64,
    /// Rooms per side of the square grid.
    pub grid_size: usize,
    /// Portable non-treasure objects per game.
    pub object_count: usize,
    pub treasure_count: usize,
    /// Number of behaviour modes `M` in the transcript mixture.
    pub modes: usize,
    pub mode_weights: Vec<f64>,
    /// Names available per noun category (rooms, objects, treasures, containers).
    pub vocab_size: usize,
    pub transcript_games: usize,
    pub transcripts_per_game: usize,
    pub walkthrough_games: usize,
    /// Transcript length cap; walkthroughs always play to completion.
    pub max_steps: usize,
    /// One speaker per behaviour mode instead of one per transcript.
    pub speaker_per_mode: bool,
}

impl Default for SynthGameSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_size: 3,
            object_count: 3,
            treasure_count: 2,
            modes: 4,
            mode_weights: vec![0.25; 4],
            vocab_size: 24,
            transcript_games: 40,
            transcripts_per_game: 3,
            walkthrough_games: 50,
            max_steps: 30,
            speaker_per_mode: false,
        }
    }
}

/// Observation, action, score after the action, valid actions.
type PlayedStep = (String, String, i64, Vec<String>);

impl SynthGameSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.modes < 2 || self.modes > BehaviorMode::ALL.len() {
            return fail(format!("modes must lie in 2..=4, got {}", self.modes));
        }
        if self.mode_weights.len() != self.modes {
            return fail(format!(
                "{} mode weights for {} modes",
                self.mode_weights.len(),
                self.modes
            ));
        }
        if self.mode_weights.iter().any(|&w| !(w >= 0.0)) || (self.mode_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return fail("mode weights must be non-negative and sum to 1".into());
        }
        if self.grid_size < 2 || self.grid_size * self.grid_size > ROOMS.len().min(self.vocab_size) {
            return fail(format!(
                "grid size {} does not fit the room names available",
                self.grid_size
            ));
        }
        if self.object_count > JUNK.len().min(self.vocab_size) {
            return fail(format!(
                "object count {} exceeds the object names available",
                self.object_count
            ));
        }
        if self.treasure_count == 0 || self.treasure_count > TREASURES.len().min(self.vocab_size) {
            return fail(format!("treasure count {} out of range", self.treasure_count));
        }
        if self.max_steps == 0 {
            return fail("max_steps must be positive".into());
        }
        Ok(())
    }

    fn mode_list(&self) -> &'static [BehaviorMode] {
        &BehaviorMode::ALL[..self.modes]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Place {
    Room(usize),
    Held,
    Deposited,
}

#[derive(Clone, Debug)]
struct Item {
    name: String,
    treasure: bool,
}

/// A generated game and its simulator.
#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub game_id: String,
    rooms: Vec<String>,
    exits: Vec<Vec<(Dir, usize)>>,
    container: String,
    container_room: usize,
    items: Vec<Item>,
    start_places: Vec<Place>,
    start: usize,
}

#[derive(Clone, Debug)]
struct State {
    loc: usize,
    places: Vec<Place>,
    held_order: Vec<usize>,
    open: bool,
    score: i64,
}

enum Kind {
    Transcript,
    Walkthrough,
}

fn game_rng(seed: u64, kind: &Kind, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = match kind {
        Kind::Transcript => 0,
        Kind::Walkthrough => 1,
    };
    rng.set_stream(2 * index as u64 + k);
    rng
}

impl SynthWorld {
    fn generate(spec: &SynthGameSpec, game_id: String, rng: &mut ChaCha8Rng) -> Self {
        let size = spec.grid_size;
        let n = size * size;
        let pool = |names: &[&'static str]| -> Vec<&'static str> { names[..names.len().min(spec.vocab_size)].to_vec() };
        let rooms: Vec<String> = pool(&ROOMS).choose_multiple(rng, n).map(|s| s.to_string()).collect();

        // Random spanning tree by depth-first carving, then a few extra doors.
        let mut adj = vec![BTreeSet::new(); n];
        let mut seen = vec![false; n];
        let mut stack = vec![rng.random_range(0..n)];
        seen[stack[0]] = true;
        while let Some(&cell) = stack.last() {
            let (x, y) = (cell % size, cell / size);
            let open: Vec<usize> = Dir::ALL
                .iter()
                .filter_map(|d| d.step(x, y, size))
                .map(|(nx, ny)| ny * size + nx)
                .filter(|&c| !seen[c])
                .collect();
            match open.choose(rng) {
                Some(&next) => {
                    adj[cell].insert(next);
                    adj[next].insert(cell);
                    seen[next] = true;
                    stack.push(next);
                }
                None => {
                    stack.pop();
                }
            }
        }
        for cell in 0..n {
            let (x, y) = (cell % size, cell / size);
            for d in [Dir::South, Dir::East] {
                if let Some((nx, ny)) = d.step(x, y, size) {
                    let other = ny * size + nx;
                    if rng.random_bool(0.25) {
                        adj[cell].insert(other);
                        adj[other].insert(cell);
                    }
                }
            }
        }
        let exits = (0..n)
            .map(|cell| {
                let (x, y) = (cell % size, cell / size);
                Dir::ALL
                    .iter()
                    .filter_map(|&d| {
                        let (nx, ny) = d.step(x, y, size)?;
                        let other = ny * size + nx;
                        adj[cell].contains(&other).then_some((d, other))
                    })
                    .collect()
            })
            .collect();

        let container = pool(&CONTAINERS).choose(rng).expect("non-empty").to_string();
        let container_room = rng.random_range(0..n);
        let mut items = Vec::new();
        let mut start_places = Vec::new();
        for name in pool(&TREASURES).choose_multiple(rng, spec.treasure_count) {
            items.push(Item {
                name: name.to_string(),
                treasure: true,
            });
            start_places.push(Place::Room(rng.random_range(0..n)));
        }
        for name in pool(&JUNK).choose_multiple(rng, spec.object_count) {
            items.push(Item {
                name: name.to_string(),
                treasure: false,
            });
            start_places.push(Place::Room(rng.random_range(0..n)));
        }
        let start = rng.random_range(0..n);
        Self {
            game_id,
            rooms,
            exits,
            container,
            container_room,
            items,
            start_places,
            start,
        }
    }

    fn max_score(&self) -> i64 {
        self.items.iter().filter(|i| i.treasure).count() as i64
    }

    fn initial(&self) -> State {
        State {
            loc: self.start,
            places: self.start_places.clone(),
            held_order: Vec::new(),
            open: false,
            score: 0,
        }
    }

    fn done(&self, st: &State) -> bool {
        st.score == self.max_score()
    }

    fn here(&self, st: &State) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| st.places[i] == Place::Room(st.loc))
            .collect()
    }

    fn held_treasure(&self, st: &State) -> Option<usize> {
        st.held_order.iter().copied().find(|&i| self.items[i].treasure)
    }

    /// Room the optimal player is heading for.
    fn target(&self, st: &State) -> Option<usize> {
        if self.held_treasure(st).is_some() {
            return Some(self.container_room);
        }
        let goals: BTreeSet<usize> = (0..self.items.len())
            .filter(|&i| self.items[i].treasure)
            .filter_map(|i| match st.places[i] {
                Place::Room(r) => Some(r),
                _ => None,
            })
            .collect();
        let dist = self.distances(st.loc);
        goals.into_iter().min_by_key(|&r| (dist[r], r))
    }

    fn distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.rooms.len()];
        dist[from] = 0;
        let mut q = VecDeque::from([from]);
        while let Some(c) = q.pop_front() {
            for &(_, nb) in &self.exits[c] {
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[c] + 1;
                    q.push_back(nb);
                }
            }
        }
        dist
    }

    /// First move on a shortest path toward the current target.
    fn hint(&self, st: &State) -> Option<Dir> {
        let target = self.target(st)?;
        if target == st.loc {
            return None;
        }
        let dist = self.distances(target);
        self.exits[st.loc]
            .iter()
            .filter(|&&(_, nb)| dist[nb] + 1 == dist[st.loc])
            .map(|&(d, _)| d)
            .next()
    }

    fn describe(&self, st: &State) -> String {
        let mut room = self.rooms[st.loc].clone();
        room[..1].make_ascii_uppercase();
        let mut out = format!("{room}. Exits:");
        for (d, _) in &self.exits[st.loc] {
            out.push(' ');
            out.push_str(d.name());
        }
        out.push('.');
        let here = self.here(st);
        if !here.is_empty() {
            out.push_str(" Here:");
            for i in here {
                out.push(' ');
                out.push_str(&self.items[i].name);
            }
            out.push('.');
        }
        if st.loc == self.container_room {
            let state = if st.open { "open" } else { "closed" };
            out.push_str(&format!(" The {} is {state}.", self.container));
        }
        if !st.held_order.is_empty() {
            out.push_str(" Carrying:");
            for &i in &st.held_order {
                out.push(' ');
                out.push_str(&self.items[i].name);
            }
            out.push('.');
        }
        if let Some(d) = self.hint(st) {
            out.push_str(&format!(" A glow to the {}.", d.name()));
        }
        out
    }

    fn valid_actions(&self, st: &State) -> Vec<String> {
        let mut v: BTreeSet<String> = BTreeSet::new();
        for (d, _) in &self.exits[st.loc] {
            v.insert(d.name().to_string());
        }
        v.insert("look".into());
        v.insert("inventory".into());
        for i in self.here(st) {
            v.insert(format!("take {}", self.items[i].name));
            v.insert(format!("examine {}", self.items[i].name));
        }
        for &i in &st.held_order {
            v.insert(format!("drop {}", self.items[i].name));
            v.insert(format!("examine {}", self.items[i].name));
        }
        if st.loc == self.container_room {
            v.insert(format!("examine {}", self.container));
            if st.open {
                for &i in &st.held_order {
                    v.insert(format!("put {} in {}", self.items[i].name, self.container));
                }
            } else {
                v.insert(format!("open {}", self.container));
            }
        }
        v.into_iter().collect()
    }

    fn item_named(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|i| i.name == name)
    }

    /// Apply a valid action; returns the feedback line.
    fn apply(&self, st: &mut State, action: &str) -> Result<String> {
        if !self.valid_actions(st).iter().any(|a| a == action) {
            return Err(Error::Contract(format!("`{action}` is not valid in {}", self.game_id)));
        }
        let words: Vec<&str> = action.split(' ').collect();
        let feedback = match words.as_slice() {
            [d] if Dir::ALL.iter().any(|x| x.name() == *d) => {
                let (_, nb) = self.exits[st.loc]
                    .iter()
                    .find(|(x, _)| x.name() == *d)
                    .expect("valid exit");
                st.loc = *nb;
                String::new()
            }
            ["look"] => String::new(),
            ["inventory"] => "You check your belongings.".into(),
            ["take", x] => {
                let i = self.item_named(x).expect("valid item");
                st.places[i] = Place::Held;
                st.held_order.push(i);
                "Taken.".into()
            }
            ["drop", x] => {
                let i = self.item_named(x).expect("valid item");
                st.places[i] = Place::Room(st.loc);
                st.held_order.retain(|&h| h != i);
                "Dropped.".into()
            }
            ["examine", x] => match self.item_named(x) {
                Some(i) => format!("The {x} looks {}.", LOOKS[i % LOOKS.len()]),
                None => format!("The {x} is sturdy."),
            },
            ["open", _] => {
                st.open = true;
                "Opened.".into()
            }
            ["put", x, "in", _] => {
                let i = self.item_named(x).expect("valid item");
                if self.items[i].treasure {
                    st.places[i] = Place::Deposited;
                    st.held_order.retain(|&h| h != i);
                    st.score += 1;
                    format!(
                        "Done. Your score is {} out of a possible {}.",
                        st.score,
                        self.max_score()
                    )
                } else {
                    format!("The {x} does not belong there.")
                }
            }
            _ => unreachable!("valid actions are generated from the patterns above"),
        };
        Ok(feedback)
    }

    fn observation(&self, feedback: &str, st: &State) -> String {
        if feedback.is_empty() {
            self.describe(st)
        } else {
            format!("{feedback} {}", self.describe(st))
        }
    }

    fn optimal_action(&self, st: &State) -> String {
        if st.loc == self.container_room {
            if let Some(t) = self.held_treasure(st) {
                return if st.open {
                    format!("put {} in {}", self.items[t].name, self.container)
                } else {
                    format!("open {}", self.container)
                };
            }
        }
        if let Some(t) = self.here(st).into_iter().find(|&i| self.items[i].treasure) {
            return format!("take {}", self.items[t].name);
        }
        let d = self.hint(st).expect("an unfinished game always has a target elsewhere");
        d.name().to_string()
    }

    fn random_move(&self, st: &State, rng: &mut ChaCha8Rng) -> String {
        self.exits[st.loc]
            .choose(rng)
            .expect("connected grid")
            .0
            .name()
            .to_string()
    }

    fn policy(&self, mode: BehaviorMode, st: &State, examined: &mut BTreeSet<String>, rng: &mut ChaCha8Rng) -> String {
        match mode {
            BehaviorMode::Optimal => self.optimal_action(st),
            BehaviorMode::Wanderer => {
                if rng.random_bool(0.75) {
                    self.random_move(st, rng)
                } else {
                    self.valid_actions(st).choose(rng).expect("never empty").clone()
                }
            }
            BehaviorMode::Examiner => {
                let fresh: Vec<String> = self
                    .valid_actions(st)
                    .into_iter()
                    .filter(|a| a.starts_with("examine ") && !examined.contains(a))
                    .collect();
                if let Some(a) = fresh.choose(rng) {
                    examined.insert(a.clone());
                    a.clone()
                } else if rng.random_bool(0.3) {
                    "look".into()
                } else {
                    self.random_move(st, rng)
                }
            }
            BehaviorMode::Hoarder => {
                if st.loc == self.container_room && self.held_treasure(st).is_some() {
                    return self.optimal_action(st);
                }
                let here = self.here(st);
                if let Some(&i) = here.choose(rng) {
                    format!("take {}", self.items[i].name)
                } else if rng.random_bool(0.2) {
                    "inventory".into()
                } else {
                    self.random_move(st, rng)
                }
            }
        }
    }

    /// Play one episode; each step records the observation before the action.
    fn play(&self, mode: BehaviorMode, limit: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PlayedStep>> {
        let mut st = self.initial();
        let mut obs = self.observation("Welcome.", &st);
        let mut examined = BTreeSet::new();
        let mut out = Vec::new();
        while !self.done(&st) && out.len() < limit {
            let valid = self.valid_actions(&st);
            let action = self.policy(mode, &st, &mut examined, rng);
            let feedback = self.apply(&mut st, &action)?;
            let next = self.observation(&feedback, &st);
            out.push((std::mem::replace(&mut obs, next), action, st.score, valid));
        }
        Ok(out)
    }
}

fn transcript_game_id(i: usize) -> String {
    format!("synth-t{i:03}")
}

fn walkthrough_game_id(i: usize) -> String {
    format!("synth-w{i:03}")
}

/// Rebuild the simulator for a generated game id.
pub fn world_for(spec: &SynthGameSpec, game_id: &str) -> Result<SynthWorld> {
    let parse = |rest: &str| {
        rest.parse::<usize>()
            .map_err(|_| Error::Argument(format!("not a synthetic game id: `{game_id}`")))
    };
    let (kind, index) = if let Some(rest) = game_id.strip_prefix("synth-t") {
        (Kind::Transcript, parse(rest)?)
    } else if let Some(rest) = game_id.strip_prefix("synth-w") {
        (Kind::Walkthrough, parse(rest)?)
    } else {
        return Err(Error::Argument(format!("not a synthetic game id: `{game_id}`")));
    };
    let mut rng = game_rng(spec.seed, &kind, index);
    Ok(SynthWorld::generate(spec, game_id.to_string(), &mut rng))
}

/// Replay a walkthrough's actions in the simulator; returns `(score, max score)`.
pub fn replay_walkthrough(spec: &SynthGameSpec, walkthrough: &Walkthrough) -> Result<(i64, i64)> {
    let world = world_for(spec, &walkthrough.game_id)?;
    let mut st = world.initial();
    for step in &walkthrough.steps {
        world.apply(&mut st, &step.action)?;
    }
    Ok((st.score, world.max_score()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub transcripts: Vec<Transcript>,
    /// Behaviour mode that played each transcript.
    pub transcript_modes: Vec<BehaviorMode>,
    pub walkthroughs: Vec<Walkthrough>,
}

pub fn generate_synthetic(spec: &SynthGameSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let modes = spec.mode_list();
    let weights = WeightedIndex::new(&spec.mode_weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut transcripts = Vec::new();
    let mut transcript_modes = Vec::new();
    for g in 0..spec.transcript_games {
        let mut rng = game_rng(spec.seed, &Kind::Transcript, g);
        let world = SynthWorld::generate(spec, transcript_game_id(g), &mut rng);
        for _ in 0..spec.transcripts_per_game {
            let mode = modes[weights.sample(&mut rng)];
            let steps = world.play(mode, spec.max_steps, &mut rng)?;
            let speaker_id = if spec.speaker_per_mode {
                format!("player-{}", mode.as_str())
            } else {
                format!("player{:04}", transcripts.len())
            };
            let final_score = steps.last().map(|s| s.2).unwrap_or(0);
            transcripts.push(Transcript {
                game_id: world.game_id.clone(),
                speaker_id,
                jericho: false,
                steps: steps
                    .into_iter()
                    .map(|(observation, action, score, _)| Step {
                        observation,
                        action,
                        score: Some(score),
                    })
                    .collect(),
                final_score: Some(final_score),
                max_score: Some(world.max_score()),
            });
            transcript_modes.push(mode);
        }
    }

    let mut walkthroughs = Vec::new();
    for g in 0..spec.walkthrough_games {
        let mut rng = game_rng(spec.seed, &Kind::Walkthrough, g);
        let world = SynthWorld::generate(spec, walkthrough_game_id(g), &mut rng);
        // The optimal player finishes within one sweep per treasure trip.
        let limit = 4 * world.rooms.len() * (spec.treasure_count + 1);
        let steps = world.play(BehaviorMode::Optimal, limit, &mut rng)?;
        let difficulty = if steps.len() > 6 * spec.treasure_count {
            Difficulty::Difficult
        } else {
            Difficulty::Possible
        };
        walkthroughs.push(Walkthrough {
            game_id: world.game_id.clone(),
            difficulty,
            max_score: Some(world.max_score()),
            steps: steps
                .into_iter()
                .map(|(observation, action, _, valid)| WalkthroughStep {
                    observation,
                    action,
                    valid_actions: Some(valid),
                })
                .collect(),
        });
    }
    Ok(SynthCorpus {
        transcripts,
        transcript_modes,
        walkthroughs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::steps_per_reward;

    fn small() -> SynthGameSpec {
        SynthGameSpec {
            seed: 5,
            transcript_games: 6,
            walkthrough_games: 6,
            ..SynthGameSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            generate_synthetic(&small()).unwrap(),
            generate_synthetic(&small()).unwrap()
        );
        let other = SynthGameSpec { seed: 6, ..small() };
        assert_ne!(
            generate_synthetic(&small()).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn walkthroughs_replay_to_max_score() {
        let spec = small();
        let c = generate_synthetic(&spec).unwrap();
        for w in &c.walkthroughs {
            let (s, m) = replay_walkthrough(&spec, w).unwrap();
            assert_eq!(s, m, "{}", w.game_id);
            assert_eq!(Some(m), w.max_score);
        }
    }

    #[test]
    fn gold_is_always_valid() {
        let c = generate_synthetic(&small()).unwrap();
        for w in &c.walkthroughs {
            for s in &w.steps {
                assert!(s.valid_actions.as_ref().unwrap().contains(&s.action));
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SynthGameSpec {
            modes: 1,
            mode_weights: vec![1.0],
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthGameSpec {
            mode_weights: vec![0.5, 0.5, 0.5, 0.5],
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthGameSpec {
            grid_size: 9,
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn optimal_transcripts_finish_or_hit_the_cap() {
        let spec = small();
        let c = generate_synthetic(&spec).unwrap();
        for (t, m) in c.transcripts.iter().zip(&c.transcript_modes) {
            if *m == BehaviorMode::Optimal {
                assert!(t.final_score == t.max_score || t.steps.len() == spec.max_steps);
                assert!(t.final_score == Some(0) || steps_per_reward(t).is_some());
            }
        }
    }
}
