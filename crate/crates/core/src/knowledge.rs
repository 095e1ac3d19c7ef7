//! Tagged store of augmentation recipes, model templates and training
//! guidance, queried by agents before they act.
//!
//! Entries are text files with a front-matter block:
//!
//! ```text
//! ---
//! id: model-reconstruction
//! roles: designer, trainer
//! kind: model_template
//! tags: reconstruction, autoencoder
//! ---
//! <body>
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TaskType;
use crate::workspace::AgentId;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("cannot read knowledge dir {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("entry {0}: {1}")]
    Malformed(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeKind {
    Augmentation,
    ModelTemplate,
    TrainingGuidance,
}

impl KnowledgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeKind::Augmentation => "augmentation",
            KnowledgeKind::ModelTemplate => "model_template",
            KnowledgeKind::TrainingGuidance => "training_guidance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "augmentation" => Some(KnowledgeKind::Augmentation),
            "model_template" => Some(KnowledgeKind::ModelTemplate),
            "training_guidance" => Some(KnowledgeKind::TrainingGuidance),
            _ => None,
        }
    }
}

impl fmt::Display for KnowledgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub applicable_roles: BTreeSet<AgentId>,
    pub tags: BTreeSet<String>,
    pub kind: KnowledgeKind,
    pub content: String,
}

impl KnowledgeEntry {
    /// Prompt block; the body sits between the opening line and the closing tag.
    pub fn render(&self) -> String {
        format!(
            "<knowledge id=\"{}\" kind=\"{}\" source=\"kb\">\n{}\n</knowledge>",
            self.id,
            self.kind,
            self.content.trim_end_matches('\n')
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeQuery {
    pub role: AgentId,
    pub task_type: TaskType,
    pub model: String,
    pub tags: BTreeSet<String>,
    pub limit: usize,
}

/// Kinds a role may receive.
pub fn compatible_kinds(role: AgentId) -> &'static [KnowledgeKind] {
    use KnowledgeKind::*;
    match role {
        AgentId::Prep => &[Augmentation, ModelTemplate, TrainingGuidance],
        AgentId::Loader => &[Augmentation],
        AgentId::Designer => &[ModelTemplate],
        AgentId::Trainer => &[TrainingGuidance, ModelTemplate],
        AgentId::Manager => &[],
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeStore {
    entries: Vec<KnowledgeEntry>,
    /// One message per skipped entry.
    pub warnings: Vec<String>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("aug-feature-embedding.md", include_str!("../kb/aug-feature-embedding.md")),
    ("aug-normalizing-flow.md", include_str!("../kb/aug-normalizing-flow.md")),
    ("aug-reconstruction.md", include_str!("../kb/aug-reconstruction.md")),
    ("guide-feature-embedding.md", include_str!("../kb/guide-feature-embedding.md")),
    ("guide-normalizing-flow.md", include_str!("../kb/guide-normalizing-flow.md")),
    ("guide-reconstruction.md", include_str!("../kb/guide-reconstruction.md")),
    ("model-feature-stat.md", include_str!("../kb/model-feature-stat.md")),
    ("model-flow.md", include_str!("../kb/model-flow.md")),
    ("model-reconstruction.md", include_str!("../kb/model-reconstruction.md")),
    ("train-script.md", include_str!("../kb/train-script.md")),
];

impl KnowledgeStore {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The knowledge base compiled into the binary.
    pub fn bundled() -> Self {
        let mut store = Self::default();
        for (name, text) in BUNDLED {
            store.add_text(name, text);
        }
        store.sort();
        store
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn add_text(&mut self, name: &str, text: &str) {
        match parse_entry(name, text) {
            Ok(e) if self.get(&e.id).is_some() => {
                self.warnings.push(format!("{name}: duplicate id `{}`", e.id));
            }
            Ok(e) => self.entries.push(e),
            Err(err) => {
                tracing::warn!("skipping knowledge entry: {err}");
                self.warnings.push(err.to_string());
            }
        }
    }

    fn sort(&mut self) {
        self.entries.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

fn split_list(v: &str) -> impl Iterator<Item = String> + '_ {
    v.split(',').map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty())
}

/// Parse one front-matter entry. `name` is only used in messages.
pub fn parse_entry(name: &str, text: &str) -> Result<KnowledgeEntry, KnowledgeError> {
    let malformed = |msg: &str| KnowledgeError::Malformed(name.to_string(), msg.to_string());
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rest = text
        .strip_prefix("---\n")
        .or_else(|| text.strip_prefix("---\r\n"))
        .ok_or_else(|| malformed("missing front-matter"))?;
    let close = rest.find("\n---").ok_or_else(|| malformed("unterminated front-matter"))?;
    let header = &rest[..close];
    let body = rest[close + 4..].trim_start_matches(['\r']).strip_prefix('\n').unwrap_or(&rest[close + 4..]);

    let (mut id, mut roles, mut kind, mut tags) = (None, None, None, BTreeSet::new());
    for line in header.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once(':').ok_or_else(|| malformed(&format!("bad header line `{line}`")))?;
        let v = v.trim();
        match k.trim() {
            "id" => id = Some(v.to_string()),
            "kind" => kind = Some(KnowledgeKind::parse(v).ok_or_else(|| malformed(&format!("unknown kind `{v}`")))?),
            "roles" => {
                let mut set = BTreeSet::new();
                for r in split_list(v) {
                    set.insert(AgentId::parse(&r).ok_or_else(|| malformed(&format!("unknown role `{r}`")))?);
                }
                roles = Some(set);
            }
            "tags" => tags.extend(split_list(v)),
            _ => {}
        }
    }
    let id = id.filter(|s| !s.is_empty()).ok_or_else(|| malformed("missing `id`"))?;
    let kind = kind.ok_or_else(|| malformed("missing `kind`"))?;
    let applicable_roles = roles.filter(|r| !r.is_empty()).ok_or_else(|| malformed("missing `roles`"))?;
    Ok(KnowledgeEntry { id, applicable_roles, tags, kind, content: body.to_string() })
}

/// Load every `*.md` / `*.txt` file in `dir`. Malformed entries are skipped
/// and counted in [`KnowledgeStore::warnings`].
pub fn load_knowledge(dir: &Path) -> Result<KnowledgeStore, KnowledgeError> {
    let read_err = |source| KnowledgeError::Read { path: dir.display().to_string(), source };
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(read_err)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")))
        .collect();
    names.sort();
    let mut store = KnowledgeStore::default();
    for path in names {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match fs::read_to_string(&path) {
            Ok(text) => store.add_text(&name, &text),
            Err(e) => store.warnings.push(format!("{name}: {e}")),
        }
    }
    store.sort();
    Ok(store)
}

/// Entries visible to `q.role` with a compatible kind, ranked by tag overlap
/// with `q.tags ∪ {model, task_type}` (descending, ties by id).
pub fn query_knowledge<'a>(store: &'a KnowledgeStore, q: &KnowledgeQuery) -> Vec<&'a KnowledgeEntry> {
    let kinds = compatible_kinds(q.role);
    let mut wanted: BTreeSet<String> = q.tags.iter().map(|t| t.to_lowercase()).collect();
    let model = q.model.trim().to_lowercase();
    if !model.is_empty() {
        wanted.insert(model);
    }
    wanted.insert(q.task_type.as_str().to_string());

    let mut hits: Vec<(usize, &KnowledgeEntry)> = store
        .entries
        .iter()
        .filter(|e| e.applicable_roles.contains(&q.role) && kinds.contains(&e.kind))
        .map(|e| (e.tags.intersection(&wanted).count(), e))
        .collect();
    hits.sort_by(|(sa, a), (sb, b)| sb.cmp(sa).then_with(|| a.id.cmp(&b.id)));
    hits.into_iter().take(q.limit.max(1)).map(|(_, e)| e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(role: AgentId, model: &str, tags: &[&str], limit: usize) -> KnowledgeQuery {
        KnowledgeQuery {
            role,
            task_type: TaskType::Classification,
            model: model.into(),
            tags: tags.iter().map(|s| s.to_string()).collect(),
            limit,
        }
    }

    #[test]
    fn bundled_covers_three_kinds_by_three_families() {
        let store = KnowledgeStore::bundled();
        assert!(store.warnings.is_empty(), "{:?}", store.warnings);
        assert_eq!(store.len(), BUNDLED.len());
        for kind in [KnowledgeKind::Augmentation, KnowledgeKind::ModelTemplate, KnowledgeKind::TrainingGuidance] {
            for family in ["reconstruction", "feature-embedding", "normalizing-flow"] {
                assert!(
                    store.entries().iter().any(|e| e.kind == kind && e.tags.contains(family)),
                    "no {kind} entry for {family}"
                );
            }
        }
    }

    #[test]
    fn bundled_dir_matches_embedded() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("kb");
        let loaded = load_knowledge(&dir).unwrap();
        assert_eq!(loaded.entries(), KnowledgeStore::bundled().entries());
    }

    #[test]
    fn patchcore_designer_gets_feature_template_first() {
        let store = KnowledgeStore::bundled();
        let hits = query_knowledge(&store, &q(AgentId::Designer, "PatchCore", &[], 3));
        assert_eq!(hits[0].id, "model-feature-stat");
        assert!(hits.iter().all(|e| e.kind == KnowledgeKind::ModelTemplate));
    }

    #[test]
    fn loader_augmentation_entries_name_the_presets() {
        let store = KnowledgeStore::bundled();
        let hits = query_knowledge(&store, &q(AgentId::Loader, "", &["augmentation"], 5));
        assert!(!hits.is_empty());
        for e in hits {
            assert_eq!(e.kind, KnowledgeKind::Augmentation);
            let body = e.content.to_lowercase();
            for word in ["resize", "horizontal flip", "gaussian noise"] {
                assert!(body.contains(word), "{} lacks {word}", e.id);
            }
        }
    }

    #[test]
    fn guidance_mentions_tuning_knobs() {
        let store = KnowledgeStore::bundled();
        let text: String = store
            .entries()
            .iter()
            .filter(|e| e.kind == KnowledgeKind::TrainingGuidance)
            .map(|e| e.content.to_lowercase())
            .collect();
        for word in ["learning rate", "coreset sampling ratio", "regularization"] {
            assert!(text.contains(word), "{word}");
        }
    }

    #[test]
    fn empty_store_and_skip_rules() {
        let dir = tempfile::tempdir().unwrap();
        let store = load_knowledge(dir.path()).unwrap();
        assert!(store.is_empty());
        assert!(query_knowledge(&store, &q(AgentId::Designer, "x", &[], 3)).is_empty());

        fs::write(dir.path().join("a.md"), "---\nid: a\nroles: designer\ntags: x\n---\nbody\n").unwrap();
        fs::write(dir.path().join("b.md"), "---\nid: b\nroles: designer\nkind: model_template\n---\nbody\n").unwrap();
        let store = load_knowledge(dir.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.warnings.len(), 1);
        assert!(store.warnings[0].contains("kind"));
        assert_eq!(store.get("b").unwrap().content, "body\n");
        assert!(load_knowledge(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn render_round_trips_through_placeholder_lookup() {
        let store = KnowledgeStore::bundled();
        let e = store.get("model-reconstruction").unwrap();
        let msgs = [crate::gateway::ChatMessage::system(e.render())];
        let out = crate::gateway::expand_knowledge_refs("{{kb:model-reconstruction}}", &msgs);
        assert_eq!(out.trim_end(), e.content.trim_end());
    }

    #[test]
    fn role_safety() {
        let store = KnowledgeStore::bundled();
        for role in AgentId::WORKERS {
            for e in query_knowledge(&store, &q(role, "patchcore", &["augmentation", "train-script"], 50)) {
                assert!(e.applicable_roles.contains(&role));
                assert!(compatible_kinds(role).contains(&e.kind));
            }
        }
        assert!(query_knowledge(&store, &q(AgentId::Manager, "", &[], 5)).is_empty());
    }
}
