//! Run configuration: a TOML file with namespaced keys, overridden by flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use eventscope::agent::{AgentConfig, Task};
use eventscope::pipeline::PipelineConfig;
use eventscope::providers::stub::{StubSet, StubSpec};
use eventscope::providers::{short_digest, HttpClient, ProviderConfig, ResponseCache, Toolkit};
use eventscope::refine::{S2Config, S2Mode};
use eventscope::segment::S1Config;

use crate::error::CliError;

pub const CACHE_DIR_ENV: &str = "EVENTSCOPE_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S1Section {
    /// Defaults to 1 for QA and 3 for DVC.
    pub n_events: Option<usize>,
    pub delta1: f64,
    pub fps: f64,
    pub max_epochs: usize,
}

impl Default for S1Section {
    fn default() -> Self {
        let d = S1Config::default();
        Self {
            n_events: None,
            delta1: d.delta1,
            fps: d.fps,
            max_epochs: d.max_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    #[serde(rename = "T")]
    pub t_max: usize,
    pub delta_conv: f64,
    pub n_frames: usize,
    /// Defaults to 6 for QA and 4 for DVC.
    pub n_shots: Option<usize>,
    pub tau: f64,
    pub max_tokens: u32,
}

impl Default for AgentSection {
    fn default() -> Self {
        let d = AgentConfig::default();
        Self {
            t_max: d.t_max,
            delta_conv: d.delta_conv,
            n_frames: d.n_frames,
            n_shots: None,
            tau: d.tau,
            max_tokens: d.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProvidersSection {
    pub image: ProviderConfig,
    pub text: ProviderConfig,
    pub caption: ProviderConfig,
    pub scene_graph: ProviderConfig,
    pub oie: ProviderConfig,
    pub llm: ProviderConfig,
}

impl ProvidersSection {
    fn all_mut(&mut self) -> [&mut ProviderConfig; 6] {
        [
            &mut self.image,
            &mut self.text,
            &mut self.caption,
            &mut self.scene_graph,
            &mut self.oie,
            &mut self.llm,
        ]
    }

    fn all(&self) -> [(&'static str, &ProviderConfig); 6] {
        [
            ("image", &self.image),
            ("text", &self.text),
            ("caption", &self.caption),
            ("scene_graph", &self.scene_graph),
            ("oie", &self.oie),
            ("llm", &self.llm),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcurrencySection {
    /// Videos processed at once.
    pub videos: usize,
    /// LLM requests in flight at once.
    pub llm: usize,
}

impl Default for ConcurrencySection {
    fn default() -> Self {
        Self { videos: 4, llm: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    /// Seed for hash-based stub providers.
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    /// Stub description used by `stub:spec` endpoints.
    pub stubs: Option<PathBuf>,
    pub demos: Option<PathBuf>,
    pub s1: S1Section,
    pub s2: S2Config,
    pub agent: AgentSection,
    pub providers: ProvidersSection,
    pub concurrency: ConcurrencySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Qa,
            seed: None,
            cache_dir: None,
            stubs: None,
            demos: None,
            s1: S1Section::default(),
            s2: S2Config::default(),
            agent: AgentSection::default(),
            providers: ProvidersSection::default(),
            concurrency: ConcurrencySection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub n_events: Option<usize>,
    pub t_max: Option<usize>,
    pub n_frames: Option<usize>,
    pub n_shots: Option<usize>,
    pub s2_mode: Option<S2Mode>,
    pub stub_all: bool,
    pub seed: Option<u64>,
    pub stubs: Option<PathBuf>,
    pub demos: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.stubs, &mut cfg.demos, &mut cfg.cache_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Load `path` (or defaults), apply flags and the cache environment variable, and validate.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(o);
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()) {
            cfg.cache_dir = Some(PathBuf::from(dir));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(t) = o.task {
            self.task = t;
        }
        if o.n_events.is_some() {
            self.s1.n_events = o.n_events;
        }
        if let Some(t) = o.t_max {
            self.agent.t_max = t;
        }
        if let Some(n) = o.n_frames {
            self.agent.n_frames = n;
        }
        if o.n_shots.is_some() {
            self.agent.n_shots = o.n_shots;
        }
        if let Some(m) = o.s2_mode {
            self.s2.mode = m;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.stubs.is_some() {
            self.stubs = o.stubs.clone();
        }
        if o.demos.is_some() {
            self.demos = o.demos.clone();
        }
        if o.stub_all {
            let endpoint = if self.stubs.is_some() {
                "stub:spec"
            } else {
                "stub:default"
            };
            for p in self.providers.all_mut() {
                p.endpoint = endpoint.to_string();
            }
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let defaults = PipelineConfig::for_task(self.task);
        PipelineConfig {
            task: self.task,
            s1: S1Config {
                n_events: self.s1.n_events.unwrap_or(defaults.s1.n_events),
                delta1: self.s1.delta1,
                fps: self.s1.fps,
                max_epochs: self.s1.max_epochs,
            },
            s2: self.s2.clone(),
            agent: AgentConfig {
                t_max: self.agent.t_max,
                delta_conv: self.agent.delta_conv,
                n_frames: self.agent.n_frames,
                n_shots: self.agent.n_shots.unwrap_or(defaults.agent.n_shots),
                tau: self.agent.tau,
                max_tokens: self.agent.max_tokens,
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.pipeline();
        p.s1.validate().map_err(|e| CliError::Config(e.to_string()))?;
        p.s2.validate().map_err(|e| CliError::Config(e.to_string()))?;
        p.agent.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for (name, pc) in self.providers.all() {
            pc.validate()
                .map_err(|e| CliError::Config(format!("providers.{name}: {e}")))?;
            match pc.stub_name() {
                Some("default") | None => {}
                Some("spec") if self.stubs.is_some() => {}
                Some("spec") => {
                    return Err(CliError::Config(format!(
                        "providers.{name} uses stub:spec but no stubs file is configured"
                    )))
                }
                Some(other) => {
                    return Err(CliError::Config(format!(
                        "providers.{name}: unknown stub {other:?} (expected stub:default or stub:spec)"
                    )))
                }
            }
        }
        if self.concurrency.videos == 0 || self.concurrency.llm == 0 {
            return Err(CliError::Config("concurrency limits must be >= 1".into()));
        }
        Ok(())
    }

    /// Everything needed to reproduce a run, as JSON. Stub and demonstration
    /// files are recorded by content digest so snapshots do not depend on where
    /// the files live.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "task": self.task,
            "seed": self.seed,
            "stubs": self.stubs.as_deref().map(content_tag),
            "demos": self.demos.as_deref().map(content_tag),
            "pipeline": self.pipeline(),
            "providers": self.providers,
            "concurrency": self.concurrency,
        })
    }

    fn stub_spec(&self, which: &str) -> Result<StubSpec, CliError> {
        let mut spec = match which {
            "spec" => {
                let path = self.stubs.as_ref().expect("validated");
                StubSpec::load(path).map_err(|e| CliError::Config(e.to_string()))?
            }
            _ => StubSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        Ok(spec)
    }

    /// Build one provider per tool from the configured endpoints.
    pub fn toolkit(&self) -> Result<Toolkit, CliError> {
        let cache = match &self.cache_dir {
            Some(dir) => Some(Arc::new(
                ResponseCache::open(dir).map_err(|e| CliError::Config(e.to_string()))?,
            )),
            None => None,
        };
        let mut stub_sets: Vec<(String, StubSet)> = Vec::new();
        let mut stubs_for = |name: &str| -> Result<StubSet, CliError> {
            if let Some((_, s)) = stub_sets.iter().find(|(n, _)| n == name) {
                return Ok(s.clone());
            }
            let set = StubSet::build(&self.stub_spec(name)?).map_err(|e| CliError::Config(e.to_string()))?;
            stub_sets.push((name.to_string(), set.clone()));
            Ok(set)
        };
        let http = |pc: &ProviderConfig| -> Result<Arc<HttpClient>, CliError> {
            HttpClient::new(pc.clone(), cache.clone())
                .map(Arc::new)
                .map_err(|e| CliError::Config(e.to_string()))
        };
        let p = &self.providers;
        macro_rules! pick {
            ($field:ident) => {
                match p.$field.stub_name() {
                    Some(name) => stubs_for(name)?.$field,
                    None => http(&p.$field)?,
                }
            };
        }
        let image = pick!(image);
        let text = pick!(text);
        let caption = pick!(caption);
        let scene_graph = pick!(scene_graph);
        let oie = pick!(oie);
        let llm = pick!(llm);
        Toolkit::new(image, text, caption, scene_graph, oie, llm)
            .map(|k| k.with_llm_limit(self.concurrency.llm))
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

fn content_tag(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => format!("sha256:{}", short_digest(&bytes)),
        Err(_) => path.display().to_string(),
    }
}
