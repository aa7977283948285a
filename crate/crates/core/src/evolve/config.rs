//! TOML run configuration. Relative paths resolve against the config file's
//! directory. API keys are read from the environment variable named in
//! `[llm.http]`, never from the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvolutionSettings, EvolveError, Task};
use crate::llm::{HttpLlm, HttpSettings, LlmGateway, RequestOptions, ScriptedLlm};
use crate::problem::Instance;
use crate::runner::{CandidateRunner, NativeRunner, ProcessRunner, SEED_PROGRAM};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    #[default]
    Scripted,
    Http,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub mode: LlmMode,
    /// Transcript played back in scripted mode.
    pub transcript: Option<PathBuf>,
    /// Where to save the session for later replay.
    pub record_transcript: Option<PathBuf>,
    /// Settings for code-generation requests.
    pub code: RequestOptions,
    /// Settings for template-evolution requests.
    pub meta: RequestOptions,
    pub http: HttpSettings,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunnerKind {
    #[default]
    Native,
    Process,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerConfig {
    pub kind: RunnerKind,
    /// Worker executable for the process runner; defaults to `coevo-worker` next to
    /// the current executable.
    pub program: Option<PathBuf>,
    pub args: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: String,
    /// Overrides the built-in description of the training problem.
    #[serde(default)]
    pub problem_description: Option<String>,
    pub train: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
    /// Program the pool starts from; the built-in seed program when absent.
    #[serde(default)]
    pub seed_source: Option<PathBuf>,
    #[serde(default)]
    pub evolution: EvolutionSettings,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub runner: RunnerConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, EvolveError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| EvolveError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.evolution.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvolveError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn load_instances(&self, paths: &[PathBuf]) -> Result<Vec<Instance>, EvolveError> {
        paths
            .iter()
            .map(|p| {
                let path = self.resolve(p);
                Instance::load(&path, None).map_err(|e| EvolveError::Config(format!("{}: {e}", path.display())))
            })
            .collect()
    }

    pub fn task(&self) -> Result<Task, EvolveError> {
        let seed_source = match &self.seed_source {
            Some(p) => std::fs::read_to_string(self.resolve(p))?,
            None => SEED_PROGRAM.to_owned(),
        };
        let mut task = Task::new(self.task.clone(), self.load_instances(&self.train)?, seed_source)?;
        task.test = self.load_instances(&self.test)?;
        if let Some(d) = &self.problem_description {
            task.description = d.clone();
        }
        Ok(task)
    }

    /// The configured gateway, without transcript recording.
    pub fn gateway(&self) -> Result<Box<dyn LlmGateway>, EvolveError> {
        match self.llm.mode {
            LlmMode::Scripted => {
                let path = self
                    .llm
                    .transcript
                    .as_ref()
                    .ok_or_else(|| EvolveError::Config("scripted mode needs llm.transcript".into()))?;
                let llm = ScriptedLlm::from_file(&self.resolve(path)).map_err(|e| EvolveError::Config(e.to_string()))?;
                Ok(Box::new(llm))
            }
            LlmMode::Http => {
                let llm = HttpLlm::from_env(self.llm.http.clone()).map_err(|e| EvolveError::Config(e.to_string()))?;
                Ok(Box::new(llm))
            }
        }
    }

    pub fn candidate_runner(&self) -> Result<Box<dyn CandidateRunner>, EvolveError> {
        match self.runner.kind {
            RunnerKind::Native => Ok(Box::new(NativeRunner)),
            RunnerKind::Process => {
                let program = match &self.runner.program {
                    Some(p) => self.resolve(p),
                    None => std::env::current_exe()?.with_file_name("coevo-worker"),
                };
                Ok(Box::new(ProcessRunner::connect(program, self.runner.args.clone())?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml("task = \"t\"\ntrain = [\"a.json\"]\n", Path::new("/cfg")).unwrap();
        assert_eq!(cfg.evolution, EvolutionSettings::default());
        assert_eq!(cfg.evolution.max_candidates, 200);
        assert_eq!(cfg.evolution.independent_runs, 5);
        assert_eq!(cfg.llm.code.temperature, 1.0);
        assert_eq!(cfg.resolve(Path::new("a.json")), PathBuf::from("/cfg/a.json"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("task = \"t\"\ntrain = []\napi_key = \"x\"\n", Path::new(".")).is_err());
        let bad = "task = \"t\"\ntrain = []\n[evolution]\ncrossover_rate = 2.0\n";
        assert!(RunConfig::from_toml(bad, Path::new(".")).is_err());
    }
}
