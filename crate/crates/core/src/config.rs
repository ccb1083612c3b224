//! Experiment manifests: flat `key=value` files, overridable from the
//! command line.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::eval::Regime;
use crate::graph::{
    load_edge_list, load_ratings, load_wiki_elections, EdgeListFormat, SignedGraph,
    DEFAULT_NEGATIVE_THRESHOLD, DEFAULT_TEST_FRACTION,
};
use crate::trainer::{NormRule, SolverChoice, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `<src> <dst> <sign>` lines.
    Edges,
    /// `<user> <item> <rating> <timestamp>` lines.
    Ratings,
    /// Wikipedia adminship election records.
    WikiElections,
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Edges => "edges",
            DatasetFormat::Ratings => "ratings",
            DatasetFormat::WikiElections => "wiki-elections",
        })
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edges" => Ok(DatasetFormat::Edges),
            "ratings" => Ok(DatasetFormat::Ratings),
            "wiki-elections" => Ok(DatasetFormat::WikiElections),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// Loads a dataset file in the given format.
pub fn load_dataset(path: &Path, format: DatasetFormat, rating_threshold: u8) -> Result<SignedGraph> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    match format {
        DatasetFormat::Edges => load_edge_list(reader, &EdgeListFormat::default()),
        DatasetFormat::Ratings => load_ratings(reader, rating_threshold),
        DatasetFormat::WikiElections => load_wiki_elections(reader),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub format: DatasetFormat,
    pub rating_threshold: u8,
    /// Training settings; `train.solver` is resolved from the three solver
    /// fields below by [`ExperimentConfig::train_config`].
    pub train: TrainConfig,
    pub use_tabu: bool,
    pub tabu_iterations: Option<usize>,
    pub tabu_time_limit: Option<Duration>,
    pub test_fraction: f64,
    pub regime: Regime,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            format: DatasetFormat::Edges,
            rating_threshold: DEFAULT_NEGATIVE_THRESHOLD,
            train: TrainConfig::default(),
            use_tabu: false,
            tabu_iterations: None,
            tabu_time_limit: None,
            test_fraction: DEFAULT_TEST_FRACTION,
            regime: Regime::Raw,
            workers: None,
            out: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "format",
    "rating-threshold",
    "variant",
    "p",
    "q",
    "d",
    "lambda-min",
    "lambda-max",
    "lambda-step",
    "norm",
    "solver",
    "tabu-iters",
    "tabu-time-ms",
    "seed",
    "test-fraction",
    "regime",
    "workers",
    "out",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl ExperimentConfig {
    /// Parses a manifest. Blank lines and `#` comments are ignored; unknown
    /// keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            cfg.apply(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "rating-threshold" => self.rating_threshold = num(key, value)?,
            "variant" => self.train.policy.variant = value.parse()?,
            "p" => self.train.policy.p = num(key, value)?,
            "q" => self.train.policy.q = num(key, value)?,
            "d" => self.train.d = num(key, value)?,
            "lambda-min" => self.train.lambda_min = num(key, value)?,
            "lambda-max" => self.train.lambda_max = num(key, value)?,
            "lambda-step" => self.train.lambda_step = num(key, value)?,
            "norm" => {
                self.train.norm = match value {
                    "subset" => NormRule::SubsetSize,
                    v => NormRule::Fixed(num(key, v)?),
                }
            }
            "solver" => {
                self.use_tabu = match value.parse()? {
                    SolverChoice::Exact => false,
                    SolverChoice::Tabu { .. } => true,
                }
            }
            "tabu-iters" => self.tabu_iterations = Some(num(key, value)?),
            "tabu-time-ms" => {
                self.tabu_time_limit = Some(Duration::from_millis(num(key, value)?))
            }
            "seed" => self.train.seed = num(key, value)?,
            "test-fraction" => self.test_fraction = num(key, value)?,
            "regime" => self.regime = value.parse()?,
            "workers" => {
                let w: usize = num(key, value)?;
                self.workers = (w > 0).then_some(w);
            }
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.solver = if self.use_tabu {
            SolverChoice::Tabu {
                iterations: self.tabu_iterations,
                time_limit: self.tabu_time_limit,
            }
        } else {
            SolverChoice::Exact
        };
        t
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(Error::Config(m)) = self.train_config().validate() {
            problems.push(m);
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            problems.push(format!("test-fraction {} must lie in (0, 1)", self.test_fraction));
        }
        if self.dataset.is_none() {
            problems.push("no dataset given".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn load_graph(&self) -> Result<SignedGraph> {
        let path = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given".into()))?;
        load_dataset(path, self.format, self.rating_threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opinion::OpinionVariant;

    #[test]
    fn manifest_round_trip() {
        let cfg = ExperimentConfig::parse(
            "# experiment\n\ndataset = data/wiki.txt\nformat=wiki-elections\nvariant=simple-adjacent\n\
             p=10\nq=30\nd=8\nsolver=tabu\ntabu-iters=500\ntabu-time-ms=250\nnorm=4.5\nregime=averaged\nworkers=0\n",
        )
        .unwrap();
        assert_eq!(cfg.format, DatasetFormat::WikiElections);
        assert_eq!(cfg.train.policy.variant, OpinionVariant::SimpleAdjacent);
        assert_eq!((cfg.train.policy.p, cfg.train.policy.q, cfg.train.d), (10, 30, 8));
        assert_eq!(cfg.train.norm, NormRule::Fixed(4.5));
        assert_eq!(cfg.regime, Regime::AveragedResults);
        assert_eq!(cfg.workers, None);
        assert_eq!(
            cfg.train_config().solver,
            SolverChoice::Tabu { iterations: Some(500), time_limit: Some(Duration::from_millis(250)) }
        );
    }

    #[test]
    fn every_key_is_accepted() {
        let samples = [
            "x", "edges", "3", "standard-pq", "1", "1", "4", "0.1", "0.2", "0.05", "subset", "exact",
            "10", "10", "7", "0.2", "raw", "2", "out",
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut cfg = ExperimentConfig::default();
        for (k, v) in KEYS.iter().zip(samples) {
            cfg.apply(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(ExperimentConfig::parse("colour=blue"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("just a line"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("p=-1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("format=csv"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut cfg = ExperimentConfig::parse("d=30\ntest-fraction=1.5").unwrap();
        let Err(Error::Config(msg)) = cfg.validate() else { panic!("expected config error") };
        assert!(msg.contains("test-fraction") && msg.contains("dataset") && msg.contains("24"), "{msg}");
        cfg.apply("solver", "tabu").unwrap();
        cfg.apply("test-fraction", "0.1").unwrap();
        cfg.apply("dataset", "somewhere").unwrap();
        assert!(cfg.validate().is_ok());
    }
}
