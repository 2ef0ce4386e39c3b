use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::oracle::OracleKind;

const KEYS: [&str; 17] = [
    "n_agents",
    "dim",
    "loss",
    "distribution",
    "samples_per_agent",
    "oracle",
    "algorithms",
    "eps",
    "adaptive",
    "bias",
    "seeds",
    "out_dir",
    "diameter",
    "grad_bound",
    "step",
    "log_every",
    "checkpoints",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentLoss {
    /// `½‖x − ξ‖²`
    MeanEstimation,
    /// `(1/d)·½‖x − ξ‖²`
    QuadraticHard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistributionSpec {
    /// `ξ_k ~ Ber(p_k)` with every `p_k ~ U[0, 1]` drawn per seed.
    BernoulliUniform,
    /// `ξ ~ N(m, std²·I)` with every `m_k ~ U[0, 1]` drawn per seed.
    GaussianUniform { std: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum BiasSource {
    /// `b_ij = f_i(x_j^⋆) − f_i(x_i^⋆)` from the true optima.
    Exact,
    /// One run per amplitude, each with uniform offsets on the optima.
    Noisy(Vec<f64>),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    /// All-for-all; adaptive when the config says so, otherwise at `eps`.
    Afa,
    AfaAdaptive,
    NaiveParallel,
    Local,
    SingleModel,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Afa => "afa",
            Algo::AfaAdaptive => "afa_adaptive",
            Algo::NaiveParallel => "naive_parallel",
            Algo::Local => "local",
            Algo::SingleModel => "single_model",
        }
    }

    /// Whether the run depends on the bias matrix.
    pub fn uses_bias(self) -> bool {
        !matches!(self, Algo::Local | Algo::SingleModel)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Algo::Afa, Algo::AfaAdaptive, Algo::NaiveParallel, Algo::Local, Algo::SingleModel]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algorithms", format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    pub dim: usize,
    pub loss: ExperimentLoss,
    pub distribution: DistributionSpec,
    pub samples_per_agent: u64,
    pub oracle: OracleKind,
    pub algorithms: Vec<Algo>,
    pub eps: Option<f64>,
    pub adaptive: bool,
    pub bias: BiasSource,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// `D`
    pub diameter: f64,
    /// `B`
    pub grad_bound: f64,
    /// Overrides the step of the fixed-`ε` algorithms.
    pub step: Option<f64>,
    /// Rounds between record rows; `None` picks one row per agent-sample for
    /// `N ≤ 100` and one per `N` samples beyond.
    pub log_every: Option<u64>,
    /// Number of log-spaced points in the summary.
    pub checkpoints: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_agents: 10,
            dim: 1,
            loss: ExperimentLoss::MeanEstimation,
            distribution: DistributionSpec::BernoulliUniform,
            samples_per_agent: 100,
            oracle: OracleKind::Asynchronous,
            algorithms: vec![Algo::Afa, Algo::Local, Algo::SingleModel],
            eps: None,
            adaptive: true,
            bias: BiasSource::Exact,
            seeds: vec![1],
            out_dir: None,
            diameter: 1.0,
            grad_bound: 1.0,
            step: None,
            log_every: None,
            checkpoints: 50,
        }
    }
}

fn positive_int(table: &Table, key: &str) -> Result<Option<u64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(v)) if *v > 0 => Ok(Some(*v as u64)),
        Some(v) => Err(Error::config(key, format!("expected a positive integer, got {v}"))),
    }
}

fn positive_float(table: &Table, key: &str) -> Result<Option<f64>> {
    let v = match table.get(key) {
        None => return Ok(None),
        Some(Value::Float(v)) => *v,
        Some(Value::Integer(v)) => *v as f64,
        Some(v) => return Err(Error::config(key, format!("expected a number, got {v}"))),
    };
    if v > 0.0 && v.is_finite() {
        Ok(Some(v))
    } else {
        Err(Error::config(key, format!("must be finite and > 0, got {v}")))
    }
}

fn string<'a>(table: &'a Table, key: &str) -> Result<Option<&'a str>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(Error::config(key, format!("expected a string, got {v}"))),
    }
}

fn parse_amplitudes(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|a| *a >= 0.0 && a.is_finite())
                .ok_or_else(|| Error::config("bias", format!("bad noise amplitude {s:?}")))
        })
        .collect()
}

impl FromStr for BiasSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            Ok(BiasSource::Exact)
        } else if let Some(list) = s.strip_prefix("noisy:") {
            Ok(BiasSource::Noisy(parse_amplitudes(list)?))
        } else if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(Error::config("bias", "empty file path"));
            }
            Ok(BiasSource::File(PathBuf::from(path)))
        } else {
            Err(Error::config("bias", format!("expected exact, noisy:<a,...> or file:<path>, got {s:?}")))
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bernoulli_uniform" {
            return Ok(DistributionSpec::BernoulliUniform);
        }
        if let Some(std) = s.strip_prefix("gaussian_uniform:") {
            if let Some(std) = std.parse::<f64>().ok().filter(|v| *v >= 0.0 && v.is_finite()) {
                return Ok(DistributionSpec::GaussianUniform { std });
            }
        }
        Err(Error::config(
            "distribution",
            format!("expected bernoulli_uniform or gaussian_uniform:<std>, got {s:?}"),
        ))
    }
}

impl ExperimentConfig {
    /// Parse a flat TOML document. Relative `file:` bias paths resolve
    /// against `base` when given.
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e
                .span()
                .map(|r| text[..r.start].lines().count().max(1).to_string())
                .map_or_else(|| "<document>".to_string(), |line| format!("<line {line}>"));
            Error::config(key, e.message().to_string())
        })?;
        if let Some(unknown) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(unknown.clone(), "unknown key"));
        }
        let mut cfg = ExperimentConfig {
            n_agents: positive_int(&table, "n_agents")?.ok_or_else(|| Error::config("n_agents", "required"))? as usize,
            ..ExperimentConfig::default()
        };
        if let Some(d) = positive_int(&table, "dim")? {
            cfg.dim = d as usize;
        }
        if let Some(loss) = string(&table, "loss")? {
            cfg.loss = match loss {
                "mean_estimation" => ExperimentLoss::MeanEstimation,
                "quadratic_hard" => ExperimentLoss::QuadraticHard,
                other => {
                    return Err(Error::config(
                        "loss",
                        format!("expected mean_estimation or quadratic_hard, got {other:?}"),
                    ))
                }
            };
        }
        if let Some(d) = string(&table, "distribution")? {
            cfg.distribution = d.parse()?;
        }
        cfg.samples_per_agent = positive_int(&table, "samples_per_agent")?
            .ok_or_else(|| Error::config("samples_per_agent", "required"))?;
        if let Some(o) = string(&table, "oracle")? {
            cfg.oracle = o.parse().map_err(|_| Error::config("oracle", format!("expected sync or async, got {o:?}")))?;
        }
        match table.get("algorithms") {
            None => {}
            Some(Value::Array(items)) => {
                let mut algos = Vec::new();
                for item in items {
                    let name = item
                        .as_str()
                        .ok_or_else(|| Error::config("algorithms", format!("expected strings, got {item}")))?;
                    let algo: Algo = name.parse()?;
                    if algos.contains(&algo) {
                        return Err(Error::config("algorithms", format!("{name} listed twice")));
                    }
                    algos.push(algo);
                }
                if algos.is_empty() {
                    return Err(Error::config("algorithms", "empty list"));
                }
                cfg.algorithms = algos;
            }
            Some(v) => return Err(Error::config("algorithms", format!("expected a list, got {v}"))),
        }
        cfg.eps = positive_float(&table, "eps")?;
        match table.get("adaptive") {
            None => {}
            Some(Value::Boolean(b)) => cfg.adaptive = *b,
            Some(v) => return Err(Error::config("adaptive", format!("expected true or false, got {v}"))),
        }
        if let Some(b) = string(&table, "bias")? {
            cfg.bias = b.parse()?;
            if let (BiasSource::File(p), Some(base)) = (&cfg.bias, base) {
                if p.is_relative() {
                    cfg.bias = BiasSource::File(base.join(p));
                }
            }
        }
        match table.get("seeds") {
            None => {}
            Some(Value::Array(items)) => {
                cfg.seeds = items
                    .iter()
                    .map(|v| match v {
                        Value::Integer(s) if *s >= 0 => Ok(*s as u64),
                        other => Err(Error::config("seeds", format!("expected non-negative integers, got {other}"))),
                    })
                    .collect::<Result<_>>()?;
            }
            Some(v) => return Err(Error::config("seeds", format!("expected a list, got {v}"))),
        }
        cfg.out_dir = string(&table, "out_dir")?.map(PathBuf::from);
        if let Some(d) = positive_float(&table, "diameter")? {
            cfg.diameter = d;
        }
        if let Some(b) = positive_float(&table, "grad_bound")? {
            cfg.grad_bound = b;
        }
        cfg.step = positive_float(&table, "step")?;
        cfg.log_every = positive_int(&table, "log_every")?;
        if let Some(c) = positive_int(&table, "checkpoints")? {
            cfg.checkpoints = c as usize;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent())
    }

    /// Cross-key consistency.
    pub fn check(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("n_agents", "must be ≥ 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be ≥ 1"));
        }
        if self.samples_per_agent == 0 {
            return Err(Error::config("samples_per_agent", "must be ≥ 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "empty list"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "empty list"));
        }
        let needs_eps = self
            .algorithms
            .iter()
            .any(|a| *a == Algo::NaiveParallel || (*a == Algo::Afa && !self.adaptive));
        if needs_eps && self.eps.is_none() {
            return Err(Error::config("eps", "required by fixed-eps algorithms"));
        }
        if matches!(self.bias, BiasSource::Noisy(_)) && self.dim != 1 {
            return Err(Error::config("bias", "noisy bias needs dim = 1"));
        }
        if matches!(self.bias, BiasSource::Noisy(ref a) if a.is_empty()) {
            return Err(Error::config("bias", "no amplitudes"));
        }
        Ok(())
    }

    /// Rounds in a run: one sample per round when asynchronous, `N` otherwise.
    pub fn rounds(&self) -> u64 {
        match self.oracle {
            OracleKind::Asynchronous => self.samples_per_agent * self.n_agents as u64,
            OracleKind::Synchronous => self.samples_per_agent,
        }
    }

    pub fn effective_log_every(&self) -> u64 {
        self.log_every.unwrap_or(match self.oracle {
            OracleKind::Synchronous => 1,
            OracleKind::Asynchronous if self.n_agents <= 100 => 1,
            OracleKind::Asynchronous => self.n_agents as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n_agents = 5\nsamples_per_agent = 10\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, None).unwrap();
        assert_eq!(cfg.n_agents, 5);
        assert_eq!(cfg.oracle, OracleKind::Asynchronous);
        assert!(cfg.adaptive);
        assert_eq!(cfg.rounds(), 50);
    }

    #[test]
    fn bias_sources_parse() {
        assert_eq!("exact".parse::<BiasSource>().unwrap(), BiasSource::Exact);
        assert_eq!(
            "noisy:0.02,0.5".parse::<BiasSource>().unwrap(),
            BiasSource::Noisy(vec![0.02, 0.5])
        );
        assert_eq!(
            "file:b.csv".parse::<BiasSource>().unwrap(),
            BiasSource::File(PathBuf::from("b.csv"))
        );
        assert!("noisy:x".parse::<BiasSource>().is_err());
    }

    fn offending_key(text: &str) -> String {
        match ExperimentConfig::from_toml_str(text, None).unwrap_err() {
            Error::Config { key, .. } => key,
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(offending_key("samples_per_agent = 3"), "n_agents");
        assert_eq!(offending_key(&format!("{MINIMAL}oracle = \"both\"")), "oracle");
        assert_eq!(offending_key(&format!("{MINIMAL}eps = -1.0")), "eps");
        assert_eq!(offending_key(&format!("{MINIMAL}colour = 1")), "colour");
        assert_eq!(offending_key(&format!("{MINIMAL}adaptive = false\nalgorithms = [\"afa\"]")), "eps");
        assert_eq!(offending_key(&format!("{MINIMAL}dim = 2\nbias = \"noisy:0.1\"")), "bias");
        assert_eq!(offending_key(&format!("{MINIMAL}algorithms = [\"sgd\"]")), "algorithms");
    }

    #[test]
    fn relative_bias_file_resolves_against_base() {
        let cfg = ExperimentConfig::from_toml_str(
            &format!("{MINIMAL}bias = \"file:b.csv\""),
            Some(Path::new("/tmp/cfg")),
        )
        .unwrap();
        assert_eq!(cfg.bias, BiasSource::File(PathBuf::from("/tmp/cfg/b.csv")));
    }

    #[test]
    fn default_logging_density() {
        let mut cfg = ExperimentConfig {
            n_agents: 100,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.effective_log_every(), 1);
        cfg.n_agents = 101;
        assert_eq!(cfg.effective_log_every(), 101);
    }
}
