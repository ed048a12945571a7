//! `key = value` configuration files with `#` comments and dotted keys.
//!
//! `profile` is applied first whatever its position, then every other key
//! in file order, then command-line overrides. A single `seed` feeds every
//! random stream. [`Config::to_map`] materializes every key, defaults
//! included, so a run can be reproduced from its manifest alone.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::experiments::{Arm, Experiment, SweepSpec};
use crate::sampler::gamma_for_alpha;
use crate::synth::GenConfig;
use crate::trainer::TrainConfig;

str_enum!(Profile { Desk => "desk", Full => "full" });

str_enum!(AlphaNodes { Irrelevant => "irrelevant", All => "all" });

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub profile: Profile,
    pub seed: u64,
    pub gen: GenConfig,
    pub train: TrainConfig,
    /// Noise level for lucky-neuron tests; `None` follows `gen.sigma`.
    pub lucky_sigma: Option<f64>,
    /// alpha realized through the two-tier gamma.
    pub alpha: Option<f64>,
    /// Sweep settings; its gen, train, alpha and seed fields are filled in
    /// by [`Config::sweep_spec`].
    pub sweep: SweepSpec,
    /// Confidence parameter q in the high-probability bounds.
    pub q: f64,
    pub alpha_reps: usize,
    pub alpha_nodes: AlphaNodes,
}

impl Default for Config {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| invalid(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if value == "none" || value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn show_opt<T: Display>(x: &Option<T>, none: &str) -> String {
    x.as_ref().map_or(none.to_string(), ToString::to_string)
}

impl Config {
    pub fn profile(profile: Profile) -> Self {
        let (gen, train) = match profile {
            Profile::Desk => (GenConfig::desk(), TrainConfig::desk()),
            Profile::Full => (GenConfig::default(), TrainConfig::default()),
        };
        let mut sweep = SweepSpec::desk(Experiment::PhaseTransition);
        sweep.sizes = vec![gen.train_size];
        sweep.values = vec![train.beta];
        Self {
            profile,
            seed: 0,
            gen,
            train,
            lucky_sigma: None,
            alpha: None,
            sweep,
            q: 10.0,
            alpha_reps: 20,
            alpha_nodes: AlphaNodes::Irrelevant,
        }
    }

    /// Parses a configuration file. Blank lines and text after `#` are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text`, then applies `overrides` in order.
    pub fn parse_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            entries.push((i + 1, key.trim().to_string(), value.trim().to_string()));
        }
        entries.extend(overrides.iter().map(|(k, v)| (0, k.clone(), v.clone())));
        let profile = match entries.iter().rev().find(|(_, k, _)| k == "profile") {
            Some((_, k, v)) => parse(k, v)?,
            None => Profile::Desk,
        };
        let mut config = Self::profile(profile);
        for (line, key, value) in &entries {
            config.set(key, value).map_err(|e| match e {
                Error::InvalidParameter(msg) if *line > 0 => Error::Parse { line: *line, msg },
                other => other,
            })?;
        }
        Ok(config)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (g, t, s) = (&mut self.gen, &mut self.train, &mut self.sweep);
        match key {
            "profile" => {}
            "seed" => self.seed = parse(key, value)?,
            "gen.d" => g.d = parse(key, value)?,
            "gen.l" => g.l = parse(key, value)?,
            "gen.n" => g.n = parse(key, value)?,
            "gen.degree" => g.degree = parse(key, value)?,
            "gen.relevant_fraction" => g.relevant_fraction = parse(key, value)?,
            "gen.sigma" => g.sigma = parse(key, value)?,
            "gen.noise" => g.noise = parse(key, value)?,
            "gen.pattern_mode" => g.pattern_mode = parse(key, value)?,
            "gen.train_size" => g.train_size = parse(key, value)?,
            "gen.outlier_fraction" => g.outlier_fraction = parse(key, value)?,
            "train.k" => t.k = parse(key, value)?,
            "train.c_eta" => t.c_eta = parse(key, value)?,
            "train.delta" => t.delta = parse(key, value)?,
            "train.beta" => t.beta = parse(key, value)?,
            "train.prune_scope" => t.prune_scope = parse(key, value)?,
            "train.prune_method" => t.prune_method = parse(key, value)?,
            "train.pretrain_iters" => t.pretrain_iters = parse_opt(key, value)?,
            "train.max_iters" => t.max_iters = parse(key, value)?,
            "train.batch" => t.batch = parse(key, value)?,
            "train.batches" => t.batches = parse(key, value)?,
            "train.stop" => t.stop = parse(key, value)?,
            "train.stop_metric" => t.stop_metric = parse(key, value)?,
            "train.norm" => t.norm = parse(key, value)?,
            "train.step" => t.step = parse(key, value)?,
            "train.lucky_sigma" => self.lucky_sigma = parse_opt(key, value)?,
            "sampler.kind" => t.sampling.kind = parse(key, value)?,
            "sampler.r" => t.sampling.r = parse(key, value)?,
            "sampler.gamma" => t.sampling.gamma = parse(key, value)?,
            "sampler.important" => t.sampling.important = parse(key, value)?,
            "sampler.lambda" => t.sampling.lambda = parse(key, value)?,
            "sampler.salt" => t.sampling.salt = parse(key, value)?,
            "sampler.alpha" => self.alpha = parse_opt(key, value)?,
            "sweep.experiment" => s.experiment = parse(key, value)?,
            "sweep.param" => s.param = parse(key, value)?,
            "sweep.values" => s.values = parse_list(key, value)?,
            "sweep.param2" => s.param2 = parse(key, value)?,
            "sweep.values2" => s.values2 = parse_list(key, value)?,
            "sweep.arms" => s.arms = parse_list::<Arm>(key, value)?,
            "sweep.sizes" => s.sizes = parse_list(key, value)?,
            "sweep.trials" => s.trials = parse(key, value)?,
            "sweep.alpha_reps" => s.alpha_reps = parse(key, value)?,
            "sweep.threshold" => s.threshold = parse(key, value)?,
            "analyze.q" => self.q = parse(key, value)?,
            "alpha.reps" => self.alpha_reps = parse(key, value)?,
            "alpha.nodes" => self.alpha_nodes = parse(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let (g, t, s) = (&self.gen, &self.train, &self.sweep);
        let pairs: Vec<(&str, String)> = vec![
            ("profile", self.profile.to_string()),
            ("seed", self.seed.to_string()),
            ("gen.d", g.d.to_string()),
            ("gen.l", g.l.to_string()),
            ("gen.n", g.n.to_string()),
            ("gen.degree", g.degree.to_string()),
            ("gen.relevant_fraction", g.relevant_fraction.to_string()),
            ("gen.sigma", g.sigma.to_string()),
            ("gen.noise", g.noise.to_string()),
            ("gen.pattern_mode", g.pattern_mode.to_string()),
            ("gen.train_size", g.train_size.to_string()),
            ("gen.outlier_fraction", g.outlier_fraction.to_string()),
            ("train.k", t.k.to_string()),
            ("train.c_eta", t.c_eta.to_string()),
            ("train.delta", t.delta.to_string()),
            ("train.beta", t.beta.to_string()),
            ("train.prune_scope", t.prune_scope.to_string()),
            ("train.prune_method", t.prune_method.to_string()),
            ("train.pretrain_iters", show_opt(&t.pretrain_iters, "auto")),
            ("train.max_iters", t.max_iters.to_string()),
            ("train.batch", t.batch.to_string()),
            ("train.batches", t.batches.to_string()),
            ("train.stop", t.stop.to_string()),
            ("train.stop_metric", t.stop_metric.to_string()),
            ("train.norm", t.norm.to_string()),
            ("train.step", t.step.to_string()),
            ("train.lucky_sigma", show_opt(&self.lucky_sigma, "auto")),
            ("sampler.kind", t.sampling.kind.to_string()),
            ("sampler.r", t.sampling.r.to_string()),
            ("sampler.gamma", t.sampling.gamma.to_string()),
            ("sampler.important", t.sampling.important.to_string()),
            ("sampler.lambda", t.sampling.lambda.to_string()),
            ("sampler.salt", t.sampling.salt.to_string()),
            ("sampler.alpha", show_opt(&self.alpha, "none")),
            ("sweep.experiment", s.experiment.to_string()),
            ("sweep.param", s.param.to_string()),
            ("sweep.values", join(&s.values)),
            ("sweep.param2", s.param2.to_string()),
            ("sweep.values2", join(&s.values2)),
            ("sweep.arms", join(&s.arms)),
            ("sweep.sizes", join(&s.sizes)),
            ("sweep.trials", s.trials.to_string()),
            ("sweep.alpha_reps", s.alpha_reps.to_string()),
            ("sweep.threshold", s.threshold.to_string()),
            ("analyze.q", self.q.to_string()),
            ("alpha.reps", self.alpha_reps.to_string()),
            ("alpha.nodes", self.alpha_nodes.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// `key = value` lines in key order; parses back to the same config.
    pub fn to_text(&self) -> String {
        self.to_map()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Generator settings with the global seed.
    pub fn gen_config(&self) -> Result<GenConfig> {
        let gen = GenConfig {
            seed: self.seed,
            ..self.gen.clone()
        };
        gen.validate()?;
        Ok(gen)
    }

    /// Trainer settings with the global seed, lucky sigma and alpha target
    /// resolved.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut train = TrainConfig {
            seed: self.seed,
            lucky_sigma: self.lucky_sigma.unwrap_or(self.gen.sigma),
            ..self.train.clone()
        };
        if let Some(a) = self.alpha {
            train.sampling.kind = crate::sampler::SamplerKind::TwoTier;
            train.sampling.gamma = gamma_for_alpha(a, train.sampling.r, self.gen.degree)?;
        }
        train.validate()?;
        Ok(train)
    }

    /// The sweep with the resolved generator and trainer settings.
    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let mut train = self.train.clone();
        train.lucky_sigma = self.lucky_sigma.unwrap_or(self.gen.sigma);
        let spec = SweepSpec {
            gen: self.gen.clone(),
            train,
            alpha: self.alpha,
            seed: self.seed,
            ..self.sweep.clone()
        };
        spec.validate()?;
        Ok(spec)
    }
}
