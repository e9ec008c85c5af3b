//! Flat `key = value` run configuration with `[section]` headers.
//!
//! One file mirrors every tunable: network topology, extractor geometry,
//! loss weights, synthetic-data settings, and the optimizer. The canonical
//! serialization (`to_text`) is what gets echoed verbatim into training
//! logs, checkpoints, and evaluation reports. Unknown sections or keys are
//! errors, not warnings.

use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::lss::LssConfig;
use crate::net::NetworkConfig;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSection {
    pub input_height: usize,
    pub input_width: usize,
    pub encoder_channels: [usize; 4],
    pub ltc_hidden: usize,
    pub t_steps: usize,
    pub dt: f64,
    pub lss_enabled: bool,
    pub seed: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let d = NetworkConfig::default();
        NetworkSection {
            input_height: d.input_height,
            input_width: d.input_width,
            encoder_channels: d.encoder_channels,
            ltc_hidden: d.ltc_hidden,
            t_steps: d.t_steps,
            dt: d.dt,
            lss_enabled: d.lss_enabled,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            shuffle_seed: d.shuffle_seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub network: NetworkSection,
    pub lss: LssConfig,
    pub weights: LossWeights,
    pub synth: SynthConfig,
    pub train: TrainSection,
}

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["network", "lss", "loss", "synth", "train"].contains(&section.as_str()) {
                    return Err(Error::config(format!(
                        "line {}: unknown section [{section}]",
                        lineno + 1
                    )));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value).map_err(|e| {
                Error::config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    /// Apply one key; `section` may be empty only for no valid key.
    pub fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::config(format!("bad value for {key}: {value}")))
        }
        match (section, key) {
            ("network", "input_height") => self.network.input_height = num(key, value)?,
            ("network", "input_width") => self.network.input_width = num(key, value)?,
            ("network", "encoder_channels") => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| num::<usize>(key, p.trim()))
                    .collect::<Result<_>>()?;
                if parts.len() != 4 {
                    return Err(Error::config(format!(
                        "encoder_channels needs exactly 4 entries, got {}",
                        parts.len()
                    )));
                }
                self.network.encoder_channels = [parts[0], parts[1], parts[2], parts[3]];
            }
            ("network", "ltc_hidden") => self.network.ltc_hidden = num(key, value)?,
            ("network", "t_steps") => self.network.t_steps = num(key, value)?,
            ("network", "dt") => self.network.dt = num(key, value)?,
            ("network", "lss_enabled") => {
                self.network.lss_enabled = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(Error::config(format!("bad bool for {key}: {value}"))),
                }
            }
            ("network", "seed") => self.network.seed = num(key, value)?,
            ("lss", "patch") => self.lss.patch = num(key, value)?,
            ("lss", "radius") => self.lss.radius = num(key, value)?,
            ("lss", "epsilon") => self.lss.epsilon = num(key, value)?,
            ("loss", "lambda_main") => self.weights.lambda_main = num(key, value)?,
            ("loss", "lambda_aux1") => self.weights.lambda_aux1 = num(key, value)?,
            ("loss", "lambda_aux2") => self.weights.lambda_aux2 = num(key, value)?,
            ("loss", "lambda_bal") => self.weights.lambda_bal = num(key, value)?,
            ("synth", "count") => self.synth.count = num(key, value)?,
            ("synth", "size") => self.synth.size = num(key, value)?,
            ("synth", "seed") => self.synth.seed = num(key, value)?,
            ("synth", "background_freq") => self.synth.background_freq = num(key, value)?,
            ("synth", "wound_freq") => self.synth.wound_freq = num(key, value)?,
            ("synth", "noise_sigma") => self.synth.noise_sigma = num(key, value)?,
            ("synth", "brightness_jitter") => self.synth.brightness_jitter = num(key, value)?,
            ("train", "epochs") => self.train.epochs = num(key, value)?,
            ("train", "batch_size") => self.train.batch_size = num(key, value)?,
            ("train", "learning_rate") => self.train.learning_rate = num(key, value)?,
            ("train", "shuffle_seed") => self.train.shuffle_seed = num(key, value)?,
            _ => {
                return Err(Error::config(format!(
                    "unknown key {key} in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        format!(
            "[network]\n\
             input_height = {}\n\
             input_width = {}\n\
             encoder_channels = {}\n\
             ltc_hidden = {}\n\
             t_steps = {}\n\
             dt = {}\n\
             lss_enabled = {}\n\
             seed = {}\n\
             [lss]\n\
             patch = {}\n\
             radius = {}\n\
             epsilon = {}\n\
             [loss]\n\
             lambda_main = {}\n\
             lambda_aux1 = {}\n\
             lambda_aux2 = {}\n\
             lambda_bal = {}\n\
             [synth]\n\
             count = {}\n\
             size = {}\n\
             seed = {}\n\
             background_freq = {}\n\
             wound_freq = {}\n\
             noise_sigma = {}\n\
             brightness_jitter = {}\n\
             [train]\n\
             epochs = {}\n\
             batch_size = {}\n\
             learning_rate = {}\n\
             shuffle_seed = {}\n",
            self.network.input_height,
            self.network.input_width,
            self.network
                .encoder_channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.network.ltc_hidden,
            self.network.t_steps,
            self.network.dt,
            self.network.lss_enabled,
            self.network.seed,
            self.lss.patch,
            self.lss.radius,
            self.lss.epsilon,
            self.weights.lambda_main,
            self.weights.lambda_aux1,
            self.weights.lambda_aux2,
            self.weights.lambda_bal,
            self.synth.count,
            self.synth.size,
            self.synth.seed,
            self.synth.background_freq,
            self.synth.wound_freq,
            self.synth.noise_sigma,
            self.synth.brightness_jitter,
            self.train.epochs,
            self.train.batch_size,
            self.train.learning_rate,
            self.train.shuffle_seed,
        )
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            input_height: self.network.input_height,
            input_width: self.network.input_width,
            encoder_channels: self.network.encoder_channels,
            ltc_hidden: self.network.ltc_hidden,
            t_steps: self.network.t_steps,
            dt: self.network.dt,
            lss_enabled: self.network.lss_enabled,
            lss: self.lss.clone(),
            seed: self.network.seed,
        }
    }

    pub fn set_network(&mut self, cfg: &NetworkConfig) {
        self.network = NetworkSection {
            input_height: cfg.input_height,
            input_width: cfg.input_width,
            encoder_channels: cfg.encoder_channels,
            ltc_hidden: cfg.ltc_hidden,
            t_steps: cfg.t_steps,
            dt: cfg.dt,
            lss_enabled: cfg.lss_enabled,
            seed: cfg.seed,
        };
        self.lss = cfg.lss.clone();
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            weights: self.weights,
            shuffle_seed: self.train.shuffle_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.network.t_steps = 3;
        cfg.network.lss_enabled = false;
        cfg.weights.lambda_bal = 0.0;
        cfg.synth.count = 12;
        cfg.train.learning_rate = 5e-4;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::parse("[network]\nbogus = 1\n");
        assert!(err.is_err());
        let err2 = RunConfig::parse("[nonsense]\n");
        assert!(err2.is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# hello\n\n[network]\n# inline\nseed = 99\n").unwrap();
        assert_eq!(cfg.network.seed, 99);
    }
}
