//! `key = value` run settings layered as defaults < config file < flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use wnll_core::classifier::{SoftmaxConfig, WnllParams};
use wnll_core::knn::GraphParams;
use wnll_core::train::TrainConfig;

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Every recognized key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset", "moons", "moons, an IDX directory, or a CSV file"),
    ("label_column", "label", "label column of a CSV dataset"),
    ("n_train", "400", "training / template points (0 = all available)"),
    ("n_test", "200", "test points (0 = all remaining)"),
    ("noise", "0.1", "two-moons noise std"),
    ("seed", "0", "run seed"),
    ("knn_k", "15", "neighbors per point"),
    ("sigma_rank", "8", "neighbor whose distance sets sigma"),
    ("mu", "auto", "WNLL amplification, or auto for |X|/|T| - 1"),
    ("template_batch", "0", "template points per WNLL solve, 0 = single solve"),
    ("softmax_epochs", "40", "softmax baseline epochs"),
    ("softmax_lr", "0.5", "softmax baseline learning rate"),
    ("softmax_batch", "128", "softmax baseline batch size, 0 = full batch"),
    ("hidden", "64", "DNN block widths, comma separated"),
    ("buffer", "32", "buffer block width"),
    ("passes", "2", "alternating passes"),
    ("linear_epochs", "40", "linear-stage epochs per pass"),
    ("wnll_epochs", "5", "WNLL-stage epochs per pass"),
    ("lr", "0.05", "first-pass linear-stage learning rate"),
    ("lr_half_every", "5", "halve the linear-stage rate every this many epochs"),
    ("wnll_lr", "0.0005", "first-pass WNLL-stage learning rate"),
    ("later_pass_scale", "0.2", "rate multiplier after the first pass"),
    ("momentum", "0.9", "Nesterov momentum"),
    ("weight_decay", "0.0001", "L2 weight decay"),
    ("batch_linear", "32", "linear-stage batch size"),
    ("batch_wnll", "250", "WNLL-stage batch size"),
    ("template_fraction", "0.5", "share of training points reserved as template per pass"),
    ("proxy_scaling", "on", "scale the proxy gradient by L_wnll / L_linear"),
    ("checkpoint", "", "checkpoint to evaluate"),
    ("template", "train", "eval template: train or test split"),
    ("eval_on", "test", "eval points: train or test split"),
    ("classes", "2,5,10,26", "class counts for the coverage table"),
    ("trials", "100000", "Monte-Carlo trials per class count"),
    ("min_accuracy", "0", "fail with exit code 1 below this accuracy"),
    ("min_margin", "0", "table1: fail with exit code 1 if WNLL beats softmax by less"),
    ("timing", "off", "record wall-clock times in reports"),
    ("threads", "1", "worker threads (recorded; execution is sequential)"),
];

pub fn default_for(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|k| k.0 == key).map(|k| k.1)
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Built-in defaults overlaid with command defaults, then the file, then
    /// the flags.
    pub fn resolve(command: &[(&str, &str)], file: Option<&Path>, flags: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v, _) in KEYS {
            cfg.values.insert(k.to_string(), v.to_string());
        }
        for (k, v) in command {
            cfg.set(k, v)?;
        }
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_pairs(&text, &path.display().to_string())? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if default_for(key).is_none() {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key).parse().map_err(|_| Error::Config(format!("{key} = {:?} is not valid", self.get(key))))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Config(format!("{key} must be finite")))
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            other => Err(Error::Config(format!("{key} = {other:?}: expected on or off"))),
        }
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: {s:?} is not a count"))))
            .collect()
    }

    pub fn graph(&self) -> Result<GraphParams> {
        Ok(GraphParams { k: self.usize("knn_k")?, r: self.usize("sigma_rank")?, ..GraphParams::default() })
    }

    pub fn wnll(&self) -> Result<WnllParams> {
        let mu = match self.get("mu") {
            "auto" | "" => None,
            _ => Some(self.f64("mu")?),
        };
        Ok(WnllParams { graph: self.graph()?, mu, ..WnllParams::default() })
    }

    pub fn softmax(&self) -> Result<SoftmaxConfig> {
        Ok(SoftmaxConfig {
            epochs: self.usize("softmax_epochs")?,
            lr: self.f64("softmax_lr")?,
            batch_size: self.usize("softmax_batch")?,
            seed: self.u64("seed")?,
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            passes: self.usize("passes")?,
            linear_epochs: self.usize("linear_epochs")?,
            wnll_epochs: self.usize("wnll_epochs")?,
            lr: self.f64("lr")?,
            lr_half_every: self.usize("lr_half_every")?,
            wnll_lr: self.f64("wnll_lr")?,
            later_pass_scale: self.f64("later_pass_scale")?,
            momentum: self.f64("momentum")?,
            weight_decay: self.f64("weight_decay")?,
            batch_linear: self.usize("batch_linear")?,
            batch_wnll: self.usize("batch_wnll")?,
            graph: self.graph()?,
            seed: self.u64("seed")?,
            template_fraction: self.f64("template_fraction")?,
            proxy_scaling: self.flag("proxy_scaling")?,
        })
    }

    /// Sorted `key = value` lines preceded by the tool version.
    pub fn to_text(&self) -> String {
        let mut s = format!("# {TOOL_VERSION}\nversion = {TOOL_VERSION}\n");
        for (k, v) in &self.values {
            if k != "version" {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        fs::write(&file, "# comment\nseed = 5\nknn_k = 10 # inline\n").unwrap();
        let flags = vec![("knn_k".to_string(), "12".to_string())];
        let cfg = RunConfig::resolve(&[("seed", "3"), ("n_train", "9")], Some(&file), &flags).unwrap();
        assert_eq!(cfg.get("seed"), "5");
        assert_eq!(cfg.get("knn_k"), "12");
        assert_eq!(cfg.get("n_train"), "9");
        assert_eq!(cfg.get("sigma_rank"), "8");
        let round = parse_pairs(&cfg.to_text(), "resolved").unwrap();
        assert!(round.contains(&("version".into(), TOOL_VERSION.into())));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::resolve(&[], None, &[("bogus".into(), "1".into())]).is_err());
        assert!(parse_pairs("novalue\n", "x").is_err());
        let cfg = RunConfig::resolve(&[], None, &[("proxy_scaling".into(), "maybe".into())]).unwrap();
        assert!(cfg.train().is_err());
    }

    #[test]
    fn typed_views() {
        let cfg = RunConfig::resolve(&[], None, &[]).unwrap();
        let t = cfg.train().unwrap();
        assert_eq!(t, TrainConfig { seed: 0, ..TrainConfig::default() });
        assert_eq!(cfg.wnll().unwrap().mu, None);
        assert_eq!(cfg.usize_list("classes").unwrap(), vec![2, 5, 10, 26]);
    }
}
