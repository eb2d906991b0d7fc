//! Run configuration files, kernel arguments and JSON overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};
use wmmd_core::kernels::KernelSpec;
use wmmd_core::tasks::{DecoderOptions, TaskSpec};

use crate::error::{usage, CliError, CliResult};

/// Settings shared by the data commands. Every field may come from a JSON
/// file given with `--config`; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder: Option<DecoderOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lloyd_inits: Option<usize>,
    /// Bound for `ckmeans`: exit with a violation when the risk ratio exceeds it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ratio: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => parse_json(&read_text(p)?, &p.display().to_string()),
        }
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| usage(format!("{what}: {e}")))
}

/// A kernel given on the command line: a JSON object, or a short form
/// `family[:param...]` whose dimension is filled in later.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelArg {
    Spec(KernelSpec),
    Short(String),
}

impl std::str::FromStr for KernelArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.starts_with('{') {
            return KernelSpec::from_json(s).map(KernelArg::Spec).map_err(|e| e.to_string());
        }
        // check the short form now so typos fail at parse time
        KernelArg::Short(s.to_string()).resolve(1).map_err(|e| e.to_string())?;
        Ok(KernelArg::Short(s.to_string()))
    }
}

impl KernelArg {
    /// Kernel on `R^d`. Short forms: `gaussian[:sigma]`, `laplacian[:sigma]`,
    /// `matern[:nu[:sigma]]`; parameters default to 1 (`nu` to 1/2).
    pub fn resolve(&self, d: usize) -> CliResult<KernelSpec> {
        let spec = match self {
            KernelArg::Spec(k) => {
                if k.dim() != d {
                    return Err(usage(format!("kernel is on R^{} but the data are in R^{d}", k.dim())));
                }
                return Ok(k.clone());
            }
            KernelArg::Short(s) => s,
        };
        let mut parts = spec.split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params: Vec<f64> = parts
            .map(|p| p.parse::<f64>().map_err(|_| usage(format!("bad kernel parameter {p:?} in {spec:?}"))))
            .collect::<CliResult<_>>()?;
        let arg = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        let max_params = match name.as_str() {
            "gaussian" | "rbf" | "laplacian" => 1,
            "matern" => 2,
            _ => return Err(usage(format!("unknown kernel {name:?}; use gaussian, laplacian, matern or a JSON object"))),
        };
        if params.len() > max_params {
            return Err(usage(format!("too many parameters in kernel {spec:?}")));
        }
        let k = match name.as_str() {
            "gaussian" | "rbf" => KernelSpec::gaussian(arg(0, 1.0), d),
            "laplacian" => KernelSpec::laplacian(arg(0, 1.0), d),
            _ => KernelSpec::matern(arg(0, 0.5), arg(1, 1.0), d),
        };
        Ok(k?)
    }

    /// Resolves against the dimension of an existing kernel (or 1).
    pub fn resolve_like(&self, existing: Option<&Value>) -> CliResult<KernelSpec> {
        let d = existing.and_then(|v| v.get("d")).and_then(Value::as_u64).unwrap_or(1) as usize;
        match self {
            KernelArg::Spec(k) => Ok(k.clone()),
            KernelArg::Short(_) => self.resolve(d),
        }
    }
}

/// `key=value` override; the value is parsed as JSON, falling back to a string.
#[derive(Debug, Clone, PartialEq)]
pub struct SetArg {
    pub key: String,
    pub value: Value,
}

impl std::str::FromStr for SetArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, raw) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        if key.is_empty() {
            return Err("empty key".into());
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(SetArg { key: key.to_string(), value })
    }
}

/// Layers `file` and then `overrides` over the serialized `defaults`, and
/// deserializes the result. Keys absent from the defaults are rejected.
pub fn layered<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<Value>,
    overrides: &[(String, Value)],
    what: &str,
) -> CliResult<T> {
    let Value::Object(mut obj) = serde_json::to_value(defaults).expect("configs serialize") else {
        unreachable!("experiment configs are structs");
    };
    let known: Vec<String> = obj.keys().cloned().collect();
    if let Some(f) = file {
        let Value::Object(f) = f else {
            return Err(usage(format!("{what}: config file must hold a JSON object")));
        };
        merge_into(&mut obj, f);
    }
    for (k, v) in overrides {
        if !known.contains(k) {
            return Err(usage(format!("{what} has no setting {k:?} (known: {})", known.join(", "))));
        }
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| usage(format!("{what}: {e}")))
}

fn merge_into(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (k, v) in over {
        base.insert(k, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        seed: u64,
        k: usize,
        xs: Vec<f64>,
    }

    impl Default for Demo {
        fn default() -> Self {
            Demo { seed: 0, k: 4, xs: vec![0.5] }
        }
    }

    #[test]
    fn run_config_round_trip() {
        let c = RunConfig {
            command: Some("sketch".into()),
            kernel: Some(KernelSpec::gaussian(2.0, 3).unwrap()),
            seed: Some(7),
            m: Some(64),
            decoder: Some(DecoderOptions::default()),
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = parse_json(&text, "t").unwrap();
        assert_eq!(back, c);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
        assert!(parse_json::<RunConfig>(r#"{"seeed": 1}"#, "t").is_err());
    }

    #[test]
    fn kernel_short_forms() {
        let k: KernelArg = "gaussian".parse().unwrap();
        assert_eq!(k.resolve(2).unwrap(), KernelSpec::gaussian(1.0, 2).unwrap());
        let k: KernelArg = "matern:1.5:2".parse().unwrap();
        assert_eq!(k.resolve(1).unwrap(), KernelSpec::matern(1.5, 2.0, 1).unwrap());
        let k: KernelArg = r#"{"family":"laplacian","sigma":3,"d":2}"#.parse().unwrap();
        assert!(k.resolve(2).is_ok() && k.resolve(3).is_err());
        assert!("cauchy".parse::<KernelArg>().is_err());
        assert!("gaussian:x".parse::<KernelArg>().is_err());
        assert!("gaussian:-1".parse::<KernelArg>().is_err());
        assert!("gaussian:1:2".parse::<KernelArg>().is_err());
    }

    #[test]
    fn layering_order_and_unknown_keys() {
        let file = serde_json::json!({"k": 6, "xs": [1.0, 2.0]});
        let out: Demo = layered(&Demo::default(), Some(file), &[("k".into(), Value::from(8))], "demo").unwrap();
        assert_eq!(out, Demo { seed: 0, k: 8, xs: vec![1.0, 2.0] });
        assert!(layered(&Demo::default(), None, &[("q".into(), Value::from(1))], "demo").is_err());
        assert!(layered(&Demo::default(), Some(serde_json::json!({"q": 1})), &[], "demo").is_err());
    }

    #[test]
    fn set_args() {
        let s: SetArg = "eps=[0.5,0.25]".parse().unwrap();
        assert_eq!(s.value, serde_json::json!([0.5, 0.25]));
        let s: SetArg = "name=abc".parse().unwrap();
        assert_eq!(s.value, Value::String("abc".into()));
        assert!("novalue".parse::<SetArg>().is_err());
    }
}
