//! Run configuration: TOML files, command-line flags and defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use nbshift::measure::{MeasureSpec, PerturbationSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_DIR_ENV: &str = "NBSHIFT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "nbshift-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Measure,
    Factor,
    Match,
    Typeiii,
    Index,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Measure => "measure",
            Command::Factor => "factor",
            Command::Match => "match",
            Command::Typeiii => "typeiii",
            Command::Index => "index",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Every tunable. Unset fields fall back to the config file and then to the
/// per-command defaults; the resolved set is echoed into the report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Compact measure spec such as `iid:0.3` or `nu_c:0.1`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    /// Measure family (`iid`, `nu_c`, `mu_pc`, `perturbed`) built from the flags below.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    /// Perturbation sequence: `inv_sqrt`, `zero` or `power:E`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Window length or truncation, depending on the command.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Shifts for the Kakutani series, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<i64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<u64>,

    /// Density of `a` in random AB words.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Density of the dominating sequence.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q2: Option<f64>,
    /// Matching capacity.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_len: Option<usize>,
    /// Longest binary word in the exhaustive marker check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_len: Option<u32>,
    /// Longest AB word in the exhaustive matching check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ab_len: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_max: Option<usize>,
    /// Code radius of the splitting map.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_assumed: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmax: Option<usize>,
    /// Truncation of the dissipativity series.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_dissip: Option<i64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Params {
    /// Fields set in `over` win.
    pub fn overlay(&mut self, over: &Params) {
        overlay!(self, over; measure, family, c, p, p0, a, index, value, seed, n, k, blocks, q, q2, d,
            pairs, pair_len, word_len, ab_len, d_max, radius, lambda, lambda_prime, samples,
            d_assumed, kmax, k_dissip, out, format);
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The measure named by `measure`, or assembled from `family` and its
    /// parameters.
    pub fn measure_spec(&self) -> Result<Option<MeasureSpec>, CliError> {
        if let Some(s) = &self.measure {
            if self.family.is_some() {
                return Err(CliError::Config("give either --measure or --family, not both".into()));
            }
            return s.parse().map(Some).map_err(|e: nbshift::Error| CliError::Config(e.to_string()));
        }
        let Some(family) = &self.family else { return Ok(None) };
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("family {family} needs --{name}")));
        let spec = match family.as_str() {
            "iid" => MeasureSpec::Iid { p0: need(self.p0.or(self.p), "p0")? },
            "nu_c" => MeasureSpec::NuC { c: need(self.c, "c")? },
            "mu_pc" => MeasureSpec::MuPc {
                p: need(self.p, "p")?,
                c: need(self.c, "c")?,
                a: parse_perturbation(self.a.as_deref().unwrap_or("inv_sqrt"))?,
            },
            "perturbed" => MeasureSpec::Perturbed {
                p: self.p.unwrap_or(0.5),
                index: self.index.unwrap_or(0),
                value: need(self.value, "value")?,
            },
            other => return Err(CliError::Config(format!("unknown family {other:?}"))),
        };
        Ok(Some(spec))
    }

    /// Output directory: flag, then environment, then the default.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

fn parse_perturbation(s: &str) -> Result<PerturbationSpec, CliError> {
    match s {
        "inv_sqrt" => Ok(PerturbationSpec::InvSqrt),
        "zero" => Ok(PerturbationSpec::Zero),
        other => match other.strip_prefix("power:").map(str::parse::<f64>) {
            Some(Ok(exponent)) => Ok(PerturbationSpec::Power { exponent }),
            _ => Err(CliError::Config(format!("unknown perturbation {other:?}"))),
        },
    }
}

/// A command together with its fully resolved parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: Params,
}

impl RunConfig {
    pub fn new(command: Command, params: Params) -> Self {
        Self { command, params }
    }

    /// Parameters as echoed into the report. The output location is left out
    /// so that reruns into different directories produce identical bytes.
    pub fn echo(&self) -> serde_json::Value {
        let mut p = self.params.clone();
        p.out = None;
        serde_json::to_value(&p).unwrap_or(serde_json::Value::Null)
    }
}
