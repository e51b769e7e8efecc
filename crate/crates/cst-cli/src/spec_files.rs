//! On-disk document formats: SCM spec (TOML), schema config (TOML), audit
//! config file (TOML), and the latents file (JSON).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cst_core::data::{Dataset, ValueMaps};
use cst_core::metric::{AttributeRole, AttributeSchema, AttributeSpec};
use cst_core::model::LinearThresholdModel;
use cst_core::scm::{LatentRecord, NodeSpec, Scm};

// ── SCM spec file ─────────────────────────────────────────────────────

/// SCM spec document: a top-level list of `[[node]]` tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmDoc {
    #[serde(rename = "node")]
    pub nodes: Vec<NodeSpec>,
}

pub fn read_scm(path: &Path) -> Result<Scm> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read SCM spec {}", path.display()))?;
    let doc: ScmDoc = toml::from_str(&text)
        .with_context(|| format!("cannot parse SCM spec {}", path.display()))?;
    let scm = Scm::new(doc.nodes);
    let violations = scm.validate();
    if !violations.is_empty() {
        let rendered: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!(
            "SCM spec {} is invalid: {}",
            path.display(),
            rendered.join("; ")
        );
    }
    Ok(scm)
}

pub fn write_scm(path: &Path, scm: &Scm) -> Result<()> {
    let doc = ScmDoc {
        nodes: scm.nodes.clone(),
    };
    let text = toml::to_string_pretty(&doc).context("cannot serialize SCM spec")?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

// ── Schema config file ────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierDoc {
    /// Per-column weights of the linear score.
    pub weights: BTreeMap<String, f64>,
    pub threshold: f64,
    /// Decision column the rule produces; defaults to the schema's decision
    /// attribute.
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestDoc {
    /// Raw-header (case-insensitive) to canonical column name.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// Canonical column name to string-value coding.
    #[serde(default)]
    pub value_maps: BTreeMap<String, BTreeMap<String, f64>>,
    /// Multiplicative scaling applied after load (canonical column name).
    #[serde(default)]
    pub scale: BTreeMap<String, f64>,
}

/// Schema config document: typed columns, protected values, the designated
/// positive outcome, the audited classifier, and CSV ingestion hooks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub positive_decision: f64,
    #[serde(rename = "attribute")]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub classifier: Option<ClassifierDoc>,
    #[serde(default)]
    pub ingest: Option<IngestDoc>,
}

impl SchemaDoc {
    pub fn schema(&self) -> AttributeSchema {
        AttributeSchema::new(self.attributes.clone(), self.positive_decision)
    }

    /// The audited decision rule, when declared.
    pub fn classifier(&self) -> Result<Option<LinearThresholdModel>> {
        let Some(doc) = &self.classifier else {
            return Ok(None);
        };
        let output = match &doc.output {
            Some(name) => name.clone(),
            None => {
                let decision = self
                    .attributes
                    .iter()
                    .find(|a| a.role == AttributeRole::Decision)
                    .context("schema declares no decision attribute")?;
                decision.name.clone()
            }
        };
        let pairs: Vec<(String, f64)> = doc
            .weights
            .iter()
            .map(|(name, w)| (name.clone(), *w))
            .collect();
        let model = LinearThresholdModel::from_pairs(&pairs, doc.threshold, &output)?;
        Ok(Some(model))
    }
}

pub fn read_schema_doc(path: &Path) -> Result<SchemaDoc> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read schema config {}", path.display()))?;
    let doc: SchemaDoc = toml::from_str(&text)
        .with_context(|| format!("cannot parse schema config {}", path.display()))?;
    Ok(doc)
}

// ── Data CSV ingestion ────────────────────────────────────────────────

/// Load a data CSV through the schema's ingest hooks: header aliasing
/// (case-insensitive), string-value coding, and column scaling.
pub fn read_data(path: &Path, ingest: Option<&IngestDoc>) -> Result<Dataset> {
    let headers = {
        let file = fs::File::open(path)
            .with_context(|| format!("cannot open data file {}", path.display()))?;
        let mut rdr = csv::Reader::from_reader(file);
        rdr.headers()
            .with_context(|| format!("cannot read CSV header of {}", path.display()))?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>()
    };

    let canonical_of = |raw: &str| -> String {
        if let Some(ingest) = ingest {
            for (alias, canonical) in &ingest.aliases {
                if alias.eq_ignore_ascii_case(raw) {
                    return canonical.clone();
                }
            }
        }
        raw.to_string()
    };

    // value maps are declared against canonical names; key them by raw header
    let mut maps = ValueMaps::default();
    if let Some(ingest) = ingest {
        for raw in &headers {
            let canonical = canonical_of(raw);
            if let Some(map) = ingest
                .value_maps
                .get(&canonical)
                .or_else(|| ingest.value_maps.get(raw))
            {
                maps.0.insert(raw.clone(), map.clone());
            }
        }
    }

    let file = fs::File::open(path)
        .with_context(|| format!("cannot open data file {}", path.display()))?;
    let mut data = Dataset::read_csv(file, &maps)
        .with_context(|| format!("cannot parse data file {}", path.display()))?;

    for raw in &headers {
        let canonical = canonical_of(raw);
        if &canonical != raw {
            data.rename_column(raw, canonical)?;
        }
    }
    if let Some(ingest) = ingest {
        for (column, factor) in &ingest.scale {
            let scaled: Vec<f64> = data.column(column)?.iter().map(|v| v * factor).collect();
            data.insert_column(column.clone(), scaled)?;
        }
    }
    Ok(data)
}

// ── Latents file ──────────────────────────────────────────────────────

pub fn read_latents(path: &Path) -> Result<LatentRecord> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read latents file {}", path.display()))?;
    let latents: LatentRecord = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse latents file {}", path.display()))?;
    Ok(latents)
}

pub fn write_latents(path: &Path, latents: &LatentRecord) -> Result<()> {
    let text = serde_json::to_string(latents).context("cannot serialize latents")?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

// ── Audit config file ─────────────────────────────────────────────────

/// Optional config file; command-line flags override these values, which in
/// turn override the built-in defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigFile {
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub include_centers: Option<bool>,
    pub variance_mode: Option<cst_core::detection::VarianceMode>,
    pub abduction: Option<cst_core::scm::AbductionMode>,
    pub max_distance: Option<f64>,
    pub normalization: Option<cst_core::metric::Normalization>,
}

pub fn read_config_file(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let cfg: ConfigFile = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    Ok(cfg)
}
