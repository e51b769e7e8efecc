//! Implementations of the `generate`, `audit`, and `compare` subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use cst_core::data::Dataset;
use cst_core::detection::{
    run_cf, run_cst, run_st, AuditConfig, DiscriminationReport, VarianceMode,
};
use cst_core::metric::{AttributeSchema, DistanceSpec, Normalization};
use cst_core::model::LinearThresholdModel;
use cst_core::report::{count_percent, write_report_csv};
use cst_core::scenarios::{
    generate_law_school_synthetic, generate_loan, group_share, rejection_rate, ScenarioData,
};
use cst_core::scm::{
    generate_counterfactual_dataset, AbductionMode, CounterfactualDataset, Intervention,
    LatentRecord, Scm,
};

use crate::manifest::RunManifest;
use crate::spec_files::{
    read_config_file, read_data, read_latents, read_schema_doc, read_scm, write_latents,
    write_scm,
};
use crate::{AuditArgs, MethodArg};

/// Format with 4 significant digits (stdout display; files keep full precision).
fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (3 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

// ── generate ──────────────────────────────────────────────────────────

pub fn generate(scenario: &str, n: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let (prefix, data): (&str, ScenarioData) = match scenario {
        "loan" => ("loan", generate_loan(n, seed)?),
        "law-school" | "law_school" => ("law_school", generate_law_school_synthetic(n, seed)?),
        other => bail!("unknown scenario '{other}' (expected 'loan' or 'law-school')"),
    };
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let data_path = out_dir.join(format!("{prefix}_data.csv"));
    let latents_path = out_dir.join(format!("{prefix}_latents.json"));
    let scm_path = out_dir.join(format!("{prefix}_scm.toml"));

    let file = fs::File::create(&data_path)
        .with_context(|| format!("cannot create {}", data_path.display()))?;
    data.dataset.write_csv(file)?;
    write_latents(&latents_path, &data.latents)?;
    write_scm(&scm_path, &data.scm)?;

    println!("wrote {}", data_path.display());
    println!("wrote {}", latents_path.display());
    println!("wrote {}", scm_path.display());

    // summary statistics per protected group
    let schema = match prefix {
        "loan" => cst_core::scenarios::loan_schema(),
        _ => cst_core::scenarios::law_schema(),
    };
    println!("records: {}", data.dataset.n_rows());
    for attr in schema.protected() {
        let value = attr.protected_value.unwrap_or(1.0);
        let share = group_share(&data.dataset, &attr.name, value)?;
        let protected_rate = rejection_rate(&data.dataset, &schema, Some((&attr.name, value)))?;
        let other_rate = rejection_rate(&data.dataset, &schema, Some((&attr.name, 1.0 - value)))?;
        println!(
            "{name}={value} share: {}%  rejection {name}={value}: {}%  {name}={}: {}%",
            sig4(100.0 * share),
            sig4(100.0 * protected_rate),
            1.0 - value,
            sig4(100.0 * other_rate),
            name = attr.name,
        );
    }
    Ok(())
}

// ── shared audit plumbing ─────────────────────────────────────────────

struct LoadedAudit {
    data: Dataset,
    schema: AttributeSchema,
    classifier: Option<LinearThresholdModel>,
    scm: Option<Scm>,
    intervention: Option<Intervention>,
    latents: Option<LatentRecord>,
    abduction: AbductionMode,
    config: AuditConfig,
}

fn load_audit(args: &AuditArgs) -> Result<LoadedAudit> {
    let file_cfg = match &args.config {
        Some(path) => read_config_file(path)?,
        None => Default::default(),
    };
    let schema_doc = read_schema_doc(&args.schema)?;
    let schema = schema_doc.schema();
    let classifier = schema_doc.classifier()?;
    let data = read_data(&args.data, schema_doc.ingest.as_ref())?;

    let intervention = match &args.intervention {
        Some(text) => Some(text.parse::<Intervention>()?),
        None => None,
    };
    let scm = match &args.scm {
        Some(path) => Some(read_scm(path)?),
        None => None,
    };
    let latents = match &args.latents {
        Some(path) => Some(read_latents(path)?),
        None => None,
    };

    // command line > config file > defaults
    let defaults = AuditConfig::default();
    let normalization = if args.no_normalize {
        Normalization::None
    } else {
        file_cfg.normalization.unwrap_or_default()
    };
    let config = AuditConfig {
        k: args.k.or(file_cfg.k).unwrap_or(defaults.k),
        alpha: args.alpha.or(file_cfg.alpha).unwrap_or(defaults.alpha),
        tau: args.tau.or(file_cfg.tau).unwrap_or(defaults.tau),
        include_centers: args.include_centers
            || file_cfg.include_centers.unwrap_or(defaults.include_centers),
        variance_mode: args
            .variance_mode
            .map(VarianceMode::from)
            .or(file_cfg.variance_mode)
            .unwrap_or(defaults.variance_mode),
        max_distance: args.max_distance.or(file_cfg.max_distance),
        distance: DistanceSpec { normalization },
        intervention: intervention.clone(),
    };
    let abduction = args
        .abduction
        .map(AbductionMode::from)
        .or(file_cfg.abduction)
        .unwrap_or(AbductionMode::Residual);

    Ok(LoadedAudit {
        data,
        schema,

        classifier,
        scm,
        intervention,
        latents,
        abduction,
        config,
    })
}

impl LoadedAudit {
    /// Build the counterfactual dataset for cst/cf methods.
    fn counterfactual(&self) -> Result<CounterfactualDataset> {
        let scm = self
            .scm
            .as_ref()
            .context("SCM spec required for counterfactual methods (pass --scm)")?;
        let intervention = self
            .intervention
            .as_ref()
            .context("--intervention required for counterfactual methods")?;
        let classifier = self.classifier.as_ref().context(
            "classifier required for counterfactual methods (add a [classifier] block to the schema config)",
        )?;
        if self.abduction == AbductionMode::Oracle && self.latents.is_none() {
            bail!("oracle abduction requires --latents");
        }
        let cf = generate_counterfactual_dataset(
            scm,
            &self.data,
            intervention,
            classifier,
            self.abduction,
            self.latents.as_ref(),
        )?;
        Ok(cf)
    }

    fn snapshot(&self, manifest: &mut RunManifest, args: &AuditArgs) -> Result<()> {
        manifest.set("k", self.config.k);
        manifest.set("alpha", self.config.alpha);
        manifest.set("tau", self.config.tau);
        manifest.set("include_centers", self.config.include_centers);
        manifest.set(
            "variance_mode",
            match self.config.variance_mode {
                VarianceMode::AsWritten => "as-written",
                VarianceMode::StandardSum => "standard-sum",
            },
        );
        manifest.set(
            "abduction",
            match self.abduction {
                AbductionMode::Oracle => "oracle",
                AbductionMode::Residual => "residual",
            },
        );
        manifest.set(
            "normalization",
            match self.config.distance.normalization {
                Normalization::DatasetMinMax => "dataset-min-max",
                Normalization::None => "none",
            },
        );
        manifest.set_opt("max_distance", self.config.max_distance);
        manifest.set_opt("intervention", self.intervention.as_ref());
        manifest.add_input(&args.data)?;
        manifest.add_input(&args.schema)?;
        if let Some(path) = &args.scm {
            manifest.add_input(path)?;
        }
        if let Some(path) = &args.latents {
            manifest.add_input(path)?;
        }
        if let Some(path) = &args.config {
            manifest.add_input(path)?;
        }
        Ok(())
    }
}

fn emit_diagnostics(report: &DiscriminationReport) {
    for line in report.diagnostics() {
        eprintln!("warning: {line}");
    }
}

// ── audit ─────────────────────────────────────────────────────────────

pub fn audit(args: &AuditArgs, method: MethodArg, out: &Path, jobs: Option<usize>) -> Result<()> {
    let loaded = load_audit(args)?;
    let report = match method {
        MethodArg::St => {
            if args.include_centers {
                eprintln!("warning: standard situation testing always excludes the search centers");
            }
            run_st(&loaded.data, &loaded.schema, &loaded.config)?
        }
        MethodArg::Cst => {
            let cf = loaded.counterfactual()?;
            run_cst(&loaded.data, &cf, &loaded.schema, &loaded.config)?
        }
        MethodArg::Cf => {
            let cf = loaded.counterfactual()?;
            run_cf(&loaded.data, &cf, &loaded.schema)?
        }
    };
    emit_diagnostics(&report);

    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let file =
        fs::File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_report_csv(&report, file)?;

    let mut manifest = RunManifest::new("audit");
    manifest.set(
        "method",
        match method {
            MethodArg::Cst => "cst",
            MethodArg::St => "st",
            MethodArg::Cf => "cf",
        },
    );
    manifest.set_opt("jobs", jobs);
    manifest.set("out", out.display());
    loaded.snapshot(&mut manifest, args)?;
    let manifest_path = manifest.write_alongside(out)?;

    let label = report.summary.method.label(report.summary.include_centers);
    if report.summary.k > 0 {
        println!("{label} k={}: {}", report.summary.k, count_percent(&report));
    } else {
        println!("{label}: {}", count_percent(&report));
    }
    println!(
        "significant: {} of {} complainants",
        report.summary.significant, report.summary.complainants
    );
    println!("report: {}", out.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

// ── compare ───────────────────────────────────────────────────────────

pub fn compare(
    args: &AuditArgs,
    k_grid: &str,
    out: Option<&Path>,
    jobs: Option<usize>,
) -> Result<()> {
    let loaded = load_audit(args)?;
    let ks: Vec<usize> = k_grid
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .with_context(|| format!("bad k value '{part}'"))
        })
        .collect::<Result<_>>()?;
    if ks.is_empty() {
        bail!("empty k grid");
    }
    let cf = loaded.counterfactual()?;

    let mut without_row = Vec::new();
    let mut st_row = Vec::new();
    let mut with_row = Vec::new();
    let mut containments = Vec::new();
    for &k in &ks {
        let cfg = AuditConfig {
            k,
            include_centers: false,
            ..loaded.config.clone()
        };
        let without = run_cst(&loaded.data, &cf, &loaded.schema, &cfg)?;
        let st = run_st(&loaded.data, &loaded.schema, &cfg)?;
        let with_cfg = AuditConfig {
            include_centers: true,
            ..cfg
        };
        let with = run_cst(&loaded.data, &cf, &loaded.schema, &with_cfg)?;

        let st_set: BTreeSet<usize> = st.discriminated_indices().into_iter().collect();
        let with_set: BTreeSet<usize> = with.discriminated_indices().into_iter().collect();
        containments.push((k, st_set, with_set));
        without_row.push(count_percent(&without));
        st_row.push(count_percent(&st));
        with_row.push(count_percent(&with));
    }
    let cf_report = run_cf(&loaded.data, &cf, &loaded.schema)?;
    let cf_set: BTreeSet<usize> = cf_report.discriminated_indices().into_iter().collect();
    let cf_cell = count_percent(&cf_report);

    // 4-method × k-grid table
    let header: Vec<String> = std::iter::once("method".to_string())
        .chain(ks.iter().map(|k| format!("k={k}")))
        .collect();
    let rows: Vec<(String, Vec<String>)> = vec![
        ("CST (w/o)".into(), without_row),
        ("ST".into(), st_row),
        ("CST".into(), with_row),
        ("CF".into(), vec![cf_cell; ks.len()]),
    ];
    let width = 14usize;
    println!(
        "{}",
        header
            .iter()
            .map(|h| format!("{h:<width$}"))
            .collect::<String>()
    );
    for (name, cells) in &rows {
        let mut line = format!("{name:<width$}");
        for cell in cells {
            line.push_str(&format!("{cell:<width$}"));
        }
        println!("{line}");
    }
    for (k, st_set, with_set) in &containments {
        println!(
            "containment k={k}: |ST∩CST|={}/{}  |CF∩CST|={}/{}",
            st_set.intersection(with_set).count(),
            st_set.len(),
            cf_set.intersection(with_set).count(),
            cf_set.len()
        );
    }

    if let Some(out) = out {
        if let Some(dir) = out.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut wtr = csv::Writer::from_path(out)
            .with_context(|| format!("cannot create {}", out.display()))?;
        wtr.write_record(&header)?;
        for (name, cells) in &rows {
            let mut record = vec![name.clone()];
            record.extend(cells.iter().cloned());
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        let mut manifest = RunManifest::new("compare");
        manifest.set("k_grid", k_grid);
        manifest.set_opt("jobs", jobs);
        manifest.set("out", out.display());
        loaded.snapshot(&mut manifest, args)?;
        manifest.write_alongside(out)?;
        println!("table: {}", out.display());
    }
    Ok(())
}
