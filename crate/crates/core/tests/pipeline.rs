use std::fs;

use enrich_core::analysis::{table_from_json, Cell};
use enrich_core::config::PipelineConfig;
use enrich_core::pipeline::run_pipeline;
use enrich_core::synthetic::{generate, SynthConfig};

#[test]
fn synthetic_pipeline_produces_reports() {
    let dir = tempfile::tempdir().unwrap();
    let written = generate(&SynthConfig::default()).unwrap().write(dir.path()).unwrap();
    let cfg = PipelineConfig::load(&written.config).unwrap();
    let out = run_pipeline(&cfg).unwrap();

    assert_eq!(out.reports.len(), 10);
    let stance = out.reports.iter().find(|r| r.attribute == "Against/For").unwrap();
    assert!(stance.mean > 0.8, "{}", stance.mean_std());
    assert!(stance.overall.unwrap() >= stance.mean);
    for t in &out.tables {
        assert!(t.exists(), "{}", t.display());
    }
    assert_eq!(out.summary.total(), 2000);

    // the generator makes men likelier to be Against; predicted labels keep that
    let dist = table_from_json(&fs::read_to_string(dir.path().join("out/distribution.json")).unwrap()).unwrap();
    let against = dist.header.iter().position(|h| h == "Against").unwrap();
    let share = |label: &str| {
        let row = dist.rows.iter().find(|r| r[0] == Cell::Text(label.into())).unwrap();
        match row[against] {
            Cell::Proportion(p) => p,
            ref other => panic!("{other:?}"),
        }
    };
    assert!(share("Gender=Male") > share("Gender=Female"));
}
