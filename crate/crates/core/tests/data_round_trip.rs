use netfair::data_io::{load_dataset, load_generated, save_generated, DatasetManifest, META_FILE, NODES_FILE};
use netfair::nscm::{generate_semi_synthetic, BaseTable, GenConfig};
use std::fs;
use std::path::Path;

fn generated(n: usize) -> (GenConfig, netfair::nscm::SemiSynthetic) {
    let cfg = GenConfig { n, ..GenConfig::preset("d1", 3).unwrap() };
    let data = generate_semi_synthetic(&BaseTable::credit_like(cfg.n, cfg.base_seed), &cfg).unwrap();
    (cfg, data)
}

#[test]
fn generated_dataset_survives_save_and_load() {
    let (cfg, data) = generated(120);
    let dir = tempfile::tempdir().unwrap();
    save_generated(dir.path(), &data.graph, &data.table, &cfg, &data.spec).unwrap();
    let back = load_generated(dir.path()).unwrap();

    assert_eq!(back.graph.edges(), data.graph.edges());
    assert_eq!(back.table.s, data.table.s);
    assert_eq!(back.table.y, data.table.y);
    assert_eq!(back.table.x, data.table.x);
    assert_eq!(back.table.z, data.table.z);
    assert_eq!(back.table.x_names, data.table.x_names);
    assert_eq!(back.table.interventional, data.table.interventional);
    assert_eq!(back.meta.config, cfg);
    assert_eq!(back.meta.spec, data.spec);
}

#[test]
fn tampered_header_is_rejected() {
    let (cfg, data) = generated(30);
    let dir = tempfile::tempdir().unwrap();
    save_generated(dir.path(), &data.graph, &data.table, &cfg, &data.spec).unwrap();
    let path = dir.path().join(NODES_FILE);
    let text = fs::read_to_string(&path).unwrap().replacen("id,s", "id,sex", 1);
    fs::write(&path, text).unwrap();
    assert!(load_generated(dir.path()).is_err());
    fs::remove_file(dir.path().join(META_FILE)).unwrap();
    assert!(load_generated(dir.path()).is_err());
}

fn write_credit_like(dir: &Path, rows: usize) {
    let mut nodes = String::from("sex,education,marriage,age,limit_bal,pay_0,bill_amt1,default\n");
    for i in 0..rows {
        let sex = if i % 3 == 0 { 2 } else { 1 };
        nodes.push_str(&format!(
            "{sex},{},{},{},{},{},{},{}\n",
            1 + i % 4,
            1 + i % 2,
            21 + (i * 7) % 40,
            10_000 * (1 + i % 9),
            (i % 5) as i64 - 2,
            (i * 131) % 5000,
            u8::from(i % 4 == 1)
        ));
    }
    fs::write(dir.join("credit.csv"), nodes).unwrap();
    let mut edges = String::from("src,dst\n");
    for i in 0..rows {
        edges.push_str(&format!("{},{}\n", i, (i * 5 + 1) % rows));
    }
    fs::write(dir.join("credit_edges.csv"), edges).unwrap();
}

const MANIFEST: &str = r#"
name = "credit"
node_file = "credit.csv"
edge_file = "credit_edges.csv"
sensitive_column = "sex"
sensitive_positive = "2"
label_column = "default"
z_columns = ["education", "marriage", "age"]
feature_columns = ["limit_bal", "pay_0", "bill_amt1"]
categorical_columns = ["education"]
"#;

#[test]
fn ingestion_is_deterministic_and_encodes_roles() {
    let dir = tempfile::tempdir().unwrap();
    write_credit_like(dir.path(), 90);
    let manifest = DatasetManifest::from_toml(MANIFEST, Path::new("credit.toml")).unwrap();
    let a = load_dataset(&manifest, dir.path()).unwrap();
    let b = load_dataset(&manifest, dir.path()).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.graph.edges(), b.graph.edges());

    assert_eq!(a.table.n(), 90);
    assert_eq!(a.table.s.iter().filter(|&&s| s == 1).count(), 30);
    assert_eq!(a.table.z_names.len(), 4 + 1 + 1);
    assert_eq!(a.table.x.cols(), 3);
    for c in 0..a.table.x.cols() {
        let col: Vec<f64> = (0..90).map(|i| a.table.x.get(i, c)).collect();
        assert!(netfair::stats::mean(&col).abs() < 1e-9);
    }
    assert!(a.graph.num_edges() > 0);
}
