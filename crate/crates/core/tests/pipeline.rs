//! CSV in, partition files, training, checkpoint, synthetic CSV out.

use vpmix::checkpoint::Checkpoint;
use vpmix::data::{export_synthetic, ingest, read_partition, split_partitioned, write_csv, write_partition, CsvTable, Schema};
use vpmix::fixtures::five_component;
use vpmix::model::PriorSpec;
use vpmix::trainer::{train_vpd, TrainConfig};

#[test]
fn end_to_end_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let fx = five_component(300, 0, 21);
    let input = dir.path().join("input.csv");
    let mut bytes = Vec::new();
    write_csv(&mut bytes, &fx.train, &fx.schema).unwrap();
    std::fs::write(&input, &bytes).unwrap();
    let schema_path = dir.path().join("schema.toml");
    std::fs::write(&schema_path, fx.schema.to_toml()).unwrap();

    let schema = Schema::load(&schema_path).unwrap();
    let table = CsvTable::read(&input).unwrap();
    let parts = dir.path().join("parts");
    let manifest = write_partition(&table, &schema, &parts).unwrap();
    assert_eq!(manifest.n_rows, 300);

    let (schema, data) = read_partition(&parts).unwrap();
    assert_eq!(data.join(), ingest(&input, &schema).unwrap());
    let (train, test) = split_partitioned(&data, 0.2, 5).unwrap();
    assert_eq!((train.n_rows, test.n_rows), (240, 60));

    let spec = schema.mixture_spec(3, PriorSpec::default());
    let cfg = TrainConfig { iterations: 20, batch: 40, seed: 8, ..Default::default() };
    let out = train_vpd(&cfg, &spec, &train, Some(&test.join())).unwrap();
    assert!(out.metrics.iter().all(|m| m.test_nll.is_some_and(f64::is_finite)));

    let final_nll = out.final_metric().map(|m| m.train_nll);
    let mut ck = Checkpoint::new(spec, Some(schema.clone()), out.xi, "vpd", Some(cfg));
    ck.final_train_nll = final_nll;
    let ck_path = dir.path().join("checkpoint.json");
    ck.save(&ck_path).unwrap();
    let back = Checkpoint::load(&ck_path).unwrap();
    assert_eq!(back, ck);

    let synth = back.generate(100, 1).unwrap();
    let out_csv = dir.path().join("synthetic.csv");
    export_synthetic(&synth, &schema, &out_csv).unwrap();
    let reread = ingest(&out_csv, &schema).unwrap();
    assert_eq!(reread.n_rows, 100);
    reread.validate(&back.spec).unwrap();
}
