// scratch driver: desk-scale criterion sweeps at candidate defaults
use nimiwae::experiment::{run_experiment, DataSource, ExperimentPlan, Method};
use nimiwae::simulate::Mechanism;
use nimiwae::train::TrainConfig;

fn median(v: &mut Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args[1].parse().unwrap();
    let bs: usize = args[2].parse().unwrap();
    let mechs: Vec<Mechanism> = args[3].split(',').map(|s| s.parse().unwrap()).collect();
    let seeds: Vec<u64> = args[4].split(',').map(|s| s.parse().unwrap()).collect();
    let mech_labels: Vec<String> = mechs.iter().map(|m| m.to_string()).collect();

    let plan = ExperimentPlan {
        data: DataSource::Simulate { n: 2000, p: 8, d: 2 },
        methods: vec![Method::Nimiwae, Method::Imiwae, Method::Mean],
        seeds,
        mechanisms: mechs,
        pcts: vec![25.0],
        base_train: TrainConfig { lr, bs, ..Default::default() },
        grid: None,
        eval_k: 20,
        eval_m: 20,
    };
    let bundle = run_experiment(&plan).unwrap();
    for mech in &mech_labels {
        let mut by = std::collections::BTreeMap::new();
        for c in bundle.cells.iter().filter(|c| &c.mechanism == mech) {
            assert_eq!(c.status, "ok", "{mech}: {}", c.status);
            by.entry(c.method.clone()).or_insert_with(Vec::new).push(c.avg_l1.unwrap());
        }
        let nim = median(by.get_mut("nimiwae").unwrap());
        let imi = median(by.get_mut("imiwae").unwrap());
        let mean = median(by.get_mut("mean").unwrap());
        let comp = (nim - imi).abs() / nim.min(imi);
        let gap = (imi - nim) / imi;
        println!(
            "lr={lr} bs={bs} {mech}: nim {nim:.3} imi {imi:.3} mean {mean:.3} | comp {:.1}% gap {:.1}%",
            100.0 * comp, 100.0 * gap
        );
    }
}
