use pricebeam::experiment::{read_beams, run_convergence, validate_config, write_beams};
use pricebeam::game::network_utility;
use pricebeam::network::generate_scenario;

#[test]
fn dumped_beams_reload_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [1u64, 2, 3] {
        let mut cfg = validate_config(r#"{"utility": {"kind": "prop_fair"}, "scenario": {"M": 3}}"#).unwrap();
        cfg.scenario.seed = seed;
        let run = run_convergence(&cfg).unwrap();
        let path = dir.path().join(format!("beams{seed}.csv"));
        write_beams(&path, &run.state.w).unwrap();
        let back = read_beams(&path, cfg.scenario.dims()).unwrap();
        assert_eq!(back, run.state.w);
        let (_, ch) = generate_scenario(&cfg.scenario).unwrap();
        assert_eq!(network_utility(&cfg.utility, &back, &ch), run.state.network_utility());
    }
}

#[test]
fn truncated_dump_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(r#"{"scenario": {"M": 2, "N": 1}}"#).unwrap();
    let run = run_convergence(&cfg).unwrap();
    let path = dir.path().join("beams.csv");
    write_beams(&path, &run.state.w).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut: Vec<&str> = text.lines().collect();
    std::fs::write(&path, cut[..cut.len() - 1].join("\n")).unwrap();
    assert!(read_beams(&path, cfg.scenario.dims()).is_err());
}
