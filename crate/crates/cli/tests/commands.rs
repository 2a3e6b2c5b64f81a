use qskat::commands::{self, Format};
use qskat::session::SessionMode;
use qskat_core::gates::EvolutionMode;

#[test]
fn toy_stages_have_expected_support() {
    for (stage, support) in [
        ("initial", 6),
        ("a-played", 12),
        ("b-played", 24),
        ("trick1", 24),
        ("final", 8),
    ] {
        let out = commands::toy(1000, 3, stage, EvolutionMode::PaperExact).unwrap();
        assert_eq!(out.json["support"], support, "{stage}");
        let total: u64 = out.json["histogram"]["counts"]
            .as_object()
            .unwrap()
            .values()
            .map(|v| v.as_u64().unwrap())
            .sum();
        assert_eq!(total, 1000);
    }
}

#[test]
fn toy_histogram_is_seeded() {
    let a = commands::toy(500, 11, "final", EvolutionMode::PaperExact).unwrap();
    let b = commands::toy(500, 11, "final", EvolutionMode::PaperExact).unwrap();
    assert_eq!(a.json["histogram"], b.json["histogram"]);
    assert!(commands::toy(10, 0, "nowhere", EvolutionMode::PaperExact).is_err());
}

#[test]
fn deals_table_rows() {
    let out = commands::deals(None).unwrap();
    let csv = out.render(Format::Csv, false).unwrap();
    assert!(csv.starts_with("name,deals\n"));
    assert!(csv.contains("full,2753294408504640\n"));
    assert!(csv.contains("known-hand,42678636\n"));
    assert!(csv.contains("toy,6\n"));
    assert!(csv.contains("reduced-3,92400\n"));
}

#[test]
fn showcase_recommends_queen() {
    let out = commands::showcase().unwrap();
    assert_eq!(out.json["recommended"], "HQ");
    assert_eq!(out.json["unbeatable_deals"].as_array().unwrap().len(), 1);
    let csv = out.render(Format::Csv, false).unwrap();
    assert!(csv.contains("HQ,11,12,"));
}

#[test]
fn recommend_reads_fixture() {
    let scenario = serde_json::from_str(include_str!("../fixtures/showcase.json")).unwrap();
    let out = commands::recommend(scenario, SessionMode::PaperExact).unwrap();
    assert_eq!(out.json["recommended"], "HQ");
    assert!(out.json["quantum"]["random_play_p_win"].is_number());
}

#[test]
fn qcount_default_precision() {
    let out = commands::qcount(7).unwrap();
    assert_eq!(out.json["y"], 27);
    let est = out.json["estimate"].as_f64().unwrap();
    assert!((est - 6.0).abs() <= out.json["error_bound"].as_f64().unwrap());
}

#[test]
fn payoff_break_evens() {
    let plain = commands::payoff(false, 11).unwrap();
    assert!((plain.json["break_even"]["G"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let sf = commands::payoff(true, 11).unwrap();
    let g = sf.json["break_even"]["G"].as_f64().unwrap();
    assert!((g - 146.0 / 244.0).abs() < 1e-12, "{g}");
    let csv = sf.render(Format::Csv, false).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11 * 5);
}

#[test]
fn bench_reports_rows() {
    let out = commands::bench(2, 3, 2, 1).unwrap();
    let csv = out.render(Format::Csv, false).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "cards,deals,samples,time_per_game_s,total_s");
    assert!(lines[1].starts_with("2,2520,2,"));
    assert!(lines[2].starts_with("3,92400,2,"));
    assert!(commands::bench(3, 2, 1, 0).is_err());
}
