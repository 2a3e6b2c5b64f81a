use qskat_core::encoding::parse_cards;
use qskat_core::oracle::{showcase_scenario, solve_deal, Advisor, PlayState};
use qskat_core::{Card, GameType, Suit};

fn c(s: &str) -> Card {
    s.parse().unwrap()
}

fn scenario_total(declarer: &str, partner: &str, lead: &str) -> u32 {
    let hands = vec![
        parse_cards("H10 HQ H7").unwrap(),
        parse_cards(partner).unwrap(),
        parse_cards(declarer).unwrap(),
    ];
    let mut st = PlayState::new(GameType::Suit(Suit::Spades), hands, 0, 2).with_points(42, 48);
    st.play(0, c(lead)).unwrap();
    solve_deal(&st).unwrap().defender_points
}

#[test]
fn quality_table() {
    let advisor = Advisor::new(showcase_scenario()).unwrap();
    let q: Vec<(String, usize, usize)> = advisor
        .qualities()
        .unwrap()
        .into_iter()
        .map(|r| (r.card, r.q_bar, r.deals_total))
        .collect();
    assert_eq!(
        q,
        vec![
            ("H10".to_string(), 6, 12),
            ("HQ".to_string(), 11, 12),
            ("H7".to_string(), 9, 12)
        ]
    );
    assert_eq!(advisor.report().unwrap().recommended.as_deref(), Some("HQ"));
}

#[test]
fn scenario_point_totals() {
    let a = ("CJ SJ H8", "HJ S7 HA");
    let b = ("HJ S7 HA", "CJ SJ H8");
    assert_eq!(scenario_total(a.0, a.1, "H10"), 69);
    assert_eq!(scenario_total(a.0, a.1, "H7"), 59);
    assert_eq!(scenario_total(b.0, b.1, "H7"), 67);
    assert_eq!(scenario_total(b.0, b.1, "H10"), 57);
    assert_eq!(scenario_total(a.0, a.1, "HQ"), 62);
    assert_eq!(scenario_total(b.0, b.1, "HQ"), 64);
}

#[test]
fn single_unbeatable_deal() {
    let advisor = Advisor::new(showcase_scenario()).unwrap();
    let lost = advisor.unbeatable_deals().unwrap();
    assert_eq!(lost.len(), 1);
    let mut declarer = lost[0][&2].clone();
    declarer.sort();
    let mut expected = parse_cards("CJ SJ HA").unwrap();
    expected.sort();
    assert_eq!(declarer, expected);
}

#[test]
fn recording_a_play_shrinks_the_belief_set() {
    let mut advisor = Advisor::new(showcase_scenario()).unwrap();
    advisor.play(0, c("HQ")).unwrap();
    // partner follows with a heart or shows a void
    advisor.play(1, c("HA")).unwrap();
    assert!(advisor.deals_total() < 12);
    assert!(advisor.play(2, c("H10")).is_err());
}
