use zeroswap::experiment::config::{parse_config, ExperimentConfig, Overrides};
use zeroswap::experiment::csvio::record_to_csv;
use zeroswap::experiment::runner::{run_experiment, run_seeds};
use zeroswap::metrics::{mean_mid_deviation, percent_loss_per_trade};
use zeroswap::{two_point_quote_oracle, TradeEvent};

fn cfg(text: &str) -> ExperimentConfig {
    parse_config(text, &Overrides::default()).unwrap()
}

#[test]
fn same_seed_gives_identical_csv() {
    for policy in ["bayes", "qtable", "oracle", "dqn"] {
        let c = cfg(&format!("policy = \"{policy}\"\nT = 600\n[dqn]\nhidden = [8]\nwarmup = 50\n"));
        let a = record_to_csv(&run_experiment(&c, 42).unwrap());
        let b = record_to_csv(&run_experiment(&c, 42).unwrap());
        assert_eq!(a, b, "{policy}");
        assert_ne!(a, record_to_csv(&run_experiment(&c, 43).unwrap()), "{policy}");
    }
}

#[test]
fn parallel_seeds_match_sequential_runs() {
    let c = cfg("policy = \"qtable\"\nT = 300\nseeds = 6\nbase_seed = 100");
    let par = run_seeds(&c).unwrap();
    for (i, r) in par.iter().enumerate() {
        assert_eq!(*r, run_experiment(&c, 100 + i as u64).unwrap());
    }
}

#[test]
fn two_point_bayes_quotes_follow_the_closed_form() {
    let c = cfg(
        "policy = \"bayes\"\nscenario = \"two_point_jump\"\nalpha = 0.7\ninitial_price = 100\n\
         jump_low = 90\njump_high = 110\njump_low_weight = 0.3\nT = 40",
    );
    for seed in 0..20 {
        let r = run_experiment(&c, seed).unwrap();
        let (mut buys, mut sells) = (0, 0);
        for row in &r.rows {
            let want = two_point_quote_oracle(90, 110, 0.3, 0.7, buys, sells);
            // far into a run the losing price carries under 1e-12 mass and is trimmed
            if want.spread() < 1e-6 {
                break;
            }
            assert!((row.ask - want.ask).abs() < 1e-9, "seed {seed} slot {}", row.t);
            assert!((row.bid - want.bid).abs() < 1e-9, "seed {seed} slot {}", row.t);
            match row.event {
                TradeEvent::Buy => buys += 1,
                TradeEvent::Sell => sells += 1,
                _ => {}
            }
        }
    }
}

#[test]
fn bayes_loss_is_small_on_a_short_run() {
    let c = cfg("policy = \"bayes\"\nalpha = 0.9\nsigma = 0.5\nT = 20000\nseeds = 8");
    let losses: Vec<f64> = run_seeds(&c).unwrap().iter().map(|r| percent_loss_per_trade(r).unwrap()).collect();
    let m = losses.iter().sum::<f64>() / losses.len() as f64;
    assert!(m.abs() < 0.1, "mean loss {m}");
}

#[test]
#[ignore = "both learners drift away from the price at the default settings; see README"]
fn dqn_tracks_like_the_table_agent() {
    let base = "alpha = 0.9\nsigma = 0.5\nT = 20000\nseeds = 8\n";
    let dev = |policy: &str| {
        let runs = run_seeds(&cfg(&format!("policy = \"{policy}\"\n{base}"))).unwrap();
        runs.iter().map(mean_mid_deviation).sum::<f64>() / runs.len() as f64
    };
    let (dqn, table) = (dev("dqn"), dev("qtable"));
    assert!(dqn <= 2.0 * table, "dqn {dqn} vs table {table}");
}
