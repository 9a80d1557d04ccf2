use super::*;
use crate::market::{generate_synthetic_market, ErrorFamily, GeneratorSpec, SizeBinConfig};
use crate::profit::expected_profit;

fn types(t: &[(u32, f64)], sigma: f64, costs: CostParams) -> Market {
    Market::from_types(t, sigma, ErrorFamily::Logistic, costs, SizeBinConfig::default())
}

fn reference_costs() -> CostParams {
    CostParams::new(3630.0, 760.0).unwrap()
}

fn small_market(n: usize, seed: u64) -> Market {
    generate_synthetic_market(&GeneratorSpec::reference(n), seed).unwrap().market
}

fn fast() -> OptimizeConfig {
    OptimizeConfig {
        points_per_dim: 3,
        ..Default::default()
    }
}

#[test]
fn first_degree_point_mass_examples() {
    let none = first_degree(&types(&[(10, 1000.0)], 0.0, reference_costs())).unwrap();
    assert_eq!(none.profit, 0.0);
    let sale = first_degree(&types(&[(10, 2000.0)], 0.0, reference_costs())).unwrap();
    assert_eq!(sale.profit, 8770.0);
    assert_eq!(sale.consumer_welfare, 0.0);
    assert_eq!(sale.social_welfare, sale.profit);
    assert_eq!(sale.revenue, 20000.0);
}

#[test]
fn first_degree_matches_monte_carlo() {
    for family in [ErrorFamily::Logistic, ErrorFamily::Normal] {
        let m = Market::from_types(
            &[(3, 1800.0), (12, 2200.0), (40, 1500.0)],
            400.0,
            family,
            reference_costs(),
            SizeBinConfig::default(),
        );
        let exact = first_degree(&m).unwrap().profit;
        let (mc, se) = first_degree_mc(&m, 100_000, 5).unwrap();
        assert!((exact - mc).abs() < 4.0 * se, "{family:?}: {exact} vs {mc} ({se})");
    }
}

#[test]
fn first_degree_dominates_posted_prices() {
    let m = small_market(80, 3);
    let fd = first_degree(&m).unwrap().profit;
    for rate in [500.0, 1500.0, 2500.0] {
        let p = PriceSchedule::linear(rate).unwrap();
        assert!(fd >= expected_profit(&m, &p).unwrap().expected_profit);
    }
}

#[test]
fn third_degree_single_bin_is_linear() {
    let m = types(&[(2, 2000.0), (5, 2600.0), (9, 1900.0)], 300.0, reference_costs());
    let t = third_degree_by_size(&m, &fast()).unwrap();
    let lin = optimize_schedule(&m, ScheduleFamily::Linear, &fast()).unwrap();
    assert!((t.profit - lin.report.expected_profit).abs() < 1e-9 * t.profit.abs());
}

#[test]
fn covariate_groups_of_one_match_plain_search() {
    let m = small_market(40, 4);
    let cfg = fast();
    let g = third_degree_by_covariates(&m, 1, ScheduleFamily::TwoPart, &cfg, &[]).unwrap();
    let plain = optimize_schedule(&m, ScheduleFamily::TwoPart, &cfg).unwrap();
    assert_eq!(g.groups[0].optimum, plain);
    assert_eq!(g.result.profit, ScenarioResult::from_report("x", &plain.report).profit);
    assert!(third_degree_by_covariates(&m, 41, ScheduleFamily::Linear, &cfg, &[]).is_err());
    assert!(third_degree_by_covariates(&m, 0, ScheduleFamily::Linear, &cfg, &[]).is_err());
}

#[test]
fn covariate_groups_split_by_index() {
    // two subpopulations identical except for their value level
    let low: Vec<(u32, f64)> = [2, 8, 30].iter().map(|&s| (s, 1600.0)).collect();
    let high: Vec<(u32, f64)> = [2, 8, 30].iter().map(|&s| (s, 2600.0)).collect();
    let mut all = high.clone();
    all.extend(&low);
    let m = types(&all, 300.0, reference_costs());
    let cfg = fast();
    let g = third_degree_by_covariates(&m, 2, ScheduleFamily::Linear, &cfg, &[]).unwrap();
    let hi = optimize_schedule(&types(&high, 300.0, reference_costs()), ScheduleFamily::Linear, &cfg).unwrap();
    let lo = optimize_schedule(&types(&low, 300.0, reference_costs()), ScheduleFamily::Linear, &cfg).unwrap();
    assert_eq!(g.groups[0].indices, vec![0, 1, 2]);
    assert_eq!(g.groups[0].optimum.schedule, hi.schedule);
    assert_eq!(g.groups[1].optimum.schedule, lo.schedule);
}

#[test]
fn covariate_profit_rises_with_groups() {
    let m = small_market(60, 6);
    let cfg = fast();
    let pooled = optimize_schedule(&m, ScheduleFamily::Linear, &cfg).unwrap();
    let mut last = f64::NEG_INFINITY;
    for j in [1, 2, 4, 7] {
        let g = third_degree_by_covariates(&m, j, ScheduleFamily::Linear, &cfg, &[pooled.schedule.clone()]).unwrap();
        assert_eq!(g.groups.iter().map(|g| g.indices.len()).sum::<usize>(), 60);
        assert!(g.result.profit >= last - 1e-6, "J={j}: {} < {last}", g.result.profit);
        last = g.result.profit;
    }
}

#[test]
fn homogenized_demand() {
    let m = small_market(50, 7);
    let h = homogenize_demand(&m).unwrap();
    let mu: Vec<f64> = h.customer_types().unwrap().iter().map(|t| t.mean_value).collect();
    assert!(mu.iter().all(|x| (x - mu[0]).abs() < 1e-9));
    let old: f64 = m.customer_types().unwrap().iter().map(|t| t.mean_value).sum::<f64>() / 50.0;
    assert!((mu[0] - old).abs() < 1e-9);
    let again = homogenize_demand(&h).unwrap();
    assert_eq!(again.value_model, h.value_model);
    assert_eq!(
        h.customers.iter().map(|c| c.size).collect::<Vec<_>>(),
        m.customers.iter().map(|c| c.size).collect::<Vec<_>>()
    );

    let free = h.with_costs(CostParams::zero());
    let s = optimize_schedule(&free, ScheduleFamily::ViaOrigin, &fast()).unwrap();
    let r = &s.schedule.rates;
    // bins nobody buys in are free parameters; compare the occupied ones
    let used: Vec<f64> = (0..r.len()).filter(|&k| !free.pricing_segment(k).is_empty()).map(|k| r[k]).collect();
    let spread = used.iter().copied().fold(f64::NEG_INFINITY, f64::max) - used.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread <= 2.0, "{r:?}");
}

#[test]
fn cost_sweep_properties() {
    let m = small_market(60, 8);
    let cfg = fast();
    let c2 = m.costs.c2;
    let sweep = cost_sweep(&m, &[0.0, m.costs.c1], &[0.0, c2, c2 + 300.0], &cfg).unwrap();
    assert_eq!(sweep.points.len(), 6);
    let free = &sweep.points[0];
    let r = &free.optimum.report;
    assert!((r.expected_profit - r.expected_revenue).abs() < 1e-9 * r.expected_revenue);
    let up = sweep.points.iter().find(|p| p.costs.c1 == m.costs.c1 && p.costs.c2 == c2 + 300.0).unwrap();
    let pt = up.mean_pass_through().unwrap();
    assert!(pt > 0.0 && pt < 1.0, "{pt}");
    let same = sweep.points.iter().find(|p| p.costs == m.costs).unwrap();
    assert!(same.pass_through.is_empty());
    assert!(same.optimum.report.expected_profit >= sweep.base.report.expected_profit - 1e-6);
}

fn flip_records(n: usize) -> (Vec<CustomerRecord>, BinEdges) {
    let m = small_market(n, 9);
    let bins = m.bins.estimation_bins.clone();
    let recs = m
        .customers
        .into_iter()
        .map(|mut r| {
            r.success = !bins.contains(1, r.size);
            r
        })
        .collect();
    (recs, bins)
}

#[test]
fn counterfactual_outcomes() {
    let (recs, bins) = flip_records(10_000);
    assert_eq!(simulate_counterfactual_outcomes(&recs, 0.0, &bins, 1, false, 1).unwrap(), recs);
    let all = simulate_counterfactual_outcomes(&recs, 1.0, &bins, 1, false, 1).unwrap();
    assert!(all.iter().all(|r| r.success == bins.contains(1, r.size)));
    let inv = simulate_counterfactual_outcomes(&recs, 1.0, &bins, 1, true, 1).unwrap();
    assert!(inv.iter().all(|r| r.success != bins.contains(1, r.size)));
    let part = simulate_counterfactual_outcomes(&recs, 0.7, &bins, 1, false, 2).unwrap();
    let changed = part.iter().zip(&recs).filter(|(a, b)| a.success != b.success).count();
    let share = changed as f64 / recs.len() as f64;
    assert!((share - 0.7).abs() < 0.02, "{share}");
    assert_eq!(part, simulate_counterfactual_outcomes(&recs, 0.7, &bins, 1, false, 2).unwrap());
    assert!(simulate_counterfactual_outcomes(&recs, 1.5, &bins, 1, false, 2).is_err());
}

#[test]
fn ic_gap_single_bin_is_zero() {
    // one pricing bin; with several, a cheaper higher bin can lure buyers
    // into overbuying, so a market sitting inside one bin can still gain
    let bins = SizeBinConfig::new(vec![1, 20, 50], vec![0]).unwrap();
    let m = Market::from_types(&[(2, 2000.0), (5, 2600.0), (30, 1900.0)], 300.0, ErrorFamily::Logistic, reference_costs(), bins);
    let g = ic_gap_analysis(&m, &fast()).unwrap();
    assert!(g.gap.abs() < 1e-9 * g.optimal.report.expected_profit, "{}", g.gap);
}

#[test]
fn ic_gap_segments_sum_to_gap() {
    let m = small_market(60, 10);
    let g = ic_gap_analysis(&m, &fast()).unwrap();
    let sum: f64 = g.segments.iter().map(|s| s.difference).sum();
    assert!((sum - g.gap).abs() < 1e-6 * g.optimal.report.expected_profit.abs());
    assert!(g.gap >= -1e-6);
}

#[test]
fn ordering_chain_holds() {
    let m = small_market(60, 11);
    let c = ordering_chain(&m, &fast()).unwrap();
    assert!(c.min_slack() >= -1e-6, "{:?}", c.profits());
    assert_eq!(c.first_degree.consumer_welfare, 0.0);
    for s in c.scenarios() {
        assert!((s.social_welfare - s.profit - s.consumer_welfare).abs() < 1e-9 * s.social_welfare.abs().max(1.0));
        assert!(s.consumer_welfare >= 0.0);
    }
    let mut out = Vec::new();
    write_scenario_csv(&c.scenarios(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].ends_with("profit_vs_linear_pct"));
    assert!(lines[1].starts_with("linear,") && lines[1].ends_with(",0.00"));
    let lin = c.linear.profit;
    let expect = format!("{:.2}", 100.0 * (c.first_degree.profit - lin) / lin);
    assert!(lines[5].ends_with(&expect), "{} vs {expect}", lines[5]);
}

#[test]
fn experiment_two_point_recovery() {
    let m = types(&[(5, 500.0), (30, 2500.0)], 0.0, reference_costs());
    let cfg = ExperimentConfig {
        rows: 200_000,
        arm_prices: vec![0.0, 1000.0],
        seed: 3,
        ..Default::default()
    };
    let data = simulate_experiment(&m, &cfg).unwrap();
    let arms = data.arms();
    assert_eq!(arms.iter().map(|a| a.rows.len()).sum::<usize>(), 200_000);
    let rec = experimental_recovery(&data, 1).unwrap();
    let small = data.customer_cell[0];
    let large = data.customer_cell[1];
    assert!((rec.joint[small][0] - 0.5).abs() < 0.01, "{:?}", rec.joint);
    assert!((rec.joint[large][1] - 0.5).abs() < 0.01);
    assert!(rec.joint[small][1] < 0.01 && rec.joint[large][0] < 0.01);
    let truth = true_joint(&m, &data).unwrap();
    assert!(total_variation(&rec.joint, &truth) < 0.01);
    // every failure sits at the positive price and is a small deal
    assert!(rec.filled.iter().all(|f| f.size == 5));
    assert_eq!(rec.filled.len(), data.rows.iter().filter(|r| !r.success).count());
}

#[test]
fn experiment_all_buy_skips_every_arm() {
    let m = types(&[(5, 9000.0), (30, 9500.0)], 0.0, reference_costs());
    let cfg = ExperimentConfig {
        rows: 6000,
        ..Default::default()
    };
    let rec = experimental_recovery(&simulate_experiment(&m, &cfg).unwrap(), 1).unwrap();
    assert_eq!(rec.skipped_arms.len(), 5);
    assert!(rec.below.iter().all(Option::is_none));
}

#[test]
fn experiment_needs_zero_arm() {
    let m = types(&[(5, 900.0)], 100.0, reference_costs());
    let cfg = ExperimentConfig {
        rows: 100,
        arm_prices: vec![1000.0, 2000.0],
        ..Default::default()
    };
    assert!(experimental_recovery(&simulate_experiment(&m, &cfg).unwrap(), 1).is_err());
}

#[test]
fn experiment_recovers_synthetic_joint() {
    let m = small_market(2000, 12);
    let cfg = ExperimentConfig {
        rows: 300_000,
        seed: 5,
        ..Default::default()
    };
    let data = simulate_experiment(&m, &cfg).unwrap();
    let rec = experimental_recovery(&data, 2).unwrap();
    let tv = total_variation(&rec.joint, &true_joint(&m, &data).unwrap());
    assert!(tv < 0.05, "{tv}");
    let filled = rec.filled_records(&data, &m);
    assert_eq!(filled.len(), data.rows.len());
}
