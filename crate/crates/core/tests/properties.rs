use bsn_disg::game::{self, best_power, CostWeights, PowerSpace};
use bsn_disg::learning::{mixed_strategy, RegretState};
use bsn_disg::radio::{interference, observe, Action, InterferenceObservation, StrategyProfile};
use bsn_disg::scenario::{pairwise_distance, SnapMode, UserConfig};
use bsn_disg::verify::{check_profile, PowerGrid};
use bsn_disg::Scenario;
use proptest::prelude::*;

const LEVELS: [f64; 8] = [29.04, 32.67, 36.3, 42.24, 46.2, 50.69, 55.18, 57.42];

fn positions(m: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), m).prop_filter("users too close", |p| {
        p.iter()
            .enumerate()
            .all(|(i, a)| p[..i].iter().all(|b| (a.0 - b.0).hypot(a.1 - b.1) >= 0.05))
    })
}

fn scenario(pos: &[(f64, f64)], n: usize, snap: SnapMode) -> Scenario {
    let users = pos
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| UserConfig::at(i, x, y))
        .collect();
    let levels = (snap == SnapMode::NearestLevel).then(|| LEVELS.to_vec());
    Scenario::new(
        users,
        (11..11 + n as u32).collect(),
        29.04,
        57.42,
        levels,
        2.4,
        snap,
    )
    .unwrap()
}

fn profile(choices: &[(usize, f64)]) -> StrategyProfile {
    StrategyProfile::new(choices.iter().map(|&(c, p)| Action::new(c, p)).collect())
}

fn choices(m: usize, n: usize) -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::vec((0..n, 29.04..=57.42f64), m)
}

/// Clamped continuous best power of every user against `powers` on a fixed assignment.
fn response_map(s: &Scenario, assignment: &[usize], powers: &[f64]) -> Vec<f64> {
    let p = profile(
        &assignment
            .iter()
            .copied()
            .zip(powers.iter().copied())
            .collect::<Vec<_>>(),
    );
    let space = PowerSpace::continuous(s);
    (0..s.num_users())
        .map(|i| {
            let x = interference(s, &p, i, assignment[i]);
            best_power(&CostWeights::of_user(s, i), x, &space)
                .unwrap()
                .power
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn interference_grows_with_other_powers(
        pos in positions(4),
        ch in choices(4, 3),
        bump in 0.0..20.0f64,
        who in 1..4usize,
    ) {
        let s = scenario(&pos, 3, SnapMode::Continuous);
        let base = profile(&ch);
        let mut louder = ch.clone();
        louder[who].1 = (louder[who].1 + bump).min(57.42);
        let louder = profile(&louder);
        for j in 0..3 {
            let (a, b) = (interference(&s, &base, 0, j), interference(&s, &louder, 0, j));
            prop_assert!(b >= a);
            if j != ch[who].0 {
                prop_assert_eq!(a, b);
            }
        }
        // own power never matters
        let mut own = ch.clone();
        own[0].1 = 57.42;
        prop_assert_eq!(observe(&s, &base, 0), observe(&s, &profile(&own), 0));
    }

    // Positivity, monotonicity and scalability of the clamped best-power map.
    #[test]
    fn best_power_map_is_standard(
        pos in positions(3),
        assign in prop::collection::vec(0..2usize, 3),
        p in prop::collection::vec(29.04..=57.42f64, 3),
        bumps in prop::collection::vec(0.0..10.0f64, 3),
        alpha in 1.001..4.0f64,
    ) {
        let s = scenario(&pos, 2, SnapMode::Continuous);
        let t = response_map(&s, &assign, &p);
        prop_assert!(t.iter().all(|&x| x > 0.0));

        let higher: Vec<f64> = p.iter().zip(&bumps).map(|(a, b)| a + b).collect();
        let t_high = response_map(&s, &assign, &higher);
        for (lo, hi) in t.iter().zip(&t_high) {
            prop_assert!(hi >= lo);
        }

        let scaled: Vec<f64> = p.iter().map(|x| x * alpha).collect();
        let t_scaled = response_map(&s, &assign, &scaled);
        for (base, sc) in t.iter().zip(&t_scaled) {
            prop_assert!(alpha * base > *sc);
        }
    }

    #[test]
    fn mixed_strategy_is_a_distribution(regrets in prop::collection::vec(0.0..1e18f64, 1..8)) {
        let w = mixed_strategy(&regrets);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        if regrets.iter().all(|&r| r == 0.0) {
            prop_assert!(w.iter().all(|&x| x == 1.0 / regrets.len() as f64));
        }
    }

    #[test]
    fn regret_state_stays_consistent(
        rounds in prop::collection::vec((prop::collection::vec(0.0..1e6f64, 4), 0..4usize), 1..40),
    ) {
        let mut st = RegretState::new(0, 4, 0.9).unwrap();
        for (costs, played) in rounds {
            let actual = costs[played];
            st.update_round(actual, &costs).unwrap();
            let regrets = st.regrets();
            prop_assert!(regrets.iter().all(|&r| r >= 0.0));
            prop_assert!((st.omega().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(st.omega().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn cost_is_convex_in_power(
        a in 29.04..=57.42f64,
        b in 29.04..=57.42f64,
        lambda in 0.0..=1.0f64,
        x in 1e-8..1e3f64,
        gain in 0.1..10.0f64,
    ) {
        let w = CostWeights { gamma0: 1e9, gain, tau: 1.0, xi: 1e-4 };
        let mid = w.cost(lambda * a + (1.0 - lambda) * b, x);
        let chord = lambda * w.cost(a, x) + (1.0 - lambda) * w.cost(b, x);
        prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn common_weight_scale_keeps_argmin(
        x in 1e-8..1e2f64,
        gain in 0.1..10.0f64,
        gamma0 in 1e3..1e10f64,
        scale in 1e-3..1e3f64,
    ) {
        let s = scenario(&[(0.0, 0.0)], 1, SnapMode::NearestLevel);
        let base = CostWeights { gamma0, gain, tau: 1.0, xi: 1e-4 };
        let scaled = CostWeights { tau: scale, xi: 1e-4 * scale, ..base };
        for space in [PowerSpace::of(&s), PowerSpace::continuous(&s)] {
            let a = best_power(&base, x, &space).unwrap().power;
            let b = best_power(&scaled, x, &space).unwrap().power;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn best_response_beats_exhaustive_grid(
        pos in positions(3),
        ch in choices(3, 3),
        snap in prop::sample::select(vec![SnapMode::Continuous, SnapMode::NearestLevel]),
    ) {
        let s = scenario(&pos, 3, snap);
        let p = profile(&ch);
        let obs: InterferenceObservation = observe(&s, &p, 0);
        let br = game::best_response(&s, &obs, 0);
        let w = CostWeights::of_user(&s, 0);
        let grid = match snap {
            SnapMode::Continuous => PowerGrid::LevelsAndUniform(2048),
            SnapMode::NearestLevel => PowerGrid::Levels,
        };
        let best_grid = grid
            .powers(&s)
            .unwrap()
            .iter()
            .flat_map(|&q| obs.per_channel.iter().map(move |&x| w.cost(q, x)))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(br.utility <= best_grid * (1.0 + 1e-12));
        prop_assert_eq!(br.utility, w.cost(br.power, obs.per_channel[br.channel]));
    }

    #[test]
    fn distance_is_symmetric(pos in positions(3)) {
        let s = scenario(&pos, 1, SnapMode::Continuous);
        for i in 0..3 {
            for k in 0..3 {
                if i != k {
                    prop_assert_eq!(pairwise_distance(&s, i, k).unwrap(), pairwise_distance(&s, k, i).unwrap());
                    prop_assert_eq!(s.coupling(i, k), s.coupling(k, i));
                }
            }
        }
    }

    #[test]
    fn check_profile_never_negative(pos in positions(3), ch in choices(3, 2)) {
        let s = scenario(&pos, 2, SnapMode::NearestLevel);
        let c = check_profile(&s, &profile(&ch), &PowerGrid::Levels).unwrap();
        prop_assert!(c.max_improvement >= 0.0);
        for d in &c.per_user {
            prop_assert!(d.best_utility <= d.current_utility);
        }
    }
}
