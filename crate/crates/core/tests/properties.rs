use abrlab::controller::BitrateLadder;
use abrlab::estimation::{estimate_bandwidth, estimate_f, Applicability, BufferSample, KernelWeights, SampleWindow};
use abrlab::metrics::QoEReport;
use abrlab::plant::{run_scenario, step, EpisodeConfig, PlantParams, Regime, ScenarioParams, SimState};
use abrlab::trajectory::{BezierProfile, ReplanState};
use proptest::prelude::*;

const ANYWHERE: Applicability = Applicability { earliest: f64::NEG_INFINITY, buffer_floor: 0.0 };

fn affine_window(a: f64, b: f64, r: f64, tau: f64, te: f64, dither: f64) -> SampleWindow<BufferSample> {
    let mut w = SampleWindow::new(tau, te).unwrap();
    for i in 0..w.capacity() {
        let s = i as f64 * te;
        let d = if i % 2 == 0 { dither } else { -dither };
        w.push(BufferSample { x: a + b * s + d, rate: Some(r), playing: true });
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn buffer_never_negative(scenario in 1u8..=3, seed in 0u64..1000, replan: bool) {
        let mut cfg = EpisodeConfig::default();
        cfg.replan.enabled = replan;
        let log = run_scenario(&cfg, &ScenarioParams::default(), scenario, seed).unwrap();
        prop_assert!(log.steps.iter().all(|s| s.x >= 0.0 && s.x_meas >= 0.0));
        prop_assert!(log.final_x >= 0.0);
    }

    #[test]
    fn bitrate_changes_only_on_cadence(scenario in 1u8..=3, seed in 0u64..1000, replan: bool) {
        let mut cfg = EpisodeConfig::default();
        cfg.replan.enabled = replan;
        let log = run_scenario(&cfg, &ScenarioParams::default(), scenario, seed).unwrap();
        let per_chunk = (cfg.controller.decision_interval / cfg.plant.te).round() as usize;
        for (k, w) in log.steps.windows(2).enumerate() {
            if w[0].r != w[1].r {
                prop_assert_eq!((k + 1) % per_chunk, 0);
            }
        }
        prop_assert!(log.steps.iter().all(|s| cfg.ladder.contains(s.r)));
    }

    #[test]
    fn qoe_report_ranges(scenario in 1u8..=3, seed in 0u64..1000, replan: bool) {
        let mut cfg = EpisodeConfig::default();
        cfg.replan.enabled = replan;
        let log = run_scenario(&cfg, &ScenarioParams::default(), scenario, seed).unwrap();
        let r = QoEReport::from_log(&log, false).unwrap();
        prop_assert_eq!(r.m, 300);
        prop_assert!(r.switch_count < r.m);
        prop_assert_eq!((r.variation_norm * (r.m - 1) as f64).round() as usize, r.switch_count);
        prop_assert!(r.rebuffer_count <= r.m);
        prop_assert!((0.35..=5.0).contains(&r.avg_quality));
    }
}

proptest! {
    #[test]
    fn playback_drain_only_under_guard(
        t in 0.0f64..20.0,
        x in 0.0f64..10.0,
        r in 0.35f64..5.0,
        c in 0.1f64..5.0,
    ) {
        let p = PlantParams::default();
        let k = (t / p.te).round() as usize;
        let t = k as f64 * p.te;
        let s = SimState { k, t, x, regime: p.playing_guard(t, x), stalled: false };
        let n = step(&s, r, c, &p).unwrap();
        let filling = (x + p.te * c / r).max(0.0);
        let playing = (x + p.te * (c / r - 1.0)).max(0.0);
        let expected = if t < p.delta_startup || x < p.chunk_duration { filling } else { playing };
        prop_assert!((n.x - expected).abs() <= 1e-12 * (1.0 + x));
        prop_assert!(n.x >= 0.0);
        prop_assert_eq!(n.regime == Regime::Playing, n.t >= p.delta_startup && n.x >= p.chunk_duration);
        prop_assert_eq!(n.stalled, n.t >= p.delta_startup && n.x < p.chunk_duration);
    }

    #[test]
    fn playback_conservation(x0 in 6.0f64..20.0, r in 0.35f64..5.0, c in 0.2f64..5.0, n in 1usize..30) {
        let p = PlantParams::default();
        let mut s = SimState { k: 100, t: 10.0, x: x0, regime: Regime::Playing, stalled: false };
        let mut steps = 0;
        for _ in 0..n {
            let next = step(&s, r, c, &p).unwrap();
            if next.regime != Regime::Playing {
                break;
            }
            s = next;
            steps += 1;
        }
        let elapsed = steps as f64 * p.te;
        let expected = x0 + elapsed * c / r - elapsed;
        prop_assert!((s.x - expected).abs() <= 1e-9 * (1.0 + x0));
    }

    #[test]
    fn replan_telescopes(c in 0.36f64..4.9, n in 1usize..600, te in 0.01f64..0.5) {
        let ladder = BitrateLadder::default();
        let start = ReplanState::new(c, &ladder, 3.0, 5.0).unwrap();
        let mut s = start;
        for _ in 0..n {
            s = s.step(4.0, c, &ladder, te).unwrap();
        }
        let rate = c / start.coef - 1.0;
        let expected = n as f64 * rate * te;
        prop_assert_eq!(s.coef, ladder.floor(c));
        prop_assert!((s.y_ad - expected).abs() <= 4.0 * n as f64 * f64::EPSILON * (1.0 + expected.abs()));
    }

    #[test]
    fn capacity_exact_for_affine(a in 2.5f64..20.0, b in -0.9f64..3.0, ri in 0usize..6) {
        let r = BitrateLadder::default().rates()[ri];
        let w = affine_window(a, b, r, 1.0, 0.1, 0.0);
        let est = estimate_bandwidth(&w, &KernelWeights::for_window(&w), r, 0.0, ANYWHERE);
        let oracle = r * (1.0 + b);
        prop_assert!((est.value - oracle).abs() <= 1e-12 * (r * (1.0 + b.abs()) + a * r));
    }

    #[test]
    fn capacity_low_pass_on_dither(a in 4.0f64..20.0, b in -0.5f64..1.0, d in 0.0f64..1.0, ri in 0usize..6) {
        let r = BitrateLadder::default().rates()[ri];
        let kw = KernelWeights::new(10, 0.1);
        let clean = estimate_bandwidth(&affine_window(a, b, r, 1.0, 0.1, 0.0), &kw, r, 0.0, ANYWHERE).value;
        let noisy = estimate_bandwidth(&affine_window(a, b, r, 1.0, 0.1, d), &kw, r, 0.0, ANYWHERE).value;
        let tau = kw.span();
        prop_assert!((noisy - clean).abs() <= d * r * 6.0 / tau + 1e-12);
        // far below the raw slope of the dither itself
        if d > 0.0 {
            prop_assert!((noisy - clean).abs() < r * 2.0 * d / 0.1);
        }
    }

    #[test]
    fn estimates_are_shift_invariant(a in 3.0f64..10.0, b in -0.5f64..1.0, t1 in 10.0f64..100.0, t2 in 100.0f64..10000.0) {
        let w = affine_window(a, b, 1.0, 1.0, 0.1, 0.3);
        let kw = KernelWeights::for_window(&w);
        let late = Applicability { earliest: 6.0, buffer_floor: 2.0 };
        let e1 = estimate_bandwidth(&w, &kw, 1.0, t1, late);
        let e2 = estimate_bandwidth(&w, &kw, 1.0, t2, late);
        prop_assert!(e1.valid && e2.valid);
        prop_assert_eq!(e1.value, e2.value);
    }

    #[test]
    fn f_estimate_converges_on_ultra_local_plant(f0 in -3.0f64..3.0, u0 in -1.0f64..1.0, alpha in -20.0f64..-0.5, y0 in -5.0f64..5.0) {
        let mut w = SampleWindow::new(1.0, 0.1).unwrap();
        let kw = KernelWeights::for_window(&w);
        let mut y = y0;
        for _ in 0..(3 * w.capacity()) {
            w.push((y, u0));
            y += 0.1 * (f0 + alpha * u0);
        }
        let f = estimate_f(&w, &kw, alpha).unwrap();
        prop_assert!((f - f0).abs() <= 0.01 * f0.abs() + 1e-9);
    }

    #[test]
    fn bezier_monotone_and_smooth(x0 in 0.0f64..5.0, lift in 0.0f64..10.0, tf in 1.0f64..30.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let p = BezierProfile::new(0.0, tf, x0, x0 + lift).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p.eval(lo * tf) <= p.eval(hi * tf) + 1e-12);
        prop_assert_eq!(p.eval(0.0), x0);
        prop_assert_eq!(p.eval(tf), x0 + lift);
        let t = (0.05 + 0.9 * a) * tf;
        let h = 1e-4 * tf;
        let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
        prop_assert!((fd - p.rate(t)).abs() <= 1e-5 * (1.0 + lift / tf));
    }
}

/// With a constant capacity strictly between two rungs the replanned
/// buffer oscillates inside the band and leaves it by at most one decision
/// interval (plus one sample for the crossing) of drift at either rung.
#[test]
fn replanned_buffer_stays_near_band() {
    let ladder = BitrateLadder::default();
    for c0 in [0.45, 0.5, 0.7, 0.8, 0.95, 1.2, 1.5, 1.9, 2.4, 2.7, 3.7, 4.5] {
        let mut cfg = EpisodeConfig::default();
        cfg.replan.enabled = true;
        let scen = ScenarioParams { c0, ..Default::default() };
        let log = run_scenario(&cfg, &scen, 1, 0).unwrap();
        let (lb, ub) = (cfg.replan.lower_bound, cfg.replan.upper_bound);
        let settled: Vec<_> = log.steps.iter().filter(|s| s.t >= cfg.profile.tf() + cfg.controller.decision_interval).collect();
        let drift = (c0 / ladder.floor(c0) - 1.0).abs().max((c0 / ladder.ceil(c0) - 1.0).abs());
        let margin = drift * (cfg.controller.decision_interval + cfg.plant.te);
        let lo = settled.iter().map(|s| s.x_meas).fold(f64::INFINITY, f64::min);
        let hi = settled.iter().map(|s| s.x_meas).fold(0.0, f64::max);
        assert!(lo >= lb - margin && hi <= ub + margin, "c0 = {c0}: buffer in [{lo}, {hi}], band [{lb}, {ub}] +- {margin}");
    }
}
