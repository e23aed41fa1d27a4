mod common;
use nalgebra::DVector;
use reachgames::*;

fn track(terms: Vec<(usize, f64, f64)>, eps: f64) -> PlayerCost {
    PlayerCost::new(
        InstantaneousCost::QuadraticTracking {
            terms: terms.into_iter().map(|(index, weight, target)| TrackingTerm { index, weight, target }).collect(),
        },
        Aggregation::Sum,
        eps,
    )
}

fn intersection() -> (SystemSpec, Vec<PlayerCost>, Vec<PlayerCost>, DVector<f64>) {
    let eps = 0.1;
    let model = Model::Product(vec![
        Model::SingleBicycle(BicycleParams { inter_axle_length: 2.5 }),
        Model::SingleBicycle(BicycleParams { inter_axle_length: 2.5 }),
        Model::Unicycle,
    ]);
    let spec = SystemSpec::new(model, 0.1).unwrap();
    let mut x1 = DVector::zeros(14);
    // ego car northbound on x=0
    x1[0] = 0.0; x1[1] = -10.0; x1[2] = std::f64::consts::FRAC_PI_2; x1[4] = 2.5;
    // other car eastbound on y=0
    x1[5] = -11.0; x1[6] = 0.0; x1[7] = 0.0; x1[9] = 2.5;
    // pedestrian on crosswalk y=-4 walking -x
    x1[10] = 3.5; x1[11] = -4.0; x1[12] = std::f64::consts::PI; x1[13] = 1.0;

    let proximity_pen = InstantaneousCost::ProximityAvoid {
        desired_separation: 4.0,
        own_position: [0, 1],
        opponent_positions: vec![[5, 6], [10, 11]],
    };
    let nominal_ego = PlayerCost::new(
        InstantaneousCost::CompositeSum {
            components: vec![
                (1.0, InstantaneousCost::QuadraticTracking { terms: vec![
                    TrackingTerm { index: 0, weight: 2.0, target: 0.0 },
                    TrackingTerm { index: 2, weight: 1.0, target: std::f64::consts::FRAC_PI_2 },
                    TrackingTerm { index: 4, weight: 2.0, target: 2.5 },
                ]}),
                (0.05, proximity_pen),
            ],
        },
        Aggregation::Sum,
        eps,
    );
    let nominal_other = track(vec![(6, 2.0, 0.0), (7, 1.0, 0.0), (9, 2.0, 2.5)], eps);
    let nominal_ped = track(vec![(11, 2.0, -4.0), (12, 1.0, std::f64::consts::PI), (13, 2.0, 1.0)], eps);
    let nominal = vec![nominal_ego, nominal_other.clone(), nominal_ped.clone()];

    let safety_ego = PlayerCost::new(
        InstantaneousCost::ProximityAvoid {
            desired_separation: 3.0,
            own_position: [0, 1],
            opponent_positions: vec![[5, 6], [10, 11]],
        },
        Aggregation::Max,
        eps,
    );
    let safety = vec![safety_ego, nominal_other, nominal_ped];
    (spec, nominal, safety, x1)
}

#[test]
fn debug_intersection() {
    let (spec, nominal, safety, x1) = intersection();
    let solver = SolverConfig { epsilon: 0.1, min_step: 1.0/1024.0, ..SolverConfig::default() };
    let rh = RecedingHorizonConfig {
        planning_horizon: 2.0, replan_interval: 0.2, total_duration: 4.0,
        safety_threshold: 0.0, ego_player: 0, use_warm_starts: true,
    };
    let t0 = std::time::Instant::now();
    let trace = run_receding_horizon(&spec, &nominal, &safety, &x1, &rh, &solver).unwrap();
    println!("warm total {:.3}s", t0.elapsed().as_secs_f64());
    let mut warm_times = vec![];
    for inv in &trace.invocations {
        println!("inv {:>2} mode {:?} monitor {:?} degraded {} warm {} wall {:.4} nom it/conv {:?}/{:?} saf it/conv {:?}/{:?} fail {:?}",
            inv.invocation, inv.mode, inv.safety_monitor_value.map(|v| (v*1000.0).round()/1000.0), inv.degraded, inv.warm_started, inv.wall_clock_seconds,
            inv.nominal_iterations, inv.nominal_converged, inv.safety_iterations, inv.safety_converged, inv.failure);
        warm_times.push(inv.wall_clock_seconds);
    }
    let switches = trace.invocations.windows(2).filter(|w| w[0].mode == ExecutionMode::Nominal && w[1].mode == ExecutionMode::Safety).count()
        + if trace.invocations[0].mode == ExecutionMode::Safety { 1 } else { 0 };
    let exec_min = min_separation_to_others(&spec, &trace.states, 0).unwrap();

    let mut rh_nom = rh.clone();
    rh_nom.safety_threshold = f64::INFINITY;
    let nom_trace = run_receding_horizon(&spec, &nominal, &safety, &x1, &rh_nom, &solver).unwrap();
    let nom_min = min_separation_to_others(&spec, &nom_trace.states, 0).unwrap();

    let mut rh_cold = rh.clone();
    rh_cold.use_warm_starts = false;
    let t0 = std::time::Instant::now();
    let cold_trace = run_receding_horizon(&spec, &nominal, &safety, &x1, &rh_cold, &solver).unwrap();
    println!("cold total {:.3}s", t0.elapsed().as_secs_f64());
    let mut cold_times: Vec<f64> = cold_trace.invocations.iter().map(|i| i.wall_clock_seconds).collect();
    warm_times.sort_by(f64::total_cmp); cold_times.sort_by(f64::total_cmp);
    println!("switches {} exec_min {:.3} nominal_min {:.3}", switches, exec_min, nom_min);
    println!("median warm {:.4} cold {:.4}", warm_times[warm_times.len()/2], cold_times[cold_times.len()/2]);
    println!("modes consistent: {}", trace.modes_consistent_with_threshold());
}

#[test]
fn debug_nominal_invocation() {
    let (spec, nominal, safety, x1) = intersection();
    let solver = SolverConfig { epsilon: 0.1, min_step: 1.0/1024.0, ..SolverConfig::default() };
    // invocation 0 from x1
    let nom0 = solve(&spec, &nominal, &x1, 20, &solver, None).unwrap();
    let saf0 = solve(&spec, &safety, &x1, 20, &solver, None).unwrap();
    // execute 2 steps: ego follows safety, others nominal
    let mut state = x1.clone();
    for s in 0..2 {
        let mut ut = vec![];
        for i in 0..3 {
            let src = if i == 0 { &saf0 } else { &nom0 };
            let dx = &state - src.operating_point.state(s);
            ut.push(src.operating_point.control(s, i) - src.strategies[i].gain(s) * dx);
        }
        state = spec.step(&state, &ut, s).unwrap();
    }
    let warm = shift_warm_start(&nom0, &spec, 2).unwrap();
    let res = solve(&spec, &nominal, &state, 20, &solver, Some(&warm)).unwrap();
    println!("invocation-1 nominal: status {:?} iters {}", res.status, res.iterations);
    for st in res.iteration_trace.iter().take(30) {
        println!("  it {} eta {:.6} change {:.6} costs {:?}", st.iteration, st.step_scale, st.trajectory_change, st.relaxed_costs.iter().map(|c| (c*100.0).round()/100.0).collect::<Vec<_>>());
    }
}

#[test]
fn debug_safety_controls() {
    let (spec, nominal, safety, x1) = intersection();
    let solver = SolverConfig { epsilon: 0.1, min_step: 1.0/1024.0, ..SolverConfig::default() };
    let nom0 = solve(&spec, &nominal, &x1, 20, &solver, None).unwrap();
    let saf0 = solve(&spec, &safety, &x1, 20, &solver, None).unwrap();
    println!("nominal0 ego controls (first 6):");
    for t in 0..6 { let u = nom0.operating_point.control(t, 0); println!("  t{t}: omega {:.3} a {:.3}", u[0], u[1]); }
    println!("safety0 ego controls (first 6):");
    for t in 0..6 { let u = saf0.operating_point.control(t, 0); println!("  t{t}: omega {:.3} a {:.3}", u[0], u[1]); }
    println!("safety0 ego states (first 4): ");
    for t in 0..4 { let x = saf0.operating_point.state(t); println!("  t{t}: px {:.3} py {:.3} th {:.3} phi {:.3} v {:.3}", x[0], x[1], x[2], x[3], x[4]); }
    println!("safety0 status {:?} iters {} monitor(saf obj) {:.3}", saf0.status, saf0.iterations, saf0.unrelaxed_costs[0]);

    let mut state = x1.clone();
    for s in 0..2 {
        let mut ut = vec![];
        for i in 0..3 {
            let src = if i == 0 { &saf0 } else { &nom0 };
            let dx = &state - src.operating_point.state(s);
            ut.push(src.operating_point.control(s, i) - src.strategies[i].gain(s) * dx);
        }
        println!("exec step {s}: ego u = ({:.3}, {:.3})", ut[0][0], ut[0][1]);
        state = spec.step(&state, &ut, s).unwrap();
    }
    println!("state after 2 steps: ego px {:.3} py {:.3} th {:.3} phi {:.3} v {:.3}", state[0], state[1], state[2], state[3], state[4]);
    let warm = shift_warm_start(&nom0, &spec, 2).unwrap();
    println!("warm ref ego state(0): px {:.3} py {:.3} th {:.3} phi {:.3} v {:.3}",
        warm.operating_point.state(0)[0], warm.operating_point.state(0)[1], warm.operating_point.state(0)[2], warm.operating_point.state(0)[3], warm.operating_point.state(0)[4]);
    let init = rollout(&spec, &state, &warm.strategies, &warm.operating_point).unwrap();
    println!("warm rollout ego tail state: {:?}", (0..5).map(|k| (init.state(20)[k]*1000.0).round()/1000.0).collect::<Vec<_>>());
    println!("warm rollout ego phi over time: {:?}", (0..21).map(|t| (init.state(t)[3]*100.0).round()/100.0).collect::<Vec<_>>());
    println!("warm rollout cost {:.2}", nominal[0].evaluate(&init, 0));
}
