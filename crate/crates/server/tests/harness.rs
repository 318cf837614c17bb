use veld::harness::{bench_world, run_in_memory, HarnessError, ScenarioConfig};
use veld::memory::NetModel;
use veld::report::{emit_report, MetricsReport};

async fn run(cfg: &ScenarioConfig) -> MetricsReport {
    run_in_memory(cfg, bench_world()).await.unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn three_clients_ten_actions() {
    let report = run(&ScenarioConfig::new(3, 10)).await;
    assert_eq!((report.accepted, report.acks, report.rejected), (10, 10, 0));
    assert_eq!((report.delivered_events, report.expected_events), (20, 20));
    assert!(report.fan_out_exact());
    assert_eq!(report.max_seq_gap, 0);
    assert_eq!(report.protocol_errors, 0);
    assert!(report.convergence.converged);
    assert_eq!(report.convergence.distinct_client_digests, 1);
    assert_eq!(report.action_latency_ms.as_ref().unwrap().samples, 20);
}

#[tokio::test]
async fn lone_instructor_gets_only_acks() {
    let report = run(&ScenarioConfig::new(1, 5)).await;
    assert_eq!((report.acks, report.delivered_events), (5, 0));
    assert!(report.action_latency_ms.is_none());
    assert!(report.convergence.converged);
}

#[tokio::test]
async fn empty_run_reports_null_latency() {
    let report = run(&ScenarioConfig::new(4, 0)).await;
    assert_eq!((report.acks, report.delivered_events), (0, 0));
    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    assert!(json["action_latency_ms"].is_null());
    assert!(report.convergence.converged);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn events_scale_with_listeners() {
    for n in [2usize, 4, 8, 16] {
        let report = run(&ScenarioConfig::new(n, 25)).await;
        assert_eq!(report.delivered_events, 25 * (n as u64 - 1), "n = {n}");
        assert_eq!(report.acks, 25);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_instructors_never_reject() {
    let mut cfg = ScenarioConfig::new(12, 120);
    cfg.n_instructors = 3;
    let report = run(&cfg).await;
    assert_eq!((report.accepted, report.rejected), (120, 0));
    assert_eq!(report.delivered_events, 120 * 11);
    assert!(report.convergence.converged);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn same_seed_same_final_state() {
    let mut cfg = ScenarioConfig::new(5, 60);
    cfg.net_model = NetModel { base_latency_ms: 1.0, jitter_ms: 2.0, seed: 7 };
    let a = run(&cfg).await;
    let b = run(&cfg).await;
    assert_eq!(a.convergence.final_digest, b.convergence.final_digest);
    cfg.net_model.seed = 8;
    let c = run(&cfg).await;
    assert!(c.convergence.converged);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn latency_model_and_presence_traffic() {
    let mut cfg = ScenarioConfig::new(6, 30);
    cfg.net_model = NetModel { base_latency_ms: 10.0, jitter_ms: 5.0, seed: 3 };
    cfg.presence_rate = 20.0;
    cfg.action_rate = 200.0;
    cfg.n_instructors = 2;
    let report = run(&cfg).await;
    assert!(report.fan_out_exact());
    assert!(report.convergence.converged);
    assert_eq!(report.max_seq_gap, 0);
    assert!(report.presence_messages > 0);
    let latency = report.action_latency_ms.unwrap();
    // Two one-way hops of at least the base latency each.
    assert!(latency.p50 >= 20.0, "{latency:?}");
    assert!(latency.p50 <= latency.p95 && latency.p95 <= latency.p99 && latency.p99 <= latency.max);
}

#[tokio::test]
async fn faceoff_binding() {
    let mut cfg = ScenarioConfig::new(4, 30);
    cfg.binding = "faceoff".into();
    let report = run(&cfg).await;
    assert!(report.fan_out_exact() && report.convergence.converged);
    assert_eq!(report.rejected, 0);
}

#[tokio::test]
async fn invalid_scenarios_are_refused() {
    let cases = [
        ScenarioConfig::new(0, 1),
        ScenarioConfig::new(151, 1),
        ScenarioConfig { n_instructors: 0, ..ScenarioConfig::new(2, 1) },
        ScenarioConfig { n_instructors: 3, ..ScenarioConfig::new(2, 1) },
        ScenarioConfig { action_rate: -1.0, ..ScenarioConfig::new(2, 1) },
        ScenarioConfig { presence_rate: f64::NAN, ..ScenarioConfig::new(2, 1) },
        ScenarioConfig { binding: "pods".into(), ..ScenarioConfig::new(2, 1) },
        ScenarioConfig {
            net_model: NetModel { base_latency_ms: -1.0, jitter_ms: 0.0, seed: 0 },
            ..ScenarioConfig::new(2, 1)
        },
    ];
    for cfg in cases {
        assert!(matches!(run_in_memory(&cfg, bench_world()).await, Err(HarnessError::InvalidConfig(_))), "{cfg:?}");
    }
}

#[tokio::test]
async fn report_files_round_trip() {
    let report = run(&ScenarioConfig::new(3, 12)).await;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let table = emit_report(&report, &path).unwrap();
    let back: MetricsReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, report);
    let text = std::fs::read_to_string(table).unwrap();
    assert!(text.contains("delivered events"));
    assert!(text.contains(&report.convergence.final_digest.to_string()));
}
