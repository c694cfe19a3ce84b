use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavcache::agents::baselines::{run_fixed, run_greedy, run_random};
use uavcache::env::{Env, EnvConfig};
use uavcache::harness::metrics::DelayTrace;

fn cfg() -> EnvConfig {
    EnvConfig::default() // M=4 N=8 Z=2
}

fn dissect(name: &str, trace: &DelayTrace) {
    let n = trace.len() as f64;
    let b: f64 = trace.backhaul_s.iter().sum::<f64>() / n;
    let a: f64 = trace.access_s.iter().sum::<f64>() / n;
    let s: f64 = trace.scheduling_s.iter().sum::<f64>() / n;
    println!(
        "{name}: total {:.3} backhaul {b:.3} access {a:.3} sched {s:.3} hit_ratio {:.3}",
        b + a + s,
        trace.hit_ratio(trace.len())
    );
}

#[test]
#[ignore]
fn dissect_probe() {
    let slots = 20_000;
    let mut env = Env::new(cfg(), 1).unwrap();
    let t = run_greedy(&mut env, slots).unwrap();
    dissect("greedy", &t);
    let mut env = Env::new(cfg(), 1).unwrap();
    let t = run_fixed(&mut env, slots).unwrap();
    dissect("fixed ", &t);
    let mut env = Env::new(cfg(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = run_random(&mut env, slots, &mut rng).unwrap();
    dissect("random", &t);
}
