use fuglede3::search::{run_search, SearchContext, Shard};
use fuglede3::zp::PrimeParams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let p: usize = args[1].parse().unwrap();
    let m: usize = args[2].parse().unwrap();
    let shard: Shard = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(Shard::full());
    let params = PrimeParams::new(p, m).unwrap();
    let t0 = std::time::Instant::now();
    let ctx = SearchContext::build(params);
    eprintln!("setup: catalog={} in {:.2}s", ctx.catalog().len(), t0.elapsed().as_secs_f64());
    let report = run_search(&ctx, shard).unwrap();
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
