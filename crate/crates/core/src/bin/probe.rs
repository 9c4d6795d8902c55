// Temporary diagnostic: find triples whose reduced set reaches the
// threshold and dump them for external cross-checking.
use fuglede3::davey::DaveyCatalog;
use fuglede3::pruning::{calc_cache, davey_filtered_from_cache};
use fuglede3::search::{
    balanced_linear_combinations, davey_on_vec, davey_on_vec_2x2, reduce_valid_set,
};
use fuglede3::zp::{canonical_b1, is_independent_of_span2, PrimeParams};

fn main() {
    let p: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let m: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let params = PrimeParams::new(p, m).unwrap();
    let catalog = DaveyCatalog::build(&params);
    let cache = calc_cache(&params, &catalog);
    let b1 = canonical_b1(&params);
    let threshold = m * p - 1;

    let mut best = 0usize;
    for d in catalog.iter().filter(|d| d.get(1, 0) > 0) {
        let b2 = davey_on_vec(d, &b1);
        for d2 in catalog.iter() {
            let candidates = davey_filtered_from_cache(d, d2, &cache);
            for i1 in candidates.iter() {
                let d1 = catalog.get(i1);
                for b3 in davey_on_vec_2x2(d1, d2, &b1, &b2) {
                    if !is_independent_of_span2(&b3, &b1, &b2, p) {
                        continue;
                    }
                    let v = balanced_linear_combinations(&b1, &b2, &b3, &params);
                    let r = reduce_valid_set(&v);
                    if r.len() > best {
                        best = r.len();
                        println!(
                            "|R|={} |V|={} threshold={threshold}\n b1={:?}\n b2={:?}\n b3={:?}",
                            r.len(),
                            v.len(),
                            b1.as_slice(),
                            b2.as_slice(),
                            b3.as_slice()
                        );
                        if r.len() >= threshold + 14 {
                            return;
                        }
                    }
                }
            }
        }
    }
}
