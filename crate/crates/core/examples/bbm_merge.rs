//! Two BBMs started at 0, recentred at time `t`, against an independent
//! recentred BBM shifted by the log of a fresh two-particle derivative martingale.
//!
//! `cargo run --release --example bbm_merge -- [t] [window_lo] [replicas] [seed]`

use expstable::bbm::{BbmParams, CenteredBbm, MartingaleShifted, RecenteredBbm};
use expstable::stability::compare_models;
use expstable::{Execution, Window};

fn main() {
    let mut args = std::env::args().skip(1);
    let mut next = |default: f64| args.next().map_or(default, |s| s.parse().expect("number"));
    let (t, lo, n, seed) = (next(20.0), next(-4.0), next(2000.0) as u64, next(800.0) as u64);
    let merged = CenteredBbm {
        params: BbmParams::new(t, 0).with_initial(vec![0.0, 0.0]),
    };
    let shifted = MartingaleShifted {
        inner: RecenteredBbm::new(BbmParams::new(t, 0)).unwrap(),
        weight_params: BbmParams::new(t, 0).with_initial(vec![0.0, 0.0]),
    };
    let report = compare_models(&merged, &shifted, Window::above(lo).unwrap(), n, seed, Execution::Parallel).unwrap();
    println!("{report}");
}
