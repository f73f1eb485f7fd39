//! The three bilateral rules on the same pair of replanning costs, and the
//! Karma balance update after a negotiation.

use karma_mapf::negotiation::{apply_karma_update, negotiate_altruistic, negotiate_egoistic, negotiate_karma, Side};
use karma_mapf::DeltaCost;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = [
        (DeltaCost::Finite(2), DeltaCost::Finite(0)),
        (DeltaCost::Finite(1), DeltaCost::Finite(3)),
        (DeltaCost::Finite(2), DeltaCost::Finite(2)),
        (DeltaCost::Infeasible, DeltaCost::Finite(6)),
    ];
    println!("{:>4} {:>4} | {:>10} {:>10} {:>14} {:>14}", "di", "dj", "egoistic", "altruistic", "karma ki=4", "karma kj=4");
    for (di, dj) in cases {
        let ego = negotiate_egoistic(di, dj);
        let alt = negotiate_altruistic(di, dj, &mut rng);
        // a large balance makes its owner more likely to replan
        let rich_i = negotiate_karma(di, dj, 4, 0, 1.0, &mut rng);
        let rich_j = negotiate_karma(di, dj, 0, 4, 1.0, &mut rng);
        println!(
            "{di:>4} {dj:>4} | {:>10} {:>10} {:>14} {:>14}",
            label(Some(ego)),
            label(alt),
            label(rich_i),
            label(rich_j)
        );
    }

    // the counterpart replans at a cost of 3 steps and is paid for it
    let (ki, kj) = apply_karma_update(0, 0, Side::Counterpart, 3);
    println!("balances after paying 3 to the counterpart: initiator {ki}, counterpart {kj}");
}

fn label(side: Option<Side>) -> &'static str {
    match side {
        Some(Side::Initiator) => "initiator",
        Some(Side::Counterpart) => "counterpart",
        None => "-",
    }
}
