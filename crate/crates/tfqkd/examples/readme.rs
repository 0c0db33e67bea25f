//! The README example: one twin-field rate evaluation.

use tfqkd::rate::tfqkd_rate;
use tfqkd::{ChannelSpec, DetectorSpec, ProtocolSpec};

fn main() -> tfqkd::Result<()> {
    let fibre = ChannelSpec { alpha_db_per_km: 0.2, length_km: 0.0 };
    let proto = ProtocolSpec::default();
    let rate = tfqkd_rate(proto.mu(), 300.0, &fibre, &DetectorSpec::default(), &proto)?;
    println!("twin-field rate at 300 km: {rate:.3e} bits/pulse");
    Ok(())
}
