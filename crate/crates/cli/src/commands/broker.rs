use std::sync::Arc;

use clap::Args;
use fedmon_core::broker::server::{serve, ServerConfig, DEFAULT_PORT};
use fedmon_core::broker::{Broker, BrokerConfig, DEFAULT_QUEUE_CAPACITY};

#[derive(Args)]
pub struct BrokerArgs {
    /// Listen address.
    #[arg(long, default_value_t = format!("0.0.0.0:{DEFAULT_PORT}"))]
    pub listen: String,
    /// Maximum frame size in bytes.
    #[arg(long, default_value_t = fedmon_core::broker::wire::MAX_FRAME_SIZE)]
    pub max_frame: u32,
    /// Buffered messages per queue before overflow drops.
    #[arg(long, default_value_t = DEFAULT_QUEUE_CAPACITY)]
    pub queue_capacity: usize,
}

pub fn run(args: BrokerArgs) -> anyhow::Result<()> {
    let broker = Arc::new(Broker::new(BrokerConfig {
        queue_capacity: args.queue_capacity,
    }));
    let server = serve(
        broker,
        args.listen.as_str(),
        ServerConfig {
            max_frame: args.max_frame,
        },
    )
    .map_err(|e| anyhow::anyhow!("cannot listen on {}: {e}", args.listen))?;
    println!("broker listening on {}", server.local_addr());
    // serve until the process is interrupted
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
