//! Serves an untrained desk-scale model so the HTTP API can be tried without a checkpoint.
//!
//! cargo run -p trafficgen-app --example serve_toy -- [addr]
//!
//! curl -s localhost:8080/palette
//! curl -s -X POST localhost:8080/generate -H 'content-type: application/json' \
//!   -d '{"version":1,"entities":[{"class":"car","bbox":{"x":0.5,"y":0.5,"w":0.2,"h":0.1},"color":"red"}],"time_of_day":"14:00"}' \
//!   -o scene.png

use trafficgen::config::ModelConfig;
use trafficgen::scene::GraphVariant;
use trafficgen::spade::TrafficModel;
use trafficgen_app::service::{serve, DEFAULT_QUEUE};
use trafficgen_app::AppState;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    let model = TrafficModel::new(&ModelConfig::toy(GraphVariant::Discrete), 0)?;
    serve(AppState::with_model(model, 0, DEFAULT_QUEUE)?, addr).await
}
