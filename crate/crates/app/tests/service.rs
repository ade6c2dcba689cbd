use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use trafficgen::config::ModelConfig;
use trafficgen::scene::{encode_time, parse_clock_time, BBox, ColorFeature, EntityClass, GraphVariant, PaletteColor, SceneEntity};
use trafficgen::spade::{generate_image, TrafficModel};
use trafficgen_app::service::encode_png;
use trafficgen_app::{router, AppState};

fn model() -> TrafficModel {
    TrafficModel::new(&ModelConfig::toy(GraphVariant::Discrete), 9).unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn post(body: &Value) -> Request<Body> {
    Request::post("/generate")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

fn scene(x: f64, color: &str, time: &str, seed: u64) -> Value {
    json!({
        "version": 1,
        "entities": [{"class": "car", "bbox": {"x": x, "y": 0.5, "w": 0.2, "h": 0.1}, "color": color}],
        "time_of_day": time,
        "seed": seed
    })
}

#[tokio::test]
async fn palette_lists_eight_colors() {
    let app = router(AppState::empty());
    let (status, body) = send(&app, get("/palette")).await;
    assert_eq!(status, StatusCode::OK);
    let colors: Vec<Value> = serde_json::from_slice(&body).unwrap();
    assert_eq!(colors.len(), 8);
    assert_eq!(colors[2], json!({"name": "red", "rgb": [255, 0, 0]}));
}

#[tokio::test]
async fn info_endpoints_without_model() {
    let app = router(AppState::empty());
    let (status, body) = send(&app, get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["model_loaded"], false);
    assert_eq!(send(&app, get("/model-info")).await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn model_info_describes_loaded_model() {
    let app = router(AppState::with_model(model(), 12, 2).unwrap());
    let (status, body) = send(&app, get("/model-info")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["variant"], "discrete");
    assert_eq!(v["image_size"], 64);
    assert_eq!(v["step"], 12);
    assert!(v["parameters"]["overhead"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn variant_mismatch_is_a_field_error() {
    let app = router(AppState::with_model(model(), 0, 2).unwrap());
    let mut body = scene(0.5, "red", "10:00", 0);
    body["variant"] = json!("cluster");
    let (status, bytes) = send(&app, post(&body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["fields"][0]["field"], "variant");
}

#[tokio::test]
async fn wrong_json_types_are_422() {
    let app = router(AppState::with_model(model(), 0, 2).unwrap());
    let (status, _) = send(&app, post(&json!({"version": "one", "time_of_day": "10:00"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn time_changes_the_image() {
    let app = router(AppState::with_model(model(), 0, 2).unwrap());
    let two_cars = |time: &str| {
        json!({
            "version": 1,
            "entities": [
                {"class": "car", "bbox": {"x": 0.3, "y": 0.5, "w": 0.2, "h": 0.1}, "color": "red"},
                {"class": "car", "bbox": {"x": 0.7, "y": 0.5, "w": 0.2, "h": 0.1}, "color": "blue"}
            ],
            "time_of_day": time,
            "seed": 5
        })
    };
    let (_, night) = send(&app, post(&two_cars("02:00"))).await;
    let (_, day) = send(&app, post(&two_cars("14:00"))).await;
    assert_ne!(night, day);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_get_their_own_images() {
    let model = model();
    let colors = ["red", "blue", "yellow", "white", "lime", "magenta"];
    // Reference images rendered directly, without the service.
    let expected: Vec<Vec<u8>> = colors
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let e = SceneEntity::new(
                EntityClass::Car,
                BBox::new(0.2 + 0.1 * i as f64, 0.5, 0.2, 0.1).unwrap(),
                ColorFeature::Discrete(c.parse::<PaletteColor>().unwrap()),
            )
            .unwrap();
            let t = encode_time(parse_clock_time("09:30").unwrap()).unwrap();
            encode_png(&generate_image(&model, &[e], t, i as u64).unwrap()).unwrap()
        })
        .collect();
    let app = router(AppState::with_model(model, 0, 16).unwrap());
    let tasks: Vec<_> = colors
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let app = app.clone();
            let body = scene(0.2 + 0.1 * i as f64, c, "09:30", i as u64);
            tokio::spawn(async move { send(&app, post(&body)).await })
        })
        .collect();
    for (i, t) in tasks.into_iter().enumerate() {
        let (status, bytes) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(bytes, expected[i], "response {i} belongs to another request");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn full_queue_answers_503_and_health_stays_responsive() {
    let app = router(AppState::with_model(model(), 0, 1).unwrap());
    let tasks: Vec<_> = (0..12)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move { send(&app, post(&scene(0.5, "red", "12:00", i))).await.0 })
        })
        .collect();
    let (status, _) = send(&app, get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    let mut codes = Vec::new();
    for t in tasks {
        codes.push(t.await.unwrap());
    }
    assert!(codes.contains(&StatusCode::OK));
    assert!(codes.iter().all(|c| *c == StatusCode::OK || *c == StatusCode::SERVICE_UNAVAILABLE));
}
