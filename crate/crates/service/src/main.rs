use std::sync::Arc;

use wrangle_service::{router, AppState, Config};

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = match Config::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let state = Arc::new(AppState::from_config(&config));
    let listener = match tokio::net::TcpListener::bind(config.bind).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", config.bind);
            std::process::exit(2);
        }
    };
    log::info!("listening on {}", config.bind);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await {
        eprintln!("error: {e}");
    }
    if let Some(path) = &config.snapshot {
        match state.write_snapshot(path) {
            Ok(()) => log::info!("wrote snapshot to {}", path.display()),
            Err(e) => eprintln!("error: snapshot to {}: {e}", path.display()),
        }
    }
}
