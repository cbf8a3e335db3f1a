use std::path::PathBuf;

use riskboard_service::ServiceConfig;

fn usage() -> ! {
    eprintln!("usage: riskboard-server [--config FILE]");
    std::process::exit(1);
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let mut args = std::env::args().skip(1);
    let mut config_path: Option<PathBuf> = None;
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--config" | "-c" => config_path = Some(args.next().unwrap_or_else(|| usage()).into()),
            _ => usage(),
        }
    }
    let config = ServiceConfig::load(config_path.as_deref())?;
    riskboard_service::serve(&config).await
}
