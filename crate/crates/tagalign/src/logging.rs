//! Line-delimited JSON log records on standard error, filtered by the
//! `TAGALIGN_LOG` environment variable (`env_logger` syntax, default `warn`).

use std::io::Write;

pub const LOG_ENV: &str = "TAGALIGN_LOG";

pub fn init() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .try_init();
}
