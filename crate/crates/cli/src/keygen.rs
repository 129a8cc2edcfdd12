use std::path::PathBuf;

use clap::Args;
use hearthwire_core::crypto::DEFAULT_KEY_BITS;
use hearthwire_core::{generate_keypair, CryptoError};
use hearthwire_kdc::{KdcClient, KdcClientError};

use crate::{announce, CliError};

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// 1024, 2048 or 4096.
    #[arg(long, default_value_t = DEFAULT_KEY_BITS, env = "HEARTHWIRE_KEY_BITS")]
    pub bits: usize,
    #[arg(long, default_value = "client1", env = "HEARTHWIRE_CLIENT_ID")]
    pub client_id: String,
    /// Writes `{client_id}.key` and `{client_id}.pub` here.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// KDC base URL to register the public key with.
    #[arg(long, value_name = "KDC_URL")]
    pub register: Option<String>,
    #[arg(long, env = "HEARTHWIRE_KDC_TOKEN")]
    pub token: Option<String>,
}

pub(crate) fn kdc_error(e: KdcClientError) -> CliError {
    match e {
        e if e.is_connectivity() => CliError::Connectivity(e.to_string()),
        KdcClientError::Unauthorized(_) => CliError::Auth(e.to_string()),
        KdcClientError::BadRequest(_) => CliError::Validation(e.to_string()),
        other => CliError::Failure(other.to_string()),
    }
}

pub async fn run(args: KeygenArgs) -> Result<(), CliError> {
    let pair = match generate_keypair(args.bits) {
        Err(e @ CryptoError::UnsupportedKeySize(_)) => return Err(CliError::Usage(e.to_string())),
        other => other.map_err(|e| CliError::Failure(e.to_string()))?,
    };
    let files = pair
        .write_files(&args.out_dir, &args.client_id)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    announce(format!("private key: {}", files.private.display()));
    announce(format!("public key: {}", files.public.display()));
    if let Some(url) = args.register {
        let mut client = KdcClient::new(url.trim_end_matches('/'));
        if let Some(token) = args.token {
            client = client.with_token(token);
        }
        client.register(&args.client_id, &pair.public).await.map_err(kdc_error)?;
        announce(format!("registered {} with {url}", args.client_id));
    }
    Ok(())
}
