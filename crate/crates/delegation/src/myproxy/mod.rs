//! A minimal external credential repository in the style of MyProxy, used
//! as the baseline the embedded delegation is compared against.
//!
//! Each operation opens its own TLS connection and takes two round trips:
//!
//! ```text
//! put:  PutCommand -> Ok          Credential{bundle} -> Stored
//! get:  GetCommand -> Ok{dn}      Csr{csr}           -> Certificates{chain}
//! ```

mod client;
mod protocol;
mod server;

pub use client::{
    local_proxy_bundle, myproxy_get, myproxy_put, MyProxyEndpoint, MyProxyError, Receipt,
};
pub use protocol::{MyProxyErrorCode, MyProxyReply, MyProxyRequest};
pub use server::{MyProxyServer, DEFAULT_MYPROXY_PORT};
