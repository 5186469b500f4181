mod common;

use std::time::Duration;

use common::{Fixture, ALICE, BOB};
use hyper::Method;
use lgrid_delegation::{
    decode_frame, encode_frame, ClientError, ClientOptions, DelegationMessage, FaultCode,
};
use lgrid_gateway::views::FRAME_CONTENT_TYPE;

fn fault(body: &[u8]) -> FaultCode {
    match decode_frame::<DelegationMessage>(body).unwrap() {
        DelegationMessage::Fault { code, .. } => code,
        other => panic!("expected a fault, got {}", other.kind()),
    }
}

#[tokio::test]
async fn delegation_yields_token_and_stored_proxy() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let mut client = fx.client(Some(&alice));
    let delegated = client
        .delegate(&alice, &ClientOptions::default())
        .await
        .unwrap();
    assert_eq!(delegated.token.len(), 32);
    assert_eq!(delegated.transcript.round_trips(), 2);
    assert_eq!(delegated.transcript.key_leak_hits(&alice.key), 0);
    let state = fx.gateway().state();
    let session = state.tokens.lookup(&delegated.token).unwrap();
    assert_eq!(session.dn.to_string(), ALICE);
    let stored = state
        .store
        .active(&session.user_id, state.clock.now())
        .unwrap();
    assert_eq!(stored.fingerprint, delegated.ack.proxy_fingerprint);
    assert!(client.list().await.unwrap().is_empty());
}

#[tokio::test]
async fn init_for_another_dn_is_refused() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let mut client = fx.client(Some(&alice));
    let init = DelegationMessage::init(BOB.parse().unwrap());
    let response = client
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            encode_frame(&init),
            false,
        )
        .await
        .unwrap();
    assert_eq!(response.status, 403);
    assert_eq!(fault(&response.body), FaultCode::DnMismatch);
    assert!(response.headers.get("x-lgrid-token").is_none());
}

#[tokio::test]
async fn delegation_without_client_certificate_is_refused() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let mut anonymous = fx.client(None);
    let err = anonymous
        .delegate(&alice, &ClientOptions::default())
        .await
        .unwrap_err();
    assert_eq!(err.fault_code(), Some(FaultCode::DnMismatch), "{err}");
    assert!(fx.gateway().state().tokens.is_empty());
}

#[tokio::test]
async fn replayed_signed_proxy_is_rejected() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let mut client = fx.client(Some(&alice));
    let delegated = client
        .delegate(&alice, &ClientOptions::default())
        .await
        .unwrap();
    let signed = delegated
        .transcript
        .entries()
        .iter()
        .find(|e| e.kind == "SignedProxy")
        .unwrap()
        .payload
        .clone();

    // Same connection: the session already completed.
    let again = client
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            signed.clone(),
            true,
        )
        .await
        .unwrap();
    assert_eq!(again.status, 409);
    assert_eq!(fault(&again.body), FaultCode::BadState);

    // New connection: the session id means nothing there.
    client.disconnect();
    let elsewhere = client
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            signed,
            false,
        )
        .await
        .unwrap();
    assert_eq!(elsewhere.status, 409);
    assert_eq!(fault(&elsewhere.body), FaultCode::UnknownSession);
    assert_eq!(fx.gateway().state().tokens.len(), 1);
}

#[tokio::test]
async fn garbage_frame_is_malformed() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let mut client = fx.client(Some(&alice));
    let response = client
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            b"\x00\x00\x00\x03{{{".to_vec(),
            false,
        )
        .await
        .unwrap();
    assert_eq!(response.status, 400);
    assert_eq!(fault(&response.body), FaultCode::Malformed);
}

#[tokio::test]
async fn client_detects_gateway_impersonation() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let identity = lgrid_delegation::tls::TlsIdentity {
        cert: alice.cert.clone(),
        key: alice.key.clone(),
    };
    let tls = lgrid_delegation::tls::ClientTls::new(
        &fx.pki.trust,
        Some(&identity),
        Some("/CN=other".parse().unwrap()),
    )
    .unwrap();
    let mut client = lgrid_gateway::GatewayClient::new(fx.addr(), tls);
    let err = client
        .delegate(&alice, &ClientOptions::default())
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)), "{err}");
}

fn browser_mode(settings: &mut lgrid_gateway::GatewaySettings) {
    settings.delegation.require_client_certificate = false;
}

#[tokio::test]
async fn certless_client_delegates_when_allowed() {
    let fx = Fixture::start_with(Duration::from_millis(5), browser_mode).await;
    let alice = fx.pki.user(ALICE);
    let mut browser = fx.client(None);
    let options = ClientOptions {
        present_certificate: true,
        ..ClientOptions::default()
    };
    let delegated = browser.delegate(&alice, &options).await.unwrap();
    assert_eq!(delegated.transcript.key_leak_hits(&alice.key), 0);
    let session = fx
        .gateway()
        .state()
        .tokens
        .lookup(&delegated.token)
        .unwrap();
    assert_eq!(session.dn.to_string(), ALICE);
    assert!(browser.list().await.unwrap().is_empty());
}

#[tokio::test]
async fn certless_client_without_certificate_in_init_is_refused() {
    let fx = Fixture::start_with(Duration::from_millis(5), browser_mode).await;
    let alice = fx.pki.user(ALICE);
    let mut browser = fx.client(None);
    let err = browser
        .delegate(&alice, &ClientOptions::default())
        .await
        .unwrap_err();
    assert_eq!(err.fault_code(), Some(FaultCode::DnMismatch), "{err}");
    assert!(fx.gateway().state().tokens.is_empty());
}

#[tokio::test]
async fn presented_certificate_is_ignored_when_client_certificates_are_required() {
    let fx = Fixture::start(Duration::from_millis(5)).await;
    let alice = fx.pki.user(ALICE);
    let mut browser = fx.client(None);
    let options = ClientOptions {
        present_certificate: true,
        ..ClientOptions::default()
    };
    let err = browser.delegate(&alice, &options).await.unwrap_err();
    assert_eq!(err.fault_code(), Some(FaultCode::DnMismatch), "{err}");
    assert!(fx.gateway().state().tokens.is_empty());
}

/// Browsers may send the two delegation requests over different
/// connections; the session id alone carries the exchange.
#[tokio::test]
async fn certless_session_survives_a_new_connection_once() {
    use chrono::{TimeDelta, Utc};
    use lgrid_pki::{sign_proxy_csr, CertificateSigningRequest, ProxyOptions};

    let fx = Fixture::start_with(Duration::from_millis(5), browser_mode).await;
    let alice = fx.pki.user(ALICE);
    let mut browser = fx.client(None);
    let init = DelegationMessage::Init {
        subject_dn: alice.cert.subject().clone(),
        user_cert_pem: Some(alice.cert.to_pem()),
    };
    let response = browser
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            encode_frame(&init),
            false,
        )
        .await
        .unwrap();
    assert_eq!(response.status, 200);
    let DelegationMessage::CsrReply {
        session_id,
        csr_pem,
    } = decode_frame(&response.body).unwrap()
    else {
        panic!("expected a CSR");
    };
    assert_eq!(fx.gateway().state().pending.len(), 1);

    let csr = CertificateSigningRequest::from_pem(csr_pem.as_bytes()).unwrap();
    let proxy = sign_proxy_csr(
        &alice.cert,
        &alice.key,
        &csr,
        TimeDelta::hours(1),
        Utc::now(),
        ProxyOptions::default(),
    )
    .unwrap();
    let signed = encode_frame(&DelegationMessage::SignedProxy {
        session_id,
        proxy_cert_pem: proxy.to_pem(),
    });
    browser.disconnect();
    let ack = browser
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            signed.clone(),
            false,
        )
        .await
        .unwrap();
    assert_eq!(ack.status, 200);
    assert!(matches!(
        decode_frame(&ack.body).unwrap(),
        DelegationMessage::Ack { .. }
    ));
    assert!(ack.headers.get("x-lgrid-token").is_some());
    assert!(fx.gateway().state().pending.is_empty());

    let replay = browser
        .send(
            Method::POST,
            "/delegate",
            Some(FRAME_CONTENT_TYPE),
            signed,
            false,
        )
        .await
        .unwrap();
    assert_eq!(replay.status, 409);
    assert_eq!(fault(&replay.body), FaultCode::UnknownSession);
    assert_eq!(fx.gateway().state().tokens.len(), 1);
}
