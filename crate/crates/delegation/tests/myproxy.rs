mod common;

use chrono::{Duration, Utc};
use common::{delegate, Pki};
use lgrid_delegation::myproxy::{local_proxy_bundle, myproxy_get, myproxy_put, MyProxyErrorCode};
use lgrid_pki::{validate_proxy_bundle, ProxyCredential, ProxyOptions};

#[tokio::test]
async fn put_then_get_yields_bundle_rooted_in_stored_credential() {
    let pki = Pki::new();
    let alice = pki.user("/C=IT/O=Test/CN=Alice");
    let mp = pki.start_myproxy().await;
    let upload = pki.endpoint(&mp.addr, Some(&alice), Some(&mp.server_cert));
    let bundle = local_proxy_bundle(&alice, Duration::days(7), ProxyOptions::default()).unwrap();
    let stored = ProxyCredential::parse(&bundle).unwrap();

    let (receipt, put_log) =
        myproxy_put(&upload, "alice", "s3cret pass", &bundle, Duration::days(7))
            .await
            .unwrap();
    assert_eq!(receipt.id, stored.proxy_cert.fingerprint());
    assert_eq!(mp.server.users(), ["alice"]);

    let anonymous = pki.endpoint(&mp.addr, None, Some(&mp.server_cert));
    let (fresh, get_log) = myproxy_get(&anonymous, "alice", "s3cret pass", Duration::hours(12))
        .await
        .unwrap();
    let report =
        validate_proxy_bundle(&fresh, &pki.trust, Utc::now(), ProxyOptions::default()).unwrap();
    assert!(report.is_ok(), "{report}");
    let fresh = ProxyCredential::parse(&fresh).unwrap();
    assert_eq!(fresh.chain[0], stored.proxy_cert);
    assert_eq!(fresh.user_dn(), alice.cert.subject());
    assert!(fresh
        .proxy_cert
        .subject()
        .extends_by_one_cn(stored.proxy_cert.subject()));
    assert!(fresh.proxy_cert.not_after() <= Utc::now() + Duration::hours(12));

    for log in [&put_log, &get_log] {
        assert_eq!(log.connections(), 1);
        assert_eq!(log.round_trips(), 2);
    }
    assert_eq!(
        put_log.kinds(),
        ["PutCommand", "Ok", "Credential", "Stored"]
    );
    assert_eq!(get_log.kinds(), ["GetCommand", "Ok", "Csr", "Certificates"]);
}

#[tokio::test]
async fn get_failures_are_named() {
    let pki = Pki::new();
    let alice = pki.user("/CN=Alice");
    let mp = pki.start_myproxy().await;
    let ep = pki.endpoint(&mp.addr, Some(&alice), None);
    let bundle = local_proxy_bundle(&alice, Duration::days(1), ProxyOptions::default()).unwrap();
    myproxy_put(&ep, "alice", "right", &bundle, Duration::days(1))
        .await
        .unwrap();

    let err = myproxy_get(&ep, "alice", "wrong", Duration::hours(1))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some(MyProxyErrorCode::WrongPassphrase));
    let err = myproxy_get(&ep, "nobody", "right", Duration::hours(1))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some(MyProxyErrorCode::UnknownUser));
}

#[tokio::test]
async fn expired_credential_is_refused() {
    let pki = Pki::new();
    let alice = pki.user("/CN=Alice");
    let mp = pki.start_myproxy().await;
    let ep = pki.endpoint(&mp.addr, Some(&alice), None);
    let bundle = local_proxy_bundle(&alice, Duration::days(1), ProxyOptions::default()).unwrap();
    myproxy_put(&ep, "alice", "pw", &bundle, Duration::seconds(1))
        .await
        .unwrap();
    tokio::time::sleep(std::time::Duration::from_millis(1100)).await;
    let err = myproxy_get(&ep, "alice", "pw", Duration::hours(1))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some(MyProxyErrorCode::CredentialExpired));
}

#[tokio::test]
async fn put_requires_the_credential_owner() {
    let pki = Pki::new();
    let alice = pki.user("/CN=Alice");
    let bob = pki.user("/CN=Bob");
    let mp = pki.start_myproxy().await;
    let bundle = local_proxy_bundle(&alice, Duration::days(1), ProxyOptions::default()).unwrap();

    let as_bob = pki.endpoint(&mp.addr, Some(&bob), None);
    let err = myproxy_put(&as_bob, "alice", "pw", &bundle, Duration::days(1))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some(MyProxyErrorCode::Unauthenticated));
    let anonymous = pki.endpoint(&mp.addr, None, None);
    let err = myproxy_put(&anonymous, "alice", "pw", &bundle, Duration::days(1))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some(MyProxyErrorCode::Unauthenticated));
    assert!(mp.server.users().is_empty());
}

/// Counting both protocols through the transcript recorder: the external
/// flow (put, then get) costs two connections and four round trips, the
/// embedded one a single connection and two round trips.
#[tokio::test]
async fn external_flow_costs_more_round_trips_than_embedded() {
    let pki = Pki::new();
    let alice = pki.user("/CN=Alice");
    let mp = pki.start_myproxy().await;
    let ep = pki.endpoint(&mp.addr, Some(&alice), None);
    let bundle = local_proxy_bundle(&alice, Duration::days(1), ProxyOptions::default()).unwrap();
    let (_, mut external) = myproxy_put(&ep, "alice", "pw", &bundle, Duration::days(1))
        .await
        .unwrap();
    let (_, get) = myproxy_get(&ep, "alice", "pw", Duration::hours(12))
        .await
        .unwrap();
    external.extend(get);

    let service = pki.service(ProxyOptions::default());
    let (_, embedded) = delegate(&service, &alice, Duration::hours(12)).await;

    assert_eq!((external.connections(), external.round_trips()), (2, 4));
    assert_eq!((embedded.connections(), embedded.round_trips()), (1, 2));
    assert!(embedded.total_bytes() < external.total_bytes());
}
