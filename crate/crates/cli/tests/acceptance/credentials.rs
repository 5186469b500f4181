//! Key confinement and proxy correctness over randomized delegations.

use chrono::{DateTime, TimeDelta, Utc};
use lgrid_delegation::{ClientOptions, Transcript};
use lgrid_jobs::ExecutorConfig;
use lgrid_pki::{
    validate_proxy_bundle, validate_proxy_chain, AlgorithmId, Certificate, KeyPair,
    ProxyCredential, ProxyOptions, UserCredential, ViolationKind, PROXY_CERT_INFO_OID,
};
use openssl::asn1::{Asn1Object, Asn1OctetString, Asn1Time};
use openssl::hash::MessageDigest;
use openssl::pkey::{PKey, Private};
use openssl::x509::{X509Builder, X509Extension, X509NameBuilder, X509};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::world::World;
use crate::{ensure, text, Outcome};

const DELEGATIONS: usize = 100;
const MUTATION_CASES: usize = 30;

fn random_users(world: &World, rng: &mut StdRng, n: usize) -> Result<Vec<UserCredential>, String> {
    (0..n)
        .map(|i| {
            let algorithm = if rng.gen_bool(0.25) {
                AlgorithmId::Rsa2048
            } else {
                AlgorithmId::EcP256
            };
            world.user(&format!("User {i}"), algorithm)
        })
        .collect()
}

fn random_lifetime(rng: &mut StdRng) -> TimeDelta {
    TimeDelta::minutes(rng.gen_range(5..=48 * 60))
}

pub async fn key_confinement() -> Outcome {
    let world = World::start(ExecutorConfig::scripted(std::time::Duration::ZERO), None).await?;
    let mut rng = StdRng::seed_from_u64(0x6b65_7973);
    let users = random_users(&world, &mut rng, 8)?;

    let mut frames = 0;
    let mut hits = 0;
    for _ in 0..DELEGATIONS {
        let user = &users[rng.gen_range(0..users.len())];
        let mut client = world.client(Some(user))?;
        let options = ClientOptions {
            lifetime: random_lifetime(&mut rng),
            ..ClientOptions::default()
        };
        client.delegate(user, &options).await.map_err(text)?;
        // Follow-up API traffic travels the same connection.
        client.list().await.map_err(text)?;
        let transcript = client.transcript();
        ensure!(!transcript.entries().is_empty(), "empty transcript");
        frames += transcript.entries().len();
        hits += transcript.key_leak_hits(&user.key);
    }

    // The scanner must see a key that does cross the wire.
    let probe_user = &users[0];
    let mut probe = Transcript::new();
    probe.record_sent("Probe", &probe_user.key.private_key_pem().map_err(text)?);
    ensure!(
        probe.key_leak_hits(&probe_user.key) > 0,
        "scanner misses a PEM key in a frame"
    );

    ensure!(
        hits == 0,
        "{hits} private-key occurrences in {frames} frames"
    );
    Ok(format!(
        "{DELEGATIONS} delegations, {frames} frames scanned, 0 key occurrences"
    ))
}

/// Changes applied when re-issuing a genuine proxy certificate.
#[derive(Default)]
struct Mutation {
    extra_cn: Option<String>,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    signer: Option<KeyPair>,
}

fn asn1_time(at: DateTime<Utc>) -> Result<Asn1Time, String> {
    Asn1Time::from_unix(at.timestamp()).map_err(text)
}

/// Re-issues `genuine` field by field, signed by the user unless the
/// mutation names another signer.
fn forge(
    genuine: &Certificate,
    user: &UserCredential,
    mutation: &Mutation,
) -> Result<Certificate, String> {
    let source = X509::from_der(genuine.der()).map_err(text)?;
    let mut b = X509Builder::new().map_err(text)?;
    b.set_version(2).map_err(text)?;
    b.set_serial_number(source.serial_number()).map_err(text)?;
    b.set_issuer_name(source.issuer_name()).map_err(text)?;
    match &mutation.extra_cn {
        Some(cn) => {
            let mut name = X509NameBuilder::new().map_err(text)?;
            for entry in source.subject_name().entries() {
                name.append_entry(entry).map_err(text)?;
            }
            name.append_entry_by_text("CN", cn).map_err(text)?;
            b.set_subject_name(&name.build()).map_err(text)?;
        }
        None => b.set_subject_name(source.subject_name()).map_err(text)?,
    }
    match mutation.window {
        Some((from, to)) => {
            b.set_not_before(asn1_time(from)?.as_ref()).map_err(text)?;
            b.set_not_after(asn1_time(to)?.as_ref()).map_err(text)?;
        }
        None => {
            b.set_not_before(source.not_before()).map_err(text)?;
            b.set_not_after(source.not_after()).map_err(text)?;
        }
    }
    b.set_pubkey(source.public_key().map_err(text)?.as_ref())
        .map_err(text)?;
    let pci = genuine
        .extension(PROXY_CERT_INFO_OID)
        .ok_or("genuine proxy lacks proxy-certificate-information")?;
    let oid = Asn1Object::from_str(&pci.oid).map_err(text)?;
    let value = Asn1OctetString::new_from_bytes(&pci.value).map_err(text)?;
    b.append_extension(X509Extension::new_from_der(&oid, pci.critical, &value).map_err(text)?)
        .map_err(text)?;
    let signer = mutation.signer.as_ref().unwrap_or(&user.key);
    let key: PKey<Private> =
        PKey::private_key_from_der(&signer.private_key_der().map_err(text)?).map_err(text)?;
    b.sign(&key, MessageDigest::sha256()).map_err(text)?;
    Certificate::from_der(&b.build().to_der().map_err(text)?).map_err(text)
}

/// Validates the forged credential and requires exactly `expected`, or no
/// violation at all when `expected` is `None`.
fn judge_mutation(
    world: &World,
    genuine: &ProxyCredential,
    user: &UserCredential,
    mutation: &Mutation,
    expected: Option<ViolationKind>,
    now: DateTime<Utc>,
) -> Result<(), String> {
    let forged = ProxyCredential {
        proxy_cert: forge(&genuine.proxy_cert, user, mutation)?,
        proxy_key: None,
        chain: genuine.chain.clone(),
    };
    let report = validate_proxy_chain(&forged, &world.trust, now, ProxyOptions::default());
    let kinds: Vec<ViolationKind> = report.violations.iter().map(|v| v.kind).collect();
    let want: Vec<ViolationKind> = expected.into_iter().collect();
    ensure!(kinds == want, "expected {want:?}, got {kinds:?}");
    Ok(())
}

pub async fn proxy_correctness() -> Outcome {
    let world = World::start(ExecutorConfig::scripted(std::time::Duration::ZERO), None).await?;
    let mut rng = StdRng::seed_from_u64(0x7072_6f78);
    let users = random_users(&world, &mut rng, 6)?;
    let store = &world.gateway.state().store;

    let mut mutations = 0;
    for case in 0..MUTATION_CASES {
        let user = &users[rng.gen_range(0..users.len())];
        let mut client = world.client(Some(user))?;
        let options = ClientOptions {
            lifetime: random_lifetime(&mut rng),
            ..ClientOptions::default()
        };
        let delegated = client.delegate(user, &options).await.map_err(text)?;

        let stored = store
            .get(&user.cert.subject().user_id())
            .ok_or("delegated proxy not in the store")?;
        ensure!(
            stored.fingerprint == delegated.ack.proxy_fingerprint,
            "case {case}: stored fingerprint differs from Ack"
        );
        let now = Utc::now();
        let report =
            validate_proxy_bundle(&stored.bundle, &world.trust, now, ProxyOptions::default())
                .map_err(text)?;
        ensure!(
            report.is_ok(),
            "case {case}: delegated bundle fails validation: {report}"
        );
        let after = validate_proxy_bundle(
            &stored.bundle,
            &world.trust,
            stored.not_after + TimeDelta::seconds(1),
            ProxyOptions::default(),
        )
        .map_err(text)?;
        ensure!(
            after.has(ViolationKind::ProxyExpired),
            "case {case}: bundle still valid past not-after"
        );

        let genuine = ProxyCredential::parse(&stored.bundle).map_err(text)?;
        ensure!(
            genuine.user_cert() == &user.cert,
            "case {case}: chain does not end at the user certificate"
        );

        // The forger reproduces a valid certificate when nothing changes.
        judge_mutation(&world, &genuine, user, &Mutation::default(), None, now)
            .map_err(|e| format!("control: {e}"))?;

        let double_cn = Mutation {
            extra_cn: Some(rng.gen_range(1..u32::MAX).to_string()),
            ..Mutation::default()
        };
        judge_mutation(
            &world,
            &genuine,
            user,
            &double_cn,
            Some(ViolationKind::SubjectExtensionRule),
            now,
        )
        .map_err(|e| format!("case {case} double CN: {e}"))?;

        // A window inside the user's validity that closed before now.
        let start = user.cert.not_before() + TimeDelta::seconds(rng.gen_range(0..600));
        let expired = Mutation {
            window: Some((start, start + TimeDelta::seconds(60))),
            ..Mutation::default()
        };
        judge_mutation(
            &world,
            &genuine,
            user,
            &expired,
            Some(ViolationKind::ProxyExpired),
            now,
        )
        .map_err(|e| format!("case {case} expired window: {e}"))?;

        let algorithm = if rng.gen_bool(0.5) {
            AlgorithmId::EcP256
        } else {
            AlgorithmId::Rsa2048
        };
        let stranger = KeyPair::generate(algorithm).map_err(text)?;
        let wrong_signer = Mutation {
            signer: Some(stranger),
            ..Mutation::default()
        };
        judge_mutation(
            &world,
            &genuine,
            user,
            &wrong_signer,
            Some(ViolationKind::WrongSigner),
            now,
        )
        .map_err(|e| format!("case {case} wrong signer: {e}"))?;
        mutations += 3;
    }
    Ok(format!(
        "{MUTATION_CASES} delegated bundles valid and expiring at not-after; {mutations} mutations each flagged with exactly the named violation"
    ))
}
