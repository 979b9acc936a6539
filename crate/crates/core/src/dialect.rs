//! FTP command-set negotiation between GridFTP and GSI-pftp speakers.
//!
//! Both dialects share AUTH/ADAT and the RFC959 base; everything else is
//! optional, so two speakers agree on the intersection of what they offer.

use alloc::collections::BTreeSet;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::protocols::DataPath;
use crate::testbed::HostId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DialectFeature {
    Spas,
    Spor,
    Etet,
    Esto,
    Sbuf,
    Dcau,
    Pbsz,
    Pclo,
    Porpn,
    Ppor,
    Prot,
    Prtr,
    Psto,
    Auth,
    Adat,
    Rfc959Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureGroup {
    GridFtpUnique,
    GsiPftpUnique,
    Common,
}

impl DialectFeature {
    pub const ALL: [DialectFeature; 16] = [
        Self::Spas,
        Self::Spor,
        Self::Etet,
        Self::Esto,
        Self::Sbuf,
        Self::Dcau,
        Self::Pbsz,
        Self::Pclo,
        Self::Porpn,
        Self::Ppor,
        Self::Prot,
        Self::Prtr,
        Self::Psto,
        Self::Auth,
        Self::Adat,
        Self::Rfc959Base,
    ];

    // Exhaustive on purpose: a new variant will not compile until classified.
    pub const fn group(self) -> FeatureGroup {
        use DialectFeature::*;
        match self {
            Spas | Spor | Etet | Esto | Sbuf | Dcau => FeatureGroup::GridFtpUnique,
            Pbsz | Pclo | Porpn | Ppor | Prot | Prtr | Psto => FeatureGroup::GsiPftpUnique,
            Auth | Adat | Rfc959Base => FeatureGroup::Common,
        }
    }

    pub const fn command(self) -> &'static str {
        use DialectFeature::*;
        match self {
            Spas => "SPAS",
            Spor => "SPOR",
            Etet => "ETET",
            Esto => "ESTO",
            Sbuf => "SBUF",
            Dcau => "DCAU",
            Pbsz => "PBSZ",
            Pclo => "PCLO",
            Porpn => "PORPN",
            Ppor => "PPOR",
            Prot => "PROT",
            Prtr => "PRTR",
            Psto => "PSTO",
            Auth => "AUTH",
            Adat => "ADAT",
            Rfc959Base => "RFC959",
        }
    }
}

impl fmt::Display for DialectFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown FTP feature `{0}`")]
pub struct UnknownFeature(pub String);

impl FromStr for DialectFeature {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        let up = if up == "RFC959-BASE" { "RFC959" } else { up.as_str() };
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.command() == up)
            .ok_or_else(|| UnknownFeature(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    GridFtp,
    GsiPftp,
    /// Bare RFC959 without security extensions.
    Plain,
}

impl Dialect {
    /// Everything a stock speaker of this dialect offers.
    pub fn features(self) -> BTreeSet<DialectFeature> {
        let group = match self {
            Dialect::GridFtp => FeatureGroup::GridFtpUnique,
            Dialect::GsiPftp => FeatureGroup::GsiPftpUnique,
            Dialect::Plain => return BTreeSet::from([DialectFeature::Rfc959Base]),
        };
        DialectFeature::ALL
            .iter()
            .copied()
            .filter(|f| f.group() == group || f.group() == FeatureGroup::Common)
            .collect()
    }
}

impl FromStr for Dialect {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gridftp" => Ok(Dialect::GridFtp),
            "gsi-pftp" | "gsipftp" | "gsi_pftp" => Ok(Dialect::GsiPftp),
            "plain" => Ok(Dialect::Plain),
            _ => Err(UnknownFeature(s.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerProfile {
    pub role: Role,
    pub dialect: Dialect,
    pub offered: BTreeSet<DialectFeature>,
    pub required: BTreeSet<DialectFeature>,
    pub realm: String,
    /// Buffer size this side asks for through SBUF.
    pub sbuf: Option<u64>,
}

pub const DEFAULT_REALM: &str = "GRID";

impl SpeakerProfile {
    pub fn new(role: Role, dialect: Dialect) -> Self {
        Self {
            role,
            dialect,
            offered: dialect.features(),
            required: BTreeSet::new(),
            realm: DEFAULT_REALM.into(),
            sbuf: None,
        }
    }

    pub fn gridftp(role: Role) -> Self {
        Self::new(role, Dialect::GridFtp)
    }

    pub fn gsi_pftp(role: Role) -> Self {
        Self::new(role, Dialect::GsiPftp)
    }

    pub fn plain(role: Role) -> Self {
        Self::new(role, Dialect::Plain)
    }

    pub fn require(mut self, feature: DialectFeature) -> Self {
        self.required.insert(feature);
        self
    }

    pub fn with_realm(mut self, realm: impl Into<String>) -> Self {
        self.realm = realm.into();
        self
    }

    pub fn with_sbuf(mut self, bytes: u64) -> Self {
        self.sbuf = Some(bytes);
        self
    }

    pub fn validate(&self) -> Result<(), DialectError> {
        if let Some(f) = self.required.difference(&self.offered).next() {
            return Err(DialectError::RequiredNotOffered(*f));
        }
        if self.dialect == Dialect::Plain {
            if let Some(f) = self.offered.iter().find(|f| **f != DialectFeature::Rfc959Base) {
                return Err(DialectError::PlainExtension(*f));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelMechanism {
    /// GridFTP striped passive/active ports.
    SpasSpor,
    /// GSI-pftp parallel ports. The pairing with SPAS/SPOR is our mapping.
    PporPorpn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionAgreement {
    pub agreed: BTreeSet<DialectFeature>,
    pub parallel: Option<ParallelMechanism>,
    pub data_path: DataPath,
    pub client_realm: String,
    pub server_realm: String,
    sbuf: Option<u64>,
}

impl SessionAgreement {
    pub fn has(&self, f: DialectFeature) -> bool {
        self.agreed.contains(&f)
    }

    /// Streams actually usable when `requested` are asked for.
    pub fn usable_streams(&self, requested: u32) -> u32 {
        if self.parallel.is_some() {
            requested.max(1)
        } else {
            1
        }
    }

    /// TCP buffer override negotiated through SBUF, if any.
    pub fn tcp_buffer_override(&self) -> Option<u64> {
        self.sbuf.filter(|_| self.has(DialectFeature::Sbuf))
    }

    pub fn routed(mut self, deployment: PftpdDeployment, data_host: HostId) -> Self {
        self.data_path = select_data_path(deployment, data_host);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialectError {
    #[error("peer does not support required feature {feature}")]
    RequiredFeatureUnsupported { feature: DialectFeature },
    #[error("feature {0} is required but not offered by the same speaker")]
    RequiredNotOffered(DialectFeature),
    #[error("plain FTP cannot offer extension {0}")]
    PlainExtension(DialectFeature),
    #[error("both speakers claim the same role")]
    RoleMismatch,
    #[error("agreement lacks {0}; cannot authenticate")]
    MissingAuth(DialectFeature),
}

pub fn negotiate(client: &SpeakerProfile, server: &SpeakerProfile) -> Result<SessionAgreement, DialectError> {
    client.validate()?;
    server.validate()?;
    if client.role == server.role {
        return Err(DialectError::RoleMismatch);
    }
    let mut agreed: BTreeSet<DialectFeature> = client.offered.intersection(&server.offered).copied().collect();
    agreed.insert(DialectFeature::Rfc959Base);
    // Both sides' demands are checked so the outcome does not depend on argument order.
    for side in [client, server] {
        if let Some(f) = side.required.iter().find(|f| !agreed.contains(f)) {
            return Err(DialectError::RequiredFeatureUnsupported { feature: *f });
        }
    }
    let both = |a, b| agreed.contains(&a) && agreed.contains(&b);
    let parallel = if both(DialectFeature::Spas, DialectFeature::Spor) {
        Some(ParallelMechanism::SpasSpor)
    } else if both(DialectFeature::Ppor, DialectFeature::Porpn) {
        Some(ParallelMechanism::PporPorpn)
    } else {
        None
    };
    let (c, s) = match client.role {
        Role::Client => (client, server),
        Role::Server => (server, client),
    };
    Ok(SessionAgreement {
        agreed,
        parallel,
        data_path: DataPath::Direct,
        client_realm: c.realm.clone(),
        server_realm: s.realm.clone(),
        sbuf: c.sbuf.or(s.sbuf),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthOutcome {
    Authenticated,
    Rejected,
}

/// Abstract AUTH/ADAT token exchange: realms must match.
pub fn auth_handshake(agreement: &SessionAgreement) -> Result<AuthOutcome, DialectError> {
    for f in [DialectFeature::Auth, DialectFeature::Adat] {
        if !agreement.has(f) {
            return Err(DialectError::MissingAuth(f));
        }
    }
    Ok(if agreement.client_realm == agreement.server_realm {
        AuthOutcome::Authenticated
    } else {
        AuthOutcome::Rejected
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PftpdDeployment {
    /// Kerberos pftpd on the core server; movers talk to the client directly.
    KerberosOnCore,
    /// GSI pftpd on one host, relaying anything stored elsewhere.
    Gsi { host: HostId },
}

pub fn select_data_path(deployment: PftpdDeployment, data_host: HostId) -> DataPath {
    match deployment {
        PftpdDeployment::KerberosOnCore => DataPath::Direct,
        PftpdDeployment::Gsi { host } if host == data_host => DataPath::Direct,
        PftpdDeployment::Gsi { host } => DataPath::Relay { via: host },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn every_feature_in_one_group() {
        let count = |g| DialectFeature::ALL.iter().filter(|f| f.group() == g).count();
        assert_eq!(count(FeatureGroup::GridFtpUnique), 6);
        assert_eq!(count(FeatureGroup::GsiPftpUnique), 7);
        assert_eq!(count(FeatureGroup::Common), 3);
        for f in DialectFeature::ALL {
            assert_eq!(f.command().parse::<DialectFeature>(), Ok(f));
        }
        assert!("XYZ".parse::<DialectFeature>().is_err());
    }

    #[test]
    fn gridftp_without_dcau_talks_to_gsi_pftp() {
        let a = negotiate(&SpeakerProfile::gridftp(Role::Client), &SpeakerProfile::gsi_pftp(Role::Server)).unwrap();
        let common: BTreeSet<_> = [DialectFeature::Auth, DialectFeature::Adat, DialectFeature::Rfc959Base].into();
        assert_eq!(a.agreed, common);
        assert_eq!(a.parallel, None);
        assert_eq!(a.usable_streams(4), 1);
        assert_eq!(auth_handshake(&a), Ok(AuthOutcome::Authenticated));
    }

    #[test]
    fn dcau_demand_fails_against_gsi_pftp() {
        let client = SpeakerProfile::gridftp(Role::Client).require(DialectFeature::Dcau);
        assert_eq!(
            negotiate(&client, &SpeakerProfile::gsi_pftp(Role::Server)),
            Err(DialectError::RequiredFeatureUnsupported {
                feature: DialectFeature::Dcau
            })
        );
    }

    #[test]
    fn identical_dialects_agree_on_everything() {
        let a = negotiate(&SpeakerProfile::gsi_pftp(Role::Client), &SpeakerProfile::gsi_pftp(Role::Server)).unwrap();
        assert_eq!(a.agreed, Dialect::GsiPftp.features());
        assert_eq!(a.parallel, Some(ParallelMechanism::PporPorpn));
        assert_eq!(a.usable_streams(4), 4);
        let g = negotiate(&SpeakerProfile::gridftp(Role::Client), &SpeakerProfile::gridftp(Role::Server)).unwrap();
        assert_eq!(g.parallel, Some(ParallelMechanism::SpasSpor));
    }

    #[test]
    fn auth_outcomes() {
        let server = SpeakerProfile::gsi_pftp(Role::Server).with_realm("KEK");
        let ok = negotiate(&SpeakerProfile::gsi_pftp(Role::Client).with_realm("KEK"), &server).unwrap();
        assert_eq!(auth_handshake(&ok), Ok(AuthOutcome::Authenticated));
        let bad = negotiate(&SpeakerProfile::gsi_pftp(Role::Client).with_realm("CERN"), &server).unwrap();
        assert_eq!(auth_handshake(&bad), Ok(AuthOutcome::Rejected));
        let plain = negotiate(&SpeakerProfile::plain(Role::Client), &server).unwrap();
        assert_eq!(auth_handshake(&plain), Err(DialectError::MissingAuth(DialectFeature::Auth)));
    }

    #[test]
    fn malformed_profiles_rejected() {
        let p = SpeakerProfile::gsi_pftp(Role::Client).require(DialectFeature::Dcau);
        assert_eq!(p.validate(), Err(DialectError::RequiredNotOffered(DialectFeature::Dcau)));
        let mut plain = SpeakerProfile::plain(Role::Client);
        plain.offered.insert(DialectFeature::Auth);
        assert_eq!(plain.validate(), Err(DialectError::PlainExtension(DialectFeature::Auth)));
        assert_eq!(
            negotiate(&SpeakerProfile::gridftp(Role::Client), &SpeakerProfile::gridftp(Role::Client)),
            Err(DialectError::RoleMismatch)
        );
    }

    #[test]
    fn sbuf_override_needs_agreement() {
        let client = SpeakerProfile::gridftp(Role::Client).with_sbuf(1 << 20);
        let g = negotiate(&client, &SpeakerProfile::gridftp(Role::Server)).unwrap();
        assert_eq!(g.tcp_buffer_override(), Some(1 << 20));
        let p = negotiate(&client, &SpeakerProfile::gsi_pftp(Role::Server)).unwrap();
        assert_eq!(p.tcp_buffer_override(), None);
    }

    #[test]
    fn data_path_selection() {
        let (a, b) = (HostId(1), HostId(2));
        assert_eq!(select_data_path(PftpdDeployment::KerberosOnCore, a), DataPath::Direct);
        assert_eq!(select_data_path(PftpdDeployment::Gsi { host: a }, a), DataPath::Direct);
        assert_eq!(select_data_path(PftpdDeployment::Gsi { host: a }, b), DataPath::Relay { via: a });
    }

    fn arb_profile(role: Role) -> impl Strategy<Value = SpeakerProfile> {
        (
            prop_oneof![Just(Dialect::GridFtp), Just(Dialect::GsiPftp), Just(Dialect::Plain)],
            proptest::collection::vec(0usize..16, 0..3),
        )
            .prop_map(move |(d, req)| {
                let mut p = SpeakerProfile::new(role, d);
                let offered: Vec<_> = p.offered.iter().copied().collect();
                for i in req {
                    p.required.insert(offered[i % offered.len()]);
                }
                p
            })
    }

    proptest! {
        #[test]
        fn negotiation_is_symmetric_and_bounded(c in arb_profile(Role::Client), s in arb_profile(Role::Server)) {
            let ab = negotiate(&c, &s);
            let ba = negotiate(&s, &c);
            prop_assert_eq!(ab.is_ok(), ba.is_ok());
            if let (Ok(ab), Ok(ba)) = (ab, ba) {
                prop_assert_eq!(&ab.agreed, &ba.agreed);
                for f in &ab.agreed {
                    prop_assert!(*f == DialectFeature::Rfc959Base || (c.offered.contains(f) && s.offered.contains(f)));
                }
            }
        }
    }
}
