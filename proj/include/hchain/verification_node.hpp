#pragma once

#include "hchain/audit.hpp"
#include "hchain/directory.hpp"
#include "hchain/ledger.hpp"
#include "hchain/payload.hpp"

#include <map>
#include <optional>
#include <string>

namespace hchain {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_distance(const GeoCoordinate& a, const GeoCoordinate& b);

struct SignatureCheck {
    enum class Kind { Valid, UnknownKey, VerifyFailed };
    Kind kind = Kind::Valid;
    bool valid() const { return kind == Kind::Valid; }
};

struct LocationCheck {
    enum class Kind { Authenticated, Rejected, DecryptFailure };
    Kind kind = Kind::DecryptFailure;
    double distance_m = 0.0;
    bool authenticated() const { return kind == Kind::Authenticated; }
};

struct PatientRef {
    std::string ledger_patient_id;
    DirectoryRecord record;
};

struct VnOutcome {
    bool stored = false;
    /// Stage that decided the outcome: "parse", "sig", "loc", "id", "replay"
    /// or "tx".
    std::string stage;
    std::string detail;
    std::optional<TxReceipt> receipt;
};

/// Provider-side verification node: edge signature, location, identity, then
/// countersign and ledger submission.
///
/// Extension: per-patient seq_no freshness. A GPD whose seq_no is not above
/// the highest one stored for that patient is rejected at stage "replay".
class VerificationNode {
public:
    /// hcp is the ledger account transactions are submitted under. directory
    /// and ledger must outlive the node. Throws ConfigError if radius <= 0.
    VerificationNode(crypto::SignatureKeyPair keypair, double home_radius_m, const SecuredDirectory& directory,
                     Ledger& ledger, Account hcp, const LogicalClock& clock, AuditLog* audit = nullptr);

    void trust_edge_key(const crypto::PublicKey& key);

    SignatureCheck verify_edge_signature(const SignedGpd& sgpd) const;

    /// Directory record whose escrowed key opens the GPD's location. The
    /// identity token is tried first as a lookup key; failing that, every
    /// enrolled record's key is tried. Returns nothing if no key opens it.
    std::optional<DirectoryRecord> resolve_location_record(const SignedGpd& sgpd) const;

    /// Decrypts location_ct with the record's escrowed key and compares it to
    /// the stored home coordinate.
    LocationCheck authenticate_location(const SignedGpd& sgpd, const DirectoryRecord& record) const;

    /// Byte-equality lookup of the identity token. When the location stage
    /// resolved a record, the token must name that same record.
    std::optional<PatientRef> authenticate_identity(const SignedGpd& sgpd,
                                                    const DirectoryRecord* location_record = nullptr) const;

    /// Attaches the countersignature and submits append_gpd. Throws
    /// ContractRejection.
    TxReceipt countersign_and_submit(const SignedGpd& sgpd, const PatientRef& patient);

    VnOutcome handle(const SignedGpd& sgpd);
    VnOutcome handle_incoming(std::string_view wire);

    const crypto::SignatureKeyPair& keypair() const { return keypair_; }
    double home_radius_m() const { return radius_m_; }

private:
    void audit(const std::string& stage, const std::string& outcome, const std::string& detail);

    crypto::SignatureKeyPair keypair_;
    double radius_m_;
    const SecuredDirectory& directory_;
    Ledger& ledger_;
    Account hcp_;
    const LogicalClock& clock_;
    AuditLog* audit_;
    std::map<std::string, crypto::PublicKey> trusted_edges_;
    std::map<std::string, std::uint64_t> highest_seq_;
};

} // namespace hchain
