#pragma once

#include "hchain/audit.hpp"
#include "hchain/payload.hpp"

#include <optional>
#include <string>

namespace hchain {

struct IntegrityResult {
    enum class Kind { Valid, PerReading, Group };
    Kind kind = Kind::Valid;
    /// Zero-based index of the first mismatching reading (PerReading only).
    std::size_t index = 0;

    bool valid() const { return kind == Kind::Valid; }
};

struct EdgeOutcome {
    bool forwarded = false;
    /// "parse", "shape", "integrity" when discarded.
    std::string reason;
    std::optional<SignedGpd> signed_gpd;
};

/// Provider-side ingress. Holds no patient key: it works on ciphertext and
/// digests only.
class HcpEdge {
public:
    HcpEdge(crypto::SignatureKeyPair keypair, const LogicalClock& clock, AuditLog* audit = nullptr);

    IntegrityResult verify_integrity(const GroupedPatientData& gpd) const;

    /// Precondition: verify_integrity(gpd) is Valid.
    SignedGpd sign_and_forward(const GroupedPatientData& gpd);

    EdgeOutcome handle_incoming(std::string_view wire);

    const crypto::SignatureKeyPair& keypair() const { return keypair_; }
    std::uint64_t accepted() const { return accepted_; }
    std::uint64_t discarded() const { return discarded_; }
    std::uint64_t received() const { return received_; }

private:
    EdgeOutcome discard(std::string reason, std::string detail, std::optional<std::uint64_t> seq_no);

    crypto::SignatureKeyPair keypair_;
    const LogicalClock& clock_;
    AuditLog* audit_;
    std::uint64_t accepted_ = 0;
    std::uint64_t discarded_ = 0;
    std::uint64_t received_ = 0;
};

} // namespace hchain
