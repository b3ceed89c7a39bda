#pragma once

#include "hchain/payload.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hchain {

class EmptyBatch : public Error {
public:
    EmptyBatch() : Error("cannot build a GPD from zero readings") {}
};

struct PatientEdgeConfig {
    std::string patient_identity;
    crypto::SecretKey secret_key;
    GeoCoordinate home_location;
    std::size_t batch_size = 5;
    /// Where the device believes it is at each emission. Defaults to home.
    std::function<GeoCoordinate()> current_location;
};

/// Patient-side edge device. Encrypts and hashes each reading as it arrives
/// and emits a grouped, digest-bound GPD every batch_size readings.
class PatientEdge {
public:
    /// rng must outlive the device. Throws ConfigError on batch_size 0 or an
    /// empty identity.
    PatientEdge(PatientEdgeConfig config, crypto::Rng& rng);

    std::optional<GroupedPatientData> ingest_reading(const PhysiologicalReading& reading);

    GroupedPatientData build_gpd(std::vector<EncryptedReading> readings, std::int64_t now_ms);

    EncryptedReading encrypt_reading(const PhysiologicalReading& reading);

    const crypto::IdentityToken& identity_token() const { return token_; }
    std::uint64_t next_seq_no() const { return next_seq_; }
    std::size_t buffered() const { return buffer_.size(); }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    PatientEdgeConfig config_;
    crypto::Rng& rng_;
    crypto::IdentityToken token_;
    std::vector<EncryptedReading> buffer_;
    std::optional<std::int64_t> last_captured_;
    std::uint64_t next_seq_ = 1;
    std::vector<std::string> warnings_;
};

/// Inverse of the device-side reading encryption.
PhysiologicalReading decrypt_reading(const crypto::SecretKey& key, const EncryptedReading& r);

} // namespace hchain
