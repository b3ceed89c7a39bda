#pragma once

// Patient data in flight: readings, grouped patient data (GPD), signed GPDs,
// and the canonical JSON encoding every hash and signature is computed over.

#include "hchain/crypto.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hchain {

using Json = nlohmann::json;

enum class SensorKind { HeartRate, Spo2, Temperature, BloodPressure };

std::string to_string(SensorKind kind);
SensorKind sensor_kind_from_string(std::string_view name);

struct PhysiologicalReading {
    SensorKind kind = SensorKind::HeartRate;
    /// bpm, %, degrees C, or systolic mmHg.
    double value = 0.0;
    /// Diastolic mmHg; only for BloodPressure.
    std::optional<double> diastolic;
    std::int64_t captured_at_ms = 0;

    friend bool operator==(const PhysiologicalReading&, const PhysiologicalReading&) = default;
};

/// Physical plausibility check. Returns a description of the first violated
/// bound, or nothing. Out-of-range readings are warnings, not rejections.
std::optional<std::string> reading_bounds_warning(const PhysiologicalReading& r);

struct GeoCoordinate {
    double latitude = 0.0;
    double longitude = 0.0;

    bool in_bounds() const;
    friend bool operator==(const GeoCoordinate&, const GeoCoordinate&) = default;
};

struct EncryptedReading {
    crypto::Ciphertext ciphertext;
    crypto::Digest digest;

    friend bool operator==(const EncryptedReading&, const EncryptedReading&) = default;
};

struct GroupedPatientData {
    crypto::IdentityToken identity_token;
    crypto::Ciphertext location_ct;
    std::vector<EncryptedReading> readings;
    std::int64_t created_at_ms = 0;
    std::uint64_t seq_no = 0;
    crypto::Digest group_digest;

    friend bool operator==(const GroupedPatientData&, const GroupedPatientData&) = default;
};

struct SignatureRecord {
    std::string key_id;
    crypto::Signature sig;

    friend bool operator==(const SignatureRecord&, const SignatureRecord&) = default;
};

struct SignedGpd {
    GroupedPatientData gpd;
    SignatureRecord edge_sig;
    std::optional<SignatureRecord> vn_sig;

    friend bool operator==(const SignedGpd&, const SignedGpd&) = default;
};

// JSON mapping ---------------------------------------------------------------

Json to_json(const PhysiologicalReading& r);
Json to_json(const GeoCoordinate& c);
Json to_json(const crypto::Ciphertext& ct);
Json to_json(const EncryptedReading& r);
Json to_json(const GroupedPatientData& gpd);
Json to_json(const SignatureRecord& s);
Json to_json(const SignedGpd& s);

/// The GPD object without its group_digest member.
Json digest_free_json(const GroupedPatientData& gpd);

// Parsers throw ShapeError naming the violated field.
PhysiologicalReading reading_from_json(const Json& j);
GeoCoordinate coordinate_from_json(const Json& j);
crypto::Ciphertext ciphertext_from_json(const Json& j);
GroupedPatientData gpd_from_json(const Json& j);
SignatureRecord signature_record_from_json(const Json& j);
SignedGpd signed_gpd_from_json(const Json& j);

/// Sorted keys, no whitespace, shortest round-trip numbers.
std::string canonical_dump(const Json& j);

template <typename T>
Bytes canonical_encode(const T& value)
{
    return to_bytes(canonical_dump(to_json(value)));
}

/// Parses JSON text; throws ShapeError("parse") on malformed input.
Json parse_json(std::string_view text);

crypto::Digest compute_group_digest(const GroupedPatientData& gpd);

/// Checks structural invariants only; nothing is decrypted. Throws ShapeError
/// with "readings empty", "digest length", "nonce length" or "ciphertext length".
void validate_gpd_shape(const GroupedPatientData& gpd);

/// Same checks applied to a wire object before conversion, so malformed
/// digests and nonces are reported by name rather than as decode failures.
void validate_gpd_shape(const Json& wire);

/// Bytes covered by the verification node's countersignature.
Bytes vn_signing_message(const SignedGpd& s);

} // namespace hchain
