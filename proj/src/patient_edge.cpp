#include "hchain/patient_edge.hpp"

#include "hchain/error.hpp"

namespace hchain {

PatientEdge::PatientEdge(PatientEdgeConfig config, crypto::Rng& rng)
    : config_(std::move(config)), rng_(rng)
{
    if (config_.batch_size == 0)
        throw ConfigError("batch_size must be >= 1");
    if (!config_.home_location.in_bounds())
        throw ConfigError("home location out of bounds");
    token_ = crypto::deterministic_encrypt_identity(config_.secret_key, config_.patient_identity);
    if (!config_.current_location) {
        auto home = config_.home_location;
        config_.current_location = [home] { return home; };
    }
}

EncryptedReading PatientEdge::encrypt_reading(const PhysiologicalReading& reading)
{
    auto ct = crypto::symmetric_encrypt(config_.secret_key, canonical_encode(reading), rng_);
    auto digest = crypto::hash_bytes(ct.concat());
    return {std::move(ct), digest};
}

std::optional<GroupedPatientData> PatientEdge::ingest_reading(const PhysiologicalReading& reading)
{
    if (last_captured_ && reading.captured_at_ms < *last_captured_)
        throw ShapeError("captured_at went backwards");
    last_captured_ = reading.captured_at_ms;
    if (auto w = reading_bounds_warning(reading))
        warnings_.push_back(*w);

    buffer_.push_back(encrypt_reading(reading));
    if (buffer_.size() < config_.batch_size)
        return std::nullopt;

    auto batch = std::move(buffer_);
    buffer_.clear();
    return build_gpd(std::move(batch), reading.captured_at_ms);
}

GroupedPatientData PatientEdge::build_gpd(std::vector<EncryptedReading> readings, std::int64_t now_ms)
{
    if (readings.empty())
        throw EmptyBatch();
    GroupedPatientData gpd;
    gpd.identity_token = token_;
    gpd.location_ct = crypto::symmetric_encrypt(config_.secret_key, canonical_encode(config_.current_location()),
                                                rng_);
    gpd.readings = std::move(readings);
    gpd.created_at_ms = now_ms;
    gpd.seq_no = next_seq_++;
    gpd.group_digest = compute_group_digest(gpd);
    return gpd;
}

PhysiologicalReading decrypt_reading(const crypto::SecretKey& key, const EncryptedReading& r)
{
    auto plain = crypto::symmetric_decrypt(key, r.ciphertext);
    return reading_from_json(parse_json(to_string(plain)));
}

} // namespace hchain
