#include "hchain/hcp_edge.hpp"

#include "hchain/error.hpp"

namespace hchain {

HcpEdge::HcpEdge(crypto::SignatureKeyPair keypair, const LogicalClock& clock, AuditLog* audit)
    : keypair_(std::move(keypair)), clock_(clock), audit_(audit)
{
}

IntegrityResult HcpEdge::verify_integrity(const GroupedPatientData& gpd) const
{
    for (std::size_t i = 0; i < gpd.readings.size(); ++i) {
        const auto& r = gpd.readings[i];
        if (crypto::hash_bytes(r.ciphertext.concat()) != r.digest)
            return {IntegrityResult::Kind::PerReading, i};
    }
    if (compute_group_digest(gpd) != gpd.group_digest)
        return {IntegrityResult::Kind::Group, 0};
    return {};
}

SignedGpd HcpEdge::sign_and_forward(const GroupedPatientData& gpd)
{
    SignedGpd out;
    out.gpd = gpd;
    out.edge_sig = {keypair_.key_id(), crypto::sign(keypair_, canonical_encode(gpd))};
    ++accepted_;
    if (audit_)
        audit_->append({{"ts", clock_.now_ms()}, {"outcome", "forwarded"}, {"reason", ""}, {"seq_no", gpd.seq_no}});
    return out;
}

EdgeOutcome HcpEdge::discard(std::string reason, std::string detail, std::optional<std::uint64_t> seq_no)
{
    ++discarded_;
    if (audit_) {
        nlohmann::json entry = {{"ts", clock_.now_ms()}, {"outcome", "discarded"}, {"reason", reason},
                                {"detail", std::move(detail)}};
        if (seq_no)
            entry["seq_no"] = *seq_no;
        audit_->append(std::move(entry));
    }
    return {false, std::move(reason), std::nullopt};
}

EdgeOutcome HcpEdge::handle_incoming(std::string_view wire)
{
    ++received_;
    Json j;
    try {
        j = parse_json(wire);
    } catch (const ShapeError&) {
        return discard("parse", "malformed json", std::nullopt);
    }
    GroupedPatientData gpd;
    try {
        gpd = gpd_from_json(j);
    } catch (const ShapeError& e) {
        return discard("shape", e.what(), std::nullopt);
    }
    auto check = verify_integrity(gpd);
    if (!check.valid()) {
        std::string detail = check.kind == IntegrityResult::Kind::PerReading
                                 ? "per_reading " + std::to_string(check.index)
                                 : "group";
        return discard("integrity", std::move(detail), gpd.seq_no);
    }
    auto signed_gpd = sign_and_forward(gpd);
    return {true, "", std::move(signed_gpd)};
}

} // namespace hchain
