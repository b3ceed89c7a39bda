#include "hchain/verification_node.hpp"

#include "hchain/error.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace hchain {

double haversine_distance(const GeoCoordinate& a, const GeoCoordinate& b)
{
    constexpr double rad = std::numbers::pi / 180.0;
    const double phi1 = a.latitude * rad;
    const double phi2 = b.latitude * rad;
    const double dphi = (b.latitude - a.latitude) * rad;
    const double dlambda = (b.longitude - a.longitude) * rad;
    const double s1 = std::sin(dphi / 2);
    const double s2 = std::sin(dlambda / 2);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

VerificationNode::VerificationNode(crypto::SignatureKeyPair keypair, double home_radius_m,
                                   const SecuredDirectory& directory, Ledger& ledger, Account hcp,
                                   const LogicalClock& clock, AuditLog* audit)
    : keypair_(std::move(keypair)), radius_m_(home_radius_m), directory_(directory), ledger_(ledger),
      hcp_(std::move(hcp)), clock_(clock), audit_(audit)
{
    if (!(home_radius_m > 0.0))
        throw ConfigError("home_radius_m must be > 0");
}

void VerificationNode::trust_edge_key(const crypto::PublicKey& key)
{
    trusted_edges_[key.key_id()] = key;
}

SignatureCheck VerificationNode::verify_edge_signature(const SignedGpd& sgpd) const
{
    auto it = trusted_edges_.find(sgpd.edge_sig.key_id);
    if (it == trusted_edges_.end())
        return {SignatureCheck::Kind::UnknownKey};
    if (!crypto::verify(it->second, canonical_encode(sgpd.gpd), sgpd.edge_sig.sig))
        return {SignatureCheck::Kind::VerifyFailed};
    return {};
}

namespace {

bool opens(const crypto::SecretKey& key, const crypto::Ciphertext& ct)
{
    try {
        crypto::symmetric_decrypt(key, ct);
        return true;
    } catch (const AuthenticationFailure&) {
        return false;
    }
}

} // namespace

std::optional<DirectoryRecord> VerificationNode::resolve_location_record(const SignedGpd& sgpd) const
{
    if (auto rec = directory_.find(sgpd.gpd.identity_token))
        if (opens(directory_.fetch_patient_key(*rec), sgpd.gpd.location_ct))
            return rec;
    for (const auto& token : directory_.tokens()) {
        auto rec = directory_.lookup(token);
        if (opens(directory_.fetch_patient_key(rec), sgpd.gpd.location_ct))
            return rec;
    }
    return std::nullopt;
}

LocationCheck VerificationNode::authenticate_location(const SignedGpd& sgpd, const DirectoryRecord& record) const
{
    GeoCoordinate claimed;
    try {
        auto key = directory_.fetch_patient_key(record);
        claimed = coordinate_from_json(parse_json(to_string(crypto::symmetric_decrypt(key, sgpd.gpd.location_ct))));
    } catch (const AuthenticationFailure&) {
        return {LocationCheck::Kind::DecryptFailure, 0.0};
    } catch (const ShapeError&) {
        return {LocationCheck::Kind::DecryptFailure, 0.0};
    }
    const auto home = directory_.fetch_home_coordinate(record);
    const double d = haversine_distance(claimed, home);
    return {d <= radius_m_ ? LocationCheck::Kind::Authenticated : LocationCheck::Kind::Rejected, d};
}

std::optional<PatientRef> VerificationNode::authenticate_identity(const SignedGpd& sgpd,
                                                                  const DirectoryRecord* location_record) const
{
    auto rec = directory_.find(sgpd.gpd.identity_token);
    if (!rec)
        return std::nullopt;
    if (location_record && location_record->identity_token != rec->identity_token)
        return std::nullopt;
    return PatientRef{rec->ledger_patient_id, *rec};
}

TxReceipt VerificationNode::countersign_and_submit(const SignedGpd& sgpd, const PatientRef& patient)
{
    SignedGpd out = sgpd;
    out.vn_sig = SignatureRecord{keypair_.key_id(), crypto::sign(keypair_, vn_signing_message(sgpd))};
    Json payload = {
        {"patient_id", patient.ledger_patient_id},
        {"signed_gpd", to_json(out)},
        {"vn_key", keypair_.public_key().hex()},
    };
    return ledger_.transact(hcp_, ContractFunction::AppendGpd, std::move(payload));
}

void VerificationNode::audit(const std::string& stage, const std::string& outcome, const std::string& detail)
{
    if (audit_)
        audit_->append({{"ts", clock_.now_ms()}, {"stage", stage}, {"outcome", outcome}, {"detail", detail}});
}

VnOutcome VerificationNode::handle(const SignedGpd& sgpd)
{
    auto sig = verify_edge_signature(sgpd);
    if (!sig.valid()) {
        std::string detail = sig.kind == SignatureCheck::Kind::UnknownKey ? "unknown_key" : "verify_failed";
        audit("sig", "rejected", detail);
        return {false, "sig", detail, std::nullopt};
    }
    audit("sig", "valid", sgpd.edge_sig.key_id);

    auto location_record = resolve_location_record(sgpd);
    if (!location_record) {
        audit("loc", "rejected", "decrypt_failure");
        return {false, "loc", "decrypt_failure", std::nullopt};
    }
    auto loc = authenticate_location(sgpd, *location_record);
    char distance[64];
    std::snprintf(distance, sizeof distance, "distance_m=%.3f", loc.distance_m);
    if (!loc.authenticated()) {
        std::string detail = loc.kind == LocationCheck::Kind::DecryptFailure ? "decrypt_failure" : distance;
        audit("loc", "rejected", detail);
        return {false, "loc", detail, std::nullopt};
    }
    audit("loc", "authenticated", distance);

    auto patient = authenticate_identity(sgpd, &*location_record);
    if (!patient) {
        audit("id", "rejected", "identity token not enrolled");
        return {false, "id", "identity token not enrolled", std::nullopt};
    }
    audit("id", "authenticated", patient->ledger_patient_id);

    auto seen = highest_seq_.find(patient->ledger_patient_id);
    if (seen != highest_seq_.end() && sgpd.gpd.seq_no <= seen->second) {
        auto detail = "seq_no " + std::to_string(sgpd.gpd.seq_no) + " <= " + std::to_string(seen->second);
        audit("replay", "rejected", detail);
        return {false, "replay", detail, std::nullopt};
    }

    try {
        auto receipt = countersign_and_submit(sgpd, *patient);
        highest_seq_[patient->ledger_patient_id] = sgpd.gpd.seq_no;
        audit("tx", "stored", "block " + std::to_string(receipt.block_index.value_or(0)));
        return {true, "tx", receipt.tx_hash.hex(), receipt};
    } catch (const ContractRejection& e) {
        audit("tx", "rejected", e.reason());
        return {false, "tx", e.reason(), std::nullopt};
    }
}

VnOutcome VerificationNode::handle_incoming(std::string_view wire)
{
    SignedGpd sgpd;
    try {
        sgpd = signed_gpd_from_json(parse_json(wire));
    } catch (const ShapeError& e) {
        audit("parse", "rejected", e.what());
        return {false, "parse", e.what(), std::nullopt};
    }
    return handle(sgpd);
}

} // namespace hchain
