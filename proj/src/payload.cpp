#include "hchain/payload.hpp"

#include "hchain/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hchain {

using crypto::Ciphertext;
using crypto::Digest;

std::string to_string(SensorKind kind)
{
    switch (kind) {
    case SensorKind::HeartRate:
        return "heart_rate";
    case SensorKind::Spo2:
        return "spo2";
    case SensorKind::Temperature:
        return "temperature";
    case SensorKind::BloodPressure:
        return "blood_pressure";
    }
    throw ShapeError("sensor kind");
}

SensorKind sensor_kind_from_string(std::string_view name)
{
    if (name == "heart_rate")
        return SensorKind::HeartRate;
    if (name == "spo2")
        return SensorKind::Spo2;
    if (name == "temperature")
        return SensorKind::Temperature;
    if (name == "blood_pressure")
        return SensorKind::BloodPressure;
    throw ShapeError("sensor kind");
}

std::optional<std::string> reading_bounds_warning(const PhysiologicalReading& r)
{
    auto outside = [](double v, double lo, double hi) { return !std::isfinite(v) || v < lo || v > hi; };
    switch (r.kind) {
    case SensorKind::HeartRate:
        if (outside(r.value, 20, 300))
            return "heart_rate outside [20, 300] bpm";
        break;
    case SensorKind::Spo2:
        if (outside(r.value, 50, 100))
            return "spo2 outside [50, 100] %";
        break;
    case SensorKind::Temperature:
        if (outside(r.value, 25, 45))
            return "temperature outside [25, 45] C";
        break;
    case SensorKind::BloodPressure:
        if (outside(r.value, 40, 300))
            return "systolic outside [40, 300] mmHg";
        if (!r.diastolic || outside(*r.diastolic, 20, 200))
            return "diastolic outside [20, 200] mmHg";
        break;
    }
    return std::nullopt;
}

bool GeoCoordinate::in_bounds() const
{
    return std::isfinite(latitude) && std::isfinite(longitude) && latitude >= -90.0 && latitude <= 90.0 &&
           longitude >= -180.0 && longitude <= 180.0;
}

// ---------------------------------------------------------------------------
// Encoding

Json to_json(const PhysiologicalReading& r)
{
    Json j = {{"kind", to_string(r.kind)}, {"value", r.value}, {"captured_at", r.captured_at_ms}};
    if (r.diastolic)
        j["diastolic"] = *r.diastolic;
    return j;
}

Json to_json(const GeoCoordinate& c)
{
    return {{"lat", c.latitude}, {"lon", c.longitude}};
}

Json to_json(const Ciphertext& ct)
{
    return {{"nonce", base64_encode(ct.nonce)}, {"body", base64_encode(ct.body)}};
}

Json to_json(const EncryptedReading& r)
{
    return {{"ciphertext", to_json(r.ciphertext)}, {"digest", r.digest.hex()}};
}

Json digest_free_json(const GroupedPatientData& gpd)
{
    Json readings = Json::array();
    for (const auto& r : gpd.readings)
        readings.push_back(to_json(r));
    return {
        {"identity_token", base64_encode(gpd.identity_token.bytes)},
        {"location_ct", to_json(gpd.location_ct)},
        {"readings", std::move(readings)},
        {"created_at", gpd.created_at_ms},
        {"seq_no", gpd.seq_no},
    };
}

Json to_json(const GroupedPatientData& gpd)
{
    Json j = digest_free_json(gpd);
    j["group_digest"] = gpd.group_digest.hex();
    return j;
}

Json to_json(const SignatureRecord& s)
{
    return {{"key_id", s.key_id}, {"sig", base64_encode(s.sig.bytes)}};
}

Json to_json(const SignedGpd& s)
{
    return {
        {"gpd", to_json(s.gpd)},
        {"edge_sig", to_json(s.edge_sig)},
        {"vn_sig", s.vn_sig ? to_json(*s.vn_sig) : Json(nullptr)},
    };
}

std::string canonical_dump(const Json& j)
{
    // nlohmann's object type is an ordered std::map, so keys come out sorted
    // bytewise; dump() without indent emits no whitespace.
    return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Json parse_json(std::string_view text)
{
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::exception&) {
        throw ShapeError("parse");
    }
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

void require_keys(const Json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional, const char* what)
{
    if (!j.is_object())
        throw ShapeError(std::string(what) + " not an object");
    for (const char* k : required)
        if (!j.contains(k))
            throw ShapeError(std::string(what) + " missing " + k);
    for (const auto& [k, v] : j.items()) {
        bool known = std::any_of(required.begin(), required.end(), [&](const char* r) { return k == r; }) ||
                     std::any_of(optional.begin(), optional.end(), [&](const char* o) { return k == o; });
        if (!known)
            throw ShapeError(std::string(what) + " unexpected field " + k);
    }
}

const std::string& str(const Json& j, const char* field)
{
    if (!j.is_string())
        throw ShapeError(std::string(field) + " not a string");
    return j.get_ref<const std::string&>();
}

double num(const Json& j, const char* field)
{
    if (!j.is_number())
        throw ShapeError(std::string(field) + " not a number");
    return j.get<double>();
}

Bytes b64(const Json& j, const char* field)
{
    try {
        return base64_decode(str(j, field));
    } catch (const DecodeError&) {
        throw ShapeError(std::string(field) + " encoding");
    }
}

Digest digest_field(const Json& j)
{
    Bytes raw;
    try {
        raw = hex_decode(str(j, "digest"));
    } catch (const DecodeError&) {
        throw ShapeError("digest encoding");
    }
    if (raw.size() != crypto::kDigestSize)
        throw ShapeError("digest length");
    return Digest::from_bytes(raw);
}

std::int64_t int_field(const Json& j, const char* field)
{
    if (!j.is_number_integer())
        throw ShapeError(std::string(field) + " not an integer");
    return j.get<std::int64_t>();
}

} // namespace

PhysiologicalReading reading_from_json(const Json& j)
{
    require_keys(j, {"kind", "value", "captured_at"}, {"diastolic"}, "reading");
    PhysiologicalReading r;
    r.kind = sensor_kind_from_string(str(j.at("kind"), "kind"));
    r.value = num(j.at("value"), "value");
    r.captured_at_ms = int_field(j.at("captured_at"), "captured_at");
    if (j.contains("diastolic"))
        r.diastolic = num(j.at("diastolic"), "diastolic");
    return r;
}

GeoCoordinate coordinate_from_json(const Json& j)
{
    require_keys(j, {"lat", "lon"}, {}, "coordinate");
    GeoCoordinate c{num(j.at("lat"), "lat"), num(j.at("lon"), "lon")};
    if (!c.in_bounds())
        throw ShapeError("coordinate bounds");
    return c;
}

Ciphertext ciphertext_from_json(const Json& j)
{
    require_keys(j, {"nonce", "body"}, {}, "ciphertext");
    auto nonce = b64(j.at("nonce"), "nonce");
    if (nonce.size() != crypto::kNonceSize)
        throw ShapeError("nonce length");
    Ciphertext ct;
    std::copy(nonce.begin(), nonce.end(), ct.nonce.begin());
    ct.body = b64(j.at("body"), "body");
    if (ct.body.size() < crypto::kTagSize)
        throw ShapeError("ciphertext length");
    return ct;
}

void validate_gpd_shape(const Json& wire)
{
    (void)gpd_from_json(wire);
}

GroupedPatientData gpd_from_json(const Json& j)
{
    require_keys(j, {"identity_token", "location_ct", "readings", "created_at", "seq_no", "group_digest"}, {},
                 "gpd");
    GroupedPatientData gpd;
    gpd.identity_token.bytes = b64(j.at("identity_token"), "identity_token");
    gpd.location_ct = ciphertext_from_json(j.at("location_ct"));
    const auto& readings = j.at("readings");
    if (!readings.is_array())
        throw ShapeError("readings not an array");
    if (readings.empty())
        throw ShapeError("readings empty");
    for (const auto& r : readings) {
        require_keys(r, {"ciphertext", "digest"}, {}, "reading");
        gpd.readings.push_back({ciphertext_from_json(r.at("ciphertext")), digest_field(r.at("digest"))});
    }
    gpd.created_at_ms = int_field(j.at("created_at"), "created_at");
    const auto& seq = j.at("seq_no");
    if (!seq.is_number_unsigned())
        throw ShapeError("seq_no not an unsigned integer");
    gpd.seq_no = seq.get<std::uint64_t>();
    gpd.group_digest = digest_field(j.at("group_digest"));
    validate_gpd_shape(gpd);
    return gpd;
}

SignatureRecord signature_record_from_json(const Json& j)
{
    require_keys(j, {"key_id", "sig"}, {}, "signature");
    SignatureRecord s;
    s.key_id = str(j.at("key_id"), "key_id");
    s.sig.bytes = b64(j.at("sig"), "sig");
    return s;
}

SignedGpd signed_gpd_from_json(const Json& j)
{
    require_keys(j, {"gpd", "edge_sig", "vn_sig"}, {}, "signed gpd");
    SignedGpd s;
    s.gpd = gpd_from_json(j.at("gpd"));
    s.edge_sig = signature_record_from_json(j.at("edge_sig"));
    if (!j.at("vn_sig").is_null())
        s.vn_sig = signature_record_from_json(j.at("vn_sig"));
    return s;
}

// ---------------------------------------------------------------------------

Digest compute_group_digest(const GroupedPatientData& gpd)
{
    return crypto::hash_bytes(canonical_dump(digest_free_json(gpd)));
}

void validate_gpd_shape(const GroupedPatientData& gpd)
{
    if (gpd.readings.empty())
        throw ShapeError("readings empty");
    if (gpd.identity_token.bytes.size() < crypto::kNonceSize + crypto::kTagSize)
        throw ShapeError("identity_token length");
    if (gpd.location_ct.body.size() < crypto::kTagSize)
        throw ShapeError("ciphertext length");
    for (const auto& r : gpd.readings)
        if (r.ciphertext.body.size() < crypto::kTagSize)
            throw ShapeError("ciphertext length");
}

Bytes vn_signing_message(const SignedGpd& s)
{
    Bytes msg = canonical_encode(s.gpd);
    msg.insert(msg.end(), s.edge_sig.sig.bytes.begin(), s.edge_sig.sig.bytes.end());
    return msg;
}

} // namespace hchain
