#include "hchain/directory.hpp"

#include "hchain/error.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

namespace hchain {

SecuredDirectory::SecuredDirectory(crypto::SecretKey master_key, crypto::Rng& rng)
    : master_key_(master_key), rng_(rng)
{
}

SecuredDirectory::SecuredDirectory(crypto::SecretKey master_key, crypto::Rng& rng, std::filesystem::path path)
    : master_key_(master_key), rng_(rng), path_(std::move(path))
{
    if (!std::filesystem::exists(*path_))
        return;
    std::ifstream in(*path_, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path_->string());
    std::stringstream ss;
    ss << in.rdbuf();
    Json j;
    try {
        j = Json::parse(ss.str());
        for (const auto& [token_hex, rec] : j.at("records").items()) {
            crypto::Ciphertext ct;
            auto nonce = base64_decode(rec.at("nonce").get<std::string>());
            if (nonce.size() != crypto::kNonceSize)
                throw DecodeError("nonce length");
            std::copy(nonce.begin(), nonce.end(), ct.nonce.begin());
            ct.body = base64_decode(rec.at("blob").get<std::string>());
            blobs_.emplace(token_hex, std::move(ct));
        }
    } catch (const Json::exception&) {
        throw AuthenticationFailure("directory store is corrupt");
    } catch (const DecodeError&) {
        throw AuthenticationFailure("directory store is corrupt");
    }
    for (const auto& [token_hex, blob] : blobs_)
        open_blob(token_hex, blob);
}

DirectoryRecord SecuredDirectory::register_patient(std::string_view identity, const crypto::SecretKey& patient_key,
                                                   const GeoCoordinate& home, std::string ledger_patient_id,
                                                   std::int64_t enrolled_at_ms)
{
    if (!home.in_bounds())
        throw ShapeError("coordinate bounds");
    std::unique_lock lock(mutex_);
    DirectoryRecord rec;
    rec.identity_token = crypto::deterministic_encrypt_identity(patient_key, identity);
    const auto token_hex = hex_encode(rec.identity_token.bytes);
    if (blobs_.contains(token_hex))
        throw DuplicateIdentity();

    rec.home_location_ct = crypto::symmetric_encrypt(master_key_, canonical_encode(home), rng_);
    rec.escrowed_patient_key_ct = crypto::symmetric_encrypt(master_key_, patient_key.bytes, rng_);
    rec.ledger_patient_id = std::move(ledger_patient_id);
    rec.enrolled_at_ms = enrolled_at_ms;

    Json inner = {
        {"home_location_ct", to_json(rec.home_location_ct)},
        {"escrowed_patient_key_ct", to_json(rec.escrowed_patient_key_ct)},
        {"ledger_patient_id", rec.ledger_patient_id},
        {"enrolled_at", rec.enrolled_at_ms},
    };
    // The token is bound as associated data so blobs cannot be swapped
    // between records.
    blobs_[token_hex] = crypto::symmetric_encrypt(master_key_, to_bytes(canonical_dump(inner)), rng_,
                                                  as_bytes(token_hex));
    persist();
    return rec;
}

DirectoryRecord SecuredDirectory::open_blob(const std::string& token_hex, const crypto::Ciphertext& blob) const
{
    auto plain = crypto::symmetric_decrypt(master_key_, blob, as_bytes(token_hex));
    try {
        auto inner = Json::parse(to_string(plain));
        DirectoryRecord rec;
        rec.identity_token.bytes = hex_decode(token_hex);
        rec.home_location_ct = ciphertext_from_json(inner.at("home_location_ct"));
        rec.escrowed_patient_key_ct = ciphertext_from_json(inner.at("escrowed_patient_key_ct"));
        rec.ledger_patient_id = inner.at("ledger_patient_id").get<std::string>();
        rec.enrolled_at_ms = inner.at("enrolled_at").get<std::int64_t>();
        return rec;
    } catch (const std::exception&) {
        throw AuthenticationFailure("directory record is corrupt");
    }
}

std::optional<DirectoryRecord> SecuredDirectory::find(const crypto::IdentityToken& token) const
{
    std::shared_lock lock(mutex_);
    const auto token_hex = hex_encode(token.bytes);
    auto it = blobs_.find(token_hex);
    if (it == blobs_.end())
        return std::nullopt;
    return open_blob(token_hex, it->second);
}

DirectoryRecord SecuredDirectory::lookup(const crypto::IdentityToken& token) const
{
    auto rec = find(token);
    if (!rec)
        throw NotFound();
    return *rec;
}

GeoCoordinate SecuredDirectory::fetch_home_coordinate(const DirectoryRecord& record) const
{
    auto plain = crypto::symmetric_decrypt(master_key_, record.home_location_ct);
    try {
        return coordinate_from_json(parse_json(to_string(plain)));
    } catch (const ShapeError&) {
        throw AuthenticationFailure("stored coordinate is corrupt");
    }
}

crypto::SecretKey SecuredDirectory::fetch_patient_key(const DirectoryRecord& record) const
{
    auto plain = crypto::symmetric_decrypt(master_key_, record.escrowed_patient_key_ct);
    if (plain.size() != crypto::kKeySize)
        throw AuthenticationFailure("stored key is corrupt");
    crypto::SecretKey k;
    std::copy(plain.begin(), plain.end(), k.bytes.begin());
    return k;
}

std::vector<crypto::IdentityToken> SecuredDirectory::tokens() const
{
    std::shared_lock lock(mutex_);
    std::vector<crypto::IdentityToken> out;
    for (const auto& [hex, blob] : blobs_)
        out.push_back({hex_decode(hex)});
    return out;
}

std::size_t SecuredDirectory::size() const
{
    std::shared_lock lock(mutex_);
    return blobs_.size();
}

std::string SecuredDirectory::serialize() const
{
    std::shared_lock lock(mutex_);
    return serialize_unlocked();
}

std::string SecuredDirectory::serialize_unlocked() const
{
    Json records = Json::object();
    for (const auto& [hex, blob] : blobs_)
        records[hex] = {{"blob", base64_encode(blob.body)}, {"nonce", base64_encode(blob.nonce)}};
    return canonical_dump(Json{{"records", std::move(records)}});
}

void SecuredDirectory::persist() const
{
    if (!path_)
        return;
    auto tmp = *path_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out << serialize_unlocked() << '\n';
    }
    std::filesystem::rename(tmp, *path_);
}

} // namespace hchain
