#pragma once

#include "hchain/payload.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>

namespace hchain {

class DuplicateIdentity : public Error {
public:
    DuplicateIdentity() : Error("identity already registered") {}
};

class NotFound : public Error {
public:
    NotFound() : Error("identity token not found") {}
};

struct DirectoryRecord {
    crypto::IdentityToken identity_token;
    crypto::Ciphertext home_location_ct;
    crypto::Ciphertext escrowed_patient_key_ct;
    std::string ledger_patient_id;
    std::int64_t enrolled_at_ms = 0;
};

/// Provider-internal store of enrolled patients, encrypted at rest under a
/// master key. Each record is sealed as an opaque blob keyed by the hex of its
/// identity token; inside the blob the home coordinate and escrowed patient
/// key are sealed a second time.
///
/// Reads may run concurrently; registrations take an exclusive lock.
class SecuredDirectory {
public:
    /// In-memory only.
    SecuredDirectory(crypto::SecretKey master_key, crypto::Rng& rng);
    /// Loads path if it exists; every registration rewrites it.
    SecuredDirectory(crypto::SecretKey master_key, crypto::Rng& rng, std::filesystem::path path);

    /// Throws DuplicateIdentity.
    DirectoryRecord register_patient(std::string_view identity, const crypto::SecretKey& patient_key,
                                     const GeoCoordinate& home, std::string ledger_patient_id,
                                     std::int64_t enrolled_at_ms = 0);

    /// Throws NotFound, or AuthenticationFailure if the stored blob is corrupt.
    DirectoryRecord lookup(const crypto::IdentityToken& token) const;
    std::optional<DirectoryRecord> find(const crypto::IdentityToken& token) const;

    /// Throws AuthenticationFailure.
    GeoCoordinate fetch_home_coordinate(const DirectoryRecord& record) const;
    crypto::SecretKey fetch_patient_key(const DirectoryRecord& record) const;

    std::vector<crypto::IdentityToken> tokens() const;
    std::size_t size() const;

    /// Serialized store: {"records": {token_hex: {"blob": b64, "nonce": b64}}}.
    std::string serialize() const;

private:
    void persist() const;
    std::string serialize_unlocked() const;
    DirectoryRecord open_blob(const std::string& token_hex, const crypto::Ciphertext& blob) const;

    crypto::SecretKey master_key_;
    crypto::Rng& rng_;
    std::optional<std::filesystem::path> path_;
    std::map<std::string, crypto::Ciphertext> blobs_;
    mutable std::shared_mutex mutex_;
};

} // namespace hchain
