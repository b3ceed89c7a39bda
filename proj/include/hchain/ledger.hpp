#pragma once

// Hash-linked ledger with a role-based smart contract.
//
// A single authority writer seals one transaction per block. The contract is
// a deterministic state machine over ContractState; replaying the chain from
// genesis reproduces the live state exactly.

#include "hchain/audit.hpp"
#include "hchain/payload.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace hchain {

enum class Role { Administration, HcpRegistration, Hcp };

enum class ContractFunction {
    AddMembership,
    RevokeMembership,
    RegisterPatient,
    AppendGpd,
    GrantAccess,
    RevokeAccess,
    ReadRecords,
};

inline constexpr ContractFunction kAllFunctions[] = {
    ContractFunction::AddMembership, ContractFunction::RevokeMembership, ContractFunction::RegisterPatient,
    ContractFunction::AppendGpd,     ContractFunction::GrantAccess,      ContractFunction::RevokeAccess,
    ContractFunction::ReadRecords,
};

std::string to_string(Role r);
Role role_from_string(std::string_view s);
std::string to_string(ContractFunction f);
ContractFunction function_from_string(std::string_view s);

class ContractRejection : public Error {
public:
    explicit ContractRejection(std::string reason) : Error(reason), reason_(std::move(reason)) {}
    const std::string& reason() const { return reason_; }

private:
    std::string reason_;
};

class InvalidTxSignature : public Error {
public:
    InvalidTxSignature() : Error("invalid transaction signature") {}
};

class ChainCorruption : public Error {
public:
    ChainCorruption(std::size_t index, std::string reason)
        : Error("chain corruption at block " + std::to_string(index) + ": " + reason), index_(index),
          reason_(std::move(reason))
    {
    }
    std::size_t index() const { return index_; }
    const std::string& reason() const { return reason_; }

private:
    std::size_t index_;
    std::string reason_;
};

/// A ledger identity. The address is the key fingerprint of the public key.
struct Account {
    std::string address;
    crypto::SignatureKeyPair keypair;

    static Account generate(crypto::Rng& rng);
};

struct Membership {
    Role role = Role::Hcp;
    bool active = true;
};

struct StoredEntry {
    SignedGpd signed_gpd;
    crypto::PublicKey vn_key;
    std::int64_t stored_at_ms = 0;
    crypto::Digest tx_hash;
};

struct ContractState {
    std::map<std::string, Membership> memberships;
    std::map<std::string, std::vector<StoredEntry>> patients;
    std::map<std::string, std::string> patient_owner_hcp;
    std::map<std::string, std::set<std::string>> grants;
    std::map<std::string, std::string> patient_accounts;
    /// Next expected transaction nonce per caller address.
    std::map<std::string, std::uint64_t> nonces;
};

Json to_json(const ContractState& s);
Json to_json(const StoredEntry& e);

struct ChainTransaction {
    std::string caller;
    crypto::PublicKey caller_key;
    ContractFunction function = ContractFunction::ReadRecords;
    Json payload;
    std::uint64_t nonce = 0;
    crypto::Signature caller_signature;
    crypto::Digest tx_hash;
};

/// Canonical bytes the caller signs: caller, caller_key, function, nonce, payload.
Bytes tx_signing_message(const ChainTransaction& tx);
crypto::Digest compute_tx_hash(const ChainTransaction& tx);
ChainTransaction make_transaction(const Account& caller, ContractFunction fn, Json payload, std::uint64_t nonce);

Json to_json(const ChainTransaction& tx);
ChainTransaction transaction_from_json(const Json& j);

struct Block {
    std::uint64_t index = 0;
    crypto::Digest prev_hash;
    std::int64_t timestamp_ms = 0;
    std::vector<ChainTransaction> transactions;
    crypto::Digest block_hash;
};

crypto::Digest compute_block_hash(const Block& b);
Json to_json(const Block& b);
Block block_from_json(const Json& j);
std::string encode_block_line(const Block& b);

struct TxReceipt {
    /// Absent for read_records, which does not produce a block.
    std::optional<std::uint64_t> block_index;
    crypto::Digest tx_hash;
    std::vector<StoredEntry> records;
};

/// Executes one transaction against state. Throws ContractRejection and leaves
/// state untouched on any rule violation.
TxReceipt apply_transaction(ContractState& state, const ChainTransaction& tx, std::int64_t now_ms);

struct ChainCheck {
    bool ok = true;
    std::size_t index = 0;
    std::string reason;
};

/// Verifies encoding, hashes, links and signatures line by line; reports the
/// first violation. Reasons: "format", "encoding", "hash", "link", "signature".
ChainCheck validate_chain(const std::vector<std::string>& lines);
ChainCheck validate_chain(const std::vector<Block>& blocks);

/// Re-executes every transaction from an empty state. Throws ChainCorruption.
ContractState replay_state(const std::vector<Block>& blocks);

std::vector<std::string> read_chain_lines(const std::filesystem::path& path);

class Ledger {
public:
    /// Block 0 carries one self-signed add_membership granting Administration
    /// to admin; its prev_hash is all zeros.
    static Ledger genesis(const Account& admin, const LogicalClock& clock);

    /// Validates and replays. Throws ChainCorruption.
    static Ledger from_lines(const std::vector<std::string>& lines, const LogicalClock& clock);

    Ledger(Ledger&& other) noexcept;

    /// Throws InvalidTxSignature or ContractRejection. Mutating functions
    /// seal a new block; read_records returns the entries without one.
    TxReceipt submit(const ChainTransaction& tx);

    /// Builds, signs and submits with the caller's next nonce.
    TxReceipt transact(const Account& caller, ContractFunction fn, Json payload);

    std::uint64_t next_nonce(const std::string& address) const;
    std::vector<Block> blocks() const;
    ContractState state() const;
    std::size_t height() const;
    std::vector<std::string> to_lines() const;
    void save(const std::filesystem::path& path) const;

private:
    explicit Ledger(const LogicalClock& clock) : clock_(&clock) {}

    const LogicalClock* clock_;
    std::vector<Block> blocks_;
    ContractState state_;
    mutable std::mutex mutex_;
};

} // namespace hchain
