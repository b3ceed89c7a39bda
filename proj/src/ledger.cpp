#include "hchain/ledger.hpp"

#include "hchain/error.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hchain {

using crypto::Digest;

std::string to_string(Role r)
{
    switch (r) {
    case Role::Administration:
        return "administration";
    case Role::HcpRegistration:
        return "hcp_registration";
    case Role::Hcp:
        return "hcp";
    }
    throw ShapeError("role");
}

Role role_from_string(std::string_view s)
{
    if (s == "administration")
        return Role::Administration;
    if (s == "hcp_registration")
        return Role::HcpRegistration;
    if (s == "hcp")
        return Role::Hcp;
    throw ShapeError("role");
}

std::string to_string(ContractFunction f)
{
    switch (f) {
    case ContractFunction::AddMembership:
        return "add_membership";
    case ContractFunction::RevokeMembership:
        return "revoke_membership";
    case ContractFunction::RegisterPatient:
        return "register_patient";
    case ContractFunction::AppendGpd:
        return "append_gpd";
    case ContractFunction::GrantAccess:
        return "grant_access";
    case ContractFunction::RevokeAccess:
        return "revoke_access";
    case ContractFunction::ReadRecords:
        return "read_records";
    }
    throw ShapeError("function");
}

ContractFunction function_from_string(std::string_view s)
{
    for (auto f : kAllFunctions)
        if (to_string(f) == s)
            return f;
    throw ShapeError("function");
}

Account Account::generate(crypto::Rng& rng)
{
    auto kp = crypto::SignatureKeyPair::generate(rng);
    auto address = kp.key_id();
    return {std::move(address), std::move(kp)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void exact_keys(const Json& j, std::initializer_list<const char*> keys, const char* what)
{
    if (!j.is_object() || j.size() != keys.size())
        throw ShapeError(what);
    for (const char* k : keys)
        if (!j.contains(k))
            throw ShapeError(what);
}

const std::string& get_str(const Json& j, const char* key)
{
    const auto& v = j.at(key);
    if (!v.is_string())
        throw ShapeError(key);
    return v.get_ref<const std::string&>();
}

std::uint64_t get_u64(const Json& j, const char* key)
{
    const auto& v = j.at(key);
    if (!v.is_number_unsigned())
        throw ShapeError(key);
    return v.get<std::uint64_t>();
}

Json signing_json(const ChainTransaction& tx)
{
    return {
        {"caller", tx.caller},
        {"caller_key", tx.caller_key.hex()},
        {"function", to_string(tx.function)},
        {"nonce", tx.nonce},
        {"payload", tx.payload},
    };
}

Json block_header_json(const Block& b)
{
    Json txs = Json::array();
    for (const auto& tx : b.transactions)
        txs.push_back(to_json(tx));
    return {
        {"index", b.index},
        {"prev_hash", b.prev_hash.hex()},
        {"timestamp", b.timestamp_ms},
        {"transactions", std::move(txs)},
    };
}

} // namespace

Json to_json(const StoredEntry& e)
{
    return {
        {"signed_gpd", to_json(e.signed_gpd)},
        {"vn_key", e.vn_key.hex()},
        {"stored_at", e.stored_at_ms},
        {"tx_hash", e.tx_hash.hex()},
    };
}

Json to_json(const ContractState& s)
{
    Json memberships = Json::object();
    for (const auto& [addr, m] : s.memberships)
        memberships[addr] = {{"role", to_string(m.role)}, {"active", m.active}};
    Json patients = Json::object();
    for (const auto& [pid, entries] : s.patients) {
        Json list = Json::array();
        for (const auto& e : entries)
            list.push_back(to_json(e));
        patients[pid] = std::move(list);
    }
    Json grants = Json::object();
    for (const auto& [pid, set] : s.grants)
        grants[pid] = Json(std::vector<std::string>(set.begin(), set.end()));
    return {
        {"memberships", std::move(memberships)},
        {"patients", std::move(patients)},
        {"patient_owner_hcp", s.patient_owner_hcp},
        {"grants", std::move(grants)},
        {"patient_accounts", s.patient_accounts},
        {"nonces", s.nonces},
    };
}

Bytes tx_signing_message(const ChainTransaction& tx)
{
    return to_bytes(canonical_dump(signing_json(tx)));
}

Digest compute_tx_hash(const ChainTransaction& tx)
{
    Json j = signing_json(tx);
    j["caller_signature"] = base64_encode(tx.caller_signature.bytes);
    return crypto::hash_bytes(canonical_dump(j));
}

ChainTransaction make_transaction(const Account& caller, ContractFunction fn, Json payload, std::uint64_t nonce)
{
    ChainTransaction tx;
    tx.caller = caller.address;
    tx.caller_key = caller.keypair.public_key();
    tx.function = fn;
    tx.payload = std::move(payload);
    tx.nonce = nonce;
    tx.caller_signature = crypto::sign(caller.keypair, tx_signing_message(tx));
    tx.tx_hash = compute_tx_hash(tx);
    return tx;
}

Json to_json(const ChainTransaction& tx)
{
    Json j = signing_json(tx);
    j["caller_signature"] = base64_encode(tx.caller_signature.bytes);
    j["tx_hash"] = tx.tx_hash.hex();
    return j;
}

ChainTransaction transaction_from_json(const Json& j)
{
    exact_keys(j, {"caller", "caller_key", "function", "nonce", "payload", "caller_signature", "tx_hash"},
               "transaction");
    try {
        ChainTransaction tx;
        tx.caller = get_str(j, "caller");
        tx.caller_key = crypto::PublicKey::from_hex(get_str(j, "caller_key"));
        tx.function = function_from_string(get_str(j, "function"));
        tx.nonce = get_u64(j, "nonce");
        tx.payload = j.at("payload");
        tx.caller_signature.bytes = base64_decode(get_str(j, "caller_signature"));
        tx.tx_hash = Digest::from_hex(get_str(j, "tx_hash"));
        return tx;
    } catch (const DecodeError& e) {
        throw ShapeError(e.what());
    }
}

Digest compute_block_hash(const Block& b)
{
    return crypto::hash_bytes(canonical_dump(block_header_json(b)));
}

Json to_json(const Block& b)
{
    Json j = block_header_json(b);
    j["block_hash"] = b.block_hash.hex();
    return j;
}

Block block_from_json(const Json& j)
{
    exact_keys(j, {"index", "prev_hash", "timestamp", "transactions", "block_hash"}, "block");
    try {
        Block b;
        b.index = get_u64(j, "index");
        b.prev_hash = Digest::from_hex(get_str(j, "prev_hash"));
        if (!j.at("timestamp").is_number_integer())
            throw ShapeError("timestamp");
        b.timestamp_ms = j.at("timestamp").get<std::int64_t>();
        const auto& txs = j.at("transactions");
        if (!txs.is_array() || txs.empty())
            throw ShapeError("transactions");
        for (const auto& t : txs)
            b.transactions.push_back(transaction_from_json(t));
        b.block_hash = Digest::from_hex(get_str(j, "block_hash"));
        return b;
    } catch (const DecodeError& e) {
        throw ShapeError(e.what());
    }
}

std::string encode_block_line(const Block& b)
{
    return canonical_dump(to_json(b));
}

// ---------------------------------------------------------------------------
// Contract

namespace {

bool has_role(const ContractState& s, const std::string& addr, Role role)
{
    auto it = s.memberships.find(addr);
    return it != s.memberships.end() && it->second.active && it->second.role == role;
}

std::string payload_str(const Json& payload, const char* key)
{
    if (!payload.is_object() || !payload.contains(key) || !payload.at(key).is_string() ||
        payload.at(key).get_ref<const std::string&>().empty())
        throw ContractRejection(std::string("malformed payload: ") + key);
    return payload.at(key).get<std::string>();
}

void require_patient(const ContractState& s, const std::string& pid)
{
    if (!s.patients.contains(pid))
        throw ContractRejection("unknown patient");
}

StoredEntry check_append(const ContractState& s, const ChainTransaction& tx, const std::string& pid,
                         std::int64_t now_ms)
{
    StoredEntry entry;
    try {
        entry.signed_gpd = signed_gpd_from_json(tx.payload.at("signed_gpd"));
        entry.vn_key = crypto::PublicKey::from_hex(payload_str(tx.payload, "vn_key"));
    } catch (const ShapeError& e) {
        throw ContractRejection(std::string("malformed payload: ") + e.what());
    } catch (const DecodeError& e) {
        throw ContractRejection(std::string("malformed payload: ") + e.what());
    } catch (const Json::exception&) {
        throw ContractRejection("malformed payload: signed_gpd");
    }
    const auto& sg = entry.signed_gpd;
    if (!sg.vn_sig || sg.vn_sig->key_id != entry.vn_key.key_id() ||
        !crypto::verify(entry.vn_key, vn_signing_message(sg), sg.vn_sig->sig))
        throw ContractRejection("verification node signature");
    const auto& existing = s.patients.at(pid);
    if (!existing.empty() && existing.back().signed_gpd.gpd.seq_no >= sg.gpd.seq_no)
        throw ContractRejection("stale seq_no");
    entry.stored_at_ms = now_ms;
    entry.tx_hash = tx.tx_hash;
    return entry;
}

} // namespace

TxReceipt apply_transaction(ContractState& s, const ChainTransaction& tx, std::int64_t now_ms)
{
    TxReceipt receipt;
    receipt.tx_hash = tx.tx_hash;
    const auto& caller = tx.caller;

    if (tx.function == ContractFunction::ReadRecords) {
        auto pid = payload_str(tx.payload, "patient_id");
        require_patient(s, pid);
        bool allowed = s.patient_accounts.at(pid) == caller || s.patient_owner_hcp.at(pid) == caller ||
                       (s.grants.contains(pid) && s.grants.at(pid).contains(caller));
        if (!allowed)
            throw ContractRejection("access denied");
        receipt.records = s.patients.at(pid);
        return receipt;
    }

    auto nonce_it = s.nonces.find(caller);
    const std::uint64_t expected = nonce_it == s.nonces.end() ? 0 : nonce_it->second;
    if (tx.nonce != expected)
        throw ContractRejection("nonce");

    switch (tx.function) {
    case ContractFunction::AddMembership: {
        auto addr = payload_str(tx.payload, "address");
        Role role;
        try {
            role = role_from_string(payload_str(tx.payload, "role"));
        } catch (const ShapeError&) {
            throw ContractRejection("malformed payload: role");
        }
        const bool bootstrap = s.memberships.empty() && addr == caller && role == Role::Administration;
        const bool admin = has_role(s, caller, Role::Administration);
        const bool registrar = has_role(s, caller, Role::HcpRegistration) && role == Role::Hcp;
        if (!bootstrap && !admin && !registrar)
            throw ContractRejection("privilege");
        s.memberships[addr] = {role, true};
        break;
    }
    case ContractFunction::RevokeMembership: {
        auto addr = payload_str(tx.payload, "address");
        if (!has_role(s, caller, Role::Administration))
            throw ContractRejection("privilege");
        auto it = s.memberships.find(addr);
        if (it == s.memberships.end() || !it->second.active)
            throw ContractRejection("unknown member");
        if (it->second.role == Role::Administration) {
            auto admins = std::count_if(s.memberships.begin(), s.memberships.end(), [](const auto& kv) {
                return kv.second.active && kv.second.role == Role::Administration;
            });
            if (admins <= 1)
                throw ContractRejection("last administration");
        }
        it->second.active = false;
        break;
    }
    case ContractFunction::RegisterPatient: {
        auto pid = payload_str(tx.payload, "patient_id");
        auto account = payload_str(tx.payload, "patient_account");
        if (!has_role(s, caller, Role::Hcp))
            throw ContractRejection("privilege");
        if (s.patients.contains(pid))
            throw ContractRejection("patient already registered");
        s.patients[pid] = {};
        s.patient_owner_hcp[pid] = caller;
        s.patient_accounts[pid] = account;
        break;
    }
    case ContractFunction::AppendGpd: {
        auto pid = payload_str(tx.payload, "patient_id");
        if (!has_role(s, caller, Role::Hcp))
            throw ContractRejection("privilege");
        auto owner = s.patient_owner_hcp.find(pid);
        if (owner == s.patient_owner_hcp.end() || owner->second != caller)
            throw ContractRejection("UI Registration required");
        auto entry = check_append(s, tx, pid, now_ms);
        s.patients[pid].push_back(std::move(entry));
        break;
    }
    case ContractFunction::GrantAccess:
    case ContractFunction::RevokeAccess: {
        auto pid = payload_str(tx.payload, "patient_id");
        auto grantee = payload_str(tx.payload, "grantee");
        require_patient(s, pid);
        if (s.patient_accounts.at(pid) != caller)
            throw ContractRejection("privilege");
        if (tx.function == ContractFunction::GrantAccess) {
            s.grants[pid].insert(grantee);
        } else if (auto it = s.grants.find(pid); it != s.grants.end()) {
            it->second.erase(grantee);
            if (it->second.empty())
                s.grants.erase(it);
        }
        break;
    }
    case ContractFunction::ReadRecords:
        break;
    }
    s.nonces[caller] = expected + 1;
    return receipt;
}

// ---------------------------------------------------------------------------
// Validation and replay

ChainCheck validate_chain(const std::vector<std::string>& lines)
{
    Digest prev;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        Json j;
        try {
            j = Json::parse(lines[i]);
            if (canonical_dump(j) != lines[i])
                return {false, i, "encoding"};
        } catch (const Json::exception&) {
            return {false, i, "format"};
        }
        Block b;
        try {
            b = block_from_json(j);
        } catch (const ShapeError&) {
            return {false, i, "format"};
        } catch (const Json::exception&) {
            return {false, i, "format"};
        }
        for (const auto& tx : b.transactions)
            if (compute_tx_hash(tx) != tx.tx_hash)
                return {false, i, "hash"};
        if (compute_block_hash(b) != b.block_hash)
            return {false, i, "hash"};
        if (b.index != i || b.prev_hash != prev)
            return {false, i, "link"};
        for (const auto& tx : b.transactions)
            if (tx.caller != tx.caller_key.key_id() ||
                !crypto::verify(tx.caller_key, tx_signing_message(tx), tx.caller_signature))
                return {false, i, "signature"};
        prev = b.block_hash;
    }
    return {};
}

ChainCheck validate_chain(const std::vector<Block>& blocks)
{
    std::vector<std::string> lines;
    lines.reserve(blocks.size());
    for (const auto& b : blocks)
        lines.push_back(encode_block_line(b));
    return validate_chain(lines);
}

ContractState replay_state(const std::vector<Block>& blocks)
{
    auto check = validate_chain(blocks);
    if (!check.ok)
        throw ChainCorruption(check.index, check.reason);
    ContractState state;
    for (const auto& b : blocks) {
        for (const auto& tx : b.transactions) {
            try {
                apply_transaction(state, tx, b.timestamp_ms);
            } catch (const ContractRejection& e) {
                throw ChainCorruption(b.index, "contract: " + e.reason());
            }
        }
    }
    return state;
}

std::vector<std::string> read_chain_lines(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            // Missing terminator: keep the fragment so validation flags it.
            lines.push_back(text.substr(pos) + '\x01');
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

// ---------------------------------------------------------------------------
// Ledger

Ledger::Ledger(Ledger&& other) noexcept
    : clock_(other.clock_), blocks_(std::move(other.blocks_)), state_(std::move(other.state_))
{
}

Ledger Ledger::genesis(const Account& admin, const LogicalClock& clock)
{
    Ledger ledger(clock);
    auto tx = make_transaction(admin, ContractFunction::AddMembership,
                               {{"address", admin.address}, {"role", to_string(Role::Administration)}}, 0);
    ledger.submit(tx);
    return ledger;
}

Ledger Ledger::from_lines(const std::vector<std::string>& lines, const LogicalClock& clock)
{
    auto check = validate_chain(lines);
    if (!check.ok)
        throw ChainCorruption(check.index, check.reason);
    Ledger ledger(clock);
    for (const auto& line : lines)
        ledger.blocks_.push_back(block_from_json(Json::parse(line)));
    if (ledger.blocks_.empty())
        throw ChainCorruption(0, "empty chain");
    ledger.state_ = replay_state(ledger.blocks_);
    return ledger;
}

TxReceipt Ledger::submit(const ChainTransaction& tx)
{
    if (tx.caller != tx.caller_key.key_id() ||
        !crypto::verify(tx.caller_key, tx_signing_message(tx), tx.caller_signature) ||
        compute_tx_hash(tx) != tx.tx_hash)
        throw InvalidTxSignature();

    std::lock_guard lock(mutex_);
    const auto now = clock_->now_ms();
    if (tx.function == ContractFunction::ReadRecords)
        return apply_transaction(state_, tx, now);

    ContractState next = state_;
    auto receipt = apply_transaction(next, tx, now);

    Block b;
    b.index = blocks_.size();
    b.prev_hash = blocks_.empty() ? Digest{} : blocks_.back().block_hash;
    b.timestamp_ms = now;
    b.transactions.push_back(tx);
    b.block_hash = compute_block_hash(b);
    blocks_.push_back(std::move(b));
    state_ = std::move(next);
    receipt.block_index = blocks_.back().index;
    return receipt;
}

TxReceipt Ledger::transact(const Account& caller, ContractFunction fn, Json payload)
{
    return submit(make_transaction(caller, fn, std::move(payload), next_nonce(caller.address)));
}

std::uint64_t Ledger::next_nonce(const std::string& address) const
{
    std::lock_guard lock(mutex_);
    auto it = state_.nonces.find(address);
    return it == state_.nonces.end() ? 0 : it->second;
}

std::vector<Block> Ledger::blocks() const
{
    std::lock_guard lock(mutex_);
    return blocks_;
}

ContractState Ledger::state() const
{
    std::lock_guard lock(mutex_);
    return state_;
}

std::size_t Ledger::height() const
{
    std::lock_guard lock(mutex_);
    return blocks_.size();
}

std::vector<std::string> Ledger::to_lines() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> lines;
    for (const auto& b : blocks_)
        lines.push_back(encode_block_line(b));
    return lines;
}

void Ledger::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    for (const auto& line : to_lines())
        out << line << '\n';
}

} // namespace hchain
