#include "support.hpp"

#include "hchain/error.hpp"

#include <doctest.h>

#include <algorithm>

using namespace hchain;

namespace {

enum class Actor { None, Hcp, HcpRegistration, Administration, Patient };
constexpr Actor kActors[] = {Actor::None, Actor::Hcp, Actor::HcpRegistration, Actor::Administration,
                             Actor::Patient};

const char* name(Actor a)
{
    switch (a) {
    case Actor::None: return "none";
    case Actor::Hcp: return "hcp";
    case Actor::HcpRegistration: return "hcp_registration";
    case Actor::Administration: return "administration";
    case Actor::Patient: return "patient";
    }
    return "?";
}

// The contract's permission table, written out independently of the code.
bool permitted(Actor a, ContractFunction f)
{
    switch (f) {
    case ContractFunction::AddMembership: return a == Actor::Administration || a == Actor::HcpRegistration;
    case ContractFunction::RevokeMembership: return a == Actor::Administration;
    case ContractFunction::RegisterPatient: return a == Actor::Hcp;
    case ContractFunction::AppendGpd: return a == Actor::Hcp;
    case ContractFunction::GrantAccess: return a == Actor::Patient;
    case ContractFunction::RevokeAccess: return a == Actor::Patient;
    case ContractFunction::ReadRecords: return a == Actor::Patient || a == Actor::Hcp;
    }
    return false;
}

/// A VN-countersigned append payload for the pipeline's patient.
Json append_payload(support::Pipeline& p, PatientEdge& dev)
{
    auto s = p.signed_gpd(dev);
    s.vn_sig = SignatureRecord{p.vn.keypair().key_id(), crypto::sign(p.vn.keypair(), vn_signing_message(s))};
    return {{"patient_id", p.patient_id}, {"signed_gpd", to_json(s)}, {"vn_key", p.vn.keypair().public_key().hex()}};
}

std::string state_text(const ContractState& s) { return canonical_dump(to_json(s)); }

std::string join_lines(const std::vector<std::string>& lines)
{
    std::string out;
    for (const auto& l : lines)
        out += l + "\n";
    return out;
}

/// Pipeline whose chain has grown to at least n blocks through real appends.
std::unique_ptr<support::Pipeline> long_chain(std::size_t n)
{
    auto p = std::make_unique<support::Pipeline>(99);
    auto dev = p->device(1);
    while (p->ledger.height() < n) {
        auto out = p->vn.handle(p->signed_gpd(*dev, 1));
        REQUIRE(out.stored);
    }
    return p;
}

} // namespace

TEST_CASE("genesis")
{
    crypto::Rng rng(1);
    LogicalClock clock;
    auto admin = Account::generate(rng);
    auto ledger = Ledger::genesis(admin, clock);
    CHECK(ledger.height() == 1);
    auto blocks = ledger.blocks();
    CHECK(blocks[0].prev_hash.hex() == std::string(64, '0'));
    CHECK(blocks[0].index == 0);
    CHECK(validate_chain(ledger.to_lines()).ok);
    auto st = ledger.state();
    REQUIRE(st.memberships.size() == 1);
    CHECK(st.memberships.at(admin.address).role == Role::Administration);
    CHECK(st.memberships.at(admin.address).active);
    CHECK(state_text(replay_state(blocks)) == state_text(st));
    CHECK(replay_state(blocks).memberships.size() == 1);
    CHECK(admin.address == admin.keypair.key_id());
}

TEST_CASE("submit: privileges, signatures and nonces")
{
    crypto::Rng rng(2);
    LogicalClock clock;
    auto admin = Account::generate(rng);
    auto reg = Account::generate(rng);
    auto hcp = Account::generate(rng);
    auto ledger = Ledger::genesis(admin, clock);

    auto r = ledger.transact(admin, ContractFunction::AddMembership,
                             {{"address", reg.address}, {"role", "hcp_registration"}});
    CHECK(r.block_index == 1);
    ledger.transact(reg, ContractFunction::AddMembership, {{"address", hcp.address}, {"role", "hcp"}});

    try {
        ledger.transact(hcp, ContractFunction::AddMembership,
                        {{"address", Account::generate(rng).address}, {"role", "hcp"}});
        FAIL("expected rejection");
    } catch (const ContractRejection& e) {
        CHECK(e.reason() == "privilege");
    }
    try {
        ledger.transact(reg, ContractFunction::AddMembership,
                        {{"address", Account::generate(rng).address}, {"role", "administration"}});
        FAIL("expected rejection");
    } catch (const ContractRejection& e) {
        CHECK(e.reason() == "privilege");
    }

    auto tx = make_transaction(admin, ContractFunction::AddMembership,
                               {{"address", Account::generate(rng).address}, {"role", "hcp"}},
                               ledger.next_nonce(admin.address));
    auto unsigned_tx = tx;
    unsigned_tx.caller_signature.bytes.clear();
    CHECK_THROWS_AS(ledger.submit(unsigned_tx), InvalidTxSignature);
    auto impostor = tx;
    impostor.caller = hcp.address;
    CHECK_THROWS_AS(ledger.submit(impostor), InvalidTxSignature);

    auto stale = make_transaction(admin, ContractFunction::AddMembership,
                                  {{"address", Account::generate(rng).address}, {"role", "hcp"}}, 0);
    try {
        ledger.submit(stale);
        FAIL("expected rejection");
    } catch (const ContractRejection& e) {
        CHECK(e.reason() == "nonce");
    }

    const auto height = ledger.height();
    CHECK_NOTHROW(ledger.submit(tx));
    CHECK(ledger.height() == height + 1);
    CHECK_THROWS_AS(ledger.submit(tx), ContractRejection);
    CHECK(validate_chain(ledger.to_lines()).ok);
}

TEST_CASE("membership revocation")
{
    crypto::Rng rng(3);
    LogicalClock clock;
    auto admin = Account::generate(rng);
    auto hcp = Account::generate(rng);
    auto ledger = Ledger::genesis(admin, clock);
    ledger.transact(admin, ContractFunction::AddMembership, {{"address", hcp.address}, {"role", "hcp"}});

    auto reject_reason = [&](const Account& who, Json payload) {
        try {
            ledger.transact(who, ContractFunction::RevokeMembership, std::move(payload));
        } catch (const ContractRejection& e) {
            return e.reason();
        }
        return std::string("accepted");
    };
    CHECK(reject_reason(admin, {{"address", admin.address}}) == "last administration");
    CHECK(reject_reason(admin, {{"address", Account::generate(rng).address}}) == "unknown member");
    CHECK(reject_reason(hcp, {{"address", hcp.address}}) == "privilege");
    CHECK(reject_reason(admin, {{"address", hcp.address}}) == "accepted");
    CHECK_FALSE(ledger.state().memberships.at(hcp.address).active);

    try {
        ledger.transact(hcp, ContractFunction::RegisterPatient, {{"patient_id", "pt-x"}, {"patient_account", "a"}});
        FAIL("expected rejection");
    } catch (const ContractRejection& e) {
        CHECK(e.reason() == "privilege");
    }
}

TEST_CASE("role by function acceptance matrix")
{
    int mismatches = 0;
    for (auto actor : kActors) {
        for (auto fn : kAllFunctions) {
            support::Pipeline p(5);
            auto hcp2 = Account::generate(p.rng);
            p.ledger.transact(p.admin, ContractFunction::AddMembership, {{"address", hcp2.address}, {"role", "hcp"}});
            auto outsider = Account::generate(p.rng);
            const Account* caller = nullptr;
            switch (actor) {
            case Actor::None: caller = &outsider; break;
            case Actor::Hcp: caller = &p.hcp; break;
            case Actor::HcpRegistration: caller = &p.registrar; break;
            case Actor::Administration: caller = &p.admin; break;
            case Actor::Patient: caller = &p.patient_account; break;
            }
            auto dev = p.device();
            Json payload;
            switch (fn) {
            case ContractFunction::AddMembership:
                payload = {{"address", Account::generate(p.rng).address}, {"role", "hcp"}};
                break;
            case ContractFunction::RevokeMembership: payload = {{"address", hcp2.address}}; break;
            case ContractFunction::RegisterPatient:
                payload = {{"patient_id", "pt-new"}, {"patient_account", Account::generate(p.rng).address}};
                break;
            case ContractFunction::AppendGpd: payload = append_payload(p, *dev); break;
            case ContractFunction::GrantAccess:
            case ContractFunction::RevokeAccess:
                payload = {{"patient_id", p.patient_id}, {"grantee", outsider.address}};
                break;
            case ContractFunction::ReadRecords: payload = {{"patient_id", p.patient_id}}; break;
            }
            bool accepted = true;
            std::string reason;
            try {
                p.ledger.transact(*caller, fn, payload);
            } catch (const ContractRejection& e) {
                accepted = false;
                reason = e.reason();
            }
            if (accepted != permitted(actor, fn)) {
                ++mismatches;
                MESSAGE(name(actor) << " x " << to_string(fn) << ": accepted=" << accepted << " " << reason);
            }
            if (!accepted) {
                bool expected_reason = reason == "privilege" || reason == "access denied";
                if (fn == ContractFunction::AppendGpd && actor != Actor::Hcp)
                    expected_reason = reason == "privilege";
                CHECK(expected_reason);
            }
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("append_gpd contract rules")
{
    support::Pipeline p(6);
    auto dev = p.device();
    auto payload = append_payload(p, *dev);

    auto unknown = payload;
    unknown["patient_id"] = "pt-missing";
    CHECK_THROWS_WITH_AS(p.ledger.transact(p.hcp, ContractFunction::AppendGpd, unknown), "UI Registration required",
                         ContractRejection);

    auto bad_sig = payload;
    bad_sig["vn_key"] = crypto::SignatureKeyPair::generate(p.rng).public_key().hex();
    CHECK_THROWS_WITH_AS(p.ledger.transact(p.hcp, ContractFunction::AppendGpd, bad_sig),
                         "verification node signature", ContractRejection);

    auto no_vn = payload;
    no_vn["signed_gpd"]["vn_sig"] = nullptr;
    CHECK_THROWS_WITH_AS(p.ledger.transact(p.hcp, ContractFunction::AppendGpd, no_vn), "verification node signature",
                         ContractRejection);

    CHECK_NOTHROW(p.ledger.transact(p.hcp, ContractFunction::AppendGpd, payload));
    CHECK_THROWS_WITH_AS(p.ledger.transact(p.hcp, ContractFunction::AppendGpd, payload), "stale seq_no",
                         ContractRejection);

    auto other_hcp = Account::generate(p.rng);
    p.ledger.transact(p.registrar, ContractFunction::AddMembership, {{"address", other_hcp.address}, {"role", "hcp"}});
    CHECK_THROWS_WITH_AS(p.ledger.transact(other_hcp, ContractFunction::AppendGpd, append_payload(p, *dev)),
                         "UI Registration required", ContractRejection);

    CHECK_THROWS_WITH_AS(p.ledger.transact(p.hcp, ContractFunction::RegisterPatient,
                                           {{"patient_id", p.patient_id}, {"patient_account", "x"}}),
                         "patient already registered", ContractRejection);
}

TEST_CASE("grantee reads succeed exactly between grant and revoke")
{
    // Every arrangement of three grants and three revokes, with a read probe
    // before the first step and after every step.
    std::string ops = "GGGRRR";
    int sequences = 0;
    int mismatches = 0;
    do {
        support::Pipeline p(8);
        auto dev = p.device();
        REQUIRE(p.vn.handle(p.signed_gpd(*dev)).stored);
        auto grantee = Account::generate(p.rng);
        auto bystander = Account::generate(p.rng);
        bool granted = false;

        auto probe = [&](const Account& who, bool expect) {
            bool ok = true;
            try {
                auto r = p.ledger.transact(who, ContractFunction::ReadRecords, {{"patient_id", p.patient_id}});
                ok = r.records.size() == 1 && !r.block_index;
            } catch (const ContractRejection& e) {
                ok = false;
                if (e.reason() != "access denied")
                    ++mismatches;
            }
            if (ok != expect)
                ++mismatches;
        };

        probe(grantee, granted);
        for (char op : ops) {
            auto fn = op == 'G' ? ContractFunction::GrantAccess : ContractFunction::RevokeAccess;
            p.ledger.transact(p.patient_account, fn, {{"patient_id", p.patient_id}, {"grantee", grantee.address}});
            granted = op == 'G';
            probe(grantee, granted);
            probe(bystander, false);
            probe(p.patient_account, true);
            probe(p.hcp, true);
        }
        auto replayed = replay_state(p.ledger.blocks());
        CHECK(state_text(replayed) == state_text(p.ledger.state()));
        CHECK(replayed.grants.contains(p.patient_id) == granted);
        ++sequences;
    } while (std::next_permutation(ops.begin(), ops.end()));
    CHECK(sequences == 20);
    CHECK(mismatches == 0);
}

TEST_CASE("grant then revoke leaves the grantee absent after replay")
{
    support::Pipeline p(9);
    auto grantee = Account::generate(p.rng);
    p.ledger.transact(p.patient_account, ContractFunction::GrantAccess,
                      {{"patient_id", p.patient_id}, {"grantee", grantee.address}});
    CHECK(replay_state(p.ledger.blocks()).grants.at(p.patient_id).contains(grantee.address));
    p.ledger.transact(p.patient_account, ContractFunction::RevokeAccess,
                      {{"patient_id", p.patient_id}, {"grantee", grantee.address}});
    auto st = replay_state(p.ledger.blocks());
    CHECK_FALSE(st.grants.contains(p.patient_id));
}

TEST_CASE("validate_chain on a pristine 50-block chain")
{
    auto p = long_chain(50);
    auto lines = p->ledger.to_lines();
    CHECK(lines.size() >= 50);
    CHECK(validate_chain(lines).ok);
    CHECK(validate_chain(p->ledger.blocks()).ok);
    CHECK(state_text(replay_state(p->ledger.blocks())) == state_text(p->ledger.state()));

    SUBCASE("payload mutation in block 7 is a hash failure at 7")
    {
        auto bad = lines;
        auto pos = bad[7].find("\"digest\":\"");
        REQUIRE(pos != std::string::npos);
        pos += 10;
        bad[7][pos] = bad[7][pos] == 'a' ? 'b' : 'a';
        auto res = validate_chain(bad);
        CHECK_FALSE(res.ok);
        CHECK(res.index == 7);
        CHECK(res.reason == "hash");
    }
    SUBCASE("swapping blocks 3 and 4 is a link failure at 3")
    {
        auto bad = lines;
        std::swap(bad[3], bad[4]);
        auto res = validate_chain(bad);
        CHECK_FALSE(res.ok);
        CHECK(res.index == 3);
        CHECK(res.reason == "link");
    }
    SUBCASE("dropping a block is a link failure")
    {
        auto bad = lines;
        bad.erase(bad.begin() + 10);
        auto res = validate_chain(bad);
        CHECK(res.index == 10);
        CHECK(res.reason == "link");
    }
    SUBCASE("re-signed transaction with a foreign key is caught")
    {
        auto blocks = p->ledger.blocks();
        auto rogue = Account::generate(p->rng);
        auto& tx = blocks[5].transactions[0];
        tx.caller_signature = crypto::sign(rogue.keypair, tx_signing_message(tx));
        tx.tx_hash = compute_tx_hash(tx);
        blocks[5].block_hash = compute_block_hash(blocks[5]);
        auto res = validate_chain(blocks);
        CHECK_FALSE(res.ok);
        CHECK(res.index == 5);
    }
}

TEST_CASE("random single-byte mutations of a persisted chain are all located")
{
    auto p = long_chain(25);
    support::TempDir tmp("chain");
    const auto path = tmp.path() / "chain.jsonl";
    p->ledger.save(path);
    const auto pristine = support::slurp(path);
    REQUIRE(pristine == join_lines(p->ledger.to_lines()));
    REQUIRE(validate_chain(read_chain_lines(path)).ok);

    crypto::Rng rng(77);
    int missed = 0;
    int misplaced = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto bytes = pristine;
        auto pos = rng.uniform(bytes.size());
        bytes[pos] = static_cast<char>(bytes[pos] ^ static_cast<char>(1 + rng.uniform(255)));
        support::spit(path, bytes);
        auto expected_index = static_cast<std::size_t>(std::count(pristine.begin(), pristine.begin() + pos, '\n'));
        auto res = validate_chain(read_chain_lines(path));
        if (res.ok)
            ++missed;
        else if (res.index != expected_index)
            ++misplaced;
    }
    CHECK(missed == 0);
    CHECK(misplaced == 0);
}

TEST_CASE("save and reload reproduce the chain and state")
{
    auto p = long_chain(12);
    support::TempDir tmp("reload");
    const auto path = tmp.path() / "chain.jsonl";
    p->ledger.save(path);
    LogicalClock clock;
    clock.advance_to(1'000'000);
    auto reloaded = Ledger::from_lines(read_chain_lines(path), clock);
    CHECK(reloaded.to_lines() == p->ledger.to_lines());
    CHECK(state_text(reloaded.state()) == state_text(p->ledger.state()));
    CHECK(reloaded.next_nonce(p->hcp.address) == p->ledger.next_nonce(p->hcp.address));

    auto lines = p->ledger.to_lines();
    lines[4][20] ^= 1;
    CHECK_THROWS_AS(Ledger::from_lines(lines, clock), ChainCorruption);
}

TEST_CASE("chain bytes carry no plaintext readings")
{
    auto p = long_chain(10);
    auto text = join_lines(p->ledger.to_lines());
    CHECK_FALSE(support::contains(text, p->identity));
    CHECK_FALSE(support::contains(text, "heart_rate"));
    CHECK_FALSE(support::contains(text, "51.5007"));
}

TEST_CASE("blocks are hash-linked")
{
    auto p = long_chain(6);
    auto blocks = p->ledger.blocks();
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        CHECK(blocks[i].prev_hash == blocks[i - 1].block_hash);
        CHECK(blocks[i].index == i);
        CHECK(blocks[i].transactions.size() == 1);
        CHECK(compute_block_hash(blocks[i]) == blocks[i].block_hash);
        CHECK(block_from_json(Json::parse(encode_block_line(blocks[i]))).block_hash == blocks[i].block_hash);
    }
}
