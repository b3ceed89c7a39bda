#include "support.hpp"

#include "hchain/error.hpp"

#include <doctest.h>

#include <atomic>
#include <iomanip>
#include <thread>

using namespace hchain;

TEST_CASE("register then look up")
{
    crypto::Rng rng(1);
    auto master = crypto::SecretKey::generate(rng);
    auto pk = crypto::SecretKey::generate(rng);
    SecuredDirectory dir(master, rng);
    GeoCoordinate home{51.5007, -0.1246};
    auto rec = dir.register_patient("patient-001", pk, home, "pt-1", 42);
    CHECK(rec.identity_token == crypto::deterministic_encrypt_identity(pk, "patient-001"));
    CHECK(dir.size() == 1);

    auto found = dir.lookup(rec.identity_token);
    CHECK(found.ledger_patient_id == "pt-1");
    CHECK(found.enrolled_at_ms == 42);
    CHECK(dir.fetch_home_coordinate(found) == home);
    CHECK(dir.fetch_patient_key(found) == pk);

    CHECK_THROWS_AS(dir.register_patient("patient-001", pk, home, "pt-2"), DuplicateIdentity);
    CHECK_THROWS_AS(dir.register_patient("patient-002", pk, {95, 0}, "pt-2"), ShapeError);

    auto other = crypto::deterministic_encrypt_identity(pk, "patient-999");
    CHECK_THROWS_AS(dir.lookup(other), NotFound);
    CHECK_FALSE(dir.find(other));
    for (std::size_t i = 0; i < rec.identity_token.bytes.size(); ++i) {
        auto near = rec.identity_token;
        near.bytes[i] ^= 1;
        REQUIRE_THROWS_AS(dir.lookup(near), NotFound);
    }
}

TEST_CASE("escrowed key opens readings produced by the patient")
{
    crypto::Rng rng(2);
    auto master = crypto::SecretKey::generate(rng);
    auto pk = crypto::SecretKey::generate(rng);
    SecuredDirectory dir(master, rng);
    auto rec = dir.register_patient("patient-001", pk, {10, 10}, "pt-1");

    PatientEdgeConfig c;
    c.patient_identity = "patient-001";
    c.secret_key = pk;
    c.home_location = {10, 10};
    c.batch_size = 1;
    PatientEdge dev(c, rng);
    auto r = support::reading(SensorKind::Spo2, 96.5, 3);
    auto g = dev.ingest_reading(r);
    REQUIRE(g);
    CHECK(decrypt_reading(dir.fetch_patient_key(dir.lookup(g->identity_token)), g->readings[0]) == r);
}

TEST_CASE("persisted store reloads and detects corruption")
{
    support::TempDir tmp("dir");
    const auto path = tmp.path() / "directory.store";
    crypto::Rng rng(3);
    auto master = crypto::SecretKey::generate(rng);
    auto pk = crypto::SecretKey::generate(rng);
    GeoCoordinate home{40.7128, -74.006};
    crypto::IdentityToken token;
    {
        SecuredDirectory dir(master, rng, path);
        token = dir.register_patient("alice", pk, home, "pt-a").identity_token;
        dir.register_patient("bob", crypto::SecretKey::generate(rng), {1, 2}, "pt-b");
    }
    REQUIRE(std::filesystem::exists(path));
    {
        SecuredDirectory again(master, rng, path);
        CHECK(again.size() == 2);
        auto rec = again.lookup(token);
        CHECK(rec.ledger_patient_id == "pt-a");
        CHECK(again.fetch_home_coordinate(rec) == home);
        CHECK(again.fetch_patient_key(rec) == pk);
    }
    {
        auto wrong = crypto::SecretKey::generate(rng);
        CHECK_THROWS_AS(SecuredDirectory(wrong, rng, path), AuthenticationFailure);
    }

    // Flip one byte inside a base64 blob; the reload must refuse it.
    const auto original = support::slurp(path);
    auto blob_at = original.find("\"blob\":\"");
    REQUIRE(blob_at != std::string::npos);
    auto corrupt = original;
    auto pos = blob_at + 8 + 10;
    corrupt[pos] = corrupt[pos] == 'A' ? 'B' : 'A';
    support::spit(path, corrupt);
    CHECK_THROWS_AS(SecuredDirectory(master, rng, path), AuthenticationFailure);
}

TEST_CASE("swapping blobs between tokens is detected")
{
    support::TempDir tmp("swap");
    const auto path = tmp.path() / "directory.store";
    crypto::Rng rng(4);
    auto master = crypto::SecretKey::generate(rng);
    {
        SecuredDirectory dir(master, rng, path);
        dir.register_patient("alice", crypto::SecretKey::generate(rng), {1, 1}, "pt-a");
        dir.register_patient("bob", crypto::SecretKey::generate(rng), {2, 2}, "pt-b");
    }
    auto j = Json::parse(support::slurp(path));
    auto& recs = j["records"];
    std::vector<std::string> keys;
    for (auto& [k, v] : recs.items())
        keys.push_back(k);
    REQUIRE(keys.size() == 2);
    std::swap(recs[keys[0]], recs[keys[1]]);
    support::spit(path, j.dump());
    CHECK_THROWS_AS(SecuredDirectory(master, rng, path), AuthenticationFailure);
}

TEST_CASE("store bytes never contain plaintext identities, coordinates or keys")
{
    crypto::Rng rng(5);
    support::TempDir tmp("scan");
    int hits = 0;
    for (int run = 0; run < 100; ++run) {
        const auto path = tmp.path() / ("store-" + std::to_string(run));
        auto master = crypto::SecretKey::generate(rng);
        SecuredDirectory dir(master, rng, path);
        std::vector<std::string> needles;
        for (int p = 0; p < 3; ++p) {
            auto id = "patient-" + std::to_string(rng.next_u64() % 1000000);
            auto key = crypto::SecretKey::generate(rng);
            // Four decimals with a non-zero last digit, so every needle is long
            // enough that a chance match in ciphertext is negligible.
            auto coord = [&](int span) {
                auto whole = static_cast<double>(static_cast<int>(rng.uniform(2 * span)) - span);
                auto frac = static_cast<double>(1001 + rng.uniform(899) * 10 + rng.uniform(9)) / 1e4;
                return whole + frac;
            };
            GeoCoordinate home{coord(80), coord(170)};
            if (dir.find(crypto::deterministic_encrypt_identity(key, id)))
                continue;
            dir.register_patient(id, key, home, "pt-" + std::to_string(run * 10 + p));
            std::ostringstream lat, lon;
            lat << std::setprecision(10) << home.latitude;
            lon << std::setprecision(10) << home.longitude;
            needles.push_back(id);
            needles.push_back(lat.str());
            needles.push_back(lon.str());
            needles.push_back(canonical_dump(to_json(home)));
            needles.push_back(key.hex());
            needles.push_back(to_string(key.bytes));
            needles.push_back(base64_encode(key.bytes));
        }
        const auto bytes = support::slurp(path);
        for (const auto& n : needles)
            if (support::contains(bytes, n)) {
                ++hits;
                MESSAGE("found plaintext: " << n);
            }
    }
    CHECK(hits == 0);
}

TEST_CASE("concurrent readers see consistent records")
{
    crypto::Rng rng(6);
    auto master = crypto::SecretKey::generate(rng);
    SecuredDirectory dir(master, rng);
    std::vector<crypto::IdentityToken> tokens;
    for (int i = 0; i < 20; ++i)
        tokens.push_back(dir.register_patient("p" + std::to_string(i), crypto::SecretKey::generate(rng),
                                              {double(i), double(i)}, "pt-" + std::to_string(i))
                             .identity_token);
    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t)
        readers.emplace_back([&, t] {
            for (int k = 0; k < 200; ++k) {
                auto i = static_cast<std::size_t>((k + t) % 20);
                auto rec = dir.lookup(tokens[i]);
                if (rec.ledger_patient_id != "pt-" + std::to_string(i) ||
                    dir.fetch_home_coordinate(rec).latitude != double(i))
                    ++bad;
            }
        });
    for (auto& th : readers)
        th.join();
    CHECK(bad == 0);
}
