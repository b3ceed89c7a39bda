#include "hchain/runner.hpp"

#include "hchain/bench.hpp"
#include "hchain/error.hpp"
#include "hchain/simnet.hpp"

#include <fstream>
#include <sstream>

namespace hchain::cli {

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text))
        throw IoError("cannot write " + path.string());
}

crypto::SecretKey master_key(const RunConfig& c)
{
    return c.master_key.value_or(derive_master_key(c.seed));
}

ScenarioSpec scenario_for(const RunConfig& c)
{
    auto spec = default_scenario(c.seed);
    spec.readings_per_patient = c.readings;
    spec.home_radius_m = c.home_radius_m;
    spec.master_key = master_key(c);
    auto& p = spec.patients.at(0);
    p.identity = c.patient_identity;
    p.home = c.home;
    p.batch_size = c.batch_size;
    p.location_offset_m = c.location_jitter_m;
    return spec;
}

void write_state(const std::filesystem::path& dir, const Ledger& ledger)
{
    write_file(dir / "state.json", canonical_dump(to_json(ledger.state())) + "\n");
}

template <typename F>
int guarded(std::ostream& out, F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        out << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        out << "i/o error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::filesystem::filesystem_error& e) {
        out << "i/o error: " << e.what() << '\n';
        return kIoError;
    } catch (const ChainCorruption& e) {
        out << e.what() << '\n';
        return kRejected;
    } catch (const ContractRejection& e) {
        out << "rejected: " << e.reason() << '\n';
        return kRejected;
    } catch (const Error& e) {
        out << "error: " << e.what() << '\n';
        return kRejected;
    }
}

void print_stage_counts(std::ostream& out, const char* label, const std::map<std::string, std::uint64_t>& m)
{
    out << label;
    if (m.empty())
        out << " none";
    for (const auto& [k, v] : m)
        out << ' ' << k << '=' << v;
    out << '\n';
}

} // namespace

RunConfig config_from_json(const Json& j, RunConfig c)
{
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "seed")
                c.seed = v.get<std::uint64_t>();
            else if (key == "home_radius_m")
                c.home_radius_m = v.get<double>();
            else if (key == "batch_size")
                c.batch_size = v.get<std::size_t>();
            else if (key == "data_dir")
                c.data_dir = v.get<std::string>();
            else if (key == "master_key")
                c.master_key = crypto::SecretKey::from_hex(v.get<std::string>());
            else if (key == "readings")
                c.readings = v.get<std::size_t>();
            else if (key == "location_jitter_m")
                c.location_jitter_m = v.get<double>();
            else if (key == "patient")
                c.patient_identity = v.get<std::string>();
            else if (key == "home")
                c.home = {v.at("lat").get<double>(), v.at("lon").get<double>()};
            else
                throw ConfigError("unknown config field " + key);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DecodeError& e) {
        throw ConfigError(std::string("master_key: ") + e.what());
    }
    return c;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base)
{
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw ConfigError("config file: " + std::string(e.what()));
    }
    return config_from_json(j, std::move(base));
}

// ---------------------------------------------------------------------------

int cmd_demo(const RunConfig& config, std::ostream& out)
{
    return guarded(out, [&] {
        Scenario sc(scenario_for(config), config.data_dir);
        auto report = sc.run();
        const auto& j = report.json;

        // Every stored reading must decrypt, with the escrowed key, back to
        // what the device ingested, in order.
        const auto& dir = sc.directory();
        auto rec = dir.lookup(crypto::deterministic_encrypt_identity(sc.patient_key(0), config.patient_identity));
        auto key = dir.fetch_patient_key(rec);
        std::vector<PhysiologicalReading> stored;
        const auto state = sc.ledger().state();
        for (const auto& e : state.patients.at(sc.ledger_patient_id(0)))
            for (const auto& r : e.signed_gpd.gpd.readings)
                stored.push_back(decrypt_reading(key, r));
        const auto& ingested = sc.ingested(0);
        const bool exact = stored == ingested;

        write_state(config.data_dir, sc.ledger());

        out << "readings ingested:   " << j["readings_generated"] << '\n';
        out << "gpds emitted:        " << j["gpds_emitted"] << '\n';
        out << "hcp edge:            accepted=" << j["hcp_edge"]["accepted"]
            << " discarded=" << j["hcp_edge"]["discarded"] << '\n';
        out << "verification node:   stored=" << j["verification_node"]["stored"] << '\n';
        print_stage_counts(out, "rejections by stage:", report.rejections);
        out << "ledger entries:      " << report.ledger_entries << '\n';
        out << "chain length:        " << j["ledger"]["height"] << " blocks\n";
        out << "stored readings:     " << stored.size() << '/' << ingested.size()
            << (exact ? " (decrypt to ingested plaintexts)" : " (MISMATCH)") << '\n';
        out << "data dir:            " << config.data_dir.string() << '\n';

        if (!exact) {
            if (!report.rejections.empty())
                out << "FAIL: readings rejected at stage " << report.rejections.begin()->first << '\n';
            else
                out << "FAIL: not every reading reached the ledger\n";
            return static_cast<int>(kRejected);
        }
        out << "OK\n";
        return static_cast<int>(kOk);
    });
}

int cmd_attack(const RunConfig& config, const std::string& kind, std::ostream& out)
{
    return guarded(out, [&] {
        auto spec = scenario_for(config);
        auto& adv = spec.adversary;
        adv.policy.probability = 1.0;
        adv.policy.seed = config.seed;
        std::string expected;
        if (kind == "tamper") {
            adv.policy.kind = AdversaryKind::TamperRandomByte;
        } else if (kind == "replay") {
            adv.policy.kind = AdversaryKind::ReplayPrevious;
        } else if (kind == "forge-signature") {
            adv.policy.kind = AdversaryKind::InjectForged;
        } else if (kind == "wrong-location") {
            adv.policy.kind = AdversaryKind::RerouteWrongLocation;
        } else if (kind == "bad-identity") {
            spec.patients.at(0).claimed_identity = config.patient_identity + "-impostor";
        } else {
            throw ConfigError("unknown attack kind: " + kind);
        }
        expected = kind == "bad-identity" ? "identity" : expected_rejection_stage(adv.policy.kind);

        Scenario sc(spec, config.data_dir / ("attack-" + kind));
        auto report = sc.run();
        out << "attack:              " << kind << '\n';
        out << "attacked messages:   " << report.attacked_messages << '\n';
        out << "attacked stored:     " << report.attacked_stored << '\n';
        print_stage_counts(out, "rejected at stage:  ", report.attacked_rejections);
        out << "expected stage:      " << expected << '\n';
        out << "ledger entries:      " << report.ledger_entries << '\n';

        bool ok = report.attacked_messages > 0 && report.attacked_stored == 0;
        for (const auto& [stage, n] : report.attacked_rejections)
            ok = ok && stage == expected;
        out << (ok ? "CONTAINED\n" : "NOT CONTAINED\n");
        return static_cast<int>(ok ? kOk : kRejected);
    });
}

int cmd_access(const RunConfig& config, const std::string& action, const std::string& patient,
               const std::optional<std::string>& grantee, std::ostream& out)
{
    return guarded(out, [&] {
        if (action != "grant" && action != "revoke" && action != "read")
            throw ConfigError("access action must be grant, revoke or read");
        if (action != "read" && !grantee)
            throw ConfigError("--grantee is required for " + action);

        const auto chain_path = config.data_dir / "chain.jsonl";
        if (!std::filesystem::exists(chain_path))
            throw IoError("no chain at " + chain_path.string() + " (run demo first)");
        const auto lines = read_chain_lines(chain_path);
        LogicalClock clock;
        auto ledger = Ledger::from_lines(lines, clock);
        const auto blocks = ledger.blocks();
        clock.advance_to(blocks.back().timestamp_ms + 1000);

        const auto patient_key = derive_patient_key(config.seed, patient);
        const auto token = crypto::deterministic_encrypt_identity(patient_key, patient);
        const auto pid = ledger_patient_id(token);
        const auto patient_account = derive_patient_account(config.seed, patient);
        std::optional<Account> grantee_account;
        if (grantee)
            grantee_account = derive_named_account(config.seed, *grantee);

        if (action == "grant" || action == "revoke") {
            auto fn = action == "grant" ? ContractFunction::GrantAccess : ContractFunction::RevokeAccess;
            auto receipt =
                ledger.transact(patient_account, fn, {{"patient_id", pid}, {"grantee", grantee_account->address}});
            ledger.save(chain_path);
            write_state(config.data_dir, ledger);
            out << action << " " << *grantee << " (" << grantee_account->address << ") on " << pid << ": block "
                << receipt.block_index.value_or(0) << '\n';
            return static_cast<int>(kOk);
        }

        const Account& reader = grantee_account ? *grantee_account : patient_account;
        auto receipt = ledger.submit(make_transaction(reader, ContractFunction::ReadRecords,
                                                      {{"patient_id", pid}}, ledger.next_nonce(reader.address)));
        std::size_t total = 0;
        std::size_t decrypted = 0;
        SecuredDirectory dir(master_key(config), *std::make_unique<crypto::Rng>(config.seed),
                             config.data_dir / "directory.store");
        std::optional<crypto::SecretKey> key;
        if (auto rec = dir.find(token))
            key = dir.fetch_patient_key(*rec);
        for (const auto& e : receipt.records) {
            for (const auto& r : e.signed_gpd.gpd.readings) {
                ++total;
                if (!key)
                    continue;
                try {
                    decrypt_reading(*key, r);
                    ++decrypted;
                } catch (const Error&) {
                }
            }
        }
        out << "entries: " << receipt.records.size() << '\n';
        out << "readings: " << total << " (" << decrypted << " decryptable with escrowed patient key)\n";
        return static_cast<int>(kOk);
    });
}

int cmd_verify_chain(const RunConfig& config, std::ostream& out)
{
    return guarded(out, [&] {
        const auto chain_path = config.data_dir / "chain.jsonl";
        if (!std::filesystem::exists(chain_path))
            throw IoError("no chain at " + chain_path.string());
        const auto lines = read_chain_lines(chain_path);
        auto check = validate_chain(lines);
        if (!check.ok) {
            out << "chain corruption at block " << check.index << ": " << check.reason << '\n';
            return static_cast<int>(kRejected);
        }
        std::vector<Block> blocks;
        for (const auto& line : lines)
            blocks.push_back(block_from_json(Json::parse(line)));
        const auto replayed = canonical_dump(to_json(replay_state(blocks)));
        out << "blocks: " << blocks.size() << " valid\n";
        const auto state_path = config.data_dir / "state.json";
        if (std::filesystem::exists(state_path)) {
            auto recorded = read_file(state_path);
            if (!recorded.empty() && recorded.back() == '\n')
                recorded.pop_back();
            if (recorded != replayed) {
                out << "replayed state differs from recorded state.json\n";
                return static_cast<int>(kRejected);
            }
            out << "replayed state matches state.json\n";
        }
        out << "OK\n";
        return static_cast<int>(kOk);
    });
}

int cmd_bench(const RunConfig& config, const std::vector<std::uint64_t>& sizes, int repetitions,
              std::ostream& out)
{
    return guarded(out, [&] {
        auto rows = bench::run_bench(sizes, repetitions, config.seed);
        std::filesystem::create_directories(config.data_dir);
        const auto path = config.data_dir / "bench.csv";
        bench::emit_csv(rows, path);
        out << bench::to_csv(rows);
        out << "wrote " << path.string() << '\n';
        return static_cast<int>(kOk);
    });
}

} // namespace hchain::cli
