#include "hchain/bench.hpp"
#include "hchain/error.hpp"
#include "hchain/runner.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

using namespace hchain;

namespace {

std::vector<std::uint64_t> parse_sizes(const std::string& list)
{
    std::vector<std::uint64_t> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size())
            throw ConfigError("bad --sizes entry '" + item + "'");
        out.push_back(v);
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"hchain: blockchain smart-healthcare protocol simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed = 0;
    double radius = 0;
    std::size_t batch = 0;
    std::string data_dir;
    std::string master_key;
    std::size_t readings = 0;
    double jitter = 0;

    app.add_option("--config", config_path, "JSON config file");
    auto* o_seed = app.add_option("--seed", seed, "RNG seed");
    auto* o_radius = app.add_option("--radius", radius, "home radius in metres");
    auto* o_batch = app.add_option("--batch", batch, "readings per GPD");
    auto* o_dir = app.add_option("--data-dir", data_dir, "output directory");
    auto* o_key = app.add_option("--master-key", master_key, "directory master key (64 hex chars)");
    auto* o_readings = app.add_option("--readings", readings, "readings streamed by the demo patient");
    auto* o_jitter = app.add_option("--jitter", jitter, "device displacement from home in metres");

    auto* demo = app.add_subcommand("demo", "run the end-to-end pipeline for one patient");

    auto* attack = app.add_subcommand("attack", "run an adversarial scenario at p=1");
    std::string kind;
    attack->add_option("--kind", kind, "attack kind")
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(std::begin(cli::kAttackKinds), std::end(cli::kAttackKinds))));

    auto* access = app.add_subcommand("access", "grant, revoke or read patient records");
    std::string action;
    std::string patient = "patient-001";
    std::string grantee;
    access->add_option("action", action, "grant | revoke | read")
        ->required()
        ->check(CLI::IsMember({"grant", "revoke", "read"}));
    access->add_option("--patient", patient, "patient identity");
    auto* o_grantee = access->add_option("--grantee", grantee, "provider account name");

    auto* verify = app.add_subcommand("verify-chain", "validate chain.jsonl and replay the contract state");

    auto* bench_cmd = app.add_subcommand("bench", "time symmetric and asymmetric encryption");
    std::string sizes_arg;
    int reps = bench::kDefaultRepetitions;
    bench_cmd->add_option("--sizes", sizes_arg, "comma-separated payload sizes in bytes");
    bench_cmd->add_option("--reps", reps, "repetitions per size (at least 3)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kConfigError;
    }

    cli::RunConfig config;
    try {
        if (!config_path.empty())
            config = cli::load_config_file(config_path, config);
        if (o_seed->count())
            config.seed = seed;
        if (o_radius->count())
            config.home_radius_m = radius;
        if (o_batch->count())
            config.batch_size = batch;
        if (o_dir->count())
            config.data_dir = data_dir;
        if (o_readings->count())
            config.readings = readings;
        if (o_jitter->count())
            config.location_jitter_m = jitter;
        if (o_key->count())
            config.master_key = crypto::SecretKey::from_hex(master_key);
        if (const char* env = std::getenv("HCHAIN_MASTER_KEY"); env && *env)
            config.master_key = crypto::SecretKey::from_hex(env);
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return cli::kIoError;
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return cli::kConfigError;
    }

    if (demo->parsed())
        return cli::cmd_demo(config, std::cout);
    if (attack->parsed())
        return cli::cmd_attack(config, kind, std::cout);
    if (access->parsed()) {
        std::optional<std::string> g;
        if (o_grantee->count())
            g = grantee;
        return cli::cmd_access(config, action, patient, g, std::cout);
    }
    if (verify->parsed())
        return cli::cmd_verify_chain(config, std::cout);
    if (bench_cmd->parsed()) {
        std::vector<std::uint64_t> sizes(std::begin(bench::kDefaultSizes), std::end(bench::kDefaultSizes));
        try {
            if (!sizes_arg.empty())
                sizes = parse_sizes(sizes_arg);
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return cli::kConfigError;
        }
        return cli::cmd_bench(config, sizes, reps, std::cout);
    }
    return cli::kConfigError;
}
