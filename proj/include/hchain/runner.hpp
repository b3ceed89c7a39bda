#pragma once

// Command implementations behind the hchain CLI. Each returns a process exit
// code and writes a human-readable summary to out.

#include "hchain/crypto.hpp"
#include "hchain/payload.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hchain::cli {

enum ExitCode : int {
    kOk = 0,
    kRejected = 1,
    kConfigError = 2,
    kIoError = 3,
};

struct RunConfig {
    std::uint64_t seed = 42;
    double home_radius_m = 100.0;
    std::size_t batch_size = 5;
    std::filesystem::path data_dir = "./hchain-data";
    /// Derived from the seed when absent.
    std::optional<crypto::SecretKey> master_key;
    std::size_t readings = 20;
    /// Constant displacement of the patient device from home, metres.
    double location_jitter_m = 0.0;
    std::string patient_identity = "patient-001";
    GeoCoordinate home{51.5007, -0.1246};
};

/// Fields: seed, home_radius_m, batch_size, data_dir, master_key (hex),
/// readings, location_jitter_m, patient, home {lat, lon}. Throws ConfigError.
RunConfig config_from_json(const Json& j, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

inline constexpr const char* kAttackKinds[] = {"tamper", "replay", "forge-signature", "wrong-location",
                                               "bad-identity"};

int cmd_demo(const RunConfig& config, std::ostream& out);
int cmd_attack(const RunConfig& config, const std::string& kind, std::ostream& out);
int cmd_access(const RunConfig& config, const std::string& action, const std::string& patient,
               const std::optional<std::string>& grantee, std::ostream& out);
int cmd_verify_chain(const RunConfig& config, std::ostream& out);
int cmd_bench(const RunConfig& config, const std::vector<std::uint64_t>& sizes, int repetitions,
              std::ostream& out);

} // namespace hchain::cli
