#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

namespace hchain {

/// Simulated time in milliseconds. Advanced explicitly by the driver, never
/// read from the wall clock.
class LogicalClock {
public:
    std::int64_t now_ms() const { return now_; }
    void advance_to(std::int64_t t)
    {
        if (t > now_)
            now_ = t;
    }
    void tick(std::int64_t dt = 1) { now_ += dt; }

private:
    std::int64_t now_ = 0;
};

/// Append-only JSON-lines audit trail. Entries are kept in memory and, when a
/// path is given, flushed line by line to disk.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::filesystem::path path);

    void append(nlohmann::json entry);
    const std::vector<nlohmann::json>& entries() const { return entries_; }

private:
    std::vector<nlohmann::json> entries_;
    std::optional<std::ofstream> out_;
};

} // namespace hchain
