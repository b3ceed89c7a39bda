#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hchain::bench {

/// Median wall-clock seconds per operation for one payload size.
struct BenchRow {
    std::uint64_t size_bytes = 0;
    double sym_enc_s = 0.0;
    double sym_dec_s = 0.0;
    double asym_enc_s = 0.0;
    double asym_dec_s = 0.0;

    friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

inline const std::vector<std::uint64_t> kDefaultSizes = {1000, 3000, 10000, 100000, 1000000};
inline constexpr int kDefaultRepetitions = 5;
inline constexpr const char* kCsvHeader = "size_bytes,sym_enc_s,sym_dec_s,asym_enc_s,asym_dec_s";

/// Times AES-256-GCM against chunked RSA-2048-OAEP encryption and decryption.
/// Every repetition's roundtrip is checked; a mismatch throws instead of
/// reporting a time. Rows come back sorted by size. Throws ConfigError on an
/// empty or non-positive size list or repetitions < 3.
std::vector<BenchRow> run_bench(std::vector<std::uint64_t> sizes, int repetitions, std::uint64_t seed = 42);

std::string to_csv(const std::vector<BenchRow>& rows);
std::vector<BenchRow> parse_csv(const std::string& text);

/// Throws IoError on write failure or ConfigError on empty rows.
void emit_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);

} // namespace hchain::bench
