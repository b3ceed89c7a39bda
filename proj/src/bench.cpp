#include "hchain/bench.hpp"

#include "hchain/crypto.hpp"
#include "hchain/error.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hchain::bench {

namespace {

template <typename F>
double time_once(F&& f)
{
    auto t0 = std::chrono::steady_clock::now();
    f();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

std::vector<BenchRow> run_bench(std::vector<std::uint64_t> sizes, int repetitions, std::uint64_t seed)
{
    if (sizes.empty())
        throw ConfigError("bench needs at least one size");
    if (std::any_of(sizes.begin(), sizes.end(), [](auto s) { return s == 0; }))
        throw ConfigError("bench sizes must be positive");
    if (repetitions < 3)
        throw ConfigError("bench repetitions must be >= 3");
    std::sort(sizes.begin(), sizes.end());

    crypto::Rng rng(seed);
    const auto key = crypto::SecretKey::generate(rng);
    const auto rsa = crypto::RsaKeyPair::generate(2048);

    std::vector<BenchRow> rows;
    for (auto size : sizes) {
        const Bytes payload = rng.bytes(size);
        std::vector<double> se, sd, ae, ad;
        for (int r = 0; r < repetitions; ++r) {
            crypto::Ciphertext ct;
            Bytes plain;
            se.push_back(time_once([&] { ct = crypto::symmetric_encrypt(key, payload, rng); }));
            sd.push_back(time_once([&] { plain = crypto::symmetric_decrypt(key, ct); }));
            if (plain != payload)
                throw Error("symmetric roundtrip mismatch at size " + std::to_string(size));

            std::vector<Bytes> chunks;
            Bytes back;
            ae.push_back(time_once([&] { chunks = crypto::asymmetric_encrypt_chunked(rsa, payload); }));
            ad.push_back(time_once([&] { back = crypto::asymmetric_decrypt_chunked(rsa, chunks); }));
            if (back != payload)
                throw Error("asymmetric roundtrip mismatch at size " + std::to_string(size));
        }
        rows.push_back({size, median(se), median(sd), median(ae), median(ad)});
    }
    return rows;
}

std::string to_csv(const std::vector<BenchRow>& rows)
{
    std::string out = kCsvHeader;
    out += '\n';
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%.9e,%.9e,%.9e,%.9e\n", static_cast<unsigned long long>(r.size_bytes),
                      r.sym_enc_s, r.sym_dec_s, r.asym_enc_s, r.asym_dec_s);
        out += buf;
    }
    return out;
}

std::vector<BenchRow> parse_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw DecodeError("bench csv: bad header");
    std::vector<BenchRow> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        BenchRow r;
        unsigned long long size = 0;
        if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf", &size, &r.sym_enc_s, &r.sym_dec_s, &r.asym_enc_s,
                        &r.asym_dec_s) != 5)
            throw DecodeError("bench csv: bad row: " + line);
        r.size_bytes = size;
        rows.push_back(r);
    }
    return rows;
}

void emit_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path)
{
    if (rows.empty())
        throw ConfigError("no bench rows to write");
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << to_csv(rows);
    if (!out)
        throw IoError("write failed: " + path.string());
}

} // namespace hchain::bench
