#pragma once

// Test-side oracles and fixtures. The oracles are deliberately written
// without calling into the library so they can check it independently.

#include "hchain/crypto.hpp"
#include "hchain/directory.hpp"
#include "hchain/hcp_edge.hpp"
#include "hchain/ledger.hpp"
#include "hchain/patient_edge.hpp"
#include "hchain/verification_node.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

// Straight transcription of the FIPS 180-4 SHA-256 compression function.
inline std::array<std::uint8_t, 32> sha256(const std::vector<std::uint8_t>& msg)
{
    static constexpr std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
        0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
        0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
        0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                          0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    auto rotr = [](std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); };

    std::vector<std::uint8_t> m = msg;
    const std::uint64_t bit_len = static_cast<std::uint64_t>(msg.size()) * 8;
    m.push_back(0x80);
    while (m.size() % 64 != 56)
        m.push_back(0);
    for (int i = 7; i >= 0; --i)
        m.push_back(static_cast<std::uint8_t>(bit_len >> (8 * i)));

    for (std::size_t off = 0; off < m.size(); off += 64) {
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(m[off + 4 * i]) << 24) | (std::uint32_t(m[off + 4 * i + 1]) << 16) |
                   (std::uint32_t(m[off + 4 * i + 2]) << 8) | std::uint32_t(m[off + 4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6], hh = h[7];
        for (int i = 0; i < 64; ++i) {
            std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = hh + S1 + ch + k[i] + w[i];
            std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = S0 + maj;
            hh = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h[0] += a, h[1] += b, h[2] += c, h[3] += d, h[4] += e, h[5] += f, h[6] += g, h[7] += hh;
    }
    std::array<std::uint8_t, 32> out{};
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 4; ++j)
            out[4 * i + j] = static_cast<std::uint8_t>(h[i] >> (24 - 8 * j));
    return out;
}

inline constexpr long double kPi = 3.141592653589793238462643383279502884L;
inline constexpr long double kRadius = 6371000.0L;

// Great-circle distance from the chord between the two unit vectors, in
// extended precision. Algebraically equal to haversine, numerically separate.
inline double sphere_distance(double lat1, double lon1, double lat2, double lon2)
{
    auto unit = [](long double lat, long double lon) {
        lat *= kPi / 180.0L;
        lon *= kPi / 180.0L;
        return std::array<long double, 3>{std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
                                          std::sin(lat)};
    };
    auto p = unit(lat1, lon1);
    auto q = unit(lat2, lon2);
    long double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
    long double chord = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (chord > 2.0L)
        chord = 2.0L;
    return static_cast<double>(2.0L * kRadius * std::asin(chord / 2.0L));
}

// Moving due north along a meridian changes latitude by exactly d / R radians.
inline hchain::GeoCoordinate north_of(const hchain::GeoCoordinate& c, double metres)
{
    return {static_cast<double>(c.latitude + (metres / kRadius) * 180.0L / kPi), c.longitude};
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

} // namespace oracle

namespace support {

inline bool contains(const std::string& haystack, const std::string& needle)
{
    return haystack.find(needle) != std::string::npos;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("hchain-test-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline hchain::PhysiologicalReading reading(hchain::SensorKind kind, double value, std::int64_t t,
                                            std::optional<double> dia = std::nullopt)
{
    return {kind, value, dia, t};
}

/// Fully wired provider side with one enrolled patient: genesis, registrar,
/// HCP membership, directory enrollment and contract registration.
struct Pipeline {
    explicit Pipeline(std::uint64_t seed = 7, double radius_m = 100.0)
        : rng(seed), admin(hchain::Account::generate(rng)), registrar(hchain::Account::generate(rng)),
          hcp(hchain::Account::generate(rng)), patient_account(hchain::Account::generate(rng)),
          patient_key(hchain::crypto::SecretKey::generate(rng)), master(hchain::crypto::SecretKey::generate(rng)),
          ledger(hchain::Ledger::genesis(admin, clock)), directory(master, rng),
          edge(hchain::crypto::SignatureKeyPair::generate(rng), clock, &edge_audit),
          vn(hchain::crypto::SignatureKeyPair::generate(rng), radius_m, directory, ledger, hcp, clock, &vn_audit)
    {
        using hchain::ContractFunction;
        using hchain::Role;
        ledger.transact(admin, ContractFunction::AddMembership,
                        {{"address", registrar.address}, {"role", hchain::to_string(Role::HcpRegistration)}});
        ledger.transact(registrar, ContractFunction::AddMembership,
                        {{"address", hcp.address}, {"role", hchain::to_string(Role::Hcp)}});
        token = hchain::crypto::deterministic_encrypt_identity(patient_key, identity);
        directory.register_patient(identity, patient_key, home, patient_id);
        ledger.transact(hcp, ContractFunction::RegisterPatient,
                        {{"patient_id", patient_id}, {"patient_account", patient_account.address}});
        vn.trust_edge_key(edge.keypair().public_key());
    }

    /// A device for this patient. claimed overrides the identity it encrypts;
    /// offset_m displaces it due north of home.
    std::unique_ptr<hchain::PatientEdge> device(std::size_t batch = 5, std::optional<std::string> claimed = {},
                                                double offset_m = 0.0)
    {
        hchain::PatientEdgeConfig cfg;
        cfg.patient_identity = claimed.value_or(identity);
        cfg.secret_key = patient_key;
        cfg.home_location = home;
        cfg.batch_size = batch;
        const auto where = oracle::north_of(home, offset_m);
        cfg.current_location = [where] { return where; };
        return std::make_unique<hchain::PatientEdge>(std::move(cfg), rng);
    }

    /// Feeds batch readings and returns the emitted GPD.
    hchain::GroupedPatientData gpd_from(hchain::PatientEdge& dev, std::size_t batch = 5)
    {
        for (std::size_t i = 0; i < batch; ++i) {
            clock.tick(100);
            auto r = reading(hchain::SensorKind::HeartRate, 60.0 + static_cast<double>(i), clock.now_ms());
            if (auto g = dev.ingest_reading(r))
                return *g;
        }
        throw std::logic_error("device did not emit");
    }

    hchain::SignedGpd signed_gpd(hchain::PatientEdge& dev, std::size_t batch = 5)
    {
        return edge.sign_and_forward(gpd_from(dev, batch));
    }

    std::string identity = "patient-001";
    hchain::GeoCoordinate home{51.5007, -0.1246};
    std::string patient_id = "pt-0001";

    hchain::crypto::Rng rng;
    hchain::LogicalClock clock;
    hchain::AuditLog edge_audit;
    hchain::AuditLog vn_audit;
    hchain::Account admin;
    hchain::Account registrar;
    hchain::Account hcp;
    hchain::Account patient_account;
    hchain::crypto::SecretKey patient_key;
    hchain::crypto::SecretKey master;
    hchain::Ledger ledger;
    hchain::SecuredDirectory directory;
    hchain::HcpEdge edge;
    hchain::VerificationNode vn;
    hchain::crypto::IdentityToken token;
};

} // namespace support
