#pragma once

// Deterministic in-process network: PED -> HCP edge -> verification node ->
// ledger, with seeded adversaries on the links.

#include "hchain/audit.hpp"
#include "hchain/directory.hpp"
#include "hchain/hcp_edge.hpp"
#include "hchain/ledger.hpp"
#include "hchain/patient_edge.hpp"
#include "hchain/verification_node.hpp"

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace hchain {

enum class AdversaryKind { None, TamperRandomByte, ReplayPrevious, InjectForged, RerouteWrongLocation };

std::string to_string(AdversaryKind k);
AdversaryKind adversary_kind_from_string(std::string_view s);

struct AdversaryPolicy {
    AdversaryKind kind = AdversaryKind::None;
    double probability = 0.0;
    std::uint64_t seed = 0;
};

struct Message {
    std::uint64_t id = 0;
    Bytes payload;
    /// Simulation bookkeeping only; never visible to the protocol nodes.
    bool attacked = false;
};

/// FIFO link. Without an adversary delivery is exactly-once, in order and
/// bit-exact. Adversary actions:
///   tamper_random_byte  XOR one uniformly chosen byte with a random non-zero value
///   replay_previous     re-enqueue the previously sent message after this one
///   inject_forged       enqueue forger(message) after this one
/// reroute_wrong_location acts at the patient device, not on the link.
class Channel {
public:
    using Forger = std::function<std::optional<Bytes>(const Bytes&)>;

    explicit Channel(std::string name, AdversaryPolicy policy = {});

    void set_forger(Forger forger) { forger_ = std::move(forger); }

    /// Returns the number of messages enqueued (1 or 2).
    std::size_t send(Bytes payload, bool already_attacked = false);
    std::optional<Message> receive();

    const std::string& name() const { return name_; }
    std::size_t pending() const { return queue_.size(); }
    std::uint64_t sent() const { return sent_; }
    std::uint64_t delivered() const { return delivered_; }
    std::uint64_t tampered() const { return tampered_; }
    std::uint64_t replayed() const { return replayed_; }
    std::uint64_t forged() const { return forged_; }

    Json counters() const;

private:
    bool strike();

    std::string name_;
    AdversaryPolicy policy_;
    crypto::Rng rng_;
    Forger forger_;
    std::deque<Message> queue_;
    std::optional<Message> previous_;
    std::uint64_t next_id_ = 1;
    std::uint64_t sent_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t tampered_ = 0;
    std::uint64_t replayed_ = 0;
    std::uint64_t forged_ = 0;
};

/// Single-threaded discrete event loop ordered by (time, insertion order).
class EventLoop {
public:
    explicit EventLoop(LogicalClock& clock) : clock_(clock) {}

    void schedule(std::int64_t at_ms, std::function<void()> fn);
    void run();

private:
    struct Event {
        std::int64_t at;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const
        {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    LogicalClock& clock_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::uint64_t seq_ = 0;
};

/// Point reached by travelling distance_m from origin along an initial
/// bearing (degrees clockwise from north) on the haversine sphere.
GeoCoordinate destination_point(const GeoCoordinate& origin, double distance_m, double bearing_deg);

struct PatientSpec {
    std::string identity;
    GeoCoordinate home;
    std::size_t batch_size = 5;
    /// Constant displacement of the device from home, metres due north.
    double location_offset_m = 0.0;
    /// Identity the device encrypts instead of the enrolled one.
    std::optional<std::string> claimed_identity;
};

struct AdversarySpec {
    AdversaryPolicy policy;
    /// "ped_hcp" or "hcp_vn". Empty selects the kind's default link.
    std::string link;
    double reroute_offset_m = 5000.0;
};

struct ScenarioSpec {
    std::uint64_t seed = 42;
    std::vector<PatientSpec> patients;
    std::size_t readings_per_patient = 20;
    double home_radius_m = 100.0;
    AdversarySpec adversary;
    std::optional<crypto::SecretKey> master_key;
};

/// Throws ConfigError on unknown fields or inconsistent values.
ScenarioSpec scenario_from_json(const Json& j);
Json to_json(const ScenarioSpec& s);
void validate_scenario(const ScenarioSpec& s);

/// One patient at (51.5007, -0.1246), batch 5, 20 readings, radius 100 m.
ScenarioSpec default_scenario(std::uint64_t seed = 42);

/// Stage at which a protocol run is expected to stop an attack. Stage names:
/// "integrity" (HCP edge), "signature", "location", "identity", "replay",
/// "contract".
std::string expected_rejection_stage(AdversaryKind kind);

struct ScenarioReport {
    Json json;
    std::uint64_t ledger_entries = 0;
    std::uint64_t attacked_messages = 0;
    std::uint64_t attacked_stored = 0;
    std::map<std::string, std::uint64_t> rejections;
    std::map<std::string, std::uint64_t> attacked_rejections;

    std::string dump() const { return canonical_dump(json); }
};

/// Wired topology for one scenario. All randomness derives from spec.seed.
class Scenario {
public:
    /// When data_dir is set, chain.jsonl, directory.store, both audit logs
    /// and scenario_report.json are written there.
    explicit Scenario(ScenarioSpec spec, std::optional<std::filesystem::path> data_dir = std::nullopt);
    ~Scenario();

    ScenarioReport run();

    const ScenarioSpec& spec() const { return spec_; }
    const Ledger& ledger() const { return *ledger_; }
    Ledger& ledger() { return *ledger_; }
    const SecuredDirectory& directory() const { return *directory_; }
    const std::vector<PhysiologicalReading>& ingested(std::size_t patient) const { return ingested_.at(patient); }
    const crypto::SecretKey& patient_key(std::size_t patient) const { return patient_keys_.at(patient); }
    const std::string& ledger_patient_id(std::size_t patient) const { return ledger_ids_.at(patient); }
    const Account& patient_account(std::size_t patient) const { return patient_accounts_.at(patient); }
    const Account& hcp_account() const { return hcp_; }
    const Account& admin_account() const { return admin_; }
    const AuditLog& edge_audit() const { return *edge_audit_; }
    const AuditLog& vn_audit() const { return *vn_audit_; }

private:
    void setup();
    PhysiologicalReading make_reading(std::size_t patient, std::size_t i);
    void deliver_to_edge();
    void deliver_to_vn();

    ScenarioSpec spec_;
    std::optional<std::filesystem::path> data_dir_;
    LogicalClock clock_;
    crypto::Rng root_;
    crypto::Rng nonce_rng_;
    crypto::Rng reading_rng_;
    crypto::Rng reroute_rng_;
    Account admin_;
    Account registrar_;
    Account hcp_;
    std::vector<Account> patient_accounts_;
    std::vector<crypto::SecretKey> patient_keys_;
    std::vector<std::string> ledger_ids_;
    std::vector<std::vector<PhysiologicalReading>> ingested_;
    std::vector<bool> reroute_flags_;
    std::unique_ptr<AuditLog> edge_audit_;
    std::unique_ptr<AuditLog> vn_audit_;
    std::unique_ptr<Ledger> ledger_;
    std::unique_ptr<SecuredDirectory> directory_;
    std::vector<std::unique_ptr<PatientEdge>> devices_;
    std::unique_ptr<HcpEdge> edge_;
    std::unique_ptr<VerificationNode> vn_;
    std::unique_ptr<Channel> ped_hcp_;
    std::unique_ptr<Channel> hcp_vn_;
    std::unique_ptr<EventLoop> loop_;

    std::uint64_t readings_generated_ = 0;
    std::uint64_t gpds_emitted_ = 0;
    std::map<std::string, std::uint64_t> edge_reasons_;
    std::map<std::string, std::uint64_t> vn_stages_;
    std::map<std::string, std::uint64_t> rejections_;
    std::map<std::string, std::uint64_t> attacked_rejections_;
    std::uint64_t attacked_messages_ = 0;
    std::uint64_t attacked_stored_ = 0;
    std::uint64_t stored_ = 0;
    bool ran_ = false;
};

// Key material derivation shared by the simulator and the CLI, so a later
// command can act as the same accounts given only the seed.
crypto::SecretKey derive_patient_key(std::uint64_t seed, std::string_view identity);
Account derive_patient_account(std::uint64_t seed, std::string_view identity);
/// Named provider account: "admin", "registrar", "hcp" or any grantee name.
Account derive_named_account(std::uint64_t seed, std::string_view name);
crypto::SecretKey derive_master_key(std::uint64_t seed);
std::string ledger_patient_id(const crypto::IdentityToken& token);

ScenarioReport run_scenario(const ScenarioSpec& spec,
                            std::optional<std::filesystem::path> data_dir = std::nullopt);

} // namespace hchain
