#include "hchain/simnet.hpp"

#include "hchain/error.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace hchain {

std::string to_string(AdversaryKind k)
{
    switch (k) {
    case AdversaryKind::None:
        return "none";
    case AdversaryKind::TamperRandomByte:
        return "tamper_random_byte";
    case AdversaryKind::ReplayPrevious:
        return "replay_previous";
    case AdversaryKind::InjectForged:
        return "inject_forged";
    case AdversaryKind::RerouteWrongLocation:
        return "reroute_wrong_location";
    }
    throw ConfigError("adversary kind");
}

AdversaryKind adversary_kind_from_string(std::string_view s)
{
    for (auto k : {AdversaryKind::None, AdversaryKind::TamperRandomByte, AdversaryKind::ReplayPrevious,
                   AdversaryKind::InjectForged, AdversaryKind::RerouteWrongLocation})
        if (to_string(k) == s)
            return k;
    throw ConfigError("unknown adversary kind: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Channel

Channel::Channel(std::string name, AdversaryPolicy policy)
    : name_(std::move(name)), policy_(policy), rng_(policy.seed)
{
    if (!(policy.probability >= 0.0 && policy.probability <= 1.0))
        throw ConfigError("adversary probability must be in [0, 1]");
}

bool Channel::strike()
{
    if (policy_.kind == AdversaryKind::None || policy_.kind == AdversaryKind::RerouteWrongLocation)
        return false;
    // Always draw so the action sequence depends only on the seed and the
    // number of sends.
    return rng_.unit() < policy_.probability;
}

std::size_t Channel::send(Bytes payload, bool already_attacked)
{
    ++sent_;
    Message msg{next_id_++, std::move(payload), already_attacked};
    std::size_t enqueued = 1;
    const bool hit = strike();

    if (hit && policy_.kind == AdversaryKind::TamperRandomByte && !msg.payload.empty()) {
        auto pos = rng_.uniform(msg.payload.size());
        auto mask = static_cast<std::uint8_t>(1 + rng_.uniform(255));
        msg.payload[pos] ^= mask;
        msg.attacked = true;
        ++tampered_;
    }
    queue_.push_back(msg);

    if (hit && policy_.kind == AdversaryKind::ReplayPrevious && previous_) {
        Message copy = *previous_;
        copy.id = next_id_++;
        copy.attacked = true;
        queue_.push_back(std::move(copy));
        ++replayed_;
        ++enqueued;
    }
    if (hit && policy_.kind == AdversaryKind::InjectForged && forger_) {
        if (auto forged = forger_(msg.payload)) {
            queue_.push_back({next_id_++, std::move(*forged), true});
            ++forged_;
            ++enqueued;
        }
    }
    previous_ = std::move(msg);
    return enqueued;
}

std::optional<Message> Channel::receive()
{
    if (queue_.empty())
        return std::nullopt;
    auto msg = std::move(queue_.front());
    queue_.pop_front();
    ++delivered_;
    return msg;
}

Json Channel::counters() const
{
    return {{"sent", sent_},         {"delivered", delivered_}, {"tampered", tampered_},
            {"replayed", replayed_}, {"forged", forged_},       {"adversary", to_string(policy_.kind)}};
}

// ---------------------------------------------------------------------------
// Event loop

void EventLoop::schedule(std::int64_t at_ms, std::function<void()> fn)
{
    queue_.push({at_ms, seq_++, std::move(fn)});
}

void EventLoop::run()
{
    while (!queue_.empty()) {
        auto ev = queue_.top();
        queue_.pop();
        clock_.advance_to(ev.at);
        ev.fn();
    }
}

GeoCoordinate destination_point(const GeoCoordinate& origin, double distance_m, double bearing_deg)
{
    constexpr double rad = std::numbers::pi / 180.0;
    const double delta = distance_m / kEarthRadiusM;
    const double theta = bearing_deg * rad;
    const double phi1 = origin.latitude * rad;
    const double lambda1 = origin.longitude * rad;
    const double phi2 =
        std::asin(std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta));
    const double lambda2 =
        lambda1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                             std::cos(delta) - std::sin(phi1) * std::sin(phi2));
    double lon = std::remainder(lambda2 / rad, 360.0);
    return {phi2 / rad, lon};
}

// ---------------------------------------------------------------------------
// Scenario spec

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string("bad value for ") + key);
    }
}

void only_keys(const Json& j, std::initializer_list<const char*> keys, const char* what)
{
    if (!j.is_object())
        throw ConfigError(std::string(what) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* allowed : keys)
            known = known || k == allowed;
        if (!known)
            throw ConfigError(std::string(what) + ": unknown field " + k);
    }
}

std::string default_link(AdversaryKind k)
{
    return k == AdversaryKind::InjectForged ? "hcp_vn" : "ped_hcp";
}

} // namespace

ScenarioSpec scenario_from_json(const Json& j)
{
    only_keys(j, {"seed", "patients", "readings_per_patient", "home_radius_m", "adversary", "master_key"},
              "scenario");
    ScenarioSpec s;
    s.seed = get_or<std::uint64_t>(j, "seed", 42);
    s.readings_per_patient = get_or<std::size_t>(j, "readings_per_patient", 20);
    s.home_radius_m = get_or<double>(j, "home_radius_m", 100.0);
    if (j.contains("master_key")) {
        try {
            s.master_key = crypto::SecretKey::from_hex(get_or<std::string>(j, "master_key", ""));
        } catch (const DecodeError& e) {
            throw ConfigError(std::string("master_key: ") + e.what());
        }
    }
    if (!j.contains("patients") || !j.at("patients").is_array())
        throw ConfigError("scenario needs a patients array");
    for (const auto& p : j.at("patients")) {
        only_keys(p, {"identity", "home", "batch_size", "location_offset_m", "claimed_identity"}, "patient");
        PatientSpec ps;
        ps.identity = get_or<std::string>(p, "identity", "");
        if (!p.contains("home"))
            throw ConfigError("patient needs a home coordinate");
        const auto& home = p.at("home");
        only_keys(home, {"lat", "lon"}, "home");
        ps.home = {get_or<double>(home, "lat", 0.0), get_or<double>(home, "lon", 0.0)};
        ps.batch_size = get_or<std::size_t>(p, "batch_size", 5);
        ps.location_offset_m = get_or<double>(p, "location_offset_m", 0.0);
        if (p.contains("claimed_identity"))
            ps.claimed_identity = get_or<std::string>(p, "claimed_identity", "");
        s.patients.push_back(std::move(ps));
    }
    if (j.contains("adversary")) {
        const auto& a = j.at("adversary");
        only_keys(a, {"kind", "probability", "seed", "link", "reroute_offset_m"}, "adversary");
        s.adversary.policy.kind = adversary_kind_from_string(get_or<std::string>(a, "kind", "none"));
        s.adversary.policy.probability = get_or<double>(a, "probability", 0.0);
        s.adversary.policy.seed = get_or<std::uint64_t>(a, "seed", s.seed);
        s.adversary.link = get_or<std::string>(a, "link", "");
        s.adversary.reroute_offset_m = get_or<double>(a, "reroute_offset_m", 5000.0);
    }
    validate_scenario(s);
    return s;
}

Json to_json(const ScenarioSpec& s)
{
    Json patients = Json::array();
    for (const auto& p : s.patients) {
        Json pj = {{"identity", p.identity},
                   {"home", {{"lat", p.home.latitude}, {"lon", p.home.longitude}}},
                   {"batch_size", p.batch_size},
                   {"location_offset_m", p.location_offset_m}};
        if (p.claimed_identity)
            pj["claimed_identity"] = *p.claimed_identity;
        patients.push_back(std::move(pj));
    }
    return {
        {"seed", s.seed},
        {"patients", std::move(patients)},
        {"readings_per_patient", s.readings_per_patient},
        {"home_radius_m", s.home_radius_m},
        {"adversary",
         {{"kind", to_string(s.adversary.policy.kind)},
          {"probability", s.adversary.policy.probability},
          {"seed", s.adversary.policy.seed},
          {"link", s.adversary.link.empty() ? default_link(s.adversary.policy.kind) : s.adversary.link},
          {"reroute_offset_m", s.adversary.reroute_offset_m}}},
    };
}

void validate_scenario(const ScenarioSpec& s)
{
    if (s.patients.empty())
        throw ConfigError("scenario has no patients");
    if (s.readings_per_patient == 0)
        throw ConfigError("readings_per_patient must be >= 1");
    if (!(s.home_radius_m > 0.0))
        throw ConfigError("home_radius_m must be > 0");
    const auto& p = s.adversary.policy;
    if (!(p.probability >= 0.0 && p.probability <= 1.0))
        throw ConfigError("adversary probability must be in [0, 1]");
    if (!s.adversary.link.empty() && s.adversary.link != "ped_hcp" && s.adversary.link != "hcp_vn")
        throw ConfigError("adversary link must be ped_hcp or hcp_vn");
    if (p.kind == AdversaryKind::InjectForged && s.adversary.link == "ped_hcp")
        throw ConfigError("inject_forged needs the signed hcp_vn link");
    std::set<std::string> seen;
    for (const auto& ps : s.patients) {
        if (ps.identity.empty())
            throw ConfigError("patient identity must be non-empty");
        if (!seen.insert(ps.identity).second)
            throw ConfigError("duplicate patient identity " + ps.identity);
        if (ps.batch_size == 0)
            throw ConfigError("batch_size must be >= 1");
        if (!ps.home.in_bounds())
            throw ConfigError("home coordinate out of bounds");
        if (ps.claimed_identity && ps.claimed_identity->empty())
            throw ConfigError("claimed_identity must be non-empty");
    }
}

ScenarioSpec default_scenario(std::uint64_t seed)
{
    ScenarioSpec s;
    s.seed = seed;
    s.adversary.policy.seed = seed;
    s.patients.push_back({"patient-001", {51.5007, -0.1246}, 5, 0.0, std::nullopt});
    return s;
}

std::string expected_rejection_stage(AdversaryKind kind)
{
    switch (kind) {
    case AdversaryKind::TamperRandomByte:
        return "integrity";
    case AdversaryKind::ReplayPrevious:
        return "replay";
    case AdversaryKind::InjectForged:
        return "signature";
    case AdversaryKind::RerouteWrongLocation:
        return "location";
    case AdversaryKind::None:
        return "";
    }
    return "";
}

// ---------------------------------------------------------------------------
// Scenario

namespace {

Account derive_account(const crypto::Rng& root, const std::string& label)
{
    auto rng = root.derive(label);
    return Account::generate(rng);
}

crypto::SignatureKeyPair derive_keypair(const crypto::Rng& root, const std::string& label)
{
    auto rng = root.derive(label);
    return crypto::SignatureKeyPair::generate(rng);
}

crypto::SecretKey derive_secret(const crypto::Rng& root, const std::string& label)
{
    auto rng = root.derive(label);
    return crypto::SecretKey::generate(rng);
}

std::string vn_stage_name(const std::string& stage)
{
    if (stage == "sig")
        return "signature";
    if (stage == "loc")
        return "location";
    if (stage == "id")
        return "identity";
    if (stage == "tx")
        return "contract";
    return stage;
}

double round1(double v)
{
    return std::round(v * 10.0) / 10.0;
}

} // namespace

Scenario::Scenario(ScenarioSpec spec, std::optional<std::filesystem::path> data_dir)
    : spec_(std::move(spec)), data_dir_(std::move(data_dir)), root_(spec_.seed),
      nonce_rng_(root_.derive("nonces")), reading_rng_(root_.derive("readings")),
      reroute_rng_(spec_.adversary.policy.seed ^ 0x5245524f55544500ULL),
      admin_(derive_account(root_, "account:admin")), registrar_(derive_account(root_, "account:registrar")),
      hcp_(derive_account(root_, "account:hcp"))
{
    validate_scenario(spec_);
    setup();
}

Scenario::~Scenario() = default;

void Scenario::setup()
{
    if (data_dir_) {
        std::filesystem::create_directories(*data_dir_);
        edge_audit_ = std::make_unique<AuditLog>(*data_dir_ / "hcp_edge_audit.jsonl");
        vn_audit_ = std::make_unique<AuditLog>(*data_dir_ / "vn_audit.jsonl");
        std::filesystem::remove(*data_dir_ / "directory.store");
    } else {
        edge_audit_ = std::make_unique<AuditLog>();
        vn_audit_ = std::make_unique<AuditLog>();
    }
    const auto master = spec_.master_key.value_or(derive_secret(root_, "master-key"));
    directory_ = data_dir_ ? std::make_unique<SecuredDirectory>(master, nonce_rng_, *data_dir_ / "directory.store")
                           : std::make_unique<SecuredDirectory>(master, nonce_rng_);

    ledger_ = std::make_unique<Ledger>(Ledger::genesis(admin_, clock_));
    ledger_->transact(admin_, ContractFunction::AddMembership,
                      {{"address", registrar_.address}, {"role", to_string(Role::HcpRegistration)}});
    ledger_->transact(registrar_, ContractFunction::AddMembership,
                      {{"address", hcp_.address}, {"role", to_string(Role::Hcp)}});

    reroute_flags_.assign(spec_.patients.size(), false);
    for (std::size_t p = 0; p < spec_.patients.size(); ++p) {
        const auto& ps = spec_.patients[p];
        auto key = derive_secret(root_, "patient-key:" + ps.identity);
        auto account = derive_account(root_, "patient-account:" + ps.identity);
        auto token = crypto::deterministic_encrypt_identity(key, ps.identity);
        auto pid = hchain::ledger_patient_id(token);

        directory_->register_patient(ps.identity, key, ps.home, pid, clock_.now_ms());
        ledger_->transact(hcp_, ContractFunction::RegisterPatient,
                          {{"patient_id", pid}, {"patient_account", account.address}});

        PatientEdgeConfig cfg;
        cfg.patient_identity = ps.claimed_identity.value_or(ps.identity);
        cfg.secret_key = key;
        cfg.home_location = ps.home;
        cfg.batch_size = ps.batch_size;
        const auto device_location = ps.location_offset_m != 0.0 ? destination_point(ps.home, ps.location_offset_m, 0.0)
                                                                  : ps.home;
        const auto policy = spec_.adversary.policy;
        const double reroute_m = spec_.adversary.reroute_offset_m;
        cfg.current_location = [this, p, device_location, policy, reroute_m] {
            bool hit = policy.kind == AdversaryKind::RerouteWrongLocation &&
                       reroute_rng_.unit() < policy.probability;
            reroute_flags_[p] = hit;
            return hit ? destination_point(device_location, reroute_m, 90.0) : device_location;
        };
        devices_.push_back(std::make_unique<PatientEdge>(std::move(cfg), nonce_rng_));

        patient_keys_.push_back(key);
        patient_accounts_.push_back(std::move(account));
        ledger_ids_.push_back(std::move(pid));
        ingested_.emplace_back();
    }

    edge_ = std::make_unique<HcpEdge>(derive_keypair(root_, "hcp-edge"), clock_, edge_audit_.get());
    vn_ = std::make_unique<VerificationNode>(derive_keypair(root_, "verification-node"), spec_.home_radius_m,
                                             *directory_, *ledger_, hcp_, clock_, vn_audit_.get());
    vn_->trust_edge_key(edge_->keypair().public_key());

    const auto& adv = spec_.adversary;
    const std::string link = adv.link.empty() ? default_link(adv.policy.kind) : adv.link;
    ped_hcp_ = std::make_unique<Channel>("ped_hcp", link == "ped_hcp" ? adv.policy : AdversaryPolicy{});
    hcp_vn_ = std::make_unique<Channel>("hcp_vn", link == "hcp_vn" ? adv.policy : AdversaryPolicy{});

    auto attacker = std::make_shared<crypto::SignatureKeyPair>(derive_keypair(root_, "attacker"));
    hcp_vn_->set_forger([attacker](const Bytes& wire) -> std::optional<Bytes> {
        try {
            auto sg = signed_gpd_from_json(parse_json(to_string(wire)));
            sg.edge_sig = {attacker->key_id(), crypto::sign(*attacker, canonical_encode(sg.gpd))};
            return canonical_encode(sg);
        } catch (const ShapeError&) {
            return std::nullopt;
        }
    });
    loop_ = std::make_unique<EventLoop>(clock_);
}

PhysiologicalReading Scenario::make_reading(std::size_t patient, std::size_t i)
{
    PhysiologicalReading r;
    r.captured_at_ms = static_cast<std::int64_t>(1000 * (i + 1) + patient);
    switch (i % 4) {
    case 0:
        r.kind = SensorKind::HeartRate;
        r.value = round1(55.0 + 45.0 * reading_rng_.unit());
        break;
    case 1:
        r.kind = SensorKind::Spo2;
        r.value = round1(92.0 + 8.0 * reading_rng_.unit());
        break;
    case 2:
        r.kind = SensorKind::Temperature;
        r.value = round1(36.0 + 2.5 * reading_rng_.unit());
        break;
    default:
        r.kind = SensorKind::BloodPressure;
        r.value = round1(100.0 + 40.0 * reading_rng_.unit());
        r.diastolic = round1(60.0 + 30.0 * reading_rng_.unit());
        break;
    }
    return r;
}

void Scenario::deliver_to_edge()
{
    auto msg = ped_hcp_->receive();
    if (!msg)
        return;
    auto outcome = edge_->handle_incoming(to_string(msg->payload));
    if (!outcome.forwarded) {
        ++edge_reasons_[outcome.reason];
        ++rejections_["integrity"];
        if (msg->attacked)
            ++attacked_rejections_["integrity"];
        return;
    }
    auto n = hcp_vn_->send(canonical_encode(*outcome.signed_gpd), msg->attacked);
    for (std::size_t k = 0; k < n; ++k)
        loop_->schedule(clock_.now_ms() + 10, [this] { deliver_to_vn(); });
}

void Scenario::deliver_to_vn()
{
    auto msg = hcp_vn_->receive();
    if (!msg)
        return;
    auto outcome = vn_->handle_incoming(to_string(msg->payload));
    if (outcome.stored) {
        ++stored_;
        if (msg->attacked)
            ++attacked_stored_;
        return;
    }
    auto stage = vn_stage_name(outcome.stage);
    ++vn_stages_[stage];
    ++rejections_[stage];
    if (msg->attacked)
        ++attacked_rejections_[stage];
}

ScenarioReport Scenario::run()
{
    if (ran_)
        throw ConfigError("scenario already ran");
    ran_ = true;

    for (std::size_t p = 0; p < devices_.size(); ++p) {
        for (std::size_t i = 0; i < spec_.readings_per_patient; ++i) {
            auto reading = make_reading(p, i);
            loop_->schedule(reading.captured_at_ms, [this, p, reading] {
                ++readings_generated_;
                ingested_[p].push_back(reading);
                auto gpd = devices_[p]->ingest_reading(reading);
                if (!gpd)
                    return;
                ++gpds_emitted_;
                const bool attacked = reroute_flags_[p] || spec_.patients[p].claimed_identity.has_value();
                auto n = ped_hcp_->send(canonical_encode(*gpd), attacked);
                for (std::size_t k = 0; k < n; ++k)
                    loop_->schedule(clock_.now_ms() + 10, [this] { deliver_to_edge(); });
            });
        }
    }
    loop_->run();

    // Messages that entered a link already marked as attacked (device-level
    // attacks) plus those the link adversaries created.
    attacked_messages_ = 0;
    for (const auto& [stage, n] : attacked_rejections_)
        attacked_messages_ += n;
    attacked_messages_ += attacked_stored_;

    ScenarioReport report;
    report.ledger_entries = 0;
    const auto state = ledger_->state();
    for (const auto& [pid, entries] : state.patients)
        report.ledger_entries += entries.size();
    report.attacked_messages = attacked_messages_;
    report.attacked_stored = attacked_stored_;
    report.rejections = rejections_;
    report.attacked_rejections = attacked_rejections_;

    const auto blocks = ledger_->blocks();
    const auto kind = spec_.adversary.policy.kind;
    std::string expected = expected_rejection_stage(kind);
    bool any_claimed = false;
    for (const auto& ps : spec_.patients)
        any_claimed = any_claimed || ps.claimed_identity.has_value();
    if (any_claimed && kind == AdversaryKind::None)
        expected = "identity";

    bool contained = attacked_stored_ == 0;
    for (const auto& [stage, n] : attacked_rejections_)
        contained = contained && stage == expected;

    report.json = {
        {"scenario", to_json(spec_)},
        {"readings_generated", readings_generated_},
        {"gpds_emitted", gpds_emitted_},
        {"channels", {{"ped_hcp", ped_hcp_->counters()}, {"hcp_vn", hcp_vn_->counters()}}},
        {"hcp_edge",
         {{"received", edge_->received()},
          {"accepted", edge_->accepted()},
          {"discarded", edge_->discarded()},
          {"discard_reasons", edge_reasons_}}},
        {"verification_node", {{"stored", stored_}, {"rejected_by_stage", vn_stages_}}},
        {"rejections_by_stage", rejections_},
        {"attack",
         {{"kind", to_string(kind)},
          {"attacked_messages", attacked_messages_},
          {"attacked_stored", attacked_stored_},
          {"attacked_rejections_by_stage", attacked_rejections_},
          {"expected_stage", expected},
          {"contained", contained}}},
        {"ledger",
         {{"entries", report.ledger_entries},
          {"height", blocks.size()},
          {"head_hash", blocks.back().block_hash.hex()}}},
        {"extensions", {"seq_no freshness check at verification node (replay protection)"}},
    };

    if (data_dir_) {
        ledger_->save(*data_dir_ / "chain.jsonl");
        std::ofstream out(*data_dir_ / "scenario_report.json", std::ios::trunc);
        if (!out)
            throw IoError("cannot write scenario_report.json");
        out << report.dump() << '\n';
    }
    return report;
}

crypto::SecretKey derive_patient_key(std::uint64_t seed, std::string_view identity)
{
    return derive_secret(crypto::Rng(seed), "patient-key:" + std::string(identity));
}

Account derive_patient_account(std::uint64_t seed, std::string_view identity)
{
    return derive_account(crypto::Rng(seed), "patient-account:" + std::string(identity));
}

Account derive_named_account(std::uint64_t seed, std::string_view name)
{
    return derive_account(crypto::Rng(seed), "account:" + std::string(name));
}

crypto::SecretKey derive_master_key(std::uint64_t seed)
{
    return derive_secret(crypto::Rng(seed), "master-key");
}

std::string ledger_patient_id(const crypto::IdentityToken& token)
{
    return "pt-" + crypto::hash_bytes(token.bytes).hex().substr(0, 16);
}

ScenarioReport run_scenario(const ScenarioSpec& spec, std::optional<std::filesystem::path> data_dir)
{
    Scenario s(spec, std::move(data_dir));
    return s.run();
}

} // namespace hchain
