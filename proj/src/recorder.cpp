#include "workbench/recorder.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace workbench::recorder {

using nlohmann::json;

double Waveform::at(double t) const {
    switch (kind) {
        case WaveKind::constant:
            return value;
        case WaveKind::sine:
            return offset + amplitude * std::sin(2.0 * std::numbers::pi * frequency_hz * t + phase);
        case WaveKind::ramp:
            if (t <= t0) return from;
            if (t >= t1) return to;
            return from + (to - from) * (t - t0) / (t1 - t0);
    }
    return 0.0;
}

ScriptedPuppet::ScriptedPuppet(const robot::RobotModel& model, std::vector<Waveform> waves,
                               std::optional<std::vector<double>> base)
    : waves_(std::move(waves)), base_(base ? std::move(*base) : model.home_angles()) {
    if (base_.size() != robot::kDof) throw ValidationError("puppet base pose needs 17 joint values");
    const auto names = model.joint_names();
    for (const auto& w : waves_) {
        auto it = std::find(names.begin(), names.end(), w.joint);
        if (it == names.end()) throw ValidationError("puppet waveform names unknown joint '" + w.joint + "'");
        if (w.kind == WaveKind::ramp && !(w.t1 > w.t0)) throw ValidationError("ramp on '" + w.joint + "' needs t1 > t0");
        targets_.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    // Driven joints start from zero so waveforms describe absolute angles.
    for (auto idx : targets_) base_[idx] = 0.0;
}

std::vector<double> ScriptedPuppet::pose(double t) {
    auto p = base_;
    for (std::size_t k = 0; k < waves_.size(); ++k) p[targets_[k]] += waves_[k].at(t);
    return p;
}

namespace {

WaveKind wave_kind_from_string(const std::string& s) {
    if (s == "const") return WaveKind::constant;
    if (s == "sine") return WaveKind::sine;
    if (s == "ramp") return WaveKind::ramp;
    throw ValidationError("unknown waveform kind '" + s + "'");
}

std::string to_string(WaveKind k) {
    switch (k) {
        case WaveKind::constant: return "const";
        case WaveKind::sine: return "sine";
        case WaveKind::ramp: return "ramp";
    }
    return "const";
}

json read_json(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw Error(std::string("cannot open ") + what + " file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed ") + what + " file '" + path + "': " + e.what());
    }
}

}  // namespace

ScriptedPuppet load_puppet(const std::string& path, const robot::RobotModel& model) {
    const json doc = read_json(path, "puppet");
    try {
        std::vector<Waveform> waves;
        for (const auto& j : doc.at("waveforms")) {
            Waveform w;
            w.joint = j.at("joint").get<std::string>();
            w.kind = wave_kind_from_string(j.at("kind").get<std::string>());
            w.value = j.value("value", 0.0);
            w.offset = j.value("offset", 0.0);
            w.amplitude = j.value("amplitude", 0.0);
            w.frequency_hz = j.value("frequency_hz", 0.0);
            w.phase = j.value("phase", 0.0);
            w.from = j.value("from", 0.0);
            w.to = j.value("to", 0.0);
            w.t0 = j.value("t0", 0.0);
            w.t1 = j.value("t1", 1.0);
            waves.push_back(std::move(w));
        }
        std::optional<std::vector<double>> base;
        if (doc.contains("base")) base = doc["base"].get<std::vector<double>>();
        return ScriptedPuppet(model, std::move(waves), std::move(base));
    } catch (const json::exception& e) {
        throw ValidationError("malformed puppet file '" + path + "': " + e.what());
    }
}

void save_puppet(const ScriptedPuppet& puppet, const robot::RobotModel& model, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["joint_names"] = model.joint_names();
    doc["base"] = puppet.base();
    json waves = json::array();
    for (const auto& w : puppet.waveforms()) {
        json j{{"joint", w.joint}, {"kind", to_string(w.kind)}};
        switch (w.kind) {
            case WaveKind::constant:
                j["value"] = w.value;
                break;
            case WaveKind::sine:
                j["offset"] = w.offset;
                j["amplitude"] = w.amplitude;
                j["frequency_hz"] = w.frequency_hz;
                j["phase"] = w.phase;
                break;
            case WaveKind::ramp:
                j["from"] = w.from;
                j["to"] = w.to;
                j["t0"] = w.t0;
                j["t1"] = w.t1;
                break;
        }
        waves.push_back(std::move(j));
    }
    doc["waveforms"] = std::move(waves);
    std::ofstream out(path);
    if (!out) throw Error("cannot write puppet file '" + path + "'");
    out << doc.dump(2) << '\n';
}

std::vector<double> ReplayPuppet::pose(double t) {
    if (seq_.frames.empty()) throw ValidationError("replay puppet has no frames");
    const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t * seq_.rate_hz + 1e-9)));
    return seq_.frames[std::min(k, seq_.frames.size() - 1)];
}

void LivePuppet::push(std::vector<double> pose) {
    std::lock_guard lock(mutex_);
    latest_ = std::move(pose);
}

std::vector<double> LivePuppet::pose(double) {
    std::lock_guard lock(mutex_);
    return latest_;
}

void RecordingConfig::validate() const {
    if (!(rate_hz > 0.0)) throw ValidationError("recording rate_hz must be positive");
    if (!(duration > 0.0)) throw ValidationError("recording duration must be positive");
}

std::size_t RecordingConfig::frame_count() const {
    return static_cast<std::size_t>(std::llround(rate_hz * duration));
}

// ---- kinesthetic teaching ----

KinestheticSession::KinestheticSession(bus::SimBus& bus, const robot::RobotModel& model, double rate_hz,
                                       std::string name, std::vector<int> joints)
    : bus_(bus), model_(model), polled_(robot::kDof, joints.empty()) {
    if (!(rate_hz > 0.0)) throw ValidationError("recording rate_hz must be positive");
    for (int id : joints) polled_[model.index_of(id)] = true;
    seq_.name = std::move(name);
    seq_.rate_hz = rate_hz;
    const auto polled_count = static_cast<double>(std::count(polled_.begin(), polled_.end(), true));
    tick_dt_ = 1.0 / (rate_hz * std::max(polled_count, 1.0));

    for (const auto& j : model.joints()) {
        const auto id = static_cast<std::uint8_t>(j.id);
        if (!bus.has(id)) throw RecordingError("bus timeout: no servo answers for joint '" + j.name + "'");
        torque_before_.push_back(bus.state(id).torque_enabled);
    }
    bus_.transact(bus::make_torque(bus::kBroadcastId, false), tick_dt_);
    for (const auto& j : model.joints()) {
        auto reply = bus_.transact(bus::make_read_pos(static_cast<std::uint8_t>(j.id)), tick_dt_);
        if (!reply) {
            restore_torque();
            throw RecordingError("bus timeout reading joint '" + j.name + "'");
        }
        held_.push_back(j.clamp(bus::angle_from_wire(bus::get_i16(reply->payload, 0))));
    }
}

KinestheticSession::~KinestheticSession() {
    if (!finished_) {
        try {
            restore_torque();
        } catch (...) {
        }
    }
}

void KinestheticSession::restore_torque() {
    for (std::size_t j = 0; j < robot::kDof; ++j) {
        const auto id = static_cast<std::uint8_t>(model_.joints()[j].id);
        bus_.transact(bus::make_torque(id, torque_before_[j]), tick_dt_);
    }
}

void KinestheticSession::tick(const std::vector<double>& pose) {
    if (finished_) throw RecordingError("recording already finished");
    if (pose.size() != robot::kDof) throw ValidationError("puppet pose needs 17 joint values");
    for (std::size_t j = 0; j < robot::kDof; ++j) {
        const auto& spec = model_.joints()[j];
        bus_.impose_position(static_cast<std::uint8_t>(spec.id), spec.clamp(pose[j]));
    }
    std::vector<double> frame = held_;
    for (std::size_t j = 0; j < robot::kDof; ++j) {
        if (!polled_[j]) continue;
        const auto& spec = model_.joints()[j];
        auto reply = bus_.transact(bus::make_read_pos(static_cast<std::uint8_t>(spec.id)), tick_dt_);
        if (!reply || reply->payload.size() != 2) throw RecordingError("bus timeout reading joint '" + spec.name + "'");
        frame[j] = spec.clamp(bus::angle_from_wire(bus::get_i16(reply->payload, 0)));
    }
    seq_.frames.push_back(std::move(frame));
}

data::ActionSequence KinestheticSession::finish() {
    if (finished_) throw RecordingError("recording already finished");
    restore_torque();
    finished_ = true;
    return std::move(seq_);
}

data::ActionSequence kinesthetic_record(bus::SimBus& bus, const robot::RobotModel& model, PuppetSource& puppet,
                                        const RecordingConfig& cfg, const std::string& name) {
    cfg.validate();
    KinestheticSession session(bus, model, cfg.rate_hz, name, cfg.joints);
    const std::size_t n = cfg.frame_count();
    for (std::size_t k = 0; k < n; ++k) session.tick(puppet.pose(static_cast<double>(k) / cfg.rate_hz));
    return session.finish();
}

// ---- end-effector recording ----

data::ActionSequence endeffector_record(const robot::RobotModel& model, const std::string& chain_name,
                                        const std::vector<TimedTarget>& targets, const ik::IkConfig& ik_cfg,
                                        const RecordingConfig& cfg, const EndEffectorOptions& options,
                                        const std::string& name) {
    cfg.validate();
    if (targets.empty()) throw ValidationError("end-effector recording needs at least one target");
    const auto chain = model.chain(chain_name);
    auto pose = options.base_pose ? *options.base_pose : model.home_angles();
    if (pose.size() != robot::kDof) throw ValidationError("base pose needs 17 joint values");

    std::vector<std::size_t> slots;
    std::vector<double> angles;
    for (const auto& j : chain.joints) {
        slots.push_back(model.index_of(j.id));
        angles.push_back(j.clamp(pose[slots.back()]));
    }

    data::ActionSequence seq;
    seq.name = name;
    seq.rate_hz = cfg.rate_hz;
    const std::size_t n = cfg.frame_count();
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / cfg.rate_hz;
        while (cursor + 1 < targets.size() && targets[cursor + 1].time <= t + 1e-12) ++cursor;
        const auto& target = targets[cursor];

        std::vector<ik::IkObjective> objectives{ik::IkObjective::position(target.position, options.position_weight)};
        if (target.orientation) {
            objectives.push_back(ik::IkObjective::orientation(*target.orientation, options.orientation_weight));
        }
        if (options.displacement_weight > 0.0) {
            objectives.push_back(ik::IkObjective::displacement(options.displacement_weight));
        }
        auto tick_cfg = ik_cfg;
        tick_cfg.seed = ik_cfg.seed + k;
        const double seed_fitness = ik::fitness(chain, objectives, angles, angles);
        const auto sol = ik::solve(chain, objectives, angles, tick_cfg);
        if (sol.fitness < seed_fitness) {
            angles = sol.angles;
        } else if (seed_fitness > 0.0) {
            spdlog::debug("{}: IK did not improve at tick {}, holding previous pose", name, k);
        }
        for (std::size_t i = 0; i < slots.size(); ++i) pose[slots[i]] = angles[i];
        seq.frames.push_back(pose);
    }
    return seq;
}

std::vector<TimedTarget> load_targets(const std::string& path) {
    const json doc = read_json(path, "target");
    std::vector<TimedTarget> out;
    try {
        for (const auto& j : doc.at("targets")) {
            TimedTarget t;
            t.time = j.at("time").get<double>();
            const auto p = j.at("position").get<std::vector<double>>();
            if (p.size() != 3) throw ValidationError("target position needs 3 values");
            t.position = {p[0], p[1], p[2]};
            if (j.contains("orientation")) {
                const auto q = j["orientation"].get<std::vector<double>>();  // w x y z
                if (q.size() != 4) throw ValidationError("target orientation needs 4 values (w x y z)");
                t.orientation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized();
            }
            if (!out.empty() && t.time < out.back().time) throw ValidationError("targets must be sorted by time");
            out.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed target file '" + path + "': " + e.what());
    }
    return out;
}

// ---- annotation ----

data::ActionSequence annotate(const data::ActionSequence& seq, const std::vector<TimedCommand>& events,
                              const data::CommandVocabulary& vocab) {
    data::ActionSequence out = seq;
    for (const auto& e : events) {
        const std::size_t command = vocab.index_of(e.kind, e.command);
        const double frame = std::round(e.time * seq.rate_hz);
        if (!(e.time >= 0.0) || frame >= static_cast<double>(seq.frames.size())) {
            throw ValidationError(data::to_string(e.kind) + " event '" + e.command + "' at " + std::to_string(e.time) +
                                  " s lies outside the recording (" + std::to_string(seq.duration()) + " s)");
        }
        auto& list = e.kind == data::CommandKind::facial ? out.facial_events : out.audio_events;
        list.push_back({static_cast<std::size_t>(frame), command});
    }
    auto by_frame = [](const data::CommandEvent& a, const data::CommandEvent& b) { return a.frame < b.frame; };
    std::stable_sort(out.facial_events.begin(), out.facial_events.end(), by_frame);
    std::stable_sort(out.audio_events.begin(), out.audio_events.end(), by_frame);
    return out;
}

std::vector<TimedCommand> load_annotations(const std::string& path) {
    const json doc = read_json(path, "annotation");
    std::vector<TimedCommand> out;
    try {
        for (const auto& j : doc.at("events")) {
            out.push_back({j.at("time").get<double>(), data::command_kind_from_string(j.at("kind").get<std::string>()),
                           j.at("command").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed annotation file '" + path + "': " + e.what());
    }
    return out;
}

}  // namespace workbench::recorder
