#include "workbench/service.hpp"

#include <spdlog/spdlog.h>

#include <filesystem>

namespace workbench::service {

namespace {

constexpr double kBusDt = 1e-3;  // bus time charged to each request-driven transaction

json events_json(const std::vector<data::CommandEvent>& events) {
    json out = json::array();
    for (const auto& e : events) out.push_back({{"frame", e.frame}, {"command", e.command}});
    return out;
}

json action_summary(const data::ActionSequence& a) {
    return {{"name", a.name},
            {"frames", a.frames.size()},
            {"rate_hz", a.rate_hz},
            {"facial_events", events_json(a.facial_events)},
            {"audio_events", events_json(a.audio_events)}};
}

json action_full(const data::ActionSequence& a) {
    json j = action_summary(a);
    j["frames"] = a.frames;
    return j;
}

}  // namespace

json error_reply(std::int64_t id, const std::string& message) {
    return {{"type", "error"}, {"id", id}, {"payload", {{"message", message}}}};
}

json make_reply(const std::string& type, std::int64_t id, json payload) {
    return {{"type", type + "_reply"}, {"id", id}, {"payload", std::move(payload)}};
}

Service::Service(robot::RobotModel model, ServiceOptions options)
    : model_(std::move(model)), options_(std::move(options)), bus_(model_) {
    bus_.set_logging(false);
}

Service::~Service() {
    stop_training_ = true;
    if (trainer_.joinable()) trainer_.join();
}

void Service::wait_for_training() {
    if (trainer_.joinable()) trainer_.join();
}

json Service::handle_line(const std::string& line) {
    json request;
    try {
        request = json::parse(line);
    } catch (const json::exception& e) {
        return error_reply(-1, std::string("malformed message: ") + e.what());
    }
    return handle(request);
}

json Service::handle(const json& request) {
    std::int64_t id = -1;
    if (request.is_object() && request.contains("id") && request["id"].is_number_integer()) {
        id = request["id"].get<std::int64_t>();
    }
    if (!request.is_object() || !request.contains("type") || !request["type"].is_string() || id < 0) {
        return error_reply(id, "malformed message: expected {\"type\": str, \"id\": int, \"payload\": {...}}");
    }
    const auto type = request["type"].get<std::string>();
    const json payload = request.value("payload", json::object());
    if (!payload.is_object()) return error_reply(id, "malformed message: payload must be an object");
    try {
        return make_reply(type, id, dispatch(type, payload));
    } catch (const std::exception& e) {
        return error_reply(id, e.what());
    }
}

json Service::dispatch(const std::string& type, const json& payload) {
    if (type == "get_state") return get_state();
    if (type == "set_goals") return set_goals(payload);
    if (type == "set_torque") return set_torque(payload);
    if (type == "start_record") return start_record(payload);
    if (type == "puppet_frame") return puppet_frame(payload);
    if (type == "stop_record") return stop_record();
    if (type == "tag_event") return tag_event(payload);
    if (type == "list_actions") return list_actions();
    if (type == "get_action") return get_action(payload);
    if (type == "start_train") return start_train(payload);
    if (type == "train_status") return train_status();
    if (type == "generate") return generate(payload);
    if (type == "replay") return replay(payload);
    if (type == "subscribe_state" || type == "unsubscribe_state") {
        throw Error(type + " needs a streaming connection");
    }
    throw Error("unknown message type '" + type + "'");
}

json Service::state_snapshot() {
    std::lock_guard lock(bus_mutex_);
    json positions = json::array(), goals = json::array(), torque = json::array(), currents = json::array();
    for (const auto& j : model_.joints()) {
        const auto& s = bus_.state(static_cast<std::uint8_t>(j.id));
        positions.push_back(s.position);
        goals.push_back(s.goal);
        torque.push_back(s.torque_enabled);
        currents.push_back(s.current_estimate);
    }
    json snap{{"joint_names", model_.joint_names()},
              {"positions", positions},
              {"goals", goals},
              {"torque", torque},
              {"currents", currents},
              {"time", bus_.time()},
              {"recording", session_ != nullptr},
              {"playing", playback_.has_value()}};
    if (playback_ && playback_frame_ > 0) {
        std::lock_guard alock(actions_mutex_);
        auto it = cs_tracks_.find(playback_->name);
        if (it != cs_tracks_.end()) {
            const auto row = it->second.row(static_cast<Eigen::Index>(playback_frame_ - 1));
            snap["cs"] = std::vector<double>(row.begin(), row.end());
        }
    }
    return snap;
}

void Service::add_action(data::ActionSequence action) {
    data::validate(action, model_, options_.vocabulary);
    std::lock_guard lock(actions_mutex_);
    std::erase_if(actions_, [&](const data::ActionSequence& a) { return a.name == action.name; });
    cs_tracks_.erase(action.name);
    actions_.push_back(std::move(action));
}

json Service::get_state() { return state_snapshot(); }

std::vector<double> Service::pose_from_json(const json& j) const {
    std::vector<double> pose;
    for (const auto& spec : model_.joints()) pose.push_back(bus_.state(static_cast<std::uint8_t>(spec.id)).position);
    if (j.is_array()) {
        if (j.size() != robot::kDof) throw ValidationError("expected 17 joint values");
        for (std::size_t k = 0; k < robot::kDof; ++k) {
            if (!j[k].is_null()) pose[k] = j[k].get<double>();
        }
    } else if (j.is_object()) {
        const auto names = model_.joint_names();
        for (const auto& [name, value] : j.items()) {
            auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end()) throw ValidationError("unknown joint '" + name + "'");
            pose[static_cast<std::size_t>(it - names.begin())] = value.get<double>();
        }
    } else {
        throw ValidationError("joint values must be an array of 17 or an object keyed by joint name");
    }
    return pose;
}

json Service::set_goals(const json& payload) {
    std::lock_guard lock(bus_mutex_);
    if (!payload.contains("goals")) throw ValidationError("set_goals needs 'goals'");
    const auto pose = pose_from_json(payload["goals"]);
    std::vector<std::pair<std::uint8_t, double>> goals;
    for (std::size_t k = 0; k < robot::kDof; ++k) {
        const auto& spec = model_.joints()[k];
        goals.emplace_back(static_cast<std::uint8_t>(spec.id), spec.clamp(pose[k]));
    }
    bus_.transact(bus::make_sync_write(goals), kBusDt);
    return {{"joints", goals.size()}};
}

json Service::set_torque(const json& payload) {
    std::lock_guard lock(bus_mutex_);
    if (session_) throw Error("torque is managed by the active recording");
    const bool enabled = payload.value("enabled", true);
    if (!payload.contains("joints")) {
        bus_.transact(bus::make_torque(bus::kBroadcastId, enabled), kBusDt);
        return {{"enabled", enabled}, {"joints", "all"}};
    }
    for (const auto& name : payload["joints"]) {
        const auto names = model_.joint_names();
        auto it = std::find(names.begin(), names.end(), name.get<std::string>());
        if (it == names.end()) throw ValidationError("unknown joint '" + name.get<std::string>() + "'");
        const auto id = static_cast<std::uint8_t>(model_.joints()[static_cast<std::size_t>(it - names.begin())].id);
        if (!bus_.transact(bus::make_torque(id, enabled), kBusDt)) throw Error("bus timeout on joint '" + *it + "'");
    }
    return {{"enabled", enabled}, {"joints", payload["joints"]}};
}

json Service::start_record(const json& payload) {
    std::lock_guard lock(bus_mutex_);
    if (session_) throw Error("a recording is already running");
    const auto name = payload.value("name", std::string("recording"));
    const double rate = payload.value("rate_hz", 50.0);
    playback_.reset();
    session_ = std::make_unique<recorder::KinestheticSession>(bus_, model_, rate, name);
    return {{"name", name}, {"rate_hz", rate}};
}

json Service::puppet_frame(const json& payload) {
    std::lock_guard lock(bus_mutex_);
    if (!session_) throw Error("no recording is running");
    if (!payload.contains("positions")) throw ValidationError("puppet_frame needs 'positions'");
    session_->tick(pose_from_json(payload["positions"]));
    return {{"frame", session_->frames() - 1}};
}

json Service::stop_record() {
    data::ActionSequence seq;
    {
        std::lock_guard lock(bus_mutex_);
        if (!session_) throw Error("no recording is running");
        seq = session_->finish();
        session_.reset();
    }
    if (seq.frames.empty()) throw Error("recording has no frames");
    if (!options_.data_dir.empty()) {
        std::filesystem::create_directories(options_.data_dir);
        data::save_action(seq, model_, (std::filesystem::path(options_.data_dir) / (seq.name + ".act")).string());
    }
    std::lock_guard lock(actions_mutex_);
    std::erase_if(actions_, [&](const data::ActionSequence& a) { return a.name == seq.name; });
    cs_tracks_.erase(seq.name);
    actions_.push_back(seq);
    return action_summary(seq);
}

data::ActionSequence& Service::find_action(const std::string& name) {
    for (auto& a : actions_) {
        if (a.name == name) return a;
    }
    throw ValidationError("no action named '" + name + "'");
}

json Service::tag_event(const json& payload) {
    std::lock_guard lock(actions_mutex_);
    auto& action = find_action(payload.at("action").get<std::string>());
    recorder::TimedCommand cmd{payload.at("time").get<double>(),
                               data::command_kind_from_string(payload.at("kind").get<std::string>()),
                               payload.at("command").get<std::string>()};
    action = recorder::annotate(action, {cmd}, options_.vocabulary);
    if (!options_.data_dir.empty()) {
        data::save_action(action, model_, (std::filesystem::path(options_.data_dir) / (action.name + ".act")).string());
    }
    return action_summary(action);
}

json Service::list_actions() {
    std::lock_guard lock(actions_mutex_);
    json list = json::array();
    for (const auto& a : actions_) list.push_back(action_summary(a));
    return {{"actions", list}};
}

json Service::get_action(const json& payload) {
    std::lock_guard lock(actions_mutex_);
    return action_full(find_action(payload.at("name").get<std::string>()));
}

json Service::start_train(const json& payload) {
    std::lock_guard lock(job_.mutex);
    if (job_.running) throw Error("a training job is already running");
    if (trainer_.joinable()) trainer_.join();

    data::Dataset dataset;
    dataset.vocabulary = options_.vocabulary;
    dataset.model_name = model_.name();
    {
        std::lock_guard alock(actions_mutex_);
        for (const auto& a : actions_) dataset.sequences.push_back(data::normalize(a, model_, options_.vocabulary));
    }
    if (dataset.sequences.empty()) throw Error("no recorded actions to train on");

    mtrnn::TrainConfig cfg;
    cfg.epochs = payload.value("epochs", 2000);
    cfg.learning_rate = payload.value("learning_rate", 0.001);
    cfg.momentum = payload.value("momentum", cfg.momentum);
    cfg.seed = payload.value("seed", cfg.seed);
    cfg.report_interval = payload.value("report_interval", cfg.report_interval);
    cfg.closed_loop = payload.value("closed_loop", 1.0);
    const auto optimizer = payload.value("optimizer", std::string("adam"));
    if (optimizer == "adam") {
        cfg.optimizer = mtrnn::Optimizer::adam;
    } else if (optimizer == "momentum") {
        cfg.optimizer = mtrnn::Optimizer::momentum;
    } else {
        throw ValidationError("optimizer must be adam or momentum");
    }
    cfg.validate();
    mtrnn::MtrnnConfig net_cfg = options_.network;
    net_cfg.n_cf = payload.value("n_cf", net_cfg.n_cf);
    net_cfg.n_cs = payload.value("n_cs", net_cfg.n_cs);

    job_.running = true;
    job_.error.clear();
    job_.curve.clear();
    job_.dataset = dataset;
    stop_training_ = false;
    trainer_ = std::thread([this, dataset = std::move(dataset), cfg, net_cfg] {
        try {
            auto result = mtrnn::train(net_cfg, dataset, cfg, [this](const mtrnn::LossPoint& p) {
                std::lock_guard lock(job_.mutex);
                job_.curve.push_back(p);
                return !stop_training_.load();
            });
            std::lock_guard lock(job_.mutex);
            job_.curve = std::move(result.curve);
            job_.net = std::move(result.net);
        } catch (const std::exception& e) {
            spdlog::error("training failed: {}", e.what());
            std::lock_guard lock(job_.mutex);
            job_.error = e.what();
        }
        std::lock_guard lock(job_.mutex);
        job_.running = false;
    });
    return {{"sequences", job_.dataset.sequences.size()}, {"epochs", cfg.epochs}};
}

json Service::train_status() {
    std::lock_guard lock(job_.mutex);
    json curve = json::array();
    for (const auto& p : job_.curve) curve.push_back({p.epoch, p.loss});
    json status{{"running", job_.running}, {"trained", job_.net.has_value()}, {"curve", curve}};
    if (!job_.curve.empty()) {
        status["epoch"] = job_.curve.back().epoch;
        status["loss"] = job_.curve.back().loss;
    }
    if (!job_.error.empty()) status["error"] = job_.error;
    return status;
}

json Service::generate(const json& payload) {
    mtrnn::MtrnnNetwork net;
    data::Dataset dataset;
    {
        std::lock_guard lock(job_.mutex);
        if (job_.running) throw Error("training is still running");
        if (!job_.net) throw Error("no trained network; send start_train first");
        net = *job_.net;
        dataset = job_.dataset;
    }
    std::size_t k = 0;
    const auto& which = payload.at("sequence");
    if (which.is_string()) {
        k = net.sequence_index(which.get<std::string>());
    } else {
        k = which.get<std::size_t>();
        if (k >= dataset.sequences.size()) throw ValidationError("unknown sequence id " + std::to_string(k));
    }
    const auto& teacher = dataset.sequences[k];
    const std::size_t steps = payload.value("steps", teacher.vectors.size());
    const auto name = payload.value("name", "generated_" + teacher.name);
    auto nseq = mtrnn::generate_sequence(net, k, teacher.vectors.front(), steps, teacher.rate_hz, name);
    auto action = data::denormalize(nseq, model_, options_.vocabulary);
    {
        std::lock_guard lock(actions_mutex_);
        std::erase_if(actions_, [&](const data::ActionSequence& a) { return a.name == action.name; });
        actions_.push_back(action);
        cs_tracks_[action.name] = mtrnn::rollout_states(net, k, nseq);
    }
    return action_full(action);
}

json Service::replay(const json& payload) {
    data::ActionSequence action;
    {
        std::lock_guard lock(actions_mutex_);
        action = find_action(payload.at("action").get<std::string>());
    }
    std::lock_guard lock(bus_mutex_);
    if (session_) throw Error("cannot replay while recording");
    bus_.transact(bus::make_torque(bus::kBroadcastId, true), kBusDt);
    playback_ = std::move(action);
    playback_frame_ = 0;
    playback_clock_ = 0.0;
    return {{"action", playback_->name}, {"frames", playback_->frames.size()}};
}

void Service::tick() {
    std::lock_guard lock(bus_mutex_);
    if (playback_) {
        while (playback_ && static_cast<double>(playback_frame_) / playback_->rate_hz <= playback_clock_ + 1e-12) {
            std::vector<std::pair<std::uint8_t, double>> goals;
            for (std::size_t j = 0; j < robot::kDof; ++j) {
                goals.emplace_back(static_cast<std::uint8_t>(model_.joints()[j].id),
                                   playback_->frames[playback_frame_][j]);
            }
            bus_.transact(bus::make_sync_write(goals), kBusDt);
            if (++playback_frame_ >= playback_->frames.size()) playback_.reset();
        }
        playback_clock_ += options_.sim_dt;
    }
    bus_.advance(options_.sim_dt);
}

}  // namespace workbench::service
