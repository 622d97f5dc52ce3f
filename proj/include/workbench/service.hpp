#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "workbench/action_data.hpp"
#include "workbench/mtrnn.hpp"
#include "workbench/recorder.hpp"
#include "workbench/robot_model.hpp"
#include "workbench/servo_bus.hpp"

namespace workbench::service {

using nlohmann::json;

/// {"type": "error", "id": id, "payload": {"message": message}}
json error_reply(std::int64_t id, const std::string& message);
/// {"type": type + "_reply", "id": id, "payload": payload}
json make_reply(const std::string& type, std::int64_t id, json payload);

struct ServiceOptions {
    data::CommandVocabulary vocabulary = data::default_vocabulary();
    std::string data_dir;  // when set, finished recordings are also written here as action files
    double sim_dt = 0.02;  // s per tick()
    mtrnn::MtrnnConfig network;
};

/// The endpoint's state machine, independent of any transport. Motor control (bus, torque, goals,
/// playback), expression (event tagging) and integration (recording, training, generation) requests
/// all pass through handle(). Bus access is serialized by an internal mutex; training runs on a
/// background thread that only touches its own copy of the data.
class Service {
public:
    explicit Service(robot::RobotModel model, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Exactly one reply (or error reply) per request. subscribe_state/unsubscribe_state are
    /// transport concerns and are acknowledged here but streamed by the server.
    json handle(const json& request);
    /// Parses one line; malformed JSON yields an error reply with id -1.
    json handle_line(const std::string& line);

    /// Advances the simulation by one sim_dt step (servo motion and playback).
    void tick();

    /// {"joint_names", "positions", "goals", "torque", "currents", "time", "recording", "playing"},
    /// plus "cs" (current context activations) while a generated action plays back.
    json state_snapshot();

    /// Adds or replaces (by name) a stored action, e.g. one loaded from disk at startup.
    void add_action(data::ActionSequence action);

    const robot::RobotModel& model() const { return model_; }
    /// Blocks until a running training job has finished.
    void wait_for_training();

private:
    json dispatch(const std::string& type, const json& payload);

    json get_state();
    json set_goals(const json& payload);
    json set_torque(const json& payload);
    json start_record(const json& payload);
    json puppet_frame(const json& payload);
    json stop_record();
    json tag_event(const json& payload);
    json list_actions();
    json get_action(const json& payload);
    json start_train(const json& payload);
    json train_status();
    json generate(const json& payload);
    json replay(const json& payload);

    data::ActionSequence& find_action(const std::string& name);
    std::vector<double> pose_from_json(const json& j) const;

    robot::RobotModel model_;
    ServiceOptions options_;

    std::mutex bus_mutex_;
    bus::SimBus bus_;
    std::unique_ptr<recorder::KinestheticSession> session_;
    std::optional<data::ActionSequence> playback_;
    std::size_t playback_frame_ = 0;
    double playback_clock_ = 0.0;

    std::mutex actions_mutex_;
    std::vector<data::ActionSequence> actions_;
    std::map<std::string, Eigen::MatrixXd> cs_tracks_;  // closed-loop Cs per generated action

    struct TrainJob {
        std::mutex mutex;
        bool running = false;
        std::string error;
        std::vector<mtrnn::LossPoint> curve;
        std::optional<mtrnn::MtrnnNetwork> net;
        data::Dataset dataset;
    };
    TrainJob job_;
    std::atomic<bool> stop_training_{false};
    std::thread trainer_;
};

}  // namespace workbench::service
