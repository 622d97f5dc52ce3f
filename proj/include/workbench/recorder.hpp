#pragma once

#include <Eigen/Geometry>

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "workbench/action_data.hpp"
#include "workbench/ik_solver.hpp"
#include "workbench/robot_model.hpp"
#include "workbench/servo_bus.hpp"

namespace workbench::recorder {

/// Anything that pushes the limp robot around: a script, a replayed file, a live stream.
class PuppetSource {
public:
    virtual ~PuppetSource() = default;
    /// Full joint pose (model order) the puppet imposes at time t.
    virtual std::vector<double> pose(double t) = 0;
};

enum class WaveKind { constant, sine, ramp };

/// constant: value. sine: offset + amplitude * sin(2 pi f t + phase).
/// ramp: linear from `from` at t0 to `to` at t1, held outside [t0, t1].
struct Waveform {
    std::string joint;
    WaveKind kind = WaveKind::constant;
    double value = 0.0;
    double offset = 0.0, amplitude = 0.0, frequency_hz = 0.0, phase = 0.0;
    double from = 0.0, to = 0.0, t0 = 0.0, t1 = 1.0;

    double at(double t) const;
};

/// Driven joints take the sum of their waveforms; the others hold the base pose.
class ScriptedPuppet : public PuppetSource {
public:
    ScriptedPuppet(const robot::RobotModel& model, std::vector<Waveform> waves,
                   std::optional<std::vector<double>> base = std::nullopt);

    std::vector<double> pose(double t) override;
    const std::vector<Waveform>& waveforms() const { return waves_; }
    const std::vector<double>& base() const { return base_; }

private:
    std::vector<std::size_t> targets_;
    std::vector<Waveform> waves_;
    std::vector<double> base_;
};

ScriptedPuppet load_puppet(const std::string& path, const robot::RobotModel& model);
void save_puppet(const ScriptedPuppet& puppet, const robot::RobotModel& model, const std::string& path);

/// Replays recorded frames, sample-and-hold at the sequence rate.
class ReplayPuppet : public PuppetSource {
public:
    explicit ReplayPuppet(data::ActionSequence seq) : seq_(std::move(seq)) {}
    std::vector<double> pose(double t) override;

private:
    data::ActionSequence seq_;
};

/// Latest-value mailbox fed from another thread (the service endpoint).
class LivePuppet : public PuppetSource {
public:
    explicit LivePuppet(std::vector<double> initial) : latest_(std::move(initial)) {}
    void push(std::vector<double> pose);
    std::vector<double> pose(double t) override;

private:
    std::mutex mutex_;
    std::vector<double> latest_;
};

struct RecordingConfig {
    double rate_hz = 50.0;
    double duration = 1.0;  // s
    std::vector<int> joints;  // bus ids to poll; empty = all

    void validate() const;
    std::size_t frame_count() const;
};

class RecordingError : public Error {
public:
    using Error::Error;
};

/// Torque off, poll encoders while the puppet moves the joints, torque state restored afterwards
/// (also when aborting). A bus timeout aborts the recording and discards the partial data.
data::ActionSequence kinesthetic_record(bus::SimBus& bus, const robot::RobotModel& model, PuppetSource& puppet,
                                        const RecordingConfig& cfg, const std::string& name = "recording");

/// Incremental form of kinesthetic_record used by the live endpoint: one frame per tick().
class KinestheticSession {
public:
    KinestheticSession(bus::SimBus& bus, const robot::RobotModel& model, double rate_hz, std::string name,
                       std::vector<int> joints = {});
    ~KinestheticSession();
    KinestheticSession(const KinestheticSession&) = delete;
    KinestheticSession& operator=(const KinestheticSession&) = delete;

    /// Imposes `pose` on the limp joints, reads every polled joint back and appends a frame.
    void tick(const std::vector<double>& pose);
    std::size_t frames() const { return seq_.frames.size(); }
    /// Restores torque and returns the recording.
    data::ActionSequence finish();

private:
    void restore_torque();

    bus::SimBus& bus_;
    const robot::RobotModel& model_;
    std::vector<bool> polled_;
    std::vector<bool> torque_before_;
    std::vector<double> held_;
    data::ActionSequence seq_;
    double tick_dt_ = 0.0;
    bool finished_ = false;
};

struct TimedTarget {
    double time = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    std::optional<Eigen::Quaterniond> orientation;
};

struct EndEffectorOptions {
    double position_weight = 1.0;
    double orientation_weight = 0.1;
    double displacement_weight = 1e-6;
    std::optional<std::vector<double>> base_pose;  // model order; default home
};

/// Per tick, solves IK for the latest target (sample-and-hold) warm-started from the previous solution.
/// The tick index offsets the IK seed so the recording is deterministic for a fixed ik_cfg.seed.
data::ActionSequence endeffector_record(const robot::RobotModel& model, const std::string& chain_name,
                                        const std::vector<TimedTarget>& targets, const ik::IkConfig& ik_cfg,
                                        const RecordingConfig& cfg, const EndEffectorOptions& options = {},
                                        const std::string& name = "recording");

std::vector<TimedTarget> load_targets(const std::string& path);

struct TimedCommand {
    double time = 0.0;  // s
    data::CommandKind kind = data::CommandKind::facial;
    std::string command;
};

/// Converts times to the nearest frame and merges into the existing events, sorted by frame.
data::ActionSequence annotate(const data::ActionSequence& seq, const std::vector<TimedCommand>& events,
                              const data::CommandVocabulary& vocab);

std::vector<TimedCommand> load_annotations(const std::string& path);

}  // namespace workbench::recorder
