#include "workbench/demo_corpus.hpp"

#include <numbers>

namespace workbench::recorder {

namespace {

Waveform sine(std::string joint, double offset, double amplitude, double hz, double phase = 0.0) {
    Waveform w;
    w.joint = std::move(joint);
    w.kind = WaveKind::sine;
    w.offset = offset;
    w.amplitude = amplitude;
    w.frequency_hz = hz;
    w.phase = phase;
    return w;
}

Waveform ramp(std::string joint, double from, double to, double t0, double t1) {
    Waveform w;
    w.joint = std::move(joint);
    w.kind = WaveKind::ramp;
    w.from = from;
    w.to = to;
    w.t0 = t0;
    w.t1 = t1;
    return w;
}

TimedCommand face(double t, std::string name) { return {t, data::CommandKind::facial, std::move(name)}; }
TimedCommand voice(double t, std::string name) { return {t, data::CommandKind::audio, std::move(name)}; }

constexpr double kHalfPi = std::numbers::pi / 2.0;

}  // namespace

std::vector<DemoAction> demo_corpus() {
    std::vector<DemoAction> c;
    c.push_back({"self_introduction", 5.0,
                 {sine("right_shoulder_pitch", -1.6, 0.5, 0.4, -kHalfPi), sine("right_elbow", -1.0, 0.4, 0.8),
                  sine("neck_roll", 0.0, 0.15, 0.4)},
                 {face(0.3, "smile"), voice(0.6, "greeting")}});
    c.push_back({"challenged", 3.0,
                 {sine("left_shoulder_pitch", -0.8, 0.5, 0.5, -kHalfPi), sine("right_shoulder_pitch", -0.8, 0.5, 0.5, -kHalfPi),
                  ramp("left_fingers", 0.2, 1.2, 0.5, 2.0), ramp("right_fingers", 0.2, 1.2, 0.5, 2.0)},
                 {face(0.2, "determined"), voice(0.4, "hmph")}});
    c.push_back({"angry", 2.5,
                 {sine("left_elbow", -1.4, 0.5, 1.0), sine("right_elbow", -1.4, 0.5, 1.0, std::numbers::pi),
                  sine("neck_pitch", -0.2, 0.2, 0.8), sine("left_ear", 0.0, 0.5, 0.8), sine("right_ear", 0.0, 0.5, 0.8)},
                 {face(0.2, "angry"), voice(0.3, "grr")}});
    c.push_back({"annoyed", 3.5,
                 {sine("neck_yaw", 0.0, 0.6, 0.3), ramp("left_shoulder_roll", 0.1, 0.6, 0.5, 2.5),
                  sine("right_ear", -0.3, 0.2, 0.6)},
                 {face(0.4, "annoyed"), voice(1.0, "sigh")}});
    c.push_back({"confused", 4.0,
                 {sine("neck_roll", 0.0, 0.3, 0.25), sine("right_shoulder_pitch", -1.2, 0.4, 0.25, -kHalfPi),
                  sine("right_wrist", 0.0, 0.6, 0.5), sine("left_ear", 0.2, 0.3, 0.5)},
                 {face(0.5, "confused"), voice(0.8, "hmm")}});
    c.push_back({"rejection", 3.0,
                 {sine("neck_yaw", 0.0, 0.8, 0.67), sine("left_upper_arm_yaw", 0.0, 0.6, 0.67),
                  sine("right_upper_arm_yaw", 0.0, -0.6, 0.67)},
                 {face(0.2, "annoyed"), voice(0.2, "no")}});
    c.push_back({"hating", 4.5,
                 {ramp("neck_pitch", 0.0, -0.4, 0.0, 2.0), sine("left_shoulder_roll", 0.6, 0.4, 0.22),
                  sine("right_shoulder_roll", -0.6, 0.4, 0.22), sine("left_fingers", 0.6, 0.4, 0.44)},
                 {face(0.6, "disgust"), voice(1.2, "grr")}});
    c.push_back({"joy", 6.0,
                 {sine("left_shoulder_pitch", -1.8, 0.6, 0.33, -kHalfPi), sine("right_shoulder_pitch", -1.8, 0.6, 0.33, -kHalfPi),
                  sine("left_ear", 0.2, 0.5, 0.66), sine("right_ear", 0.2, 0.5, 0.66), sine("neck_roll", 0.0, 0.2, 0.33)},
                 {face(0.3, "joy"), voice(0.5, "laugh")}});
    c.push_back({"sad", 5.5,
                 {ramp("neck_pitch", 0.0, 0.4, 0.0, 3.0), ramp("left_ear", 0.0, -0.6, 0.5, 3.5),
                  ramp("right_ear", 0.0, -0.6, 0.5, 3.5), sine("right_wrist", 0.0, 0.3, 0.36)},
                 {face(0.8, "sad"), voice(1.5, "sob")}});
    c.push_back({"agree_nod", 2.0,
                 {sine("neck_pitch", 0.0, 0.3, 1.0), sine("right_elbow", -0.8, 0.3, 0.5)},
                 {face(0.2, "smile"), voice(0.3, "yes")}});
    c.push_back({"agree_wave", 4.0,
                 {sine("left_shoulder_pitch", -2.0, 0.3, 0.25, kHalfPi), sine("left_wrist", 0.0, 0.7, 0.75),
                  sine("neck_yaw", 0.3, 0.2, 0.5)},
                 {face(0.4, "joy"), voice(0.7, "yes")}});
    return c;
}

std::vector<data::ActionSequence> record_demo_corpus(bus::SimBus& bus, const robot::RobotModel& model,
                                                     const data::CommandVocabulary& vocab, double rate_hz) {
    std::vector<data::ActionSequence> out;
    for (const auto& action : demo_corpus()) {
        ScriptedPuppet puppet(model, action.waves);
        RecordingConfig cfg;
        cfg.rate_hz = rate_hz;
        cfg.duration = action.duration;
        auto seq = kinesthetic_record(bus, model, puppet, cfg, action.name);
        out.push_back(annotate(seq, action.cues, vocab));
    }
    return out;
}

}  // namespace workbench::recorder
