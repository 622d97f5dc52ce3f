#pragma once

#include <string>
#include <vector>

#include "workbench/action_data.hpp"
#include "workbench/recorder.hpp"
#include "workbench/robot_model.hpp"
#include "workbench/servo_bus.hpp"

namespace workbench::recorder {

/// A scripted demonstration: the puppet motion plus the expression/audio cues tagged on it.
struct DemoAction {
    std::string name;
    double duration = 0.0;  // s
    std::vector<Waveform> waves;
    std::vector<TimedCommand> cues;
};

/// Eleven short expressive actions for the default model and default vocabulary,
/// 2-6 s each, every one with at least one facial and one audio cue.
std::vector<DemoAction> demo_corpus();

/// Records every action kinesthetically on `bus` at `rate_hz` and annotates it.
std::vector<data::ActionSequence> record_demo_corpus(bus::SimBus& bus, const robot::RobotModel& model,
                                                     const data::CommandVocabulary& vocab, double rate_hz = 50.0);

}  // namespace workbench::recorder
