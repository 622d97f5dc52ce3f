#pragma once

#include <string>
#include <vector>

#include "workbench/error.hpp"
#include "workbench/robot_model.hpp"

namespace workbench::data {

enum class CommandKind { facial, audio };

std::string to_string(CommandKind kind);
CommandKind command_kind_from_string(const std::string& name);

/// Index 0 of each list is reserved: "neutral" for facial, "silent" for audio.
class CommandVocabulary {
public:
    CommandVocabulary(std::vector<std::string> facial, std::vector<std::string> audio);

    const std::vector<std::string>& facial() const { return facial_; }
    const std::vector<std::string>& audio() const { return audio_; }
    const std::vector<std::string>& list(CommandKind kind) const;
    std::size_t index_of(CommandKind kind, const std::string& name) const;

    bool operator==(const CommandVocabulary&) const = default;

private:
    std::vector<std::string> facial_;
    std::vector<std::string> audio_;
};

CommandVocabulary default_vocabulary();

struct CommandEvent {
    std::size_t frame = 0;
    std::size_t command = 0;

    bool operator==(const CommandEvent&) const = default;
};

struct ActionSequence {
    std::string name;
    double rate_hz = 50.0;
    std::vector<std::vector<double>> frames;  // kDof joint angles each, rad
    std::vector<CommandEvent> facial_events;
    std::vector<CommandEvent> audio_events;

    double duration() const { return frames.empty() ? 0.0 : static_cast<double>(frames.size()) / rate_hz; }
    bool operator==(const ActionSequence&) const = default;
};

/// Throws ValidationError naming the first offending frame, joint or event.
void validate(const ActionSequence& seq, const robot::RobotModel& model, const CommandVocabulary& vocab);

struct NormalizedSequence {
    std::string name;
    double rate_hz = 50.0;
    std::vector<std::vector<double>> vectors;  // D = kDof + |facial| + |audio| each, in [-1, 1]

    bool operator==(const NormalizedSequence&) const = default;
};

/// Channel layout of a normalized vector: joints, then the facial one-hot block, then audio.
struct Layout {
    std::size_t joints = robot::kDof;
    std::size_t facial = 0;
    std::size_t audio = 0;

    explicit Layout(const CommandVocabulary& vocab)
        : facial(vocab.facial().size()), audio(vocab.audio().size()) {}
    std::size_t dim() const { return joints + facial + audio; }
    std::size_t facial_begin() const { return joints; }
    std::size_t audio_begin() const { return joints + facial; }
};

/// Joints map linearly [min, max] -> [-1, 1]. Command channels are step functions:
/// the latest event's command is active (+1, others -1) until the next event; index 0 before any event.
NormalizedSequence normalize(const ActionSequence& seq, const robot::RobotModel& model, const CommandVocabulary& vocab);

/// Inverse of normalize(). Joint values are clipped to limits; commands decode by argmax and an
/// event is emitted on every change (and at frame 0 if the first active command is not index 0).
/// Exact inverse for event lists in canonical form: each event changes the active command.
ActionSequence denormalize(const NormalizedSequence& nseq, const robot::RobotModel& model,
                           const CommandVocabulary& vocab);

/// Drops events that do not change the active command, keeping the last event per frame.
std::vector<CommandEvent> canonical_events(const std::vector<CommandEvent>& events);

struct Dataset {
    CommandVocabulary vocabulary = default_vocabulary();
    std::vector<NormalizedSequence> sequences;
    std::string model_name;

    std::size_t dim() const { return Layout(vocabulary).dim(); }
    /// Throws ValidationError if any sequence has the wrong D or leaves [-1, 1].
    void validate() const;
};

inline constexpr int kFormatVersion = 1;

void save_action(const ActionSequence& seq, const robot::RobotModel& model, const std::string& path);
/// Validates against model (joint names and limits) and checks event indices for range.
ActionSequence load_action(const std::string& path, const robot::RobotModel& model);

void save_vocabulary(const CommandVocabulary& vocab, const std::string& path);
CommandVocabulary load_vocabulary(const std::string& path);

/// Sequences are written inline.
void save_dataset(const Dataset& dataset, const std::string& path);
/// Accepts inline sequences or "sequence_files" entries that reference action files
/// (relative to the dataset file) which are normalized with `model` on load.
Dataset load_dataset(const std::string& path, const robot::RobotModel& model);

}  // namespace workbench::data
