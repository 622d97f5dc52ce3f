#include "workbench/action_data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace workbench::data {

using nlohmann::json;

std::string to_string(CommandKind kind) { return kind == CommandKind::facial ? "facial" : "audio"; }

CommandKind command_kind_from_string(const std::string& name) {
    if (name == "facial") return CommandKind::facial;
    if (name == "audio") return CommandKind::audio;
    throw ValidationError("unknown command kind '" + name + "'");
}

CommandVocabulary::CommandVocabulary(std::vector<std::string> facial, std::vector<std::string> audio)
    : facial_(std::move(facial)), audio_(std::move(audio)) {
    auto check = [](const std::vector<std::string>& names, const char* what, const char* reserved) {
        if (names.empty() || names[0] != reserved) {
            throw ValidationError(std::string(what) + " vocabulary must start with '" + reserved + "'");
        }
        std::set<std::string> seen;
        for (const auto& n : names) {
            if (!seen.insert(n).second) throw ValidationError(std::string(what) + " command '" + n + "' repeated");
        }
    };
    check(facial_, "facial", "neutral");
    check(audio_, "audio", "silent");
}

const std::vector<std::string>& CommandVocabulary::list(CommandKind kind) const {
    return kind == CommandKind::facial ? facial_ : audio_;
}

std::size_t CommandVocabulary::index_of(CommandKind kind, const std::string& name) const {
    const auto& names = list(kind);
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("unknown " + to_string(kind) + " command '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

CommandVocabulary default_vocabulary() {
    return CommandVocabulary(
        {"neutral", "smile", "determined", "angry", "annoyed", "confused", "disgust", "joy", "sad"},
        {"silent", "greeting", "hmph", "grr", "sigh", "hmm", "no", "laugh", "sob", "yes"});
}

namespace {

void check_events(const std::vector<CommandEvent>& events, std::size_t frames, std::size_t vocab_size,
                  const std::string& kind) {
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        const std::string who = kind + " event #" + std::to_string(i) + " (frame " + std::to_string(e.frame) + ")";
        if (e.frame >= frames) {
            throw ValidationError(who + ": frame index beyond sequence of " + std::to_string(frames) + " frames");
        }
        if (i > 0 && e.frame < events[i - 1].frame) throw ValidationError(who + ": events not sorted by frame");
        if (vocab_size && e.command >= vocab_size) {
            throw ValidationError(who + ": unknown command index " + std::to_string(e.command));
        }
    }
}

void check_frames(const ActionSequence& seq, const robot::RobotModel& model) {
    if (!(seq.rate_hz > 0.0)) throw ValidationError("sequence '" + seq.name + "': rate_hz must be positive");
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        const auto& frame = seq.frames[f];
        if (frame.size() != robot::kDof) {
            throw ValidationError("frame " + std::to_string(f) + " has " + std::to_string(frame.size()) +
                                  " joints, expected 17");
        }
        for (std::size_t j = 0; j < robot::kDof; ++j) {
            const auto& spec = model.joints()[j];
            if (!spec.within_limits(frame[j])) {
                throw ValidationError("frame " + std::to_string(f) + ": joint '" + spec.name + "' value " +
                                      std::to_string(frame[j]) + " outside limits");
            }
        }
    }
}

void fill_block(std::vector<double>& row, std::size_t begin, std::size_t size,
                std::size_t active) {
    for (std::size_t k = 0; k < size; ++k) row[begin + k] = (k == active) ? 1.0 : -1.0;
}

// Active command per frame under the step-function rule.
std::vector<std::size_t> active_commands(const std::vector<CommandEvent>& events, std::size_t frames) {
    std::vector<std::size_t> active(frames, 0);
    std::size_t next = 0, current = 0;
    for (std::size_t f = 0; f < frames; ++f) {
        while (next < events.size() && events[next].frame == f) current = events[next++].command;
        active[f] = current;
    }
    return active;
}

std::size_t argmax_block(const std::vector<double>& row, std::size_t begin, std::size_t size) {
    auto first = row.begin() + static_cast<std::ptrdiff_t>(begin);
    return static_cast<std::size_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(size)) - first);
}

std::vector<CommandEvent> decode_events(const std::vector<std::vector<double>>& rows, std::size_t begin,
                                        std::size_t size) {
    std::vector<CommandEvent> events;
    std::size_t current = 0;
    for (std::size_t f = 0; f < rows.size(); ++f) {
        const auto a = argmax_block(rows[f], begin, size);
        if (a != current) {
            events.push_back({f, a});
            current = a;
        }
    }
    return events;
}

}  // namespace

void validate(const ActionSequence& seq, const robot::RobotModel& model, const CommandVocabulary& vocab) {
    check_frames(seq, model);
    check_events(seq.facial_events, seq.frames.size(), vocab.facial().size(), "facial");
    check_events(seq.audio_events, seq.frames.size(), vocab.audio().size(), "audio");
}

std::vector<CommandEvent> canonical_events(const std::vector<CommandEvent>& events) {
    std::vector<CommandEvent> out;
    std::size_t current = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i + 1 < events.size() && events[i + 1].frame == events[i].frame) continue;
        if (events[i].command == current) continue;
        current = events[i].command;
        out.push_back(events[i]);
    }
    return out;
}

NormalizedSequence normalize(const ActionSequence& seq, const robot::RobotModel& model,
                             const CommandVocabulary& vocab) {
    validate(seq, model, vocab);
    const Layout layout(vocab);
    const auto facial = active_commands(seq.facial_events, seq.frames.size());
    const auto audio = active_commands(seq.audio_events, seq.frames.size());

    NormalizedSequence out;
    out.name = seq.name;
    out.rate_hz = seq.rate_hz;
    out.vectors.reserve(seq.frames.size());
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        std::vector<double> row(layout.dim());
        for (std::size_t j = 0; j < robot::kDof; ++j) {
            const auto& spec = model.joints()[j];
            const double half = 0.5 * (spec.max_angle - spec.min_angle);
            const double mid = 0.5 * (spec.max_angle + spec.min_angle);
            row[j] = std::clamp((seq.frames[f][j] - mid) / half, -1.0, 1.0);
        }
        fill_block(row, layout.facial_begin(), layout.facial, facial[f]);
        fill_block(row, layout.audio_begin(), layout.audio, audio[f]);
        out.vectors.push_back(std::move(row));
    }
    return out;
}

ActionSequence denormalize(const NormalizedSequence& nseq, const robot::RobotModel& model,
                           const CommandVocabulary& vocab) {
    const Layout layout(vocab);
    ActionSequence out;
    out.name = nseq.name;
    out.rate_hz = nseq.rate_hz;
    for (std::size_t f = 0; f < nseq.vectors.size(); ++f) {
        const auto& row = nseq.vectors[f];
        if (row.size() != layout.dim()) {
            throw ValidationError("step " + std::to_string(f) + " has dimension " + std::to_string(row.size()) +
                                  ", expected " + std::to_string(layout.dim()));
        }
        std::vector<double> frame(robot::kDof);
        for (std::size_t j = 0; j < robot::kDof; ++j) {
            const auto& spec = model.joints()[j];
            const double half = 0.5 * (spec.max_angle - spec.min_angle);
            const double mid = 0.5 * (spec.max_angle + spec.min_angle);
            frame[j] = spec.clamp(mid + half * row[j]);
        }
        out.frames.push_back(std::move(frame));
    }
    out.facial_events = decode_events(nseq.vectors, layout.facial_begin(), layout.facial);
    out.audio_events = decode_events(nseq.vectors, layout.audio_begin(), layout.audio);
    return out;
}

void Dataset::validate() const {
    const std::size_t d = dim();
    for (const auto& s : sequences) {
        for (std::size_t t = 0; t < s.vectors.size(); ++t) {
            if (s.vectors[t].size() != d) {
                throw ValidationError("sequence '" + s.name + "' step " + std::to_string(t) + " has dimension " +
                                      std::to_string(s.vectors[t].size()) + ", dataset D is " + std::to_string(d));
            }
            for (double v : s.vectors[t]) {
                if (!(v >= -1.0 && v <= 1.0)) {
                    throw ValidationError("sequence '" + s.name + "' step " + std::to_string(t) + " leaves [-1, 1]");
                }
            }
        }
    }
}

// ---- files ----

namespace {

json read_json(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw Error(std::string("cannot open ") + what + " file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed ") + what + " file '" + path + "': " + e.what());
    }
}

void write_json(const json& doc, const std::string& path, const char* what) {
    std::ofstream out(path);
    if (!out) throw Error(std::string("cannot write ") + what + " file '" + path + "'");
    out << doc.dump(1) << '\n';
}

void check_version(const json& doc, const std::string& path) {
    const int v = doc.value("format_version", -1);
    if (v != kFormatVersion) {
        throw ValidationError("file '" + path + "' has format_version " + std::to_string(v) + ", expected " +
                              std::to_string(kFormatVersion));
    }
}

json events_to_json(const std::vector<CommandEvent>& events) {
    json out = json::array();
    for (const auto& e : events) out.push_back({{"frame", e.frame}, {"command", e.command}});
    return out;
}

std::vector<CommandEvent> events_from_json(const json& j) {
    std::vector<CommandEvent> out;
    for (const auto& e : j) out.push_back({e.at("frame").get<std::size_t>(), e.at("command").get<std::size_t>()});
    return out;
}

json vocab_to_json(const CommandVocabulary& v) { return {{"facial", v.facial()}, {"audio", v.audio()}}; }

CommandVocabulary vocab_from_json(const json& j) {
    return CommandVocabulary(j.at("facial").get<std::vector<std::string>>(),
                             j.at("audio").get<std::vector<std::string>>());
}

json nseq_to_json(const NormalizedSequence& s) {
    return {{"name", s.name}, {"rate_hz", s.rate_hz}, {"vectors", s.vectors}};
}

NormalizedSequence nseq_from_json(const json& j) {
    NormalizedSequence s;
    s.name = j.at("name").get<std::string>();
    s.rate_hz = j.at("rate_hz").get<double>();
    s.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    return s;
}

}  // namespace

void save_action(const ActionSequence& seq, const robot::RobotModel& model, const std::string& path) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["name"] = seq.name;
    doc["rate_hz"] = seq.rate_hz;
    doc["joint_names"] = model.joint_names();
    doc["frames"] = seq.frames;
    doc["facial_events"] = events_to_json(seq.facial_events);
    doc["audio_events"] = events_to_json(seq.audio_events);
    write_json(doc, path, "action");
}

ActionSequence load_action(const std::string& path, const robot::RobotModel& model) {
    const json doc = read_json(path, "action");
    check_version(doc, path);
    ActionSequence seq;
    try {
        if (doc.at("joint_names").get<std::vector<std::string>>() != model.joint_names()) {
            throw ValidationError("action file '" + path + "': joint_names do not match model '" + model.name() + "'");
        }
        seq.name = doc.at("name").get<std::string>();
        seq.rate_hz = doc.at("rate_hz").get<double>();
        seq.frames = doc.at("frames").get<std::vector<std::vector<double>>>();
        seq.facial_events = events_from_json(doc.at("facial_events"));
        seq.audio_events = events_from_json(doc.at("audio_events"));
    } catch (const json::exception& e) {
        throw ValidationError("malformed action file '" + path + "': " + e.what());
    }
    try {
        check_frames(seq, model);
        check_events(seq.facial_events, seq.frames.size(), 0, "facial");
        check_events(seq.audio_events, seq.frames.size(), 0, "audio");
    } catch (const ValidationError& e) {
        throw ValidationError("action file '" + path + "': " + e.what());
    }
    return seq;
}

void save_vocabulary(const CommandVocabulary& vocab, const std::string& path) {
    json doc = vocab_to_json(vocab);
    doc["format_version"] = kFormatVersion;
    write_json(doc, path, "vocabulary");
}

CommandVocabulary load_vocabulary(const std::string& path) {
    const json doc = read_json(path, "vocabulary");
    check_version(doc, path);
    try {
        return vocab_from_json(doc);
    } catch (const json::exception& e) {
        throw ValidationError("malformed vocabulary file '" + path + "': " + e.what());
    }
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["model"] = dataset.model_name;
    doc["vocabulary"] = vocab_to_json(dataset.vocabulary);
    doc["dim"] = dataset.dim();
    json seqs = json::array();
    for (const auto& s : dataset.sequences) seqs.push_back(nseq_to_json(s));
    doc["sequences"] = std::move(seqs);
    write_json(doc, path, "dataset");
}

Dataset load_dataset(const std::string& path, const robot::RobotModel& model) {
    const json doc = read_json(path, "dataset");
    check_version(doc, path);
    Dataset ds;
    try {
        ds.vocabulary = vocab_from_json(doc.at("vocabulary"));
        ds.model_name = doc.value("model", model.name());
        if (doc.contains("sequences")) {
            for (const auto& s : doc["sequences"]) ds.sequences.push_back(nseq_from_json(s));
        }
        if (doc.contains("sequence_files")) {
            const auto base = std::filesystem::path(path).parent_path();
            for (const auto& f : doc["sequence_files"]) {
                const auto seq = load_action((base / f.get<std::string>()).string(), model);
                ds.sequences.push_back(normalize(seq, model, ds.vocabulary));
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed dataset file '" + path + "': " + e.what());
    }
    if (doc.contains("dim") && doc["dim"].get<std::size_t>() != ds.dim()) {
        throw ValidationError("dataset file '" + path + "': dim does not match its vocabulary");
    }
    ds.validate();
    return ds;
}

}  // namespace workbench::data
