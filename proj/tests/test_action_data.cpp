#include <doctest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "workbench/action_data.hpp"

using namespace workbench;
using namespace workbench::data;
namespace fs = std::filesystem;

namespace {

// Random sequence with canonical events (each event changes the active command).
ActionSequence random_sequence(testing::Gen& gen, const robot::RobotModel& model, const CommandVocabulary& vocab) {
    ActionSequence seq;
    seq.name = "rand";
    seq.rate_hz = 50.0;
    const int frames = gen.integer(1, 60);
    for (int f = 0; f < frames; ++f) {
        std::vector<double> frame;
        for (const auto& j : model.joints()) frame.push_back(gen.uniform(j.min_angle, j.max_angle));
        seq.frames.push_back(frame);
    }
    auto events = [&](std::size_t n_commands) {
        std::vector<CommandEvent> out;
        std::size_t active = 0;
        for (int f = 0; f < frames; ++f) {
            if (gen.integer(0, 9) != 0) continue;
            std::size_t c = static_cast<std::size_t>(gen.integer(0, static_cast<int>(n_commands) - 1));
            if (c == active) continue;
            out.push_back({static_cast<std::size_t>(f), c});
            active = c;
        }
        return out;
    };
    seq.facial_events = events(vocab.facial().size());
    seq.audio_events = events(vocab.audio().size());
    return seq;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "wb_action_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("vocabulary reserves index 0 and rejects repeats") {
    const auto v = default_vocabulary();
    CHECK(v.facial()[0] == "neutral");
    CHECK(v.audio()[0] == "silent");
    CHECK(Layout(v).dim() == 36);
    CHECK(v.index_of(CommandKind::audio, "laugh") == 7);
    CHECK_THROWS_AS(v.index_of(CommandKind::facial, "laugh"), ValidationError);
    CHECK_THROWS_AS(CommandVocabulary({"smile"}, {"silent"}), ValidationError);
    CHECK_THROWS_AS(CommandVocabulary({"neutral", "a", "a"}, {"silent"}), ValidationError);
}

TEST_CASE("normalize matches a hand-built encoding") {
    const auto model = robot::default_model();
    const auto vocab = default_vocabulary();
    ActionSequence seq{"s", 50.0, {}, {{2, 3}}, {{1, 5}, {3, 0}}};
    for (int f = 0; f < 4; ++f) {
        std::vector<double> frame;
        for (const auto& j : model.joints()) frame.push_back(std::min(j.max_angle, j.min_angle + (j.max_angle - j.min_angle) * f / 3.0));
        seq.frames.push_back(frame);
    }
    const auto n = normalize(seq, model, vocab);
    REQUIRE(n.vectors.size() == 4);
    const Layout lay(vocab);
    for (int f = 0; f < 4; ++f) {
        const auto& v = n.vectors[static_cast<std::size_t>(f)];
        REQUIRE(v.size() == 36);
        for (std::size_t j = 0; j < robot::kDof; ++j) CHECK(v[j] == doctest::Approx(-1.0 + 2.0 * f / 3.0));
        const std::size_t facial_active = f >= 2 ? 3 : 0;
        const std::size_t audio_active = (f == 1 || f == 2) ? 5 : 0;
        for (std::size_t c = 0; c < lay.facial; ++c) CHECK(v[lay.facial_begin() + c] == (c == facial_active ? 1.0 : -1.0));
        for (std::size_t c = 0; c < lay.audio; ++c) CHECK(v[lay.audio_begin() + c] == (c == audio_active ? 1.0 : -1.0));
    }
}

TEST_CASE("property: denormalize inverts normalize for canonical events") {
    const auto model = robot::default_model();
    const auto vocab = default_vocabulary();
    testing::Gen gen(23);
    for (int n = 0; n < 200; ++n) {
        const auto seq = random_sequence(gen, model, vocab);
        const auto norm = normalize(seq, model, vocab);
        for (const auto& v : norm.vectors) {
            for (double x : v) CHECK((x >= -1.0 - 1e-12 && x <= 1.0 + 1e-12));
        }
        const auto back = denormalize(norm, model, vocab);
        CHECK(back.facial_events == seq.facial_events);
        CHECK(back.audio_events == seq.audio_events);
        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            for (std::size_t j = 0; j < robot::kDof; ++j) CHECK(back.frames[f][j] == doctest::Approx(seq.frames[f][j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("denormalize clips joints and emits an event exactly on argmax change") {
    const auto model = robot::default_model();
    const auto vocab = default_vocabulary();
    const Layout lay(vocab);
    NormalizedSequence n{"g", 50.0, {}};
    for (int f = 0; f < 5; ++f) {
        std::vector<double> v(lay.dim(), -0.9);
        v[0] = 1.7;  // beyond the range
        v[lay.facial_begin() + (f < 3 ? 2 : 4)] = 0.3;
        v[lay.audio_begin() + 0] = 0.2;
        n.vectors.push_back(v);
    }
    const auto a = denormalize(n, model, vocab);
    CHECK(a.frames[0][0] == model.joints()[0].max_angle);
    CHECK(a.facial_events == std::vector<CommandEvent>{{0, 2}, {3, 4}});
    CHECK(a.audio_events.empty());
}

TEST_CASE("canonical_events drops no-op events") {
    std::vector<CommandEvent> ev{{0, 0}, {2, 3}, {2, 4}, {5, 4}, {7, 1}};
    CHECK(canonical_events(ev) == std::vector<CommandEvent>{{2, 4}, {7, 1}});
}

TEST_CASE("validate names the offending frame or event") {
    const auto model = robot::default_model();
    const auto vocab = default_vocabulary();
    ActionSequence seq{"v", 50.0, {model.home_angles(), model.home_angles()}, {}, {}};
    CHECK_NOTHROW(validate(seq, model, vocab));
    auto bad = seq;
    bad.frames[1][0] = 99.0;
    CHECK_THROWS_WITH_AS(validate(bad, model, vocab), doctest::Contains("frame 1"), ValidationError);
    bad = seq;
    bad.audio_events = {{5, 1}};
    CHECK_THROWS_AS(validate(bad, model, vocab), ValidationError);
    bad = seq;
    bad.facial_events = {{0, 40}};
    CHECK_THROWS_AS(validate(bad, model, vocab), ValidationError);
}

TEST_CASE("action file round trip and schema") {
    const auto model = robot::default_model();
    const auto vocab = default_vocabulary();
    testing::Gen gen(4);
    const auto seq = random_sequence(gen, model, vocab);
    const auto path = scratch("rt.act").string();
    save_action(seq, model, path);
    CHECK(load_action(path, model) == seq);

    std::ifstream in(path);
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc["format_version"] == 1);
    CHECK(doc["joint_names"].size() == 17);
    for (const char* key : {"name", "rate_hz", "frames", "facial_events", "audio_events"}) CHECK(doc.contains(key));
}

TEST_CASE("action file errors name the problem") {
    const auto model = robot::default_model();
    CHECK_THROWS_WITH(load_action("/nonexistent/x.act", model), doctest::Contains("/nonexistent/x.act"));
    const auto path = scratch("bad.act");
    {
        std::ofstream(path) << R"({"format_version": 2})";
    }
    CHECK_THROWS_AS(load_action(path.string(), model), ValidationError);
    ActionSequence seq{"n", 50.0, {model.home_angles()}, {}, {}};
    save_action(seq, model, path.string());
    std::ifstream in(path);
    auto doc = nlohmann::json::parse(in);
    doc["joint_names"][0] = "wrong";
    std::ofstream(path) << doc.dump();
    CHECK_THROWS_AS(load_action(path.string(), model), ValidationError);
}

TEST_CASE("dataset round trip, inline and by reference") {
    const auto model = robot::default_model();
    const auto vocab = default_vocabulary();
    testing::Gen gen(8);
    Dataset ds;
    ds.model_name = model.name();
    std::vector<ActionSequence> actions;
    for (int i = 0; i < 3; ++i) {
        auto a = random_sequence(gen, model, vocab);
        a.name = "a" + std::to_string(i);
        actions.push_back(a);
        ds.sequences.push_back(normalize(a, model, vocab));
    }
    const auto inline_path = scratch("inline.json").string();
    save_dataset(ds, inline_path);
    const auto back = load_dataset(inline_path, model);
    CHECK(back.vocabulary == ds.vocabulary);
    CHECK(back.sequences == ds.sequences);

    nlohmann::json doc{{"format_version", 1},
                       {"vocabulary", {{"facial", vocab.facial()}, {"audio", vocab.audio()}}},
                       {"sequence_files", nlohmann::json::array()}};
    for (const auto& a : actions) {
        save_action(a, model, scratch(a.name + ".act").string());
        doc["sequence_files"].push_back(a.name + ".act");
    }
    const auto ref_path = scratch("byref.json");
    std::ofstream(ref_path) << doc.dump();
    const auto byref = load_dataset(ref_path.string(), model);
    REQUIRE(byref.sequences.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(byref.sequences[i].vectors.size() == ds.sequences[i].vectors.size());

    Dataset bad = ds;
    bad.sequences[0].vectors[0].pop_back();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
