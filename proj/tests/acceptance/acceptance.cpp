// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>

#include "../support.hpp"
#include "workbench/analysis.hpp"
#include "workbench/demo_corpus.hpp"
#include "workbench/ik_solver.hpp"
#include "workbench/mtrnn.hpp"
#include "workbench/recorder.hpp"
#include "workbench/servo_bus.hpp"

namespace fs = std::filesystem;
using namespace workbench;
using Eigen::MatrixXd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Training settings shared by the imitation run and the determinism run.
mtrnn::TrainConfig corpus_train_config() {
    mtrnn::TrainConfig tc;
    tc.optimizer = mtrnn::Optimizer::adam;
    tc.epochs = 20000;
    tc.learning_rate = 0.001;
    tc.report_interval = 1000;
    tc.closed_loop = 1.0;
    tc.seed = 1;
    return tc;
}

struct Corpus {
    robot::RobotModel model = robot::default_model();
    data::CommandVocabulary vocab = data::default_vocabulary();
    std::vector<data::ActionSequence> actions;
    data::Dataset dataset;
};

Corpus build_corpus() {
    Corpus c;
    bus::SimBus bus(c.model);
    bus.set_logging(false);
    c.actions = recorder::record_demo_corpus(bus, c.model, c.vocab);
    c.dataset.vocabulary = c.vocab;
    c.dataset.model_name = c.model.name();
    for (const auto& a : c.actions) c.dataset.sequences.push_back(data::normalize(a, c.model, c.vocab));
    return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
    testing::Gen gen(2024);
    data::Dataset ds;
    for (int s = 0; s < 2; ++s) {
        data::NormalizedSequence seq{"s" + std::to_string(s), 50.0, {}};
        for (int t = 0; t < 5; ++t) {
            std::vector<double> v(3);
            for (auto& x : v) x = gen.uniform(-0.9, 0.9);
            seq.vectors.push_back(v);
        }
        ds.sequences.push_back(seq);
    }
    mtrnn::MtrnnConfig cfg;
    cfg.n_io = 3;
    cfg.n_cf = 4;
    cfg.n_cs = 2;
    auto net = mtrnn::MtrnnNetwork::random(cfg, {"s0", "s1"}, 5);
    for (Eigen::Index i = 0; i < net.bias.size(); ++i) net.bias[i] = gen.uniform(-0.5, 0.5);
    for (Eigen::Index i = 0; i < net.initial_cs.size(); ++i) net.initial_cs.data()[i] = gen.uniform(-1, 1);

    mtrnn::Gradients g;
    mtrnn::loss_and_gradients(net, ds, g);
    const auto mask = mtrnn::connectivity_mask(cfg);
    const double h = 1e-4;
    double worst = 0.0;
    std::size_t checked = 0;
    auto probe = [&](double& p, double analytic) {
        const double keep = p;
        auto at = [&](double x) {
            p = x;
            return mtrnn::loss(net, ds);
        };
        // fourth-order central difference
        const double fd = (-at(keep + 2 * h) + 8 * at(keep + h) - 8 * at(keep - h) + at(keep - 2 * h)) / (12 * h);
        p = keep;
        worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8}));
        ++checked;
    };
    for (Eigen::Index i = 0; i < net.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < net.weights.cols(); ++j) {
            if (mask(i, j) != 0.0) probe(net.weights(i, j), g.weights(i, j));
        }
    }
    for (Eigen::Index i = 0; i < net.bias.size(); ++i) probe(net.bias[i], g.bias[i]);
    for (Eigen::Index i = 0; i < net.initial_cs.size(); ++i) probe(net.initial_cs.data()[i], g.initial_cs.data()[i]);
    return {worst < 1e-4, fmt("%zu parameters (W, b, initial Cs), worst relative error %.2e < 1e-4", checked, worst)};
}

struct Trained {
    Corpus corpus;
    mtrnn::MtrnnNetwork net;
    double seconds = 0.0;
};

Outcome imitation_fidelity(Trained& out) {
    out.corpus = build_corpus();
    const auto t0 = std::chrono::steady_clock::now();
    auto res = mtrnn::train(mtrnn::MtrnnConfig{}, out.corpus.dataset, corpus_train_config(),
                            [](const mtrnn::LossPoint& p) {
                                spdlog::info("epoch {} loss {:.6g}", p.epoch, p.loss);
                                return true;
                            });
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.net = std::move(res.net);

    const data::Layout layout(out.corpus.vocab);
    double worst = 0.0;
    std::string failures;
    for (std::size_t k = 0; k < out.corpus.dataset.sequences.size(); ++k) {
        const auto& teacher = out.corpus.dataset.sequences[k];
        const auto gen = mtrnn::generate_sequence(out.net, k, teacher.vectors.front(), teacher.vectors.size(),
                                                  teacher.rate_hz, teacher.name);
        const double rmse = analysis::trajectory_rmse(gen, teacher, layout).overall;
        const auto a = data::denormalize(gen, out.corpus.model, out.corpus.vocab);
        const auto b = data::denormalize(teacher, out.corpus.model, out.corpus.vocab);
        const bool events = a.facial_events == b.facial_events && a.audio_events == b.audio_events;
        worst = std::max(worst, rmse);
        spdlog::info("{}: rmse {:.4f} events {}", teacher.name, rmse, events ? "match" : "differ");
        if (rmse >= 0.1 || !events) failures += fmt(" %s(rmse %.3f%s)", teacher.name.c_str(), rmse, events ? "" : ", events differ");
    }
    const bool fast = out.seconds < 1800.0;
    return {failures.empty() && fast,
            fmt("11 sequences, worst closed-loop RMSE %.4f (< 0.1), final loss %.3g, training %.0f s (< 1800 s)", worst,
                out.net.training.final_loss, out.seconds) +
                (failures.empty() ? "" : "; failing:" + failures)};
}

Outcome context_self_organization(const Trained& t) {
    std::vector<MatrixXd> cs;
    for (std::size_t k = 0; k < t.corpus.dataset.sequences.size(); ++k) {
        const auto& teacher = t.corpus.dataset.sequences[k];
        const auto gen = mtrnn::generate_sequence(t.net, k, teacher.vectors.front(), teacher.vectors.size(),
                                                  teacher.rate_hz, teacher.name);
        cs.push_back(mtrnn::rollout_states(t.net, k, gen));
    }
    const auto two = analysis::pca(cs, 2);
    const double score = analysis::separation_score(two.projections);
    const auto n = static_cast<std::size_t>(cs.front().cols());
    const auto full = analysis::pca(cs, n);
    const double ortho = (full.components * full.components.transpose() -
                          MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)))
                             .cwiseAbs()
                             .maxCoeff();
    const auto back = analysis::reconstruct(full);
    double recon = 0.0;
    for (std::size_t k = 0; k < cs.size(); ++k) recon = std::max(recon, (back[k] - cs[k]).cwiseAbs().maxCoeff());
    return {score > 0.0 && ortho < 1e-9 && recon < 1e-9,
            fmt("silhouette %.3f (> 0), basis orthonormality error %.1e, reconstruction error %.1e (< 1e-9)", score,
                ortho, recon)};
}

Outcome kinesthetic_fidelity() {
    const auto model = robot::default_model();
    bus::SimBus bus(model);
    bus.transact(bus::make_torque(17, false), 1e-3);  // one joint already limp before recording
    std::vector<recorder::Waveform> waves;
    struct Spec {
        const char* joint;
        double offset, amp, hz, phase;
    };
    const Spec specs[] = {{"left_shoulder_pitch", -0.8, 0.9, 0.7, 0.0}, {"right_elbow", -1.0, 0.8, 1.3, 0.5},
                          {"neck_yaw", 0.0, 1.2, 0.4, 1.0}, {"left_ear", 0.0, 0.7, 2.0, 0.2}};
    for (const auto& s : specs) {
        recorder::Waveform w;
        w.joint = s.joint;
        w.kind = recorder::WaveKind::sine;
        w.offset = s.offset;
        w.amplitude = s.amp;
        w.frequency_hz = s.hz;
        w.phase = s.phase;
        waves.push_back(w);
    }
    recorder::ScriptedPuppet puppet(model, waves);
    recorder::RecordingConfig cfg;
    cfg.rate_hz = 50.0;
    cfg.duration = 4.0;
    const auto seq = recorder::kinesthetic_record(bus, model, puppet, cfg, "sine");
    double worst = 0.0;
    const auto names = model.joint_names();
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        const double t = static_cast<double>(f) / cfg.rate_hz;
        for (const auto& s : specs) {
            const auto j = static_cast<std::size_t>(std::find(names.begin(), names.end(), s.joint) - names.begin());
            const double analytic = s.offset + s.amp * std::sin(2 * std::numbers::pi * s.hz * t + s.phase);
            worst = std::max(worst, std::abs(seq.frames[f][j] - analytic));
        }
    }
    bool restored = true;
    for (auto id : bus.ids()) restored = restored && bus.state(id).torque_enabled == (id != 17);
    return {seq.frames.size() == 200 && worst <= 5e-4 + 1e-12 && restored,
            fmt("%zu frames at 50 Hz, worst deviation %.3f mrad (<= 0.5), torque %s", seq.frames.size(), worst * 1e3,
                restored ? "restored per joint" : "NOT restored")};
}

Outcome ik_correctness() {
    const double l1 = 0.3, l2 = 0.2;
    const auto chain = testing::planar_chain(l1, l2);
    ik::IkConfig cfg;
    cfg.population = 64;
    cfg.elites = 4;
    cfg.generations = 400;
    cfg.mutation_sigma = 0.5;
    cfg.tolerance = 1e-4;
    const std::vector<double> seed{0.0, 1.0};
    testing::Gen gen(100);
    double worst_tip = 0.0, worst_joint = 0.0;
    for (int n = 0; n < 100; ++n) {
        const Eigen::Vector3d target = testing::planar_reachable_target(gen, l1, l2, 0.25, 0.9);
        const std::vector<ik::IkObjective> obj{ik::IkObjective::position(target)};
        cfg.seed = static_cast<std::uint64_t>(n + 1);
        const auto sol = ik::solve(chain, obj, seed, cfg);
        const auto ref = testing::planar_ik(l1, l2, target.x(), target.y());
        worst_tip = std::max(worst_tip, sol.tip_error);
        worst_joint = std::max({worst_joint, std::abs(sol.angles[0] - ref[0]), std::abs(sol.angles[1] - ref[1])});
    }
    double worst_envelope = 0.0;
    for (int n = 0; n < 10; ++n) {
        const double r = gen.uniform(0.55, 1.0), phi = gen.uniform(-3.0, 3.0);
        const Eigen::Vector3d target(r * std::cos(phi), r * std::sin(phi), 0.0);
        const std::vector<ik::IkObjective> obj{ik::IkObjective::position(target)};
        const auto sol = ik::solve(chain, obj, seed, cfg);
        worst_envelope = std::max(worst_envelope, std::abs(sol.tip_error - (r - (l1 + l2))));
    }
    const std::vector<ik::IkObjective> obj{ik::IkObjective::position({0.1, 0.25, 0.0})};
    cfg.seed = 77;
    const auto a = ik::solve(chain, obj, seed, cfg), b = ik::solve(chain, obj, seed, cfg);
    const bool deterministic = a.angles == b.angles && a.best_fitness_history == b.best_fitness_history;
    return {worst_tip < 1e-3 && worst_joint < 1e-2 && worst_envelope < 5e-3 && deterministic,
            fmt("100 targets: worst tip %.2e m (< 1e-3), worst joint %.2e rad (< 1e-2); unreachable: worst "
                "|tip_error - envelope distance| %.2e m (< 5e-3); fixed seed %s",
                worst_tip, worst_joint, worst_envelope, deterministic ? "identical" : "DIFFERS")};
}

Outcome bus_protocol() {
    testing::Gen gen(4242);
    int round_trip_failures = 0;
    for (int n = 0; n < 10000; ++n) {
        bus::BusFrame f;
        f.id = static_cast<std::uint8_t>(gen.integer(0, 255));
        f.opcode = static_cast<std::uint8_t>(gen.integer(0, 255));
        f.payload.resize(static_cast<std::size_t>(gen.integer(0, static_cast<int>(bus::kMaxPayload))));
        for (auto& b : f.payload) b = static_cast<std::uint8_t>(gen.integer(0, 255));
        const auto d = bus::decode_frame(bus::encode_frame(f));
        if (!(d.frame == f) || !d.remainder.empty()) ++round_trip_failures;
    }
    std::vector<bus::BusFrame> fixed{bus::make_ping(1), bus::make_read_pos(12), bus::make_write_goal(5, -1.234),
                                     bus::make_torque(bus::kBroadcastId, false), bus::make_read_current(17)};
    const std::vector<std::pair<std::uint8_t, double>> goals{{1, 0.1}, {2, -0.2}, {3, 0.3}, {9, -2.5}};
    fixed.push_back(bus::make_sync_write(goals));
    std::size_t flips = 0, undetected = 0;
    for (const auto& f : fixed) {
        const auto bytes = bus::encode_frame(f);
        for (std::size_t bit = 0; bit < bytes.size() * 8; ++bit) {
            auto b = bytes;
            b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            ++flips;
            try {
                bus::decode_frame(b);
                ++undetected;
            } catch (const bus::FrameError&) {
            }
        }
    }
    // torque-off semantics through transact
    const auto model = robot::default_model();
    bus::SimBus sim(model);
    bool ok = true;
    ok &= sim.transact(bus::make_torque(6, false), 1e-3).has_value();
    ok &= sim.impose_position(6, 0.7);
    ok &= sim.transact(bus::make_write_goal(6, -0.5), 1e-3).has_value();
    for (int i = 0; i < 50; ++i) sim.transact(bus::make_ping(1), 0.02);
    auto pos = sim.transact(bus::make_read_pos(6), 1e-3);
    ok &= pos && bus::get_i16(pos->payload, 0) == 700;
    auto cur = sim.transact(bus::make_read_current(6), 1e-3);
    ok &= cur && bus::get_u16(cur->payload, 0) == 0;
    ok &= !sim.impose_position(5, 0.5);  // torque on: external force ignored
    sim.transact(bus::make_torque(6, true), 1e-3);
    sim.advance(1.0);
    pos = sim.transact(bus::make_read_pos(6), 1e-3);
    ok &= pos && bus::get_i16(pos->payload, 0) == 700;  // holds where it was left
    return {round_trip_failures == 0 && undetected == 0 && ok,
            fmt("10000 random frames, %d round-trip mismatches; %zu single-bit flips, %zu undetected; torque-off "
                "semantics %s",
                round_trip_failures, flips, undetected, ok ? "verified" : "VIOLATED")};
}

// Full file-based pipeline into `dir`; returns the file names written.
std::vector<std::string> run_pipeline(const fs::path& dir, int epochs) {
    fs::remove_all(dir);
    fs::create_directories(dir / "actions");
    const auto model = robot::default_model();
    const auto vocab = data::default_vocabulary();
    bus::SimBus bus(model);
    const auto actions = recorder::record_demo_corpus(bus, model, vocab);
    std::vector<std::string> files;
    for (const auto& a : actions) {
        data::save_action(a, model, (dir / "actions" / (a.name + ".act")).string());
        files.push_back("actions/" + a.name + ".act");
    }
    data::Dataset ds;
    ds.vocabulary = vocab;
    ds.model_name = model.name();
    for (const auto& a : actions) ds.sequences.push_back(data::normalize(data::load_action((dir / "actions" / (a.name + ".act")).string(), model), model, vocab));
    data::save_dataset(ds, (dir / "dataset.json").string());
    files.push_back("dataset.json");
    auto tc = corpus_train_config();
    tc.epochs = epochs;
    const auto loaded = data::load_dataset((dir / "dataset.json").string(), model);
    const auto res = mtrnn::train(mtrnn::MtrnnConfig{}, loaded, tc);
    mtrnn::save_checkpoint(res.net, (dir / "net.ckpt").string());
    mtrnn::save_loss_curve(res.curve, (dir / "net.loss").string());
    files.insert(files.end(), {"net.ckpt", "net.loss"});
    const auto net = mtrnn::load_checkpoint((dir / "net.ckpt").string());
    for (std::size_t k = 0; k < loaded.sequences.size(); ++k) {
        const auto& s = loaded.sequences[k];
        const auto g = mtrnn::generate_sequence(net, k, s.vectors.front(), s.vectors.size(), s.rate_hz, "gen_" + s.name);
        data::save_action(data::denormalize(g, model, vocab), model, (dir / ("gen_" + s.name + ".act")).string());
        files.push_back("gen_" + s.name + ".act");
    }
    return files;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome pipeline_determinism() {
    const auto base = fs::temp_directory_path() / "wb_acceptance_determinism";
    const int epochs = 300;
    const auto files = run_pipeline(base / "run1", epochs);
    run_pipeline(base / "run2", epochs);
    std::size_t differing = 0;
    for (const auto& f : files) {
        if (slurp(base / "run1" / f) != slurp(base / "run2" / f)) ++differing;
    }
    return {differing == 0, fmt("record -> normalize -> train (%d epochs) -> generate twice: %zu files, %zu differ",
                                epochs, files.size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(argc > 1 && std::string(argv[1]) == "-v" ? spdlog::level::info : spdlog::level::warn);
    int failures = 0;
    auto report = [&](const char* name, const std::function<Outcome()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failures;
        std::printf("%s  %-28s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), s);
        std::fflush(stdout);
    };

    report("gradient-correctness", [] {
        const auto t0 = std::chrono::steady_clock::now();
        auto o = gradient_check();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.pass = o.pass && s < 10.0;
        return o;
    });
    report("bus-protocol", bus_protocol);
    report("kinesthetic-fidelity", kinesthetic_fidelity);
    report("ik-correctness", ik_correctness);
    report("pipeline-determinism", pipeline_determinism);
    Trained trained;
    bool have_net = false;
    report("imitation-fidelity", [&] {
        auto o = imitation_fidelity(trained);
        have_net = true;
        return o;
    });
    report("context-self-organization", [&] {
        if (!have_net) return Outcome{false, "no trained network"};
        return context_self_organization(trained);
    });
    std::printf("%d criteria failed\n", failures);
    return failures;
}
