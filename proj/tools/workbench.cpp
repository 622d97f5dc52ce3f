// workbench: pipeline stages (record, annotate, normalize, train, generate, replay, analyze, ik-solve)
// and the teaching endpoint (serve).

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "workbench/action_data.hpp"
#include "workbench/analysis.hpp"
#include "workbench/demo_corpus.hpp"
#include "workbench/ik_solver.hpp"
#include "workbench/mtrnn.hpp"
#include "workbench/recorder.hpp"
#include "workbench/robot_model.hpp"
#include "workbench/server.hpp"
#include "workbench/service.hpp"
#include "workbench/servo_bus.hpp"

namespace fs = std::filesystem;
using namespace workbench;

namespace {

struct Globals {
    std::string model_path;
    std::string vocab_path;
    std::uint64_t seed = 1;
    double rate_hz = 50.0;
    bool verbose = false;

    robot::RobotModel model() const {
        return model_path.empty() ? robot::default_model() : robot::load_model(model_path);
    }
    data::CommandVocabulary vocabulary() const {
        return vocab_path.empty() ? data::default_vocabulary() : data::load_vocabulary(vocab_path);
    }
};

void write_bus_log(const bus::SimBus& bus, const std::string& path) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw Error("cannot write bus log '" + path + "'");
    out << bus.hex_dump();
}

// record -------------------------------------------------------------------

struct RecordArgs {
    std::string puppet, targets, chain = "arm_right", events, out, out_dir, bus_log, name;
    double duration = 2.0;
    bool demo = false;
    int population = 64, generations = 100;
};

int run_record(const Globals& g, const RecordArgs& a) {
    const auto model = g.model();
    const auto vocab = g.vocabulary();
    if (a.demo) {
        if (a.out_dir.empty()) throw ValidationError("--demo-corpus needs --out-dir");
        bus::SimBus bus(model);
        const auto seqs = recorder::record_demo_corpus(bus, model, vocab, g.rate_hz);
        fs::create_directories(a.out_dir);
        for (const auto& s : seqs) data::save_action(s, model, (fs::path(a.out_dir) / (s.name + ".act")).string());
        write_bus_log(bus, a.bus_log);
        std::cout << "recorded " << seqs.size() << " actions into " << a.out_dir << "\n";
        return 0;
    }
    if (a.out.empty()) throw ValidationError("--out is required");
    if (a.puppet.empty() == a.targets.empty()) throw ValidationError("give exactly one of --puppet or --targets");

    recorder::RecordingConfig cfg;
    cfg.rate_hz = g.rate_hz;
    cfg.duration = a.duration;
    const auto name = a.name.empty() ? fs::path(a.out).stem().string() : a.name;

    data::ActionSequence seq;
    if (!a.puppet.empty()) {
        auto puppet = recorder::load_puppet(a.puppet, model);
        bus::SimBus bus(model);
        seq = recorder::kinesthetic_record(bus, model, puppet, cfg, name);
        write_bus_log(bus, a.bus_log);
    } else {
        ik::IkConfig ik_cfg;
        ik_cfg.seed = g.seed;
        ik_cfg.population = a.population;
        ik_cfg.generations = a.generations;
        seq = recorder::endeffector_record(model, a.chain, recorder::load_targets(a.targets), ik_cfg, cfg, {}, name);
    }
    if (!a.events.empty()) seq = recorder::annotate(seq, recorder::load_annotations(a.events), vocab);
    data::save_action(seq, model, a.out);
    std::cout << "recorded " << seq.frames.size() << " frames to " << a.out << "\n";
    return 0;
}

// annotate / normalize -----------------------------------------------------

int run_annotate(const Globals& g, const std::string& in, const std::string& events, const std::string& out) {
    const auto model = g.model();
    auto seq = data::load_action(in, model);
    seq = recorder::annotate(seq, recorder::load_annotations(events), g.vocabulary());
    data::save_action(seq, model, out.empty() ? in : out);
    std::cout << "facial events " << seq.facial_events.size() << ", audio events " << seq.audio_events.size() << "\n";
    return 0;
}

int run_normalize(const Globals& g, std::vector<std::string> actions, const std::string& dir, const std::string& out) {
    const auto model = g.model();
    data::Dataset ds;
    ds.vocabulary = g.vocabulary();
    ds.model_name = model.name();
    if (!dir.empty()) {
        std::vector<std::string> found;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".act") found.push_back(entry.path().string());
        }
        std::sort(found.begin(), found.end());
        actions.insert(actions.end(), found.begin(), found.end());
    }
    if (actions.empty()) throw ValidationError("no action files given (--actions or --dir)");
    for (const auto& path : actions) {
        const auto seq = data::load_action(path, model);
        data::validate(seq, model, ds.vocabulary);
        ds.sequences.push_back(data::normalize(seq, model, ds.vocabulary));
    }
    data::save_dataset(ds, out);
    std::cout << "dataset with " << ds.sequences.size() << " sequences, D = " << ds.dim() << "\n";
    return 0;
}

// train / generate ---------------------------------------------------------

struct TrainArgs {
    std::string dataset, out, loss_curve, optimizer = "adam";
    mtrnn::TrainConfig cfg;
    mtrnn::MtrnnConfig net;
};

int run_train(const Globals& g, TrainArgs a) {
    const auto model = g.model();
    const auto ds = data::load_dataset(a.dataset, model);
    a.cfg.seed = g.seed;
    if (a.optimizer == "adam") {
        a.cfg.optimizer = mtrnn::Optimizer::adam;
    } else if (a.optimizer == "momentum") {
        a.cfg.optimizer = mtrnn::Optimizer::momentum;
    } else {
        throw ValidationError("--optimizer must be adam or momentum");
    }
    auto result = mtrnn::train(a.net, ds, a.cfg, [&](const mtrnn::LossPoint& p) {
        spdlog::info("epoch {} loss {:.6g}", p.epoch, p.loss);
        return true;
    });
    mtrnn::save_checkpoint(result.net, a.out);
    const auto curve_path = a.loss_curve.empty() ? fs::path(a.out).replace_extension(".loss").string() : a.loss_curve;
    mtrnn::save_loss_curve(result.curve, curve_path);
    std::cout << "final loss " << result.net.training.final_loss << " after " << result.net.training.epochs
              << " epochs\n";
    return 0;
}

std::size_t resolve_sequence(const mtrnn::MtrnnNetwork& net, const std::string& which) {
    if (!which.empty() && std::all_of(which.begin(), which.end(), [](char c) { return std::isdigit(c); })) {
        const auto k = std::stoul(which);
        if (k >= net.sequence_names.size()) throw ValidationError("--sequence " + which + " out of range");
        return k;
    }
    return net.sequence_index(which);
}

int run_generate(const Globals& g, const std::string& net_path, const std::string& dataset_path,
                 const std::string& which, std::size_t steps, const std::string& out) {
    const auto model = g.model();
    const auto vocab = g.vocabulary();
    const auto net = mtrnn::load_checkpoint(net_path);
    const auto k = resolve_sequence(net, which);

    std::vector<double> posture;
    std::size_t length = steps;
    double rate = g.rate_hz;
    if (!dataset_path.empty()) {
        const auto ds = data::load_dataset(dataset_path, model);
        if (ds.sequences.size() != net.sequence_names.size()) {
            throw ValidationError("dataset has " + std::to_string(ds.sequences.size()) + " sequences, checkpoint " +
                                  std::to_string(net.sequence_names.size()));
        }
        posture = ds.sequences[k].vectors.front();
        rate = ds.sequences[k].rate_hz;
        if (length == 0) length = ds.sequences[k].vectors.size();
    } else {
        // home pose with neutral/silent active
        data::ActionSequence home{"home", rate, {model.home_angles()}, {}, {}};
        posture = data::normalize(home, model, vocab).vectors.front();
    }
    if (length == 0) throw ValidationError("--steps is required without --dataset");
    const auto nseq = mtrnn::generate_sequence(net, k, posture, length, rate, "generated_" + net.sequence_names[k]);
    data::save_action(data::denormalize(nseq, model, vocab), model, out);
    std::cout << "generated " << length << " frames for '" << net.sequence_names[k] << "'\n";
    return 0;
}

// replay -------------------------------------------------------------------

int run_replay(const Globals& g, const std::string& action_path, const std::string& log_path,
               const std::string& bus_log) {
    const auto model = g.model();
    const auto vocab = g.vocabulary();
    const auto seq = data::load_action(action_path, model);
    bus::SimBus bus(model);

    std::ofstream file;
    if (!log_path.empty()) {
        file.open(log_path);
        if (!file) throw Error("cannot write replay log '" + log_path + "'");
    }
    std::ostream& out = log_path.empty() ? std::cout : file;

    const double period = 1.0 / seq.rate_hz;
    const double dt = period / static_cast<double>(model.joints().size() + 1);
    bus.transact(bus::make_torque(bus::kBroadcastId, true), dt);

    out << "# t";
    for (const auto& n : model.joint_names()) out << ' ' << n;
    out << "\n";
    std::size_t fi = 0, ai = 0;
    char buf[64];
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        const double t = static_cast<double>(f) * period;
        for (; fi < seq.facial_events.size() && seq.facial_events[fi].frame == f; ++fi) {
            std::snprintf(buf, sizeof buf, "%.4f", t);
            out << "event " << buf << " facial " << vocab.facial()[seq.facial_events[fi].command] << "\n";
        }
        for (; ai < seq.audio_events.size() && seq.audio_events[ai].frame == f; ++ai) {
            std::snprintf(buf, sizeof buf, "%.4f", t);
            out << "event " << buf << " audio " << vocab.audio()[seq.audio_events[ai].command] << "\n";
        }
        std::vector<std::pair<std::uint8_t, double>> goals;
        for (std::size_t j = 0; j < model.joints().size(); ++j) {
            goals.emplace_back(static_cast<std::uint8_t>(model.joints()[j].id), seq.frames[f][j]);
        }
        bus.transact(bus::make_sync_write(goals), dt);
        std::snprintf(buf, sizeof buf, "%.4f", t);
        out << buf;
        for (const auto& spec : model.joints()) {
            const auto id = static_cast<std::uint8_t>(spec.id);
            const auto reply = bus.transact(bus::make_read_pos(id), dt);
            if (!reply) throw Error("bus timeout reading joint " + spec.name);
            std::snprintf(buf, sizeof buf, " %.4f", bus::angle_from_wire(bus::get_i16(reply->payload, 0)));
            out << buf;
        }
        out << "\n";
    }
    write_bus_log(bus, bus_log);
    if (!log_path.empty()) std::cout << "replayed " << seq.frames.size() << " frames\n";
    return 0;
}

// analyze ------------------------------------------------------------------

int run_analyze(const Globals& g, const std::string& net_path, const std::string& dataset_path,
                const std::string& out_dir, std::size_t k) {
    const auto model = g.model();
    const auto net = mtrnn::load_checkpoint(net_path);
    const auto ds = data::load_dataset(dataset_path, model);
    if (ds.sequences.size() != net.sequence_names.size()) throw ValidationError("dataset and checkpoint disagree");
    const data::Layout layout(ds.vocabulary);

    std::vector<Eigen::MatrixXd> cs;
    std::vector<analysis::RmseReport> reports;
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
        const auto& teacher = ds.sequences[s];
        const auto gen = mtrnn::generate_sequence(net, s, teacher.vectors.front(), teacher.vectors.size(),
                                                  teacher.rate_hz, teacher.name);
        cs.push_back(mtrnn::rollout_states(net, s, gen));  // closed-loop context trajectory
        reports.push_back(analysis::trajectory_rmse(gen, teacher, layout));
    }
    const auto result = analysis::pca(cs, k);
    fs::create_directories(out_dir);
    analysis::write_projections_csv(result, net.sequence_names, (fs::path(out_dir) / "pca_projections.csv").string());
    analysis::write_variance_csv(result, (fs::path(out_dir) / "variance.csv").string());
    analysis::write_rmse_csv(net.sequence_names, reports, (fs::path(out_dir) / "rmse_report.csv").string());
    std::cout << "separation score " << analysis::separation_score(result.projections) << "\n";
    return 0;
}

// ik-solve -----------------------------------------------------------------

struct IkArgs {
    std::string chain = "arm_right";
    std::vector<double> target, orientation, seed_pose;
    double position_weight = 1.0, orientation_weight = 0.1, margin_weight = 0.0, displacement_weight = 0.0;
    ik::IkConfig cfg;
};

int run_ik(const Globals& g, IkArgs a) {
    const auto model = g.model();
    const auto chain = model.chain(a.chain);
    a.cfg.seed = g.seed;
    std::vector<ik::IkObjective> objectives;
    if (!a.target.empty()) objectives.push_back(ik::IkObjective::position({a.target[0], a.target[1], a.target[2]},
                                                                           a.position_weight));
    if (!a.orientation.empty()) {
        Eigen::Quaterniond q(a.orientation[0], a.orientation[1], a.orientation[2], a.orientation[3]);
        if (q.norm() < 1e-12) throw ValidationError("--orientation must be a nonzero quaternion");
        objectives.push_back(ik::IkObjective::orientation(q.normalized(), a.orientation_weight));
    }
    if (a.margin_weight > 0) objectives.push_back(ik::IkObjective::joint_limit_margin(a.margin_weight));
    if (a.displacement_weight > 0) objectives.push_back(ik::IkObjective::displacement(a.displacement_weight));
    if (objectives.empty()) throw ValidationError("give --target and/or --orientation");

    std::vector<double> seed = a.seed_pose;
    if (seed.empty()) {
        for (const auto& j : chain.joints) seed.push_back(j.clamp(0.0));
    }
    if (seed.size() != chain.size()) {
        throw ValidationError("--seed-pose needs " + std::to_string(chain.size()) + " values for chain " + a.chain);
    }
    const auto sol = ik::solve(chain, objectives, seed, a.cfg);
    nlohmann::json out{{"chain", a.chain},
                       {"angles", sol.angles},
                       {"fitness", sol.fitness},
                       {"tip_error", sol.tip_error},
                       {"converged", sol.converged},
                       {"generations", sol.generations}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

// serve --------------------------------------------------------------------

service::Server* g_server = nullptr;

int run_serve(const Globals& g, std::uint16_t port, const std::string& data_dir, double tick_hz,
              const std::vector<std::string>& preload) {
    const auto model = g.model();
    service::ServiceOptions opts;
    opts.vocabulary = g.vocabulary();
    opts.data_dir = data_dir;
    opts.sim_dt = 1.0 / tick_hz;
    service::Service svc(model, opts);
    for (const auto& path : preload) svc.add_action(data::load_action(path, model));
    service::Server server(svc, port, tick_hz);
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    std::cout << "listening on port " << server.port() << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Imitation-learning workbench for a simulated 17-DoF expressive humanoid"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--model", g.model_path, "robot model file (default: built-in mk1)");
    app.add_option("--vocab", g.vocab_path, "command vocabulary file (default: built-in)");
    app.add_option("--seed", g.seed, "rng seed");
    app.add_option("--rate-hz", g.rate_hz, "sample rate")->check(CLI::PositiveNumber);
    app.add_flag("-v,--verbose", g.verbose);

    RecordArgs rec;
    auto* record = app.add_subcommand("record", "record an action from a scripted puppet or IK targets");
    record->add_option("--puppet", rec.puppet, "scripted puppet file (kinesthetic)");
    record->add_option("--targets", rec.targets, "timed end-effector targets file (IK-driven)");
    record->add_option("--chain", rec.chain, "chain for --targets");
    record->add_option("--duration", rec.duration, "seconds")->check(CLI::PositiveNumber);
    record->add_option("--events", rec.events, "timed command annotations to apply");
    record->add_option("--name", rec.name, "action name (default: output stem)");
    record->add_option("--out", rec.out, "output action file");
    record->add_option("--population", rec.population);
    record->add_option("--generations", rec.generations);
    record->add_flag("--demo-corpus", rec.demo, "record the built-in 11-action corpus");
    record->add_option("--out-dir", rec.out_dir, "output directory for --demo-corpus");
    record->add_option("--bus-log", rec.bus_log, "write the bus hex dump here");

    std::string ann_in, ann_events, ann_out;
    auto* annotate = app.add_subcommand("annotate", "merge timed facial/audio commands into an action file");
    annotate->add_option("--in", ann_in)->required();
    annotate->add_option("--events", ann_events)->required();
    annotate->add_option("--out", ann_out, "default: overwrite --in");

    std::vector<std::string> norm_actions;
    std::string norm_dir, norm_out;
    auto* normalize = app.add_subcommand("normalize", "build a dataset file from action files");
    normalize->add_option("--actions", norm_actions);
    normalize->add_option("--dir", norm_dir, "use every .act file here, sorted by name");
    normalize->add_option("--out", norm_out)->required();

    TrainArgs tr;
    tr.cfg.learning_rate = 0.001;
    tr.cfg.closed_loop = 1.0;
    auto* train = app.add_subcommand("train", "train an MTRNN on a dataset");
    train->add_option("--dataset", tr.dataset)->required();
    train->add_option("--out", tr.out)->required();
    train->add_option("--loss-curve", tr.loss_curve, "default: <out>.loss");
    train->add_option("--epochs", tr.cfg.epochs);
    train->add_option("--lr", tr.cfg.learning_rate)->capture_default_str();
    train->add_option("--momentum", tr.cfg.momentum);
    train->add_option("--clip-norm", tr.cfg.clip_norm);
    train->add_option("--report-interval", tr.cfg.report_interval);
    train->add_option("--optimizer", tr.optimizer, "adam | momentum");
    train->add_option("--closed-loop", tr.cfg.closed_loop, "0 = teacher forcing, 1 = own outputs as inputs")
        ->capture_default_str();
    train->add_option("--cf", tr.net.n_cf);
    train->add_option("--cs", tr.net.n_cs);
    train->add_option("--tau-io", tr.net.tau_io);
    train->add_option("--tau-cf", tr.net.tau_cf);
    train->add_option("--tau-cs", tr.net.tau_cs);

    std::string gen_net, gen_dataset, gen_seq, gen_out;
    std::size_t gen_steps = 0;
    auto* generate = app.add_subcommand("generate", "closed-loop generation from a learned initial Cs");
    generate->add_option("--net", gen_net)->required();
    generate->add_option("--dataset", gen_dataset, "initial posture and length from the teacher sequence");
    generate->add_option("--sequence", gen_seq, "index or name")->required();
    generate->add_option("--steps", gen_steps, "frames (default: teacher length)");
    generate->add_option("--out", gen_out)->required();

    std::string rep_action, rep_log, rep_bus_log;
    auto* replay = app.add_subcommand("replay", "drive the simulated bus with an action and log joint states");
    replay->add_option("action", rep_action)->required();
    replay->add_option("--log", rep_log, "default: stdout");
    replay->add_option("--bus-log", rep_bus_log);

    std::string an_net, an_dataset, an_out = ".";
    std::size_t an_k = 3;
    auto* analyze = app.add_subcommand("analyze", "PCA of context states and RMSE report as CSV files");
    analyze->add_option("--net", an_net)->required();
    analyze->add_option("--dataset", an_dataset)->required();
    analyze->add_option("--out-dir", an_out);
    analyze->add_option("--components", an_k);

    IkArgs ik;
    auto* iks = app.add_subcommand("ik-solve", "solve IK for one chain");
    iks->add_option("--chain", ik.chain);
    iks->add_option("--target", ik.target, "x y z")->expected(3);
    iks->add_option("--orientation", ik.orientation, "w x y z")->expected(4);
    iks->add_option("--seed-pose", ik.seed_pose);
    iks->add_option("--position-weight", ik.position_weight);
    iks->add_option("--orientation-weight", ik.orientation_weight);
    iks->add_option("--margin-weight", ik.margin_weight);
    iks->add_option("--displacement-weight", ik.displacement_weight);
    iks->add_option("--population", ik.cfg.population);
    iks->add_option("--elites", ik.cfg.elites);
    iks->add_option("--generations", ik.cfg.generations);
    iks->add_option("--sigma", ik.cfg.mutation_sigma);
    iks->add_option("--sigma-decay", ik.cfg.sigma_decay);
    iks->add_option("--tolerance", ik.cfg.tolerance);

    std::uint16_t port = 8765;
    std::string data_dir;
    double tick_hz = 50.0;
    std::vector<std::string> preload;
    auto* serve = app.add_subcommand("serve", "run the line-delimited JSON endpoint");
    serve->add_option("--port", port, "0 picks a free port");
    serve->add_option("--data-dir", data_dir, "where finished recordings are saved");
    serve->add_option("--tick-hz", tick_hz)->check(CLI::PositiveNumber);
    serve->add_option("--actions", preload, "action files to load at startup");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);
    if (serve->parsed()) spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (record->parsed()) return run_record(g, rec);
        if (annotate->parsed()) return run_annotate(g, ann_in, ann_events, ann_out);
        if (normalize->parsed()) return run_normalize(g, norm_actions, norm_dir, norm_out);
        if (train->parsed()) return run_train(g, tr);
        if (generate->parsed()) return run_generate(g, gen_net, gen_dataset, gen_seq, gen_steps, gen_out);
        if (replay->parsed()) return run_replay(g, rep_action, rep_log, rep_bus_log);
        if (analyze->parsed()) return run_analyze(g, an_net, an_dataset, an_out, an_k);
        if (iks->parsed()) return run_ik(g, ik);
        if (serve->parsed()) return run_serve(g, port, data_dir, tick_hz, preload);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
