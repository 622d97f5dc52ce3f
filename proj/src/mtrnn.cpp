#include "workbench/mtrnn.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

namespace workbench::mtrnn {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void MtrnnConfig::validate() const {
    if (n_io == 0 || n_cf == 0 || n_cs == 0) throw ValidationError("MTRNN neuron counts must be positive");
    if (!(tau_io >= 1.0 && tau_cf >= 1.0 && tau_cs >= 1.0)) throw ValidationError("MTRNN time constants must be >= 1");
}

MatrixXd connectivity_mask(const MtrnnConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(cfg.size());
    const auto io = static_cast<Eigen::Index>(cfg.n_io);
    const auto cf = static_cast<Eigen::Index>(cfg.n_cf);
    const auto cs = static_cast<Eigen::Index>(cfg.n_cs);
    MatrixXd mask = MatrixXd::Zero(n, n);
    mask.block(0, io, io, cf).setOnes();            // Cf -> IO
    mask.block(io, 0, cf, io).setOnes();            // IO -> Cf
    mask.block(io, io, cf, cf).setOnes();           // Cf -> Cf
    mask.block(io, io + cf, cf, cs).setOnes();      // Cs -> Cf
    mask.block(io + cf, io, cs, cf).setOnes();      // Cf -> Cs
    mask.block(io + cf, io + cf, cs, cs).setOnes(); // Cs -> Cs
    return mask;
}

VectorXd time_constants(const MtrnnConfig& cfg) {
    VectorXd tau(static_cast<Eigen::Index>(cfg.size()));
    tau.segment(0, static_cast<Eigen::Index>(cfg.n_io)).setConstant(cfg.tau_io);
    tau.segment(static_cast<Eigen::Index>(cfg.cf_begin()), static_cast<Eigen::Index>(cfg.n_cf)).setConstant(cfg.tau_cf);
    tau.segment(static_cast<Eigen::Index>(cfg.cs_begin()), static_cast<Eigen::Index>(cfg.n_cs)).setConstant(cfg.tau_cs);
    return tau;
}

MtrnnNetwork MtrnnNetwork::zeros(const MtrnnConfig& cfg, std::vector<std::string> sequence_names) {
    cfg.validate();
    MtrnnNetwork net;
    net.config = cfg;
    const auto n = static_cast<Eigen::Index>(cfg.size());
    net.weights = MatrixXd::Zero(n, n);
    net.bias = VectorXd::Zero(n);
    net.initial_cs = MatrixXd::Zero(static_cast<Eigen::Index>(sequence_names.size()),
                                    static_cast<Eigen::Index>(cfg.n_cs));
    net.sequence_names = std::move(sequence_names);
    return net;
}

MtrnnNetwork MtrnnNetwork::random(const MtrnnConfig& cfg, std::vector<std::string> sequence_names,
                                  std::uint64_t seed) {
    auto net = zeros(cfg, std::move(sequence_names));
    const MatrixXd mask = connectivity_mask(cfg);
    std::mt19937_64 rng(seed);
    for (Eigen::Index i = 0; i < net.weights.rows(); ++i) {
        const double fan_in = mask.row(i).sum();
        const double scale = 1.0 / std::sqrt(std::max(fan_in, 1.0));
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (Eigen::Index j = 0; j < net.weights.cols(); ++j) {
            const double w = dist(rng);
            net.weights(i, j) = mask(i, j) != 0.0 ? w : 0.0;
        }
    }
    net.training.seed = seed;
    return net;
}

std::size_t MtrnnNetwork::sequence_index(const std::string& name) const {
    for (std::size_t k = 0; k < sequence_names.size(); ++k) {
        if (sequence_names[k] == name) return k;
    }
    throw ValidationError("network has no sequence named '" + name + "'");
}

NeuronState initial_state(const MtrnnNetwork& net, const VectorXd& cs_potentials) {
    const auto& cfg = net.config;
    if (static_cast<std::size_t>(cs_potentials.size()) != cfg.n_cs) {
        throw ValidationError("initial Cs vector has " + std::to_string(cs_potentials.size()) + " entries, expected " +
                              std::to_string(cfg.n_cs));
    }
    NeuronState s;
    s.u = VectorXd::Zero(static_cast<Eigen::Index>(cfg.size()));
    s.u.tail(static_cast<Eigen::Index>(cfg.n_cs)) = cs_potentials;
    s.y = s.u.array().tanh();
    return s;
}

NeuronState initial_state(const MtrnnNetwork& net, std::size_t sequence_id) {
    if (sequence_id >= static_cast<std::size_t>(net.initial_cs.rows())) {
        throw ValidationError("unknown sequence id " + std::to_string(sequence_id));
    }
    return initial_state(net, VectorXd(net.initial_cs.row(static_cast<Eigen::Index>(sequence_id)).transpose()));
}

StepResult forward_step(const MtrnnNetwork& net, const NeuronState& state, const VectorXd& input) {
    const auto& cfg = net.config;
    const auto n = static_cast<Eigen::Index>(cfg.size());
    const auto io = static_cast<Eigen::Index>(cfg.n_io);
    if (input.size() != io) {
        throw ValidationError("input has dimension " + std::to_string(input.size()) + ", network expects " +
                              std::to_string(io));
    }
    if (state.u.size() != n || state.y.size() != n) throw ValidationError("neuron state does not match network size");
    const VectorXd tau = time_constants(cfg);

    VectorXd z = state.y;
    z.head(io) = input;
    StepResult r;
    r.state.u = (1.0 - tau.array().inverse()) * state.u.array() +
                tau.array().inverse() * (net.weights * z + net.bias).array();
    r.state.y = r.state.u.array().tanh();
    r.output = r.state.y.head(io);
    return r;
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw ValidationError("epochs must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
    if (!(clip_norm > 0.0)) throw ValidationError("clip norm must be positive");
    if (!(closed_loop >= 0.0 && closed_loop <= 1.0)) throw ValidationError("closed_loop must be in [0, 1]");
    if (report_interval <= 0) throw ValidationError("report interval must be positive");
}

double Gradients::norm() const {
    return std::sqrt(weights.squaredNorm() + bias.squaredNorm() + initial_cs.squaredNorm());
}

namespace {

struct Dims {
    Eigen::Index n, io, ctx, cs;
};

Dims dims_of(const MtrnnConfig& cfg) {
    return {static_cast<Eigen::Index>(cfg.size()), static_cast<Eigen::Index>(cfg.n_io),
            static_cast<Eigen::Index>(cfg.n_cf + cfg.n_cs), static_cast<Eigen::Index>(cfg.n_cs)};
}

void check_dataset(const MtrnnNetwork& net, const data::Dataset& dataset) {
    if (dataset.sequences.empty()) throw ValidationError("dataset is empty");
    // the network only sees vectors; their width need not come from a command vocabulary
    for (const auto& s : dataset.sequences) {
        for (const auto& v : s.vectors) {
            if (v.size() != net.config.n_io) {
                throw ValidationError("sequence '" + s.name + "' has D = " + std::to_string(v.size()) +
                                      " but network n_io = " + std::to_string(net.config.n_io));
            }
        }
    }
    if (static_cast<std::size_t>(net.initial_cs.rows()) != dataset.sequences.size()) {
        throw ValidationError("network holds " + std::to_string(net.initial_cs.rows()) +
                              " initial Cs rows but dataset has " + std::to_string(dataset.sequences.size()) +
                              " sequences");
    }
    for (const auto& s : dataset.sequences) {
        if (s.vectors.size() < 2) throw ValidationError("sequence '" + s.name + "' needs at least 2 steps");
    }
}

MatrixXd teacher_matrix(const data::NormalizedSequence& seq, Eigen::Index dim) {
    MatrixXd x(dim, static_cast<Eigen::Index>(seq.vectors.size()));
    for (std::size_t t = 0; t < seq.vectors.size(); ++t) {
        if (static_cast<Eigen::Index>(seq.vectors[t].size()) != dim) {
            throw ValidationError("sequence '" + seq.name + "' step " + std::to_string(t) + " has wrong dimension");
        }
        x.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const VectorXd>(seq.vectors[t].data(), dim);
    }
    return x;
}

// One sequence: forward pass, loss contribution scaled by `weight`, and (optionally) gradient accumulation.
// From step 1 on, the IO input mixes teacher and previous output: (1 - alpha) x_t + alpha y_io(t-1).
double sequence_pass(const MtrnnNetwork& net, const MatrixXd& x, std::size_t seq_id, const VectorXd& tau_inv,
                     double alpha, double weight, Gradients* grads) {
    const Dims d = dims_of(net.config);
    const Eigen::Index steps = x.cols() - 1;
    const VectorXd leak = VectorXd::Ones(d.n) - tau_inv;

    const NeuronState init = initial_state(net, seq_id);
    MatrixXd z(d.n, steps), y(d.n, steps);
    VectorXd u = init.u;
    VectorXd y_prev = init.y;
    double sq = 0.0;
    for (Eigen::Index t = 0; t < steps; ++t) {
        z.col(t) = y_prev;
        if (t > 0 && alpha != 0.0) {
            z.col(t).head(d.io) = (1.0 - alpha) * x.col(t) + alpha * y_prev.head(d.io);
        } else {
            z.col(t).head(d.io) = x.col(t);
        }
        u = leak.cwiseProduct(u) + tau_inv.cwiseProduct(net.weights * z.col(t) + net.bias);
        y.col(t) = u.array().tanh();
        y_prev = y.col(t);
        sq += (y.col(t).head(d.io) - x.col(t + 1)).squaredNorm();
    }
    const double scale = weight / (static_cast<double>(steps) * static_cast<double>(d.io));
    if (!grads) return scale * sq;

    // e.col(t) = dL/d(W z_t + b) = delta_t / tau
    MatrixXd e(d.n, steps);
    VectorXd delta_next = VectorXd::Zero(d.n);
    VectorXd e_next = VectorXd::Zero(d.n);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        VectorXd g = VectorXd::Zero(d.n);
        g.head(d.io) = 2.0 * scale * (y.col(t).head(d.io) - x.col(t + 1));
        if (t + 1 < steps) {
            const VectorXd back = net.weights.transpose() * e_next;
            g.tail(d.ctx) += back.tail(d.ctx);
            g.head(d.io) += alpha * back.head(d.io);
        }
        const VectorXd delta = g.cwiseProduct((1.0 - y.col(t).array().square()).matrix()) +
                               leak.cwiseProduct(delta_next);
        e.col(t) = tau_inv.cwiseProduct(delta);
        delta_next = delta;
        e_next = e.col(t);
    }
    grads->weights.noalias() += e * z.transpose();
    grads->bias += e.rowwise().sum();

    // Initial potentials feed step 0 through the leak and, for context units, through W.
    VectorXd g0 = VectorXd::Zero(d.n);
    g0.tail(d.ctx) = (net.weights.transpose() * e.col(0)).tail(d.ctx);
    const VectorXd du0 = g0.cwiseProduct((1.0 - init.y.array().square()).matrix()) + leak.cwiseProduct(delta_next);
    grads->initial_cs.row(static_cast<Eigen::Index>(seq_id)) += du0.tail(d.cs).transpose();
    return scale * sq;
}

double dataset_pass(const MtrnnNetwork& net, const data::Dataset& dataset, double alpha, Gradients* grads) {
    check_dataset(net, dataset);
    const VectorXd tau_inv = time_constants(net.config).array().inverse();
    const Eigen::Index dim = static_cast<Eigen::Index>(net.config.n_io);
    const double weight = 1.0 / static_cast<double>(dataset.sequences.size());
    if (grads) {
        grads->weights = MatrixXd::Zero(net.weights.rows(), net.weights.cols());
        grads->bias = VectorXd::Zero(net.bias.size());
        grads->initial_cs = MatrixXd::Zero(net.initial_cs.rows(), net.initial_cs.cols());
    }
    double total = 0.0;
    for (std::size_t k = 0; k < dataset.sequences.size(); ++k) {
        total += sequence_pass(net, teacher_matrix(dataset.sequences[k], dim), k, tau_inv, alpha, weight, grads);
    }
    if (grads) grads->weights = grads->weights.cwiseProduct(connectivity_mask(net.config));
    return total;
}

}  // namespace

double loss(const MtrnnNetwork& net, const data::Dataset& dataset, double closed_loop) {
    return dataset_pass(net, dataset, closed_loop, nullptr);
}

double loss_and_gradients(const MtrnnNetwork& net, const data::Dataset& dataset, Gradients& grads,
                          double closed_loop) {
    return dataset_pass(net, dataset, closed_loop, &grads);
}

TrainResult train(MtrnnNetwork net, const data::Dataset& dataset, const TrainConfig& cfg,
                  const ProgressCallback& progress) {
    cfg.validate();
    check_dataset(net, dataset);
    const MatrixXd mask = connectivity_mask(net.config);

    Gradients grads;
    Gradients velocity;
    velocity.weights = MatrixXd::Zero(net.weights.rows(), net.weights.cols());
    velocity.bias = VectorXd::Zero(net.bias.size());
    velocity.initial_cs = MatrixXd::Zero(net.initial_cs.rows(), net.initial_cs.cols());
    Gradients second = velocity;

    TrainResult result;
    auto report = [&](int epoch, double value) {
        if (!std::isfinite(value)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                                  std::to_string(value) + "); lower the learning rate or clip norm");
        }
        LossPoint p{epoch, value};
        result.curve.push_back(p);
        return !progress || progress(p);
    };

    int epoch = 0;
    for (; epoch < cfg.epochs; ++epoch) {
        const double value = loss_and_gradients(net, dataset, grads, cfg.closed_loop);
        if (!std::isfinite(value)) report(epoch, value);
        if (epoch % cfg.report_interval == 0 && !report(epoch, value)) break;

        const double norm = grads.norm();
        const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        if (cfg.optimizer == Optimizer::adam) {
            // momentum doubles as beta1
            const double b1 = cfg.momentum, b2 = 0.999, eps = 1e-8;
            const double c1 = 1.0 - std::pow(b1, epoch + 1), c2 = 1.0 - std::pow(b2, epoch + 1);
            auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
                m = b1 * m + (1.0 - b1) * clip * g;
                v = b2 * v + (1.0 - b2) * (clip * g).cwiseAbs2();
                param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
            };
            update(net.weights, velocity.weights, second.weights, grads.weights);
            update(net.bias, velocity.bias, second.bias, grads.bias);
            update(net.initial_cs, velocity.initial_cs, second.initial_cs, grads.initial_cs);
            net.weights = net.weights.cwiseProduct(mask);
            continue;
        }
        const double step = cfg.learning_rate * clip;
        velocity.weights = cfg.momentum * velocity.weights - step * grads.weights;
        velocity.bias = cfg.momentum * velocity.bias - step * grads.bias;
        velocity.initial_cs = cfg.momentum * velocity.initial_cs - step * grads.initial_cs;
        net.weights += velocity.weights;
        net.weights = net.weights.cwiseProduct(mask);
        net.bias += velocity.bias;
        net.initial_cs += velocity.initial_cs;
    }

    const double final_loss = loss(net, dataset, cfg.closed_loop);
    if (result.curve.empty() || result.curve.back().epoch != epoch) {
        report(epoch, final_loss);
    } else {
        result.curve.back().loss = final_loss;
    }
    net.training.epochs = epoch;
    net.training.final_loss = final_loss;
    net.training.seed = cfg.seed;
    result.net = std::move(net);
    return result;
}

TrainResult train(const MtrnnConfig& net_cfg, const data::Dataset& dataset, const TrainConfig& cfg,
                  const ProgressCallback& progress) {
    MtrnnConfig c = net_cfg;
    if (dataset.sequences.empty() || dataset.sequences.front().vectors.empty()) throw ValidationError("dataset is empty");
    c.n_io = dataset.sequences.front().vectors.front().size();
    std::vector<std::string> names;
    for (const auto& s : dataset.sequences) names.push_back(s.name);
    auto net = MtrnnNetwork::random(c, std::move(names), cfg.seed);
    return train(std::move(net), dataset, cfg, progress);
}

std::vector<VectorXd> generate(const MtrnnNetwork& net, const VectorXd& initial_cs, const VectorXd& initial_posture,
                               std::size_t steps) {
    if (static_cast<std::size_t>(initial_posture.size()) != net.config.n_io) {
        throw ValidationError("initial posture has dimension " + std::to_string(initial_posture.size()) +
                              ", network expects " + std::to_string(net.config.n_io));
    }
    if ((initial_posture.array().abs() > 1.0).any()) throw ValidationError("initial posture must lie in [-1, 1]");
    NeuronState state = initial_state(net, initial_cs);
    std::vector<VectorXd> outputs;
    outputs.reserve(steps);
    VectorXd input = initial_posture;
    for (std::size_t t = 0; t < steps; ++t) {
        auto r = forward_step(net, state, input);
        state = std::move(r.state);
        input = r.output;
        outputs.push_back(std::move(r.output));
    }
    return outputs;
}

std::vector<VectorXd> generate(const MtrnnNetwork& net, std::size_t sequence_id, const VectorXd& initial_posture,
                               std::size_t steps) {
    if (sequence_id >= static_cast<std::size_t>(net.initial_cs.rows())) {
        throw ValidationError("unknown sequence id " + std::to_string(sequence_id));
    }
    return generate(net, VectorXd(net.initial_cs.row(static_cast<Eigen::Index>(sequence_id)).transpose()),
                    initial_posture, steps);
}

data::NormalizedSequence generate_sequence(const MtrnnNetwork& net, std::size_t sequence_id,
                                           const std::vector<double>& initial_posture, std::size_t length,
                                           double rate_hz, const std::string& name) {
    const VectorXd posture = Eigen::Map<const VectorXd>(initial_posture.data(),
                                                        static_cast<Eigen::Index>(initial_posture.size()));
    data::NormalizedSequence out;
    out.name = name;
    out.rate_hz = rate_hz;
    if (length == 0) return out;
    out.vectors.push_back(initial_posture);
    for (const auto& o : generate(net, sequence_id, posture, length - 1)) {
        out.vectors.emplace_back(o.data(), o.data() + o.size());
    }
    return out;
}

MatrixXd rollout_states(const MtrnnNetwork& net, std::size_t sequence_id, const data::NormalizedSequence& teacher) {
    const auto cs = static_cast<Eigen::Index>(net.config.n_cs);
    const MatrixXd x = teacher_matrix(teacher, static_cast<Eigen::Index>(net.config.n_io));
    NeuronState state = initial_state(net, sequence_id);
    MatrixXd states(x.cols(), cs);
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        state = forward_step(net, state, x.col(t)).state;
        states.row(t) = state.y.tail(cs).transpose();
    }
    return states;
}

// ---- checkpoint ----

namespace {

json matrix_to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw ValidationError(std::string("checkpoint field '") + what + "' has the wrong row count");
    }
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw ValidationError(std::string("checkpoint field '") + what + "' has the wrong column count");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

}  // namespace

void save_checkpoint(const MtrnnNetwork& net, const std::string& path) {
    const auto& c = net.config;
    json doc;
    doc["format_version"] = 1;
    doc["config"] = {{"n_io", c.n_io},     {"n_cf", c.n_cf},     {"n_cs", c.n_cs},
                     {"tau_io", c.tau_io}, {"tau_cf", c.tau_cf}, {"tau_cs", c.tau_cs}};
    doc["weights"] = matrix_to_json(net.weights);
    doc["mask"] = matrix_to_json(connectivity_mask(c));
    doc["bias"] = std::vector<double>(net.bias.data(), net.bias.data() + net.bias.size());
    doc["sequence_names"] = net.sequence_names;
    doc["initial_cs"] = matrix_to_json(net.initial_cs);
    doc["training"] = {
        {"epochs", net.training.epochs}, {"final_loss", net.training.final_loss}, {"seed", net.training.seed}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    out << doc.dump(1) << '\n';
}

MtrnnNetwork load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    try {
        const json doc = json::parse(in);
        if (doc.value("format_version", 0) != 1) throw ValidationError("checkpoint '" + path + "': unsupported format_version");
        const auto& jc = doc.at("config");
        MtrnnConfig c;
        c.n_io = jc.at("n_io").get<std::size_t>();
        c.n_cf = jc.at("n_cf").get<std::size_t>();
        c.n_cs = jc.at("n_cs").get<std::size_t>();
        c.tau_io = jc.at("tau_io").get<double>();
        c.tau_cf = jc.at("tau_cf").get<double>();
        c.tau_cs = jc.at("tau_cs").get<double>();
        auto net = MtrnnNetwork::zeros(c, doc.at("sequence_names").get<std::vector<std::string>>());
        const auto n = static_cast<Eigen::Index>(c.size());
        net.weights = matrix_from_json(doc.at("weights"), n, n, "weights");
        const MatrixXd mask = matrix_from_json(doc.at("mask"), n, n, "mask");
        if (mask != connectivity_mask(c)) throw ValidationError("checkpoint '" + path + "': mask does not match config");
        if ((net.weights.array() * (1.0 - mask.array())).abs().maxCoeff() != 0.0) {
            throw ValidationError("checkpoint '" + path + "': weights are non-zero outside the connectivity mask");
        }
        const auto b = doc.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(b.size()) != n) throw ValidationError("checkpoint '" + path + "': bias size mismatch");
        net.bias = Eigen::Map<const VectorXd>(b.data(), n);
        net.initial_cs = matrix_from_json(doc.at("initial_cs"), net.initial_cs.rows(),
                                          static_cast<Eigen::Index>(c.n_cs), "initial_cs");
        const auto& jt = doc.at("training");
        net.training.epochs = jt.at("epochs").get<int>();
        net.training.final_loss = jt.at("final_loss").get<double>();
        net.training.seed = jt.at("seed").get<std::uint64_t>();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed checkpoint '" + path + "': " + e.what());
    }
}

void save_loss_curve(const std::vector<LossPoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write loss curve '" + path + "'");
    out << std::setprecision(17);
    for (const auto& p : curve) out << p.epoch << ' ' << p.loss << '\n';
}

}  // namespace workbench::mtrnn
