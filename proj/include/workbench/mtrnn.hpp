#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "workbench/action_data.hpp"
#include "workbench/error.hpp"

namespace workbench::mtrnn {

/// Neuron layout: [IO | Cf | Cs]. IO<->Cf and Cf<->Cs are connected both ways,
/// Cf and Cs are recurrent within their group, IO and Cs never connect directly.
struct MtrnnConfig {
    std::size_t n_io = 0;
    std::size_t n_cf = 60;
    std::size_t n_cs = 20;
    double tau_io = 2.0;
    double tau_cf = 5.0;
    double tau_cs = 70.0;

    std::size_t size() const { return n_io + n_cf + n_cs; }
    std::size_t cf_begin() const { return n_io; }
    std::size_t cs_begin() const { return n_io + n_cf; }
    void validate() const;
    bool operator==(const MtrnnConfig&) const = default;
};

/// 1 where a connection exists (row = receiving neuron, column = sending neuron).
Eigen::MatrixXd connectivity_mask(const MtrnnConfig& cfg);
Eigen::VectorXd time_constants(const MtrnnConfig& cfg);

struct TrainingMetadata {
    int epochs = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
};

struct MtrnnNetwork {
    MtrnnConfig config;
    Eigen::MatrixXd weights;     // size x size, zero where the mask is zero
    Eigen::VectorXd bias;        // size
    Eigen::MatrixXd initial_cs;  // one row of Cs potentials per trained sequence
    std::vector<std::string> sequence_names;
    TrainingMetadata training;

    /// All-zero parameters, one zero initial-Cs row per sequence name.
    static MtrnnNetwork zeros(const MtrnnConfig& cfg, std::vector<std::string> sequence_names);
    /// Weights uniform in +-1/sqrt(fan-in) on the mask, zero bias and initial Cs.
    static MtrnnNetwork random(const MtrnnConfig& cfg, std::vector<std::string> sequence_names, std::uint64_t seed);

    std::size_t sequence_index(const std::string& name) const;
};

struct NeuronState {
    Eigen::VectorXd u;  // potentials
    Eigen::VectorXd y;  // tanh(u)
};

/// u = 0 except the Cs block.
NeuronState initial_state(const MtrnnNetwork& net, const Eigen::VectorXd& cs_potentials);
NeuronState initial_state(const MtrnnNetwork& net, std::size_t sequence_id);

struct StepResult {
    NeuronState state;
    Eigen::VectorXd output;  // IO activations
};

/// Leaky integrator: u <- (1 - 1/tau) u + (1/tau)(W y' + b), with the IO part of y' clamped to `input`.
StepResult forward_step(const MtrnnNetwork& net, const NeuronState& state, const Eigen::VectorXd& input);

enum class Optimizer { momentum, adam };

struct TrainConfig {
    Optimizer optimizer = Optimizer::momentum;
    int epochs = 20000;
    double learning_rate = 0.002;
    double momentum = 0.9;
    double clip_norm = 1.0;
    std::uint64_t seed = 1;
    int report_interval = 100;
    /// 0 = full teacher forcing, 1 = inputs after step 0 are the network's own outputs.
    double closed_loop = 0.0;

    void validate() const;
};

struct Gradients {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Eigen::MatrixXd initial_cs;

    double norm() const;
};

/// Mean over sequences of the mean over steps of the per-component squared error between
/// the output at step t and teacher vector t + 1. Inputs are teacher-forced unless
/// `closed_loop` > 0 (see TrainConfig).
double loss(const MtrnnNetwork& net, const data::Dataset& dataset, double closed_loop = 0.0);
/// Same loss with its exact gradient by backpropagation through time.
double loss_and_gradients(const MtrnnNetwork& net, const data::Dataset& dataset, Gradients& grads,
                          double closed_loop = 0.0);

struct LossPoint {
    int epoch = 0;
    double loss = 0.0;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

struct TrainResult {
    MtrnnNetwork net;
    std::vector<LossPoint> curve;
};

/// Returning false from the callback stops training early.
using ProgressCallback = std::function<bool(const LossPoint&)>;

/// Gradient descent with momentum on W (masked), b and each sequence's initial Cs.
TrainResult train(MtrnnNetwork net, const data::Dataset& dataset, const TrainConfig& cfg,
                  const ProgressCallback& progress = {});
/// Builds a network for `dataset` (n_io = D) seeded from cfg.seed, then trains it.
TrainResult train(const MtrnnConfig& net_cfg, const data::Dataset& dataset, const TrainConfig& cfg,
                  const ProgressCallback& progress = {});

/// Closed loop: step 0 gets `initial_posture`, each later step gets the previous output.
/// Returns the `steps` outputs.
std::vector<Eigen::VectorXd> generate(const MtrnnNetwork& net, const Eigen::VectorXd& initial_cs,
                                      const Eigen::VectorXd& initial_posture, std::size_t steps);
std::vector<Eigen::VectorXd> generate(const MtrnnNetwork& net, std::size_t sequence_id,
                                      const Eigen::VectorXd& initial_posture, std::size_t steps);

/// A trajectory aligned with a teacher of `length` frames: the initial posture followed by
/// the first length - 1 closed-loop outputs.
data::NormalizedSequence generate_sequence(const MtrnnNetwork& net, std::size_t sequence_id,
                                           const std::vector<double>& initial_posture, std::size_t length,
                                           double rate_hz, const std::string& name);

/// Teacher-forced pass; row t holds the Cs activations after step t.
Eigen::MatrixXd rollout_states(const MtrnnNetwork& net, std::size_t sequence_id,
                               const data::NormalizedSequence& teacher);

void save_checkpoint(const MtrnnNetwork& net, const std::string& path);
MtrnnNetwork load_checkpoint(const std::string& path);

/// Two columns: epoch loss.
void save_loss_curve(const std::vector<LossPoint>& curve, const std::string& path);

}  // namespace workbench::mtrnn
