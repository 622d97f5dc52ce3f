#include "workbench/ik_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace workbench::ik {

IkObjective IkObjective::position(const Eigen::Vector3d& target, double weight) {
    IkObjective o;
    o.kind = ObjectiveKind::position;
    o.weight = weight;
    o.target_position = target;
    return o;
}

IkObjective IkObjective::orientation(const Eigen::Quaterniond& target, double weight) {
    IkObjective o;
    o.kind = ObjectiveKind::orientation;
    o.weight = weight;
    o.target_orientation = target.normalized();
    return o;
}

IkObjective IkObjective::joint_limit_margin(double weight) {
    IkObjective o;
    o.kind = ObjectiveKind::joint_limit_margin;
    o.weight = weight;
    return o;
}

IkObjective IkObjective::displacement(double weight) {
    IkObjective o;
    o.kind = ObjectiveKind::displacement;
    o.weight = weight;
    return o;
}

void IkConfig::validate() const {
    if (population < 2) throw ValidationError("IK population must be at least 2");
    if (!(elites > 0 && elites < population)) throw ValidationError("IK elites must satisfy 0 < elites < population");
    if (generations < 0) throw ValidationError("IK generations must be non-negative");
    if (!(mutation_sigma > 0.0)) throw ValidationError("IK mutation_sigma must be positive");
    if (!(sigma_decay > 0.0 && sigma_decay <= 1.0)) throw ValidationError("IK sigma_decay must be in (0, 1]");
    if (!(tolerance >= 0.0)) throw ValidationError("IK tolerance must be non-negative");
}

namespace {

void check_objectives(std::span<const IkObjective> objectives) {
    if (objectives.empty()) throw ValidationError("IK needs at least one objective");
    for (const auto& o : objectives) {
        if (!std::isfinite(o.weight) || o.weight < 0.0) throw ValidationError("IK objective weights must be finite and >= 0");
    }
}

const IkObjective* position_objective(std::span<const IkObjective> objectives) {
    for (const auto& o : objectives) {
        if (o.kind == ObjectiveKind::position) return &o;
    }
    return nullptr;
}

struct Individual {
    std::vector<double> genes;
    double fitness = 0.0;
};

}  // namespace

double fitness(const robot::ChainView& chain, std::span<const IkObjective> objectives,
               std::span<const double> seed_pose, std::span<const double> angles) {
    const auto tip = robot::forward_kinematics(chain, angles);
    double total = 0.0;
    for (const auto& o : objectives) {
        double value = 0.0;
        switch (o.kind) {
            case ObjectiveKind::position:
                value = (tip.position - o.target_position).squaredNorm();
                break;
            case ObjectiveKind::orientation: {
                const double dot = std::min(1.0, std::abs(tip.orientation.normalized().dot(o.target_orientation)));
                const double angle = 2.0 * std::acos(dot);
                value = angle * angle;
                break;
            }
            case ObjectiveKind::joint_limit_margin:
                for (std::size_t i = 0; i < chain.size(); ++i) {
                    const auto& j = chain.joints[i];
                    const double centre = 0.5 * (j.max_angle + j.min_angle);
                    const double half = 0.5 * (j.max_angle - j.min_angle);
                    const double excess = std::max(0.0, std::abs(angles[i] - centre) - 0.9 * half);
                    value += excess * excess;
                }
                break;
            case ObjectiveKind::displacement:
                for (std::size_t i = 0; i < chain.size(); ++i) {
                    const double d = angles[i] - seed_pose[i];
                    value += d * d;
                }
                break;
        }
        total += o.weight * value;
    }
    return total;
}

IkSolution solve(const robot::ChainView& chain, std::span<const IkObjective> objectives,
                 std::span<const double> seed_pose, const IkConfig& cfg) {
    cfg.validate();
    check_objectives(objectives);
    if (chain.size() == 0) throw ValidationError("IK chain '" + chain.name + "' has no joints");
    if (seed_pose.size() != chain.size()) throw ValidationError("IK seed pose size does not match chain");
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (!chain.joints[i].within_limits(seed_pose[i])) {
            throw ValidationError("IK seed pose outside limits of joint '" + chain.joints[i].name + "'");
        }
    }

    const std::size_t n = chain.size();
    const auto pop_size = static_cast<std::size_t>(cfg.population);
    const auto mu = static_cast<std::size_t>(cfg.elites);
    const IkObjective* target = position_objective(objectives);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<std::size_t> pick(0, mu - 1);

    auto clip = [&](std::vector<double>& genes) {
        for (std::size_t i = 0; i < n; ++i) genes[i] = chain.joints[i].clamp(genes[i]);
    };
    auto evaluate = [&](Individual& ind) { ind.fitness = fitness(chain, objectives, seed_pose, ind.genes); };
    auto tip_error = [&](const std::vector<double>& genes) {
        if (!target) return 0.0;
        return (robot::forward_kinematics(chain, genes).position - target->target_position).norm();
    };
    // Stable on ties so equal-fitness individuals keep their order.
    auto rank = [](std::vector<Individual>& pop) {
        std::stable_sort(pop.begin(), pop.end(),
                         [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; });
    };

    std::vector<Individual> pop(pop_size);
    pop[0].genes.assign(seed_pose.begin(), seed_pose.end());
    for (std::size_t k = 1; k < pop_size; ++k) {
        pop[k].genes.assign(seed_pose.begin(), seed_pose.end());
        for (double& g : pop[k].genes) g += cfg.mutation_sigma * gauss(rng);
        clip(pop[k].genes);
    }
    for (auto& ind : pop) evaluate(ind);
    rank(pop);

    IkSolution sol;
    sol.best_fitness_history.push_back(pop[0].fitness);
    bool converged = target && tip_error(pop[0].genes) < cfg.tolerance;

    double sigma = cfg.mutation_sigma;
    for (int g = 0; g < cfg.generations && !converged; ++g) {
        for (std::size_t k = mu; k < pop_size; ++k) {
            const auto& a = pop[pick(rng)].genes;
            const auto& b = pop[pick(rng)].genes;
            auto& child = pop[k].genes;
            for (std::size_t i = 0; i < n; ++i) {
                child[i] = coin(rng) ? a[i] : b[i];
                child[i] += sigma * gauss(rng);
            }
            clip(child);
            evaluate(pop[k]);
        }
        rank(pop);
        sigma *= cfg.sigma_decay;
        sol.generations = g + 1;
        sol.best_fitness_history.push_back(pop[0].fitness);
        converged = target && tip_error(pop[0].genes) < cfg.tolerance;
    }

    sol.angles = pop[0].genes;
    sol.fitness = pop[0].fitness;
    sol.tip_error = tip_error(sol.angles);
    sol.converged = converged;
    return sol;
}

IkSolution solve(const robot::RobotModel& model, const std::string& chain_name,
                 std::span<const IkObjective> objectives, std::span<const double> seed_pose, const IkConfig& cfg) {
    return solve(model.chain(chain_name), objectives, seed_pose, cfg);
}

}  // namespace workbench::ik
