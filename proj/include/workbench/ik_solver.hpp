#pragma once

#include <Eigen/Geometry>

#include <cstdint>
#include <span>
#include <vector>

#include "workbench/robot_model.hpp"

namespace workbench::ik {

enum class ObjectiveKind { position, orientation, joint_limit_margin, displacement };

struct IkObjective {
    ObjectiveKind kind = ObjectiveKind::position;
    double weight = 1.0;
    Eigen::Vector3d target_position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond target_orientation = Eigen::Quaterniond::Identity();

    static IkObjective position(const Eigen::Vector3d& target, double weight = 1.0);
    static IkObjective orientation(const Eigen::Quaterniond& target, double weight = 1.0);
    static IkObjective joint_limit_margin(double weight = 1.0);
    static IkObjective displacement(double weight = 1.0);
};

struct IkConfig {
    int population = 64;
    int elites = 4;  // parents kept each generation (mu); population - elites children (lambda)
    int generations = 100;
    double mutation_sigma = 0.05;  // rad, at generation 0
    double sigma_decay = 0.97;     // per generation
    std::uint64_t seed = 1;
    double tolerance = 1e-3;  // m

    void validate() const;
};

struct IkSolution {
    std::vector<double> angles;
    double fitness = 0.0;
    double tip_error = 0.0;  // m; 0 when no position objective is present
    bool converged = false;
    int generations = 0;                      // generations actually run
    std::vector<double> best_fitness_history;  // initial population first, then one per generation
};

/// Weighted objective sum for one candidate. Lower is better.
///   position: squared tip distance; orientation: squared geodesic angle;
///   joint_limit_margin: squared excess beyond 90% of each joint's range;
///   displacement: squared joint-space distance from the seed.
double fitness(const robot::ChainView& chain, std::span<const IkObjective> objectives,
               std::span<const double> seed_pose, std::span<const double> angles);

/// Elitist (mu + lambda) evolution seeded around `seed_pose`. Deterministic for a given cfg.seed.
IkSolution solve(const robot::ChainView& chain, std::span<const IkObjective> objectives,
                 std::span<const double> seed_pose, const IkConfig& cfg);

IkSolution solve(const robot::RobotModel& model, const std::string& chain_name,
                 std::span<const IkObjective> objectives, std::span<const double> seed_pose, const IkConfig& cfg);

}  // namespace workbench::ik
