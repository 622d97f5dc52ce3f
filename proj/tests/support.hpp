#pragma once

// Shared test helpers: seeded generators and independent reference implementations.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "workbench/robot_model.hpp"

namespace testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
    bool coin() { return integer(0, 1) == 1; }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// bit-at-a-time CRC-16/CCITT-FALSE
inline std::uint16_t crc16_reference(const std::vector<std::uint8_t>& bytes) {
    std::uint16_t crc = 0xFFFF;
    for (auto b : bytes) {
        crc ^= static_cast<std::uint16_t>(b << 8);
        for (int i = 0; i < 8; ++i) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

// Rodrigues' formula, written out
inline Eigen::Matrix3d rotation(const Eigen::Vector3d& axis, double angle) {
    Eigen::Matrix3d k;
    k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
    return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

inline Eigen::Vector3d chain_tip_reference(const workbench::robot::ChainView& chain, const std::vector<double>& q) {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    Eigen::Vector3d p = chain.origin;
    for (std::size_t i = 0; i < q.size(); ++i) {
        r = r * rotation(chain.joints[i].axis, q[i]);
        p += r * chain.joints[i].offset;
    }
    return p;
}

// Two revolute joints about z, links along local x. q2 limited to [0, 3] so the analytic
// inverse has a unique (elbow-positive) branch inside the limits.
inline workbench::robot::ChainView planar_chain(double l1 = 0.3, double l2 = 0.2) {
    workbench::robot::ChainView chain;
    chain.name = "planar";
    for (int i = 0; i < 2; ++i) {
        workbench::robot::JointSpec j;
        j.id = i + 1;
        j.name = i == 0 ? "q1" : "q2";
        j.min_angle = i == 0 ? -std::numbers::pi : 0.0;
        j.max_angle = i == 0 ? std::numbers::pi : 3.0;
        j.max_speed = 5.0;
        j.stall_torque = 1.0;
        j.stall_current = 1.0;
        j.axis = Eigen::Vector3d::UnitZ();
        j.offset = Eigen::Vector3d(i == 0 ? l1 : l2, 0, 0);
        chain.joints.push_back(j);
    }
    return chain;
}

inline Eigen::Vector2d planar_fk(double l1, double l2, double q1, double q2) {
    return {l1 * std::cos(q1) + l2 * std::cos(q1 + q2), l1 * std::sin(q1) + l2 * std::sin(q1 + q2)};
}

// Closed-form inverse, elbow-positive branch.
inline std::vector<double> planar_ik(double l1, double l2, double x, double y) {
    const double c2 = std::clamp((x * x + y * y - l1 * l1 - l2 * l2) / (2 * l1 * l2), -1.0, 1.0);
    const double q2 = std::acos(c2);
    const double q1 = std::atan2(y, x) - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
    return {std::remainder(q1, 2 * std::numbers::pi), q2};
}

// Target reachable inside the planar chain's limits: shoulder in +-2.5 rad (clear of the +-pi wrap),
// elbow set by the law of cosines so the tip radius is a uniform fraction in [lo, hi] of full reach.
inline Eigen::Vector3d planar_reachable_target(Gen& gen, double l1, double l2, double lo, double hi) {
    const double r = gen.uniform(lo, hi) * (l1 + l2);
    const double q1 = gen.uniform(-2.5, 2.5);
    const double q2 = std::acos(std::clamp((r * r - l1 * l1 - l2 * l2) / (2 * l1 * l2), -1.0, 1.0));
    const Eigen::Vector2d p = planar_fk(l1, l2, q1, q2);
    return {p.x(), p.y(), 0.0};
}

}  // namespace testing
