#pragma once

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "workbench/error.hpp"

namespace workbench::robot {

inline constexpr std::size_t kDof = 17;

enum class JointGroup { head, arm_left, arm_right, finger_left, finger_right, ear };

std::string to_string(JointGroup group);
JointGroup joint_group_from_string(const std::string& name);

struct JointSpec {
    int id = 0;  // bus id, 1..253
    std::string name;
    JointGroup group = JointGroup::head;
    double min_angle = 0.0;      // rad
    double max_angle = 0.0;      // rad
    double max_speed = 0.0;      // rad/s
    double stall_torque = 0.0;   // N m
    double stall_current = 0.0;  // A, clip value for the current estimate
    std::optional<int> parent_link;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // m, applied after the joint rotation

    double clamp(double angle) const;
    bool within_limits(double angle) const { return angle >= min_angle && angle <= max_angle; }
};

/// Ordered joints from the torso to the tip. `origin` places the first joint in the torso frame.
struct Chain {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    std::vector<int> joint_ids;
};

/// A resolved chain: copies of the joint specs in chain order.
struct ChainView {
    std::string name;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    std::vector<JointSpec> joints;

    std::size_t size() const { return joints.size(); }
    /// Sum of link offset lengths: an upper bound on the distance from the chain root to the tip.
    double reach() const;
};

struct Pose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

    Pose compose(const Pose& rhs) const;
};

/// Immutable after construction. The constructor validates all invariants.
class RobotModel {
public:
    RobotModel(std::string name, std::vector<JointSpec> joints, std::map<std::string, Chain> chains);

    const std::string& name() const { return name_; }
    const std::vector<JointSpec>& joints() const { return joints_; }
    const std::map<std::string, Chain>& chains() const { return chains_; }

    const JointSpec& joint(int id) const;
    /// Position of the joint with this id in joints().
    std::size_t index_of(int id) const;
    ChainView chain(const std::string& chain_name) const;

    std::vector<std::string> joint_names() const;
    /// Joint angles with every joint at 0 clamped into its limits.
    std::vector<double> home_angles() const;

private:
    std::string name_;
    std::vector<JointSpec> joints_;
    std::map<std::string, Chain> chains_;
};

RobotModel default_model();

RobotModel load_model(const std::string& path);
void save_model(const RobotModel& model, const std::string& path);

Pose forward_kinematics(const ChainView& chain, std::span<const double> angles);
Pose forward_kinematics(const RobotModel& model, const std::string& chain_name,
                        std::span<const double> angles);
/// Pose after each joint's link; back() equals forward_kinematics().
std::vector<Pose> link_poses(const ChainView& chain, std::span<const double> angles);

struct ServoState {
    double position = 0.0;  // rad
    double goal = 0.0;      // rad
    bool torque_enabled = true;
    double current_estimate = 0.0;  // A
};

inline constexpr double kServoRate = 20.0;       // 1/s, first-order lag
inline constexpr double kCurrentPerRad = 0.5;    // A/rad of tracking error

ServoState step_servo(const JointSpec& spec, const ServoState& state, double dt);

double rpm_to_rad_per_sec(double rpm);

}  // namespace workbench::robot
