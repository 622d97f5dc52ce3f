#include "workbench/robot_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace workbench::robot {

using nlohmann::json;

std::string to_string(JointGroup group) {
    switch (group) {
        case JointGroup::head: return "head";
        case JointGroup::arm_left: return "arm_left";
        case JointGroup::arm_right: return "arm_right";
        case JointGroup::finger_left: return "finger_left";
        case JointGroup::finger_right: return "finger_right";
        case JointGroup::ear: return "ear";
    }
    return "unknown";
}

JointGroup joint_group_from_string(const std::string& name) {
    for (auto g : {JointGroup::head, JointGroup::arm_left, JointGroup::arm_right, JointGroup::finger_left,
                   JointGroup::finger_right, JointGroup::ear}) {
        if (to_string(g) == name) return g;
    }
    throw ValidationError("unknown joint group '" + name + "'");
}

double rpm_to_rad_per_sec(double rpm) { return rpm * 2.0 * std::numbers::pi / 60.0; }

double JointSpec::clamp(double angle) const { return std::clamp(angle, min_angle, max_angle); }

double ChainView::reach() const {
    double total = 0.0;
    for (const auto& j : joints) total += j.offset.norm();
    return total;
}

Pose Pose::compose(const Pose& rhs) const {
    Pose out;
    out.orientation = orientation * rhs.orientation;
    out.position = position + orientation * rhs.position;
    return out;
}

RobotModel::RobotModel(std::string name, std::vector<JointSpec> joints, std::map<std::string, Chain> chains)
    : name_(std::move(name)), joints_(std::move(joints)), chains_(std::move(chains)) {
    if (joints_.size() != kDof) {
        throw ValidationError("robot model must have exactly " + std::to_string(kDof) + " joints, got " +
                              std::to_string(joints_.size()));
    }
    std::set<int> ids;
    for (const auto& j : joints_) {
        const std::string who = "joint '" + j.name + "'";
        if (j.id < 1 || j.id > 253) throw ValidationError(who + ": id outside 1..253");
        if (!ids.insert(j.id).second) throw ValidationError(who + ": duplicate id " + std::to_string(j.id));
        if (!(j.min_angle < j.max_angle)) throw ValidationError(who + ": min_angle must be below max_angle");
        if (!(j.max_speed > 0.0)) throw ValidationError(who + ": max_speed must be positive");
        if (!(j.stall_torque > 0.0)) throw ValidationError(who + ": stall_torque must be positive");
        if (!(j.stall_current > 0.0)) throw ValidationError(who + ": stall_current must be positive");
        if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw ValidationError(who + ": axis is not unit length");
    }
    for (const auto& [chain_name, chain] : chains_) {
        std::set<int> seen;
        for (int id : chain.joint_ids) {
            if (!ids.count(id)) {
                throw ValidationError("chain '" + chain_name + "' references unknown joint id " + std::to_string(id));
            }
            if (!seen.insert(id).second) {
                throw ValidationError("chain '" + chain_name + "' visits joint id " + std::to_string(id) + " twice");
            }
        }
    }
}

const JointSpec& RobotModel::joint(int id) const { return joints_[index_of(id)]; }

std::size_t RobotModel::index_of(int id) const {
    auto it = std::find_if(joints_.begin(), joints_.end(), [id](const JointSpec& j) { return j.id == id; });
    if (it == joints_.end()) throw ValidationError("unknown joint id " + std::to_string(id));
    return static_cast<std::size_t>(it - joints_.begin());
}

ChainView RobotModel::chain(const std::string& chain_name) const {
    auto it = chains_.find(chain_name);
    if (it == chains_.end()) throw ValidationError("unknown chain '" + chain_name + "'");
    ChainView view;
    view.name = chain_name;
    view.origin = it->second.origin;
    for (int id : it->second.joint_ids) view.joints.push_back(joint(id));
    return view;
}

std::vector<std::string> RobotModel::joint_names() const {
    std::vector<std::string> names;
    for (const auto& j : joints_) names.push_back(j.name);
    return names;
}

std::vector<double> RobotModel::home_angles() const {
    std::vector<double> angles;
    for (const auto& j : joints_) angles.push_back(j.clamp(0.0));
    return angles;
}

namespace {

JointSpec make_joint(int id, std::string name, JointGroup group, double lo, double hi, double stall_torque,
                     double rpm, double stall_current, Eigen::Vector3d axis, Eigen::Vector3d offset,
                     std::optional<int> parent = std::nullopt) {
    JointSpec j;
    j.id = id;
    j.name = std::move(name);
    j.group = group;
    j.min_angle = lo;
    j.max_angle = hi;
    j.stall_torque = stall_torque;
    j.max_speed = rpm_to_rad_per_sec(rpm);
    j.stall_current = stall_current;
    j.axis = axis;
    j.offset = offset;
    j.parent_link = parent;
    return j;
}

// Servo classes: stall torque (N m), no-load speed (RPM), stall current (A).
struct ServoClass {
    double torque, rpm, current;
};
constexpr ServoClass kXm430{4.1, 46.0, 2.3};
constexpr ServoClass kXm540{10.6, 30.0, 4.4};
constexpr ServoClass kS3114{0.17, 100.0, 0.7};
constexpr ServoClass kHk15148{0.2, 55.0, 0.8};

constexpr double kUpperArm = 0.18;
constexpr double kForearm = 0.16;
constexpr double kHand = 0.06;

void add_arm(std::vector<JointSpec>& joints, int first_id, const std::string& side, JointGroup group,
             double mirror) {
    const Eigen::Vector3d x = Eigen::Vector3d::UnitX(), y = Eigen::Vector3d::UnitY(), z = Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
    auto add = [&](int k, const std::string& n, double lo, double hi, ServoClass s, Eigen::Vector3d axis,
                   Eigen::Vector3d offset) {
        std::optional<int> parent;
        if (k > 0) parent = first_id + k - 1;
        joints.push_back(make_joint(first_id + k, side + "_" + n, group, lo, hi, s.torque, s.rpm, s.current,
                                    axis, offset, parent));
    };
    add(0, "shoulder_pitch", -3.0, 1.0, kXm540, y, zero);
    add(1, "shoulder_roll", mirror > 0 ? -0.3 : -1.6, mirror > 0 ? 1.6 : 0.3, kXm430, x, zero);
    add(2, "upper_arm_yaw", -1.5, 1.5, kXm430, z, Eigen::Vector3d(0.0, 0.0, -kUpperArm));
    add(3, "elbow", -2.2, 0.1, kXm430, y, Eigen::Vector3d(0.0, 0.0, -kForearm));
    add(4, "wrist", -1.5, 1.5, kXm430, z, Eigen::Vector3d(0.0, 0.0, -kHand));
}

}  // namespace

RobotModel default_model() {
    const Eigen::Vector3d x = Eigen::Vector3d::UnitX(), y = Eigen::Vector3d::UnitY(), z = Eigen::Vector3d::UnitZ();
    std::vector<JointSpec> joints;
    joints.push_back(make_joint(1, "neck_yaw", JointGroup::head, -1.4, 1.4, kXm430.torque, kXm430.rpm,
                                kXm430.current, z, Eigen::Vector3d(0.0, 0.0, 0.03)));
    joints.push_back(make_joint(2, "neck_pitch", JointGroup::head, -0.6, 0.5, kXm430.torque, kXm430.rpm,
                                kXm430.current, y, Eigen::Vector3d(0.0, 0.0, 0.02), 1));
    joints.push_back(make_joint(3, "neck_roll", JointGroup::head, -0.4, 0.4, kXm430.torque, kXm430.rpm,
                                kXm430.current, x, Eigen::Vector3d(0.0, 0.0, 0.10), 2));
    add_arm(joints, 4, "left", JointGroup::arm_left, 1.0);
    add_arm(joints, 9, "right", JointGroup::arm_right, -1.0);
    joints.push_back(make_joint(14, "left_fingers", JointGroup::finger_left, -0.1, 1.6, kS3114.torque, kS3114.rpm,
                                kS3114.current, x, Eigen::Vector3d::Zero()));
    joints.push_back(make_joint(15, "right_fingers", JointGroup::finger_right, -0.1, 1.6, kS3114.torque,
                                kS3114.rpm, kS3114.current, x, Eigen::Vector3d::Zero()));
    joints.push_back(make_joint(16, "left_ear", JointGroup::ear, -0.8, 0.8, kHk15148.torque, kHk15148.rpm,
                                kHk15148.current, x, Eigen::Vector3d::Zero()));
    joints.push_back(make_joint(17, "right_ear", JointGroup::ear, -0.8, 0.8, kHk15148.torque, kHk15148.rpm,
                                kHk15148.current, x, Eigen::Vector3d::Zero()));

    std::map<std::string, Chain> chains;
    chains["head"] = Chain{Eigen::Vector3d(0.0, 0.0, 0.25), {1, 2, 3}};
    chains["arm_left"] = Chain{Eigen::Vector3d(0.0, 0.15, 0.20), {4, 5, 6, 7, 8}};
    chains["arm_right"] = Chain{Eigen::Vector3d(0.0, -0.15, 0.20), {9, 10, 11, 12, 13}};
    return RobotModel("mk1", std::move(joints), std::move(chains));
}

namespace {

json vec_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void save_model(const RobotModel& model, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["name"] = model.name();
    json joints = json::array();
    for (const auto& j : model.joints()) {
        json r;
        r["id"] = j.id;
        r["name"] = j.name;
        r["group"] = to_string(j.group);
        r["min_angle"] = j.min_angle;
        r["max_angle"] = j.max_angle;
        r["max_speed"] = j.max_speed;
        r["stall_torque"] = j.stall_torque;
        r["stall_current"] = j.stall_current;
        r["parent_link"] = j.parent_link ? json(*j.parent_link) : json(nullptr);
        r["axis"] = vec_to_json(j.axis);
        r["offset"] = vec_to_json(j.offset);
        joints.push_back(std::move(r));
    }
    doc["joints"] = std::move(joints);
    json chains = json::object();
    for (const auto& [name, c] : model.chains()) {
        chains[name] = {{"origin", vec_to_json(c.origin)}, {"joints", c.joint_ids}};
    }
    doc["chains"] = std::move(chains);
    std::ofstream out(path);
    if (!out) throw Error("cannot write model file '" + path + "'");
    out << doc.dump(2) << '\n';
}

RobotModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file '" + path + "'");
    try {
        json doc = json::parse(in);
        if (doc.value("format_version", 0) != 1) throw ValidationError("unsupported model format_version");
        std::vector<JointSpec> joints;
        for (const auto& r : doc.at("joints")) {
            JointSpec j;
            j.id = r.at("id").get<int>();
            j.name = r.at("name").get<std::string>();
            j.group = joint_group_from_string(r.at("group").get<std::string>());
            j.min_angle = r.at("min_angle").get<double>();
            j.max_angle = r.at("max_angle").get<double>();
            j.max_speed = r.at("max_speed").get<double>();
            j.stall_torque = r.at("stall_torque").get<double>();
            j.stall_current = r.at("stall_current").get<double>();
            if (r.contains("parent_link") && !r["parent_link"].is_null()) j.parent_link = r["parent_link"].get<int>();
            j.axis = vec_from_json(r.at("axis"));
            j.offset = vec_from_json(r.at("offset"));
            joints.push_back(std::move(j));
        }
        std::map<std::string, Chain> chains;
        for (const auto& [name, c] : doc.at("chains").items()) {
            chains[name] = Chain{vec_from_json(c.at("origin")), c.at("joints").get<std::vector<int>>()};
        }
        return RobotModel(doc.value("name", std::string("model")), std::move(joints), std::move(chains));
    } catch (const json::exception& e) {
        throw ValidationError("malformed model file '" + path + "': " + e.what());
    }
}

std::vector<Pose> link_poses(const ChainView& chain, std::span<const double> angles) {
    if (angles.size() != chain.size()) {
        throw ValidationError("chain '" + chain.name + "' has " + std::to_string(chain.size()) + " joints, got " +
                              std::to_string(angles.size()) + " angles");
    }
    std::vector<Pose> poses;
    poses.reserve(chain.size());
    Pose pose;
    pose.position = chain.origin;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const auto& j = chain.joints[i];
        if (!j.within_limits(angles[i])) {
            throw ValidationError("angle " + std::to_string(angles[i]) + " outside limits of joint '" + j.name + "'");
        }
        pose.orientation = pose.orientation * Eigen::Quaterniond(Eigen::AngleAxisd(angles[i], j.axis));
        pose.position += pose.orientation * j.offset;
        poses.push_back(pose);
    }
    return poses;
}

Pose forward_kinematics(const ChainView& chain, std::span<const double> angles) {
    auto poses = link_poses(chain, angles);
    if (poses.empty()) {
        Pose p;
        p.position = chain.origin;
        return p;
    }
    return poses.back();
}

Pose forward_kinematics(const RobotModel& model, const std::string& chain_name, std::span<const double> angles) {
    return forward_kinematics(model.chain(chain_name), angles);
}

ServoState step_servo(const JointSpec& spec, const ServoState& state, double dt) {
    ServoState next = state;
    if (!state.torque_enabled) {
        next.position = spec.clamp(state.position);
        next.current_estimate = 0.0;
        return next;
    }
    const double error = state.goal - state.position;
    double delta = error * (1.0 - std::exp(-kServoRate * dt));
    const double max_step = spec.max_speed * dt;
    delta = std::clamp(delta, -max_step, max_step);
    next.position = spec.clamp(state.position + delta);
    next.current_estimate = std::min(kCurrentPerRad * std::abs(state.goal - next.position), spec.stall_current);
    return next;
}

}  // namespace workbench::robot
